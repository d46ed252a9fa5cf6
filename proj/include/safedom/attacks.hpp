#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "safedom/certify.hpp"
#include "safedom/network.hpp"
#include "safedom/rng.hpp"

namespace safedom {

// Empirical inner maximization: FGSM and multi-step projected gradient
// ascent inside l_inf balls or arbitrary boxes.
struct AttackConfig {
  float epsilon = 0.0f;  // perturbation radius in input units
  int steps = 20;
  // <= 0 selects the default of 2.5 * radius / steps per dimension.
  float step_size = 0.0f;
  bool random_init = true;
  Norm norm = Norm::linf;
  std::optional<BoxDomain> clamp;  // global valid-range box

  void validate() const;
};

// Single-step sign attack: clamp(x + epsilon * sign(dL/dx)). cfg.steps is
// ignored; epsilon = 0 returns x unchanged.
Tensor fgsm(const Network& net, const Sample& sample, const AttackConfig& cfg);

struct PgdResult {
  Tensor worst_input;
  float worst_loss = 0.0f;
};

// Projected gradient ascent on the specification loss inside the box;
// returns the iterate with the maximal loss. The returned input always lies
// inside the box (and the global clamp when configured).
PgdResult pgd_in_box(const Network& net, const BoxDomain& box,
                     std::span<const int> acceptable, const AttackConfig& cfg,
                     Rng& rng);

struct AttackRecord {
  std::size_t sample_index = 0;
  int clean_label = 0;
  int attacked_label = 0;
  float loss_before = 0.0f;
  float loss_after = 0.0f;
  bool success = false;  // attacked_label != clean_label
};

// Per-sample PGD inside the epsilon-ball around each input; attack streams
// are forked per sample index so runs parallelize deterministically.
std::vector<AttackRecord> attack_dataset(const Network& net,
                                         const Dataset& dataset,
                                         const AttackConfig& cfg,
                                         std::uint64_t seed);

// Fraction of samples still argmax-correct after the per-sample attack.
double adversarial_accuracy(const Network& net, const Dataset& dataset,
                            const AttackConfig& cfg, std::uint64_t seed);

}  // namespace safedom
