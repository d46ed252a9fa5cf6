#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "safedom/attacks.hpp"
#include "safedom/certify.hpp"
#include "safedom/network.hpp"
#include "safedom/rng.hpp"

namespace safedom {

enum class InnerMode { certified, empirical };

struct TrainConfig {
  float lambda = 1.0f;       // weight of the safety term
  float delta = 0.1f;        // safety threshold for the stopping criterion
  int batch_train = 32;      // b_t
  int batch_safety = 8;      // b_s
  float learning_rate = 0.05f;
  int min_epochs = 1;
  int max_epochs = 100;
  InnerMode inner_mode = InnerMode::certified;
  std::uint64_t seed = 0;
  int safety_check_period = 1;  // epochs between full safety_bound sweeps

  // l2 cap on the combined update; early certified bounds can be enormous
  // and uncapped steps destroy the network. <= 0 disables.
  float grad_clip = 5.0f;
  // Linearly grows the safety-term boxes from their centers to full size
  // over this many epochs. The stopping criterion always uses full boxes.
  // 0 disables.
  int safety_ramp_epochs = 0;
  // Inner-maximization settings for empirical mode (epsilon is taken from
  // the domain box, not from here).
  AttackConfig pgd;

  void validate() const;
};

struct EpochStats {
  float train_loss = 0.0f;
  float safety_term = 0.0f;
  std::optional<float> certified_bound;  // set on sweep epochs
};

struct TrainReport {
  int epochs_run = 0;
  float final_safety_bound = 0.0f;
  bool converged = false;       // final_safety_bound <= delta
  float final_train_loss = 0.0f;
  float final_safety_term = 0.0f;
  // train_loss + lambda * safety_term of the last epoch; Theorem-1 style
  // claims require this to stay >= delta, which callers can check here.
  float final_objective = 0.0f;
  std::vector<EpochStats> trace;  // one entry per epoch run
};

struct TrainResult {
  Network net;
  TrainReport report;
};

// Mean cross-entropy over the batch and its parameter gradient.
std::pair<float, Gradient> empirical_risk_grad(const Network& net,
                                               std::span<const Sample> batch);

// Mean worst-case term over the domain batch and its parameter gradient.
// Certified mode differentiates the IBP bound; empirical mode runs PGD per
// domain and differentiates the loss at the found worst point.
std::pair<float, Gradient> safety_term_grad(const Network& net,
                                            std::span<const SafetyDomain> batch,
                                            InnerMode mode,
                                            const AttackConfig& pgd, Rng& rng);

// Max certified worst-case loss over all domains (0 when there are none).
float max_certified_bound(const Network& net,
                          std::span<const SafetyDomain> domains);

// Safety-domain training. Rejects conflicting (sample, domain) pairs up
// front; aborts on non-finite losses; reproducible from cfg.seed.
TrainResult train(const Network& net, const Dataset& dataset,
                  const std::vector<SafetyDomain>& domains,
                  const TrainConfig& cfg);

// Fraction of argmax-correct samples.
double evaluate(const Network& net, const Dataset& dataset);

}  // namespace safedom
