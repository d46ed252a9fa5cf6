#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "safedom/certify.hpp"
#include "safedom/network.hpp"
#include "safedom/sim/world.hpp"

namespace safedom::sim {

// Random follow-task configurations: rooms of varying size and clutter, a
// robot pose, and an operator placed to realize a target motion class.
struct SamplerConfig {
  double arena_min = 3.4;       // meters, roomy worlds
  double arena_max = 6.0;
  double tight_arena_min = 2.4; // claustrophobic worlds (all rays short)
  double tight_arena_max = 3.4;
  double tight_prob = 0.35;     // fraction of claustrophobic configurations
  double near_wall_prob = 0.3;  // robot placed close to a wall
  int max_boxes = 3;
  double range_noise_std = 0.0; // optional gaussian range noise, meters
  double max_operator_distance = 2.6;
  LabelerConfig labeler;
};

// Renders labelled scans; deterministic from the seed. Samples whose
// forward-family label would conflict with any level-3 safety domain are
// rejected and redrawn, which keeps every level's domain set non-conflicting
// with the generated data.
std::pair<Dataset, Dataset> gen_dataset(std::uint64_t seed,
                                        std::size_t n_train, std::size_t n_val,
                                        const SamplerConfig& sampler = {});

// Safety domains for the given level. Level 0 is empty; levels 1-3 place
// one box per center ray i in {150..389}: the center ray(s) confined to
// [0, 0.2] m and every other ray to [0, 3] m (level 1 and 2) or [0, 4] m
// (level 3). Level 1 confines the three rays {i-1, i, i+1}. Acceptable
// labels are the non-forward-moving classes.
std::vector<SafetyDomain> gen_domains(int level);

// Fast membership test against the union of gen_domains(level).
bool scan_in_domain_union(const Tensor& x, int level);

// The follow controller: 541 ranges in, 7 motion classes out; six strided
// conv+relu stages, two dense+relu stages, then the class head.
Network make_follow_network(std::uint64_t seed);

}  // namespace safedom::sim
