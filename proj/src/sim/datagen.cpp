#include "safedom/sim/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "safedom/rng.hpp"

namespace safedom::sim {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int kDomainCenterFirst = 150;
constexpr int kDomainCenterLast = 389;  // 240 domains

std::vector<int> acceptable_non_forward() {
  return {int(MotionClass::stay), int(MotionClass::backward),
          int(MotionClass::left_backward), int(MotionClass::right_backward)};
}

struct Placement {
  World world;
  RobotState robot;
};

// Distance/bearing region realizing each motion class under the default
// labeler thresholds.
struct ClassRegion {
  double d_lo, d_hi;
  double b_lo_deg, b_hi_deg;
};

ClassRegion class_region(MotionClass c, const SamplerConfig& cfg) {
  const double near = cfg.labeler.target_distance - cfg.labeler.distance_band;
  const double far = cfg.labeler.target_distance + cfg.labeler.distance_band;
  const double b = cfg.labeler.bearing_deg;
  const double dmax = cfg.max_operator_distance;
  switch (c) {
    case MotionClass::stay: return {near + 0.01, far - 0.01, -b + 1, b - 1};
    case MotionClass::forward: return {far + 0.05, dmax, -b + 1, b - 1};
    case MotionClass::left_forward: return {near + 0.01, dmax, b + 2, 110};
    case MotionClass::right_forward: return {near + 0.01, dmax, -110, -b - 2};
    case MotionClass::backward: return {0.28, near - 0.02, -b + 1, b - 1};
    case MotionClass::left_backward: return {0.28, near - 0.02, b + 2, 110};
    case MotionClass::right_backward: return {0.28, near - 0.02, -110, -b - 2};
  }
  return {1.0, 2.0, 0.0, 0.0};
}

bool line_of_sight(const World& world, const Vec2& from, const Vec2& to) {
  for (const Aabb& box : world.boxes) {
    if (segment_hits_aabb(from, to, box)) return false;
  }
  const Segment los{from, to};
  for (const Segment& wall : world.walls) {
    if (segments_intersect(los, wall)) return false;
  }
  return true;
}

bool try_place(Rng& rng, const SamplerConfig& cfg, MotionClass target,
               Placement& out) {
  World world;
  const bool tight = rng.bernoulli(cfg.tight_prob);
  const double w = tight ? rng.uniform(cfg.tight_arena_min, cfg.tight_arena_max)
                         : rng.uniform(cfg.arena_min, cfg.arena_max);
  const double h = tight ? rng.uniform(cfg.tight_arena_min, cfg.tight_arena_max)
                         : rng.uniform(cfg.arena_min, cfg.arena_max);
  world.bounds = Aabb{-w / 2, -h / 2, w / 2, h / 2};

  const int n_boxes = int(rng.index(std::size_t(cfg.max_boxes) + 1));
  for (int b = 0; b < n_boxes; ++b) {
    const double bw = rng.uniform(0.3, 1.0);
    const double bh = rng.uniform(0.3, 1.0);
    const double cx = rng.uniform(world.bounds.xmin + bw / 2 + 0.1,
                                  world.bounds.xmax - bw / 2 - 0.1);
    const double cy = rng.uniform(world.bounds.ymin + bh / 2 + 0.1,
                                  world.bounds.ymax - bh / 2 - 0.1);
    world.boxes.push_back(Aabb{cx - bw / 2, cy - bh / 2, cx + bw / 2, cy + bh / 2});
  }

  RobotState robot;
  const double margin = kRobotRadius + 0.05;
  if (rng.bernoulli(cfg.near_wall_prob)) {
    // near a wall or corner, facing a random direction
    const double off = rng.uniform(margin, 0.7);
    const int side = int(rng.index(4));
    const double along_x = rng.uniform(world.bounds.xmin + margin,
                                       world.bounds.xmax - margin);
    const double along_y = rng.uniform(world.bounds.ymin + margin,
                                       world.bounds.ymax - margin);
    switch (side) {
      case 0: robot.position = {along_x, world.bounds.ymin + off}; break;
      case 1: robot.position = {along_x, world.bounds.ymax - off}; break;
      case 2: robot.position = {world.bounds.xmin + off, along_y}; break;
      default: robot.position = {world.bounds.xmax - off, along_y}; break;
    }
  } else {
    robot.position = {rng.uniform(world.bounds.xmin + margin,
                                  world.bounds.xmax - margin),
                      rng.uniform(world.bounds.ymin + margin,
                                  world.bounds.ymax - margin)};
  }
  robot.heading = rng.uniform(-kPi, kPi);
  for (const Aabb& box : world.boxes) {
    if (box.contains(robot.position, kRobotRadius)) return false;
  }

  const ClassRegion region = class_region(target, cfg);
  const double d = rng.uniform(region.d_lo, region.d_hi);
  const double bearing =
      rng.uniform(region.b_lo_deg, region.b_hi_deg) * kPi / 180.0;
  const Vec2 op_pos =
      robot.position + unit_from_angle(robot.heading + bearing) * d;
  if (!world.bounds.contains(op_pos, -0.2)) return false;

  world.operator_state.position = op_pos;
  world.operator_state.heading = rng.uniform(-kPi, kPi);
  for (const Disc& foot : world.feet()) {
    for (const Aabb& box : world.boxes) {
      if (point_aabb_distance(foot.center, box) < foot.radius) return false;
    }
  }
  if (!line_of_sight(world, robot.position, op_pos)) return false;

  out.world = std::move(world);
  out.robot = robot;
  return true;
}

}  // namespace

std::vector<SafetyDomain> gen_domains(int level) {
  if (level < 0 || level > 3) {
    throw std::invalid_argument("gen_domains: level must be in {0,1,2,3}");
  }
  std::vector<SafetyDomain> domains;
  if (level == 0) return domains;

  const float near_cap = 0.2f;
  const float far_cap = level == 3 ? 4.0f : 3.0f;
  const std::vector<int> acceptable = acceptable_non_forward();
  domains.reserve(kDomainCenterLast - kDomainCenterFirst + 1);
  for (int center = kDomainCenterFirst; center <= kDomainCenterLast; ++center) {
    BoxDomain box{Tensor({kLidarRays}), Tensor({kLidarRays})};
    for (std::size_t j = 0; j < kLidarRays; ++j) box.upper[j] = far_cap;
    box.upper[std::size_t(center)] = near_cap;
    if (level == 1) {
      box.upper[std::size_t(center - 1)] = near_cap;
      box.upper[std::size_t(center + 1)] = near_cap;
    }
    domains.push_back(SafetyDomain{std::move(box), acceptable});
  }
  return domains;
}

bool scan_in_domain_union(const Tensor& x, int level) {
  if (x.size() != kLidarRays) {
    throw std::invalid_argument("scan_in_domain_union: wrong scan length");
  }
  if (level == 0) return false;
  if (level < 0 || level > 3) {
    throw std::invalid_argument("scan_in_domain_union: bad level");
  }
  const float near_cap = 0.2f;
  const float far_cap = level == 3 ? 4.0f : 3.0f;
  for (std::size_t j = 0; j < kLidarRays; ++j) {
    if (x[j] > far_cap) return false;  // some ray escapes every box
  }
  for (int center = kDomainCenterFirst; center <= kDomainCenterLast; ++center) {
    if (level == 1) {
      if (x[std::size_t(center - 1)] <= near_cap &&
          x[std::size_t(center)] <= near_cap &&
          x[std::size_t(center + 1)] <= near_cap) {
        return true;
      }
    } else if (x[std::size_t(center)] <= near_cap) {
      return true;
    }
  }
  return false;
}

std::pair<Dataset, Dataset> gen_dataset(std::uint64_t seed,
                                        std::size_t n_train, std::size_t n_val,
                                        const SamplerConfig& sampler) {
  if (n_train < 1 || n_val < 1) {
    throw std::invalid_argument("gen_dataset: sample counts must be >= 1");
  }
  Rng rng = Rng(seed).fork(rng_stream::kWorldSampler);
  Rng noise_rng = Rng(seed).fork(rng_stream::kNoise);

  const std::size_t total = n_train + n_val;
  Dataset train, val;
  train.input_dim = val.input_dim = kLidarRays;
  train.num_classes = val.num_classes = std::size_t(kNumMotionClasses);

  for (std::size_t i = 0; i < total; ++i) {
    const MotionClass target = MotionClass(int(i % kNumMotionClasses));
    Tensor x;
    MotionClass label = target;
    for (int attempt = 0;; ++attempt) {
      if (attempt > 10000) {
        throw std::runtime_error("gen_dataset: sampler failed to place a configuration");
      }
      Placement p;
      if (!try_place(rng, sampler, target, p)) continue;
      LidarScan scan = render_scan(p.world, p.robot);
      label = ground_truth_label(p.world, p.robot, sampler.labeler);
      x = scan.to_tensor();
      if (sampler.range_noise_std > 0.0) {
        for (std::size_t j = 0; j < x.size(); ++j) {
          const double noisy =
              double(x[j]) + noise_rng.normal() * sampler.range_noise_std;
          x[j] = float(std::clamp(noisy, 0.01, kLidarMaxRange));
        }
      }
      // non-conflicting data: forward-family labels must not sit inside any
      // safety domain (level 3 boxes contain every lower level's)
      if (forward_family(label) && scan_in_domain_union(x, 3)) continue;
      break;
    }
    Dataset& target_set = i < n_train ? train : val;
    target_set.add(std::move(x), int(label));
  }

  // build-time assertion of the invariant the sampler maintains
  for (const Sample& s : train.samples) {
    if (forward_family(MotionClass(s.label)) && scan_in_domain_union(s.x, 3)) {
      throw std::runtime_error("gen_dataset: conflicting sample slipped through");
    }
  }
  return {std::move(train), std::move(val)};
}

Network make_follow_network(std::uint64_t seed) {
  std::vector<Layer> layers;
  auto conv = [](std::size_t co, std::size_t ci, std::size_t k, int stride,
                 int pad) {
    return Conv1dLayer{Tensor({co, ci, k}), Tensor({co}), stride, pad};
  };
  layers.push_back(conv(8, 1, 7, 3, 3));    // 541 -> 181
  layers.push_back(ReluLayer{});
  layers.push_back(conv(8, 8, 5, 2, 2));    // -> 91
  layers.push_back(ReluLayer{});
  layers.push_back(conv(16, 8, 5, 2, 2));   // -> 46
  layers.push_back(ReluLayer{});
  layers.push_back(conv(16, 16, 3, 2, 1));  // -> 23
  layers.push_back(ReluLayer{});
  layers.push_back(conv(16, 16, 3, 2, 1));  // -> 12
  layers.push_back(ReluLayer{});
  layers.push_back(conv(16, 16, 3, 2, 1));  // -> 6
  layers.push_back(ReluLayer{});
  layers.push_back(FlattenLayer{});         // 96
  layers.push_back(DenseLayer{Tensor({48, 96}), Tensor({48})});
  layers.push_back(ReluLayer{});
  layers.push_back(DenseLayer{Tensor({32, 48}), Tensor({32})});
  layers.push_back(ReluLayer{});
  layers.push_back(DenseLayer{Tensor({std::size_t(kNumMotionClasses), 32}),
                              Tensor({std::size_t(kNumMotionClasses)})});
  Network net(kLidarRays, std::size_t(kNumMotionClasses), std::move(layers));
  glorot_init(net, seed);
  return net;
}

}  // namespace safedom::sim
