#pragma once

#include <array>
#include <string>
#include <vector>

#include "safedom/sim/geometry.hpp"
#include "safedom/tensor.hpp"

namespace safedom::sim {

inline constexpr std::size_t kLidarRays = 541;
inline constexpr double kLidarFovDeg = 270.0;       // 0.5 deg per ray
inline constexpr double kLidarMaxRange = 5.0;       // meters
inline constexpr double kFootRadius = 0.06;         // meters
inline constexpr double kFeetSeparation = 0.25;     // between foot centers
inline constexpr double kRobotRadius = 0.15;        // collision footprint
inline constexpr int kNumMotionClasses = 7;

struct OperatorState {
  Vec2 position;
  double heading = 0.0;  // feet straddle the heading axis
};

struct World {
  Aabb bounds;
  std::vector<Aabb> boxes;
  std::vector<Segment> walls;
  OperatorState operator_state;

  // Two foot discs, offset perpendicular to the operator heading.
  std::array<Disc, 2> feet() const;
};

struct RobotState {
  Vec2 position;
  double heading = 0.0;  // wrapped to (-pi, pi]
  double v = 0.0;
  double omega = 0.0;
};

// Output categories, in fixed class-index order.
enum class MotionClass : int {
  stay = 0,
  forward = 1,
  left_forward = 2,
  right_forward = 3,
  backward = 4,
  left_backward = 5,
  right_backward = 6,
};

const char* motion_class_name(MotionClass c);
MotionClass motion_class_from_name(const std::string& name);
bool forward_family(MotionClass c);

struct MotionPrimitive {
  double v = 0.0;      // m/s
  double omega = 0.0;  // rad/s, positive turns left
};
MotionPrimitive motion_primitive(MotionClass c);

struct LidarScan {
  std::array<float, kLidarRays> ranges{};  // meters, each in (0, max range]

  Tensor to_tensor() const;
};

// Ray j points at heading - 135 deg + j * 0.5 deg; each range is the nearest
// wall/box/foot intersection clamped to the max range. Rejects robots placed
// outside the bounds or inside an obstacle.
LidarScan render_scan(const World& world, const RobotState& robot);

struct LabelerConfig {
  double target_distance = 1.0;   // desired operator distance, meters
  double distance_band = 0.15;    // +- tolerance around the target
  double bearing_deg = 10.0;      // straight-ahead tolerance
};

// Geometric follow rule used both for dataset labels and as the oracle
// policy: hold roughly one meter while facing the operator.
MotionClass ground_truth_label(const World& world, const RobotState& robot,
                               const LabelerConfig& cfg = {});

// Unicycle step; heading stays wrapped.
RobotState integrate(const RobotState& robot, const MotionPrimitive& u,
                     double dt);

bool robot_collides(const World& world, const RobotState& robot);

double operator_distance(const World& world, const RobotState& robot);
double operator_bearing(const World& world, const RobotState& robot);

}  // namespace safedom::sim
