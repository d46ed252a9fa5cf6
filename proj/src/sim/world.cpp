#include "safedom/sim/world.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace safedom::sim {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kDegToRad = kPi / 180.0;
}  // namespace

std::array<Disc, 2> World::feet() const {
  const Vec2 side = unit_from_angle(operator_state.heading + kPi / 2.0);
  const double half = kFeetSeparation / 2.0;
  return {Disc{operator_state.position + side * half, kFootRadius},
          Disc{operator_state.position - side * half, kFootRadius}};
}

const char* motion_class_name(MotionClass c) {
  switch (c) {
    case MotionClass::stay: return "stay";
    case MotionClass::forward: return "forward";
    case MotionClass::left_forward: return "left_forward";
    case MotionClass::right_forward: return "right_forward";
    case MotionClass::backward: return "backward";
    case MotionClass::left_backward: return "left_backward";
    case MotionClass::right_backward: return "right_backward";
  }
  return "?";
}

MotionClass motion_class_from_name(const std::string& name) {
  for (int k = 0; k < kNumMotionClasses; ++k) {
    if (name == motion_class_name(MotionClass(k))) return MotionClass(k);
  }
  throw std::invalid_argument("unknown motion class: " + name);
}

bool forward_family(MotionClass c) {
  return c == MotionClass::forward || c == MotionClass::left_forward ||
         c == MotionClass::right_forward;
}

MotionPrimitive motion_primitive(MotionClass c) {
  switch (c) {
    case MotionClass::stay: return {0.0, 0.0};
    case MotionClass::forward: return {0.4, 0.0};
    case MotionClass::left_forward: return {0.3, 0.8};
    case MotionClass::right_forward: return {0.3, -0.8};
    case MotionClass::backward: return {-0.3, 0.0};
    case MotionClass::left_backward: return {-0.25, 0.8};
    case MotionClass::right_backward: return {-0.25, -0.8};
  }
  return {0.0, 0.0};
}

Tensor LidarScan::to_tensor() const {
  Tensor t({kLidarRays});
  for (std::size_t i = 0; i < kLidarRays; ++i) t[i] = ranges[i];
  return t;
}

LidarScan render_scan(const World& world, const RobotState& robot) {
  if (!world.bounds.contains(robot.position)) {
    throw std::invalid_argument("render_scan: robot outside world bounds");
  }
  for (const Aabb& box : world.boxes) {
    if (box.contains(robot.position)) {
      throw std::invalid_argument("render_scan: robot inside an obstacle");
    }
  }

  const Segment boundary[4] = {
      {{world.bounds.xmin, world.bounds.ymin},
       {world.bounds.xmax, world.bounds.ymin}},
      {{world.bounds.xmax, world.bounds.ymin},
       {world.bounds.xmax, world.bounds.ymax}},
      {{world.bounds.xmax, world.bounds.ymax},
       {world.bounds.xmin, world.bounds.ymax}},
      {{world.bounds.xmin, world.bounds.ymax},
       {world.bounds.xmin, world.bounds.ymin}},
  };
  const std::array<Disc, 2> feet = world.feet();

  LidarScan scan;
  const double step = 0.5 * kDegToRad;
  const double start = robot.heading - 135.0 * kDegToRad;
  for (std::size_t j = 0; j < kLidarRays; ++j) {
    const Vec2 dir = unit_from_angle(start + double(j) * step);
    double t = kLidarMaxRange;
    for (const Segment& seg : boundary) {
      t = std::min(t, ray_segment(robot.position, dir, seg));
    }
    for (const Segment& seg : world.walls) {
      t = std::min(t, ray_segment(robot.position, dir, seg));
    }
    for (const Aabb& box : world.boxes) {
      t = std::min(t, ray_aabb(robot.position, dir, box));
    }
    for (const Disc& foot : feet) {
      t = std::min(t, ray_disc(robot.position, dir, foot));
    }
    scan.ranges[j] = float(std::min(t, kLidarMaxRange));
  }
  return scan;
}

double operator_distance(const World& world, const RobotState& robot) {
  return (world.operator_state.position - robot.position).norm();
}

double operator_bearing(const World& world, const RobotState& robot) {
  const Vec2 d = world.operator_state.position - robot.position;
  return wrap_angle(std::atan2(d.y, d.x) - robot.heading);
}

MotionClass ground_truth_label(const World& world, const RobotState& robot,
                               const LabelerConfig& cfg) {
  const double d = operator_distance(world, robot);
  const double bearing = operator_bearing(world, robot);
  const double tol = cfg.bearing_deg * kDegToRad;
  const bool left = bearing > tol;
  const bool right = bearing < -tol;

  if (d > cfg.target_distance + cfg.distance_band) {
    if (left) return MotionClass::left_forward;
    if (right) return MotionClass::right_forward;
    return MotionClass::forward;
  }
  if (d < cfg.target_distance - cfg.distance_band) {
    if (left) return MotionClass::left_backward;
    if (right) return MotionClass::right_backward;
    return MotionClass::backward;
  }
  // in the hold band: correct residual bearing by orbiting, else stay
  if (left) return MotionClass::left_forward;
  if (right) return MotionClass::right_forward;
  return MotionClass::stay;
}

RobotState integrate(const RobotState& robot, const MotionPrimitive& u,
                     double dt) {
  RobotState next = robot;
  next.position.x += u.v * std::cos(robot.heading) * dt;
  next.position.y += u.v * std::sin(robot.heading) * dt;
  next.heading = wrap_angle(robot.heading + u.omega * dt);
  next.v = u.v;
  next.omega = u.omega;
  return next;
}

bool robot_collides(const World& world, const RobotState& robot) {
  const Vec2& p = robot.position;
  if (p.x - kRobotRadius < world.bounds.xmin ||
      p.x + kRobotRadius > world.bounds.xmax ||
      p.y - kRobotRadius < world.bounds.ymin ||
      p.y + kRobotRadius > world.bounds.ymax) {
    return true;
  }
  for (const Aabb& box : world.boxes) {
    if (point_aabb_distance(p, box) < kRobotRadius) return true;
  }
  for (const Segment& wall : world.walls) {
    if (point_segment_distance(p, wall) < kRobotRadius) return true;
  }
  for (const Disc& foot : world.feet()) {
    if ((p - foot.center).norm() < kRobotRadius + foot.radius) return true;
  }
  return false;
}

}  // namespace safedom::sim
