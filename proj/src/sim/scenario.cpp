#include "safedom/sim/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace safedom::sim {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

ControllerMode step_state_machine(ControllerMode mode, ControlEvent event) {
  if (mode == ControllerMode::idle && event == ControlEvent::enable) {
    return ControllerMode::active;
  }
  if (mode == ControllerMode::active && event == ControlEvent::disable) {
    return ControllerMode::idle;
  }
  return mode;
}

const char* controller_mode_name(ControllerMode mode) {
  return mode == ControllerMode::active ? "active" : "idle";
}

ControlEvent control_event_from_name(const std::string& name) {
  if (name == "enable") return ControlEvent::enable;
  if (name == "disable") return ControlEvent::disable;
  if (name == "none") return ControlEvent::none;
  throw std::invalid_argument("unknown control event: " + name);
}

void Scenario::validate() const {
  if (name.empty()) throw std::invalid_argument("scenario: missing name");
  if (duration <= 0.0) throw std::invalid_argument("scenario: bad duration");
  if (operator_waypoints.empty()) {
    throw std::invalid_argument("scenario: no operator waypoints");
  }
  double prev = -1e300;
  for (const TimedWaypoint& wp : operator_waypoints) {
    if (wp.t < prev) {
      throw std::invalid_argument("scenario: waypoint times must not decrease");
    }
    prev = wp.t;
    if (!world.bounds.contains(wp.pos, -0.05)) {
      throw std::invalid_argument("scenario: waypoint outside bounds");
    }
  }
  if (!world.bounds.contains(robot_start.position, -kRobotRadius)) {
    throw std::invalid_argument("scenario: robot start outside bounds");
  }
}

OperatorState operator_pose_at(const Scenario& scenario, double t) {
  const auto& wps = scenario.operator_waypoints;
  OperatorState state;

  // position: piecewise linear in time
  if (t <= wps.front().t) {
    state.position = wps.front().pos;
  } else if (t >= wps.back().t) {
    state.position = wps.back().pos;
  } else {
    for (std::size_t i = 0; i + 1 < wps.size(); ++i) {
      if (t >= wps[i].t && t <= wps[i + 1].t) {
        const double span = wps[i + 1].t - wps[i].t;
        const double u = span > 1e-12 ? (t - wps[i].t) / span : 1.0;
        state.position = wps[i].pos + (wps[i + 1].pos - wps[i].pos) * u;
        break;
      }
    }
  }

  // heading: direction of the latest moving segment that has started;
  // pauses hold it, and before any motion the operator already faces the
  // first leg of the walk
  double heading = 0.0;
  bool have = false;
  for (std::size_t i = 0; i + 1 < wps.size(); ++i) {
    if (wps[i].t > t) break;
    const Vec2 d = wps[i + 1].pos - wps[i].pos;
    if (d.norm() > 1e-9) {
      heading = std::atan2(d.y, d.x);
      have = true;
    }
  }
  if (!have) {
    for (std::size_t i = 0; i + 1 < wps.size(); ++i) {
      const Vec2 d = wps[i + 1].pos - wps[i].pos;
      if (d.norm() > 1e-9) {
        heading = std::atan2(d.y, d.x);
        break;
      }
    }
  }
  state.heading = heading;
  return state;
}

ScenarioResult run_scenario_policy(const Policy& policy,
                                   const Scenario& scenario, double dt) {
  scenario.validate();
  if (dt <= 0.0) throw std::invalid_argument("run_scenario: dt must be > 0");

  World world = scenario.world;
  RobotState robot = scenario.robot_start;
  ControllerMode mode = ControllerMode::idle;

  std::vector<TimedEvent> events = scenario.events;
  std::stable_sort(events.begin(), events.end(),
                   [](const TimedEvent& a, const TimedEvent& b) {
                     return a.t < b.t;
                   });
  std::size_t next_event = 0;

  ScenarioResult result;
  const int steps = int(std::ceil(scenario.duration / dt));
  for (int k = 0; k <= steps; ++k) {
    const double t = double(k) * dt;
    world.operator_state = operator_pose_at(scenario, t);
    while (next_event < events.size() && events[next_event].t <= t + 1e-9) {
      mode = step_state_machine(mode, events[next_event].kind);
      ++next_event;
    }

    if (robot_collides(world, robot)) {
      result.collision = true;
      result.trajectory.push_back(TrajectoryPoint{
          t, robot.position.x, robot.position.y, robot.heading, mode,
          MotionClass::stay});
      break;
    }

    MotionClass label = MotionClass::stay;
    if (mode == ControllerMode::active) {
      const LidarScan scan = render_scan(world, robot);
      label = policy(world, robot, scan);
    }
    result.trajectory.push_back(TrajectoryPoint{
        t, robot.position.x, robot.position.y, robot.heading, mode, label});

    if (k < steps) {
      robot = integrate(robot, motion_primitive(label), dt);
    }
  }

  if (!result.collision) {
    world.operator_state = operator_pose_at(scenario, scenario.duration);
    const double d = operator_distance(world, robot);
    const double bearing = operator_bearing(world, robot);
    result.success = d >= scenario.success.d_min &&
                     d <= scenario.success.d_max &&
                     std::fabs(bearing) <=
                         scenario.success.bearing_max_deg * kPi / 180.0;
  }
  return result;
}

ScenarioResult run_scenario(const Network& net, const Scenario& scenario,
                            double dt) {
  if (net.input_dim() != kLidarRays ||
      net.output_dim() != std::size_t(kNumMotionClasses)) {
    throw std::invalid_argument("run_scenario: network must map 541 -> 7");
  }
  Policy policy = [&net](const World&, const RobotState&,
                         const LidarScan& scan) {
    return MotionClass(argmax_class(forward(net, scan.to_tensor())));
  };
  return run_scenario_policy(policy, scenario, dt);
}

Policy oracle_policy(const LabelerConfig& cfg) {
  return [cfg](const World& world, const RobotState& robot, const LidarScan&) {
    return ground_truth_label(world, robot, cfg);
  };
}

namespace {

Scenario base_scenario(int id, const std::string& name, Aabb bounds,
                       Vec2 robot_pos, double robot_heading,
                       std::vector<TimedWaypoint> waypoints, double duration) {
  Scenario s;
  s.id = id;
  s.name = name;
  s.world.bounds = bounds;
  s.robot_start.position = robot_pos;
  s.robot_start.heading = robot_heading;
  s.operator_waypoints = std::move(waypoints);
  s.world.operator_state = operator_pose_at(s, 0.0);
  s.events = {TimedEvent{0.5, ControlEvent::enable}};
  s.duration = duration;
  return s;
}

}  // namespace

std::vector<Scenario> standard_scenarios() {
  std::vector<Scenario> out;

  {  // 1: open room, gentle path
    Scenario s = base_scenario(
        1, "plain", Aabb{-3.0, -2.5, 3.0, 2.5}, {-1.8, 0.0}, 0.0,
        {{0.0, {-0.8, 0.0}},
         {2.0, {-0.8, 0.0}},
         {12.0, {1.6, 0.8}},
         {20.0, {2.2, -0.5}}},
        26.0);
    out.push_back(std::move(s));
  }
  {  // 2: slalom between two boxes
    Scenario s = base_scenario(
        2, "around_boxes", Aabb{-3.0, -2.5, 3.0, 2.5}, {-2.4, -0.8}, 0.0,
        {{0.0, {-1.4, -0.8}},
         {2.0, {-1.4, -0.8}},
         {8.0, {-0.7, -1.5}},
         {14.0, {0.2, -0.1}},
         {20.0, {1.1, 0.6}},
         {26.0, {2.2, 0.0}}},
        32.0);
    s.world.boxes = {Aabb{-1.2, -0.5, -0.2, 0.5}, Aabb{0.6, -1.3, 1.6, -0.3}};
    out.push_back(std::move(s));
  }
  {  // 3: robot starts wedged toward a corner, operator leads it out
    Scenario s = base_scenario(
        3, "out_of_corner", Aabb{-2.5, -2.0, 2.5, 2.0}, {-2.05, -1.55},
        -3.0 * kPi / 4.0,
        {{0.0, {-1.35, -1.62}},
         {3.0, {-1.35, -1.62}},
         {10.0, {0.0, -0.6}},
         {18.0, {1.6, 0.6}}},
        26.0);
    out.push_back(std::move(s));
  }
  {  // 4: wall with a 1.1 m gate
    Scenario s = base_scenario(
        4, "through_gate", Aabb{-3.0, -2.5, 3.0, 2.5}, {-2.2, 0.0}, 0.0,
        {{0.0, {-1.2, 0.0}},
         {2.0, {-1.2, 0.0}},
         {8.0, {-0.05, 0.0}},
         {13.0, {1.0, 0.0}},
         {20.0, {2.2, 0.6}}},
        26.0);
    s.world.walls = {Segment{{0.0, -2.5}, {0.0, -0.55}},
                     Segment{{0.0, 0.55}, {0.0, 2.5}}};
    out.push_back(std::move(s));
  }
  {  // 5: loop around a central table
    Scenario s = base_scenario(
        5, "around_table", Aabb{-3.0, -2.5, 3.0, 2.5}, {-2.5, -1.3}, 0.0,
        {{0.0, {-1.5, -1.3}},
         {2.0, {-1.5, -1.3}},
         {9.0, {1.5, -1.3}},
         {16.0, {1.5, 1.3}},
         {23.0, {-1.5, 1.3}},
         {28.0, {-1.5, 0.2}}},
        34.0);
    s.world.boxes = {Aabb{-0.7, -0.5, 0.7, 0.5}};
    out.push_back(std::move(s));
  }
  {  // 6: U-shaped bay, operator parks inside
    Scenario s = base_scenario(
        6, "garage_parking", Aabb{-3.0, -2.5, 3.0, 2.5}, {-2.0, 0.0}, 0.0,
        {{0.0, {-1.0, 0.0}},
         {2.0, {-1.0, 0.0}},
         {8.0, {0.6, 0.0}},
         {15.0, {2.1, 0.0}}},
        24.0);
    s.world.walls = {Segment{{1.0, -0.75}, {2.8, -0.75}},
                     Segment{{2.8, -0.75}, {2.8, 0.75}},
                     Segment{{1.0, 0.75}, {2.8, 0.75}}};
    out.push_back(std::move(s));
  }
  {  // 7: 0.9 m corridor, the tightest course
    Scenario s = base_scenario(
        7, "narrow_hallway", Aabb{-3.2, -2.0, 3.2, 2.0}, {-2.4, 0.0}, 0.0,
        {{0.0, {-1.4, 0.0}},
         {2.0, {-1.4, 0.0}},
         {14.0, {2.0, 0.0}},
         {17.0, {2.6, 0.0}}},
        24.0);
    s.world.walls = {Segment{{-1.4, -0.45}, {2.0, -0.45}},
                     Segment{{-1.4, 0.45}, {2.0, 0.45}}};
    out.push_back(std::move(s));
  }

  for (Scenario& s : out) s.validate();
  return out;
}

}  // namespace safedom::sim
