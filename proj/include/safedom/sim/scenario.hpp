#pragma once

#include <functional>
#include <string>
#include <vector>

#include "safedom/network.hpp"
#include "safedom/sim/world.hpp"

namespace safedom::sim {

enum class ControllerMode { idle, active };
enum class ControlEvent { enable, disable, none };

// (idle, enable) -> active; (active, disable) -> idle; all else unchanged.
ControllerMode step_state_machine(ControllerMode mode, ControlEvent event);

const char* controller_mode_name(ControllerMode mode);
ControlEvent control_event_from_name(const std::string& name);

struct TimedWaypoint {
  double t = 0.0;
  Vec2 pos;
};

struct TimedEvent {
  double t = 0.0;
  ControlEvent kind = ControlEvent::none;
};

struct SuccessCriteria {
  double d_min = 0.7;            // final operator distance window, meters
  double d_max = 1.5;
  double bearing_max_deg = 30.0; // final |bearing| tolerance
};

struct Scenario {
  int id = 0;
  std::string name;
  World world;  // initial operator pose; waypoints drive it afterwards
  RobotState robot_start;
  std::vector<TimedWaypoint> operator_waypoints;
  std::vector<TimedEvent> events;
  SuccessCriteria success;
  double duration = 30.0;  // seconds

  void validate() const;
};

// Piecewise-linear operator pose at time t; heading follows the motion
// direction and holds through pauses.
OperatorState operator_pose_at(const Scenario& scenario, double t);

struct TrajectoryPoint {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  ControllerMode mode = ControllerMode::idle;
  MotionClass label = MotionClass::stay;
};

struct ScenarioResult {
  bool success = false;
  bool collision = false;
  std::vector<TrajectoryPoint> trajectory;
};

using Policy =
    std::function<MotionClass(const World&, const RobotState&, const LidarScan&)>;

// Closed loop at fixed dt: advance the operator, apply scripted events, and
// in active mode classify the scan and integrate the chosen primitive.
// Success means no collision ever and a final pose inside the criteria
// window. Deterministic for a fixed policy.
ScenarioResult run_scenario_policy(const Policy& policy,
                                   const Scenario& scenario, double dt = 0.1);
ScenarioResult run_scenario(const Network& net, const Scenario& scenario,
                            double dt = 0.1);

// The geometric follow rule as a controller.
Policy oracle_policy(const LabelerConfig& cfg = {});

// Seven fixed desk-scale courses; all are solvable by the oracle policy.
std::vector<Scenario> standard_scenarios();

}  // namespace safedom::sim
