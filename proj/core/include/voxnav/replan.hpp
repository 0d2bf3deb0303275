#pragma once

#include <fstream>
#include <string>

#include "voxnav/occupancy.hpp"
#include "voxnav/trajectory_solver.hpp"

namespace voxnav {

// Everything needed to plan a route on a grid snapshot. Decomposition is
// rebuilt from scratch on every call: grids change between plans and the
// decomposition is cheap relative to the solve.
struct PlanEnv {
  DecomposeOptions decompose;
  CorridorOptions corridor;
  Limits limits;
  SolveOptions solve;
};

struct PlanOutcome {
  bool ok = false;
  std::string reason;           // failure explanation when !ok
  Trajectory trajectory;
  Corridor corridor;
  int cuboid_count = 0;
  double decompose_ms = 0.0;
  double corridor_ms = 0.0;
  double solve_ms = 0.0;
};

// decompose -> route -> solve on one grid snapshot. Unknown space is
// traversable or not according to env.decompose.
PlanOutcome plan_route(const OccupancyGrid& grid, const Waypoint& start,
                       const Vec3& goal, const PlanEnv& env);

struct ReplanConfig {
  double horizon = 10.0;      // seconds of trajectory checked ahead
  double sample_dt = 0.05;    // collision sampling step
};

enum class ReplanAction { Continue, Replan, Stop };

struct ReplanDecision {
  ReplanAction action = ReplanAction::Continue;
  double first_collision_time = -1.0;  // < 0 when the horizon is clear
  double checked_until = 0.0;
  Trajectory trajectory;               // set when action == Replan
  Corridor corridor;                   // corridor of the replacement plan
  std::string reason;                  // set when action == Stop
  double latency_ms = 0.0;
};

// Samples the active trajectory over [t_now, t_now + horizon] against the
// grid (occupied cells collide; unknown and out-of-grid space does not).
// On a predicted collision, replans from the sampled state at t_now toward
// the goal; if that fails the decision is Stop.
ReplanDecision check_and_replan(const Trajectory& current, double t_now,
                                const OccupancyGrid& grid, const Vec3& goal,
                                const PlanEnv& env, const ReplanConfig& config = {});

// Yaw update toward the direction of travel: holds the current yaw when
// both horizontal speed components are below 0.1 m/s, otherwise turns
// toward atan2(vy, vx) by at most max_step radians.
double yaw_reference(double current_yaw, const Vec3& velocity, double max_step = 0.5);

// JSON-lines log of supervisor decisions.
class DecisionLog {
 public:
  DecisionLog() = default;
  explicit DecisionLog(const std::string& path);
  bool open() const { return out_.is_open(); }
  void append(double t, const ReplanDecision& decision);

 private:
  std::ofstream out_;
};

}  // namespace voxnav
