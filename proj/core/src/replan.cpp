#include "voxnav/replan.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <nlohmann/json.hpp>

#include "voxnav/corridor.hpp"
#include "voxnav/decomposition.hpp"

namespace voxnav {
namespace {

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
      .count();
}

}  // namespace

PlanOutcome plan_route(const OccupancyGrid& grid, const Waypoint& start,
                       const Vec3& goal, const PlanEnv& env) {
  PlanOutcome outcome;
  auto t0 = std::chrono::steady_clock::now();
  const CuboidGraph graph = decompose(grid, env.decompose);
  outcome.decompose_ms = ms_since(t0);
  outcome.cuboid_count = graph.vertex_count();

  t0 = std::chrono::steady_clock::now();
  const CorridorResult route =
      select_corridors(graph, start.position, goal, env.corridor);
  outcome.corridor_ms = ms_since(t0);
  if (!route.ok()) {
    outcome.reason = route.status == CorridorStatus::StartNotFree
                         ? "start is not inside any free cuboid"
                         : "goal is unreachable in the current map";
    return outcome;
  }
  outcome.corridor = route.corridor;

  t0 = std::chrono::steady_clock::now();
  SolveResult solved = solve(route.corridor, start, goal, env.limits, env.solve);
  outcome.solve_ms = ms_since(t0);
  if (!solved.ok()) {
    outcome.reason = "trajectory optimization failed: " + solved.message;
    return outcome;
  }
  outcome.trajectory = std::move(solved.trajectory);
  outcome.ok = true;
  return outcome;
}

ReplanDecision check_and_replan(const Trajectory& current, double t_now,
                                const OccupancyGrid& grid, const Vec3& goal,
                                const PlanEnv& env, const ReplanConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  ReplanDecision decision;

  const double end = std::min(current.total_time(), t_now + config.horizon);
  decision.checked_until = end;
  double collision_t = -1.0;
  for (double t = t_now; t <= end + 1e-12; t += config.sample_dt) {
    const double tc = std::min(t, end);
    if (grid.occupied_at(current.evaluate(tc).position)) {
      collision_t = tc;
      break;
    }
  }
  if (collision_t < 0.0) {
    decision.action = ReplanAction::Continue;
    decision.latency_ms = ms_since(t0);
    return decision;
  }
  decision.first_collision_time = collision_t;

  const TrajectoryState state = current.evaluate(std::min(t_now, current.total_time()));
  Waypoint start;
  start.position = state.position;
  start.velocity = state.velocity;
  start.acceleration = state.acceleration;
  PlanOutcome plan = plan_route(grid, start, goal, env);
  if (plan.ok) {
    decision.action = ReplanAction::Replan;
    decision.trajectory = std::move(plan.trajectory);
    decision.corridor = std::move(plan.corridor);
  } else {
    decision.action = ReplanAction::Stop;
    decision.reason = plan.reason;
  }
  decision.latency_ms = ms_since(t0);
  return decision;
}

double yaw_reference(double current_yaw, const Vec3& velocity, double max_step) {
  if (std::abs(velocity[0]) < 0.1 && std::abs(velocity[1]) < 0.1) return current_yaw;
  const double desired = std::atan2(velocity[1], velocity[0]);
  const double error = wrap_angle(desired - current_yaw);
  const double step = std::clamp(error, -max_step, max_step);
  return wrap_angle(current_yaw + step);
}

DecisionLog::DecisionLog(const std::string& path) : out_(path) {}

void DecisionLog::append(double t, const ReplanDecision& decision) {
  if (!out_.is_open()) return;
  nlohmann::json entry;
  entry["t"] = t;
  switch (decision.action) {
    case ReplanAction::Continue: entry["decision"] = "continue"; break;
    case ReplanAction::Replan: entry["decision"] = "replan"; break;
    case ReplanAction::Stop: entry["decision"] = "stop"; break;
  }
  if (decision.first_collision_time >= 0.0)
    entry["first_collision_time"] = decision.first_collision_time;
  else
    entry["first_collision_time"] = nullptr;
  entry["checked_until"] = decision.checked_until;
  entry["replan_latency_ms"] = decision.latency_ms;
  if (!decision.reason.empty()) entry["reason"] = decision.reason;
  out_ << entry.dump() << "\n";
  out_.flush();
}

}  // namespace voxnav
