#pragma once

#include <atomic>

#include "voxnav/trajectory.hpp"

namespace voxnav {

struct SolveOptions {
  double t_min = 1e-3;     // duration floor, keeps differentiation matrices bounded
  double eps_feas = 1e-6;  // feasibility tolerance promised to callers

  // Long corridor entries are split into several spline pieces; the box
  // constraint applies per control point, so short pieces waste far less of
  // the kinematic envelope than one long piece would.
  bool subdivide = true;
  double target_segment_length = 1.0;  // meters of straight-line chunk per piece
  int max_segments_per_corridor = 10;

  // Optimizer budget.
  int barrier_levels = 10;
  double barrier_mu0 = 1.0;
  double barrier_decay = 0.2;
  int max_inner_iterations = 80;
  int rounds = 3;

  // Checked between iterations; when set, the best feasible solution found
  // so far is returned.
  std::atomic<bool>* cancel = nullptr;
};

enum class SolveStatus { Ok, InfeasibleStart, SolverFailure };

struct SolveResult {
  SolveStatus status = SolveStatus::SolverFailure;
  Trajectory trajectory;
  std::string message;

  double objective = 0.0;        // total time of the returned trajectory
  double init_objective = 0.0;   // total time of the feasible initialization
  int iterations = 0;

  // Problem dimensions, for introspection: 3 values per waypoint per axis
  // (value, velocity, acceleration) and one duration per segment. The fixed
  // start waypoint is data, not a variable.
  int waypoint_vars_per_axis = 0;
  int duration_vars = 0;

  bool ok() const { return status == SolveStatus::Ok; }
};

// Minimizes total time over waypoints and durations subject to control-point
// box constraints (positions inside corridor boxes, velocity/acceleration
// inside symmetric limits). The returned trajectory always satisfies the
// constraints to working precision and never has a larger total time than
// the feasible initialization it started from.
SolveResult solve(const Corridor& corridor, const Waypoint& start, const Vec3& goal,
                  const Limits& limits, const SolveOptions& options = {});

}  // namespace voxnav
