#pragma once

#include <string>
#include <vector>

#include "voxnav/corridor.hpp"
#include "voxnav/geometry.hpp"

namespace voxnav {

// Boundary state of a spline piece: value and first two derivatives per
// axis. Clamping both ends of every piece to shared waypoints makes the
// joined curve C2 by construction, with 3 variables per axis per waypoint
// instead of 6 coefficients per axis per piece.
struct Waypoint {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Vec3 acceleration = Vec3::Zero();
};

// Symmetric per-axis kinematic box limits.
struct Limits {
  Vec3 v_max = Vec3::Constant(2.0);
  Vec3 a_max = Vec3::Constant(4.0);
};

struct TrajectoryState {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Vec3 acceleration = Vec3::Zero();
};

// One order-5 Bernstein piece over [0, duration], plus the box it must not
// leave and the corridor entry it was planned inside.
struct BernsteinSegment {
  double duration = 0.0;
  Eigen::Matrix<double, 3, 6> coeffs = Eigen::Matrix<double, 3, 6>::Zero();
  Aabb bounds;
  int corridor_index = 0;
};

// Order-5 Bernstein basis at s in [0, 1], and the lower-order bases used by
// the derivative curves.
Eigen::Matrix<double, 6, 1> bernstein_basis5(double s);
Eigen::Matrix<double, 5, 1> bernstein_basis4(double s);
Eigen::Matrix<double, 4, 1> bernstein_basis3(double s);

// Coefficients of the unique order-5 piece matching (p, v, a) at t=0 and
// (p1, v1, a1) at t=duration:
//   c0 = p
//   c1 = p + (t/5) v
//   c2 = p + (2t/5) v + (t^2/20) a
//   c3 = p1 - (2t/5) v1 + (t^2/20) a1
//   c4 = p1 - (t/5) v1
//   c5 = p1
Eigen::Matrix<double, 6, 1> waypoints_to_coefficients(double p, double v, double a,
                                                      double p1, double v1, double a1,
                                                      double duration);
Eigen::Matrix<double, 3, 6> waypoints_to_coefficients(const Waypoint& from,
                                                      const Waypoint& to,
                                                      double duration);

// Bidiagonal map from order-(6-m+1) Bernstein coefficients to the
// coefficients of their derivative: ((6-m)/t) * (-1 on the diagonal, +1 on
// the superdiagonal), shape (6-m) x (7-m). m is 1-based.
Eigen::MatrixXd differentiation_matrix(int m, double duration);

// Composition mapping position coefficients directly to the m-th derivative
// coefficients, shape (6-m) x 6.
Eigen::MatrixXd derivative_operator(int m, double duration);

// Control points of the derivative curves of one segment; rows are axes.
struct SegmentControlPoints {
  Eigen::Matrix<double, 3, 6> position;
  Eigen::Matrix<double, 3, 5> velocity;
  Eigen::Matrix<double, 3, 4> acceleration;
};
SegmentControlPoints control_points(const BernsteinSegment& segment);

class Trajectory {
 public:
  Trajectory() = default;
  // Builds segment i from waypoints[i] -> waypoints[i+1] over durations[i],
  // constrained to bounds[i] (a corridor box). corridor_index maps each
  // segment back to its corridor entry.
  Trajectory(std::vector<Waypoint> waypoints, std::vector<double> durations,
             std::vector<Aabb> bounds, std::vector<int> corridor_index);

  const std::vector<BernsteinSegment>& segments() const { return segments_; }
  const std::vector<Waypoint>& waypoints() const { return waypoints_; }
  const std::vector<double>& durations() const { return durations_; }
  double total_time() const { return total_time_; }
  bool empty() const { return segments_.empty(); }

  // State at time t in [0, total_time]; throws std::out_of_range otherwise.
  TrajectoryState evaluate(double t) const;

 private:
  std::vector<BernsteinSegment> segments_;
  std::vector<Waypoint> waypoints_;
  std::vector<double> durations_;
  std::vector<double> cumulative_;  // segment start times
  double total_time_ = 0.0;
};

struct InitialGuess {
  std::vector<Waypoint> waypoints;  // start, one per box intersection, goal
  std::vector<double> durations;    // one per corridor entry
};

// Straight-line seeding: interior waypoints at the center of consecutive
// box intersections with zero velocity/acceleration, durations =
// distance / |v_max| (floored at t_min). Not feasible in general --- the
// solver owns making it so.
InitialGuess initialize(const Corridor& corridor, const Waypoint& start,
                        const Vec3& goal, const Limits& limits, double t_min = 1e-3);

struct VerifyReport {
  // Positive numbers are violations in meters (position) or m/s, m/s^2.
  double control_point_position = 0.0;
  double control_point_velocity = 0.0;
  double control_point_acceleration = 0.0;
  double sampled_position = 0.0;
  double sampled_velocity = 0.0;
  double sampled_acceleration = 0.0;
  double worst_sample_time = 0.0;

  double max_control_point_violation() const {
    return std::max({control_point_position, control_point_velocity,
                     control_point_acceleration});
  }
  double max_sampled_violation() const {
    return std::max({sampled_position, sampled_velocity, sampled_acceleration});
  }
  bool control_points_ok(double eps) const { return max_control_point_violation() <= eps; }
  bool samples_ok(double eps) const { return max_sampled_violation() <= eps; }
  bool ok(double eps) const { return control_points_ok(eps) && samples_ok(eps); }
};

// Checks box containment of every control point (sufficient by the convex
// hull property) and dense uniform sampling of the curve against the same
// bounds and limits.
VerifyReport verify(const Trajectory& traj, const Limits& limits, int samples = 10000);
// Same, but takes the boxes from the corridor via each segment's
// corridor_index instead of the trajectory's embedded bounds.
VerifyReport verify(const Trajectory& traj, const Corridor& corridor,
                    const Limits& limits, int samples = 10000);

// t,x,y,z,vx,vy,vz,ax,ay,az rows at 100 Hz plus a final row at total_time.
void write_trajectory_csv(const Trajectory& traj, const std::string& path);
// Waypoints, durations, and per-segment bounds.
void write_trajectory_json(const Trajectory& traj, const std::string& path);

}  // namespace voxnav
