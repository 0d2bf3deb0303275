#include "voxnav/trajectory.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace voxnav {

Eigen::Matrix<double, 6, 1> bernstein_basis5(double s) {
  const double u = 1.0 - s;
  Eigen::Matrix<double, 6, 1> b;
  b << u * u * u * u * u, 5.0 * s * u * u * u * u, 10.0 * s * s * u * u * u,
      10.0 * s * s * s * u * u, 5.0 * s * s * s * s * u, s * s * s * s * s;
  return b;
}

Eigen::Matrix<double, 5, 1> bernstein_basis4(double s) {
  const double u = 1.0 - s;
  Eigen::Matrix<double, 5, 1> b;
  b << u * u * u * u, 4.0 * s * u * u * u, 6.0 * s * s * u * u, 4.0 * s * s * s * u,
      s * s * s * s;
  return b;
}

Eigen::Matrix<double, 4, 1> bernstein_basis3(double s) {
  const double u = 1.0 - s;
  Eigen::Matrix<double, 4, 1> b;
  b << u * u * u, 3.0 * s * u * u, 3.0 * s * s * u, s * s * s;
  return b;
}

Eigen::Matrix<double, 6, 1> waypoints_to_coefficients(double p, double v, double a,
                                                      double p1, double v1, double a1,
                                                      double t) {
  Eigen::Matrix<double, 6, 1> c;
  c(0) = p;
  c(1) = p + (t / 5.0) * v;
  c(2) = p + (2.0 * t / 5.0) * v + (t * t / 20.0) * a;
  c(3) = p1 - (2.0 * t / 5.0) * v1 + (t * t / 20.0) * a1;
  c(4) = p1 - (t / 5.0) * v1;
  c(5) = p1;
  return c;
}

Eigen::Matrix<double, 3, 6> waypoints_to_coefficients(const Waypoint& from,
                                                      const Waypoint& to, double t) {
  Eigen::Matrix<double, 3, 6> c;
  for (int ax = 0; ax < 3; ++ax)
    c.row(ax) = waypoints_to_coefficients(from.position[ax], from.velocity[ax],
                                          from.acceleration[ax], to.position[ax],
                                          to.velocity[ax], to.acceleration[ax], t)
                    .transpose();
  return c;
}

Eigen::MatrixXd differentiation_matrix(int m, double duration) {
  if (m < 1 || m > 5) throw std::invalid_argument("derivative order must be in [1,5]");
  if (duration <= 0.0) throw std::invalid_argument("duration must be positive");
  const int rows = 6 - m;
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(rows, rows + 1);
  const double scale = static_cast<double>(rows) / duration;
  for (int r = 0; r < rows; ++r) {
    d(r, r) = -scale;
    d(r, r + 1) = scale;
  }
  return d;
}

Eigen::MatrixXd derivative_operator(int m, double duration) {
  Eigen::MatrixXd op = differentiation_matrix(1, duration);
  for (int order = 2; order <= m; ++order)
    op = differentiation_matrix(order, duration) * op;
  return op;
}

SegmentControlPoints control_points(const BernsteinSegment& segment) {
  SegmentControlPoints cp;
  cp.position = segment.coeffs;
  Eigen::MatrixXd d1 = differentiation_matrix(1, segment.duration);
  Eigen::MatrixXd d2 = differentiation_matrix(2, segment.duration);
  cp.velocity = segment.coeffs * d1.transpose();
  cp.acceleration = cp.velocity * d2.transpose();
  return cp;
}

Trajectory::Trajectory(std::vector<Waypoint> waypoints, std::vector<double> durations,
                       std::vector<Aabb> bounds, std::vector<int> corridor_index)
    : waypoints_(std::move(waypoints)), durations_(std::move(durations)) {
  if (waypoints_.size() != durations_.size() + 1 || durations_.empty())
    throw std::invalid_argument("trajectory needs n+1 waypoints for n durations");
  if (bounds.size() != durations_.size() || corridor_index.size() != durations_.size())
    throw std::invalid_argument("one bounds box and corridor index per segment");

  segments_.resize(durations_.size());
  cumulative_.resize(durations_.size());
  double t0 = 0.0;
  for (std::size_t i = 0; i < durations_.size(); ++i) {
    if (durations_[i] <= 0.0) throw std::invalid_argument("durations must be positive");
    segments_[i].duration = durations_[i];
    segments_[i].coeffs =
        waypoints_to_coefficients(waypoints_[i], waypoints_[i + 1], durations_[i]);
    segments_[i].bounds = bounds[i];
    segments_[i].corridor_index = corridor_index[i];
    cumulative_[i] = t0;
    t0 += durations_[i];
  }
  total_time_ = t0;
}

TrajectoryState Trajectory::evaluate(double t) const {
  if (segments_.empty()) throw std::out_of_range("empty trajectory");
  if (t < 0.0 || t > total_time_ * (1.0 + 1e-12) + 1e-12)
    throw std::out_of_range("trajectory time out of range");
  t = std::min(t, total_time_);

  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), t);
  int i = static_cast<int>(it - cumulative_.begin()) - 1;
  i = std::clamp(i, 0, static_cast<int>(segments_.size()) - 1);

  const BernsteinSegment& seg = segments_[i];
  const double s = std::clamp((t - cumulative_[i]) / seg.duration, 0.0, 1.0);
  SegmentControlPoints cp = control_points(seg);

  TrajectoryState state;
  state.position = cp.position * bernstein_basis5(s);
  state.velocity = cp.velocity * bernstein_basis4(s);
  state.acceleration = cp.acceleration * bernstein_basis3(s);
  return state;
}

InitialGuess initialize(const Corridor& corridor, const Waypoint& start,
                        const Vec3& goal, const Limits& limits, double t_min) {
  if (corridor.size() == 0) throw std::invalid_argument("empty corridor");

  InitialGuess guess;
  guess.waypoints.push_back(start);
  for (std::size_t i = 1; i < corridor.size(); ++i) {
    // Center of the intersection of consecutive boxes, reachable from both.
    const Aabb& a = corridor.bounds[i - 1];
    const Aabb& b = corridor.bounds[i];
    Waypoint w;
    w.position = 0.5 * (a.lower.cwiseMax(b.lower) + a.upper.cwiseMin(b.upper));
    guess.waypoints.push_back(w);
  }
  Waypoint end;
  end.position = goal;
  guess.waypoints.push_back(end);

  const double speed = limits.v_max.norm();
  for (std::size_t i = 0; i + 1 < guess.waypoints.size(); ++i) {
    double dist = (guess.waypoints[i + 1].position - guess.waypoints[i].position).norm();
    guess.durations.push_back(std::max(dist / speed, t_min));
  }
  return guess;
}

namespace {

template <typename Derived>
double box_violation(const Eigen::MatrixBase<Derived>& points, const Aabb& box) {
  double worst = 0.0;
  for (int c = 0; c < points.cols(); ++c)
    for (int ax = 0; ax < 3; ++ax) {
      worst = std::max(worst, box.lower[ax] - points(ax, c));
      worst = std::max(worst, points(ax, c) - box.upper[ax]);
    }
  return worst;
}

template <typename Derived>
double limit_violation(const Eigen::MatrixBase<Derived>& points, const Vec3& bound) {
  double worst = 0.0;
  for (int c = 0; c < points.cols(); ++c)
    for (int ax = 0; ax < 3; ++ax)
      worst = std::max(worst, std::abs(points(ax, c)) - bound[ax]);
  return worst;
}

VerifyReport verify_impl(const Trajectory& traj, const std::vector<Aabb>& segment_boxes,
                         const Limits& limits, int samples) {
  VerifyReport report;
  samples = std::max(samples, 1);

  for (std::size_t i = 0; i < traj.segments().size(); ++i) {
    SegmentControlPoints cp = control_points(traj.segments()[i]);
    report.control_point_position = std::max(
        report.control_point_position, box_violation(cp.position, segment_boxes[i]));
    report.control_point_velocity = std::max(
        report.control_point_velocity, limit_violation(cp.velocity, limits.v_max));
    report.control_point_acceleration =
        std::max(report.control_point_acceleration,
                 limit_violation(cp.acceleration, limits.a_max));
  }

  const double total = traj.total_time();
  double cumulative = 0.0;
  std::vector<double> starts(traj.segments().size());
  for (std::size_t i = 0; i < traj.segments().size(); ++i) {
    starts[i] = cumulative;
    cumulative += traj.segments()[i].duration;
  }

  for (int s = 0; s <= samples; ++s) {
    double t = total * static_cast<double>(s) / samples;
    TrajectoryState state = traj.evaluate(t);

    // Attribute the sample to the segment that owns t (boundary samples may
    // sit in the closure of two boxes; owning segment matches evaluate()).
    auto it = std::upper_bound(starts.begin(), starts.end(), t);
    int i = std::clamp(static_cast<int>(it - starts.begin()) - 1, 0,
                       static_cast<int>(traj.segments().size()) - 1);

    double pos_violation = box_violation(state.position, segment_boxes[i]);
    double vel_violation = limit_violation(state.velocity, limits.v_max);
    double acc_violation = limit_violation(state.acceleration, limits.a_max);
    if (std::max({pos_violation, vel_violation, acc_violation}) >
        report.max_sampled_violation()) {
      report.worst_sample_time = t;
    }
    report.sampled_position = std::max(report.sampled_position, pos_violation);
    report.sampled_velocity = std::max(report.sampled_velocity, vel_violation);
    report.sampled_acceleration = std::max(report.sampled_acceleration, acc_violation);
  }
  return report;
}

}  // namespace

VerifyReport verify(const Trajectory& traj, const Limits& limits, int samples) {
  std::vector<Aabb> boxes;
  boxes.reserve(traj.segments().size());
  for (const auto& seg : traj.segments()) boxes.push_back(seg.bounds);
  return verify_impl(traj, boxes, limits, samples);
}

VerifyReport verify(const Trajectory& traj, const Corridor& corridor,
                    const Limits& limits, int samples) {
  std::vector<Aabb> boxes;
  boxes.reserve(traj.segments().size());
  for (const auto& seg : traj.segments())
    boxes.push_back(corridor.bounds.at(seg.corridor_index));
  return verify_impl(traj, boxes, limits, samples);
}

void write_trajectory_csv(const Trajectory& traj, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  os << "t,x,y,z,vx,vy,vz,ax,ay,az\n";
  os.precision(9);
  const double dt = 0.01;
  const double total = traj.total_time();
  int n = static_cast<int>(total / dt);
  for (int i = 0; i <= n; ++i) {
    double t = std::min(i * dt, total);
    TrajectoryState s = traj.evaluate(t);
    os << t << ',' << s.position.x() << ',' << s.position.y() << ',' << s.position.z()
       << ',' << s.velocity.x() << ',' << s.velocity.y() << ',' << s.velocity.z() << ','
       << s.acceleration.x() << ',' << s.acceleration.y() << ',' << s.acceleration.z()
       << '\n';
  }
  if (n * dt < total) {
    TrajectoryState s = traj.evaluate(total);
    os << total << ',' << s.position.x() << ',' << s.position.y() << ','
       << s.position.z() << ',' << s.velocity.x() << ',' << s.velocity.y() << ','
       << s.velocity.z() << ',' << s.acceleration.x() << ',' << s.acceleration.y()
       << ',' << s.acceleration.z() << '\n';
  }
}

void write_trajectory_json(const Trajectory& traj, const std::string& path) {
  nlohmann::json j;
  j["total_time"] = traj.total_time();
  j["durations"] = traj.durations();
  j["waypoints"] = nlohmann::json::array();
  for (const Waypoint& w : traj.waypoints())
    j["waypoints"].push_back({
        {"position", {w.position.x(), w.position.y(), w.position.z()}},
        {"velocity", {w.velocity.x(), w.velocity.y(), w.velocity.z()}},
        {"acceleration", {w.acceleration.x(), w.acceleration.y(), w.acceleration.z()}},
    });
  j["segments"] = nlohmann::json::array();
  for (const auto& seg : traj.segments())
    j["segments"].push_back({
        {"duration", seg.duration},
        {"corridor_index", seg.corridor_index},
        {"bounds_lower", {seg.bounds.lower.x(), seg.bounds.lower.y(), seg.bounds.lower.z()}},
        {"bounds_upper", {seg.bounds.upper.x(), seg.bounds.upper.y(), seg.bounds.upper.z()}},
    });
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  os << j.dump(2) << '\n';
}

}  // namespace voxnav
