#include "voxnav/sim.hpp"

#include <algorithm>
#include <cmath>

namespace voxnav {

CameraModel CameraModel::from_fov(int width, int height, double hfov_rad,
                                  double vfov_rad, double max_depth_m) {
  CameraModel cam;
  cam.width = width;
  cam.height = height;
  cam.fx = (width / 2.0) / std::tan(hfov_rad / 2.0);
  cam.fy = (height / 2.0) / std::tan(vfov_rad / 2.0);
  cam.cx = (width - 1) / 2.0;
  cam.cy = (height - 1) / 2.0;
  cam.max_depth_m = max_depth_m;
  return cam;
}

Pose camera_in_body() {
  Pose pose;
  // Columns are the camera axes expressed in the body frame: image x points
  // along -y (right), image y along -z (down), optical z along +x (forward).
  pose.rotation.col(0) = Vec3(0, -1, 0);
  pose.rotation.col(1) = Vec3(0, 0, -1);
  pose.rotation.col(2) = Vec3(1, 0, 0);
  pose.position = Vec3::Zero();
  return pose;
}

DepthMM render_depth(const OccupancyGrid& grid, const Pose& camera_pose,
                     const CameraModel& camera) {
  DepthMM image;
  image.width = camera.width;
  image.height = camera.height;
  image.data.assign(static_cast<std::size_t>(camera.width) * camera.height, 0);

  const Vec3 origin = camera_pose.position;
  const auto origin_idx = grid.world_to_index(origin);
  if (origin_idx && grid.at(*origin_idx) == Cell::Occupied) return image;

  for (int v = 0; v < camera.height; ++v) {
    for (int u = 0; u < camera.width; ++u) {
      // Ray parameterized by camera-frame z, so the hit parameter is the
      // z-depth directly.
      const Vec3 dir_cam((u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy, 1.0);
      const Vec3 dir = camera_pose.rotation * dir_cam;
      const Vec3 end = origin + dir * camera.max_depth_m;

      double hit_depth = -1.0;
      for_each_voxel_on_segment(grid, origin, end, [&](const Vec3i& idx) {
        if (grid.at(idx) != Cell::Occupied) return true;
        // Entry parameter of the ray into this voxel (slab test).
        const Aabb box = grid.voxel_box(idx);
        double entry = 0.0;
        for (int axis = 0; axis < 3; ++axis) {
          if (std::abs(dir[axis]) < 1e-300) continue;
          const double t0 = (box.lower[axis] - origin[axis]) / dir[axis];
          const double t1 = (box.upper[axis] - origin[axis]) / dir[axis];
          entry = std::max(entry, std::min(t0, t1));
        }
        hit_depth = entry;
        return false;
      });
      if (hit_depth < 0.0 || hit_depth > camera.max_depth_m) continue;
      const long mm = std::lround(hit_depth * 1000.0);
      image.at(u, v) = static_cast<std::uint16_t>(std::clamp(mm, 1L, 65535L));
    }
  }
  return image;
}

float HiddenWarp::to_relative(double depth_mm) const {
  if (depth_mm <= 0.0) return 0.0f;
  if (kind == Kind::Power)
    return static_cast<float>(power_scale * std::pow(depth_mm, -power_exponent));
  const double q = 1.0 / depth_mm;
  const double b2 = beta[0], b1 = beta[1], b0 = beta[2];
  if (std::abs(b2) < 1e-300) return static_cast<float>((q - b0) / b1);
  const double disc = b1 * b1 + 4.0 * b2 * (q - b0);
  if (disc <= 0.0) return 0.0f;
  return static_cast<float>((-b1 + std::sqrt(disc)) / (2.0 * b2));
}

Observation observe(const OccupancyGrid& ground_truth, const Pose& camera_pose,
                    const DepthSensor& sensor, std::mt19937_64& rng) {
  Observation obs;
  obs.camera_pose = camera_pose;
  obs.true_depth = render_depth(ground_truth, camera_pose, sensor.camera);

  obs.relative.width = obs.true_depth.width;
  obs.relative.height = obs.true_depth.height;
  obs.relative.data.assign(obs.true_depth.data.size(), 0.0f);
  obs.sparse.width = obs.true_depth.width;
  obs.sparse.height = obs.true_depth.height;
  obs.sparse.data.assign(obs.true_depth.data.size(), 0);

  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int stride = std::max(sensor.sparse_stride, 1);

  for (int v = 0; v < obs.true_depth.height; ++v) {
    for (int u = 0; u < obs.true_depth.width; ++u) {
      const std::uint16_t d = obs.true_depth.at(u, v);
      if (d == 0) continue;
      if (u % stride == 0 && v % stride == 0) obs.sparse.at(u, v) = d;
      if (uniform(rng) < sensor.noise.speckle_probability) continue;  // dropout
      const double d_m = d * 1e-3;
      const double sigma_mm = sensor.noise.sigma_per_m2 * d_m * d_m * 1000.0;
      const double noisy = std::max(1.0, d + sigma_mm * normal(rng));
      obs.relative.at(u, v) = sensor.warp.to_relative(noisy);
    }
  }
  return obs;
}

Simulator::Simulator(OccupancyGrid ground_truth, SimulatorConfig config)
    : ground_truth_(std::move(ground_truth)),
      ground_truth_inflated_(inflate(ground_truth_, config.vehicle_radius)),
      online_(ground_truth_.origin(), ground_truth_.resolution(), ground_truth_.dims(),
              Cell::Unknown),
      online_inflated_(online_),
      evidence_(online_.size(), 0),
      config_(config),
      rng_(config.seed) {
  const double res = ground_truth_.resolution();
  plan_radius_ = config_.vehicle_radius +
                 (config_.plan_margin_m < 0.0 ? res : config_.plan_margin_m);
  // Closed-loop flight only ever crosses space the sensor has actually
  // carved out as free: optimistic traversal of unknown voxels lets routes
  // thread through never-observed walls. Exploration still advances because
  // the camera sees far beyond the flown path.
  config_.plan.decompose.unknown_traversable = false;
  steps_per_frame_ = std::max(
      1, static_cast<int>(std::lround(1.0 / (config_.sensor.rate_hz * config_.dt))));

  // Stencil and per-voxel occupied-neighbor counts for the incremental
  // inflation maintained by apply_inflation_delta. The belief starts
  // all-Unknown, so every count starts at zero.
  const int reach = static_cast<int>(std::floor(plan_radius_ / res + 1e-9));
  const double r2 = plan_radius_ * plan_radius_ + 1e-9 * res * res;
  for (int dk = -reach; dk <= reach; ++dk)
    for (int dj = -reach; dj <= reach; ++dj)
      for (int di = -reach; di <= reach; ++di)
        if ((double(di) * di + double(dj) * dj + double(dk) * dk) * res * res <= r2)
          inflate_stencil_.emplace_back(di, dj, dk);
  inflate_count_.assign(online_.size(), 0);
}

bool Simulator::in_collision() const {
  return ground_truth_inflated_.occupied_at(state_.position);
}

void Simulator::integrate_observation(const Observation& obs) {
  FusionConfig fusion;
  fusion.max_depth_mm = config_.sensor.camera.max_depth_m * 1000.0;
  const ScaleFit fit = fit_scale(obs.relative, obs.sparse, fusion);
  if (!fit.ok()) return;
  const DepthMM completed = complete_depth(obs.relative, fit, fusion);
  const std::vector<Vec3> points =
      depth_to_points(completed, config_.sensor.camera.intrinsics(), obs.camera_pose);
  if (points.empty()) return;

  // Evidence accumulation with hysteresis: a return stamps its endpoint
  // voxel (+2, promoting to Occupied immediately -- a single glimpse of a
  // real wall must count), and every voxel a ray passes through decays
  // (-1). Far-range depth noise scatters endpoints around true surfaces;
  // the decay clears those phantoms as soon as later rays see through
  // them, while real walls are re-stamped every frame they are visible.
  const Vec3& origin = obs.camera_pose.position;
  for (const Vec3& point : points) {
    const auto endpoint = online_.world_to_index(point);
    for_each_voxel_on_segment(online_, origin, point, [&](const Vec3i& idx) {
      std::int8_t& e = evidence_[online_.linear_index(idx.x(), idx.y(), idx.z())];
      if (endpoint && idx == *endpoint)
        e = static_cast<std::int8_t>(std::min<int>(e + 2, 6));
      else
        e = static_cast<std::int8_t>(std::max<int>(e - 1, -4));
      const Cell before = online_.at(idx);
      const Cell after = e >= 2 ? Cell::Occupied : (e <= -1 ? Cell::Free : Cell::Unknown);
      if (after != before) {
        online_.set(idx, after);
        apply_inflation_delta(idx, before, after);
      }
      return true;
    });
  }
}

// Keeps online_inflated_ identical to inflate(online_, plan_radius_) by
// updating the occupied-within-radius count only around cells that changed;
// a full per-frame rebuild scans the whole grid for a handful of frontier
// transitions.
void Simulator::apply_inflation_delta(const Vec3i& idx, Cell before, Cell after) {
  const bool was = before == Cell::Occupied;
  const bool is = after == Cell::Occupied;
  if (was != is) {
    bump_inflation(idx, is ? +1 : -1);
  } else {
    const std::size_t lin = online_.linear_index(idx.x(), idx.y(), idx.z());
    if (inflate_count_[lin] == 0) online_inflated_.set(idx, after);
  }
}

void Simulator::bump_inflation(const Vec3i& at, int delta) {
  const Vec3i dims = online_.dims();
  for (const Vec3i& d : inflate_stencil_) {
    const int i = at.x() + d.x(), j = at.y() + d.y(), k = at.z() + d.z();
    if (i < 0 || j < 0 || k < 0 || i >= dims.x() || j >= dims.y() || k >= dims.z())
      continue;
    std::int16_t& count = inflate_count_[online_.linear_index(i, j, k)];
    count = static_cast<std::int16_t>(count + delta);
    online_inflated_.set(i, j, k,
                         count > 0 ? Cell::Occupied : online_.at(i, j, k));
  }
}

OccupancyGrid Simulator::planning_snapshot() const {
  OccupancyGrid grid = online_inflated_;
  // The vehicle demonstrably occupies its own position; when a spurious
  // return right next to the hull swallows the start cell, free that one
  // voxel so planning keeps a start instead of stalling until the phantom
  // decays. One voxel is an escape hatch, not a corridor: the surrounding
  // inflation still blocks routes toward whatever was detected.
  const auto idx = grid.world_to_index(state_.position);
  if (idx && grid.at(*idx) == Cell::Occupied) grid.set(*idx, Cell::Free);
  return grid;
}

const Observation& Simulator::perceive() {
  const Pose camera_pose = state_.pose() * camera_in_body();
  last_observation_ = observe(ground_truth_, camera_pose, config_.sensor, rng_);
  integrate_observation(last_observation_);
  if (observation_hook_) observation_hook_(last_observation_);
  return last_observation_;
}

void Simulator::rotate_to(double target_yaw) {
  bool perceived = false;
  for (int guard = 0; guard < 1000; ++guard) {
    const double error = wrap_angle(target_yaw - state_.yaw);
    if (std::abs(error) < 1e-9) break;
    state_.yaw =
        wrap_angle(state_.yaw + std::clamp(error, -config_.yaw_step, config_.yaw_step));
    state_.time += config_.dt;
    if (++frame_counter_ % steps_per_frame_ == 0) {
      perceive();
      perceived = true;
    }
  }
  // Dwell until the sensor fires at least once at the final heading.
  while (!perceived) {
    state_.time += config_.dt;
    if (++frame_counter_ % steps_per_frame_ == 0) {
      perceive();
      perceived = true;
    }
  }
}

void Simulator::apply_state(const Vec3& position, const Vec3& velocity,
                            const Vec3& acceleration) {
  Vec3 noisy = position;
  if (config_.tracking_sigma > 0.0) {
    std::normal_distribution<double> normal(0.0, config_.tracking_sigma);
    for (int axis = 0; axis < 3; ++axis) noisy[axis] += normal(rng_);
  }
  state_.position = noisy;
  state_.velocity = velocity;
  state_.acceleration = acceleration;
  state_.yaw = yaw_reference(state_.yaw, velocity, config_.yaw_step);
}

Simulator::FlyResult Simulator::fly(Trajectory trajectory, const Vec3& goal,
                                    const std::function<bool()>& stop_when) {
  FlyResult result;
  Trajectory active = std::move(trajectory);
  double t_rel = 0.0;
  Vec3 prev_reference = active.empty() ? state_.position : active.evaluate(0.0).position;
  bool hovering = false;
  bool belief_updated = true;  // the plan may predate the newest frame
  double hover_until = 0.0;

  const auto give_up = [&](const std::string& reason) {
    result.gave_up = true;
    result.reason = reason;
  };

  while (true) {
    if (stop_when && stop_when()) {
      result.cut_short = true;
      break;
    }
    if (result.flight_time > config_.max_flight_s) {
      give_up("flight watchdog expired");
      break;
    }

    if (hovering) {
      state_.time += config_.dt;
      result.flight_time += config_.dt;
      if (++frame_counter_ % steps_per_frame_ == 0) {
        perceive();
        belief_updated = true;
      }
      if (state_.time < hover_until) continue;

      Waypoint rest;
      rest.position = state_.position;
      const PlanOutcome retry = plan_route(planning_snapshot(), rest, goal, config_.plan);
      if (retry.ok) {
        active = retry.trajectory;
        t_rel = 0.0;
        prev_reference = active.evaluate(0.0).position;
        hovering = false;
        state_.velocity.setZero();
        state_.acceleration.setZero();
      } else {
        ++result.stops;
        ++stops_;
        if (result.stops >= config_.max_stops) {
          give_up("stopped with no route: " + retry.reason);
          break;
        }
        hover_until = state_.time + config_.stop_hover_s;
      }
      continue;
    }

    // The verdict only changes when the map does, so run the supervisor at
    // the sensor cadence rather than every control step.
    if (belief_updated) {
      belief_updated = false;
      ReplanDecision decision = check_and_replan(active, t_rel, planning_snapshot(), goal,
                                                 config_.plan, config_.replan);
      if (decision_log_) decision_log_->append(state_.time, decision);
      if (decision.action == ReplanAction::Replan) {
        active = std::move(decision.trajectory);
        t_rel = 0.0;
        prev_reference = active.evaluate(0.0).position;
        ++result.replans;
        ++replans_;
      } else if (decision.action == ReplanAction::Stop) {
        hovering = true;
        hover_until = state_.time + config_.stop_hover_s;
        ++result.stops;
        ++stops_;
        state_.velocity.setZero();
        state_.acceleration.setZero();
        if (result.stops >= config_.max_stops) {
          give_up("supervisor stopped: " + decision.reason);
          break;
        }
        continue;
      }
    }

    t_rel = std::min(t_rel + config_.dt, active.total_time());
    const TrajectoryState ref = active.evaluate(t_rel);
    apply_state(ref.position, ref.velocity, ref.acceleration);
    path_length_ += (ref.position - prev_reference).norm();
    prev_reference = ref.position;
    state_.time += config_.dt;
    result.flight_time += config_.dt;

    if (in_collision()) {
      result.collided = true;
      result.reason = "ground-truth collision";
      break;
    }
    if (++frame_counter_ % steps_per_frame_ == 0) {
      perceive();
      belief_updated = true;
    }

    if (t_rel >= active.total_time()) {
      if ((state_.position - goal).norm() <= config_.goal_tolerance + 3.0 * config_.tracking_sigma) {
        result.reached = true;
      } else {
        give_up("trajectory ended away from the goal");
      }
      break;
    }
  }
  return result;
}

Simulator::FlyResult Simulator::run_to_goal(const Vec3& goal,
                                            const std::function<bool()>& stop_when) {
  Waypoint start;
  start.position = state_.position;
  const PlanOutcome plan = plan_route(planning_snapshot(), start, goal, config_.plan);
  if (!plan.ok) {
    FlyResult result;
    result.gave_up = true;
    result.reason = "initial plan failed: " + plan.reason;
    return result;
  }
  return fly(plan.trajectory, goal, stop_when);
}

}  // namespace voxnav
