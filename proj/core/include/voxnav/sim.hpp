#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "voxnav/depth_fusion.hpp"
#include "voxnav/occupancy.hpp"
#include "voxnav/replan.hpp"

namespace voxnav {

// Pinhole depth camera; optical frame is x right, y down, z forward.
struct CameraModel {
  int width = 96;
  int height = 60;
  double fx = 50.58;
  double fy = 54.12;
  double cx = 47.5;
  double cy = 29.5;
  double max_depth_m = 10.0;

  Intrinsics intrinsics() const { return {fx, fy, cx, cy}; }
  static CameraModel from_fov(int width, int height, double hfov_rad, double vfov_rad,
                              double max_depth_m = 10.0);
};

// Fixed mount: optical axis along body +x, image x along body -y (right),
// image y along body -z (down).
Pose camera_in_body();

// z-depth render: for each pixel, the camera-frame z coordinate (mm) of the
// first occupied voxel boundary hit along the pixel ray; 0 where nothing is
// hit within max_depth_m. A camera inside an occupied voxel sees nothing.
DepthMM render_depth(const OccupancyGrid& grid, const Pose& camera_pose,
                     const CameraModel& camera);

// Hidden characteristic of the simulated depth estimator, mapping true
// depth to the estimator's relative unit. The quadratic kind satisfies
// 1/depth_mm = b2 r^2 + b1 r + b0 exactly (r is the positive root), so the
// fusion model can recover it; the power kind r = a * depth_mm^-gamma has no
// exact quadratic inverse-depth representation and exercises model
// mismatch. Relative values grow toward the camera, disparity-style.
struct HiddenWarp {
  enum class Kind { Quadratic, Power };
  Kind kind = Kind::Quadratic;
  Eigen::Vector3d beta = Eigen::Vector3d(1e-4, 5e-4, 5e-5);  // (b2, b1, b0)
  double power_scale = 50.0;
  double power_exponent = 0.8;

  float to_relative(double depth_mm) const;
};

struct SensorNoise {
  double speckle_probability = 0.1;  // estimator-channel dropout
  double sigma_per_m2 = 0.01;        // depth sigma (m) = this * (depth m)^2
};

struct DepthSensor {
  CameraModel camera;
  HiddenWarp warp;
  SensorNoise noise;
  int sparse_stride = 4;  // trusted metric samples every Nth pixel per axis
  double rate_hz = 4.0;
};

struct Observation {
  DepthMM true_depth;      // clean z-depth render (visibility bookkeeping)
  RelativeDepth relative;  // warped, speckled, noisy estimator channel
  DepthMM sparse;          // clean subsampled metric channel
  Pose camera_pose;
};

// Renders and corrupts one frame. The noise draws come from the caller's
// generator; the sparse channel stays clean.
Observation observe(const OccupancyGrid& ground_truth, const Pose& camera_pose,
                    const DepthSensor& sensor, std::mt19937_64& rng);

struct VehicleState {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Vec3 acceleration = Vec3::Zero();
  double yaw = 0.0;
  double time = 0.0;  // simulation clock, seconds

  Pose pose() const { return Pose::from_xyz_yaw(position, yaw); }
};

struct SimulatorConfig {
  double dt = 0.05;             // 20 Hz control loop
  double vehicle_radius = 0.3;  // inflation radius for planning and checking
  // Extra inflation applied to the planning grid only, on top of the vehicle
  // radius; negative means one voxel. Covers occupied voxels hiding directly
  // behind observed surfaces, which the belief map cannot see.
  double plan_margin_m = -1.0;
  double yaw_step = 0.5;        // max yaw change per control step (rad)
  double tracking_sigma = 0.0;  // optional Gaussian position tracking noise
  double goal_tolerance = 0.3;
  DepthSensor sensor;
  PlanEnv plan;
  ReplanConfig replan;
  double stop_hover_s = 0.5;  // hover before retrying after a Stop decision
  int max_stops = 8;
  double max_flight_s = 300.0;  // per-fly watchdog
  std::uint64_t seed = 1;
};

// Kinematic closed-loop simulator: the vehicle follows trajectory
// references exactly (plus optional tracking noise), perceives through the
// warped depth pipeline into an online map, and flies under the replanning
// supervisor. Ground truth is used only to render depth and to assert
// collision-freedom.
class Simulator {
 public:
  Simulator(OccupancyGrid ground_truth, SimulatorConfig config);

  const SimulatorConfig& config() const { return config_; }
  const OccupancyGrid& ground_truth() const { return ground_truth_; }
  // Fused belief (Unknown until seen). Cells carry hit/miss evidence with
  // hysteresis, so spurious far-range returns decay once later rays pass
  // through them instead of becoming permanent obstacles.
  const OccupancyGrid& online() const { return online_; }
  // Obstacle-inflated copy of the online map; what planning runs against.
  const OccupancyGrid& online_inflated() const { return online_inflated_; }
  const VehicleState& state() const { return state_; }
  double path_length() const { return path_length_; }
  int replans() const { return replans_; }
  int stops() const { return stops_; }
  std::mt19937_64& rng() { return rng_; }

  void set_state(const VehicleState& state) { state_ = state; }
  void set_decision_log(DecisionLog* log) { decision_log_ = log; }
  // Invoked after every perception with the fresh observation.
  void set_observation_hook(std::function<void(const Observation&)> hook) {
    observation_hook_ = std::move(hook);
  }

  // One sensor frame at the current pose: render, corrupt, fit, complete,
  // back-project, integrate.
  const Observation& perceive();

  // Turn in place toward the target yaw, perceiving at the sensor rate.
  void rotate_to(double target_yaw);

  struct FlyResult {
    bool reached = false;
    bool collided = false;
    bool gave_up = false;   // Stop retries or watchdog exhausted
    bool cut_short = false; // stop_when fired
    std::string reason;
    double flight_time = 0.0;
    int replans = 0;
    int stops = 0;
  };

  // Follow a trajectory toward goal under the supervisor; optional
  // stop_when is polled every control step (used for coverage cutoffs).
  FlyResult fly(Trajectory trajectory, const Vec3& goal,
                const std::function<bool()>& stop_when = {});

  // Plan on the online inflated grid from the current (resting) state and
  // fly. Initial planning failures count as an immediate give-up.
  FlyResult run_to_goal(const Vec3& goal, const std::function<bool()>& stop_when = {});

 private:
  void apply_state(const Vec3& position, const Vec3& velocity, const Vec3& acceleration);
  bool in_collision() const;
  void integrate_observation(const Observation& obs);
  // Incremental maintenance of online_inflated_ on a single cell change.
  void apply_inflation_delta(const Vec3i& idx, Cell before, Cell after);
  void bump_inflation(const Vec3i& at, int delta);
  // Planning-grid copy with the vehicle's own voxel guaranteed startable.
  OccupancyGrid planning_snapshot() const;

  OccupancyGrid ground_truth_;
  OccupancyGrid ground_truth_inflated_;
  OccupancyGrid online_;
  OccupancyGrid online_inflated_;
  std::vector<std::int8_t> evidence_;  // per-voxel hit/miss balance
  std::vector<Vec3i> inflate_stencil_;
  std::vector<std::int16_t> inflate_count_;  // occupied cells within plan radius
  SimulatorConfig config_;
  VehicleState state_;
  Observation last_observation_;
  std::mt19937_64 rng_;
  std::function<void(const Observation&)> observation_hook_;
  DecisionLog* decision_log_ = nullptr;
  double plan_radius_ = 0.0;
  double path_length_ = 0.0;
  int replans_ = 0;
  int stops_ = 0;
  int steps_per_frame_ = 5;
  int frame_counter_ = 0;
};

}  // namespace voxnav
