#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "voxnav/occupancy.hpp"
#include "voxnav/sim.hpp"

namespace voxnav {

// Sensing frustum used for visibility accounting and view scoring. Angles
// match the default depth camera.
struct FrustumModel {
  double hfov = 1.5184;  // rad
  double vfov = 1.0123;  // rad
  double range = 10.0;   // m, Euclidean
};

// Tracks which voxels of a reference grid have been seen. Viewed flags
// cover every voxel, but coverage is measured over the Free voxels inside
// the volume of interest: obstacle interiors can never be viewed, so
// counting them would cap achievable coverage below one.
class ExplorationMap {
 public:
  ExplorationMap(OccupancyGrid reference, FrustumModel frustum);
  ExplorationMap(OccupancyGrid reference, FrustumModel frustum, const Aabb& volume);

  const OccupancyGrid& reference() const { return grid_; }
  const FrustumModel& frustum() const { return frustum_; }
  const Aabb& volume() const { return volume_; }

  bool viewed(const Vec3i& idx) const { return viewed_[grid_.linear_index(idx.x(), idx.y(), idx.z())] != 0; }
  std::int64_t free_total() const { return free_total_; }
  std::int64_t free_viewed() const { return free_viewed_; }
  double coverage() const {
    return free_total_ == 0 ? 1.0 : static_cast<double>(free_viewed_) / free_total_;
  }

  // Exact frustum visibility: marks every voxel whose center lies inside
  // the frustum of `camera` (z forward, x right, y down) and has no
  // Occupied reference voxel strictly between the camera and the center
  // (the target voxel itself never occludes).
  void update_viewed(const Pose& camera);

  // Fast path for sensor frames: walks each pixel ray of a rendered
  // z-depth image up to the measured hit (full range on misses), marking
  // crossed voxel centers within the frustum range as viewed.
  void mark_viewed_from_depth(const Pose& camera, const DepthMM& depth,
                              const CameraModel& camera_model);

 private:
  void mark(const Vec3i& idx);

  OccupancyGrid grid_;
  FrustumModel frustum_;
  Aabb volume_;
  std::vector<std::uint8_t> viewed_;
  std::int64_t free_total_ = 0;
  std::int64_t free_viewed_ = 0;
};

// Knobs for next-best-view scoring.
struct ScoringOptions {
  int candidates = 300;   // uniform position samples in the volume
  int yaw_bins = 8;       // candidate headings per position
  double range = 0.0;     // scoring range; 0 uses the frustum range
  int stride = 1;         // voxel subsampling stride along each axis
};

struct NbvResult {
  bool found = false;
  Vec3 position = Vec3::Zero();
  double yaw = 0.0;
  double gain = 0.0;        // unviewed voxels visible from (position, yaw)
  int candidate_index = -1; // sample index of the winner
};

// Scores uniformly sampled candidate poses by how many unviewed voxels the
// frustum would reveal, with occlusion tested against `occlusion_grid`
// (typically the online map; Unknown does not occlude). Ties keep the
// lowest sample index; the result is deterministic in the seed. An
// optional predicate filters candidate positions (e.g. reachability).
NbvResult select_nbv(const ExplorationMap& map, const OccupancyGrid& occlusion_grid,
                     std::uint64_t seed, const ScoringOptions& options = {},
                     const std::function<bool(const Vec3&)>& acceptable = {});

struct ExplorationConfig {
  FrustumModel frustum;                 // keep matched to the sensor
  std::optional<Aabb> volume;           // defaults to the whole grid box
  ScoringOptions scoring{300, 8, 6.0, 2};
  int scan_segments = 12;               // initial 360-degree scan
  int max_rounds = 60;
  int max_strikes = 3;                  // fruitless rounds before giving up
  std::uint64_t seed = 7;
  std::string report_path;              // optional JSON report destination
};

struct ExplorationReport {
  bool collided = false;
  double final_coverage = 0.0;
  double sim_time_s = 0.0;
  double path_length = 0.0;
  int replans = 0;
  int stops = 0;
  int rounds = 0;
  std::string termination;  // threshold | strikes | rounds
  std::vector<std::pair<double, double>> coverage_series;  // (sim time, coverage)
  std::vector<Vec3> goals;
};

// Closed-loop exploration: initial in-place scan, then repeated
// next-best-view selection and flight until ground-truth coverage reaches
// the threshold (checked every control step, so flights cut off
// mid-trajectory) or progress stalls.
ExplorationReport run_exploration(Simulator& sim, double threshold,
                                  const ExplorationConfig& config = {});

}  // namespace voxnav
