#include "voxnav/exploration.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "voxnav/decomposition.hpp"

namespace voxnav {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Index window of voxels whose centers can lie within `radius` of `p`.
struct IndexWindow {
  Vec3i lo, hi;
};

IndexWindow window_around(const OccupancyGrid& grid, const Vec3& p, double radius) {
  IndexWindow w;
  for (int axis = 0; axis < 3; ++axis) {
    const double rel_lo = (p[axis] - radius - grid.origin()[axis]) / grid.resolution();
    const double rel_hi = (p[axis] + radius - grid.origin()[axis]) / grid.resolution();
    w.lo[axis] = std::clamp(static_cast<int>(std::floor(rel_lo)), 0, grid.dims()[axis] - 1);
    w.hi[axis] = std::clamp(static_cast<int>(std::floor(rel_hi)), 0, grid.dims()[axis] - 1);
  }
  return w;
}

// True when no Occupied voxel of `grid` lies strictly before `target` on
// the segment from `from` to the center of `target`.
bool line_of_sight(const OccupancyGrid& grid, const Vec3& from, const Vec3i& target) {
  bool clear = true;
  for_each_voxel_on_segment(grid, from, grid.voxel_center(target), [&](const Vec3i& idx) {
    if (idx == target) return false;  // reached the target unoccluded
    if (grid.at(idx) == Cell::Occupied) {
      clear = false;
      return false;
    }
    return true;
  });
  return clear;
}

}  // namespace

ExplorationMap::ExplorationMap(OccupancyGrid reference, FrustumModel frustum)
    : ExplorationMap(std::move(reference), frustum, Aabb{}) {
  volume_ = grid_.world_box();
  free_total_ = 0;
  for (int k = 0; k < grid_.dims().z(); ++k)
    for (int j = 0; j < grid_.dims().y(); ++j)
      for (int i = 0; i < grid_.dims().x(); ++i)
        if (grid_.at(i, j, k) == Cell::Free) ++free_total_;
}

ExplorationMap::ExplorationMap(OccupancyGrid reference, FrustumModel frustum,
                               const Aabb& volume)
    : grid_(std::move(reference)), frustum_(frustum), volume_(volume),
      viewed_(grid_.size(), 0) {
  for (int k = 0; k < grid_.dims().z(); ++k)
    for (int j = 0; j < grid_.dims().y(); ++j)
      for (int i = 0; i < grid_.dims().x(); ++i)
        if (grid_.at(i, j, k) == Cell::Free &&
            volume_.contains(grid_.voxel_center({i, j, k})))
          ++free_total_;
}

void ExplorationMap::mark(const Vec3i& idx) {
  std::uint8_t& flag = viewed_[grid_.linear_index(idx.x(), idx.y(), idx.z())];
  if (flag) return;
  flag = 1;
  if (grid_.at(idx) == Cell::Free && volume_.contains(grid_.voxel_center(idx)))
    ++free_viewed_;
}

void ExplorationMap::update_viewed(const Pose& camera) {
  const Vec3 o = camera.position;
  const Eigen::Matrix3d to_cam = camera.rotation.transpose();
  const double r2 = frustum_.range * frustum_.range;
  const IndexWindow w = window_around(grid_, o, frustum_.range);

  for (int k = w.lo.z(); k <= w.hi.z(); ++k)
    for (int j = w.lo.y(); j <= w.hi.y(); ++j)
      for (int i = w.lo.x(); i <= w.hi.x(); ++i) {
        const Vec3i idx(i, j, k);
        if (viewed(idx)) continue;
        const Vec3 d = grid_.voxel_center(idx) - o;
        if (d.squaredNorm() > r2) continue;
        const Vec3 c = to_cam * d;  // camera frame: x right, y down, z forward
        if (c.z() <= 0.0) continue;
        if (std::abs(std::atan2(c.x(), c.z())) > frustum_.hfov / 2.0) continue;
        if (std::abs(std::atan2(c.y(), c.z())) > frustum_.vfov / 2.0) continue;
        if (line_of_sight(grid_, o, idx)) mark(idx);
      }
}

void ExplorationMap::mark_viewed_from_depth(const Pose& camera, const DepthMM& depth,
                                            const CameraModel& camera_model) {
  const Vec3 o = camera.position;
  const double r2 = frustum_.range * frustum_.range;
  const double res = grid_.resolution();
  const Vec3i dims = grid_.dims();

  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      const std::uint16_t d_mm = depth.at(u, v);
      // z-depth parameterization: position = o + dir * s with s the
      // camera-frame z coordinate.
      const Vec3 dir_cam((u - camera_model.cx) / camera_model.fx,
                         (v - camera_model.cy) / camera_model.fy, 1.0);
      const Vec3 dir = camera.rotation * dir_cam;
      const double s_cap = d_mm > 0
                               ? std::min(d_mm * 1e-3, frustum_.range)
                               : std::min(camera_model.max_depth_m, frustum_.range);
      const double cap = s_cap + 0.75e-3;  // slack for millimeter rounding

      // Incremental grid walk in the s parameter: step_s[axis] is how much
      // s grows per voxel crossed along that axis, next_s[axis] the s value
      // of the next boundary crossing. A voxel is marked while the walk
      // enters it at s <= cap (the surface-hit voxel itself included) and
      // its center lies inside the viewing sphere.
      const auto start = grid_.world_to_index(o);
      if (!start) continue;
      Vec3i idx = *start;
      double step_s[3], next_s[3];
      int step_i[3];
      for (int axis = 0; axis < 3; ++axis) {
        if (dir[axis] > 1e-300) {
          step_i[axis] = 1;
          step_s[axis] = res / dir[axis];
          next_s[axis] = ((grid_.origin()[axis] + (idx[axis] + 1) * res) - o[axis]) / dir[axis];
        } else if (dir[axis] < -1e-300) {
          step_i[axis] = -1;
          step_s[axis] = -res / dir[axis];
          next_s[axis] = ((grid_.origin()[axis] + idx[axis] * res) - o[axis]) / dir[axis];
        } else {
          step_i[axis] = 0;
          step_s[axis] = kInf;
          next_s[axis] = kInf;
        }
      }
      double entry = 0.0;
      while (entry <= cap) {
        if ((grid_.voxel_center(idx) - o).squaredNorm() <= r2) mark(idx);
        const int axis = next_s[0] < next_s[1]
                             ? (next_s[0] < next_s[2] ? 0 : 2)
                             : (next_s[1] < next_s[2] ? 1 : 2);
        entry = next_s[axis];
        idx[axis] += step_i[axis];
        if (idx[axis] < 0 || idx[axis] >= dims[axis]) break;
        next_s[axis] += step_s[axis];
      }
    }
  }
}

NbvResult select_nbv(const ExplorationMap& map, const OccupancyGrid& occlusion_grid,
                     std::uint64_t seed, const ScoringOptions& options,
                     const std::function<bool(const Vec3&)>& acceptable) {
  const OccupancyGrid& ref = map.reference();
  const Aabb& volume = map.volume();
  const double range =
      options.range > 0.0 ? options.range : map.frustum().range;
  const double r2 = range * range;
  const int stride = std::max(options.stride, 1);
  const int bins = std::max(options.yaw_bins, 1);
  const double half_h = map.frustum().hfov / 2.0;
  const double half_v = map.frustum().vfov / 2.0;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(volume.lower.x(), volume.upper.x());
  std::uniform_real_distribution<double> uy(volume.lower.y(), volume.upper.y());
  std::uniform_real_distribution<double> uz(volume.lower.z(), volume.upper.z());

  NbvResult best;
  std::vector<std::int64_t> bin_count(bins);

  for (int s = 0; s < options.candidates; ++s) {
    // Fixed draw order keeps results deterministic regardless of filtering.
    const Vec3 p(ux(rng), uy(rng), uz(rng));
    if (acceptable && !acceptable(p)) continue;

    std::fill(bin_count.begin(), bin_count.end(), 0);
    const IndexWindow w = window_around(ref, p, range);
    // Absolute stride alignment so every candidate scores the same lattice.
    const auto align = [stride](int lo) { return lo + (stride - lo % stride) % stride; };
    for (int k = align(w.lo.z()); k <= w.hi.z(); k += stride)
      for (int j = align(w.lo.y()); j <= w.hi.y(); j += stride)
        for (int i = align(w.lo.x()); i <= w.hi.x(); i += stride) {
          const Vec3i idx(i, j, k);
          if (map.viewed(idx)) continue;
          const Vec3 center = ref.voxel_center(idx);
          if (!volume.contains(center)) continue;
          const Vec3 d = center - p;
          if (d.squaredNorm() > r2) continue;
          const double rho = std::hypot(d.x(), d.y());
          if (std::abs(std::atan2(d.z(), rho)) > half_v) continue;
          if (!line_of_sight(occlusion_grid, p, idx)) continue;
          const double az = std::atan2(d.y(), d.x());
          for (int b = 0; b < bins; ++b) {
            const double yaw_b = -M_PI + (2.0 * b + 1.0) * M_PI / bins;
            if (std::abs(wrap_angle(az - yaw_b)) <= half_h) ++bin_count[b];
          }
        }

    int best_bin = 0;
    for (int b = 1; b < bins; ++b)
      if (bin_count[b] > bin_count[best_bin]) best_bin = b;
    const double gain = static_cast<double>(bin_count[best_bin]);
    if (gain > best.gain) {
      best.found = true;
      best.position = p;
      best.yaw = -M_PI + (2.0 * best_bin + 1.0) * M_PI / bins;
      best.gain = gain;
      best.candidate_index = s;
    }
  }
  return best;
}

ExplorationReport run_exploration(Simulator& sim, double threshold,
                                  const ExplorationConfig& config) {
  ExplorationReport report;
  const Aabb volume = config.volume.value_or(sim.ground_truth().world_box());
  ExplorationMap map(sim.ground_truth(), config.frustum, volume);

  sim.set_observation_hook([&](const Observation& obs) {
    map.mark_viewed_from_depth(obs.camera_pose, obs.true_depth, sim.config().sensor.camera);
    report.coverage_series.emplace_back(sim.state().time, map.coverage());
  });
  struct Unhook {
    Simulator& sim;
    ~Unhook() { sim.set_observation_hook({}); }
  } unhook{sim};

  const auto covered = [&] { return map.coverage() >= threshold; };

  // Initial in-place scan.
  sim.perceive();
  const double yaw0 = sim.state().yaw;
  for (int s = 1; s <= config.scan_segments && !covered(); ++s)
    sim.rotate_to(wrap_angle(yaw0 + s * 2.0 * M_PI / config.scan_segments));

  int strikes = 0;
  std::uint64_t round_seed = config.seed;
  while (!covered() && report.rounds < config.max_rounds && !report.collided) {
    ++report.rounds;
    const double coverage_before = map.coverage();

    // Reachability filter: candidates must lie in a cuboid connected to the
    // vehicle's own cuboid in a fresh decomposition of the planning grid.
    const CuboidGraph graph =
        decompose(sim.online_inflated(), sim.config().plan.decompose);
    const std::vector<int> at_start = graph.covering_cuboids(sim.state().position);
    std::vector<char> reachable;
    if (!at_start.empty()) {
      reachable.assign(graph.vertices().size(), 0);
      std::deque<int> queue(at_start.begin(), at_start.end());
      for (int c : at_start) reachable[c] = 1;
      while (!queue.empty()) {
        const int c = queue.front();
        queue.pop_front();
        for (int n : graph.adjacency()[c])
          if (!reachable[n]) {
            reachable[n] = 1;
            queue.push_back(n);
          }
      }
    }
    const OccupancyGrid& belief = sim.online();
    const std::function<bool(const Vec3&)> acceptable = [&](const Vec3& p) {
      // Goals must sit in voxels that rays have actually carved out as
      // free: flying into never-observed space risks arriving inside an
      // obstacle the sensor has had no chance to report.
      const auto idx = belief.world_to_index(p);
      if (!idx || belief.at(*idx) != Cell::Free) return false;
      if (reachable.empty()) return true;
      for (int c : graph.covering_cuboids(p))
        if (reachable[c]) return true;
      return false;
    };

    const NbvResult nbv =
        select_nbv(map, sim.online(), round_seed++, config.scoring, acceptable);
    if (!nbv.found) {
      if (++strikes >= config.max_strikes) {
        report.termination = "strikes";
        break;
      }
      continue;
    }

    report.goals.push_back(nbv.position);
    const Simulator::FlyResult flight = sim.run_to_goal(nbv.position, covered);
    if (flight.collided) {
      report.collided = true;
      report.termination = "collision";
      break;
    }
    if (covered()) break;
    if (flight.reached) sim.rotate_to(nbv.yaw);

    if (map.coverage() > coverage_before + 1e-9)
      strikes = 0;
    else if (++strikes >= config.max_strikes) {
      report.termination = "strikes";
      break;
    }
  }

  if (covered())
    report.termination = "threshold";
  else if (report.termination.empty())
    report.termination = "rounds";

  report.final_coverage = map.coverage();
  report.sim_time_s = sim.state().time;
  report.path_length = sim.path_length();
  report.replans = sim.replans();
  report.stops = sim.stops();

  if (!config.report_path.empty()) {
    nlohmann::json j;
    j["threshold"] = threshold;
    j["seed"] = config.seed;
    j["termination"] = report.termination;
    j["collided"] = report.collided;
    j["final_coverage"] = report.final_coverage;
    j["sim_time_s"] = report.sim_time_s;
    j["path_length"] = report.path_length;
    j["replans"] = report.replans;
    j["stops"] = report.stops;
    j["rounds"] = report.rounds;
    auto& series = j["coverage_series"] = nlohmann::json::array();
    for (const auto& [t, c] : report.coverage_series) series.push_back({t, c});
    auto& goals = j["goals"] = nlohmann::json::array();
    for (const Vec3& g : report.goals) goals.push_back({g.x(), g.y(), g.z()});
    std::ofstream out(config.report_path);
    out << j.dump(2) << "\n";
  }
  return report;
}

}  // namespace voxnav
