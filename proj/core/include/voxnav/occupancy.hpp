#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "voxnav/geometry.hpp"

namespace voxnav {

enum class Cell : std::uint8_t { Free = 0, Occupied = 1, Unknown = 2 };

class MapIoError : public std::runtime_error {
 public:
  enum class Kind { Unreadable, MalformedHeader, DimensionMismatch };

  MapIoError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Uniform voxel grid over an axis-aligned world box. Cells are stored
// row-major with x fastest. Grids are value types: mutating operations
// (inflate, integrate_pointcloud) return new snapshots, so a published
// const grid is safe to share across threads.
class OccupancyGrid {
 public:
  OccupancyGrid() = default;
  OccupancyGrid(const Vec3& origin, double resolution, const Vec3i& dims,
                Cell fill = Cell::Unknown)
      : origin_(origin), resolution_(resolution), dims_(dims),
        cells_(static_cast<std::size_t>(dims.x()) * dims.y() * dims.z(), fill) {
    if (resolution <= 0.0 || dims.minCoeff() <= 0)
      throw std::invalid_argument("occupancy grid needs positive resolution and dims");
  }

  const Vec3& origin() const { return origin_; }
  double resolution() const { return resolution_; }
  const Vec3i& dims() const { return dims_; }
  std::size_t size() const { return cells_.size(); }

  bool in_bounds(int i, int j, int k) const {
    return i >= 0 && j >= 0 && k >= 0 &&
           i < dims_.x() && j < dims_.y() && k < dims_.z();
  }
  bool in_bounds(const Vec3i& v) const { return in_bounds(v.x(), v.y(), v.z()); }

  std::size_t linear_index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(dims_.x()) *
               (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims_.y()) * k);
  }

  Cell at(int i, int j, int k) const { return cells_[linear_index(i, j, k)]; }
  Cell at(const Vec3i& v) const { return at(v.x(), v.y(), v.z()); }
  void set(int i, int j, int k, Cell c) { cells_[linear_index(i, j, k)] = c; }
  void set(const Vec3i& v, Cell c) { set(v.x(), v.y(), v.z(), c); }

  const std::vector<Cell>& cells() const { return cells_; }
  std::vector<Cell>& cells() { return cells_; }

  // Voxel index containing p, or empty when p is outside the grid box.
  std::optional<Vec3i> world_to_index(const Vec3& p) const {
    Vec3 rel = (p - origin_) / resolution_;
    Vec3i idx;
    for (int a = 0; a < 3; ++a) {
      double f = std::floor(rel[a]);
      if (f < 0.0 || f >= static_cast<double>(dims_[a])) return std::nullopt;
      idx[a] = static_cast<int>(f);
    }
    return idx;
  }

  Vec3 voxel_center(const Vec3i& v) const {
    return origin_ + (v.cast<double>() + Vec3::Constant(0.5)) * resolution_;
  }
  // Closed world box of one voxel.
  Aabb voxel_box(const Vec3i& v) const {
    Vec3 lo = origin_ + v.cast<double>() * resolution_;
    return {lo, lo + Vec3::Constant(resolution_)};
  }
  Aabb world_box() const {
    return {origin_, origin_ + dims_.cast<double>() * resolution_};
  }
  double world_diagonal() const {
    return (dims_.cast<double>() * resolution_).norm();
  }

  // Convenience for planning predicates: Unknown is traversable by default.
  bool occupied_at(const Vec3& p) const {
    auto idx = world_to_index(p);
    return idx && at(*idx) == Cell::Occupied;
  }

 private:
  Vec3 origin_ = Vec3::Zero();
  double resolution_ = 1.0;
  Vec3i dims_ = Vec3i::Ones();
  std::vector<Cell> cells_;
};

// Visits the voxels a->b crosses, in order, clipped to the grid. The visitor
// returns false to stop early. Uses Amanatides-Woo stepping; segments that
// miss the grid visit nothing.
template <typename Visitor>
void for_each_voxel_on_segment(const OccupancyGrid& grid, const Vec3& a,
                               const Vec3& b, Visitor&& visit) {
  const Vec3 d = b - a;
  const Aabb box = grid.world_box();

  // Clip parameter range [t0, t1] of a + t*d against the world box.
  double t0 = 0.0, t1 = 1.0;
  for (int ax = 0; ax < 3; ++ax) {
    if (d[ax] == 0.0) {
      if (a[ax] < box.lower[ax] || a[ax] > box.upper[ax]) return;
      continue;
    }
    double lo = (box.lower[ax] - a[ax]) / d[ax];
    double hi = (box.upper[ax] - a[ax]) / d[ax];
    if (lo > hi) std::swap(lo, hi);
    t0 = std::max(t0, lo);
    t1 = std::min(t1, hi);
    if (t0 > t1) return;
  }

  const Vec3 start = a + t0 * d;
  Vec3i idx;
  for (int ax = 0; ax < 3; ++ax) {
    double f = std::floor((start[ax] - grid.origin()[ax]) / grid.resolution());
    idx[ax] = std::clamp(static_cast<int>(f), 0, grid.dims()[ax] - 1);
  }

  Vec3i step;
  Vec3 t_max, t_delta;
  for (int ax = 0; ax < 3; ++ax) {
    if (d[ax] > 0.0) {
      step[ax] = 1;
      double boundary = grid.origin()[ax] + (idx[ax] + 1) * grid.resolution();
      t_max[ax] = (boundary - a[ax]) / d[ax];
      t_delta[ax] = grid.resolution() / d[ax];
    } else if (d[ax] < 0.0) {
      step[ax] = -1;
      double boundary = grid.origin()[ax] + idx[ax] * grid.resolution();
      t_max[ax] = (boundary - a[ax]) / d[ax];
      t_delta[ax] = -grid.resolution() / d[ax];
    } else {
      step[ax] = 0;
      t_max[ax] = std::numeric_limits<double>::infinity();
      t_delta[ax] = std::numeric_limits<double>::infinity();
    }
  }

  while (true) {
    if (!visit(idx)) return;
    int ax = 0;
    if (t_max[1] < t_max[ax]) ax = 1;
    if (t_max[2] < t_max[ax]) ax = 2;
    if (t_max[ax] > t1) return;  // next crossing is past the segment end
    idx[ax] += step[ax];
    if (idx[ax] < 0 || idx[ax] >= grid.dims()[ax]) return;
    t_max[ax] += t_delta[ax];
  }
}

// True when an Occupied voxel lies on the open segment between a and b.
// The voxel containing b itself is not counted (so a wall surface voxel is
// still "visible" from a free voxel looking at it).
bool segment_blocked(const OccupancyGrid& grid, const Vec3& a, const Vec3& b);

// Returns a copy where every voxel whose center lies within `radius` of an
// Occupied voxel center is Occupied. Free/Unknown voxels outside that
// distance are unchanged.
OccupancyGrid inflate(const OccupancyGrid& grid, double radius);

// Integrates one depth frame: for every point, voxels crossed by the
// sensor->point ray become Free unless already Occupied, and the point's own
// voxel becomes Occupied. Points outside the grid carve free space up to the
// boundary without marking an endpoint. Returns a new snapshot. The optional
// out-lists receive voxels that changed state (in application order), for
// callers maintaining derived grids incrementally.
OccupancyGrid integrate_pointcloud(const OccupancyGrid& grid, const Vec3& sensor_origin,
                                   const std::vector<Vec3>& points,
                                   std::vector<Vec3i>* became_occupied = nullptr,
                                   std::vector<Vec3i>* became_free = nullptr);

// Binary map file ("OGRD" magic, version, origin, resolution, dims, payload).
void save_map(const OccupancyGrid& grid, const std::string& path);
OccupancyGrid load_map(const std::string& path);

}  // namespace voxnav
