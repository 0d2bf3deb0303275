#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "voxnav/occupancy.hpp"

namespace voxnav {

// Axis-aligned obstacle-free box of voxels, inclusive on both ends.
struct Cuboid {
  Vec3i lo;
  Vec3i hi;
  int layer = 0;
};

// Horizontal bands that partition the grid's z range. Each band is
// decomposed independently and cuboids never cross a band boundary.
// Empty boundary list = one band spanning the whole grid.
struct LayerSpec {
  std::vector<double> z_boundaries;  // world z, strictly increasing
};

struct DecomposeOptions {
  LayerSpec layers;
  // Unknown voxels count as traversable (optimistic planning). Set false to
  // treat them as obstacles.
  bool unknown_traversable = true;
};

// Vertices are obstacle-free cuboids covering every traversable voxel;
// edges join every pair of cuboids whose closed world boxes intersect
// (shared faces and corners count), which is exactly the pairs a continuous
// path can cross between without leaving free space.
class CuboidGraph {
 public:
  CuboidGraph() = default;
  CuboidGraph(const OccupancyGrid& grid, std::vector<Cuboid> vertices,
              std::vector<std::int32_t> first_coverer);

  const std::vector<Cuboid>& vertices() const { return vertices_; }
  const std::vector<std::pair<int, int>>& edges() const { return edges_; }
  const std::vector<Aabb>& edge_boxes() const { return edge_boxes_; }
  const std::vector<std::vector<int>>& adjacency() const { return adjacency_; }

  const Aabb& world_box_of(int vertex) const { return world_boxes_[vertex]; }
  std::size_t vertex_count() const { return vertices_.size(); }

  // All cuboids whose closed world box contains p, in index order.
  std::vector<int> covering_cuboids(const Vec3& p) const;
  // Smallest-index covering cuboid, or empty when p is uncovered.
  std::optional<int> smallest_covering_cuboid(const Vec3& p) const;

  // Index of the first cuboid that covered a voxel (-1 for obstacles).
  const std::vector<std::int32_t>& first_coverer() const { return first_coverer_; }

  const Vec3& grid_origin() const { return origin_; }
  double grid_resolution() const { return resolution_; }
  const Vec3i& grid_dims() const { return dims_; }
  double grid_diagonal() const { return (dims_.cast<double>() * resolution_).norm(); }

  Aabb cuboid_world_box(const Cuboid& c) const {
    Vec3 lo = origin_ + c.lo.cast<double>() * resolution_;
    Vec3 hi = origin_ + (c.hi.cast<double>() + Vec3::Ones()) * resolution_;
    return {lo, hi};
  }

 private:
  std::vector<Cuboid> vertices_;
  std::vector<Aabb> world_boxes_;
  std::vector<std::pair<int, int>> edges_;
  std::vector<Aabb> edge_boxes_;
  std::vector<std::vector<int>> adjacency_;
  std::vector<std::int32_t> first_coverer_;
  Vec3 origin_ = Vec3::Zero();
  double resolution_ = 1.0;
  Vec3i dims_ = Vec3i::Ones();
};

// Greedy cuboid cover: scan voxels in (k, j, i)-lexicographic order, seed a
// cuboid at each uncovered traversable voxel, extend it to the maximal free
// z-run inside the seed's band, then grow whole faces one voxel at a time in
// the fixed order -x, +x, -y, +y until every direction hits an obstacle or a
// boundary. Cuboids may overlap already-covered space; only obstacles and
// bounds stop growth.
CuboidGraph decompose(const OccupancyGrid& grid, const DecomposeOptions& options = {});

// Serializes vertices (world boxes + layers) and the edge list.
std::string graph_to_json(const CuboidGraph& graph);

}  // namespace voxnav
