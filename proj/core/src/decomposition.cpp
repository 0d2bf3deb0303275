#include "voxnav/decomposition.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

namespace voxnav {

CuboidGraph::CuboidGraph(const OccupancyGrid& grid, std::vector<Cuboid> vertices,
                         std::vector<std::int32_t> first_coverer)
    : vertices_(std::move(vertices)),
      first_coverer_(std::move(first_coverer)),
      origin_(grid.origin()),
      resolution_(grid.resolution()),
      dims_(grid.dims()) {
  world_boxes_.reserve(vertices_.size());
  for (const Cuboid& c : vertices_) world_boxes_.push_back(cuboid_world_box(c));

  // Closed-box intersection in voxel index space is exact: boxes touch or
  // overlap iff lo <= other.hi + 1 on every axis, both ways. A plane sweep
  // along x prunes the pair tests: visiting cuboids by ascending lo.x, a
  // later cuboid b touches an earlier one a on x iff b.lo.x <= a.hi.x + 1
  // (the reverse inequality holds for free). Pairs are sorted afterwards so
  // the edge list is identical to the one a nested lexicographic loop
  // would produce.
  const int n = static_cast<int>(vertices_.size());
  adjacency_.assign(n, {});
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (vertices_[a].lo.x() != vertices_[b].lo.x())
      return vertices_[a].lo.x() < vertices_[b].lo.x();
    return a < b;
  });
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < n; ++i) {
    const Cuboid& ca = vertices_[order[i]];
    for (int j = i + 1; j < n; ++j) {
      const Cuboid& cb = vertices_[order[j]];
      if (cb.lo.x() > ca.hi.x() + 1) break;
      if (cb.lo.y() > ca.hi.y() + 1 || ca.lo.y() > cb.hi.y() + 1) continue;
      if (cb.lo.z() > ca.hi.z() + 1 || ca.lo.z() > cb.hi.z() + 1) continue;
      pairs.emplace_back(std::min(order[i], order[j]), std::max(order[i], order[j]));
    }
  }
  std::sort(pairs.begin(), pairs.end());
  edges_.reserve(pairs.size());
  edge_boxes_.reserve(pairs.size());
  for (const auto& [a, b] : pairs) {
    edges_.emplace_back(a, b);
    edge_boxes_.push_back(world_boxes_[a].intersection(world_boxes_[b]));
    adjacency_[a].push_back(b);
    adjacency_[b].push_back(a);
  }
}

std::vector<int> CuboidGraph::covering_cuboids(const Vec3& p) const {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(vertices_.size()); ++i)
    if (world_boxes_[i].contains(p)) out.push_back(i);
  return out;
}

std::optional<int> CuboidGraph::smallest_covering_cuboid(const Vec3& p) const {
  for (int i = 0; i < static_cast<int>(vertices_.size()); ++i)
    if (world_boxes_[i].contains(p)) return i;
  return std::nullopt;
}

namespace {

// Band index per z row, from world-space boundaries.
std::vector<int> band_of_row(const OccupancyGrid& grid, const LayerSpec& layers) {
  std::vector<int> band(grid.dims().z(), 0);
  for (std::size_t b = 0; b + 1 < layers.z_boundaries.size(); ++b)
    if (layers.z_boundaries[b + 1] <= layers.z_boundaries[b])
      throw std::invalid_argument("layer boundaries must be strictly increasing");
  for (int k = 0; k < grid.dims().z(); ++k) {
    double zc = grid.origin().z() + (k + 0.5) * grid.resolution();
    int id = 0;
    for (double boundary : layers.z_boundaries)
      if (zc >= boundary) ++id;
    band[k] = id;
  }
  return band;
}

}  // namespace

CuboidGraph decompose(const OccupancyGrid& grid, const DecomposeOptions& options) {
  const Vec3i dims = grid.dims();
  const auto band = band_of_row(grid, options.layers);

  // Band z-extents [band_lo, band_hi] per band id.
  int n_bands = band.empty() ? 1 : band.back() + 1;
  std::vector<int> band_lo(n_bands, dims.z()), band_hi(n_bands, -1);
  for (int k = 0; k < dims.z(); ++k) {
    band_lo[band[k]] = std::min(band_lo[band[k]], k);
    band_hi[band[k]] = std::max(band_hi[band[k]], k);
  }

  auto blocked = [&](int i, int j, int k) {
    Cell c = grid.at(i, j, k);
    return c == Cell::Occupied ||
           (!options.unknown_traversable && c == Cell::Unknown);
  };

  std::vector<std::uint8_t> covered(grid.size(), 0);
  std::vector<std::int32_t> first_coverer(grid.size(), -1);
  std::vector<Cuboid> cuboids;

  // True when the one-voxel slab [lo, hi] is inside the grid and free.
  auto slab_free = [&](const Vec3i& lo, const Vec3i& hi) {
    if (lo.minCoeff() < 0 || hi.x() >= dims.x() || hi.y() >= dims.y() ||
        hi.z() >= dims.z())
      return false;
    for (int k = lo.z(); k <= hi.z(); ++k)
      for (int j = lo.y(); j <= hi.y(); ++j)
        for (int i = lo.x(); i <= hi.x(); ++i)
          if (blocked(i, j, k)) return false;
    return true;
  };

  for (int k = 0; k < dims.z(); ++k) {
    for (int j = 0; j < dims.y(); ++j) {
      for (int i = 0; i < dims.x(); ++i) {
        if (blocked(i, j, k) || covered[grid.linear_index(i, j, k)]) continue;

        // Seed cuboid: maximal free z-run through (i, j, k) inside the band.
        Cuboid c;
        c.layer = band[k];
        int k0 = k, k1 = k;
        while (k0 - 1 >= band_lo[c.layer] && !blocked(i, j, k0 - 1)) --k0;
        while (k1 + 1 <= band_hi[c.layer] && !blocked(i, j, k1 + 1)) ++k1;
        c.lo = Vec3i(i, j, k0);
        c.hi = Vec3i(i, j, k1);

        // Face growth, one voxel slab per step, fixed order -x, +x, -y, +y.
        // A direction that fails once stays blocked: later growth only makes
        // its slab larger.
        bool open[4] = {true, true, true, true};
        bool any = true;
        while (any) {
          any = false;
          for (int dir = 0; dir < 4; ++dir) {
            if (!open[dir]) continue;
            Vec3i slab_lo = c.lo, slab_hi = c.hi;
            switch (dir) {
              case 0: slab_lo.x() = slab_hi.x() = c.lo.x() - 1; break;
              case 1: slab_lo.x() = slab_hi.x() = c.hi.x() + 1; break;
              case 2: slab_lo.y() = slab_hi.y() = c.lo.y() - 1; break;
              case 3: slab_lo.y() = slab_hi.y() = c.hi.y() + 1; break;
            }
            if (!slab_free(slab_lo, slab_hi)) {
              open[dir] = false;
              continue;
            }
            c.lo = c.lo.cwiseMin(slab_lo);
            c.hi = c.hi.cwiseMax(slab_hi);
            any = true;
          }
        }

        const auto id = static_cast<std::int32_t>(cuboids.size());
        for (int kk = c.lo.z(); kk <= c.hi.z(); ++kk)
          for (int jj = c.lo.y(); jj <= c.hi.y(); ++jj)
            for (int ii = c.lo.x(); ii <= c.hi.x(); ++ii) {
              auto idx = grid.linear_index(ii, jj, kk);
              covered[idx] = 1;
              if (first_coverer[idx] < 0) first_coverer[idx] = id;
            }
        cuboids.push_back(c);
      }
    }
  }

  return CuboidGraph(grid, std::move(cuboids), std::move(first_coverer));
}

std::string graph_to_json(const CuboidGraph& graph) {
  nlohmann::json j;
  j["origin"] = {graph.grid_origin().x(), graph.grid_origin().y(), graph.grid_origin().z()};
  j["resolution"] = graph.grid_resolution();
  j["dims"] = {graph.grid_dims().x(), graph.grid_dims().y(), graph.grid_dims().z()};
  j["vertices"] = nlohmann::json::array();
  for (std::size_t i = 0; i < graph.vertex_count(); ++i) {
    const Cuboid& c = graph.vertices()[i];
    const Aabb& box = graph.world_box_of(static_cast<int>(i));
    j["vertices"].push_back({
        {"lo", {box.lower.x(), box.lower.y(), box.lower.z()}},
        {"hi", {box.upper.x(), box.upper.y(), box.upper.z()}},
        {"voxel_lo", {c.lo.x(), c.lo.y(), c.lo.z()}},
        {"voxel_hi", {c.hi.x(), c.hi.y(), c.hi.z()}},
        {"layer", c.layer},
    });
  }
  j["edges"] = nlohmann::json::array();
  for (const auto& [a, b] : graph.edges()) j["edges"].push_back({a, b});
  return j.dump(2);
}

}  // namespace voxnav
