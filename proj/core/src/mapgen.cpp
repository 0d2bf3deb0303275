#include "voxnav/mapgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace voxnav {
namespace {

double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }
double lerp(double a, double b, double t) { return a + t * (b - a); }

double grad2(int hash, double x, double y) {
  switch (hash & 7) {
    case 0: return x + y;
    case 1: return x - y;
    case 2: return -x + y;
    case 3: return -x - y;
    case 4: return x;
    case 5: return -x;
    case 6: return y;
    default: return -y;
  }
}

double grad3(int hash, double x, double y, double z) {
  const int h = hash & 15;
  const double u = h < 8 ? x : y;
  const double v = h < 4 ? y : (h == 12 || h == 14 ? x : z);
  return ((h & 1) ? -u : u) + ((h & 2) ? -v : v);
}

}  // namespace

PerlinNoise::PerlinNoise(std::uint64_t seed) {
  std::array<int, 256> base;
  std::iota(base.begin(), base.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(base.begin(), base.end(), rng);
  for (int i = 0; i < 512; ++i) perm_[i] = base[i & 255];
}

double PerlinNoise::sample2(double x, double y) const {
  const int xi = static_cast<int>(std::floor(x)) & 255;
  const int yi = static_cast<int>(std::floor(y)) & 255;
  const double xf = x - std::floor(x);
  const double yf = y - std::floor(y);
  const double u = fade(xf);
  const double v = fade(yf);
  const int aa = perm_[perm_[xi] + yi];
  const int ab = perm_[perm_[xi] + yi + 1];
  const int ba = perm_[perm_[xi + 1] + yi];
  const int bb = perm_[perm_[xi + 1] + yi + 1];
  return lerp(lerp(grad2(aa, xf, yf), grad2(ba, xf - 1, yf), u),
              lerp(grad2(ab, xf, yf - 1), grad2(bb, xf - 1, yf - 1), u), v);
}

double PerlinNoise::sample3(double x, double y, double z) const {
  const int xi = static_cast<int>(std::floor(x)) & 255;
  const int yi = static_cast<int>(std::floor(y)) & 255;
  const int zi = static_cast<int>(std::floor(z)) & 255;
  const double xf = x - std::floor(x);
  const double yf = y - std::floor(y);
  const double zf = z - std::floor(z);
  const double u = fade(xf);
  const double v = fade(yf);
  const double w = fade(zf);
  const int a = perm_[xi] + yi;
  const int b = perm_[xi + 1] + yi;
  const int aa = perm_[a] + zi;
  const int ab = perm_[a + 1] + zi;
  const int ba = perm_[b] + zi;
  const int bb = perm_[b + 1] + zi;
  const double x1 = lerp(grad3(perm_[aa], xf, yf, zf), grad3(perm_[ba], xf - 1, yf, zf), u);
  const double x2 =
      lerp(grad3(perm_[ab], xf, yf - 1, zf), grad3(perm_[bb], xf - 1, yf - 1, zf), u);
  const double y1 = lerp(x1, x2, v);
  const double x3 =
      lerp(grad3(perm_[aa + 1], xf, yf, zf - 1), grad3(perm_[ba + 1], xf - 1, yf, zf - 1), u);
  const double x4 = lerp(grad3(perm_[ab + 1], xf, yf - 1, zf - 1),
                         grad3(perm_[bb + 1], xf - 1, yf - 1, zf - 1), u);
  const double y2 = lerp(x3, x4, v);
  return lerp(y1, y2, w);
}

namespace {

void add_boundary_shell(OccupancyGrid& grid) {
  const Vec3i dims = grid.dims();
  for (int k = 0; k < dims[2]; ++k)
    for (int j = 0; j < dims[1]; ++j)
      for (int i = 0; i < dims[0]; ++i)
        if (i == 0 || j == 0 || k == 0 || i == dims[0] - 1 || j == dims[1] - 1 ||
            k == dims[2] - 1)
          grid.set(Vec3i(i, j, k), Cell::Occupied);
}

}  // namespace

OccupancyGrid perlin_pillar_map(const PerlinMapOptions& options) {
  OccupancyGrid grid(options.origin, options.resolution, options.dims, Cell::Free);
  PerlinNoise noise(options.seed);
  const Vec3i dims = options.dims;
  const double scale = std::max(options.feature_size, 1e-6);

  // Threshold the noise at the quantile matching the requested density so
  // the obstacle fraction is stable across seeds.
  std::vector<double> values(static_cast<std::size_t>(dims[0]) * dims[1]);
  for (int j = 0; j < dims[1]; ++j)
    for (int i = 0; i < dims[0]; ++i)
      values[static_cast<std::size_t>(j) * dims[0] + i] =
          noise.sample2(i / scale + 0.37, j / scale + 0.59);
  std::vector<double> sorted = values;
  const double fraction = std::clamp(options.occupancy_fraction, 0.0, 0.999);
  const std::size_t cut =
      static_cast<std::size_t>((1.0 - fraction) * (sorted.size() - 1));
  std::nth_element(sorted.begin(), sorted.begin() + cut, sorted.end());
  const double threshold = sorted[cut];

  for (int j = 0; j < dims[1]; ++j)
    for (int i = 0; i < dims[0]; ++i)
      if (values[static_cast<std::size_t>(j) * dims[0] + i] >= threshold)
        for (int k = 0; k < dims[2]; ++k) grid.set(Vec3i(i, j, k), Cell::Occupied);

  if (options.boundary_shell) add_boundary_shell(grid);
  return grid;
}

OccupancyGrid scatter_box_map(const ScatterMapOptions& options) {
  OccupancyGrid grid(options.origin, options.resolution, options.dims, Cell::Free);
  std::mt19937_64 rng(options.seed);
  const Vec3i dims = options.dims;
  std::uniform_int_distribution<int> size_dist(1, std::max(options.max_box_voxels, 1));
  for (int b = 0; b < options.box_count; ++b) {
    Vec3i size, lo;
    for (int axis = 0; axis < 3; ++axis) {
      size[axis] = std::min(size_dist(rng), dims[axis]);
      std::uniform_int_distribution<int> lo_dist(0, dims[axis] - size[axis]);
      lo[axis] = lo_dist(rng);
    }
    for (int k = lo[2]; k < lo[2] + size[2]; ++k)
      for (int j = lo[1]; j < lo[1] + size[1]; ++j)
        for (int i = lo[0]; i < lo[0] + size[0]; ++i)
          grid.set(Vec3i(i, j, k), Cell::Occupied);
  }
  if (options.boundary_shell) add_boundary_shell(grid);
  return grid;
}

void carve_sphere(OccupancyGrid& grid, const Vec3& center, double radius) {
  const double r2 = radius * radius;
  const Vec3i dims = grid.dims();
  for (int k = 0; k < dims[2]; ++k)
    for (int j = 0; j < dims[1]; ++j)
      for (int i = 0; i < dims[0]; ++i) {
        const Vec3i idx(i, j, k);
        if ((grid.voxel_center(idx) - center).squaredNorm() <= r2)
          grid.set(idx, Cell::Free);
      }
}

namespace {

// Fills [lo, hi) in world meters with the given cell.
void fill_box(OccupancyGrid& grid, const Vec3& lo, const Vec3& hi, Cell value) {
  const Vec3i dims = grid.dims();
  for (int k = 0; k < dims[2]; ++k)
    for (int j = 0; j < dims[1]; ++j)
      for (int i = 0; i < dims[0]; ++i) {
        const Vec3i idx(i, j, k);
        const Vec3 c = grid.voxel_center(idx);
        if (c[0] >= lo[0] && c[0] < hi[0] && c[1] >= lo[1] && c[1] < hi[1] &&
            c[2] >= lo[2] && c[2] < hi[2])
          grid.set(idx, value);
      }
}

}  // namespace

OccupancyGrid hallway_map() {
  OccupancyGrid grid(Vec3::Zero(), 0.25, Vec3i(80, 16, 12), Cell::Free);
  add_boundary_shell(grid);
  return grid;
}

OccupancyGrid lshape_corridor_map() {
  // 13 x 13 x 3 m block, everything occupied except two 3 m wide arms.
  OccupancyGrid grid(Vec3::Zero(), 0.25, Vec3i(52, 52, 12), Cell::Occupied);
  fill_box(grid, Vec3(0.25, 0.25, 0.25), Vec3(12.75, 3.25, 2.75), Cell::Free);  // +x arm
  fill_box(grid, Vec3(9.75, 0.25, 0.25), Vec3(12.75, 12.75, 2.75), Cell::Free); // +y arm
  return grid;
}

OccupancyGrid dead_end_map() {
  OccupancyGrid grid(Vec3::Zero(), 0.25, Vec3i(80, 40, 16), Cell::Free);
  add_boundary_shell(grid);
  // Pocket: side walls from the opening at x = 9 to the back wall at x = 16,
  // full height, with the cavity between y = 4.25 and y = 5.75.
  fill_box(grid, Vec3(9.0, 4.0, 0.0), Vec3(16.0, 4.25, 4.0), Cell::Occupied);
  fill_box(grid, Vec3(9.0, 5.75, 0.0), Vec3(16.0, 6.0, 4.0), Cell::Occupied);
  fill_box(grid, Vec3(15.75, 4.0, 0.0), Vec3(16.0, 6.0, 4.0), Cell::Occupied);
  return grid;
}

OccupancyGrid sealed_room_map() {
  OccupancyGrid grid(Vec3::Zero(), 0.25, Vec3i(40, 40, 12), Cell::Free);
  add_boundary_shell(grid);
  // Solid walls, floor and ceiling of the inner room; the cavity spans
  // (2.25..7.75) x (2.25..7.75) x (0.25..2.75) with no opening.
  fill_box(grid, Vec3(2.0, 2.0, 0.0), Vec3(8.0, 8.0, 3.0), Cell::Occupied);
  fill_box(grid, Vec3(2.25, 2.25, 0.25), Vec3(7.75, 7.75, 2.75), Cell::Free);
  return grid;
}

}  // namespace voxnav
