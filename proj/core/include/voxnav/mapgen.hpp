#pragma once

#include <array>
#include <cstdint>

#include "voxnav/occupancy.hpp"

namespace voxnav {

// Classic permutation-table gradient noise, fully determined by the seed.
class PerlinNoise {
 public:
  explicit PerlinNoise(std::uint64_t seed);
  // Smooth noise, roughly in [-1, 1], with unit-length feature cells.
  double sample2(double x, double y) const;
  double sample3(double x, double y, double z) const;

 private:
  std::array<int, 512> perm_;
};

struct PerlinMapOptions {
  Vec3 origin = Vec3::Zero();
  double resolution = 0.25;
  Vec3i dims = Vec3i(80, 80, 16);
  std::uint64_t seed = 0;
  double occupancy_fraction = 0.35;  // approximate obstacle density in [0, 1)
  double feature_size = 12.0;        // pillar footprint scale, in voxels
  bool boundary_shell = true;        // one-voxel occupied outer shell
};

// Pillar world: 2D gradient noise thresholded at the requested density and
// extruded over the full height. Full-height obstacles keep every free
// column observable from flight altitude, which suits exploration studies.
OccupancyGrid perlin_pillar_map(const PerlinMapOptions& options);

struct ScatterMapOptions {
  Vec3 origin = Vec3::Zero();
  double resolution = 0.25;
  Vec3i dims = Vec3i(48, 48, 24);
  std::uint64_t seed = 0;
  int box_count = 12;
  int max_box_voxels = 10;  // per-axis upper bound on obstacle extent
  bool boundary_shell = false;
};

// Random axis-aligned occupied boxes; the workhorse for randomized
// decomposition and routing tests.
OccupancyGrid scatter_box_map(const ScatterMapOptions& options);

// Marks every voxel whose center lies within radius of center as Free.
void carve_sphere(OccupancyGrid& grid, const Vec3& center, double radius);

// Fixture worlds (ground-truth grids: Free/Occupied only, 0.25 m voxels).

// Straight 20 x 4 x 3 m corridor along +x with an occupied outer shell.
OccupancyGrid hallway_map();

// Two 3 m wide arms: along +x, then a turn along +y.
OccupancyGrid lshape_corridor_map();

// 20 x 10 x 4 m arena containing a pocket that opens toward the start side
// at x = 9 and dead-ends at x = 16: the straight route to a goal behind the
// back wall runs into the pocket, and escape requires backing out and going
// around. Sized so a short-range depth camera cannot see the back wall from
// the pocket mouth.
OccupancyGrid dead_end_map();

// 10 x 10 x 3 m arena with a fully sealed inner room [2..8] x [2..8]; a
// vehicle inside can never observe the outside, so exploration gain there
// must saturate.
OccupancyGrid sealed_room_map();

}  // namespace voxnav
