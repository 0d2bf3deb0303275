#include "voxnav/occupancy.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

namespace voxnav {

bool segment_blocked(const OccupancyGrid& grid, const Vec3& a, const Vec3& b) {
  auto end_idx = grid.world_to_index(b);
  bool blocked = false;
  for_each_voxel_on_segment(grid, a, b, [&](const Vec3i& v) {
    if (end_idx && v == *end_idx) return false;
    if (grid.at(v) == Cell::Occupied) {
      blocked = true;
      return false;
    }
    return true;
  });
  return blocked;
}

OccupancyGrid inflate(const OccupancyGrid& grid, double radius) {
  if (radius < 0.0) throw std::invalid_argument("inflate: negative radius");
  const double res = grid.resolution();
  const int reach = static_cast<int>(std::floor(radius / res + 1e-9));

  // Offsets whose center-to-center distance is within the radius. Computed
  // once so the sweep below is a plain stencil stamp.
  std::vector<Vec3i> stencil;
  const double r2 = radius * radius + 1e-9 * res * res;
  for (int dk = -reach; dk <= reach; ++dk)
    for (int dj = -reach; dj <= reach; ++dj)
      for (int di = -reach; di <= reach; ++di) {
        double d2 = (double(di) * di + double(dj) * dj + double(dk) * dk) * res * res;
        if (d2 <= r2) stencil.emplace_back(di, dj, dk);
      }

  OccupancyGrid out = grid;
  const Vec3i dims = grid.dims();
  for (int k = 0; k < dims.z(); ++k)
    for (int j = 0; j < dims.y(); ++j)
      for (int i = 0; i < dims.x(); ++i) {
        if (grid.at(i, j, k) != Cell::Occupied) continue;
        for (const Vec3i& d : stencil) {
          int ii = i + d.x(), jj = j + d.y(), kk = k + d.z();
          if (out.in_bounds(ii, jj, kk)) out.set(ii, jj, kk, Cell::Occupied);
        }
      }
  return out;
}

OccupancyGrid integrate_pointcloud(const OccupancyGrid& grid, const Vec3& sensor_origin,
                                   const std::vector<Vec3>& points,
                                   std::vector<Vec3i>* became_occupied,
                                   std::vector<Vec3i>* became_free) {
  OccupancyGrid out = grid;
  for (const Vec3& p : points) {
    Vec3 dir = p - sensor_origin;
    double len = dir.norm();

    // Points landing exactly on a voxel face are ambiguous under floor();
    // nudge along the ray so the endpoint voxel is the one the ray enters.
    std::optional<Vec3i> end_idx;
    if (len > 0.0) {
      end_idx = out.world_to_index(p + dir * (1e-9 * out.resolution() / len));
    } else {
      end_idx = out.world_to_index(p);
    }

    for_each_voxel_on_segment(out, sensor_origin, p, [&](const Vec3i& v) {
      if (end_idx && v == *end_idx) return false;  // endpoint handled below
      if (out.at(v) != Cell::Occupied) {
        if (became_free && out.at(v) != Cell::Free) became_free->push_back(v);
        out.set(v, Cell::Free);
      }
      return true;
    });
    if (end_idx) {
      if (became_occupied && out.at(*end_idx) != Cell::Occupied)
        became_occupied->push_back(*end_idx);
      out.set(*end_idx, Cell::Occupied);
    }
  }
  return out;
}

namespace {

constexpr char kMagic[4] = {'O', 'G', 'R', 'D'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_le(std::ostream& os, T value) {
  // Host is little-endian on every supported target; keep the raw write
  // behind one helper so the format stays pinned in a single place.
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
bool read_le(std::istream& is, T& value) {
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  return static_cast<bool>(is);
}

}  // namespace

void save_map(const OccupancyGrid& grid, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw MapIoError(MapIoError::Kind::Unreadable, "cannot open for write: " + path);
  os.write(kMagic, 4);
  write_le(os, kVersion);
  for (int a = 0; a < 3; ++a) write_le(os, grid.origin()[a]);
  write_le(os, grid.resolution());
  for (int a = 0; a < 3; ++a) write_le(os, static_cast<std::uint32_t>(grid.dims()[a]));
  os.write(reinterpret_cast<const char*>(grid.cells().data()),
           static_cast<std::streamsize>(grid.size()));
  if (!os) throw MapIoError(MapIoError::Kind::Unreadable, "short write: " + path);
}

OccupancyGrid load_map(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MapIoError(MapIoError::Kind::Unreadable, "cannot open: " + path);

  char magic[4];
  is.read(magic, 4);
  std::uint32_t version = 0;
  if (!is || std::memcmp(magic, kMagic, 4) != 0 || !read_le(is, version) ||
      version != kVersion)
    throw MapIoError(MapIoError::Kind::MalformedHeader, "bad magic or version: " + path);

  Vec3 origin;
  double resolution = 0.0;
  Vec3i dims;
  for (int a = 0; a < 3; ++a)
    if (!read_le(is, origin[a]))
      throw MapIoError(MapIoError::Kind::MalformedHeader, "truncated header: " + path);
  if (!read_le(is, resolution))
    throw MapIoError(MapIoError::Kind::MalformedHeader, "truncated header: " + path);
  for (int a = 0; a < 3; ++a) {
    std::uint32_t d = 0;
    if (!read_le(is, d))
      throw MapIoError(MapIoError::Kind::MalformedHeader, "truncated header: " + path);
    dims[a] = static_cast<int>(d);
  }
  if (resolution <= 0.0 || dims.minCoeff() <= 0)
    throw MapIoError(MapIoError::Kind::MalformedHeader, "invalid geometry: " + path);

  OccupancyGrid grid(origin, resolution, dims);
  is.read(reinterpret_cast<char*>(grid.cells().data()),
          static_cast<std::streamsize>(grid.size()));
  if (is.gcount() != static_cast<std::streamsize>(grid.size()) ||
      is.peek() != std::char_traits<char>::eof())
    throw MapIoError(MapIoError::Kind::DimensionMismatch,
                     "payload does not match dims: " + path);
  for (Cell c : grid.cells())
    if (c != Cell::Free && c != Cell::Occupied && c != Cell::Unknown)
      throw MapIoError(MapIoError::Kind::DimensionMismatch,
                       "payload contains invalid cell value: " + path);
  return grid;
}

}  // namespace voxnav
