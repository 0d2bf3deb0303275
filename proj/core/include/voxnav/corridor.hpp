#pragma once

#include <optional>
#include <vector>

#include "voxnav/decomposition.hpp"

namespace voxnav {

struct CorridorOptions {
  // Safety margin subtracted from each cuboid box on all sides.
  double clearance = 0.0;
  // Scale the distance heuristic by 1/grid-diagonal so it never exceeds the
  // remaining hop count (edges cost one hop each). Disabling this uses the
  // raw metric distance, which can overestimate hops and lose optimality.
  bool scaled_heuristic = true;
};

// Ordered chain of overlapping obstacle-free boxes from start to goal.
struct Corridor {
  std::vector<int> cuboids;  // graph vertex ids
  std::vector<Aabb> bounds;  // clearance-shrunk world boxes, one per entry
  Vec3 start = Vec3::Zero();
  Vec3 goal = Vec3::Zero();

  std::size_t size() const { return cuboids.size(); }
  int hops() const { return static_cast<int>(cuboids.size()) - 1; }
};

enum class CorridorStatus { Ok, StartNotFree, GoalUnreachable };

struct CorridorResult {
  CorridorStatus status = CorridorStatus::GoalUnreachable;
  Corridor corridor;
  bool ok() const { return status == CorridorStatus::Ok; }
};

// A* over graph vertices with unit edge weights, minimizing the number of
// cuboids crossed. The start vertex is the smallest-index cuboid covering
// the start point; any cuboid covering the goal is accepted. Deterministic:
// ties in f are broken by vertex index.
CorridorResult select_corridors(const CuboidGraph& graph, const Vec3& start,
                                const Vec3& goal, const CorridorOptions& options = {});

// Breadth-first hop count between the same endpoints (test oracle). Empty
// when no path exists or an endpoint is uncovered.
std::optional<int> hop_oracle_bfs(const CuboidGraph& graph, const Vec3& start,
                                  const Vec3& goal);

}  // namespace voxnav
