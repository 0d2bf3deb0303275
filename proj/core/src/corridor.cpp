#include "voxnav/corridor.hpp"

#include <algorithm>
#include <deque>
#include <queue>

namespace voxnav {

namespace {

double distance_to_box(const Vec3& p, const Aabb& box) {
  Vec3 d = (box.lower - p).cwiseMax(0.0).cwiseMax(p - box.upper);
  return d.norm();
}

Aabb shrink(const Aabb& box, double clearance) {
  Aabb out{box.lower + Vec3::Constant(clearance), box.upper - Vec3::Constant(clearance)};
  for (int ax = 0; ax < 3; ++ax) {
    if (out.lower[ax] > out.upper[ax]) {
      double mid = 0.5 * (box.lower[ax] + box.upper[ax]);
      out.lower[ax] = out.upper[ax] = mid;
    }
  }
  return out;
}

}  // namespace

CorridorResult select_corridors(const CuboidGraph& graph, const Vec3& start,
                                const Vec3& goal, const CorridorOptions& options) {
  CorridorResult result;

  auto start_vertex = graph.smallest_covering_cuboid(start);
  if (!start_vertex) {
    result.status = CorridorStatus::StartNotFree;
    return result;
  }
  std::vector<int> goal_vertices = graph.covering_cuboids(goal);
  if (goal_vertices.empty()) {
    result.status = CorridorStatus::GoalUnreachable;
    return result;
  }
  std::vector<char> is_goal(graph.vertex_count(), 0);
  for (int v : goal_vertices) is_goal[v] = 1;

  const double diag = graph.grid_diagonal();
  auto heuristic = [&](int v) {
    double d = distance_to_box(goal, graph.world_box_of(v));
    return options.scaled_heuristic ? d / diag : d;
  };

  struct Entry {
    double f;
    int vertex;
    bool operator>(const Entry& o) const {
      return f > o.f || (f == o.f && vertex > o.vertex);
    }
  };
  std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> open;
  std::vector<int> g(graph.vertex_count(), -1);
  std::vector<int> parent(graph.vertex_count(), -1);
  std::vector<char> closed(graph.vertex_count(), 0);

  g[*start_vertex] = 0;
  open.push({heuristic(*start_vertex), *start_vertex});

  int found = -1;
  while (!open.empty()) {
    auto [f, v] = open.top();
    open.pop();
    if (closed[v]) continue;
    closed[v] = 1;
    if (is_goal[v]) {
      found = v;
      break;
    }
    for (int n : graph.adjacency()[v]) {
      if (closed[n]) continue;
      int tentative = g[v] + 1;
      if (g[n] < 0 || tentative < g[n]) {
        g[n] = tentative;
        parent[n] = v;
        open.push({tentative + heuristic(n), n});
      }
    }
  }

  if (found < 0) {
    result.status = CorridorStatus::GoalUnreachable;
    return result;
  }

  std::deque<int> chain;
  for (int v = found; v >= 0; v = parent[v]) chain.push_front(v);

  result.status = CorridorStatus::Ok;
  result.corridor.cuboids.assign(chain.begin(), chain.end());
  result.corridor.start = start;
  result.corridor.goal = goal;
  result.corridor.bounds.reserve(chain.size());
  for (int v : chain)
    result.corridor.bounds.push_back(shrink(graph.world_box_of(v), options.clearance));
  return result;
}

std::optional<int> hop_oracle_bfs(const CuboidGraph& graph, const Vec3& start,
                                  const Vec3& goal) {
  auto start_vertex = graph.smallest_covering_cuboid(start);
  if (!start_vertex) return std::nullopt;
  std::vector<int> goal_vertices = graph.covering_cuboids(goal);
  if (goal_vertices.empty()) return std::nullopt;
  std::vector<char> is_goal(graph.vertex_count(), 0);
  for (int v : goal_vertices) is_goal[v] = 1;

  std::vector<int> dist(graph.vertex_count(), -1);
  std::deque<int> queue;
  dist[*start_vertex] = 0;
  queue.push_back(*start_vertex);
  while (!queue.empty()) {
    int v = queue.front();
    queue.pop_front();
    if (is_goal[v]) return dist[v];
    for (int n : graph.adjacency()[v]) {
      if (dist[n] < 0) {
        dist[n] = dist[v] + 1;
        queue.push_back(n);
      }
    }
  }
  return std::nullopt;
}

}  // namespace voxnav
