#include "vid2curve/curve_network.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>
#include <unordered_map>

namespace vid2curve {

std::vector<std::vector<int>> CurveNetwork::adjacency() const {
  std::vector<std::vector<int>> adj(points.size());
  for (const auto& [a, b] : edges) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  for (auto& list : adj) std::sort(list.begin(), list.end());
  return adj;
}

std::vector<int> CurveNetwork::degrees() const {
  std::vector<int> deg(points.size(), 0);
  for (const auto& [a, b] : edges) {
    ++deg[a];
    ++deg[b];
  }
  return deg;
}

namespace {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(size_t n) : parent(n) {
    for (size_t i = 0; i < n; ++i) parent[i] = static_cast<int>(i);
  }
  int find(int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

// Dijkstra with an early exit: returns empty once the shortest distance is
// known to exceed cap.
std::optional<double> capped_dijkstra(const std::vector<std::vector<std::pair<int, double>>>& adj,
                                      int src, int dst, double cap) {
  if (src == dst) return 0.0;
  std::priority_queue<std::pair<double, int>, std::vector<std::pair<double, int>>,
                      std::greater<>> heap;
  std::unordered_map<int, double> dist;
  heap.emplace(0.0, src);
  dist[src] = 0.0;
  while (!heap.empty()) {
    auto [d, node] = heap.top();
    heap.pop();
    if (d > cap) return std::nullopt;
    if (node == dst) return d;
    auto it = dist.find(node);
    if (it != dist.end() && d > it->second) continue;
    for (const auto& [next, w] : adj[node]) {
      const double nd = d + w;
      if (nd > cap) continue;
      auto found = dist.find(next);
      if (found == dist.end() || nd < found->second) {
        dist[next] = nd;
        heap.emplace(nd, next);
      }
    }
  }
  return std::nullopt;
}

struct CandidateEdge {
  double length;
  int a, b;  // a < b
  bool operator<(const CandidateEdge& o) const {
    return std::tie(length, a, b) < std::tie(o.length, o.a, o.b);
  }
};

}  // namespace

CurveNetwork build_network(std::vector<Vec3> points, double delta0) {
  CurveNetwork net;
  net.points = std::move(points);
  net.delta0 = delta0;
  const int n = static_cast<int>(net.points.size());
  if (n < 2) return net;

  const double theta = kEdgeFactor * delta0;
  const double loop_limit = kLoopFactor * delta0;

  // Candidate pairs via a uniform spatial hash at cell size theta.
  std::unordered_map<int64_t, std::vector<int>> cells;
  auto hash_cell = [](int64_t cx, int64_t cy, int64_t cz) {
    return (cx * 73856093) ^ (cy * 19349663) ^ (cz * 83492791);
  };
  auto cell_coord = [&](double v) { return static_cast<int64_t>(std::floor(v / theta)); };
  for (int i = 0; i < n; ++i) {
    const Vec3& p = net.points[i];
    cells[hash_cell(cell_coord(p.x()), cell_coord(p.y()), cell_coord(p.z()))].push_back(i);
  }

  std::vector<CandidateEdge> candidates;
  for (int i = 0; i < n; ++i) {
    const Vec3& p = net.points[i];
    const int64_t cx = cell_coord(p.x()), cy = cell_coord(p.y()), cz = cell_coord(p.z());
    for (int64_t dz = -1; dz <= 1; ++dz)
      for (int64_t dy = -1; dy <= 1; ++dy)
        for (int64_t dx = -1; dx <= 1; ++dx) {
          auto it = cells.find(hash_cell(cx + dx, cy + dy, cz + dz));
          if (it == cells.end()) continue;
          for (int j : it->second) {
            if (j <= i) continue;
            const double len = (net.points[j] - p).norm();
            if (len < theta) candidates.push_back({len, i, j});
          }
        }
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end(),
                               [](const CandidateEdge& x, const CandidateEdge& y) {
                                 return x.a == y.a && x.b == y.b;
                               }),
                   candidates.end());

  UnionFind uf(net.points.size());
  std::vector<std::vector<std::pair<int, double>>> adj(net.points.size());
  for (const auto& cand : candidates) {
    bool add = false;
    if (uf.find(cand.a) != uf.find(cand.b)) {
      add = true;
    } else {
      // Loop length = shortest existing path + the new edge.
      const auto path = capped_dijkstra(adj, cand.a, cand.b, loop_limit - cand.length);
      add = !path.has_value();
    }
    if (add) {
      net.edges.emplace_back(cand.a, cand.b);
      adj[cand.a].emplace_back(cand.b, cand.length);
      adj[cand.b].emplace_back(cand.a, cand.length);
      uf.unite(cand.a, cand.b);
    }
  }
  return net;
}

std::vector<Branch> branches(const CurveNetwork& net) {
  const auto adj = net.adjacency();
  const auto deg = net.degrees();
  const int n = static_cast<int>(net.points.size());
  std::vector<Branch> result;
  std::vector<uint64_t> used;
  auto key = [](int a, int b) {
    if (a > b) std::swap(a, b);
    return (static_cast<uint64_t>(a) << 32) | static_cast<uint32_t>(b);
  };
  auto edge_used = [&](int a, int b) {
    return std::binary_search(used.begin(), used.end(), key(a, b));
  };
  auto mark = [&](int a, int b) {
    const uint64_t k = key(a, b);
    used.insert(std::upper_bound(used.begin(), used.end(), k), k);
  };

  for (int start = 0; start < n; ++start) {
    if (deg[start] == 2) continue;
    for (int next : adj[start]) {
      if (edge_used(start, next)) continue;
      Branch branch;
      branch.points.push_back(start);
      int prev = start, cur = next;
      mark(prev, cur);
      while (true) {
        branch.points.push_back(cur);
        if (deg[cur] != 2) break;
        int follow = -1;
        for (int cand : adj[cur])
          if (cand != prev && !edge_used(cur, cand)) { follow = cand; break; }
        if (follow < 0) break;
        mark(cur, follow);
        prev = cur;
        cur = follow;
      }
      result.push_back(std::move(branch));
    }
  }
  // Leftover edges form junction-free cycles.
  for (int start = 0; start < n; ++start) {
    if (deg[start] != 2) continue;
    int first = -1;
    for (int cand : adj[start])
      if (!edge_used(start, cand)) { first = cand; break; }
    if (first < 0) continue;
    Branch branch;
    branch.closed = true;
    branch.points.push_back(start);
    int prev = start, cur = first;
    mark(prev, cur);
    while (cur != start) {
      branch.points.push_back(cur);
      int follow = -1;
      for (int cand : adj[cur])
        if (cand != prev && !edge_used(cur, cand)) { follow = cand; break; }
      if (follow < 0) break;
      mark(cur, follow);
      prev = cur;
      cur = follow;
    }
    result.push_back(std::move(branch));
  }
  return result;
}

std::vector<Junction> junctions(const CurveNetwork& net) {
  const auto deg = net.degrees();
  std::vector<Junction> result;
  for (int i = 0; i < static_cast<int>(deg.size()); ++i)
    if (deg[i] >= 3) result.push_back({i, deg[i]});
  return result;
}

CurveNetwork resample(const CurveNetwork& net) {
  CurveNetwork out;
  out.delta0 = net.delta0;
  const double delta0 = net.delta0;
  const auto branch_list = branches(net);
  const auto deg = net.degrees();

  std::unordered_map<int, int> endpoint_map;  // old index -> new index
  auto emit_endpoint = [&](int old_index) {
    auto it = endpoint_map.find(old_index);
    if (it != endpoint_map.end()) return it->second;
    const int id = static_cast<int>(out.points.size());
    out.points.push_back(net.points[old_index]);
    endpoint_map.emplace(old_index, id);
    return id;
  };

  std::map<std::pair<int, int>, int> seen_edges;
  auto emit_edge = [&](int a, int b) {
    if (a == b) return;
    const auto key = std::minmax(a, b);
    if (seen_edges.emplace(key, 1).second) out.edges.emplace_back(key.first, key.second);
  };

  for (const auto& branch : branch_list) {
    std::vector<Vec3> poly;
    poly.reserve(branch.points.size() + 1);
    for (int idx : branch.points) poly.push_back(net.points[idx]);
    if (branch.closed) poly.push_back(net.points[branch.points.front()]);

    std::vector<double> cum(poly.size(), 0.0);
    for (size_t i = 1; i < poly.size(); ++i)
      cum[i] = cum[i - 1] + (poly[i] - poly[i - 1]).norm();
    const double total = cum.back();

    auto point_at = [&](double s) {
      const auto it = std::upper_bound(cum.begin(), cum.end(), s);
      size_t hi = std::min<size_t>(std::distance(cum.begin(), it), poly.size() - 1);
      if (hi == 0) hi = 1;
      const size_t lo = hi - 1;
      const double span = cum[hi] - cum[lo];
      const double t = span > 0.0 ? (s - cum[lo]) / span : 0.0;
      return Vec3(poly[lo] + t * (poly[hi] - poly[lo]));
    };

    if (branch.closed) {
      const int rings = std::max<int>(3, static_cast<int>(std::llround(total / delta0)));
      const double spacing = total / rings;
      std::vector<int> ids(rings);
      for (int i = 0; i < rings; ++i) {
        ids[i] = static_cast<int>(out.points.size());
        out.points.push_back(point_at(i * spacing));
      }
      for (int i = 0; i < rings; ++i) emit_edge(ids[i], ids[(i + 1) % rings]);
      continue;
    }

    const int head = emit_endpoint(branch.points.front());
    const int tail = emit_endpoint(branch.points.back());
    if (total < 0.5 * delta0) {
      emit_edge(head, tail);
      continue;
    }
    // Interior samples every delta0; the final segment lands in [0.5, 1.5]*delta0.
    const int interior = std::max(0, static_cast<int>(std::floor((total - 0.5 * delta0) / delta0)));
    int prev = head;
    for (int i = 1; i <= interior; ++i) {
      const int id = static_cast<int>(out.points.size());
      out.points.push_back(point_at(i * delta0));
      emit_edge(prev, id);
      prev = id;
    }
    emit_edge(prev, tail);
  }

  // Isolated vertices carry no edges but stay part of the network.
  for (size_t i = 0; i < net.points.size(); ++i)
    if (deg[i] == 0) out.points.push_back(net.points[i]);
  return out;
}

std::optional<double> graph_distance(const CurveNetwork& net, int i, int j, double cap) {
  std::vector<std::vector<std::pair<int, double>>> adj(net.points.size());
  for (const auto& [a, b] : net.edges) {
    const double w = (net.points[a] - net.points[b]).norm();
    adj[a].emplace_back(b, w);
    adj[b].emplace_back(a, w);
  }
  return capped_dijkstra(adj, i, j, cap);
}

}  // namespace vid2curve
