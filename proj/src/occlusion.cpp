#include "vid2curve/occlusion.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <unordered_map>

#include "vid2curve/image.hpp"

namespace vid2curve {

namespace {

// Breadth-first hop distances from `src`, capped at `limit` edges.
void capped_hops(const std::vector<std::vector<int>>& adj, int src, int limit,
                 std::unordered_map<int, int>& out) {
  out.clear();
  out[src] = 0;
  std::deque<int> queue{src};
  while (!queue.empty()) {
    const int cur = queue.front();
    queue.pop_front();
    const int d = out[cur];
    if (d == limit) continue;
    for (int next : adj[cur]) {
      if (out.emplace(next, d + 1).second) queue.push_back(next);
    }
  }
}

}  // namespace

void label_occlusion(const CurveNetwork& net, MatchSet& matches, const SkeletalFrame& frame,
                     const OcclusionParams& params) {
  const int n = static_cast<int>(net.points.size());
  const int w = frame.skeleton.width;

  // Reverse map: pixel position -> 3D points matched there.
  std::unordered_map<int, std::vector<int>> points_at_pixel;
  for (int j = 0; j < n; ++j) {
    const PointMatch& m = matches.points[j];
    if (!m.matched()) continue;
    const int key = static_cast<int>(m.pixel.y()) * w + static_cast<int>(m.pixel.x());
    points_at_pixel[key].push_back(j);
  }

  const auto adj = net.adjacency();
  std::unordered_map<int, int> hops;
  std::vector<int> gathered;
  std::vector<double> dists;

  for (int j = 0; j < n; ++j) {
    const PointMatch& m = matches.points[j];
    if (!m.matched()) {
      matches.occluded[j] = 1;
      continue;
    }
    gathered.clear();
    const int px = static_cast<int>(m.pixel.x());
    const int py = static_cast<int>(m.pixel.y());
    for (int dy = -params.window; dy <= params.window; ++dy) {
      for (int dx = -params.window; dx <= params.window; ++dx) {
        const int x = px + dx, y = py + dy;
        if (!frame.skeleton.inside(x, y)) continue;
        auto it = points_at_pixel.find(y * w + x);
        if (it == points_at_pixel.end()) continue;
        gathered.insert(gathered.end(), it->second.begin(), it->second.end());
      }
    }
    if (gathered.size() <= 1) {
      matches.occluded[j] = 0;
      continue;
    }

    Vec3 centroid = Vec3::Zero();
    for (int id : gathered) centroid += net.points[id];
    centroid /= static_cast<double>(gathered.size());
    dists.clear();
    double mean = 0.0;
    for (int id : gathered) {
      dists.push_back((net.points[id] - centroid).norm());
      mean += dists.back();
    }
    mean /= static_cast<double>(dists.size());
    double var = 0.0;
    for (double d : dists) var += (d - mean) * (d - mean);
    const double sigma = std::sqrt(var / static_cast<double>(dists.size()));

    if (sigma >= params.sigma0) {
      matches.occluded[j] = 1;
      continue;
    }
    // Compact in space but spanning distant parts of the network still counts
    // as occluded.
    std::sort(gathered.begin(), gathered.end());
    gathered.erase(std::unique(gathered.begin(), gathered.end()), gathered.end());
    bool same_branch = true;
    for (size_t a = 0; a + 1 < gathered.size() && same_branch; ++a) {
      capped_hops(adj, gathered[a], params.branch_hop_limit, hops);
      for (size_t b = a + 1; b < gathered.size(); ++b)
        if (!hops.count(gathered[b])) {
          same_branch = false;
          break;
        }
    }
    matches.occluded[j] = same_branch ? 0 : 1;
  }
}

void write_occlusion_overlay(const SkeletalFrame& frame, const MatchSet& matches,
                             const std::string& path) {
  const int w = frame.skeleton.width, h = frame.skeleton.height;
  std::vector<uint8_t> gray(static_cast<size_t>(w) * h, 0);
  for (size_t i = 0; i < frame.pixel_index.size(); ++i)
    if (frame.pixel_index[i] >= 0) gray[i] = 128;
  for (size_t j = 0; j < matches.points.size(); ++j) {
    const PointMatch& m = matches.points[j];
    if (!m.matched() || matches.occluded[j]) continue;
    gray[static_cast<size_t>(m.pixel.y()) * w + static_cast<size_t>(m.pixel.x())] = 255;
  }
  write_pgm_gray(gray, w, h, path);
}

}  // namespace vid2curve
