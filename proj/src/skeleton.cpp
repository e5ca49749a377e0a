#include "vid2curve/skeleton.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace vid2curve {

namespace {

// 8-neighborhood in the Zhang-Suen order p2..p9 (N, NE, E, SE, S, SW, W, NW).
constexpr int kNx[8] = {0, 1, 1, 1, 0, -1, -1, -1};
constexpr int kNy[8] = {-1, -1, 0, 1, 1, 1, 0, -1};

struct Neighborhood {
  std::array<uint8_t, 8> p;
  int count;        // B(p): number of set neighbors
  int transitions;  // A(p): 0->1 transitions in cyclic order
};

Neighborhood neighborhood(const MaskImage& img, int x, int y) {
  Neighborhood n{};
  n.count = 0;
  for (int i = 0; i < 8; ++i) {
    n.p[i] = img.at_or_zero(x + kNx[i], y + kNy[i]);
    n.count += n.p[i];
  }
  n.transitions = 0;
  for (int i = 0; i < 8; ++i)
    if (!n.p[i] && n.p[(i + 1) % 8]) ++n.transitions;
  return n;
}

// A simple point has exactly one transition and at least two set neighbors;
// removing it cannot split or annihilate its component.
bool removable_now(const MaskImage& img, int x, int y) {
  const Neighborhood n = neighborhood(img, x, y);
  return n.transitions == 1 && n.count >= 2;
}

// One Zhang-Suen sub-iteration. Candidates are selected on a snapshot and
// applied sequentially with a live simple-point re-check.
bool zhang_suen_pass(MaskImage& img, int phase) {
  std::vector<int> candidates;
  const int w = img.width, h = img.height;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!img.at(x, y)) continue;
      const Neighborhood n = neighborhood(img, x, y);
      if (n.count < 2 || n.count > 6 || n.transitions != 1) continue;
      const uint8_t p2 = n.p[0], p4 = n.p[2], p6 = n.p[4], p8 = n.p[6];
      const bool ok = phase == 0 ? (!(p2 && p4 && p6) && !(p4 && p6 && p8))
                                 : (!(p2 && p4 && p8) && !(p2 && p6 && p8));
      if (ok) candidates.push_back(y * w + x);
    }
  }
  bool changed = false;
  for (int idx : candidates) {
    const int x = idx % w, y = idx / w;
    if (removable_now(img, x, y)) {
      img.bits[idx] = 0;
      changed = true;
    }
  }
  return changed;
}

// A deletion that fails the local simple-point test can still be safe when
// the split neighbors reconnect through a longer path. Verified by flood fill
// over the pixel's component with the pixel removed.
bool removable_globally(MaskImage& img, int x, int y) {
  std::vector<int> neighbors;
  for (int i = 0; i < 8; ++i)
    if (img.at_or_zero(x + kNx[i], y + kNy[i])) neighbors.push_back((y + kNy[i]) * img.width + (x + kNx[i]));
  if (neighbors.size() < 2) return false;
  img.set(x, y, 0);
  std::vector<int> stack{neighbors[0]};
  std::vector<uint8_t> seen(img.bits.size(), 0);
  seen[neighbors[0]] = 1;
  while (!stack.empty()) {
    const int cur = stack.back();
    stack.pop_back();
    const int cx = cur % img.width, cy = cur / img.width;
    for (int i = 0; i < 8; ++i) {
      const int nx = cx + kNx[i], ny = cy + kNy[i];
      if (!img.inside(nx, ny) || !img.at(nx, ny)) continue;
      const int idx = ny * img.width + nx;
      if (!seen[idx]) {
        seen[idx] = 1;
        stack.push_back(idx);
      }
    }
  }
  for (int idx : neighbors)
    if (!seen[idx]) {
      img.bits[static_cast<size_t>(y) * img.width + x] = 1;  // undo
      return false;
    }
  return true;
}

// Removes one deletable pixel from every remaining 2x2 foreground block.
bool clear_square_blocks(MaskImage& img) {
  bool changed = false;
  for (int y = 0; y + 1 < img.height; ++y) {
    for (int x = 0; x + 1 < img.width; ++x) {
      if (!(img.at(x, y) && img.at(x + 1, y) && img.at(x, y + 1) && img.at(x + 1, y + 1)))
        continue;
      const std::array<std::pair<int, int>, 4> corners{{{x, y}, {x + 1, y}, {x, y + 1}, {x + 1, y + 1}}};
      bool cleared = false;
      for (const auto& [cx, cy] : corners) {
        if (removable_now(img, cx, cy)) {
          img.set(cx, cy, 0);
          cleared = true;
          break;
        }
      }
      for (const auto& [cx, cy] : corners) {
        if (cleared) break;
        cleared = removable_globally(img, cx, cy);
      }
      changed = changed || cleared;
    }
  }
  return changed;
}

}  // namespace

MaskImage thin(const MaskImage& mask) {
  if (mask.count() == 0) throw EmptyMaskError();
  MaskImage img = mask;
  for (uint8_t& v : img.bits) v = v ? 1 : 0;
  bool changed = true;
  while (changed) {
    changed = false;
    while (true) {
      bool pass_changed = zhang_suen_pass(img, 0);
      pass_changed = zhang_suen_pass(img, 1) || pass_changed;
      if (!pass_changed) break;
      changed = true;
    }
    if (clear_square_blocks(img)) changed = true;
  }
  return img;
}

namespace {

// Pixel adjacency with the usual skeleton-graph reduction: a diagonal edge is
// redundant when the two pixels already connect through a set 4-neighbor.
// Without this, arms meeting at a junction read as spurious extra junctions.
struct PixelGraph {
  const MaskImage& img;
  std::vector<int> degree;

  explicit PixelGraph(const MaskImage& skeleton) : img(skeleton), degree(skeleton.bits.size(), 0) {
    int nbr[8];
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        if (!img.at(x, y)) continue;
        degree[static_cast<size_t>(y) * img.width + x] =
            neighbors(y * img.width + x, nbr);
      }
  }

  bool connected(int x, int y, int dx, int dy) const {
    if (!img.at_or_zero(x + dx, y + dy)) return false;
    if (dx != 0 && dy != 0 && (img.at_or_zero(x + dx, y) || img.at_or_zero(x, y + dy)))
      return false;  // diagonal shortcut across a 4-connected corner
    return true;
  }

  int neighbors(int idx, int* out) const {
    const int x = idx % img.width, y = idx / img.width;
    int n = 0;
    for (int i = 0; i < 8; ++i) {
      if (connected(x, y, kNx[i], kNy[i])) out[n++] = (y + kNy[i]) * img.width + (x + kNx[i]);
    }
    return n;
  }
};

uint64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<uint64_t>(a) << 32) | static_cast<uint32_t>(b);
}

std::vector<PixelChain> trace_once(const MaskImage& skeleton) {
  PixelGraph graph(skeleton);
  const int w = skeleton.width;
  std::vector<PixelChain> chains;
  std::vector<uint64_t> used;
  used.reserve(1024);
  auto edge_used = [&](int a, int b) {
    return std::binary_search(used.begin(), used.end(), edge_key(a, b));
  };
  auto mark_edge = [&](int a, int b) {
    const uint64_t key = edge_key(a, b);
    used.insert(std::upper_bound(used.begin(), used.end(), key), key);
  };
  auto pixel_of = [&](int idx) { return Vec2(idx % w, idx / w); };

  int nbr[8];
  // Open chains between breakpoints (degree != 2).
  for (size_t start = 0; start < skeleton.bits.size(); ++start) {
    if (!skeleton.bits[start] || graph.degree[start] == 2) continue;
    const int n = graph.neighbors(static_cast<int>(start), nbr);
    for (int i = 0; i < n; ++i) {
      if (edge_used(static_cast<int>(start), nbr[i])) continue;
      PixelChain chain;
      int prev = static_cast<int>(start);
      int cur = nbr[i];
      chain.pixels.push_back(pixel_of(prev));
      mark_edge(prev, cur);
      while (true) {
        chain.pixels.push_back(pixel_of(cur));
        if (graph.degree[cur] != 2) break;
        const int m = graph.neighbors(cur, nbr);
        int next = -1;
        for (int j = 0; j < m; ++j)
          if (nbr[j] != prev && !edge_used(cur, nbr[j])) { next = nbr[j]; break; }
        if (next < 0) break;
        mark_edge(cur, next);
        prev = cur;
        cur = next;
      }
      chains.push_back(std::move(chain));
    }
  }
  // Remaining unused edges belong to pure cycles.
  for (size_t start = 0; start < skeleton.bits.size(); ++start) {
    if (!skeleton.bits[start] || graph.degree[start] != 2) continue;
    const int n = graph.neighbors(static_cast<int>(start), nbr);
    int first = -1;
    for (int i = 0; i < n; ++i)
      if (!edge_used(static_cast<int>(start), nbr[i])) { first = nbr[i]; break; }
    if (first < 0) continue;
    PixelChain chain;
    chain.closed = true;
    int prev = static_cast<int>(start);
    int cur = first;
    chain.pixels.push_back(pixel_of(prev));
    mark_edge(prev, cur);
    while (cur != static_cast<int>(start)) {
      chain.pixels.push_back(pixel_of(cur));
      const int m = graph.neighbors(cur, nbr);
      int next = -1;
      for (int j = 0; j < m; ++j)
        if (nbr[j] != prev && !edge_used(cur, nbr[j])) { next = nbr[j]; break; }
      if (next < 0) break;
      mark_edge(cur, next);
      prev = cur;
      cur = next;
    }
    chain.pixels.push_back(pixel_of(start));  // first = last for closed loops
    chains.push_back(std::move(chain));
  }
  // Isolated pixels become one-pixel chains; the caller drops them as noise.
  for (size_t idx = 0; idx < skeleton.bits.size(); ++idx) {
    if (skeleton.bits[idx] && graph.degree[idx] == 0) {
      PixelChain chain;
      chain.pixels.push_back(pixel_of(static_cast<int>(idx)));
      chains.push_back(std::move(chain));
    }
  }
  return chains;
}

}  // namespace

SkeletalFrame trace_chains(const MaskImage& skeleton) {
  SkeletalFrame frame;
  frame.skeleton = skeleton;
  const int w = skeleton.width;

  // Dropping a short fragment can merge the chains around a former junction,
  // so re-trace until no chain is discarded.
  while (true) {
    auto chains = trace_once(frame.skeleton);
    std::vector<int> pixel_cover(frame.skeleton.bits.size(), 0);
    for (const auto& chain : chains) {
      if (chain.size() < 3) continue;
      for (const Vec2& p : chain.pixels)
        ++pixel_cover[static_cast<size_t>(p.y()) * w + static_cast<size_t>(p.x())];
    }
    bool dropped = false;
    for (const auto& chain : chains) {
      if (chain.size() >= 3) continue;
      for (const Vec2& p : chain.pixels) {
        const size_t idx = static_cast<size_t>(p.y()) * w + static_cast<size_t>(p.x());
        if (pixel_cover[idx] == 0 && frame.skeleton.bits[idx]) {
          frame.skeleton.bits[idx] = 0;
          dropped = true;
        }
      }
    }
    if (!dropped) {
      frame.chains.clear();
      for (auto& chain : chains)
        if (chain.size() >= 3) frame.chains.push_back(std::move(chain));
      break;
    }
  }

  frame.pixel_index.assign(frame.skeleton.bits.size(), -1);
  for (size_t c = 0; c < frame.chains.size(); ++c) {
    const auto& chain = frame.chains[c];
    for (int i = 0; i < chain.size(); ++i) {
      const size_t idx = static_cast<size_t>(chain.pixels[i].y()) * w +
                         static_cast<size_t>(chain.pixels[i].x());
      if (frame.pixel_index[idx] < 0)
        frame.pixel_index[idx] = static_cast<int32_t>((c << 16) | static_cast<size_t>(i));
    }
  }

  frame.grid_w = (skeleton.width + frame.cell_size - 1) / frame.cell_size;
  frame.grid_h = (skeleton.height + frame.cell_size - 1) / frame.cell_size;
  frame.grid.assign(static_cast<size_t>(frame.grid_w) * frame.grid_h, {});
  for (int y = 0; y < skeleton.height; ++y)
    for (int x = 0; x < w; ++x) {
      const size_t idx = static_cast<size_t>(y) * w + x;
      if (frame.pixel_index[idx] < 0) continue;
      const int cell = (y / frame.cell_size) * frame.grid_w + (x / frame.cell_size);
      frame.grid[cell].push_back(static_cast<int32_t>(idx));
    }
  return frame;
}

void chain_geometry(SkeletalFrame& frame, const MaskImage& mask) {
  frame.mask = mask;
  const auto dist_sq = squared_distance_to_zero(mask);
  const int w = mask.width;
  for (auto& chain : frame.chains) {
    const int n = chain.size();
    const int period = chain.closed ? n - 1 : n;
    chain.tangents.resize(n);
    chain.normals.resize(n);
    chain.half_widths.resize(n);
    for (int i = 0; i < n; ++i) {
      int lo, hi;
      if (chain.closed) {
        lo = ((i - 2) % period + period) % period;
        hi = (i + 2) % period;
      } else {
        lo = std::max(0, i - 2);
        hi = std::min(n - 1, i + 2);
      }
      Vec2 diff = chain.pixels[hi] - chain.pixels[lo];
      if (diff.squaredNorm() < 1e-12) diff = Vec2(1.0, 0.0);
      chain.tangents[i] = diff.normalized();
      chain.normals[i] = Vec2(-chain.tangents[i].y(), chain.tangents[i].x());
      const size_t idx = static_cast<size_t>(chain.pixels[i].y()) * w +
                         static_cast<size_t>(chain.pixels[i].x());
      chain.half_widths[i] = std::max(0.5, std::sqrt(dist_sq[idx]) - 0.5);
    }
  }
}

std::optional<SkeletonHit> SkeletalFrame::nearest_skeleton_pixel(const Vec2& p,
                                                                 double radius) const {
  const double r2 = radius * radius;
  const int x_lo = std::max(0, static_cast<int>(std::floor((p.x() - radius) / cell_size)));
  const int x_hi = std::min(grid_w - 1, static_cast<int>(std::floor((p.x() + radius) / cell_size)));
  const int y_lo = std::max(0, static_cast<int>(std::floor((p.y() - radius) / cell_size)));
  const int y_hi = std::min(grid_h - 1, static_cast<int>(std::floor((p.y() + radius) / cell_size)));
  SkeletonHit best;
  double best_d2 = r2;
  bool found = false;
  for (int cy = y_lo; cy <= y_hi; ++cy) {
    for (int cx = x_lo; cx <= x_hi; ++cx) {
      for (int32_t idx : grid[static_cast<size_t>(cy) * grid_w + cx]) {
        const Vec2 q(idx % skeleton.width, idx / skeleton.width);
        const double d2 = (q - p).squaredNorm();
        if (d2 > r2) continue;
        const int32_t packed = pixel_index[idx];
        const int chain = packed >> 16, index = packed & 0xffff;
        const bool better =
            !found || d2 < best_d2 ||
            (d2 == best_d2 && std::pair(chain, index) < std::pair(best.chain, best.index));
        if (better) {
          best = SkeletonHit{chain, index, std::sqrt(d2), q};
          best_d2 = d2;
          found = true;
        }
      }
    }
  }
  if (!found) return std::nullopt;
  return best;
}

void SkeletalFrame::collect_candidates(const Vec2& p, double radius, int cap,
                                       std::vector<SkeletonHit>& out) const {
  out.clear();
  const double r2 = radius * radius;
  const int x_lo = std::max(0, static_cast<int>(std::floor((p.x() - radius) / cell_size)));
  const int x_hi = std::min(grid_w - 1, static_cast<int>(std::floor((p.x() + radius) / cell_size)));
  const int y_lo = std::max(0, static_cast<int>(std::floor((p.y() - radius) / cell_size)));
  const int y_hi = std::min(grid_h - 1, static_cast<int>(std::floor((p.y() + radius) / cell_size)));
  for (int cy = y_lo; cy <= y_hi; ++cy) {
    for (int cx = x_lo; cx <= x_hi; ++cx) {
      for (int32_t idx : grid[static_cast<size_t>(cy) * grid_w + cx]) {
        const Vec2 q(idx % skeleton.width, idx / skeleton.width);
        const double d2 = (q - p).squaredNorm();
        if (d2 > r2) continue;
        const int32_t packed = pixel_index[idx];
        out.push_back(SkeletonHit{packed >> 16, packed & 0xffff, std::sqrt(d2), q});
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const SkeletonHit& a, const SkeletonHit& b) {
    return std::tie(a.distance, a.chain, a.index) < std::tie(b.distance, b.chain, b.index);
  });
  if (static_cast<int>(out.size()) > cap) out.resize(cap);
}

SkeletalFrame preprocess_mask(const MaskImage& mask) {
  SkeletalFrame frame = trace_chains(thin(mask));
  chain_geometry(frame, mask);
  return frame;
}

}  // namespace vid2curve
