#include "vid2curve/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace vid2curve {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// DP state per point: one of the candidate pixels together with the run
// direction (0 = run just started, 1 = ascending chain index, 2 = descending),
// or the dedicated "unmatched" state.
struct Stage {
  std::vector<SkeletonHit> cands;
  std::vector<double> cost;    // cands.size() * 3, indexed [cand * 3 + dir]
  std::vector<int32_t> from;   // back-pointer, encoded as prev_cand * 3 + dir, -1 = unmatched
  double gap_cost = kInf;      // best cost with this point unmatched
  int32_t gap_from = -1;       // back-pointer of the unmatched state; -1 = unmatched
};

}  // namespace

BranchMatch match_branch(const std::vector<std::optional<Vec2>>& proj, const SkeletalFrame& frame,
                         const MatchParams& params) {
  const int n = static_cast<int>(proj.size());
  BranchMatch result;
  result.assignment.assign(n, {-1, -1});
  if (n == 0) return result;

  const double gap_penalty = params.alpha * params.radius;
  std::vector<Stage> stages(n);
  std::vector<SkeletonHit> scratch;
  for (int j = 0; j < n; ++j) {
    if (proj[j].has_value()) {
      frame.collect_candidates(*proj[j], params.radius, params.candidate_cap, scratch);
      stages[j].cands = scratch;
    }
    stages[j].cost.assign(stages[j].cands.size() * 3, kInf);
    stages[j].from.assign(stages[j].cands.size() * 3, -2);
  }

  // First point: either open a run on any candidate or stay unmatched.
  {
    Stage& s = stages[0];
    for (size_t c = 0; c < s.cands.size(); ++c) {
      s.cost[c * 3 + 0] = params.alpha * s.cands[c].distance;
      s.from[c * 3 + 0] = -1;
    }
    s.gap_cost = gap_penalty;
    s.gap_from = -1;
  }

  for (int j = 1; j < n; ++j) {
    const Stage& prev = stages[j - 1];
    Stage& cur = stages[j];

    // Cheapest previous state of any kind feeds the unmatched transition.
    double best_prev = prev.gap_cost;
    int32_t best_prev_from = -1;
    for (size_t c = 0; c < prev.cands.size(); ++c)
      for (int d = 0; d < 3; ++d)
        if (prev.cost[c * 3 + d] < best_prev) {
          best_prev = prev.cost[c * 3 + d];
          best_prev_from = static_cast<int32_t>(c * 3 + d);
        }
    cur.gap_cost = best_prev + gap_penalty;
    cur.gap_from = best_prev_from;

    const bool pair_defined = proj[j - 1].has_value() && proj[j].has_value();
    const Vec2 proj_step = pair_defined ? Vec2(*proj[j - 1] - *proj[j]) : Vec2::Zero();

    for (size_t c = 0; c < cur.cands.size(); ++c) {
      const SkeletonHit& hit = cur.cands[c];
      const double match_cost = params.alpha * hit.distance;

      // Run start: only reachable from the unmatched state.
      cur.cost[c * 3 + 0] = prev.gap_cost + match_cost;
      cur.from[c * 3 + 0] = -1;

      // Run continuation: same chain, strictly monotone index, consistent
      // direction; the consecutive-pair term is charged here.
      if (!pair_defined) continue;
      for (size_t pc = 0; pc < prev.cands.size(); ++pc) {
        const SkeletonHit& ph = prev.cands[pc];
        if (ph.chain != hit.chain || ph.index == hit.index) continue;
        const int dir = hit.index > ph.index ? 1 : 2;
        const double from_start = prev.cost[pc * 3 + 0];
        const double from_run = prev.cost[pc * 3 + dir];
        const double base = std::min(from_start, from_run);
        if (base == kInf) continue;
        const double step_cost = (proj_step - (ph.pixel - hit.pixel)).norm() + match_cost;
        if (base + step_cost < cur.cost[c * 3 + dir]) {
          cur.cost[c * 3 + dir] = base + step_cost;
          cur.from[c * 3 + dir] =
              static_cast<int32_t>(pc * 3 + (from_start <= from_run ? 0 : dir));
        }
      }
    }
  }

  // Pick the best terminal state and backtrack.
  const Stage& last = stages[n - 1];
  double best = last.gap_cost;
  int32_t state = -1;
  for (size_t c = 0; c < last.cands.size(); ++c)
    for (int d = 0; d < 3; ++d)
      if (last.cost[c * 3 + d] < best) {
        best = last.cost[c * 3 + d];
        state = static_cast<int32_t>(c * 3 + d);
      }
  result.energy = best;
  for (int j = n - 1; j >= 0; --j) {
    const Stage& s = stages[j];
    if (state >= 0) {
      const int c = state / 3;
      result.assignment[j] = {s.cands[c].chain, s.cands[c].index};
      state = s.from[state];
    } else {
      state = s.gap_from;
    }
  }
  return result;
}

double assignment_energy(const std::vector<std::optional<Vec2>>& proj,
                         const std::vector<std::pair<int, int>>& assignment,
                         const SkeletalFrame& frame, const MatchParams& params) {
  double energy = 0.0;
  const int n = static_cast<int>(proj.size());
  for (int j = 0; j < n; ++j) {
    if (assignment[j].first < 0) {
      energy += params.alpha * params.radius;
      continue;
    }
    const Vec2 q = frame.chains[assignment[j].first].pixels[assignment[j].second];
    energy += params.alpha * (*proj[j] - q).norm();
    if (j > 0 && assignment[j - 1].first >= 0) {
      const Vec2 qp = frame.chains[assignment[j - 1].first].pixels[assignment[j - 1].second];
      energy += ((*proj[j - 1] - *proj[j]) - (qp - q)).norm();
    }
  }
  return energy;
}

namespace {

MatchSet assemble(const CurveNetwork& net, const std::vector<Branch>& net_branches,
                  const FramePose& pose, const CameraIntrinsics& K, const SkeletalFrame& frame,
                  const MatchParams& params, bool naive) {
  MatchSet set;
  set.points.assign(net.points.size(), PointMatch{});
  set.occluded.assign(net.points.size(), 1);
  std::vector<uint8_t> written(net.points.size(), 0);

  for (const auto& branch : net_branches) {
    std::vector<std::optional<Vec2>> proj(branch.points.size());
    for (size_t i = 0; i < branch.points.size(); ++i) {
      const auto p = project(pose, K, net.points[branch.points[i]]);
      if (p) proj[i] = p->pixel;
    }

    std::vector<std::pair<int, int>> assignment;
    if (naive) {
      assignment.assign(proj.size(), {-1, -1});
      for (size_t i = 0; i < proj.size(); ++i) {
        if (!proj[i]) continue;
        if (const auto hit = frame.nearest_skeleton_pixel(*proj[i], params.radius))
          assignment[i] = {hit->chain, hit->index};
      }
      set.energy += assignment_energy(proj, assignment, frame, params);
    } else {
      BranchMatch bm = match_branch(proj, frame, params);
      assignment = std::move(bm.assignment);
      set.energy += bm.energy;
    }

    for (size_t i = 0; i < branch.points.size(); ++i) {
      const int point_id = branch.points[i];
      if (written[point_id]) continue;  // junctions: first branch wins
      written[point_id] = 1;
      if (assignment[i].first < 0) continue;
      const auto& chain = frame.chains[assignment[i].first];
      PointMatch& m = set.points[point_id];
      m.chain = assignment[i].first;
      m.index = assignment[i].second;
      m.pixel = chain.pixels[m.index];
      m.residual = *proj[i] - m.pixel;
      m.normal = chain.normals[m.index];
      m.tangent = chain.tangents[m.index];
      m.half_width = chain.half_widths[m.index];
      set.occluded[point_id] = 0;  // provisional; label_occlusion refines
    }
  }
  return set;
}

}  // namespace

MatchSet match_network(const CurveNetwork& net, const std::vector<Branch>& net_branches,
                       const FramePose& pose, const CameraIntrinsics& K,
                       const SkeletalFrame& frame, const MatchParams& params) {
  return assemble(net, net_branches, pose, K, frame, params, false);
}

MatchSet naive_match(const CurveNetwork& net, const std::vector<Branch>& net_branches,
                     const FramePose& pose, const CameraIntrinsics& K, const SkeletalFrame& frame,
                     const MatchParams& params) {
  return assemble(net, net_branches, pose, K, frame, params, true);
}

}  // namespace vid2curve
