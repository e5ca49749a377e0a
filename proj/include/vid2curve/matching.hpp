#pragma once

#include <optional>
#include <vector>

#include "vid2curve/camera.hpp"
#include "vid2curve/curve_network.hpp"
#include "vid2curve/skeleton.hpp"
#include "vid2curve/types.hpp"

namespace vid2curve {

struct MatchParams {
  double alpha = 0.1;    ///< weight of the point-to-pixel distance term
  double radius = 10.0;  ///< candidate search radius in pixels
  int candidate_cap = 40;
};

/// Per-point correspondence and the frozen image geometry the solver needs.
struct PointMatch {
  int chain = -1;  ///< -1 when unmatched
  int index = -1;
  Vec2 pixel = Vec2::Zero();     ///< q, matched skeleton pixel
  Vec2 residual = Vec2::Zero();  ///< v = pi(R P + T) - q at matching time
  Vec2 normal = Vec2::Zero();    ///< n at q
  Vec2 tangent = Vec2::Zero();   ///< t at q
  double half_width = 0.0;       ///< projected half-width at q, pixels

  bool matched() const { return chain >= 0; }
};

/// Correspondence of the whole network into one frame, plus the per-point
/// self-occlusion flags that gate the solver's data terms.
struct MatchSet {
  int frame = -1;
  std::vector<PointMatch> points;
  std::vector<uint8_t> occluded;  ///< 1 where the data term is gated off
  double energy = 0.0;

  bool usable(int j) const { return points[j].matched() && !occluded[j]; }
};

/// Assignment of an ordered branch projection into the frame's chains.
struct BranchMatch {
  std::vector<std::pair<int, int>> assignment;  ///< (chain, index) or (-1, -1)
  double energy = 0.0;
};

/// Minimizes the matching energy
///   alpha * sum |pi(P_j) - q(j)| + sum |(pi(P_j)-pi(P_j+1)) - (q(j)-q(j+1))|
/// over per-run monotone injections into single chains by dynamic
/// programming. Candidates lie within `radius` pixels of the projection;
/// points without candidates stay unmatched and every unmatched point pays a
/// gap penalty of alpha * radius. A branch may switch chains only across a
/// gap of at least one unmatched point.
BranchMatch match_branch(const std::vector<std::optional<Vec2>>& proj, const SkeletalFrame& frame,
                         const MatchParams& params = {});

/// Runs match_branch on every branch of the network. Points behind the camera
/// stay unmatched. Occlusion flags are initialized to "unmatched == occluded";
/// label_occlusion refines them.
MatchSet match_network(const CurveNetwork& net, const std::vector<Branch>& net_branches,
                       const FramePose& pose, const CameraIntrinsics& K,
                       const SkeletalFrame& frame, const MatchParams& params = {});

/// Ablation: independent nearest-pixel-in-radius assignment with no
/// consistency term. The reported energy still uses the full formula so the
/// two strategies are comparable.
MatchSet naive_match(const CurveNetwork& net, const std::vector<Branch>& net_branches,
                     const FramePose& pose, const CameraIntrinsics& K, const SkeletalFrame& frame,
                     const MatchParams& params = {});

/// Matching energy of an arbitrary assignment, the same formula match_branch
/// minimizes. Used by naive_match and by tests.
double assignment_energy(const std::vector<std::optional<Vec2>>& proj,
                         const std::vector<std::pair<int, int>>& assignment,
                         const SkeletalFrame& frame, const MatchParams& params);

}  // namespace vid2curve
