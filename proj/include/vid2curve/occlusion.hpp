#pragma once

#include <string>

#include "vid2curve/curve_network.hpp"
#include "vid2curve/matching.hpp"

namespace vid2curve {

struct OcclusionParams {
  double sigma0 = 0.0;       ///< spatial-compactness threshold, world units (10 * delta0)
  int window = 1;            ///< half-window in pixels around the matched pixel (1 -> 3x3)
  int branch_hop_limit = 10; ///< graph hops that still count as "same local branch"
};

/// Labels each matched point of the frame as self-occluded or reliable.
/// For point j, the 3D points matched into the window around its matched
/// pixel form a set; j is occluded when the standard deviation of that set's
/// distances-to-centroid reaches sigma0, or when the set mixes points more
/// than branch_hop_limit edges apart on the network. Unmatched points are
/// occluded.
void label_occlusion(const CurveNetwork& net, MatchSet& matches, const SkeletalFrame& frame,
                     const OcclusionParams& params);

/// Debug export: skeleton pixels matched by a reliable point at 255, the rest
/// of the skeleton at 128.
void write_occlusion_overlay(const SkeletalFrame& frame, const MatchSet& matches,
                             const std::string& path);

}  // namespace vid2curve
