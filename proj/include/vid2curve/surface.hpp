#pragma once

#include <array>
#include <string>
#include <vector>

#include "vid2curve/solver.hpp"

namespace vid2curve {

/// Per-point fused tube radii with the per-frame samples they came from.
struct RadiusProfile {
  std::vector<double> fused;                        ///< world units, one per network point
  std::vector<std::vector<double>> frame_samples;   ///< r_j^k over contributing frames
  std::vector<std::vector<int>> frame_ids;          ///< which frame produced each sample
  int occluded_contributions = 0;  ///< samples taken from gated-off observations; stays 0
};

/// Per-view radius r = half_width / f0 * depth, fused by the mean over frames
/// whose observation passed the occlusion test (median with use_median).
/// Points with no reliable observation inherit the nearest fused radius along
/// their branch.
RadiusProfile estimate_radii(const ReconstructionState& state, bool use_median = false);

struct SweepSurface {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;
  std::vector<int> ring_center;  ///< per ring, the network point index it sweeps
};

/// Generalized-cylinder mesh: a 12-gon ring per network point, oriented by
/// rotation-minimizing frames along each branch, stitched into tubes with fan
/// caps at open ends. Closed branches weld their last ring to the first;
/// single-point branches become small spheres.
SweepSurface sweep_mesh(const CurveNetwork& net, const std::vector<double>& radii,
                        int sides = 12);

void save_mesh_obj(const SweepSurface& mesh, const std::string& path);
void save_mesh_ply(const SweepSurface& mesh, const std::string& path);  ///< binary little-endian

}  // namespace vid2curve
