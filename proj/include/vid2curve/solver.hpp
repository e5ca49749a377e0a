#pragma once

#include <functional>
#include <string>
#include <vector>

#include "vid2curve/camera.hpp"
#include "vid2curve/curve_network.hpp"
#include "vid2curve/matching.hpp"
#include "vid2curve/occlusion.hpp"
#include "vid2curve/skeleton.hpp"

namespace vid2curve {

struct SolverParams {
  double w = 0.5;              ///< tangent-direction weight of the data term
  double lambda = 0.0;         ///< smoothness weight; 0 selects (2.5/delta0)^2
  double beta = 0.03;          ///< normalized baseline threshold for the bootstrap pair
  double alpha_init = 0.01;    ///< two-view depth prior weight around d = 1
  int max_outer = 20;          ///< alternation iterations per added frame
  double point_tol_factor = 0.1;  ///< convergence: max displacement < factor * delta0
  int gn_iters = 50;
  double gn_tol = 1e-8;
  MatchParams match;
  double sigma0_mult = 10.0;   ///< sigma0 = mult * delta0
  int branch_hop_limit = 10;
  bool naive_matching = false; ///< ablation: closest-point assignment
  bool use_occlusion = true;   ///< ablation: keep every matched point reliable
  int threads = 1;
  int max_frames = 0;          ///< 0 = use every frame
};

/// Progressive reconstruction state over the active frame set.
struct ReconstructionState {
  CurveNetwork net;
  std::vector<Branch> net_branches;
  CameraIntrinsics K;
  SolverParams params;
  std::vector<FramePose> poses;    ///< indexed by frame id
  std::vector<MatchSet> matches;   ///< indexed by frame id; valid for active frames
  std::vector<int> active;         ///< frame ids in addition order
  std::vector<int> skipped;        ///< frames dropped after failed pose estimation
  const std::vector<SkeletalFrame>* frames = nullptr;

  double sigma0() const { return params.sigma0_mult * net.delta0; }
};

/// One row of the objective trace used for the convergence audit.
struct TraceRow {
  int frames_active = 0;
  int outer_iter = 0;
  std::string phase;  ///< "match" | "pose" | "point"
  double objective = 0.0;
  double max_disp = 0.0;
};

struct BootstrapResult {
  int partner = -1;          ///< frame paired with frame 0
  FramePose partner_pose;    ///< world-to-camera of the partner frame
  std::vector<Vec3> points;  ///< matched frame-0 pixels lifted by their depths
  std::vector<Vec2> source_pixels;
  std::vector<double> depths;
};

/// Selects the bootstrap pair (frame 0, frame i) and jointly estimates their
/// relative pose and per-pixel depths by two-view curve bundle adjustment.
/// The first pair whose normalized baseline exceeds params.beta wins. Throws
/// NoBaselineError when every pair stays below the threshold and
/// DegenerateMotionError when the two-view optimization diverges.
BootstrapResult bootstrap(const std::vector<SkeletalFrame>& frames, const CameraIntrinsics& K,
                          const SolverParams& params);

/// Gated objective over the active frames with the current matches frozen:
///   sum_k sum_j I_occ * ((v.n)^2 + w (v.t)^2) + lambda * K_active * smoothness.
double objective(const ReconstructionState& state);

/// Gauss-Newton over one frame's 6-dof pose with matches frozen; steps are
/// line-searched so the frame's data term never increases. Throws
/// SingularNormalError when the normal matrix is rank-deficient.
FramePose pose_step(const ReconstructionState& state, int frame_id);

/// One joint Gauss-Newton step over all curve points (sparse normal equations
/// solved by conjugate gradient), line-searched against the frozen objective.
/// Applies the update and returns the largest point displacement.
double point_step(ReconstructionState& state);

/// Matches every active frame against the current network and refreshes the
/// occlusion labels.
void refresh_matches(ReconstructionState& state);

/// Lifts skeleton segments of frame `frame_id` that no projected point
/// explains into new 3D points by two-view triangulation against an earlier
/// active frame. Returns the number of points added; the network is rebuilt
/// when any were.
int spawn_points(ReconstructionState& state, int frame_id);

/// Full Phase I: bootstrap, then progressive frame addition with alternating
/// pose/point refinement until the points stop moving.
ReconstructionState run(const std::vector<SkeletalFrame>& frames, const CameraIntrinsics& K,
                        SolverParams params, std::vector<TraceRow>* trace = nullptr);

/// Deterministic parallel map: fn(i) for i in [0, n), ordered writes are the
/// caller's responsibility (use per-index slots).
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

}  // namespace vid2curve
