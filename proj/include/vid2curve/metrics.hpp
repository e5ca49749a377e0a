#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vid2curve/camera.hpp"
#include "vid2curve/curve_network.hpp"
#include "vid2curve/pose.hpp"
#include "vid2curve/synth.hpp"

namespace vid2curve {

struct SimilarityTransform {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return scale * (rotation * p) + translation; }
  static SimilarityTransform identity() { return {}; }
};

/// Closed-form similarity fit (Umeyama) between corresponding point lists.
SimilarityTransform umeyama_alignment(const std::vector<Vec3>& from, const std::vector<Vec3>& to);

/// Similarity alignment of a reconstruction into the ground-truth frame:
/// Umeyama on per-frame camera centers (exact correspondence by index), then
/// a few scaled-ICP rounds against the sampled ground-truth curve. The ICP
/// stage runs only when reconstruction points are supplied.
SimilarityTransform align_reconstruction(const std::vector<FramePose>& est_world_to_cam,
                                         const std::vector<FramePose>& gt_world_to_cam,
                                         const std::vector<Vec3>& rec_points,
                                         const std::vector<Vec3>& gt_samples, int icp_iters = 10);

/// Evaluation metrics. TPE/TRE are (correct, total) fraction pairs.
struct MetricsReport {
  double re = 0.0;
  double rre = 0.0;
  double pe = 0.0;
  double rpe = 0.0;
  double path_length = 0.0;
  int delta = 30;
  std::pair<int, int> tpe{0, 0};
  std::pair<int, int> tre{0, 0};
  double gt_diag_3d = 0.0;  ///< normalization constant of RE
};

/// Arc-length samples of the model used as the ground-truth reference set.
/// The spacing is small against the reconstruction sampling distance so the
/// discretization bias of nearest-sample distances stays negligible.
void gt_reference_samples(const WireModel& gt, double spacing, std::vector<Vec3>* points,
                          std::vector<double>* radii);

/// RE: mean distance from aligned reconstruction points to the nearest GT
/// sample, normalized by the GT bounding-box diagonal. RRE: the same distance
/// relative to the local tube diameter. Distances are accumulated in sorted
/// order, so the result is independent of point order.
std::pair<double, double> reconstruction_error(const CurveNetwork& rec, const WireModel& gt,
                                               const SimilarityTransform& align);

/// PE: mean distance from projected reconstruction points (estimated poses)
/// to the nearest projected GT centerline sample (ground-truth poses), per
/// frame normalized by the GT 2D bounding-box diagonal.
double projection_error(const std::vector<Vec3>& rec_points,
                        const std::vector<FramePose>& est_poses,
                        const std::vector<FramePose>& gt_poses, const CameraIntrinsics& K,
                        const WireModel& gt);

/// TUM-style relative pose error over frame gap delta, after least-squares
/// scale alignment of the estimated trajectory. Returns (RPE, mean path
/// length per delta). Throws TooShortError when frames <= delta.
std::pair<double, double> relative_pose_error(const std::vector<FramePose>& est_world_to_cam,
                                              const std::vector<FramePose>& gt_world_to_cam,
                                              int delta = 30);

/// Junction precision/recall by greedy nearest matching within `tol` after
/// alignment. Reconstructed junctions closer than `tol` to each other count
/// as one junction.
std::pair<std::pair<int, int>, std::pair<int, int>> topology_errors(
    const CurveNetwork& rec, const WireModel& gt, const SimilarityTransform& align, double tol);

void save_metrics_json(const MetricsReport& report, const std::string& path);
void save_metrics_csv(const MetricsReport& report, const std::string& path);

}  // namespace vid2curve
