#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vid2curve/camera.hpp"
#include "vid2curve/image.hpp"
#include "vid2curve/pose.hpp"
#include "vid2curve/types.hpp"

namespace vid2curve {

/// One ground-truth wire: a 3D polyline with a radius per vertex.
struct WirePolyline {
  std::vector<Vec3> points;
  std::vector<double> radii;
  bool closed = false;
};

/// Ground-truth wire model: coarse structural graph (for junction/topology
/// queries) plus the polyline geometry that gets rasterized.
struct WireModel {
  std::string name;
  std::vector<Vec3> nodes;                 ///< structural vertices
  std::vector<std::pair<int, int>> links;  ///< structural connectivity
  std::vector<WirePolyline> polylines;

  std::vector<int> node_degrees() const;
  std::vector<Vec3> junction_points() const;  ///< nodes of degree >= 3
  Eigen::AlignedBox3d bounds() const;

  /// Polyline samples at the given arc-length spacing, with per-sample radius.
  void sample(double spacing, std::vector<Vec3>* points, std::vector<double>* radii) const;
};

/// Built-in models: cube_frame, grid3, torus_knot, helix, y_junction.
WireModel make_model(const std::string& name, double radius = 0.008);

struct SceneConfig {
  CameraIntrinsics K{600.0, 320.0, 320.0, 640, 640};
  int n_frames = 120;
  Vec3 orbit_center = Vec3::Zero();
  double orbit_radius = 1.0;   ///< unit object distance so delta0 = 1/f0
  double elevation = 0.35;     ///< radians above the orbit plane
  double elevation_wobble = 0.2;
  double arc_fraction = 1.0;   ///< fraction of a full turn covered by the orbit
  double shake_std_deg = 0.0;  ///< per-axis Euler perturbation of each pose
  double seg_noise_std = 0.0;  ///< boundary noise in signed-distance pixels
  uint64_t seed = 7;
};

/// Ground-truth camera path: a circular orbit around the model with optional
/// per-frame Euler-angle shake.
std::vector<FramePose> make_trajectory(const SceneConfig& cfg);

struct RenderResult {
  MaskImage mask;
  std::vector<Vec3> sample_points;      ///< rasterization samples on the GT curve
  std::vector<int32_t> pixel_to_sample; ///< per pixel, nearest sample id or -1; diagnostics only
};

/// Rasterizes the model into the view as a thick stroke: discs of projected
/// half-width r*f0/depth stamped along the projected centerline. Boundary
/// noise perturbs the signed-distance threshold per boundary pixel by a
/// clamped Gaussian. Throws OffScreenError when nothing lands in the image.
RenderResult render_frame(const WireModel& model, const FramePose& pose,
                          const CameraIntrinsics& K, const SceneConfig& cfg, int frame_index);

/// Writes masks (mask_%06d.pgm), K.json, gt_trajectory.tum and gt_model.json.
void write_scene(const WireModel& model, const SceneConfig& cfg, const std::string& dir);

WireModel load_model(const std::string& path);
void save_model(const WireModel& model, const std::string& path);

/// Deterministic per-frame RNG stream seed.
uint64_t frame_seed(uint64_t seed, int frame_index);

}  // namespace vid2curve
