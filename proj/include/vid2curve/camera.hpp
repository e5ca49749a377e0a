#pragma once

#include <optional>
#include <string>

#include "vid2curve/pose.hpp"
#include "vid2curve/types.hpp"

namespace vid2curve {

/// Depth below which the perspective divide is refused.
inline constexpr double kMinDepth = 1e-6;

/// Fixed pinhole intrinsics shared by all frames.
struct CameraIntrinsics {
  double f0 = 0.0;  ///< focal length in pixels
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  /// Sampling distance of the curve network under the unit-object-distance
  /// convention: one pixel at depth 1 subtends 1/f0 world units.
  double delta0() const { return 1.0 / f0; }

  bool contains(const Vec2& px) const {
    return px.x() >= 0.0 && px.x() < width && px.y() >= 0.0 && px.y() < height;
  }

  void validate() const;
};

CameraIntrinsics load_intrinsics(const std::string& path);
void save_intrinsics(const CameraIntrinsics& K, const std::string& path);

struct Projection {
  Vec2 pixel;
  double depth;  ///< camera-space z, used by the radius estimate
};

/// Pinhole projection. Empty when the camera-space depth is <= kMinDepth.
inline std::optional<Projection> project(const FramePose& pose, const CameraIntrinsics& K,
                                         const Vec3& p) {
  const Vec3 pc = pose.apply(p);
  if (!(pc.z() > kMinDepth)) return std::nullopt;
  return Projection{Vec2(K.f0 * pc.x() / pc.z() + K.cx, K.f0 * pc.y() / pc.z() + K.cy), pc.z()};
}

struct ProjectionJacobians {
  Eigen::Matrix<double, 2, 6> wrt_pose;   ///< columns: axis-angle increment, then translation
  Eigen::Matrix<double, 2, 3> wrt_point;  ///< pixel w.r.t. the world point
};

/// Analytic Jacobians of project(). The rotation derivative is taken with
/// respect to a left-multiplicative axis-angle increment at zero.
std::optional<ProjectionJacobians> pose_jacobians(const FramePose& pose,
                                                  const CameraIntrinsics& K, const Vec3& p);

/// Back-projected ray direction in camera coordinates, scaled so z == 1.
/// Multiplying by a z-depth yields the camera-space point.
inline Vec3 pixel_ray(const CameraIntrinsics& K, const Vec2& px) {
  return Vec3((px.x() - K.cx) / K.f0, (px.y() - K.cy) / K.f0, 1.0);
}

}  // namespace vid2curve
