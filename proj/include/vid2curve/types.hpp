#pragma once

#include <Eigen/Core>
#include <stdexcept>
#include <string>

namespace vid2curve {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// 2D cross product, the scalar z-component of the 3D cross of (a,0) and (b,0).
inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

// Error conditions that abort an operation. Expected absences (point behind
// camera, no pixel in range, capped path search) are std::optional instead.

struct EmptyMaskError : std::runtime_error {
  EmptyMaskError() : std::runtime_error("mask has no foreground pixels") {}
};

struct NoBaselineError : std::runtime_error {
  NoBaselineError() : std::runtime_error("no frame pair exceeds the baseline threshold") {}
};

struct DegenerateMotionError : std::runtime_error {
  DegenerateMotionError() : std::runtime_error("two-view optimization diverged") {}
};

struct SingularNormalError : std::runtime_error {
  SingularNormalError() : std::runtime_error("pose normal equations are rank-deficient") {}
};

struct TooShortError : std::runtime_error {
  explicit TooShortError(const std::string& what) : std::runtime_error(what) {}
};

struct OffScreenError : std::runtime_error {
  OffScreenError() : std::runtime_error("model projects entirely outside the image") {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace vid2curve
