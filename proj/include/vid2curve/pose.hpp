#pragma once

#include <Eigen/Geometry>

#include "vid2curve/types.hpp"

namespace vid2curve {

/// Rigid world-to-camera transform: p_cam = R * p_world + T.
/// The rotation is kept as a unit quaternion whose coefficients are stored
/// scalar-last (x, y, z, w), which is also the TUM trajectory order.
class FramePose {
 public:
  FramePose() : q_(Eigen::Quaterniond::Identity()), t_(Vec3::Zero()) {}
  FramePose(const Eigen::Quaterniond& q, const Vec3& t) : q_(q.normalized()), t_(t) {}

  static FramePose from_matrix(const Mat3& rotation, const Vec3& translation) {
    return FramePose(Eigen::Quaterniond(rotation), translation);
  }

  Vec3 apply(const Vec3& p) const { return q_ * p + t_; }

  Mat3 rotation() const { return q_.toRotationMatrix(); }
  const Eigen::Quaterniond& quaternion() const { return q_; }
  const Vec3& translation() const { return t_; }

  /// Camera center in world coordinates.
  Vec3 center() const { return q_.conjugate() * (-t_); }

  FramePose inverse() const { return FramePose(q_.conjugate(), q_.conjugate() * (-t_)); }

 private:
  Eigen::Quaterniond q_;
  Vec3 t_;
};

/// Exponential map from an axis-angle vector to a unit quaternion.
inline Eigen::Quaterniond axis_angle_quaternion(const Vec3& w) {
  const double angle = w.norm();
  if (angle < 1e-14) {
    Eigen::Quaterniond q(1.0, 0.5 * w.x(), 0.5 * w.y(), 0.5 * w.z());
    return q.normalized();
  }
  return Eigen::Quaterniond(Eigen::AngleAxisd(angle, w / angle));
}

/// Function composition: compose(a, b) maps x to a(b(x)).
inline FramePose compose(const FramePose& a, const FramePose& b) {
  return FramePose(a.quaternion() * b.quaternion(),
                   a.quaternion() * b.translation() + a.translation());
}

/// Relative transform a^-1 ∘ b, so that compose(a, relative_pose(a, b)) == b.
inline FramePose relative_pose(const FramePose& a, const FramePose& b) {
  return compose(a.inverse(), b);
}

/// Left-multiplicative update: rotation becomes exp(dw) * R, translation T + dt.
inline FramePose apply_increment(const FramePose& pose, const Vec3& dw, const Vec3& dt) {
  return FramePose(axis_angle_quaternion(dw) * pose.quaternion(), pose.translation() + dt);
}

inline double rotation_angle(const FramePose& a, const FramePose& b) {
  return a.quaternion().angularDistance(b.quaternion());
}

}  // namespace vid2curve
