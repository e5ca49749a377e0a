#include "vid2curve/camera.hpp"

#include <fstream>

#include <json.hpp>

namespace vid2curve {

void CameraIntrinsics::validate() const {
  if (!(f0 > 0.0)) throw IoError("intrinsics: f0 must be positive");
  if (width <= 0 || height <= 0) throw IoError("intrinsics: image size must be positive");
  if (cx < 0.0 || cx >= width || cy < 0.0 || cy >= height)
    throw IoError("intrinsics: principal point outside the image");
}

CameraIntrinsics load_intrinsics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open intrinsics file: " + path);
  nlohmann::json j;
  in >> j;
  CameraIntrinsics K;
  K.f0 = j.at("f0").get<double>();
  K.cx = j.at("cx").get<double>();
  K.cy = j.at("cy").get<double>();
  K.width = j.at("width").get<int>();
  K.height = j.at("height").get<int>();
  K.validate();
  return K;
}

void save_intrinsics(const CameraIntrinsics& K, const std::string& path) {
  nlohmann::json j{{"f0", K.f0}, {"cx", K.cx}, {"cy", K.cy},
                   {"width", K.width}, {"height", K.height}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot write intrinsics file: " + path);
  out << j.dump(2) << "\n";
}

std::optional<ProjectionJacobians> pose_jacobians(const FramePose& pose,
                                                  const CameraIntrinsics& K, const Vec3& p) {
  const Mat3 R = pose.rotation();
  const Vec3 rotated = R * p;
  const Vec3 pc = rotated + pose.translation();
  if (!(pc.z() > kMinDepth)) return std::nullopt;

  const double inv_z = 1.0 / pc.z();
  Eigen::Matrix<double, 2, 3> d_pixel;  // w.r.t. the camera-space point
  d_pixel << K.f0 * inv_z, 0.0, -K.f0 * pc.x() * inv_z * inv_z,
             0.0, K.f0 * inv_z, -K.f0 * pc.y() * inv_z * inv_z;

  // d(exp(dw) * rotated)/d dw at dw = 0 is -[rotated]x.
  Mat3 neg_skew;
  neg_skew << 0.0, rotated.z(), -rotated.y(),
              -rotated.z(), 0.0, rotated.x(),
              rotated.y(), -rotated.x(), 0.0;

  ProjectionJacobians jac;
  jac.wrt_pose.leftCols<3>() = d_pixel * neg_skew;
  jac.wrt_pose.rightCols<3>() = d_pixel;
  jac.wrt_point = d_pixel * R;
  return jac;
}

}  // namespace vid2curve
