#include "vid2curve/metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

namespace vid2curve {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Uniform-grid nearest-neighbor index over 3D points. Exact: the search ring
// grows until the best squared distance is certified.
class NearestPoint3 {
 public:
  explicit NearestPoint3(const std::vector<Vec3>& points) : points_(points) {
    if (points.empty()) return;
    Eigen::AlignedBox3d box;
    for (const auto& p : points) box.extend(p);
    const double volume = std::max(1e-30, box.volume());
    cell_ = std::max(1e-12, std::cbrt(volume / points.size()) * 2.0);
    origin_ = box.min();
    for (int a = 0; a < 3; ++a)
      dims_[a] = std::max(1, static_cast<int>((box.max()[a] - origin_[a]) / cell_) + 1);
    cells_.resize(static_cast<size_t>(dims_[0]) * dims_[1] * dims_[2]);
    for (size_t i = 0; i < points.size(); ++i) cells_[cell_index(points[i])].push_back(i);
  }

  // Returns (index, distance).
  std::pair<int, double> query(const Vec3& p) const {
    double best = kInf;
    int best_id = -1;
    const auto base = coords(p);
    for (int ring = 0;; ++ring) {
      bool any_cell = false;
      for (int dz = -ring; dz <= ring; ++dz)
        for (int dy = -ring; dy <= ring; ++dy)
          for (int dx = -ring; dx <= ring; ++dx) {
            if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != ring) continue;
            const int cx = base[0] + dx, cy = base[1] + dy, cz = base[2] + dz;
            if (cx < 0 || cy < 0 || cz < 0 || cx >= dims_[0] || cy >= dims_[1] || cz >= dims_[2])
              continue;
            any_cell = true;
            for (size_t id : cells_[(static_cast<size_t>(cz) * dims_[1] + cy) * dims_[0] + cx]) {
              const double d = (points_[id] - p).norm();
              if (d < best || (d == best && static_cast<int>(id) < best_id)) {
                best = d;
                best_id = static_cast<int>(id);
              }
            }
          }
      // Certified once the next ring cannot contain anything closer.
      if (best_id >= 0 && best <= (ring)*cell_) break;
      if (!any_cell && ring > std::max({dims_[0], dims_[1], dims_[2]})) break;
    }
    return {best_id, best};
  }

 private:
  std::array<int, 3> coords(const Vec3& p) const {
    std::array<int, 3> c;
    for (int a = 0; a < 3; ++a)
      c[a] = std::clamp(static_cast<int>((p[a] - origin_[a]) / cell_), 0, dims_[a] - 1);
    return c;
  }
  size_t cell_index(const Vec3& p) const {
    const auto c = coords(p);
    return (static_cast<size_t>(c[2]) * dims_[1] + c[1]) * dims_[0] + c[0];
  }

  const std::vector<Vec3>& points_;
  double cell_ = 1.0;
  Vec3 origin_ = Vec3::Zero();
  int dims_[3] = {1, 1, 1};
  std::vector<std::vector<size_t>> cells_;
};

double sorted_mean(std::vector<double>& values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

}  // namespace

SimilarityTransform umeyama_alignment(const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
  Eigen::Matrix3Xd src(3, from.size()), dst(3, to.size());
  for (size_t i = 0; i < from.size(); ++i) src.col(i) = from[i];
  for (size_t i = 0; i < to.size(); ++i) dst.col(i) = to[i];
  const Eigen::Matrix4d T = Eigen::umeyama(src, dst, true);
  SimilarityTransform sim;
  const Mat3 sR = T.topLeftCorner<3, 3>();
  sim.scale = std::cbrt(sR.determinant());
  sim.rotation = sR / sim.scale;
  sim.translation = T.topRightCorner<3, 1>();
  return sim;
}

void gt_reference_samples(const WireModel& gt, double spacing, std::vector<Vec3>* points,
                          std::vector<double>* radii) {
  gt.sample(spacing, points, radii);
}

SimilarityTransform align_reconstruction(const std::vector<FramePose>& est,
                                         const std::vector<FramePose>& gt,
                                         const std::vector<Vec3>& rec_points,
                                         const std::vector<Vec3>& gt_samples, int icp_iters) {
  std::vector<Vec3> est_centers, gt_centers;
  for (size_t i = 0; i < std::min(est.size(), gt.size()); ++i) {
    est_centers.push_back(est[i].center());
    gt_centers.push_back(gt[i].center());
  }
  SimilarityTransform sim = est_centers.size() >= 3
                                ? umeyama_alignment(est_centers, gt_centers)
                                : SimilarityTransform::identity();
  if (rec_points.empty() || gt_samples.empty()) return sim;

  const NearestPoint3 index(gt_samples);
  for (int iter = 0; iter < icp_iters; ++iter) {
    std::vector<Vec3> moved(rec_points.size()), targets(rec_points.size());
    for (size_t i = 0; i < rec_points.size(); ++i) {
      moved[i] = sim.apply(rec_points[i]);
      targets[i] = gt_samples[index.query(moved[i]).first];
    }
    const SimilarityTransform refine = umeyama_alignment(moved, targets);
    SimilarityTransform combined;
    combined.scale = refine.scale * sim.scale;
    combined.rotation = refine.rotation * sim.rotation;
    combined.translation = refine.scale * (refine.rotation * sim.translation) + refine.translation;
    sim = combined;
  }
  return sim;
}

std::pair<double, double> reconstruction_error(const CurveNetwork& rec, const WireModel& gt,
                                               const SimilarityTransform& align) {
  std::vector<Vec3> gt_points;
  std::vector<double> gt_radii;
  const double diag = gt.bounds().diagonal().norm();
  gt_reference_samples(gt, std::max(rec.delta0 / 4.0, diag * 1e-5), &gt_points, &gt_radii);
  const NearestPoint3 index(gt_points);

  std::vector<double> dists, rel;
  dists.reserve(rec.points.size());
  rel.reserve(rec.points.size());
  for (const auto& p : rec.points) {
    const auto [id, d] = index.query(align.apply(p));
    dists.push_back(d);
    rel.push_back(d / std::max(1e-12, 2.0 * gt_radii[id]));
  }
  return {sorted_mean(dists) / diag, sorted_mean(rel)};
}

double projection_error(const std::vector<Vec3>& rec_points,
                        const std::vector<FramePose>& est_poses,
                        const std::vector<FramePose>& gt_poses, const CameraIntrinsics& K,
                        const WireModel& gt) {
  std::vector<Vec3> gt_points;
  gt_reference_samples(gt, 0.25 / K.f0, &gt_points, nullptr);

  std::vector<double> normalized;
  for (size_t frame = 0; frame < std::min(est_poses.size(), gt_poses.size()); ++frame) {
    std::vector<Vec2> gt_px;
    gt_px.reserve(gt_points.size());
    Vec2 lo(kInf, kInf), hi(-kInf, -kInf);
    for (const auto& p : gt_points) {
      if (const auto proj = project(gt_poses[frame], K, p)) {
        gt_px.push_back(proj->pixel);
        lo = lo.cwiseMin(proj->pixel);
        hi = hi.cwiseMax(proj->pixel);
      }
    }
    if (gt_px.size() < 2) continue;
    const double diag2d = (hi - lo).norm();
    if (diag2d <= 0.0) continue;

    // 2D grid over the projected GT samples.
    const double cell = 8.0;
    const int gw = std::max(1, static_cast<int>((hi.x() - lo.x()) / cell) + 1);
    const int gh = std::max(1, static_cast<int>((hi.y() - lo.y()) / cell) + 1);
    std::vector<std::vector<int>> grid(static_cast<size_t>(gw) * gh);
    for (size_t i = 0; i < gt_px.size(); ++i) {
      const int cx = std::clamp(static_cast<int>((gt_px[i].x() - lo.x()) / cell), 0, gw - 1);
      const int cy = std::clamp(static_cast<int>((gt_px[i].y() - lo.y()) / cell), 0, gh - 1);
      grid[static_cast<size_t>(cy) * gw + cx].push_back(static_cast<int>(i));
    }
    auto nearest = [&](const Vec2& p) {
      const int cx = std::clamp(static_cast<int>((p.x() - lo.x()) / cell), 0, gw - 1);
      const int cy = std::clamp(static_cast<int>((p.y() - lo.y()) / cell), 0, gh - 1);
      double best = kInf;
      for (int ring = 0; ring <= std::max(gw, gh); ++ring) {
        for (int dy = -ring; dy <= ring; ++dy)
          for (int dx = -ring; dx <= ring; ++dx) {
            if (std::max(std::abs(dx), std::abs(dy)) != ring) continue;
            const int nx = cx + dx, ny = cy + dy;
            if (nx < 0 || ny < 0 || nx >= gw || ny >= gh) continue;
            for (int id : grid[static_cast<size_t>(ny) * gw + nx])
              best = std::min(best, (gt_px[id] - p).norm());
          }
        if (best <= ring * cell) break;
      }
      return best;
    };

    std::vector<double> frame_dists;
    for (const auto& p : rec_points) {
      const auto proj = project(est_poses[frame], K, p);
      if (!proj || !K.contains(proj->pixel)) continue;  // visible points only
      frame_dists.push_back(nearest(proj->pixel) / diag2d);
    }
    std::sort(frame_dists.begin(), frame_dists.end());
    normalized.insert(normalized.end(), frame_dists.begin(), frame_dists.end());
  }
  double sum = 0.0;
  for (double v : normalized) sum += v;
  return normalized.empty() ? 0.0 : sum / static_cast<double>(normalized.size());
}

std::pair<double, double> relative_pose_error(const std::vector<FramePose>& est,
                                              const std::vector<FramePose>& gt, int delta) {
  const int n = static_cast<int>(std::min(est.size(), gt.size()));
  if (n <= delta) throw TooShortError("trajectory shorter than delta");

  // Monocular scale: least squares on relative translation norms.
  double cross = 0.0, denom = 0.0;
  for (int i = 0; i + delta < n; ++i) {
    const double gt_norm = relative_pose(gt[i], gt[i + delta]).translation().norm();
    const double est_norm = relative_pose(est[i], est[i + delta]).translation().norm();
    cross += gt_norm * est_norm;
    denom += est_norm * est_norm;
  }
  const double scale = denom > 0.0 ? cross / denom : 1.0;

  double sq_sum = 0.0, path_sum = 0.0;
  int count = 0;
  for (int i = 0; i + delta < n; ++i) {
    const FramePose rel_gt = relative_pose(gt[i], gt[i + delta]);
    FramePose rel_est = relative_pose(est[i], est[i + delta]);
    rel_est = FramePose(rel_est.quaternion(), scale * rel_est.translation());
    const FramePose err = compose(rel_gt.inverse(), rel_est);
    sq_sum += err.translation().squaredNorm();
    path_sum += rel_gt.translation().norm();
    ++count;
  }
  return {std::sqrt(sq_sum / count), path_sum / count};
}

std::pair<std::pair<int, int>, std::pair<int, int>> topology_errors(
    const CurveNetwork& rec, const WireModel& gt, const SimilarityTransform& align, double tol) {
  std::vector<Vec3> rec_junctions;
  for (const auto& j : junctions(rec)) rec_junctions.push_back(align.apply(rec.points[j.point]));

  // Merge reconstructed junctions closer than tol: a corner split into two
  // nearby degree-3 vertices is still one junction.
  std::vector<Vec3> merged;
  std::vector<uint8_t> absorbed(rec_junctions.size(), 0);
  for (size_t i = 0; i < rec_junctions.size(); ++i) {
    if (absorbed[i]) continue;
    Vec3 sum = rec_junctions[i];
    int count = 1;
    for (size_t j = i + 1; j < rec_junctions.size(); ++j) {
      if (absorbed[j]) continue;
      if ((rec_junctions[j] - rec_junctions[i]).norm() <= tol) {
        sum += rec_junctions[j];
        absorbed[j] = 1;
        ++count;
      }
    }
    merged.push_back(sum / count);
  }

  const auto gt_junctions = gt.junction_points();
  struct Pair {
    double d;
    int r, g;
    bool operator<(const Pair& o) const { return std::tie(d, r, g) < std::tie(o.d, o.r, o.g); }
  };
  std::vector<Pair> pairs;
  for (size_t r = 0; r < merged.size(); ++r)
    for (size_t g = 0; g < gt_junctions.size(); ++g) {
      const double d = (merged[r] - gt_junctions[g]).norm();
      if (d <= tol) pairs.push_back({d, static_cast<int>(r), static_cast<int>(g)});
    }
  std::sort(pairs.begin(), pairs.end());
  std::vector<uint8_t> rec_used(merged.size(), 0), gt_used(gt_junctions.size(), 0);
  int matched = 0;
  for (const auto& pair : pairs) {
    if (rec_used[pair.r] || gt_used[pair.g]) continue;
    rec_used[pair.r] = 1;
    gt_used[pair.g] = 1;
    ++matched;
  }
  return {{matched, static_cast<int>(merged.size())},
          {matched, static_cast<int>(gt_junctions.size())}};
}

void save_metrics_json(const MetricsReport& report, const std::string& path) {
  nlohmann::json j;
  j["RE"] = report.re;
  j["RRE"] = report.rre;
  j["PE"] = report.pe;
  j["RPE"] = report.rpe;
  j["path_length"] = report.path_length;
  j["delta"] = report.delta;
  j["TPE"] = {report.tpe.first, report.tpe.second};
  j["TRE"] = {report.tre.first, report.tre.second};
  j["gt_diag_3d"] = report.gt_diag_3d;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write metrics file: " + path);
  out << j.dump(2) << "\n";
}

void save_metrics_csv(const MetricsReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write metrics file: " + path);
  out << "RE,RRE,PE,TPE,TRE,RPE(delta=" << report.delta << "),path_length(delta=" << report.delta
      << ")\n";
  char line[256];
  std::snprintf(line, sizeof(line), "%.9g,%.9g,%.9g,%d/%d,%d/%d,%.9g,%.9g\n", report.re,
                report.rre, report.pe, report.tpe.first, report.tpe.second, report.tre.first,
                report.tre.second, report.rpe, report.path_length);
  out << line;
}

}  // namespace vid2curve
