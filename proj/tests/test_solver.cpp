#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "vid2curve/metrics.hpp"
#include "vid2curve/solver.hpp"
#include "vid2curve/synth.hpp"

using namespace vid2curve;

namespace {

const CameraIntrinsics kK{200.0, 80.0, 80.0, 160, 160};

// State with fabricated exact matches: q is the exact projection of each
// point, normals/tangents an orthonormal pair perpendicular to the branch.
ReconstructionState exact_state(const std::vector<Vec3>& points,
                                const std::vector<std::pair<int, int>>& edges,
                                const std::vector<FramePose>& poses, double lambda = 0.0) {
  ReconstructionState state;
  state.K = kK;
  state.params.lambda = lambda;
  state.net.delta0 = 1.0 / kK.f0;
  state.net.points = points;
  state.net.edges = edges;
  state.net_branches = branches(state.net);
  state.poses = poses;
  state.matches.resize(poses.size());
  for (size_t k = 0; k < poses.size(); ++k) {
    state.active.push_back(static_cast<int>(k));
    MatchSet& set = state.matches[k];
    set.frame = static_cast<int>(k);
    set.points.assign(points.size(), PointMatch{});
    set.occluded.assign(points.size(), 0);
    for (size_t j = 0; j < points.size(); ++j) {
      const auto proj = project(poses[k], kK, points[j]);
      REQUIRE(proj.has_value());
      PointMatch& m = set.points[j];
      m.chain = 0;
      m.index = static_cast<int>(j);
      m.pixel = proj->pixel;
      m.normal = Vec2(0.0, 1.0);
      m.tangent = Vec2(1.0, 0.0);
    }
  }
  return state;
}

std::vector<FramePose> ring_of_poses(int count, double radius = 1.0) {
  std::vector<FramePose> poses;
  for (int i = 0; i < count; ++i) {
    const double a = 2.0 * M_PI * i / std::max(1, count);
    const Vec3 center(radius * std::cos(a), radius * std::sin(a), 0.35);
    const Vec3 forward = (-center).normalized();
    Vec3 up(0, 0, 1);
    Vec3 right = up.cross(forward).normalized();
    const Vec3 down = forward.cross(right);
    Mat3 R;
    R.row(0) = right.transpose();
    R.row(1) = down.transpose();
    R.row(2) = forward.transpose();
    poses.push_back(FramePose::from_matrix(R, -(R * center)));
  }
  return poses;
}

// Straight wire through the origin, delta0-spaced.
void straight_branch(int n, std::vector<Vec3>* points, std::vector<std::pair<int, int>>* edges) {
  const double delta0 = 1.0 / kK.f0;
  for (int i = 0; i < n; ++i)
    points->emplace_back((i - n / 2) * delta0, 0.02, 0.01);
  for (int i = 0; i + 1 < n; ++i) edges->emplace_back(i, i + 1);
}

}  // namespace

TEST_CASE("objective is zero for perfect reprojection of straight branches") {
  std::vector<Vec3> points;
  std::vector<std::pair<int, int>> edges;
  straight_branch(20, &points, &edges);
  auto state = exact_state(points, edges, ring_of_poses(4), 100.0);
  CHECK(objective(state) == doctest::Approx(0.0));
}

TEST_CASE("objective weights normal and tangent residuals as 1 and w") {
  // One point, one frame; residual manufactured against stored q/n/t.
  std::vector<Vec3> points = {Vec3(0, 0, 0)};
  auto state = exact_state(points, {}, {FramePose(Eigen::Quaterniond::Identity(), Vec3(0, 0, 1))},
                           1.0);
  auto& m = state.matches[0].points[0];

  SUBCASE("residual along the normal counts fully") {
    m.pixel += Vec2(-1.0, 0.0);  // v = (1, 0)
    m.normal = Vec2(1.0, 0.0);
    m.tangent = Vec2(0.0, 1.0);
    CHECK(objective(state) == doctest::Approx(1.0));
  }
  SUBCASE("residual along the tangent is half-weighted") {
    m.pixel += Vec2(0.0, -1.0);  // v = (0, 1)
    m.normal = Vec2(1.0, 0.0);
    m.tangent = Vec2(0.0, 1.0);
    CHECK(objective(state) == doctest::Approx(0.5));
  }
}

TEST_CASE("occluded points contribute exactly zero data energy") {
  std::vector<Vec3> points;
  std::vector<std::pair<int, int>> edges;
  straight_branch(12, &points, &edges);
  auto state = exact_state(points, edges, ring_of_poses(3), 50.0);
  const int j = 6;
  for (int k = 0; k < 3; ++k) state.matches[k].occluded[j] = 1;

  const double before = objective(state);
  // Slide the occluded point along the first camera's view ray by 10*delta0.
  const Vec3 ray =
      (state.net.points[j] - state.poses[0].center()).normalized();
  auto moved = state;
  moved.net.points[j] += 10.0 * state.net.delta0 * ray;

  auto smooth_only = [&](const ReconstructionState& s) {
    double sum = 0.0;
    for (const auto& branch : s.net_branches)
      for (size_t i = 1; i + 1 < branch.points.size(); ++i)
        sum += (s.net.points[branch.points[i + 1]] - 2.0 * s.net.points[branch.points[i]] +
                s.net.points[branch.points[i - 1]])
                   .squaredNorm();
    return s.params.lambda * static_cast<double>(s.active.size()) * sum;
  };
  const double delta_objective = objective(moved) - before;
  const double delta_smooth = smooth_only(moved) - smooth_only(state);
  CHECK(delta_objective == doctest::Approx(delta_smooth).epsilon(1e-12));
}

TEST_CASE("objective is gauge invariant up to the s^2 smoothness scaling") {
  std::vector<Vec3> points;
  std::vector<std::pair<int, int>> edges;
  const double delta0 = 1.0 / kK.f0;
  // A bent branch so the smoothness term is nonzero.
  for (int i = 0; i < 15; ++i)
    points.emplace_back((i - 7) * delta0, 0.02 + 0.2 * std::pow((i - 7) * delta0, 2.0), 0.01);
  for (int i = 0; i + 1 < 15; ++i) edges.emplace_back(i, i + 1);
  auto state = exact_state(points, edges, ring_of_poses(4), 123.0);
  // Perturb the stored pixels so the data term is nonzero too.
  for (auto& set : state.matches)
    for (auto& m : set.points) m.pixel += Vec2(0.4, -0.2);

  const double data_before = objective(state) - 123.0 * 4 *
      [&] {
        double sum = 0.0;
        for (size_t i = 1; i + 1 < points.size(); ++i)
          sum += (points[i + 1] - 2.0 * points[i] + points[i - 1]).squaredNorm();
        return sum;
      }();

  // Global similarity: rotate, scale, translate the scene; poses compensate.
  const double s = 2.3;
  const Mat3 R = Eigen::AngleAxisd(0.7, Vec3(1, 2, 3).normalized()).toRotationMatrix();
  const Vec3 t(0.3, -0.2, 0.5);
  auto transformed = state;
  for (auto& p : transformed.net.points) p = s * (R * p) + t;
  for (auto& pose : transformed.poses) {
    const Mat3 R_new = pose.rotation() * R.transpose();
    const Vec3 t_new = s * pose.translation() - R_new * t;
    pose = FramePose::from_matrix(R_new, t_new);
  }

  double smooth_sum = 0.0;
  for (size_t i = 1; i + 1 < points.size(); ++i)
    smooth_sum += (points[i + 1] - 2.0 * points[i] + points[i - 1]).squaredNorm();

  const double data_after = objective(transformed) - 123.0 * 4 * s * s * smooth_sum;
  CHECK(data_after == doctest::Approx(data_before).epsilon(1e-9));
  CHECK(objective(transformed) - data_after ==
        doctest::Approx(s * s * (objective(state) - data_before)).epsilon(1e-9));
}

TEST_CASE("pose_step returns a zero update at an exact stationary point") {
  // Two transverse branches: a single straight line would leave rotation
  // about its own axis unobservable.
  std::vector<Vec3> points;
  std::vector<std::pair<int, int>> edges;
  straight_branch(20, &points, &edges);
  const double delta0 = 1.0 / kK.f0;
  const int base = static_cast<int>(points.size());
  for (int i = 0; i < 20; ++i) points.emplace_back(-0.01, 0.02 + (i - 10) * delta0, 0.015);
  for (int i = 0; i + 1 < 20; ++i) edges.emplace_back(base + i, base + i + 1);
  const auto poses = ring_of_poses(3);
  auto state = exact_state(points, edges, poses);
  const FramePose updated = pose_step(state, 0);
  CHECK((updated.translation() - poses[0].translation()).norm() < 1e-9);
  CHECK(updated.quaternion().angularDistance(poses[0].quaternion()) < 1e-9);
}

TEST_CASE("pose_step recovers a perturbed pose on exact data") {
  std::vector<Vec3> points;
  std::vector<std::pair<int, int>> edges;
  straight_branch(24, &points, &edges);
  // A second, transverse branch removes the rank deficiency a single straight
  // line leaves in the pose normal equations.
  const int base = static_cast<int>(points.size());
  const double delta0 = 1.0 / kK.f0;
  for (int i = 0; i < 24; ++i) points.emplace_back(-0.01, 0.02 + (i - 12) * delta0, 0.015);
  for (int i = 0; i + 1 < 24; ++i) edges.emplace_back(base + i, base + i + 1);

  const auto poses = ring_of_poses(3);
  auto state = exact_state(points, edges, poses);
  // Fix normals per frame from the actual projected branch directions.
  for (int k = 0; k < 3; ++k) {
    for (int j = 0; j < static_cast<int>(points.size()); ++j) {
      const Vec2 a = project(poses[k], kK, points[j == 0 ? 0 : j - 1])->pixel;
      const Vec2 b = project(poses[k], kK, points[std::min<int>(points.size() - 1, j + 1)])->pixel;
      Vec2 t = (b - a).normalized();
      state.matches[k].points[j].tangent = t;
      state.matches[k].points[j].normal = Vec2(-t.y(), t.x());
    }
  }

  const double angle = 0.5 * M_PI / 180.0;
  state.poses[0] = apply_increment(poses[0], angle * Vec3(0.3, -0.5, 0.8).normalized(),
                                   Vec3(0.006, -0.008, 0.002));
  const FramePose recovered = pose_step(state, 0);
  state.poses[0] = recovered;
  // Residual objective floor is zero for exact data.
  double data = 0.0;
  for (size_t j = 0; j < points.size(); ++j) {
    const auto proj = project(recovered, kK, points[j]);
    REQUIRE(proj.has_value());
    const Vec2 v = proj->pixel - state.matches[0].points[j].pixel;
    data += std::pow(v.dot(state.matches[0].points[j].normal), 2) +
            0.5 * std::pow(v.dot(state.matches[0].points[j].tangent), 2);
  }
  CHECK(data < 1e-3);
}

TEST_CASE("pose_step with two visible points is singular") {
  std::vector<Vec3> points = {Vec3(0, 0, 0), Vec3(0.01, 0, 0)};
  auto state = exact_state(points, {{0, 1}},
                           {FramePose(Eigen::Quaterniond::Identity(), Vec3(0, 0, 1))});
  CHECK_THROWS_AS(pose_step(state, 0), SingularNormalError);
}

TEST_CASE("point_step leaves exact straight-branch data unchanged") {
  std::vector<Vec3> points;
  std::vector<std::pair<int, int>> edges;
  straight_branch(20, &points, &edges);
  auto state = exact_state(points, edges, ring_of_poses(4), 100.0);
  const auto before = state.net.points;
  point_step(state);
  for (size_t j = 0; j < before.size(); ++j)
    CHECK((state.net.points[j] - before[j]).norm() < 1e-9);
}

TEST_CASE("point_step pulls a displaced point back onto the branch") {
  std::vector<Vec3> points;
  std::vector<std::pair<int, int>> edges;
  straight_branch(30, &points, &edges);
  auto state = exact_state(points, edges, ring_of_poses(8), 0.0);
  state.params.lambda = (2.5 * kK.f0) * (2.5 * kK.f0);  // default weight

  const double delta0 = state.net.delta0;
  const int j = 15;
  const Vec3 original = state.net.points[j];
  state.net.points[j] += Vec3(0, 0.7 * delta0, 0.7 * delta0);  // roughly delta0 off the line

  for (int step = 0; step < 3; ++step) point_step(state);
  CHECK((state.net.points[j] - original).norm() < 0.1 * delta0);
}

TEST_CASE("an unmatched interior point is pulled toward its neighbors' midpoint") {
  std::vector<Vec3> points;
  std::vector<std::pair<int, int>> edges;
  straight_branch(15, &points, &edges);
  auto state = exact_state(points, edges, ring_of_poses(4), 0.0);
  state.params.lambda = (2.5 * kK.f0) * (2.5 * kK.f0);
  const int j = 7;
  for (auto& set : state.matches) set.occluded[j] = 1;
  state.net.points[j] += Vec3(0, 0.004, 0.002);

  const Vec3 midpoint = 0.5 * (state.net.points[j - 1] + state.net.points[j + 1]);
  const double before = (state.net.points[j] - midpoint).norm();
  point_step(state);
  const Vec3 midpoint_after = 0.5 * (state.net.points[j - 1] + state.net.points[j + 1]);
  CHECK((state.net.points[j] - midpoint_after).norm() < before);
}

TEST_CASE("frozen objective is non-increasing across pose and point steps") {
  std::vector<Vec3> points;
  std::vector<std::pair<int, int>> edges;
  straight_branch(25, &points, &edges);
  auto state = exact_state(points, edges, ring_of_poses(5), 50.0);
  std::mt19937_64 rng(17);
  std::normal_distribution<double> gauss(0.0, 0.5);
  // Perturb everything so the steps have work to do.
  for (auto& set : state.matches)
    for (auto& m : set.points) m.pixel += Vec2(gauss(rng), gauss(rng));
  for (auto& p : state.net.points)
    p += 0.3 * state.net.delta0 * Vec3(gauss(rng), gauss(rng), gauss(rng));

  double current = objective(state);
  for (int iter = 0; iter < 3; ++iter) {
    for (int k : state.active) state.poses[k] = pose_step(state, k);
    const double after_pose = objective(state);
    CHECK(after_pose <= current * (1.0 + 1e-12) + 1e-15);
    point_step(state);
    const double after_point = objective(state);
    CHECK(after_point <= after_pose * (1.0 + 1e-12) + 1e-15);
    current = after_point;
  }
}

TEST_CASE("bootstrap refuses a pure in-place rotation sequence") {
  const WireModel model = make_model("cube_frame");
  SceneConfig cfg;
  cfg.K = kK;
  const Vec3 center(0.0, -1.0, 0.0);
  std::vector<SkeletalFrame> frames;
  for (int i = 0; i < 4; ++i) {
    // Camera pivots about its own center; no translation at all.
    const double a = 0.01 * i;
    Mat3 R;
    R.row(0) = Vec3(1, 0, 0).transpose();
    R.row(1) = Vec3(0, 0, -1).transpose();
    R.row(2) = Vec3(0, 1, 0).transpose();
    const Mat3 tweak = Eigen::AngleAxisd(a, Vec3::UnitY()).toRotationMatrix();
    const Mat3 Rk = tweak * R;
    const FramePose pose = FramePose::from_matrix(Rk, -(Rk * center));
    frames.push_back(preprocess_mask(render_frame(model, pose, cfg.K, cfg, i).mask));
  }
  SolverParams params;
  CHECK_THROWS_AS(bootstrap(frames, cfg.K, params), NoBaselineError);
}

TEST_CASE("bootstrap recovers relative geometry of a 0.1-baseline pair") {
  const WireModel model = make_model("cube_frame");
  SceneConfig cfg;
  cfg.K = kK;
  const double gap = 2.0 * std::asin(0.05);  // chord 0.1 on the unit orbit
  std::vector<FramePose> gt;
  for (const double a : {0.0, gap}) {
    // Oblique view: edge-on views stack the near and far faces on top of
    // each other, which is a self-occlusion stress case, not a two-view one.
    const Vec3 center(std::cos(a), std::sin(a), 0.35);
    const Vec3 forward = (-center).normalized();
    Vec3 up(0, 0, 1);
    const Vec3 right = up.cross(forward).normalized();
    const Vec3 down = forward.cross(right);
    Mat3 R;
    R.row(0) = right.transpose();
    R.row(1) = down.transpose();
    R.row(2) = forward.transpose();
    gt.push_back(FramePose::from_matrix(R, -(R * center)));
  }
  std::vector<SkeletalFrame> frames;
  std::vector<RenderResult> renders;
  for (int i = 0; i < 2; ++i) {
    renders.push_back(render_frame(model, gt[i], cfg.K, cfg, i));
    frames.push_back(preprocess_mask(renders[i].mask));
  }

  SolverParams params;
  const BootstrapResult boot = bootstrap(frames, cfg.K, params);
  CHECK(boot.partner == 1);

  // Relative translation direction within 2 degrees of the truth.
  const FramePose rel_gt = compose(gt[1], gt[0].inverse());
  const Vec3 dir_gt = rel_gt.center().normalized();
  const Vec3 dir_est = boot.partner_pose.center().normalized();
  const double angle = std::acos(std::clamp(dir_gt.dot(dir_est), -1.0, 1.0));
  CHECK(angle < 2.0 * M_PI / 180.0);

  // Depths within 2% of ground truth after scale alignment.
  std::vector<double> ratio;
  std::vector<std::pair<double, double>> depth_pairs;
  for (size_t m = 0; m < boot.source_pixels.size(); ++m) {
    const int x = static_cast<int>(boot.source_pixels[m].x());
    const int y = static_cast<int>(boot.source_pixels[m].y());
    const int sample = renders[0].pixel_to_sample[static_cast<size_t>(y) * cfg.K.width + x];
    if (sample < 0) continue;
    const double gt_depth = gt[0].apply(renders[0].sample_points[sample]).z();
    depth_pairs.emplace_back(boot.depths[m], gt_depth);
    ratio.push_back(gt_depth / boot.depths[m]);
  }
  REQUIRE(ratio.size() > 50);
  std::sort(ratio.begin(), ratio.end());
  const double scale = ratio[ratio.size() / 2];
  std::vector<double> rel_err;
  for (const auto& [est, truth] : depth_pairs)
    rel_err.push_back(std::abs(scale * est - truth) / truth);
  std::sort(rel_err.begin(), rel_err.end());
  CHECK(rel_err[rel_err.size() / 2] < 0.02);
}

TEST_CASE("bootstrap picks the first pair above the baseline threshold") {
  const WireModel model = make_model("cube_frame");
  SceneConfig cfg;
  cfg.K = kK;
  // Frames 1..4 nearly coincide with frame 0; frame 5 moves far enough.
  std::vector<double> angles = {0.0, 0.004, 0.008, 0.012, 0.016, 0.09};
  std::vector<SkeletalFrame> frames;
  for (size_t i = 0; i < angles.size(); ++i) {
    const double a = angles[i];
    const Vec3 center(std::cos(a), std::sin(a), 0.0);
    const Vec3 forward = (-center).normalized();
    Vec3 up(0, 0, 1);
    const Vec3 right = up.cross(forward).normalized();
    const Vec3 down = forward.cross(right);
    Mat3 R;
    R.row(0) = right.transpose();
    R.row(1) = down.transpose();
    R.row(2) = forward.transpose();
    const FramePose pose = FramePose::from_matrix(R, -(R * center));
    frames.push_back(preprocess_mask(render_frame(model, pose, cfg.K, cfg, static_cast<int>(i)).mask));
  }
  SolverParams params;
  const BootstrapResult boot = bootstrap(frames, cfg.K, params);
  CHECK(boot.partner == 5);
}

TEST_CASE("run reconstructs a small y_junction scene end to end") {
  const WireModel model = make_model("y_junction");
  SceneConfig cfg;
  cfg.K = kK;
  cfg.n_frames = 16;
  cfg.seed = 5;
  const auto gt_poses = make_trajectory(cfg);
  std::vector<SkeletalFrame> frames;
  for (int i = 0; i < cfg.n_frames; ++i)
    frames.push_back(preprocess_mask(render_frame(model, gt_poses[i], cfg.K, cfg, i).mask));

  SolverParams params;
  std::vector<TraceRow> trace;
  const ReconstructionState state = run(frames, cfg.K, params, &trace);
  CHECK(state.active.size() + state.skipped.size() == static_cast<size_t>(cfg.n_frames));
  CHECK(state.skipped.size() <= 2);
  REQUIRE(state.net.points.size() > 50);

  // Frozen-matches monotonicity over the whole trace (criterion audit).
  for (size_t i = 0; i + 1 < trace.size(); ++i) {
    const auto& a = trace[i];
    const auto& b = trace[i + 1];
    if (a.frames_active != b.frames_active || a.outer_iter != b.outer_iter) continue;
    if ((a.phase == "match" && b.phase == "pose") || (a.phase == "pose" && b.phase == "point"))
      CHECK(b.objective <= a.objective * (1.0 + 1e-12) + 1e-12);
  }

  // Reconstruction quality: aligned distance from the network points to the
  // GT wire within a couple of sampling distances on average.
  std::vector<Vec3> gt_samples;
  gt_reference_samples(model, state.net.delta0 / 4.0, &gt_samples, nullptr);
  std::vector<FramePose> est_poses;
  std::vector<FramePose> gt_active;
  for (int id : state.active) {
    est_poses.push_back(state.poses[id]);
    gt_active.push_back(gt_poses[id]);
  }
  const SimilarityTransform align =
      align_reconstruction(est_poses, gt_active, state.net.points, gt_samples);
  double mean = 0.0;
  for (const auto& p : state.net.points) {
    double best = 1e9;
    const Vec3 moved = align.apply(p);
    for (const auto& g : gt_samples) best = std::min(best, (moved - g).norm());
    mean += best;
  }
  mean /= static_cast<double>(state.net.points.size());
  CHECK(mean < 2.0 * state.net.delta0);
}
