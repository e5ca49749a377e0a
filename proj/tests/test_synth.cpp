#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>

#include "vid2curve/skeleton.hpp"
#include "vid2curve/synth.hpp"

using namespace vid2curve;

namespace {

SceneConfig small_scene() {
  SceneConfig cfg;
  cfg.K = CameraIntrinsics{200.0, 80.0, 80.0, 160, 160};
  cfg.n_frames = 8;
  cfg.seed = 11;
  return cfg;
}

}  // namespace

TEST_CASE("cube_frame has 8 junctions of degree 3") {
  const WireModel model = make_model("cube_frame");
  CHECK(model.links.size() == 12);
  CHECK(model.junction_points().size() == 8);
  for (int d : model.node_degrees()) CHECK(d == 3);
}

TEST_CASE("grid3 degree census") {
  const WireModel model = make_model("grid3");
  REQUIRE(model.nodes.size() == 27);
  CHECK(model.links.size() == 54);
  std::map<int, int> census;
  for (int d : model.node_degrees()) ++census[d];
  CHECK(census[3] == 8);   // corners
  CHECK(census[4] == 12);  // edge centers
  CHECK(census[5] == 6);   // face centers
  CHECK(census[6] == 1);   // body center
  CHECK(model.junction_points().size() == 27);
}

TEST_CASE("helix has no junctions") {
  const WireModel model = make_model("helix");
  CHECK(model.junction_points().empty());
}

TEST_CASE("y_junction has one degree-3 node") {
  const WireModel model = make_model("y_junction");
  CHECK(model.junction_points().size() == 1);
}

TEST_CASE("torus knot is a single closed polyline") {
  const WireModel model = make_model("torus_knot");
  REQUIRE(model.polylines.size() == 1);
  CHECK(model.polylines[0].closed);
  CHECK(model.junction_points().empty());
}

TEST_CASE("rendered stroke width follows 2*r*f0/depth") {
  // A single straight tube through the image center at depth 1.
  WireModel model;
  model.name = "bar";
  WirePolyline poly;
  poly.points = {Vec3(-0.1, 0, 0), Vec3(0.1, 0, 0)};
  poly.radii = {0.01, 0.01};
  model.polylines.push_back(poly);
  model.nodes = {poly.points[0], poly.points[1]};
  model.links = {{0, 1}};

  SceneConfig cfg = small_scene();
  // Camera 1 unit in front of the model, looking along +z.
  const FramePose pose(Eigen::Quaterniond::Identity(), Vec3(0, 0, 1));
  const auto rendered = render_frame(model, pose, cfg.K, cfg, 0);

  // Expected width: 2 * 0.01 * 200 / 1 = 4 px.
  std::vector<int> widths;
  for (int x = 60; x <= 100; ++x) {
    int column = 0;
    for (int y = 0; y < cfg.K.height; ++y) column += rendered.mask.at(x, y);
    if (column > 0) widths.push_back(column);
  }
  REQUIRE(!widths.empty());
  const double mean = std::accumulate(widths.begin(), widths.end(), 0.0) / widths.size();
  CHECK(mean == doctest::Approx(4.0).epsilon(0.3));
}

TEST_CASE("rendering is deterministic given the seed") {
  const WireModel model = make_model("cube_frame");
  SceneConfig cfg = small_scene();
  cfg.seg_noise_std = 0.5;
  const auto poses = make_trajectory(cfg);
  const auto a = render_frame(model, poses[3], cfg.K, cfg, 3);
  const auto b = render_frame(model, poses[3], cfg.K, cfg, 3);
  CHECK(a.mask == b.mask);
  SUBCASE("clean renders are unaffected by the noise path") {
    SceneConfig clean = cfg;
    clean.seg_noise_std = 0.0;
    const auto c = render_frame(model, poses[3], clean.K, clean, 3);
    const auto d = render_frame(model, poses[3], clean.K, clean, 3);
    CHECK(c.mask == d.mask);
  }
}

TEST_CASE("boundary noise stays inside a 3 px band") {
  const WireModel model = make_model("cube_frame");
  SceneConfig cfg = small_scene();
  const auto poses = make_trajectory(cfg);
  const auto clean = render_frame(model, poses[0], cfg.K, cfg, 0);

  SceneConfig noisy_cfg = cfg;
  noisy_cfg.seg_noise_std = 0.7;
  const auto noisy = render_frame(model, poses[0], noisy_cfg.K, noisy_cfg, 0);

  // Pixels that differ must lie within 3 px of the clean boundary: their
  // distance to the clean mask (or its complement) is at most 3.
  const auto dist_fg = distance_to_foreground(clean.mask);
  const auto dist_bg = distance_to_zero(clean.mask);
  int differing = 0;
  for (size_t i = 0; i < clean.mask.bits.size(); ++i) {
    if (clean.mask.bits[i] == noisy.mask.bits[i]) continue;
    ++differing;
    CHECK(std::min(dist_fg[i], dist_bg[i]) <= 3.0 + 1e-9);
  }
  CHECK(differing > 0);
}

TEST_CASE("off-screen models are reported") {
  WireModel model;
  WirePolyline poly;
  poly.points = {Vec3(100, 100, 100), Vec3(100.1, 100, 100)};
  poly.radii = {0.01, 0.01};
  model.polylines.push_back(poly);
  const SceneConfig cfg = small_scene();
  CHECK_THROWS_AS(render_frame(model, FramePose(), cfg.K, cfg, 0), OffScreenError);
}

TEST_CASE("trajectory stays on the orbit without shake") {
  SceneConfig cfg = small_scene();
  cfg.n_frames = 50;
  const auto poses = make_trajectory(cfg);
  REQUIRE(poses.size() == 50);
  for (const auto& pose : poses) {
    CHECK(pose.center().norm() == doctest::Approx(1.0).epsilon(1e-9));
    // The orbit center projects to the principal point.
    const auto proj = project(pose, cfg.K, cfg.orbit_center);
    REQUIRE(proj.has_value());
    CHECK((proj->pixel - Vec2(cfg.K.cx, cfg.K.cy)).norm() < 1e-6);
  }
}

TEST_CASE("camera shake perturbs each axis within the sampled 4-sigma bound") {
  SceneConfig base = small_scene();
  base.n_frames = 200;
  const auto clean = make_trajectory(base);
  SceneConfig shaken = base;
  shaken.shake_std_deg = 0.5;
  const auto noisy = make_trajectory(shaken);
  double max_angle = 0.0;
  for (int i = 0; i < 200; ++i)
    max_angle = std::max(max_angle, rotation_angle(clean[i], noisy[i]));
  CHECK(max_angle > 0.0);
  // Total rotation angle is bounded by the norm of the three Euler
  // perturbations; with std 0.5 deg per axis this stays below ~4 sigma each.
  CHECK(max_angle < 2.0 * std::sqrt(3.0) * M_PI / 180.0);
  SUBCASE("camera centers are untouched by shake") {
    for (int i = 0; i < 200; ++i)
      CHECK((clean[i].center() - noisy[i].center()).norm() < 1e-9);
  }
}

TEST_CASE("thinning a rendered single-branch mask recovers the projected centerline") {
  // A gentle arc: a single branch with no self-occlusion from any view.
  WireModel model;
  model.name = "arc";
  WirePolyline arc;
  for (int i = 0; i <= 120; ++i) {
    const double a = -1.0 + 2.0 * i / 120.0;
    arc.points.emplace_back(0.25 * std::sin(a), 0.25 * std::cos(a) - 0.15, 0.0);
    arc.radii.push_back(0.01);
  }
  model.nodes = {arc.points.front(), arc.points.back()};
  model.links = {{0, 1}};
  model.polylines.push_back(arc);
  SceneConfig cfg = small_scene();
  const auto poses = make_trajectory(cfg);
  const auto rendered = render_frame(model, poses[0], cfg.K, cfg, 0);
  const MaskImage skel = thin(rendered.mask);

  // GT projected centerline.
  std::vector<Vec3> samples;
  model.sample(0.25 / cfg.K.f0, &samples, nullptr);
  std::vector<Vec2> centerline;
  for (const auto& p : samples)
    if (const auto proj = project(poses[0], cfg.K, p)) centerline.push_back(proj->pixel);

  // One-sided Hausdorff within ~1 px (plus quantization slack). The disc caps
  // at the stroke ends extend half a width past the centerline, so skeleton
  // pixels next to the projected endpoints are not measured.
  const Vec2 cap_a = centerline.front(), cap_b = centerline.back();
  double worst_skel_to_gt = 0.0;
  for (int y = 0; y < skel.height; ++y)
    for (int x = 0; x < skel.width; ++x) {
      if (!skel.at(x, y)) continue;
      const Vec2 p(x, y);
      if ((p - cap_a).norm() < 4.0 || (p - cap_b).norm() < 4.0) continue;
      double best = 1e9;
      for (const auto& c : centerline) best = std::min(best, (c - p).norm());
      worst_skel_to_gt = std::max(worst_skel_to_gt, best);
    }
  CHECK(worst_skel_to_gt <= 1.5);
}

TEST_CASE("write_scene emits the full file set") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "vid2curve_scene_test";
  fs::remove_all(dir);
  const WireModel model = make_model("y_junction");
  SceneConfig cfg = small_scene();
  cfg.n_frames = 3;
  write_scene(model, cfg, dir.string());
  CHECK(fs::exists(dir / "mask_000000.pgm"));
  CHECK(fs::exists(dir / "mask_000002.pgm"));
  CHECK(fs::exists(dir / "K.json"));
  CHECK(fs::exists(dir / "gt_trajectory.tum"));
  CHECK(fs::exists(dir / "gt_model.json"));
  const WireModel reloaded = load_model((dir / "gt_model.json").string());
  CHECK(reloaded.polylines.size() == model.polylines.size());
  CHECK(reloaded.junction_points().size() == model.junction_points().size());
  const MaskImage mask = read_mask((dir / "mask_000000.pgm").string());
  CHECK(mask.count() > 0);
  fs::remove_all(dir);
}
