#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "vid2curve/occlusion.hpp"

using namespace vid2curve;

namespace {

const CameraIntrinsics kK{100.0, 32.0, 32.0, 64, 64};
constexpr double kDelta0 = 0.01;  // 1/f0

SkeletalFrame frame_from_skeleton(MaskImage skeleton) {
  auto frame = trace_chains(skeleton);
  chain_geometry(frame, frame.skeleton);
  return frame;
}

// Two 3D strands whose projections cross at the image center while the
// strands themselves are separated by `depth_gap` in depth.
struct CrossingScene {
  CurveNetwork net;
  SkeletalFrame frame;
  int strand_size = 0;
};

CrossingScene make_crossing(double depth_gap) {
  CrossingScene scene;
  scene.net.delta0 = kDelta0;
  const int n = 45;
  // Strand A at depth 1 projects onto the horizontal line v = 31.
  for (int i = 0; i < n; ++i) {
    const double t = -0.22 + 0.01 * i;
    scene.net.points.emplace_back(t, -0.01, 1.0);
  }
  // Strand B, farther away, projects onto the diagonal u = v; the two image
  // lines share the pixel (31, 31).
  const double z = 1.0 + depth_gap;
  for (int i = 0; i < n; ++i) {
    const double t = -0.22 + 0.01 * i;
    scene.net.points.emplace_back(t * z, t * z, z);
  }
  scene.strand_size = n;
  for (int i = 0; i + 1 < n; ++i) {
    scene.net.edges.emplace_back(i, i + 1);
    scene.net.edges.emplace_back(n + i, n + i + 1);
  }

  MaskImage skel(64, 64);
  for (int i = 4; i < 60; ++i) {
    skel.set(i, 31, 1);
    skel.set(i, i, 1);
  }
  scene.frame = frame_from_skeleton(skel);
  return scene;
}

MatchSet match_and_label(CrossingScene& scene, double sigma0_mult) {
  const auto net_branches = branches(scene.net);
  MatchSet set = match_network(scene.net, net_branches, FramePose(), kK, scene.frame);
  label_occlusion(scene.net, set, scene.frame,
                  OcclusionParams{sigma0_mult * kDelta0, 1, 10});
  return set;
}

}  // namespace

TEST_CASE("a single straight branch has no occluded matches") {
  MaskImage skel(64, 64);
  for (int x = 6; x < 58; ++x) skel.set(x, 32, 1);
  auto frame = frame_from_skeleton(skel);
  CurveNetwork net;
  net.delta0 = kDelta0;
  for (int i = 0; i < 30; ++i) net.points.emplace_back(-0.15 + 0.01 * i, 0.0, 1.0);
  for (int i = 0; i + 1 < 30; ++i) net.edges.emplace_back(i, i + 1);
  MatchSet set = match_network(net, branches(net), FramePose(), kK, frame);
  label_occlusion(net, set, frame, OcclusionParams{10 * kDelta0, 1, 10});
  for (size_t j = 0; j < set.points.size(); ++j)
    if (set.points[j].matched()) CHECK(set.occluded[j] == 0);
}

TEST_CASE("crossing strands far apart in depth are occluded near the crossing") {
  auto scene = make_crossing(100 * kDelta0);
  const MatchSet set = match_and_label(scene, 10.0);

  const Vec2 crossing(31.0, 31.0);  // where the two image diagonals meet
  int near_total = 0, near_occluded = 0, far_visible = 0;
  for (size_t j = 0; j < set.points.size(); ++j) {
    const auto proj = project(FramePose(), kK, scene.net.points[j]);
    if (!proj) continue;
    const double d = (proj->pixel - crossing).norm();
    if (d <= 2.0) {
      ++near_total;
      near_occluded += set.occluded[j];
    } else if (d > 8.0 && set.points[j].matched()) {
      far_visible += 1 - set.occluded[j];
    }
  }
  REQUIRE(near_total > 0);
  // At least 90% of the points landing on the crossing are flagged.
  CHECK(near_occluded * 10 >= near_total * 9);
  CHECK(far_visible > 40);
}

TEST_CASE("spatial compactness deviation flags imbalanced crossing windows") {
  // Five points on one strand and two on another, 100*delta0 apart: the
  // standard deviation of distances-to-centroid clears sigma0 = 10*delta0.
  std::vector<Vec3> cluster;
  for (int i = 0; i < 5; ++i) cluster.emplace_back(i * kDelta0, 0.0, 1.0);
  for (int i = 0; i < 2; ++i) cluster.emplace_back(i * kDelta0, 0.0, 1.0 + 100 * kDelta0);
  Vec3 centroid = Vec3::Zero();
  for (const auto& p : cluster) centroid += p;
  centroid /= cluster.size();
  std::vector<double> dist;
  double mean = 0.0;
  for (const auto& p : cluster) {
    dist.push_back((p - centroid).norm());
    mean += dist.back();
  }
  mean /= dist.size();
  double var = 0.0;
  for (double d : dist) var += (d - mean) * (d - mean);
  const double sigma = std::sqrt(var / dist.size());
  CHECK(sigma >= 10 * kDelta0);
}

TEST_CASE("a singleton window is compact and stays visible") {
  MaskImage skel(64, 64);
  for (int x = 20; x < 44; ++x) skel.set(x, 32, 1);
  auto frame = frame_from_skeleton(skel);
  CurveNetwork net;
  net.delta0 = kDelta0;
  // Widely spaced points: windows contain only the point itself.
  net.points = {Vec3(-0.1, 0, 1), Vec3(0.0, 0, 1), Vec3(0.1, 0, 1)};
  net.edges = {{0, 1}, {1, 2}};
  MatchSet set = match_network(net, branches(net), FramePose(), kK, frame);
  label_occlusion(net, set, frame, OcclusionParams{10 * kDelta0, 1, 10});
  for (size_t j = 0; j < set.points.size(); ++j) {
    REQUIRE(set.points[j].matched());
    CHECK(set.occluded[j] == 0);
  }
}

TEST_CASE("unmatched points are always occluded") {
  MaskImage skel(64, 64);
  for (int x = 20; x < 44; ++x) skel.set(x, 32, 1);
  auto frame = frame_from_skeleton(skel);
  CurveNetwork net;
  net.delta0 = kDelta0;
  net.points = {Vec3(0, 0, 1), Vec3(0, 5, 1)};  // second projects far off the chain
  net.edges = {{0, 1}};
  MatchSet set = match_network(net, branches(net), FramePose(), kK, frame);
  label_occlusion(net, set, frame, OcclusionParams{10 * kDelta0, 1, 10});
  CHECK_FALSE(set.points[1].matched());
  CHECK(set.occluded[1] == 1);
}

TEST_CASE("labeling is deterministic") {
  auto scene_a = make_crossing(100 * kDelta0);
  auto scene_b = make_crossing(100 * kDelta0);
  const MatchSet a = match_and_label(scene_a, 10.0);
  const MatchSet b = match_and_label(scene_b, 10.0);
  REQUIRE(a.occluded.size() == b.occluded.size());
  CHECK(a.occluded == b.occluded);
}

TEST_CASE("raising sigma0 never hides a visible point") {
  auto scene = make_crossing(12 * kDelta0);  // mild separation, sigma near the threshold
  const MatchSet strict = match_and_label(scene, 5.0);
  const MatchSet loose = match_and_label(scene, 20.0);
  REQUIRE(strict.occluded.size() == loose.occluded.size());
  for (size_t j = 0; j < strict.occluded.size(); ++j)
    if (!strict.occluded[j]) CHECK(!loose.occluded[j]);
}

TEST_CASE("occlusion overlay writes visible and occluded gray levels") {
  auto scene = make_crossing(100 * kDelta0);
  const MatchSet set = match_and_label(scene, 10.0);
  const auto path = std::filesystem::temp_directory_path() / "occlusion_overlay.pgm";
  write_occlusion_overlay(scene.frame, set, path.string());
  std::ifstream in(path, std::ios::binary);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  int visible = 0, occluded = 0;
  for (unsigned char c : bytes) {
    visible += c == 255;
    occluded += c == 128;
  }
  CHECK(visible > 0);
  CHECK(occluded > 0);
  std::filesystem::remove(path);
}
