#include "vid2curve/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <json.hpp>

#include "vid2curve/io.hpp"

namespace vid2curve {

std::vector<int> WireModel::node_degrees() const {
  std::vector<int> deg(nodes.size(), 0);
  for (const auto& [a, b] : links) {
    ++deg[a];
    ++deg[b];
  }
  return deg;
}

std::vector<Vec3> WireModel::junction_points() const {
  const auto deg = node_degrees();
  std::vector<Vec3> out;
  for (size_t i = 0; i < nodes.size(); ++i)
    if (deg[i] >= 3) out.push_back(nodes[i]);
  return out;
}

Eigen::AlignedBox3d WireModel::bounds() const {
  Eigen::AlignedBox3d box;
  for (const auto& poly : polylines)
    for (const auto& p : poly.points) box.extend(p);
  return box;
}

void WireModel::sample(double spacing, std::vector<Vec3>* points,
                       std::vector<double>* radii) const {
  for (const auto& poly : polylines) {
    const size_t segs = poly.points.size() - (poly.closed ? 0 : 1);
    for (size_t s = 0; s < segs; ++s) {
      const Vec3& a = poly.points[s];
      const Vec3& b = poly.points[(s + 1) % poly.points.size()];
      const double ra = poly.radii[s];
      const double rb = poly.radii[(s + 1) % poly.radii.size()];
      const double len = (b - a).norm();
      const int n = std::max(1, static_cast<int>(std::ceil(len / spacing)));
      for (int i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / n;
        points->push_back(a + t * (b - a));
        if (radii) radii->push_back(ra + t * (rb - ra));
      }
    }
    if (!poly.closed) {
      points->push_back(poly.points.back());
      if (radii) radii->push_back(poly.radii.back());
    }
  }
}

namespace {

WirePolyline segment(const Vec3& a, const Vec3& b, double radius) {
  WirePolyline poly;
  poly.points = {a, b};
  poly.radii = {radius, radius};
  return poly;
}

WireModel straight_link_model(std::string name, std::vector<Vec3> nodes,
                              std::vector<std::pair<int, int>> links, double radius) {
  WireModel model;
  model.name = std::move(name);
  model.nodes = std::move(nodes);
  model.links = std::move(links);
  for (const auto& [a, b] : model.links)
    model.polylines.push_back(segment(model.nodes[a], model.nodes[b], radius));
  return model;
}

WireModel make_cube_frame(double radius) {
  std::vector<Vec3> nodes;
  const double s = 0.2;
  for (int z = 0; z < 2; ++z)
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 2; ++x)
        nodes.emplace_back(s * (2 * x - 1), s * (2 * y - 1), s * (2 * z - 1));
  std::vector<std::pair<int, int>> links;
  for (int i = 0; i < 8; ++i)
    for (int bit = 0; bit < 3; ++bit) {
      const int j = i | (1 << bit);
      if (j != i) links.emplace_back(std::min(i, j), std::max(i, j));
    }
  std::sort(links.begin(), links.end());
  links.erase(std::unique(links.begin(), links.end()), links.end());
  return straight_link_model("cube_frame", std::move(nodes), std::move(links), radius);
}

WireModel make_grid3(double radius) {
  std::vector<Vec3> nodes;
  const double step = 0.15;
  for (int z = 0; z < 3; ++z)
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 3; ++x)
        nodes.emplace_back(step * (x - 1), step * (y - 1), step * (z - 1));
  auto id = [](int x, int y, int z) { return (z * 3 + y) * 3 + x; };
  std::vector<std::pair<int, int>> links;
  for (int z = 0; z < 3; ++z)
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 3; ++x) {
        if (x + 1 < 3) links.emplace_back(id(x, y, z), id(x + 1, y, z));
        if (y + 1 < 3) links.emplace_back(id(x, y, z), id(x, y + 1, z));
        if (z + 1 < 3) links.emplace_back(id(x, y, z), id(x, y, z + 1));
      }
  return straight_link_model("grid3", std::move(nodes), std::move(links), radius);
}

WireModel make_torus_knot(int p, int q, double radius) {
  WireModel model;
  model.name = "torus_knot";
  WirePolyline poly;
  poly.closed = true;
  const int n = 600;
  const double major = 0.22, minor = 0.1;
  for (int i = 0; i < n; ++i) {
    const double t = 2.0 * M_PI * i / n;
    const double r = major + minor * std::cos(q * t);
    poly.points.emplace_back(r * std::cos(p * t), r * std::sin(p * t), minor * std::sin(q * t));
    poly.radii.push_back(radius);
  }
  model.polylines.push_back(std::move(poly));
  model.nodes = {};  // a knot has no structural vertices
  return model;
}

WireModel make_helix(double radius) {
  WireModel model;
  model.name = "helix";
  WirePolyline poly;
  const int n = 400;
  const double turns = 2.5, r = 0.18;
  for (int i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) / n;
    const double a = 2.0 * M_PI * turns * t;
    poly.points.emplace_back(r * std::cos(a), r * std::sin(a), 0.4 * (t - 0.5));
    poly.radii.push_back(radius);
  }
  model.nodes = {poly.points.front(), poly.points.back()};
  model.links = {{0, 1}};
  model.polylines.push_back(std::move(poly));
  return model;
}

WireModel make_y_junction(double radius) {
  const double l = 0.25;
  std::vector<Vec3> nodes = {
      {0.0, 0.0, 0.0},
      {0.0, 0.0, l},
      {l * std::sin(2.0), 0.18, -l * std::cos(1.0)},
      {-l * std::sin(2.0), -0.15, -l * std::cos(1.0)},
  };
  return straight_link_model("y_junction", std::move(nodes), {{0, 1}, {0, 2}, {0, 3}}, radius);
}

}  // namespace

WireModel make_model(const std::string& name, double radius) {
  if (name == "cube_frame") return make_cube_frame(radius);
  if (name == "grid3") return make_grid3(radius);
  if (name == "torus_knot") return make_torus_knot(2, 3, radius);
  if (name == "helix") return make_helix(radius);
  if (name == "y_junction") return make_y_junction(radius);
  throw IoError("unknown model: " + name);
}

uint64_t frame_seed(uint64_t seed, int frame_index) {
  // splitmix64 over (seed, frame) for independent per-frame streams
  uint64_t z = seed + 0x9e3779b97f4a7c15ull * (static_cast<uint64_t>(frame_index) + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::vector<FramePose> make_trajectory(const SceneConfig& cfg) {
  std::vector<FramePose> poses;
  poses.reserve(cfg.n_frames);
  for (int i = 0; i < cfg.n_frames; ++i) {
    const double t = cfg.n_frames > 1 ? static_cast<double>(i) / cfg.n_frames : 0.0;
    const double angle = 2.0 * M_PI * cfg.arc_fraction * t;
    const double elev = cfg.elevation + cfg.elevation_wobble * std::sin(4.0 * M_PI * t);
    const Vec3 center = cfg.orbit_center +
                        cfg.orbit_radius * Vec3(std::cos(angle) * std::cos(elev),
                                                std::sin(angle) * std::cos(elev), std::sin(elev));
    const Vec3 forward = (cfg.orbit_center - center).normalized();
    Vec3 up(0.0, 0.0, 1.0);
    Vec3 right = up.cross(forward);
    if (right.norm() < 1e-9) right = Vec3(1.0, 0.0, 0.0);
    right.normalize();
    const Vec3 down = forward.cross(right);  // +y grows downward in pixels
    Mat3 R;
    R.row(0) = right.transpose();
    R.row(1) = down.transpose();
    R.row(2) = forward.transpose();

    if (cfg.shake_std_deg > 0.0) {
      std::mt19937_64 rng(frame_seed(cfg.seed, i));
      std::normal_distribution<double> gauss(0.0, cfg.shake_std_deg * M_PI / 180.0);
      const double ax = gauss(rng), ay = gauss(rng), az = gauss(rng);
      R = (Eigen::AngleAxisd(az, Vec3::UnitZ()) * Eigen::AngleAxisd(ay, Vec3::UnitY()) *
           Eigen::AngleAxisd(ax, Vec3::UnitX()))
              .toRotationMatrix() *
          R;
    }
    poses.push_back(FramePose::from_matrix(R, -(R * center)));
  }
  return poses;
}

RenderResult render_frame(const WireModel& model, const FramePose& pose,
                          const CameraIntrinsics& K, const SceneConfig& cfg, int frame_index) {
  RenderResult out;
  out.mask = MaskImage(K.width, K.height);

  // Sample the centerline densely enough that consecutive projections are
  // fractions of a pixel apart.
  std::vector<Vec3> coarse;
  std::vector<double> coarse_r;
  const double spacing3d = 0.25 / K.f0;  // about a quarter pixel at unit depth
  model.sample(spacing3d, &coarse, &coarse_r);

  struct Stamp {
    Vec2 px;
    double half_width;
    int sample;
  };
  std::vector<Stamp> stamps;
  stamps.reserve(coarse.size());
  for (size_t i = 0; i < coarse.size(); ++i) {
    const auto proj = project(pose, K, coarse[i]);
    if (!proj) continue;
    const double hw = coarse_r[i] * K.f0 / proj->depth;
    out.sample_points.push_back(coarse[i]);
    stamps.push_back({proj->pixel, hw, static_cast<int>(out.sample_points.size()) - 1});
  }
  if (stamps.empty()) throw OffScreenError();

  // Signed distance to the stroke: min over stamps of (pixel distance - half width).
  const double noise_band = 3.0;
  std::vector<float> field(out.mask.bits.size(), 1e9f);
  out.pixel_to_sample.assign(out.mask.bits.size(), -1);
  bool touched = false;
  for (const Stamp& s : stamps) {
    const int margin = static_cast<int>(std::ceil(s.half_width + noise_band)) + 1;
    const int x_lo = std::max(0, static_cast<int>(std::floor(s.px.x())) - margin);
    const int x_hi = std::min(K.width - 1, static_cast<int>(std::ceil(s.px.x())) + margin);
    const int y_lo = std::max(0, static_cast<int>(std::floor(s.px.y())) - margin);
    const int y_hi = std::min(K.height - 1, static_cast<int>(std::ceil(s.px.y())) + margin);
    for (int y = y_lo; y <= y_hi; ++y)
      for (int x = x_lo; x <= x_hi; ++x) {
        const double d = std::hypot(x - s.px.x(), y - s.px.y()) - s.half_width;
        const size_t idx = static_cast<size_t>(y) * K.width + x;
        if (d < field[idx]) {
          field[idx] = static_cast<float>(d);
          out.pixel_to_sample[idx] = s.sample;
          touched = true;
        }
      }
  }
  if (!touched) throw OffScreenError();

  if (cfg.seg_noise_std > 0.0) {
    // Boundary pixels get an individually perturbed threshold, clamped so the
    // corruption stays inside a 3 px band.
    std::mt19937_64 rng(frame_seed(cfg.seed ^ 0x5e67u, frame_index));
    std::normal_distribution<double> gauss(0.0, cfg.seg_noise_std);
    for (size_t idx = 0; idx < field.size(); ++idx) {
      const double d = field[idx];
      if (std::abs(d) <= noise_band) {
        const double eps = std::clamp(gauss(rng), -2.99, 2.99);
        out.mask.bits[idx] = d <= eps ? 1 : 0;
      } else {
        out.mask.bits[idx] = d <= 0.0 ? 1 : 0;
      }
    }
  } else {
    for (size_t idx = 0; idx < field.size(); ++idx) out.mask.bits[idx] = field[idx] <= 0.0f ? 1 : 0;
  }
  if (out.mask.count() == 0) throw OffScreenError();
  return out;
}

void write_scene(const WireModel& model, const SceneConfig& cfg, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const auto poses = make_trajectory(cfg);
  char name[64];
  for (int i = 0; i < cfg.n_frames; ++i) {
    const auto rendered = render_frame(model, poses[i], cfg.K, cfg, i);
    std::snprintf(name, sizeof(name), "mask_%06d.pgm", i);
    write_pgm(rendered.mask, (fs::path(dir) / name).string());
  }
  save_intrinsics(cfg.K, (fs::path(dir) / "K.json").string());
  write_tum_trajectory(poses, (fs::path(dir) / "gt_trajectory.tum").string());
  save_model(model, (fs::path(dir) / "gt_model.json").string());
}

void save_model(const WireModel& model, const std::string& path) {
  nlohmann::json j;
  j["name"] = model.name;
  j["nodes"] = nlohmann::json::array();
  j["links"] = nlohmann::json::array();
  j["polylines"] = nlohmann::json::array();
  for (const auto& node : model.nodes) j["nodes"].push_back({node.x(), node.y(), node.z()});
  for (const auto& [a, b] : model.links) j["links"].push_back({a, b});
  for (const auto& poly : model.polylines) {
    nlohmann::json jp;
    jp["closed"] = poly.closed;
    for (const auto& p : poly.points) jp["points"].push_back({p.x(), p.y(), p.z()});
    jp["radii"] = poly.radii;
    j["polylines"].push_back(std::move(jp));
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write model file: " + path);
  out << j.dump() << "\n";
}

WireModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model file: " + path);
  nlohmann::json j;
  in >> j;
  WireModel model;
  model.name = j.value("name", "");
  for (const auto& node : j["nodes"]) model.nodes.emplace_back(node[0], node[1], node[2]);
  for (const auto& link : j["links"]) model.links.emplace_back(link[0], link[1]);
  for (const auto& jp : j["polylines"]) {
    WirePolyline poly;
    poly.closed = jp.value("closed", false);
    for (const auto& p : jp["points"]) poly.points.emplace_back(p[0], p[1], p[2]);
    poly.radii = jp["radii"].get<std::vector<double>>();
    model.polylines.push_back(std::move(poly));
  }
  return model;
}

}  // namespace vid2curve
