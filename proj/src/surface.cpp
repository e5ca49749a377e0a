#include "vid2curve/surface.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <map>

namespace vid2curve {

RadiusProfile estimate_radii(const ReconstructionState& state, bool use_median) {
  const int n = static_cast<int>(state.net.points.size());
  RadiusProfile profile;
  profile.fused.assign(n, 0.0);
  profile.frame_samples.assign(n, {});
  profile.frame_ids.assign(n, {});

  for (int frame_id : state.active) {
    const MatchSet& set = state.matches[frame_id];
    const FramePose& pose = state.poses[frame_id];
    for (int j = 0; j < n; ++j) {
      if (!set.points[j].matched()) continue;
      if (set.occluded[j]) continue;  // gated observations never contribute
      const auto proj = project(pose, state.K, state.net.points[j]);
      if (!proj) continue;
      profile.frame_samples[j].push_back(set.points[j].half_width / state.K.f0 * proj->depth);
      profile.frame_ids[j].push_back(frame_id);
    }
  }

  std::vector<uint8_t> has_value(n, 0);
  for (int j = 0; j < n; ++j) {
    auto& samples = profile.frame_samples[j];
    if (samples.empty()) continue;
    if (use_median) {
      std::vector<double> sorted = samples;
      std::sort(sorted.begin(), sorted.end());
      const size_t mid = sorted.size() / 2;
      profile.fused[j] = sorted.size() % 2 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
    } else {
      double sum = 0.0;
      for (double r : samples) sum += r;
      profile.fused[j] = sum / static_cast<double>(samples.size());
    }
    has_value[j] = 1;
  }

  // Everywhere-occluded points inherit the nearest fused radius along the
  // network (breadth-first over edges).
  const auto adj = state.net.adjacency();
  std::deque<int> queue;
  for (int j = 0; j < n; ++j)
    if (has_value[j]) queue.push_back(j);
  while (!queue.empty()) {
    const int cur = queue.front();
    queue.pop_front();
    for (int next : adj[cur]) {
      if (has_value[next]) continue;
      profile.fused[next] = profile.fused[cur];
      has_value[next] = 1;
      queue.push_back(next);
    }
  }
  // Disconnected leftovers fall back to the sampling distance.
  for (int j = 0; j < n; ++j)
    if (!has_value[j]) profile.fused[j] = state.net.delta0;
  return profile;
}

namespace {

Vec3 any_perpendicular(const Vec3& v) {
  const Vec3 axis = std::abs(v.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  return v.cross(axis).normalized();
}

// Double-reflection rotation-minimizing frames (Wang et al.).
std::vector<Vec3> rmf_normals(const std::vector<Vec3>& centers, bool closed) {
  const int n = static_cast<int>(centers.size());
  std::vector<Vec3> tangents(n);
  for (int i = 0; i < n; ++i) {
    const Vec3& prev = centers[std::max(0, i - 1)];
    const Vec3& next = centers[std::min(n - 1, i + 1)];
    Vec3 t = next - prev;
    if (closed) {
      const Vec3& p = centers[(i + n - 1) % n];
      const Vec3& q = centers[(i + 1) % n];
      t = q - p;
    }
    tangents[i] = t.norm() > 1e-12 ? t.normalized() : Vec3::UnitZ();
  }
  std::vector<Vec3> normals(n);
  normals[0] = any_perpendicular(tangents[0]);
  for (int i = 0; i + 1 < n; ++i) {
    const Vec3 v1 = centers[i + 1] - centers[i];
    const double c1 = v1.squaredNorm();
    if (c1 < 1e-18) {
      normals[i + 1] = normals[i];
      continue;
    }
    const Vec3 rl = normals[i] - (2.0 / c1) * v1.dot(normals[i]) * v1;
    const Vec3 tl = tangents[i] - (2.0 / c1) * v1.dot(tangents[i]) * v1;
    const Vec3 v2 = tangents[i + 1] - tl;
    const double c2 = v2.squaredNorm();
    normals[i + 1] = c2 < 1e-18 ? rl : Vec3(rl - (2.0 / c2) * v2.dot(rl) * v2);
    normals[i + 1] = (normals[i + 1] - normals[i + 1].dot(tangents[i + 1]) * tangents[i + 1])
                         .normalized();
  }
  return normals;
}

void append_icosphere(const Vec3& center, double radius, SweepSurface& mesh) {
  // Icosahedron subdivided once (level 1).
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> verts = {
      {-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0},
      {0, -1, phi}, {0, 1, phi}, {0, -1, -phi}, {0, 1, -phi},
      {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1}};
  std::vector<std::array<int, 3>> faces = {
      {0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11},
      {1, 5, 9}, {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
      {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8}, {3, 8, 9},
      {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1}};
  std::map<std::pair<int, int>, int> midpoints;
  auto midpoint = [&](int a, int b) {
    const auto key = std::minmax(a, b);
    auto it = midpoints.find(key);
    if (it != midpoints.end()) return it->second;
    verts.push_back((verts[a] + verts[b]).normalized());
    midpoints.emplace(key, static_cast<int>(verts.size()) - 1);
    return static_cast<int>(verts.size()) - 1;
  };
  for (auto& v : verts) v.normalize();
  std::vector<std::array<int, 3>> fine;
  for (const auto& f : faces) {
    const int ab = midpoint(f[0], f[1]), bc = midpoint(f[1], f[2]), ca = midpoint(f[2], f[0]);
    fine.push_back({f[0], ab, ca});
    fine.push_back({f[1], bc, ab});
    fine.push_back({f[2], ca, bc});
    fine.push_back({ab, bc, ca});
  }
  const int base = static_cast<int>(mesh.vertices.size());
  for (const auto& v : verts) mesh.vertices.push_back(center + radius * v);
  for (const auto& f : fine) mesh.faces.push_back({base + f[0], base + f[1], base + f[2]});
}

}  // namespace

SweepSurface sweep_mesh(const CurveNetwork& net, const std::vector<double>& radii, int sides) {
  SweepSurface mesh;
  const auto branch_list = branches(net);

  // Isolated points have no branch to sweep along; emit small spheres.
  const auto deg = net.degrees();
  for (size_t j = 0; j < net.points.size(); ++j)
    if (deg[j] == 0) append_icosphere(net.points[j], radii[j], mesh);

  for (const auto& branch : branch_list) {
    const int n = static_cast<int>(branch.points.size());
    if (n == 1) {
      append_icosphere(net.points[branch.points[0]], radii[branch.points[0]], mesh);
      continue;
    }
    std::vector<Vec3> centers(n);
    for (int i = 0; i < n; ++i) centers[i] = net.points[branch.points[i]];
    const auto normals = rmf_normals(centers, branch.closed);

    std::vector<int> ring_start(n);
    for (int i = 0; i < n; ++i) {
      const Vec3& prev = branch.closed ? centers[(i + n - 1) % n] : centers[std::max(0, i - 1)];
      const Vec3& next = branch.closed ? centers[(i + 1) % n] : centers[std::min(n - 1, i + 1)];
      Vec3 tangent = next - prev;
      tangent = tangent.norm() > 1e-12 ? tangent.normalized() : Vec3::UnitZ();
      const Vec3 u = normals[i];
      const Vec3 v = tangent.cross(u).normalized();
      ring_start[i] = static_cast<int>(mesh.vertices.size());
      mesh.ring_center.push_back(branch.points[i]);
      const double r = radii[branch.points[i]];
      for (int s = 0; s < sides; ++s) {
        const double a = 2.0 * M_PI * s / sides;
        mesh.vertices.push_back(centers[i] + r * (std::cos(a) * u + std::sin(a) * v));
      }
    }

    auto stitch = [&](int ring_a, int ring_b, int twist) {
      for (int s = 0; s < sides; ++s) {
        const int a0 = ring_a + s;
        const int a1 = ring_a + (s + 1) % sides;
        const int b0 = ring_b + (s + twist) % sides;
        const int b1 = ring_b + (s + 1 + twist) % sides;
        mesh.faces.push_back({a0, b0, b1});
        mesh.faces.push_back({a0, b1, a1});
      }
    };
    for (int i = 0; i + 1 < n; ++i) stitch(ring_start[i], ring_start[i + 1], 0);

    if (branch.closed) {
      // Weld the seam with the vertex offset that minimizes edge length
      // (rotation-minimizing frames pick up holonomy around a loop).
      int best_twist = 0;
      double best_len = std::numeric_limits<double>::infinity();
      for (int twist = 0; twist < sides; ++twist) {
        double len = 0.0;
        for (int s = 0; s < sides; ++s)
          len += (mesh.vertices[ring_start[n - 1] + s] -
                  mesh.vertices[ring_start[0] + (s + twist) % sides])
                     .squaredNorm();
        if (len < best_len) {
          best_len = len;
          best_twist = twist;
        }
      }
      stitch(ring_start[n - 1], ring_start[0], best_twist);
    } else {
      // Fan caps close the tube at open endpoints.
      for (const int end : {0, n - 1}) {
        const int center_vertex = static_cast<int>(mesh.vertices.size());
        mesh.vertices.push_back(centers[end]);
        for (int s = 0; s < sides; ++s) {
          const int a = ring_start[end] + s;
          const int b = ring_start[end] + (s + 1) % sides;
          if (end == 0)
            mesh.faces.push_back({center_vertex, b, a});
          else
            mesh.faces.push_back({center_vertex, a, b});
        }
      }
    }
  }
  return mesh;
}

void save_mesh_obj(const SweepSurface& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write OBJ file: " + path);
  char line[128];
  for (const auto& v : mesh.vertices) {
    std::snprintf(line, sizeof(line), "v %.9g %.9g %.9g\n", v.x(), v.y(), v.z());
    out << line;
  }
  for (const auto& f : mesh.faces) out << "f " << f[0] + 1 << " " << f[1] + 1 << " " << f[2] + 1
                                        << "\n";
}

void save_mesh_ply(const SweepSurface& mesh, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write PLY file: " + path);
  out << "ply\nformat binary_little_endian 1.0\n"
      << "element vertex " << mesh.vertices.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n"
      << "element face " << mesh.faces.size() << "\n"
      << "property list uchar int vertex_indices\nend_header\n";
  for (const auto& v : mesh.vertices) {
    const float coords[3] = {static_cast<float>(v.x()), static_cast<float>(v.y()),
                             static_cast<float>(v.z())};
    out.write(reinterpret_cast<const char*>(coords), sizeof(coords));
  }
  for (const auto& f : mesh.faces) {
    const uint8_t count = 3;
    const int32_t idx[3] = {f[0], f[1], f[2]};
    out.write(reinterpret_cast<const char*>(&count), 1);
    out.write(reinterpret_cast<const char*>(idx), sizeof(idx));
  }
}

}  // namespace vid2curve
