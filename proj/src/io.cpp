#include "vid2curve/io.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace vid2curve {

void save_network_json(const CurveNetwork& net, const std::string& path) {
  nlohmann::json j;
  j["delta0"] = net.delta0;
  j["points"] = nlohmann::json::array();
  j["edges"] = nlohmann::json::array();
  for (const auto& p : net.points) j["points"].push_back({p.x(), p.y(), p.z()});
  for (const auto& [a, b] : net.edges) j["edges"].push_back({a, b});
  std::ofstream out(path);
  if (!out) throw IoError("cannot write network file: " + path);
  out << j.dump() << "\n";
}

CurveNetwork load_network_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open network file: " + path);
  nlohmann::json j;
  in >> j;
  CurveNetwork net;
  net.delta0 = j.at("delta0").get<double>();
  for (const auto& p : j.at("points")) net.points.emplace_back(p[0], p[1], p[2]);
  for (const auto& e : j.at("edges")) net.edges.emplace_back(e[0], e[1]);
  return net;
}

void save_network_obj(const CurveNetwork& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write OBJ file: " + path);
  out << "# curve network: " << net.points.size() << " points, " << net.edges.size()
      << " edges\n";
  char line[128];
  for (const auto& p : net.points) {
    std::snprintf(line, sizeof(line), "v %.9g %.9g %.9g\n", p.x(), p.y(), p.z());
    out << line;
  }
  for (const auto& branch : branches(net)) {
    out << "l";
    for (int idx : branch.points) out << " " << idx + 1;
    if (branch.closed) out << " " << branch.points.front() + 1;
    out << "\n";
  }
}

void write_tum_trajectory(const std::vector<FramePose>& world_to_camera,
                          const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write trajectory file: " + path);
  char line[256];
  for (size_t i = 0; i < world_to_camera.size(); ++i) {
    const FramePose c2w = world_to_camera[i].inverse();
    const auto& q = c2w.quaternion();
    const auto& t = c2w.translation();
    std::snprintf(line, sizeof(line), "%zu %.12g %.12g %.12g %.12g %.12g %.12g %.12g\n", i, t.x(),
                  t.y(), t.z(), q.x(), q.y(), q.z(), q.w());
    out << line;
  }
}

std::vector<FramePose> read_tum_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trajectory file: " + path);
  std::vector<FramePose> poses;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    double idx, tx, ty, tz, qx, qy, qz, qw;
    if (!(ss >> idx >> tx >> ty >> tz >> qx >> qy >> qz >> qw))
      throw IoError("malformed trajectory line: " + line);
    const FramePose c2w(Eigen::Quaterniond(qw, qx, qy, qz), Vec3(tx, ty, tz));
    poses.push_back(c2w.inverse());
  }
  return poses;
}

void write_match_csv(const std::vector<MatchSet>& matches, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write match CSV: " + path);
  out << "frame,point_index,chain,pixel_index,du,dv\n";
  char line[192];
  for (const auto& set : matches) {
    for (size_t j = 0; j < set.points.size(); ++j) {
      const PointMatch& m = set.points[j];
      if (!m.matched()) continue;
      std::snprintf(line, sizeof(line), "%d,%zu,%d,%d,%.6g,%.6g\n", set.frame, j, m.chain, m.index,
                    m.residual.x(), m.residual.y());
      out << line;
    }
  }
}

void write_manifest(const std::map<std::string, std::string>& entries, const std::string& path) {
  nlohmann::json j;
  for (const auto& [key, value] : entries) j[key] = value;
  j["library_version"] = kLibraryVersion;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest: " + path);
  out << j.dump(2) << "\n";
}

}  // namespace vid2curve
