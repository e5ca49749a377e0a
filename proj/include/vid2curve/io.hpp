#pragma once

#include <map>
#include <string>
#include <vector>

#include "vid2curve/curve_network.hpp"
#include "vid2curve/matching.hpp"
#include "vid2curve/pose.hpp"

namespace vid2curve {

// Curve network: {"delta0":..., "points":[[x,y,z],...], "edges":[[i,j],...]}
void save_network_json(const CurveNetwork& net, const std::string& path);
CurveNetwork load_network_json(const std::string& path);

/// OBJ export with 'v' vertex records and 'l' polyline records per branch.
void save_network_obj(const CurveNetwork& net, const std::string& path);

// TUM trajectory: "frame_index tx ty tz qx qy qz qw" per line, camera-to-world.
void write_tum_trajectory(const std::vector<FramePose>& world_to_camera, const std::string& path);
std::vector<FramePose> read_tum_trajectory(const std::string& path);  ///< world-to-camera

/// Debug dump of per-frame matches: frame, point_index, chain, pixel_index, du, dv.
void write_match_csv(const std::vector<MatchSet>& matches, const std::string& path);

/// Reproducibility manifest: all run parameters as a flat key/value map.
void write_manifest(const std::map<std::string, std::string>& entries, const std::string& path);

inline constexpr const char* kLibraryVersion = "0.1.0";

}  // namespace vid2curve
