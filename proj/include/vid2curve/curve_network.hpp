#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "vid2curve/types.hpp"

namespace vid2curve {

/// Candidate edges pair points closer than kEdgeFactor * delta0.
inline constexpr double kEdgeFactor = 5.0;
/// Cycles are admitted only when the loop they close is longer than
/// kLoopFactor * delta0 worth of arc length.
inline constexpr double kLoopFactor = 20.0;

/// Graph of 3D sample points representing the object's centerlines.
struct CurveNetwork {
  std::vector<Vec3> points;
  std::vector<std::pair<int, int>> edges;  ///< undirected, stored with first < second
  double delta0 = 0.0;                     ///< sampling distance in world units

  std::vector<std::vector<int>> adjacency() const;
  std::vector<int> degrees() const;
};

/// Maximal path whose interior vertices have degree exactly 2. Closed branches
/// are cycles without junctions; their point list does not repeat the start.
struct Branch {
  std::vector<int> points;
  bool closed = false;
};

struct Junction {
  int point = -1;
  int degree = 0;
};

/// Connects a point set into a curve network: candidate pairs closer than
/// 5*delta0 are processed in ascending length (ties by index pair) and an edge
/// is added when its endpoints are disconnected or when the loop it would
/// close — shortest existing path plus the new edge — is longer than
/// 20*delta0. Fewer than 2 points yield an edgeless network.
CurveNetwork build_network(std::vector<Vec3> points, double delta0);

/// Re-samples every branch by arc length at spacing delta0. Interior samples
/// are delta0 apart and the last segment lands in [0.5, 1.5]*delta0; branch
/// endpoints (junctions included) are preserved exactly. Branches shorter
/// than 0.5*delta0 collapse to their endpoints.
CurveNetwork resample(const CurveNetwork& net);

std::vector<Branch> branches(const CurveNetwork& net);
std::vector<Junction> junctions(const CurveNetwork& net);

/// Shortest path length by Euclidean edge weights, or empty once it can be
/// proven to exceed `cap`.
std::optional<double> graph_distance(const CurveNetwork& net, int i, int j, double cap);

}  // namespace vid2curve
