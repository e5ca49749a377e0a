#include "vid2curve/solver.hpp"

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <limits>
#include <map>
#include <thread>
#include <unordered_map>

namespace vid2curve {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Vec6 = Eigen::Matrix<double, 6, 1>;

}  // namespace

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  auto worker = [&] {
    while (true) {
      const int i = next.fetch_add(1);
      if (i >= n) return;
      fn(i);
    }
  };
  std::vector<std::thread> pool;
  const int count = std::min(threads, n);
  pool.reserve(count);
  for (int t = 0; t < count; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
}

// ---------------------------------------------------------------------------
// Frozen objective
// ---------------------------------------------------------------------------

namespace {

// Data term of one frame against explicit point positions, with the frame's
// matches frozen. Infinite when a gated-in point falls behind the camera.
double frame_data_term(const ReconstructionState& state, int frame_id,
                       const std::vector<Vec3>& points, const FramePose& pose) {
  const MatchSet& set = state.matches[frame_id];
  const double w = state.params.w;
  double sum = 0.0;
  for (size_t j = 0; j < set.points.size(); ++j) {
    if (!set.usable(static_cast<int>(j))) continue;
    const auto proj = project(pose, state.K, points[j]);
    if (!proj) return kInf;
    const Vec2 v = proj->pixel - set.points[j].pixel;
    const double dn = v.dot(set.points[j].normal);
    const double dt = v.dot(set.points[j].tangent);
    sum += dn * dn + w * dt * dt;
  }
  return sum;
}

double smoothness_term(const std::vector<Branch>& branch_list, const std::vector<Vec3>& points) {
  double sum = 0.0;
  for (const auto& branch : branch_list) {
    const int n = static_cast<int>(branch.points.size());
    if (branch.closed) {
      for (int i = 0; i < n; ++i) {
        const Vec3& prev = points[branch.points[(i + n - 1) % n]];
        const Vec3& cur = points[branch.points[i]];
        const Vec3& next = points[branch.points[(i + 1) % n]];
        sum += (next - 2.0 * cur + prev).squaredNorm();
      }
    } else {
      for (int i = 1; i + 1 < n; ++i) {
        const Vec3& prev = points[branch.points[i - 1]];
        const Vec3& cur = points[branch.points[i]];
        const Vec3& next = points[branch.points[i + 1]];
        sum += (next - 2.0 * cur + prev).squaredNorm();
      }
    }
  }
  return sum;
}

double objective_at(const ReconstructionState& state, const std::vector<Vec3>& points) {
  double data = 0.0;
  for (int frame_id : state.active) {
    const double term = frame_data_term(state, frame_id, points, state.poses[frame_id]);
    if (term == kInf) return kInf;
    data += term;
  }
  const double smooth = smoothness_term(state.net_branches, points);
  return data + state.params.lambda * static_cast<double>(state.active.size()) * smooth;
}

}  // namespace

double objective(const ReconstructionState& state) { return objective_at(state, state.net.points); }

// ---------------------------------------------------------------------------
// Pose step
// ---------------------------------------------------------------------------

FramePose pose_step(const ReconstructionState& state, int frame_id) {
  const MatchSet& set = state.matches[frame_id];
  const double w = state.params.w;
  const double sqrt_w = std::sqrt(w);

  std::vector<int> used;
  for (size_t j = 0; j < set.points.size(); ++j)
    if (set.usable(static_cast<int>(j))) used.push_back(static_cast<int>(j));

  FramePose pose = state.poses[frame_id];
  double cost = frame_data_term(state, frame_id, state.net.points, pose);

  for (int iter = 0; iter < state.params.gn_iters; ++iter) {
    Mat6 H = Mat6::Zero();
    Vec6 g = Vec6::Zero();
    for (int j : used) {
      const auto jac = pose_jacobians(pose, state.K, state.net.points[j]);
      const auto proj = project(pose, state.K, state.net.points[j]);
      if (!jac || !proj) continue;
      const Vec2 v = proj->pixel - set.points[j].pixel;
      const Eigen::Matrix<double, 1, 6> row_n = set.points[j].normal.transpose() * jac->wrt_pose;
      const Eigen::Matrix<double, 1, 6> row_t =
          sqrt_w * set.points[j].tangent.transpose() * jac->wrt_pose;
      H += row_n.transpose() * row_n + row_t.transpose() * row_t;
      g += row_n.transpose() * (v.dot(set.points[j].normal)) +
           row_t.transpose() * (sqrt_w * v.dot(set.points[j].tangent));
    }

    Eigen::SelfAdjointEigenSolver<Mat6> eig(H);
    const double ev_max = eig.eigenvalues().maxCoeff();
    if (!(ev_max > 0.0) || eig.eigenvalues().minCoeff() < 1e-10 * ev_max)
      throw SingularNormalError();

    const Vec6 delta = -H.ldlt().solve(g);
    if (!delta.allFinite()) throw SingularNormalError();

    // Line search keeps the frozen data term non-increasing.
    double scale = 1.0;
    bool accepted = false;
    for (int half = 0; half < 10; ++half, scale *= 0.5) {
      const FramePose cand =
          apply_increment(pose, scale * delta.head<3>(), scale * delta.tail<3>());
      const double cand_cost = frame_data_term(state, frame_id, state.net.points, cand);
      if (cand_cost <= cost) {
        pose = cand;
        cost = cand_cost;
        accepted = true;
        break;
      }
    }
    if (!accepted || (scale * delta).norm() < state.params.gn_tol) break;
  }
  return pose;
}

// ---------------------------------------------------------------------------
// Point step
// ---------------------------------------------------------------------------

double point_step(ReconstructionState& state) {
  const int n = static_cast<int>(state.net.points.size());
  if (n == 0) return 0.0;
  const double w = state.params.w;
  const double sqrt_w = std::sqrt(w);

  std::vector<Eigen::Triplet<double>> triplets;
  Eigen::VectorXd g = Eigen::VectorXd::Zero(3 * n);

  auto add_block = [&](int pi, int pj, const Mat3& block) {
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c)
        if (block(r, c) != 0.0) triplets.emplace_back(3 * pi + r, 3 * pj + c, block(r, c));
  };

  for (int frame_id : state.active) {
    const MatchSet& set = state.matches[frame_id];
    const FramePose& pose = state.poses[frame_id];
    for (int j = 0; j < n; ++j) {
      if (!set.usable(j)) continue;
      const auto jac = pose_jacobians(pose, state.K, state.net.points[j]);
      const auto proj = project(pose, state.K, state.net.points[j]);
      if (!jac || !proj) continue;
      const Vec2 v = proj->pixel - set.points[j].pixel;
      const Eigen::Matrix<double, 1, 3> row_n = set.points[j].normal.transpose() * jac->wrt_point;
      const Eigen::Matrix<double, 1, 3> row_t =
          sqrt_w * set.points[j].tangent.transpose() * jac->wrt_point;
      add_block(j, j, row_n.transpose() * row_n + row_t.transpose() * row_t);
      g.segment<3>(3 * j) += row_n.transpose() * (v.dot(set.points[j].normal)) +
                             row_t.transpose() * (sqrt_w * v.dot(set.points[j].tangent));
    }
  }

  // Smoothness rows are shared by every active frame, hence the multiplier.
  const double lam = state.params.lambda * static_cast<double>(state.active.size());
  auto add_triple = [&](int a, int b, int c) {
    const int ids[3] = {a, b, c};
    const double coef[3] = {1.0, -2.0, 1.0};
    const Vec3 second_diff =
        state.net.points[c] - 2.0 * state.net.points[b] + state.net.points[a];
    for (int r = 0; r < 3; ++r) {
      for (int s = 0; s < 3; ++s)
        add_block(ids[r], ids[s], lam * coef[r] * coef[s] * Mat3::Identity());
      g.segment<3>(3 * ids[r]) += lam * coef[r] * second_diff;
    }
  };
  for (const auto& branch : state.net_branches) {
    const int m = static_cast<int>(branch.points.size());
    if (branch.closed) {
      for (int i = 0; i < m; ++i)
        add_triple(branch.points[(i + m - 1) % m], branch.points[i], branch.points[(i + 1) % m]);
    } else {
      for (int i = 1; i + 1 < m; ++i)
        add_triple(branch.points[i - 1], branch.points[i], branch.points[i + 1]);
    }
  }

  // Unconstrained points (no data, no smoothness) must not break the solve.
  std::vector<double> diag(static_cast<size_t>(3) * n, 0.0);
  for (const auto& t : triplets)
    if (t.row() == t.col()) diag[t.row()] += t.value();
  const double tikhonov = 1e-12 * (*std::max_element(diag.begin(), diag.end()) + 1.0);
  for (int i = 0; i < 3 * n; ++i) triplets.emplace_back(i, i, tikhonov);

  Eigen::SparseMatrix<double> H(3 * n, 3 * n);
  H.setFromTriplets(triplets.begin(), triplets.end());

  Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg;
  cg.setTolerance(1e-10);
  cg.setMaxIterations(10 * n);
  cg.compute(H);
  const Eigen::VectorXd delta = cg.solve(-g);
  if (!delta.allFinite()) return 0.0;

  const double before = objective_at(state, state.net.points);
  std::vector<Vec3> candidate(state.net.points.size());
  double scale = 1.0;
  for (int half = 0; half < 10; ++half, scale *= 0.5) {
    for (int j = 0; j < n; ++j)
      candidate[j] = state.net.points[j] + scale * delta.segment<3>(3 * j);
    if (objective_at(state, candidate) <= before) {
      double max_disp = 0.0;
      for (int j = 0; j < n; ++j)
        max_disp = std::max(max_disp, scale * delta.segment<3>(3 * j).norm());
      state.net.points = std::move(candidate);
      return max_disp;
    }
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Matching refresh
// ---------------------------------------------------------------------------

void refresh_matches(ReconstructionState& state) {
  const OcclusionParams occ{state.sigma0(), 1, state.params.branch_hop_limit};
  const auto& frames = *state.frames;
  std::vector<int> ids = state.active;
  parallel_for(static_cast<int>(ids.size()), state.params.threads, [&](int i) {
    const int frame_id = ids[i];
    MatchSet set = state.params.naive_matching
                       ? naive_match(state.net, state.net_branches, state.poses[frame_id],
                                     state.K, frames[frame_id], state.params.match)
                       : match_network(state.net, state.net_branches, state.poses[frame_id],
                                       state.K, frames[frame_id], state.params.match);
    set.frame = frame_id;
    if (state.params.use_occlusion)
      label_occlusion(state.net, set, frames[frame_id], occ);
    state.matches[frame_id] = std::move(set);
  });
}

// ---------------------------------------------------------------------------
// Two-view bootstrap
// ---------------------------------------------------------------------------

namespace {

// Exhaustive translation search minimizing the mean distance from the shifted
// source skeleton to the target skeleton (chamfer alignment).
Vec2 chamfer_shift(const std::vector<Vec2>& source, const std::vector<double>& target_dist,
                   int width, int height, double range = 32.0, double coarse = 4.0) {
  auto score = [&](double dx, double dy) {
    double sum = 0.0;
    int count = 0;
    for (size_t i = 0; i < source.size(); ++i) {
      const int x = static_cast<int>(std::lround(source[i].x() + dx));
      const int y = static_cast<int>(std::lround(source[i].y() + dy));
      if (x < 0 || x >= width || y < 0 || y >= height) {
        sum += range;  // leaving the image is as bad as the search radius
      } else {
        sum += target_dist[static_cast<size_t>(y) * width + x];
      }
      ++count;
    }
    return count > 0 ? sum / count : kInf;
  };
  Vec2 best(0.0, 0.0);
  double best_score = kInf;
  for (double dy = -range; dy <= range; dy += coarse)
    for (double dx = -range; dx <= range; dx += coarse) {
      const double s = score(dx, dy);
      if (s < best_score) {
        best_score = s;
        best = Vec2(dx, dy);
      }
    }
  const Vec2 center = best;
  for (double dy = center.y() - 3.0; dy <= center.y() + 3.0; dy += 1.0)
    for (double dx = center.x() - 3.0; dx <= center.x() + 3.0; dx += 1.0) {
      const double s = score(dx, dy);
      if (s < best_score) {
        best_score = s;
        best = Vec2(dx, dy);
      }
    }
  return best;
}

struct TwoViewPair {
  Vec2 source;   // pixel in the first frame
  Vec2 target;   // matched pixel in the second frame
  Vec2 normal;   // n at the target pixel
  Vec2 tangent;  // t at the target pixel
};

struct TwoViewSolution {
  FramePose pose;  // second camera, relative to the first
  std::vector<double> depths;
  double cost = kInf;
  std::vector<double> residuals;  // final 2D residual norms
};

double two_view_cost(const std::vector<TwoViewPair>& pairs, const CameraIntrinsics& K,
                     const FramePose& pose, const std::vector<double>& depths, double w,
                     double alpha) {
  double cost = 0.0;
  for (size_t m = 0; m < pairs.size(); ++m) {
    const Vec3 X = depths[m] * pixel_ray(K, pairs[m].source);
    const auto proj = project(pose, K, X);
    if (!proj) return kInf;
    const Vec2 bias = proj->pixel - pairs[m].target;
    const double dn = bias.dot(pairs[m].normal);
    const double dt = bias.dot(pairs[m].tangent);
    cost += dn * dn + w * dt * dt + alpha * (depths[m] - 1.0) * (depths[m] - 1.0);
  }
  return cost;
}

// Gauss-Newton over (pose, per-pair depth) with the depths eliminated by a
// Schur complement. Throws DegenerateMotionError when five consecutive
// proposed steps fail to reduce the cost.
TwoViewSolution solve_two_view(const std::vector<TwoViewPair>& pairs, const CameraIntrinsics& K,
                               const FramePose& init, const SolverParams& params) {
  const double w = params.w;
  const double sqrt_w = std::sqrt(w);
  const double alpha = params.alpha_init;
  const size_t m = pairs.size();

  TwoViewSolution sol;
  sol.pose = init;
  sol.depths.assign(m, 1.0);
  sol.cost = two_view_cost(pairs, K, sol.pose, sol.depths, w, alpha);

  int consecutive_failures = 0;
  for (int iter = 0; iter < 2 * params.gn_iters; ++iter) {
    Mat6 Hpp = Mat6::Zero();
    Vec6 gp = Vec6::Zero();
    std::vector<Vec6> Hpd(m, Vec6::Zero());
    std::vector<double> Hdd(m, 0.0), gd(m, 0.0);

    for (size_t k = 0; k < m; ++k) {
      const Vec3 ray = pixel_ray(K, pairs[k].source);
      const Vec3 X = sol.depths[k] * ray;
      const auto jac = pose_jacobians(sol.pose, K, X);
      const auto proj = project(sol.pose, K, X);
      if (!jac || !proj) continue;
      const Vec2 bias = proj->pixel - pairs[k].target;
      // Pixel derivative w.r.t. the depth along the source ray.
      const Eigen::Matrix<double, 2, 1> d_depth = jac->wrt_point * ray;

      const Eigen::Matrix<double, 1, 6> row_n_p = pairs[k].normal.transpose() * jac->wrt_pose;
      const double row_n_d = pairs[k].normal.dot(d_depth);
      const double res_n = bias.dot(pairs[k].normal);
      const Eigen::Matrix<double, 1, 6> row_t_p =
          sqrt_w * pairs[k].tangent.transpose() * jac->wrt_pose;
      const double row_t_d = sqrt_w * pairs[k].tangent.dot(d_depth);
      const double res_t = sqrt_w * bias.dot(pairs[k].tangent);

      Hpp += row_n_p.transpose() * row_n_p + row_t_p.transpose() * row_t_p;
      gp += row_n_p.transpose() * res_n + row_t_p.transpose() * res_t;
      Hpd[k] = row_n_p.transpose() * row_n_d + row_t_p.transpose() * row_t_d;
      Hdd[k] = row_n_d * row_n_d + row_t_d * row_t_d + alpha;
      gd[k] = row_n_d * res_n + row_t_d * res_t + alpha * (sol.depths[k] - 1.0);
    }

    Mat6 S = Hpp;
    Vec6 rhs = gp;
    for (size_t k = 0; k < m; ++k) {
      if (Hdd[k] <= 0.0) continue;
      S -= Hpd[k] * (Hpd[k].transpose() / Hdd[k]);
      rhs -= Hpd[k] * (gd[k] / Hdd[k]);
    }
    S += 1e-12 * S.trace() * Mat6::Identity();
    const Vec6 delta_pose = -S.ldlt().solve(rhs);
    if (!delta_pose.allFinite()) throw DegenerateMotionError();

    // Back-substituted depth increments at the full pose step; the joint
    // direction is then scaled as one Newton step, which keeps it a descent
    // direction for arbitrarily small scales.
    std::vector<double> delta_depth(m, 0.0);
    for (size_t k = 0; k < m; ++k)
      if (Hdd[k] > 0.0) delta_depth[k] = -(gd[k] + Hpd[k].dot(delta_pose)) / Hdd[k];

    bool improved = false;
    double scale = 1.0;
    for (int half = 0; half < 14; ++half, scale *= 0.5) {
      const FramePose cand_pose = apply_increment(sol.pose, scale * delta_pose.head<3>(),
                                                  scale * delta_pose.tail<3>());
      std::vector<double> cand_depths(m);
      for (size_t k = 0; k < m; ++k)
        cand_depths[k] = std::max(1e-3, sol.depths[k] + scale * delta_depth[k]);
      const double cand_cost = two_view_cost(pairs, K, cand_pose, cand_depths, w, alpha);
      if (cand_cost <= sol.cost) {
        const double step = (scale * delta_pose).norm();
        sol.pose = cand_pose;
        sol.depths = std::move(cand_depths);
        sol.cost = cand_cost;
        improved = true;
        if (step < params.gn_tol) iter = 2 * params.gn_iters;  // converged
        break;
      }
    }
    if (improved) {
      consecutive_failures = 0;
    } else if (delta_pose.norm() < 1e3 * params.gn_tol) {
      break;  // stalled at a stationary point
    } else if (++consecutive_failures >= 5) {
      throw DegenerateMotionError();
    }
  }

  sol.residuals.resize(m, kInf);
  for (size_t k = 0; k < m; ++k) {
    const Vec3 X = sol.depths[k] * pixel_ray(K, pairs[k].source);
    if (const auto proj = project(sol.pose, K, X))
      sol.residuals[k] = (proj->pixel - pairs[k].target).norm();
  }
  return sol;
}

}  // namespace

BootstrapResult bootstrap(const std::vector<SkeletalFrame>& frames, const CameraIntrinsics& K,
                          const SolverParams& params) {
  const size_t frame_count =
      params.max_frames > 0 ? std::min<size_t>(params.max_frames, frames.size()) : frames.size();
  if (frame_count < 2) throw NoBaselineError();
  const SkeletalFrame& first = frames[0];

  std::vector<Vec2> source_pixels;
  for (const auto& chain : first.chains)
    source_pixels.insert(source_pixels.end(), chain.pixels.begin(), chain.pixels.end());

  for (size_t i = 1; i < frame_count; ++i) {
    const SkeletalFrame& second = frames[i];
    const auto target_dist = distance_to_foreground(second.skeleton);
    const Vec2 shift =
        chamfer_shift(source_pixels, target_dist, second.skeleton.width, second.skeleton.height);

    // 2D correspondences: every chain of the first frame is DP-matched into
    // the second frame; the predicted position comes from the coarse chamfer
    // alignment at first and from the current two-view geometry afterwards.
    std::vector<TwoViewPair> pairs;
    std::vector<std::pair<int, int>> pair_source;  // (chain, index) of the source pixel
    auto rebuild_pairs = [&](const std::function<std::optional<Vec2>(int, int)>& predict) {
      pairs.clear();
      pair_source.clear();
      for (size_t c0 = 0; c0 < first.chains.size(); ++c0) {
        const auto& chain = first.chains[c0];
        std::vector<std::optional<Vec2>> proj(chain.pixels.size());
        for (size_t p = 0; p < chain.pixels.size(); ++p)
          proj[p] = predict(static_cast<int>(c0), static_cast<int>(p));
        const BranchMatch bm = match_branch(proj, second, params.match);
        for (size_t p = 0; p < chain.pixels.size(); ++p) {
          const auto [c, idx] = bm.assignment[p];
          if (c < 0) continue;
          pairs.push_back(TwoViewPair{chain.pixels[p], second.chains[c].pixels[idx],
                                      second.chains[c].normals[idx],
                                      second.chains[c].tangents[idx]});
          pair_source.emplace_back(static_cast<int>(c0), static_cast<int>(p));
        }
      }
    };
    rebuild_pairs([&](int c0, int p) -> std::optional<Vec2> {
      return Vec2(first.chains[c0].pixels[p] + shift);
    });
    if (pairs.size() < 30) continue;

    const Vec3 t_seed(shift.x() / K.f0, shift.y() / K.f0, 0.0);
    TwoViewSolution best;
    for (const Vec3& seed : {t_seed, Vec3::Zero().eval()}) {
      try {
        const TwoViewSolution sol =
            solve_two_view(pairs, K, FramePose(Eigen::Quaterniond::Identity(), seed), params);
        if (sol.cost < best.cost) best = sol;
      } catch (const DegenerateMotionError&) {
        // try the next seed; rethrown below if every seed diverges
      }
    }
    if (!(best.cost < kInf)) throw DegenerateMotionError();

    // Wrong matches trap the pose, so alternate matching with geometry: lift
    // the matched pixels by their depths, re-match by reprojection, re-solve.
    for (int round = 0; round < 3; ++round) {
      std::unordered_map<int64_t, double> depth_of;
      for (size_t k = 0; k < pairs.size(); ++k)
        depth_of[(static_cast<int64_t>(pair_source[k].first) << 32) | pair_source[k].second] =
            best.depths[k];
      const FramePose pose = best.pose;
      rebuild_pairs([&](int c0, int p) -> std::optional<Vec2> {
        const auto it = depth_of.find((static_cast<int64_t>(c0) << 32) | p);
        if (it == depth_of.end()) return std::nullopt;
        const Vec3 X = it->second * pixel_ray(K, first.chains[c0].pixels[p]);
        const auto proj = project(pose, K, X);
        if (!proj) return std::nullopt;
        return proj->pixel;
      });
      if (pairs.size() < 30) break;
      try {
        TwoViewSolution refined = solve_two_view(pairs, K, best.pose, params);
        if (refined.cost < kInf) {
          // Trim gross outliers so the next round fits inliers only.
          std::vector<TwoViewPair> kept_pairs;
          std::vector<std::pair<int, int>> kept_source;
          std::vector<double> kept_depths;
          for (size_t k = 0; k < pairs.size(); ++k) {
            if (refined.residuals[k] > 2.0) continue;
            kept_pairs.push_back(pairs[k]);
            kept_source.push_back(pair_source[k]);
            kept_depths.push_back(refined.depths[k]);
          }
          if (kept_pairs.size() >= 30) {
            pairs = std::move(kept_pairs);
            pair_source = std::move(kept_source);
            refined.depths = std::move(kept_depths);
            refined.residuals.clear();
          }
          best = std::move(refined);
        }
      } catch (const DegenerateMotionError&) {
        break;  // keep the previous round's solution
      }
    }
    // Residuals for the final pair set.
    best.residuals.assign(pairs.size(), kInf);
    for (size_t k = 0; k < pairs.size(); ++k) {
      const Vec3 X = best.depths[k] * pixel_ray(K, pairs[k].source);
      if (const auto proj = project(best.pose, K, X))
        best.residuals[k] = (proj->pixel - pairs[k].target).norm();
    }
    if (pairs.size() < 30) continue;

    double mean_depth = 0.0;
    for (double d : best.depths) mean_depth += d;
    mean_depth /= static_cast<double>(best.depths.size());
    const double baseline = best.pose.center().norm() / std::max(1e-12, mean_depth);
    if (baseline <= params.beta) continue;

    BootstrapResult result;
    result.partner = static_cast<int>(i);
    result.partner_pose = best.pose;
    for (size_t k = 0; k < pairs.size(); ++k) {
      if (best.residuals[k] > 2.0) continue;  // drop crossing mismatches
      result.points.push_back(best.depths[k] * pixel_ray(K, pairs[k].source));
      result.source_pixels.push_back(pairs[k].source);
      result.depths.push_back(best.depths[k]);
    }
    if (result.points.size() < 30) continue;
    return result;
  }
  throw NoBaselineError();
}

// ---------------------------------------------------------------------------
// Point spawning
// ---------------------------------------------------------------------------

namespace {

struct RaySegment {
  Vec3 origin;
  Vec3 dir;
};

RaySegment pixel_world_ray(const FramePose& pose, const CameraIntrinsics& K, const Vec2& px) {
  const FramePose c2w = pose.inverse();
  return {pose.center(), (c2w.rotation() * pixel_ray(K, px)).normalized()};
}

// Midpoint of the shortest segment between two rays; empty for near-parallel
// rays (< 1 degree) or intersections behind either camera.
std::optional<Vec3> triangulate_midpoint(const RaySegment& a, const RaySegment& b) {
  const double cos_angle = std::abs(a.dir.dot(b.dir));
  if (cos_angle > std::cos(1.0 * M_PI / 180.0)) return std::nullopt;
  const Vec3 r = b.origin - a.origin;
  const double d11 = 1.0, d12 = a.dir.dot(b.dir), d22 = 1.0;
  const double det = d11 * d22 - d12 * d12;
  if (det < 1e-12) return std::nullopt;
  const double s = (r.dot(a.dir) * d22 - r.dot(b.dir) * d12) / det;
  const double t = (r.dot(a.dir) * d12 - r.dot(b.dir) * d11) / det;
  if (s <= 0.0 || t <= 0.0) return std::nullopt;
  return Vec3(0.5 * (a.origin + s * a.dir + b.origin + t * b.dir));
}

}  // namespace

int spawn_points(ReconstructionState& state, int frame_id) {
  const auto& frames = *state.frames;
  const SkeletalFrame& frame = frames[frame_id];
  const double radius = state.params.match.radius;

  // Projected coverage of the current network in this frame.
  std::vector<Vec2> projected;
  projected.reserve(state.net.points.size());
  for (const auto& p : state.net.points)
    if (const auto proj = project(state.poses[frame_id], state.K, p))
      projected.push_back(proj->pixel);

  const int cell = 10;
  const int gw = (frame.skeleton.width + cell - 1) / cell;
  const int gh = (frame.skeleton.height + cell - 1) / cell;
  std::vector<std::vector<int>> grid(static_cast<size_t>(gw) * gh);
  for (size_t i = 0; i < projected.size(); ++i) {
    const int cx = std::clamp(static_cast<int>(projected[i].x()) / cell, 0, gw - 1);
    const int cy = std::clamp(static_cast<int>(projected[i].y()) / cell, 0, gh - 1);
    grid[static_cast<size_t>(cy) * gw + cx].push_back(static_cast<int>(i));
  }
  auto covered = [&](const Vec2& px) {
    const int cx = static_cast<int>(px.x()) / cell, cy = static_cast<int>(px.y()) / cell;
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int nx = cx + dx, ny = cy + dy;
        if (nx < 0 || nx >= gw || ny < 0 || ny >= gh) continue;
        for (int id : grid[static_cast<size_t>(ny) * gw + nx])
          if ((projected[id] - px).squaredNorm() <= radius * radius) return true;
      }
    return false;
  };

  // Uncovered skeleton pixels, grouped into contiguous chain segments.
  std::vector<std::vector<Vec2>> segments;
  for (const auto& chain : frame.chains) {
    std::vector<Vec2> current;
    for (const auto& px : chain.pixels) {
      if (!covered(px)) {
        current.push_back(px);
      } else if (!current.empty()) {
        if (current.size() >= 10) segments.push_back(current);
        current.clear();
      }
    }
    if (current.size() >= 10) segments.push_back(current);
  }
  if (segments.empty()) return 0;

  // Earlier active frames by temporal closeness.
  std::vector<int> partners;
  for (int id : state.active)
    if (id != frame_id) partners.push_back(id);
  std::sort(partners.begin(), partners.end(), [&](int a, int b) {
    return std::abs(a - frame_id) < std::abs(b - frame_id);
  });

  std::vector<Vec3> spawned;
  std::map<int, std::vector<double>> dist_cache;
  for (const auto& segment : segments) {
    for (int partner : partners) {
      const SkeletalFrame& other = frames[partner];
      auto cached = dist_cache.find(partner);
      if (cached == dist_cache.end())
        cached = dist_cache.emplace(partner, distance_to_foreground(other.skeleton)).first;
      const auto& other_dist = cached->second;
      const Vec2 shift =
          chamfer_shift(segment, other_dist, other.skeleton.width, other.skeleton.height);
      std::vector<std::optional<Vec2>> proj(segment.size());
      for (size_t p = 0; p < segment.size(); ++p) proj[p] = segment[p] + shift;
      const BranchMatch bm = match_branch(proj, other, state.params.match);
      int matched = 0;
      for (const auto& [c, idx] : bm.assignment)
        if (c >= 0) ++matched;
      if (matched < 5 || matched * 2 < static_cast<int>(segment.size())) continue;

      int added = 0;
      for (size_t p = 0; p < segment.size(); ++p) {
        const auto [c, idx] = bm.assignment[p];
        if (c < 0) continue;
        const auto ray_a = pixel_world_ray(state.poses[frame_id], state.K, segment[p]);
        const auto ray_b = pixel_world_ray(state.poses[partner], state.K,
                                           other.chains[c].pixels[idx]);
        if (const auto point = triangulate_midpoint(ray_a, ray_b)) {
          spawned.push_back(*point);
          ++added;
        }
      }
      if (added > 0) break;  // segment resolved against this partner
    }
  }
  if (spawned.empty()) return 0;

  std::vector<Vec3> merged = state.net.points;
  merged.insert(merged.end(), spawned.begin(), spawned.end());
  state.net = resample(build_network(std::move(merged), state.net.delta0));
  state.net_branches = branches(state.net);
  return static_cast<int>(spawned.size());
}

// ---------------------------------------------------------------------------
// Progressive driver
// ---------------------------------------------------------------------------

namespace {

void log_trace(std::vector<TraceRow>* trace, const ReconstructionState& state, int outer,
               const char* phase, double max_disp) {
  if (!trace) return;
  trace->push_back(TraceRow{static_cast<int>(state.active.size()), outer, phase,
                            objective(state), max_disp});
}

// Pose updates for all active frames, parallel over frames. Frames whose
// normal equations degenerate are reported in `failed`.
void pose_pass(ReconstructionState& state, std::vector<int>& failed) {
  std::vector<int> ids = state.active;
  std::vector<FramePose> updated(ids.size());
  std::vector<uint8_t> ok(ids.size(), 1);
  parallel_for(static_cast<int>(ids.size()), state.params.threads, [&](int i) {
    try {
      updated[i] = pose_step(state, ids[i]);
    } catch (const SingularNormalError&) {
      ok[i] = 0;
    }
  });
  failed.clear();
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ok[i])
      state.poses[ids[i]] = updated[i];
    else
      failed.push_back(ids[i]);
  }
}

void drop_frames(ReconstructionState& state, const std::vector<int>& failed) {
  for (int id : failed) {
    std::cerr << "[vid2curve] warning: dropping frame " << id
              << " (pose estimation is underdetermined)\n";
    state.active.erase(std::remove(state.active.begin(), state.active.end(), id),
                       state.active.end());
    state.skipped.push_back(id);
  }
}

// Alternating refinement of all active frames until the points stop moving.
void outer_cycle(ReconstructionState& state, std::vector<TraceRow>* trace) {
  const double point_tol = state.params.point_tol_factor * state.net.delta0;
  std::vector<int> failed;
  for (int outer = 0; outer < state.params.max_outer; ++outer) {
    state.net_branches = branches(state.net);
    refresh_matches(state);
    log_trace(trace, state, outer, "match", 0.0);

    pose_pass(state, failed);
    log_trace(trace, state, outer, "pose", 0.0);
    if (!failed.empty()) {
      drop_frames(state, failed);
      continue;
    }

    const double max_disp = point_step(state);
    log_trace(trace, state, outer, "point", max_disp);

    state.net = resample(build_network(std::move(state.net.points), state.net.delta0));
    state.net_branches = branches(state.net);
    if (max_disp < point_tol) break;
  }
}

}  // namespace

ReconstructionState run(const std::vector<SkeletalFrame>& frames, const CameraIntrinsics& K,
                        SolverParams params, std::vector<TraceRow>* trace) {
  const double delta0 = K.delta0();
  if (params.lambda <= 0.0) params.lambda = (2.5 / delta0) * (2.5 / delta0);

  const int frame_count = params.max_frames > 0
                              ? std::min<int>(params.max_frames, static_cast<int>(frames.size()))
                              : static_cast<int>(frames.size());
  if (frame_count < 2) throw NoBaselineError();

  ReconstructionState state;
  state.K = K;
  state.params = params;
  state.frames = &frames;
  state.poses.assign(frames.size(), FramePose());
  state.matches.assign(frames.size(), MatchSet{});

  SolverParams boot_params = params;
  boot_params.max_frames = frame_count;
  const BootstrapResult boot = bootstrap(frames, K, boot_params);
  state.poses[0] = FramePose();
  state.poses[boot.partner] = boot.partner_pose;
  state.active = {0, boot.partner};
  state.net = resample(build_network(boot.points, delta0));
  state.net_branches = branches(state.net);

  outer_cycle(state, trace);

  for (int frame_id = 1; frame_id < frame_count; ++frame_id) {
    if (frame_id == boot.partner) continue;
    // Seed from the nearest frame already estimated (video continuity).
    int nearest = state.active.front();
    for (int id : state.active)
      if (std::abs(id - frame_id) < std::abs(nearest - frame_id)) nearest = id;
    state.poses[frame_id] = state.poses[nearest];
    state.active.push_back(frame_id);

    // Lock the new frame on before touching the global state: match and pose
    // alternate a few times so fast image motion does not stall the matcher.
    bool frame_ok = true;
    const OcclusionParams occ{state.sigma0(), 1, state.params.branch_hop_limit};
    for (int warm = 0; warm < 3 && frame_ok; ++warm) {
      MatchSet set = state.params.naive_matching
                         ? naive_match(state.net, state.net_branches, state.poses[frame_id],
                                       state.K, frames[frame_id], state.params.match)
                         : match_network(state.net, state.net_branches, state.poses[frame_id],
                                         state.K, frames[frame_id], state.params.match);
      set.frame = frame_id;
      if (state.params.use_occlusion) label_occlusion(state.net, set, frames[frame_id], occ);
      state.matches[frame_id] = std::move(set);
      try {
        state.poses[frame_id] = pose_step(state, frame_id);
      } catch (const SingularNormalError&) {
        frame_ok = false;
      }
    }
    if (!frame_ok) {
      drop_frames(state, {frame_id});
      continue;
    }

    outer_cycle(state, trace);
    if (spawn_points(state, frame_id) > 0) outer_cycle(state, trace);
  }
  return state;
}

}  // namespace vid2curve
