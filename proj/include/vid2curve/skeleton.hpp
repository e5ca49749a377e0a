#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "vid2curve/image.hpp"
#include "vid2curve/types.hpp"

namespace vid2curve {

/// Zhang-Suen iterative thinning down to a one-pixel-wide skeleton.
/// Deletions are re-checked against the live image so that every removal is a
/// simple point: 8-connected component count is preserved and the result is a
/// fixed point of the operator. Throws EmptyMaskError on an all-zero mask.
MaskImage thin(const MaskImage& mask);

/// One traced skeletal curve: an ordered run of 8-connected pixels with the
/// local geometry sampled at each pixel.
struct PixelChain {
  std::vector<Vec2> pixels;
  std::vector<Vec2> tangents;      ///< unit tangents, central differences over +-2 px
  std::vector<Vec2> normals;       ///< tangents rotated +90 degrees
  std::vector<double> half_widths; ///< mask half-width in pixels, >= 0.5
  bool closed = false;             ///< closed loops repeat the first pixel at the end

  int size() const { return static_cast<int>(pixels.size()); }
};

struct SkeletonHit {
  int chain = -1;
  int index = -1;
  double distance = 0.0;
  Vec2 pixel = Vec2::Zero();
};

/// Per-frame preprocessing result: skeleton, traced chains, and the reverse
/// pixel index used for matching queries. Immutable once built.
struct SkeletalFrame {
  MaskImage mask;      ///< original foreground mask
  MaskImage skeleton;  ///< thinned mask, speck/spur fragments removed
  std::vector<PixelChain> chains;

  /// width*height entries; -1 for non-skeleton pixels, otherwise the canonical
  /// (chain << 16 | index) position of the pixel. Junction pixels replicated
  /// into several chains keep their first occurrence here.
  std::vector<int32_t> pixel_index;

  bool has_pixel(int x, int y) const {
    return skeleton.inside(x, y) && pixel_index[static_cast<size_t>(y) * skeleton.width + x] >= 0;
  }
  std::pair<int, int> chain_position(int x, int y) const {
    const int32_t packed = pixel_index[static_cast<size_t>(y) * skeleton.width + x];
    return {packed >> 16, packed & 0xffff};
  }

  /// Nearest skeleton pixel within `radius` of p, ties broken by the lowest
  /// (chain, index). Empty when nothing is in range.
  std::optional<SkeletonHit> nearest_skeleton_pixel(const Vec2& p, double radius) const;

  /// Up to `cap` nearest skeleton pixels within `radius`, sorted by distance
  /// then (chain, index).
  void collect_candidates(const Vec2& p, double radius, int cap,
                          std::vector<SkeletonHit>& out) const;

  // 10-px uniform grid over skeleton pixels.
  int cell_size = 10;
  int grid_w = 0, grid_h = 0;
  std::vector<std::vector<int32_t>> grid;  ///< linear pixel ids per cell
};

/// Traces maximal pixel chains between endpoints (degree 1) and junction
/// pixels (degree >= 3). Junction pixels are duplicated into each incident
/// chain as terminal pixels; pure cycles become closed chains. Fragments
/// shorter than 3 pixels are treated as noise and erased from the skeleton.
SkeletalFrame trace_chains(const MaskImage& skeleton);

/// Fills tangents, normals and half-widths for every chain of the frame.
/// Half-widths come from the exact Euclidean distance transform of `mask`.
void chain_geometry(SkeletalFrame& frame, const MaskImage& mask);

/// thin + trace_chains + chain_geometry in one call.
SkeletalFrame preprocess_mask(const MaskImage& mask);

}  // namespace vid2curve
