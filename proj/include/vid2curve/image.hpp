#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vid2curve/types.hpp"

namespace vid2curve {

/// Row-major binary occupancy image. Values are 0 or 1.
struct MaskImage {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> bits;

  MaskImage() = default;
  MaskImage(int w, int h) : width(w), height(h), bits(static_cast<size_t>(w) * h, 0) {}

  bool inside(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
  uint8_t at(int x, int y) const { return bits[static_cast<size_t>(y) * width + x]; }
  void set(int x, int y, uint8_t v) { bits[static_cast<size_t>(y) * width + x] = v; }

  /// Bounds-checked read; pixels outside the image count as background.
  uint8_t at_or_zero(int x, int y) const { return inside(x, y) ? at(x, y) : 0; }

  int count() const;
  MaskImage inverted() const;

  bool operator==(const MaskImage& other) const = default;
};

/// Reads a PGM (P5) or PNG grayscale file, thresholding at 128.
MaskImage read_mask(const std::string& path);

/// Writes the mask as a binary PGM, foreground mapped to `on`.
void write_pgm(const MaskImage& mask, const std::string& path, uint8_t on = 255);

/// Writes an 8-bit grayscale PGM.
void write_pgm_gray(const std::vector<uint8_t>& gray, int width, int height,
                    const std::string& path);

/// Exact squared Euclidean distance transform: per pixel, the squared distance
/// to the nearest zero pixel (Felzenszwalb-Huttenlocher). Pixels of an
/// all-foreground image get a large finite sentinel.
std::vector<double> squared_distance_to_zero(const MaskImage& mask);

/// Euclidean distance to the nearest zero pixel.
std::vector<double> distance_to_zero(const MaskImage& mask);

/// Euclidean distance to the nearest foreground pixel.
std::vector<double> distance_to_foreground(const MaskImage& mask);

/// 8-connected component count over foreground pixels.
int component_count(const MaskImage& mask);

}  // namespace vid2curve
