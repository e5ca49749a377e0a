#include "vid2curve/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

namespace vid2curve {

int MaskImage::count() const {
  return static_cast<int>(std::count_if(bits.begin(), bits.end(), [](uint8_t v) { return v != 0; }));
}

MaskImage MaskImage::inverted() const {
  MaskImage out(width, height);
  for (size_t i = 0; i < bits.size(); ++i) out.bits[i] = bits[i] ? 0 : 1;
  return out;
}

namespace {

int read_pgm_token(std::istream& in) {
  // Skips whitespace and '#' comment lines between header tokens.
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = in.get();
  }
  int value = 0;
  bool any = false;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    any = true;
    c = in.get();
  }
  if (!any) throw IoError("malformed PGM header");
  return value;
}

MaskImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open mask file: " + path);
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  if (m0 != 'P' || m1 != '5') throw IoError("not a binary PGM (P5) file: " + path);
  const int width = read_pgm_token(in);
  const int height = read_pgm_token(in);
  const int maxval = read_pgm_token(in);
  if (maxval <= 0 || maxval > 255) throw IoError("unsupported PGM maxval in " + path);
  MaskImage mask(width, height);
  std::vector<uint8_t> row(static_cast<size_t>(width));
  for (int y = 0; y < height; ++y) {
    in.read(reinterpret_cast<char*>(row.data()), width);
    if (!in) throw IoError("truncated PGM data in " + path);
    for (int x = 0; x < width; ++x) mask.set(x, y, row[x] >= 128 ? 1 : 0);
  }
  return mask;
}

MaskImage read_png(const std::string& path) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw IoError("cannot open mask file: " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw IoError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw IoError("failed to decode PNG: " + path);
  }
  png_init_io(png, fp);
  png_read_info(png, info);

  // Normalize any input layout to 8-bit grayscale.
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  const png_byte color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_COLOR) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  png_read_update_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  std::vector<uint8_t> row(png_get_rowbytes(png, info));
  MaskImage mask(width, height);
  for (int y = 0; y < height; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < width; ++x) mask.set(x, y, row[x] >= 128 ? 1 : 0);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return mask;
}

}  // namespace

MaskImage read_mask(const std::string& path) {
  const auto dot = path.find_last_of('.');
  std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == "png") return read_png(path);
  return read_pgm(path);
}

void write_pgm(const MaskImage& mask, const std::string& path, uint8_t on) {
  std::vector<uint8_t> gray(mask.bits.size());
  for (size_t i = 0; i < mask.bits.size(); ++i) gray[i] = mask.bits[i] ? on : 0;
  write_pgm_gray(gray, mask.width, mask.height, path);
}

void write_pgm_gray(const std::vector<uint8_t>& gray, int width, int height,
                    const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write PGM file: " + path);
  out << "P5\n" << width << " " << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(gray.data()), static_cast<std::streamsize>(gray.size()));
}

namespace {

constexpr double kEdtInf = 1e20;

// 1D lower envelope of parabolas (Felzenszwalb & Huttenlocher).
void edt_1d(const double* f, int n, double* d, int* v, double* z) {
  int k = 0;
  v[0] = 0;
  z[0] = -kEdtInf;
  z[1] = kEdtInf;
  for (int q = 1; q < n; ++q) {
    double s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
    while (s <= z[k]) {
      --k;
      s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kEdtInf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    d[q] = dq * dq + f[v[k]];
  }
}

}  // namespace

std::vector<double> squared_distance_to_zero(const MaskImage& mask) {
  const int w = mask.width, h = mask.height;
  std::vector<double> field(static_cast<size_t>(w) * h);
  for (size_t i = 0; i < field.size(); ++i) field[i] = mask.bits[i] ? kEdtInf : 0.0;

  std::vector<double> f(std::max(w, h)), d(std::max(w, h)), z(std::max(w, h) + 1);
  std::vector<int> v(std::max(w, h));

  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) f[y] = field[static_cast<size_t>(y) * w + x];
    edt_1d(f.data(), h, d.data(), v.data(), z.data());
    for (int y = 0; y < h; ++y) field[static_cast<size_t>(y) * w + x] = d[y];
  }
  for (int y = 0; y < h; ++y) {
    double* row = field.data() + static_cast<size_t>(y) * w;
    std::copy(row, row + w, f.begin());
    edt_1d(f.data(), w, d.data(), v.data(), z.data());
    std::copy(d.begin(), d.begin() + w, row);
  }
  return field;
}

std::vector<double> distance_to_zero(const MaskImage& mask) {
  auto sq = squared_distance_to_zero(mask);
  for (double& v : sq) v = std::sqrt(v);
  return sq;
}

std::vector<double> distance_to_foreground(const MaskImage& mask) {
  return distance_to_zero(mask.inverted());
}

int component_count(const MaskImage& mask) {
  const int w = mask.width, h = mask.height;
  std::vector<uint8_t> seen(mask.bits.size(), 0);
  std::vector<int> stack;
  int components = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int idx = y * w + x;
      if (!mask.bits[idx] || seen[idx]) continue;
      ++components;
      seen[idx] = 1;
      stack.assign(1, idx);
      while (!stack.empty()) {
        const int cur = stack.back();
        stack.pop_back();
        const int cx = cur % w, cy = cur / w;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = cx + dx, ny = cy + dy;
            if (!mask.inside(nx, ny)) continue;
            const int nidx = ny * w + nx;
            if (mask.bits[nidx] && !seen[nidx]) {
              seen[nidx] = 1;
              stack.push_back(nidx);
            }
          }
        }
      }
    }
  }
  return components;
}

}  // namespace vid2curve
