#pragma once

// Image patches and handcrafted features (grayscale cells, 31-channel HOG).

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "maskcf/core.hpp"

namespace maskcf {

/// Row-major interleaved image with values in [0, 1].
struct Image {
  int rows = 0;
  int cols = 0;
  int channels = 1;
  std::vector<double> data;

  Image() = default;
  Image(int r, int c, int ch, double fill = 0.0) : rows(r), cols(c), channels(ch) {
    if (r < 1 || c < 1 || (ch != 1 && ch != 3)) throw std::invalid_argument("Image: bad dimensions");
    data.assign(std::size_t(r) * std::size_t(c) * std::size_t(ch), fill);
  }
  double& at(int r, int c, int ch = 0) { return data[(std::size_t(r) * cols + c) * channels + ch]; }
  double at(int r, int c, int ch = 0) const { return data[(std::size_t(r) * cols + c) * channels + ch]; }
};

struct ImagePatch {
  Image pixels;
  BoundingBox source;
};

enum class FeatureKind { grayscale, hog31 };

struct FeatureConfig {
  int cell = 4;
  FeatureKind kind = FeatureKind::hog31;
  double search_scale = 5.0;

  void validate() const {
    if (cell < 1) throw std::invalid_argument("FeatureConfig: cell size must be >= 1");
    if (!(search_scale >= 1.0)) throw std::invalid_argument("FeatureConfig: search scale must be >= 1");
  }
  int channels() const noexcept { return kind == FeatureKind::hog31 ? 31 : 1; }
};

inline Image to_gray(const Image& im) {
  if (im.channels == 1) return im;
  Image g(im.rows, im.cols, 1);
  for (int r = 0; r < im.rows; ++r)
    for (int c = 0; c < im.cols; ++c) g.at(r, c) = 0.299 * im.at(r, c, 0) + 0.587 * im.at(r, c, 1) + 0.114 * im.at(r, c, 2);
  return g;
}

namespace detail {
inline double bilinear(const Image& im, double y, double x, int ch) {
  y = std::clamp(y, 0.0, double(im.rows - 1));
  x = std::clamp(x, 0.0, double(im.cols - 1));
  const int y0 = int(std::floor(y)), x0 = int(std::floor(x));
  const int y1 = std::min(y0 + 1, im.rows - 1), x1 = std::min(x0 + 1, im.cols - 1);
  const double fy = y - y0, fx = x - x0;
  if (fx == 0.0 && fy == 0.0) return im.at(y0, x0, ch);
  return (1 - fy) * ((1 - fx) * im.at(y0, x0, ch) + fx * im.at(y0, x1, ch)) +
         fy * ((1 - fx) * im.at(y1, x0, ch) + fx * im.at(y1, x1, ch));
}
}  // namespace detail

/// Square region of `side` pixels centred at (cx, cy), resampled to out x out
/// pixels. Samples outside the image replicate the nearest edge pixel.
inline Image sample_square(const Image& im, double cx, double cy, double side, int out) {
  if (!(side > 0.0) || out < 1) throw std::invalid_argument("sample_square: degenerate region");
  Image p(out, out, im.channels);
  const double step = side / out;
  const double x0 = cx - side / 2.0 + 0.5 * step - 0.5;
  const double y0 = cy - side / 2.0 + 0.5 * step - 0.5;
  for (int r = 0; r < out; ++r)
    for (int c = 0; c < out; ++c)
      for (int ch = 0; ch < im.channels; ++ch) p.at(r, c, ch) = detail::bilinear(im, y0 + r * step, x0 + c * step, ch);
  return p;
}

/// Square search region of side s * sqrt(w h) centred on the box.
inline ImagePatch crop_patch(const Image& im, const BoundingBox& box, double s) {
  if (!(s >= 1.0)) throw std::invalid_argument("crop_patch: search scale must be >= 1");
  if (!(box.w > 0.0) || !(box.h > 0.0)) throw std::invalid_argument("crop_patch: empty box");
  if (box.left() + box.w <= 0.0 || box.top() + box.h <= 0.0 || box.left() >= im.cols || box.top() >= im.rows)
    throw std::invalid_argument("crop_patch: box lies outside the image");
  const double side = s * std::sqrt(box.w * box.h);
  const int n = std::max(1, int(std::lround(side)));
  return ImagePatch{sample_square(im, box.cx, box.cy, double(n), n), box};
}

inline Image resize(const Image& im, int rows, int cols) {
  if (rows < 1 || cols < 1) throw std::invalid_argument("resize: bad size");
  Image out(rows, cols, im.channels);
  const double sy = double(im.rows) / rows, sx = double(im.cols) / cols;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      for (int ch = 0; ch < im.channels; ++ch)
        out.at(r, c, ch) = detail::bilinear(im, (r + 0.5) * sy - 0.5, (c + 0.5) * sx - 0.5, ch);
  return out;
}

/// Mean-pooled luminance per cell, mean-centred.
inline FeatureMap extract_grayscale(const Image& im, int cell) {
  if (cell < 1 || im.rows % cell != 0 || im.cols % cell != 0)
    throw std::invalid_argument("extract_grayscale: cell must divide the patch size");
  const Image g = to_gray(im);
  const Grid2 grid(im.rows / cell, im.cols / cell);
  RealGrid out(grid);
  for (int r = 0; r < im.rows; ++r)
    for (int c = 0; c < im.cols; ++c) out(r / cell, c / cell) += g.at(r, c);
  double mean = 0.0;
  for (auto& v : out) {
    v /= double(cell * cell);
    mean += v;
  }
  mean /= double(out.size());
  for (auto& v : out) v -= mean;
  return FeatureMap({std::move(out)});
}

inline FeatureMap extract_grayscale(const ImagePatch& p, int cell) { return extract_grayscale(p.pixels, cell); }

/// Felzenszwalb 31-channel HOG on luminance: 18 contrast-sensitive and 9
/// insensitive orientation channels plus 4 texture channels, each normalized
/// against the four 2x2 cell blocks around the cell and truncated at 0.2.
inline FeatureMap extract_hog(const Image& im, int cell = 4) {
  if (cell < 1 || im.rows < 3 * cell || im.cols < 3 * cell)
    throw std::invalid_argument("extract_hog: patch must be at least 3 cells on each side");
  constexpr int kOrient = 9;
  const Image g = to_gray(im);
  const int H = im.rows, W = im.cols;
  const int ch = H / cell, cw = W / cell;
  std::array<double, kOrient> ux, uy;
  for (int o = 0; o < kOrient; ++o) {
    ux[std::size_t(o)] = std::cos(o * std::numbers::pi / kOrient);
    uy[std::size_t(o)] = std::sin(o * std::numbers::pi / kOrient);
  }

  std::vector<double> hist(std::size_t(ch) * cw * 2 * kOrient, 0.0);
  auto H_at = [&](int i, int j, int o) -> double& { return hist[(std::size_t(i) * cw + j) * 2 * kOrient + o]; };
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const double dx = g.at(y, std::min(x + 1, W - 1)) - g.at(y, std::max(x - 1, 0));
      const double dy = g.at(std::min(y + 1, H - 1), x) - g.at(std::max(y - 1, 0), x);
      const double mag = std::sqrt(dx * dx + dy * dy);
      if (mag == 0.0) continue;
      double best = 0.0;
      int bin = 0;
      for (int o = 0; o < kOrient; ++o) {
        const double d = ux[std::size_t(o)] * dx + uy[std::size_t(o)] * dy;
        if (d > best) best = d, bin = o;
        else if (-d > best) best = -d, bin = o + kOrient;
      }
      const double xp = (x + 0.5) / cell - 0.5, yp = (y + 0.5) / cell - 0.5;
      const int ix = int(std::floor(xp)), iy = int(std::floor(yp));
      const double vx1 = xp - ix, vy1 = yp - iy, vx0 = 1.0 - vx1, vy0 = 1.0 - vy1;
      auto add = [&](int i, int j, double v) {
        if (i >= 0 && i < ch && j >= 0 && j < cw) H_at(i, j, bin) += v * mag;
      };
      add(iy, ix, vy0 * vx0);
      add(iy, ix + 1, vy0 * vx1);
      add(iy + 1, ix, vy1 * vx0);
      add(iy + 1, ix + 1, vy1 * vx1);
    }

  std::vector<double> energy(std::size_t(ch) * cw, 0.0);
  for (int i = 0; i < ch; ++i)
    for (int j = 0; j < cw; ++j) {
      double e = 0.0;
      for (int o = 0; o < kOrient; ++o) {
        const double s = H_at(i, j, o) + H_at(i, j, o + kOrient);
        e += s * s;
      }
      energy[std::size_t(i) * cw + j] = e;
    }
  auto E = [&](int i, int j) {
    return energy[std::size_t(std::clamp(i, 0, ch - 1)) * cw + std::size_t(std::clamp(j, 0, cw - 1))];
  };

  constexpr double kEps = 1e-4, kCap = 0.2, kTexture = 0.2357;
  std::vector<RealGrid> out(31, RealGrid(Grid2(ch, cw)));
  for (int i = 0; i < ch; ++i)
    for (int j = 0; j < cw; ++j) {
      std::array<double, 4> n;
      int b = 0;
      for (int di : {-1, 0})
        for (int dj : {-1, 0})
          n[std::size_t(b++)] =
              1.0 / std::sqrt(E(i + di, j + dj) + E(i + di + 1, j + dj) + E(i + di, j + dj + 1) + E(i + di + 1, j + dj + 1) + kEps);
      std::array<double, 4> tex{};
      for (int o = 0; o < 2 * kOrient; ++o) {
        double s = 0.0;
        for (int k = 0; k < 4; ++k) {
          const double v = std::min(H_at(i, j, o) * n[std::size_t(k)], kCap);
          s += v;
          tex[std::size_t(k)] += v;
        }
        out[std::size_t(o)](i, j) = 0.5 * s;
      }
      for (int o = 0; o < kOrient; ++o) {
        double s = 0.0;
        const double sum = H_at(i, j, o) + H_at(i, j, o + kOrient);
        for (int k = 0; k < 4; ++k) s += std::min(sum * n[std::size_t(k)], kCap);
        out[std::size_t(2 * kOrient + o)](i, j) = 0.5 * s;
      }
      for (int k = 0; k < 4; ++k) out[std::size_t(3 * kOrient + k)](i, j) = kTexture * tex[std::size_t(k)];
    }
  return FeatureMap(std::move(out));
}

inline FeatureMap extract_hog(const ImagePatch& p, int cell = 4) { return extract_hog(p.pixels, cell); }

inline FeatureMap extract_features(const Image& patch, const FeatureConfig& cfg) {
  return cfg.kind == FeatureKind::hog31 ? extract_hog(patch, cfg.cell) : extract_grayscale(patch, cfg.cell);
}

}  // namespace maskcf
