#pragma once

// Cosine windows and residual masks. Masks live on the response/label grid
// and use centered offsets (0 at index n/2).

#include <cmath>
#include <numbers>
#include <optional>

#include "maskcf/core.hpp"

namespace maskcf {

enum class MaskKind { cosine, binary, gaussian, ones };

inline const char* to_string(MaskKind k) {
  switch (k) {
    case MaskKind::cosine: return "cosine";
    case MaskKind::binary: return "binary";
    case MaskKind::gaussian: return "gaussian";
    case MaskKind::ones: return "ones";
  }
  return "?";
}

struct SpatialMask {
  RealGrid data;
  MaskKind kind = MaskKind::ones;
  std::optional<double> target_h;  // feature cells; absent for cosine/ones
  std::optional<double> target_w;

  const Grid2& grid() const noexcept { return data.grid(); }
};

inline SpatialMask ones_mask(Grid2 grid) { return {RealGrid(grid, 1.0), MaskKind::ones, {}, {}}; }

/// Separable Hann window sin^2(pi i/(H-1)) sin^2(pi j/(W-1)).
inline SpatialMask cosine_window(Grid2 grid) {
  if (grid.height < 2 || grid.width < 2) throw std::invalid_argument("cosine_window: grid must be at least 2x2");
  auto profile = [](int n) {
    std::vector<double> p(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const double s = std::sin(std::numbers::pi * i / (n - 1));
      p[std::size_t(i)] = s * s;
    }
    // Exact zeros at the ends; sin(pi) is not exactly 0 in floating point.
    p.front() = 0.0;
    p.back() = 0.0;
    return p;
  };
  const auto ph = profile(grid.height);
  const auto pw = profile(grid.width);
  SpatialMask m{RealGrid(grid), MaskKind::cosine, {}, {}};
  for (int i = 0; i < grid.height; ++i)
    for (int j = 0; j < grid.width; ++j) m.data(i, j) = ph[std::size_t(i)] * pw[std::size_t(j)];
  return m;
}

namespace detail {

inline void check_target(Grid2 grid, double h, double w) {
  if (!(h > 0.0) || !(w > 0.0)) throw std::invalid_argument("mask: target size must be positive");
  if (h > grid.height || w > grid.width) throw std::invalid_argument("mask: target larger than grid");
}

// |x| <= H/2 - h/2 and |y| <= W/2 - w/2, boundary included.
inline bool in_support(int i, int j, Grid2 grid, double h, double w) {
  const double x = centered_offset(i, grid.height);
  const double y = centered_offset(j, grid.width);
  return std::abs(x) <= grid.height / 2.0 - h / 2.0 && std::abs(y) <= grid.width / 2.0 - w / 2.0;
}

}  // namespace detail

/// 1 where the shifted sample is a real image patch, 0 where it wraps.
inline SpatialMask binary_mask(Grid2 grid, double h, double w) {
  detail::check_target(grid, h, w);
  SpatialMask m{RealGrid(grid), MaskKind::binary, h, w};
  for (int i = 0; i < grid.height; ++i)
    for (int j = 0; j < grid.width; ++j) m.data(i, j) = detail::in_support(i, j, grid, h, w) ? 1.0 : 0.0;
  return m;
}

/// exp(-(x/(h delta))^2 - (y/(w delta))^2) on the binary-mask support.
inline SpatialMask gaussian_mask(Grid2 grid, double h, double w, double delta) {
  if (!(delta > 0.0)) throw std::invalid_argument("gaussian_mask: delta must be positive");
  detail::check_target(grid, h, w);
  SpatialMask m{RealGrid(grid), MaskKind::gaussian, h, w};
  for (int i = 0; i < grid.height; ++i) {
    const double x = centered_offset(i, grid.height) / (h * delta);
    for (int j = 0; j < grid.width; ++j) {
      if (!detail::in_support(i, j, grid, h, w)) continue;
      const double y = centered_offset(j, grid.width) / (w * delta);
      // Floor keeps the support identical to the binary mask for tiny delta.
      m.data(i, j) = std::max(std::exp(-x * x - y * y), std::numeric_limits<double>::min());
    }
  }
  return m;
}

inline RealGrid apply_mask(const SpatialMask& m, const RealGrid& g) {
  if (!(m.grid() == g.grid())) throw std::invalid_argument("apply_mask: dimension mismatch");
  RealGrid out(g.grid());
  for (std::size_t k = 0; k < g.size(); ++k) out[k] = m.data[k] * g[k];
  return out;
}

inline FeatureMap apply_mask(const SpatialMask& m, const FeatureMap& x) {
  std::vector<RealGrid> out;
  out.reserve(std::size_t(x.channels()));
  for (const auto& c : x) out.push_back(apply_mask(m, c));
  return FeatureMap(std::move(out));
}

inline double ones_fraction(const SpatialMask& m) {
  double n = 0.0;
  for (double v : m.data) n += (v > 0.0) ? 1.0 : 0.0;
  return n / double(m.data.size());
}

}  // namespace maskcf
