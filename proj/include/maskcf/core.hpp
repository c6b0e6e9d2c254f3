#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "maskcf/errors.hpp"

namespace maskcf {

using Complex = std::complex<double>;

struct Grid2 {
  int height = 1;
  int width = 1;

  Grid2() = default;
  Grid2(int h, int w) : height(h), width(w) {
    if (h < 1 || w < 1) throw std::invalid_argument("Grid2: dimensions must be positive");
  }
  std::size_t size() const noexcept { return std::size_t(height) * std::size_t(width); }
  friend bool operator==(const Grid2&, const Grid2&) = default;
};

// Row-major H x W storage.
template <class T>
class Array2 {
 public:
  using value_type = T;

  Array2() = default;
  explicit Array2(Grid2 grid, T fill = T{}) : grid_(grid), data_(grid.size(), fill) {}
  Array2(Grid2 grid, std::vector<T> data) : grid_(grid), data_(std::move(data)) {
    if (data_.size() != grid_.size()) throw std::invalid_argument("Array2: data size does not match grid");
  }

  const Grid2& grid() const noexcept { return grid_; }
  int height() const noexcept { return grid_.height; }
  int width() const noexcept { return grid_.width; }
  std::size_t size() const noexcept { return data_.size(); }

  T& operator()(int i, int j) { return data_[std::size_t(i) * grid_.width + j]; }
  const T& operator()(int i, int j) const { return data_[std::size_t(i) * grid_.width + j]; }
  T& operator[](std::size_t k) { return data_[k]; }
  const T& operator[](std::size_t k) const { return data_[k]; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }
  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  Array2& operator+=(const Array2& o) {
    require_same(o);
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
    return *this;
  }
  Array2& operator-=(const Array2& o) {
    require_same(o);
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
    return *this;
  }
  Array2& operator*=(T s) {
    for (auto& v : data_) v *= s;
    return *this;
  }
  friend Array2 operator+(Array2 a, const Array2& b) { return a += b; }
  friend Array2 operator-(Array2 a, const Array2& b) { return a -= b; }
  friend Array2 operator*(Array2 a, T s) { return a *= s; }
  friend Array2 operator*(T s, Array2 a) { return a *= s; }

  void require_same(const Array2& o) const {
    if (!(grid_ == o.grid_)) throw std::invalid_argument("grid dimension mismatch");
  }

 private:
  Grid2 grid_;
  std::vector<T> data_;
};

using RealGrid = Array2<double>;
using ComplexGrid = Array2<Complex>;

inline double sum_squares(const RealGrid& g) {
  double s = 0.0;
  for (double v : g) s += v * v;
  return s;
}

inline double dot(const RealGrid& a, const RealGrid& b) {
  a.require_same(b);
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

inline double max_abs(const RealGrid& g) {
  double m = 0.0;
  for (double v : g) m = std::max(m, std::abs(v));
  return m;
}

inline bool all_finite(const RealGrid& g) {
  return std::all_of(g.begin(), g.end(), [](double v) { return std::isfinite(v); });
}

// L channels sharing one grid.
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(Grid2 grid, int channels) : grid_(grid), channels_(std::size_t(channels), RealGrid(grid)) {
    if (channels < 1) throw std::invalid_argument("FeatureMap: need at least one channel");
  }
  explicit FeatureMap(std::vector<RealGrid> channels) : channels_(std::move(channels)) {
    if (channels_.empty()) throw std::invalid_argument("FeatureMap: need at least one channel");
    grid_ = channels_.front().grid();
    for (const auto& c : channels_) {
      if (!(c.grid() == grid_)) throw std::invalid_argument("FeatureMap: channels must share one grid");
      if (!all_finite(c)) throw std::invalid_argument("FeatureMap: non-finite value");
    }
  }

  const Grid2& grid() const noexcept { return grid_; }
  int channels() const noexcept { return int(channels_.size()); }
  RealGrid& operator[](int l) { return channels_[std::size_t(l)]; }
  const RealGrid& operator[](int l) const { return channels_[std::size_t(l)]; }
  auto begin() noexcept { return channels_.begin(); }
  auto end() noexcept { return channels_.end(); }
  auto begin() const noexcept { return channels_.begin(); }
  auto end() const noexcept { return channels_.end(); }

 private:
  Grid2 grid_;
  std::vector<RealGrid> channels_;
};

struct Label {
  RealGrid data;
  double sigma = 1.0;
  const Grid2& grid() const noexcept { return data.grid(); }
};

struct BoundingBox {
  double cx = 0.0;
  double cy = 0.0;
  double w = 1.0;
  double h = 1.0;

  static BoundingBox from_top_left(double x, double y, double w, double h) {
    if (!(w > 0.0) || !(h > 0.0)) throw std::invalid_argument("BoundingBox: non-positive size");
    return {x + w / 2.0, y + h / 2.0, w, h};
  }
  double left() const noexcept { return cx - w / 2.0; }
  double top() const noexcept { return cy - h / 2.0; }
  double area() const noexcept { return w * h; }
};

struct SolverConfig {
  double lambda = 0.01;
  double tau = 2.5;
  double mu = 2.5;
  int iters = 3;
  double tau_max = 100.0;
  double mu_max = 100.0;
  double growth = 1.05;
  double delta = 1.2;
  // Stop early once both constraint residuals fall below this (0 disables).
  double tolerance = 0.0;

  // BACF-style single-base defaults.
  static SolverConfig single_base() { return {}; }
  // Handcrafted-feature multi-base defaults.
  static SolverConfig multi_base() {
    SolverConfig c;
    c.tau = 2.2;
    c.iters = 4;
    c.delta = 1.4;
    return c;
  }
  // Deep-feature multi-base defaults; kept for completeness.
  static SolverConfig multi_base_deep() {
    SolverConfig c;
    c.tau = 2.5;
    c.iters = 5;
    c.delta = 2.0;
    return c;
  }

  void validate() const {
    if (!(lambda >= 0.0)) throw std::invalid_argument("SolverConfig: lambda must be >= 0");
    if (!(tau > 0.0) || !(mu > 0.0)) throw std::invalid_argument("SolverConfig: tau and mu must be > 0");
    if (iters < 1) throw std::invalid_argument("SolverConfig: iters must be >= 1");
    if (!(tau <= tau_max) || !(mu <= mu_max)) throw std::invalid_argument("SolverConfig: tau/mu exceed their caps");
    if (!(growth >= 1.0)) throw std::invalid_argument("SolverConfig: growth must be >= 1");
    if (!(delta > 0.0)) throw std::invalid_argument("SolverConfig: delta must be > 0");
    if (!(tolerance >= 0.0)) throw std::invalid_argument("SolverConfig: tolerance must be >= 0");
  }
};

/// Signed offset of index i on an axis of length n, with 0 at index n/2
/// (the fftshift centre). Range is [-floor(n/2), ceil(n/2) - 1].
inline int centered_offset(int i, int n) noexcept { return i - n / 2; }

/// Signed offset of index i on a cyclic axis, with 0 at index 0. Same range
/// as centered_offset; this is the layout filters are stored in.
inline int wrapped_offset(int i, int n) noexcept { return i < (n + 1) / 2 ? i : i - n; }

inline int wrap_index(int i, int n) noexcept { return ((i % n) + n) % n; }

inline std::vector<int> centered_coords(int n) {
  std::vector<int> out(static_cast<std::size_t>(std::max(n, 0)));
  for (int i = 0; i < n; ++i) out[std::size_t(i)] = centered_offset(i, n);
  return out;
}

inline Label make_gaussian_label(Grid2 grid, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("make_gaussian_label: sigma must be positive");
  Label y{RealGrid(grid), sigma};
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (int i = 0; i < grid.height; ++i) {
    const double dy = centered_offset(i, grid.height);
    for (int j = 0; j < grid.width; ++j) {
      const double dx = centered_offset(j, grid.width);
      y.data(i, j) = std::exp(-(dx * dx + dy * dy) * inv);
    }
  }
  return y;
}

/// Default label bandwidth for a target of h x w feature cells.
inline double default_label_sigma(double h_cells, double w_cells) { return std::sqrt(h_cells * w_cells) / 16.0; }

}  // namespace maskcf
