#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "maskcf/core.hpp"

namespace maskcf {

/// Selection operator P: the D cells of the filter support within the T cells
/// of the grid.
class CropGeometry {
 public:
  CropGeometry() = default;

  /// Block of crop_h x crop_w wrapped offsets around the filter origin.
  static CropGeometry central(Grid2 grid, int crop_h, int crop_w) {
    if (crop_h < 1 || crop_w < 1 || crop_h > grid.height || crop_w > grid.width)
      throw std::invalid_argument("CropGeometry: crop must fit inside the grid");
    CropGeometry c;
    c.grid_ = grid;
    c.crop_h_ = crop_h;
    c.crop_w_ = crop_w;
    c.indices_.reserve(std::size_t(crop_h) * std::size_t(crop_w));
    for (int a = 0; a < crop_h; ++a) {
      const int i = wrap_index(a - crop_h / 2, grid.height);
      for (int b = 0; b < crop_w; ++b) {
        const int j = wrap_index(b - crop_w / 2, grid.width);
        c.indices_.push_back(std::size_t(i) * std::size_t(grid.width) + std::size_t(j));
      }
    }
    return c;
  }

  /// Crop for a target of (possibly fractional) h x w cells.
  static CropGeometry for_target(Grid2 grid, double h, double w) {
    auto fit = [](double v, int n) { return std::clamp(int(std::lround(v)), 1, n); };
    return central(grid, fit(h, grid.height), fit(w, grid.width));
  }

  static CropGeometry full(Grid2 grid) { return central(grid, grid.height, grid.width); }

  const Grid2& grid() const noexcept { return grid_; }
  int crop_h() const noexcept { return crop_h_; }
  int crop_w() const noexcept { return crop_w_; }
  int D() const noexcept { return int(indices_.size()); }
  std::size_t T() const noexcept { return grid_.size(); }
  std::span<const std::size_t> indices() const noexcept { return indices_; }

  /// P^T g: zero-padded back to the full grid.
  RealGrid embed(std::span<const double> g) const {
    if (g.size() != indices_.size()) throw std::invalid_argument("embed: crop size mismatch");
    RealGrid f(grid_);
    for (std::size_t d = 0; d < indices_.size(); ++d) f[indices_[d]] = g[d];
    return f;
  }

  /// P f
  std::vector<double> crop(const RealGrid& f) const {
    if (!(f.grid() == grid_)) throw std::invalid_argument("crop: grid mismatch");
    std::vector<double> g(indices_.size());
    for (std::size_t d = 0; d < indices_.size(); ++d) g[d] = f[indices_[d]];
    return g;
  }

 private:
  Grid2 grid_;
  int crop_h_ = 0;
  int crop_w_ = 0;
  std::vector<std::size_t> indices_;
};

using CroppedBank = std::vector<std::vector<double>>;

}  // namespace maskcf
