#pragma once

// Synthetic tracking sequences: a textured rectangle moving linearly over a
// smooth background, optionally with target-like clutter kept at search patch
// border distance from the target path.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "maskcf/core.hpp"
#include "maskcf/features.hpp"

namespace maskcf {

enum class ClutterKind { none, border };

struct SynthConfig {
  int frames = 50;
  int width = 320;
  int height = 240;
  double target_w = 32.0;
  double target_h = 32.0;
  double dx = 3.0;  // pixels per frame
  double dy = 0.0;
  double scale_rate = 1.0;  // per-frame size factor
  double texture_block = 6.0;  // target texture cell in pixels
  ClutterKind clutter = ClutterKind::none;
  double noise = 0.01;
  std::uint64_t seed = 1;

  void validate() const {
    if (frames < 2) throw std::invalid_argument("SynthConfig: need at least 2 frames");
    if (width < 16 || height < 16) throw std::invalid_argument("SynthConfig: image too small");
    if (!(target_w >= 4.0) || !(target_h >= 4.0)) throw std::invalid_argument("SynthConfig: target too small");
    if (!(scale_rate > 0.0)) throw std::invalid_argument("SynthConfig: scale rate must be positive");
    if (!(noise >= 0.0)) throw std::invalid_argument("SynthConfig: noise must be >= 0");
    if (!(texture_block >= 1.0)) throw std::invalid_argument("SynthConfig: texture block must be >= 1 pixel");
  }
};

struct SynthSequence {
  std::vector<Image> frames;
  std::vector<BoundingBox> groundtruth;
};

namespace detail {

// Portable uniform on [0, 1): the standard distributions are not specified
// bit-exactly across library implementations.
inline double unit_uniform(std::mt19937_64& rng) { return double(rng() >> 11) * 0x1.0p-53; }

inline RealGrid random_blocks(int rows, int cols, std::mt19937_64& rng, double lo, double hi) {
  RealGrid g(Grid2(rows, cols));
  for (auto& v : g) v = lo + (hi - lo) * unit_uniform(rng);
  return g;
}

inline double sample_blocks(const RealGrid& g, double y, double x, double block) {
  const int i = std::clamp(int(std::floor(y / block)), 0, g.height() - 1);
  const int j = std::clamp(int(std::floor(x / block)), 0, g.width() - 1);
  return g(i, j);
}

inline double smooth_sample(const RealGrid& g, double y, double x, double step) {
  const double gy = std::clamp(y / step, 0.0, double(g.height() - 1));
  const double gx = std::clamp(x / step, 0.0, double(g.width() - 1));
  const int y0 = std::min(int(gy), g.height() - 2), x0 = std::min(int(gx), g.width() - 2);
  const double fy = gy - y0, fx = gx - x0;
  return (1 - fy) * ((1 - fx) * g(y0, x0) + fx * g(y0, x0 + 1)) + fy * ((1 - fx) * g(y0 + 1, x0) + fx * g(y0 + 1, x0 + 1));
}

inline double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double vx = bx - ax, vy = by - ay;
  const double len2 = vx * vx + vy * vy;
  const double t = len2 > 0.0 ? std::clamp(((px - ax) * vx + (py - ay) * vy) / len2, 0.0, 1.0) : 0.0;
  return std::hypot(px - ax - t * vx, py - ay - t * vy);
}

}  // namespace detail

/// Renders the sequence in memory. The path is centred in the image.
inline SynthSequence make_synth_sequence(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const int tex_rows = int(std::ceil(cfg.target_h / cfg.texture_block)),
            tex_cols = int(std::ceil(cfg.target_w / cfg.texture_block));
  const RealGrid texture = detail::random_blocks(tex_rows, tex_cols, rng, 0.0, 1.0);
  constexpr double kStep = 16.0;
  const RealGrid background =
      detail::random_blocks(int(cfg.height / kStep) + 2, int(cfg.width / kStep) + 2, rng, 0.35, 0.65);
  const RealGrid clutter =
      detail::random_blocks(int(cfg.height / cfg.texture_block) + 1, int(cfg.width / cfg.texture_block) + 1, rng, 0.0, 1.0);

  const int last = cfg.frames - 1;
  const double x0 = cfg.width / 2.0 - last * cfg.dx / 2.0, y0 = cfg.height / 2.0 - last * cfg.dy / 2.0;
  const double x1 = x0 + last * cfg.dx, y1 = y0 + last * cfg.dy;
  const double grow = std::max(1.0, std::pow(cfg.scale_rate, last));
  if (std::abs(last * cfg.dx) + cfg.target_w * grow > cfg.width || std::abs(last * cfg.dy) + cfg.target_h * grow > cfg.height)
    throw std::invalid_argument("make_synth_sequence: target path leaves the image");
  const double size = std::sqrt(cfg.target_w * cfg.target_h);
  const double band_lo = 1.6 * size, band_hi = 2.6 * size;

  Image base(cfg.height, cfg.width, 1);
  for (int r = 0; r < cfg.height; ++r)
    for (int c = 0; c < cfg.width; ++c) {
      double v = detail::smooth_sample(background, r, c, kStep);
      if (cfg.clutter == ClutterKind::border) {
        const double d = detail::segment_distance(c + 0.5, r + 0.5, x0, y0, x1, y1);
        if (d >= band_lo && d <= band_hi) v = 0.1 + 0.8 * detail::sample_blocks(clutter, r, c, cfg.texture_block);
      }
      base.at(r, c) = v;
    }

  SynthSequence seq;
  for (int t = 0; t < cfg.frames; ++t) {
    const double s = std::pow(cfg.scale_rate, t);
    const BoundingBox box{x0 + t * cfg.dx, y0 + t * cfg.dy, cfg.target_w * s, cfg.target_h * s};
    Image im = base;
    for (int r = std::max(0, int(std::floor(box.top()))); r < std::min(cfg.height, int(std::ceil(box.top() + box.h))); ++r)
      for (int c = std::max(0, int(std::floor(box.left()))); c < std::min(cfg.width, int(std::ceil(box.left() + box.w))); ++c) {
        // Coverage of the pixel by the box, so sub-pixel motion renders smoothly.
        const double cov_y = std::min(r + 1.0, box.top() + box.h) - std::max(double(r), box.top());
        const double cov_x = std::min(c + 1.0, box.left() + box.w) - std::max(double(c), box.left());
        if (cov_y <= 0.0 || cov_x <= 0.0) continue;
        const double ty = (r + 0.5 - box.top()) / s, tx = (c + 0.5 - box.left()) / s;
        const double v = 0.1 + 0.8 * detail::sample_blocks(texture, ty, tx, cfg.texture_block);
        const double a = cov_y * cov_x;
        im.at(r, c) = a * v + (1.0 - a) * im.at(r, c);
      }
    if (cfg.noise > 0.0)
      for (auto& v : im.data) v += cfg.noise * (detail::unit_uniform(rng) + detail::unit_uniform(rng) - 1.0);
    seq.frames.push_back(std::move(im));
    seq.groundtruth.push_back(box);
  }
  return seq;
}

}  // namespace maskcf
