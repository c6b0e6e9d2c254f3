#pragma once

// Detect-then-update tracking loop for the four ablation variants.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "maskcf/crop.hpp"
#include "maskcf/features.hpp"
#include "maskcf/masking.hpp"
#include "maskcf/solver_multi.hpp"
#include "maskcf/solver_single.hpp"

namespace maskcf {

enum class Variant { baseline, rc, rcb, rcg };
enum class SolverMode { single_base, multi_base };

inline constexpr Variant kAllVariants[] = {Variant::baseline, Variant::rc, Variant::rcb, Variant::rcg};

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::baseline: return "Baseline";
    case Variant::rc: return "RC";
    case Variant::rcb: return "RCB";
    case Variant::rcg: return "RCG";
  }
  return "?";
}

inline const char* to_string(SolverMode m) { return m == SolverMode::single_base ? "single" : "multi"; }

inline Variant parse_variant(std::string_view s) {
  std::string t(s);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return char(std::tolower(c)); });
  if (t == "baseline") return Variant::baseline;
  if (t == "rc") return Variant::rc;
  if (t == "rcb") return Variant::rcb;
  if (t == "rcg") return Variant::rcg;
  throw std::invalid_argument("unknown variant '" + std::string(s) + "'");
}

inline SolverMode parse_mode(std::string_view s) {
  if (s == "single") return SolverMode::single_base;
  if (s == "multi") return SolverMode::multi_base;
  throw std::invalid_argument("unknown solver mode '" + std::string(s) + "'");
}

struct VariantSpec {
  Variant variant = Variant::rcg;
  SolverMode mode = SolverMode::single_base;

  bool windowed() const noexcept { return variant == Variant::baseline; }
  MaskKind mask_kind() const noexcept {
    switch (variant) {
      case Variant::rcb: return MaskKind::binary;
      case Variant::rcg: return MaskKind::gaussian;
      default: return MaskKind::ones;
    }
  }
};

struct TrackerConfig {
  VariantSpec spec;
  SolverConfig solver;
  FeatureConfig features;
  double learning_rate = 0.0125;
  int sample_capacity = 30;
  double sample_rate = 0.02;
  int reduced_channels = 10;
  InnerSolverOptions inner;
  int scales = 5;
  double scale_step = 1.02;
  double scale_penalty = 0.995;
  // Upper bound on the model patch side in pixels; 0 keeps the full search area.
  int max_model_px = 200;

  static TrackerConfig defaults(VariantSpec spec) {
    TrackerConfig c;
    c.spec = spec;
    c.solver = spec.mode == SolverMode::single_base ? SolverConfig::single_base() : SolverConfig::multi_base();
    return c;
  }

  void validate() const {
    solver.validate();
    features.validate();
    if (!(learning_rate >= 0.0 && learning_rate <= 1.0)) throw std::invalid_argument("TrackerConfig: learning rate must be in [0, 1]");
    if (sample_capacity < 1) throw std::invalid_argument("TrackerConfig: sample capacity must be >= 1");
    if (!(sample_rate > 0.0 && sample_rate < 1.0)) throw std::invalid_argument("TrackerConfig: sample rate must be in (0, 1)");
    if (reduced_channels < 1) throw std::invalid_argument("TrackerConfig: reduced channels must be >= 1");
    if (scales < 1 || scales % 2 == 0) throw std::invalid_argument("TrackerConfig: scale count must be odd and positive");
    if (!(scale_step >= 1.0)) throw std::invalid_argument("TrackerConfig: scale step must be >= 1");
    if (!(scale_penalty > 0.0 && scale_penalty <= 1.0)) throw std::invalid_argument("TrackerConfig: scale penalty must be in (0, 1]");
    if (max_model_px != 0 && max_model_px < 3 * features.cell)
      throw std::invalid_argument("TrackerConfig: model patch cap below three cells");
  }
};

struct TrackState {
  BoundingBox bbox;
  int frame = 0;
  double scale = 1.0;  // patch side relative to frame 1

  double base_w = 0.0, base_h = 0.0;  // frame-1 target size in pixels
  double base_side = 0.0;              // frame-1 search side in pixels
  int model_px = 0;                    // resampled patch side
  Grid2 grid;

  FilterBank model;
  SampleSet samples;
  ProjectionMatrix projection;
  RealGrid reg_weights;

  /// Image pixels per feature cell at the current scale.
  double pixels_per_cell(int cell) const { return base_side * scale / model_px * cell; }
};

struct Detection {
  double di = 0.0, dj = 0.0;  // displacement in cells, sub-cell refined
  int scale_offset = 0;       // chosen exponent in [-S/2, S/2]
  double score = 0.0;
};

class Tracker {
 public:
  // Called with "train" or "detect" every time the cosine window is multiplied
  // into a sample.
  using WindowHook = std::function<void(std::string_view stage)>;

  explicit Tracker(TrackerConfig cfg, WindowHook hook = {}) : cfg_(std::move(cfg)), hook_(std::move(hook)) {
    cfg_.validate();
  }

  const TrackerConfig& config() const noexcept { return cfg_; }

  TrackState init(const Image& frame, const BoundingBox& box) const {
    if (!(box.w > 0.0) || !(box.h > 0.0)) throw std::invalid_argument("Tracker::init: empty box");
    if (!visible(box, frame)) throw std::invalid_argument("Tracker::init: box lies outside the frame");
    TrackState s;
    s.bbox = box;
    s.base_w = box.w;
    s.base_h = box.h;
    s.base_side = cfg_.features.search_scale * std::sqrt(box.w * box.h);
    const int cell = cfg_.features.cell;
    int cells = std::max(3, int(std::lround(s.base_side / cell)));
    if (cfg_.max_model_px > 0) cells = std::min(cells, cfg_.max_model_px / cell);
    s.model_px = cells * cell;
    s.grid = Grid2(cells, cells);

    const FeatureMap x = sample(s, frame, box.cx, box.cy, 1.0, "train");
    if (cfg_.spec.mode == SolverMode::single_base) {
      s.model = train_single(s, x);
    } else {
      const int L = x.channels();
      s.projection = cfg_.reduced_channels < L ? init_projection(x, cfg_.reduced_channels) : ProjectionMatrix::identity(L);
      const auto [hc, wc] = target_cells(s);
      s.reg_weights = make_reg_weights(s.grid, hc, wc).w;
      s.samples = SampleSet(cfg_.sample_capacity);
      s.samples = update_sample_set(std::move(s.samples), x, label(s), cfg_.sample_rate);
      s.model = train_multi(s, nullptr);
    }
    return s;
  }

  std::pair<TrackState, BoundingBox> step(TrackState s, const Image& frame) const {
    const Detection d = detect(s, frame);
    const double new_scale = s.scale * std::pow(cfg_.scale_step, d.scale_offset);
    s.scale = new_scale;
    const double ppc = s.pixels_per_cell(cfg_.features.cell);
    s.bbox.cx += d.dj * ppc;
    s.bbox.cy += d.di * ppc;
    s.bbox.w = s.base_w * new_scale;
    s.bbox.h = s.base_h * new_scale;
    if (!visible(s.bbox, frame)) throw TrackingLostError("target region lies outside the frame");
    const FeatureMap x = sample(s, frame, s.bbox.cx, s.bbox.cy, s.scale, "train");
    s = update_model(std::move(s), x);
    ++s.frame;
    const BoundingBox out = s.bbox;
    return {std::move(s), out};
  }

  /// Single-base: blend with a filter trained on x alone. Multi-base: add x
  /// to the sample set and re-solve from the current filter.
  TrackState update_model(TrackState s, const FeatureMap& x) const {
    if (cfg_.spec.mode == SolverMode::single_base) {
      s.model = blend(s.model, train_single(s, x), cfg_.learning_rate);
    } else {
      s.samples = update_sample_set(std::move(s.samples), x, label(s), cfg_.sample_rate);
      const FeatureMap warm = s.model.f;
      s.model = train_multi(s, &warm);
    }
    return s;
  }

  /// Best displacement over the scale pyramid around the current box.
  Detection detect(const TrackState& s, const Image& frame) const {
    const int half = cfg_.scales / 2;
    const int H = s.grid.height, W = s.grid.width;
    Detection best;
    for (int e = -half; e <= half; ++e) {
      const RealGrid r = score_map(s, sample(s, frame, s.bbox.cx, s.bbox.cy, s.scale * std::pow(cfg_.scale_step, e), "detect"));
      Detection d{0.0, 0.0, e, 0.0};
      int bi = 0, bj = 0;
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) {
          const int di = centered_offset(i, H), dj = centered_offset(j, W);
          if ((i || j) && !better(r(i, j), di, dj, e, d)) continue;
          d = {double(di), double(dj), e, r(i, j)};
          bi = i, bj = j;
        }
      // Sub-cell peak, so scales are compared on interpolated heights.
      const auto [oi, gi] = vertex(r(wrap_index(bi - 1, H), bj), d.score, r(wrap_index(bi + 1, H), bj));
      const auto [oj, gj] = vertex(r(bi, wrap_index(bj - 1, W)), d.score, r(bi, wrap_index(bj + 1, W)));
      d.di += oi;
      d.dj += oj;
      d.score = (d.score + gi + gj) * (e == 0 ? 1.0 : cfg_.scale_penalty);
      if (e == -half || better(d.score, d.di, d.dj, e, best)) best = d;
    }
    return best;
  }

  /// Raw response of the current model to a sample on the model grid.
  RealGrid score_map(const TrackState& s, const FeatureMap& x) const {
    if (cfg_.spec.mode == SolverMode::multi_base) return response(s.model, project_sample(x, s.projection));
    return response(FilterBank::from_cropped(s.model.g, s.model.crop).f, x);
  }

  /// Features of the square search patch at (cx, cy) and relative scale;
  /// Baseline multiplies the cosine window in.
  FeatureMap sample(const TrackState& s, const Image& frame, double cx, double cy, double scale, std::string_view stage) const {
    const Image patch = sample_square(frame, cx, cy, s.base_side * scale, s.model_px);
    FeatureMap x = extract_features(patch, cfg_.features);
    if (cfg_.spec.windowed()) {
      if (hook_) hook_(stage);
      x = apply_mask(cosine_window(s.grid), x);
    }
    return x;
  }

  /// Target size in feature cells for the current box.
  std::pair<double, double> target_cells(const TrackState& s) const {
    const double k = s.model_px / (s.base_side * s.scale) / cfg_.features.cell;
    return {std::min(s.bbox.h * k, double(s.grid.height)), std::min(s.bbox.w * k, double(s.grid.width))};
  }

  SpatialMask training_mask(const TrackState& s) const {
    const auto [hc, wc] = target_cells(s);
    switch (cfg_.spec.mask_kind()) {
      case MaskKind::binary: return binary_mask(s.grid, hc, wc);
      case MaskKind::gaussian: return gaussian_mask(s.grid, hc, wc, cfg_.solver.delta);
      default: return ones_mask(s.grid);
    }
  }

  Label label(const TrackState& s) const {
    const auto [hc, wc] = target_cells(s);
    return make_gaussian_label(s.grid, default_label_sigma(hc, wc));
  }

 private:
  FilterBank train_single(const TrackState& s, const FeatureMap& x) const {
    const auto [hc, wc] = target_cells(s);
    TrainRequest req{x, label(s), training_mask(s), cfg_.solver, CropGeometry::for_target(s.grid, hc, wc)};
    return train_masked_bacf(req);
  }

  FilterBank train_multi(const TrackState& s, const FeatureMap* warm) const {
    return train_masked_multi(s.samples, training_mask(s), s.projection, SpatialRegWeights(s.reg_weights), cfg_.solver,
                              cfg_.inner, nullptr, warm);
  }

  // Higher score wins; ties go to the smaller displacement, then the smaller
  // scale change.
  static bool better(double v, double di, double dj, int e, const Detection& cur) {
    if (v != cur.score) return v > cur.score;
    const double d2 = di * di + dj * dj, c2 = cur.di * cur.di + cur.dj * cur.dj;
    if (d2 != c2) return d2 < c2;
    return std::abs(e) < std::abs(cur.scale_offset);
  }

  // Offset and height gain of the parabola through (-1, l), (0, c), (1, r).
  static std::pair<double, double> vertex(double l, double c, double r) {
    const double den = l - 2.0 * c + r;
    if (!(den < 0.0)) return {0.0, 0.0};
    const double t = std::clamp(0.5 * (l - r) / den, -0.5, 0.5);
    return {t, -0.5 * den * t * t};
  }

  // Non-empty intersection with the frame.
  static bool visible(const BoundingBox& b, const Image& frame) {
    const double x0 = std::max(0.0, b.left()), x1 = std::min(double(frame.cols), b.left() + b.w);
    const double y0 = std::max(0.0, b.top()), y1 = std::min(double(frame.rows), b.top() + b.h);
    return x1 > x0 && y1 > y0;
  }

  TrackerConfig cfg_;
  WindowHook hook_;
};

}  // namespace maskcf
