#pragma once

// Overlap metrics and the simplified failure count.

#include <algorithm>
#include <array>
#include <span>
#include <stdexcept>

#include "maskcf/core.hpp"

namespace maskcf {

inline double iou(const BoundingBox& a, const BoundingBox& b) {
  if (!(a.area() > 0.0) || !(b.area() > 0.0)) throw std::invalid_argument("iou: boxes must have positive area");
  const double w = std::min(a.left() + a.w, b.left() + b.w) - std::max(a.left(), b.left());
  const double h = std::min(a.top() + a.h, b.top() + b.h) - std::max(a.top(), b.top());
  if (w <= 0.0 || h <= 0.0) return 0.0;
  const double inter = w * h;
  return std::clamp(inter / (a.area() + b.area() - inter), 0.0, 1.0);
}

/// Fraction of frames whose IoU strictly exceeds the threshold.
inline double overlap_precision(std::span<const double> ious, double threshold = 0.5) {
  if (ious.empty()) throw std::invalid_argument("overlap_precision: empty result");
  return double(std::count_if(ious.begin(), ious.end(), [&](double v) { return v > threshold; })) / double(ious.size());
}

inline constexpr int kSuccessThresholds = 101;

/// Success rate at thresholds 0, 0.01, ..., 1.
inline std::array<double, kSuccessThresholds> success_curve(std::span<const double> ious) {
  std::array<double, kSuccessThresholds> out{};
  for (int i = 0; i < kSuccessThresholds; ++i) out[std::size_t(i)] = overlap_precision(ious, i / 100.0);
  return out;
}

/// Mean of the success curve. Under the strict comparison a perfect result
/// scores 100/101, not 1.
inline double success_auc(std::span<const double> ious) {
  const auto c = success_curve(ious);
  double s = 0.0;
  for (double v : c) s += v;
  return s / kSuccessThresholds;
}

/// Frames between a failure and the re-initialization from ground truth.
inline constexpr int kReinitDelay = 5;

/// Failure events in an IoU trace: a frame with IoU <= threshold is a failure,
/// the tracker restarts kReinitDelay frames later and that frame is the next
/// one inspected.
inline int count_failures(std::span<const double> ious, double threshold = 0.0, int delay = kReinitDelay) {
  if (delay < 1) throw std::invalid_argument("count_failures: delay must be >= 1");
  int failures = 0;
  for (std::size_t t = 0; t < ious.size();) {
    if (ious[t] <= threshold) {
      ++failures;
      t += std::size_t(delay);
    } else {
      ++t;
    }
  }
  return failures;
}

}  // namespace maskcf
