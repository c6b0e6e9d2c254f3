#pragma once

// Multi-base-image masked training. The filter f has D channels on the
// common grid; sample k enters through its projected channels
// p_{k,d} = sum_l q_{l,d} J_l{x_{k,l}}, and the relaxed objective minimized by
// alternation is
//
//   sum_k [ 1/2 ||M . z_k||^2 + tau/2 ||sqrt(a_k) (r_k - y_k) - z_k||^2 ]
//     + 1/2 sum_d ||w . f_d||^2,        r_k = sum_d f_d * p_{k,d}.
//
// Minimizing over z_k gives the closed form in solve_zk; minimizing over f is
// a positive-definite least-squares problem solved by Jacobi-preconditioned
// conjugate gradients.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "maskcf/core.hpp"
#include "maskcf/frequency.hpp"
#include "maskcf/masking.hpp"
#include "maskcf/solver_single.hpp"

namespace maskcf {

// ---------------------------------------------------------------------------
// Sample set

struct SampleEntry {
  FeatureMap x;
  Label y;
  double alpha = 0.0;
  std::uint64_t id = 0;  // insertion order
};

struct SampleSet {
  int capacity = 30;
  std::vector<SampleEntry> entries;
  std::uint64_t next_id = 0;

  explicit SampleSet(int K = 30) : capacity(K) {
    if (K < 1) throw std::invalid_argument("SampleSet: capacity must be positive");
  }
  bool empty() const noexcept { return entries.empty(); }
  int size() const noexcept { return int(entries.size()); }
  double weight_sum() const noexcept {
    double s = 0.0;
    for (const auto& e : entries) s += e.alpha;
    return s;
  }
};

/// Decays existing weights by (1 - eta), appends the new sample with weight
/// eta (1 when the set is empty), evicts the lowest-weight older entry when
/// over capacity (ties go to the oldest), then renormalizes to sum 1.
inline SampleSet update_sample_set(SampleSet set, FeatureMap x, Label y, double eta) {
  if (!(eta > 0.0 && eta < 1.0)) throw std::invalid_argument("update_sample_set: eta must be in (0, 1)");
  if (!set.empty() && (x.channels() != set.entries.front().x.channels() || !(x.grid() == set.entries.front().x.grid())))
    throw std::invalid_argument("update_sample_set: sample shape differs from the set");
  const double w = set.empty() ? 1.0 : eta;
  for (auto& e : set.entries) e.alpha *= 1.0 - eta;
  if (set.size() >= set.capacity) {
    auto victim = set.entries.begin();
    for (auto it = set.entries.begin(); it != set.entries.end(); ++it)
      if (it->alpha < victim->alpha || (it->alpha == victim->alpha && it->id < victim->id)) victim = it;
    set.entries.erase(victim);
  }
  set.entries.push_back(SampleEntry{std::move(x), std::move(y), w, set.next_id++});
  const double s = set.weight_sum();
  for (auto& e : set.entries) e.alpha /= s;
  return set;
}

// ---------------------------------------------------------------------------
// Projection

struct ProjectionMatrix {
  Eigen::MatrixXd Q;  // L x D

  int input_channels() const noexcept { return int(Q.rows()); }
  int output_channels() const noexcept { return int(Q.cols()); }
  static ProjectionMatrix identity(int L) { return {Eigen::MatrixXd::Identity(L, L)}; }
};

/// Top-D principal directions of the mean-centred channel-by-cell matrix.
inline ProjectionMatrix init_projection(const FeatureMap& x, int D) {
  const int L = x.channels();
  if (D < 1 || D >= L) throw std::invalid_argument("init_projection: need 1 <= D < L");
  const Eigen::Index T = Eigen::Index(x.grid().size());
  Eigen::MatrixXd X(L, T);
  for (int l = 0; l < L; ++l)
    for (Eigen::Index n = 0; n < T; ++n) X(l, n) = x[l][std::size_t(n)];
  X.colwise() -= X.rowwise().mean();
  const Eigen::MatrixXd C = X * X.transpose() / double(T);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C);
  if (es.info() != Eigen::Success) throw NumericError("init_projection: eigen-decomposition failed");
  ProjectionMatrix P{Eigen::MatrixXd(L, D)};
  for (int d = 0; d < D; ++d) {
    Eigen::VectorXd v = es.eigenvectors().col(L - 1 - d);  // ascending order
    Eigen::Index imax = 0;
    v.cwiseAbs().maxCoeff(&imax);
    if (v(imax) < 0.0) v = -v;
    P.Q.col(d) = v;
  }
  return P;
}

/// Channel d of the output is sum_l q_{l,d} x_l.
inline FeatureMap project_sample(const FeatureMap& x, const ProjectionMatrix& P) {
  if (x.channels() != P.input_channels()) throw std::invalid_argument("project_sample: channel mismatch");
  std::vector<RealGrid> out;
  for (int d = 0; d < P.output_channels(); ++d) {
    RealGrid c(x.grid());
    for (int l = 0; l < x.channels(); ++l) {
      const double q = P.Q(l, d);
      if (q == 0.0) continue;
      for (std::size_t n = 0; n < c.size(); ++n) c[n] += q * x[l][n];
    }
    out.push_back(std::move(c));
  }
  return FeatureMap(std::move(out));
}

// ---------------------------------------------------------------------------
// Interpolation to the common grid

/// Keys cubic convolution kernel, support [-2, 2] in units of the native
/// sample spacing.
struct InterpolationKernel {
  double a = -0.75;

  double operator()(double u) const noexcept {
    u = std::abs(u);
    if (u < 1.0) return ((a + 2.0) * u - (a + 3.0)) * u * u + 1.0;
    if (u < 2.0) return ((a * u - 5.0 * a) * u + 8.0 * a) * u - 4.0 * a;
    return 0.0;
  }
  static constexpr double half_support = 2.0;
};

namespace detail {
// out[m] = sum_n in[n] b((m - s n) / s) with s = T/N, periodic in T.
inline void resample_line(const double* in, int N, int stride_in, double* out, int T, int stride_out,
                          const InterpolationKernel& k) {
  const double s = double(T) / double(N);
  for (int m = 0; m < T; ++m) {
    double acc = 0.0;
    const double u0 = double(m) / s;
    const int n_lo = int(std::floor(u0 - InterpolationKernel::half_support));
    const int n_hi = int(std::ceil(u0 + InterpolationKernel::half_support));
    for (int n = n_lo; n <= n_hi; ++n) {
      const double b = k(u0 - double(n));
      if (b != 0.0) acc += b * in[std::ptrdiff_t(wrap_index(n, N)) * stride_in];
    }
    out[std::ptrdiff_t(m) * stride_out] = acc;
  }
}
}  // namespace detail

/// Separable periodic resampling of one channel from its native grid to the
/// common grid.
inline RealGrid interpolate_feature(const RealGrid& x, Grid2 common, const InterpolationKernel& k = {}) {
  const int Nh = x.height(), Nw = x.width();
  if (Nh > common.height || Nw > common.width)
    throw std::invalid_argument("interpolate_feature: native grid larger than the common grid");
  auto check = [](int N, int T) {
    const double s = double(T) / double(N);
    if (2.0 * InterpolationKernel::half_support * s > double(T) && N != T)
      throw std::invalid_argument("interpolate_feature: kernel support exceeds the period");
  };
  check(Nh, common.height);
  check(Nw, common.width);
  RealGrid rows(Grid2(Nh, common.width));
  for (int i = 0; i < Nh; ++i) detail::resample_line(&x(i, 0), Nw, 1, &rows(i, 0), common.width, 1, k);
  RealGrid out(common);
  for (int j = 0; j < common.width; ++j)
    detail::resample_line(&rows(0, j), Nh, common.width, &out(0, j), common.height, common.width, k);
  return out;
}

inline FeatureMap interpolate_feature(const FeatureMap& x, Grid2 common, const InterpolationKernel& k = {}) {
  std::vector<RealGrid> out;
  for (const auto& c : x) out.push_back(interpolate_feature(c, common, k));
  return FeatureMap(std::move(out));
}

// ---------------------------------------------------------------------------
// Spatial regularization weights

struct SpatialRegWeights {
  RealGrid w;

  const Grid2& grid() const noexcept { return w.grid(); }
  double min() const { return *std::min_element(w.begin(), w.end()); }

  explicit SpatialRegWeights(RealGrid weights) : w(std::move(weights)) {
    for (double v : w)
      if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("SpatialRegWeights: weights must be positive");
  }
  static SpatialRegWeights constant(Grid2 grid, double value) { return SpatialRegWeights(RealGrid(grid, value)); }
};

/// w = base + slope ((x/h)^2 + (y/w)^2) over the filter's wrapped offsets.
inline SpatialRegWeights make_reg_weights(Grid2 grid, double target_h, double target_w, double base = 0.1,
                                          double slope = 3.0) {
  if (!(target_h > 0.0) || !(target_w > 0.0)) throw std::invalid_argument("make_reg_weights: bad target size");
  if (!(base > 0.0) || !(slope >= 0.0)) throw std::invalid_argument("make_reg_weights: need base > 0, slope >= 0");
  RealGrid w(grid);
  for (int i = 0; i < grid.height; ++i) {
    const double dy = wrapped_offset(i, grid.height) / target_h;
    for (int j = 0; j < grid.width; ++j) {
      const double dx = wrapped_offset(j, grid.width) / target_w;
      w(i, j) = base + slope * (dx * dx + dy * dy);
    }
  }
  return SpatialRegWeights(std::move(w));
}

// ---------------------------------------------------------------------------
// z_k and the relaxed objective

/// z_k = tau sqrt(a_k) (r_k - y_k) / (M.M + tau), r_k from the projected sample.
inline RealGrid solve_zk(const FeatureMap& f, const ProjectionMatrix& P, const FeatureMap& x_k, const RealGrid& y_k,
                         double alpha_k, const SpatialMask& m, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("solve_zk: tau must be positive");
  if (alpha_k < 0.0) throw std::invalid_argument("solve_zk: negative weight");
  RealGrid z(y_k.grid());
  if (alpha_k == 0.0) return z;
  const RealGrid r = response(f, project_sample(x_k, P));
  r.require_same(m.data);
  const double sa = std::sqrt(alpha_k);
  for (std::size_t n = 0; n < z.size(); ++n) z[n] = tau * sa * (r[n] - y_k[n]) / (m.data[n] * m.data[n] + tau);
  return z;
}

inline double relaxed_objective(const FeatureMap& f, const SampleSet& set, const ProjectionMatrix& P,
                                std::span<const RealGrid> z, const SpatialMask& m, const SpatialRegWeights& w,
                                double tau) {
  if (z.size() != set.entries.size()) throw std::invalid_argument("relaxed_objective: one z per sample required");
  double J = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    const auto& e = set.entries[k];
    const RealGrid r = response(f, project_sample(e.x, P));
    const double sa = std::sqrt(e.alpha);
    for (std::size_t n = 0; n < r.size(); ++n) {
      const double mz = m.data[n] * z[k][n];
      const double d = sa * (r[n] - e.y.data[n]) - z[k][n];
      J += 0.5 * mz * mz + 0.5 * tau * d * d;
    }
  }
  for (const auto& c : f)
    for (std::size_t n = 0; n < c.size(); ++n) J += 0.5 * (w.w[n] * c[n]) * (w.w[n] * c[n]);
  return J;
}

/// Multi-base objective 1/2 sum_k a_k ||M . (r_k - y_k)||^2 + 1/2 ||w . f||^2.
inline double multi_objective(const FeatureMap& f, const SampleSet& set, const ProjectionMatrix& P,
                              const SpatialMask& m, const SpatialRegWeights& w) {
  double J = 0.0;
  for (const auto& e : set.entries) {
    const RealGrid r = response(f, project_sample(e.x, P));
    for (std::size_t n = 0; n < r.size(); ++n) {
      const double d = m.data[n] * (r[n] - e.y.data[n]);
      J += 0.5 * e.alpha * d * d;
    }
  }
  for (const auto& c : f)
    for (std::size_t n = 0; n < c.size(); ++n) J += 0.5 * (w.w[n] * c[n]) * (w.w[n] * c[n]);
  return J;
}

// ---------------------------------------------------------------------------
// f-update

struct InnerSolverOptions {
  int max_iterations = 50;
  double gradient_tolerance = 1e-6;
};

struct MultiTrace {
  std::vector<double> tau;
  std::vector<double> objective_before;  // relaxed objective at entry, current tau
  std::vector<double> objective_after_z;
  std::vector<double> objective_after_f;
  std::vector<int> inner_iterations;
  std::vector<double> gradient_norm;
};

namespace detail {

// Sample spectra and the per-bin Gram matrices sum_k a_k conj(p_k) p_k^T,
// shared by every f-solve of one training call.
struct SampleGram {
  Grid2 grid;
  int D = 0;
  std::vector<SpectrumBank> spectra;
  std::vector<Eigen::MatrixXcd> G;
  std::vector<double> channel_energy;  // sum_k a_k ||p_{k,d}||^2

  SampleGram(std::span<const FeatureMap> projected, std::span<const double> alpha)
      : grid(projected.front().grid()), D(projected.front().channels()), G(grid.size()) {
    const std::size_t T = grid.size();
    for (auto& g : G) g = Eigen::MatrixXcd::Zero(D, D);
    channel_energy.assign(std::size_t(D), 0.0);
    Eigen::VectorXcd p(D);
    for (std::size_t k = 0; k < projected.size(); ++k) {
      spectra.emplace_back(projected[k]);
      if (alpha[k] == 0.0) continue;
      const SpectrumBank& ph = spectra.back();
      for (std::size_t t = 0; t < T; ++t) {
        for (int d = 0; d < D; ++d) p(d) = ph[d][t];
        G[t].noalias() += alpha[k] * p.conjugate() * p.transpose();
      }
      for (int d = 0; d < D; ++d) channel_energy[std::size_t(d)] += alpha[k] * sum_squares(projected[k][d]);
    }
  }
};

// (W^2 + tau sum_k a_k A_k^T A_k) f = b, applied per frequency bin for the
// data term and per cell for W^2.
class MultiNormalOperator {
 public:
  MultiNormalOperator(const SampleGram& gram, const RealGrid& w2, double tau)
      : gram_(gram), w2_(w2), tau_(tau), jacobi_(std::size_t(gram.D), RealGrid(gram.grid)) {
    for (int d = 0; d < gram.D; ++d)
      for (std::size_t n = 0; n < w2.size(); ++n)
        jacobi_[std::size_t(d)][n] = 1.0 / (w2_[n] + tau * gram.channel_energy[std::size_t(d)]);
  }

  std::vector<RealGrid> apply(const std::vector<RealGrid>& v) const {
    const int D = gram_.D;
    const std::size_t T = gram_.grid.size();
    std::vector<ComplexGrid> vh;
    for (const auto& c : v) vh.push_back(dft2(c));
    Eigen::VectorXcd a(D), b(D);
    for (std::size_t t = 0; t < T; ++t) {
      for (int d = 0; d < D; ++d) a(d) = vh[std::size_t(d)][t];
      b.noalias() = gram_.G[t] * a;
      for (int d = 0; d < D; ++d) vh[std::size_t(d)][t] = tau_ * b(d);
    }
    std::vector<RealGrid> res;
    for (int d = 0; d < D; ++d) {
      RealGrid r = idft2(vh[std::size_t(d)]);
      for (std::size_t n = 0; n < T; ++n) r[n] += w2_[n] * v[std::size_t(d)][n];
      res.push_back(std::move(r));
    }
    return res;
  }

  std::vector<RealGrid> precondition(const std::vector<RealGrid>& r) const {
    std::vector<RealGrid> z = r;
    for (std::size_t d = 0; d < z.size(); ++d)
      for (std::size_t n = 0; n < z[d].size(); ++n) z[d][n] *= jacobi_[d][n];
    return z;
  }

 private:
  const SampleGram& gram_;
  const RealGrid& w2_;
  double tau_;
  std::vector<RealGrid> jacobi_;
};

inline double inner(const std::vector<RealGrid>& a, const std::vector<RealGrid>& b) {
  double s = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) s += dot(a[d], b[d]);
  return s;
}

inline void axpy(double k, const std::vector<RealGrid>& x, std::vector<RealGrid>& y) {
  for (std::size_t d = 0; d < x.size(); ++d)
    for (std::size_t n = 0; n < x[d].size(); ++n) y[d][n] += k * x[d][n];
}


inline FeatureMap solve_f_multi(const FeatureMap& f0, const SampleGram& gram, std::span<const double> alpha,
                                std::span<const RealGrid> labels, std::span<const RealGrid> z, const RealGrid& w2,
                                double tau, const InnerSolverOptions& opt, int* iterations, double* gradient_norm) {
  const Grid2 grid = gram.grid;
  const int D = gram.D;
  const MultiNormalOperator A(gram, w2, tau);

  // b = tau sum_k a_k A_k^T (y_k + z_k / sqrt(a_k)), computed per bin.
  SpectrumBank bh(grid, D);
  for (std::size_t k = 0; k < gram.spectra.size(); ++k) {
    if (alpha[k] == 0.0) continue;
    RealGrid t = labels[k];
    const double isa = 1.0 / std::sqrt(alpha[k]);
    for (std::size_t n = 0; n < t.size(); ++n) t[n] += z[k][n] * isa;
    const ComplexGrid th = dft2(t);
    const SpectrumBank& ph = gram.spectra[k];
    for (int d = 0; d < D; ++d)
      for (std::size_t n = 0; n < th.size(); ++n) bh[d][n] += tau * alpha[k] * std::conj(ph[d][n]) * th[n];
  }
  std::vector<RealGrid> b;
  for (int d = 0; d < D; ++d) b.push_back(idft2(bh[d]));

  std::vector<RealGrid> x(f0.begin(), f0.end());
  std::vector<RealGrid> r = b;
  detail::axpy(-1.0, A.apply(x), r);
  double rn = std::sqrt(detail::inner(r, r));
  int it = 0;
  if (rn > opt.gradient_tolerance) {
    std::vector<RealGrid> zz = A.precondition(r);
    std::vector<RealGrid> p = zz;
    double rz = detail::inner(r, zz);
    for (; it < opt.max_iterations && rn > opt.gradient_tolerance; ++it) {
      const auto Ap = A.apply(p);
      const double pAp = detail::inner(p, Ap);
      if (!(pAp > 0.0)) break;
      const double step = rz / pAp;
      detail::axpy(step, p, x);
      detail::axpy(-step, Ap, r);
      rn = std::sqrt(detail::inner(r, r));
      zz = A.precondition(r);
      const double rz_next = detail::inner(r, zz);
      const double beta = rz_next / rz;
      rz = rz_next;
      for (std::size_t d = 0; d < p.size(); ++d)
        for (std::size_t n = 0; n < p[d].size(); ++n) p[d][n] = zz[d][n] + beta * p[d][n];
    }
  }
  if (iterations) *iterations = it;
  if (gradient_norm) *gradient_norm = rn;
  if (!std::isfinite(rn)) throw NumericDivergenceError("solve_f_multi: non-finite residual", it);
  for (const auto& c : x)
    if (!all_finite(c)) throw NumericDivergenceError("solve_f_multi: non-finite iterate", it);
  return FeatureMap(std::move(x));
}

inline RealGrid squared(const SpatialRegWeights& w) {
  RealGrid w2(w.grid());
  for (std::size_t n = 0; n < w2.size(); ++n) w2[n] = w.w[n] * w.w[n];
  return w2;
}

}  // namespace detail

/// Minimizes the relaxed objective over f with every z_k fixed, starting from
/// f0. Returns the new filter and reports inner iterations and the final
/// gradient norm.
inline FeatureMap solve_f_multi(const FeatureMap& f0, std::span<const FeatureMap> projected,
                                std::span<const double> alpha, std::span<const RealGrid> labels,
                                std::span<const RealGrid> z, const SpatialRegWeights& w, double tau,
                                const InnerSolverOptions& opt, int* iterations = nullptr,
                                double* gradient_norm = nullptr) {
  if (projected.empty() || f0.channels() != projected.front().channels() || !(f0.grid() == w.grid()))
    throw std::invalid_argument("solve_f_multi: shape mismatch");
  const detail::SampleGram gram(projected, alpha);
  return detail::solve_f_multi(f0, gram, alpha, labels, z, detail::squared(w), tau, opt, iterations, gradient_norm);
}

/// Alternates z_k and f updates for config.iters outer iterations; tau grows
/// geometrically (capped at tau_max) after each alternation. The returned
/// bank has D channels and a full-grid crop.
inline FilterBank train_masked_multi(const SampleSet& set, const SpatialMask& m, const ProjectionMatrix& P,
                                     const SpatialRegWeights& w, const SolverConfig& config,
                                     const InnerSolverOptions& inner = {}, MultiTrace* trace = nullptr,
                                     const FeatureMap* warm_start = nullptr) {
  config.validate();
  if (set.empty()) throw std::invalid_argument("train_masked_multi: empty sample set");
  const Grid2 grid = m.grid();
  if (!(w.grid() == grid)) throw std::invalid_argument("train_masked_multi: weight grid differs from mask grid");
  std::vector<FeatureMap> projected;
  std::vector<double> alpha;
  std::vector<RealGrid> labels;
  for (const auto& e : set.entries) {
    if (!(e.x.grid() == grid) || !(e.y.grid() == grid))
      throw std::invalid_argument("train_masked_multi: samples, labels and mask must share the common grid");
    projected.push_back(project_sample(e.x, P));
    alpha.push_back(e.alpha);
    labels.push_back(e.y.data);
  }
  const int D = P.output_channels();
  FeatureMap f = warm_start ? *warm_start : FeatureMap(grid, D);
  if (f.channels() != D || !(f.grid() == grid)) throw std::invalid_argument("train_masked_multi: bad warm start");

  const detail::SampleGram gram(projected, alpha);
  const RealGrid w2 = detail::squared(w);
  std::vector<RealGrid> z(set.entries.size(), RealGrid(grid));
  double tau = config.tau;
  for (int it = 0; it < config.iters; ++it) {
    if (trace) {
      trace->tau.push_back(tau);
      trace->objective_before.push_back(relaxed_objective(f, set, P, z, m, w, tau));
    }
    const SpectrumBank fh(f);
    for (std::size_t k = 0; k < z.size(); ++k) {
      if (alpha[k] == 0.0) {
        z[k] = RealGrid(grid);
        continue;
      }
      const RealGrid r = idft2(response_spectrum(fh, gram.spectra[k]));
      const double sa = std::sqrt(alpha[k]);
      for (std::size_t n = 0; n < r.size(); ++n)
        z[k][n] = tau * sa * (r[n] - labels[k][n]) / (m.data[n] * m.data[n] + tau);
      if (!all_finite(z[k])) throw NumericDivergenceError("train_masked_multi: non-finite z", it);
    }
    if (trace) trace->objective_after_z.push_back(relaxed_objective(f, set, P, z, m, w, tau));
    int n_inner = 0;
    double gnorm = 0.0;
    try {
      f = detail::solve_f_multi(f, gram, alpha, labels, z, w2, tau, inner, &n_inner, &gnorm);
    } catch (const NumericDivergenceError&) {
      throw NumericDivergenceError("train_masked_multi: non-finite filter", it);
    } catch (const std::invalid_argument&) {
      throw NumericDivergenceError("train_masked_multi: non-finite filter", it);
    }
    if (trace) {
      trace->objective_after_f.push_back(relaxed_objective(f, set, P, z, m, w, tau));
      trace->inner_iterations.push_back(n_inner);
      trace->gradient_norm.push_back(gnorm);
    }
    tau = std::min(config.growth * tau, config.tau_max);
  }
  return FilterBank::from_spatial(std::move(f), CropGeometry::full(grid));
}

}  // namespace maskcf
