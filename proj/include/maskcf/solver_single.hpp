#pragma once

// Single-base-image correlation filters: the ridge closed form and the
// masked BACF-style ADMM solver.
//
// Conventions: filters are stored with their origin at index (0, 0) and the
// crop operator selects a block of wrapped offsets around that origin, so the
// response sum_l x_l * f_l of a centred target peaks where the centred label
// does. The masked objective minimized by train_masked_bacf is
//
//   1/2 || M . (sum_l x_l * P^T g_l - y) ||^2 + lambda/2 ||g||^2.

#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "maskcf/core.hpp"
#include "maskcf/crop.hpp"
#include "maskcf/frequency.hpp"
#include "maskcf/masking.hpp"

namespace maskcf {

struct FilterBank {
  FeatureMap f;   // full-grid spatial filter, one channel per feature channel
  CroppedBank g;  // crop-support coefficients, g_l = P f_l at convergence
  CropGeometry crop;

  int channels() const noexcept { return f.channels(); }
  const Grid2& grid() const noexcept { return f.grid(); }

  static FilterBank from_spatial(FeatureMap f, CropGeometry crop) {
    FilterBank fb{std::move(f), {}, std::move(crop)};
    for (const auto& c : fb.f) fb.g.push_back(fb.crop.crop(c));
    return fb;
  }

  /// f_l = P^T g_l for every channel.
  static FilterBank from_cropped(CroppedBank g, CropGeometry crop) {
    std::vector<RealGrid> f;
    f.reserve(g.size());
    for (const auto& c : g) f.push_back(crop.embed(c));
    return FilterBank{FeatureMap(std::move(f)), std::move(g), std::move(crop)};
  }

  FilterBank& operator*=(double k) {
    for (auto& c : f) c *= k;
    for (auto& c : g)
      for (auto& v : c) v *= k;
    return *this;
  }
};

/// (1 - eta) * prev + eta * next, channel-wise on both representations.
inline FilterBank blend(const FilterBank& prev, const FilterBank& next, double eta) {
  if (prev.channels() != next.channels() || !(prev.grid() == next.grid()))
    throw std::invalid_argument("blend: filter shape mismatch");
  FilterBank out = next;
  for (int l = 0; l < out.channels(); ++l) {
    for (std::size_t k = 0; k < out.f[l].size(); ++k) out.f[l][k] = (1.0 - eta) * prev.f[l][k] + eta * next.f[l][k];
    if (prev.g[std::size_t(l)].size() == next.g[std::size_t(l)].size())
      for (std::size_t d = 0; d < out.g[std::size_t(l)].size(); ++d)
        out.g[std::size_t(l)][d] = (1.0 - eta) * prev.g[std::size_t(l)][d] + eta * next.g[std::size_t(l)][d];
  }
  return out;
}

inline RealGrid response(const FilterBank& fb, const FeatureMap& x) { return response(fb.f, x); }

inline double residual_norm_inf(const FilterBank& fb) {
  double m = 0.0;
  for (int l = 0; l < fb.channels(); ++l) {
    const RealGrid q = fb.crop.embed(fb.g[std::size_t(l)]);
    for (std::size_t k = 0; k < q.size(); ++k) m = std::max(m, std::abs(fb.f[l][k] - q[k]));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Ridge CF

/// Minimizer of 1/2 ||sum_l f_l * x_l - y||^2 + lambda/2 ||f||^2, optionally
/// after multiplying every channel of x by a window. Per bin,
/// f_l = conj(x_l) y / (sum_k |x_k|^2 + lambda), which is exact for a single
/// base image because conj(x) is an eigenvector of the rank-one normal matrix.
inline FilterBank train_ridge_cf(const FeatureMap& x, const Label& y, double lambda,
                                 const std::optional<SpatialMask>& window = std::nullopt) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("train_ridge_cf: lambda must be >= 0");
  if (!(x.grid() == y.grid())) throw std::invalid_argument("train_ridge_cf: sample and label grids differ");
  const FeatureMap xs = window ? apply_mask(*window, x) : x;
  const SpectrumBank xh(xs);
  const ComplexGrid yh = dft2(y.data);
  ComplexGrid denom(x.grid(), Complex(lambda, 0.0));
  for (int l = 0; l < xh.size(); ++l)
    for (std::size_t k = 0; k < denom.size(); ++k) denom[k] += std::norm(xh[l][k]);
  for (std::size_t k = 0; k < denom.size(); ++k)
    if (denom[k].real() == 0.0) throw SingularSystemError("train_ridge_cf: zero denominator at a frequency bin");
  SpectrumBank fh(x.grid(), xh.size());
  for (int l = 0; l < xh.size(); ++l)
    for (std::size_t k = 0; k < denom.size(); ++k) fh[l][k] = std::conj(xh[l][k]) * yh[k] / denom[k];
  return FilterBank::from_spatial(fh.inverse(), CropGeometry::full(x.grid()));
}

// ---------------------------------------------------------------------------
// Masked BACF ADMM

struct AdmmState {
  std::vector<RealGrid> zeta;  // one per channel, full grid
  RealGrid gamma;
  RealGrid z;
  double mu = 0.0;
  double tau = 0.0;
  int iteration = 0;

  static AdmmState zeros(Grid2 grid, int L, double mu, double tau) {
    return AdmmState{std::vector<RealGrid>(std::size_t(L), RealGrid(grid)), RealGrid(grid), RealGrid(grid), mu, tau, 0};
  }
};

struct TrainRequest {
  FeatureMap x;
  Label y;
  SpatialMask mask;
  SolverConfig config;
  CropGeometry crop;

  void validate() const {
    config.validate();
    if (!(x.grid() == y.grid()) || !(x.grid() == mask.grid()) || !(x.grid() == crop.grid()))
      throw std::invalid_argument("TrainRequest: sample, label, mask and crop must share a grid");
  }
};

/// g_l = (lambda I + mu P P^T)^-1 (P zeta_l + mu P f_l); P P^T = I on the crop.
inline CroppedBank solve_g(const FeatureMap& f, std::span<const RealGrid> zeta, double mu, double lambda,
                           const CropGeometry& crop) {
  if (!(lambda + mu > 0.0)) throw SingularSystemError("solve_g: lambda + mu must be positive");
  if (std::size_t(f.channels()) != zeta.size()) throw std::invalid_argument("solve_g: channel mismatch");
  const double inv = 1.0 / (lambda + mu);
  CroppedBank g(static_cast<std::size_t>(f.channels()), std::vector<double>(static_cast<std::size_t>(crop.D())));
  const auto idx = crop.indices();
  for (int l = 0; l < f.channels(); ++l)
    for (std::size_t d = 0; d < idx.size(); ++d)
      g[std::size_t(l)][d] = (zeta[std::size_t(l)][idx[d]] + mu * f[l][idx[d]]) * inv;
  return g;
}

/// Solves (mu I + tau u u^H) f = r at one frequency bin, u = conj(x_hat(t)),
/// by Sherman-Morrison: f = (r - u (u^H r) / b) / mu, b = mu/tau + |u|^2.
inline void sherman_morrison_bin(std::span<const Complex> x_hat, std::span<const Complex> rhs, double mu, double tau,
                                 std::span<Complex> out) {
  const std::size_t L = x_hat.size();
  double sx = 0.0;
  Complex s(0.0, 0.0);  // u^H r = x^T r
  for (std::size_t l = 0; l < L; ++l) {
    sx += std::norm(x_hat[l]);
    s += x_hat[l] * rhs[l];
  }
  // tau == 0 drops the rank-one term.
  const Complex c = tau > 0.0 ? s / (mu / tau + sx) : Complex(0.0, 0.0);
  for (std::size_t l = 0; l < L; ++l) out[l] = (rhs[l] - std::conj(x_hat[l]) * c) / mu;
}

/// f-subproblem. Per bin the normal equations are
///   (mu I + tau conj(x) x^T) f = tau conj(x) (y + z) - conj(x) gamma - zeta + mu q,
/// with every quantity in the frequency domain and q = P^T g.
inline FeatureMap solve_f(const CroppedBank& g, std::span<const RealGrid> zeta, const RealGrid& gamma, const RealGrid& z,
                          const SpectrumBank& x_hat, const ComplexGrid& y_hat, double mu, double tau,
                          const CropGeometry& crop) {
  if (!(mu > 0.0) || !(tau >= 0.0)) throw std::invalid_argument("solve_f: need mu > 0 and tau >= 0");
  const int L = x_hat.size();
  if (int(g.size()) != L || int(zeta.size()) != L) throw std::invalid_argument("solve_f: channel mismatch");
  const Grid2 grid = x_hat.grid;
  SpectrumBank q_hat(grid, L), zeta_hat(grid, L), f_hat(grid, L);
  for (int l = 0; l < L; ++l) {
    q_hat[l] = dft2(crop.embed(g[std::size_t(l)]));
    zeta_hat[l] = dft2(zeta[std::size_t(l)]);
  }
  const ComplexGrid gamma_hat = dft2(gamma);
  const ComplexGrid z_hat = dft2(z);
  std::vector<Complex> xt(static_cast<std::size_t>(L)), rt(static_cast<std::size_t>(L)), ft(static_cast<std::size_t>(L));
  for (std::size_t t = 0; t < grid.size(); ++t) {
    const Complex yz = tau * (y_hat[t] + z_hat[t]) - gamma_hat[t];
    for (int l = 0; l < L; ++l) {
      xt[std::size_t(l)] = x_hat[l][t];
      rt[std::size_t(l)] = std::conj(x_hat[l][t]) * yz - zeta_hat[l][t] + mu * q_hat[l][t];
    }
    sherman_morrison_bin(xt, rt, mu, tau, ft);
    for (int l = 0; l < L; ++l) f_hat[l][t] = ft[std::size_t(l)];
  }
  return f_hat.inverse();
}

/// z = (M.M + tau)^-1 . (tau (r - y) + gamma), r = sum_l x_l * f_l.
inline RealGrid solve_z(const RealGrid& r, const RealGrid& y, const RealGrid& gamma, const SpatialMask& m, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("solve_z: tau must be positive");
  r.require_same(y);
  r.require_same(gamma);
  r.require_same(m.data);
  RealGrid z(r.grid());
  for (std::size_t k = 0; k < z.size(); ++k) {
    const double mk = m.data[k];
    z[k] = (tau * (r[k] - y[k]) + gamma[k]) / (mk * mk + tau);
  }
  return z;
}

inline RealGrid solve_z(const FeatureMap& f, const FeatureMap& x, const Label& y, const RealGrid& gamma,
                        const SpatialMask& m, double tau) {
  return solve_z(response(f, x), y.data, gamma, m, tau);
}

/// zeta += mu (f - P^T g); gamma += tau (r - y - z).
inline AdmmState update_multipliers(AdmmState state, const FeatureMap& f, const CroppedBank& g, const CropGeometry& crop,
                                    const RealGrid& r, const RealGrid& y, const RealGrid& z) {
  for (int l = 0; l < f.channels(); ++l) {
    const RealGrid q = crop.embed(g[std::size_t(l)]);
    auto& zl = state.zeta[std::size_t(l)];
    for (std::size_t k = 0; k < zl.size(); ++k) zl[k] += state.mu * (f[l][k] - q[k]);
  }
  for (std::size_t k = 0; k < state.gamma.size(); ++k) state.gamma[k] += state.tau * (r[k] - y[k] - z[k]);
  return state;
}

/// Per-iteration constraint residuals, recorded when a trace is requested.
struct AdmmTrace {
  std::vector<double> filter_residual;    // ||f - P^T g||_inf
  std::vector<double> response_residual;  // ||r - y - z||_inf
};

namespace detail {
inline bool finite_bank(const FeatureMap& f) {
  for (const auto& c : f)
    if (!all_finite(c)) return false;
  return true;
}
}  // namespace detail

/// Masked BACF training: config.iters sweeps of g, f, z and multiplier updates
/// with geometric penalty growth capped at tau_max / mu_max.
inline FilterBank train_masked_bacf(const TrainRequest& req, AdmmTrace* trace = nullptr,
                                    const FilterBank* warm_start = nullptr) {
  req.validate();
  const auto& cfg = req.config;
  const Grid2 grid = req.x.grid();
  const int L = req.x.channels();
  const SpectrumBank x_hat(req.x);
  const ComplexGrid y_hat = dft2(req.y.data);

  AdmmState st = AdmmState::zeros(grid, L, cfg.mu, cfg.tau);
  FeatureMap f = warm_start ? warm_start->f : FeatureMap(grid, L);
  CroppedBank g;

  for (int it = 0; it < cfg.iters; ++it) {
    st.iteration = it;
    RealGrid r;
    try {
      g = solve_g(f, st.zeta, st.mu, cfg.lambda, req.crop);
      f = solve_f(g, st.zeta, st.gamma, st.z, x_hat, y_hat, st.mu, st.tau, req.crop);
      r = idft2(response_spectrum(SpectrumBank(f), x_hat));
    } catch (const std::invalid_argument&) {
      // FeatureMap rejects non-finite channels; the request was validated above.
      throw NumericDivergenceError("train_masked_bacf: non-finite iterate", it);
    }
    RealGrid z = solve_z(r, req.y.data, st.gamma, req.mask, st.tau);
    st = update_multipliers(std::move(st), f, g, req.crop, r, req.y.data, z);
    st.z = std::move(z);

    if (!detail::finite_bank(f) || !all_finite(st.z) || !all_finite(st.gamma))
      throw NumericDivergenceError("train_masked_bacf: non-finite iterate", it);

    double res_f = 0.0, res_r = 0.0;
    if (trace || cfg.tolerance > 0.0) {
      res_f = residual_norm_inf(FilterBank{f, g, req.crop});
      for (std::size_t k = 0; k < r.size(); ++k)
        res_r = std::max(res_r, std::abs(r[k] - req.y.data[k] - st.z[k]));
      if (trace) {
        trace->filter_residual.push_back(res_f);
        trace->response_residual.push_back(res_r);
      }
    }
    st.mu = std::min(cfg.growth * st.mu, cfg.mu_max);
    st.tau = std::min(cfg.growth * st.tau, cfg.tau_max);
    if (cfg.tolerance > 0.0 && res_f < cfg.tolerance && res_r < cfg.tolerance) break;
  }
  return FilterBank{std::move(f), std::move(g), req.crop};
}

/// Constant-penalty schedule that drives ADMM to high accuracy on small
/// instances; used when comparing against the dense solver. Tuned on
/// unit-scale features: a small tau with a large mu converged fastest.
inline SolverConfig reference_config(double lambda) {
  SolverConfig c;
  c.lambda = lambda;
  c.tau = c.tau_max = 0.02;
  c.mu = c.mu_max = 3.0;
  c.growth = 1.0;
  c.iters = 3000;
  c.tolerance = 1e-11;
  return c;
}

/// Masked objective of a full-grid filter, evaluated through spectra:
/// 1/2 ||M . e||^2 = ||DFT(M . e)||^2 / 2T and ||f||^2 = ||f_hat||^2 / T.
inline double masked_objective_spectral(const FeatureMap& f, const FeatureMap& x, const RealGrid& y,
                                        const SpatialMask& m, double lambda) {
  if (!(f.grid() == x.grid()) || !(y.grid() == x.grid()) || !(m.grid() == x.grid()))
    throw std::invalid_argument("masked_objective_spectral: shape mismatch");
  const SpectrumBank fh(f);
  ComplexGrid eh = response_spectrum(fh, SpectrumBank(x));
  eh -= dft2(y);
  RealGrid e = idft2(eh);
  for (std::size_t k = 0; k < e.size(); ++k) e[k] *= m.data[k];
  const double T = double(x.grid().size());
  double data = 0.0, reg = 0.0;
  for (const auto& v : dft2(e)) data += std::norm(v);
  for (int l = 0; l < fh.size(); ++l)
    for (const auto& v : fh[l]) reg += std::norm(v);
  return 0.5 * data / T + 0.5 * lambda * reg / T;
}

/// Masked objective at the feasible point f = P^T g, evaluated with FFTs.
inline double masked_objective(const CroppedBank& g, const CropGeometry& crop, const FeatureMap& x, const RealGrid& y,
                               const SpatialMask& m, double lambda) {
  const FilterBank fb = FilterBank::from_cropped(g, crop);
  const RealGrid r = response(fb.f, x);
  double data = 0.0, reg = 0.0;
  for (std::size_t k = 0; k < r.size(); ++k) {
    const double e = m.data[k] * (r[k] - y[k]);
    data += e * e;
  }
  for (const auto& c : g)
    for (double v : c) reg += v * v;
  return 0.5 * data + 0.5 * lambda * reg;
}

}  // namespace maskcf
