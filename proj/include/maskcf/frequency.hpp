#pragma once

// 2-D DFT and circulant algebra. Forward transform is unnormalized, the
// inverse divides by T = H*W, so <a,b> * T == <dft2(a), dft2(b)>.

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <tuple>
#include <vector>

#include "maskcf/core.hpp"

namespace maskcf {

namespace detail {

// One in-place FFTW plan per (shape, direction), shared by all threads.
// Planning is serialized; executing a plan on new arrays is thread-safe.
inline fftw_plan fft_plan(int H, int W, bool inverse) {
  struct Cache {
    std::mutex mu;
    std::map<std::tuple<int, int, bool>, fftw_plan> plans;
    ~Cache() {
      for (auto& kv : plans) fftw_destroy_plan(kv.second);
    }
  };
  static Cache cache;
  std::lock_guard lock(cache.mu);
  auto [it, fresh] = cache.plans.try_emplace({H, W, inverse}, nullptr);
  if (fresh) {
    std::vector<Complex> buf(std::size_t(H) * std::size_t(W));
    auto* p = reinterpret_cast<fftw_complex*>(buf.data());
    // ESTIMATE plans are chosen without timing, so results are reproducible.
    it->second = fftw_plan_dft_2d(H, W, p, p, inverse ? FFTW_BACKWARD : FFTW_FORWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
  }
  return it->second;
}

// In-place 2-D transform of row-major complex data; the inverse divides by T.
inline void fft2_inplace(ComplexGrid& g, bool inverse) {
  auto* p = reinterpret_cast<fftw_complex*>(g.data());
  fftw_execute_dft(fft_plan(g.height(), g.width(), inverse), p, p);
  if (inverse) {
    const double k = 1.0 / double(g.size());
    for (auto& v : g) v *= k;
  }
}

}  // namespace detail

inline ComplexGrid dft2(const ComplexGrid& g) {
  ComplexGrid out = g;
  detail::fft2_inplace(out, false);
  return out;
}

inline ComplexGrid dft2(const RealGrid& g) {
  ComplexGrid out(g.grid());
  for (std::size_t k = 0; k < g.size(); ++k) out[k] = Complex(g[k], 0.0);
  detail::fft2_inplace(out, false);
  return out;
}

inline ComplexGrid idft2_complex(const ComplexGrid& s) {
  ComplexGrid out = s;
  detail::fft2_inplace(out, true);
  return out;
}

/// Real part of the inverse transform. Throws NumericError when the imaginary
/// residue exceeds 1e-6 relative to the largest real magnitude, i.e. when the
/// input was not conjugate-symmetric.
inline RealGrid idft2(const ComplexGrid& s) {
  const ComplexGrid c = idft2_complex(s);
  RealGrid out(s.grid());
  double max_re = 0.0, max_im = 0.0;
  for (std::size_t k = 0; k < c.size(); ++k) {
    out[k] = c[k].real();
    max_re = std::max(max_re, std::abs(c[k].real()));
    max_im = std::max(max_im, std::abs(c[k].imag()));
  }
  if (max_im > 1e-6 * std::max(max_re, 1e-300) && max_im > 1e-300)
    throw NumericError("idft2: spectrum is not conjugate-symmetric (imaginary residue " + std::to_string(max_im) + ")");
  return out;
}

/// Per-channel spectra of a FeatureMap.
struct SpectrumBank {
  Grid2 grid;
  std::vector<ComplexGrid> channels;

  SpectrumBank() = default;
  SpectrumBank(Grid2 g, int L) : grid(g), channels(std::size_t(L), ComplexGrid(g)) {}
  explicit SpectrumBank(const FeatureMap& x) : grid(x.grid()) {
    channels.reserve(std::size_t(x.channels()));
    for (const auto& c : x) channels.push_back(dft2(c));
  }
  int size() const noexcept { return int(channels.size()); }
  ComplexGrid& operator[](int l) { return channels[std::size_t(l)]; }
  const ComplexGrid& operator[](int l) const { return channels[std::size_t(l)]; }

  FeatureMap inverse() const {
    std::vector<RealGrid> out;
    out.reserve(channels.size());
    for (const auto& c : channels) out.push_back(idft2(c));
    return FeatureMap(std::move(out));
  }
};

inline ComplexGrid hadamard(const ComplexGrid& a, const ComplexGrid& b) {
  a.require_same(b);
  ComplexGrid out(a.grid());
  for (std::size_t k = 0; k < a.size(); ++k) out[k] = a[k] * b[k];
  return out;
}

/// Cyclic convolution (a * b)[n] = sum_m a[m] b[n - m].
inline RealGrid circ_conv(const RealGrid& a, const RealGrid& b) {
  if (!(a.grid() == b.grid())) throw std::invalid_argument("circ_conv: dimension mismatch");
  return idft2(hadamard(dft2(a), dft2(b)));
}

/// Spectrum of sum_l f_l * x_l.
inline ComplexGrid response_spectrum(const SpectrumBank& f_hat, const SpectrumBank& x_hat) {
  if (f_hat.size() != x_hat.size() || !(f_hat.grid == x_hat.grid))
    throw std::invalid_argument("response: channel or grid mismatch");
  ComplexGrid r(x_hat.grid, Complex(0.0, 0.0));
  for (int l = 0; l < x_hat.size(); ++l)
    for (std::size_t k = 0; k < r.size(); ++k) r[k] += f_hat[l][k] * x_hat[l][k];
  return r;
}

/// sum_l f_l * x_l, evaluated in the frequency domain.
inline RealGrid response(const FeatureMap& f, const FeatureMap& x) {
  if (f.channels() != x.channels() || !(f.grid() == x.grid()))
    throw std::invalid_argument("response: channel or grid mismatch");
  return idft2(response_spectrum(SpectrumBank(f), SpectrumBank(x)));
}

}  // namespace maskcf
