#pragma once

// Dense, spatial-domain ground truth for the frequency-domain solvers.
// Nothing in here calls into frequency.hpp: convolutions are explicit cyclic
// sums and linear systems are materialized and factored with Eigen.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <string>

#include "maskcf/core.hpp"
#include "maskcf/masking.hpp"
#include "maskcf/crop.hpp"

namespace maskcf::oracle {

inline constexpr std::size_t kMaxDenseCells = 4096;

/// (a * b)[n] = sum_m a[m] b[n - m], by direct summation.
inline RealGrid spatial_conv(const RealGrid& a, const RealGrid& b) {
  if (!(a.grid() == b.grid())) throw std::invalid_argument("spatial_conv: dimension mismatch");
  const int H = a.height(), W = a.width();
  RealGrid out(a.grid());
  for (int ni = 0; ni < H; ++ni)
    for (int nj = 0; nj < W; ++nj) {
      double s = 0.0;
      for (int mi = 0; mi < H; ++mi) {
        const int di = wrap_index(ni - mi, H);
        for (int mj = 0; mj < W; ++mj) s += a(mi, mj) * b(di, wrap_index(nj - mj, W));
      }
      out(ni, nj) = s;
    }
  return out;
}

/// min 1/2 ||D_M (X g - y)||^2 + 1/2 g^T diag(reg) g over g in R^{L*D}.
struct DenseProblem {
  Eigen::MatrixXd X;        // T x (L*D)
  Eigen::VectorXd mask;     // diagonal of D_M
  Eigen::VectorXd y;        // T
  Eigen::VectorXd reg;      // L*D, lambda for the ridge case
  double lambda = 0.0;
  int channels = 0;
  CropGeometry crop;
};

/// Column (l, d) is x_l cyclically shifted to crop cell d, so X vec(g) equals
/// sum_l x_l * P^T g_l.
inline DenseProblem build_dense(const FeatureMap& x, const SpatialMask& m, const RealGrid& y, const CropGeometry& crop,
                                double lambda) {
  const Grid2 grid = x.grid();
  if (grid.size() > kMaxDenseCells) throw std::invalid_argument("build_dense: instance too large for a dense solve");
  if (!(grid == m.grid()) || !(grid == y.grid()) || !(grid == crop.grid()))
    throw std::invalid_argument("build_dense: shape mismatch");
  const int H = grid.height, W = grid.width, L = x.channels(), D = crop.D();
  const Eigen::Index T = Eigen::Index(grid.size());
  DenseProblem p;
  p.X.setZero(T, Eigen::Index(L) * D);
  p.mask.resize(T);
  p.y.resize(T);
  for (Eigen::Index n = 0; n < T; ++n) {
    p.mask(n) = m.data[std::size_t(n)];
    p.y(n) = y[std::size_t(n)];
  }
  const auto idx = crop.indices();
  for (int l = 0; l < L; ++l)
    for (int d = 0; d < D; ++d) {
      const int pi = int(idx[std::size_t(d)] / std::size_t(W));
      const int pj = int(idx[std::size_t(d)] % std::size_t(W));
      const Eigen::Index col = Eigen::Index(l) * D + d;
      for (int ni = 0; ni < H; ++ni)
        for (int nj = 0; nj < W; ++nj)
          p.X(Eigen::Index(ni) * W + nj, col) = x[l](wrap_index(ni - pi, H), wrap_index(nj - pj, W));
    }
  p.reg = Eigen::VectorXd::Constant(Eigen::Index(L) * D, lambda);
  p.lambda = lambda;
  p.channels = L;
  p.crop = crop;
  return p;
}

/// Replaces the ridge term with 1/2 sum_l ||w . f_l||^2 restricted to the crop.
inline void set_spatial_weights(DenseProblem& p, const RealGrid& w) {
  const auto idx = p.crop.indices();
  const Eigen::Index D = Eigen::Index(idx.size());
  for (int l = 0; l < p.channels; ++l)
    for (Eigen::Index d = 0; d < D; ++d) p.reg(l * D + d) = w[idx[std::size_t(d)]] * w[idx[std::size_t(d)]];
}

inline double dense_objective(const DenseProblem& p, const Eigen::VectorXd& g) {
  const Eigen::VectorXd e = p.mask.cwiseProduct(p.X * g - p.y);
  return 0.5 * e.squaredNorm() + 0.5 * g.dot(p.reg.cwiseProduct(g));
}

inline Eigen::MatrixXd normal_matrix(const DenseProblem& p) {
  const Eigen::MatrixXd MX = p.mask.asDiagonal() * p.X;
  Eigen::MatrixXd A = MX.transpose() * MX;
  A.diagonal() += p.reg;
  return A;
}

struct DenseSolution {
  Eigen::VectorXd g;
  double objective = 0.0;

  CroppedBank bank(int channels, int D) const {
    CroppedBank out(static_cast<std::size_t>(channels), std::vector<double>(static_cast<std::size_t>(D)));
    for (int l = 0; l < channels; ++l)
      for (int d = 0; d < D; ++d) out[std::size_t(l)][std::size_t(d)] = g(Eigen::Index(l) * D + d);
    return out;
  }
};

/// g* = (X^T D_M^2 X + diag(reg))^-1 X^T D_M^2 y.
inline DenseSolution dense_solve_masked_cf(const DenseProblem& p) {
  const Eigen::MatrixXd A = normal_matrix(p);
  const Eigen::VectorXd m2 = p.mask.cwiseProduct(p.mask);
  const Eigen::VectorXd b = p.X.transpose() * m2.cwiseProduct(p.y);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
  if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-13)
    throw SingularSystemError("dense_solve_masked_cf: normal matrix is singular");
  DenseSolution s;
  s.g = ldlt.solve(b);
  s.objective = dense_objective(p, s.g);
  return s;
}

inline Eigen::VectorXd flatten(const CroppedBank& g) {
  std::size_t n = 0;
  for (const auto& c : g) n += c.size();
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  Eigen::Index k = 0;
  for (const auto& c : g)
    for (double x : c) v(k++) = x;
  return v;
}

// ---------------------------------------------------------------------------
// Literal objective evaluation

struct Regularizer {
  enum class Kind { ridge, spatial_weights };
  Kind kind = Kind::ridge;
  double lambda = 0.0;
  RealGrid weights;  // spatial_weights only

  static Regularizer ridge(double lambda) { return {Kind::ridge, lambda, {}}; }
  static Regularizer spatial(RealGrid w) { return {Kind::spatial_weights, 0.0, std::move(w)}; }

  double operator()(const FeatureMap& f) const {
    double s = 0.0;
    for (const auto& c : f) {
      if (kind == Kind::ridge) {
        s += lambda * sum_squares(c);
      } else {
        c.require_same(weights);
        for (std::size_t k = 0; k < c.size(); ++k) s += (weights[k] * c[k]) * (weights[k] * c[k]);
      }
    }
    return 0.5 * s;
  }
};

/// 1/2 sum_k alpha_k ||M . (sum_l f_l * x_{k,l} - y_k)||^2 + R(f), spatial
/// domain only. The single-base form is K = 1, alpha = 1.
inline double eval_masked_objective(const FeatureMap& f, std::span<const FeatureMap> samples,
                                    std::span<const RealGrid> labels, std::span<const double> alpha,
                                    const SpatialMask& m, const Regularizer& reg) {
  if (samples.size() != labels.size() || samples.size() != alpha.size())
    throw std::invalid_argument("eval_masked_objective: sample/label/weight count mismatch");
  double data = 0.0;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const auto& x = samples[k];
    if (x.channels() != f.channels() || !(x.grid() == f.grid()) || !(labels[k].grid() == f.grid()) ||
        !(m.grid() == f.grid()))
      throw std::invalid_argument("eval_masked_objective: shape mismatch");
    RealGrid r(f.grid());
    for (int l = 0; l < f.channels(); ++l) r += spatial_conv(f[l], x[l]);
    double s = 0.0;
    for (std::size_t n = 0; n < r.size(); ++n) {
      const double e = m.data[n] * (r[n] - labels[k][n]);
      s += e * e;
    }
    data += alpha[k] * s;
  }
  return 0.5 * data + reg(f);
}

inline double eval_masked_objective(const FeatureMap& f, const FeatureMap& x, const RealGrid& y, const SpatialMask& m,
                                    const Regularizer& reg) {
  const double one = 1.0;
  return eval_masked_objective(f, std::span(&x, 1), std::span(&y, 1), std::span(&one, 1), m, reg);
}

// ---------------------------------------------------------------------------
// Fixtures: plain text, header "H W L h w lambda seed", then L*H*W sample
// values, H*W mask values and H*W label values, whitespace separated and
// row-major. Lines starting with '#' are comments.

struct Fixture {
  std::string name;
  int H = 0, W = 0, L = 0;
  int h = 0, w = 0;  // crop size in cells
  double lambda = 0.0;
  std::uint64_t seed = 0;
  FeatureMap x;
  SpatialMask mask;
  RealGrid y;

  CropGeometry crop() const { return CropGeometry::central(Grid2(H, W), h, w); }
};

namespace detail {
inline double uniform_pm1(std::mt19937_64& rng) {
  return double(rng() >> 11) * (1.0 / 9007199254740992.0) * 2.0 - 1.0;
}
}  // namespace detail

/// Seeded random instance; the mask uses the crop size as target size.
inline Fixture make_fixture(std::string name, int H, int W, int L, int h, int w, double lambda, std::uint64_t seed,
                            MaskKind kind, double delta = 1.2) {
  Fixture fx;
  fx.name = std::move(name);
  fx.H = H, fx.W = W, fx.L = L, fx.h = h, fx.w = w, fx.lambda = lambda, fx.seed = seed;
  const Grid2 grid(H, W);
  std::mt19937_64 rng(seed);
  std::vector<RealGrid> ch;
  for (int l = 0; l < L; ++l) {
    RealGrid c(grid);
    for (auto& v : c) v = detail::uniform_pm1(rng);
    ch.push_back(std::move(c));
  }
  fx.x = FeatureMap(std::move(ch));
  switch (kind) {
    case MaskKind::binary: fx.mask = binary_mask(grid, h, w); break;
    case MaskKind::gaussian: fx.mask = gaussian_mask(grid, h, w, delta); break;
    case MaskKind::cosine: fx.mask = cosine_window(grid); break;
    case MaskKind::ones: fx.mask = ones_mask(grid); break;
  }
  fx.y = make_gaussian_label(grid, std::max(0.5, std::sqrt(double(h * w)) / 4.0)).data;
  return fx;
}

inline void write_fixture(const Fixture& fx, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write fixture " + path.string());
  os << "# mask=" << to_string(fx.mask.kind) << "\n";
  os << fx.H << ' ' << fx.W << ' ' << fx.L << ' ' << fx.h << ' ' << fx.w << ' ' << std::setprecision(17) << fx.lambda
     << ' ' << fx.seed << '\n';
  auto dump = [&](const RealGrid& g) {
    for (int i = 0; i < g.height(); ++i) {
      for (int j = 0; j < g.width(); ++j) os << (j ? " " : "") << std::setprecision(17) << g(i, j);
      os << '\n';
    }
  };
  for (const auto& c : fx.x) dump(c);
  dump(fx.mask.data);
  dump(fx.y);
  if (!os) throw DataError("failed writing fixture " + path.string());
}

inline Fixture read_fixture(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open fixture " + path.string());
  Fixture fx;
  fx.name = path.stem().string();
  std::string line;
  int lineno = 0;
  MaskKind kind = MaskKind::binary;
  bool have_header = false;
  std::vector<double> values;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.rfind("# mask=", 0) == 0) {
        const std::string k = line.substr(7);
        kind = k == "ones" ? MaskKind::ones : k == "gaussian" ? MaskKind::gaussian : k == "cosine" ? MaskKind::cosine : MaskKind::binary;
      }
      continue;
    }
    std::istringstream ls(line);
    if (!have_header) {
      if (!(ls >> fx.H >> fx.W >> fx.L >> fx.h >> fx.w >> fx.lambda >> fx.seed))
        throw ParseError(path.string(), lineno, "malformed header, expected 'H W L h w lambda seed'");
      if (fx.H < 1 || fx.W < 1 || fx.L < 1 || fx.h < 1 || fx.w < 1 || fx.h > fx.H || fx.w > fx.W || fx.lambda < 0)
        throw ParseError(path.string(), lineno, "header values out of range");
      have_header = true;
      continue;
    }
    std::string tok;
    while (ls >> tok) {
      char* end = nullptr;
      const double v = std::strtod(tok.c_str(), &end);
      if (end == tok.c_str() || *end != '\0' || !std::isfinite(v))
        throw ParseError(path.string(), lineno, "bad numeric token '" + tok + "'");
      values.push_back(v);
    }
  }
  if (!have_header) throw ParseError(path.string(), lineno, "missing header");
  const Grid2 grid(fx.H, fx.W);
  const std::size_t T = grid.size();
  if (values.size() != (std::size_t(fx.L) + 2) * T)
    throw ParseError(path.string(), lineno,
                     "expected " + std::to_string((fx.L + 2) * T) + " values, found " + std::to_string(values.size()));
  auto take = [&](std::size_t offset) {
    return RealGrid(grid, std::vector<double>(values.begin() + std::ptrdiff_t(offset),
                                              values.begin() + std::ptrdiff_t(offset + T)));
  };
  std::vector<RealGrid> ch;
  for (int l = 0; l < fx.L; ++l) ch.push_back(take(std::size_t(l) * T));
  fx.x = FeatureMap(std::move(ch));
  fx.mask = SpatialMask{take(std::size_t(fx.L) * T), kind, double(fx.h), double(fx.w)};
  fx.y = take(std::size_t(fx.L + 1) * T);
  return fx;
}

}  // namespace maskcf::oracle
