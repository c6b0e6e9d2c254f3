#include <gtest/gtest.h>

#include "maskcf/oracle.hpp"
#include "maskcf/solver_single.hpp"
#include "test_util.hpp"

using namespace maskcf;
using namespace maskcf::testing;

namespace {

// X_l^T v for the convolution operator v -> x_l * v: a cyclic correlation.
RealGrid conv_adjoint(const RealGrid& x, const RealGrid& v) {
  const int H = x.height(), W = x.width();
  RealGrid out(x.grid());
  for (int mi = 0; mi < H; ++mi)
    for (int mj = 0; mj < W; ++mj) {
      double s = 0.0;
      for (int ni = 0; ni < H; ++ni)
        for (int nj = 0; nj < W; ++nj) s += x(wrap_index(ni - mi, H), wrap_index(nj - mj, W)) * v(ni, nj);
      out(mi, mj) = s;
    }
  return out;
}

std::vector<RealGrid> random_bank(Grid2 g, int L, std::mt19937_64& rng) {
  std::vector<RealGrid> out;
  for (int l = 0; l < L; ++l) out.push_back(random_grid(g, rng));
  return out;
}

}  // namespace

// ---------------------------------------------------------------- ridge

TEST(RidgeCf, DeltaSampleReproducesLabel) {
  const Grid2 g(8, 9);
  const auto y = make_gaussian_label(g, 1.5);
  const auto fb = train_ridge_cf(FeatureMap({delta_at(g)}), y, 0.0);
  EXPECT_LT(max_abs_diff(fb.f[0], y.data), 1e-12);
}

TEST(RidgeCf, HugeLambdaShrinksFilter) {
  std::mt19937_64 rng(11);
  const Grid2 g(8, 8);
  const auto fb = train_ridge_cf(random_features(g, 2, rng), make_gaussian_label(g, 1.0), 1e12);
  double n2 = 0.0;
  for (const auto& c : fb.f) n2 += sum_squares(c);
  EXPECT_LE(std::sqrt(n2), 1e-6);
}

TEST(RidgeCf, MatchesDenseRidgeSolveTwoChannels) {
  std::mt19937_64 rng(12);
  const Grid2 g(8, 8);
  const auto x = random_features(g, 2, rng);
  const auto y = make_gaussian_label(g, 1.2);
  const double lambda = 0.3;
  const auto fb = train_ridge_cf(x, y, lambda);
  const auto crop = CropGeometry::full(g);
  const auto p = oracle::build_dense(x, ones_mask(g), y.data, crop, lambda);
  const auto sol = oracle::dense_solve_masked_cf(p);
  const auto g_star = sol.bank(2, crop.D());
  for (int l = 0; l < 2; ++l)
    for (int d = 0; d < crop.D(); ++d) EXPECT_NEAR(fb.g[std::size_t(l)][std::size_t(d)], g_star[std::size_t(l)][std::size_t(d)], 1e-9);
}

TEST(RidgeCf, WindowIsPremultiplied) {
  std::mt19937_64 rng(13);
  const Grid2 g(6, 7);
  const auto x = random_features(g, 2, rng);
  const auto y = make_gaussian_label(g, 1.0);
  const auto c = cosine_window(g);
  const auto a = train_ridge_cf(x, y, 0.1, c);
  const auto b = train_ridge_cf(apply_mask(c, x), y, 0.1);
  for (int l = 0; l < 2; ++l) EXPECT_LT(max_abs_diff(a.f[l], b.f[l]), 1e-14);
}

TEST(RidgeCf, ZeroDenominatorIsSingular) {
  const Grid2 g(4, 4);
  EXPECT_THROW(train_ridge_cf(FeatureMap(g, 1), make_gaussian_label(g, 1.0), 0.0), SingularSystemError);
}

TEST(RidgeCf, ResponseScalesWithLabel) {
  std::mt19937_64 rng(14);
  const Grid2 g(7, 7);
  const auto x = random_features(g, 1, rng);
  auto y = make_gaussian_label(g, 1.0);
  const auto r1 = response(train_ridge_cf(x, y, 0.0), x);
  y.data *= 3.5;
  const auto r2 = response(train_ridge_cf(x, y, 0.0), x);
  EXPECT_LT(max_abs_diff(r1 * 3.5, r2), 1e-9);
}

// ---------------------------------------------------------------- crop

TEST(CropGeometry, WrappedCentralBlock) {
  const Grid2 g(6, 6);
  const auto c = CropGeometry::central(g, 3, 2);
  EXPECT_EQ(c.D(), 6);
  // rows offsets {-1,0,1} -> {5,0,1}; cols {-1,0} -> {5,0}
  const std::vector<std::size_t> expected{5 * 6 + 5, 5 * 6 + 0, 0 * 6 + 5, 0, 1 * 6 + 5, 1 * 6 + 0};
  EXPECT_EQ(std::vector<std::size_t>(c.indices().begin(), c.indices().end()), expected);
  std::vector<double> v{1, 2, 3, 4, 5, 6};
  EXPECT_EQ(c.crop(c.embed(v)), v);
  EXPECT_THROW(CropGeometry::central(g, 7, 1), std::invalid_argument);
}

// ---------------------------------------------------------------- g

TEST(SolveG, ClosedFormCases) {
  std::mt19937_64 rng(15);
  const Grid2 g(10, 10);
  const auto crop = CropGeometry::central(g, 6, 6);
  const auto f = random_features(g, 2, rng);
  const std::vector<RealGrid> zero(2, RealGrid(g));
  const auto g1 = solve_g(f, zero, 3.0, 0.0, crop);
  for (int l = 0; l < 2; ++l) {
    const auto expect = crop.crop(f[l]);
    for (std::size_t d = 0; d < expect.size(); ++d) EXPECT_NEAR(g1[std::size_t(l)][d], expect[d], 1e-15);
  }
  const auto g0 = solve_g(FeatureMap(g, 2), zero, 3.0, 0.5, crop);
  for (const auto& c : g0)
    for (double v : c) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(solve_g(f, zero, 0.0, 0.0, crop), SingularSystemError);
}

TEST(SolveG, MatchesDenseMatrixSolve) {
  std::mt19937_64 rng(16);
  const Grid2 g(10, 10);
  const auto crop = CropGeometry::central(g, 6, 6);
  const auto f = random_features(g, 1, rng);
  const auto zeta = random_bank(g, 1, rng);
  const double mu = 1.7, lambda = 0.4;
  const int T = 100, D = crop.D();
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(D, T);
  for (int d = 0; d < D; ++d) P(d, Eigen::Index(crop.indices()[std::size_t(d)])) = 1.0;
  Eigen::VectorXd fv(T), zv(T);
  for (int k = 0; k < T; ++k) fv(k) = f[0][std::size_t(k)], zv(k) = zeta[0][std::size_t(k)];
  const Eigen::MatrixXd A = lambda * Eigen::MatrixXd::Identity(D, D) + mu * P * P.transpose();
  const Eigen::VectorXd expect = A.lu().solve(P * zv + mu * P * fv);
  const auto got = solve_g(f, zeta, mu, lambda, crop);
  for (int d = 0; d < D; ++d) EXPECT_NEAR(got[0][std::size_t(d)], expect(d), 1e-12);
}

// ---------------------------------------------------------------- f

TEST(ShermanMorrison, MatchesDirectComplexSolves) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n(0.0, 3.0);
  std::uniform_real_distribution<double> pen(0.1, 50.0);
  for (int trial = 0; trial < 500; ++trial) {
    const int L = 1 + trial % 8;
    std::vector<Complex> x(static_cast<std::size_t>(L)), r(static_cast<std::size_t>(L)), out(static_cast<std::size_t>(L));
    Eigen::VectorXcd xv(L), rv(L);
    for (int l = 0; l < L; ++l) {
      x[std::size_t(l)] = {n(rng), n(rng)};
      r[std::size_t(l)] = {n(rng), n(rng)};
      xv(l) = x[std::size_t(l)];
      rv(l) = r[std::size_t(l)];
    }
    const double mu = pen(rng), tau = pen(rng);
    sherman_morrison_bin(x, r, mu, tau, out);
    const Eigen::VectorXcd u = xv.conjugate();
    const Eigen::MatrixXcd A = mu * Eigen::MatrixXcd::Identity(L, L) + tau * u * u.adjoint();
    const Eigen::VectorXcd expect = A.partialPivLu().solve(rv);
    for (int l = 0; l < L; ++l) EXPECT_LT(std::abs(out[std::size_t(l)] - expect(l)), 1e-9 * std::max(1.0, expect.norm()));
  }
}

TEST(ShermanMorrison, ZeroSampleAndScalarCase) {
  std::vector<Complex> zero(3), r{{1, 2}, {-3, 0.5}, {0, 1}}, out(3);
  sherman_morrison_bin(zero, r, 2.0, 5.0, out);
  for (int l = 0; l < 3; ++l) EXPECT_EQ(out[std::size_t(l)], r[std::size_t(l)] / 2.0);
  std::vector<Complex> x1{{1.5, -0.5}}, r1{{2.0, 1.0}}, o1(1);
  sherman_morrison_bin(x1, r1, 2.0, 3.0, o1);
  EXPECT_LT(std::abs(o1[0] - r1[0] / (3.0 * std::norm(x1[0]) + 2.0)), 1e-15);
}

TEST(SolveF, SatisfiesSpatialNormalEquations) {
  std::mt19937_64 rng(18);
  const Grid2 g(6, 7);
  const int L = 3;
  const auto crop = CropGeometry::central(g, 3, 3);
  const auto x = random_features(g, L, rng);
  const auto y = make_gaussian_label(g, 1.0);
  CroppedBank gb(L, std::vector<double>(std::size_t(crop.D())));
  std::uniform_real_distribution<double> u(-1, 1);
  for (auto& c : gb)
    for (auto& v : c) v = u(rng);
  const auto zeta = random_bank(g, L, rng);
  const auto gamma = random_grid(g, rng), z = random_grid(g, rng);
  const double mu = 1.3, tau = 2.1;
  const auto f = solve_f(gb, zeta, gamma, z, SpectrumBank(x), dft2(y.data), mu, tau, crop);
  RealGrid r(g);
  for (int l = 0; l < L; ++l) r += direct_conv(x[l], f[l]);
  RealGrid v = gamma + tau * (r - y.data - z);
  for (int l = 0; l < L; ++l) {
    const auto grad = zeta[std::size_t(l)] + mu * (f[l] - crop.embed(gb[std::size_t(l)])) + conv_adjoint(x[l], v);
    EXPECT_LT(max_abs(grad), 1e-10);
  }
}

// ---------------------------------------------------------------- z

TEST(SolveZ, LimitCases) {
  std::mt19937_64 rng(19);
  const Grid2 g(5, 5);
  const auto r = random_grid(g, rng), y = random_grid(g, rng), gamma = random_grid(g, rng);
  const double tau = 2.0;
  const SpatialMask zero{RealGrid(g), MaskKind::binary, {}, {}};
  const auto z0 = solve_z(r, y, gamma, zero, tau);
  for (std::size_t k = 0; k < z0.size(); ++k) EXPECT_NEAR(z0[k], r[k] - y[k] + gamma[k] / tau, 1e-14);
  const SpatialMask huge{RealGrid(g, 1e8), MaskKind::binary, {}, {}};
  EXPECT_LT(max_abs(solve_z(r, y, gamma, huge, tau)), 1e-14);
}

TEST(SolveZ, FiniteDifferenceStationarity) {
  std::mt19937_64 rng(20);
  const Grid2 g(5, 5);
  const auto r = random_grid(g, rng), y = random_grid(g, rng), gamma = random_grid(g, rng);
  const SpatialMask m{random_grid(g, rng, 0.0, 1.0), MaskKind::gaussian, {}, {}};
  const double tau = 1.7;
  const auto z = solve_z(r, y, gamma, m, tau);
  auto objective = [&](const RealGrid& zz) {
    double s = 0.0;
    for (std::size_t k = 0; k < zz.size(); ++k) {
      const double e = r[k] - y[k] - zz[k];
      s += 0.5 * std::pow(m.data[k] * zz[k], 2) + gamma[k] * e + 0.5 * tau * e * e;
    }
    return s;
  };
  const double h = 1e-6;
  double worst = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    RealGrid zp = z, zm = z;
    zp[k] += h;
    zm[k] -= h;
    worst = std::max(worst, std::abs((objective(zp) - objective(zm)) / (2 * h)));
  }
  EXPECT_LE(worst, 1e-8);
}

// ---------------------------------------------------------------- multipliers

TEST(UpdateMultipliers, FeasiblePointAndZeroPenalty) {
  std::mt19937_64 rng(21);
  const Grid2 g(6, 6);
  const auto crop = CropGeometry::central(g, 3, 3);
  CroppedBank gb(2, std::vector<double>(std::size_t(crop.D()), 0.3));
  const auto fb = FilterBank::from_cropped(gb, crop);
  const auto y = random_grid(g, rng), z = random_grid(g, rng);
  const auto r = y + z;
  AdmmState st = AdmmState::zeros(g, 2, 2.0, 3.0);
  st.zeta = random_bank(g, 2, rng);
  st.gamma = random_grid(g, rng);
  const auto same = update_multipliers(st, fb.f, gb, crop, r, y, z);
  for (int l = 0; l < 2; ++l) EXPECT_LT(max_abs_diff(same.zeta[std::size_t(l)], st.zeta[std::size_t(l)]), 1e-15);
  EXPECT_LT(max_abs_diff(same.gamma, st.gamma), 1e-15);

  st.mu = 0.0;
  st.tau = 0.0;
  const auto f = random_features(g, 2, rng);
  const auto frozen = update_multipliers(st, f, gb, crop, random_grid(g, rng), y, z);
  EXPECT_EQ(max_abs_diff(frozen.gamma, st.gamma), 0.0);
}

TEST(UpdateMultipliers, MatchesScalarLoop) {
  std::mt19937_64 rng(22);
  const Grid2 g(5, 4);
  const auto crop = CropGeometry::central(g, 2, 2);
  const auto f = random_features(g, 2, rng);
  CroppedBank gb(2, std::vector<double>(4));
  for (auto& c : gb)
    for (auto& v : c) v = std::uniform_real_distribution<double>(-1, 1)(rng);
  const auto r = random_grid(g, rng), y = random_grid(g, rng), z = random_grid(g, rng);
  AdmmState st = AdmmState::zeros(g, 2, 1.5, 2.5);
  st.zeta = random_bank(g, 2, rng);
  st.gamma = random_grid(g, rng);
  const auto out = update_multipliers(st, f, gb, crop, r, y, z);
  for (int l = 0; l < 2; ++l) {
    const auto q = crop.embed(gb[std::size_t(l)]);
    for (std::size_t k = 0; k < 20; ++k)
      EXPECT_DOUBLE_EQ(out.zeta[std::size_t(l)][k], st.zeta[std::size_t(l)][k] + 1.5 * (f[l][k] - q[k]));
  }
  for (std::size_t k = 0; k < 20; ++k) EXPECT_DOUBLE_EQ(out.gamma[k], st.gamma[k] + 2.5 * (r[k] - y[k] - z[k]));
}

// ---------------------------------------------------------------- ADMM

TEST(MaskedBacf, UnconstrainedExactFit) {
  const Grid2 g(9, 9);
  TrainRequest req{FeatureMap({delta_at(g)}), make_gaussian_label(g, 1.2), ones_mask(g), SolverConfig{},
                   CropGeometry::full(g)};
  req.config.lambda = 0.0;
  req.config.iters = 50;
  req.config.growth = 1.0;
  const auto fb = train_masked_bacf(req);
  EXPECT_LT(max_abs_diff(response(fb, req.x), req.y.data), 1e-4);
}

TEST(MaskedBacf, DefaultScheduleAccepted) {
  const auto c = SolverConfig::single_base();
  EXPECT_NO_THROW(c.validate());
  const Grid2 g(8, 8);
  std::mt19937_64 rng(23);
  TrainRequest req{random_features(g, 2, rng), make_gaussian_label(g, 1.0), binary_mask(g, 2, 2), c,
                   CropGeometry::central(g, 2, 2)};
  const auto fb = train_masked_bacf(req);
  EXPECT_EQ(fb.channels(), 2);
  EXPECT_EQ(int(fb.g[0].size()), 4);
}

TEST(MaskedBacf, MatchesDenseOracle12x12) {
  std::mt19937_64 rng(24);
  const Grid2 g(12, 12);
  const auto x = random_features(g, 1, rng);
  const auto y = make_gaussian_label(g, 1.5);
  const auto mask = binary_mask(g, 6, 6);
  const auto crop = CropGeometry::central(g, 6, 6);
  TrainRequest req{x, y, mask, reference_config(0.5), crop};
  const auto fb = train_masked_bacf(req);
  const auto p = oracle::build_dense(x, mask, y.data, crop, 0.5);
  const auto opt = oracle::dense_solve_masked_cf(p);
  const double got = oracle::dense_objective(p, oracle::flatten(fb.g));
  EXPECT_LE((got - opt.objective) / opt.objective, 1e-4);
  EXPECT_GE(got, opt.objective * (1 - 1e-12));
}

TEST(MaskedBacf, ConstraintResidualsShrinkWithGrowingPenalty) {
  std::mt19937_64 rng(25);
  const Grid2 g(12, 12);
  TrainRequest req{random_features(g, 2, rng), make_gaussian_label(g, 1.0), gaussian_mask(g, 3, 3, 1.2),
                   SolverConfig::single_base(), CropGeometry::central(g, 3, 3)};
  req.config.iters = 300;
  AdmmTrace trace;
  train_masked_bacf(req, &trace);
  ASSERT_EQ(trace.filter_residual.size(), 300u);
  EXPECT_LT(trace.filter_residual.back(), 0.1 * trace.filter_residual[9]);
  EXPECT_LT(trace.filter_residual.back(), 1e-3);
  EXPECT_LT(trace.response_residual.back(), 1e-3);
}

TEST(MaskedBacf, ReducesToWindowedBacfWithOnesMask) {
  std::mt19937_64 rng(26);
  const Grid2 g(10, 10);
  const auto x = random_features(g, 2, rng);
  const auto xw = apply_mask(cosine_window(g), x);
  const auto y = make_gaussian_label(g, 1.0);
  const auto crop = CropGeometry::central(g, 4, 4);
  TrainRequest req{xw, y, ones_mask(g), reference_config(0.2), crop};
  const auto fb = train_masked_bacf(req);
  const auto p = oracle::build_dense(xw, ones_mask(g), y.data, crop, 0.2);
  const auto opt = oracle::dense_solve_masked_cf(p);
  EXPECT_LE(rel_diff(oracle::dense_objective(p, oracle::flatten(fb.g)), opt.objective), 1e-4);
}

TEST(MaskedBacf, DivergenceIsReported) {
  const Grid2 g(4, 4);
  RealGrid big(g, 1e200);
  TrainRequest req{FeatureMap({big}), make_gaussian_label(g, 1.0), ones_mask(g), SolverConfig{}, CropGeometry::full(g)};
  try {
    train_masked_bacf(req);
    FAIL() << "expected divergence";
  } catch (const NumericDivergenceError& e) {
    EXPECT_EQ(e.iteration(), 0);
  } catch (const NumericError&) {
    // overflow can already surface in the inverse transform
  }
}

TEST(MaskedBacf, RejectsMismatchedRequest) {
  const Grid2 g(6, 6);
  TrainRequest req{FeatureMap(g, 1), make_gaussian_label(Grid2(5, 5), 1.0), ones_mask(g), SolverConfig{},
                   CropGeometry::full(g)};
  EXPECT_THROW(train_masked_bacf(req), std::invalid_argument);
}
