#include "finsler/anisotropy.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace finsler;

namespace {

// Support function by sampling the boundary points u/Phi(u); independent of
// the closed forms in ConvexBody::support.
double sampled_support(const ScalarFn& gauge, const Vec2& z, int n = 20000) {
  auto q = [&](double th) { return (unit(th) / gauge(unit(th))).dot(z); };
  int best = 0;
  for (int k = 1; k < n; ++k)
    if (q(2 * kPi * k / n) > q(2 * kPi * best / n)) best = k;
  // Ternary refinement around the best sample (corners of polytopes).
  double a = 2 * kPi * (best - 1) / n, b = 2 * kPi * (best + 1) / n;
  for (int it = 0; it < 200; ++it) {
    const double c = a + (b - a) / 3, d = b - (b - a) / 3;
    (q(c) < q(d) ? a : b) = q(c) < q(d) ? c : d;
  }
  return q(0.5 * (a + b));
}

std::vector<ConvexBody> sample_bodies() {
  return {ConvexBody::ell_r(1), ConvexBody::ell_r(2), ConvexBody::ell_r(3.5),
          ConvexBody::ell_r(kInf), ConvexBody::disc({0.5, 0}, 1),
          ConvexBody::disc({-0.2, 0.3}, 0.8),
          ConvexBody::polytope({{1, 0}, {0, 2}, {-1.5, -0.5}, {0.3, -1}})};
}

Vec2 random_vec(std::mt19937_64& rng, double scale = 3.0) {
  std::uniform_real_distribution<double> d(-scale, scale);
  return {d(rng), d(rng)};
}

}  // namespace

TEST(Gauge, Examples) {
  EXPECT_NEAR(minkowski_gauge(ConvexBody::ell_r(kInf), {3, 1}), 3.0, 1e-9);
  EXPECT_NEAR(minkowski_gauge(ConvexBody::polytope({{-1, -1}, {1, -1}, {1, 1}, {-1, 1}}), {3, 1}),
              3.0, 1e-9);
  const auto shifted = ConvexBody::disc({0.5, 0}, 1);
  EXPECT_NEAR(minkowski_gauge(shifted, {1, 0}), 2.0 / 3.0, 1e-9);
  EXPECT_NEAR(minkowski_gauge(shifted, {-1, 0}), 2.0, 1e-9);
  EXPECT_NEAR(shifted.gauge({1, 0}), 2.0 / 3.0, 1e-14);
  EXPECT_NEAR(shifted.gauge({-1, 0}), 2.0, 1e-14);
  EXPECT_NEAR(minkowski_gauge(ConvexBody::ell_r(2), {0.6, 0.8}), 1.0, 1e-9);
}

TEST(Gauge, OriginNotInteriorIsConfigurationError) {
  try {
    ConvexBody::disc({2, 0}, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::configuration);
  }
  EXPECT_THROW(ConvexBody::polytope({{1, 1}, {2, 1}, {1, 2}}), Error);
}

TEST(Gauge, BisectionMatchesClosedForm) {
  std::mt19937_64 rng(11);
  for (const auto& K : sample_bodies())
    for (int i = 0; i < 200; ++i) {
      const Vec2 z = random_vec(rng);
      EXPECT_NEAR(minkowski_gauge(K, z), K.gauge(z), 2e-10 * K.gauge(z));
    }
}

TEST(Gauge, BodyConsistencyProperty) {
  std::mt19937_64 rng(12);
  for (const auto& K : sample_bodies())
    for (int i = 0; i < 2000; ++i) {
      const Vec2 z = random_vec(rng, 2.0);
      const double g = K.gauge(z);
      if (std::abs(g - 1) < 1e-9) continue;
      EXPECT_EQ(g <= 1.0, K.contains(z));
    }
}

TEST(Polar, Examples) {
  EXPECT_NEAR(polar_gauge(ConvexBody::ell_r(1), {2, -3}), 3.0, 1e-15);
  EXPECT_NEAR(polar_gauge(ConvexBody::polytope({{1, 0}, {0, 1}, {-1, 0}, {0, -1}}), {2, -3}), 3.0,
              1e-15);
  EXPECT_NEAR(polar_gauge(ConvexBody::disc({0.5, 0}, 1), {1, 0}), 1.5, 1e-15);
  for (const auto& K : sample_bodies()) EXPECT_EQ(polar_gauge(K, Vec2::Zero()), 0.0);
}

TEST(Polar, ClosedFormMatchesSampledSupport) {
  std::mt19937_64 rng(13);
  for (const auto& K : sample_bodies()) {
    auto g = [&K](const Vec2& z) { return K.gauge(z); };
    for (int i = 0; i < 5; ++i) {
      const Vec2 z = random_vec(rng);
      EXPECT_NEAR(sampled_support(g, z), K.support(z), 1e-6 * z.norm());
    }
  }
}

TEST(Polar, InvolutionOnEvenBodies) {
  std::mt19937_64 rng(14);
  for (const auto& K : sample_bodies()) {
    if (!K.is_even()) continue;
    auto pol = [&K](const Vec2& z) { return K.support(z); };
    for (int i = 0; i < 5; ++i) {
      const Vec2 z = random_vec(rng);
      EXPECT_NEAR(sampled_support(pol, z), K.gauge(z), 1e-6 * z.norm());
    }
  }
}

TEST(Polar, Identities) {
  auto e = check_polar_identities(ConvexBody::ell_r(2), {1, 1});
  ASSERT_FALSE(e.skipped);
  EXPECT_TRUE(e.holds);
  EXPECT_LT(e.err_phi_of_dpolar, 1e-9);
  EXPECT_LT(e.err_polar_of_dphi, 1e-9);
  EXPECT_LT(e.err_inverse, 1e-9);

  auto s = check_polar_identities(ConvexBody::disc({0.5, 0}, 1), {1, 0});
  ASSERT_FALSE(s.skipped);
  EXPECT_TRUE(s.holds);
  EXPECT_LT(std::max({s.err_phi_of_dpolar, s.err_polar_of_dphi, s.err_inverse}), 1e-6);

  auto c = check_polar_identities(ConvexBody::ell_r(kInf), {1, 1});
  EXPECT_TRUE(c.skipped);
}

TEST(H, EvalAndSubgradExamples) {
  Anisotropy euc(ConvexBody::ell_r(2), 2);
  EXPECT_NEAR(eval_H(euc, {3, 4}), 25.0, 1e-12);
  EXPECT_TRUE(subgrad_H(euc, {3, 4}).g.isApprox(Vec2(6, 8), 1e-12));

  Anisotropy linf(ConvexBody::ell_r(kInf), 2);
  EXPECT_NEAR(eval_H(linf, {2, 1}), 4.0, 1e-12);
  const auto s = subgrad_H(linf, {2, 1});
  EXPECT_FALSE(s.regularized);
  EXPECT_TRUE(s.g.isApprox(Vec2(4, 0), 1e-12));

  for (const auto& a : {euc, linf}) {
    EXPECT_EQ(eval_H(a, Vec2::Zero()), 0.0);
    EXPECT_TRUE(subgrad_H(a, Vec2::Zero()).g.isZero());
  }
}

TEST(H, KinkSubgradientComesFromRegularization) {
  Anisotropy linf(ConvexBody::ell_r(kInf), 2);
  const auto s = subgrad_H(linf, {1, 1}, 1e-2);
  EXPECT_TRUE(s.regularized);
  EXPECT_EQ(s.eps, 1e-2);
  // Symmetric under the swap of coordinates, so both components agree.
  EXPECT_NEAR(s.g.x(), s.g.y(), 1e-8);
  // Still a subgradient of H up to O(eps).
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const Vec2 w = random_vec(rng);
    EXPECT_GE(linf.value(w) - linf.value({1, 1}) - s.g.dot(w - Vec2(1, 1)), -0.1);
  }
}

TEST(H, HomogeneityProperty) {
  std::mt19937_64 rng(21);
  for (const auto& K : sample_bodies())
    for (double p : {1.5, 2.0, 3.0})
      for (int i = 0; i < 100; ++i) {
        Anisotropy a(K, p);
        const Vec2 z = random_vec(rng);
        for (double t : {0.5, 2.0, 10.0})
          EXPECT_NEAR(a.value(t * z), std::pow(t, p) * a.value(z), 1e-12 * std::pow(t, p) * a.value(z));
      }
}

TEST(H, SubgradientInequalityProperty) {
  std::mt19937_64 rng(22);
  for (const auto& K : sample_bodies())
    for (double p : {1.5, 2.0, 4.0}) {
      Anisotropy a(K, p);
      for (int i = 0; i < 300; ++i) {
        const Vec2 z = random_vec(rng), w = random_vec(rng);
        const Vec2 g = subgrad_H(a, z).g;
        EXPECT_GE(a.value(w), a.value(z) + g.dot(w - z) - 1e-10 * (1 + a.value(w)));
      }
    }
}

TEST(H, CoercivityConstant) {
  Anisotropy euc(ConvexBody::ell_r(2), 2);
  EXPECT_NEAR(euc.coercivity_constant(), 1.0, 1e-12);
  Anisotropy linf(ConvexBody::ell_r(kInf), 2);
  // |z|_inf^2 ranges over [1/2, 1] on the unit circle.
  EXPECT_NEAR(linf.coercivity_constant(), 2.0, 1e-6);
  std::mt19937_64 rng(5);
  Anisotropy sh(ConvexBody::disc({0.5, 0}, 1), 2);
  const double C = sh.coercivity_constant();
  for (int i = 0; i < 1000; ++i) {
    const Vec2 z = random_vec(rng);
    const double n2 = z.squaredNorm();
    EXPECT_LE(sh.value(z), C * n2 * (1 + 1e-9));
    EXPECT_GE(sh.value(z), n2 / C * (1 - 1e-4));
  }
}

TEST(Regularize, QuadraticGetsConstantShift) {
  const double eps = 0.05;
  Anisotropy euc(ConvexBody::ell_r(2), 2);
  const auto Hn = mollify_regularize(euc, eps);
  // Oracle: bump * |z|^2 = |z|^2 + m2 with m2 the normalised second moment of
  // the bump, here by a Cartesian midpoint sum.
  const int n = 1500;
  double num = 0, den = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double x = -eps + (2 * i + 1) * eps / n, y = -eps + (2 * j + 1) * eps / n;
      const double q = (x * x + y * y) / (eps * eps);
      if (q >= 1) continue;
      const double b = std::exp(-1 / (1 - q));
      num += b * (x * x + y * y);
      den += b;
    }
  const double m2 = num / den;
  const double expected = (1 + eps / 2) / (1 - m2);
  for (int k = 0; k < 16; ++k) EXPECT_NEAR(Hn.value(unit(0.3 + k * 0.4)), expected, 1e-7);
  EXPECT_LT(expected - 1, eps);
}

TEST(Regularize, CrystallineEnvelopeAndSmoothness) {
  Anisotropy linf(ConvexBody::ell_r(kInf), 2);
  const auto Hn = mollify_regularize(linf, 1e-2);
  EXPECT_GE(Hn.value({1, 0}), 1.0);
  EXPECT_GE(Hn.min_envelope_gap(), 0.0);
  // Across the face edge direction pi/4 the Hessian is finite and varies continuously.
  const Mat2 a = Hn.hessian(unit(kPi / 4 - 1e-7)), b = Hn.hessian(unit(kPi / 4 + 1e-7));
  EXPECT_TRUE(a.allFinite());
  EXPECT_LT((a - b).norm(), 1e-3 * a.norm());
  // FD Hessian of the spline representation is stable under step refinement.
  const Vec2 z = unit(kPi / 4 + 3e-3);
  auto fd = [&](double h) {
    Mat2 M;
    for (int j = 0; j < 2; ++j) {
      Vec2 e = Vec2::Zero();
      e[j] = h;
      M.col(j) = (Hn.gradient(z + e) - Hn.gradient(z - e)) / (2 * h);
    }
    return M;
  };
  EXPECT_LT((fd(1e-5) - fd(5e-6)).norm(), 1e-3 * fd(1e-5).norm());
  EXPECT_LT((fd(5e-6) - Hn.hessian(z)).norm(), 1e-2 * Hn.hessian(z).norm());
  EXPECT_GT(Hn.lambda_n(), 0.0);
  EXPECT_GT(Hn.Lambda_n(), Hn.lambda_n());
}

TEST(Regularize, DeviationDecreasesAsEpsShrinks) {
  Anisotropy linf(ConvexBody::ell_r(kInf), 3);
  double prev = kInf;
  for (double eps : {0.1, 0.05, 0.025, 0.0125}) {
    const auto Hn = mollify_regularize(linf, eps);
    const double dev = Hn.max_deviation();
    EXPECT_LT(dev, prev);
    EXPECT_GE(Hn.min_envelope_gap(), 0.0);
    prev = dev;
  }
}

TEST(Regularize, TooCoarseIsReported) {
  Anisotropy linf(ConvexBody::ell_r(kInf), 2);
  RegularizationOptions opt;
  opt.delta = 0.5;
  try {
    mollify_regularize(linf, 20.0, opt);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::regularization_too_coarse);
  }
}

TEST(QuadraticLowerBound, ClosedForms) {
  auto G1 = [](const Vec2& z) { return 0.5 * z.squaredNorm(); };
  auto D1 = [](const Vec2& z) -> Vec2 { return z; };
  EXPECT_NEAR(lemmaquad_lambda_hat(G1, D1, 1.0), 0.5, 1e-12);
  auto G2 = [](const Vec2& z) { return z.squaredNorm(); };
  EXPECT_NEAR(lemmaquad_lambda_hat(G2, {}, 2.0), 1.0, 1e-8);
}

TEST(QuadraticLowerBound, QuadraticFormOracle) {
  // G = z^T A z / 2 gives (DG, z) = 2 on {G = 1}, so the answer is lambda/2.
  Mat2 A;
  A << 2.0, 0.7, 0.7, 1.0;
  auto G = [&](const Vec2& z) { return 0.5 * z.dot(A * z); };
  auto D = [&](const Vec2& z) -> Vec2 { return A * z; };
  const double lmin = Eigen::SelfAdjointEigenSolver<Mat2>(A).eigenvalues()[0];
  EXPECT_NEAR(lemmaquad_lambda_hat(G, D, lmin), lmin / 2, 1e-10);
}

TEST(QuadraticLowerBound, TiltedSamplingOracle) {
  // G = |z|^2/2 + z_1^4/10 has D^2 G >= Id and a non-constant (DG, z) on {G = 1}.
  auto G = [](const Vec2& z) { return 0.5 * z.squaredNorm() + 0.1 * std::pow(z.x(), 4); };
  auto D = [](const Vec2& z) -> Vec2 { return z + Vec2(0.4 * std::pow(z.x(), 3), 0); };
  // Dense oracle: level radius in closed form (quadratic in rho^2), 100000 rays.
  double sup = 0;
  for (int k = 0; k < 100000; ++k) {
    const Vec2 u = unit(2 * kPi * k / 100000);
    const double a = 0.1 * std::pow(u.x(), 4);
    const double x = a > 0 ? (-0.5 + std::sqrt(0.25 + 4 * a)) / (2 * a) : 2.0;
    const Vec2 z = std::sqrt(x) * u;
    sup = std::max(sup, D(z).dot(z));
  }
  const double lh = lemmaquad_lambda_hat(G, D, 1.0);
  EXPECT_GT(lh, 0.0);
  EXPECT_NEAR(lh, 1.0 / sup, 1e-9);
}

TEST(HessianProbe, EuclideanIsExact) {
  Anisotropy euc(ConvexBody::ell_r(2), 2);
  const auto pr = hessian_probe_Hp2(euc);
  EXPECT_NEAR(pr.lambda_hat, 2.0, 1e-6);
  EXPECT_NEAR(pr.Lambda_hat, 2.0, 1e-6);
  EXPECT_FALSE(pr.degenerate);
}

TEST(HessianProbe, FourNormDegenerate) {
  Anisotropy l4(ConvexBody::ell_r(4), 4);
  const Mat2 M = hessian_Hp2(l4, {1, 0});
  EXPECT_NEAR(M(1, 1), 0.0, 1e-6);
  EXPECT_NEAR(M(0, 0), 2.0, 1e-6);
  const auto pr = hessian_probe_Hp2(l4, 64);
  EXPECT_TRUE(pr.degenerate);
}

TEST(HessianProbe, RegularizedCrystallineIsElliptic) {
  Anisotropy linf(ConvexBody::ell_r(kInf), 2);
  const auto pr = hessian_probe_Hp2(mollify_regularize(linf, 1e-2));
  EXPECT_GT(pr.lambda_hat, 0.0);
  EXPECT_FALSE(pr.degenerate);
}

TEST(HTheta, DomainAndCollapse) {
  Anisotropy euc(ConvexBody::ell_r(2), 2);
  EXPECT_THROW(eval_H_theta(euc, {1, 0}, 0.0), Error);
  EXPECT_THROW(eval_H_theta(euc, {1, 0}, -1.0), Error);
  Anisotropy sh(ConvexBody::disc({0.5, 0}, 1), 2);
  std::mt19937_64 rng(8);
  for (int i = 0; i < 50; ++i) {
    const Vec2 z = random_vec(rng);
    EXPECT_NEAR(eval_H_theta(sh, z, 0.3), 0.3 + sh.value(z), 1e-12 * (1 + sh.value(z)));
  }
}

TEST(HTheta, EuclideanP4AtOrigin) {
  // H = |z|^4: H_theta = (theta + |z|^2)^2, D^2 H_theta(0) = 4 theta Id.
  Anisotropy e4(ConvexBody::ell_r(2), 4);
  EXPECT_NEAR(eval_H_theta(e4, Vec2::Zero(), 1.0), 1.0, 1e-15);
  const double h = 1e-4;
  Mat2 M;
  for (int j = 0; j < 2; ++j) {
    Vec2 e = Vec2::Zero();
    e[j] = h;
    M.col(j) = (grad_H_theta(e4, e, 1.0) - grad_H_theta(e4, -e, 1.0)) / (2 * h);
  }
  EXPECT_TRUE(M.isApprox(4.0 * Mat2::Identity(), 1e-7));
}

TEST(HTheta, ThetaSweepIsUniform) {
  Anisotropy e4(ConvexBody::ell_r(2), 4);
  const auto pr = hessian_probe_H_theta(e4, {1e-3, 1e-2, 1e-1, 1.0});
  EXPECT_TRUE(pr.theta_independent);
  for (double l : pr.lambda_tilde) EXPECT_NEAR(l, 4.0, 1e-4);
  Anisotropy sh(ConvexBody::disc({0.5, 0}, 1), 3);
  EXPECT_TRUE(hessian_probe_H_theta(sh, {1e-3, 1e-2, 1e-1, 1.0}).theta_independent);
}
