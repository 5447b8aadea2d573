#include "finsler/barrier.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace finsler;

namespace {

ConvexDomain unit_disc() { return ConvexDomain::disc({0, 0}, 1); }
ConvexBody euclid_body() { return ConvexBody::disc({0, 0}, 1); }
ConvexBody shifted_body() { return ConvexBody::disc({0.5, 0}, 1); }

SolverOptions quick() {
  SolverOptions o;
  o.check_existence = false;
  return o;
}

}  // namespace

TEST(BarrierProfile, Examples) {
  const auto w = barrier_profile(2, 2, 1, 1);
  EXPECT_NEAR(w.A, -1 / std::log(2.0), 1e-12);
  EXPECT_EQ(w.B, 0.0);
  const auto w3 = barrier_profile(3, 2, 1, 1);
  const double A = 1 / (std::sqrt(0.5) - 1);
  EXPECT_NEAR(w3.A, A, 1e-12);
  EXPECT_NEAR(w3.B, -A, 1e-12);
  EXPECT_NEAR(w3.w(0.25), A * 0.5 + w3.B, 1e-12);
  EXPECT_EQ(w.w(1), 0.0);
  EXPECT_EQ(w3.w(1), 0.0);
}

TEST(BarrierProfile, RejectsBadInputs) {
  try {
    barrier_profile(2, 2, 1, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::domain);
  }
  EXPECT_THROW(barrier_profile(2, 2, 1, -1), Error);
  EXPECT_THROW(barrier_profile(1, 2, 1, 1), Error);
  EXPECT_THROW(barrier_profile(2, 2, 0, 1), Error);
}

// Property: boundary data, monotonicity and the ODE invariant over random
// parameters, covering p < N, p = N and p > N.
TEST(BarrierProfile, InvariantsOnRandomParameters) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> P(1.2, 5), R(0.05, 3), M(0.01, 10);
  for (int k = 0; k < 300; ++k) {
    const double N = k % 3 == 0 ? 2 : 3;
    const double p = k % 5 == 0 ? N : P(rng);
    const double r = R(rng), m = M(rng);
    const auto w = barrier_profile(p, N, r, m);
    EXPECT_LT(w.A, 0);
    EXPECT_EQ(w.w(r), 0.0);
    EXPECT_NEAR(w.w(r / 2), m, 1e-12 * std::max(1.0, m) * 10);
    EXPECT_LE(profile_invariant_defect(w), 1e-9);
    for (int j = 0; j < 10; ++j) EXPECT_LT(w.dw(r / 2 * (1 + j / 9.0)), 0);
  }
}

TEST(BarrierField, Examples) {
  const GaugeAnnulus a(euclid_body(), {0, 0}, 1);
  const auto w = barrier_profile(2, 2, 1, 1);
  for (double th : {0.0, 1.0, 2.5, 4.0}) {
    EXPECT_NEAR(barrier_field(a, w, a.level_point(th, 1)), 0, 1e-14);
    EXPECT_NEAR(barrier_field(a, w, a.level_point(th, 0.5)), 1, 1e-14);
  }
  EXPECT_NEAR(barrier_field(a, w, {0.75, 0}), -std::log(0.75) / std::log(2.0), 1e-14);
  EXPECT_NEAR(barrier_field(a, w, {0, 0.75}), 0.4150, 1e-4);
  try {
    barrier_field(a, w, {0.2, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::domain);
  }
  EXPECT_THROW(barrier_field(a, w, {1.2, 0}), Error);
  EXPECT_THROW(barrier_field(a, barrier_profile(2, 2, 2, 1), {0.75, 0}), Error);
}

TEST(BarrierField, NonEvenGaugeIsAsymmetric) {
  const GaugeAnnulus a(shifted_body(), {0.3, -0.1}, 1);
  const auto w = barrier_profile(2, 2, 1, 1);
  const Vec2 d(0.3, 0.6);  // levels 0.52 and 0.82
  const double plus = barrier_field(a, w, a.x1 + d), minus = barrier_field(a, w, a.x1 - d);
  EXPECT_GT(std::abs(plus - minus), 0.1);
  // Euclidean is symmetric.
  const GaugeAnnulus e(euclid_body(), {0.3, -0.1}, 1);
  const Vec2 f(0.6, 0.2);
  EXPECT_NEAR(barrier_field(e, w, e.x1 + f), barrier_field(e, w, e.x1 - f), 1e-14);
}

TEST(AnnulusMesh, LevelSetsAreExact) {
  for (const auto& body : {euclid_body(), shifted_body(), ConvexBody::ell_r(4)}) {
    const GaugeAnnulus a(body, {0.2, 0.1}, 0.8);
    const Mesh m = annulus_mesh(a, 0.05);
    EXPECT_LE(m.max_edge(), 0.05 + 1e-12);
    EXPECT_GT(m.min_angle_deg(), 15);
    int nb = 0;
    for (std::size_t i = 0; i < m.n_nodes(); ++i) {
      const double s = a.level(m.nodes[i]);
      EXPECT_TRUE(a.contains(m.nodes[i], 1e-12));
      if (m.boundary[i]) {
        ++nb;
        EXPECT_NEAR(std::min(std::abs(s - 0.4), std::abs(s - 0.8)), 0, 1e-12);
      }
    }
    EXPECT_GT(nb, 0);
    for (std::size_t t = 0; t < m.n_tris(); ++t) EXPECT_GT(m.tri_area(t), 0);
  }
}

TEST(BarrierPde, ResidualDecreasesLikeH) {
  for (double p : {2.0, 3.0}) {
    const GaugeAnnulus a(euclid_body(), {0, 0}, 1);
    const auto w = barrier_profile(p, 2, 1, 1);
    double prev = 0;
    for (double h : {0.1, 0.05, 0.025}) {
      const double r = verify_barrier_pde(a, w, annulus_mesh(a, h));
      if (prev > 0) EXPECT_GE(prev / r, 1.8) << "p " << p << " h " << h;
      prev = r;
    }
    EXPECT_LT(prev, 1e-4);
  }
}

TEST(BarrierPde, ConstantFieldIsExact) {
  const GaugeAnnulus a(shifted_body(), {0, 0}, 1);
  BarrierProfile c = barrier_profile(2, 2, 1, 1);
  c.A = 0;
  c.B = 1;
  EXPECT_EQ(verify_barrier_pde(a, c, annulus_mesh(a, 0.1)), 0.0);
}

TEST(HopfTouching, Examples) {
  const ConvexDomain D = unit_disc();
  const Vec2 x0(std::cos(0.7), std::sin(0.7));
  const auto cfg = hopf_touching_config(D, x0, euclid_body(), 0.05);
  ASSERT_TRUE(cfg);
  EXPECT_NEAR((cfg->annulus.x1 - (x0 - cfg->annulus.r * x0)).norm(), 0, 1e-12);
  EXPECT_NEAR(cfg->annulus.level(x0), cfg->annulus.r, 1e-12);
  EXPECT_GT(cfg->margin, 0);

  const auto sh = hopf_touching_config(D, {1, 0}, shifted_body(), 0.05);
  ASSERT_TRUE(sh);
  EXPECT_GT(sh->margin, 0);
  EXPECT_NEAR(sh->annulus.level({1, 0}), sh->annulus.r, 1e-9);

  const ConvexDomain sq = ConvexDomain::polygon({{0, 0}, {1, 0}, {1, 1}, {0, 1}});
  EXPECT_FALSE(hopf_touching_config(sq, {1, 1}, euclid_body(), 0.05));
  EXPECT_TRUE(hopf_touching_config(sq, {0.5, 0}, euclid_body(), 0.05));
  EXPECT_THROW(hopf_touching_config(D, {0.5, 0}, euclid_body(), 0.05), Error);
}

TEST(HopfSlope, TorsionEigenAndZero) {
  const ConvexDomain D = unit_disc();
  const EnergyProblem P(Anisotropy(euclid_body(), 2), Reaction::constant(1, 2), D, triangulate(D, 0.05), quick());
  const auto u = minimize_J(P).field;
  const auto rep = hopf_slope_check(P.mesh, u, D);
  EXPECT_TRUE(rep.pass());
  EXPECT_GE(rep.min_slope, 0.4);
  EXPECT_LE(rep.min_slope, 0.5);

  const EnergyProblem E(Anisotropy(euclid_body(), 2), Reaction::eigen(1, 2), D, P.mesh, quick());
  EXPECT_GT(hopf_slope_check(E.mesh, rayleigh_eigen(E).field, D).min_slope, 0.1);

  const auto z = hopf_slope_check(P.mesh, Field(P.mesh.n_nodes(), 0.0), D);
  EXPECT_EQ(z.min_slope, 0.0);
  EXPECT_FALSE(z.pass());

  EXPECT_THROW(hopf_slope_check(triangulate(D, 0.3), Field(triangulate(D, 0.3).n_nodes(), 0.0), D), Error);
}

TEST(BarrierSandwich, TorsionAboveBarrier) {
  const ConvexDomain D = unit_disc();
  for (const auto& body : {euclid_body(), shifted_body()}) {
    const EnergyProblem P(Anisotropy(body, 2), Reaction::constant(1, 2), D, triangulate(D, 0.05), quick());
    const auto u = minimize_J(P).field;
    const auto cfg = hopf_touching_config(D, {0, -1}, body, 0.05);
    ASSERT_TRUE(cfg);
    const auto rep = barrier_sandwich(P, u, cfg->annulus);
    EXPECT_TRUE(rep.comparison.accepted) << rep.comparison.rejection;
    EXPECT_TRUE(rep.comparison.holds());
    EXPECT_GT(rep.region_nodes, 50);
  }
}
