#include "finsler/concavity.hpp"
#include "finsler/solver.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <cmath>
#include <random>
#include <sstream>

using namespace finsler;

namespace {

constexpr double kJ01 = 2.404825557695773;

ConvexDomain unit_disc() { return ConvexDomain::disc({0, 0}, 1); }
Anisotropy euclid(double p = 2) { return Anisotropy(ConvexBody::disc({0, 0}, 1), p); }

double sqrt_torsion(const Vec2& x) { return std::sqrt(std::max(0.0, 1 - x.squaredNorm()) / 4); }

ConcavityOptions small_scan(double tol = -1) {
  ConcavityOptions o;
  o.n_pairs = 2000;
  o.n_t = 9;
  o.tol = tol;
  return o;
}

Vec2 random_point(std::mt19937_64& rng, double r = 1.0) {
  std::uniform_real_distribution<double> U(-r, r);
  return {U(rng), U(rng)};
}

}  // namespace

TEST(ConcavityFunction, Examples) {
  const PlaneFn lin = [](const Vec2& x) { return 3 * x.x() - 2 * x.y() + 1; };
  EXPECT_NEAR(concavity_function(lin, {0.1, 0.2}, {-0.5, 0.7}, 0.3), 0.0, 1e-15);
  const PlaneFn neg = [](const Vec2& x) { return -x.squaredNorm(); };
  const PlaneFn pos = [](const Vec2& x) { return x.squaredNorm(); };
  EXPECT_DOUBLE_EQ(concavity_function(neg, {0, 0}, {1, 0}, 0.5), -0.25);
  EXPECT_DOUBLE_EQ(concavity_function(pos, {0, 0}, {1, 0}, 0.5), 0.25);
}

TEST(ConcavityFunction, OutsideDomainThrows) {
  const PlaneFn v = [](const Vec2& x) { return x.x(); };
  try {
    concavity_function(v, unit_disc(), {0, 0}, {1.5, 0}, 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::domain);
  }
  EXPECT_THROW(concavity_function(v, unit_disc(), {0, 0}, {0.5, 0}, 1.5), Error);
}

// Property: the algebraic identities of c_v on random triples.
TEST(ConcavityFunction, Identities) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(0, 1);
  const PlaneFn v = [](const Vec2& x) { return std::sin(3 * x.x()) * std::exp(x.y()) - x.squaredNorm(); };
  for (int k = 0; k < 2000; ++k) {
    const Vec2 x = random_point(rng), y = random_point(rng);
    const double t = U(rng);
    const double a = 2 * U(rng) - 1, b = 2 * U(rng) - 1, c = 2 * U(rng) - 1;
    const PlaneFn w = [&](const Vec2& z) { return v(z) + a * z.x() + b * z.y() + c; };
    const double cv = concavity_function(v, x, y, t);
    EXPECT_NEAR(cv, concavity_function(v, y, x, 1 - t), 1e-14);
    EXPECT_NEAR(concavity_function(w, x, y, t), cv, 1e-13);
    EXPECT_EQ(concavity_function(v, x, x, t), 0.0);
    EXPECT_EQ(concavity_function(v, x, y, 0.0), 0.0);
    EXPECT_EQ(concavity_function(v, x, y, 1.0), 0.0);
  }
}

TEST(MaxViolation, SqrtTorsionClosedForm) {
  const ConvexDomain region = inner_domain(unit_disc(), 0.05);
  const auto rep = max_concavity_violation(sqrt_torsion, region, small_scan(0));
  EXPECT_LE(rep.max_violation, 1e-6 * rep.sup_norm);
  EXPECT_GT(rep.n_evaluated, 0);
  EXPECT_EQ(rep.n_skipped, 0);
}

TEST(MaxViolation, EigenfunctionIsNotConcave) {
  const PlaneFn u = [](const Vec2& x) { return std::cyl_bessel_j(0.0, kJ01 * std::min(1.0, x.norm())); };
  const auto rep = max_concavity_violation(u, unit_disc(), small_scan(0));
  EXPECT_GT(rep.max_violation, 1e-3);
  EXPECT_FALSE(rep.passed);
  // The worst triple reproduces its value.
  EXPECT_DOUBLE_EQ(concavity_function(u, rep.worst.x, rep.worst.y, rep.worst.t), rep.max_violation);
}

TEST(MaxViolation, ConcaveHatOnMesh) {
  const Mesh m = triangulate(unit_disc(), 0.1);
  std::vector<double> vals(m.n_nodes());
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = 1 - m.nodes[i].norm();
  const MeshFunction v(m, vals);
  for (std::size_t i = 0; i < m.n_nodes(); i += 37) EXPECT_NEAR(v(m.nodes[i]), vals[i], 1e-14);
  const auto rep = max_concavity_violation(v, inner_domain(unit_disc(), 0.05), small_scan());
  // Triangles at the apex see a steeper interpolated slope than 1.
  EXPECT_GE(rep.lipschitz, 1.0 - 1e-9);
  EXPECT_LE(rep.lipschitz, 1.2);
  EXPECT_GT(rep.tol, 0);
  EXPECT_TRUE(rep.passed) << rep.max_violation << " vs " << rep.tol;
}

TEST(MaxViolation, Deterministic) {
  const auto a = max_concavity_violation(sqrt_torsion, unit_disc(), small_scan(0));
  const auto b = max_concavity_violation(sqrt_torsion, unit_disc(), small_scan(0));
  std::ostringstream ja, jb;
  write_concavity_json(a, ja);
  write_concavity_json(b, jb);
  EXPECT_EQ(ja.str(), jb.str());
  auto other = small_scan(0);
  other.seed = 2;
  const auto c = max_concavity_violation(sqrt_torsion, unit_disc(), other);
  EXPECT_NE(a.worst.x, c.worst.x);
}

// Property: a concave increasing transform of a concave field stays concave.
TEST(MaxViolation, MonotoneTransformSanity) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(0.2, 2.0);
  for (int trial = 0; trial < 5; ++trial) {
    const double a = U(rng), b = U(rng);
    const PlaneFn v = [=](const Vec2& x) { return 3 - a * x.x() * x.x() - b * x.y() * x.y(); };
    const PlaneFn w = [=](const Vec2& x) { return std::log(v(x)); };
    const auto rv = max_concavity_violation(v, unit_disc(), small_scan(1e-12));
    const auto rw = max_concavity_violation(w, unit_disc(), small_scan(1e-12));
    EXPECT_TRUE(rv.passed);
    EXPECT_TRUE(rw.passed) << rw.max_violation;
  }
}

TEST(MaxViolation, ExcludedNodesAreSkipped) {
  const Mesh m = triangulate(unit_disc(), 0.1);
  std::vector<double> u(m.n_nodes());
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = m.boundary[i] ? 0.0 : (1 - m.nodes[i].squaredNorm()) / 4;
  const auto v = transform_field(u, [](double t) { return std::log(t); });
  for (std::size_t i = 0; i < u.size(); ++i) EXPECT_EQ(std::isnan(v[i]), m.boundary[i] != 0);
  const auto rep = max_concavity_violation(MeshFunction(m, v), unit_disc(), small_scan());
  EXPECT_GT(rep.n_skipped, 0);
  EXPECT_GT(rep.n_evaluated, 0);
}

TEST(ConcavityReport, JsonAndCsv) {
  const auto rep = max_concavity_violation(sqrt_torsion, unit_disc(), small_scan(0));
  std::ostringstream js, cs;
  write_concavity_json(rep, js);
  write_triples_csv(rep, cs);
  const auto j = nlohmann::json::parse(js.str());
  EXPECT_DOUBLE_EQ(j["max_violation"].get<double>(), rep.max_violation);
  EXPECT_EQ(j["refined"].size(), rep.refined.size());
  const std::string csv = cs.str();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "x1,x2,y1,y2,t,value");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), static_cast<long>(rep.refined.size()) + 1);
}

TEST(HarmonicConcave, Examples) {
  const auto id = harmonic_concave_scan([](double x) { return x; }, 0.1, 5, 50);
  EXPECT_TRUE(id.pass);
  EXPECT_EQ(id.n_checked, 50 * 49 / 2);
  const auto c = harmonic_concave_scan([](double) { return 2.5; }, -1, 1, 20);
  EXPECT_TRUE(c.pass);
  EXPECT_NEAR(c.worst, 0.0, 1e-14);
  const auto sq = harmonic_concave_check([](double x) { return x * x; }, {{1.0, 2.0}});
  EXPECT_TRUE(sq.pass);
  EXPECT_DOUBLE_EQ(sq.worst, 11.25 - 8);
  EXPECT_TRUE(harmonic_concave_scan([](double x) { return x * x; }, 1, 2, 40).pass);
  // 1/x is harmonic-affine; 1/sqrt(x) is not harmonic concave since sqrt is concave.
  EXPECT_TRUE(harmonic_concave_scan([](double x) { return 1 / x; }, 1, 3, 30, 1e-12).pass);
  EXPECT_FALSE(harmonic_concave_scan([](double x) { return 1 / std::sqrt(x); }, 1, 3, 30).pass);
  // Pairs with g(x) + g(y) <= 0 are ignored.
  EXPECT_EQ(harmonic_concave_check([](double x) { return -x; }, {{1.0, 2.0}}).n_checked, 0);
}

TEST(BEps, Examples) {
  const Anisotropy H = euclid(2);
  EXPECT_DOUBLE_EQ(b_eps(H, {0, 0}, 0.01), 1.99);
  EXPECT_NEAR(b_eps(H, {1, 0}, 0.1), 2.9, 1e-14);
  const Anisotropy H3 = euclid(3);
  EXPECT_DOUBLE_EQ(b_eps(H3, {0, 0}, 0.04), 3 - 0.008);
  // Against the formula written out for p = 3.
  const Vec2 z(0.3, -0.4);
  const double Hq = std::pow(std::pow(0.5, 3), 2.0 / 3);
  EXPECT_NEAR(b_eps(H3, z, 0.04), 3 + (2 * Hq - 0.04) * std::sqrt(0.04 + Hq), 1e-13);
}

TEST(Kennington, TorsionAndEigen) {
  std::vector<double> grid;
  for (int k = 0; k < 200; ++k) grid.push_back(0.05 + 0.9 * k / 199.0);
  const PhiTransform torsion(Reaction::constant(1, 2));
  const auto rt = kennington_hypothesis_check(euclid(), torsion, grid, 0.01);
  EXPECT_TRUE(rt.pass()) << rt.worst_increase;
  EXPECT_DOUBLE_EQ(rt.b0, 1.99);
  EXPECT_GT(rt.min_b, 0);

  std::vector<double> sgrid;
  for (int k = 0; k < 200; ++k) sgrid.push_back(-3 + 2.9 * k / 199.0);
  const PhiTransform eig(Reaction::eigen(5.78, 2));
  const auto re = kennington_hypothesis_check(euclid(), eig, sgrid, 0.01);
  EXPECT_TRUE(re.ratio_non_increasing);
  EXPECT_NEAR(re.worst_increase, 0.0, 1e-12);
}

TEST(Korevaar, SqrtTorsionPassesLinearFails) {
  const Mesh m = triangulate(unit_disc(), 0.05);
  std::vector<double> u(m.n_nodes()), lin(m.n_nodes());
  for (std::size_t i = 0; i < u.size(); ++i) {
    u[i] = m.boundary[i] ? 0.0 : (1 - m.nodes[i].squaredNorm()) / 4;
    lin[i] = 1 + 0.3 * m.nodes[i].x();
  }
  const auto v = transform_field(u, [](double t) { return std::sqrt(t); });
  const auto rep = korevaar_boundary_check(MeshFunction(m, v), unit_disc(), 0.1);
  EXPECT_TRUE(rep.pass()) << rep.summary();
  EXPECT_GT(rep.hessian_margin, 0);
  EXPECT_GT(rep.plane_margin, 0);
  EXPECT_GE(rep.hessian_samples, 8);

  const auto rl = korevaar_boundary_check(MeshFunction(m, lin), unit_disc(), 0.1);
  EXPECT_FALSE(rl.hessian_pass);
  EXPECT_FALSE(rl.plane_pass);
  EXPECT_FALSE(rl.pass());
}

TEST(Korevaar, CoarseMeshIsResolutionError) {
  const Mesh m = triangulate(unit_disc(), 0.3);
  std::vector<double> v(m.n_nodes(), 1.0);
  try {
    korevaar_boundary_check(MeshFunction(m, v), unit_disc(), 0.02);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::resolution);
  }
}

TEST(Korevaar, LogEigenfunction) {
  SolverOptions opt;
  opt.check_existence = false;
  const ConvexDomain D = unit_disc();
  const EnergyProblem P(euclid(), Reaction::eigen(1, 2), D, triangulate(D, 0.05), opt);
  const auto res = rayleigh_eigen(P);
  const auto v = transform_field(res.field, [](double t) { return std::log(t); });
  const auto rep = korevaar_boundary_check(MeshFunction(P.mesh, v), D, 0.1);
  EXPECT_TRUE(rep.pass()) << rep.summary();
}

TEST(QuadraticFit, ExactOnQuadratics) {
  const Mesh m = triangulate(unit_disc(), 0.1);
  std::vector<double> vals(m.n_nodes());
  for (std::size_t i = 0; i < vals.size(); ++i) {
    const Vec2& x = m.nodes[i];
    vals[i] = 1 + 2 * x.x() - x.y() + 0.5 * x.x() * x.x() - 3 * x.x() * x.y() + 2 * x.y() * x.y();
  }
  const MeshFunction v(m, vals);
  const auto fit = quadratic_fit(v, {0.2, 0.1}, m.node_neighbours());
  EXPECT_NEAR(fit.value, 1 + 0.4 - 0.1 + 0.02 - 0.06 + 0.02, 1e-10);
  EXPECT_NEAR(fit.grad.x(), 2 + 0.2 - 0.3, 1e-9);
  EXPECT_NEAR(fit.grad.y(), -1 - 0.6 + 0.4, 1e-9);
  EXPECT_NEAR(fit.hess(0, 0), 1, 1e-8);
  EXPECT_NEAR(fit.hess(0, 1), -3, 1e-8);
  EXPECT_NEAR(fit.hess(1, 1), 4, 1e-8);
}
