// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
// Tolerances are fixed here and must not be tuned to the results.
#include "finsler/barrier.hpp"
#include "finsler/concavity.hpp"
#include "finsler/solver.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>

using namespace finsler;

namespace {

constexpr double kJ01Squared = 5.783185962946784;
constexpr double kSquareMax = 0.07367;  // max of the torsion function of the unit square

// Criterion 1.
constexpr double kTorsionDiscH = 0.02;
constexpr double kTorsionErrTol = 5e-3;
constexpr double kConcavityRelTol = 1e-4;  // times sup of the transformed field
constexpr double kTorsionRuntime = 60;     // seconds
// Criterion 2.
constexpr double kSquareRel = 0.02;
// Criterion 3.
constexpr double kEigenRel = 0.01;
// Criterion 4.
constexpr double kCrystallineH = 0.05;
constexpr double kResidualTol = 1e-4;
// Criterion 5.
constexpr double kOffsetMin = 1e-3;
// Criterion 7.
constexpr double kEuclidHessTol = 1e-6;
constexpr double kThetaVariation = 0.1;
// Criterion 8.
constexpr double kInvariantTol = 1e-9;
constexpr double kCoeffTol = 1e-12;
constexpr double kPdeOrder = 0.9;  // observed order per halving, O(h) up to noise
constexpr double kHopfSlope = 0.4;
// Criterion 9.
constexpr double kFinalIncrementRel = 1e-4;
constexpr double kLadderAgreeRel = 1e-3;
// Criterion 10.
constexpr double kPhiTol = 1e-9;
// Criterion 11.
constexpr int kIdentityTriples = 100000;
constexpr double kRoundingUlps = 64;  // identities hold to this many eps of the values involved

int failures = 0;

void report(int id, const std::string& name, bool ok, const std::string& detail) {
  std::printf("%s [%2d] %s: %s\n", ok ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  failures += !ok;
}

void criterion(int id, const std::string& name, const std::function<std::pair<bool, std::string>()>& body) {
  try {
    const auto [ok, detail] = body();
    report(id, name, ok, detail);
  } catch (const std::exception& e) {
    report(id, name, false, std::string("threw: ") + e.what());
  }
}

template <class... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double sup(const Field& u) {
  double m = 0;
  for (double x : u) m = std::max(m, std::abs(x));
  return m;
}

SolverOptions options() {
  SolverOptions o;
  o.check_existence = false;
  return o;
}

// Scan of phi(u) on the inner region with the default scan sizes.
ConcavityReport scan(const Mesh& mesh, const Field& u, const std::function<double(double)>& phi,
                     const ConvexDomain& region) {
  return max_concavity_violation(MeshFunction(mesh, transform_field(u, phi)), region, ConcavityOptions{});
}

const auto sqrt_fn = [](double t) { return std::sqrt(t); };
const auto log_fn = [](double t) { return std::log(t); };

// Independent oracle: double sine series of the unit-square torsion function
// at the centre, 16/pi^4 sum over odd m, n of (-1)^{(m+n)/2-1} / (m n (m^2 + n^2)).
double square_torsion_center() {
  double s = 0;
  for (int m = 1; m < 2001; m += 2)
    for (int n = 1; n < 2001; n += 2) {
      const double sign = ((m + n) / 2 - 1) % 2 == 0 ? 1.0 : -1.0;
      s += sign / (static_cast<double>(m) * n * (static_cast<double>(m) * m + static_cast<double>(n) * n));
    }
  return 16 / std::pow(kPi, 4) * s;
}

ConvexDomain unit_disc() { return ConvexDomain::disc({0, 0}, 1); }
ConvexDomain unit_square() { return ConvexDomain::polygon({{0, 0}, {1, 0}, {1, 1}, {0, 1}}); }

}  // namespace

int main() {
  const ConvexDomain disc = unit_disc();
  const Mesh disc_mesh = triangulate(disc, kTorsionDiscH);
  const Anisotropy euclid(ConvexBody::disc({0, 0}, 1), 2);

  // Shared by criteria 1 and 8.
  Field torsion;
  criterion(1, "torsion disc", [&] {
    const auto t0 = std::chrono::steady_clock::now();
    const EnergyProblem P(euclid, Reaction::constant(1, 2), disc, disc_mesh, options());
    const SolveResult r = minimize_J(P);
    double err = 0;
    for (std::size_t i = 0; i < P.mesh.n_nodes(); ++i)
      err = std::max(err, std::abs(r.field[i] - (1 - P.mesh.nodes[i].squaredNorm()) / 4));
    const auto rep = scan(P.mesh, r.field, sqrt_fn, inner_domain(disc, 0.05));
    const double secs = seconds_since(t0);
    torsion = r.field;
    const bool ok = err <= kTorsionErrTol && rep.max_violation <= kConcavityRelTol * rep.sup_norm &&
                    secs <= kTorsionRuntime;
    return std::pair{ok, fmt("max err %.3e (<= %.0e), sqrt(u) violation %.3e (<= %.3e), %.1f s (<= %.0f s)", err,
                             kTorsionErrTol, rep.max_violation, kConcavityRelTol * rep.sup_norm, secs,
                             kTorsionRuntime)};
  });

  criterion(2, "torsion square", [&] {
    const double oracle = square_torsion_center();
    const ConvexDomain sq = unit_square();
    const EnergyProblem P(euclid, Reaction::constant(1, 2), sq, triangulate(sq, kTorsionDiscH), options());
    const SolveResult r = minimize_J(P);
    const double m = sup(r.field);
    const auto rep = scan(P.mesh, r.field, sqrt_fn, inner_domain(sq, 0.05));
    const bool ok = std::abs(oracle - kSquareMax) <= 1e-5 && std::abs(m - kSquareMax) <= kSquareRel * kSquareMax &&
                    rep.max_violation <= kConcavityRelTol * rep.sup_norm;
    return std::pair{ok, fmt("max u %.5f vs %.5f (series %.6f), sqrt(u) violation %.3e (<= %.3e)", m, kSquareMax,
                             oracle, rep.max_violation, kConcavityRelTol * rep.sup_norm)};
  });

  // Shared by criteria 3 and 6.
  Field eigen;
  criterion(3, "eigenvalue disc", [&] {
    const EnergyProblem P(euclid, Reaction::eigen(1, 2), disc, disc_mesh, options());
    const SolveResult r = rayleigh_eigen(P);
    eigen = r.field;
    const auto rep = scan(P.mesh, r.field, log_fn, inner_domain(disc, 0.05));
    const double rel = std::abs(r.eigenvalue - kJ01Squared) / kJ01Squared;
    const bool ok = rel <= kEigenRel && rep.passed;
    return std::pair{ok, fmt("lambda1 %.5f (rel err %.2e <= %.0e), log u violation %.3e (tol %.3e)", r.eigenvalue,
                             rel, kEigenRel, rep.max_violation, rep.tol)};
  });

  // Shared by criteria 4 and 9.
  const ConvexDomain sq = unit_square();
  const Mesh sq_coarse = triangulate(sq, kCrystallineH);
  const Anisotropy crystal(ConvexBody::ell_r(kInf), 2);
  SolveResult ladder;
  criterion(4, "crystalline torsion", [&] {
    const EnergyProblem P(crystal, Reaction::constant(1, 2), sq, sq_coarse, options());
    ladder = minimize_J(P);
    const auto rep = scan(P.mesh, ladder.field, sqrt_fn, inner_domain(sq, 0.05));
    const bool ok = ladder.residual <= kResidualTol && rep.passed;
    return std::pair{ok, fmt("%zu ladder stages, residual_EL %.3e (<= %.0e), sqrt(u) violation %.3e (tol %.3e)",
                             ladder.ladder.size(), ladder.residual, kResidualTol, rep.max_violation, rep.tol)};
  });

  criterion(5, "non-even anisotropy", [&] {
    const ConvexBody K = ConvexBody::disc({0.5, 0}, 1);
    const double plus = K.gauge({1, 0}), minus = K.gauge({-1, 0});
    const EnergyProblem P(Anisotropy(K, 2), Reaction::constant(1, 2), disc, disc_mesh, options());
    const SolveResult r = minimize_J(P);
    const auto rep = scan(P.mesh, r.field, sqrt_fn, inner_domain(disc, 0.05));
    // Centre of mass of u against the domain centre, by the vertex rule.
    const auto& m = P.lumped_mass();
    double mass = 0;
    Vec2 c = Vec2::Zero();
    for (std::size_t i = 0; i < m.size(); ++i) mass += m[i] * r.field[i], c += m[i] * r.field[i] * P.mesh.nodes[i];
    const double offset = (c / mass).norm();
    const bool ok = std::abs(plus - 2.0 / 3) <= 1e-12 && std::abs(minus - 2) <= 1e-12 &&
                    r.residual <= kResidualTol && rep.passed && offset > kOffsetMin;
    return std::pair{ok, fmt("Phi(z) %.6f, Phi(-z) %.6f, residual %.2e, sqrt(u) violation %.3e (tol %.3e), "
                             "offset %.4f (> %.0e)",
                             plus, minus, r.residual, rep.max_violation, rep.tol, offset, kOffsetMin)};
  });

  criterion(6, "untransformed eigenfunction", [&] {
    if (eigen.empty()) throw Error(ErrorKind::precondition, "eigen solve failed");
    const auto rep = max_concavity_violation(MeshFunction(disc_mesh, eigen), inner_domain(disc, 0.05), {});
    return std::pair{rep.max_violation > 0, fmt("u violation %.3e (> 0; scan tol %.3e, %s)", rep.max_violation,
                                                rep.tol, rep.passed ? "within it" : "above it")};
  });

  criterion(7, "Hessian probes", [&] {
    const HessianProbe e = hessian_probe_Hp2(euclid);
    const RegularizedAnisotropy reg = mollify_regularize(crystal, 1e-2);
    const HessianProbe s = hessian_probe_Hp2(reg);
    const std::vector<double> thetas = {1e-3, 1e-2, 1e-1, 1.0};
    const ThetaProbe te = hessian_probe_H_theta(euclid, thetas, 32, kThetaVariation);
    const ThetaProbe ts = hessian_probe_H_theta(reg, thetas, 32, kThetaVariation);
    const double var = std::max({te.lambda_variation, te.Lambda_variation, ts.lambda_variation, ts.Lambda_variation});
    const bool ok = std::abs(e.lambda_hat - 2) <= kEuclidHessTol && std::abs(e.Lambda_hat - 2) <= kEuclidHessTol &&
                    s.lambda_hat > 0 && !s.degenerate && var < kThetaVariation && te.theta_independent &&
                    ts.theta_independent;
    return std::pair{ok, fmt("|z|^2: lambda %.9f Lambda %.9f; reg |z|_inf^2: lambda %.4f; theta variation %.4f (< %.2f)",
                             e.lambda_hat, e.Lambda_hat, s.lambda_hat, var, kThetaVariation)};
  });

  criterion(8, "barrier suite", [&] {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> P(1.2, 5), R(0.05, 3), M(0.01, 10);
    double defect = 0;
    for (int k = 0; k < 1000; ++k) {
      const double p = k % 4 == 0 ? 2.0 : P(rng);
      defect = std::max(defect, profile_invariant_defect(barrier_profile(p, 2, R(rng), M(rng))));
    }
    const double dA = std::abs(barrier_profile(2, 2, 1, 1).A + 1 / std::log(2.0));
    double order = kInf;
    for (const ConvexBody& K : {ConvexBody::disc({0, 0}, 1), ConvexBody::disc({0.5, 0}, 1)})
      for (double p : {2.0, 3.0}) {
        const GaugeAnnulus a(K, {0, 0}, 1);
        const auto w = barrier_profile(p, 2, 1, 1);
        double prev = 0;
        for (double h : {0.1, 0.05, 0.025}) {
          const double res = verify_barrier_pde(a, w, annulus_mesh(a, h));
          if (prev > 0) order = std::min(order, std::log2(prev / res));
          prev = res;
        }
      }
    if (torsion.empty()) throw Error(ErrorKind::precondition, "torsion solve failed");
    const EnergyProblem Pt(euclid, Reaction::constant(1, 2), disc, disc_mesh, options());
    const auto touch = hopf_touching_config(disc, {0, -1}, euclid.body(), kTorsionDiscH);
    if (!touch) throw Error(ErrorKind::resolution, "no touching annulus");
    const SandwichReport sw = barrier_sandwich(Pt, torsion, touch->annulus);
    const HopfReport hopf = hopf_slope_check(disc_mesh, torsion, disc);
    const bool ok = defect <= kInvariantTol && dA <= kCoeffTol && order >= kPdeOrder && sw.comparison.holds() &&
                    hopf.min_slope >= kHopfSlope;
    return std::pair{ok, fmt("invariant %.1e, |A + 1/log 2| %.1e, PDE order >= %.2f, sandwich %s (%d nodes), "
                             "Hopf slope %.4f (>= %.1f)",
                             defect, dA, order, sw.comparison.holds() ? "holds" : "fails", sw.region_nodes,
                             hopf.min_slope, kHopfSlope)};
  });

  criterion(9, "regularization ladder", [&] {
    if (ladder.field.empty()) throw Error(ErrorKind::precondition, "crystalline solve failed");
    bool decreasing = true;
    for (std::size_t k = 1; k < ladder.increments.size(); ++k)
      decreasing = decreasing && ladder.increments[k] < ladder.increments[k - 1];
    const double norm = sup(ladder.field);
    const double last = ladder.increments.empty() ? kInf : ladder.increments.back();
    double gap = kInf;
    for (double eps : ladder.ladder) gap = std::min(gap, mollify_regularize(crystal, eps).min_envelope_gap());
    SolverOptions o = options();
    o.eps0 = 0.05;
    const SolveResult other = minimize_J(EnergyProblem(crystal, Reaction::constant(1, 2), sq, sq_coarse, o));
    double diff = 0;
    for (std::size_t i = 0; i < other.field.size(); ++i) diff = std::max(diff, std::abs(other.field[i] - ladder.field[i]));
    const bool ok = decreasing && last <= kFinalIncrementRel * norm && gap >= 0 && diff <= kLadderAgreeRel * norm;
    return std::pair{ok, fmt("increments %s, final %.2e (<= %.2e), min H_n - H %.2e, ladders differ by %.2e (<= %.2e)",
                             decreasing ? "decreasing" : "NOT decreasing", last, kFinalIncrementRel * norm, gap, diff,
                             kLadderAgreeRel * norm)};
  });

  criterion(10, "reaction suite", [&] {
    double trip = 0, closed = 0;
    const std::vector<Reaction> rs = {Reaction::constant(1, 2), Reaction::power(1.5, 1.5, 2), Reaction::power(2, 1.5, 3),
                                      Reaction::eigen(2, 2), Reaction::eigen(1, 3), Reaction::affine_cutoff(1, 2)};
    for (const Reaction& r : rs) {
      const PhiTransform T(r);
      const double tmax = std::isfinite(r.Mf()) ? r.Mf() : 20.0;
      for (int k = 1; k <= 200; ++k) {
        const double t = tmax * k / 200.0;
        const double s = T.phi(t);
        trip = std::max(trip, std::abs(T.psi(s) - t) / (1 + t));
        if (const auto c = T.phi_closed_form(t)) closed = std::max(closed, std::abs(*c - s) / (1 + std::abs(s)));
      }
    }
    // F = t and F = t^q: f = 1 and f = q t^{q-1}.
    bool lemma = true;
    for (const Reaction& r : {Reaction::constant(1, 2), Reaction::power(1, 1, 2), Reaction::power(1.5, 1.5, 2),
                              Reaction::constant(1, 3), Reaction::power(1.5, 1.5, 3)}) {
      const PhiTransform T(r);
      const double lo = T.phi(1e-3), hi = T.phi(10.0);
      std::vector<double> grid(1000);
      for (int i = 0; i < 1000; ++i) grid[i] = lo + (hi - lo) * i / 999.0;
      lemma = lemma && check_lemmavarphi(T, grid).pass();
    }
    bool b_exact = true;
    for (double p : {1.5, 2.0, 3.0, 4.5})
      for (double eps : {0.0, 1e-3, 0.1, 0.5}) {
        const Anisotropy H(ConvexBody::disc({0.2, -0.1}, 1), p);
        b_exact = b_exact && b_eps(H, Vec2::Zero(), eps) == p - std::pow(eps, p / 2);
      }
    const bool ok = trip <= kPhiTol && closed <= kPhiTol && lemma && b_exact;
    return std::pair{ok, fmt("round trip %.2e, closed form %.2e (<= %.0e), lemma grids %s, b_eps(0) %s", trip, closed,
                             kPhiTol, lemma ? "pass" : "fail", b_exact ? "exact" : "inexact")};
  });

  criterion(11, "concavity-function identities", [&] {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> U(0, 1), C(-2, 2);
    const PlaneFn v = [](const Vec2& x) { return std::sin(3 * x.x()) * std::exp(x.y()) - x.squaredNorm(); };
    const double ulp = std::numeric_limits<double>::epsilon();
    double sym = 0, aff = 0;
    long zeros_broken = 0;
    for (int k = 0; k < kIdentityTriples; ++k) {
      const Vec2 x(C(rng), C(rng)), y(C(rng), C(rng));
      const double t = U(rng), a = C(rng), b = C(rng), c = C(rng);
      const PlaneFn w = [&](const Vec2& z) { return v(z) + a * z.x() + b * z.y() + c; };
      const Vec2 m = t * x + (1 - t) * y;
      const double scale = std::abs(v(x)) + std::abs(v(y)) + std::abs(v(m)) + std::abs(w(x)) + std::abs(w(y)) +
                           std::abs(w(m));
      const double cv = concavity_function(v, x, y, t);
      sym = std::max(sym, std::abs(cv - concavity_function(v, y, x, 1 - t)) / (ulp * scale));
      aff = std::max(aff, std::abs(cv - concavity_function(w, x, y, t)) / (ulp * scale));
      zeros_broken += concavity_function(v, x, x, t) != 0.0 || concavity_function(v, x, y, 0.0) != 0.0 ||
                      concavity_function(v, x, y, 1.0) != 0.0;
    }
    const bool ok = sym <= kRoundingUlps && aff <= kRoundingUlps && zeros_broken == 0;
    return std::pair{ok, fmt("%d triples: symmetry %.1f ulp, affine %.1f ulp (<= %.0f), endpoint zeros broken %ld",
                             kIdentityTriples, sym, aff, kRoundingUlps, zeros_broken)};
  });

  std::printf("%s: %d of 11 criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures == 0 ? 0 : 1;
}
