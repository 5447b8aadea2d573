#pragma once

#include "finsler/anisotropy.hpp"
#include "finsler/domain.hpp"
#include "finsler/solver.hpp"

#include <optional>
#include <string>
#include <vector>

namespace finsler {

/// A_r + x1 = {x : r > rho(x - x1) > r/2}, where rho(y) = Phi°(-y) is the
/// reversed polar gauge of the body.
struct GaugeAnnulus {
  GaugeAnnulus(ConvexBody body, Vec2 x1, double r);

  ConvexBody body;
  Vec2 x1;
  double r;

  double reversed_polar(const Vec2& y) const { return body.support(-y); }
  /// rho(x - x1).
  double level(const Vec2& x) const { return reversed_polar(x - x1); }
  bool contains(const Vec2& x, double tol = 0.0) const;
  /// Point x1 + s * gamma(theta), where gamma(theta) is the ray direction
  /// theta scaled onto {rho = 1}.
  Vec2 level_point(double theta, double s) const;
};

/// w(t) = A/(p-N) t^{(p-N)/(p-1)} + B, or A log t + B when p = N, with
/// w(r/2) = m and w(r) = 0.
struct BarrierProfile {
  double p = 2, N = 2, r = 1, m = 1;
  double A = 0, B = 0;

  double w(double t) const;
  double dw(double t) const;
  /// (-w'(t))^{p-1} t^{N-1}, constant in t.
  double invariant(double t) const;
};

BarrierProfile barrier_profile(double p, double N, double r, double m);

/// Largest relative deviation of the invariant over n points of [r/2, r].
double profile_invariant_defect(const BarrierProfile& w, int n = 1001);

/// w(rho(x - x1)); domain error outside the closed annulus.
double barrier_field(const GaugeAnnulus& a, const BarrierProfile& w, const Vec2& x);
/// Nodal barrier values. Nodes inside the hole get m, nodes outside get 0.
Field barrier_nodal(const GaugeAnnulus& a, const BarrierProfile& w, const Mesh& mesh);

/// Polar mesh in gauge coordinates: rings at levels r/2 .. r, rays through
/// gamma(theta). Both level sets are flagged as boundary.
Mesh annulus_mesh(const GaugeAnnulus& a, double h);

/// max over interior nodes i of |int (DH(Dw)/p, D phi_i)| / int |D phi_i|
/// for the interpolated barrier. H defaults to Phi^p of the annulus body.
double verify_barrier_pde(const GaugeAnnulus& a, const BarrierProfile& w, const Mesh& mesh,
                          const Integrand* H = nullptr);

struct TouchingConfig {
  GaugeAnnulus annulus;
  double margin = 0;  // min distance to the boundary of Omega away from x0
};

/// Shrinks r from diam(Omega) until x1 + closure(A_r) lies in Omega and
/// meets its boundary only at x0. Returns nothing below r_floor, or when x0
/// is a polygon vertex.
std::optional<TouchingConfig> hopf_touching_config(const ConvexDomain& omega, const Vec2& x0,
                                                   const ConvexBody& body, double r_floor);

struct HopfReport {
  double min_slope = kInf;
  double mean_slope = 0;
  Vec2 worst = Vec2::Zero();
  int n_samples = 0;
  double step = 0;
  bool pass() const { return min_slope > 0; }
};

/// u(x0 + s n) / s at boundary samples x0 with s = 2h and n the inward normal.
/// Polygon vertices closer than 2s are skipped.
HopfReport hopf_slope_check(const Mesh& mesh, const Field& u, const ConvexDomain& omega, int n_samples = 64);

struct SandwichReport {
  ComparisonReport comparison;
  BarrierProfile profile;
  int region_nodes = 0;
};

/// Barrier on `a` with m = 0.9 min u over the inner level set, compared
/// nodally with u on the closed annulus.
SandwichReport barrier_sandwich(const EnergyProblem& problem, const Field& u, const GaugeAnnulus& a);

}  // namespace finsler
