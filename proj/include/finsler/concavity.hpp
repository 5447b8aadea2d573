#pragma once

#include "finsler/anisotropy.hpp"
#include "finsler/domain.hpp"
#include "finsler/reaction.hpp"

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

namespace finsler {

using PlaneFn = std::function<double(const Vec2&)>;

/// P1 interpolant of nodal values. NaN nodal values mark excluded nodes;
/// evaluating next to one, or outside the mesh, throws a domain error.
class MeshFunction {
 public:
  MeshFunction(const Mesh& mesh, std::vector<double> values);
  double operator()(const Vec2& x) const;
  const Mesh& mesh() const { return *mesh_; }
  const std::vector<double>& values() const { return values_; }
  /// Largest |grad| over triangles whose vertices all lie in `region` and
  /// are not excluded.
  double lipschitz(const ConvexDomain& region) const;
  double sup_norm() const;

 private:
  const Mesh* mesh_;
  std::vector<double> values_;
  Locator locator_;
};

/// Nodal phi(u); nodes with u < floor_rel * max u become NaN (excluded).
std::vector<double> transform_field(const std::vector<double>& u, const std::function<double(double)>& phi,
                                    double floor_rel = 1e-8);

/// c_v(x, y, t) = t v(x) + (1 - t) v(y) - v(t x + (1 - t) y).
double concavity_function(const PlaneFn& v, const Vec2& x, const Vec2& y, double t);
/// Same, with a domain error when x or y leaves omega.
double concavity_function(const PlaneFn& v, const ConvexDomain& omega, const Vec2& x, const Vec2& y, double t);

struct Triple {
  Vec2 x = Vec2::Zero(), y = Vec2::Zero();
  double t = 0;
  double value = -kInf;
};

struct ConcavityOptions {
  int n_pairs = 20000;
  int n_t = 17;
  std::uint64_t seed = 1;
  int n_refine = 16;
  double tol = -1;          // < 0: tol_factor * h * Lip(v) for mesh functions
  double tol_factor = 0.1;
};

struct ConcavityReport {
  double max_violation = -kInf;
  Triple worst;
  std::vector<Triple> refined;  // the refined candidates, worst first
  int n_pairs = 0;
  int n_t = 0;
  long n_evaluated = 0;
  long n_skipped = 0;  // triples touching excluded nodes
  double tol = 0;
  double lipschitz = 0;
  double sup_norm = 0;  // max |v| over evaluated points
  bool passed = false;
  std::string boundary_summary;
};

/// Quasi-random pairs in `region` times a uniform t-grid, then coordinate
/// ascent from the worst n_refine triples.
ConcavityReport max_concavity_violation(const PlaneFn& v, const ConvexDomain& region,
                                        const ConcavityOptions& opt = {});
ConcavityReport max_concavity_violation(const MeshFunction& v, const ConvexDomain& region,
                                        const ConcavityOptions& opt = {});

void write_concavity_json(const ConcavityReport& r, std::ostream& out);
void write_triples_csv(const ConcavityReport& r, std::ostream& out);

struct HarmonicReport {
  bool pass = true;
  double worst = kInf;  // min of (g(x)+g(y)) g((x+y)/2) - 2 g(x) g(y)
  double x = 0, y = 0;
  int n_checked = 0;
};

/// (g(x)+g(y)) g((x+y)/2) >= 2 g(x) g(y) on pairs with g(x)+g(y) > 0.
HarmonicReport harmonic_concave_check(const std::function<double(double)>& g,
                                      const std::vector<std::pair<double, double>>& pairs, double tol = 1e-12);
/// All pairs of an n-point uniform grid on [a, b].
HarmonicReport harmonic_concave_scan(const std::function<double(double)>& g, double a, double b, int n,
                                     double tol = 1e-12);

/// b_eps(z) = p + ((p-1) H^{2/p}(z) - eps)(eps + H^{2/p}(z))^{(p-2)/2}.
double b_eps(const Integrand& H, const Vec2& z, double eps);

struct KenningtonReport {
  bool ratio_non_increasing = false;  // s -> f(psi)/F^{1-1/p}(psi)
  double worst_increase = 0;
  LemmaVarphiReport lemma;
  HarmonicReport harmonic;            // of psi''/psi' along s
  double b0 = 0;                      // b_eps(0)
  double min_b = 0;                   // over sampled z
  bool b_positive = false;
  bool pass() const { return ratio_non_increasing && lemma.pass() && harmonic.pass && b_positive; }
};

/// s_grid increasing inside the range of phi; z is sampled on rays with
/// H(z) up to z_max.
KenningtonReport kennington_hypothesis_check(const Integrand& H, const PhiTransform& T,
                                             const std::vector<double>& s_grid, double eps, double z_max = 10.0);

struct KorevaarOptions {
  int n_boundary = 64;       // sampled points on the boundary of Omega_{delta/2}
  double hessian_tol = 0.0;  // Hessian must be < -hessian_tol
  int min_strip_nodes = 8;
};

struct KorevaarReport {
  bool hessian_pass = false;
  double hessian_margin = 0;  // min over strip samples of -lambda_max(D^2 v)
  Vec2 hessian_worst = Vec2::Zero();
  int hessian_samples = 0;
  bool plane_pass = false;
  double plane_margin = 0;  // min of (plane - v) / |x - x0|^2 over nodes away from x0
  Vec2 plane_worst = Vec2::Zero();
  int plane_points = 0;
  bool pass() const { return hessian_pass && plane_pass; }
  std::string summary() const;
};

/// (a) fitted Hessian negative definite in the strip Omega_{delta/2} \ Omega_delta;
/// (b) tangent planes at boundary points of Omega_{delta/2} lie strictly above
/// v at every usable node. Polygon vertices are excluded by a delta radius.
KorevaarReport korevaar_boundary_check(const MeshFunction& v, const ConvexDomain& omega, double delta,
                                       const KorevaarOptions& opt = {});

/// Quadratic least-squares fit of nodal values around x over the 2-ring of
/// the nearest node: value, gradient and Hessian. Throws resolution error
/// when fewer than 6 usable nodes span the fit.
struct QuadraticFit {
  double value = 0;
  Vec2 grad = Vec2::Zero();
  Mat2 hess = Mat2::Zero();
};
QuadraticFit quadratic_fit(const MeshFunction& v, const Vec2& x, const std::vector<std::vector<int>>& neighbours);

}  // namespace finsler
