#pragma once

#include "finsler/common.hpp"
#include "finsler/spline.hpp"

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace finsler {

enum class BodyKind { polytope, disc, ell_r };

/// Planar convex body with the origin in its interior. Its Minkowski
/// functional is the gauge Phi and its support function the polar gauge.
class ConvexBody {
 public:
  /// Vertices in any order; the convex hull is taken.
  static ConvexBody polytope(std::vector<Vec2> vertices);
  static ConvexBody disc(Vec2 center, double radius);
  /// Unit ball of the l_r norm, r in [1, inf].
  static ConvexBody ell_r(double r);

  BodyKind kind() const { return kind_; }
  const std::vector<Vec2>& vertices() const { return vertices_; }
  const Vec2& center() const { return center_; }
  double radius() const { return radius_; }
  double r() const { return r_; }

  bool contains(const Vec2& x) const;

  /// Closed-form gauge and one element of its subdifferential.
  double gauge(const Vec2& z) const;
  Vec2 gauge_gradient(const Vec2& z) const;
  /// Support function h_K, i.e. the polar gauge.
  double support(const Vec2& z) const;
  Vec2 support_gradient(const Vec2& z) const;

  bool gauge_differentiable(const Vec2& z) const;
  /// Directions (radians in [0, 2pi)) along which the gauge has a kink.
  std::vector<double> kink_angles() const;
  bool crystalline() const;
  bool is_even() const;
  double outer_radius() const;
  double inner_radius() const;

 private:
  ConvexBody() = default;
  void validate() const;

  BodyKind kind_ = BodyKind::disc;
  std::vector<Vec2> vertices_;  // CCW hull
  std::vector<Vec2> normals_;   // outward unit normals of edges
  std::vector<double> offsets_;  // (n_i, v_i) > 0
  Vec2 center_ = Vec2::Zero();
  double radius_ = 1.0;
  double r_ = 2.0;
};

/// Phi(z) = inf{t > 0 : z/t in K}, by bisection along the ray to relative 1e-10.
double minkowski_gauge(const ConvexBody& K, const Vec2& z);
/// Phi°(z) = sup{(xi, z) : Phi(xi) <= 1}.
double polar_gauge(const ConvexBody& K, const Vec2& z);

struct PolarIdentityReport {
  bool skipped = false;
  std::string reason;
  double err_phi_of_dpolar = 0;  // |Phi(DPhi°(x)) - 1|
  double err_polar_of_dphi = 0;  // |Phi°(DPhi(x)) - 1|
  double err_inverse = 0;        // |Phi(x) DPhi°(DPhi(x)) - x|
  double tol = 1e-6;
  bool holds = false;
};

using ScalarFn = std::function<double(const Vec2&)>;
using VectorFn = std::function<Vec2(const Vec2&)>;

/// Gradients by central differences; kinks are detected from one-sided
/// quotients and reported as skipped.
PolarIdentityReport check_polar_identities(const ScalarFn& phi, const ScalarFn& polar,
                                           const Vec2& x, double tol = 1e-6);
PolarIdentityReport check_polar_identities(const ConvexBody& K, const Vec2& x,
                                           double tol = 1e-6);

/// Convex integrand used by the energies. Values, gradients and Hessians.
class Integrand {
 public:
  virtual ~Integrand() = default;
  virtual double p() const = 0;
  virtual double value(const Vec2& z) const = 0;
  virtual Vec2 gradient(const Vec2& z) const = 0;
  /// Default: central differences of gradient() with step cbrt(eps)|z|.
  virtual Mat2 hessian(const Vec2& z) const;
  virtual std::string describe() const = 0;
};

enum class Smoothness { smooth, crystalline };

/// H = Phi^p for the gauge of a convex body.
class Anisotropy : public Integrand {
 public:
  Anisotropy(ConvexBody body, double p);

  const ConvexBody& body() const { return body_; }
  double p() const override { return p_; }
  Smoothness smoothness() const { return smooth_; }
  /// Two-sided constant C with |z|^p / C <= H(z) <= C |z|^p, from 3600 directions.
  double coercivity_constant() const { return C_; }

  double gauge(const Vec2& z) const { return body_.gauge(z); }
  double polar(const Vec2& z) const { return body_.support(z); }
  double value(const Vec2& z) const override;
  Vec2 gradient(const Vec2& z) const override;
  std::string describe() const override;

 private:
  ConvexBody body_;
  double p_;
  Smoothness smooth_;
  double C_;
};

double eval_H(const Anisotropy& a, const Vec2& z);

struct Subgradient {
  Vec2 g = Vec2::Zero();
  bool regularized = false;  // true when taken from H_n at a kink
  double eps = 0.0;
};

/// Gradient where H is differentiable, otherwise the gradient of the
/// mollified H_n at `kink_eps`.
Subgradient subgrad_H(const Anisotropy& a, const Vec2& z, double kink_eps = 1e-3);

struct LevelPoint {
  double rho = 0, drho = 0;  // radial function of {G = 1} and its angular derivative
};

/// G_n = bump_eps * H + eps |z|^2 / 2 evaluated by polar quadrature centred at
/// the origin of the integration variable, split at the gauge kinks. Each
/// piece and each radial chord is further split into n_sub Gauss panels.
class Mollified {
 public:
  Mollified(const Anisotropy& a, double eps, int n_quad = 24, int n_sub = 3);
  double G(const Vec2& z) const;
  Vec2 DG(const Vec2& z) const;
  /// rho > 0 with G(rho u_theta) = 1.
  double level_radius(double theta) const;
  /// Derivative of level_radius by implicit differentiation.
  double level_radius_derivative(double theta, double rho) const;
  std::pair<double, Vec2> G_and_DG(const Vec2& z) const;
  /// Radius and slope together; Newton from `guess` when positive.
  LevelPoint level_point(double theta, double guess = 0.0) const;
  /// Gradient of the gauge of {G <= 1} raised to p.
  Vec2 gradient_Hn(const Vec2& z) const;
  double eps() const { return eps_; }

 private:
  template <class Fn>
  void integrate(const Vec2& z, Fn&& accumulate) const;

  const Anisotropy* a_;
  double eps_;
  int n_sub_;
  std::vector<double> nodes_, weights_;  // Gauss-Legendre on [-1, 1]
  std::vector<double> kinks_;
};

struct RegularizationOptions {
  double delta = 0.05;      // required inner ball radius of K_n
  int base_knots = 256;
  double spline_tol = 1e-9;  // relative midpoint error of the radial interpolant
  double slope_tol = 1e-7;   // relative midpoint error of its derivative
  double curvature_tol = 0.5;      // allowed rho'' jump at a knot, times eps rho
  double min_width_factor = 1e-3;  // knot intervals are not split below this times eps
  int n_quad = 24;
  int n_sub = 3;
};

/// H_n = Phi_n^p where Phi_n is the gauge of K_n = {G_n <= 1}, stored as a
/// periodic Hermite interpolant of the radial function of K_n.
class RegularizedAnisotropy : public Integrand {
 public:
  RegularizedAnisotropy(const Anisotropy& base, double eps, const RegularizationOptions& opt = {});

  const Anisotropy& base() const { return base_; }
  double eps() const { return eps_; }
  double p() const override { return base_.p(); }
  double gauge(const Vec2& z) const;
  double value(const Vec2& z) const override;
  Vec2 gradient(const Vec2& z) const override;
  Mat2 hessian(const Vec2& z) const override;
  std::string describe() const override;

  /// Ellipticity pair of H_n sampled on the unit circle.
  double lambda_n() const { return lambda_n_; }
  double Lambda_n() const { return Lambda_n_; }
  std::size_t knot_count() const { return spline_.size(); }
  /// min over sampled rays of H_n - H (>= 0 by construction).
  double min_envelope_gap(int n_rays = 4096) const;
  double max_deviation(int n_rays = 4096) const;

 private:
  Anisotropy base_;
  double eps_;
  PeriodicHermite spline_;  // radial function rho(theta) of K_n
  double lambda_n_ = 0, Lambda_n_ = 0;
};

RegularizedAnisotropy mollify_regularize(const Anisotropy& a, double eps,
                                         const RegularizationOptions& opt = {});

/// lambda / sup_{G = 1} (DG(z), z). DG may be empty (central differences).
double lemmaquad_lambda_hat(const ScalarFn& G, const VectorFn& DG, double lambda);

struct HessianProbe {
  double lambda_hat = 0;
  double Lambda_hat = 0;
  bool degenerate = false;
  int kink_fallbacks = 0;
  double worst_theta = 0;
};

/// D^2 (H^{2/p}) at z: central differences of the analytic gradient with a
/// quadratic-fit fallback when one-sided quotients disagree.
Mat2 hessian_Hp2(const Integrand& H, const Vec2& z, bool* kink = nullptr);
HessianProbe hessian_probe_Hp2(const Integrand& H, int n_samples = 256, double degenerate_tol = 1e-8);

double eval_H_theta(const Integrand& H, const Vec2& z, double theta);
Vec2 grad_H_theta(const Integrand& H, const Vec2& z, double theta);

struct ThetaProbe {
  std::vector<double> thetas, lambda_tilde, Lambda_tilde;
  double lambda_variation = 0, Lambda_variation = 0;
  bool theta_independent = false;
};

/// Fits the H_theta ellipticity constants at each theta over radii {0} and 10^{k/2}, k = -8..8.
ThetaProbe hessian_probe_H_theta(const Integrand& H, const std::vector<double>& thetas,
                                 int n_angles = 32, double max_variation = 0.1);

}  // namespace finsler
