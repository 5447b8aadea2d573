#include "finsler/anisotropy.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <sstream>

namespace finsler {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::configuration: return "configuration error";
    case ErrorKind::domain: return "domain error";
    case ErrorKind::regularization_too_coarse: return "regularization-too-coarse";
    case ErrorKind::ambiguous_threshold: return "ambiguous-threshold";
    case ErrorKind::numeric: return "numeric error";
    case ErrorKind::meshing: return "meshing error";
    case ErrorKind::empty_domain: return "empty-domain";
    case ErrorKind::convergence: return "convergence error";
    case ErrorKind::precondition: return "precondition error";
    case ErrorKind::resolution: return "resolution error";
  }
  return "error";
}

namespace {

double wrap_angle(double t) {
  t = std::fmod(t, 2 * kPi);
  return t < 0 ? t + 2 * kPi : t;
}

double norm_r(const Vec2& z, double r) {
  if (std::isinf(r)) return std::max(std::abs(z.x()), std::abs(z.y()));
  if (r == 1.0) return std::abs(z.x()) + std::abs(z.y());
  if (r == 2.0) return z.norm();
  const double m = std::max(std::abs(z.x()), std::abs(z.y()));
  if (m == 0) return 0;
  return m * std::pow(std::pow(std::abs(z.x()) / m, r) + std::pow(std::abs(z.y()) / m, r), 1.0 / r);
}

Vec2 norm_r_gradient(const Vec2& z, double r) {
  if (z.isZero()) return Vec2::Zero();
  auto sgn = [](double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); };
  if (std::isinf(r)) {
    const int k = std::abs(z.x()) >= std::abs(z.y()) ? 0 : 1;
    Vec2 g = Vec2::Zero();
    g[k] = sgn(z[k]);
    return g;
  }
  if (r == 1.0) return {sgn(z.x()), sgn(z.y())};
  const double n = norm_r(z, r);
  Vec2 g;
  for (int i = 0; i < 2; ++i) g[i] = sgn(z[i]) * std::pow(std::abs(z[i]) / n, r - 1);
  return g;
}

double dual_exponent(double r) {
  if (std::isinf(r)) return 1.0;
  if (r == 1.0) return kInf;
  return r / (r - 1);
}

}  // namespace

// ---------------------------------------------------------------- ConvexBody

ConvexBody ConvexBody::polytope(std::vector<Vec2> pts) {
  if (pts.size() < 3) throw Error(ErrorKind::configuration, "polytope needs >= 3 vertices");
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  std::vector<Vec2> hull(2 * pts.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && cross(hull[k - 1] - hull[k - 2], pts[i] - hull[k - 2]) <= 0) --k;
    hull[k++] = pts[i];
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i > 0; --i) {
    while (k >= t && cross(hull[k - 1] - hull[k - 2], pts[i - 1] - hull[k - 2]) <= 0) --k;
    hull[k++] = pts[i - 1];
  }
  hull.resize(k - 1);
  if (hull.size() < 3) throw Error(ErrorKind::configuration, "degenerate polytope");
  ConvexBody b;
  b.kind_ = BodyKind::polytope;
  b.vertices_ = hull;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const Vec2 e = hull[(i + 1) % hull.size()] - hull[i];
    const Vec2 n = Vec2(e.y(), -e.x()).normalized();
    b.normals_.push_back(n);
    b.offsets_.push_back(n.dot(hull[i]));
  }
  b.validate();
  return b;
}

ConvexBody ConvexBody::disc(Vec2 center, double radius) {
  ConvexBody b;
  b.kind_ = BodyKind::disc;
  b.center_ = center;
  b.radius_ = radius;
  b.validate();
  return b;
}

ConvexBody ConvexBody::ell_r(double r) {
  ConvexBody b;
  b.kind_ = BodyKind::ell_r;
  b.r_ = r;
  b.validate();
  return b;
}

void ConvexBody::validate() const {
  switch (kind_) {
    case BodyKind::polytope:
      for (double d : offsets_)
        if (!(d > 1e-12)) throw Error(ErrorKind::configuration, "origin not interior to polytope");
      break;
    case BodyKind::disc:
      if (!(radius_ > 0)) throw Error(ErrorKind::configuration, "disc radius must be positive");
      if (!(center_.norm() < radius_))
        throw Error(ErrorKind::configuration, "origin not interior to disc");
      break;
    case BodyKind::ell_r:
      if (!(r_ >= 1.0)) throw Error(ErrorKind::configuration, "l_r body needs r >= 1");
      break;
  }
}

bool ConvexBody::contains(const Vec2& x) const {
  switch (kind_) {
    case BodyKind::polytope:
      for (std::size_t i = 0; i < normals_.size(); ++i)
        if (normals_[i].dot(x) > offsets_[i]) return false;
      return true;
    case BodyKind::disc: return (x - center_).norm() <= radius_;
    case BodyKind::ell_r: return norm_r(x, r_) <= 1.0;
  }
  return false;
}

double ConvexBody::gauge(const Vec2& z) const {
  if (z.isZero()) return 0.0;
  switch (kind_) {
    case BodyKind::polytope: {
      double m = -kInf;
      for (std::size_t i = 0; i < normals_.size(); ++i) m = std::max(m, normals_[i].dot(z) / offsets_[i]);
      return m;
    }
    case BodyKind::disc: {
      // a t^2 + 2 b t - |z|^2 = 0 with a = R^2 - |c|^2, b = (c, z).
      const double a = radius_ * radius_ - center_.squaredNorm();
      const double b = center_.dot(z);
      const double z2 = z.squaredNorm();
      const double s = std::sqrt(b * b + a * z2);
      return b > 0 ? z2 / (b + s) : (s - b) / a;
    }
    case BodyKind::ell_r: return norm_r(z, r_);
  }
  return 0.0;
}

Vec2 ConvexBody::gauge_gradient(const Vec2& z) const {
  if (z.isZero()) return Vec2::Zero();
  switch (kind_) {
    case BodyKind::polytope: {
      std::size_t best = 0;
      double m = -kInf;
      for (std::size_t i = 0; i < normals_.size(); ++i) {
        const double v = normals_[i].dot(z) / offsets_[i];
        if (v > m) m = v, best = i;
      }
      return normals_[best] / offsets_[best];
    }
    case BodyKind::disc: {
      const double a = radius_ * radius_ - center_.squaredNorm();
      const double b = center_.dot(z);
      const double t = gauge(z);
      return (z - t * center_) / (a * t + b);
    }
    case BodyKind::ell_r: return norm_r_gradient(z, r_);
  }
  return Vec2::Zero();
}

double ConvexBody::support(const Vec2& z) const {
  if (z.isZero()) return 0.0;
  switch (kind_) {
    case BodyKind::polytope: {
      double m = -kInf;
      for (const auto& v : vertices_) m = std::max(m, v.dot(z));
      return m;
    }
    case BodyKind::disc: return center_.dot(z) + radius_ * z.norm();
    case BodyKind::ell_r: return norm_r(z, dual_exponent(r_));
  }
  return 0.0;
}

Vec2 ConvexBody::support_gradient(const Vec2& z) const {
  switch (kind_) {
    case BodyKind::polytope: {
      std::size_t best = 0;
      double m = -kInf;
      for (std::size_t i = 0; i < vertices_.size(); ++i) {
        const double v = vertices_[i].dot(z);
        if (v > m) m = v, best = i;
      }
      return vertices_[best];
    }
    case BodyKind::disc: return z.isZero() ? center_ : Vec2(center_ + radius_ * z.normalized());
    case BodyKind::ell_r: return norm_r_gradient(z, dual_exponent(r_));
  }
  return Vec2::Zero();
}

bool ConvexBody::gauge_differentiable(const Vec2& z) const {
  if (z.isZero()) return false;
  const double scale = z.norm();
  switch (kind_) {
    case BodyKind::polytope: {
      double m1 = -kInf, m2 = -kInf;
      for (std::size_t i = 0; i < normals_.size(); ++i) {
        const double v = normals_[i].dot(z) / offsets_[i];
        if (v > m1) m2 = m1, m1 = v;
        else if (v > m2) m2 = v;
      }
      return m1 - m2 > 1e-9 * std::abs(m1);
    }
    case BodyKind::disc: return true;
    case BodyKind::ell_r:
      if (std::isinf(r_)) return std::abs(std::abs(z.x()) - std::abs(z.y())) > 1e-9 * scale;
      if (r_ == 1.0) return std::abs(z.x()) > 1e-9 * scale && std::abs(z.y()) > 1e-9 * scale;
      return true;
  }
  return true;
}

std::vector<double> ConvexBody::kink_angles() const {
  std::vector<double> k;
  if (kind_ == BodyKind::polytope) {
    for (const auto& v : vertices_) k.push_back(wrap_angle(std::atan2(v.y(), v.x())));
  } else if (kind_ == BodyKind::ell_r && std::isinf(r_)) {
    for (int i = 0; i < 4; ++i) k.push_back(kPi / 4 + i * kPi / 2);
  } else if (kind_ == BodyKind::ell_r && r_ == 1.0) {
    for (int i = 0; i < 4; ++i) k.push_back(i * kPi / 2);
  }
  std::sort(k.begin(), k.end());
  return k;
}

bool ConvexBody::crystalline() const {
  return kind_ == BodyKind::polytope || (kind_ == BodyKind::ell_r && (r_ == 1.0 || std::isinf(r_)));
}

bool ConvexBody::is_even() const {
  switch (kind_) {
    case BodyKind::polytope:
      for (const auto& v : vertices_)
        if (std::abs(gauge(-v) - 1.0) > 1e-12) return false;
      return true;
    case BodyKind::disc: return center_.norm() <= 1e-15 * radius_;
    case BodyKind::ell_r: return true;
  }
  return false;
}

double ConvexBody::outer_radius() const {
  switch (kind_) {
    case BodyKind::polytope: {
      double m = 0;
      for (const auto& v : vertices_) m = std::max(m, v.norm());
      return m;
    }
    case BodyKind::disc: return center_.norm() + radius_;
    case BodyKind::ell_r:
      return r_ >= 2 ? std::pow(2.0, 0.5 - (std::isinf(r_) ? 0.0 : 1.0 / r_)) : 1.0;
  }
  return 1.0;
}

double ConvexBody::inner_radius() const {
  switch (kind_) {
    case BodyKind::polytope: return *std::min_element(offsets_.begin(), offsets_.end());
    case BodyKind::disc: return radius_ - center_.norm();
    case BodyKind::ell_r: return r_ <= 2 ? std::pow(2.0, 0.5 - 1.0 / r_) : 1.0;
  }
  return 1.0;
}

double minkowski_gauge(const ConvexBody& K, const Vec2& z) {
  if (z.isZero()) return 0.0;
  const double n = z.norm();
  double lo = n / K.outer_radius() * (1 - 1e-12);
  double hi = n / K.inner_radius() * (1 + 1e-12);
  if (K.contains(z / lo) || !K.contains(z / hi))
    throw Error(ErrorKind::configuration, "gauge bracket failed; origin not interior?");
  while (hi - lo > 1e-10 * hi) {
    const double mid = 0.5 * (lo + hi);
    (K.contains(z / mid) ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

double polar_gauge(const ConvexBody& K, const Vec2& z) { return K.support(z); }

// --------------------------------------------------------- polar identities

namespace {

struct FdGrad {
  Vec2 g = Vec2::Zero();
  bool kink = false;
};

FdGrad fd_gradient(const ScalarFn& f, const Vec2& x) {
  FdGrad out;
  const double h = std::cbrt(kEps) * std::max(x.norm(), 1e-300);
  const double f0 = f(x);
  for (int j = 0; j < 2; ++j) {
    Vec2 e = Vec2::Zero();
    e[j] = h;
    const double fp = f(x + e), fm = f(x - e);
    const double fwd = (fp - f0) / h, bwd = (f0 - fm) / h;
    out.g[j] = (fp - fm) / (2 * h);
    // Smooth: the quotients differ by O(h f''); a kink leaves an O(f/|x|) gap.
    if (std::abs(fwd - bwd) > 1e-3 * (std::abs(fwd) + std::abs(bwd) + std::abs(f0) / x.norm()))
      out.kink = true;
  }
  return out;
}

}  // namespace

PolarIdentityReport check_polar_identities(const ScalarFn& phi, const ScalarFn& polar,
                                           const Vec2& x, double tol) {
  PolarIdentityReport rep;
  rep.tol = tol;
  if (x.isZero()) {
    rep.skipped = true;
    rep.reason = "sample at origin";
    return rep;
  }
  const FdGrad dphi = fd_gradient(phi, x);
  const FdGrad dpol = fd_gradient(polar, x);
  if (dphi.kink || dpol.kink) {
    rep.skipped = true;
    rep.reason = "gauge or polar not differentiable at sample";
    return rep;
  }
  const FdGrad dpol_at = fd_gradient(polar, dphi.g);
  if (dpol_at.kink) {
    rep.skipped = true;
    rep.reason = "polar not differentiable at DPhi(x)";
    return rep;
  }
  rep.err_phi_of_dpolar = std::abs(phi(dpol.g) - 1.0);
  rep.err_polar_of_dphi = std::abs(polar(dphi.g) - 1.0);
  rep.err_inverse = (phi(x) * dpol_at.g - x).norm() / x.norm();
  rep.holds = rep.err_phi_of_dpolar <= tol && rep.err_polar_of_dphi <= tol && rep.err_inverse <= tol;
  return rep;
}

PolarIdentityReport check_polar_identities(const ConvexBody& K, const Vec2& x, double tol) {
  return check_polar_identities([&K](const Vec2& z) { return K.gauge(z); },
                                [&K](const Vec2& z) { return K.support(z); }, x, tol);
}

// ---------------------------------------------------------------- Integrand

Mat2 Integrand::hessian(const Vec2& z) const {
  if (z.isZero()) {
    if (p() > 2) return Mat2::Zero();
    const double r0 = p() == 2 ? 1.0 : 1e-6;
    Mat2 acc = Mat2::Zero();
    for (int k = 0; k < 8; ++k) acc += hessian(r0 * unit(k * kPi / 4));
    return acc / 8.0;
  }
  const double h = std::cbrt(kEps) * z.norm();
  Mat2 M;
  for (int j = 0; j < 2; ++j) {
    Vec2 e = Vec2::Zero();
    e[j] = h;
    M.col(j) = (gradient(z + e) - gradient(z - e)) / (2 * h);
  }
  return 0.5 * (M + M.transpose());
}

// ---------------------------------------------------------------- Anisotropy

Anisotropy::Anisotropy(ConvexBody body, double p) : body_(std::move(body)), p_(p) {
  if (!(p_ > 1)) throw Error(ErrorKind::configuration, "exponent p must exceed 1");
  smooth_ = body_.crystalline() ? Smoothness::crystalline : Smoothness::smooth;
  double lo = kInf, hi = 0;
  for (int k = 0; k < 3600; ++k) {
    const double h = value(unit(2 * kPi * k / 3600));
    lo = std::min(lo, h);
    hi = std::max(hi, h);
  }
  C_ = std::max(hi, 1.0 / lo);
}

double Anisotropy::value(const Vec2& z) const { return std::pow(body_.gauge(z), p_); }

Vec2 Anisotropy::gradient(const Vec2& z) const {
  if (z.isZero()) return Vec2::Zero();
  const double g = body_.gauge(z);
  return p_ * std::pow(g, p_ - 1) * body_.gauge_gradient(z);
}

std::string Anisotropy::describe() const {
  std::ostringstream os;
  switch (body_.kind()) {
    case BodyKind::polytope: os << "polytope(" << body_.vertices().size() << " vertices)"; break;
    case BodyKind::disc:
      os << "disc(center=(" << body_.center().x() << "," << body_.center().y()
         << "), radius=" << body_.radius() << ")";
      break;
    case BodyKind::ell_r: os << "ell_" << body_.r(); break;
  }
  os << "^" << p_;
  return os.str();
}

double eval_H(const Anisotropy& a, const Vec2& z) { return a.value(z); }

Subgradient subgrad_H(const Anisotropy& a, const Vec2& z, double kink_eps) {
  Subgradient s;
  if (z.isZero()) return s;
  if (a.body().gauge_differentiable(z)) {
    s.g = a.gradient(z);
    return s;
  }
  Mollified m(a, kink_eps);
  s.g = m.gradient_Hn(z);
  s.regularized = true;
  s.eps = kink_eps;
  return s;
}

// ----------------------------------------------------------------- Mollified

Mollified::Mollified(const Anisotropy& a, double eps, int n_quad, int n_sub)
    : a_(&a), eps_(eps), n_sub_(std::max(1, n_sub)), kinks_(a.body().kink_angles()) {
  if (!(eps > 0)) throw Error(ErrorKind::domain, "mollification radius must be positive");
  // Boost stores the non-negative half of the Gauss-Legendre rule.
  auto fill = [&](const auto& absc, const auto& wts, bool odd) {
    for (std::size_t i = 0; i < absc.size(); ++i) {
      if (i == 0 && odd) {
        nodes_.push_back(0.0);
        weights_.push_back(wts[0]);
        continue;
      }
      nodes_.push_back(absc[i]);
      weights_.push_back(wts[i]);
      nodes_.push_back(-absc[i]);
      weights_.push_back(wts[i]);
    }
  };
  if (n_quad <= 12) {
    using Q = boost::math::quadrature::gauss<double, 12>;
    fill(Q::abscissa(), Q::weights(), false);
  } else if (n_quad <= 16) {
    using Q = boost::math::quadrature::gauss<double, 16>;
    fill(Q::abscissa(), Q::weights(), false);
  } else {
    using Q = boost::math::quadrature::gauss<double, 24>;
    fill(Q::abscissa(), Q::weights(), false);
  }
}

template <class Fn>
void Mollified::integrate(const Vec2& z, Fn&& acc) const {
  const double zn = z.norm();
  const double thc = std::atan2(z.y(), z.x());
  double a, b;
  if (zn > eps_) {
    const double beta = std::asin(eps_ / zn);
    a = thc - beta;
    b = thc + beta;
  } else {
    a = thc - kPi;
    b = thc + kPi;
  }
  // Every kink contributes a cut clamped into [a, b], so the piece layout
  // never changes with z. Dropping cuts outside the wedge instead would make
  // the quadrature error, and hence rho_n, jump where a kink ray enters it.
  std::vector<double> cuts{a};
  for (double k : kinks_) {
    const double t = k + 2 * kPi * std::round((thc - k) / (2 * kPi));
    cuts.push_back(std::clamp(t, a, b));
  }
  std::sort(cuts.begin() + 1, cuts.end());
  cuts.push_back(b);
  const double e2 = eps_ * eps_;
  const int S = n_sub_;
  for (std::size_t piece = 0; piece + 1 < cuts.size(); ++piece) {
    const double width = (cuts[piece + 1] - cuts[piece]) / S;
    if (width <= 0) continue;
    for (int sa = 0; sa < S; ++sa) {
      const double half = 0.5 * width;
      const double mid = cuts[piece] + (sa + 0.5) * width;
      for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const double th = mid + half * nodes_[i];
        const Vec2 u = unit(th);
        const double s = z.dot(u);
        const double disc = s * s - zn * zn + e2;
        if (disc <= 0) continue;
        const double sq = std::sqrt(disc);
        const double rlo = std::max(0.0, s - sq), rhi = s + sq;
        if (rhi <= rlo) continue;
        const double rhalf = 0.5 * (rhi - rlo) / S;
        for (int sr = 0; sr < S; ++sr) {
          const double rmid = rlo + (2 * sr + 1) * rhalf;
          for (std::size_t j = 0; j < nodes_.size(); ++j) {
            const double r = rmid + rhalf * nodes_[j];
            const Vec2 w = r * u;
            const double q = (z - w).squaredNorm() / e2;
            if (q >= 1) continue;
            const double bump = std::exp(-1.0 / (1.0 - q));
            acc(w, half * weights_[i] * rhalf * weights_[j] * bump * r);
          }
        }
      }
    }
  }
}

double Mollified::G(const Vec2& z) const {
  double num = 0, den = 0;
  integrate(z, [&](const Vec2& w, double wt) {
    num += wt * a_->value(w);
    den += wt;
  });
  return num / den + 0.5 * eps_ * z.squaredNorm();
}

Vec2 Mollified::DG(const Vec2& z) const {
  Vec2 num = Vec2::Zero();
  double den = 0;
  integrate(z, [&](const Vec2& w, double wt) {
    num += wt * a_->gradient(w);
    den += wt;
  });
  return num / den + eps_ * z;
}

double Mollified::level_radius(double theta) const {
  const Vec2 u = unit(theta);
  const double rhoK = 1.0 / a_->gauge(u);
  auto f = [&](double rho) { return G(rho * u) - 1.0; };
  double hi = rhoK, fhi = f(hi);
  double lo = 0.5 * rhoK, flo = f(lo);
  while (flo >= 0) {
    hi = lo, fhi = flo;
    lo *= 0.5;
    if (lo < 1e-12 * rhoK)
      throw Error(ErrorKind::regularization_too_coarse, "G_n >= 1 near the origin");
    flo = f(lo);
  }
  if (fhi <= 0) throw Error(ErrorKind::numeric, "level set of G_n outside K");
  boost::uintmax_t iters = 200;
  auto r = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi,
                                             boost::math::tools::eps_tolerance<double>(50), iters);
  return 0.5 * (r.first + r.second);
}

double Mollified::level_radius_derivative(double theta, double rho) const {
  const Vec2 u = unit(theta);
  const Vec2 g = DG(rho * u);
  return -rho * g.dot(perp(u)) / g.dot(u);
}

std::pair<double, Vec2> Mollified::G_and_DG(const Vec2& z) const {
  double num = 0, den = 0;
  Vec2 gnum = Vec2::Zero();
  integrate(z, [&](const Vec2& w, double wt) {
    num += wt * a_->value(w);
    gnum += wt * a_->gradient(w);
    den += wt;
  });
  return {num / den + 0.5 * eps_ * z.squaredNorm(), gnum / den + eps_ * z};
}

LevelPoint Mollified::level_point(double theta, double guess) const {
  const Vec2 u = unit(theta);
  // Newton along the ray from a close guess; G is convex along it, so the
  // iterates from either side settle quickly. Bisection covers bad guesses.
  if (guess > 0) {
    double rho = guess;
    for (int it = 0; it < 6; ++it) {
      const auto [g, dg] = G_and_DG(rho * u);
      const double slope = dg.dot(u);
      if (!(slope > 0)) break;
      const double step = (g - 1.0) / slope;
      if (std::abs(step) > 0.1 * rho) break;
      rho -= step;
      if (std::abs(step) <= 1e-14 * rho) return {rho, -rho * dg.dot(perp(u)) / slope};
    }
  }
  const double rho = level_radius(theta);
  return {rho, level_radius_derivative(theta, rho)};
}

Vec2 Mollified::gradient_Hn(const Vec2& z) const {
  if (z.isZero()) return Vec2::Zero();
  const double theta = std::atan2(z.y(), z.x());
  const double rho = level_radius(theta);
  const Vec2 b = rho * unit(theta);
  const Vec2 g = DG(b);
  const double phin = z.norm() / rho;
  const double p = a_->p();
  return p * std::pow(phin, p - 1) * g / g.dot(b);
}

// ----------------------------------------------------- RegularizedAnisotropy

RegularizedAnisotropy::RegularizedAnisotropy(const Anisotropy& base, double eps,
                                             const RegularizationOptions& opt)
    : base_(base), eps_(eps) {
  Mollified moll(base_, eps, opt.n_quad, opt.n_sub);
  std::vector<double> th;
  for (int k = 0; k < opt.base_knots; ++k) th.push_back(2 * kPi * k / opt.base_knots);
  for (double k : base_.body().kink_angles()) th.push_back(k);
  std::sort(th.begin(), th.end());
  th.erase(std::unique(th.begin(), th.end(), [](double a, double b) { return b - a < 1e-12; }),
           th.end());
  std::vector<double> rho(th.size()), drho(th.size());
  for (std::size_t i = 0; i < th.size(); ++i) {
    const LevelPoint lp = moll.level_point(th[i], i > 0 ? rho[i - 1] : 0.0);
    rho[i] = lp.rho;
    drho[i] = lp.drho;
  }
  if (*std::min_element(rho.begin(), rho.end()) < opt.delta)
    throw Error(ErrorKind::regularization_too_coarse,
                "B_delta(0) not contained in K_n for eps = " + std::to_string(eps));

  // Hermite data uses the exact slope, so curvature errors scale with the
  // slope error over h rather than the (quadrature-noisy) value error over
  // h^2. Bisect until the midpoint value and slope are both reproduced.
  const double min_width = opt.min_width_factor * eps;
  std::vector<char> pending(th.size(), 1);  // interval [th[i], th[i+1]) untested
  for (int round = 0; round < 60; ++round) {
    spline_ = PeriodicHermite(th, rho, drho, 2 * kPi);
    std::vector<double> nth, nrho, ndrho;
    std::vector<char> npend;
    bool refined = false;
    for (std::size_t i = 0; i < th.size(); ++i) {
      nth.push_back(th[i]);
      nrho.push_back(rho[i]);
      ndrho.push_back(drho[i]);
      npend.push_back(0);
      const double b = i + 1 < th.size() ? th[i + 1] : th[0] + 2 * kPi;
      if (b - th[i] < 2 * min_width) continue;
      // The interpolant is only C^1; a second-derivative jump at either end
      // bounds the curvature error, which must stay below the O(eps)
      // curvature of the flat faces.
      const std::size_t j = i + 1 < th.size() ? i + 1 : 0;
      const double jump_tol = opt.curvature_tol * eps * rho[i];
      const bool rough = spline_.d2_jump(i) > jump_tol || spline_.d2_jump(j) > jump_tol;
      if (!pending[i] && !rough) continue;
      const double m = 0.5 * (th[i] + b);
      const SplineValue sv = spline_.eval(m);
      const LevelPoint lp = moll.level_point(m, sv.f);
      const double rm = lp.rho, dm = lp.drho;
      if (rough || std::abs(sv.f - rm) > opt.spline_tol * rm ||
          std::abs(sv.df - dm) > opt.slope_tol * rm) {
        npend.back() = 1;
        nth.push_back(m);
        nrho.push_back(rm);
        ndrho.push_back(dm);
        npend.push_back(1);
        refined = true;
      }
    }
    if (!refined) break;
    // Midpoints past 2pi belong at the front.
    std::vector<std::size_t> idx(nth.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (nth[i] >= 2 * kPi) nth[i] -= 2 * kPi;
      idx[i] = i;
    }
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return nth[a] < nth[b]; });
    th.clear(), rho.clear(), drho.clear(), pending.clear();
    for (auto i : idx) {
      th.push_back(nth[i]);
      rho.push_back(nrho[i]);
      drho.push_back(ndrho[i]);
      pending.push_back(npend[i]);
    }
  }
  spline_ = PeriodicHermite(th, rho, drho, 2 * kPi);

  lambda_n_ = kInf;
  Lambda_n_ = 0;
  for (std::size_t i = 0; i < th.size(); ++i) {
    const double b = i + 1 < th.size() ? th[i + 1] : th[0] + 2 * kPi;
    for (double t : {th[i], 0.5 * (th[i] + b)}) {
      Eigen::SelfAdjointEigenSolver<Mat2> es(hessian(unit(t)));
      lambda_n_ = std::min(lambda_n_, es.eigenvalues()[0]);
      Lambda_n_ = std::max(Lambda_n_, es.eigenvalues()[1]);
    }
  }
}

double RegularizedAnisotropy::gauge(const Vec2& z) const {
  if (z.isZero()) return 0.0;
  return z.norm() / spline_.eval(std::atan2(z.y(), z.x())).f;
}

double RegularizedAnisotropy::value(const Vec2& z) const { return std::pow(gauge(z), p()); }

Vec2 RegularizedAnisotropy::gradient(const Vec2& z) const {
  const double r = z.norm();
  if (r == 0) return Vec2::Zero();
  const double p = this->p();
  const Vec2 er = z / r, et = perp(er);
  const SplineValue s = spline_.eval(std::atan2(z.y(), z.x()));
  const double g = std::pow(s.f, -p);
  const double dg = -p * g / s.f * s.df;
  const double rp1 = std::pow(r, p - 1);
  return p * rp1 * g * er + rp1 * dg * et;
}

Mat2 RegularizedAnisotropy::hessian(const Vec2& z) const {
  const double r = z.norm();
  const double p = this->p();
  if (r == 0) {
    if (p > 2) return Mat2::Zero();
    const double r0 = p == 2 ? 1.0 : 1e-6;
    Mat2 acc = Mat2::Zero();
    for (int k = 0; k < 8; ++k) acc += hessian(r0 * unit(k * kPi / 4));
    return acc / 8.0;
  }
  const Vec2 er = z / r, et = perp(er);
  const SplineValue s = spline_.eval(std::atan2(z.y(), z.x()));
  const double g = std::pow(s.f, -p);
  const double dg = -p * g / s.f * s.df;
  const double d2g = -p * g / s.f * s.d2f + p * (p + 1) * g / (s.f * s.f) * s.df * s.df;
  const double rp2 = std::pow(r, p - 2);
  Mat2 polar;
  polar << p * (p - 1) * rp2 * g, (p - 1) * rp2 * dg, (p - 1) * rp2 * dg, rp2 * (p * g + d2g);
  Mat2 R;
  R.col(0) = er;
  R.col(1) = et;
  return R * polar * R.transpose();
}

std::string RegularizedAnisotropy::describe() const {
  std::ostringstream os;
  os << "regularized[" << base_.describe() << ", eps=" << eps_ << "]";
  return os.str();
}

double RegularizedAnisotropy::min_envelope_gap(int n_rays) const {
  double m = kInf;
  for (int k = 0; k < n_rays; ++k) {
    const Vec2 u = unit(2 * kPi * (k + 0.5) / n_rays);
    m = std::min(m, value(u) - base_.value(u));
  }
  return m;
}

double RegularizedAnisotropy::max_deviation(int n_rays) const {
  double m = 0;
  for (int k = 0; k < n_rays; ++k) {
    const Vec2 u = unit(2 * kPi * (k + 0.5) / n_rays);
    m = std::max(m, std::abs(value(u) - base_.value(u)));
  }
  return m;
}

namespace {

std::string regularization_key(const Anisotropy& a, double eps, const RegularizationOptions& o) {
  std::ostringstream os;
  os << std::hexfloat << static_cast<int>(a.body().kind()) << '|' << a.p() << '|' << eps << '|'
     << a.body().center().transpose() << '|' << a.body().radius() << '|' << a.body().r();
  for (const Vec2& v : a.body().vertices()) os << '|' << v.x() << ',' << v.y();
  os << '|' << o.delta << '|' << o.base_knots << '|' << o.spline_tol << '|' << o.slope_tol << '|'
     << o.curvature_tol << '|' << o.min_width_factor << '|' << o.n_quad << '|' << o.n_sub;
  return os.str();
}

}  // namespace

RegularizedAnisotropy mollify_regularize(const Anisotropy& a, double eps,
                                         const RegularizationOptions& opt) {
  // Continuation ladders and probes rebuild the same H_n repeatedly.
  static std::mutex mu;
  static std::map<std::string, RegularizedAnisotropy> cache;
  const std::string key = regularization_key(a, eps, opt);
  {
    std::lock_guard<std::mutex> lock(mu);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }
  RegularizedAnisotropy r(a, eps, opt);
  std::lock_guard<std::mutex> lock(mu);
  cache.emplace(key, r);
  return r;
}

// ------------------------------------------------------------------- probes

double lemmaquad_lambda_hat(const ScalarFn& G, const VectorFn& DG, double lambda) {
  auto grad = [&](const Vec2& z) -> Vec2 {
    if (DG) return DG(z);
    const double h = std::cbrt(kEps) * std::max(z.norm(), 1e-8);
    return {(G(z + Vec2(h, 0)) - G(z - Vec2(h, 0))) / (2 * h),
            (G(z + Vec2(0, h)) - G(z - Vec2(0, h))) / (2 * h)};
  };
  auto radius = [&](double th) {
    const Vec2 u = unit(th);
    double hi = 1.0;
    while (G(hi * u) < 1.0) {
      hi *= 2;
      if (hi > 1e8) {
        std::ostringstream os;
        os << "level set {G=1} not reached along ray theta=" << th;
        throw Error(ErrorKind::numeric, os.str());
      }
    }
    double lo = 0;
    for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      (G(mid * u) < 1.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  };
  auto q = [&](double th) {
    const Vec2 z = radius(th) * unit(th);
    return grad(z).dot(z);
  };
  const int n = 512;
  std::vector<std::pair<double, int>> vals;
  for (int k = 0; k < n; ++k) vals.emplace_back(q(2 * kPi * k / n), k);
  std::sort(vals.begin(), vals.end(), [](auto& a, auto& b) { return a.first > b.first; });
  double best = vals.front().first;
  const double gr = (std::sqrt(5.0) - 1) / 2;
  for (int i = 0; i < 8; ++i) {
    double a = 2 * kPi * (vals[i].second - 1) / n, b = 2 * kPi * (vals[i].second + 1) / n;
    double c = b - gr * (b - a), d = a + gr * (b - a);
    double fc = q(c), fd = q(d);
    for (int it = 0; it < 60; ++it) {
      if (fc > fd) {
        b = d, d = c, fd = fc;
        c = b - gr * (b - a);
        fc = q(c);
      } else {
        a = c, c = d, fc = fd;
        d = a + gr * (b - a);
        fd = q(d);
      }
    }
    best = std::max({best, fc, fd});
  }
  return lambda / best;
}

namespace {

Vec2 grad_Hp2(const Integrand& H, const Vec2& z) {
  const double h = H.value(z);
  if (h <= 0) return Vec2::Zero();
  const double p = H.p();
  return (2.0 / p) * std::pow(h, 2.0 / p - 1) * H.gradient(z);
}

}  // namespace

Mat2 hessian_Hp2(const Integrand& H, const Vec2& z, bool* kink) {
  const double h = std::cbrt(kEps) * std::max(z.norm(), 1e-300);
  const Vec2 g0 = grad_Hp2(H, z);
  Mat2 M;
  bool suspect = false;
  for (int j = 0; j < 2; ++j) {
    Vec2 e = Vec2::Zero();
    e[j] = h;
    const Vec2 gp = grad_Hp2(H, z + e), gm = grad_Hp2(H, z - e);
    const Vec2 fwd = (gp - g0) / h, bwd = (g0 - gm) / h;
    M.col(j) = (gp - gm) / (2 * h);
    if ((fwd - bwd).norm() > 0.1 * (fwd.norm() + bwd.norm() + g0.norm() / z.norm())) suspect = true;
  }
  if (kink) *kink = suspect;
  if (suspect) {
    // Least-squares quadratic fit of H^{2/p} on a 5x5 stencil.
    const double s = 1e-3 * z.norm();
    const double p = H.p();
    Eigen::MatrixXd A(25, 6);
    Eigen::VectorXd b(25);
    int row = 0;
    for (int i = -2; i <= 2; ++i)
      for (int k = -2; k <= 2; ++k, ++row) {
        const double dx = i * s, dy = k * s;
        A.row(row) << 1, dx, dy, 0.5 * dx * dx, dx * dy, 0.5 * dy * dy;
        b[row] = std::pow(H.value(z + Vec2(dx, dy)), 2.0 / p);
      }
    const Eigen::VectorXd c = A.colPivHouseholderQr().solve(b);
    M << c[3], c[4], c[4], c[5];
  }
  return 0.5 * (M + M.transpose());
}

HessianProbe hessian_probe_Hp2(const Integrand& H, int n_samples, double degenerate_tol) {
  HessianProbe pr;
  pr.lambda_hat = kInf;
  for (int k = 0; k < n_samples; ++k) {
    const double th = 2 * kPi * k / n_samples;
    bool kink = false;
    Eigen::SelfAdjointEigenSolver<Mat2> es(hessian_Hp2(H, unit(th), &kink));
    if (kink) ++pr.kink_fallbacks;
    if (es.eigenvalues()[0] < pr.lambda_hat) {
      pr.lambda_hat = es.eigenvalues()[0];
      pr.worst_theta = th;
    }
    pr.Lambda_hat = std::max(pr.Lambda_hat, es.eigenvalues()[1]);
  }
  pr.degenerate = pr.lambda_hat <= degenerate_tol * std::max(1.0, pr.Lambda_hat);
  return pr;
}

double eval_H_theta(const Integrand& H, const Vec2& z, double theta) {
  if (!(theta > 0)) throw Error(ErrorKind::domain, "theta must be positive");
  const double p = H.p();
  return std::pow(theta + std::pow(H.value(z), 2.0 / p), p / 2);
}

Vec2 grad_H_theta(const Integrand& H, const Vec2& z, double theta) {
  if (!(theta > 0)) throw Error(ErrorKind::domain, "theta must be positive");
  const double p = H.p();
  const double q = std::pow(H.value(z), 2.0 / p);
  return (p / 2) * std::pow(theta + q, p / 2 - 1) * grad_Hp2(H, z);
}

ThetaProbe hessian_probe_H_theta(const Integrand& H, const std::vector<double>& thetas,
                                 int n_angles, double max_variation) {
  ThetaProbe pr;
  const double p = H.p();
  std::vector<double> radii{0.0};
  for (int k = -8; k <= 8; ++k) radii.push_back(std::pow(10.0, k / 2.0));
  for (double th : thetas) {
    if (!(th > 0)) throw Error(ErrorKind::domain, "theta must be positive");
    double lo = kInf, hi = 0;
    for (double R : radii) {
      const int na = R == 0 ? 1 : n_angles;
      for (int a = 0; a < na; ++a) {
        const Vec2 z = R * unit(2 * kPi * (a + 0.25) / na);
        const double h = std::cbrt(kEps) * std::max(R, std::sqrt(th));
        Mat2 M;
        for (int j = 0; j < 2; ++j) {
          Vec2 e = Vec2::Zero();
          e[j] = h;
          M.col(j) = (grad_H_theta(H, z + e, th) - grad_H_theta(H, z - e, th)) / (2 * h);
        }
        M = 0.5 * (M + M.transpose());
        const double w = std::pow(th + std::pow(H.value(z), 2.0 / p), (p - 2) / 2);
        Eigen::SelfAdjointEigenSolver<Mat2> es(M);
        lo = std::min(lo, es.eigenvalues()[0] / w);
        hi = std::max(hi, es.eigenvalues()[1] / w);
      }
    }
    pr.thetas.push_back(th);
    pr.lambda_tilde.push_back(lo);
    pr.Lambda_tilde.push_back(hi);
  }
  auto variation = [](const std::vector<double>& v) {
    const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
    return (*mx - *mn) / std::max(std::abs(*mx), 1e-300);
  };
  pr.lambda_variation = variation(pr.lambda_tilde);
  pr.Lambda_variation = variation(pr.Lambda_tilde);
  pr.theta_independent = pr.lambda_variation < max_variation && pr.Lambda_variation < max_variation &&
                         *std::min_element(pr.lambda_tilde.begin(), pr.lambda_tilde.end()) > 0;
  return pr;
}

}  // namespace finsler
