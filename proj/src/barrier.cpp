#include "finsler/barrier.hpp"

#include <algorithm>
#include <cmath>

namespace finsler {

// ------------------------------------------------------------------ annulus

GaugeAnnulus::GaugeAnnulus(ConvexBody b, Vec2 center, double level)
    : body(std::move(b)), x1(std::move(center)), r(level) {
  if (!(r > 0)) throw Error(ErrorKind::configuration, "annulus level r must be positive");
}

bool GaugeAnnulus::contains(const Vec2& x, double tol) const {
  const double s = level(x);
  return s >= r / 2 - tol && s <= r + tol;
}

Vec2 GaugeAnnulus::level_point(double theta, double s) const {
  const Vec2 u = unit(theta);
  return x1 + s / reversed_polar(u) * u;
}

// ------------------------------------------------------------------ profile

namespace {

bool log_branch(const BarrierProfile& w) { return std::abs(w.p - w.N) < 1e-12; }

}  // namespace

double BarrierProfile::w(double t) const {
  if (log_branch(*this)) return A * std::log(t) + B;
  return A / (p - N) * std::pow(t, (p - N) / (p - 1)) + B;
}

double BarrierProfile::dw(double t) const {
  if (log_branch(*this)) return A / t;
  return A / (p - 1) * std::pow(t, (1 - N) / (p - 1));
}

double BarrierProfile::invariant(double t) const { return std::pow(-dw(t), p - 1) * std::pow(t, N - 1); }

BarrierProfile barrier_profile(double p, double N, double r, double m) {
  if (!(p > 1) || !(N >= 2) || !(r > 0)) throw Error(ErrorKind::precondition, "barrier needs p > 1, N >= 2, r > 0");
  if (!(m > 0)) throw Error(ErrorKind::domain, "barrier boundary value m must be positive");
  BarrierProfile w;
  w.p = p;
  w.N = N;
  w.r = r;
  w.m = m;
  if (log_branch(w)) {
    w.A = -m / std::log(2.0);
    w.B = -w.A * std::log(r);
  } else {
    const double e = (p - N) / (p - 1);
    w.A = m * (p - N) / (std::pow(r / 2, e) - std::pow(r, e));
    w.B = -w.A / (p - N) * std::pow(r, e);
  }
  return w;
}

double profile_invariant_defect(const BarrierProfile& w, int n) {
  const double c = w.invariant(w.r);
  double worst = 0;
  for (int k = 0; k < n; ++k) {
    const double t = w.r / 2 * (1 + static_cast<double>(k) / (n - 1));
    worst = std::max(worst, std::abs(w.invariant(t) - c) / std::abs(c));
  }
  return worst;
}

// -------------------------------------------------------------------- field

namespace {

void check_match(const GaugeAnnulus& a, const BarrierProfile& w) {
  if (std::abs(a.r - w.r) > 1e-12 * a.r) throw Error(ErrorKind::configuration, "profile and annulus levels differ");
}

}  // namespace

double barrier_field(const GaugeAnnulus& a, const BarrierProfile& w, const Vec2& x) {
  check_match(a, w);
  const double tol = 1e-12 * a.r;
  const double s = a.level(x);
  if (s < a.r / 2 - tol || s > a.r + tol) throw Error(ErrorKind::domain, "point outside the closed annulus");
  return w.w(std::clamp(s, a.r / 2, a.r));
}

Field barrier_nodal(const GaugeAnnulus& a, const BarrierProfile& w, const Mesh& mesh) {
  check_match(a, w);
  Field v(mesh.n_nodes());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double s = a.level(mesh.nodes[i]);
    v[i] = s < a.r / 2 ? w.m : s > a.r ? 0.0 : w.w(s);
  }
  return v;
}

Mesh annulus_mesh(const GaugeAnnulus& a, double h) {
  if (!(h > 0)) throw Error(ErrorKind::meshing, "mesh size must be positive");
  double L = 0, per = 0;
  Vec2 prev = a.level_point(0, 1) - a.x1;
  for (int k = 1; k <= 720; ++k) {
    const Vec2 g = a.level_point(2 * kPi * k / 720, 1) - a.x1;
    L = std::max(L, g.norm());
    per += (g - prev).norm();
    prev = g;
  }
  int nr = std::max(2, static_cast<int>(std::ceil(a.r / 2 * L / h)));
  int nt = std::max(12, static_cast<int>(std::ceil(a.r * per / h)));
  for (int attempt = 0; attempt < 60; ++attempt) {
    Mesh m;
    for (int j = 0; j <= nr; ++j) {
      // Rings land exactly on the level sets at j = 0 and j = nr.
      const double s = j == nr ? a.r : a.r / 2 * (1 + static_cast<double>(j) / nr);
      for (int k = 0; k < nt; ++k) {
        m.nodes.push_back(a.level_point(2 * kPi * k / nt, s));
        m.boundary.push_back(j == 0 || j == nr);
      }
    }
    auto id = [nt](int j, int k) { return j * nt + (k % nt); };
    for (int j = 0; j < nr; ++j)
      for (int k = 0; k < nt; ++k) {
        const int q0 = id(j, k), q1 = id(j, k + 1), q2 = id(j + 1, k + 1), q3 = id(j + 1, k);
        const bool d02 = (m.nodes[q0] - m.nodes[q2]).norm() <= (m.nodes[q1] - m.nodes[q3]).norm();
        const std::array<Tri, 2> pair = d02 ? std::array<Tri, 2>{Tri{q0, q1, q2}, Tri{q0, q2, q3}}
                                            : std::array<Tri, 2>{Tri{q0, q1, q3}, Tri{q1, q2, q3}};
        for (Tri t : pair) {
          if (cross(m.nodes[t[1]] - m.nodes[t[0]], m.nodes[t[2]] - m.nodes[t[0]]) < 0) std::swap(t[1], t[2]);
          m.tris.push_back(t);
        }
      }
    m.h = m.max_edge();
    if (m.h <= h) return m;
    nr += 1;
    nt = static_cast<int>(std::ceil(nt * 1.1));
  }
  throw Error(ErrorKind::meshing, "annulus mesh did not reach the requested edge length");
}

double verify_barrier_pde(const GaugeAnnulus& a, const BarrierProfile& w, const Mesh& mesh, const Integrand* H) {
  if (std::abs(w.N - 2) > 1e-12) throw Error(ErrorKind::precondition, "planar meshes need N = 2");
  check_match(a, w);
  const Anisotropy fallback(a.body, w.p);
  const Integrand& Hs = H ? *H : fallback;
  Field v(mesh.n_nodes());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = w.w(std::clamp(a.level(mesh.nodes[i]), a.r / 2, a.r));
  std::vector<double> R(mesh.n_nodes(), 0.0), D(mesh.n_nodes(), 0.0);
  for (std::size_t t = 0; t < mesh.n_tris(); ++t) {
    const Tri& T = mesh.tris[t];
    const auto G = mesh.hat_gradients(t);
    const Vec2 g = v[T[0]] * G[0] + v[T[1]] * G[1] + v[T[2]] * G[2];
    const Vec2 flux = Hs.gradient(g) / Hs.p();
    const double area = mesh.tri_area(t);
    for (int k = 0; k < 3; ++k) {
      R[T[k]] += area * flux.dot(G[k]);
      D[T[k]] += area * G[k].norm();
    }
  }
  double res = 0;
  for (std::size_t i = 0; i < mesh.n_nodes(); ++i)
    if (!mesh.boundary[i]) res = std::max(res, std::abs(R[i]) / D[i]);
  return res;
}

// --------------------------------------------------------------------- Hopf

std::optional<TouchingConfig> hopf_touching_config(const ConvexDomain& omega, const Vec2& x0,
                                                   const ConvexBody& body, double r_floor) {
  const double diam = omega.diameter();
  if (std::abs(omega.signed_distance(x0)) > 1e-9 * diam) throw Error(ErrorKind::domain, "x0 is not on the boundary");
  if (omega.kind() == DomainKind::polygon && omega.distance_to_vertex(x0) < 1e-9 * diam) return std::nullopt;
  const Vec2 n = omega.inward_normal(x0);
  // The outer level set {rho = r} bounds x1 - r K°; its support point in the
  // outward direction -n is x1 - r DPhi(n).
  const Vec2 k = body.gauge_gradient(n);
  double lmin = kInf;
  {
    const GaugeAnnulus unit_ring(body, Vec2::Zero(), 1.0);
    for (int j = 0; j < 720; ++j) lmin = std::min(lmin, unit_ring.level_point(2 * kPi * j / 720, 1).norm());
  }
  for (double r = omega.inradius() / lmin; r >= r_floor; r *= 0.8) {
    GaugeAnnulus a(body, x0 + r * k, r);
    bool inside = true;
    double margin = kInf;
    for (int j = 0; j < 720 && inside; ++j) {
      const Vec2 y = a.level_point(2 * kPi * j / 720, r);
      const double sd = omega.signed_distance(y);
      if (sd < -1e-9 * diam) inside = false;
      if ((y - x0).norm() >= 0.2 * r * lmin) margin = std::min(margin, sd);
    }
    if (inside && margin > 1e-9 * diam) return TouchingConfig{a, margin};
  }
  return std::nullopt;
}

HopfReport hopf_slope_check(const Mesh& mesh, const Field& u, const ConvexDomain& omega, int n_samples) {
  HopfReport rep;
  rep.step = 2 * mesh.h;
  if (rep.step >= omega.inradius() / 2) throw Error(ErrorKind::resolution, "mesh too coarse for boundary slopes");
  const Locator loc(mesh);
  double sum = 0;
  for (const Vec2& x0 : omega.boundary_samples(n_samples)) {
    if (omega.kind() == DomainKind::polygon && omega.distance_to_vertex(x0) < 2 * rep.step) continue;
    const Vec2 x = x0 + rep.step * omega.inward_normal(x0);
    if (!loc.locate(x)) throw Error(ErrorKind::resolution, "interior probe point not covered by the mesh");
    const double slope = loc.interpolate(u, x) / rep.step;
    ++rep.n_samples;
    sum += slope;
    if (slope < rep.min_slope) rep.min_slope = slope, rep.worst = x0;
  }
  if (rep.n_samples == 0) throw Error(ErrorKind::resolution, "no boundary samples away from vertices");
  rep.mean_slope = sum / rep.n_samples;
  return rep;
}

SandwichReport barrier_sandwich(const EnergyProblem& P, const Field& u, const GaugeAnnulus& a) {
  const Locator loc(P.mesh);
  double lo = kInf;
  for (int j = 0; j < 256; ++j) lo = std::min(lo, loc.interpolate(u, a.level_point(2 * kPi * j / 256, a.r / 2)));
  if (!(lo > 0)) throw Error(ErrorKind::precondition, "u does not stay positive on the inner level set");
  SandwichReport rep;
  rep.profile = barrier_profile(P.p(), 2, a.r, 0.9 * lo);
  const Field lower = barrier_nodal(a, rep.profile, P.mesh);
  std::vector<char> region(P.mesh.n_nodes(), 0);
  for (std::size_t i = 0; i < region.size(); ++i) {
    region[i] = a.contains(P.mesh.nodes[i], 1e-12 * a.r);
    rep.region_nodes += region[i];
  }
  rep.comparison = comparison_check(P, u, lower, region);
  return rep;
}

}  // namespace finsler
