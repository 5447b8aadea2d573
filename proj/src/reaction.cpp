#include "finsler/reaction.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace finsler {

namespace {

double integrate(const std::function<double(double)>& g, double a, double b) {
  if (a == b) return 0.0;
  double err = 0;
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(g, a, b, 10, 1e-12, &err);
}

}  // namespace

const char* to_string(ReactionKind kind) {
  switch (kind) {
    case ReactionKind::constant: return "constant";
    case ReactionKind::power: return "power";
    case ReactionKind::eigen: return "eigen";
    case ReactionKind::affine_cutoff: return "affine";
    case ReactionKind::table: return "table";
    case ReactionKind::custom: return "custom";
  }
  return "?";
}

// ------------------------------------------------------------------ Reaction

Reaction Reaction::constant(double c, double p) {
  Reaction r;
  r.kind_ = ReactionKind::constant;
  r.c_ = c, r.p_ = p, r.q_ = 1;
  r.finish();
  return r;
}

Reaction Reaction::power(double c, double q, double p) {
  if (!(q >= 1)) throw Error(ErrorKind::configuration, "power reaction needs q >= 1");
  Reaction r;
  r.kind_ = ReactionKind::power;
  r.c_ = c, r.q_ = q, r.p_ = p;
  r.finish();
  return r;
}

Reaction Reaction::eigen(double lambda, double p) {
  Reaction r;
  r.kind_ = ReactionKind::eigen;
  r.c_ = lambda, r.q_ = p, r.p_ = p;
  r.finish();
  return r;
}

Reaction Reaction::affine_cutoff(double c, double p) {
  Reaction r;
  r.kind_ = ReactionKind::affine_cutoff;
  r.c_ = c, r.p_ = p;
  r.finish();
  return r;
}

Reaction Reaction::table(std::vector<double> ts, std::vector<double> fs, double p) {
  Reaction r;
  r.kind_ = ReactionKind::table;
  r.p_ = p;
  r.spline_ = CubicSpline(ts, fs);
  r.ts_ = std::move(ts);
  r.fs_ = std::move(fs);
  if (r.ts_.front() < 0) throw Error(ErrorKind::configuration, "table must start at t >= 0");
  r.finish();
  return r;
}

Reaction Reaction::custom(std::function<double(double)> f, double p, std::string name) {
  Reaction r;
  r.kind_ = ReactionKind::custom;
  r.p_ = p;
  r.fn_ = std::move(f);
  r.name_ = std::move(name);
  r.finish();
  return r;
}

void Reaction::finish() {
  if (!(p_ > 1)) throw Error(ErrorKind::configuration, "exponent p must exceed 1");
  switch (kind_) {
    case ReactionKind::constant:
    case ReactionKind::power:
    case ReactionKind::eigen:
      if (!(c_ > 0)) throw Error(ErrorKind::configuration, "reaction coefficient must be positive");
      Mf_ = kInf;
      break;
    case ReactionKind::affine_cutoff:
      if (!(c_ > 0)) throw Error(ErrorKind::configuration, "reaction coefficient must be positive");
      Mf_ = 1.0;
      break;
    case ReactionKind::table:
    case ReactionKind::custom: {
      Mf_ = compute_Mf([this](double t) { return f(t); });
      // Panels 1e-8 * 1.1^k up to M_f (or 1e6), plus the table knots.
      const double top = std::isfinite(Mf_) ? Mf_ : 1e6;
      panel_t_ = {0.0};
      for (double t = 1e-8; t < top; t *= 1.1) panel_t_.push_back(t);
      for (double x : ts_)
        if (x > 0 && x < top) panel_t_.push_back(x);
      panel_t_.push_back(top);
      std::sort(panel_t_.begin(), panel_t_.end());
      panel_t_.erase(std::unique(panel_t_.begin(), panel_t_.end()), panel_t_.end());
      panel_F_.assign(panel_t_.size(), 0.0);
      auto fn = [this](double s) { return f(s); };
      for (std::size_t i = 1; i < panel_t_.size(); ++i)
        panel_F_[i] = panel_F_[i - 1] + integrate(fn, panel_t_[i - 1], panel_t_[i]);
      break;
    }
  }
}

Reaction Reaction::with_lambda(double lambda) const {
  if (kind_ != ReactionKind::eigen) throw Error(ErrorKind::configuration, "not an eigen reaction");
  return eigen(lambda, p_);
}

double Reaction::f(double t) const {
  t = std::abs(t);
  switch (kind_) {
    case ReactionKind::constant: return c_;
    case ReactionKind::power: return q_ == 1 ? c_ : c_ * std::pow(t, q_ - 1);
    case ReactionKind::eigen: return c_ * std::pow(t, p_ - 1);
    case ReactionKind::affine_cutoff: return c_ * (1 - t);
    case ReactionKind::table: return spline_.eval(t).f;
    case ReactionKind::custom: return fn_(t);
  }
  return 0;
}

double Reaction::F(double t) const {
  if (t < 0) return -F(-t);  // f even, F odd
  switch (kind_) {
    case ReactionKind::constant: return c_ * t;
    case ReactionKind::power: return c_ / q_ * std::pow(t, q_);
    case ReactionKind::eigen: return c_ / p_ * std::pow(t, p_);
    case ReactionKind::affine_cutoff: return c_ * (t - 0.5 * t * t);
    case ReactionKind::table:
    case ReactionKind::custom: {
      if (t > panel_t_.back()) return primitive_F(*this, t);
      auto it = std::upper_bound(panel_t_.begin(), panel_t_.end(), t);
      const std::size_t i = static_cast<std::size_t>(it - panel_t_.begin()) - 1;
      if (t == panel_t_[i]) return panel_F_[i];
      // The partial panel is at most 10% of t wide and f is smooth on it.
      auto fn = [this](double s) { return f(s); };
      return panel_F_[i] +
             boost::math::quadrature::gauss_kronrod<double, 21>::integrate(fn, panel_t_[i], t, 0);
    }
  }
  return 0;
}

std::string Reaction::describe() const {
  std::ostringstream os;
  switch (kind_) {
    case ReactionKind::constant: os << "f=" << c_; break;
    case ReactionKind::power: os << "f=" << c_ << "*t^" << (q_ - 1); break;
    case ReactionKind::eigen: os << "f=" << c_ << "*t^" << (p_ - 1); break;
    case ReactionKind::affine_cutoff: os << "f=" << c_ << "*(1-t)"; break;
    case ReactionKind::table: os << "table(" << ts_.size() << " points)"; break;
    case ReactionKind::custom: os << name_; break;
  }
  os << ", p=" << p_;
  return os.str();
}

// ----------------------------------------------------------------------- M_f

double compute_Mf(const std::function<double(double)>& f, const MfOptions& opt) {
  double a = opt.t_min, fa = f(a);
  if (!(fa > 0))
    throw Error(ErrorKind::ambiguous_threshold, "f is not positive at the first scan point");
  double fmin = fa;
  while (a < opt.horizon) {
    const double b = std::min(a * opt.growth, opt.horizon);
    const double fb = f(b);
    if (fb <= 0) {
      // More than one sign change inside one scan step means the threshold
      // is below the scan resolution.
      int changes = 0;
      double prev = fa;
      for (int k = 1; k <= 64; ++k) {
        const double v = f(a + (b - a) * k / 64.0);
        if ((prev > 0) != (v > 0)) ++changes;
        prev = v;
      }
      if (changes > 1)
        throw Error(ErrorKind::ambiguous_threshold, "f oscillates in sign near t = " + std::to_string(a));
      double lo = a, hi = b;
      for (int it = 0; it < 200 && hi - lo > 4 * kEps * hi; ++it) {
        const double m = 0.5 * (lo + hi);
        (f(m) > 0 ? lo : hi) = m;
      }
      return hi;
    }
    fmin = std::min(fmin, fb);
    a = b, fa = fb;
  }
  if (!(fmin > 0)) throw Error(ErrorKind::ambiguous_threshold, "f has no positive margin on the scan");
  return kInf;
}

double primitive_F(const Reaction& r, double t) {
  if (t < 0) return -primitive_F(r, -t);
  // Table knots are the only places where f loses smoothness.
  std::vector<double> cuts{0.0};
  for (double x : r.table_ts())
    if (x > 0 && x < t) cuts.push_back(x);
  cuts.push_back(t);
  double acc = 0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
    acc += integrate([&r](double s) { return r.f(s); }, cuts[i], cuts[i + 1]);
  return acc;
}

// --------------------------------------------------------------- PhiTransform

PhiTransform::PhiTransform(Reaction r) : r_(std::move(r)) {
  const double p = r_.p();
  // phi(0+) is finite iff F^{-1/p} is integrable at 0; for the closed-form
  // families this is F ~ t^q with q < p.
  if (auto e = power_exponent()) {
    lo_ = *e > 0 ? *phi_closed_form(0.0) : -kInf;
  } else {
    lo_ = phi(1e-300);
    if (!(lo_ > -1e150)) lo_ = -kInf;
  }
  if (std::isfinite(r_.Mf())) {
    hi_ = phi(r_.Mf());
  } else if (auto e = power_exponent(); e && *e < 0) {
    // q > p: t^{(p-q)/p} -> 0, phi bounded above.
    const double q = r_.q(), c = r_.c();
    hi_ = -std::pow(q / c, 1.0 / p) * p / (p - q);
  } else {
    hi_ = kInf;
  }
}

std::optional<double> PhiTransform::power_exponent() const {
  switch (r_.kind()) {
    case ReactionKind::constant: return (p() - 1) / p();
    case ReactionKind::power: return (p() - r_.q()) / p();
    case ReactionKind::eigen: return 0.0;
    default: return std::nullopt;
  }
}

std::optional<double> PhiTransform::phi_closed_form(double t) const {
  const auto e = power_exponent();
  if (!e) return std::nullopt;
  const double p = this->p();
  // F = (c/q) t^q.
  const double q = r_.kind() == ReactionKind::constant ? 1.0 : r_.q();
  const double k = std::pow(q / r_.c(), 1.0 / p);
  if (*e == 0) return k * std::log(t);
  return k / *e * (std::pow(t, *e) - 1);
}

double PhiTransform::phi(double t) const {
  if (!(t > 0)) throw Error(ErrorKind::domain, "phi needs t > 0");
  if (t > r_.Mf()) throw Error(ErrorKind::domain, "phi needs t <= M_f");
  const double ip = -1.0 / p();
  if (t >= 1) return integrate([&](double s) { return std::pow(r_.F(s), ip); }, 1.0, t);
  // s = e^x removes the blow-up of F^{-1/p} at 0.
  return -integrate([&](double x) {
    const double s = std::exp(x);
    return std::pow(r_.F(s), ip) * s;
  }, std::log(t), 0.0);
}

double PhiTransform::psi(double s) const {
  if (!(s > lo_) || s > hi_) throw Error(ErrorKind::domain, "s outside the range of phi");
  if (s == 0) return 1.0;
  // Bracket in x = log t, then TOMS748.
  auto g = [&](double x) { return phi(std::exp(x)) - s; };
  const double xmax = std::isfinite(r_.Mf()) ? std::log(r_.Mf()) : 700.0;
  double lo, hi;
  if (s < 0) {
    hi = 0;
    lo = -1;
    while (g(lo) > 0) {
      hi = lo;
      lo *= 2;
      if (lo < -700) throw Error(ErrorKind::domain, "psi bracket underflow");
    }
  } else {
    lo = 0;
    hi = std::min(1.0, xmax);
    while (g(hi) < 0) {
      if (hi >= xmax) throw Error(ErrorKind::domain, "s outside the range of phi");
      lo = hi;
      hi = std::min(2 * hi, xmax);
    }
  }
  boost::uintmax_t iters = 200;
  const auto r = boost::math::tools::toms748_solve(
      g, lo, hi, boost::math::tools::eps_tolerance<double>(52), iters);
  return std::exp(0.5 * (r.first + r.second));
}

double PhiTransform::d2psi_at(double t) const {
  const double p = this->p();
  return std::pow(r_.F(t), 2.0 / p - 1) * r_.f(t) / p;
}

double PhiTransform::psi_ratio_at(double t) const {
  const double p = this->p();
  return std::pow(r_.F(t), 1.0 / p - 1) * r_.f(t) / p;
}

// ----------------------------------------------------------------- hypotheses

const ConditionResult& HypothesisReport::get(const std::string& name) const {
  for (const auto& c : conditions)
    if (c.name == name) return c;
  throw Error(ErrorKind::configuration, "unknown condition " + name);
}

bool HypothesisReport::theorem_condition() const {
  return get("F^(1/p) concave").pass && get("F/f convex").pass;
}

bool HypothesisReport::all_pass() const {
  return std::all_of(conditions.begin(), conditions.end(), [](const auto& c) { return c.pass; });
}

namespace {

// Signed convexity defect of g at the middle of (a, b, c), scaled by the
// largest |g|: positive means g lies above its chord (not convex).
double convexity_defect(double a, double b, double c, double ga, double gb, double gc) {
  const double chord = ((c - b) * ga + (b - a) * gc) / (c - a);
  const double scale = std::max({std::abs(ga), std::abs(gb), std::abs(gc), 1e-300});
  return (gb - chord) / scale;
}

// margin < 0 demands strictness.
ConditionResult triple_scan(const std::string& name, const std::vector<double>& x,
                            const std::vector<double>& g, bool convex, double tol) {
  ConditionResult res;
  res.name = name;
  res.worst = -kInf;
  for (std::size_t i = 1; i + 1 < x.size(); ++i) {
    double d = convexity_defect(x[i - 1], x[i], x[i + 1], g[i - 1], g[i], g[i + 1]);
    if (!convex) d = -d;
    if (d > res.worst) {
      res.worst = d;
      res.triple = {x[i - 1], x[i], x[i + 1]};
    }
  }
  res.pass = !(res.worst > tol);
  return res;
}

}  // namespace

HypothesisReport check_hypotheses(const Reaction& r, const std::vector<double>& grid) {
  const double p = r.p();
  std::vector<double> t;
  for (double x : grid)
    if (x > 0 && x < r.Mf()) t.push_back(x);
  std::sort(t.begin(), t.end());
  const std::size_t n = t.size();
  std::vector<double> Fv(n), fv(n);
  for (std::size_t i = 0; i < n; ++i) Fv[i] = r.F(t[i]), fv[i] = r.f(t[i]);

  // Rounding-level slack for the non-strict tests.
  constexpr double tol = 1e-10;
  // Strict test: the defect must be below -margin.
  constexpr double margin = 1e-10;
  HypothesisReport rep;

  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = std::pow(Fv[i], 1.0 / p);
  rep.conditions.push_back(triple_scan("F^(1/p) concave", t, g, false, tol));

  for (std::size_t i = 0; i < n; ++i) g[i] = Fv[i] / fv[i];
  rep.conditions.push_back(triple_scan("F/f convex", t, g, true, tol));

  {
    ConditionResult res;
    res.name = "f/t^(p-1) non-increasing";
    res.worst = -kInf;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const double a = fv[i] / std::pow(t[i], p - 1), b = fv[i + 1] / std::pow(t[i + 1], p - 1);
      const double d = (b - a) / std::max({std::abs(a), std::abs(b), 1e-300});
      if (d > res.worst) {
        res.worst = d;
        res.triple = {t[i], t[i + 1], t[i + 1]};
      }
    }
    res.pass = !(res.worst > tol);
    rep.conditions.push_back(res);
  }

  {
    std::vector<double> tau(n);
    for (std::size_t i = 0; i < n; ++i) tau[i] = std::pow(t[i], p), g[i] = Fv[i];
    ConditionResult res = triple_scan("F(t^(1/p)) strictly concave", tau, g, false, -margin);
    for (double& x : res.triple) x = std::pow(x, 1.0 / p);
    rep.conditions.push_back(res);
  }

  {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = std::log(t[i]);
      g[i] = std::exp((p - 1) * x[i]) / fv[i];
    }
    ConditionResult res = triple_scan("exp((p-1)t)/f(exp t) convex", x, g, true, tol);
    rep.conditions.push_back(res);
  }
  return rep;
}

std::vector<double> default_grid(const Reaction& r, int n) {
  std::vector<double> g(n);
  if (std::isfinite(r.Mf())) {
    for (int i = 0; i < n; ++i) g[i] = r.Mf() * (1e-3 + (1 - 2e-3) * i / (n - 1.0));
  } else {
    for (int i = 0; i < n; ++i) g[i] = std::pow(10.0, -3 + 6.0 * i / (n - 1.0));
  }
  return g;
}

LemmaVarphiReport check_lemmavarphi(const PhiTransform& T, const std::vector<double>& s_grid) {
  const std::size_t n = s_grid.size();
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = T.psi(s_grid[i]);
  if (n >= 3 && !check_hypotheses(T.reaction(), t).theorem_condition())
    throw Error(ErrorKind::precondition, "F^(1/p) concave and F/f convex must hold first");

  LemmaVarphiReport rep;
  std::vector<double> ratio(n), inv(n);
  for (std::size_t i = 0; i < n; ++i) {
    ratio[i] = T.psi_ratio_at(t[i]);
    inv[i] = T.inv_psi_ratio_at(t[i]);
  }
  constexpr double tol = 1e-10;
  rep.worst_increase = -kInf;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double d = (ratio[i + 1] - ratio[i]) / std::max(std::abs(ratio[i]), 1e-300);
    rep.worst_increase = std::max(rep.worst_increase, d);
  }
  rep.ratio_non_increasing = !(rep.worst_increase > tol);
  rep.worst_convexity_defect = -kInf;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double d = convexity_defect(s_grid[i - 1], s_grid[i], s_grid[i + 1], inv[i - 1], inv[i],
                                      inv[i + 1]);
    if (d > rep.worst_convexity_defect) {
      rep.worst_convexity_defect = d;
      rep.worst_triple = {s_grid[i - 1], s_grid[i], s_grid[i + 1]};
    }
  }
  rep.inverse_ratio_convex = !(rep.worst_convexity_defect > tol);
  return rep;
}

const char* to_string(Existence e) {
  switch (e) {
    case Existence::exists: return "exists";
    case Existence::only_eigenfunctions: return "only-eigenfunctions";
    case Existence::no_nontrivial: return "no-nontrivial";
  }
  return "?";
}

BrezisOswald brezis_oswald_check(const Reaction& r, double lambda1) {
  const double p = r.p();
  constexpr double t0 = 1e-8, t1 = 1e6;
  BrezisOswald b;
  b.mu0 = r.f(t0) / std::pow(t0, p - 1);
  b.mu_inf = r.f(t1) / std::pow(t1, p - 1);
  auto same = [](double x, double y) { return std::abs(x - y) <= 1e-9 * std::max(std::abs(x), std::abs(y)); };
  if (same(b.mu0, lambda1) && same(b.mu_inf, lambda1))
    b.verdict = Existence::only_eigenfunctions;
  else if (b.mu_inf < lambda1 && lambda1 < b.mu0)
    b.verdict = Existence::exists;
  else
    b.verdict = Existence::no_nontrivial;
  return b;
}

}  // namespace finsler
