#include "finsler/solver.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace finsler {

namespace {

using Clock = std::chrono::steady_clock;
using SpMat = Eigen::SparseMatrix<double>;

double f_prime(const Reaction& f, double t) {
  const double d = 1e-6 * std::max(1.0, std::abs(t));
  return (f.f(t + d) - f.f(t - d)) / (2 * d);
}

Mat2 psd(const Mat2& A) {
  Eigen::SelfAdjointEigenSolver<Mat2> es(A);
  const Eigen::Vector2d l = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * l.asDiagonal() * es.eigenvectors().transpose();
}

struct ElemTerm {
  double e = 0;
  Vec2 eg = Vec2::Zero();
  double ew = 0;
  Mat2 egg = Mat2::Zero();
  double eww = 0;
};

struct NodeTerm {
  double S = 0, s = 0, ds = 0;  // source value, derivative, curvature
};

// E(w) = sum_T |T|/3 sum_{k in T} e(grad w_T, w_k) - sum_i m_i S_i(w_i).
class Functional {
 public:
  explicit Functional(const Integrand& H) : H_(H), p_(H.p()) {}
  virtual ~Functional() = default;
  virtual bool depends_on_w() const { return false; }
  virtual ElemTerm elem(const Vec2& g, double w, bool hess) const = 0;
  virtual NodeTerm node(int i, double w) const = 0;

 protected:
  // (1/p)(c + H^{2/p}(g))^{p/2} and derivatives in g; c >= 0 is the zero-order part.
  ElemTerm efin(const Vec2& g, double c, bool hess) const {
    ElemTerm t;
    const double H = H_.value(g);
    const Vec2 DH = H_.gradient(g);
    if (p_ == 2) {
      t.e = 0.5 * (c + H);
      t.eg = 0.5 * DH;
      if (hess) t.egg = 0.5 * H_.hessian(g);
      return t;
    }
    const double q = 2.0 / p_;
    const double Hq = std::pow(H, q);
    const double a = c + Hq;
    t.e = std::pow(a, p_ / 2) / p_;
    if (a <= 0) return t;
    const Vec2 DHq = H > 0 ? Vec2(q * std::pow(H, q - 1) * DH) : Vec2::Zero();
    const double a1 = std::pow(a, p_ / 2 - 1);
    t.eg = 0.5 * a1 * DHq;
    if (hess && H > 0) {
      const Mat2 D2Hq = q * std::pow(H, q - 1) * H_.hessian(g) + q * (q - 1) * std::pow(H, q - 2) * DH * DH.transpose();
      t.egg = 0.5 * ((p_ / 2 - 1) * std::pow(a, p_ / 2 - 2) * DHq * DHq.transpose() + a1 * D2Hq);
    }
    return t;
  }

  const Integrand& H_;
  double p_;
};

class EnergyJ : public Functional {
 public:
  EnergyJ(const Integrand& H, const Reaction& f) : Functional(H), f_(f) {}
  ElemTerm elem(const Vec2& g, double, bool hess) const override {
    ElemTerm t;
    t.e = H_.value(g) / p_;
    t.eg = H_.gradient(g) / p_;
    if (hess) t.egg = H_.hessian(g) / p_;
    return t;
  }
  NodeTerm node(int, double w) const override { return {f_.F(w), f_.f(w), f_prime(f_, w)}; }

 private:
  const Reaction& f_;
};

class EnergyFrozen : public Functional {
 public:
  EnergyFrozen(const Integrand& H, const Field& s) : Functional(H), s_(s) {}
  ElemTerm elem(const Vec2& g, double, bool hess) const override {
    ElemTerm t;
    t.e = H_.value(g) / p_;
    t.eg = H_.gradient(g) / p_;
    if (hess) t.egg = H_.hessian(g) / p_;
    return t;
  }
  NodeTerm node(int i, double w) const override { return {s_[i] * w, s_[i], 0}; }

 private:
  const Field& s_;
};

class EnergyIeps : public Functional {
 public:
  EnergyIeps(const Integrand& H, const Reaction& f, double eps) : Functional(H), f_(f), eps_(eps) {}
  bool depends_on_w() const override { return true; }
  ElemTerm elem(const Vec2& g, double w, bool hess) const override {
    const double F = std::max(f_.F(w), 0.0);
    const double q = 2.0 / p_;
    ElemTerm t = efin(g, eps_ * std::pow(F, q), hess);
    // d/dw of the zero-order part, chain rule through (c + H^{2/p})^{p/2}/p.
    const double a = eps_ * std::pow(F, q) + std::pow(H_.value(g), q);
    const double Fq1 = p_ == 2 ? 1.0 : (F > 0 ? std::pow(F, q - 1) : 0.0);
    const double a1 = a > 0 ? std::pow(a, p_ / 2 - 1) : (p_ == 2 ? 1.0 : 0.0);
    t.ew = 0.5 * a1 * eps_ * q * Fq1 * f_.f(w);
    if (hess && p_ == 2) t.eww = 0.5 * eps_ * f_prime(f_, w);
    return t;
  }
  NodeTerm node(int, double w) const override { return {f_.F(w), f_.f(w), f_prime(f_, w)}; }

 private:
  const Reaction& f_;
  double eps_;
};

// Numerator (1/p) sum_T |T|/3 sum_k [c w_k^2 + H^{2/p}]^{p/2} with a frozen source.
class EnergyEigen : public Functional {
 public:
  EnergyEigen(const Integrand& H, double c, const Field& s) : Functional(H), c_(c), s_(s) {}
  bool depends_on_w() const override { return c_ > 0; }
  ElemTerm elem(const Vec2& g, double w, bool hess) const override {
    ElemTerm t = efin(g, c_ * w * w, hess);
    const double a = c_ * w * w + std::pow(H_.value(g), 2.0 / p_);
    const double a1 = a > 0 ? std::pow(a, p_ / 2 - 1) : (p_ == 2 ? 1.0 : 0.0);
    t.ew = a1 * c_ * w;
    if (hess) t.eww = a1 * c_;
    return t;
  }
  NodeTerm node(int i, double w) const override { return {s_[i] * w, s_[i], 0}; }

 private:
  double c_;
  const Field& s_;
};

struct Assembly {
  double value = 0;
  Field grad;
};

Assembly assemble(const Functional& E, const Mesh& mesh, const std::vector<double>& mass, const Field& w,
                  bool want_grad) {
  Assembly out;
  if (want_grad) out.grad.assign(mesh.n_nodes(), 0.0);
  double elem_sum = 0;
  for (std::size_t t = 0; t < mesh.n_tris(); ++t) {
    const Tri& T = mesh.tris[t];
    const double A = mesh.tri_area(t);
    const auto G = mesh.hat_gradients(t);
    const Vec2 g = w[T[0]] * G[0] + w[T[1]] * G[1] + w[T[2]] * G[2];
    if (!E.depends_on_w()) {
      const ElemTerm et = E.elem(g, 0, false);
      elem_sum += A * et.e;
      if (want_grad)
        for (int k = 0; k < 3; ++k) out.grad[T[k]] += A * et.eg.dot(G[k]);
      continue;
    }
    for (int k = 0; k < 3; ++k) {
      const ElemTerm et = E.elem(g, w[T[k]], false);
      elem_sum += A / 3 * et.e;
      if (want_grad) {
        for (int j = 0; j < 3; ++j) out.grad[T[j]] += A / 3 * et.eg.dot(G[j]);
        out.grad[T[k]] += A / 3 * et.ew;
      }
    }
  }
  double node_sum = 0;
  for (std::size_t i = 0; i < mesh.n_nodes(); ++i) {
    const NodeTerm nt = E.node(static_cast<int>(i), w[i]);
    node_sum += mass[i] * nt.S;
    if (want_grad) out.grad[i] -= mass[i] * nt.s;
  }
  out.value = elem_sum - node_sum;
  return out;
}

// Convex part of the Hessian on the free nodes (index map idx, -1 if fixed).
SpMat assemble_hessian(const Functional& E, const Mesh& mesh, const std::vector<double>& mass, const Field& w,
                       const std::vector<int>& idx, int n_free) {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(mesh.n_tris() * 9 + mesh.n_nodes());
  for (std::size_t t = 0; t < mesh.n_tris(); ++t) {
    const Tri& T = mesh.tris[t];
    const double A = mesh.tri_area(t);
    const auto G = mesh.hat_gradients(t);
    const Vec2 g = w[T[0]] * G[0] + w[T[1]] * G[1] + w[T[2]] * G[2];
    Mat2 K = Mat2::Zero();
    double diag[3] = {0, 0, 0};
    if (!E.depends_on_w()) {
      K = A * psd(E.elem(g, 0, true).egg);
    } else {
      for (int k = 0; k < 3; ++k) {
        const ElemTerm et = E.elem(g, w[T[k]], true);
        K += A / 3 * psd(et.egg);
        diag[k] = A / 3 * std::max(et.eww, 0.0);
      }
    }
    for (int a = 0; a < 3; ++a) {
      if (idx[T[a]] < 0) continue;
      for (int b = 0; b < 3; ++b)
        if (idx[T[b]] >= 0) trip.emplace_back(idx[T[a]], idx[T[b]], G[a].dot(K * G[b]) + (a == b ? diag[a] : 0.0));
    }
  }
  for (std::size_t i = 0; i < mesh.n_nodes(); ++i)
    if (idx[i] >= 0) {
      const double c = -E.node(static_cast<int>(i), w[i]).ds;
      if (c > 0) trip.emplace_back(idx[i], idx[i], mass[i] * c);
    }
  SpMat Hm(n_free, n_free);
  Hm.setFromTriplets(trip.begin(), trip.end());
  return Hm;
}

struct StageOutcome {
  Field w;
  double energy = 0;
  double proj_grad = 0;
  int iters = 0;
};

std::string describe_failure(const std::string& what, double pg, double tol, int stage, double eps) {
  std::ostringstream os;
  os << what << ": projected gradient " << std::scientific << std::setprecision(3) << pg << " > tol " << tol
     << " (stage " << stage << ", eps " << eps << ")";
  return os.str();
}

double projected_norm(const Mesh& mesh, const Field& w, const Field& g) {
  double m = 0;
  for (std::size_t i = 0; i < mesh.n_nodes(); ++i) {
    if (mesh.boundary[i]) continue;
    const double pg = (w[i] <= 0 && g[i] > 0) ? 0.0 : g[i];
    m = std::max(m, std::abs(pg));
  }
  return m;
}

// Projected Newton on {w >= 0, w = 0 on the boundary} with Armijo
// backtracking; falls back to a mass-scaled gradient step when the Newton
// direction is unusable.
StageOutcome projected_newton(const Functional& E, const Mesh& mesh, const std::vector<double>& mass, Field w,
                              const SolverOptions& opt, std::vector<TraceEntry>* trace, int stage, double eps,
                              double abs_tol = kInf) {
  const std::size_t n = mesh.n_nodes();
  for (std::size_t i = 0; i < n; ++i) w[i] = mesh.boundary[i] ? 0.0 : std::max(w[i], 0.0);
  StageOutcome out;
  Assembly cur = assemble(E, mesh, mass, w, true);
  bool last_newton = false;
  for (int it = 0;; ++it) {
    const double pg = projected_norm(mesh, w, cur.grad);
    if (trace) trace->push_back({stage, it, eps, cur.value, pg, last_newton});
    const double tol = std::min(opt.tol * (1 + std::abs(cur.value)), abs_tol);
    if (pg <= tol) {
      out = {w, cur.value, pg, it};
      return out;
    }
    if (it >= opt.max_iter)
      throw Error(ErrorKind::convergence, describe_failure("no convergence after " + std::to_string(it) + " iterations", pg, tol, stage, eps));
    std::vector<int> idx(n, -1);
    int n_free = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (!mesh.boundary[i] && !(w[i] <= 0 && cur.grad[i] > 0)) idx[i] = n_free++;

    Field d(n, 0.0);
    bool newton = false;
    {
      SpMat Hm = assemble_hessian(E, mesh, mass, w, idx, n_free);
      Eigen::VectorXd rhs(n_free);
      double scale = 0, mmax = 0;
      for (std::size_t i = 0; i < n; ++i)
        if (idx[i] >= 0) rhs[idx[i]] = -cur.grad[i], mmax = std::max(mmax, mass[i]);
      for (int k = 0; k < Hm.outerSize(); ++k) scale = std::max(scale, Hm.coeff(k, k));
      Eigen::SimplicialLDLT<SpMat> ldlt;
      for (double mu = 0; mu < 1e3;) {
        SpMat M = Hm;
        if (mu > 0)
          for (std::size_t i = 0; i < n; ++i)
            if (idx[i] >= 0) M.coeffRef(idx[i], idx[i]) += mu * scale / mmax * mass[i];
        ldlt.compute(M);
        if (ldlt.info() == Eigen::Success && ldlt.vectorD().minCoeff() > 0) {
          const Eigen::VectorXd x = ldlt.solve(rhs);
          if (x.allFinite()) {
            for (std::size_t i = 0; i < n; ++i)
              if (idx[i] >= 0) d[i] = x[idx[i]];
            newton = true;
            break;
          }
        }
        mu = mu == 0 ? 1e-10 : mu * 100;
      }
    }

    bool at_floor = true;  // every trial stayed within the rounding of J
    auto line_search = [&](const Field& dir) -> bool {
      double slope = 0;
      for (std::size_t i = 0; i < n; ++i) slope += cur.grad[i] * dir[i];
      if (!(slope < 0)) return false;
      const double floor = 1e-12 * (1 + std::abs(cur.value));
      for (double alpha = 1.0; alpha > 1e-14; alpha *= 0.5) {
        Field trial(n);
        double decrease = 0;
        for (std::size_t i = 0; i < n; ++i) {
          trial[i] = mesh.boundary[i] ? 0.0 : std::max(w[i] + alpha * dir[i], 0.0);
          decrease += cur.grad[i] * (trial[i] - w[i]);
        }
        Assembly next = assemble(E, mesh, mass, trial, true);
        // Near the optimum the change in J drops below its rounding; there a
        // halved projected gradient decides instead of Armijo.
        const bool flat = std::abs(next.value - cur.value) <= floor;
        at_floor = at_floor && flat;
        const bool accept = flat ? projected_norm(mesh, trial, next.grad) < 0.5 * pg
                                 : next.value <= cur.value + 1e-4 * decrease;
        if (accept) {
          w = std::move(trial);
          cur = std::move(next);
          return true;
        }
      }
      return false;
    };

    last_newton = newton && line_search(d);
    if (!last_newton) {
      Field gd(n, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        if (idx[i] >= 0) gd[i] = -cur.grad[i] / mass[i];
      if (!line_search(gd)) {
        // Nothing decreases J any more: accept at the rounding floor,
        // otherwise report stagnation.
        if (pg <= 1e3 * tol || at_floor) {
          out = {w, cur.value, pg, it};
          return out;
        }
        throw Error(ErrorKind::convergence, describe_failure("stagnation", pg, tol, stage, eps));
      }
    }
  }
}

double sup_diff(const Field& a, const Field& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double sup_norm(const Field& a) {
  double m = 0;
  for (double x : a) m = std::max(m, std::abs(x));
  return m;
}

double p_norm(const Field& u, const std::vector<double>& mass, double p) {
  double s = 0;
  for (std::size_t i = 0; i < u.size(); ++i) s += mass[i] * std::pow(std::abs(u[i]), p);
  return std::pow(s, 1.0 / p);
}

double max_interior_abs(const Mesh& mesh, const Field& g) {
  double m = 0;
  for (std::size_t i = 0; i < mesh.n_nodes(); ++i)
    if (!mesh.boundary[i]) m = std::max(m, std::abs(g[i]));
  return m;
}

// Integrands of the ladder stages, or H alone for smooth anisotropies.
std::vector<std::pair<double, std::shared_ptr<const Integrand>>> stages(const EnergyProblem& P) {
  std::vector<std::pair<double, std::shared_ptr<const Integrand>>> out;
  if (!P.needs_ladder()) {
    out.emplace_back(0.0, std::make_shared<Anisotropy>(P.H));
    return out;
  }
  for (double e : P.ladder())
    out.emplace_back(e, std::make_shared<RegularizedAnisotropy>(mollify_regularize(P.H, e, P.opt.reg)));
  return out;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

// ----------------------------------------------------------------- problem

EnergyProblem::EnergyProblem(Anisotropy H_, Reaction f_, ConvexDomain omega_, Mesh mesh_, SolverOptions opt_)
    : H(std::move(H_)), f(std::move(f_)), omega(std::move(omega_)), mesh(std::move(mesh_)), opt(opt_) {
  if (std::abs(H.p() - f.p()) > 1e-14)
    throw Error(ErrorKind::configuration, "anisotropy and reaction use different p");
  if (!(opt.eps0 > 0) || !(opt.eps_factor > 0 && opt.eps_factor < 1) || !(opt.eps_floor > 0))
    throw Error(ErrorKind::configuration, "invalid regularization ladder");
  mass_.assign(mesh.n_nodes(), 0.0);
  for (std::size_t t = 0; t < mesh.n_tris(); ++t)
    for (int k = 0; k < 3; ++k) mass_[mesh.tris[t][k]] += mesh.tri_area(t) / 3;
}

std::vector<double> EnergyProblem::ladder() const {
  std::vector<double> out;
  for (double e = opt.eps0; e > opt.eps_floor * (1 + 1e-12); e *= opt.eps_factor) out.push_back(e);
  out.push_back(opt.eps_floor);
  return out;
}

std::shared_ptr<const Integrand> EnergyProblem::final_integrand() const {
  if (!needs_ladder()) return std::make_shared<Anisotropy>(H);
  return std::make_shared<RegularizedAnisotropy>(mollify_regularize(H, opt.eps_floor, opt.reg));
}

Field EnergyProblem::initial_guess() const {
  Field u(mesh.n_nodes());
  const double cap = std::isfinite(f.Mf()) ? 0.5 * f.Mf() : kInf;
  for (std::size_t i = 0; i < u.size(); ++i)
    u[i] = mesh.boundary[i] ? 0.0 : std::min(std::max(omega.signed_distance(mesh.nodes[i]), 0.0), cap);
  return u;
}

// ---------------------------------------------------------------- energies

double assemble_J(const Integrand& H, const Reaction& f, const Mesh& mesh, const Field& w) {
  std::vector<double> mass(mesh.n_nodes(), 0.0);
  for (std::size_t t = 0; t < mesh.n_tris(); ++t)
    for (int k = 0; k < 3; ++k) mass[mesh.tris[t][k]] += mesh.tri_area(t) / 3;
  return assemble(EnergyJ(H, f), mesh, mass, w, false).value;
}

double assemble_J(const EnergyProblem& P, const Field& w) {
  return assemble(EnergyJ(P.H, P.f), P.mesh, P.lumped_mass(), w, false).value;
}

Field gradient_J(const Integrand& H, const Reaction& f, const Mesh& mesh, const Field& w) {
  std::vector<double> mass(mesh.n_nodes(), 0.0);
  for (std::size_t t = 0; t < mesh.n_tris(); ++t)
    for (int k = 0; k < 3; ++k) mass[mesh.tris[t][k]] += mesh.tri_area(t) / 3;
  return assemble(EnergyJ(H, f), mesh, mass, w, true).grad;
}

double assemble_I_eps(const Integrand& H, const Reaction& f, const Mesh& mesh, const Field& w, double eps) {
  std::vector<double> mass(mesh.n_nodes(), 0.0);
  for (std::size_t t = 0; t < mesh.n_tris(); ++t)
    for (int k = 0; k < 3; ++k) mass[mesh.tris[t][k]] += mesh.tri_area(t) / 3;
  return assemble(EnergyIeps(H, f, eps), mesh, mass, w, false).value;
}

double assemble_J_frozen(const Integrand& H, const Mesh& mesh, const Field& source, const Field& w) {
  std::vector<double> mass(mesh.n_nodes(), 0.0);
  for (std::size_t t = 0; t < mesh.n_tris(); ++t)
    for (int k = 0; k < 3; ++k) mass[mesh.tris[t][k]] += mesh.tri_area(t) / 3;
  return assemble(EnergyFrozen(H, source), mesh, mass, w, false).value;
}

double residual_EL(const Integrand& H, const Reaction& f, const Mesh& mesh, const Field& u, double eps) {
  std::vector<double> mass(mesh.n_nodes(), 0.0);
  for (std::size_t t = 0; t < mesh.n_tris(); ++t)
    for (int k = 0; k < 3; ++k) mass[mesh.tris[t][k]] += mesh.tri_area(t) / 3;
  const Field g = eps > 0 ? assemble(EnergyIeps(H, f, eps), mesh, mass, u, true).grad
                          : assemble(EnergyJ(H, f), mesh, mass, u, true).grad;
  return max_interior_abs(mesh, g);
}

double residual_EL(const EnergyProblem& P, const Field& u) {
  return residual_EL(*P.final_integrand(), P.f, P.mesh, u);
}

// ------------------------------------------------------------------ solves

Existence existence_verdict(const EnergyProblem& P, double* lambda1) {
  // The verdict only needs lambda1 when it could fall between the limits.
  const BrezisOswald probe = brezis_oswald_check(P.f, 1.0);
  if (probe.mu0 >= 1e6 && probe.mu_inf <= 1e-6) return Existence::exists;
  if (probe.mu0 <= 0) return Existence::no_nontrivial;
  SolverOptions o = P.opt;
  o.check_existence = false;
  const double l1 = rayleigh_eigen(EnergyProblem(P.H, Reaction::eigen(1.0, P.p()), P.omega, P.mesh, o)).eigenvalue;
  if (lambda1) *lambda1 = l1;
  return brezis_oswald_check(P.f, l1).verdict;
}

namespace {

SolveResult run_ladder(const EnergyProblem& P, double eps_I) {
  const auto t0 = Clock::now();
  SolveResult res;
  if (P.opt.check_existence) {
    res.existence = existence_verdict(P, nullptr);
    if (res.existence == Existence::no_nontrivial)
      throw Error(ErrorKind::precondition, "no nontrivial nonnegative critical point exists for " + P.f.describe());
  }
  Field w = P.initial_guess();
  int stage = 0;
  std::shared_ptr<const Integrand> last;
  for (const auto& [eps, H] : stages(P)) {
    std::unique_ptr<Functional> E;
    if (eps_I > 0)
      E = std::make_unique<EnergyIeps>(*H, P.f, eps_I);
    else
      E = std::make_unique<EnergyJ>(*H, P.f);
    StageOutcome s = projected_newton(*E, P.mesh, P.lumped_mass(), w, P.opt, &res.trace, stage, eps);
    if (P.needs_ladder()) {
      res.ladder.push_back(eps);
      if (stage > 0) res.increments.push_back(sup_diff(s.w, w));
    }
    w = std::move(s.w);
    res.energy = s.energy;
    res.proj_grad = s.proj_grad;
    res.iterations += s.iters;
    last = H;
    ++stage;
  }
  res.residual = residual_EL(*last, P.f, P.mesh, w, eps_I);
  if (sup_norm(w) <= 1e-12 && res.existence == Existence::exists) res.anomaly = "trivial minimizer";
  res.field = std::move(w);
  res.wall_time = seconds_since(t0);
  return res;
}

}  // namespace

SolveResult minimize_J(const EnergyProblem& P) {
  if (P.f.kind() == ReactionKind::eigen) {
    // J is homogeneous here; the only nontrivial critical points are
    // eigenfunctions, found on the normalized set.
    if (P.opt.check_existence && existence_verdict(P, nullptr) == Existence::no_nontrivial)
      throw Error(ErrorKind::precondition, "eigen reaction with lambda different from lambda1");
    return rayleigh_eigen(P);
  }
  return run_ladder(P, 0.0);
}

SolveResult minimize_I_eps(const EnergyProblem& P, double eps) {
  if (eps < 0) throw Error(ErrorKind::domain, "eps must be nonnegative");
  if (!(P.p() - std::pow(eps, P.p() / 2) > 0))
    throw Error(ErrorKind::precondition, "p - eps^{p/2} must stay positive");
  if (P.f.kind() == ReactionKind::eigen) return rayleigh_eigen(P, eps);
  return run_ladder(P, eps);
}

SolveResult rayleigh_eigen(const EnergyProblem& P, double eps) {
  const auto t0 = Clock::now();
  const double p = P.p();
  const auto& mass = P.lumped_mass();
  double c = 0;
  if (eps > 0) {
    if (P.f.kind() != ReactionKind::eigen)
      throw Error(ErrorKind::precondition, "the eps term of the normalized problem needs an eigen reaction");
    c = eps * std::pow(P.f.c() / p, 2.0 / p);
  }
  SolveResult res;
  Field v = P.initial_guess();
  const double n0 = p_norm(v, mass, p);
  for (double& x : v) x /= n0;
  const Field zero(P.mesh.n_nodes(), 0.0);
  int stage = 0;
  for (const auto& [reg_eps, H] : stages(P)) {
    // Rayleigh quotient of the current iterate: p * numerator / ||v||_p^p.
    auto quotient = [&](const Field& u) {
      const EnergyEigen num(*H, c, zero);
      return p * assemble(num, P.mesh, mass, u, false).value / std::pow(p_norm(u, mass, p), p);
    };
    double lambda = quotient(v);
    const Field stage_start = v;
    bool done = false;
    for (int k = 0; k < P.opt.eigen_max_iter; ++k) {
      Field s(v.size());
      for (std::size_t i = 0; i < v.size(); ++i) s[i] = lambda * std::pow(v[i], p - 1);
      const EnergyEigen E(*H, c, s);
      // The warm start is nearly optimal close to convergence, so the inner
      // tolerance has to follow the starting gradient.
      const double g0 = projected_norm(P.mesh, v, assemble(E, P.mesh, mass, v, true).grad);
      double source_scale = 0;
      for (std::size_t i = 0; i < v.size(); ++i) source_scale = std::max(source_scale, mass[i] * s[i]);
      StageOutcome o = projected_newton(E, P.mesh, mass, v, P.opt, nullptr, stage, reg_eps,
                                        std::max(1e-6 * g0, 1e-13 * source_scale));
      const double nrm = p_norm(o.w, mass, p);
      if (!(nrm > 0)) throw Error(ErrorKind::convergence, "inverse iteration collapsed to zero");
      for (double& x : o.w) x /= nrm;
      const double lambda_new = quotient(o.w);
      const double change = sup_diff(o.w, v);
      res.trace.push_back({stage, k, reg_eps, lambda_new, change, true});
      res.iterations += o.iters;
      v = std::move(o.w);
      // Ties in the quotient keep the previous iterate's value.
      if (lambda_new < lambda) lambda = lambda_new;
      if (change <= P.opt.eigen_tol) {
        lambda = lambda_new;
        done = true;
        break;
      }
    }
    if (!done) throw Error(ErrorKind::convergence, "inverse iteration did not converge");
    if (P.needs_ladder()) {
      res.ladder.push_back(reg_eps);
      if (stage > 0) res.increments.push_back(sup_diff(v, stage_start));
    }
    res.eigenvalue = lambda;
    ++stage;
    if (stage == static_cast<int>(P.needs_ladder() ? P.ladder().size() : 1)) {
      // Residual of -div(DH/p) = lambda u^{p-1} (or its eps form).
      Field s(v.size());
      for (std::size_t i = 0; i < v.size(); ++i) s[i] = lambda * std::pow(v[i], p - 1);
      const EnergyEigen E(*H, c, s);
      res.residual = max_interior_abs(P.mesh, assemble(E, P.mesh, mass, v, true).grad);
      res.energy = quotient(v) / p - lambda / p;
    }
  }
  res.field = std::move(v);
  res.wall_time = seconds_since(t0);
  return res;
}

// ------------------------------------------------------------ verification

CriticalityReport verify_energy_critical(const EnergyProblem& P, const Field& u) {
  CriticalityReport r;
  const auto H = P.final_integrand();
  Field s(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) s[i] = P.f.f(u[i]);
  const EnergyFrozen E(*H, s);
  const double J0 = assemble(E, P.mesh, P.lumped_mass(), u, false).value;
  const StageOutcome o = projected_newton(E, P.mesh, P.lumped_mass(), u, P.opt, nullptr, 0, 0);
  r.distance = sup_diff(o.w, u);
  r.energy_gap = J0 - o.energy;
  r.max_u = sup_norm(u);
  r.Mf = P.f.Mf();
  const double bound_tol = 1e-6 * std::max(1.0, r.max_u);
  r.bound_holds = std::all_of(u.begin(), u.end(), [&](double x) { return x >= -bound_tol && x <= r.Mf + bound_tol; });
  r.tol = 10 * P.opt.tol * (1 + std::abs(o.energy));
  r.critical = r.energy_gap <= r.tol && r.distance <= 1e-6 * std::max(1.0, r.max_u);
  return r;
}

ComparisonReport comparison_check(const EnergyProblem& P, const Field& upper, const Field& lower,
                                  const std::vector<char>& region, double harmonic_tol) {
  ComparisonReport rep;
  const Mesh& m = P.mesh;
  rep.tol = 1e-6 * std::max(sup_norm(upper), sup_norm(lower));
  const auto nb = m.node_neighbours();
  std::vector<char> edge(m.n_nodes(), 0);
  for (std::size_t i = 0; i < m.n_nodes(); ++i) {
    if (!region[i]) continue;
    edge[i] = m.boundary[i];
    for (int j : nb[i]) edge[i] = edge[i] || !region[j];
  }
  for (std::size_t i = 0; i < m.n_nodes(); ++i)
    if (edge[i] && lower[i] > upper[i] + rep.tol) {
      rep.accepted = false;
      rep.rejection = "lower exceeds upper on the subregion boundary at node " + std::to_string(i);
      return rep;
    }
  const auto H = P.final_integrand();
  const Field zero(m.n_nodes(), 0.0);
  const Field g = assemble(EnergyFrozen(*H, zero), m, P.lumped_mass(), lower, true).grad;
  for (std::size_t i = 0; i < m.n_nodes(); ++i)
    if (region[i] && !edge[i] && std::abs(g[i]) > harmonic_tol) {
      rep.accepted = false;
      rep.rejection = "lower is not H-harmonic at node " + std::to_string(i);
      return rep;
    }
  for (std::size_t i = 0; i < m.n_nodes(); ++i) {
    if (!region[i]) continue;
    rep.max_violation = std::max(rep.max_violation, lower[i] - upper[i]);
    if (upper[i] < lower[i] - rep.tol) rep.violations.push_back(static_cast<int>(i));
  }
  return rep;
}

void write_solve_json(const SolveResult& r, std::ostream& out) {
  nlohmann::json j;
  j["energy"] = r.energy;
  j["residual_EL"] = r.residual;
  j["projected_gradient"] = r.proj_grad;
  j["eigenvalue"] = r.eigenvalue;
  j["existence"] = to_string(r.existence);
  j["anomaly"] = r.anomaly;
  j["wall_time_s"] = r.wall_time;
  j["iterations"] = r.iterations;
  j["ladder"] = r.ladder;
  j["increments"] = r.increments;
  j["max_u"] = sup_norm(r.field);
  auto& tr = j["trace"] = nlohmann::json::array();
  for (const auto& t : r.trace)
    tr.push_back({{"stage", t.stage}, {"iter", t.iter}, {"eps", t.eps}, {"energy", t.energy},
                  {"projected_gradient", t.proj_grad}, {"newton", t.newton}});
  out << j.dump(2) << '\n';
}

}  // namespace finsler
