#include "finsler/concavity.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>

namespace finsler {

// ------------------------------------------------------------ MeshFunction

MeshFunction::MeshFunction(const Mesh& mesh, std::vector<double> values)
    : mesh_(&mesh), values_(std::move(values)), locator_(mesh) {
  if (values_.size() != mesh.n_nodes()) throw Error(ErrorKind::configuration, "field size does not match the mesh");
}

double MeshFunction::operator()(const Vec2& x) const {
  const auto loc = locator_.locate(x);
  if (!loc) throw Error(ErrorKind::domain, "point outside the mesh");
  const Tri& T = mesh_->tris[loc->tri];
  double s = 0;
  for (int k = 0; k < 3; ++k) {
    const double v = values_[T[k]];
    if (!std::isfinite(v)) throw Error(ErrorKind::domain, "point next to an excluded node");
    s += loc->bary[k] * v;
  }
  return s;
}

double MeshFunction::lipschitz(const ConvexDomain& region) const {
  double L = 0;
  for (std::size_t t = 0; t < mesh_->n_tris(); ++t) {
    const Tri& T = mesh_->tris[t];
    bool ok = true;
    for (int k = 0; k < 3 && ok; ++k) ok = std::isfinite(values_[T[k]]) && region.contains(mesh_->nodes[T[k]]);
    if (!ok) continue;
    const auto G = mesh_->hat_gradients(t);
    L = std::max(L, (values_[T[0]] * G[0] + values_[T[1]] * G[1] + values_[T[2]] * G[2]).norm());
  }
  return L;
}

double MeshFunction::sup_norm() const {
  double m = 0;
  for (double v : values_)
    if (std::isfinite(v)) m = std::max(m, std::abs(v));
  return m;
}

std::vector<double> transform_field(const std::vector<double>& u, const std::function<double(double)>& phi,
                                    double floor_rel) {
  const double top = *std::max_element(u.begin(), u.end());
  const double floor = floor_rel * top;
  std::vector<double> v(u.size());
  for (std::size_t i = 0; i < u.size(); ++i)
    v[i] = (u[i] > 0 && u[i] >= floor) ? phi(u[i]) : std::numeric_limits<double>::quiet_NaN();
  return v;
}

// ------------------------------------------------------- concavity function

namespace {

// The combination is anchored at the nearer endpoint so that x = y, t = 0
// and t = 1 give exactly zero, and swapping (x, y, t) with (y, x, 1 - t)
// evaluates the same point.
Vec2 combine(const Vec2& x, const Vec2& y, double t) {
  return t <= 0.5 ? Vec2(y + t * (x - y)) : Vec2(x + (1 - t) * (y - x));
}

double defect(double vx, double vy, double vz, double t) {
  const double d = vx - vy;
  return t <= 0.5 ? (vy - vz) + t * d : (vx - vz) - (1 - t) * d;
}

}  // namespace

double concavity_function(const PlaneFn& v, const Vec2& x, const Vec2& y, double t) {
  return defect(v(x), v(y), v(combine(x, y, t)), t);
}

double concavity_function(const PlaneFn& v, const ConvexDomain& omega, const Vec2& x, const Vec2& y, double t) {
  if (!omega.contains(x) || !omega.contains(y)) throw Error(ErrorKind::domain, "point outside the domain");
  if (t < 0 || t > 1) throw Error(ErrorKind::domain, "t outside [0, 1]");
  return concavity_function(v, x, y, t);
}

namespace {

double radical_inverse(std::uint64_t i, unsigned base) {
  double inv = 1.0 / base, f = inv, r = 0;
  while (i > 0) {
    r += f * static_cast<double>(i % base);
    i /= base;
    f *= inv;
  }
  return r;
}

struct Scanner {
  const PlaneFn& v;
  const ConvexDomain& region;
  ConcavityReport& rep;

  double eval(const Vec2& x, const Vec2& y, double t) {
    try {
      const double vx = v(x), vy = v(y), vz = v(combine(x, y, t));
      ++rep.n_evaluated;
      rep.sup_norm = std::max({rep.sup_norm, std::abs(vx), std::abs(vy), std::abs(vz)});
      return defect(vx, vy, vz, t);
    } catch (const Error&) {
      ++rep.n_skipped;
      return -kInf;
    }
  }

  // Coordinate ascent over (x1, x2, y1, y2, t) with step halving.
  Triple refine(Triple tr) {
    double sx = 0.02 * region.diameter(), st = 0.05;
    const double stop = 1e-7 * region.diameter();
    for (int sweep = 0; sweep < 400 && sx > stop; ++sweep) {
      bool improved = false;
      for (int c = 0; c < 5; ++c)
        for (int sign : {1, -1}) {
          Triple cand = tr;
          if (c < 2) cand.x[c] += sign * sx;
          else if (c < 4) cand.y[c - 2] += sign * sx;
          else cand.t = std::clamp(cand.t + sign * st, 0.0, 1.0);
          if (!region.contains(cand.x) || !region.contains(cand.y)) continue;
          cand.value = eval(cand.x, cand.y, cand.t);
          if (cand.value > tr.value) tr = cand, improved = true;
        }
      if (!improved) sx *= 0.5, st *= 0.5;
    }
    return tr;
  }
};

}  // namespace

ConcavityReport max_concavity_violation(const PlaneFn& v, const ConvexDomain& region, const ConcavityOptions& opt) {
  ConcavityReport rep;
  rep.n_t = opt.n_t;
  Scanner sc{v, region, rep};
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  double shift[4];
  for (double& s : shift) s = U(rng);
  const auto [lo, hi] = region.bbox();
  const Vec2 span = hi - lo;
  auto coord = [&](std::uint64_t i, int d) {
    static constexpr unsigned bases[4] = {2, 3, 5, 7};
    const double u = radical_inverse(i, bases[d]) + shift[d];
    return u - std::floor(u);
  };
  std::vector<Triple> best;  // top candidates, worst first
  const std::size_t keep = static_cast<std::size_t>(std::max(opt.n_refine, 1));
  const long max_draws = 50L * opt.n_pairs;
  for (std::uint64_t i = 1; rep.n_pairs < opt.n_pairs && static_cast<long>(i) <= max_draws; ++i) {
    const Vec2 x = lo + Vec2(coord(i, 0) * span.x(), coord(i, 1) * span.y());
    const Vec2 y = lo + Vec2(coord(i, 2) * span.x(), coord(i, 3) * span.y());
    if (!region.contains(x) || !region.contains(y)) continue;
    ++rep.n_pairs;
    double vx, vy;
    try {
      vx = v(x);
      vy = v(y);
    } catch (const Error&) {
      rep.n_skipped += opt.n_t;
      continue;
    }
    for (int k = 1; k <= opt.n_t; ++k) {
      const double t = static_cast<double>(k) / (opt.n_t + 1);
      double c;
      try {
        const double vz = v(combine(x, y, t));
        ++rep.n_evaluated;
        rep.sup_norm = std::max({rep.sup_norm, std::abs(vx), std::abs(vy), std::abs(vz)});
        c = defect(vx, vy, vz, t);
      } catch (const Error&) {
        ++rep.n_skipped;
        continue;
      }
      if (best.size() < keep || c > best.back().value) {
        // Strict comparison keeps the earliest triple on ties.
        const Triple tr{x, y, t, c};
        auto pos = std::upper_bound(best.begin(), best.end(), tr,
                                    [](const Triple& a, const Triple& b) { return a.value > b.value; });
        best.insert(pos, tr);
        if (best.size() > keep) best.pop_back();
      }
    }
  }
  for (const Triple& tr : best) rep.refined.push_back(sc.refine(tr));
  std::stable_sort(rep.refined.begin(), rep.refined.end(),
                   [](const Triple& a, const Triple& b) { return a.value > b.value; });
  if (!rep.refined.empty()) {
    rep.worst = rep.refined.front();
    rep.max_violation = rep.worst.value;
  }
  rep.tol = opt.tol >= 0 ? opt.tol : 1e-12 * std::max(1.0, rep.sup_norm);
  rep.passed = rep.max_violation <= rep.tol;
  return rep;
}

ConcavityReport max_concavity_violation(const MeshFunction& v, const ConvexDomain& region,
                                        const ConcavityOptions& opt) {
  ConcavityOptions o = opt;
  const double lip = v.lipschitz(region);
  if (o.tol < 0) o.tol = o.tol_factor * v.mesh().h * lip;
  ConcavityReport rep = max_concavity_violation([&v](const Vec2& x) { return v(x); }, region, o);
  rep.lipschitz = lip;
  return rep;
}

void write_concavity_json(const ConcavityReport& r, std::ostream& out) {
  nlohmann::json j;
  auto triple = [](const Triple& t) {
    return nlohmann::json{{"x", {t.x.x(), t.x.y()}}, {"y", {t.y.x(), t.y.y()}}, {"t", t.t}, {"value", t.value}};
  };
  j["max_violation"] = r.max_violation;
  j["worst"] = triple(r.worst);
  j["n_pairs"] = r.n_pairs;
  j["n_t"] = r.n_t;
  j["n_evaluated"] = r.n_evaluated;
  j["n_skipped"] = r.n_skipped;
  j["tol"] = r.tol;
  j["lipschitz"] = r.lipschitz;
  j["sup_norm"] = r.sup_norm;
  j["passed"] = r.passed;
  j["boundary"] = r.boundary_summary;
  auto& ref = j["refined"] = nlohmann::json::array();
  for (const auto& t : r.refined) ref.push_back(triple(t));
  out << j.dump(2) << '\n';
}

void write_triples_csv(const ConcavityReport& r, std::ostream& out) {
  out << "x1,x2,y1,y2,t,value\n" << std::setprecision(17);
  for (const auto& t : r.refined)
    out << t.x.x() << ',' << t.x.y() << ',' << t.y.x() << ',' << t.y.y() << ',' << t.t << ',' << t.value << '\n';
}

// --------------------------------------------------------- harmonic concave

HarmonicReport harmonic_concave_check(const std::function<double(double)>& g,
                                      const std::vector<std::pair<double, double>>& pairs, double tol) {
  HarmonicReport rep;
  for (const auto& [x, y] : pairs) {
    const double gx = g(x), gy = g(y);
    if (!(gx + gy > 0)) continue;
    const double lhs = (gx + gy) * g(0.5 * (x + y)), rhs = 2 * gx * gy;
    const double d = lhs - rhs;
    ++rep.n_checked;
    if (d < rep.worst) rep.worst = d, rep.x = x, rep.y = y;
    if (d < -tol * (std::abs(lhs) + std::abs(rhs))) rep.pass = false;
  }
  return rep;
}

HarmonicReport harmonic_concave_scan(const std::function<double(double)>& g, double a, double b, int n, double tol) {
  std::vector<std::pair<double, double>> pairs;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) pairs.emplace_back(a + (b - a) * i / (n - 1), a + (b - a) * j / (n - 1));
  return harmonic_concave_check(g, pairs, tol);
}

// -------------------------------------------------------------- Kennington

double b_eps(const Integrand& H, const Vec2& z, double eps) {
  const double p = H.p();
  const double Hq = std::pow(H.value(z), 2.0 / p);
  if (Hq == 0) return p - std::pow(eps, p / 2);
  return p + ((p - 1) * Hq - eps) * std::pow(eps + Hq, (p - 2) / 2);
}

KenningtonReport kennington_hypothesis_check(const Integrand& H, const PhiTransform& T,
                                             const std::vector<double>& s_grid, double eps, double z_max) {
  KenningtonReport rep;
  const Reaction& f = T.reaction();
  const double p = T.p();
  std::vector<double> ts(s_grid.size());
  for (std::size_t k = 0; k < s_grid.size(); ++k) ts[k] = T.psi(s_grid[k]);
  double prev = kInf;
  rep.ratio_non_increasing = true;
  for (double t : ts) {
    const double r = f.f(t) / std::pow(f.F(t), 1 - 1 / p);
    if (std::isfinite(prev)) {
      const double inc = (r - prev) / std::max(std::abs(prev), 1e-300);
      rep.worst_increase = std::max(rep.worst_increase, inc);
      if (inc > 1e-9) rep.ratio_non_increasing = false;
    }
    prev = r;
  }
  rep.lemma = check_lemmavarphi(T, s_grid);
  // psi''/psi' along s; pairs at dyadic index gaps.
  std::vector<std::pair<double, double>> pairs;
  for (std::size_t gap = 1; gap < s_grid.size(); gap *= 2)
    for (std::size_t i = 0; i + gap < s_grid.size(); i += std::max<std::size_t>(1, gap / 4))
      pairs.emplace_back(s_grid[i], s_grid[i + gap]);
  rep.harmonic = harmonic_concave_check([&T](double s) { return T.psi_ratio_at(T.psi(s)); }, pairs, 1e-9);
  rep.b0 = b_eps(H, Vec2::Zero(), eps);
  rep.min_b = rep.b0;
  for (int a = 0; a < 64; ++a)
    for (int k = 0; k <= 40; ++k) {
      const double r = 1e-3 * std::pow(z_max / 1e-3, k / 40.0);
      rep.min_b = std::min(rep.min_b, b_eps(H, r * unit(2 * kPi * a / 64), eps));
    }
  rep.b_positive = rep.min_b > 0;
  return rep;
}

// ---------------------------------------------------------------- Korevaar

QuadraticFit quadratic_fit(const MeshFunction& v, const Vec2& x, const std::vector<std::vector<int>>& nb) {
  const Mesh& m = v.mesh();
  int n0 = -1;
  double best = kInf;
  for (std::size_t i = 0; i < m.n_nodes(); ++i) {
    const double d = (m.nodes[i] - x).squaredNorm();
    if (d < best) best = d, n0 = static_cast<int>(i);
  }
  std::set<int> ring{n0};
  for (int j : nb[n0]) ring.insert(j);
  std::set<int> ring2 = ring;
  for (int j : ring)
    for (int k : nb[j]) ring2.insert(k);
  std::vector<int> use;
  for (int j : ring2)
    if (std::isfinite(v.values()[j])) use.push_back(j);
  if (use.size() < 6) throw Error(ErrorKind::resolution, "fewer than 6 usable nodes for a quadratic fit");
  double s = 0;
  for (int j : use) s = std::max(s, (m.nodes[j] - x).norm());
  Eigen::MatrixXd A(use.size(), 6);
  Eigen::VectorXd b(use.size());
  for (std::size_t r = 0; r < use.size(); ++r) {
    const Vec2 d = (m.nodes[use[r]] - x) / s;
    A.row(r) << 1, d.x(), d.y(), 0.5 * d.x() * d.x(), d.x() * d.y(), 0.5 * d.y() * d.y();
    b[r] = v.values()[use[r]];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  if (qr.rank() < 6) throw Error(ErrorKind::resolution, "quadratic fit is rank deficient");
  const Eigen::VectorXd c = qr.solve(b);
  QuadraticFit fit;
  fit.value = c[0];
  fit.grad = Vec2(c[1], c[2]) / s;
  fit.hess << c[3], c[4], c[4], c[5];
  fit.hess /= s * s;
  return fit;
}

std::string KorevaarReport::summary() const {
  std::ostringstream os;
  os << std::setprecision(4) << "hessian " << (hessian_pass ? "pass" : "fail") << " (margin " << hessian_margin
     << ", " << hessian_samples << " samples); tangent planes " << (plane_pass ? "pass" : "fail") << " (margin "
     << plane_margin << ", " << plane_points << " points)";
  return os.str();
}

KorevaarReport korevaar_boundary_check(const MeshFunction& v, const ConvexDomain& omega, double delta,
                                       const KorevaarOptions& opt) {
  KorevaarReport rep;
  const Mesh& m = v.mesh();
  const auto nb = m.node_neighbours();
  const ConvexDomain half = inner_domain(omega, delta / 2);
  const bool polygon = omega.kind() == DomainKind::polygon;
  auto near_vertex = [&](const Vec2& x) { return polygon && omega.distance_to_vertex(x) < 2 * delta; };

  rep.hessian_margin = kInf;
  for (std::size_t i = 0; i < m.n_nodes(); ++i) {
    const double d = omega.signed_distance(m.nodes[i]);
    if (d < delta / 2 || d >= delta || !std::isfinite(v.values()[i]) || near_vertex(m.nodes[i])) continue;
    const QuadraticFit fit = quadratic_fit(v, m.nodes[i], nb);
    const double lmax = Eigen::SelfAdjointEigenSolver<Mat2>(fit.hess).eigenvalues().maxCoeff();
    ++rep.hessian_samples;
    if (-lmax < rep.hessian_margin) rep.hessian_margin = -lmax, rep.hessian_worst = m.nodes[i];
  }
  if (rep.hessian_samples < opt.min_strip_nodes)
    throw Error(ErrorKind::resolution, "only " + std::to_string(rep.hessian_samples) + " mesh nodes in the boundary strip");
  rep.hessian_pass = rep.hessian_margin > opt.hessian_tol;

  rep.plane_margin = kInf;
  const double exclude = 2 * m.h;
  for (const Vec2& x0 : half.boundary_samples(opt.n_boundary)) {
    if (near_vertex(x0)) continue;
    const QuadraticFit fit = quadratic_fit(v, x0, nb);
    ++rep.plane_points;
    for (std::size_t i = 0; i < m.n_nodes(); ++i) {
      const double vi = v.values()[i];
      const Vec2 d = m.nodes[i] - x0;
      if (!std::isfinite(vi) || d.norm() <= exclude) continue;
      const double margin = (fit.value + fit.grad.dot(d) - vi) / d.squaredNorm();
      if (margin < rep.plane_margin) rep.plane_margin = margin, rep.plane_worst = x0;
    }
  }
  if (rep.plane_points == 0) throw Error(ErrorKind::resolution, "no admissible boundary points");
  rep.plane_pass = rep.plane_margin > 0;
  return rep;
}

}  // namespace finsler
