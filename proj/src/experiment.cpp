#include "finsler/experiment.hpp"

#include "finsler/barrier.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

namespace finsler {

using nlohmann::json;

// ------------------------------------------------------------------ config

namespace {

void allow_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw Error(ErrorKind::configuration, where + " must be an object");
  const std::set<std::string> ok(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items())
    if (!ok.count(k)) throw Error(ErrorKind::configuration, "unknown key '" + k + "' in " + where);
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::configuration, std::string("bad value for '") + key + "': " + e.what());
  }
}

Vec2 to_vec(const json& j) {
  if (!j.is_array() || j.size() != 2) throw Error(ErrorKind::configuration, "points are [x, y] pairs");
  return {j[0].get<double>(), j[1].get<double>()};
}

std::vector<Vec2> read_points(const json& j, const char* key) {
  std::vector<Vec2> pts;
  if (j.contains(key))
    for (const auto& e : j.at(key)) pts.push_back(to_vec(e));
  return pts;
}

json points_json(const std::vector<Vec2>& pts) {
  json a = json::array();
  for (const auto& p : pts) a.push_back({p.x(), p.y()});
  return a;
}

}  // namespace

ConvexDomain DomainSpec::build() const {
  if (kind == "polygon") return ConvexDomain::polygon(vertices);
  if (kind == "disc") return ConvexDomain::disc(center, radius);
  throw Error(ErrorKind::configuration, "unknown domain kind '" + kind + "'");
}

ConvexBody AnisotropySpec::body() const {
  if (kind == "ell_r") return ConvexBody::ell_r(r);
  if (kind == "polytope") return ConvexBody::polytope(vertices);
  if (kind == "disc") return ConvexBody::disc(center, radius);
  throw Error(ErrorKind::configuration, "unknown anisotropy kind '" + kind + "'");
}

Reaction ReactionSpec::build(double p) const {
  if (kind == "constant") return Reaction::constant(c, p);
  if (kind == "power") return Reaction::power(c, q, p);
  if (kind == "eigen") return Reaction::eigen(1.0, p);
  if (kind == "affine_cutoff") return Reaction::affine_cutoff(c, p);
  if (kind == "table") return Reaction::table(ts, fs, p);
  throw Error(ErrorKind::configuration, "unknown reaction kind '" + kind + "'");
}

ExperimentConfig parse_config(const json& j) {
  allow_keys(j, "config", {"name", "domain", "anisotropy", "reaction", "h", "solver", "concavity", "delta", "seed",
                           "checks", "output"});
  ExperimentConfig c;
  read(j, "name", c.name);
  if (j.contains("domain")) {
    const json& d = j["domain"];
    allow_keys(d, "domain", {"kind", "vertices", "center", "radius"});
    read(d, "kind", c.domain.kind);
    c.domain.vertices = read_points(d, "vertices");
    if (d.contains("center")) c.domain.center = to_vec(d["center"]);
    read(d, "radius", c.domain.radius);
  }
  if (j.contains("anisotropy")) {
    const json& a = j["anisotropy"];
    allow_keys(a, "anisotropy", {"kind", "r", "vertices", "center", "radius", "p"});
    read(a, "kind", c.anisotropy.kind);
    read(a, "r", c.anisotropy.r);
    c.anisotropy.vertices = read_points(a, "vertices");
    if (a.contains("center")) c.anisotropy.center = to_vec(a["center"]);
    read(a, "radius", c.anisotropy.radius);
    read(a, "p", c.anisotropy.p);
  }
  if (j.contains("reaction")) {
    const json& r = j["reaction"];
    allow_keys(r, "reaction", {"kind", "c", "q", "ts", "fs", "p"});
    read(r, "kind", c.reaction.kind);
    read(r, "c", c.reaction.c);
    read(r, "q", c.reaction.q);
    read(r, "ts", c.reaction.ts);
    read(r, "fs", c.reaction.fs);
    if (r.contains("p") && r["p"].get<double>() != c.anisotropy.p)
      throw Error(ErrorKind::configuration, "reaction p differs from anisotropy p");
  }
  read(j, "h", c.h);
  if (j.contains("solver")) {
    const json& s = j["solver"];
    allow_keys(s, "solver", {"tol", "max_iter", "eps0", "eps_factor", "eps_floor"});
    read(s, "tol", c.tol);
    read(s, "max_iter", c.max_iter);
    read(s, "eps0", c.eps0);
    read(s, "eps_factor", c.eps_factor);
    read(s, "eps_floor", c.eps_floor);
  }
  if (j.contains("concavity")) {
    const json& s = j["concavity"];
    allow_keys(s, "concavity", {"n_pairs", "n_t", "n_refine", "tol_factor"});
    read(s, "n_pairs", c.n_pairs);
    read(s, "n_t", c.n_t);
    read(s, "n_refine", c.n_refine);
    read(s, "tol_factor", c.tol_factor);
  }
  read(j, "delta", c.delta);
  read(j, "seed", c.seed);
  if (j.contains("checks")) {
    const json& s = j["checks"];
    allow_keys(s, "checks", {"hypotheses", "criticality", "concavity", "kennington", "korevaar", "hopf"});
    read(s, "hypotheses", c.checks.hypotheses);
    read(s, "criticality", c.checks.criticality);
    read(s, "concavity", c.checks.concavity);
    read(s, "kennington", c.checks.kennington);
    read(s, "korevaar", c.checks.korevaar);
    read(s, "hopf", c.checks.hopf);
  }
  read(j, "output", c.output);
  if (!(c.h > 0)) throw Error(ErrorKind::configuration, "h must be positive");
  if (!(c.delta > 0)) throw Error(ErrorKind::configuration, "delta must be positive");
  if (c.n_pairs < 1 || c.n_t < 1 || c.n_refine < 0) throw Error(ErrorKind::configuration, "bad concavity scan sizes");
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorKind::configuration, "cannot open " + file.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::configuration, file.string() + ": " + e.what());
  }
  return parse_config(j);
}

json to_json(const ExperimentConfig& c) {
  json d{{"kind", c.domain.kind}};
  if (c.domain.kind == "polygon") d["vertices"] = points_json(c.domain.vertices);
  else d["center"] = {c.domain.center.x(), c.domain.center.y()}, d["radius"] = c.domain.radius;
  json a{{"kind", c.anisotropy.kind}, {"p", c.anisotropy.p}};
  if (c.anisotropy.kind == "ell_r") a["r"] = c.anisotropy.r;
  else if (c.anisotropy.kind == "polytope") a["vertices"] = points_json(c.anisotropy.vertices);
  else a["center"] = {c.anisotropy.center.x(), c.anisotropy.center.y()}, a["radius"] = c.anisotropy.radius;
  json r{{"kind", c.reaction.kind}};
  if (c.reaction.kind == "constant" || c.reaction.kind == "affine_cutoff") r["c"] = c.reaction.c;
  if (c.reaction.kind == "power") r["c"] = c.reaction.c, r["q"] = c.reaction.q;
  if (c.reaction.kind == "table") r["ts"] = c.reaction.ts, r["fs"] = c.reaction.fs;
  return json{{"name", c.name},
              {"domain", d},
              {"anisotropy", a},
              {"reaction", r},
              {"h", c.h},
              {"solver",
               {{"tol", c.tol},
                {"max_iter", c.max_iter},
                {"eps0", c.eps0},
                {"eps_factor", c.eps_factor},
                {"eps_floor", c.eps_floor}}},
              {"concavity",
               {{"n_pairs", c.n_pairs}, {"n_t", c.n_t}, {"n_refine", c.n_refine}, {"tol_factor", c.tol_factor}}},
              {"delta", c.delta},
              {"seed", c.seed},
              {"checks",
               {{"hypotheses", c.checks.hypotheses},
                {"criticality", c.checks.criticality},
                {"concavity", c.checks.concavity},
                {"kennington", c.checks.kennington},
                {"korevaar", c.checks.korevaar},
                {"hopf", c.checks.hopf}}},
              {"output", c.output}};
}

SolverOptions solver_options(const ExperimentConfig& c) {
  SolverOptions o;
  o.tol = c.tol;
  o.max_iter = c.max_iter;
  o.eps0 = c.eps0;
  o.eps_factor = c.eps_factor;
  o.eps_floor = c.eps_floor;
  o.check_existence = false;  // run as its own stage
  return o;
}

// --------------------------------------------------------------------- svg

void write_contour_svg(const Mesh& mesh, const std::vector<double>& values, std::ostream& out, int n_levels) {
  Vec2 lo = mesh.nodes.front(), hi = lo;
  for (const auto& x : mesh.nodes) lo = lo.cwiseMin(x), hi = hi.cwiseMax(x);
  const double size = 480, pad = 10;
  const double scale = size / std::max(hi.x() - lo.x(), hi.y() - lo.y());
  auto px = [&](const Vec2& x) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(2) << pad + (x.x() - lo.x()) * scale << ' '
      << pad + (hi.y() - x.y()) * scale;
    return s.str();
  };
  double vmin = kInf, vmax = -kInf;
  for (double v : values)
    if (std::isfinite(v)) vmin = std::min(vmin, v), vmax = std::max(vmax, v);
  const double W = pad * 2 + (hi.x() - lo.x()) * scale, Hh = pad * 2 + (hi.y() - lo.y()) * scale;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << std::ceil(W) << "\" height=\"" << std::ceil(Hh)
      << "\">\n";
  // Mesh boundary: edges used by a single triangle.
  std::map<std::pair<int, int>, int> edges;
  for (const Tri& t : mesh.tris)
    for (int k = 0; k < 3; ++k) ++edges[std::minmax(t[k], t[(k + 1) % 3])];
  out << "<path fill=\"none\" stroke=\"black\" stroke-width=\"1\" d=\"";
  for (const auto& [e, n] : edges)
    if (n == 1) out << "M" << px(mesh.nodes[e.first]) << "L" << px(mesh.nodes[e.second]);
  out << "\"/>\n";
  if (!(vmax > vmin)) {
    out << "</svg>\n";
    return;
  }
  for (int l = 1; l <= n_levels; ++l) {
    const double level = vmin + (vmax - vmin) * l / (n_levels + 1);
    const int hue = static_cast<int>(240.0 * (n_levels - l) / std::max(1, n_levels - 1));
    out << "<path fill=\"none\" stroke=\"hsl(" << hue << ",80%,45%)\" stroke-width=\"1\" data-level=\""
        << std::setprecision(6) << level << "\" d=\"";
    for (const Tri& t : mesh.tris) {
      std::vector<Vec2> cut;
      bool ok = true;
      for (int k = 0; k < 3; ++k) ok = ok && std::isfinite(values[t[k]]);
      if (!ok) continue;
      for (int k = 0; k < 3; ++k) {
        const int a = t[k], b = t[(k + 1) % 3];
        const double va = values[a] - level, vb = values[b] - level;
        if ((va < 0) != (vb < 0)) cut.push_back(mesh.nodes[a] + va / (va - vb) * (mesh.nodes[b] - mesh.nodes[a]));
      }
      if (cut.size() == 2) out << "M" << px(cut[0]) << "L" << px(cut[1]);
    }
    out << "\"/>\n";
  }
  out << "</svg>\n";
}

// ---------------------------------------------------------------- pipeline

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void write_text(const std::filesystem::path& file, const std::function<void(std::ostream&)>& fn) {
  std::ofstream out(file);
  if (!out) throw Error(ErrorKind::configuration, "cannot write " + file.string());
  fn(out);
}

bool hypotheses_gate(const HypothesisReport& h) {
  return h.get("f/t^(p-1) non-increasing").pass && h.theorem_condition() &&
         (h.get("F(t^(1/p)) strictly concave").pass || h.get("exp((p-1)t)/f(exp t) convex").pass);
}

json hypotheses_json(const HypothesisReport& h) {
  json c = json::array();
  for (const auto& r : h.conditions) c.push_back({{"name", r.name}, {"pass", r.pass}, {"worst", r.worst}});
  return json{{"conditions", c}, {"pass", hypotheses_gate(h)}};
}

double center_of_mass_offset(const EnergyProblem& P, const Field& u) {
  const auto& m = P.lumped_mass();
  Vec2 cu = Vec2::Zero(), cm = Vec2::Zero();
  double su = 0, sm = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    cu += m[i] * u[i] * P.mesh.nodes[i];
    su += m[i] * u[i];
    cm += m[i] * P.mesh.nodes[i];
    sm += m[i];
  }
  return (cu / su - cm / sm).norm();
}

struct Solved {
  EnergyProblem P;
  SolveResult res;
  Reaction f;  // with the computed lambda for eigen runs
};

Solved solve_stage(const ExperimentConfig& cfg, std::string& stage, json& stages) {
  stage = "config";
  const ConvexDomain omega = cfg.domain.build();
  const Anisotropy H = cfg.anisotropy.build();
  const Reaction f = cfg.reaction.build(H.p());
  stage = "mesh";
  Mesh mesh = triangulate(omega, cfg.h);
  stages["mesh"] = {{"nodes", mesh.n_nodes()}, {"triangles", mesh.n_tris()}, {"h", mesh.h},
                    {"min_angle_deg", mesh.min_angle_deg()}};
  EnergyProblem P(H, f, omega, std::move(mesh), solver_options(cfg));
  const bool eigen = f.kind() == ReactionKind::eigen;
  stage = "existence";
  if (eigen) {
    stages["existence"] = {{"verdict", "eigenvalue problem"}};
  } else {
    double l1 = 0;
    const Existence e = existence_verdict(P, &l1);
    stages["existence"] = {{"verdict", to_string(e)}};
    if (l1 > 0) stages["existence"]["lambda1"] = l1;
    if (e == Existence::no_nontrivial) throw Error(ErrorKind::precondition, "no nontrivial nonnegative solution");
  }
  stage = "solve";
  SolveResult res = eigen ? rayleigh_eigen(P) : minimize_J(P);
  const Reaction fr = eigen ? f.with_lambda(res.eigenvalue) : f;
  json s{{"max_u", *std::max_element(res.field.begin(), res.field.end())},
         {"energy", res.energy},
         {"residual_EL", res.residual},
         {"projected_gradient", res.proj_grad},
         {"iterations", res.iterations},
         {"ladder", res.ladder},
         {"increments", res.increments},
         {"anomaly", res.anomaly},
         {"center_of_mass_offset", center_of_mass_offset(P, res.field)}};
  if (eigen) s["eigenvalue"] = res.eigenvalue;
  stages["solve"] = s;
  return Solved{std::move(P), std::move(res), fr};
}

void finish(RunOutcome& o, const json& checks) {
  bool pass = true;
  for (const auto& [k, v] : checks.items()) pass = pass && v.get<bool>();
  o.report["checks"] = checks;
  o.report["pass"] = pass && o.failed_stage.empty();
  if (o.failed_stage.empty()) o.exit_code = pass ? 0 : 1;
}

}  // namespace

RunOutcome run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  const auto t0 = Clock::now();
  std::filesystem::create_directories(out_dir);
  RunOutcome o;
  o.report = json{{"name", cfg.name}, {"seed", cfg.seed}, {"config", to_json(cfg)}};
  json stages = json::object(), checks = json::object();
  std::string stage = "config";
  double solve_time = 0;
  try {
    if (cfg.checks.hypotheses) {
      stage = "hypotheses";
      const Reaction f = cfg.reaction.build(cfg.anisotropy.p);
      const HypothesisReport h = check_hypotheses(f, default_grid(f, 400));
      stages["hypotheses"] = hypotheses_json(h);
      checks["hypotheses"] = hypotheses_gate(h);
      if (!hypotheses_gate(h)) throw Error(ErrorKind::precondition, "reaction hypotheses fail");
    }
    const auto ts = Clock::now();
    Solved S = solve_stage(cfg, stage, stages);
    solve_time = seconds_since(ts);
    const EnergyProblem& P = S.P;
    const Field& u = S.res.field;
    o.headline = S.f.kind() == ReactionKind::eigen ? S.res.eigenvalue : stages["solve"]["max_u"].get<double>();

    if (cfg.checks.criticality) {
      stage = "criticality";
      const EnergyProblem Pc(P.H, S.f, P.omega, P.mesh, P.opt);
      const CriticalityReport c = verify_energy_critical(Pc, u);
      stages["criticality"] = {{"distance", c.distance}, {"energy_gap", c.energy_gap}, {"tol", c.tol},
                               {"bound_holds", c.bound_holds}, {"critical", c.critical}};
      checks["criticality"] = c.critical && c.bound_holds;
    }

    stage = "transform";
    const PhiTransform T(S.f);
    const Field v = transform_field(u, [&T](double t) { return T.phi(t); });
    const MeshFunction mv(P.mesh, v);
    const long excluded = std::count_if(v.begin(), v.end(), [](double x) { return std::isnan(x); });
    stages["transform"] = {{"excluded_nodes", excluded}};
    const ConvexDomain region = inner_domain(P.omega, cfg.delta / 2);

    if (cfg.checks.concavity) {
      stage = "concavity";
      ConcavityOptions co;
      co.n_pairs = cfg.n_pairs;
      co.n_t = cfg.n_t;
      co.n_refine = cfg.n_refine;
      co.seed = cfg.seed;
      co.tol_factor = cfg.tol_factor;
      const ConcavityReport rep = max_concavity_violation(mv, region, co);
      std::ostringstream js;
      write_concavity_json(rep, js);
      stages["concavity"] = json::parse(js.str());
      o.max_violation = rep.max_violation;
      checks["concavity"] = rep.passed;
      write_text(out_dir / "triples.csv", [&](std::ostream& out) { write_triples_csv(rep, out); });
    }

    if (cfg.checks.kennington) {
      stage = "kennington";
      double lo = kInf, hi = -kInf;
      for (std::size_t i = 0; i < v.size(); ++i)
        if (std::isfinite(v[i]) && region.contains(P.mesh.nodes[i])) lo = std::min(lo, v[i]), hi = std::max(hi, v[i]);
      if (!(hi > lo)) throw Error(ErrorKind::resolution, "degenerate range of phi(u) on the scan region");
      std::vector<double> grid(200);
      for (int k = 0; k < 200; ++k) grid[k] = lo + (hi - lo) * k / 199.0;
      const double eps = P.needs_ladder() ? cfg.eps_floor : 0.0;
      const KenningtonReport k = kennington_hypothesis_check(*P.final_integrand(), T, grid, eps);
      stages["kennington"] = {{"ratio_non_increasing", k.ratio_non_increasing},
                              {"worst_increase", k.worst_increase},
                              {"lemma", k.lemma.pass()},
                              {"harmonic", k.harmonic.pass},
                              {"b0", k.b0},
                              {"min_b", k.min_b},
                              {"eps", eps}};
      checks["kennington"] = k.pass();
    }

    if (cfg.checks.korevaar) {
      stage = "korevaar";
      const KorevaarReport k = korevaar_boundary_check(mv, P.omega, cfg.delta);
      stages["korevaar"] = {{"hessian_margin", k.hessian_margin},
                            {"hessian_samples", k.hessian_samples},
                            {"plane_margin", k.plane_margin},
                            {"plane_points", k.plane_points},
                            {"summary", k.summary()}};
      if (stages.contains("concavity")) stages["concavity"]["boundary"] = k.summary();
      checks["korevaar"] = k.pass();
    }

    if (cfg.checks.hopf) {
      stage = "hopf";
      const HopfReport h = hopf_slope_check(P.mesh, u, P.omega);
      stages["hopf"] = {{"min_slope", h.min_slope}, {"mean_slope", h.mean_slope}, {"samples", h.n_samples},
                        {"step", h.step}};
      if (P.needs_ladder()) stages["hopf"]["note"] = "slope of the regularized problem; crystalline H is outside the lemma";
      checks["hopf"] = h.pass();
    }

    stage = "output";
    write_text(out_dir / "u.csv", [&](std::ostream& out) { write_field_csv(P.mesh, u, out); });
    write_text(out_dir / "v.csv", [&](std::ostream& out) { write_field_csv(P.mesh, v, out); });
    write_text(out_dir / "u.svg", [&](std::ostream& out) { write_contour_svg(P.mesh, u, out); });
    write_text(out_dir / "v.svg", [&](std::ostream& out) { write_contour_svg(P.mesh, v, out); });
  } catch (const Error& e) {
    o.failed_stage = stage;
    o.exit_code = 2;
    o.report["error"] = {{"stage", stage}, {"message", e.what()}};
  }
  o.report["stages"] = stages;
  finish(o, checks);
  o.report["timing"] = {{"solve_s", solve_time}, {"total_s", seconds_since(t0)}};
  write_text(out_dir / "report.json", [&](std::ostream& out) { out << o.report.dump(2) << '\n'; });
  return o;
}

int run_suite(const std::filesystem::path& dir, const std::filesystem::path& out_dir,
              const std::function<void(ExperimentConfig&)>& override) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::filesystem::create_directories(out_dir);
  std::ofstream csv(out_dir / "summary.csv");
  csv << "experiment,lambda1_or_max_u,max_concavity_violation,status\n" << std::setprecision(10);
  int failures = 0;
  for (const auto& file : files) {
    RunOutcome o;
    try {
      ExperimentConfig cfg = load_config(file);
      if (override) override(cfg);
      o = run_experiment(cfg, out_dir / file.stem());
    } catch (const Error& e) {
      o.exit_code = 2;
      o.failed_stage = "config";
    }
    failures += o.exit_code != 0;
    csv << file.stem().string() << ',' << o.headline << ',' << o.max_violation << ','
        << (o.exit_code == 0 ? "pass" : o.failed_stage.empty() ? "fail" : "fail:" + o.failed_stage) << '\n';
  }
  return failures == 0 ? 0 : 1;
}

RunOutcome check_anisotropy(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  RunOutcome o;
  o.report = json{{"name", cfg.name}, {"anisotropy", to_json(cfg)["anisotropy"]}};
  json checks = json::object();
  try {
    const Anisotropy H = cfg.anisotropy.build();
    double asym = 0;
    for (int k = 0; k < 64; ++k) {
      const Vec2 z = unit(2 * kPi * k / 64);
      asym = std::max(asym, std::abs(H.gauge(z) - H.gauge(-z)) / H.gauge(z));
    }
    o.report["even"] = H.body().is_even();
    o.report["max_gauge_asymmetry"] = asym;
    o.report["crystalline"] = H.smoothness() == Smoothness::crystalline;
    o.report["coercivity_constant"] = H.coercivity_constant();
    std::unique_ptr<RegularizedAnisotropy> reg;
    const Integrand* probe = &H;
    if (H.smoothness() == Smoothness::crystalline) {
      reg = std::make_unique<RegularizedAnisotropy>(mollify_regularize(H, 1e-2));
      probe = reg.get();
      o.report["regularization"] = {{"eps", 1e-2}, {"min_envelope_gap", reg->min_envelope_gap()},
                                    {"max_deviation", reg->max_deviation()}};
      checks["envelope"] = reg->min_envelope_gap() >= 0;
    }
    const HessianProbe hp = hessian_probe_Hp2(*probe);
    o.report["hessian"] = {{"lambda_hat", hp.lambda_hat}, {"Lambda_hat", hp.Lambda_hat},
                           {"degenerate", hp.degenerate}, {"kink_fallbacks", hp.kink_fallbacks}};
    checks["hessian"] = hp.lambda_hat > 0 && !hp.degenerate;
    const ThetaProbe tp = hessian_probe_H_theta(*probe, {1e-3, 1e-2, 1e-1, 1.0});
    o.report["theta"] = {{"thetas", tp.thetas}, {"lambda_tilde", tp.lambda_tilde},
                         {"Lambda_tilde", tp.Lambda_tilde}, {"lambda_variation", tp.lambda_variation},
                         {"Lambda_variation", tp.Lambda_variation}};
    checks["theta"] = tp.theta_independent;
  } catch (const Error& e) {
    o.failed_stage = "probes";
    o.exit_code = 2;
    o.report["error"] = {{"stage", "probes"}, {"message", e.what()}};
  }
  finish(o, checks);
  write_text(out_dir / "anisotropy.json", [&](std::ostream& out) { out << o.report.dump(2) << '\n'; });
  return o;
}

RunOutcome run_barrier(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  const auto t0 = Clock::now();
  std::filesystem::create_directories(out_dir);
  RunOutcome o;
  o.report = json{{"name", cfg.name}, {"config", to_json(cfg)}};
  json stages = json::object(), checks = json::object();
  std::string stage = "config";
  try {
    Solved S = solve_stage(cfg, stage, stages);
    const EnergyProblem& P = S.P;
    const ConvexBody& body = P.H.body();

    stage = "touching";
    std::optional<TouchingConfig> cfg_touch;
    Vec2 x0 = Vec2::Zero();
    // The sample admitting the largest annulus.
    for (const Vec2& x : P.omega.boundary_samples(64)) {
      auto c = hopf_touching_config(P.omega, x, body, P.mesh.h);
      if (c && (!cfg_touch || c->annulus.r > cfg_touch->annulus.r)) cfg_touch = c, x0 = x;
    }
    if (!cfg_touch) throw Error(ErrorKind::resolution, "no touching annulus above the mesh size");
    const GaugeAnnulus& a = cfg_touch->annulus;
    stages["touching"] = {{"x0", {x0.x(), x0.y()}}, {"x1", {a.x1.x(), a.x1.y()}}, {"r", a.r},
                          {"margin", cfg_touch->margin}};

    stage = "profile";
    const BarrierProfile w = barrier_profile(P.p(), 2, a.r, 1.0);
    const double defect = profile_invariant_defect(w);
    stages["profile"] = {{"A", w.A}, {"B", w.B}, {"invariant_defect", defect}};
    checks["profile"] = defect <= 1e-9;

    stage = "barrier_pde";
    const auto Hs = P.final_integrand();
    std::vector<double> hs, res;
    for (double h : {a.r / 8, a.r / 16, a.r / 32}) {
      hs.push_back(h);
      res.push_back(verify_barrier_pde(a, w, annulus_mesh(a, h), Hs.get()));
    }
    const double rate = std::log2(res[1] / res[2]);
    stages["barrier_pde"] = {{"h", hs}, {"residual", res}, {"observed_order", rate}};
    checks["barrier_pde"] = rate >= 0.9;

    stage = "sandwich";
    const SandwichReport sw = barrier_sandwich(P, S.res.field, a);
    stages["sandwich"] = {{"m", sw.profile.m}, {"region_nodes", sw.region_nodes},
                          {"accepted", sw.comparison.accepted}, {"rejection", sw.comparison.rejection},
                          {"violations", sw.comparison.violations.size()},
                          {"max_violation", sw.comparison.max_violation}};
    checks["sandwich"] = sw.comparison.holds();

    stage = "hopf";
    const HopfReport h = hopf_slope_check(P.mesh, S.res.field, P.omega);
    stages["hopf"] = {{"min_slope", h.min_slope}, {"mean_slope", h.mean_slope}, {"samples", h.n_samples}};
    checks["hopf"] = h.pass();
    write_text(out_dir / "barrier.csv", [&](std::ostream& out) {
      write_field_csv(P.mesh, barrier_nodal(a, sw.profile, P.mesh), out);
    });
  } catch (const Error& e) {
    o.failed_stage = stage;
    o.exit_code = 2;
    o.report["error"] = {{"stage", stage}, {"message", e.what()}};
  }
  o.report["stages"] = stages;
  finish(o, checks);
  o.report["timing"] = {{"total_s", seconds_since(t0)}};
  write_text(out_dir / "barrier.json", [&](std::ostream& out) { out << o.report.dump(2) << '\n'; });
  return o;
}

}  // namespace finsler
