#pragma once

#include "finsler/common.hpp"
#include "finsler/spline.hpp"

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace finsler {

enum class ReactionKind { constant, power, eigen, affine_cutoff, table, custom };

const char* to_string(ReactionKind kind);

/// Reaction term f on [0, inf) (extended evenly), its primitive F and the
/// threshold M_f = inf{t > 0 : f(t) <= 0}.
class Reaction {
 public:
  /// f = c.
  static Reaction constant(double c, double p);
  /// f = c t^{q-1}, F = (c / q) t^q.
  static Reaction power(double c, double q, double p);
  /// f = lambda t^{p-1}.
  static Reaction eigen(double lambda, double p);
  /// f = c (1 - t).
  static Reaction affine_cutoff(double c, double p);
  /// Natural cubic spline through (ts, fs), constant beyond the table.
  static Reaction table(std::vector<double> ts, std::vector<double> fs, double p);
  static Reaction custom(std::function<double(double)> f, double p, std::string name = "custom");

  ReactionKind kind() const { return kind_; }
  double p() const { return p_; }
  double c() const { return c_; }
  double q() const { return q_; }
  const std::vector<double>& table_ts() const { return ts_; }
  const std::vector<double>& table_fs() const { return fs_; }
  /// Same family with the eigen coefficient replaced.
  Reaction with_lambda(double lambda) const;

  double f(double t) const;
  double F(double t) const;
  double f_plus(double t) const { return std::max(f(t), 0.0); }
  double Mf() const { return Mf_; }
  bool has_closed_form_F() const { return kind_ != ReactionKind::table && kind_ != ReactionKind::custom; }
  std::string describe() const;

 private:
  Reaction() = default;
  void finish();

  ReactionKind kind_ = ReactionKind::constant;
  double p_ = 2, c_ = 1, q_ = 1;
  std::vector<double> ts_, fs_;
  CubicSpline spline_;
  std::function<double(double)> fn_;
  std::string name_;
  // Cumulative primitive on geometric panels for table/custom reactions.
  std::vector<double> panel_t_, panel_F_;
  double Mf_ = kInf;
};

struct MfOptions {
  double t_min = 1e-8;
  double horizon = 1e6;
  double growth = 1.05;  // geometric scan ratio
};

/// Bracketing on a geometric scan, then bisection. Throws ambiguous_threshold
/// when f is not positive at the first scan point or changes sign more than
/// once inside the bracketing step.
double compute_Mf(const std::function<double(double)>& f, const MfOptions& opt = {});

/// F(t) = int_0^t f by adaptive Gauss-Kronrod, independent of any cache.
double primitive_F(const Reaction& r, double t);

/// phi(t) = int_1^t F(s)^{-1/p} ds on (0, M_f] and its inverse psi.
class PhiTransform {
 public:
  explicit PhiTransform(Reaction r);
  const Reaction& reaction() const { return r_; }
  double p() const { return r_.p(); }

  double phi(double t) const;
  double psi(double s) const;
  /// Closed form for the constant, power and eigen families.
  std::optional<double> phi_closed_form(double t) const;
  /// Exponent a with phi = affine(t^a) for power reactions, (p - q) / p; 0
  /// stands for the logarithmic case.
  std::optional<double> power_exponent() const;

  double dphi(double t) const { return std::pow(r_.F(t), -1.0 / p()); }
  /// psi' = F(psi)^{1/p}, psi'' = (1/p) F(psi)^{2/p-1} f(psi); both at t = psi(s).
  double dpsi_at(double t) const { return std::pow(r_.F(t), 1.0 / p()); }
  double d2psi_at(double t) const;
  /// psi''/psi' = (F^{1/p})' and psi'/psi'' at t = psi(s).
  double psi_ratio_at(double t) const;
  double inv_psi_ratio_at(double t) const { return 1.0 / psi_ratio_at(t); }

  /// phi(0+) (possibly -inf) and phi(M_f) (possibly +inf).
  double range_lo() const { return lo_; }
  double range_hi() const { return hi_; }

 private:
  Reaction r_;
  double lo_ = -kInf, hi_ = kInf;
};

struct ConditionResult {
  std::string name;
  bool pass = true;
  double worst = 0;                  // largest signed defect, scaled
  std::array<double, 3> triple{};    // offending abscissae
};

struct HypothesisReport {
  std::vector<ConditionResult> conditions;
  const ConditionResult& get(const std::string& name) const;
  /// Concavity of F^{1/p} and convexity of F/f.
  bool theorem_condition() const;
  bool all_pass() const;
};

/// Discrete tests on consecutive grid triples in (0, M_f):
///   "F^(1/p) concave", "F/f convex", "f/t^(p-1) non-increasing",
///   "F(t^(1/p)) strictly concave", "exp((p-1)t)/f(exp t) convex".
HypothesisReport check_hypotheses(const Reaction& r, const std::vector<double>& grid);
/// n points in (0, M_f): uniform if M_f is finite, geometric on [1e-3, 1e3] otherwise.
std::vector<double> default_grid(const Reaction& r, int n);

struct LemmaVarphiReport {
  bool ratio_non_increasing = false;  // psi''/psi'
  bool inverse_ratio_convex = false;  // psi'/psi''
  double worst_increase = 0;
  double worst_convexity_defect = 0;
  std::array<double, 3> worst_triple{};
  bool pass() const { return ratio_non_increasing && inverse_ratio_convex; }
};

/// s_grid is increasing inside the range of phi. Throws precondition when
/// the reaction hypotheses fail on the image grid.
LemmaVarphiReport check_lemmavarphi(const PhiTransform& T, const std::vector<double>& s_grid);

enum class Existence { exists, only_eigenfunctions, no_nontrivial };

const char* to_string(Existence e);

struct BrezisOswald {
  double mu0 = 0, mu_inf = 0;
  Existence verdict = Existence::no_nontrivial;
};

/// mu0 and mu_inf estimated as f(t)/t^{p-1} at t = 1e-8 and t = 1e6.
BrezisOswald brezis_oswald_check(const Reaction& r, double lambda1);

}  // namespace finsler
