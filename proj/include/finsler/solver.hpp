#pragma once

#include "finsler/anisotropy.hpp"
#include "finsler/domain.hpp"
#include "finsler/reaction.hpp"

#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace finsler {

/// Nodal values of a P1 field on a mesh.
using Field = std::vector<double>;

struct SolverOptions {
  double tol = 1e-8;          // projected gradient, times (1 + |J|)
  int max_iter = 200;         // Newton/gradient iterations per stage
  double eps0 = 0.1;          // regularization ladder, crystalline H only
  double eps_factor = 0.5;
  double eps_floor = 1e-4;
  RegularizationOptions reg;
  bool check_existence = true;
  double eigen_tol = 1e-9;    // sup-norm change between eigen iterates
  int eigen_max_iter = 500;
};

/// Anisotropy, reaction, domain and mesh with a shared exponent p.
struct EnergyProblem {
  EnergyProblem(Anisotropy H, Reaction f, ConvexDomain omega, Mesh mesh, SolverOptions opt = {});

  Anisotropy H;
  Reaction f;
  ConvexDomain omega;
  Mesh mesh;
  SolverOptions opt;

  double p() const { return H.p(); }
  bool needs_ladder() const { return H.smoothness() == Smoothness::crystalline; }
  /// eps0, eps0 * factor, ... with the last stage clamped to the floor.
  std::vector<double> ladder() const;
  /// Integrand of the final stage: H itself, or H_n at the floor.
  std::shared_ptr<const Integrand> final_integrand() const;
  /// Vertex-rule weights sum_{T ni i} |T| / 3.
  const std::vector<double>& lumped_mass() const { return mass_; }
  /// Scaled distance to the boundary, zero on boundary nodes.
  Field initial_guess() const;

 private:
  std::vector<double> mass_;
};

struct TraceEntry {
  int stage = 0;
  int iter = 0;
  double eps = 0;
  double energy = 0;
  double proj_grad = 0;
  bool newton = false;
};

struct SolveResult {
  Field field;
  double energy = 0;
  std::vector<TraceEntry> trace;
  std::vector<double> ladder;        // empty for smooth H
  std::vector<double> increments;    // ||u_n - u_{n-1}||_inf between stages
  double residual = 0;               // residual_EL at the end
  double proj_grad = 0;
  double eigenvalue = 0;             // normalized (eigen) solves only
  Existence existence = Existence::exists;
  std::string anomaly;               // non-empty when flagged
  double wall_time = 0;
  int iterations = 0;
};

/// sum_T |T| [H(grad w)/p - vertex rule of F(w)].
double assemble_J(const Integrand& H, const Reaction& f, const Mesh& mesh, const Field& w);
double assemble_J(const EnergyProblem& problem, const Field& w);
/// Gradient of assemble_J with respect to the nodal values (all nodes).
Field gradient_J(const Integrand& H, const Reaction& f, const Mesh& mesh, const Field& w);
/// (1/p) sum_T |T|/3 sum_k [eps F(w_k)^{2/p} + H^{2/p}(grad w)]^{p/2} - vertex rule of F.
double assemble_I_eps(const Integrand& H, const Reaction& f, const Mesh& mesh, const Field& w, double eps);
/// sum_T |T| H(grad w)/p - sum_i m_i s_i w_i with the source s frozen.
double assemble_J_frozen(const Integrand& H, const Mesh& mesh, const Field& source, const Field& w);

/// Brezis-Oswald verdict; lambda1 is filled when it had to be computed.
Existence existence_verdict(const EnergyProblem& problem, double* lambda1 = nullptr);

SolveResult minimize_J(const EnergyProblem& problem);
SolveResult minimize_I_eps(const EnergyProblem& problem, double eps);
/// First eigenpair by nonlinear inverse iteration; the field is nonnegative
/// with sum_i m_i u_i^p = 1. eps > 0 adds the I_eps zero-order term.
SolveResult rayleigh_eigen(const EnergyProblem& problem, double eps = 0.0);

/// max over interior nodes i of |int (DH(Du)/p, Dphi_i) - f(u) phi_i| with
/// ||phi_i||_inf = 1. eps > 0 uses the I_eps Euler-Lagrange form.
double residual_EL(const Integrand& H, const Reaction& f, const Mesh& mesh, const Field& u, double eps = 0.0);
double residual_EL(const EnergyProblem& problem, const Field& u);

struct CriticalityReport {
  double distance = 0;     // ||argmin J_u - u||_inf
  double energy_gap = 0;   // J_u(u) - min J_u
  double max_u = 0;
  double Mf = kInf;
  bool bound_holds = true;  // 0 <= u <= M_f nodally (up to tolerance)
  bool critical = false;
  double tol = 0;
};

/// Re-solves the convex problem with f(u) frozen, starting from u.
CriticalityReport verify_energy_critical(const EnergyProblem& problem, const Field& u);

struct ComparisonReport {
  bool accepted = true;
  std::string rejection;
  std::vector<int> violations;  // nodes with upper < lower - tol
  double max_violation = 0;     // max(lower - upper) over the subregion
  double tol = 0;
  bool holds() const { return accepted && violations.empty(); }
};

/// `region` marks nodes of the subregion. Its boundary is the set of marked
/// nodes that touch an unmarked node or lie on the mesh boundary.
ComparisonReport comparison_check(const EnergyProblem& problem, const Field& upper, const Field& lower,
                                  const std::vector<char>& region, double harmonic_tol = 1e-3);

void write_solve_json(const SolveResult& r, std::ostream& out);

}  // namespace finsler
