#pragma once

#include "finsler/anisotropy.hpp"
#include "finsler/concavity.hpp"
#include "finsler/domain.hpp"
#include "finsler/reaction.hpp"
#include "finsler/solver.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace finsler {

struct DomainSpec {
  std::string kind = "disc";  // "polygon" | "disc"
  std::vector<Vec2> vertices;
  Vec2 center = Vec2::Zero();
  double radius = 1;
  ConvexDomain build() const;
  bool operator==(const DomainSpec&) const = default;
};

struct AnisotropySpec {
  std::string kind = "disc";  // "ell_r" | "polytope" | "disc"
  double r = 2;
  std::vector<Vec2> vertices;
  Vec2 center = Vec2::Zero();
  double radius = 1;
  double p = 2;
  ConvexBody body() const;
  Anisotropy build() const { return Anisotropy(body(), p); }
  bool operator==(const AnisotropySpec&) const = default;
};

struct ReactionSpec {
  std::string kind = "constant";  // "constant" | "power" | "eigen" | "affine_cutoff" | "table"
  double c = 1, q = 1;
  std::vector<double> ts, fs;
  Reaction build(double p) const;
  bool operator==(const ReactionSpec&) const = default;
};

struct ChecksSpec {
  bool hypotheses = true;
  bool criticality = true;
  bool concavity = true;
  bool kennington = true;
  bool korevaar = true;
  bool hopf = true;
  bool operator==(const ChecksSpec&) const = default;
};

struct ExperimentConfig {
  std::string name = "experiment";
  DomainSpec domain;
  AnisotropySpec anisotropy;
  ReactionSpec reaction;
  double h = 0.05;
  double tol = 1e-8;
  int max_iter = 200;
  double eps0 = 0.1, eps_factor = 0.5, eps_floor = 1e-4;
  int n_pairs = 20000, n_t = 17, n_refine = 16;
  double tol_factor = 0.1;
  double delta = 0.1;  // the scan runs on Omega_{delta/2}
  std::uint64_t seed = 1;
  ChecksSpec checks;
  std::string output = "out";
  bool operator==(const ExperimentConfig&) const = default;
};

/// Missing keys take the defaults above; unknown keys and a p that
/// differs between sections are configuration errors.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& file);
nlohmann::json to_json(const ExperimentConfig& c);

SolverOptions solver_options(const ExperimentConfig& c);

struct RunOutcome {
  int exit_code = 0;          // 0 pass, 1 a check failed, 2 a stage threw
  std::string failed_stage;   // empty on success
  nlohmann::json report;
  double headline = 0;        // lambda1 for eigen runs, max u otherwise
  double max_violation = 0;
};

/// hypotheses -> existence -> solve -> criticality -> phi transform ->
/// concavity scan -> boundary checks. Writes report.json, u.csv, v.csv,
/// triples.csv, u.svg and v.svg into out_dir.
RunOutcome run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

/// Runs every *.json in dir (sorted) into out_dir/<stem>/ and writes
/// out_dir/summary.csv. Returns 0 iff every run passed.
int run_suite(const std::filesystem::path& dir, const std::filesystem::path& out_dir,
              const std::function<void(ExperimentConfig&)>& override = {});

/// Gauge evenness and Hessian probes of the anisotropy only.
RunOutcome check_anisotropy(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

/// Hopf configuration, barrier profile and PDE residual, sandwich and slopes.
RunOutcome run_barrier(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

/// Marching-triangles contours of a P1 field; NaN nodes are skipped.
void write_contour_svg(const Mesh& mesh, const std::vector<double>& values, std::ostream& out, int n_levels = 12);

}  // namespace finsler
