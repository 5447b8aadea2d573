// Command line front end: solve, suite, check-anisotropy, barrier.
#include "finsler/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

using namespace finsler;

int main(int argc, char** argv) {
  CLI::App app{"Anisotropic p-Laplacian solver and concavity checker"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand
  app.set_help_flag("--help", "print this help and exit");  // -h would clash with --h
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<double> h;
  app.add_option("--out", out, "output directory (default: the config's output entry)");
  app.add_option("--seed", seed, "override the scan seed");
  app.add_option("--h", h, "override the mesh size")->check(CLI::PositiveNumber);

  std::string config, dir;
  auto* solve = app.add_subcommand("solve", "run the full pipeline on one config");
  solve->add_option("config", config)->required()->check(CLI::ExistingFile);
  auto* suite = app.add_subcommand("suite", "run every config in a directory");
  suite->add_option("dir", dir)->required()->check(CLI::ExistingDirectory);
  auto* aniso = app.add_subcommand("check-anisotropy", "gauge and Hessian probes only");
  aniso->add_option("config", config)->required()->check(CLI::ExistingFile);
  auto* barrier = app.add_subcommand("barrier", "Hopf barrier checks");
  barrier->add_option("config", config)->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  auto apply = [&](ExperimentConfig& c) {
    if (seed) c.seed = *seed;
    if (h) c.h = *h;
  };
  try {
    if (*suite) {
      const int code = run_suite(dir, out.empty() ? "out" : out, apply);
      std::cout << "summary: " << (out.empty() ? "out" : out) << "/summary.csv\n";
      return code;
    }
    ExperimentConfig cfg = load_config(config);
    apply(cfg);
    const std::string target = out.empty() ? cfg.output : out;
    const RunOutcome o = *solve ? run_experiment(cfg, target) : *aniso ? check_anisotropy(cfg, target)
                                                                       : run_barrier(cfg, target);
    if (!o.failed_stage.empty()) std::cerr << "failed at stage " << o.failed_stage << ": " << o.report["error"]["message"].get<std::string>() << '\n';
    std::cout << cfg.name << ": " << (o.exit_code == 0 ? "pass" : "fail") << " (" << target << ")\n";
    return o.exit_code;
  } catch (const Error& e) {
    std::cerr << "config: " << e.what() << '\n';
    return 2;
  }
}
