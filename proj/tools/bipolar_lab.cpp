// bipolar_lab: command-line front end for single runs, eps sweeps and invariant checks.
//
//   bipolar_lab run   --config PATH [--out DIR] [--threads N] [--seed U64]
//   bipolar_lab sweep --config PATH [--out DIR] [--threads N] [--seed U64] [--eps E1 E2 ...]
//   bipolar_lab check [--seed U64]
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 failed check.

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bipolar/checks.hpp"
#include "bipolar/config.hpp"
#include "bipolar/error.hpp"
#include "bipolar/harness.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitCheck = 4;

int exit_code(const bipolar::Error& e) {
  return e.code() == bipolar::ErrorCode::config || e.code() == bipolar::ErrorCode::io ? kExitConfig : kExitNumerical;
}

void print_run(const bipolar::RunResult& r) {
  std::printf("eps %.6g  t %.6g  hydro steps %ld  dd steps %ld\n", r.config.eps, r.config.t_final, r.hydro_steps,
              r.dd_steps);
  std::printf("Psi(0) %.6e  Psi(t) %.6e  slack %.6e\n", r.psi0, r.psi_final, r.jterms.slack);
  for (const auto& c : r.lemma.checks)
    std::printf("  %s  lhs %.6e  rhs %.6e  %s\n", c.name.c_str(), c.lhs, c.rhs,
                !c.certified ? "uncertified" : (c.pass ? "ok" : "VIOLATED"));
  std::printf("mass drift %.3e  energy defect %.3e  dd energy residual %.3e\n", r.mass_drift, r.hydro_budget.defect,
              r.dd_energy_residual);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bipolar Euler-Poisson relaxation lab"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  int threads = 1;
  std::uint64_t seed = 20240101;
  std::vector<double> eps_override;

  auto* run = app.add_subcommand("run", "advance one configuration to t_final");
  run->add_option("--config", config_path, "run configuration (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "output directory (overrides the config)");
  run->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  run->add_option("--seed", seed, "seed for randomized checks");

  auto* sweep = app.add_subcommand("sweep", "run every eps of eps_list and fit the rate");
  sweep->add_option("--config", config_path, "sweep configuration (JSON)")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", out_dir, "output directory (overrides the config)");
  sweep->add_option("--threads", threads, "concurrent runs")->check(CLI::PositiveNumber);
  sweep->add_option("--seed", seed, "seed for randomized checks");
  sweep->add_option("--eps", eps_override, "eps values replacing eps_list (descending)");

  auto* check = app.add_subcommand("check", "run the invariant suites");
  check->add_option("--seed", seed, "seed for the randomized suites");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*check) {
      bool ok = true;
      for (const auto& r : bipolar::run_invariant_checks(seed)) {
        std::printf("%s %-22s %.3e (<= %.1e)\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.value, r.threshold);
        ok = ok && r.pass;
      }
      return ok ? 0 : kExitCheck;
    }

    bipolar::RunConfig cfg = bipolar::load_config(config_path);
    if (!out_dir.empty()) cfg.output = out_dir;

    if (*run) {
      const bipolar::RunResult r = bipolar::run_single(cfg);
      print_run(r);
      return 0;
    }

    if (!eps_override.empty()) {
      cfg.eps_list = eps_override;
      bipolar::validate(cfg);
    }
    const bipolar::SweepReport rep = bipolar::run_sweep(cfg, threads);
    for (const auto& row : rep.rows) {
      if (row.valid)
        std::printf("eps %-8.3g Psi(t) %.6e  slack %.3e  lemmas %d%d%d%d  %.2fs\n", row.eps, row.psi_final, row.slack,
                    row.lemma_pass[0], row.lemma_pass[1], row.lemma_pass[2], row.lemma_pass[3], row.wall_seconds);
      else
        std::printf("eps %-8.3g invalid: %s\n", row.eps, row.error.c_str());
    }
    std::printf("slope %.4f  C %.4e  monotone %s%s%s\n", rep.fit.slope, rep.fit.c_estimate, rep.monotone ? "yes" : "no",
                rep.fit.floor_limited ? "  (floor limited)" : "", rep.fit.not_applicable ? "  (not applicable)" : "");
    return 0;
  } catch (const bipolar::Error& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return exit_code(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumerical;
  }
}
