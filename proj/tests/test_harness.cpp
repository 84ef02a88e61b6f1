#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "bipolar/harness.hpp"

using namespace bipolar;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("bipolar_test_" + name);
  fs::remove_all(p);
  return p;
}

RunConfig small_config(int cells, double eps) {
  RunConfig c = load_config(std::string(BIPOLAR_SOURCE_DIR) + "/configs/baseline.json");
  c.cells = {cells};
  c.eps = eps;
  c.t_final = 0.02;
  c.checkpoint_every = 0.01;
  return c;
}

std::vector<std::vector<double>> read_csv(const fs::path& p, std::string* header = nullptr) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  if (header) *header = line;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

TEST(Config, ParsesBaseline) {
  const RunConfig c = load_config(std::string(BIPOLAR_SOURCE_DIR) + "/configs/baseline.json");
  EXPECT_EQ(c.dim, 1);
  EXPECT_EQ(c.cells, std::vector<int>{400});
  EXPECT_EQ(c.eps, 0.01);
  EXPECT_EQ(c.cfl, 0.25);
  EXPECT_EQ(c.poisson, PoissonMethod::direct_1d);
  EXPECT_TRUE(c.well_prepared);
  // Round trip through JSON.
  const RunConfig d = parse_config(to_json(c));
  EXPECT_EQ(to_json(d).dump(), to_json(c).dump());
}

TEST(Config, RejectsBadInput) {
  auto code_of = [](const nlohmann::json& j) {
    try {
      parse_config(j);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::io;
  };
  EXPECT_EQ(code_of({{"eps", -1.0}}), ErrorCode::config);
  EXPECT_EQ(code_of({{"eps_list", {0.01, 0.1, 0.001}}}), ErrorCode::config);
  EXPECT_EQ(code_of({{"t_final", 0.0}}), ErrorCode::config);
  EXPECT_EQ(code_of({{"grid", {{"dim", 1}, {"cells", "many"}}}}), ErrorCode::config);
  EXPECT_EQ(code_of({{"poisson", "multigrid"}}), ErrorCode::config);
  EXPECT_EQ(code_of({{"grid", {{"dim", 2}, {"cells", {8, 8}}}}, {"poisson", "direct"}}), ErrorCode::config);
  EXPECT_THROW(load_config("/nonexistent/config.json"), Error);
}

TEST(Config, InitialDataAreMeanMatchedCellAverages) {
  RunConfig c = small_config(64, 0.1);
  c.n0.base = 0.7;
  auto [rho, n] = initial_densities(c);
  EXPECT_NEAR(integrate(rho), integrate(n), 1e-15);
  // Exact cell average of cos(pi x) over the first cell: sin(pi dx) / (pi dx).
  const double pi = std::acos(-1.0), dx = 1.0 / 64.0;
  EXPECT_NEAR(rho(0), 0.5 + 0.1 * std::sin(pi * dx) / (pi * dx), 1e-15);
}

TEST(Harness, WellPreparedStartsOnDiagonal) {
  RunConfig c = small_config(100, 1.0);
  const RunResult r = run_single(c);
  ASSERT_TRUE(r.valid);
  EXPECT_LE(r.psi0, 1e-12 * r.energy0);
  EXPECT_LE(r.mass_drift, 1e-12);
  EXPECT_TRUE(r.lemma.all_pass());
}

TEST(Harness, UniformDataGiveConstantSeries) {
  RunConfig c = small_config(32, 0.1);
  c.rho0 = {0.6, {}};
  c.n0 = {0.6, {}};
  c.output = scratch("uniform").string();
  const RunResult r = run_single(c);
  std::string header;
  const auto psi = read_csv(fs::path(c.output) / "psi_timeseries.csv", &header);
  EXPECT_EQ(header, "t,kin_rho,kin_n,int_rho,int_n,field,total");
  ASSERT_EQ(psi.size(), 3u);
  for (const auto& row : psi) EXPECT_LE(std::abs(row[6]), 1e-12);
  const auto energy = read_csv(fs::path(c.output) / "energy.csv");
  for (const auto& row : energy) {
    EXPECT_NEAR(row[6], energy.front()[6], 1e-12);
    EXPECT_NEAR(row[9], energy.front()[9], 1e-12);
  }
  EXPECT_LE(std::abs(r.jterms.slack), 1e-12);
}

TEST(Harness, WritesAllArtifacts) {
  RunConfig c = small_config(50, 0.05);
  c.output = scratch("artifacts").string();
  run_single(c);
  const fs::path d = c.output;
  for (const char* f : {"metadata.json", "psi_timeseries.csv", "jterms.csv", "energy.csv", "lemma_report.json",
                        "diagnostics.json", "checkpoints/hydro_0000.csv", "checkpoints/hydro_0002.csv",
                        "checkpoints/dd_0002.csv"})
    EXPECT_TRUE(fs::exists(d / f)) << f;
  std::string header;
  const auto hydro = read_csv(d / "checkpoints/hydro_0001.csv", &header);
  EXPECT_EQ(header, "t,i,rho,n,u,v,phi");
  ASSERT_EQ(hydro.size(), 50u);
  EXPECT_DOUBLE_EQ(hydro.front()[0], 0.01);
  const nlohmann::json meta = nlohmann::json::parse(slurp(d / "metadata.json"));
  EXPECT_TRUE(meta["valid"].get<bool>());
  EXPECT_EQ(meta["config"]["eps"].get<double>(), 0.05);
  EXPECT_TRUE(meta.contains("dt_policy"));
  EXPECT_EQ(meta["floor"]["mass_added"].get<double>(), 0.0);
  const nlohmann::json lemma = nlohmann::json::parse(slurp(d / "lemma_report.json"));
  EXPECT_TRUE(lemma["all_pass"].get<bool>());
  // 17 significant digits.
  const std::string psi = slurp(d / "psi_timeseries.csv");
  EXPECT_NE(psi.find("0.01,"), std::string::npos);
  EXPECT_NE(psi.find("0.02,"), std::string::npos);
}

TEST(Harness, RunsAreBitwiseReproducible) {
  RunConfig a = small_config(60, 0.02);
  RunConfig b = a;
  a.output = scratch("repro_a").string();
  b.output = scratch("repro_b").string();
  run_single(a);
  run_single(b);
  for (const char* f : {"psi_timeseries.csv", "jterms.csv", "energy.csv", "lemma_report.json", "diagnostics.json",
                        "checkpoints/hydro_0002.csv", "checkpoints/dd_0002.csv"})
    EXPECT_EQ(slurp(fs::path(a.output) / f), slurp(fs::path(b.output) / f)) << f;
}

TEST(Harness, FailureCarriesStepAndMarksMetadata) {
  RunConfig c = small_config(100, 1.0);
  c.t_final = 0.2;
  c.velocity_perturbation = CosineMode{20.0, 1, 0};
  c.output = scratch("failure").string();
  try {
    run_single(c);
    FAIL() << "expected a positivity error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::positivity);
    EXPECT_NE(std::string(e.what()).find("hydro step "), std::string::npos);
  }
  const nlohmann::json meta = nlohmann::json::parse(slurp(fs::path(c.output) / "metadata.json"));
  EXPECT_FALSE(meta["valid"].get<bool>());
  EXPECT_TRUE(meta.contains("error"));
}

TEST(Harness, SweepNeedsThreeEps) {
  RunConfig c = small_config(40, 0.1);
  c.eps_list = {0.1, 0.01};
  try {
    run_sweep(c);
    FAIL() << "expected a fit error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::fit);
  }
}

TEST(Harness, SweepSlopeOnBaseline) {
  RunConfig c = load_config(std::string(BIPOLAR_SOURCE_DIR) + "/configs/sweep.json");
  c.eps_list = {0.1, 0.01, 0.001};
  c.output = scratch("sweep").string();
  const SweepReport rep = run_sweep(c, 1);
  ASSERT_EQ(rep.rows.size(), 3u);
  for (const auto& row : rep.rows) EXPECT_TRUE(row.valid) << row.error;
  EXPECT_NEAR(rep.fit.slope, 2.0, 0.3);
  EXPECT_TRUE(rep.monotone);
  EXPECT_FALSE(rep.fit.not_applicable);
  EXPECT_TRUE(fs::exists(fs::path(c.output) / "sweep_summary.csv"));
  const nlohmann::json report = nlohmann::json::parse(slurp(fs::path(c.output) / "report.json"));
  EXPECT_NEAR(report["slope"].get<double>(), rep.fit.slope, 0.0);
  EXPECT_EQ(report["rows"].size(), 3u);
}

TEST(Harness, ThreadedSweepMatchesSerial) {
  RunConfig c = small_config(50, 0.1);
  c.eps_list = {0.1, 0.03, 0.01};
  const SweepReport one = run_sweep(c, 1);
  const SweepReport three = run_sweep(c, 3);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(one.rows[k].psi_final, three.rows[k].psi_final);
    EXPECT_EQ(one.rows[k].slack, three.rows[k].slack);
  }
  EXPECT_EQ(one.fit.slope, three.fit.slope);
}

TEST(Harness, IllPreparedSweepIsFlagged) {
  RunConfig c = small_config(100, 0.1);
  c.t_final = 0.05;
  c.checkpoint_every = 0.0;
  c.eps_list = {0.1, 0.01, 0.001};
  c.density_perturbation = CosineMode{0.02, 2, 0};
  const SweepReport rep = run_sweep(c, 1);
  EXPECT_TRUE(rep.fit.not_applicable);
  for (const auto& row : rep.rows) EXPECT_GT(row.psi0, 1e-6);
  // The eps^2 law does not hold without well-prepared data.
  EXPECT_GT(std::abs(rep.fit.slope - 2.0), 0.3);
}
