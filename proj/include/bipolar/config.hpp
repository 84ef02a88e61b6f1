#pragma once

// Run configuration: one JSON document per run or sweep.
//
// {
//   "grid": {"dim": 1, "lengths": [1.0], "cells": [400]},
//   "law1": {"k": 1, "gamma": 2, "khat": 1}, "law2": {...},
//   "eps": 0.01 | "eps_list": [0.1, 0.01, 0.001],
//   "t_final": 0.1, "cfl": 0.25, "checkpoint_every": 0.05,
//   "initial": {"rho": {"base": 0.5, "modes": [{"amp": 0.1, "kx": 1, "ky": 0}]}, "n": {...}},
//   "well_prepared": true,
//   "perturbation": {"density": {"amp": 0.01, "kx": 1, "ky": 0}, "velocity": {...}},
//   "bounds": {"delta1": .., "m1": .., "delta2": .., "m2": ..},
//   "tolerances": {"poisson": 1e-10, "lemma": 1e-12, "energy": 1e-12, "floor": 1e-12},
//   "poisson": "cg" | "direct", "dd_stepper": "explicit" | "implicit",
//   "output": "out/run"
// }

#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "bipolar/drift_diffusion.hpp"
#include "bipolar/eos.hpp"
#include "bipolar/error.hpp"
#include "bipolar/grid.hpp"
#include "bipolar/poisson.hpp"

namespace bipolar {

struct CosineMode {
  double amp = 0.0;
  int kx = 0;
  int ky = 0;
};

/// base + sum amp cos(kx pi x/Lx) cos(ky pi y/Ly).
struct CosineProfile {
  double base = 1.0;
  std::vector<CosineMode> modes;
};

struct Tolerances {
  double poisson = 1e-10;
  double lemma = 1e-12;
  double energy = 1e-12;
  double floor = 1e-12;
};

struct RunConfig {
  int dim = 1;
  std::vector<double> lengths{1.0};
  std::vector<int> cells{100};
  GasLaw law1 = GasLaw::power_law(1.0, 2.0);
  GasLaw law2 = GasLaw::power_law(1.0, 2.0);
  double eps = 1.0;
  std::vector<double> eps_list;
  double t_final = 0.1;
  double cfl = 0.5;
  double checkpoint_every = 0.0;  ///< 0: only the final time
  CosineProfile rho0;
  CosineProfile n0;
  bool well_prepared = true;
  std::optional<CosineMode> density_perturbation;
  std::optional<CosineMode> velocity_perturbation;
  std::optional<DensityBounds> bounds;
  Tolerances tol;
  PoissonMethod poisson = PoissonMethod::cg;
  DdStepper dd_stepper = DdStepper::explicit_euler;
  std::string output;

  Grid grid() const { return make_grid(dim, lengths, cells); }
};

namespace detail {

template <class T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

inline GasLaw parse_law(const nlohmann::json& j) {
  const double k = get_or(j, "k", 1.0);
  const double gamma = get_or(j, "gamma", 2.0);
  const double khat = get_or(j, "khat", -1.0);
  return GasLaw::power_law(k, gamma, khat);
}

inline CosineMode parse_mode(const nlohmann::json& j) {
  return {get_or(j, "amp", 0.0), get_or(j, "kx", 0), get_or(j, "ky", 0)};
}

inline CosineProfile parse_profile(const nlohmann::json& j) {
  CosineProfile p;
  p.base = get_or(j, "base", 1.0);
  if (j.contains("modes"))
    for (const auto& m : j.at("modes")) p.modes.push_back(parse_mode(m));
  return p;
}

inline nlohmann::json mode_json(const CosineMode& m) { return {{"amp", m.amp}, {"kx", m.kx}, {"ky", m.ky}}; }

inline nlohmann::json profile_json(const CosineProfile& p) {
  nlohmann::json modes = nlohmann::json::array();
  for (const auto& m : p.modes) modes.push_back(mode_json(m));
  return {{"base", p.base}, {"modes", modes}};
}

}  // namespace detail

inline nlohmann::json law_json(const GasLaw& law) { return {{"k", law.k}, {"gamma", law.gamma}, {"khat", law.khat}}; }

inline void validate(const RunConfig& c) {
  (void)c.grid();
  c.law1.validate();
  c.law2.validate();
  require(std::isfinite(c.eps) && c.eps > 0.0, ErrorCode::config, "eps must be positive");
  for (std::size_t k = 0; k < c.eps_list.size(); ++k) {
    require(std::isfinite(c.eps_list[k]) && c.eps_list[k] > 0.0, ErrorCode::config, "eps_list entries must be positive");
    if (k > 0) require(c.eps_list[k] < c.eps_list[k - 1], ErrorCode::config, "eps_list must be strictly descending");
  }
  require(std::isfinite(c.t_final) && c.t_final > 0.0, ErrorCode::config, "t_final must be positive");
  require(c.cfl > 0.0 && c.cfl <= 1.0, ErrorCode::config, "cfl must lie in (0, 1]");
  require(c.checkpoint_every >= 0.0, ErrorCode::config, "checkpoint_every must be non-negative");
  require(c.tol.poisson > 0.0 && c.tol.floor > 0.0, ErrorCode::config, "tolerances must be positive");
  require(c.rho0.base > 0.0 && c.n0.base > 0.0, ErrorCode::config, "initial base densities must be positive");
  if (c.poisson == PoissonMethod::direct_1d)
    require(c.dim == 1, ErrorCode::config, "the direct Poisson solver is 1D only");
}

inline RunConfig parse_config(const nlohmann::json& j) {
  RunConfig c;
  try {
    if (j.contains("grid")) {
      const auto& g = j.at("grid");
      c.dim = detail::get_or(g, "dim", 1);
      c.lengths = detail::get_or(g, "lengths", std::vector<double>(c.dim, 1.0));
      c.cells = g.at("cells").get<std::vector<int>>();
    }
    if (j.contains("law1")) c.law1 = detail::parse_law(j.at("law1"));
    if (j.contains("law2")) c.law2 = detail::parse_law(j.at("law2"));
    c.eps = detail::get_or(j, "eps", 1.0);
    c.eps_list = detail::get_or(j, "eps_list", std::vector<double>{});
    c.t_final = detail::get_or(j, "t_final", 0.1);
    c.cfl = detail::get_or(j, "cfl", 0.5);
    c.checkpoint_every = detail::get_or(j, "checkpoint_every", 0.0);
    if (j.contains("initial")) {
      const auto& ini = j.at("initial");
      if (ini.contains("rho")) c.rho0 = detail::parse_profile(ini.at("rho"));
      if (ini.contains("n")) c.n0 = detail::parse_profile(ini.at("n"));
    }
    c.well_prepared = detail::get_or(j, "well_prepared", true);
    if (j.contains("perturbation")) {
      const auto& p = j.at("perturbation");
      if (p.contains("density")) c.density_perturbation = detail::parse_mode(p.at("density"));
      if (p.contains("velocity")) c.velocity_perturbation = detail::parse_mode(p.at("velocity"));
    }
    if (j.contains("bounds")) {
      const auto& b = j.at("bounds");
      DensityBounds db;
      db.delta1 = b.at("delta1").get<double>();
      db.m1 = b.at("m1").get<double>();
      db.delta2 = b.at("delta2").get<double>();
      db.m2 = b.at("m2").get<double>();
      c.bounds = db;
    }
    if (j.contains("tolerances")) {
      const auto& t = j.at("tolerances");
      c.tol.poisson = detail::get_or(t, "poisson", c.tol.poisson);
      c.tol.lemma = detail::get_or(t, "lemma", c.tol.lemma);
      c.tol.energy = detail::get_or(t, "energy", c.tol.energy);
      c.tol.floor = detail::get_or(t, "floor", c.tol.floor);
    }
    const std::string pm = detail::get_or(j, "poisson", std::string("cg"));
    if (pm == "cg") c.poisson = PoissonMethod::cg;
    else if (pm == "direct") c.poisson = PoissonMethod::direct_1d;
    else fail(ErrorCode::config, "unknown Poisson method '" + pm + "'");
    const std::string st = detail::get_or(j, "dd_stepper", std::string("explicit"));
    if (st == "explicit") c.dd_stepper = DdStepper::explicit_euler;
    else if (st == "implicit") c.dd_stepper = DdStepper::implicit_lagged;
    else fail(ErrorCode::config, "unknown drift-diffusion stepper '" + st + "'");
    c.output = detail::get_or(j, "output", std::string());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::config, std::string("malformed configuration: ") + e.what());
  }
  validate(c);
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::config, "cannot open configuration file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::config, "cannot parse " + path + ": " + e.what());
  }
  return parse_config(j);
}

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["grid"] = {{"dim", c.dim}, {"lengths", c.lengths}, {"cells", c.cells}};
  j["law1"] = law_json(c.law1);
  j["law2"] = law_json(c.law2);
  j["eps"] = c.eps;
  if (!c.eps_list.empty()) j["eps_list"] = c.eps_list;
  j["t_final"] = c.t_final;
  j["cfl"] = c.cfl;
  j["checkpoint_every"] = c.checkpoint_every;
  j["initial"] = {{"rho", detail::profile_json(c.rho0)}, {"n", detail::profile_json(c.n0)}};
  j["well_prepared"] = c.well_prepared;
  if (c.density_perturbation || c.velocity_perturbation) {
    nlohmann::json p = nlohmann::json::object();
    if (c.density_perturbation) p["density"] = detail::mode_json(*c.density_perturbation);
    if (c.velocity_perturbation) p["velocity"] = detail::mode_json(*c.velocity_perturbation);
    j["perturbation"] = p;
  }
  if (c.bounds)
    j["bounds"] = {{"delta1", c.bounds->delta1}, {"m1", c.bounds->m1}, {"delta2", c.bounds->delta2}, {"m2", c.bounds->m2}};
  j["tolerances"] = {{"poisson", c.tol.poisson}, {"lemma", c.tol.lemma}, {"energy", c.tol.energy}, {"floor", c.tol.floor}};
  j["poisson"] = c.poisson == PoissonMethod::cg ? "cg" : "direct";
  j["dd_stepper"] = c.dd_stepper == DdStepper::explicit_euler ? "explicit" : "implicit";
  return j;
}

// ---------------------------------------------------------------------------
// Initial data.

/// Exact cell average of cos(k pi x / L) over [x0, x0 + h].
inline double cosine_cell_average(int k, double x0, double h, double length) {
  if (k == 0) return 1.0;
  const double a = k * std::acos(-1.0) / length;
  return (std::sin(a * (x0 + h)) - std::sin(a * x0)) / (a * h);
}

inline ScalarField cell_averages(const Grid& g, const CosineProfile& p) {
  ScalarField f(g, p.base);
  for (const auto& m : p.modes)
    for (int j = 0; j < g.ny(); ++j)
      for (int i = 0; i < g.nx(); ++i) {
        double v = m.amp * cosine_cell_average(m.kx, i * g.dx[0], g.dx[0], g.lengths[0]);
        if (g.dim == 2) v *= cosine_cell_average(m.ky, j * g.dx[1], g.dx[1], g.lengths[1]);
        f(i, j) += v;
      }
  return f;
}

/// Equilibrium initial densities, n shifted so that both species carry the same mass.
inline std::pair<ScalarField, ScalarField> initial_densities(const RunConfig& c) {
  const Grid g = c.grid();
  ScalarField rho = cell_averages(g, c.rho0);
  ScalarField n = cell_averages(g, c.n0);
  const double shift = (integrate(rho) - integrate(n)) / g.volume();
  for (double& v : n.values) v += shift;
  return {rho, n};
}

}  // namespace bipolar
