#pragma once

// Single runs and eps sweeps: the drift-diffusion and Euler-Poisson solutions advance
// in lockstep on one grid, Psi and the J terms are accumulated at every hydro step,
// and everything is written as CSV/JSON.

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "bipolar/config.hpp"
#include "bipolar/drift_diffusion.hpp"
#include "bipolar/euler_poisson.hpp"
#include "bipolar/relative_energy.hpp"

namespace bipolar {

inline std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// Comma-separated row of 17-digit numbers.
inline std::string csv_row(std::initializer_list<double> xs) {
  std::string s;
  bool first = true;
  for (double x : xs) {
    if (!first) s += ',';
    s += fmt17(x);
    first = false;
  }
  return s;
}

struct CheckpointRecord {
  double t = 0.0;
  PsiBreakdown psi;
  EnergyBreakdown energy;
  JTerms j;
  double dissipated = 0.0;
  double energy_defect = 0.0;
  double dd_energy = 0.0;
  double mass_rho = 0.0, mass_n = 0.0, mass_rho_bar = 0.0, mass_n_bar = 0.0;
  DensityRange range;
};

struct RunResult {
  RunConfig config;
  bool valid = true;
  std::string error;
  std::vector<CheckpointRecord> checkpoints;
  JTerms jterms;
  LemmaReport lemma;
  DissipationBudget hydro_budget;
  double dd_energy_residual = 0.0;
  double dd_energy_max_increase = 0.0;
  WeakResiduals weak;
  double mass_drift = 0.0;      ///< max relative mass change over all steps, hydro and drift-diffusion
  double charge_defect = 0.0;   ///< max |int(rho - n)| / M over all steps
  double floor_mass = 0.0;
  double psi0 = 0.0;
  double psi_final = 0.0;
  double energy0 = 0.0;
  long hydro_steps = 0;
  long dd_steps = 0;
  double wall_seconds = 0.0;
};

namespace detail {

inline PoissonOptions poisson_options(const RunConfig& c) {
  PoissonOptions po;
  po.tol = c.tol.poisson;
  po.method = c.poisson;
  return po;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) fail(ErrorCode::io, "cannot write " + p.string());
  out << text;
}

inline std::string checkpoint_name(const char* prefix, std::size_t k) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%04zu.csv", prefix, k);
  return buf;
}

inline std::string hydro_csv(const BipolarHydroState& s, double floor) {
  const Grid& g = s.grid();
  const VectorField uf = face_velocity(s.rho, s.mom_rho, floor);
  const VectorField vf = face_velocity(s.n, s.mom_n, floor);
  const ScalarField ux = cell_average(uf, 0), vx = cell_average(vf, 0);
  ScalarField uy, vy;
  std::string out;
  if (g.dim == 1) {
    out = "t,i,rho,n,u,v,phi\n";
  } else {
    uy = cell_average(uf, 1);
    vy = cell_average(vf, 1);
    out = "t,i,j,rho,n,u_x,u_y,v_x,v_y,phi\n";
  }
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      const std::size_t c = g.cell(i, j);
      if (g.dim == 1)
        out += csv_row({s.t, double(i), s.rho.values[c], s.n.values[c], ux.values[c], vx.values[c], s.phi.values[c]});
      else
        out += csv_row({s.t, double(i), double(j), s.rho.values[c], s.n.values[c], ux.values[c], uy.values[c],
                        vx.values[c], vy.values[c], s.phi.values[c]});
      out += '\n';
    }
  return out;
}

inline std::string dd_csv(const EquilibriumState& s) {
  const Grid& g = s.grid();
  std::array<ScalarField, 2> u, v, e1, e2;
  for (int a = 0; a < g.dim; ++a) {
    u[a] = cell_average(s.u_bar, a);
    v[a] = cell_average(s.v_bar, a);
    e1[a] = cell_average(s.e_bar1, a);
    e2[a] = cell_average(s.e_bar2, a);
  }
  std::string out = g.dim == 1 ? "t,i,rho_bar,n_bar,phi_bar,u_bar,v_bar,e_bar1,e_bar2\n"
                               : "t,i,j,rho_bar,n_bar,phi_bar,u_bar_x,u_bar_y,v_bar_x,v_bar_y,e_bar1_x,e_bar1_y,"
                                 "e_bar2_x,e_bar2_y\n";
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      const std::size_t c = g.cell(i, j);
      if (g.dim == 1)
        out += csv_row({s.t, double(i), s.rho_bar.values[c], s.n_bar.values[c], s.phi_bar.values[c], u[0].values[c],
                        v[0].values[c], e1[0].values[c], e2[0].values[c]});
      else
        out += csv_row({s.t, double(i), double(j), s.rho_bar.values[c], s.n_bar.values[c], s.phi_bar.values[c],
                        u[0].values[c], u[1].values[c], v[0].values[c], v[1].values[c], e1[0].values[c],
                        e1[1].values[c], e2[0].values[c], e2[1].values[c]});
      out += '\n';
    }
  return out;
}

inline nlohmann::json lemma_json(const LemmaReport& rep) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& c : rep.checks) {
    nlohmann::json e = {{"lhs", c.lhs}, {"certified", c.certified}, {"pass", c.pass}};
    e["rhs"] = std::isfinite(c.rhs) ? nlohmann::json(c.rhs) : nlohmann::json(nullptr);
    e["constant"] = std::isfinite(c.constant) ? nlohmann::json(c.constant) : nlohmann::json(nullptr);
    j[c.name] = e;
  }
  j["lower_bound_constant_rho"] = rep.c3_rho;
  j["lower_bound_constant_n"] = rep.c3_n;
  j["all_pass"] = rep.all_pass();
  return j;
}

inline nlohmann::json norms_json(const RunNorms& n) {
  return {{"grad_u_bar", n.grad_u_bar}, {"grad_v_bar", n.grad_v_bar}, {"div_u_bar", n.div_u_bar},
          {"div_v_bar", n.div_v_bar},   {"u_bar", n.u_bar},           {"v_bar", n.v_bar},
          {"e_bar1", n.e_bar1},         {"e_bar2", n.e_bar2},         {"rho_bar_min", n.rho_bar_min},
          {"rho_bar_max", n.rho_bar_max}, {"n_bar_min", n.n_bar_min}, {"n_bar_max", n.n_bar_max},
          {"rho_max", n.rho_max},       {"n_max", n.n_max},           {"mass", n.mass}};
}

inline nlohmann::json diagnostics_json(const RunResult& r) {
  nlohmann::json j;
  const JTerms& jt = r.jterms;
  j["jterms"] = {{"t", jt.t},         {"j1", jt.j1},         {"j2", jt.j2},
                 {"j3", jt.j3},       {"j4", jt.j4},         {"dissipation", jt.dissipation},
                 {"slack", jt.slack}, {"psi0", jt.psi0},     {"psi_t", jt.psi_t},
                 {"psi_integral", jt.psi_integral}};
  j["norms"] = norms_json(jt.norms);
  j["hydro_energy"] = {{"initial", r.energy0},
                       {"defect", r.hydro_budget.defect},
                       {"max_increase", r.hydro_budget.max_increase},
                       {"sign_ok", r.hydro_budget.sign_ok}};
  j["dd_energy"] = {{"residual", r.dd_energy_residual}, {"max_increase", r.dd_energy_max_increase}};
  j["weak_residuals"] = {{"continuity_rho", r.weak.continuity_rho},
                         {"momentum_rho", r.weak.momentum_rho},
                         {"continuity_n", r.weak.continuity_n},
                         {"momentum_n", r.weak.momentum_n}};
  j["mass_drift"] = r.mass_drift;
  j["charge_defect"] = r.charge_defect;
  j["floor_mass"] = r.floor_mass;
  j["hydro_steps"] = r.hydro_steps;
  j["dd_steps"] = r.dd_steps;
  return j;
}

inline void write_run_outputs(const std::filesystem::path& dir, const RunResult& r) {
  std::string psi = "t,kin_rho,kin_n,int_rho,int_n,field,total\n";
  std::string jt = "t,j1,j2,j3,j4,dissipation,psi,slack\n";
  std::string en =
      "t,kinetic_rho,kinetic_n,internal_rho,internal_n,field,total,dissipated,defect,dd_energy,mass_rho,mass_n,"
      "mass_rho_bar,mass_n_bar,rho_bar_min,rho_bar_max,n_bar_min,n_bar_max\n";
  for (const auto& c : r.checkpoints) {
    psi += csv_row({c.t, c.psi.kin_rho, c.psi.kin_n, c.psi.int_rho, c.psi.int_n, c.psi.field, c.psi.total}) + '\n';
    jt += csv_row({c.t, c.j.j1, c.j.j2, c.j.j3, c.j.j4, c.j.dissipation, c.j.psi_t, c.j.slack}) + '\n';
    const EnergyBreakdown& e = c.energy;
    en += csv_row({c.t, e.kinetic_rho, e.kinetic_n, e.internal_rho, e.internal_n, e.field, e.total, c.dissipated,
                   c.energy_defect, c.dd_energy, c.mass_rho, c.mass_n, c.mass_rho_bar, c.mass_n_bar, c.range.rho_min,
                   c.range.rho_max, c.range.n_min, c.range.n_max}) +
          '\n';
  }
  write_text(dir / "psi_timeseries.csv", psi);
  write_text(dir / "jterms.csv", jt);
  write_text(dir / "energy.csv", en);
  write_text(dir / "lemma_report.json", lemma_json(r.lemma).dump(2) + "\n");
  write_text(dir / "diagnostics.json", diagnostics_json(r).dump(2) + "\n");
}

inline void write_metadata(const std::filesystem::path& dir, const RunResult& r, const Grid& g) {
  nlohmann::json m;
  m["config"] = to_json(r.config);
  m["grid"] = {{"dim", g.dim}, {"cells", r.config.cells}, {"dx", std::vector<double>(g.dx.begin(), g.dx.begin() + g.dim)}};
  m["dt_policy"] = {{"hydro", "uniform within each checkpoint interval, cfl-limited with relaxation cap"},
                    {"drift_diffusion", "uniform substeps per hydro step, dt <= 0.25 dx^2 / (dim max p')"},
                    {"cfl", r.config.cfl}};
  m["floor"] = {{"value", r.config.tol.floor}, {"mass_added", r.floor_mass}};
  m["valid"] = r.valid;
  if (!r.valid) m["error"] = r.error;
  m["hydro_steps"] = r.hydro_steps;
  m["dd_steps"] = r.dd_steps;
  m["wall_seconds"] = r.wall_seconds;
  write_text(dir / "metadata.json", m.dump(2) + "\n");
}

inline Error located(const Error& e, long step, double t) {
  std::string what = e.what();
  const std::string prefix = std::string(to_string(e.code())) + " error: ";
  if (what.rfind(prefix, 0) == 0) what.erase(0, prefix.size());
  return Error(e.code(), "hydro step " + std::to_string(step) + " (t = " + fmt17(t) + "): " + what);
}

}  // namespace detail

/// Advance both systems to t_final. Outputs go to cfg.output when it is non-empty.
inline RunResult run_single(const RunConfig& cfg) {
  validate(cfg);
  const auto wall0 = std::chrono::steady_clock::now();
  RunResult res;
  res.config = cfg;
  const Grid g = cfg.grid();
  const GasLaw& law1 = cfg.law1;
  const GasLaw& law2 = cfg.law2;
  const double floor = cfg.tol.floor;

  std::filesystem::path dir;
  const bool write = !cfg.output.empty();
  if (write) {
    dir = cfg.output;
    std::filesystem::create_directories(dir / "checkpoints");
  }

  auto [rho0, n0] = initial_densities(cfg);

  DdOptions dopt;
  dopt.stepper = cfg.dd_stepper;
  dopt.poisson = detail::poisson_options(cfg);
  dopt.floor = floor;
  if (cfg.bounds) {
    dopt.bounds = *cfg.bounds;
  } else {
    dopt.bounds = {min_value(rho0), max_value(rho0), min_value(n0), max_value(n0)};
  }
  HydroOptions hopt;
  hopt.floor = floor;
  hopt.poisson = dopt.poisson;

  long step = 0;
  double t_now = 0.0;
  try {
    EquilibriumState eq;
    {
      EquilibriumState probe;
      probe.rho_bar = rho0;
      probe.n_bar = n0;
      eq = make_equilibrium(rho0, n0, law1, law2, 0.0, dopt, dd_stable_dt(probe, law1, law2));
    }

    BipolarHydroState h;
    h.t = 0.0;
    h.eps = cfg.eps;
    h.rho = rho0;
    h.n = n0;
    if (cfg.well_prepared) {
      h.mom_rho = lifted_momentum(rho0, eq.u_bar);
      h.mom_n = lifted_momentum(n0, eq.v_bar);
    } else {
      h.mom_rho = VectorField(g);
      h.mom_n = VectorField(g);
    }
    if (cfg.density_perturbation) {
      const ScalarField d = cell_averages(g, {0.0, {*cfg.density_perturbation}});
      for (std::size_t c = 0; c < h.rho.size(); ++c) h.rho.values[c] += d.values[c];
      require(min_value(h.rho) > 0.0, ErrorCode::config, "density perturbation creates vacuum");
      require(std::abs(integrate(d)) <= 1e-12 * integrate(rho0), ErrorCode::config,
              "density perturbation must carry no mass (use modes with kx + ky > 0)");
    }
    if (cfg.velocity_perturbation) {
      const CosineMode& m = *cfg.velocity_perturbation;
      const WeakTest shape = cosine_test(g, 1.0, m.kx, m.ky, m.amp);
      const VectorField rf = face_average(h.rho);
      for (int j = 0; j < g.ny(); ++j)
        for (int i = 0; i <= g.nx(); ++i)
          h.mom_rho.at(0, i, j) += rf.at(0, i, j) * shape.vec(i * g.dx[0], g.yc(j))[0];
      if (g.dim == 2)
        for (int j = 0; j <= g.ny(); ++j)
          for (int i = 0; i < g.nx(); ++i)
            h.mom_rho.at(1, i, j) += rf.at(1, i, j) * shape.vec(g.xc(i), j * g.dx[1])[1];
      h.mom_rho.zero_boundary();
    }
    if (cfg.well_prepared && !cfg.density_perturbation) {
      h.phi = eq.phi_bar;
      h.grad_phi = eq.grad_phi_bar;
    } else {
      update_potential(h, hopt);
    }

    const double mass_rho0 = integrate(h.rho), mass_n0 = integrate(h.n);
    const double mass_rb0 = integrate(eq.rho_bar), mass_nb0 = integrate(eq.n_bar);

    JAccumulator jacc(law1, law2, floor);
    DissipationAccumulator dacc(law1, law2, cfg.tol.energy, floor);
    DdEnergyAccumulator deacc(law1, law2);
    const int ky = g.dim == 2 ? 1 : 0;
    std::vector<WeakTest> bank{cosine_test(g, cfg.t_final, 1, ky), cosine_test(g, cfg.t_final, 2, ky)};
    WeakResidualAccumulator wacc(g, bank, law1, law2, floor);

    auto audit = [&]() {
      const double mr = integrate(h.rho), mn = integrate(h.n);
      const double mrb = integrate(eq.rho_bar), mnb = integrate(eq.n_bar);
      res.mass_drift = std::max({res.mass_drift, std::abs(mr / mass_rho0 - 1.0), std::abs(mn / mass_n0 - 1.0),
                                 std::abs(mrb / mass_rb0 - 1.0), std::abs(mnb / mass_nb0 - 1.0)});
      res.charge_defect = std::max(res.charge_defect, std::abs(mr - mn) / mass_rho0);
      if (h.floor_mass > 1e-8 * mass_rho0)
        fail(ErrorCode::positivity, "vacuum floor added " + fmt17(h.floor_mass) + " mass (limit 1e-8 M)");
    };

    auto sample = [&]() {
      jacc.add(h, eq);
      dacc.add(h);
      wacc.add(h);
      audit();
    };

    std::size_t ck_index = 0;
    auto checkpoint = [&]() {
      CheckpointRecord rec;
      rec.t = h.t;
      rec.psi = jacc.last_psi();
      rec.energy = total_energy(h, law1, law2, floor);
      rec.j = jacc.result();
      rec.dissipated = dacc.dissipated();
      rec.energy_defect = dacc.current_defect();
      rec.dd_energy = dd_energy(eq, law1, law2);
      rec.mass_rho = integrate(h.rho);
      rec.mass_n = integrate(h.n);
      rec.mass_rho_bar = integrate(eq.rho_bar);
      rec.mass_n_bar = integrate(eq.n_bar);
      rec.range = density_range(eq);
      res.checkpoints.push_back(rec);
      if (write) {
        detail::write_text(dir / "checkpoints" / detail::checkpoint_name("hydro", ck_index), detail::hydro_csv(h, floor));
        detail::write_text(dir / "checkpoints" / detail::checkpoint_name("dd", ck_index), detail::dd_csv(eq));
      }
      ++ck_index;
    };

    deacc.add(eq);
    sample();
    res.energy0 = dacc.initial_energy();
    checkpoint();

    // Checkpoint times k * checkpoint_every, closed by t_final.
    std::vector<double> stops;
    if (cfg.checkpoint_every > 0.0) {
      const long count = static_cast<long>(std::floor(cfg.t_final / cfg.checkpoint_every * (1.0 + 1e-12)));
      for (long k = 1; k <= count; ++k) {
        const double tk = k * cfg.checkpoint_every;
        if (tk < cfg.t_final * (1.0 - 1e-12)) stops.push_back(tk);
      }
    }
    stops.push_back(cfg.t_final);

    DdOptions quiet = dopt;
    quiet.compute_residuals = false;
    for (const double stop : stops) {
      const double start = h.t;
      long remaining = std::max(1L, static_cast<long>(std::ceil((stop - start) / stable_dt(h, law1, law2, cfg.cfl, floor))));
      double dt = (stop - start) / static_cast<double>(remaining);
      double base = start;
      long done = 0;
      while (remaining > done) {
        const double limit = stable_dt(h, law1, law2, cfg.cfl, floor);
        if (dt > limit) {
          // Re-split what is left of the interval uniformly.
          base = h.t;
          remaining = std::max(1L, static_cast<long>(std::ceil((stop - base) / limit)));
          done = 0;
          dt = (stop - base) / static_cast<double>(remaining);
        }
        ++step;
        ++done;
        const double t_next = done == remaining ? stop : base + done * dt;
        t_now = h.t;
        h = ep_step(h, law1, law2, t_next - h.t, hopt);
        h.t = t_next;
        ++res.hydro_steps;

        // Drift-diffusion substeps landing on t_next.
        const double span = t_next - eq.t;
        const double dd_max = cfg.dd_stepper == DdStepper::explicit_euler ? dd_stable_dt(eq, law1, law2) : span;
        const long nsub = std::max(1L, static_cast<long>(std::ceil(span / dd_max * (1.0 - 1e-12))));
        const double ddt = span / static_cast<double>(nsub);
        const double t_dd0 = eq.t;
        for (long s = 1; s <= nsub; ++s) {
          eq = dd_step(eq, law1, law2, ddt, s == nsub ? dopt : quiet);
          eq.t = s == nsub ? t_next : t_dd0 + s * ddt;
          deacc.add(eq);
        }
        res.dd_steps += nsub;
        sample();
      }
      checkpoint();
    }

    res.jterms = jacc.result();
    res.lemma = lemma_bounds_report(res.jterms, law1, law2, cfg.eps, cfg.tol.lemma,
                                    law1.gamma >= 2.0 && law2.gamma >= 2.0);
    res.hydro_budget = dacc.result();
    res.dd_energy_residual = deacc.residual();
    res.dd_energy_max_increase = deacc.max_increase();
    res.weak = wacc.result();
    res.floor_mass = h.floor_mass;
    res.psi0 = res.jterms.psi0;
    res.psi_final = res.jterms.psi_t;
  } catch (const Error& e) {
    res.valid = false;
    res.error = e.what();
    res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
    if (write) detail::write_metadata(dir, res, g);
    throw detail::located(e, step, t_now);
  }
  res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  if (write) {
    detail::write_run_outputs(dir, res);
    detail::write_metadata(dir, res, g);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Sweeps.

struct SweepRow {
  double eps = 0.0;
  bool valid = false;
  std::string error;
  double psi0 = 0.0;
  double psi_final = 0.0;
  double mass_drift = 0.0;
  double energy_defect = 0.0;
  std::array<bool, 4> lemma_pass{false, false, false, false};
  double slack = 0.0;
  double wall_seconds = 0.0;
};

struct SweepReport {
  std::vector<SweepRow> rows;
  bool has_fit = false;
  GronwallFit fit;
  bool monotone = false;  ///< Psi(t_final) decreases along the (descending) eps list
  std::string fit_error;
};

inline std::string sweep_dir_name(std::size_t k, double eps) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "eps_%02zu_%.3g", k, eps);
  return buf;
}

/// Run every eps of cfg.eps_list (concurrently with `threads` workers) and fit the rate.
inline SweepReport run_sweep(const RunConfig& cfg, int threads = 1) {
  validate(cfg);
  if (cfg.eps_list.size() < 3) fail(ErrorCode::fit, "a sweep needs at least three eps values");
  SweepReport rep;
  rep.rows.resize(cfg.eps_list.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t k = next++; k < cfg.eps_list.size(); k = next++) {
      RunConfig c = cfg;
      c.eps = cfg.eps_list[k];
      c.eps_list.clear();
      if (!cfg.output.empty()) c.output = (std::filesystem::path(cfg.output) / sweep_dir_name(k, c.eps)).string();
      SweepRow& row = rep.rows[k];
      row.eps = c.eps;
      try {
        const RunResult r = run_single(c);
        row.valid = true;
        row.psi0 = r.psi0;
        row.psi_final = r.psi_final;
        row.mass_drift = r.mass_drift;
        row.energy_defect = r.hydro_budget.defect;
        for (int q = 0; q < 4; ++q) row.lemma_pass[q] = r.lemma.checks[q].pass;
        row.slack = r.jterms.slack;
        row.wall_seconds = r.wall_seconds;
      } catch (const Error& e) {
        row.valid = false;
        row.error = e.what();
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(threads, static_cast<int>(cfg.eps_list.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::map<double, double> psi_t, psi0;
  double scale = 0.0;
  for (const auto& r : rep.rows)
    if (r.valid) {
      psi_t[r.eps] = r.psi_final;
      psi0[r.eps] = r.psi0;
      scale = std::max(scale, r.psi_final);
    }
  rep.monotone = true;
  double prev = std::numeric_limits<double>::infinity();
  for (const auto& r : rep.rows) {
    if (!r.valid) continue;
    if (!(r.psi_final < prev)) rep.monotone = false;
    prev = r.psi_final;
  }
  try {
    if (psi_t.size() < 3) fail(ErrorCode::fit, "fewer than three valid sweep rows");
    rep.fit = gronwall_fit(psi_t, psi0, cfg.t_final, std::max(scale, 1e-300));
    rep.has_fit = true;
  } catch (const Error& e) {
    rep.fit_error = e.what();
  }

  if (!cfg.output.empty()) {
    const std::filesystem::path dir = cfg.output;
    std::filesystem::create_directories(dir);
    std::string csv = "eps,psi0,psi_final,mass_drift,energy_defect,slack,j1_pass,j2_pass,j3_pass,j4_pass,valid\n";
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : rep.rows) {
      csv += csv_row({r.eps, r.psi0, r.psi_final, r.mass_drift, r.energy_defect, r.slack, double(r.lemma_pass[0]),
                      double(r.lemma_pass[1]), double(r.lemma_pass[2]), double(r.lemma_pass[3]), double(r.valid)}) +
             '\n';
      nlohmann::json jr = {{"eps", r.eps},
                           {"valid", r.valid},
                           {"psi0", r.psi0},
                           {"psi_final", r.psi_final},
                           {"mass_drift", r.mass_drift},
                           {"energy_defect", r.energy_defect},
                           {"slack", r.slack},
                           {"lemma_pass", r.lemma_pass},
                           {"wall_seconds", r.wall_seconds}};
      if (!r.valid) jr["error"] = r.error;
      rows.push_back(jr);
    }
    detail::write_text(dir / "sweep_summary.csv", csv);
    nlohmann::json j;
    j["rows"] = rows;
    j["monotone"] = rep.monotone;
    if (rep.has_fit) {
      j["slope"] = rep.fit.slope;
      j["c_estimate"] = rep.fit.c_estimate;
      j["floor_limited"] = rep.fit.floor_limited;
      j["not_applicable"] = rep.fit.not_applicable;
      j["pair_slopes"] = rep.fit.pair_slopes;
    } else {
      j["fit_error"] = rep.fit_error;
    }
    j["config"] = to_json(cfg);
    detail::write_text(dir / "report.json", j.dump(2) + "\n");
  }
  if (!rep.has_fit) fail(ErrorCode::fit, rep.fit_error);
  return rep;
}

}  // namespace bipolar
