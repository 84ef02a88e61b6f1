#pragma once

// Invariant suites behind `bipolar_lab check`: fast structural checks of every module
// on small grids, seeded for the randomized parts.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "bipolar/drift_diffusion.hpp"
#include "bipolar/eos.hpp"
#include "bipolar/error.hpp"
#include "bipolar/euler_poisson.hpp"
#include "bipolar/grid.hpp"
#include "bipolar/poisson.hpp"

namespace bipolar {

struct CheckResult {
  std::string name;
  bool pass = false;
  double value = 0.0;      ///< measured quantity
  double threshold = 0.0;  ///< pass when value <= threshold
};

namespace detail {

inline CheckResult guarded(const std::string& name, double threshold, const std::function<double()>& measure) {
  CheckResult r{name, false, 0.0, threshold};
  try {
    r.value = measure();
    r.pass = r.value <= threshold;
  } catch (const Error&) {
    r.value = std::numeric_limits<double>::infinity();
  }
  return r;
}

inline ScalarField random_mean_zero(const Grid& g, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ScalarField f(g);
  for (double& x : f.values) x = u(rng);
  const double m = integrate(f) / g.volume();
  for (double& x : f.values) x -= m;
  return f;
}

}  // namespace detail

inline std::vector<CheckResult> run_invariant_checks(std::uint64_t seed) {
  std::vector<CheckResult> out;
  std::mt19937_64 rng(seed);

  // Thermodynamic consistency p = r h' - h, p' = r h'' on random samples.
  out.push_back(detail::guarded("eos_consistency", 1e-10, [&] {
    std::uniform_real_distribution<double> ur(1e-3, 10.0), ug(1.2, 3.0), uk(0.5, 2.0);
    double worst = 0.0;
    for (int s = 0; s < 1000; ++s) {
      const GasLaw law = GasLaw::power_law(uk(rng), ug(rng));
      const double r = ur(rng);
      const InternalEnergy e = internal_energy(law, r);
      const double p = pressure(law, r);
      worst = std::max(worst, std::abs(r * e.h1 - e.h - p) / std::abs(p));
      worst = std::max(worst, std::abs(r * e.h2 - law.dp(r)) / std::abs(law.dp(r)));
    }
    return worst;
  }));

  // Self-adjointness of the Neumann solve on random mean-zero pairs.
  out.push_back(detail::guarded("poisson_duality", 1e-10, [&] {
    const Grid g = make_grid(2, {1.0, 1.0}, {12, 10});
    double worst = 0.0;
    for (int s = 0; s < 20; ++s) {
      const ScalarField f = detail::random_mean_zero(g, rng), h = detail::random_mean_zero(g, rng);
      worst = std::max(worst, duality_residual(g, f, h, 1e-13));
    }
    return worst;
  }));

  out.push_back(detail::guarded("green_symmetry", 1e-10, [&] {
    const Grid g = make_grid(2, {1.0, 1.0}, {12, 10});
    std::uniform_int_distribution<std::size_t> uc(0, g.cell_count() - 1);
    double worst = 0.0;
    for (int s = 0; s < 5; ++s) {
      const std::size_t i = uc(rng);
      std::size_t j = uc(rng);
      if (j == i) j = (i + 1) % g.cell_count();
      worst = std::max(worst, green_symmetry_defect(g, i, j, 1e-13));
    }
    return worst;
  }));

  // Uniform neutral rest state is a fixed point of both solvers.
  out.push_back(detail::guarded("hydro_well_balanced", 1e-14, [&] {
    const Grid g = make_grid(2, {1.0, 1.0}, {16, 8});
    const GasLaw law = GasLaw::power_law(1.0, 2.0);
    BipolarHydroState s;
    s.eps = 0.05;
    s.rho = ScalarField(g, 0.7);
    s.n = ScalarField(g, 0.7);
    s.mom_rho = VectorField(g);
    s.mom_n = VectorField(g);
    update_potential(s);
    const BipolarHydroState next = ep_step(s, law, law, stable_dt(s, law, law, 0.5));
    return std::max({max_abs(next.rho - s.rho), max_abs(next.n - s.n), max_abs(next.mom_rho), max_abs(next.mom_n)});
  }));

  out.push_back(detail::guarded("dd_well_balanced", 1e-14, [&] {
    const Grid g = make_grid(1, {1.0}, {32});
    const GasLaw law = GasLaw::power_law(1.0, 2.0);
    const EquilibriumState s = make_equilibrium(ScalarField(g, 0.7), ScalarField(g, 0.7), law, law, 0.0);
    const EquilibriumState next = dd_step(s, law, law, dd_stable_dt(s, law, law));
    return std::max(max_abs(next.rho_bar - s.rho_bar), max_abs(next.n_bar - s.n_bar));
  }));

  // Friction-only decay of momentum at uniform density.
  out.push_back(detail::guarded("friction_decay", 1e-12, [&] {
    const Grid g = make_grid(1, {1.0}, {16});
    const GasLaw law = GasLaw::power_law(1.0, 2.0);
    BipolarHydroState s;
    s.eps = 0.01;
    s.rho = ScalarField(g, 1.0);
    s.n = ScalarField(g, 1.0);
    s.mom_rho = VectorField(g, 0.3);
    s.mom_n = VectorField(g, -0.2);
    s.mom_rho.zero_boundary();
    s.mom_n.zero_boundary();
    s.grad_phi = VectorField(g);
    const double dt = 0.004;
    const BipolarHydroState next = relaxation_substep(s, law, law, dt);
    const double e = std::exp(-dt / s.eps);
    double worst = 0.0;
    for (std::size_t f = 1; f + 1 < next.mom_rho.comp[0].size(); ++f)
      worst = std::max({worst, std::abs(next.mom_rho.comp[0][f] - 0.3 * e), std::abs(next.mom_n.comp[0][f] + 0.2 * e)});
    return worst;
  }));

  // Mass is conserved by a short smooth run of both solvers.
  out.push_back(detail::guarded("mass_conservation", 1e-10, [&] {
    const Grid g = make_grid(1, {1.0}, {64});
    const GasLaw law = GasLaw::power_law(1.0, 2.0);
    const ScalarField r = sample(g, [](double x, double) { return 0.5 + 0.1 * std::cos(std::acos(-1.0) * x); });
    const ScalarField n = sample(g, [](double x, double) { return 0.5 - 0.05 * std::cos(std::acos(-1.0) * x); });
    const double shift = (integrate(r) - integrate(n)) / g.volume();
    ScalarField n2 = n;
    for (double& v : n2.values) v += shift;
    EquilibriumState e = make_equilibrium(r, n2, law, law, 0.0);
    BipolarHydroState h;
    h.eps = 0.01;
    h.rho = r;
    h.n = n2;
    h.mom_rho = lifted_momentum(r, e.u_bar);
    h.mom_n = lifted_momentum(n2, e.v_bar);
    update_potential(h);
    const double m_r = integrate(r), m_n = integrate(n2);
    for (int k = 0; k < 20; ++k) {
      h = ep_step(h, law, law, stable_dt(h, law, law, 0.5));
      e = dd_step(e, law, law, dd_stable_dt(e, law, law));
    }
    return std::max({std::abs(integrate(h.rho) / m_r - 1.0), std::abs(integrate(h.n) / m_n - 1.0),
                     std::abs(integrate(e.rho_bar) / m_r - 1.0), std::abs(integrate(e.n_bar) / m_n - 1.0)});
  }));

  return out;
}

}  // namespace bipolar
