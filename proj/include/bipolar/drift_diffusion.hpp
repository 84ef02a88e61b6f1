#pragma once

// Bipolar drift-diffusion system with no-flux walls,
//
//   rho_t = div(rho grad(h1'(rho) + phi)),  n_t = div(n grad(h2'(n) - phi)),  -Lap phi = rho - n,
//
// written with the lifted velocities u = -grad(h1'(rho) + phi), v = -grad(h2'(n) - phi)
// as rho_t + div(rho u) = 0. The face fluxes are those of the hydrodynamic relaxation
// step, so the two solvers share one discrete force balance.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "bipolar/eos.hpp"
#include "bipolar/error.hpp"
#include "bipolar/euler_poisson.hpp"
#include "bipolar/grid.hpp"
#include "bipolar/poisson.hpp"

namespace bipolar {

struct EquilibriumState {
  double t = 0.0;
  ScalarField rho_bar;
  ScalarField n_bar;
  ScalarField phi_bar;
  VectorField grad_phi_bar;
  VectorField u_bar;
  VectorField v_bar;
  VectorField e_bar1;
  VectorField e_bar2;

  const Grid& grid() const { return rho_bar.grid; }
};

/// Density bracket of the comparison hypothesis, per species.
struct DensityBounds {
  double delta1 = 0.0;
  double m1 = std::numeric_limits<double>::infinity();
  double delta2 = 0.0;
  double m2 = std::numeric_limits<double>::infinity();
};

enum class DdStepper {
  explicit_euler,
  implicit_lagged,  ///< backward diffusion with frozen coefficients, explicit drift
};

struct DdOptions {
  DdStepper stepper = DdStepper::explicit_euler;
  PoissonOptions poisson;
  DensityBounds bounds;
  double floor = 1e-12;
  /// Refresh e_bar1, e_bar2 by a backward difference over this step.
  bool compute_residuals = true;
  double cg_tol = 1e-13;
};

/// Explicit step limit 0.25 dx^2 / (dim max p').
inline double dd_stable_dt(const EquilibriumState& s, const GasLaw& law1, const GasLaw& law2) {
  double cs = 0.0;
  for (std::size_t c = 0; c < s.rho_bar.size(); ++c)
    cs = std::max({cs, law1.dp(std::max(s.rho_bar.values[c], 0.0)), law2.dp(std::max(s.n_bar.values[c], 0.0))});
  const double dx = s.grid().min_dx();
  return cs > 0.0 ? 0.25 * dx * dx / (s.grid().dim * cs) : 0.25 * dx * dx;
}

/// u_bar = -grad(h1'(rho_bar) + phi_bar), v_bar = -grad(h2'(n_bar) - phi_bar), zero on walls.
inline std::pair<VectorField, VectorField> reconstruct_velocities(const EquilibriumState& s, const GasLaw& law1,
                                                                  const GasLaw& law2, double floor = 1e-12) {
  const Grid& g = s.grid();
  ScalarField a(g), b(g);
  for (std::size_t c = 0; c < s.rho_bar.size(); ++c) {
    const double r = s.rho_bar.values[c], n = s.n_bar.values[c];
    if (!(r > floor) || !(n > floor)) fail(ErrorCode::domain, "velocity reconstruction at or below the density floor");
    a.values[c] = law1.dh(r) + s.phi_bar.values[c];
    b.values[c] = law2.dh(n) - s.phi_bar.values[c];
  }
  VectorField u = gradient(a, BoundaryClosure::neumann_zero);
  VectorField v = gradient(b, BoundaryClosure::neumann_zero);
  for (int ax = 0; ax < g.dim; ++ax) {
    for (double& x : u.comp[ax]) x = -x;
    for (double& x : v.comp[ax]) x = -x;
  }
  u.zero_boundary();
  v.zero_boundary();
  return {u, v};
}

/// Face momentum rho_f u_f.
inline VectorField lifted_momentum(const ScalarField& rho, const VectorField& u) {
  VectorField m = face_average(rho);
  for (int a = 0; a < rho.grid.dim; ++a)
    for (std::size_t f = 0; f < m.comp[a].size(); ++f) m.comp[a][f] *= u.comp[a][f];
  m.zero_boundary();
  return m;
}

/// (m_new - m_old)/dt + div(m (x) u) at the faces, with the hydro advection operator.
inline VectorField lifted_residual(const VectorField& m_old, const VectorField& m_new, const VectorField& m_conv,
                                   const VectorField& u_conv, double dt) {
  VectorField e = momentum_advection(m_conv, u_conv);
  for (int a = 0; a < m_new.grid.dim; ++a)
    for (std::size_t f = 0; f < e.comp[a].size(); ++f) e.comp[a][f] += (m_new.comp[a][f] - m_old.comp[a][f]) / dt;
  e.zero_boundary();
  return e;
}

namespace detail {

inline void check_bounds(const EquilibriumState& s, const DensityBounds& b) {
  const double r0 = min_value(s.rho_bar), r1 = max_value(s.rho_bar);
  const double n0 = min_value(s.n_bar), n1 = max_value(s.n_bar);
  if (r0 < 0.5 * b.delta1 || r1 > 2.0 * b.m1 || n0 < 0.5 * b.delta2 || n1 > 2.0 * b.m2)
    fail(ErrorCode::vacuum_proximity, "equilibrium densities left the bracket [delta/2, 2M]: rho in [" +
                                          std::to_string(r0) + ", " + std::to_string(r1) + "], n in [" +
                                          std::to_string(n0) + ", " + std::to_string(n1) + "]");
}

inline void solve_equilibrium_potential(EquilibriumState& s, const DdOptions& opt) {
  PoissonOptions po = opt.poisson;
  po.compat_scale = std::max(po.compat_scale, integrate(s.rho_bar));
  po.initial_guess = s.phi_bar.size() == s.rho_bar.size() ? &s.phi_bar : nullptr;
  const PoissonSolution sol = solve_neumann(s.rho_bar - s.n_bar, po);
  s.phi_bar = sol.phi;
  s.grad_phi_bar = sol.grad_phi;
}

/// (I - dt div(a_f grad)) x = b with a_f >= 0 on interior faces, by CG; returns x.
inline std::vector<double> implicit_diffusion(const Grid& g, const VectorField& a, const std::vector<double>& b,
                                              double dt, double tol) {
  const std::size_t n = b.size();
  auto apply = [&](const std::vector<double>& x, std::vector<double>& y) {
    const int nx = g.nx(), ny = g.ny();
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        const std::size_t c = g.cell(i, j);
        double lap = 0.0;
        const double ix2 = 1.0 / (g.dx[0] * g.dx[0]);
        if (i > 0) lap += a.at(0, i, j) * (x[c - 1] - x[c]) * ix2;
        if (i < nx - 1) lap += a.at(0, i + 1, j) * (x[c + 1] - x[c]) * ix2;
        if (g.dim == 2) {
          const double iy2 = 1.0 / (g.dx[1] * g.dx[1]);
          if (j > 0) lap += a.at(1, i, j) * (x[c - nx] - x[c]) * iy2;
          if (j < ny - 1) lap += a.at(1, i, j + 1) * (x[c + nx] - x[c]) * iy2;
        }
        y[c] = x[c] - dt * lap;
      }
  };
  std::vector<double> x = b, r(n), p(n), ap(n);
  apply(x, ap);
  for (std::size_t k = 0; k < n; ++k) r[k] = b[k] - ap[k];
  p = r;
  double rr = dot(r, r);
  const int max_it = static_cast<int>(10 * n);
  int it = 0;
  while (max_norm(r) > tol && it < max_it) {
    apply(p, ap);
    const double alpha = rr / dot(p, ap);
    for (std::size_t k = 0; k < n; ++k) {
      x[k] += alpha * p[k];
      r[k] -= alpha * ap[k];
    }
    const double rr_new = dot(r, r);
    for (std::size_t k = 0; k < n; ++k) p[k] = r[k] + rr_new / rr * p[k];
    rr = rr_new;
    ++it;
  }
  if (max_norm(r) > tol) throw SolverError("implicit diffusion CG did not converge", max_norm(r), it);
  return x;
}

inline ScalarField implicit_species(const ScalarField& r, const GasLaw& law, const VectorField& grad_phi, double sign,
                                    double dt, double tol) {
  const Grid& g = r.grid;
  // Explicit drift sign * div(r_f grad phi); diffusion div(p'(r)_f grad r) taken implicitly.
  const VectorField rf = face_average(r);
  VectorField drift(g);
  for (int a = 0; a < g.dim; ++a)
    for (std::size_t f = 0; f < drift.comp[a].size(); ++f) drift.comp[a][f] = sign * rf.comp[a][f] * grad_phi.comp[a][f];
  drift.zero_boundary();
  const ScalarField ddrift = divergence(drift);
  VectorField coef = face_average(map(r, [&](double x) { return law.dp(std::max(x, 0.0)); }));
  coef.zero_boundary();
  std::vector<double> b(r.size());
  for (std::size_t c = 0; c < r.size(); ++c) b[c] = r.values[c] + dt * ddrift.values[c];
  ScalarField out(g);
  out.values = implicit_diffusion(g, coef, b, dt, tol);
  // The operator conserves mass exactly; remove the CG remainder by a constant shift.
  const double shift = (integrate(r) - integrate(out)) / g.volume();
  for (double& x : out.values) x += shift;
  return out;
}

}  // namespace detail

/// Initial lifting: potential, velocities and residuals of given densities. The
/// residuals at t are taken from a forward trial step of size dt_trial.
inline EquilibriumState make_equilibrium(const ScalarField& rho_bar, const ScalarField& n_bar, const GasLaw& law1,
                                         const GasLaw& law2, double t, const DdOptions& opt = {},
                                         double dt_trial = -1.0);

/// One step of the drift-diffusion system: density update with conservative face
/// fluxes, Poisson re-solve, velocity reconstruction and (optionally) residuals.
inline EquilibriumState dd_step(const EquilibriumState& s, const GasLaw& law1, const GasLaw& law2, double dt,
                                const DdOptions& opt = {}) {
  require(dt > 0.0 && std::isfinite(dt), ErrorCode::stability, "time step must be positive and finite");
  const Grid& g = s.grid();
  EquilibriumState out;
  out.t = s.t + dt;
  if (opt.stepper == DdStepper::explicit_euler) {
    const double limit = dd_stable_dt(s, law1, law2);
    if (dt > 2.0 * limit * (1.0 + 1e-12))
      fail(ErrorCode::stability, "drift-diffusion dt = " + std::to_string(dt) + " exceeds the explicit limit " +
                                     std::to_string(2.0 * limit));
    const ScalarField d1 = divergence(lifted_momentum(s.rho_bar, s.u_bar));
    const ScalarField d2 = divergence(lifted_momentum(s.n_bar, s.v_bar));
    out.rho_bar = s.rho_bar;
    out.n_bar = s.n_bar;
    for (std::size_t c = 0; c < s.rho_bar.size(); ++c) {
      out.rho_bar.values[c] -= dt * d1.values[c];
      out.n_bar.values[c] -= dt * d2.values[c];
    }
  } else {
    out.rho_bar = detail::implicit_species(s.rho_bar, law1, s.grad_phi_bar, +1.0, dt, opt.cg_tol);
    out.n_bar = detail::implicit_species(s.n_bar, law2, s.grad_phi_bar, -1.0, dt, opt.cg_tol);
  }
  detail::check_bounds(out, opt.bounds);
  out.phi_bar = s.phi_bar;
  detail::solve_equilibrium_potential(out, opt);
  auto [u, v] = reconstruct_velocities(out, law1, law2, opt.floor);
  out.u_bar = std::move(u);
  out.v_bar = std::move(v);
  if (opt.compute_residuals) {
    const VectorField m1_old = lifted_momentum(s.rho_bar, s.u_bar);
    const VectorField m2_old = lifted_momentum(s.n_bar, s.v_bar);
    const VectorField m1 = lifted_momentum(out.rho_bar, out.u_bar);
    const VectorField m2 = lifted_momentum(out.n_bar, out.v_bar);
    out.e_bar1 = lifted_residual(m1_old, m1, m1, out.u_bar, dt);
    out.e_bar2 = lifted_residual(m2_old, m2, m2, out.v_bar, dt);
  } else {
    out.e_bar1 = s.e_bar1.comp[0].empty() ? VectorField(g) : s.e_bar1;
    out.e_bar2 = s.e_bar2.comp[0].empty() ? VectorField(g) : s.e_bar2;
  }
  return out;
}

inline EquilibriumState make_equilibrium(const ScalarField& rho_bar, const ScalarField& n_bar, const GasLaw& law1,
                                         const GasLaw& law2, double t, const DdOptions& opt, double dt_trial) {
  require(rho_bar.grid == n_bar.grid, ErrorCode::domain, "species live on different grids");
  EquilibriumState s;
  s.t = t;
  s.rho_bar = rho_bar;
  s.n_bar = n_bar;
  detail::check_bounds(s, opt.bounds);
  detail::solve_equilibrium_potential(s, opt);
  auto [u, v] = reconstruct_velocities(s, law1, law2, opt.floor);
  s.u_bar = std::move(u);
  s.v_bar = std::move(v);
  s.e_bar1 = VectorField(rho_bar.grid);
  s.e_bar2 = VectorField(rho_bar.grid);
  const double dt = dt_trial > 0.0 ? dt_trial : dd_stable_dt(s, law1, law2);
  DdOptions trial = opt;
  trial.compute_residuals = false;
  const EquilibriumState next = dd_step(s, law1, law2, dt, trial);
  const VectorField m1 = lifted_momentum(s.rho_bar, s.u_bar);
  const VectorField m2 = lifted_momentum(s.n_bar, s.v_bar);
  s.e_bar1 = lifted_residual(m1, lifted_momentum(next.rho_bar, next.u_bar), m1, s.u_bar, dt);
  s.e_bar2 = lifted_residual(m2, lifted_momentum(next.n_bar, next.v_bar), m2, s.v_bar, dt);
  return s;
}

/// Advance to t_target in uniform substeps no larger than the stepper's limit.
/// Residuals are refreshed on the last substep only.
inline EquilibriumState advance_to(const EquilibriumState& s, const GasLaw& law1, const GasLaw& law2, double t_target,
                                   double dt_max, const DdOptions& opt = {}) {
  const double span = t_target - s.t;
  if (span <= 0.0) return s;
  const long steps = std::max(1L, static_cast<long>(std::ceil(span / dt_max * (1.0 - 1e-12))));
  const double dt = span / static_cast<double>(steps);
  EquilibriumState cur = s;
  DdOptions quiet = opt;
  quiet.compute_residuals = false;
  for (long k = 0; k < steps; ++k) {
    cur = dd_step(cur, law1, law2, dt, k + 1 == steps ? opt : quiet);
  }
  cur.t = t_target;
  return cur;
}

/// Lifted residuals at every checkpoint of a stored history: centred time differences
/// of rho_bar u_bar (one-sided at the ends) plus the advection operator.
inline std::vector<std::pair<VectorField, VectorField>> lifted_residuals(const std::vector<EquilibriumState>& history) {
  require(history.size() >= 3, ErrorCode::domain, "lifted residuals need at least three checkpoints");
  const std::size_t k = history.size();
  std::vector<VectorField> m1(k), m2(k);
  for (std::size_t i = 0; i < k; ++i) {
    m1[i] = lifted_momentum(history[i].rho_bar, history[i].u_bar);
    m2[i] = lifted_momentum(history[i].n_bar, history[i].v_bar);
  }
  std::vector<std::pair<VectorField, VectorField>> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t lo = i == 0 ? 0 : i - 1;
    const std::size_t hi = i + 1 == k ? k - 1 : i + 1;
    const double dt = history[hi].t - history[lo].t;
    require(dt > 0.0, ErrorCode::domain, "checkpoint times must increase");
    out.emplace_back(lifted_residual(m1[lo], m1[hi], m1[i], history[i].u_bar, dt),
                     lifted_residual(m2[lo], m2[hi], m2[i], history[i].v_bar, dt));
  }
  return out;
}

/// E_dd = int h1(rho_bar) + h2(n_bar) + |grad phi_bar|^2 / 2.
inline double dd_energy(const EquilibriumState& s, const GasLaw& law1, const GasLaw& law2) {
  double e = 0.0;
  for (std::size_t c = 0; c < s.rho_bar.size(); ++c) e += law1.h(s.rho_bar.values[c]) + law2.h(s.n_bar.values[c]);
  return e * s.grid().cell_volume() + 0.5 * face_inner(s.grad_phi_bar, s.grad_phi_bar);
}

/// sum_f w (rho_f |u_f|^2 + n_f |v_f|^2).
inline double dd_dissipation_rate(const EquilibriumState& s) {
  const VectorField rf = face_average(s.rho_bar);
  const VectorField nf = face_average(s.n_bar);
  return face_sum(s.grid(), [&](int a, int i, int j) {
    const std::size_t f = s.grid().face(a, i, j);
    const double u = s.u_bar.comp[a][f], v = s.v_bar.comp[a][f];
    return rf.comp[a][f] * u * u + nf.comp[a][f] * v * v;
  });
}

/// Streaming energy-identity residual max_t |E(t) - E(0) + int_0^t dissipation|.
class DdEnergyAccumulator {
 public:
  DdEnergyAccumulator(const GasLaw& law1, const GasLaw& law2) : law1_(law1), law2_(law2) {}

  void add(const EquilibriumState& s) {
    const double e = dd_energy(s, law1_, law2_);
    const double d = dd_dissipation_rate(s);
    if (count_ == 0) {
      e0_ = e;
    } else {
      work_ += 0.5 * (s.t - t_prev_) * (d + d_prev_);
      residual_ = std::max(residual_, std::abs(e - e0_ + work_));
      max_increase_ = std::max(max_increase_, e - e_prev_);
    }
    t_prev_ = s.t;
    e_prev_ = e;
    d_prev_ = d;
    ++count_;
  }

  double residual() const { return residual_; }
  /// Largest energy increase between consecutive samples (<= 0 for a monotone run).
  double max_increase() const { return max_increase_; }
  double energy() const { return e_prev_; }
  int count() const { return count_; }

 private:
  GasLaw law1_, law2_;
  int count_ = 0;
  double t_prev_ = 0.0, e_prev_ = 0.0, d_prev_ = 0.0, e0_ = 0.0, work_ = 0.0, residual_ = 0.0;
  double max_increase_ = -std::numeric_limits<double>::infinity();
};

inline double dd_energy_residual(const std::vector<EquilibriumState>& history, const GasLaw& law1,
                                 const GasLaw& law2) {
  require(history.size() >= 2, ErrorCode::domain, "energy residual needs at least two states");
  DdEnergyAccumulator acc(law1, law2);
  for (const auto& s : history) acc.add(s);
  return acc.residual();
}

/// Density extrema for hypothesis monitoring.
struct DensityRange {
  double rho_min = 0.0, rho_max = 0.0, n_min = 0.0, n_max = 0.0;
};

inline DensityRange density_range(const EquilibriumState& s) {
  return {min_value(s.rho_bar), max_value(s.rho_bar), min_value(s.n_bar), max_value(s.n_bar)};
}

}  // namespace bipolar
