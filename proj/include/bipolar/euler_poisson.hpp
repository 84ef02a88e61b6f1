#pragma once

// Scaled bipolar Euler-Poisson system with friction 1/eps on a staggered grid:
// densities live in cells, momenta on faces (wall faces are identically zero).
//
//   rho_t + div(rho u) = 0
//   eps [(rho u)_t + div(rho u (x) u)] = -rho grad(h1'(rho) + phi) - rho u
//   n_t + div(n v) = 0
//   eps [(n v)_t + div(n v (x) v)] = -n grad(h2'(n) - phi) - n v
//   -Lap phi = rho - n
//
// One step is transport -> Poisson -> relaxation. Pressure and field forces are
// carried by the relaxation substep together with friction through the exact
// integrating factor, so the eps -> 0 limit of a step is the explicit
// drift-diffusion update with the same face operators.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "bipolar/eos.hpp"
#include "bipolar/error.hpp"
#include "bipolar/grid.hpp"
#include "bipolar/poisson.hpp"

namespace bipolar {

struct BipolarHydroState {
  double t = 0.0;
  double eps = 1.0;
  ScalarField rho;
  VectorField mom_rho;
  ScalarField n;
  VectorField mom_n;
  ScalarField phi;
  VectorField grad_phi;
  /// Mass added by the vacuum floor since the start of the run (both species).
  double floor_mass = 0.0;
  int poisson_iterations = 0;

  const Grid& grid() const { return rho.grid; }
};

struct HydroOptions {
  double floor = 1e-12;
  PoissonOptions poisson;
};

struct EnergyBreakdown {
  double kinetic_rho = 0.0;
  double kinetic_n = 0.0;
  double internal_rho = 0.0;
  double internal_n = 0.0;
  double field = 0.0;
  double total = 0.0;
};

// ---------------------------------------------------------------------------
// Face kinematics and the staggered momentum advection operator.

/// u_f = m_f / max(rho_f, floor) with rho_f the arithmetic face average.
inline VectorField face_velocity(const ScalarField& rho, const VectorField& mom, double floor) {
  const VectorField rf = face_average(rho);
  VectorField u(rho.grid);
  for (int a = 0; a < rho.grid.dim; ++a)
    for (std::size_t f = 0; f < u.comp[a].size(); ++f) u.comp[a][f] = mom.comp[a][f] / std::max(rf.comp[a][f], floor);
  return u;
}

/// div(m (x) u) evaluated on the momentum faces with local Lax-Friedrichs fluxes
/// (cell-centred fluxes along the momentum axis, corner fluxes across it).
/// Wall faces of the result are zero.
inline VectorField momentum_advection(const VectorField& mom, const VectorField& vel) {
  const Grid& g = mom.grid;
  const int nx = g.nx(), ny = g.ny();
  VectorField out(g);
  std::vector<double> flux;

  // Axis-0 momentum.
  flux.assign(static_cast<std::size_t>(nx), 0.0);
  for (int j = 0; j < ny; ++j) {
    for (int c = 0; c < nx; ++c) {
      const double mL = mom.at(0, c, j), mR = mom.at(0, c + 1, j);
      const double uL = vel.at(0, c, j), uR = vel.at(0, c + 1, j);
      const double a = std::max(std::abs(uL), std::abs(uR));
      flux[c] = 0.5 * (mL * uL + mR * uR) - 0.5 * a * (mR - mL);
    }
    for (int i = 1; i < nx; ++i) out.at(0, i, j) = (flux[i] - flux[i - 1]) / g.dx[0];
  }
  if (g.dim == 2) {
    // Corner fluxes of axis-0 momentum across y: corner (i, j+1/2), j = 0..ny-2.
    for (int i = 1; i < nx; ++i) {
      double below = 0.0;
      for (int j = 0; j < ny; ++j) {
        double above = 0.0;
        if (j < ny - 1) {
          const double w = 0.5 * (vel.at(1, i - 1, j + 1) + vel.at(1, i, j + 1));
          const double mB = mom.at(0, i, j), mT = mom.at(0, i, j + 1);
          above = 0.5 * w * (mB + mT) - 0.5 * std::abs(w) * (mT - mB);
        }
        out.at(0, i, j) += (above - below) / g.dx[1];
        below = above;
      }
    }
    // Axis-1 momentum along y.
    flux.assign(static_cast<std::size_t>(ny), 0.0);
    for (int i = 0; i < nx; ++i) {
      for (int c = 0; c < ny; ++c) {
        const double mB = mom.at(1, i, c), mT = mom.at(1, i, c + 1);
        const double vB = vel.at(1, i, c), vT = vel.at(1, i, c + 1);
        const double a = std::max(std::abs(vB), std::abs(vT));
        flux[c] = 0.5 * (mB * vB + mT * vT) - 0.5 * a * (mT - mB);
      }
      for (int j = 1; j < ny; ++j) out.at(1, i, j) = (flux[j] - flux[j - 1]) / g.dx[1];
    }
    // Corner fluxes of axis-1 momentum across x: corner (i+1/2, j), i = 0..nx-2.
    for (int j = 1; j < ny; ++j) {
      double left = 0.0;
      for (int i = 0; i < nx; ++i) {
        double right = 0.0;
        if (i < nx - 1) {
          const double w = 0.5 * (vel.at(0, i + 1, j - 1) + vel.at(0, i + 1, j));
          const double mL = mom.at(1, i, j), mR = mom.at(1, i + 1, j);
          right = 0.5 * w * (mL + mR) - 0.5 * std::abs(w) * (mR - mL);
        }
        out.at(1, i, j) += (right - left) / g.dx[0];
        left = right;
      }
    }
  }
  return out;
}

/// Equilibrium momentum -rho_f grad(h'(rho) + sign * phi) on interior faces.
inline VectorField force_balance_momentum(const ScalarField& rho, const GasLaw& law, const VectorField& grad_phi,
                                          double sign, double floor) {
  const Grid& g = rho.grid;
  ScalarField chem(g);
  for (std::size_t c = 0; c < rho.size(); ++c) chem.values[c] = law.dh(std::max(rho.values[c], floor));
  const VectorField gchem = gradient(chem, BoundaryClosure::neumann_zero);
  const VectorField rf = face_average(rho);
  VectorField out(g);
  for (int a = 0; a < g.dim; ++a)
    for (std::size_t f = 0; f < out.comp[a].size(); ++f)
      out.comp[a][f] = -rf.comp[a][f] * (gchem.comp[a][f] + sign * grad_phi.comp[a][f]);
  out.zero_boundary();
  return out;
}

// ---------------------------------------------------------------------------
// Time step policy.

namespace detail {

/// Largest dt with dt * tanh(dt / (2 eps)) <= bound.
inline double relaxation_cap(double eps, double bound) {
  auto g = [eps](double dt) { return dt * std::tanh(dt / (2.0 * eps)); };
  double lo = 0.0, hi = std::max(std::sqrt(2.0 * eps * bound), bound) + bound;
  while (g(hi) < bound) hi *= 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (g(mid) <= bound ? lo : hi) = mid;
  }
  return lo;
}

}  // namespace detail

/// cfl * dx / max(|u| + sqrt(p'(rho)/eps), |v| + sqrt(p'(n)/eps)), further capped by the
/// linear stability limit of the relaxation substep, dt tanh(dt/2eps) <= cfl * 2/lambda,
/// lambda = 4 dim max p' / dx^2 + max rho + max n. The cap only binds when dt ~ eps.
inline double stable_dt(const BipolarHydroState& s, const GasLaw& law1, const GasLaw& law2, double cfl,
                        double floor = 1e-12) {
  require(cfl > 0.0 && cfl <= 1.0, ErrorCode::config, "cfl must lie in (0, 1]");
  const Grid& g = s.grid();
  const VectorField u = face_velocity(s.rho, s.mom_rho, floor);
  const VectorField v = face_velocity(s.n, s.mom_n, floor);
  const double umax = max_abs(u), vmax = max_abs(v);
  double cs_rho = 0.0, cs_n = 0.0, rmax = 0.0, nmax = 0.0;
  for (std::size_t c = 0; c < s.rho.size(); ++c) {
    cs_rho = std::max(cs_rho, law1.dp(std::max(s.rho.values[c], 0.0)));
    cs_n = std::max(cs_n, law2.dp(std::max(s.n.values[c], 0.0)));
    rmax = std::max(rmax, s.rho.values[c]);
    nmax = std::max(nmax, s.n.values[c]);
  }
  const double speed = std::max(umax + std::sqrt(cs_rho / s.eps), vmax + std::sqrt(cs_n / s.eps));
  const double dx = g.min_dx();
  double dt = speed > 0.0 ? cfl * dx / speed : cfl * dx;
  const double lambda = 4.0 * g.dim * std::max(cs_rho, cs_n) / (dx * dx) + rmax + nmax;
  if (lambda > 0.0) dt = std::min(dt, detail::relaxation_cap(s.eps, cfl * 2.0 / lambda));
  return dt;
}

// ---------------------------------------------------------------------------
// Substeps.

namespace detail {

inline void apply_floor(ScalarField& rho, double floor, double& floor_mass, double neg_tol, const char* name) {
  for (double& r : rho.values) {
    if (r < floor) {
      if (r < -neg_tol) fail(ErrorCode::positivity, std::string(name) + " became negative (" + std::to_string(r) + ")");
      floor_mass += (floor - r) * rho.grid.cell_volume();
      r = floor;
    }
  }
}

inline void transport_species(ScalarField& rho, VectorField& mom, double dt, double floor) {
  const VectorField u = face_velocity(rho, mom, floor);
  const ScalarField dm = divergence(mom);
  const VectorField adv = momentum_advection(mom, u);
  for (std::size_t c = 0; c < rho.size(); ++c) rho.values[c] -= dt * dm.values[c];
  for (int a = 0; a < rho.grid.dim; ++a)
    for (std::size_t f = 0; f < mom.comp[a].size(); ++f) mom.comp[a][f] -= dt * adv.comp[a][f];
  mom.zero_boundary();
}

}  // namespace detail

/// Conservative transport of both species (no pressure, no field, no friction).
inline BipolarHydroState transport_substep(const BipolarHydroState& s, double dt, const HydroOptions& opt = {}) {
  BipolarHydroState out = s;
  detail::transport_species(out.rho, out.mom_rho, dt, opt.floor);
  detail::transport_species(out.n, out.mom_n, dt, opt.floor);
  const double mass = integrate(s.rho);
  const double neg_tol = 1e-8 * std::max(1.0, mass / s.grid().volume());
  detail::apply_floor(out.rho, opt.floor, out.floor_mass, neg_tol, "rho");
  detail::apply_floor(out.n, opt.floor, out.floor_mass, neg_tol, "n");
  return out;
}

/// Re-solve the potential for the current densities (warm-started from the stored one).
inline void update_potential(BipolarHydroState& s, const HydroOptions& opt = {}) {
  PoissonOptions po = opt.poisson;
  po.compat_scale = std::max(po.compat_scale, integrate(s.rho));
  po.initial_guess = s.phi.size() == s.rho.size() ? &s.phi : nullptr;
  const PoissonSolution sol = solve_neumann(s.rho - s.n, po);
  s.phi = sol.phi;
  s.grad_phi = sol.grad_phi;
  s.poisson_iterations = sol.iterations;
}

/// Exact relaxation with frozen densities and potential:
/// m <- e m + (1 - e) m_eq, e = exp(-dt/eps), m_eq = -rho_f grad(h'(rho) +- phi).
inline BipolarHydroState relaxation_substep(const BipolarHydroState& s, const GasLaw& law1, const GasLaw& law2,
                                            double dt, const HydroOptions& opt = {}) {
  BipolarHydroState out = s;
  const double e = std::exp(-dt / s.eps);
  const VectorField eq_rho = force_balance_momentum(s.rho, law1, s.grad_phi, +1.0, opt.floor);
  const VectorField eq_n = force_balance_momentum(s.n, law2, s.grad_phi, -1.0, opt.floor);
  for (int a = 0; a < s.grid().dim; ++a)
    for (std::size_t f = 0; f < out.mom_rho.comp[a].size(); ++f) {
      out.mom_rho.comp[a][f] = e * s.mom_rho.comp[a][f] + (1.0 - e) * eq_rho.comp[a][f];
      out.mom_n.comp[a][f] = e * s.mom_n.comp[a][f] + (1.0 - e) * eq_n.comp[a][f];
    }
  out.mom_rho.zero_boundary();
  out.mom_n.zero_boundary();
  return out;
}

/// One split step: transport -> Poisson -> relaxation.
inline BipolarHydroState ep_step(const BipolarHydroState& s, const GasLaw& law1, const GasLaw& law2, double dt,
                                 const HydroOptions& opt = {}) {
  require(dt > 0.0 && std::isfinite(dt), ErrorCode::stability, "time step must be positive and finite");
  const double limit = stable_dt(s, law1, law2, 1.0, opt.floor);
  if (dt > limit * (1.0 + 1e-12))
    fail(ErrorCode::stability, "dt = " + std::to_string(dt) + " exceeds the stability limit " + std::to_string(limit));
  BipolarHydroState out = transport_substep(s, dt, opt);
  update_potential(out, opt);
  out = relaxation_substep(out, law1, law2, dt, opt);
  out.t = s.t + dt;
  return out;
}

// ---------------------------------------------------------------------------
// Energy.

/// eps/2 sum_f w rho_f |u_f|^2 over the faces of all axes.
inline double face_kinetic(const ScalarField& rho, const VectorField& mom, double eps, double floor) {
  const VectorField rf = face_average(rho);
  return 0.5 * eps * face_sum(rho.grid, [&](int a, int i, int j) {
    const std::size_t f = rho.grid.face(a, i, j);
    const double r = rf.comp[a][f];
    return r > floor ? mom.comp[a][f] * mom.comp[a][f] / r : 0.0;
  });
}

inline EnergyBreakdown total_energy(const BipolarHydroState& s, const GasLaw& law1, const GasLaw& law2,
                                    double floor = 1e-12) {
  EnergyBreakdown e;
  e.kinetic_rho = face_kinetic(s.rho, s.mom_rho, s.eps, floor);
  e.kinetic_n = face_kinetic(s.n, s.mom_n, s.eps, floor);
  const double dv = s.grid().cell_volume();
  for (std::size_t c = 0; c < s.rho.size(); ++c) {
    e.internal_rho += law1.h(std::max(s.rho.values[c], 0.0)) * dv;
    e.internal_n += law2.h(std::max(s.n.values[c], 0.0)) * dv;
  }
  e.field = 0.5 * face_inner(s.grad_phi, s.grad_phi);
  e.total = e.kinetic_rho + e.kinetic_n + e.internal_rho + e.internal_n + e.field;
  return e;
}

/// Frictional dissipation rate sum_f w (rho_f |u_f|^2 + n_f |v_f|^2).
inline double friction_rate(const BipolarHydroState& s, double floor = 1e-12) {
  return 2.0 * (face_kinetic(s.rho, s.mom_rho, 1.0, floor) + face_kinetic(s.n, s.mom_n, 1.0, floor));
}

struct DissipationBudget {
  double defect = 0.0;   ///< max_t E(t) - E(0) + int_0^t friction
  bool sign_ok = true;   ///< E non-increasing between samples up to the tolerance
  double max_increase = 0.0;
};

/// Streaming version of the budget: feed every state of a run in time order.
class DissipationAccumulator {
 public:
  DissipationAccumulator(const GasLaw& law1, const GasLaw& law2, double tol, double floor = 1e-12)
      : law1_(law1), law2_(law2), tol_(tol), floor_(floor) {}

  void add(const BipolarHydroState& s) {
    const double e = total_energy(s, law1_, law2_, floor_).total;
    const double d = friction_rate(s, floor_);
    if (count_ == 0) {
      e0_ = e;
    } else {
      work_ += 0.5 * (s.t - t_prev_) * (d + d_prev_);
      const double inc = e - e_prev_;
      budget_.max_increase = std::max(budget_.max_increase, inc);
      if (inc > tol_) budget_.sign_ok = false;
      budget_.defect = std::max(budget_.defect, e - e0_ + work_);
    }
    t_prev_ = s.t;
    e_prev_ = e;
    d_prev_ = d;
    ++count_;
  }

  int count() const { return count_; }
  double energy() const { return e_prev_; }
  double initial_energy() const { return e0_; }
  double dissipated() const { return work_; }
  /// E(t) - E(0) + int_0^t friction at the latest sample.
  double current_defect() const { return e_prev_ - e0_ + work_; }
  DissipationBudget result() const { return budget_; }

 private:
  GasLaw law1_, law2_;
  double tol_, floor_;
  int count_ = 0;
  double t_prev_ = 0.0, e_prev_ = 0.0, d_prev_ = 0.0, e0_ = 0.0, work_ = 0.0;
  DissipationBudget budget_{-std::numeric_limits<double>::infinity(), true, -std::numeric_limits<double>::infinity()};
};

/// Dissipation budget of a checkpoint history (trapezoidal in time between entries).
inline DissipationBudget dissipation_budget(const std::vector<BipolarHydroState>& history, const GasLaw& law1,
                                            const GasLaw& law2, double tol, double floor = 1e-12) {
  require(history.size() >= 2, ErrorCode::domain, "dissipation budget needs at least two states");
  DissipationAccumulator acc(law1, law2, tol, floor);
  for (const auto& s : history) acc.add(s);
  return acc.result();
}

// ---------------------------------------------------------------------------
// Weak formulation.

/// Space-time test function theta(t) * (psi(x), psi_vec(x)). The vector part must
/// have zero normal trace on the walls.
struct WeakTest {
  std::function<double(double)> theta;
  std::function<double(double)> dtheta;
  std::function<double(double, double)> psi;
  std::function<std::array<double, 2>(double, double)> grad_psi;
  std::function<std::array<double, 2>(double, double)> vec;
  /// grad_vec(x, y)[a][b] = d vec_a / d x_b.
  std::function<std::array<std::array<double, 2>, 2>(double, double)> grad_vec;
};

/// theta(t) = (1 + cos(pi t / T)) / 2, psi = cos(kx pi x/Lx) cos(ky pi y/Ly),
/// vec = (sin(kx pi x/Lx) cos(ky pi y/Ly), cos(kx pi x/Lx) sin(ky pi y/Ly)) scaled by `amp`.
inline WeakTest cosine_test(const Grid& g, double horizon, int kx, int ky, double amp = 1.0) {
  const double pi = std::acos(-1.0);
  const double ax = kx * pi / g.lengths[0];
  const double ay = g.dim == 2 ? ky * pi / g.lengths[1] : 0.0;
  const bool two_d = g.dim == 2;
  WeakTest w;
  w.theta = [=](double t) { return 0.5 * (1.0 + std::cos(pi * t / horizon)); };
  w.dtheta = [=](double t) { return -0.5 * pi / horizon * std::sin(pi * t / horizon); };
  w.psi = [=](double x, double y) { return amp * std::cos(ax * x) * std::cos(ay * y); };
  w.grad_psi = [=](double x, double y) {
    return std::array<double, 2>{-amp * ax * std::sin(ax * x) * std::cos(ay * y),
                                 -amp * ay * std::cos(ax * x) * std::sin(ay * y)};
  };
  w.vec = [=](double x, double y) {
    return std::array<double, 2>{amp * std::sin(ax * x) * std::cos(ay * y),
                                 two_d ? amp * std::cos(ax * x) * std::sin(ay * y) : 0.0};
  };
  w.grad_vec = [=](double x, double y) {
    std::array<std::array<double, 2>, 2> gv{};
    gv[0][0] = amp * ax * std::cos(ax * x) * std::cos(ay * y);
    gv[0][1] = -amp * ay * std::sin(ax * x) * std::sin(ay * y);
    if (two_d) {
      gv[1][0] = -amp * ax * std::sin(ax * x) * std::sin(ay * y);
      gv[1][1] = amp * ay * std::cos(ax * x) * std::cos(ay * y);
    }
    return gv;
  };
  return w;
}

inline WeakTest zero_test() {
  WeakTest w;
  w.theta = [](double) { return 0.0; };
  w.dtheta = [](double) { return 0.0; };
  w.psi = [](double, double) { return 0.0; };
  w.grad_psi = [](double, double) { return std::array<double, 2>{0.0, 0.0}; };
  w.vec = [](double, double) { return std::array<double, 2>{0.0, 0.0}; };
  w.grad_vec = [](double, double) { return std::array<std::array<double, 2>, 2>{}; };
  return w;
}

/// Residuals of the continuity and momentum identities for (rho, rho u) and (n, n v).
struct WeakResiduals {
  double continuity_rho = 0.0;
  double momentum_rho = 0.0;
  double continuity_n = 0.0;
  double momentum_n = 0.0;

  double max() const {
    return std::max({std::abs(continuity_rho), std::abs(momentum_rho), std::abs(continuity_n), std::abs(momentum_n)});
  }
};

/// Streaming quadrature of the four weak identities: trapezoidal in time over the
/// states fed in, midpoint in space for cell quantities and face quadrature for momenta.
class WeakResidualAccumulator {
 public:
  WeakResidualAccumulator(const Grid& grid, std::vector<WeakTest> bank, const GasLaw& law1, const GasLaw& law2,
                          double floor = 1e-12)
      : grid_(grid), bank_(std::move(bank)), law1_(law1), law2_(law2), floor_(floor) {
    sums_.assign(bank_.size(), {});
    prev_.assign(bank_.size(), {});
    for (const auto& w : bank_) check_trace(w);
    tabulate();
  }

  void add(const BipolarHydroState& s) {
    require(s.grid() == grid_, ErrorCode::domain, "state grid does not match the test bank grid");
    for (std::size_t b = 0; b < bank_.size(); ++b) {
      const auto terms = spatial_terms(b, s);
      const WeakTest& w = bank_[b];
      const double th = w.theta(s.t), dth = w.dtheta(s.t);
      std::array<double, 4> integrand{
          -dth * terms.psi_rho - th * terms.gradpsi_m_rho,
          -s.eps * dth * terms.vec_m_rho - s.eps * th * terms.conv_rho - th * terms.div_p_rho +
              th * terms.field_rho + th * terms.vec_m_rho,
          -dth * terms.psi_n - th * terms.gradpsi_m_n,
          -s.eps * dth * terms.vec_m_n - s.eps * th * terms.conv_n - th * terms.div_p_n - th * terms.field_n +
              th * terms.vec_m_n,
      };
      if (count_ == 0) {
        sums_[b] = {-th * terms.psi_rho, -s.eps * th * terms.vec_m_rho, -th * terms.psi_n, -s.eps * th * terms.vec_m_n};
      } else {
        for (int q = 0; q < 4; ++q) sums_[b][q] += 0.5 * (s.t - t_prev_) * (integrand[q] + prev_[b][q]);
      }
      prev_[b] = integrand;
    }
    t_prev_ = s.t;
    ++count_;
  }

  /// Max absolute residual over the bank, per identity.
  WeakResiduals result() const {
    WeakResiduals r;
    for (const auto& s : sums_) {
      r.continuity_rho = std::max(r.continuity_rho, std::abs(s[0]));
      r.momentum_rho = std::max(r.momentum_rho, std::abs(s[1]));
      r.continuity_n = std::max(r.continuity_n, std::abs(s[2]));
      r.momentum_n = std::max(r.momentum_n, std::abs(s[3]));
    }
    return r;
  }

 private:
  struct Terms {
    double psi_rho = 0, gradpsi_m_rho = 0, vec_m_rho = 0, conv_rho = 0, div_p_rho = 0, field_rho = 0;
    double psi_n = 0, gradpsi_m_n = 0, vec_m_n = 0, conv_n = 0, div_p_n = 0, field_n = 0;
  };
  struct Table {
    std::vector<double> psi, div_vec;                  // cells
    std::array<std::vector<double>, 2> grad_psi, vec;  // faces, normal component
    std::vector<std::array<std::array<double, 2>, 2>> grad_vec;  // cells
  };

  void check_trace(const WeakTest& w) const {
    const Grid& g = grid_;
    const int samples = 17;
    for (int k = 0; k <= samples; ++k) {
      const double sy = g.dim == 2 ? g.lengths[1] * k / samples : 0.0;
      const double sx = g.lengths[0] * k / samples;
      const double tol = 1e-12;
      if (std::abs(w.vec(0.0, sy)[0]) > tol || std::abs(w.vec(g.lengths[0], sy)[0]) > tol)
        fail(ErrorCode::domain, "vector test function has a nonzero normal trace on an x wall");
      if (g.dim == 2 && (std::abs(w.vec(sx, 0.0)[1]) > tol || std::abs(w.vec(sx, g.lengths[1])[1]) > tol))
        fail(ErrorCode::domain, "vector test function has a nonzero normal trace on a y wall");
    }
  }

  void tabulate() {
    const Grid& g = grid_;
    tables_.resize(bank_.size());
    for (std::size_t b = 0; b < bank_.size(); ++b) {
      const WeakTest& w = bank_[b];
      Table& T = tables_[b];
      T.psi.assign(g.cell_count(), 0.0);
      T.div_vec.assign(g.cell_count(), 0.0);
      T.grad_vec.assign(g.cell_count(), {});
      for (int j = 0; j < g.ny(); ++j)
        for (int i = 0; i < g.nx(); ++i) {
          const std::size_t c = g.cell(i, j);
          T.psi[c] = w.psi(g.xc(i), g.yc(j));
          T.grad_vec[c] = w.grad_vec(g.xc(i), g.yc(j));
          T.div_vec[c] = T.grad_vec[c][0][0] + (g.dim == 2 ? T.grad_vec[c][1][1] : 0.0);
        }
      for (int a = 0; a < 2; ++a) {
        T.grad_psi[a].assign(g.face_count(a), 0.0);
        T.vec[a].assign(g.face_count(a), 0.0);
      }
      for (int j = 0; j < g.ny(); ++j)
        for (int i = 0; i <= g.nx(); ++i) {
          const double x = i * g.dx[0], y = g.yc(j);
          T.grad_psi[0][g.face(0, i, j)] = w.grad_psi(x, y)[0];
          T.vec[0][g.face(0, i, j)] = w.vec(x, y)[0];
        }
      if (g.dim == 2)
        for (int j = 0; j <= g.ny(); ++j)
          for (int i = 0; i < g.nx(); ++i) {
            const double x = g.xc(i), y = j * g.dx[1];
            T.grad_psi[1][g.face(1, i, j)] = w.grad_psi(x, y)[1];
            T.vec[1][g.face(1, i, j)] = w.vec(x, y)[1];
          }
    }
  }

  // int grad(vec) : rho u (x) u. Diagonal entries use face values of m^2/rho_f averaged
  // to cells; off-diagonal entries use cell-averaged momenta.
  double convective_term(const Table& T, const ScalarField& rho, const VectorField& mom) const {
    const Grid& g = grid_;
    const VectorField rf = face_average(rho);
    auto flux = [&](int a, int i, int j) {
      const std::size_t f = g.face(a, i, j);
      const double r = rf.comp[a][f];
      return r > floor_ ? mom.comp[a][f] * mom.comp[a][f] / r : 0.0;
    };
    ScalarField mx, my;
    if (g.dim == 2) {
      mx = cell_average(mom, 0);
      my = cell_average(mom, 1);
    }
    double s = 0.0;
    for (int j = 0; j < g.ny(); ++j)
      for (int i = 0; i < g.nx(); ++i) {
        const std::size_t c = g.cell(i, j);
        const auto& gv = T.grad_vec[c];
        double v = gv[0][0] * 0.5 * (flux(0, i, j) + flux(0, i + 1, j));
        if (g.dim == 2) {
          v += gv[1][1] * 0.5 * (flux(1, i, j) + flux(1, i, j + 1));
          const double r = std::max(rho.values[c], floor_);
          v += (gv[0][1] + gv[1][0]) * mx.values[c] * my.values[c] / r;
        }
        s += v;
      }
    return s * g.cell_volume();
  }

  Terms spatial_terms(std::size_t b, const BipolarHydroState& s) const {
    const Grid& g = grid_;
    const Table& T = tables_[b];
    Terms out;
    const double dv = g.cell_volume();
    for (std::size_t c = 0; c < g.cell_count(); ++c) {
      out.psi_rho += T.psi[c] * s.rho.values[c] * dv;
      out.psi_n += T.psi[c] * s.n.values[c] * dv;
      out.div_p_rho += T.div_vec[c] * law1_.p(std::max(s.rho.values[c], 0.0)) * dv;
      out.div_p_n += T.div_vec[c] * law2_.p(std::max(s.n.values[c], 0.0)) * dv;
    }
    const VectorField rf = face_average(s.rho);
    const VectorField nf = face_average(s.n);
    out.gradpsi_m_rho = face_sum(g, [&](int a, int i, int j) {
      const std::size_t f = g.face(a, i, j);
      return T.grad_psi[a][f] * s.mom_rho.comp[a][f];
    });
    out.gradpsi_m_n = face_sum(g, [&](int a, int i, int j) {
      const std::size_t f = g.face(a, i, j);
      return T.grad_psi[a][f] * s.mom_n.comp[a][f];
    });
    out.vec_m_rho = face_sum(g, [&](int a, int i, int j) {
      const std::size_t f = g.face(a, i, j);
      return T.vec[a][f] * s.mom_rho.comp[a][f];
    });
    out.vec_m_n = face_sum(g, [&](int a, int i, int j) {
      const std::size_t f = g.face(a, i, j);
      return T.vec[a][f] * s.mom_n.comp[a][f];
    });
    out.field_rho = face_sum(g, [&](int a, int i, int j) {
      const std::size_t f = g.face(a, i, j);
      return T.vec[a][f] * rf.comp[a][f] * s.grad_phi.comp[a][f];
    });
    out.field_n = face_sum(g, [&](int a, int i, int j) {
      const std::size_t f = g.face(a, i, j);
      return T.vec[a][f] * nf.comp[a][f] * s.grad_phi.comp[a][f];
    });
    out.conv_rho = convective_term(T, s.rho, s.mom_rho);
    out.conv_n = convective_term(T, s.n, s.mom_n);
    return out;
  }

  Grid grid_;
  std::vector<WeakTest> bank_;
  std::vector<Table> tables_;
  GasLaw law1_, law2_;
  double floor_;
  int count_ = 0;
  double t_prev_ = 0.0;
  std::vector<std::array<double, 4>> sums_;
  std::vector<std::array<double, 4>> prev_;
};

/// Weak residuals of a stored history; the time quadrature runs over the given states.
inline WeakResiduals weak_residual(const std::vector<BipolarHydroState>& history, const GasLaw& law1,
                                   const GasLaw& law2, const std::vector<WeakTest>& test_bank) {
  require(!history.empty(), ErrorCode::domain, "weak residual needs a non-empty history");
  WeakResidualAccumulator acc(history.front().grid(), test_bank, law1, law2);
  for (const auto& s : history) acc.add(s);
  return acc.result();
}

// ---------------------------------------------------------------------------
// Diffusive scaling.

struct RescaledFields {
  double t = 0.0;
  VectorField u;
  VectorField v;
  double eps = 1.0;
  double tau = 1.0;
};

/// Hyperbolic -> diffusive variables: t = tau t_hyp, u = u_hyp / tau, eps = tau^2.
inline RescaledFields diffusive_rescale(double tau, double t_hyp, const VectorField& u_hyp, const VectorField& v_hyp) {
  require(std::isfinite(tau) && tau > 0.0, ErrorCode::domain, "rescaling factor must be positive");
  RescaledFields out;
  out.tau = tau;
  out.t = tau * t_hyp;
  out.u = scaled(u_hyp, 1.0 / tau);
  out.v = scaled(v_hyp, 1.0 / tau);
  out.eps = tau * tau;
  return out;
}

}  // namespace bipolar
