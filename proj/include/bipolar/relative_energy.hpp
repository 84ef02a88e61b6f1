#pragma once

// Relative energy between a hydrodynamic state and the lifted drift-diffusion state,
//
//   Psi = int eps/2 rho|u - ubar|^2 + eps/2 n|v - vbar|^2 + h1(rho|rhobar) + h2(n|nbar) + |grad(phi - phibar)|^2/2,
//
// the terms J1..J4 of its evolution inequality
//
//   Psi(t) - Psi(0) + int_0^t int rho|u - ubar|^2 + n|v - vbar|^2 <= J1 + J2 + J3 + J4,
//
// the explicit bounds on each term and the log-log fit of Psi(t) against eps.
// Kinetic parts live on faces, internal parts in cells.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "bipolar/drift_diffusion.hpp"
#include "bipolar/eos.hpp"
#include "bipolar/error.hpp"
#include "bipolar/euler_poisson.hpp"
#include "bipolar/grid.hpp"

namespace bipolar {

struct PsiBreakdown {
  double t = 0.0;
  double kin_rho = 0.0;
  double kin_n = 0.0;
  double int_rho = 0.0;
  double int_n = 0.0;
  double field = 0.0;
  double total = 0.0;
  /// Faces whose density sits at the floor; they carry no relative kinetic energy.
  int floor_faces = 0;
};

/// Sup-norms and bounds gathered over every sample of a run.
struct RunNorms {
  double grad_u_bar = 0.0;  ///< max over cells of the Frobenius norm of grad(ubar)
  double grad_v_bar = 0.0;
  double div_u_bar = 0.0;
  double div_v_bar = 0.0;
  double u_bar = 0.0;
  double v_bar = 0.0;
  double e_bar1 = 0.0;
  double e_bar2 = 0.0;
  double rho_bar_min = std::numeric_limits<double>::infinity();
  double rho_bar_max = 0.0;
  double n_bar_min = std::numeric_limits<double>::infinity();
  double n_bar_max = 0.0;
  double rho_max = 0.0;
  double n_max = 0.0;
  double mass = 0.0;  ///< max over time of the larger species mass of the hydro state
  int dim = 1;
};

struct JTerms {
  double t = 0.0;
  double j1 = 0.0;
  double j2 = 0.0;
  double j3 = 0.0;
  double j4 = 0.0;
  double dissipation = 0.0;
  double slack = 0.0;
  double psi0 = 0.0;
  double psi_t = 0.0;
  double psi_integral = 0.0;  ///< int_0^t Psi, same time quadrature as the J terms
  RunNorms norms;

  double sum() const { return j1 + j2 + j3 + j4; }
};

namespace detail {

inline void require_aligned(const BipolarHydroState& h, const EquilibriumState& e) {
  require(h.grid() == e.grid(), ErrorCode::domain, "hydro and equilibrium states live on different grids");
  require(std::abs(h.t - e.t) <= 1e-12 * std::max(1.0, std::abs(h.t)), ErrorCode::domain,
          "hydro and equilibrium states are at different times (" + std::to_string(h.t) + " vs " +
              std::to_string(e.t) + ")");
}

/// Cell gradient of a face-normal field: diagonal entries from the bounding faces,
/// off-diagonal ones from central differences of cell averages (one-sided at walls).
struct CellGradient {
  std::vector<std::array<std::array<double, 2>, 2>> g;  // g[c][a][b] = d F_a / d x_b
};

inline CellGradient cell_gradient(const VectorField& F) {
  const Grid& grid = F.grid;
  CellGradient out;
  out.g.assign(grid.cell_count(), {});
  const int nx = grid.nx(), ny = grid.ny();
  ScalarField ca[2];
  if (grid.dim == 2) {
    ca[0] = cell_average(F, 0);
    ca[1] = cell_average(F, 1);
  }
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      auto& gc = out.g[grid.cell(i, j)];
      gc[0][0] = (F.at(0, i + 1, j) - F.at(0, i, j)) / grid.dx[0];
      if (grid.dim == 2) {
        gc[1][1] = (F.at(1, i, j + 1) - F.at(1, i, j)) / grid.dx[1];
        const int jl = std::max(j - 1, 0), jh = std::min(j + 1, ny - 1);
        const int il = std::max(i - 1, 0), ih = std::min(i + 1, nx - 1);
        gc[0][1] = (ca[0](i, jh) - ca[0](i, jl)) / ((jh - jl) * grid.dx[1]);
        gc[1][0] = (ca[1](ih, j) - ca[1](il, j)) / ((ih - il) * grid.dx[0]);
      }
    }
  return out;
}

inline double frobenius(const std::array<std::array<double, 2>, 2>& m) {
  return std::sqrt(m[0][0] * m[0][0] + m[0][1] * m[0][1] + m[1][0] * m[1][0] + m[1][1] * m[1][1]);
}

/// Relative velocity w = u - ubar on faces; faces at the floor get 0 and are counted.
inline VectorField relative_velocity(const ScalarField& rho, const VectorField& mom, const VectorField& ubar,
                                     double floor, int& floor_faces) {
  const VectorField rf = face_average(rho);
  VectorField w(rho.grid);
  for (int a = 0; a < rho.grid.dim; ++a)
    for (std::size_t f = 0; f < w.comp[a].size(); ++f) {
      if (rf.comp[a][f] > floor) {
        w.comp[a][f] = mom.comp[a][f] / rf.comp[a][f] - ubar.comp[a][f];
      } else {
        w.comp[a][f] = 0.0;
        ++floor_faces;
      }
    }
  w.zero_boundary();
  return w;
}

}  // namespace detail

inline PsiBreakdown compute_psi(const BipolarHydroState& hydro, const EquilibriumState& eq, const GasLaw& law1,
                                const GasLaw& law2, double floor = 1e-12) {
  detail::require_aligned(hydro, eq);
  const Grid& g = hydro.grid();
  PsiBreakdown p;
  p.t = hydro.t;
  const VectorField w = detail::relative_velocity(hydro.rho, hydro.mom_rho, eq.u_bar, floor, p.floor_faces);
  const VectorField z = detail::relative_velocity(hydro.n, hydro.mom_n, eq.v_bar, floor, p.floor_faces);
  const VectorField rf = face_average(hydro.rho);
  const VectorField nf = face_average(hydro.n);
  p.kin_rho = 0.5 * hydro.eps * face_sum(g, [&](int a, int i, int j) {
    const std::size_t f = g.face(a, i, j);
    return rf.comp[a][f] * w.comp[a][f] * w.comp[a][f];
  });
  p.kin_n = 0.5 * hydro.eps * face_sum(g, [&](int a, int i, int j) {
    const std::size_t f = g.face(a, i, j);
    return nf.comp[a][f] * z.comp[a][f] * z.comp[a][f];
  });
  for (std::size_t c = 0; c < hydro.rho.size(); ++c) {
    p.int_rho += law1.relative_h(std::max(hydro.rho.values[c], 0.0), eq.rho_bar.values[c]);
    p.int_n += law2.relative_h(std::max(hydro.n.values[c], 0.0), eq.n_bar.values[c]);
  }
  p.int_rho *= g.cell_volume();
  p.int_n *= g.cell_volume();
  const VectorField dg = hydro.grad_phi - eq.grad_phi_bar;
  p.field = 0.5 * face_inner(dg, dg);
  p.total = p.kin_rho + p.kin_n + p.int_rho + p.int_n + p.field;
  return p;
}

/// Streaming evaluation of Psi, the dissipation and J1..J4 at every sample of a run,
/// integrated in time by the trapezoidal rule.
class JAccumulator {
 public:
  JAccumulator(const GasLaw& law1, const GasLaw& law2, double floor = 1e-12)
      : law1_(law1), law2_(law2), floor_(floor) {}

  void add(const BipolarHydroState& h, const EquilibriumState& e) {
    detail::require_aligned(h, e);
    const Grid& g = h.grid();
    const double eps = h.eps;
    const PsiBreakdown psi = compute_psi(h, e, law1_, law2_, floor_);
    int dummy = 0;
    const VectorField w = detail::relative_velocity(h.rho, h.mom_rho, e.u_bar, floor_, dummy);
    const VectorField z = detail::relative_velocity(h.n, h.mom_n, e.v_bar, floor_, dummy);
    const VectorField rf = face_average(h.rho), nf = face_average(h.n);
    const VectorField rbf = face_average(e.rho_bar), nbf = face_average(e.n_bar);
    const detail::CellGradient gu = detail::cell_gradient(e.u_bar);
    const detail::CellGradient gv = detail::cell_gradient(e.v_bar);
    const VectorField dgrad = h.grad_phi - e.grad_phi_bar;

    Sample s;
    s.t = h.t;
    s.psi = psi.total;
    s.diss = 2.0 * (psi.kin_rho + psi.kin_n) / eps;

    // J1 = -eps int grad(ubar) : rho w (x) w + grad(vbar) : n z (x) z
    s.j1 = -eps * (j1_density(g, gu, h.rho, rf, w) + j1_density(g, gv, h.n, nf, z));

    // J2 = -int div(ubar) p1(rho|rhobar) + div(vbar) p2(n|nbar)
    double j2 = 0.0;
    for (std::size_t c = 0; c < h.rho.size(); ++c) {
      const double du = gu.g[c][0][0] + (g.dim == 2 ? gu.g[c][1][1] : 0.0);
      const double dv = gv.g[c][0][0] + (g.dim == 2 ? gv.g[c][1][1] : 0.0);
      j2 += du * law1_.relative_p(std::max(h.rho.values[c], 0.0), e.rho_bar.values[c]) +
            dv * law2_.relative_p(std::max(h.n.values[c], 0.0), e.n_bar.values[c]);
      norms_.grad_u_bar = std::max(norms_.grad_u_bar, detail::frobenius(gu.g[c]));
      norms_.grad_v_bar = std::max(norms_.grad_v_bar, detail::frobenius(gv.g[c]));
      norms_.div_u_bar = std::max(norms_.div_u_bar, std::abs(du));
      norms_.div_v_bar = std::max(norms_.div_v_bar, std::abs(dv));
    }
    s.j2 = -j2 * g.cell_volume();

    // J3 = int ((rho - rhobar) ubar - (n - nbar) vbar) . grad(phi - phibar)
    s.j3 = face_sum(g, [&](int a, int i, int j) {
      const std::size_t f = g.face(a, i, j);
      return ((rf.comp[a][f] - rbf.comp[a][f]) * e.u_bar.comp[a][f] -
              (nf.comp[a][f] - nbf.comp[a][f]) * e.v_bar.comp[a][f]) *
             dgrad.comp[a][f];
    });

    // J4 = -eps int (rho/rhobar) ebar1 . w + (n/nbar) ebar2 . z
    s.j4 = -eps * face_sum(g, [&](int a, int i, int j) {
      const std::size_t f = g.face(a, i, j);
      return rf.comp[a][f] / rbf.comp[a][f] * e.e_bar1.comp[a][f] * w.comp[a][f] +
             nf.comp[a][f] / nbf.comp[a][f] * e.e_bar2.comp[a][f] * z.comp[a][f];
    });

    norms_.dim = g.dim;
    norms_.u_bar = std::max(norms_.u_bar, max_abs(e.u_bar));
    norms_.v_bar = std::max(norms_.v_bar, max_abs(e.v_bar));
    norms_.e_bar1 = std::max(norms_.e_bar1, max_abs(e.e_bar1));
    norms_.e_bar2 = std::max(norms_.e_bar2, max_abs(e.e_bar2));
    norms_.rho_bar_min = std::min(norms_.rho_bar_min, min_value(e.rho_bar));
    norms_.rho_bar_max = std::max(norms_.rho_bar_max, max_value(e.rho_bar));
    norms_.n_bar_min = std::min(norms_.n_bar_min, min_value(e.n_bar));
    norms_.n_bar_max = std::max(norms_.n_bar_max, max_value(e.n_bar));
    norms_.rho_max = std::max(norms_.rho_max, max_value(h.rho));
    norms_.n_max = std::max(norms_.n_max, max_value(h.n));
    norms_.mass = std::max({norms_.mass, integrate(h.rho), integrate(h.n)});

    if (count_ == 0) {
      first_ = s;
      out_.psi0 = s.psi;
    } else {
      const double dt = s.t - last_.t;
      require(dt >= 0.0, ErrorCode::domain, "samples must be fed in time order");
      out_.j1 += 0.5 * dt * (s.j1 + last_.j1);
      out_.j2 += 0.5 * dt * (s.j2 + last_.j2);
      out_.j3 += 0.5 * dt * (s.j3 + last_.j3);
      out_.j4 += 0.5 * dt * (s.j4 + last_.j4);
      out_.dissipation += 0.5 * dt * (s.diss + last_.diss);
      out_.psi_integral += 0.5 * dt * (s.psi + last_.psi);
    }
    last_ = s;
    last_psi_ = psi;
    ++count_;
  }

  int count() const { return count_; }
  const PsiBreakdown& last_psi() const { return last_psi_; }

  JTerms result() const {
    JTerms j = out_;
    j.t = last_.t;
    j.psi_t = last_.psi;
    j.norms = norms_;
    j.slack = j.psi_t - j.psi0 + j.dissipation - j.sum();
    return j;
  }

 private:
  struct Sample {
    double t = 0, psi = 0, diss = 0, j1 = 0, j2 = 0, j3 = 0, j4 = 0;
  };

  // int grad(F) : rho w (x) w with diagonal entries taken from face values.
  double j1_density(const Grid& g, const detail::CellGradient& G, const ScalarField& rho, const VectorField& rf,
                    const VectorField& w) const {
    ScalarField wx, wy;
    if (g.dim == 2) {
      wx = cell_average(w, 0);
      wy = cell_average(w, 1);
    }
    auto q = [&](int a, int i, int j) {
      const std::size_t f = g.face(a, i, j);
      return rf.comp[a][f] * w.comp[a][f] * w.comp[a][f];
    };
    double s = 0.0;
    for (int j = 0; j < g.ny(); ++j)
      for (int i = 0; i < g.nx(); ++i) {
        const std::size_t c = g.cell(i, j);
        double v = G.g[c][0][0] * 0.5 * (q(0, i, j) + q(0, i + 1, j));
        if (g.dim == 2) {
          v += G.g[c][1][1] * 0.5 * (q(1, i, j) + q(1, i, j + 1));
          v += (G.g[c][0][1] + G.g[c][1][0]) * std::max(rho.values[c], 0.0) * wx.values[c] * wy.values[c];
        }
        s += v;
      }
    return s * g.cell_volume();
  }

  GasLaw law1_, law2_;
  double floor_;
  int count_ = 0;
  Sample first_, last_;
  PsiBreakdown last_psi_;
  JTerms out_;
  RunNorms norms_;
};

/// J terms of stored, aligned histories integrated over [0, t]; t must be a sample time.
inline JTerms compute_j_terms(const std::vector<BipolarHydroState>& hydro_history,
                              const std::vector<EquilibriumState>& eq_history, const GasLaw& law1, const GasLaw& law2,
                              double t, double floor = 1e-12) {
  require(!hydro_history.empty() && hydro_history.size() == eq_history.size(), ErrorCode::domain,
          "histories must be non-empty and of equal length");
  JAccumulator acc(law1, law2, floor);
  bool reached = false;
  for (std::size_t k = 0; k < hydro_history.size(); ++k) {
    if (hydro_history[k].t > t * (1.0 + 1e-12) + 1e-14) break;
    acc.add(hydro_history[k], eq_history[k]);
    if (std::abs(hydro_history[k].t - t) <= 1e-12 * std::max(1.0, t)) {
      reached = true;
      break;
    }
  }
  require(reached, ErrorCode::domain, "requested time is not a sample time of the histories");
  return acc.result();
}

// ---------------------------------------------------------------------------
// Explicit bounds.

struct LemmaCheck {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  double constant = 0.0;
  bool certified = true;
  bool pass = true;
};

struct LemmaReport {
  std::array<LemmaCheck, 4> checks;
  double c3_rho = 0.0;  ///< lower-bound constant used for species 1 in the J3 bound
  double c3_n = 0.0;

  bool all_pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const LemmaCheck& c) { return c.pass; });
  }
};

/// Each J term against its explicit bound:
///   J1 <= 2 (|grad ubar| + |grad vbar|) int Psi
///   J2 <= (|div ubar| + |div vbar|)(khat1 + khat2) int Psi
///   J3 <= (|ubar| + |vbar|) max(d/(2 c1), d/(2 c2), 1) int Psi          (gamma1, gamma2 >= 2)
///   J4 <= dissipation / 2 + C eps^2 t,  C = d M (|ebar1|^2/delta1^2 + |ebar2|^2/delta2^2) / 2
/// with sup-norms over the run and c_i from the certified h(r|rbar) lower bounds.
inline LemmaReport lemma_bounds_report(const JTerms& j, const GasLaw& law1, const GasLaw& law2, double eps, double tol,
                                       bool certify_j3 = true, int grid_n = 400) {
  const RunNorms& nm = j.norms;
  const double dim = nm.dim;
  LemmaReport rep;

  auto& c1 = rep.checks[0];
  c1.name = "J1";
  c1.constant = 2.0 * (nm.grad_u_bar + nm.grad_v_bar);
  c1.lhs = j.j1;
  c1.rhs = c1.constant * j.psi_integral;

  auto& c2 = rep.checks[1];
  c2.name = "J2";
  c2.constant = (nm.div_u_bar + nm.div_v_bar) * (law1.khat + law2.khat);
  c2.lhs = j.j2;
  c2.rhs = c2.constant * j.psi_integral;

  auto& c3 = rep.checks[2];
  c3.name = "J3";
  c3.lhs = j.j3;
  const bool branch = law1.gamma >= 2.0 && law2.gamma >= 2.0;
  if (!branch && certify_j3)
    fail(ErrorCode::unsupported_branch, "the J3 bound is certified only for gamma1, gamma2 >= 2");
  if (branch) {
    auto lb = [&](const GasLaw& law, double lo, double hi, double rmax) {
      const double r_max = std::max(rmax * (1.0 + 1e-9), hi + 2.0);
      return lower_bound_constants(law, lo, hi, r_max, grid_n).combined();
    };
    rep.c3_rho = lb(law1, nm.rho_bar_min, nm.rho_bar_max, nm.rho_max);
    rep.c3_n = lb(law2, nm.n_bar_min, nm.n_bar_max, nm.n_max);
    c3.constant = (nm.u_bar + nm.v_bar) * std::max({dim / (2.0 * rep.c3_rho), dim / (2.0 * rep.c3_n), 1.0});
    c3.rhs = c3.constant * j.psi_integral;
  } else {
    c3.certified = false;
    c3.constant = std::numeric_limits<double>::quiet_NaN();
    c3.rhs = std::numeric_limits<double>::quiet_NaN();
  }

  auto& c4 = rep.checks[3];
  c4.name = "J4";
  c4.constant = 0.5 * dim * nm.mass *
                (nm.e_bar1 * nm.e_bar1 / (nm.rho_bar_min * nm.rho_bar_min) +
                 nm.e_bar2 * nm.e_bar2 / (nm.n_bar_min * nm.n_bar_min));
  c4.lhs = j.j4;
  c4.rhs = 0.5 * j.dissipation + c4.constant * eps * eps * j.t;

  for (auto& c : rep.checks) c.pass = !c.certified || c.lhs <= c.rhs + tol;
  return rep;
}

// ---------------------------------------------------------------------------
// Rate fit.

struct GronwallFit {
  double slope = 0.0;
  double intercept = 0.0;
  double c_estimate = 0.0;
  bool floor_limited = false;
  bool not_applicable = false;
  std::vector<double> pair_slopes;  ///< consecutive slopes, largest eps first
};

/// Smallest C >= 0 with psi_t <= exp(C t) (psi0 + C eps^2 t).
inline double gronwall_constant(double psi_t, double psi0, double eps, double t) {
  if (psi_t <= psi0) return 0.0;
  auto rhs = [&](double c) { return std::exp(c * t) * (psi0 + c * eps * eps * t); };
  double lo = 0.0, hi = 1.0;
  while (rhs(hi) < psi_t && hi < 1e300) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (rhs(mid) >= psi_t ? hi : lo) = mid;
  }
  return hi;
}

/// Least-squares slope of log Psi(t) against log eps and the Gronwall constant.
/// Data count as well prepared when every Psi(0) <= 1e-12 * scale.
inline GronwallFit gronwall_fit(const std::map<double, double>& psi_at_t, const std::map<double, double>& psi0,
                                double t, double scale = 1.0) {
  require(psi_at_t.size() >= 3, ErrorCode::domain, "rate fit needs at least three eps values");
  GronwallFit fit;
  std::vector<double> x, y;
  for (auto it = psi_at_t.rbegin(); it != psi_at_t.rend(); ++it) {
    require(it->first > 0.0 && it->second > 0.0, ErrorCode::domain, "rate fit needs positive eps and Psi");
    x.push_back(std::log(it->first));
    y.push_back(std::log(it->second));
    const auto p0 = psi0.find(it->first);
    const double start = p0 == psi0.end() ? 0.0 : p0->second;
    if (start > 1e-12 * scale) fit.not_applicable = true;
    fit.c_estimate = std::max(fit.c_estimate, gronwall_constant(it->second, start, it->first, t));
  }
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sx += x[k];
    sy += y[k];
    sxx += x[k] * x[k];
    sxy += x[k] * y[k];
  }
  const double den = n * sxx - sx * sx;
  require(den > 0.0, ErrorCode::domain, "rate fit needs distinct eps values");
  fit.slope = (n * sxy - sx * sy) / den;
  fit.intercept = (sy - fit.slope * sx) / n;
  for (std::size_t k = 0; k + 1 < x.size(); ++k) fit.pair_slopes.push_back((y[k + 1] - y[k]) / (x[k + 1] - x[k]));
  fit.floor_limited = fit.pair_slopes.back() < 0.75 * fit.pair_slopes.front();
  return fit;
}

}  // namespace bipolar
