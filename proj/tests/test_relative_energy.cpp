#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "bipolar/relative_energy.hpp"

using namespace bipolar;

namespace {

const double kPi = std::acos(-1.0);
const GasLaw kQuad = GasLaw::power_law(1.0, 2.0);

EquilibriumState smooth_equilibrium(int n) {
  const Grid g = make_grid(1, {1.0}, {n});
  const ScalarField r = sample(g, [](double x, double) { return 0.5 + 0.1 * std::cos(kPi * x); });
  ScalarField m = sample(g, [](double x, double) { return 0.5 - 0.05 * std::cos(kPi * x); });
  const double shift = (integrate(r) - integrate(m)) / g.volume();
  for (double& v : m.values) v += shift;
  return make_equilibrium(r, m, kQuad, kQuad, 0.0);
}

BipolarHydroState lifted(const EquilibriumState& e, double eps) {
  BipolarHydroState h;
  h.t = e.t;
  h.eps = eps;
  h.rho = e.rho_bar;
  h.n = e.n_bar;
  h.mom_rho = lifted_momentum(e.rho_bar, e.u_bar);
  h.mom_n = lifted_momentum(e.n_bar, e.v_bar);
  h.phi = e.phi_bar;
  h.grad_phi = e.grad_phi_bar;
  return h;
}

struct Histories {
  std::vector<BipolarHydroState> hydro;
  std::vector<EquilibriumState> eq;
};

// Lockstep run from well-prepared data, one sample per hydro step.
Histories lockstep(int n, double eps, double t_final) {
  Histories out;
  EquilibriumState e = smooth_equilibrium(n);
  BipolarHydroState h = lifted(e, eps);
  out.hydro.push_back(h);
  out.eq.push_back(e);
  const double dd_max = dd_stable_dt(e, kQuad, kQuad);
  const long steps = static_cast<long>(std::ceil(t_final / stable_dt(h, kQuad, kQuad, 0.25)));
  for (long k = 1; k <= steps; ++k) {
    const double t = t_final * k / steps;
    h = ep_step(h, kQuad, kQuad, t - h.t);
    h.t = t;
    e = advance_to(e, kQuad, kQuad, t, dd_max);
    out.hydro.push_back(h);
    out.eq.push_back(e);
  }
  return out;
}

double face_rho(const ScalarField& r, int i) {
  const int n = r.grid.nx();
  return i == 0 ? r(0) : (i == n ? r(n - 1) : 0.5 * (r(i - 1) + r(i)));
}

// 1D re-implementation of the J integrands with plain loops.
std::array<double, 5> naive_integrands(const BipolarHydroState& h, const EquilibriumState& e) {
  const Grid& g = h.grid();
  const int n = g.nx();
  const double dx = g.dx[0];
  double j1 = 0, j2 = 0, j3 = 0, j4 = 0, diss = 0;
  std::vector<double> w(n + 1, 0.0), z(n + 1, 0.0);
  for (int i = 1; i < n; ++i) {
    w[i] = h.mom_rho.at(0, i) / face_rho(h.rho, i) - e.u_bar.at(0, i);
    z[i] = h.mom_n.at(0, i) / face_rho(h.n, i) - e.v_bar.at(0, i);
  }
  for (int i = 0; i < n; ++i) {
    const double du = (e.u_bar.at(0, i + 1) - e.u_bar.at(0, i)) / dx;
    const double dv = (e.v_bar.at(0, i + 1) - e.v_bar.at(0, i)) / dx;
    const double qr = 0.5 * (face_rho(h.rho, i) * w[i] * w[i] + face_rho(h.rho, i + 1) * w[i + 1] * w[i + 1]);
    const double qn = 0.5 * (face_rho(h.n, i) * z[i] * z[i] + face_rho(h.n, i + 1) * z[i + 1] * z[i + 1]);
    j1 += -h.eps * (du * qr + dv * qn) * dx;
    const double pr = h.rho(i) * h.rho(i) - e.rho_bar(i) * e.rho_bar(i) - 2.0 * e.rho_bar(i) * (h.rho(i) - e.rho_bar(i));
    const double pn = h.n(i) * h.n(i) - e.n_bar(i) * e.n_bar(i) - 2.0 * e.n_bar(i) * (h.n(i) - e.n_bar(i));
    j2 += -(du * pr + dv * pn) * dx;
  }
  for (int i = 1; i < n; ++i) {
    const double rf = face_rho(h.rho, i), nf = face_rho(h.n, i);
    const double rbf = face_rho(e.rho_bar, i), nbf = face_rho(e.n_bar, i);
    const double dg = h.grad_phi.at(0, i) - e.grad_phi_bar.at(0, i);
    j3 += ((rf - rbf) * e.u_bar.at(0, i) - (nf - nbf) * e.v_bar.at(0, i)) * dg * dx;
    j4 += -h.eps * (rf / rbf * e.e_bar1.at(0, i) * w[i] + nf / nbf * e.e_bar2.at(0, i) * z[i]) * dx;
    diss += (rf * w[i] * w[i] + nf * z[i] * z[i]) * dx;
  }
  return {j1, j2, j3, j4, diss};
}

}  // namespace

TEST(RelativeEnergy, DiagonalGivesZeroPsi) {
  const EquilibriumState e = smooth_equilibrium(64);
  const PsiBreakdown p = compute_psi(lifted(e, 0.1), e, kQuad, kQuad);
  // Only the rounding of m / rho_f - ubar survives.
  EXPECT_LE(p.total, 1e-30);
  EXPECT_EQ(p.int_rho, 0.0);
  EXPECT_EQ(p.int_n, 0.0);
  EXPECT_EQ(p.field, 0.0);
  EXPECT_EQ(p.floor_faces, 0);
}

TEST(RelativeEnergy, ConstantVelocityOffset) {
  const EquilibriumState e = smooth_equilibrium(50);
  BipolarHydroState h = lifted(e, 0.2);
  const double c = 0.3;
  const VectorField rf = face_average(e.rho_bar);
  for (int i = 1; i < 50; ++i) h.mom_rho.at(0, i) = rf.at(0, i) * (e.u_bar.at(0, i) + c);
  const PsiBreakdown p = compute_psi(h, e, kQuad, kQuad);
  // Interior faces carry the offset: sum_i dx rho_f = M - dx (rho_0 + rho_{N-1}) / 2.
  const double dx = e.grid().dx[0];
  const double mass_inside = integrate(e.rho_bar) - 0.5 * dx * (e.rho_bar(0) + e.rho_bar(49));
  EXPECT_NEAR(p.kin_rho, 0.5 * 0.2 * c * c * mass_inside, 1e-14);
  EXPECT_LE(p.kin_n, 1e-30);
  EXPECT_EQ(p.int_rho + p.int_n + p.field, 0.0);
}

TEST(RelativeEnergy, PsiMatchesNaiveLoops) {
  const EquilibriumState e = smooth_equilibrium(40);
  BipolarHydroState h = lifted(e, 0.05);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-0.02, 0.02);
  std::vector<double> bump(40);
  for (double& v : bump) v = u(rng);
  const double mean = std::accumulate(bump.begin(), bump.end(), 0.0) / 40.0;
  for (int i = 0; i < 40; ++i) h.rho(i) += bump[i] - mean;
  for (int i = 1; i < 40; ++i) h.mom_n.at(0, i) += u(rng);
  update_potential(h);
  const Grid& g = h.grid();
  const double dx = g.dx[0];
  double kin = 0.0, internal = 0.0, field = 0.0;
  for (int i = 1; i < 40; ++i) {
    const double w = h.mom_rho.at(0, i) / face_rho(h.rho, i) - e.u_bar.at(0, i);
    const double z = h.mom_n.at(0, i) / face_rho(h.n, i) - e.v_bar.at(0, i);
    kin += 0.5 * h.eps * (face_rho(h.rho, i) * w * w + face_rho(h.n, i) * z * z) * dx;
    const double d = h.grad_phi.at(0, i) - e.grad_phi_bar.at(0, i);
    field += 0.5 * d * d * dx;
  }
  for (int i = 0; i < 40; ++i)
    internal += ((h.rho(i) - e.rho_bar(i)) * (h.rho(i) - e.rho_bar(i)) + (h.n(i) - e.n_bar(i)) * (h.n(i) - e.n_bar(i))) * dx;
  const PsiBreakdown p = compute_psi(h, e, kQuad, kQuad);
  EXPECT_NEAR(p.kin_rho + p.kin_n, kin, 1e-12);
  EXPECT_NEAR(p.int_rho + p.int_n, internal, 1e-12);
  EXPECT_NEAR(p.field, field, 1e-12);
  EXPECT_NEAR(p.total, p.kin_rho + p.kin_n + p.int_rho + p.int_n + p.field, 1e-12);
  EXPECT_GE(p.kin_rho, 0.0);
  EXPECT_GE(p.int_n, 0.0);
}

TEST(RelativeEnergy, MisalignedStatesRejected) {
  const EquilibriumState e = smooth_equilibrium(20);
  BipolarHydroState h = lifted(e, 0.1);
  h.t = 0.5;
  try {
    compute_psi(h, e, kQuad, kQuad);
    FAIL() << "expected a domain error";
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::domain);
  }
  EXPECT_THROW(compute_psi(lifted(smooth_equilibrium(30), 0.1), e, kQuad, kQuad), Error);
}

TEST(RelativeEnergy, JTermsVanishOnDiagonal) {
  Histories d;
  const Histories run = lockstep(40, 0.1, 0.01);
  for (const auto& e : run.eq) {
    d.eq.push_back(e);
    d.hydro.push_back(lifted(e, 0.1));
  }
  const JTerms j = compute_j_terms(d.hydro, d.eq, kQuad, kQuad, 0.01);
  EXPECT_LE(std::abs(j.j1), 1e-25);
  EXPECT_LE(std::abs(j.j2), 1e-25);
  EXPECT_EQ(j.j3, 0.0);
  EXPECT_LE(std::abs(j.j4), 1e-14);
  EXPECT_LE(std::abs(j.slack), 1e-14);
  const LemmaReport rep = lemma_bounds_report(j, kQuad, kQuad, 0.1, 1e-12);
  EXPECT_TRUE(rep.all_pass());
}

TEST(RelativeEnergy, JTermsWithRestingEquilibriumVelocities) {
  // u_bar = v_bar = 0: J1 and J2 have no gradients to act on.
  const Histories run = lockstep(40, 0.1, 0.01);
  std::vector<EquilibriumState> eq = run.eq;
  for (auto& e : eq) {
    e.u_bar = VectorField(e.grid());
    e.v_bar = VectorField(e.grid());
  }
  const JTerms j = compute_j_terms(run.hydro, eq, kQuad, kQuad, 0.01);
  EXPECT_EQ(j.j1, 0.0);
  EXPECT_EQ(j.j2, 0.0);
  EXPECT_EQ(j.j3, 0.0);
}

TEST(RelativeEnergy, JTermsMatchNaiveLoops) {
  const Histories run = lockstep(50, 0.05, 0.02);
  const JTerms j = compute_j_terms(run.hydro, run.eq, kQuad, kQuad, 0.02);
  std::array<double, 5> acc{};
  std::array<double, 5> prev = naive_integrands(run.hydro[0], run.eq[0]);
  for (std::size_t k = 1; k < run.hydro.size(); ++k) {
    const std::array<double, 5> cur = naive_integrands(run.hydro[k], run.eq[k]);
    const double dt = run.hydro[k].t - run.hydro[k - 1].t;
    for (int q = 0; q < 5; ++q) acc[q] += 0.5 * dt * (cur[q] + prev[q]);
    prev = cur;
  }
  EXPECT_NEAR(j.j1, acc[0], 1e-12);
  EXPECT_NEAR(j.j2, acc[1], 1e-12);
  EXPECT_NEAR(j.j3, acc[2], 1e-12);
  EXPECT_NEAR(j.j4, acc[3], 1e-12);
  EXPECT_NEAR(j.dissipation, acc[4], 1e-12);
  const double psi0 = compute_psi(run.hydro.front(), run.eq.front(), kQuad, kQuad).total;
  const double psit = compute_psi(run.hydro.back(), run.eq.back(), kQuad, kQuad).total;
  EXPECT_NEAR(j.slack, psit - psi0 + acc[4] - (acc[0] + acc[1] + acc[2] + acc[3]), 1e-12);
}

TEST(RelativeEnergy, ComputeJTermsNeedsSampleTime) {
  const Histories run = lockstep(20, 0.1, 0.01);
  EXPECT_THROW(compute_j_terms(run.hydro, run.eq, kQuad, kQuad, 0.0123456), Error);
  std::vector<EquilibriumState> short_eq(run.eq.begin(), run.eq.begin() + 1);
  EXPECT_THROW(compute_j_terms(run.hydro, short_eq, kQuad, kQuad, 0.01), Error);
}

TEST(RelativeEnergy, LemmaBoundsHoldOnSmoothRun) {
  const Histories run = lockstep(100, 0.01, 0.05);
  const JTerms j = compute_j_terms(run.hydro, run.eq, kQuad, kQuad, 0.05);
  const LemmaReport rep = lemma_bounds_report(j, kQuad, kQuad, 0.01, 1e-12);
  for (const auto& c : rep.checks) {
    EXPECT_TRUE(c.certified) << c.name;
    EXPECT_TRUE(c.pass) << c.name << " lhs " << c.lhs << " rhs " << c.rhs;
  }
  EXPECT_LE(j.slack, 0.0);
  // gamma = 2: the quadratic law gives unit lower-bound constants.
  EXPECT_NEAR(rep.c3_rho, 1.0, 1e-6);
}

TEST(RelativeEnergy, ScalingEquilibriumVelocityScalesJ1Constant) {
  const Histories run = lockstep(60, 0.02, 0.02);
  std::vector<EquilibriumState> eq10 = run.eq;
  for (auto& e : eq10) {
    e.u_bar = scaled(e.u_bar, 10.0);
    e.v_bar = scaled(e.v_bar, 10.0);
  }
  const JTerms a = compute_j_terms(run.hydro, run.eq, kQuad, kQuad, 0.02);
  const JTerms b = compute_j_terms(run.hydro, eq10, kQuad, kQuad, 0.02);
  const LemmaReport ra = lemma_bounds_report(a, kQuad, kQuad, 0.02, 1e-12);
  const LemmaReport rb = lemma_bounds_report(b, kQuad, kQuad, 0.02, 1e-12);
  EXPECT_NEAR(rb.checks[0].constant, 10.0 * ra.checks[0].constant, 1e-10 * rb.checks[0].constant);
  EXPECT_TRUE(rb.checks[0].pass);
}

TEST(RelativeEnergy, J3CertificationNeedsGammaAtLeastTwo) {
  const Histories run = lockstep(20, 0.1, 0.005);
  const GasLaw soft = GasLaw::power_law(1.0, 1.5);
  const JTerms j = compute_j_terms(run.hydro, run.eq, kQuad, kQuad, 0.005);
  try {
    lemma_bounds_report(j, soft, kQuad, 0.1, 1e-12);
    FAIL() << "expected an unsupported-branch error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::unsupported_branch);
  }
  const LemmaReport rep = lemma_bounds_report(j, soft, kQuad, 0.1, 1e-12, false);
  EXPECT_FALSE(rep.checks[2].certified);
  EXPECT_TRUE(std::isnan(rep.checks[2].rhs));
  EXPECT_TRUE(rep.checks[2].pass);
}

TEST(RelativeEnergy, GronwallFitExactPowerLaw) {
  std::map<double, double> psi, psi0;
  for (double eps : {0.1, 0.03, 0.01, 0.003, 0.001}) {
    psi[eps] = eps * eps;
    psi0[eps] = 0.0;
  }
  const GronwallFit fit = gronwall_fit(psi, psi0, 0.1);
  EXPECT_NEAR(fit.slope, 2.0, 1e-12);
  EXPECT_FALSE(fit.floor_limited);
  EXPECT_FALSE(fit.not_applicable);
  // Psi = eps^2 <= exp(C t) C eps^2 t needs C t exp(C t) >= 1 at t = 0.1.
  const double c = fit.c_estimate;
  EXPECT_NEAR(c * 0.1 * std::exp(c * 0.1), 1.0, 1e-9);
  for (const auto& [eps, v] : psi) EXPECT_LE(v, std::exp(c * 0.1) * c * eps * eps * 0.1 * (1.0 + 1e-12));
}

TEST(RelativeEnergy, GronwallFitFloorLimited) {
  std::map<double, double> psi, psi0;
  for (double eps : {0.1, 0.03, 0.01, 0.003, 0.001}) {
    psi[eps] = 2.0 * eps * eps + 1e-5;
    psi0[eps] = 0.0;
  }
  const GronwallFit fit = gronwall_fit(psi, psi0, 0.1);
  EXPECT_LT(fit.slope, 2.0);
  EXPECT_TRUE(fit.floor_limited);
}

TEST(RelativeEnergy, GronwallFitIllPreparedPlateau) {
  std::map<double, double> psi, psi0;
  const double c = 3.0, t = 0.1;
  for (double eps : {0.1, 0.01, 0.001}) {
    psi0[eps] = 1e-3;
    psi[eps] = std::exp(c * t) * (1e-3 + c * eps * eps * t);
  }
  const GronwallFit fit = gronwall_fit(psi, psi0, t);
  EXPECT_TRUE(fit.not_applicable);
  EXPECT_LT(fit.slope, 0.5);
  EXPECT_NEAR(fit.c_estimate, c, 1e-9);
}

TEST(RelativeEnergy, GronwallFitNeedsThreePoints) {
  try {
    gronwall_fit({{0.1, 0.01}, {0.01, 1e-4}}, {}, 0.1);
    FAIL() << "expected a domain error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::domain);
  }
}
