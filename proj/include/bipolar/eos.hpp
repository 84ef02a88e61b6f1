#pragma once

// Power-law pressure / internal-energy pairs p(r) = k r^g, h(r) = k r^g / (g - 1),
// their Bregman ("relative") quantities, and grid-certified lower bounds for
// h(r | rbar) on a box of reference densities.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "bipolar/error.hpp"

namespace bipolar {

struct GasLaw {
  double k = 1.0;
  double gamma = 2.0;
  double khat = 1.0;

  /// Validated construction. `khat` defaults to the smallest admissible value gamma - 1.
  static GasLaw power_law(double k, double gamma, double khat = -1.0) {
    GasLaw law{k, gamma, khat < 0.0 ? gamma - 1.0 : khat};
    law.validate();
    return law;
  }

  void validate() const {
    require(std::isfinite(k) && k > 0.0, ErrorCode::config, "gas law needs k > 0");
    require(std::isfinite(gamma) && gamma > 1.0, ErrorCode::config, "gas law needs gamma > 1");
    require(std::isfinite(khat) && khat > 0.0, ErrorCode::config, "gas law needs khat > 0");
    // |p''(r)| r <= khat p'(r) reduces to gamma - 1 <= khat for the power law.
    require(khat >= gamma - 1.0 - 1e-14, ErrorCode::config,
            "khat = " + std::to_string(khat) + " violates the curvature bound (needs >= gamma - 1)");
  }

  // Unchecked kernels for the solvers' inner loops; r >= 0.
  double p(double r) const { return k * std::pow(r, gamma); }
  double dp(double r) const { return k * gamma * std::pow(r, gamma - 1.0); }
  double d2p(double r) const { return k * gamma * (gamma - 1.0) * std::pow(r, gamma - 2.0); }
  double h(double r) const { return k * std::pow(r, gamma) / (gamma - 1.0); }
  double dh(double r) const { return k * gamma * std::pow(r, gamma - 1.0) / (gamma - 1.0); }
  double d2h(double r) const { return k * gamma * std::pow(r, gamma - 2.0); }

  // Near the diagonal the three-term difference cancels; there the integral form
  // (r - rbar)^2 * int_0^1 (1 - s) f''(rbar + s (r - rbar)) ds is used instead.
  double relative_h(double r, double rbar) const {
    const double d = r - rbar;
    if (std::abs(d) <= 0.1 * rbar) return d * d * d2h(rbar) * curvature_mean(d / rbar);
    return h(r) - h(rbar) - dh(rbar) * d;
  }
  double relative_p(double r, double rbar) const {
    const double d = r - rbar;
    if (std::abs(d) <= 0.1 * rbar) return d * d * d2p(rbar) * curvature_mean(d / rbar);
    return p(r) - p(rbar) - dp(rbar) * d;
  }

  /// int_0^1 (1 - s) (1 + s x)^(gamma - 2) ds by 8-point Gauss-Legendre; exact to rounding for |x| <= 0.1.
  double curvature_mean(double x) const {
    static constexpr double node[4] = {0.1834346424956498, 0.5255324099163290, 0.7966664774136267,
                                       0.9602898564975363};
    static constexpr double weight[4] = {0.3626837833783620, 0.3137066458778873, 0.2223810344533745,
                                         0.1012285362903763};
    double acc = 0.0;
    for (int q = 0; q < 4; ++q)
      for (double sign : {-1.0, 1.0}) {
        const double s = 0.5 * (1.0 + sign * node[q]);
        acc += weight[q] * (1.0 - s) * std::pow(1.0 + s * x, gamma - 2.0);
      }
    return 0.5 * acc;
  }

  bool operator==(const GasLaw&) const = default;
};

struct InternalEnergy {
  double h = 0.0;
  double h1 = 0.0;
  double h2 = 0.0;
};

inline double pressure(const GasLaw& law, double r) {
  require(r >= 0.0, ErrorCode::domain, "pressure of negative density");
  return law.p(r);
}

/// h and its first two derivatives. Derivatives are only defined for r > 0.
inline InternalEnergy internal_energy(const GasLaw& law, double r) {
  require(r > 0.0, ErrorCode::domain, "internal-energy derivatives need r > 0");
  return {law.h(r), law.dh(r), law.d2h(r)};
}

/// h alone; continuous down to r = 0.
inline double internal_energy_value(const GasLaw& law, double r) {
  require(r >= 0.0, ErrorCode::domain, "internal energy of negative density");
  return law.h(r);
}

inline double relative_internal(const GasLaw& law, double r, double rbar) {
  require(rbar > 0.0, ErrorCode::domain, "relative internal energy needs rbar > 0");
  require(r >= 0.0, ErrorCode::domain, "relative internal energy of negative density");
  return law.relative_h(r, rbar);
}

inline double relative_pressure(const GasLaw& law, double r, double rbar) {
  require(rbar > 0.0, ErrorCode::domain, "relative pressure needs rbar > 0");
  require(r >= 0.0, ErrorCode::domain, "relative pressure of negative density");
  return law.relative_p(r, rbar);
}

struct LowerBoundConstants {
  double c_quad = 0.0;
  double c_power = 0.0;
  double r_switch = 0.0;
  double delta = 0.0;
  double m_cap = 0.0;
  double r_max = 0.0;

  /// min(c_quad, c_power): valid on the whole sampled range when gamma >= 2.
  double combined() const { return std::min(c_quad, c_power); }
};

/// Brute-force minimisation of h(r|rbar)/|r-rbar|^2 on [0, M+1] x [delta, M] and of
/// h(r|rbar)/|r-rbar|^gamma on (M+1, r_max] x [delta, M], both on grid_n x grid_n nodes.
/// Near the diagonal the quadratic ratio is replaced by its limit h''(rbar)/2.
inline LowerBoundConstants lower_bound_constants(const GasLaw& law, double delta, double m_cap,
                                                 double r_max, int grid_n) {
  require(delta > 0.0 && delta <= m_cap, ErrorCode::domain, "need 0 < delta <= m_cap");
  require(m_cap < r_max, ErrorCode::domain, "need m_cap < r_max");
  require(grid_n >= 100, ErrorCode::domain, "need grid_n >= 100");
  const double r_switch = m_cap + 1.0;
  require(r_max > r_switch, ErrorCode::domain,
          "empty search region: r_max must exceed m_cap + 1 for the power-law branch");

  constexpr double diagonal_radius = 1e-8;
  const int n = grid_n;
  auto node = [n](double a, double b, int i) { return n == 1 ? a : a + (b - a) * i / (n - 1); };

  LowerBoundConstants out;
  out.r_switch = r_switch;
  out.delta = delta;
  out.m_cap = m_cap;
  out.r_max = r_max;
  out.c_quad = std::numeric_limits<double>::infinity();
  out.c_power = std::numeric_limits<double>::infinity();

  for (int jb = 0; jb < n; ++jb) {
    const double rbar = node(delta, m_cap, jb);
    for (int i = 0; i < n; ++i) {
      const double r = node(0.0, r_switch, i);
      const double diff = r - rbar;
      const double ratio = std::abs(diff) < diagonal_radius ? 0.5 * law.d2h(rbar)
                                                             : law.relative_h(r, rbar) / (diff * diff);
      out.c_quad = std::min(out.c_quad, ratio);
    }
    // Open at r_switch: the first node sits one spacing above it.
    for (int i = 1; i <= n; ++i) {
      const double r = r_switch + (r_max - r_switch) * i / n;
      const double ratio = law.relative_h(r, rbar) / std::pow(std::abs(r - rbar), law.gamma);
      out.c_power = std::min(out.c_power, ratio);
    }
  }
  require(out.c_quad > 0.0 && out.c_power > 0.0, ErrorCode::domain,
          "lower-bound constants are not strictly positive on the sampled grid");
  return out;
}

}  // namespace bipolar
