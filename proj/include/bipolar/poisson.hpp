#pragma once

// Neumann problem -Lap_h phi = f on the box with zero-flux walls. The discrete
// operator is the 3-point (1D) / 5-point (2D) Laplacian obtained as -div(grad(.)) with
// zero wall fluxes; it is symmetric positive semidefinite with the constants as its
// kernel, so solutions are pinned to zero mean.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "bipolar/error.hpp"
#include "bipolar/grid.hpp"

namespace bipolar {

enum class PoissonMethod {
  cg,         ///< matrix-free conjugate gradient with mean projection (1D and 2D)
  direct_1d,  ///< exact flux integration, 1D only
};

struct PoissonOptions {
  double tol = 1e-10;
  int max_iterations = 0;  ///< 0 selects 10 * cell count
  PoissonMethod method = PoissonMethod::cg;
  /// Compatibility threshold is 1e-10 * max(||f||_1, compat_scale).
  double compat_scale = 0.0;
  /// Warm start for CG; ignored when empty.
  const ScalarField* initial_guess = nullptr;
};

struct PoissonSolution {
  ScalarField phi;
  VectorField grad_phi;
  double residual_norm = 0.0;
  int iterations = 0;

  /// Same solution shifted by a constant. The gradient is carried over unchanged.
  PoissonSolution repinned(double shift) const {
    PoissonSolution out = *this;
    for (double& v : out.phi.values) v += shift;
    return out;
  }

  /// Shift realising a zero wall average of phi (wall value taken from the adjacent cell).
  double boundary_mean() const {
    const Grid& g = phi.grid;
    double s = 0.0, area = 0.0;
    const double ay = g.dim == 2 ? g.dx[1] : 1.0;
    for (int j = 0; j < g.ny(); ++j) {
      s += ay * (phi(0, j) + phi(g.nx() - 1, j));
      area += 2.0 * ay;
    }
    if (g.dim == 2)
      for (int i = 0; i < g.nx(); ++i) {
        s += g.dx[0] * (phi(i, 0) + phi(i, g.ny() - 1));
        area += 2.0 * g.dx[0];
      }
    return s / area;
  }
};

namespace detail {

/// y = -Lap_h x with zero wall fluxes.
inline void apply_neg_laplacian(const Grid& g, const std::vector<double>& x, std::vector<double>& y) {
  const int nx = g.nx(), ny = g.ny();
  const double ix2 = 1.0 / (g.dx[0] * g.dx[0]);
  const double iy2 = g.dim == 2 ? 1.0 / (g.dx[1] * g.dx[1]) : 0.0;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const std::size_t c = g.cell(i, j);
      const double xc = x[c];
      double acc = 0.0;
      if (i > 0) acc += (xc - x[c - 1]) * ix2;
      if (i < nx - 1) acc += (xc - x[c + 1]) * ix2;
      if (g.dim == 2) {
        if (j > 0) acc += (xc - x[c - nx]) * iy2;
        if (j < ny - 1) acc += (xc - x[c + nx]) * iy2;
      }
      y[c] = acc;
    }
  }
}

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double a : v) s += a;
  return s / static_cast<double>(v.size());
}

inline void remove_mean(std::vector<double>& v) {
  const double m = mean(v);
  for (double& a : v) a -= m;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

inline double max_norm(const std::vector<double>& a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

inline double true_residual(const Grid& g, const std::vector<double>& b, const std::vector<double>& x,
                            std::vector<double>& work) {
  apply_neg_laplacian(g, x, work);
  for (std::size_t k = 0; k < b.size(); ++k) work[k] = b[k] - work[k];
  return max_norm(work);
}

}  // namespace detail

inline PoissonSolution solve_neumann(const ScalarField& f, const PoissonOptions& opt = {}) {
  const Grid& g = f.grid;
  const std::size_t n = g.cell_count();
  require(opt.tol > 0.0, ErrorCode::domain, "Poisson tolerance must be positive");

  double l1 = 0.0;
  for (double v : f.values) l1 += std::abs(v);
  l1 *= g.cell_volume();
  const double total = integrate(f);
  if (std::abs(total) > 1e-10 * std::max(l1, opt.compat_scale))
    fail(ErrorCode::compatibility,
         "Neumann data must integrate to zero (integral " + std::to_string(total) + ", L1 norm " + std::to_string(l1) + ")");

  std::vector<double> b = f.values;
  detail::remove_mean(b);

  std::vector<double> x(n, 0.0);
  std::vector<double> work(n, 0.0);
  int iterations = 0;
  double residual = 0.0;

  if (opt.method == PoissonMethod::direct_1d) {
    require(g.dim == 1, ErrorCode::config, "direct Poisson solve is 1D only");
    // Flux F_{i+1/2} = -(x_{i+1} - x_i)/dx satisfies F_{i+1/2} - F_{i-1/2} = dx b_i with F = 0 on the walls.
    const double dx = g.dx[0];
    double flux = 0.0;
    x[0] = 0.0;
    for (int i = 0; i + 1 < g.nx(); ++i) {
      flux += dx * b[i];
      x[i + 1] = x[i] - dx * flux;
    }
    detail::remove_mean(x);
    residual = detail::true_residual(g, b, x, work);
    if (residual > opt.tol) throw SolverError("direct Neumann solve missed tolerance", residual, 0);
  } else {
    const int max_it = opt.max_iterations > 0 ? opt.max_iterations : static_cast<int>(10 * n);
    if (opt.initial_guess != nullptr && opt.initial_guess->size() == n) {
      x = opt.initial_guess->values;
      detail::remove_mean(x);
    }
    std::vector<double> r(n), p(n), ap(n);
    // Restart loop: the recursive residual is re-anchored to the true one until both agree.
    while (true) {
      detail::apply_neg_laplacian(g, x, ap);
      for (std::size_t k = 0; k < n; ++k) r[k] = b[k] - ap[k];
      detail::remove_mean(r);
      residual = detail::max_norm(r);
      if (residual <= opt.tol) break;
      if (iterations >= max_it) throw SolverError("CG did not converge", residual, iterations);
      p = r;
      double rr = detail::dot(r, r);
      bool converged = false;
      while (iterations < max_it) {
        detail::apply_neg_laplacian(g, p, ap);
        const double pap = detail::dot(p, ap);
        if (!(pap > 0.0)) break;
        const double alpha = rr / pap;
        for (std::size_t k = 0; k < n; ++k) {
          x[k] += alpha * p[k];
          r[k] -= alpha * ap[k];
        }
        detail::remove_mean(r);
        ++iterations;
        if (detail::max_norm(r) <= 0.5 * opt.tol) {
          converged = true;
          break;
        }
        const double rr_new = detail::dot(r, r);
        const double beta = rr_new / rr;
        rr = rr_new;
        for (std::size_t k = 0; k < n; ++k) p[k] = r[k] + beta * p[k];
      }
      if (!converged && iterations >= max_it) {
        detail::remove_mean(x);
        residual = detail::true_residual(g, b, x, work);
        if (residual <= opt.tol) break;
        throw SolverError("CG did not converge", residual, iterations);
      }
      detail::remove_mean(x);
    }
    detail::remove_mean(x);
    residual = detail::true_residual(g, b, x, work);
  }

  PoissonSolution sol;
  sol.phi = ScalarField(g);
  sol.phi.values = std::move(x);
  sol.grad_phi = gradient(sol.phi, BoundaryClosure::neumann_zero);
  sol.residual_norm = residual;
  sol.iterations = iterations;
  return sol;
}

inline PoissonSolution solve_neumann(const Grid& grid, const ScalarField& f, double tol) {
  require(f.grid == grid, ErrorCode::domain, "field does not live on the given grid");
  PoissonOptions opt;
  opt.tol = tol;
  return solve_neumann(f, opt);
}

/// |int grad(phi).grad(psi) - int f psi| for phi = solve(f), psi = solve(g).
inline double duality_residual(const Grid& grid, const ScalarField& f, const ScalarField& g, double tol) {
  const PoissonSolution phi = solve_neumann(grid, f, tol);
  const PoissonSolution psi = solve_neumann(grid, g, tol);
  double fpsi = 0.0;
  for (std::size_t c = 0; c < f.size(); ++c) fpsi += f.values[c] * psi.phi.values[c];
  fpsi *= grid.cell_volume();
  return std::abs(face_inner(phi.grad_phi, psi.grad_phi) - fpsi);
}

/// Column j of the discrete Neumann function: mean-zero solution for a unit charge in
/// cell j neutralised by a uniform background.
inline ScalarField neumann_column(const Grid& grid, std::size_t j, double tol) {
  ScalarField src(grid, -1.0 / grid.volume());
  src.values[j] += 1.0 / grid.cell_volume();
  return solve_neumann(grid, src, tol).phi;
}

/// |N_h(i, j) - N_h(j, i)| for linear cell indices i != j.
inline double green_symmetry_defect(const Grid& grid, std::size_t i, std::size_t j, double tol) {
  require(i != j, ErrorCode::domain, "Green symmetry defect needs distinct cells");
  require(i < grid.cell_count() && j < grid.cell_count(), ErrorCode::domain, "cell index out of range");
  const ScalarField col_j = neumann_column(grid, j, tol);
  const ScalarField col_i = neumann_column(grid, i, tol);
  return std::abs(col_j.values[i] - col_i.values[j]);
}

}  // namespace bipolar
