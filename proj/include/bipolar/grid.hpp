#pragma once

// Uniform box grids in 1D/2D with cell-centred scalars and face-normal vectors.
//
// Layout: cell (i, j) -> i + nx * j. Axis-0 faces (i = 0..nx, j) -> i + (nx + 1) * j,
// axis-1 faces (i, j = 0..ny) -> i + nx * j. Face 0 and face n of every axis lie on the wall.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "bipolar/error.hpp"

namespace bipolar {

struct Grid {
  int dim = 1;
  std::array<double, 2> lengths{1.0, 1.0};
  std::array<int, 2> n{4, 1};
  std::array<double, 2> dx{0.25, 1.0};

  int nx() const { return n[0]; }
  int ny() const { return n[1]; }
  std::size_t cell_count() const { return static_cast<std::size_t>(n[0]) * n[1]; }
  std::size_t face_count(int axis) const {
    if (axis >= dim) return 0;
    return axis == 0 ? static_cast<std::size_t>(n[0] + 1) * n[1] : static_cast<std::size_t>(n[0]) * (n[1] + 1);
  }
  double cell_volume() const { return dim == 1 ? dx[0] : dx[0] * dx[1]; }
  double volume() const { return dim == 1 ? lengths[0] : lengths[0] * lengths[1]; }
  double min_dx() const { return dim == 1 ? dx[0] : std::min(dx[0], dx[1]); }

  std::size_t cell(int i, int j = 0) const { return static_cast<std::size_t>(i) + static_cast<std::size_t>(n[0]) * j; }
  std::size_t face(int axis, int i, int j = 0) const {
    return axis == 0 ? static_cast<std::size_t>(i) + static_cast<std::size_t>(n[0] + 1) * j
                     : static_cast<std::size_t>(i) + static_cast<std::size_t>(n[0]) * j;
  }
  bool boundary_face(int axis, int i, int j) const {
    return axis == 0 ? (i == 0 || i == n[0]) : (j == 0 || j == n[1]);
  }

  double xc(int i) const { return (i + 0.5) * dx[0]; }
  double yc(int j) const { return dim == 1 ? 0.0 : (j + 0.5) * dx[1]; }

  bool operator==(const Grid&) const = default;
};

inline Grid make_grid(int dim, std::vector<double> lengths, std::vector<int> n_cells) {
  require(dim == 1 || dim == 2, ErrorCode::config, "grid dimension must be 1 or 2");
  require(static_cast<int>(lengths.size()) == dim && static_cast<int>(n_cells.size()) == dim, ErrorCode::config,
          "grid needs one length and one cell count per axis");
  Grid g;
  g.dim = dim;
  for (int a = 0; a < dim; ++a) {
    require(std::isfinite(lengths[a]) && lengths[a] > 0.0, ErrorCode::config, "grid lengths must be positive");
    require(n_cells[a] >= 4, ErrorCode::config, "grid needs at least 4 cells per axis");
    g.lengths[a] = lengths[a];
    g.n[a] = n_cells[a];
    g.dx[a] = lengths[a] / n_cells[a];
  }
  if (dim == 1) {
    g.lengths[1] = 1.0;
    g.n[1] = 1;
    g.dx[1] = 1.0;
  }
  return g;
}

struct ScalarField {
  Grid grid;
  std::vector<double> values;

  ScalarField() = default;
  explicit ScalarField(const Grid& g, double fill = 0.0) : grid(g), values(g.cell_count(), fill) {}

  double& operator()(int i, int j = 0) { return values[grid.cell(i, j)]; }
  double operator()(int i, int j = 0) const { return values[grid.cell(i, j)]; }
  std::size_t size() const { return values.size(); }
};

struct VectorField {
  Grid grid;
  std::array<std::vector<double>, 2> comp;

  VectorField() = default;
  explicit VectorField(const Grid& g, double fill = 0.0) : grid(g) {
    for (int a = 0; a < 2; ++a) comp[a].assign(g.face_count(a), fill);
  }

  double& at(int axis, int i, int j = 0) { return comp[axis][grid.face(axis, i, j)]; }
  double at(int axis, int i, int j = 0) const { return comp[axis][grid.face(axis, i, j)]; }

  void zero_boundary() {
    const int nx = grid.nx(), ny = grid.ny();
    for (int j = 0; j < ny; ++j) {
      at(0, 0, j) = 0.0;
      at(0, nx, j) = 0.0;
    }
    if (grid.dim == 2)
      for (int i = 0; i < nx; ++i) {
        at(1, i, 0) = 0.0;
        at(1, i, ny) = 0.0;
      }
  }
};

// ---------------------------------------------------------------------------
// Elementwise helpers.

inline ScalarField operator-(const ScalarField& a, const ScalarField& b) {
  ScalarField out(a.grid);
  for (std::size_t c = 0; c < a.size(); ++c) out.values[c] = a.values[c] - b.values[c];
  return out;
}

inline ScalarField operator+(const ScalarField& a, const ScalarField& b) {
  ScalarField out(a.grid);
  for (std::size_t c = 0; c < a.size(); ++c) out.values[c] = a.values[c] + b.values[c];
  return out;
}

inline VectorField operator-(const VectorField& a, const VectorField& b) {
  VectorField out(a.grid);
  for (int ax = 0; ax < 2; ++ax)
    for (std::size_t f = 0; f < a.comp[ax].size(); ++f) out.comp[ax][f] = a.comp[ax][f] - b.comp[ax][f];
  return out;
}

inline VectorField scaled(const VectorField& a, double s) {
  VectorField out(a.grid);
  for (int ax = 0; ax < 2; ++ax)
    for (std::size_t f = 0; f < a.comp[ax].size(); ++f) out.comp[ax][f] = s * a.comp[ax][f];
  return out;
}

inline ScalarField map(const ScalarField& a, const std::function<double(double)>& fn) {
  ScalarField out(a.grid);
  for (std::size_t c = 0; c < a.size(); ++c) out.values[c] = fn(a.values[c]);
  return out;
}

/// Sample a function of the cell centre.
inline ScalarField sample(const Grid& g, const std::function<double(double, double)>& fn) {
  ScalarField out(g);
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) out(i, j) = fn(g.xc(i), g.yc(j));
  return out;
}

inline double max_abs(const ScalarField& a) {
  double m = 0.0;
  for (double v : a.values) m = std::max(m, std::abs(v));
  return m;
}

inline double max_abs(const VectorField& a) {
  double m = 0.0;
  for (int ax = 0; ax < 2; ++ax)
    for (double v : a.comp[ax]) m = std::max(m, std::abs(v));
  return m;
}

inline double min_value(const ScalarField& a) {
  double m = a.values.empty() ? 0.0 : a.values.front();
  for (double v : a.values) m = std::min(m, v);
  return m;
}

inline double max_value(const ScalarField& a) {
  double m = a.values.empty() ? 0.0 : a.values.front();
  for (double v : a.values) m = std::max(m, v);
  return m;
}

// ---------------------------------------------------------------------------
// Discrete calculus.

enum class BoundaryClosure {
  neumann_zero,  ///< wall faces carry exactly 0
  one_sided,     ///< second-order one-sided difference at the walls
};

inline VectorField gradient(const ScalarField& f, BoundaryClosure closure = BoundaryClosure::neumann_zero) {
  const Grid& g = f.grid;
  VectorField out(g);
  const int nx = g.nx(), ny = g.ny();
  for (int j = 0; j < ny; ++j) {
    for (int i = 1; i < nx; ++i) out.at(0, i, j) = (f(i, j) - f(i - 1, j)) / g.dx[0];
    if (closure == BoundaryClosure::one_sided) {
      out.at(0, 0, j) = (-2.0 * f(0, j) + 3.0 * f(1, j) - f(2, j)) / g.dx[0];
      out.at(0, nx, j) = (2.0 * f(nx - 1, j) - 3.0 * f(nx - 2, j) + f(nx - 3, j)) / g.dx[0];
    }
  }
  if (g.dim == 2) {
    for (int i = 0; i < nx; ++i) {
      for (int j = 1; j < ny; ++j) out.at(1, i, j) = (f(i, j) - f(i, j - 1)) / g.dx[1];
      if (closure == BoundaryClosure::one_sided) {
        out.at(1, i, 0) = (-2.0 * f(i, 0) + 3.0 * f(i, 1) - f(i, 2)) / g.dx[1];
        out.at(1, i, ny) = (2.0 * f(i, ny - 1) - 3.0 * f(i, ny - 2) + f(i, ny - 3)) / g.dx[1];
      }
    }
  }
  return out;
}

inline ScalarField divergence(const VectorField& F) {
  const Grid& g = F.grid;
  ScalarField out(g);
  const int nx = g.nx(), ny = g.ny();
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      double d = (F.at(0, i + 1, j) - F.at(0, i, j)) / g.dx[0];
      if (g.dim == 2) d += (F.at(1, i, j + 1) - F.at(1, i, j)) / g.dx[1];
      out(i, j) = d;
    }
  return out;
}

/// Midpoint rule.
inline double integrate(const ScalarField& f) {
  double s = 0.0;
  for (double v : f.values) s += v;
  return s * f.grid.cell_volume();
}

/// Quadrature weight of a face: the cell volume inside, half of it on a wall.
inline double face_weight(const Grid& g, int axis, int i, int j) {
  return g.boundary_face(axis, i, j) ? 0.5 * g.cell_volume() : g.cell_volume();
}

/// Sum over faces of weight * fn(axis, i, j).
template <class Fn>
double face_sum(const Grid& g, Fn&& fn) {
  double s = 0.0;
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i <= g.nx(); ++i) s += face_weight(g, 0, i, j) * fn(0, i, j);
  if (g.dim == 2)
    for (int j = 0; j <= g.ny(); ++j)
      for (int i = 0; i < g.nx(); ++i) s += face_weight(g, 1, i, j) * fn(1, i, j);
  return s;
}

/// Integral of the dot product of two face fields.
inline double face_inner(const VectorField& a, const VectorField& b) {
  return face_sum(a.grid, [&](int ax, int i, int j) { return a.at(ax, i, j) * b.at(ax, i, j); });
}

/// Arithmetic mean of the two neighbouring cells; wall faces take the adjacent cell.
inline VectorField face_average(const ScalarField& f) {
  const Grid& g = f.grid;
  VectorField out(g);
  const int nx = g.nx(), ny = g.ny();
  for (int j = 0; j < ny; ++j) {
    for (int i = 1; i < nx; ++i) out.at(0, i, j) = 0.5 * (f(i - 1, j) + f(i, j));
    out.at(0, 0, j) = f(0, j);
    out.at(0, nx, j) = f(nx - 1, j);
  }
  if (g.dim == 2)
    for (int i = 0; i < nx; ++i) {
      for (int j = 1; j < ny; ++j) out.at(1, i, j) = 0.5 * (f(i, j - 1) + f(i, j));
      out.at(1, i, 0) = f(i, 0);
      out.at(1, i, ny) = f(i, ny - 1);
    }
  return out;
}

/// Cell value of one face-normal component: mean of the two faces bounding the cell.
inline ScalarField cell_average(const VectorField& F, int axis) {
  const Grid& g = F.grid;
  ScalarField out(g);
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i)
      out(i, j) = axis == 0 ? 0.5 * (F.at(0, i, j) + F.at(0, i + 1, j)) : 0.5 * (F.at(1, i, j) + F.at(1, i, j + 1));
  return out;
}

/// One row per cell: i[, j], value, with 17 significant digits.
inline std::string to_csv(const ScalarField& f, const std::string& name = "value") {
  const Grid& g = f.grid;
  std::string out = g.dim == 1 ? "i," + name + "\n" : "i,j," + name + "\n";
  char buf[64];
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      if (g.dim == 1)
        std::snprintf(buf, sizeof buf, "%d,%.17g\n", i, f(i, j));
      else
        std::snprintf(buf, sizeof buf, "%d,%d,%.17g\n", i, j, f(i, j));
      out += buf;
    }
  return out;
}

}  // namespace bipolar
