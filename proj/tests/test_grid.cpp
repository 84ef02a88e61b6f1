#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "bipolar/grid.hpp"

using namespace bipolar;

namespace {

const double kPi = std::acos(-1.0);

double max_interior_gradient_error(int n) {
  const Grid g = make_grid(1, {1.0}, {n});
  const VectorField d = gradient(sample(g, [](double x, double) { return std::cos(kPi * x); }));
  double err = 0.0;
  for (int i = 1; i < n; ++i) err = std::max(err, std::abs(d.at(0, i) + kPi * std::sin(kPi * i * g.dx[0])));
  return err;
}

double max_laplacian_error(int n) {
  const Grid g = make_grid(1, {1.0}, {n});
  const ScalarField f = sample(g, [](double x, double) { return std::cos(kPi * x); });
  const ScalarField lap = divergence(gradient(f));
  double err = 0.0;
  for (int i = 0; i < n; ++i) err = std::max(err, std::abs(lap(i) + kPi * kPi * std::cos(kPi * g.xc(i))));
  return err;
}

std::vector<double> rates(const std::vector<double>& err) {
  std::vector<double> r;
  for (std::size_t k = 0; k + 1 < err.size(); ++k) r.push_back(std::log2(err[k] / err[k + 1]));
  return r;
}

}  // namespace

TEST(Grid, Spacing) {
  EXPECT_DOUBLE_EQ(make_grid(1, {1.0}, {100}).dx[0], 0.01);
  const Grid g = make_grid(2, {1.0, 2.0}, {50, 100});
  EXPECT_DOUBLE_EQ(g.dx[0], 0.02);
  EXPECT_DOUBLE_EQ(g.dx[1], 0.02);
  EXPECT_EQ(g.cell_count(), 5000u);
  EXPECT_EQ(g.face_count(0), 51u * 100u);
  EXPECT_EQ(g.face_count(1), 50u * 101u);
}

TEST(Grid, TooFewCellsIsConfigError) {
  try {
    make_grid(1, {1.0}, {2});
    FAIL() << "expected a config error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::config);
  }
  EXPECT_THROW(make_grid(3, {1.0, 1.0, 1.0}, {8, 8, 8}), Error);
  EXPECT_THROW(make_grid(1, {-1.0}, {8}), Error);
}

TEST(Grid, GradientOfConstantVanishes) {
  const Grid g = make_grid(2, {1.0, 1.0}, {8, 6});
  EXPECT_EQ(max_abs(gradient(ScalarField(g, 3.5))), 0.0);
}

TEST(Grid, GradientExactForLinear) {
  const Grid g = make_grid(1, {1.0}, {100});
  const VectorField d = gradient(sample(g, [](double x, double) { return x; }));
  for (int i = 1; i < 100; ++i) EXPECT_NEAR(d.at(0, i), 1.0, 1e-12);
  EXPECT_EQ(d.at(0, 0), 0.0);
  EXPECT_EQ(d.at(0, 100), 0.0);
}

TEST(Grid, OneSidedClosureExactForQuadratic) {
  const Grid g = make_grid(1, {1.0}, {20});
  const VectorField d = gradient(sample(g, [](double x, double) { return x * x; }), BoundaryClosure::one_sided);
  EXPECT_NEAR(d.at(0, 0), 0.0, 1e-12);
  EXPECT_NEAR(d.at(0, 20), 2.0, 1e-12);
}

TEST(Grid, GradientSecondOrder) {
  std::vector<double> err;
  for (int n : {25, 50, 100, 200, 400}) err.push_back(max_interior_gradient_error(n));
  for (double r : rates(err)) EXPECT_NEAR(r, 2.0, 0.1);
}

TEST(Grid, DivergenceOfGradientSecondOrder) {
  std::vector<double> err;
  for (int n : {25, 50, 100, 200, 400}) err.push_back(max_laplacian_error(n));
  for (double r : rates(err)) EXPECT_NEAR(r, 2.0, 0.1);
}

TEST(Grid, DivergenceOfZero) {
  const Grid g = make_grid(2, {1.0, 1.0}, {5, 7});
  EXPECT_EQ(max_abs(divergence(VectorField(g))), 0.0);
}

TEST(Grid, GradientDivergenceAdjointness) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int dim : {1, 2}) {
    const Grid g = dim == 1 ? make_grid(1, {1.0}, {37}) : make_grid(2, {1.0, 0.7}, {11, 9});
    for (int trial = 0; trial < 100; ++trial) {
      ScalarField f(g);
      for (double& x : f.values) x = u(rng);
      VectorField F(g);
      for (int a = 0; a < dim; ++a)
        for (double& x : F.comp[a]) x = u(rng);
      F.zero_boundary();
      // Summation by parts written out cell by cell.
      const ScalarField div = divergence(F);
      double rhs = 0.0;
      for (std::size_t c = 0; c < f.size(); ++c) rhs -= f.values[c] * div.values[c];
      rhs *= g.cell_volume();
      EXPECT_NEAR(face_inner(gradient(f), F), rhs, 1e-12);
    }
  }
}

TEST(Grid, IntegrateValues) {
  const Grid g = make_grid(1, {1.0}, {100});
  EXPECT_DOUBLE_EQ(integrate(ScalarField(g, 1.0)), 1.0);
  for (int n : {10, 33, 100})
    EXPECT_NEAR(integrate(sample(make_grid(1, {1.0}, {n}), [](double x, double) { return std::cos(kPi * x); })), 0.0,
                1e-14);
  // Midpoint rule: |error| <= dx^2/24 * max|f''| * L, with f'' = 2.
  const double err = std::abs(integrate(sample(g, [](double x, double) { return x * x; })) - 1.0 / 3.0);
  EXPECT_LE(err, g.dx[0] * g.dx[0] / 12.0 * 2.0);
  EXPECT_NEAR(err, g.dx[0] * g.dx[0] / 12.0, 1e-15);
}

TEST(Grid, FaceAverageAndCellAverage) {
  const Grid g = make_grid(1, {1.0}, {4});
  ScalarField f(g);
  f.values = {1.0, 2.0, 4.0, 8.0};
  const VectorField a = face_average(f);
  EXPECT_EQ(a.comp[0], (std::vector<double>{1.0, 1.5, 3.0, 6.0, 8.0}));
  const ScalarField back = cell_average(a, 0);
  EXPECT_EQ(back.values, (std::vector<double>{1.25, 2.25, 4.5, 7.0}));
}

TEST(Grid, FaceWeightsIntegrateConstants) {
  const Grid g = make_grid(2, {1.0, 2.0}, {6, 5});
  const VectorField one(g, 1.0);
  // Each axis contributes the full volume once.
  EXPECT_NEAR(face_inner(one, one), 2.0 * g.volume(), 1e-13);
}

TEST(Grid, ScalarFieldCsv) {
  const Grid g = make_grid(2, {1.0, 1.0}, {4, 4});
  ScalarField f(g, 0.1);
  const std::string csv = to_csv(f, "rho");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "i,j,rho");
  EXPECT_NE(csv.find("3,3,0.10000000000000001\n"), std::string::npos);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 17);
}
