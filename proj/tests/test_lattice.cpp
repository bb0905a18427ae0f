#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "lkemu/error.hpp"
#include "lkemu/lattice.hpp"
#include "lkemu/sar.hpp"
#include "support/oracles.hpp"

using namespace lkemu;
using doctest::Approx;

namespace {

std::vector<Point> random_points(std::size_t n, Rect r, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> ux(r.xmin, r.xmax), uy(r.ymin, r.ymax);
  std::vector<Point> pts(n);
  for (auto& p : pts) p = {ux(gen), uy(gen)};
  return pts;
}

double entry(const SparseRowMatrix& m, Eigen::Index r, Eigen::Index c) { return m.coeff(r, c); }

}  // namespace

TEST_CASE("lattice spacing halves at each level") {
  const auto lat = build_lattice({-8, 8, -8, 8}, 4.0, 4, 2.5);
  REQUIRE(lat.levels() == 4);
  const double expected[] = {4, 2, 1, 0.5};
  for (int l = 0; l < 4; ++l) CHECK(lat.grids[static_cast<std::size_t>(l)].spacing == expected[l]);
  // Node counts grow roughly fourfold.
  for (int l = 1; l < 4; ++l) {
    const double ratio = static_cast<double>(lat.grids[static_cast<std::size_t>(l)].size()) /
                         static_cast<double>(lat.grids[static_cast<std::size_t>(l - 1)].size());
    CHECK(ratio > 1.5);
    CHECK(ratio < 4.5);
  }
  // Nested: every level-1 node inside the domain is also a level-2 node.
  const auto& g1 = lat.grids[0];
  const auto& g2 = lat.grids[1];
  for (std::size_t k = 0; k < g1.size(); ++k) {
    const Point p = g1.node(k);
    if (!lat.config.domain.contains(p)) continue;
    const double fi = (p.x - g2.x0) / g2.spacing;
    const double fj = (p.y - g2.y0) / g2.spacing;
    CHECK(fi == Approx(std::round(fi)));
    CHECK(fj == Approx(std::round(fj)));
  }
}

TEST_CASE("lattice buffer and single level") {
  const auto lat = build_lattice({-24, 24, -24, 24}, 4.0, 1, 2.5, 3);
  REQUIRE(lat.levels() == 1);
  const auto& g = lat.grids[0];
  CHECK(g.x0 == -36.0);
  CHECK(g.node(g.nx - 1, 0).x == Approx(36.0));
  CHECK(g.node(0, g.ny - 1).y == Approx(36.0));
  CHECK_THROWS_AS(build_lattice({0, 1, 0, 1}, 4.0, 2, 2.5), Error);
  CHECK_THROWS_AS(build_lattice({0, 10, 0, 10}, 1.0, 2, 1.0), Error);
  CHECK_THROWS_AS(build_lattice({0, 10, 0, 10}, 1.0, 0, 2.5), Error);
}

TEST_CASE("basis entries follow the Wendland kernel in level spacing units") {
  const auto lat = build_lattice({0, 10, 0, 10}, 1.0, 1, 2.5, 0);
  const auto& g = lat.grids[0];
  const std::size_t node = 3 * g.nx + 3;  // (3, 3)
  const std::vector<Point> pts{{3, 3}, {3 + 2.5, 3}, {3 + 1.25, 3}};
  const auto basis = basis_matrix(pts, lat);
  CHECK(entry(basis.levels[0], 0, static_cast<Eigen::Index>(node)) == 1.0);
  CHECK(entry(basis.levels[0], 1, static_cast<Eigen::Index>(node)) == 0.0);
  CHECK(entry(basis.levels[0], 2, static_cast<Eigen::Index>(node)) ==
        Approx(0.10807291666666667).epsilon(1e-13));
  CHECK_THROWS_AS(basis_matrix(std::vector<Point>{}, lat), Error);
}

TEST_CASE("basis rows respect the sparsity bound") {
  for (double delta : {1.5, 2.5, 3.2}) {
    const auto lat = build_lattice({-5, 5, -5, 5}, 2.0, 3, delta);
    const auto pts = random_points(300, lat.config.domain, 5);
    const auto basis = basis_matrix(pts, lat);
    const auto bound = static_cast<Eigen::Index>(std::pow(std::ceil(2 * delta + 1), 2));
    for (const auto& level : basis.levels) {
      for (Eigen::Index r = 0; r < level.rows(); ++r) {
        CHECK(level.row(r).nonZeros() <= bound);
        CHECK(level.row(r).nonZeros() > 0);
      }
    }
  }
}

namespace {

struct SingleLevel {
  MultiresLattice lattice;
  SarLevel sar;
  Eigen::MatrixXd q_inv;
};

SingleLevel five_by_five() {
  auto lat = build_lattice({0, 4, 0, 4}, 1.0, 1, 2.5, 0);
  REQUIRE(lat.grids[0].size() == 25);
  std::vector<double> a(25, 5.0);
  SarLevel sar(lat.grids[0], a);
  const Eigen::MatrixXd q = Eigen::MatrixXd(sar.q);
  return {lat, sar, q.inverse()};
}

}  // namespace

TEST_CASE("normalization gives the requested marginal variance") {
  const auto fx = five_by_five();
  const auto pts = random_points(100, fx.lattice.config.domain, 17);
  const auto raw = basis_matrix(pts, fx.lattice);
  const std::vector<SparseCholesky> factors{fx.sar.factor};
  const std::vector<std::vector<double>> sigma{std::vector<double>(pts.size(), 1.0)};
  const auto norm = normalize_basis(raw, factors, sigma, pts);
  const Eigen::MatrixXd phi = Eigen::MatrixXd(norm.levels[0]);
  const Eigen::VectorXd var = (phi * fx.q_inv * phi.transpose()).diagonal();
  for (Eigen::Index i = 0; i < var.size(); ++i) CHECK(std::abs(var[i] - 1.0) < 1e-8);

  // Unnormalized variances differ, so the check above is not vacuous.
  const Eigen::MatrixXd phi_raw = Eigen::MatrixXd(raw.levels[0]);
  const Eigen::VectorXd raw_var = (phi_raw * fx.q_inv * phi_raw.transpose()).diagonal();
  CHECK(raw_var.maxCoeff() - raw_var.minCoeff() > 1e-3);

  // Support-restricted quadratic form equals the full dense one.
  for (Eigen::Index i = 0; i < var.size(); ++i) {
    CHECK(norm.omega[0][static_cast<std::size_t>(i)] * norm.omega[0][static_cast<std::size_t>(i)] ==
          Approx(raw_var[i]).epsilon(1e-12));
  }
}

TEST_CASE("normalization is idempotent and honors zero weights") {
  const auto fx = five_by_five();
  const auto pts = random_points(50, fx.lattice.config.domain, 23);
  const auto raw = basis_matrix(pts, fx.lattice);
  const std::vector<SparseCholesky> factors{fx.sar.factor};
  std::vector<double> s(pts.size());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = 0.5 + 0.01 * static_cast<double>(i);
  const std::vector<std::vector<double>> sigma{s};
  const auto once = normalize_basis(raw, factors, sigma, pts);
  const auto twice = normalize_basis(once, factors, sigma, pts);
  const Eigen::MatrixXd a = Eigen::MatrixXd(once.levels[0]);
  const Eigen::MatrixXd b = Eigen::MatrixXd(twice.levels[0]);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);

  const std::vector<std::vector<double>> zero{std::vector<double>(pts.size(), 0.0)};
  const auto z = normalize_basis(raw, factors, zero, pts);
  CHECK(z.levels[0].nonZeros() == 0);
}

TEST_CASE("normalization reports locations outside the basis coverage") {
  const auto fx = five_by_five();
  const std::vector<Point> pts{{2, 2}, {40, 40}};
  const auto raw = basis_matrix(pts, fx.lattice);
  const std::vector<SparseCholesky> factors{fx.sar.factor};
  const std::vector<std::vector<double>> sigma{std::vector<double>(2, 1.0)};
  try {
    normalize_basis(raw, factors, sigma, pts);
    FAIL("expected a coverage error");
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::kCoverage);
    CHECK(std::string(e.what()).find("(40, 40)") != std::string::npos);
  }
}
