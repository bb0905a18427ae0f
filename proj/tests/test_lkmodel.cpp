#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "lkemu/error.hpp"
#include "lkemu/lkmodel.hpp"
#include "support/lk_dense.hpp"
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

// Nonstationary model on [0, 20]^2 with random a-fields and smooth sigma_l.
LKModel random_model(int levels, double tau, std::uint64_t seed) {
  const auto lat = build_lattice({0, 20, 0, 20}, 5.0, levels, 2.5, 2);
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> ua(4.2, 6.0);
  std::vector<std::vector<double>> a;
  std::vector<Surface> sig;
  const GridGeometry g = GridGeometry::spanning({0, 20, 0, 20}, 5, 5);
  for (int l = 0; l < levels; ++l) {
    std::vector<double> af(lat.grids[static_cast<std::size_t>(l)].size());
    for (auto& v : af) v = ua(gen);
    a.push_back(af);
    std::vector<double> sv(g.size());
    for (std::size_t i = 0; i < sv.size(); ++i) {
      sv[i] = (0.6 + 0.3 * std::sin(static_cast<double>(i) + l)) / (l + 1);
    }
    sig.emplace_back(g, sv);
  }
  return LKModel(lat, a, sig, Surface::constant(tau));
}

ReplicateField noise_field(const GridGeometry& g, int m, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;
  ReplicateField data{g, Eigen::MatrixXd(static_cast<Eigen::Index>(g.size()), m), std::nullopt};
  for (Eigen::Index i = 0; i < data.values.size(); ++i) data.values.data()[i] = nd(gen);
  return data;
}

}  // namespace

TEST_CASE("marginal variance equals the sum of level variances") {
  const auto model = random_model(3, 0.0, 4);
  for (const auto& p : random_points(30, {0, 20, 0, 20}, 8)) {
    double expected = 0.0;
    for (int l = 0; l < 3; ++l) expected += std::pow(model.sigma_level(l)(p), 2);
    CHECK(lk_covariance(model, p, p) == Approx(expected).epsilon(1e-10));
  }
  const auto with_nugget = random_model(2, 0.3, 4);
  const Point p{7.3, 11.1};
  const double latent = lk_covariance_matrix(with_nugget, std::vector<Point>{p})(0, 0);
  CHECK(lk_covariance(with_nugget, p, p) == Approx(latent + 0.09).epsilon(1e-12));
}

TEST_CASE("lk_covariance is symmetric and matches the dense construction") {
  const auto model = random_model(2, 0.0, 9);
  const auto pts = random_points(40, {0, 20, 0, 20}, 10);
  const Eigen::MatrixXd dense = testing::dense_lk_covariance(model, pts);
  for (std::size_t i = 0; i < pts.size(); i += 3) {
    for (std::size_t j = 0; j < pts.size(); j += 5) {
      const double a = lk_covariance(model, pts[i], pts[j]);
      const double b = lk_covariance(model, pts[j], pts[i]);
      CHECK(std::abs(a - b) <= 1e-12);
      CHECK(a == Approx(dense(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))).epsilon(1e-9));
    }
  }
}

TEST_CASE("stationary four-level model decays with distance and is nearly isotropic") {
  const auto lat = build_lattice({-8, 8, -8, 8}, 4.0, 4, 2.5);
  const std::vector<double> w{1, 0, 0, 0};
  const auto model = LKModel::stationary(lat, 5.0, w);
  std::vector<Point> along_x, along_y;
  for (int i = 1; i <= 7; ++i) {
    along_x.push_back({static_cast<double>(i), 0.0});
    along_y.push_back({0.0, static_cast<double>(i)});
  }
  const auto cx = correlation_curve(model, {0, 0}, along_x);
  const auto cy = correlation_curve(model, {0, 0}, along_y);
  for (std::size_t i = 0; i < cx.size(); ++i) {
    if (i > 0) CHECK(cx[i].correlation < cx[i - 1].correlation);
    CHECK(std::abs(cx[i].correlation - cy[i].correlation) < 0.02);
  }
  const auto self = correlation_curve(model, {0, 0}, std::vector<Point>{{0, 0}});
  CHECK(self[0].correlation == Approx(1.0).epsilon(1e-12));
}

TEST_CASE("simulation with zero weights and no nugget is identically zero") {
  const auto lat = build_lattice({0, 10, 0, 10}, 2.5, 2, 2.5);
  std::vector<std::vector<double>> a;
  for (const auto& g : lat.grids) a.emplace_back(g.size(), 5.0);
  const LKModel model(lat, a, {Surface::constant(0.0), Surface::constant(0.0)},
                      Surface::constant(0.0));
  const auto pts = random_points(20, {0, 10, 0, 10}, 1);
  const Eigen::MatrixXd sims = simulate(model, pts, 3, 99);
  CHECK(sims.cwiseAbs().maxCoeff() == 0.0);
  CHECK(simulate(model, pts, 0, 1).cols() == 0);
}

TEST_CASE("simulated covariance matches lk_covariance") {
  const auto model = random_model(2, 0.2, 21);
  const GridGeometry g = GridGeometry::spanning({2, 18, 2, 18}, 10, 10);
  const auto pts = g.locations();
  const int n = 2000;
  const Eigen::MatrixXd sims = simulate(model, pts, n, 5);
  std::mt19937_64 gen(3);
  std::uniform_int_distribution<std::size_t> pick(0, pts.size() - 1);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t i = pick(gen), j = trial < 3 ? i : pick(gen);
    const Eigen::ArrayXd prod =
        sims.row(static_cast<Eigen::Index>(i)).array() * sims.row(static_cast<Eigen::Index>(j)).array();
    const double mean = prod.mean();
    const double se = std::sqrt((prod - mean).square().sum() / (n - 1) / n);
    CHECK(std::abs(mean - lk_covariance(model, pts[i], pts[j])) <= 4 * se);
  }
}

TEST_CASE("simulation is deterministic for any worker count") {
  const auto model = random_model(3, 0.1, 2);
  const auto pts = random_points(60, {0, 20, 0, 20}, 4);
  const Eigen::MatrixXd a = simulate(model, pts, 12, 77, {true, 1});
  const Eigen::MatrixXd b = simulate(model, pts, 12, 77, {true, 4});
  CHECK(a == b);
  const Eigen::MatrixXd c = simulate(model, pts, 12, 78, {true, 1});
  CHECK(!(a == c));
  // Realization r does not depend on how many were requested.
  const Eigen::MatrixXd d = simulate(model, pts, 5, 77, {true, 3});
  CHECK(d == a.leftCols(5));
}

TEST_CASE("SMW likelihood equals the dense likelihood") {
  for (int levels : {1, 2, 3}) {
    for (double tau : {1e-2, 1e-1, 1.0}) {
      const auto model = random_model(levels, tau, static_cast<std::uint64_t>(levels * 10));
      const GridGeometry g = GridGeometry::spanning({1, 19, 1, 19}, 12, 10);
      const auto data = noise_field(g, 4, static_cast<std::uint64_t>(levels));
      const Eigen::MatrixXd cov = testing::dense_lk_covariance(model, g.locations());
      const double expected = testing::dense_log_likelihood(cov, data.values, nullptr);
      const auto got = log_likelihood(model, data);
      CHECK(got.log_likelihood == Approx(expected).epsilon(1e-8));
    }
  }
}

TEST_CASE("likelihood structure in the number of replicates and fixed effects") {
  const auto model = random_model(2, 0.3, 5);
  const GridGeometry g = GridGeometry::spanning({1, 19, 1, 19}, 8, 8);
  auto one = noise_field(g, 1, 6);
  ReplicateField two{g, Eigen::MatrixXd(64, 2), std::nullopt};
  two.values << one.values, one.values;
  const auto r1 = log_likelihood(model, one);
  const auto r2 = log_likelihood(model, two);
  CHECK(r2.quadratic_form == Approx(2 * r1.quadratic_form).epsilon(1e-12));
  CHECK(r2.log_likelihood == Approx(2 * r1.log_likelihood).epsilon(1e-12));

  auto base = noise_field(g, 3, 7);
  base.covariates = Eigen::MatrixXd::Ones(64, 1);
  auto shifted = base;
  shifted.values.array() += 2.5;
  const auto a = log_likelihood(model, base);
  const auto b = log_likelihood(model, shifted);
  CHECK(b.log_likelihood == Approx(a.log_likelihood).epsilon(1e-10));
  CHECK(b.fixed_effects[0] - a.fixed_effects[0] == Approx(2.5).epsilon(1e-10));

  Eigen::VectorXd d_dense;
  const Eigen::MatrixXd cov = testing::dense_lk_covariance(model, g.locations());
  const double dense = testing::dense_log_likelihood(cov, base.values, &*base.covariates, &d_dense);
  CHECK(a.log_likelihood == Approx(dense).epsilon(1e-8));
  CHECK(a.fixed_effects[0] == Approx(d_dense[0]).epsilon(1e-8));
}

TEST_CASE("profiled scale maximizes over a common multiplier") {
  const auto model = random_model(2, 0.2, 12);
  const GridGeometry g = GridGeometry::spanning({1, 19, 1, 19}, 9, 9);
  const auto data = noise_field(g, 3, 13);
  const auto prof = log_likelihood(model, data, {true});
  const Eigen::MatrixXd cov = testing::dense_lk_covariance(model, g.locations());
  const double at_opt = testing::dense_log_likelihood(prof.variance_scale * cov, data.values, nullptr);
  CHECK(prof.log_likelihood == Approx(at_opt).epsilon(1e-8));
  for (double f : {0.8, 1.25}) {
    CHECK(testing::dense_log_likelihood(f * prof.variance_scale * cov, data.values, nullptr) <
          prof.log_likelihood);
  }
}

TEST_CASE("likelihood requires a positive nugget") {
  const auto model = random_model(1, 0.0, 3);
  const GridGeometry g = GridGeometry::spanning({1, 19, 1, 19}, 6, 6);
  try {
    log_likelihood(model, noise_field(g, 2, 1));
    FAIL("expected an indefinite-system error");
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::kNumerical);
  }
}

TEST_CASE("correlation curve values are bounded") {
  const auto model = random_model(3, 0.5, 31);
  const auto targets = random_points(50, {0, 20, 0, 20}, 32);
  for (const auto& c : correlation_curve(model, {10, 10}, targets)) {
    CHECK(c.correlation <= 1.0 + 1e-12);
    CHECK(c.correlation >= -1.0 - 1e-12);
  }
}
