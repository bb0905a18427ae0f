#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "lkemu/encode.hpp"
#include "lkemu/error.hpp"
#include "lkemu/kernels.hpp"

using namespace lkemu;
using doctest::Approx;

namespace {

LatticeConfig small_config() {
  LatticeConfig c;
  c.domain = {-15, 15, -15, 15};
  return c;
}

const CalibrationTable& shared_table() {
  static const CalibrationTable table = [] {
    const std::vector<double> grid{2.0, 4.0};
    return build_calibration_table(grid, 1.0, small_config());
  }();
  return table;
}

LocalEstimates constant_estimates(const GridGeometry& g, double theta, double sigma, double tau) {
  LocalEstimates est;
  est.grid = g;
  est.theta.assign(g.size(), theta);
  est.sigma.assign(g.size(), sigma);
  est.tau.assign(g.size(), tau);
  est.sigma_obs.assign(g.size(), sigma);
  return est;
}

}  // namespace

TEST_CASE("simplex least squares matches a brute-force search") {
  Eigen::MatrixXd levels(6, 3);
  levels << 0.9, 0.5, 0.1, 0.8, 0.3, 0.05, 0.7, 0.2, 0.0, 0.5, 0.1, 0.0, 0.3, 0.0, 0.0, 0.1, 0.0, 0.0;
  for (const Eigen::Vector3d& truth :
       {Eigen::Vector3d(0.2, 0.5, 0.3), Eigen::Vector3d(1.0, 0.0, 0.0), Eigen::Vector3d(1.4, -0.6, 0.2)}) {
    const Eigen::VectorXd target = levels * truth;
    const std::vector<double> alpha = simplex_least_squares(levels, target);
    CHECK(std::accumulate(alpha.begin(), alpha.end(), 0.0) == Approx(1.0).epsilon(1e-12));
    for (double v : alpha) CHECK(v >= 0.0);
    const Eigen::Map<const Eigen::Vector3d> w(alpha.data());
    const double ours = (levels * w - target).squaredNorm();
    double brute = std::numeric_limits<double>::infinity();
    const int steps = 400;
    for (int i = 0; i <= steps; ++i) {
      for (int j = 0; i + j <= steps; ++j) {
        const Eigen::Vector3d p(double(i) / steps, double(j) / steps, double(steps - i - j) / steps);
        brute = std::min(brute, (levels * p - target).squaredNorm());
      }
    }
    CHECK(ours <= brute + 1e-12);
    if (truth.minCoeff() >= 0) CHECK(ours < 1e-20);
  }
}

TEST_CASE("calibration distances span (0, 3 theta]") {
  const auto d = calibration_distances(2.0, 40);
  CHECK(d.size() == 40);
  CHECK(d.front() == Approx(0.15));
  CHECK(d.back() == 6.0);
  const LatticeConfig wide = calibration_lattice(small_config(), 10.0);
  CHECK(wide.domain.xmin == Approx(-32.5));
  CHECK(wide.domain.xmax == Approx(32.5));
  CHECK(calibration_lattice(small_config(), 2.0).domain == small_config().domain);
}

TEST_CASE("stationary calibration reaches a few percent") {
  const CalibrationEntry e = calibrate_stationary(3.0, 1.0, small_config());
  CHECK(e.a > 4.0);
  CHECK(e.rel_rmse < 0.05);
  CHECK(std::accumulate(e.alpha.begin(), e.alpha.end(), 0.0) == Approx(1.0).epsilon(1e-12));
  CHECK(stationary_rmse(3.0, 1.0, small_config(), e.a, e.alpha) == Approx(e.rel_rmse).epsilon(1e-12));
  CalibrationOptions strict;
  strict.rmse_ceiling = 1e-6;
  try {
    calibrate_stationary(3.0, 1.0, small_config(), strict);
    FAIL("expected a calibration error");
  } catch (const Error& err) {
    CHECK(err.category() == ErrorCategory::kCalibration);
    CHECK(std::string(err.what()).find("ceiling") != std::string::npos);
  }
}

TEST_CASE("smaller a gives longer LK correlation") {
  const MultiresLattice lattice = build_lattice(small_config());
  const std::vector<double> weights{1.0, 0.5, 0.25};
  const std::vector<Point> targets{{4.0, 0.0}};
  double previous = -1.0;
  for (double a : {5.0, 4.5, 4.1}) {
    const LKModel model = LKModel::stationary(lattice, a, weights);
    const double c = correlation_curve(model, {0, 0}, targets)[0].correlation;
    CHECK(c > previous);
    previous = c;
  }
}

TEST_CASE("calibration table lookup") {
  const CalibrationTable& table = shared_table();
  REQUIRE(table.entries.size() == 2);
  CHECK_NOTHROW(table.validate());
  const auto& lo = table.entries[0];
  const auto& hi = table.entries[1];
  CHECK(lo.a >= hi.a);
  const auto at = table.lookup(2.0);
  CHECK(at.a == lo.a);
  CHECK(at.alpha == lo.alpha);
  CHECK_FALSE(at.clamped);
  CHECK(table.lookup(4.0).a == hi.a);
  const auto mid = table.lookup(3.0);
  CHECK(mid.a <= lo.a);
  CHECK(mid.a >= hi.a);
  CHECK(std::accumulate(mid.alpha.begin(), mid.alpha.end(), 0.0) == Approx(1.0).epsilon(1e-12));
  const auto below = table.lookup(0.5);
  CHECK(below.clamped);
  CHECK(below.a == lo.a);
  CHECK(table.lookup(50.0).a == hi.a);
  // Interpolated parameters stay close to a direct calibration at theta = 3.
  const CalibrationEntry direct = calibrate_stationary(3.0, 1.0, small_config());
  const double interpolated = stationary_rmse(3.0, 1.0, small_config(), mid.a, mid.alpha);
  CHECK(interpolated <= std::max(2.0 * std::max(lo.rel_rmse, hi.rel_rmse), direct.rel_rmse + 0.01));

  CalibrationTable single = table;
  single.entries.resize(1);
  for (double t : {0.1, 2.0, 7.0}) CHECK(single.lookup(t).a == lo.a);
}

TEST_CASE("table validation") {
  CalibrationTable table = shared_table();
  table.entries[1].a = table.entries[0].a + 1.0;
  CHECK_THROWS_AS(table.validate(), Error);
  table = shared_table();
  table.entries[1].theta = 1.0;
  CHECK_THROWS_AS(table.validate(), Error);
  table = shared_table();
  table.entries[0].a = 4.0;
  CHECK_THROWS_AS(table.validate(), Error);
  const std::vector<double> unsorted{3.0, 2.0};
  CHECK_THROWS_AS(build_calibration_table(unsorted, 1.0, small_config()), Error);
}

TEST_CASE("calibration table text round trip") {
  const std::string text = format_calibration_table(shared_table());
  CHECK(text.find("# nu=1\n") != std::string::npos);
  CHECK(text.find("# coarse_spacing=2.5\n") != std::string::npos);
  CHECK(text.find("theta,a,alpha_1,alpha_2,alpha_3,rel_rmse\n") != std::string::npos);
  const CalibrationTable back = parse_calibration_table(text);
  CHECK(format_calibration_table(back) == text);
  CHECK(back.entries[1].a == shared_table().entries[1].a);
  CHECK(back.config.domain == shared_table().config.domain);
  CHECK_THROWS_AS(parse_calibration_table("theta,a\n1,5\n"), Error);
  std::string broken = text;
  broken.replace(broken.rfind(','), 1, ";");
  CHECK_THROWS_AS(parse_calibration_table(broken), Error);
}

TEST_CASE("constant estimates encode to a stationary model") {
  const CalibrationTable& table = shared_table();
  const GridGeometry g = GridGeometry::spanning({-15, 15, -15, 15}, 31, 31);
  const LocalEstimates est = constant_estimates(g, 3.0, 2.0, 0.1);
  const MultiresLattice lattice = build_lattice(table.config);
  EncodeReport report;
  const LKModel model = encode_nonstationary(est, table, lattice, 2, &report);
  CHECK(report.clamped_nodes == 0);
  CHECK(report.clamped_boxes == 0);
  const double a = table.lookup(3.0).a;
  for (int l = 0; l < model.levels(); ++l) {
    for (double v : model.a_field(l)) CHECK(v == a);
  }
  CHECK(model.tau()({1.0, 2.0}) == Approx(0.1));
  const auto locs = g.locations();
  const auto sl = model.sigma_levels_at(locs);
  for (std::size_t i = 0; i < locs.size(); i += 37) {
    double total = 0.0;
    for (const auto& level : sl) total += level[i] * level[i];
    CHECK(std::abs(total - 4.0) <= 1e-8);
    CHECK(lk_covariance(model, locs[i], locs[i]) == Approx(4.0 + 0.01).epsilon(1e-8));
  }
  // Round trip against the target Matern.
  std::vector<Point> targets;
  const auto d = calibration_distances(3.0, 40);
  for (double x : d) targets.push_back({x, 0.0});
  const auto curve = correlation_curve(model, {0, 0}, targets);
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < d.size(); ++k) {
    const double m = matern_correlation(d[k], 3.0, 1.0);
    num += std::pow(curve[k].correlation - m, 2);
    den += m * m;
  }
  const double recorded = std::max(table.entries[0].rel_rmse, table.entries[1].rel_rmse);
  CHECK(std::sqrt(num / den) <= 2.0 * recorded + 0.01);
}

TEST_CASE("encoding varying and out-of-range estimates") {
  const CalibrationTable& table = shared_table();
  const GridGeometry g = GridGeometry::spanning({-15, 15, -15, 15}, 16, 16);
  LocalEstimates est = constant_estimates(g, 3.0, 1.0, 0.2);
  for (std::size_t i = 0; i < g.size(); ++i) {
    est.theta[i] = g.point(i).x < 0 ? 0.5 : 20.0;
    est.sigma[i] = 1.0 + 0.05 * static_cast<double>(i % 7);
  }
  const MultiresLattice lattice = build_lattice(table.config);
  EncodeReport report;
  const LKModel model = encode_nonstationary(est, table, lattice, 1, &report);
  CHECK(report.clamped_boxes == g.size());
  CHECK(report.clamped_nodes > 0);
  for (int l = 0; l < model.levels(); ++l) {
    for (double v : model.a_field(l)) {
      CHECK(v > 4.0);
      CHECK(v <= table.entries[0].a);
      CHECK(v >= table.entries[1].a);
    }
  }
  const auto locs = g.locations();
  const auto sl = model.sigma_levels_at(locs);
  for (std::size_t i = 0; i < locs.size(); ++i) {
    double total = 0.0;
    for (const auto& level : sl) total += level[i] * level[i];
    CHECK(std::abs(total - est.sigma[i] * est.sigma[i]) <= 1e-8);
  }

  est.theta[5] = std::numeric_limits<double>::quiet_NaN();
  try {
    encode_nonstationary(est, table, lattice);
    FAIL("expected an encoding error");
  } catch (const Error& err) {
    CHECK(err.category() == ErrorCategory::kEncoding);
    CHECK(std::string(err.what()).find("(-5, -15)") != std::string::npos);
  }
  LatticeConfig other = table.config;
  other.levels = 2;
  CHECK_THROWS_AS(encode_nonstationary(constant_estimates(g, 3, 1, 0.1), table, build_lattice(other)), Error);
}
