#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "lkemu/error.hpp"
#include "lkemu/kernels.hpp"
#include "support/oracles.hpp"

using namespace lkemu;
using doctest::Approx;

TEST_CASE("wendland_c4 values") {
  CHECK(wendland_c4(0.0) == 1.0);
  CHECK(wendland_c4(1.0) == 0.0);
  CHECK(wendland_c4(2.0) == 0.0);
  // (1/2)^6 (35/4 + 9 + 3) / 3
  CHECK(wendland_c4(0.5) == Approx(0.10807291666666667).epsilon(1e-14));
  CHECK_THROWS_AS(wendland_c4(-0.1), Error);
}

TEST_CASE("wendland_c4 is nonnegative and monotone on a fine grid") {
  double prev = wendland_c4(0.0);
  for (int i = 1; i <= 1000; ++i) {
    const double d = i / 1000.0;
    const double v = wendland_c4(d);
    CHECK(v >= 0.0);
    CHECK(v <= prev);
    CHECK(v == Approx(testing::wendland_reference(d)).epsilon(1e-13));
    prev = v;
  }
}

TEST_CASE("wendland_c4 Gram matrices are positive definite") {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 10 + 4 * trial;
    std::vector<std::pair<double, double>> pts(static_cast<std::size_t>(n));
    for (auto& p : pts) p = {u(gen), u(gen)};
    Eigen::MatrixXd g(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const auto [xi, yi] = pts[static_cast<std::size_t>(i)];
        const auto [xj, yj] = pts[static_cast<std::size_t>(j)];
        g(i, j) = wendland_c4(std::hypot(xi - xj, yi - yj));
      }
    }
    CHECK(testing::min_eigen_ratio(g) >= -1e-10);
  }
}

TEST_CASE("matern_correlation special values") {
  CHECK(matern_correlation(0.0, 2.0, 1.0) == 1.0);
  CHECK(matern_correlation(2.0, 2.0, 0.5) == Approx(std::exp(-1.0)).epsilon(1e-14));
  // K_1(1) = 0.6019072301972346
  CHECK(matern_correlation(3.0, 3.0, 1.0) == Approx(0.6019072301972346).epsilon(1e-12));
  CHECK(matern_correlation(1.0, 1.0, 1.0) ==
        Approx(testing::matern_by_integral(1.0, 1.0, 1.0)).epsilon(1e-10));
  CHECK_THROWS_AS(matern_correlation(1.0, 0.0, 1.0), Error);
  CHECK_THROWS_AS(matern_correlation(1.0, 1.0, -1.0), Error);
}

TEST_CASE("matern_correlation agrees with the integral representation") {
  for (double nu : {0.5, 1.0, 1.5, 2.0, 2.7}) {
    for (double d : {0.01, 0.3, 1.0, 2.5, 7.0}) {
      CHECK(matern_correlation(d, 1.3, nu) ==
            Approx(testing::matern_by_integral(d, 1.3, nu)).epsilon(1e-9));
    }
  }
}

TEST_CASE("matern_correlation exponential case and monotonicity") {
  for (int i = 0; i <= 200; ++i) {
    const double d = i * 0.05;
    const double expected = std::exp(-d / 1.7);
    CHECK(std::abs(matern_correlation(d, 1.7, 0.5) - expected) <= 1e-12 * expected);
  }
  for (double nu : {0.5, 1.0, 2.0}) {
    const double theta = 2.0;
    double prev = 1.0;
    CHECK(matern_correlation(1e-9, theta, nu) == Approx(1.0).epsilon(1e-6));
    for (int i = 1; i <= 400; ++i) {
      const double v = matern_correlation(i * 10.0 * theta / 400.0, theta, nu);
      CHECK(v < prev);
      prev = v;
    }
  }
}

TEST_CASE("matern_covariance") {
  CHECK(matern_covariance(0.0, {2.0, 1.0, 1.0, 0.0}) == Approx(4.0));
  CHECK(matern_covariance(0.0, {2.0, 1.0, 1.0, 0.5}) == Approx(4.25));
  CHECK(matern_covariance(1.0, {1.0, 1.0, 0.5, 0.0}) == Approx(0.36787944117144233));
  CHECK(matern_covariance(1.0, {1.0, 1.0, 0.5, 0.3}) == Approx(0.36787944117144233));
  CHECK_THROWS_AS(matern_covariance(1.0, {-1.0, 1.0, 1.0, 0.0}), Error);
}

TEST_CASE("convolution kernel for a smoothness-2 target is the exponential") {
  const ConvolutionKernel psi(2.0);
  CHECK(psi.kernel_smoothness() == 0.5);
  CHECK(psi(0.0) == Approx(std::sqrt(2.0 / std::numbers::pi)));
  const double half = std::log(2.0);
  CHECK(psi(half) == Approx(0.5 * psi(0.0)).epsilon(1e-14));
  CHECK(convolution_kernel_psi(1.0, 2.0) == Approx(psi(0.0) * std::exp(-1.0)));
  CHECK_THROWS_AS(ConvolutionKernel(1.0), Error);
  try {
    ConvolutionKernel k(1.0);
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::kUnsupported);
  }
}

TEST_CASE("convolution kernel normalization is numeric for other targets") {
  // Square integral of psi over the plane must be one.
  for (double nu : {2.0, 3.0, 4.0}) {
    const ConvolutionKernel psi(nu);
    double sum = 0.0;
    const double h = 1e-3;
    for (int i = 0; i < 60000; ++i) {
      const double r = (i + 0.5) * h;
      sum += 2 * std::numbers::pi * r * psi(r) * psi(r) * h;
    }
    CHECK(sum == Approx(1.0).epsilon(1e-5));
    CHECK(psi.tail_mass(0.0) == Approx(1.0).epsilon(1e-8));
    CHECK(psi.tail_mass(5.0) < 1e-2);
  }
}
