#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "lkemu/error.hpp"
#include "lkemu/sar.hpp"
#include "support/oracles.hpp"

using namespace lkemu;
using doctest::Approx;

namespace {

LevelGrid grid(std::size_t nx, std::size_t ny) { return {nx, ny, 0.0, 0.0, 1.0}; }

std::vector<double> random_a(std::size_t n, std::uint64_t seed, double lo = 4.05, double hi = 6.0) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> a(n);
  for (auto& v : a) v = u(gen);
  return a;
}

bool exactly_symmetric(const SparseMatrix& q) {
  const SparseMatrix qt = q.transpose();
  const Eigen::MatrixXd d = Eigen::MatrixXd(q) - Eigen::MatrixXd(qt);
  return d.cwiseAbs().maxCoeff() == 0.0;
}

}  // namespace

TEST_CASE("SAR matrix on a 3x3 grid") {
  const std::vector<double> a(9, 5.0);
  const SparseMatrix b = build_sar(grid(3, 3), a);
  const Eigen::MatrixXd d = Eigen::MatrixXd(b);
  // Center node 4 has neighbors 1, 3, 5, 7.
  CHECK(d(4, 4) == 5.0);
  for (int k : {1, 3, 5, 7}) CHECK(d(4, k) == -1.0);
  CHECK(SparseRowMatrix(b).row(4).nonZeros() == 5);
  // Corner node 0 keeps a on the diagonal with two neighbors.
  CHECK(d(0, 0) == 5.0);
  CHECK(SparseRowMatrix(b).row(0).nonZeros() == 3);
  CHECK(d(0, 1) == -1.0);
  CHECK(d(0, 3) == -1.0);
  // Constant a gives a symmetric B.
  CHECK((d - d.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("SAR stability boundary") {
  std::vector<double> a(9, 5.0);
  a[7] = 4.0;
  try {
    build_sar(grid(3, 3), a);
    FAIL("expected stability error");
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::kStability);
    CHECK(std::string(e.what()).find("(1, 2)") != std::string::npos);
  }
  CHECK_THROWS_AS(build_sar(grid(3, 3), std::vector<double>(8, 5.0)), Error);
}

TEST_CASE("precision matrix Q = B^T B") {
  const SparseMatrix q = precision(build_sar(grid(3, 3), std::vector<double>(9, 5.0)));
  // 5^2 + four neighbors each contributing (-1)^2.
  CHECK(Eigen::MatrixXd(q)(4, 4) == 29.0);
  const SparseMatrix q1 = precision(build_sar(grid(1, 1), std::vector<double>(1, 5.0)));
  CHECK(Eigen::MatrixXd(q1)(0, 0) == 25.0);

  const std::vector<double> a(36, 4.5);
  const SparseMatrix b = build_sar(grid(6, 6), a);
  const Eigen::MatrixXd dense_b = Eigen::MatrixXd(b);
  const Eigen::MatrixXd expected = dense_b.transpose() * dense_b;
  CHECK((Eigen::MatrixXd(precision(b)) - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("nonstationary a keeps sparsity, symmetry and positive definiteness") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const std::size_t nx = 8 + seed, ny = 20 - seed;
    const auto a = random_a(nx * ny, seed);
    const SparseMatrix b = build_sar(grid(nx, ny), a);
    const SparseMatrix q = precision(b);
    for (Eigen::Index k = 0; k < b.rows(); ++k) {
      CHECK(SparseRowMatrix(b).row(k).nonZeros() <= 5);
      CHECK(SparseRowMatrix(q).row(k).nonZeros() <= 13);
    }
    CHECK(exactly_symmetric(q));
    CHECK(testing::min_eigen_ratio(Eigen::MatrixXd(q)) > 0.0);
  }
}

TEST_CASE("a_to_kappa") {
  CHECK(a_to_kappa(5.0) == 1.0);
  CHECK(a_to_kappa(4.1) == Approx(3.1622776601683795).epsilon(1e-12));
  CHECK_THROWS_AS(a_to_kappa(4.0), Error);
}

TEST_CASE("sparse Cholesky factor") {
  SparseMatrix eye(7, 7);
  eye.setIdentity();
  const SparseCholesky id(eye);
  CHECK(id.log_determinant() == 0.0);
  const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(7, -1, 2);
  CHECK((id.solve(x) - x).norm() == 0.0);

  const SparseMatrix q = precision(build_sar(grid(4, 4), std::vector<double>(16, 5.0)));
  const SparseCholesky f(q);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd{q});
  CHECK(f.log_determinant() == Approx(es.eigenvalues().array().log().sum()).epsilon(1e-8));

  const SparseMatrix big = precision(build_sar(grid(15, 12), random_a(180, 3)));
  const SparseCholesky fb(big);
  std::mt19937_64 gen(9);
  std::normal_distribution<double> nd;
  Eigen::VectorXd v(180);
  for (auto& e : v) e = nd(gen);
  const Eigen::VectorXd qv = big * v;
  CHECK((fb.solve(qv) - v).norm() <= 1e-10 * v.norm());
  const Eigen::MatrixXd residual = Eigen::MatrixXd(fb.reconstruct()) - Eigen::MatrixXd(big);
  CHECK(residual.cwiseAbs().maxCoeff() <= 1e-10 * Eigen::MatrixXd(big).cwiseAbs().maxCoeff());

  // Sparse half solves reproduce the dense quadratic form.
  const Eigen::MatrixXd big_inv = Eigen::MatrixXd(big).inverse();
  SparseVector s(180);
  s.insert(17) = 0.3;
  s.insert(40) = -1.2;
  s.insert(121) = 0.7;
  const Eigen::VectorXd sd = Eigen::VectorXd(s);
  CHECK(fb.inverse_quadratic(s) == Approx(sd.dot(big_inv * sd)).epsilon(1e-12));

  SparseMatrix indefinite(2, 2);
  indefinite.insert(0, 0) = 1.0;
  indefinite.insert(1, 1) = -1.0;
  try {
    SparseCholesky bad(indefinite);
    FAIL("expected factorization error");
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::kFactorization);
  }
}

TEST_CASE("coefficient simulation solves B c = v") {
  const SarLevel one(grid(1, 1), std::vector<double>(1, 5.0));
  CHECK(simulate_coefficients(one, Eigen::VectorXd::Ones(1))[0] == Approx(0.2).epsilon(1e-15));
  const SarLevel lvl(grid(5, 5), std::vector<double>(25, 5.0));
  CHECK(simulate_coefficients(lvl, Eigen::VectorXd::Zero(25)).norm() == 0.0);

  const Eigen::VectorXd c1 = simulate_coefficients(lvl, 42, 3);
  const Eigen::VectorXd c2 = simulate_coefficients(lvl, 42, 3);
  CHECK((c1 - c2).norm() == 0.0);
  CHECK((c1 - simulate_coefficients(lvl, 42, 4)).norm() > 0.0);

  const SarLevel ns(grid(7, 6), random_a(42, 8));
  std::mt19937_64 gen(2);
  std::normal_distribution<double> nd;
  Eigen::VectorXd v(42);
  for (auto& e : v) e = nd(gen);
  const Eigen::VectorXd c = simulate_coefficients(ns, v);
  CHECK((ns.b * c - v).norm() < 1e-10 * v.norm());
}

TEST_CASE("coefficient sample covariance matches the dense inverse precision") {
  const SarLevel lvl(grid(5, 5), std::vector<double>(25, 5.0));
  const Eigen::MatrixXd q_inv = Eigen::MatrixXd(lvl.q).inverse();
  const int draws = 10000;
  Eigen::MatrixXd samples(25, draws);
  for (int r = 0; r < draws; ++r) samples.col(r) = simulate_coefficients(lvl, 7, static_cast<std::uint64_t>(r));
  int failures = 0;
  for (int i = 0; i < 25; ++i) {
    for (int j = 0; j <= i; ++j) {
      const Eigen::ArrayXd prod = samples.row(i).array() * samples.row(j).array();
      const double mean = prod.mean();
      const double se = std::sqrt((prod - mean).square().sum() / (draws - 1) / draws);
      if (std::abs(mean - q_inv(i, j)) > 4 * se) ++failures;
    }
  }
  CHECK(failures == 0);
}
