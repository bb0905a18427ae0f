#include "lkemu/sar.hpp"

#include <cmath>
#include <sstream>

#include "lkemu/error.hpp"
#include "lkemu/random.hpp"

namespace lkemu {

namespace {

void check_stable(double a, std::size_t i, std::size_t j) {
  if (!(a > 4.0)) {
    std::ostringstream msg;
    msg << "SAR center a = " << a << " at node (" << i << ", " << j
        << ") must exceed 4 for a stable process";
    fail(ErrorCategory::kStability, msg.str());
  }
}

}  // namespace

SparseMatrix build_sar(const LevelGrid& grid, std::span<const double> a_field) {
  if (a_field.size() != grid.size()) {
    fail(ErrorCategory::kConfiguration, "build_sar: a-field has " +
                                            std::to_string(a_field.size()) +
                                            " values for " + std::to_string(grid.size()) +
                                            " nodes");
  }
  std::vector<Eigen::Triplet<double, int>> triplets;
  triplets.reserve(grid.size() * 5);
  for (std::size_t j = 0; j < grid.ny; ++j) {
    for (std::size_t i = 0; i < grid.nx; ++i) {
      const auto k = static_cast<int>(j * grid.nx + i);
      check_stable(a_field[static_cast<std::size_t>(k)], i, j);
      triplets.emplace_back(k, k, a_field[static_cast<std::size_t>(k)]);
      if (i > 0) triplets.emplace_back(k, k - 1, -1.0);
      if (i + 1 < grid.nx) triplets.emplace_back(k, k + 1, -1.0);
      if (j > 0) triplets.emplace_back(k, k - static_cast<int>(grid.nx), -1.0);
      if (j + 1 < grid.ny) triplets.emplace_back(k, k + static_cast<int>(grid.nx), -1.0);
    }
  }
  const auto n = static_cast<Eigen::Index>(grid.size());
  SparseMatrix b(n, n);
  b.setFromTriplets(triplets.begin(), triplets.end());
  b.makeCompressed();
  return b;
}

SparseMatrix precision(const SparseMatrix& b) {
  if (b.rows() != b.cols()) fail(ErrorCategory::kConfiguration, "precision: B is not square");
  SparseMatrix q = SparseMatrix(b.transpose()) * b;
  SparseMatrix qt = q.transpose();
  SparseMatrix sym = 0.5 * (q + qt);
  sym.makeCompressed();
  return sym;
}

double a_to_kappa(double a) {
  if (!(a > 4.0)) fail(ErrorCategory::kStability, "a_to_kappa: a must exceed 4");
  return 1.0 / std::sqrt(a - 4.0);
}

SarLevel::SarLevel(const LevelGrid& grid, std::span<const double> a_field)
    : b(build_sar(grid, a_field)), q(precision(b)), factor(q) {}

Eigen::VectorXd simulate_coefficients(const SarLevel& level, const Eigen::VectorXd& noise) {
  if (noise.size() != level.b.rows()) {
    fail(ErrorCategory::kConfiguration, "simulate_coefficients: noise length mismatch");
  }
  Eigen::VectorXd rhs = level.b.transpose() * noise;
  Eigen::VectorXd c = level.factor.solve(rhs);
  if (!c.allFinite()) fail(ErrorCategory::kNumerical, "simulate_coefficients: singular solve");
  return c;
}

Eigen::VectorXd simulate_coefficients(const SarLevel& level, std::uint64_t seed,
                                      std::uint64_t index) {
  Eigen::VectorXd v(level.b.rows());
  auto gen = make_stream(seed, Stream::kCoefficients, index);
  fill_standard_normal(gen, std::span<double>(v.data(), static_cast<std::size_t>(v.size())));
  return simulate_coefficients(level, v);
}

}  // namespace lkemu
