#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lkemu/lattice.hpp"
#include "lkemu/sparse_cholesky.hpp"

namespace lkemu {

// SAR matrix B: a_k on the diagonal, -1 at each of the up to four nearest
// lattice neighbors. Throws a stability error if any a_k <= 4.
SparseMatrix build_sar(const LevelGrid& grid, std::span<const double> a_field);

// Q = B^T B, symmetrized so that Q(i, j) and Q(j, i) are bitwise equal.
SparseMatrix precision(const SparseMatrix& b);

// kappa = 1 / sqrt(a - 4).
double a_to_kappa(double a);

// SAR matrices and the factor of Q for one lattice level.
struct SarLevel {
  SparseMatrix b;
  SparseMatrix q;
  SparseCholesky factor;

  SarLevel() = default;
  SarLevel(const LevelGrid& grid, std::span<const double> a_field);
};

// Solves B c = v through Q c = B^T v, so Var(c) = Q^{-1}.
Eigen::VectorXd simulate_coefficients(const SarLevel& level, const Eigen::VectorXd& noise);
Eigen::VectorXd simulate_coefficients(const SarLevel& level, std::uint64_t seed,
                                      std::uint64_t index = 0);

}  // namespace lkemu
