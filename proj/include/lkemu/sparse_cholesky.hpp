#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <vector>

namespace lkemu {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor, int>;
using SparseVector = Eigen::SparseVector<double, Eigen::ColMajor, int>;

// Fill-reducing (AMD) sparse Cholesky factor P Q P^T = L L^T of a symmetric
// positive definite matrix. The object owns only L and the permutation, so it
// is a regular value type; all solves are const and safe to run concurrently.
class SparseCholesky {
 public:
  SparseCholesky() = default;
  explicit SparseCholesky(const SparseMatrix& q);

  Eigen::Index size() const { return lower_.rows(); }

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const;

  // log |Q| = 2 sum log diag(L).
  double log_determinant() const;

  // w = L^{-1} P b for sparse b, computed only over the elimination-tree reach
  // of b's nonzeros. Then b^T Q^{-1} c = w_b . w_c.
  SparseVector half_solve(const SparseVector& b) const;
  double inverse_quadratic(const SparseVector& b) const;

  const SparseMatrix& lower() const { return lower_; }
  const Eigen::VectorXi& permutation() const { return perm_; }

  // P^T L L^T P, for residual checks.
  SparseMatrix reconstruct() const;

 private:
  SparseMatrix lower_;
  Eigen::VectorXi perm_;  // (P b)[perm_[i]] = b[i]
  std::vector<int> parent_;
};

}  // namespace lkemu
