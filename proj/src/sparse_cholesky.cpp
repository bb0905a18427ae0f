#include "lkemu/sparse_cholesky.hpp"

#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>

#include "lkemu/error.hpp"

namespace lkemu {

SparseCholesky::SparseCholesky(const SparseMatrix& q) {
  if (q.rows() != q.cols()) {
    fail(ErrorCategory::kConfiguration, "sparse_cholesky: matrix is not square");
  }
  Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> llt(q);
  if (llt.info() != Eigen::Success) {
    fail(ErrorCategory::kFactorization,
         "sparse_cholesky: matrix is not symmetric positive definite");
  }
  lower_ = llt.matrixL();
  lower_.makeCompressed();
  const auto n = q.rows();
  if (llt.permutationP().size() == n) {
    perm_ = llt.permutationP().indices();
  } else {
    perm_ = Eigen::VectorXi::LinSpaced(n, 0, static_cast<int>(n) - 1);
  }
  parent_.assign(static_cast<std::size_t>(n), -1);
  for (Eigen::Index j = 0; j < n; ++j) {
    const int begin = lower_.outerIndexPtr()[j];
    const int end = lower_.outerIndexPtr()[j + 1];
    if (end - begin > 1) parent_[static_cast<std::size_t>(j)] = lower_.innerIndexPtr()[begin + 1];
  }
}

Eigen::VectorXd SparseCholesky::solve(const Eigen::VectorXd& b) const {
  Eigen::VectorXd y(b.size());
  for (Eigen::Index i = 0; i < b.size(); ++i) y[perm_[i]] = b[i];
  lower_.triangularView<Eigen::Lower>().solveInPlace(y);
  lower_.transpose().triangularView<Eigen::Upper>().solveInPlace(y);
  Eigen::VectorXd x(b.size());
  for (Eigen::Index i = 0; i < b.size(); ++i) x[i] = y[perm_[i]];
  return x;
}

Eigen::MatrixXd SparseCholesky::solve(const Eigen::MatrixXd& b) const {
  Eigen::MatrixXd x(b.rows(), b.cols());
  for (Eigen::Index c = 0; c < b.cols(); ++c) x.col(c) = solve(Eigen::VectorXd(b.col(c)));
  return x;
}

double SparseCholesky::log_determinant() const {
  double s = 0.0;
  for (Eigen::Index j = 0; j < lower_.cols(); ++j) {
    s += std::log(lower_.valuePtr()[lower_.outerIndexPtr()[j]]);
  }
  return 2.0 * s;
}

namespace {

struct Workspace {
  std::vector<double> x;
  std::vector<unsigned> stamp;
  unsigned generation = 0;
  std::vector<int> reach;

  void prepare(std::size_t n) {
    if (x.size() != n) {
      x.assign(n, 0.0);
      stamp.assign(n, 0);
      generation = 0;
    }
    if (++generation == 0) {
      std::fill(stamp.begin(), stamp.end(), 0);
      generation = 1;
    }
    reach.clear();
  }
};

}  // namespace

SparseVector SparseCholesky::half_solve(const SparseVector& b) const {
  const auto n = static_cast<std::size_t>(size());
  if (static_cast<std::size_t>(b.size()) != n) {
    fail(ErrorCategory::kConfiguration, "half_solve: dimension mismatch");
  }
  thread_local Workspace ws;
  ws.prepare(n);
  for (SparseVector::InnerIterator it(b); it; ++it) {
    int j = perm_[it.index()];
    ws.x[static_cast<std::size_t>(j)] = it.value();
    while (j >= 0 && ws.stamp[static_cast<std::size_t>(j)] != ws.generation) {
      ws.stamp[static_cast<std::size_t>(j)] = ws.generation;
      ws.reach.push_back(j);
      j = parent_[static_cast<std::size_t>(j)];
    }
  }
  // A parent always has a larger index than its children.
  std::sort(ws.reach.begin(), ws.reach.end());
  const int* outer = lower_.outerIndexPtr();
  const int* inner = lower_.innerIndexPtr();
  const double* values = lower_.valuePtr();
  for (int j : ws.reach) {
    double& xj = ws.x[static_cast<std::size_t>(j)];
    xj /= values[outer[j]];
    if (xj == 0.0) continue;
    for (int k = outer[j] + 1; k < outer[j + 1]; ++k) {
      ws.x[static_cast<std::size_t>(inner[k])] -= values[k] * xj;
    }
  }
  SparseVector w(static_cast<Eigen::Index>(n));
  w.reserve(static_cast<Eigen::Index>(ws.reach.size()));
  for (int j : ws.reach) {
    double& xj = ws.x[static_cast<std::size_t>(j)];
    if (xj != 0.0) w.insertBack(j) = xj;
    xj = 0.0;
  }
  return w;
}

double SparseCholesky::inverse_quadratic(const SparseVector& b) const {
  return half_solve(b).squaredNorm();
}

SparseMatrix SparseCholesky::reconstruct() const {
  SparseMatrix llt = lower_ * SparseMatrix(lower_.transpose());
  Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> p(perm_);
  SparseMatrix q = p.transpose() * llt * p;
  return q;
}

}  // namespace lkemu
