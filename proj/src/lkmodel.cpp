#include "lkemu/lkmodel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include <Eigen/Cholesky>

#include "lkemu/error.hpp"
#include "lkemu/parallel.hpp"
#include "lkemu/random.hpp"

namespace lkemu {

void ReplicateField::validate() const {
  if (values.rows() != static_cast<Eigen::Index>(grid.size())) {
    fail(ErrorCategory::kConfiguration,
         "replicate field has " + std::to_string(values.rows()) + " rows for a grid of " +
             std::to_string(grid.size()));
  }
  if (values.cols() < 1) fail(ErrorCategory::kConfiguration, "replicate field has no replicates");
  if (!values.allFinite()) {
    fail(ErrorCategory::kConfiguration, "replicate field has missing or non-finite entries");
  }
  if (covariates && covariates->rows() != values.rows()) {
    fail(ErrorCategory::kConfiguration, "covariate matrix row count does not match the data");
  }
}

LKModel::LKModel(MultiresLattice lattice, std::vector<std::vector<double>> a_fields,
                 std::vector<Surface> sigma_levels, Surface tau)
    : lattice_(std::move(lattice)),
      a_fields_(std::move(a_fields)),
      sigma_levels_(std::move(sigma_levels)),
      tau_(std::move(tau)) {
  const auto n_levels = static_cast<std::size_t>(lattice_.levels());
  if (a_fields_.size() != n_levels || sigma_levels_.size() != n_levels) {
    fail(ErrorCategory::kConfiguration, "LKModel: per-level inputs do not match the lattice");
  }
  auto levels = std::make_shared<std::vector<SarLevel>>();
  levels->reserve(n_levels);
  for (std::size_t l = 0; l < n_levels; ++l) {
    levels->emplace_back(lattice_.grids[l], a_fields_[l]);
  }
  sar_ = std::move(levels);
}

LKModel LKModel::stationary(MultiresLattice lattice, double a,
                            std::span<const double> variance_weights, double sigma, double tau) {
  const auto n_levels = static_cast<std::size_t>(lattice.levels());
  if (variance_weights.size() != n_levels) {
    fail(ErrorCategory::kConfiguration, "stationary LKModel: one weight per level required");
  }
  const double total = std::accumulate(variance_weights.begin(), variance_weights.end(), 0.0);
  if (!(total > 0) || std::any_of(variance_weights.begin(), variance_weights.end(),
                                  [](double w) { return w < 0; })) {
    fail(ErrorCategory::kParameter, "stationary LKModel: weights must be nonnegative, not all 0");
  }
  std::vector<std::vector<double>> a_fields;
  std::vector<Surface> sigmas;
  for (std::size_t l = 0; l < n_levels; ++l) {
    a_fields.emplace_back(lattice.grids[l].size(), a);
    sigmas.push_back(Surface::constant(sigma * std::sqrt(variance_weights[l] / total)));
  }
  return LKModel(std::move(lattice), std::move(a_fields), std::move(sigmas),
                 Surface::constant(tau));
}

std::vector<std::vector<double>> LKModel::sigma_levels_at(std::span<const Point> locations) const {
  std::vector<std::vector<double>> out;
  for (const auto& s : sigma_levels_) out.push_back(s.evaluate(locations));
  return out;
}

std::vector<SparseCholesky> LKModel::factors() const {
  std::vector<SparseCholesky> out;
  for (const auto& level : *sar_) out.push_back(level.factor);
  return out;
}

BasisMatrix LKModel::basis(std::span<const Point> locations) const {
  const auto raw = basis_matrix(locations, lattice_);
  const auto sig = sigma_levels_at(locations);
  std::vector<SparseCholesky> fac = factors();
  return normalize_basis(raw, fac, sig, locations);
}

namespace {

// Per-level vectors w_l(s) with latent Cov(s, s') = sum_l w_l(s) . w_l(s').
std::vector<SparseVector> embed(const LKModel& model, Point s) {
  const std::array<Point, 1> loc{s};
  const BasisMatrix raw = basis_matrix(loc, model.lattice());
  std::vector<SparseVector> out;
  for (int l = 0; l < model.levels(); ++l) {
    const double sigma = model.sigma_level(l)(s);
    const SparseRowMatrix& phi = raw.levels[static_cast<std::size_t>(l)];
    SparseVector row(phi.cols());
    for (SparseRowMatrix::InnerIterator it(phi, 0); it; ++it) row.insertBack(it.index()) = it.value();
    if (sigma == 0.0) {
      out.emplace_back(phi.cols());
      continue;
    }
    SparseVector w = model.sar(l).factor.half_solve(row);
    const double omega = w.norm();
    if (!(omega > 0)) {
      fail(ErrorCategory::kCoverage, "point (" + std::to_string(s.x) + ", " +
                                         std::to_string(s.y) + ") is outside level-" +
                                         std::to_string(l + 1) + " basis coverage");
    }
    w *= sigma / omega;
    out.push_back(std::move(w));
  }
  return out;
}

double latent_covariance(const std::vector<SparseVector>& a, const std::vector<SparseVector>& b) {
  double c = 0.0;
  for (std::size_t l = 0; l < a.size(); ++l) c += a[l].dot(b[l]);
  return c;
}

}  // namespace

double lk_covariance(const LKModel& model, Point s, Point s_prime) {
  const auto ws = embed(model, s);
  double c = latent_covariance(ws, s == s_prime ? ws : embed(model, s_prime));
  if (s == s_prime) {
    const double tau = model.tau()(s);
    c += tau * tau;
  }
  return c;
}

Eigen::MatrixXd lk_covariance_matrix(const LKModel& model, std::span<const Point> points) {
  std::vector<std::vector<SparseVector>> w;
  w.reserve(points.size());
  for (const auto& p : points) w.push_back(embed(model, p));
  const auto n = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      k(i, j) = latent_covariance(w[static_cast<std::size_t>(i)], w[static_cast<std::size_t>(j)]);
      k(j, i) = k(i, j);
    }
  }
  return k;
}

Eigen::MatrixXd simulate(const LKModel& model, std::span<const Point> locations,
                         std::size_t n_realizations, std::uint64_t seed,
                         const SimulateOptions& options) {
  const auto n = static_cast<Eigen::Index>(locations.size());
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(n_realizations));
  if (n_realizations == 0 || locations.empty()) return out;
  // Basis and factors are built once and shared by every realization.
  const BasisMatrix phi = model.basis(locations);
  const std::vector<double> tau = model.tau().evaluate(locations);
  parallel_for(n_realizations, options.workers, [&](std::size_t r) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
    for (int l = 0; l < model.levels(); ++l) {
      const SarLevel& level = model.sar(l);
      Eigen::VectorXd v(level.b.rows());
      auto gen = make_stream(seed, Stream::kCoefficients, r, static_cast<std::uint64_t>(l));
      fill_standard_normal(gen, std::span<double>(v.data(), static_cast<std::size_t>(v.size())));
      g += phi.levels[static_cast<std::size_t>(l)] * simulate_coefficients(level, v);
    }
    if (options.include_nugget) {
      Eigen::VectorXd e(n);
      auto gen = make_stream(seed, Stream::kNugget, r);
      fill_standard_normal(gen, std::span<double>(e.data(), static_cast<std::size_t>(e.size())));
      for (Eigen::Index i = 0; i < n; ++i) g[i] += tau[static_cast<std::size_t>(i)] * e[i];
    }
    out.col(static_cast<Eigen::Index>(r)) = g;
  });
  return out;
}

namespace {

// Applies (Phi Q^{-1} Phi^T + R)^{-1} via Sherman-Morrison-Woodbury.
class WoodburySolver {
 public:
  WoodburySolver(const LKModel& model, const BasisMatrix& phi, const Eigen::VectorXd& r_diag)
      : r_inv_(r_diag.cwiseInverse()) {
    const auto n = static_cast<Eigen::Index>(phi.rows());
    Eigen::Index m = 0;
    for (const auto& level : phi.levels) m += level.cols();
    std::vector<Eigen::Triplet<double, int>> phi_t;
    std::vector<Eigen::Triplet<double, int>> q_t;
    Eigen::Index offset = 0;
    log_det_q_ = 0.0;
    for (int l = 0; l < model.levels(); ++l) {
      const auto& level = phi.levels[static_cast<std::size_t>(l)];
      for (Eigen::Index i = 0; i < level.outerSize(); ++i) {
        for (SparseRowMatrix::InnerIterator it(level, i); it; ++it) {
          phi_t.emplace_back(static_cast<int>(i), static_cast<int>(offset + it.index()),
                             it.value());
        }
      }
      const SparseMatrix& q = model.sar(l).q;
      for (Eigen::Index k = 0; k < q.outerSize(); ++k) {
        for (SparseMatrix::InnerIterator it(q, k); it; ++it) {
          q_t.emplace_back(static_cast<int>(offset + it.row()), static_cast<int>(offset + it.col()),
                           it.value());
        }
      }
      log_det_q_ += model.sar(l).factor.log_determinant();
      offset += level.cols();
    }
    phi_ = SparseMatrix(n, m);
    phi_.setFromTriplets(phi_t.begin(), phi_t.end());
    SparseMatrix q_block(m, m);
    q_block.setFromTriplets(q_t.begin(), q_t.end());
    SparseMatrix phi_t_rinv = SparseMatrix(phi_.transpose()) * r_inv_.asDiagonal();
    SparseMatrix g = q_block + SparseMatrix(phi_t_rinv * phi_);
    SparseMatrix gt = g.transpose();
    g = 0.5 * (g + gt);
    g_factor_ = SparseCholesky(g);
    log_det_ = g_factor_.log_determinant() - log_det_q_ + r_diag.array().log().sum();
  }

  Eigen::MatrixXd apply_inverse(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd rx = r_inv_.asDiagonal() * x;
    Eigen::MatrixXd inner = g_factor_.solve(Eigen::MatrixXd(phi_.transpose() * rx));
    return rx - r_inv_.asDiagonal() * (phi_ * inner);
  }

  double log_determinant() const { return log_det_; }

 private:
  Eigen::VectorXd r_inv_;
  SparseMatrix phi_;
  SparseCholesky g_factor_;
  double log_det_q_ = 0.0;
  double log_det_ = 0.0;
};

}  // namespace

LikelihoodResult log_likelihood(const LKModel& model, const ReplicateField& data,
                                const LikelihoodOptions& options) {
  data.validate();
  const std::vector<Point> locations = data.grid.locations();
  const auto n = static_cast<Eigen::Index>(locations.size());
  const auto m = static_cast<double>(data.replicates());
  Eigen::VectorXd r_diag(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double tau = model.tau()(locations[static_cast<std::size_t>(i)]);
    r_diag[i] = tau * tau;
    if (!(r_diag[i] > 0)) {
      fail(ErrorCategory::kNumerical,
           "indefinite system: the nugget must be positive at every data location");
    }
  }
  const BasisMatrix phi = model.basis(locations);
  const WoodburySolver solver(model, phi, r_diag);

  LikelihoodResult result;
  Eigen::MatrixXd residual = data.values;
  if (data.covariates && data.covariates->cols() > 0) {
    const Eigen::MatrixXd& z = *data.covariates;
    const Eigen::VectorXd y_bar = data.values.rowwise().mean();
    const Eigen::MatrixXd sinv_z = solver.apply_inverse(z);
    const Eigen::MatrixXd normal = z.transpose() * sinv_z;
    const Eigen::VectorXd rhs = sinv_z.transpose() * y_bar;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(normal);
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 0).all()) {
      fail(ErrorCategory::kNumerical, "GLS normal equations are singular");
    }
    result.fixed_effects = ldlt.solve(rhs);
    residual.colwise() -= z * result.fixed_effects;
  }
  const Eigen::MatrixXd sinv_r = solver.apply_inverse(residual);
  result.quadratic_form = (residual.array() * sinv_r.array()).sum();
  result.log_determinant = solver.log_determinant();
  const double mn = m * static_cast<double>(n);
  const double log_2pi = std::log(2.0 * std::numbers::pi);
  if (options.profile_scale) {
    result.variance_scale = result.quadratic_form / mn;
    result.log_likelihood = -0.5 * mn * (log_2pi + 1.0 + std::log(result.variance_scale)) -
                            0.5 * m * result.log_determinant;
  } else {
    result.log_likelihood =
        -0.5 * mn * log_2pi - 0.5 * m * result.log_determinant - 0.5 * result.quadratic_form;
  }
  return result;
}

std::vector<CurvePoint> correlation_curve(const LKModel& model, Point center,
                                          std::span<const Point> targets) {
  const auto wc = embed(model, center);
  const double var_c = latent_covariance(wc, wc);
  if (!(var_c > 0)) {
    fail(ErrorCategory::kNumerical, "correlation_curve: zero variance at the center");
  }
  std::vector<CurvePoint> out;
  out.reserve(targets.size());
  for (const auto& t : targets) {
    const auto wt = embed(model, t);
    const double var_t = latent_covariance(wt, wt);
    if (!(var_t > 0)) {
      fail(ErrorCategory::kNumerical, "correlation_curve: zero variance at a target");
    }
    out.push_back({t, distance(center, t), latent_covariance(wc, wt) / std::sqrt(var_c * var_t)});
  }
  return out;
}

Eigen::MatrixXd level_correlations(const LKModel& model, Point center,
                                   std::span<const Point> targets) {
  const auto wc = embed(model, center);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(targets.size()), model.levels());
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const auto wt = embed(model, targets[t]);
    for (std::size_t l = 0; l < wc.size(); ++l) {
      const double norm = wc[l].norm() * wt[l].norm();
      out(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(l)) =
          norm > 0 ? wc[l].dot(wt[l]) / norm : 0.0;
    }
  }
  return out;
}

}  // namespace lkemu
