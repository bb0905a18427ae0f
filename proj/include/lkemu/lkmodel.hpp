#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "lkemu/geometry.hpp"
#include "lkemu/lattice.hpp"
#include "lkemu/sar.hpp"

namespace lkemu {

// M complete replicate fields observed on a grid; values is N x M.
struct ReplicateField {
  GridGeometry grid;
  Eigen::MatrixXd values;
  std::optional<Eigen::MatrixXd> covariates;  // N x p

  std::size_t locations() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t replicates() const { return static_cast<std::size_t>(values.cols()); }
  void validate() const;
};

// Multiresolution LatticeKrig process: independent levels, each a normalized
// compact basis expansion with SAR coefficients, plus a nugget that enters
// only the observation model. Immutable once built; safe to share.
class LKModel {
 public:
  LKModel(MultiresLattice lattice, std::vector<std::vector<double>> a_fields,
          std::vector<Surface> sigma_levels, Surface tau);

  // Constant a on every node; sigma_l^2 proportional to variance_weights
  // with total marginal variance sigma^2.
  static LKModel stationary(MultiresLattice lattice, double a,
                            std::span<const double> variance_weights, double sigma = 1.0,
                            double tau = 0.0);

  const MultiresLattice& lattice() const { return lattice_; }
  int levels() const { return lattice_.levels(); }
  const SarLevel& sar(int level) const { return (*sar_)[static_cast<std::size_t>(level)]; }
  const std::vector<double>& a_field(int level) const {
    return a_fields_[static_cast<std::size_t>(level)];
  }
  const Surface& sigma_level(int level) const {
    return sigma_levels_[static_cast<std::size_t>(level)];
  }
  const Surface& tau() const { return tau_; }

  std::vector<std::vector<double>> sigma_levels_at(std::span<const Point> locations) const;
  std::vector<SparseCholesky> factors() const;

  // Normalized basis at the given locations.
  BasisMatrix basis(std::span<const Point> locations) const;

 private:
  MultiresLattice lattice_;
  std::vector<std::vector<double>> a_fields_;
  std::vector<Surface> sigma_levels_;
  Surface tau_;
  std::shared_ptr<const std::vector<SarLevel>> sar_;
};

// Latent covariance plus tau(s)^2 when s == s_prime.
double lk_covariance(const LKModel& model, Point s, Point s_prime);

// Latent (nugget-free) covariance matrix over a point set.
Eigen::MatrixXd lk_covariance_matrix(const LKModel& model, std::span<const Point> points);

struct SimulateOptions {
  bool include_nugget = true;
  int workers = 1;
};

// N x n matrix of realizations. Column r depends only on (seed, r).
Eigen::MatrixXd simulate(const LKModel& model, std::span<const Point> locations,
                         std::size_t n_realizations, std::uint64_t seed,
                         const SimulateOptions& options = {});

struct LikelihoodOptions {
  // Profile a common multiplier of all sigma_l and tau analytically.
  bool profile_scale = false;
};

struct LikelihoodResult {
  double log_likelihood = 0.0;
  double log_determinant = 0.0;  // log |K + R|
  double quadratic_form = 0.0;   // sum over replicates
  double variance_scale = 1.0;   // profiled multiplier on K + R
  Eigen::VectorXd fixed_effects;
};

// Replicate log-likelihood with K = Phi Q^{-1} Phi^T, R = diag(tau^2),
// evaluated through Sherman-Morrison-Woodbury and Sylvester's determinant
// identity; fixed effects are replaced by their GLS estimate.
LikelihoodResult log_likelihood(const LKModel& model, const ReplicateField& data,
                                const LikelihoodOptions& options = {});

struct CurvePoint {
  Point target;
  double distance = 0.0;
  double correlation = 0.0;
};

std::vector<CurvePoint> correlation_curve(const LKModel& model, Point center,
                                          std::span<const Point> targets);

// Correlation of each level on its own between center and targets
// (targets x levels). Levels with zero variance give zero.
Eigen::MatrixXd level_correlations(const LKModel& model, Point center,
                                   std::span<const Point> targets);

}  // namespace lkemu
