#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "lkemu/geometry.hpp"
#include "lkemu/kernels.hpp"

namespace lkemu {

// Spatially varying scalar parameter (range, standard deviation, nugget).
class ScalarField {
 public:
  enum class Kind { kConstant, kPiecewiseConstant, kLinear, kTable };

  static ScalarField constant(double value);
  // left_value for x <= split, right_value for x > split.
  static ScalarField step_x(double left_value, double right_value, double split = 0.0);
  // Linear in x between (x_left, at_left) and (x_right, at_right), constant
  // beyond.
  static ScalarField linear_x(double at_left, double at_right, double x_left, double x_right);
  static ScalarField table(Surface surface);

  double operator()(Point p) const { return eval_(p); }
  Kind kind() const { return kind_; }
  double min() const { return min_; }
  double max() const { return max_; }

 private:
  ScalarField(Kind kind, std::function<double(Point)> eval, double lo, double hi)
      : kind_(kind), eval_(std::move(eval)), min_(lo), max_(hi) {}

  Kind kind_;
  std::function<double(Point)> eval_;
  double min_;
  double max_;
};

using ThetaField = ScalarField;

// Midpoint rule on cells of side `spacing` centered at ((i + 1/2) h, (j + 1/2) h).
// Around each point s the integration box extends padding_factor * theta(s).
struct QuadratureGrid {
  double spacing = 0.1;
  double padding_factor = 8.0;
  double tolerance = 1e-3;

  // spacing = min(theta) / 8.
  static QuadratureGrid for_field(const ScalarField& theta, double cells_per_range = 8.0);
  QuadratureGrid halved() const { return {spacing / 2, padding_factor, tolerance}; }
};

// Discretized convolution covariance sigma(s) sigma(s') int H(s,u) H(s',u) du
// with H(s,u) = psi(|u - s| / theta(s)) / theta(s).
double convolution_covariance(Point s, Point s_prime, const ThetaField& theta,
                              const ScalarField& sigma, const ConvolutionKernel& psi,
                              const QuadratureGrid& quad);

// Self-normalized correlation. Throws a quadrature error if the discretized
// kernel does not integrate to one within the tolerance.
double convolution_correlation(Point s, Point s_prime, const ThetaField& theta,
                               const ConvolutionKernel& psi, const QuadratureGrid& quad);

// Kernels H(s_i, .) tabulated once per point on a shared cell lattice, so
// every covariance is a dot product of two patches.
class ConvolutionOracle {
 public:
  // Throws a quadrature error if a discretized kernel does not integrate to
  // one within the tolerance.
  ConvolutionOracle(std::span<const Point> points, const ThetaField& theta,
                    const ScalarField& sigma, const ConvolutionKernel& psi,
                    const QuadratureGrid& quad, int workers = 1);

  std::size_t size() const { return patches_.size(); }
  double covariance(std::size_t i, std::size_t j) const;
  double correlation(std::size_t i, std::size_t j) const;
  // Discretized integral of H(s_i, u)^2.
  double self_integral(std::size_t i) const { return patches_[i].mass; }
  Eigen::MatrixXd covariance_matrix(int workers = 1) const;
  Eigen::MatrixXd correlation_matrix(int workers = 1) const;
  // Correlation between point i of this set and point j of another set built
  // on the same quadrature grid.
  double cross_correlation(std::size_t i, const ConvolutionOracle& other, std::size_t j) const;

 private:
  struct Patch {
    long i0 = 0, j0 = 0, nx = 0, ny = 0;
    std::vector<double> values;
    double sigma = 1.0;
    double mass = 0.0;
  };
  double overlap(const Patch& a, const Patch& b) const;

  double cell_area_;
  std::vector<Patch> patches_;
};

// Correlations (targets x centers). Target kernels are built one at a time,
// so memory stays proportional to the number of centers.
Eigen::MatrixXd convolution_correlations(std::span<const Point> centers,
                                         std::span<const Point> targets, const ThetaField& theta,
                                         const ConvolutionKernel& psi, const QuadratureGrid& quad,
                                         int workers = 1);

Eigen::MatrixXd convolution_covariance_matrix(std::span<const Point> points,
                                              const ThetaField& theta, const ScalarField& sigma,
                                              const ConvolutionKernel& psi,
                                              const QuadratureGrid& quad, int workers = 1);

// The two nonstationary validation fields on [-24, 24]^2.
struct TestCase {
  int id = 1;
  Rect domain{-24, 24, -24, 24};
  ThetaField theta = ThetaField::constant(1.0);
  ScalarField sigma = ScalarField::constant(1.0);
  ScalarField tau = ScalarField::constant(0.0);
  double nu_target = 2.0;  // exponential kernel convolution
};

TestCase testcase(int case_id);
ThetaField testcase_theta(int case_id);

enum class RootKind { kCholesky, kSymmetric };

// N x n draws y = A^T e with A^T A = cov.
Eigen::MatrixXd dense_simulate(const Eigen::MatrixXd& cov, std::size_t n, std::uint64_t seed,
                               RootKind root = RootKind::kCholesky);

// Row `row` of the symmetric square root of a covariance matrix.
Eigen::VectorXd symmetric_root_row(const Eigen::MatrixXd& cov, Eigen::Index row);

struct LocalWeights {
  std::vector<std::size_t> indices;  // grid indices of the window
  Eigen::VectorXd weights;
};

// Window around grid point (ix, iy), shifted inward at the grid edges, with
// the stationary Matern covariance built from the parameters at that point.
LocalWeights local_weights(const GridGeometry& grid, std::size_t ix, std::size_t iy, int window,
                           const MaternParams& params);

// Local moving-window simulation. Weights are computed once; each
// realization draws one shared white-noise vector.
class LocalSimulator {
 public:
  LocalSimulator(const ThetaField& theta, const ScalarField& sigma, const ScalarField& tau,
                 const GridGeometry& grid, int window, double nu = 1.0, int workers = 1);

  Eigen::VectorXd simulate(std::uint64_t seed, std::uint64_t realization = 0) const;
  Eigen::VectorXd apply(const Eigen::VectorXd& noise) const;
  const LocalWeights& weights(std::size_t k) const { return weights_[k]; }
  const GridGeometry& grid() const { return grid_; }

 private:
  GridGeometry grid_;
  std::vector<LocalWeights> weights_;
};

Eigen::VectorXd local_simulate(const ThetaField& theta, const ScalarField& sigma,
                               const ScalarField& tau, const GridGeometry& grid, int window,
                               std::uint64_t seed, double nu = 1.0, int workers = 1,
                               std::uint64_t realization = 0);

}  // namespace lkemu
