#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "lkemu/geometry.hpp"
#include "lkemu/lkmodel.hpp"

namespace lkemu {

struct WindowSpec {
  int width = 11;
  double nu = 1.0;
  std::array<double, 2> theta_bounds{0.05, 50.0};
  // lambda = tau^2 / sigma^2
  std::array<double, 2> lambda_bounds{1e-6, 1e3};
  // Scale longitudinal distances by cos(latitude) of the window center.
  bool cos_latitude = false;

  void validate() const;
};

struct WindowFit {
  double theta = 0.0;
  double sigma = 0.0;
  double tau = 0.0;
  double log_likelihood = 0.0;
  bool converged = false;
  bool degenerate = false;
  int evaluations = 0;
};

struct ProfileValue {
  double log_likelihood = 0.0;
  double sigma2 = 0.0;
};

// Log-likelihood with sigma^2 profiled out, at fixed (theta, lambda). The mean
// is a constant (plus any covariates) shared across replicates, fitted by GLS.
ProfileValue profile_log_likelihood(const ReplicateField& window, const WindowSpec& spec,
                                    double theta, double lambda);

// Full likelihood at (theta, sigma, tau) with the same mean model.
double window_log_likelihood(const ReplicateField& window, const WindowSpec& spec, double theta,
                             double sigma, double tau);

// Stationary Matern maximum likelihood on one window.
WindowFit window_mle(const ReplicateField& window, const WindowSpec& spec);

// The w x w block of data whose lower-left grid box is (ix0, iy0).
ReplicateField restrict_window(const ReplicateField& data, std::size_t ix0, std::size_t iy0,
                               int width);

struct SweepTiming {
  int workers = 1;
  double setup_seconds = 0.0;
  double compute_seconds = 0.0;
  std::size_t windows = 0;
};

// Per grid box estimates. Boxes whose window would leave the grid reuse the
// nearest interior window, recorded in `source`.
struct LocalEstimates {
  GridGeometry grid;
  std::vector<double> theta, sigma, tau, log_likelihood;
  std::vector<double> sigma_obs;  // sample SD across replicates
  std::vector<std::uint8_t> converged, degenerate;
  std::vector<std::size_t> source;
  std::vector<double> task_seconds;  // wall time of the fit that produced each box
  SweepTiming timing;

  std::size_t size() const { return theta.size(); }
};

LocalEstimates sweep_windows(const ReplicateField& data, const WindowSpec& spec, int workers = 1);

// Row-wise sample standard deviation of the replicate matrix.
std::vector<double> replicate_sd(const ReplicateField& data);

// Where tau < tau_floor and sigma > sigma_obs, sigma := sigma_obs; where
// theta > theta_cap, theta := theta_cap.
LocalEstimates adjust_estimates(LocalEstimates est, double tau_floor = 0.003,
                                double theta_cap = 15.0);

}  // namespace lkemu
