#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lkemu/lattice.hpp"
#include "lkemu/lkmodel.hpp"
#include "lkemu/local_fit.hpp"

namespace lkemu {

struct CalibrationOptions {
  int distance_points = 40;
  // Calibration fails when the best relative RMSE exceeds this.
  double rmse_ceiling = 0.10;
  // Search range for log(a - 4).
  double log_excess_min = -12.0;
  double log_excess_max = 5.0;
  int scan_points = 25;
  // Upper limit on a, used to keep a table monotone.
  double a_max = 0.0;
};

struct CalibrationEntry {
  double theta = 0.0;
  double a = 0.0;
  std::vector<double> alpha;  // variance fraction per level, sums to one
  double rel_rmse = 0.0;
};

// Lattice used to calibrate range theta: the configured lattice, with the
// domain widened symmetrically when it cannot hold distances up to 3 theta
// from its center.
LatticeConfig calibration_lattice(const LatticeConfig& config, double theta);

// Distances in (0, 3 theta] on which curves are compared.
std::vector<double> calibration_distances(double theta, int points);

// Relative RMSE ||lk - matern|| / ||matern|| of a stationary LK model with
// parameters (a, alpha) against Matern(theta, nu).
double stationary_rmse(double theta, double nu, const LatticeConfig& config, double a,
                       std::span<const double> alpha, const CalibrationOptions& options = {});

// Least squares level fractions alpha >= 0, sum alpha = 1, for columns of
// per-level correlations against a target curve.
std::vector<double> simplex_least_squares(const Eigen::MatrixXd& levels,
                                          const Eigen::VectorXd& target);

CalibrationEntry calibrate_stationary(double theta, double nu, const LatticeConfig& config,
                                      const CalibrationOptions& options = {});

struct CalibrationTable {
  double nu = 1.0;
  LatticeConfig config;
  std::string objective = "relative_rmse_correlation";
  std::vector<CalibrationEntry> entries;  // increasing theta

  struct Lookup {
    double a = 0.0;
    std::vector<double> alpha;
    bool clamped = false;
  };
  // log(a - 4) and alpha linear in log(theta); constant beyond the ends.
  Lookup lookup(double theta) const;
  double theta_min() const { return entries.front().theta; }
  double theta_max() const { return entries.back().theta; }
  void validate() const;
};

// Calibrates every grid value (in parallel), then recalibrates entries whose
// a exceeds the previous entry's with a capped at that value.
CalibrationTable build_calibration_table(std::span<const double> theta_grid, double nu,
                                         const LatticeConfig& config,
                                         const CalibrationOptions& options = {}, int workers = 1);

std::string format_calibration_table(const CalibrationTable& table);
CalibrationTable parse_calibration_table(std::string_view text);

struct EncodeReport {
  std::size_t clamped_nodes = 0;
  std::size_t clamped_boxes = 0;
};

// Nonstationary LK model from local estimates: theta interpolated to every
// node and mapped to a, level variances alpha_l(theta(s)) sigma(s)^2, and the
// nugget carried over.
LKModel encode_nonstationary(const LocalEstimates& est, const CalibrationTable& table,
                             const MultiresLattice& lattice, int workers = 1,
                             EncodeReport* report = nullptr);

}  // namespace lkemu
