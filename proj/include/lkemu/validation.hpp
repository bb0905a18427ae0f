#pragma once

#include <string>
#include <vector>

#include "lkemu/encode.hpp"
#include "lkemu/oracle.hpp"

namespace lkemu {

struct ValidationOptions {
  double transect_step = 0.5;
  double quadrature_cells_per_range = 8.0;
  double padding_factor = 8.0;
  double quadrature_tolerance = 1e-3;
  // Spacing of the grid on which the true range field is handed to the
  // encoder.
  double estimate_spacing = 0.5;
  LatticeConfig lattice{{-24, 24, -24, 24}, 2.5, 3, 2.5, 8};
  // Centers at least this far from x = 0 count as away from the boundary.
  double window_width = 11.0;
  // Points with |x| below this count as near the boundary.
  double boundary_band = 5.0;
  double far_tolerance = 0.05;
  double smooth_ceiling = 0.10;
  std::vector<Point> centers{{-17, 0}, {-5, 0}, {3, 0}, {7, 0}, {15, 0}};
  // Near-boundary centers whose curves decide the overestimation flag.
  std::vector<Point> boundary_centers{{-5, 0}, {3, 0}};
  int workers = 1;
};

struct CurveRow {
  Point center;
  Point target;
  double distance = 0.0;
  double theta_target = 0.0;
  double oracle = 0.0;
  double lk = 0.0;
  double stationary = 0.0;  // Matern with the range at the center
};

struct CenterSummary {
  Point center;
  bool far_from_boundary = false;
  double max_abs_error = 0.0;
  double max_abs_error_within_2theta = 0.0;
  // Mean of lk - oracle over targets near the boundary, excluding the center.
  double mean_signed_error_near_boundary = 0.0;
  // lk - oracle of largest magnitude near the boundary.
  double peak_signed_error_near_boundary = 0.0;
  std::size_t near_points = 0;
  // Correlation rises somewhere while moving away from the center.
  bool oracle_nonmonotone = false;
  bool lk_nonmonotone = false;
};

struct ValidationReport {
  int case_id = 1;
  std::vector<CurveRow> rows;
  std::vector<CenterSummary> centers;
  double max_abs_error = 0.0;
  double max_far_error_within_2theta = 0.0;
  double mean_signed_error_near_boundary = 0.0;
  // Every boundary center's peak near-boundary error is positive.
  bool overestimates_near_boundary = false;
  // Some center has a nonmonotone oracle curve that LK renders monotone.
  bool misses_nonmonotonicity = false;
  // Case 1: far centers within far_tolerance. Case 2: transect maximum
  // within smooth_ceiling.
  bool passed = false;
  double oracle_seconds = 0.0;
  double lk_seconds = 0.0;
};

// Range grid covering a test case, for a validation calibration table.
std::vector<double> validation_theta_grid(int case_id);

ValidationReport run_validation(int case_id, const CalibrationTable& table,
                                const ValidationOptions& options = {});

std::string format_validation_curves(const ValidationReport& report);
std::string format_validation_summary(const ValidationReport& report);

// Four stationary LK configurations on [-8, 8]^2 with four levels and
// coarse spacing 4.
struct Figure1Config {
  std::string label;
  double a = 5.0;
  std::vector<double> weights;
};
std::vector<Figure1Config> figure1_configs();

struct Figure1Curves {
  std::vector<Figure1Config> configs;
  std::vector<Point> points;
  std::vector<double> distance;
  Eigen::MatrixXd correlation;  // points x configs
};

Figure1Curves figure1_curves(double grid_step = 0.5);
std::string format_figure1_curves(const Figure1Curves& curves);

// Distance at which a curve, binned by distance, first drops below `level`.
double correlation_range(const Figure1Curves& curves, std::size_t config, double level = 0.5);
// Mean absolute difference of two configurations over all points.
double mean_curve_gap(const Figure1Curves& curves, std::size_t a, std::size_t b);

}  // namespace lkemu
