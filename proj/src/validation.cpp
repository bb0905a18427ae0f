#include "lkemu/validation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>

#include "lkemu/error.hpp"
#include "lkemu/format.hpp"
#include "lkemu/synthetic.hpp"

namespace lkemu {

std::vector<double> validation_theta_grid(int case_id) {
  const ThetaField theta = testcase_theta(case_id);
  std::vector<double> grid;
  // Geometric steps of about 12% between the extremes.
  const double lo = theta.min(), hi = theta.max();
  const int n = std::max(2, static_cast<int>(std::ceil(std::log(hi / lo) / std::log(1.12))) + 1);
  for (int i = 0; i < n; ++i) grid.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1)));
  grid.back() = hi;
  return grid;
}

namespace {

// Rows of the latest center are the last n entries, in transect order.
bool rises_away_from_center(const std::vector<CurveRow>& rows, std::size_t n, double CurveRow::*value) {
  const std::size_t first = rows.size() - n;
  for (std::size_t t = first + 1; t < rows.size(); ++t) {
    const CurveRow& a = rows[t - 1];
    const CurveRow& b = rows[t];
    // Walking away from the center the correlation should not grow.
    const CurveRow& nearer = a.distance < b.distance ? a : b;
    const CurveRow& farther = a.distance < b.distance ? b : a;
    if (farther.*value > nearer.*value + 1e-3) return true;
  }
  return false;
}

}  // namespace

ValidationReport run_validation(int case_id, const CalibrationTable& table,
                                const ValidationOptions& options) {
  using Clock = std::chrono::steady_clock;
  const TestCase tc = testcase(case_id);
  ValidationReport report;
  report.case_id = case_id;

  std::vector<Point> transect;
  const auto steps = static_cast<int>(std::floor(tc.domain.width() / options.transect_step + 1e-9));
  for (int i = 0; i <= steps; ++i) transect.push_back({tc.domain.xmin + i * options.transect_step, 0.0});

  QuadratureGrid quad = QuadratureGrid::for_field(tc.theta, options.quadrature_cells_per_range);
  quad.padding_factor = options.padding_factor;
  quad.tolerance = options.quadrature_tolerance;
  const ConvolutionKernel psi(tc.nu_target);
  auto t0 = Clock::now();
  Eigen::MatrixXd oracle;
  try {
    oracle = convolution_correlations(options.centers, transect, tc.theta, psi, quad, options.workers);
  } catch (const Error& e) {
    fail(ErrorCategory::kOracle, e.what());
  }
  report.oracle_seconds = std::chrono::duration<double>(Clock::now() - t0).count();

  t0 = Clock::now();
  const auto n_est = static_cast<std::size_t>(std::llround(tc.domain.width() / options.estimate_spacing)) + 1;
  const GridGeometry est_grid = GridGeometry::spanning(tc.domain, n_est, n_est);
  ParamFields fields{tc.theta, tc.sigma, tc.tau};
  LatticeConfig lattice_config = options.lattice;
  lattice_config.levels = table.config.levels;
  lattice_config.delta = table.config.delta;
  lattice_config.coarse_spacing = table.config.coarse_spacing;
  const LKModel model = encode_nonstationary(sample_parameters(est_grid, fields), table,
                                             build_lattice(lattice_config), options.workers);
  std::vector<std::vector<CurvePoint>> lk;
  for (const Point& c : options.centers) lk.push_back(correlation_curve(model, c, transect));
  report.lk_seconds = std::chrono::duration<double>(Clock::now() - t0).count();

  double near_sum = 0.0;
  std::size_t near_count = 0;
  for (std::size_t c = 0; c < options.centers.size(); ++c) {
    const Point center = options.centers[c];
    const double theta_c = tc.theta(center);
    CenterSummary cs;
    cs.center = center;
    cs.far_from_boundary = std::abs(center.x) >= options.window_width;
    double signed_sum = 0.0;
    for (std::size_t t = 0; t < transect.size(); ++t) {
      CurveRow row;
      row.center = center;
      row.target = transect[t];
      row.distance = distance(center, transect[t]);
      row.theta_target = tc.theta(transect[t]);
      row.oracle = oracle(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c));
      row.lk = lk[c][t].correlation;
      row.stationary = matern_correlation(row.distance, theta_c, tc.nu_target);
      const double err = row.lk - row.oracle;
      cs.max_abs_error = std::max(cs.max_abs_error, std::abs(err));
      if (row.distance <= 2.0 * theta_c) {
        cs.max_abs_error_within_2theta = std::max(cs.max_abs_error_within_2theta, std::abs(err));
      }
      if (!cs.far_from_boundary && std::abs(row.target.x) <= options.boundary_band && row.distance > 0) {
        signed_sum += err;
        ++cs.near_points;
        if (std::abs(err) > std::abs(cs.peak_signed_error_near_boundary)) cs.peak_signed_error_near_boundary = err;
      }
      report.rows.push_back(row);
    }
    if (cs.near_points > 0) cs.mean_signed_error_near_boundary = signed_sum / static_cast<double>(cs.near_points);
    cs.oracle_nonmonotone = rises_away_from_center(report.rows, transect.size(), &CurveRow::oracle);
    cs.lk_nonmonotone = rises_away_from_center(report.rows, transect.size(), &CurveRow::lk);
    if (cs.oracle_nonmonotone && !cs.lk_nonmonotone) report.misses_nonmonotonicity = true;
    near_sum += signed_sum;
    near_count += cs.near_points;
    report.max_abs_error = std::max(report.max_abs_error, cs.max_abs_error);
    if (cs.far_from_boundary) {
      report.max_far_error_within_2theta = std::max(report.max_far_error_within_2theta, cs.max_abs_error_within_2theta);
    }
    report.centers.push_back(cs);
  }
  if (near_count > 0) report.mean_signed_error_near_boundary = near_sum / static_cast<double>(near_count);
  report.overestimates_near_boundary = !options.boundary_centers.empty();
  for (const Point& b : options.boundary_centers) {
    const auto it = std::find_if(report.centers.begin(), report.centers.end(),
                                 [&](const CenterSummary& c) { return c.center == b; });
    if (it == report.centers.end()) fail(ErrorCategory::kConfiguration, "boundary center is not a validation center");
    if (it->far_from_boundary || !(it->peak_signed_error_near_boundary > 0)) report.overestimates_near_boundary = false;
  }
  report.passed = case_id == 1 ? report.max_far_error_within_2theta <= options.far_tolerance
                               : report.max_abs_error <= options.smooth_ceiling;
  return report;
}

std::string format_validation_curves(const ValidationReport& report) {
  std::string out = "case,center_x,center_y,x,y,distance,theta,oracle,lk,stationary,error\n";
  for (const CurveRow& r : report.rows) {
    out += std::to_string(report.case_id);
    for (double v : {r.center.x, r.center.y, r.target.x, r.target.y, r.distance, r.theta_target, r.oracle,
                     r.lk, r.stationary, r.lk - r.oracle}) {
      out += ",";
      out += format_number(v);
    }
    out += "\n";
  }
  return out;
}

std::string format_validation_summary(const ValidationReport& report) {
  std::string out =
      "case,center_x,center_y,region,max_abs_error,max_abs_error_within_2theta,"
      "mean_signed_error_near_boundary,peak_signed_error_near_boundary,near_points,oracle_nonmonotone,"
      "lk_nonmonotone\n";
  for (const CenterSummary& c : report.centers) {
    out += std::to_string(report.case_id) + "," + format_number(c.center.x) + "," + format_number(c.center.y) +
           "," + (c.far_from_boundary ? "far" : "near") + "," + format_number(c.max_abs_error) + "," +
           format_number(c.max_abs_error_within_2theta) + "," + format_number(c.mean_signed_error_near_boundary) +
           "," + format_number(c.peak_signed_error_near_boundary) + "," + std::to_string(c.near_points) + "," +
           (c.oracle_nonmonotone ? "1" : "0") + "," + (c.lk_nonmonotone ? "1" : "0") + "\n";
  }
  out += "# max_abs_error=" + format_number(report.max_abs_error) + "\n";
  out += "# max_far_error_within_2theta=" + format_number(report.max_far_error_within_2theta) + "\n";
  out += "# mean_signed_error_near_boundary=" + format_number(report.mean_signed_error_near_boundary) + "\n";
  out += std::string("# overestimates_near_boundary=") + (report.overestimates_near_boundary ? "true" : "false") + "\n";
  out += std::string("# misses_nonmonotonicity=") + (report.misses_nonmonotonicity ? "true" : "false") + "\n";
  out += std::string("# passed=") + (report.passed ? "true" : "false") + "\n";
  return out;
}

std::vector<Figure1Config> figure1_configs() {
  return {{"a", 5.0, {1, 0, 0, 0}},
          {"b", 4.1, {0, 1, 0.5, 0.25}},
          {"c", 5.0, {1, 0.5, 0.25, 0}},
          {"d", 5.0, {0, 1, 0.5, 0.25}}};
}

Figure1Curves figure1_curves(double grid_step) {
  Figure1Curves out;
  out.configs = figure1_configs();
  const LatticeConfig config{{-8, 8, -8, 8}, 4.0, 4, 2.5, 3};
  const MultiresLattice lattice = build_lattice(config);
  const auto n = static_cast<std::size_t>(std::llround(16.0 / grid_step)) + 1;
  const GridGeometry grid = GridGeometry::spanning(config.domain, n, n);
  out.points = grid.locations();
  for (const Point& p : out.points) out.distance.push_back(std::hypot(p.x, p.y));
  out.correlation.resize(static_cast<Eigen::Index>(out.points.size()), static_cast<Eigen::Index>(out.configs.size()));
  for (std::size_t k = 0; k < out.configs.size(); ++k) {
    const LKModel model = LKModel::stationary(lattice, out.configs[k].a, out.configs[k].weights);
    const auto curve = correlation_curve(model, {0, 0}, out.points);
    for (std::size_t i = 0; i < curve.size(); ++i) {
      out.correlation(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = curve[i].correlation;
    }
  }
  return out;
}

std::string format_figure1_curves(const Figure1Curves& curves) {
  std::string out = "config,a,weights,x,y,distance,correlation\n";
  for (std::size_t k = 0; k < curves.configs.size(); ++k) {
    const Figure1Config& c = curves.configs[k];
    std::string weights;
    for (double w : c.weights) weights += (weights.empty() ? "" : " ") + format_number(w);
    for (std::size_t i = 0; i < curves.points.size(); ++i) {
      out += c.label + "," + format_number(c.a) + "," + weights + "," + format_number(curves.points[i].x) + "," +
             format_number(curves.points[i].y) + "," + format_number(curves.distance[i]) + "," +
             format_number(curves.correlation(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k))) + "\n";
    }
  }
  return out;
}

double correlation_range(const Figure1Curves& curves, std::size_t config, double level) {
  // Average within distance bins of width 0.25, then find the first crossing.
  std::map<long, std::pair<double, int>> bins;
  for (std::size_t i = 0; i < curves.points.size(); ++i) {
    auto& b = bins[std::lround(curves.distance[i] / 0.25)];
    b.first += curves.correlation(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(config));
    ++b.second;
  }
  double prev_d = 0.0, prev_c = 1.0;
  for (const auto& [key, b] : bins) {
    const double d = 0.25 * static_cast<double>(key);
    const double c = b.first / b.second;
    if (c < level) return prev_d + (prev_c - level) / (prev_c - c) * (d - prev_d);
    prev_d = d;
    prev_c = c;
  }
  return INFINITY;
}

double mean_curve_gap(const Figure1Curves& curves, std::size_t a, std::size_t b) {
  return (curves.correlation.col(static_cast<Eigen::Index>(a)) - curves.correlation.col(static_cast<Eigen::Index>(b)))
      .cwiseAbs()
      .mean();
}

}  // namespace lkemu
