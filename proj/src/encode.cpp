#include "lkemu/encode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>
#include <boost/math/tools/minima.hpp>

#include "lkemu/error.hpp"
#include "lkemu/format.hpp"
#include "lkemu/kernels.hpp"
#include "lkemu/parallel.hpp"

namespace lkemu {

LatticeConfig calibration_lattice(const LatticeConfig& config, double theta) {
  LatticeConfig out = config;
  const Point c = config.domain.center();
  const double half = std::max(0.5 * config.domain.width(), 3.0 * theta + config.coarse_spacing);
  out.domain.xmin = c.x - half;
  out.domain.xmax = c.x + half;
  return out;
}

std::vector<double> calibration_distances(double theta, int points) {
  if (points < 1) fail(ErrorCategory::kConfiguration, "calibration needs at least one distance");
  std::vector<double> d(static_cast<std::size_t>(points));
  for (int k = 0; k < points; ++k) d[static_cast<std::size_t>(k)] = 3.0 * theta * (k + 1) / points;
  return d;
}

namespace {

// Per-level correlation curves of the stationary model with constant a.
class LevelCurves {
 public:
  LevelCurves(double theta, double nu, const LatticeConfig& config, const CalibrationOptions& options)
      : lattice_(build_lattice(calibration_lattice(config, theta))), center_(lattice_.config.domain.center()) {
    for (double d : calibration_distances(theta, options.distance_points)) {
      targets_.push_back({center_.x + d, center_.y});
      target_.conservativeResize(target_.size() + 1);
      target_[target_.size() - 1] = matern_correlation(d, theta, nu);
    }
  }

  Eigen::MatrixXd curves(double a) const {
    const std::vector<double> equal(static_cast<std::size_t>(lattice_.levels()), 1.0);
    const LKModel model = LKModel::stationary(lattice_, a, equal);
    return level_correlations(model, center_, targets_);
  }

  double rmse(const Eigen::MatrixXd& curves, std::span<const double> alpha) const {
    const Eigen::Map<const Eigen::VectorXd> w(alpha.data(), static_cast<Eigen::Index>(alpha.size()));
    return (curves * w - target_).norm() / target_.norm();
  }

  const Eigen::VectorXd& target() const { return target_; }

 private:
  MultiresLattice lattice_;
  Point center_;
  std::vector<Point> targets_;
  Eigen::VectorXd target_;
};

}  // namespace

double stationary_rmse(double theta, double nu, const LatticeConfig& config, double a,
                       std::span<const double> alpha, const CalibrationOptions& options) {
  const LevelCurves lc(theta, nu, config, options);
  if (alpha.size() != static_cast<std::size_t>(config.levels)) {
    fail(ErrorCategory::kConfiguration, "level fractions do not match the level count");
  }
  return lc.rmse(lc.curves(a), alpha);
}

std::vector<double> simplex_least_squares(const Eigen::MatrixXd& levels,
                                          const Eigen::VectorXd& target) {
  const auto l = static_cast<int>(levels.cols());
  if (l < 1 || l > 16) fail(ErrorCategory::kConfiguration, "level count out of range");
  std::vector<double> best(static_cast<std::size_t>(l), 0.0);
  double best_value = std::numeric_limits<double>::infinity();
  const Eigen::MatrixXd gram = levels.transpose() * levels;
  const Eigen::VectorXd rhs = levels.transpose() * target;
  // Every support set: equality-constrained least squares, kept if feasible.
  for (unsigned mask = 1; mask < (1u << l); ++mask) {
    std::vector<int> idx;
    for (int j = 0; j < l; ++j) {
      if (mask & (1u << j)) idx.push_back(j);
    }
    const auto k = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(k + 1, k + 1);
    Eigen::VectorXd b(k + 1);
    for (Eigen::Index i = 0; i < k; ++i) {
      for (Eigen::Index j = 0; j < k; ++j) kkt(i, j) = gram(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
      kkt(i, k) = 1.0;
      kkt(k, i) = 1.0;
      b[i] = rhs[idx[static_cast<std::size_t>(i)]];
    }
    b[k] = 1.0;
    const Eigen::VectorXd sol = kkt.completeOrthogonalDecomposition().solve(b);
    if (!sol.allFinite() || sol.head(k).minCoeff() < -1e-12) continue;
    std::vector<double> alpha(static_cast<std::size_t>(l), 0.0);
    for (Eigen::Index i = 0; i < k; ++i) alpha[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])] = std::max(0.0, sol[i]);
    const double total = std::accumulate(alpha.begin(), alpha.end(), 0.0);
    for (double& v : alpha) v /= total;
    const Eigen::Map<const Eigen::VectorXd> w(alpha.data(), l);
    const double value = (levels * w - target).squaredNorm();
    if (value < best_value) {
      best_value = value;
      best = alpha;
    }
  }
  return best;
}

CalibrationEntry calibrate_stationary(double theta, double nu, const LatticeConfig& config,
                                      const CalibrationOptions& options) {
  if (!(theta > 0)) fail(ErrorCategory::kParameter, "calibration range must be positive");
  if (!(nu > 0)) fail(ErrorCategory::kParameter, "calibration smoothness must be positive");
  const LevelCurves lc(theta, nu, config, options);

  double u_hi = options.log_excess_max;
  if (options.a_max > 0) {
    if (!(options.a_max > 4)) fail(ErrorCategory::kCalibration, "a cap must exceed 4");
    u_hi = std::min(u_hi, std::log(options.a_max - 4.0));
  }
  const double u_lo = std::min(options.log_excess_min, u_hi);
  struct Eval {
    double u, value;
    std::vector<double> alpha;
  };
  std::map<double, Eval> cache;
  auto evaluate = [&](double u) -> const Eval& {
    auto it = cache.find(u);
    if (it != cache.end()) return it->second;
    Eval e{u, std::numeric_limits<double>::infinity(), {}};
    try {
      const Eigen::MatrixXd curves = lc.curves(4.0 + std::exp(u));
      e.alpha = simplex_least_squares(curves, lc.target());
      e.value = lc.rmse(curves, e.alpha);
    } catch (const Error&) {
      // Numerically unusable a; the search moves on.
    }
    return cache.emplace(u, std::move(e)).first->second;
  };

  // Coarse scan centered on a0 = 4 + (h / theta)^2, i.e. range h * kappa = theta.
  const double u0 = std::clamp(2.0 * std::log(config.coarse_spacing / theta), u_lo, u_hi);
  const int n = std::max(options.scan_points, 3);
  std::vector<double> grid;
  const double span = 6.0;
  for (int i = 0; i < n; ++i) {
    grid.push_back(std::clamp(u0 - span + 2.0 * span * i / (n - 1), u_lo, u_hi));
  }
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  std::size_t best = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (evaluate(grid[i]).value < evaluate(grid[best]).value) best = i;
  }
  double lo = grid[best > 0 ? best - 1 : 0];
  double hi = grid[std::min(best + 1, grid.size() - 1)];
  if (best == 0) lo = std::max(u_lo, grid[0] - span);
  if (best + 1 == grid.size()) hi = std::min(u_hi, grid.back() + span);
  double u_best = grid[best];
  if (hi > lo) {
    const auto [u, v] = boost::math::tools::brent_find_minima(
        [&](double x) { return evaluate(x).value; }, lo, hi, 30);
    if (v < evaluate(u_best).value) u_best = u;
  }
  const Eval& e = evaluate(u_best);
  if (!std::isfinite(e.value)) {
    fail(ErrorCategory::kCalibration, "calibration failed for theta " + format_number(theta) +
                                          ": no stable a found");
  }
  if (e.value > options.rmse_ceiling) {
    std::ostringstream msg;
    msg << "calibration for theta " << theta << " reached relative RMSE " << e.value
        << " (a = " << 4.0 + std::exp(u_best) << "), above the ceiling " << options.rmse_ceiling;
    fail(ErrorCategory::kCalibration, msg.str());
  }
  return {theta, 4.0 + std::exp(u_best), e.alpha, e.value};
}

CalibrationTable::Lookup CalibrationTable::lookup(double theta) const {
  if (entries.empty()) fail(ErrorCategory::kCalibration, "empty calibration table");
  Lookup out;
  if (!(theta > theta_min()) || theta >= theta_max()) {
    const CalibrationEntry& e = !(theta > theta_min()) ? entries.front() : entries.back();
    out.a = e.a;
    out.alpha = e.alpha;
    out.clamped = !(theta >= theta_min() && theta <= theta_max());
    return out;
  }
  const auto hi = std::upper_bound(entries.begin(), entries.end(), theta,
                                   [](double t, const CalibrationEntry& e) { return t < e.theta; });
  const CalibrationEntry& b = *hi;
  const CalibrationEntry& a = *(hi - 1);
  // a - 4 scales like theta^-2, so interpolate log(a - 4) in log(theta).
  const double w = std::log(theta / a.theta) / std::log(b.theta / a.theta);
  out.a = 4.0 + std::exp((1 - w) * std::log(a.a - 4.0) + w * std::log(b.a - 4.0));
  out.alpha.resize(a.alpha.size());
  for (std::size_t l = 0; l < a.alpha.size(); ++l) out.alpha[l] = (1 - w) * a.alpha[l] + w * b.alpha[l];
  return out;
}

void CalibrationTable::validate() const {
  if (entries.empty()) fail(ErrorCategory::kCalibration, "empty calibration table");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const CalibrationEntry& e = entries[i];
    if (!(e.a > 4)) fail(ErrorCategory::kCalibration, "calibration table entry with a <= 4");
    if (e.alpha.size() != static_cast<std::size_t>(config.levels)) {
      fail(ErrorCategory::kCalibration, "calibration table level count mismatch");
    }
    if (i > 0 && !(e.theta > entries[i - 1].theta)) {
      fail(ErrorCategory::kCalibration, "calibration table ranges must increase");
    }
    if (i > 0 && e.a > entries[i - 1].a) {
      fail(ErrorCategory::kCalibration, "calibration table a must not increase with range");
    }
  }
}

CalibrationTable build_calibration_table(std::span<const double> theta_grid, double nu,
                                         const LatticeConfig& config,
                                         const CalibrationOptions& options, int workers) {
  if (theta_grid.empty()) fail(ErrorCategory::kConfiguration, "empty range grid");
  for (std::size_t i = 1; i < theta_grid.size(); ++i) {
    if (!(theta_grid[i] > theta_grid[i - 1])) fail(ErrorCategory::kConfiguration, "range grid must increase");
  }
  CalibrationTable table;
  table.nu = nu;
  table.config = config;
  table.entries.resize(theta_grid.size());
  std::vector<std::string> failures(theta_grid.size());
  parallel_for(theta_grid.size(), workers, [&](std::size_t i) {
    try {
      table.entries[i] = calibrate_stationary(theta_grid[i], nu, config, options);
    } catch (const Error& e) {
      failures[i] = e.what();
    }
  });
  for (std::size_t i = 1; i < table.entries.size(); ++i) {
    if (failures[i].empty() && failures[i - 1].empty() && table.entries[i].a > table.entries[i - 1].a) {
      CalibrationOptions capped = options;
      capped.a_max = table.entries[i - 1].a;
      try {
        table.entries[i] = calibrate_stationary(theta_grid[i], nu, config, capped);
        table.entries[i].a = std::min(table.entries[i].a, capped.a_max);
      } catch (const Error& e) {
        failures[i] = e.what();
      }
    }
  }
  std::string listing;
  for (std::size_t i = 0; i < failures.size(); ++i) {
    if (!failures[i].empty()) listing += (listing.empty() ? "" : "; ") + failures[i];
  }
  if (!listing.empty()) fail(ErrorCategory::kCalibration, "calibration table failed: " + listing);
  return table;
}

std::string format_calibration_table(const CalibrationTable& table) {
  std::ostringstream out;
  const LatticeConfig& c = table.config;
  out << "# lkemu calibration table\n";
  out << "# nu=" << format_number(table.nu) << "\n";
  out << "# levels=" << c.levels << "\n";
  out << "# delta=" << format_number(c.delta) << "\n";
  out << "# coarse_spacing=" << format_number(c.coarse_spacing) << "\n";
  out << "# buffer=" << c.buffer << "\n";
  out << "# domain=" << format_number(c.domain.xmin) << "," << format_number(c.domain.xmax) << ","
      << format_number(c.domain.ymin) << "," << format_number(c.domain.ymax) << "\n";
  out << "# objective=" << table.objective << "\n";
  out << "theta,a";
  for (int l = 1; l <= c.levels; ++l) out << ",alpha_" << l;
  out << ",rel_rmse\n";
  for (const CalibrationEntry& e : table.entries) {
    out << format_number(e.theta) << "," << format_number(e.a);
    for (double v : e.alpha) out << "," << format_number(v);
    out << "," << format_number(e.rel_rmse) << "\n";
  }
  return out.str();
}

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

int parse_int(std::string_view text, std::string_view what) {
  const double v = parse_number(text, what);
  if (v != std::floor(v)) fail(ErrorCategory::kIo, "expected an integer for " + std::string(what));
  return static_cast<int>(v);
}

}  // namespace

CalibrationTable parse_calibration_table(std::string_view text) {
  CalibrationTable table;
  std::map<std::string, std::string, std::less<>> header;
  bool seen_columns = false;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (line.starts_with("# ")) {
      const std::string_view body = line.substr(2);
      const std::size_t eq = body.find('=');
      if (eq != std::string_view::npos) header.emplace(std::string(body.substr(0, eq)), std::string(body.substr(eq + 1)));
      continue;
    }
    if (!seen_columns) {
      for (const char* key : {"nu", "levels", "delta", "coarse_spacing", "buffer", "domain", "objective"}) {
        if (!header.contains(key)) fail(ErrorCategory::kIo, std::string("calibration table header lacks ") + key);
      }
      table.nu = parse_number(header["nu"], "nu");
      table.config.levels = parse_int(header["levels"], "levels");
      table.config.delta = parse_number(header["delta"], "delta");
      table.config.coarse_spacing = parse_number(header["coarse_spacing"], "coarse_spacing");
      table.config.buffer = parse_int(header["buffer"], "buffer");
      const auto dom = split(header["domain"], ',');
      if (dom.size() != 4) fail(ErrorCategory::kIo, "calibration table domain needs four values");
      table.config.domain = {parse_number(dom[0], "domain"), parse_number(dom[1], "domain"),
                             parse_number(dom[2], "domain"), parse_number(dom[3], "domain")};
      table.objective = header["objective"];
      if (split(line, ',').size() != static_cast<std::size_t>(table.config.levels) + 3) {
        fail(ErrorCategory::kIo, "calibration table columns do not match the level count");
      }
      seen_columns = true;
      continue;
    }
    const auto cols = split(line, ',');
    if (cols.size() != static_cast<std::size_t>(table.config.levels) + 3) {
      fail(ErrorCategory::kIo, "calibration table line " + std::to_string(line_no) + " has the wrong column count");
    }
    CalibrationEntry e;
    e.theta = parse_number(cols[0], "theta");
    e.a = parse_number(cols[1], "a");
    for (int l = 0; l < table.config.levels; ++l) e.alpha.push_back(parse_number(cols[2 + static_cast<std::size_t>(l)], "alpha"));
    e.rel_rmse = parse_number(cols.back(), "rel_rmse");
    table.entries.push_back(std::move(e));
  }
  if (!seen_columns) fail(ErrorCategory::kIo, "calibration table has no column header");
  table.validate();
  return table;
}

LKModel encode_nonstationary(const LocalEstimates& est, const CalibrationTable& table,
                             const MultiresLattice& lattice, int workers, EncodeReport* report) {
  table.validate();
  const LatticeConfig& c = lattice.config;
  if (c.levels != table.config.levels || c.delta != table.config.delta ||
      c.coarse_spacing != table.config.coarse_spacing) {
    fail(ErrorCategory::kEncoding, "lattice does not match the calibration table configuration");
  }
  const GridGeometry& g = est.grid;
  std::vector<std::size_t> missing;
  for (std::size_t i = 0; i < est.size(); ++i) {
    if (!std::isfinite(est.theta[i]) || !std::isfinite(est.sigma[i]) || !std::isfinite(est.tau[i]) ||
        !(est.theta[i] > 0) || est.sigma[i] < 0 || est.tau[i] < 0) {
      missing.push_back(i);
    }
  }
  if (!missing.empty()) {
    std::ostringstream msg;
    msg << missing.size() << " grid boxes lack usable estimates:";
    for (std::size_t k = 0; k < std::min<std::size_t>(missing.size(), 8); ++k) {
      const Point p = g.point(missing[k]);
      msg << " (" << p.x << ", " << p.y << ")";
    }
    if (missing.size() > 8) msg << " ...";
    fail(ErrorCategory::kEncoding, msg.str());
  }

  const Surface theta(g, est.theta);
  std::vector<std::vector<double>> a_fields(static_cast<std::size_t>(lattice.levels()));
  std::vector<std::uint8_t> clamped_node;
  for (int l = 0; l < lattice.levels(); ++l) {
    const LevelGrid& grid = lattice.grids[static_cast<std::size_t>(l)];
    auto& a = a_fields[static_cast<std::size_t>(l)];
    a.resize(grid.size());
    std::vector<std::uint8_t> flags(grid.size(), 0);
    parallel_for(grid.size(), workers, [&](std::size_t k) {
      const CalibrationTable::Lookup lk = table.lookup(theta(grid.node(k)));
      a[k] = lk.a;
      flags[k] = lk.clamped ? 1 : 0;
    });
    clamped_node.insert(clamped_node.end(), flags.begin(), flags.end());
  }

  const auto levels = static_cast<std::size_t>(lattice.levels());
  std::vector<std::vector<double>> sigma_values(levels, std::vector<double>(g.size()));
  std::vector<std::uint8_t> clamped_box(g.size(), 0);
  parallel_for(g.size(), workers, [&](std::size_t i) {
    const CalibrationTable::Lookup lk = table.lookup(est.theta[i]);
    clamped_box[i] = lk.clamped ? 1 : 0;
    for (std::size_t l = 0; l < levels; ++l) sigma_values[l][i] = std::sqrt(lk.alpha[l]) * est.sigma[i];
  });
  std::vector<Surface> sigma_levels;
  for (auto& v : sigma_values) sigma_levels.emplace_back(g, std::move(v));
  if (report != nullptr) {
    report->clamped_nodes = static_cast<std::size_t>(std::count(clamped_node.begin(), clamped_node.end(), 1));
    report->clamped_boxes = static_cast<std::size_t>(std::count(clamped_box.begin(), clamped_box.end(), 1));
  }
  return LKModel(lattice, std::move(a_fields), std::move(sigma_levels), Surface(g, est.tau));
}

}  // namespace lkemu
