#include "lkemu/commands.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "lkemu/encode.hpp"
#include "lkemu/error.hpp"
#include "lkemu/format.hpp"
#include "lkemu/io.hpp"
#include "lkemu/lkmodel.hpp"
#include "lkemu/local_fit.hpp"
#include "lkemu/synthetic.hpp"
#include "lkemu/validation.hpp"

#ifndef LKEMU_VERSION
#define LKEMU_VERSION "0.0.0"
#endif

namespace lkemu {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string tool_version() { return LKEMU_VERSION; }

namespace {

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& why) {
  fail(ErrorCategory::kConfiguration, "invalid value '" + value + "' for " + key + ": " + why);
}

double to_double(const std::string& key, const std::string& value) {
  try {
    return parse_number(value, key);
  } catch (const Error&) {
    bad_value(key, value, "expected a number");
  }
}

long long to_integer(const std::string& key, const std::string& value) {
  const double v = to_double(key, value);
  if (v != std::floor(v) || std::abs(v) > 9.0e15) bad_value(key, value, "expected an integer");
  return static_cast<long long>(v);
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value, "expected true or false");
}

ConfigKey string_key(std::string name, std::string help, std::string RunConfig::*field) {
  return {std::move(name), std::move(help),
          [field](RunConfig& c, const std::string& v) { c.*field = v; },
          [field](const RunConfig& c) { return c.*field; }};
}

ConfigKey double_key(std::string name, std::string help, double RunConfig::*field) {
  const std::string key = name;
  return {std::move(name), std::move(help),
          [field, key](RunConfig& c, const std::string& v) { c.*field = to_double(key, v); },
          [field](const RunConfig& c) { return format_number(c.*field); }};
}

ConfigKey int_key(std::string name, std::string help, int RunConfig::*field) {
  const std::string key = name;
  return {std::move(name), std::move(help),
          [field, key](RunConfig& c, const std::string& v) {
            const long long n = to_integer(key, v);
            if (n < std::numeric_limits<int>::min() || n > std::numeric_limits<int>::max()) {
              bad_value(key, v, "out of range");
            }
            c.*field = static_cast<int>(n);
          },
          [field](const RunConfig& c) { return std::to_string(c.*field); }};
}

ConfigKey size_key(std::string name, std::string help, std::size_t RunConfig::*field) {
  const std::string key = name;
  return {std::move(name), std::move(help),
          [field, key](RunConfig& c, const std::string& v) {
            const long long n = to_integer(key, v);
            if (n < 0) bad_value(key, v, "must not be negative");
            c.*field = static_cast<std::size_t>(n);
          },
          [field](const RunConfig& c) { return std::to_string(c.*field); }};
}

ConfigKey bool_key(std::string name, std::string help, bool RunConfig::*field) {
  const std::string key = name;
  return {std::move(name), std::move(help),
          [field, key](RunConfig& c, const std::string& v) { c.*field = to_bool(key, v); },
          [field](const RunConfig& c) { return std::string(c.*field ? "true" : "false"); }};
}

ConfigKey seed_key() {
  return {"seed", "master random seed (positive)",
          [](RunConfig& c, const std::string& v) {
            std::uint64_t s = 0;
            const auto* end = v.data() + v.size();
            const auto [ptr, ec] = std::from_chars(v.data(), end, s);
            if (ec != std::errc() || ptr != end) bad_value("seed", v, "expected a positive integer");
            c.seed = s;
          },
          [](const RunConfig& c) { return std::to_string(c.seed); }};
}

std::string out_path(const RunConfig& c, const std::string& chosen, const std::string& name) {
  return chosen.empty() ? (fs::path(c.output_dir) / name).string() : chosen;
}

std::string realizations_path(const RunConfig& c) {
  return out_path(c, c.realizations_file, c.realization_format == "bin" ? "realizations.bin" : "realizations.csv");
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string describe(const std::string& name) {
  for (const OutputFile& f : documented_outputs()) {
    if (f.name == name) return f.description;
  }
  return "";
}

// Records what a run did; written next to its outputs.
class Manifest {
 public:
  Manifest(std::string command, const RunConfig& config) : command_(std::move(command)), config_(config) {}

  void output(const std::string& path) {
    outputs_.push_back({{"path", path}, {"description", describe(fs::path(path).filename().string())}});
  }
  void input(const std::string& path) { inputs_.push_back(path); }
  void timing(const std::string& stage, double seconds) { timings_[stage] = seconds; }
  void note(const std::string& key, json value) { notes_[key] = std::move(value); }

  void write(const std::string& path) {
    json j;
    j["format"] = "lkemu-manifest";
    j["tool"] = "lkemu";
    j["version"] = tool_version();
    j["command"] = command_;
    json cfg = json::object();
    for (const ConfigKey& k : config_keys()) cfg[k.name] = k.get(config_);
    j["config"] = cfg;
    j["seeds"] = {{"master", config_.seed},
                  {"stream_stages", {{"coefficients", 1}, {"nugget", 2}, {"synthetic", 5}}}};
    j["inputs"] = inputs_;
    j["outputs"] = outputs_;
    j["timings_seconds"] = timings_;
    if (!notes_.empty()) j["notes"] = notes_;
    write_text_file(path, j.dump(2) + "\n");
  }

 private:
  std::string command_;
  RunConfig config_;
  std::vector<std::string> inputs_;
  json outputs_ = json::array();
  json timings_ = json::object();
  json notes_ = json::object();
};

void require_file(const std::string& path, const std::string& what) {
  if (!fs::is_regular_file(path)) fail(ErrorCategory::kIo, what + " '" + path + "' does not exist");
}

LatticeConfig lattice_config(const RunConfig& c, Rect domain) {
  return {domain, c.coarse_spacing, c.levels, c.delta, c.buffer};
}

GridGeometry config_grid(const RunConfig& c) { return {c.nx, c.ny, c.x0, c.y0, c.dx, c.dy}; }

// ---- stages ----

std::string stage_synth(const RunConfig& c, Manifest& m) {
  const auto t0 = std::chrono::steady_clock::now();
  const ParamFields fields{parse_field_spec(c.synth_theta), parse_field_spec(c.synth_sigma),
                           parse_field_spec(c.synth_tau)};
  SyntheticOptions o;
  o.method = parse_synthetic_method(c.synth_method);
  o.nu = c.nu;
  o.window = c.synth_window;
  o.workers = c.workers;
  CalibrationTable table;
  if (o.method == SyntheticMethod::kLK) {
    require_file(c.table, "calibration table");
    table = parse_calibration_table(read_text_file(c.table));
    o.table = &table;
    m.input(c.table);
  }
  const ReplicateField data = synthetic_ensemble(config_grid(c), fields, c.replicates, c.seed, o);
  const std::string path = out_path(c, "", "replicates.csv");
  write_replicates_csv(path, data);
  m.output(path);
  m.timing("synth", seconds_since(t0));
  std::printf("synth: %zu x %zu grid, %zu replicates (%s) -> %s\n", c.nx, c.ny, c.replicates,
              c.synth_method.c_str(), path.c_str());
  return path;
}

void stage_fit(const RunConfig& c, const std::string& input, Manifest& m) {
  require_file(input, "input");
  auto t0 = std::chrono::steady_clock::now();
  const GridData g = read_grid_file(input, "rep_");
  ReplicateField data{g.grid, g.values, std::nullopt};
  m.input(input);
  m.timing("read", seconds_since(t0));
  WindowSpec spec;
  spec.width = c.window;
  spec.nu = c.nu;
  spec.cos_latitude = c.cos_latitude;
  t0 = std::chrono::steady_clock::now();
  const LocalEstimates est = sweep_windows(data, spec, c.workers);
  m.timing("fit", seconds_since(t0));
  const std::string path = out_path(c, c.estimates, "estimates.csv");
  write_text_file(path, format_estimates_csv(est));
  m.output(path);
  const std::string timing = out_path(c, "", "fit_timing.csv");
  write_text_file(timing, format_timing_table(std::span<const SweepTiming>(&est.timing, 1)));
  m.output(timing);
  std::size_t bad = 0, degenerate = 0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    bad += est.converged[i] == 0;
    degenerate += est.degenerate[i] != 0;
  }
  m.note("fit", {{"windows", est.timing.windows}, {"not_converged", bad}, {"degenerate", degenerate}});
  std::printf("fit: %zu windows, %zu boxes not converged, %zu degenerate -> %s\n", est.timing.windows, bad,
              degenerate, path.c_str());
}

void stage_adjust(const RunConfig& c, Manifest& m) {
  const std::string in = out_path(c, c.estimates, "estimates.csv");
  require_file(in, "estimates");
  const auto t0 = std::chrono::steady_clock::now();
  const LocalEstimates before = parse_estimates_csv(read_text_file(in));
  const LocalEstimates after = adjust_estimates(before, c.tau_floor, c.theta_cap);
  std::size_t sigma_changed = 0, theta_changed = 0;
  for (std::size_t i = 0; i < before.size(); ++i) {
    sigma_changed += after.sigma[i] != before.sigma[i] && !std::isnan(before.sigma[i]);
    theta_changed += after.theta[i] != before.theta[i] && !std::isnan(before.theta[i]);
  }
  const std::string path = out_path(c, c.adjusted, "estimates_adjusted.csv");
  write_text_file(path, format_estimates_csv(after));
  m.input(in);
  m.output(path);
  m.timing("adjust", seconds_since(t0));
  m.note("adjust", {{"sigma_replaced", sigma_changed}, {"theta_capped", theta_changed}});
  std::printf("adjust: sigma replaced at %zu boxes, theta capped at %zu -> %s\n", sigma_changed, theta_changed,
              path.c_str());
}

std::vector<double> geometric_grid(double lo, double hi, double ratio) {
  if (!(lo > 0) || !(hi >= lo)) fail(ErrorCategory::kConfiguration, "table range must satisfy 0 < min <= max");
  if (!(ratio > 1)) fail(ErrorCategory::kConfiguration, "table_ratio must exceed 1");
  if (hi == lo) return {lo};
  const int n = static_cast<int>(std::ceil(std::log(hi / lo) / std::log(ratio))) + 1;
  std::vector<double> g;
  for (int i = 0; i < n; ++i) g.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1)));
  g.back() = hi;
  return g;
}

void stage_calibrate(const RunConfig& c, Manifest& m) {
  double lo = c.table_theta_min, hi = c.table_theta_max;
  Rect domain = config_grid(c).extent();
  const std::string est_path = out_path(c, c.adjusted, "estimates_adjusted.csv");
  if (lo == 0 || hi == 0 || fs::is_regular_file(est_path)) {
    if (!fs::is_regular_file(est_path)) {
      fail(ErrorCategory::kConfiguration,
           "table_theta_min and table_theta_max are required when no adjusted estimates exist");
    }
    const LocalEstimates est = parse_estimates_csv(read_text_file(est_path));
    m.input(est_path);
    domain = est.grid.extent();
    double emin = INFINITY, emax = 0;
    for (double t : est.theta) {
      if (std::isfinite(t)) {
        emin = std::min(emin, t);
        emax = std::max(emax, t);
      }
    }
    if (!std::isfinite(emin)) fail(ErrorCategory::kCalibration, "no finite range estimates to calibrate for");
    // Ranges below the finest node spacing cannot be represented; lookups
    // clamp there instead.
    const double finest = c.coarse_spacing / std::pow(2.0, c.levels - 1);
    if (lo == 0) lo = std::max(emin, finest);
    if (hi == 0) hi = std::max(lo, std::min(emax, c.theta_cap));
  }
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<double> grid = geometric_grid(lo, hi, c.table_ratio);
  CalibrationOptions opts;
  opts.rmse_ceiling = c.rmse_ceiling;
  const CalibrationTable table = build_calibration_table(grid, c.nu, lattice_config(c, domain), opts, c.workers);
  const std::string path = out_path(c, c.table, "table.csv");
  write_text_file(path, format_calibration_table(table));
  m.output(path);
  m.timing("calibrate", seconds_since(t0));
  double worst = 0;
  for (const auto& e : table.entries) worst = std::max(worst, e.rel_rmse);
  m.note("calibrate", {{"entries", table.entries.size()}, {"theta_min", lo}, {"theta_max", hi},
                       {"max_relative_rmse", worst}});
  std::printf("calibrate: %zu entries over [%s, %s], worst relative RMSE %.4f -> %s\n", table.entries.size(),
              format_number(lo).c_str(), format_number(hi).c_str(), worst, path.c_str());
}

void stage_encode(const RunConfig& c, Manifest& m) {
  const std::string est_path = out_path(c, c.adjusted, "estimates_adjusted.csv");
  const std::string table_path = out_path(c, c.table, "table.csv");
  require_file(est_path, "adjusted estimates");
  require_file(table_path, "calibration table");
  const auto t0 = std::chrono::steady_clock::now();
  const LocalEstimates est = parse_estimates_csv(read_text_file(est_path));
  const CalibrationTable table = parse_calibration_table(read_text_file(table_path));
  if (table.nu != c.nu) {
    fail(ErrorCategory::kEncoding, "calibration table smoothness " + format_number(table.nu) +
                                       " differs from nu " + format_number(c.nu));
  }
  EncodeReport report;
  const LKModel model =
      encode_nonstationary(est, table, build_lattice(lattice_config(c, est.grid.extent())), c.workers, &report);
  const std::string path = out_path(c, c.model, "model.json");
  write_text_file(path, model_to_json(model));
  m.input(est_path);
  m.input(table_path);
  m.output(path);
  m.timing("encode", seconds_since(t0));
  m.note("encode", {{"clamped_nodes", report.clamped_nodes}, {"clamped_boxes", report.clamped_boxes}});
  std::printf("encode: %d levels, %zu nodes and %zu boxes outside the table range -> %s\n", model.levels(),
              report.clamped_nodes, report.clamped_boxes, path.c_str());
}

void stage_simulate(const RunConfig& c, Manifest& m) {
  const std::string model_path = out_path(c, c.model, "model.json");
  require_file(model_path, "model");
  auto t0 = std::chrono::steady_clock::now();
  const LKModel model = model_from_json(read_text_file(model_path));
  m.input(model_path);
  GridGeometry grid;
  if (c.simulate_grid == "estimates") {
    const std::string est_path = out_path(c, c.adjusted, "estimates_adjusted.csv");
    require_file(est_path, "adjusted estimates");
    grid = parse_estimates_csv(read_text_file(est_path)).grid;
    m.input(est_path);
  } else {
    grid = config_grid(c);
  }
  m.timing("simulate_setup", seconds_since(t0));
  t0 = std::chrono::steady_clock::now();
  const std::vector<Point> locations = grid.locations();
  const Eigen::MatrixXd draws = simulate(model, locations, c.realizations, c.seed, {c.nugget, c.workers});
  m.timing("simulate", seconds_since(t0));
  const std::string path = realizations_path(c);
  write_grid_file(path, grid, draws, "real_");
  m.output(path);
  std::printf("simulate: %zu realizations on %zu x %zu -> %s\n", c.realizations, grid.nx, grid.ny, path.c_str());
}

void stage_validate(const RunConfig& c, Manifest& m) {
  if (c.validate_case == "fig1") {
    const auto t0 = std::chrono::steady_clock::now();
    const Figure1Curves f = figure1_curves();
    const std::string curves = out_path(c, "", "figure1_curves.csv");
    write_text_file(curves, format_figure1_curves(f));
    std::string summary = "config,a,range_at_half\n";
    for (std::size_t k = 0; k < f.configs.size(); ++k) {
      summary += f.configs[k].label + "," + format_number(f.configs[k].a) + "," +
                 format_number(correlation_range(f, k)) + "\n";
    }
    for (std::size_t a = 0; a < f.configs.size(); ++a) {
      for (std::size_t b = a + 1; b < f.configs.size(); ++b) {
        summary += "# gap_" + f.configs[a].label + f.configs[b].label + "=" + format_number(mean_curve_gap(f, a, b)) +
                   "\n";
      }
    }
    const std::string sum_path = out_path(c, "", "figure1_summary.csv");
    write_text_file(sum_path, summary);
    m.output(curves);
    m.output(sum_path);
    m.timing("validate", seconds_since(t0));
    std::printf("%s", summary.c_str());
    return;
  }
  int id = 0;
  if (c.validate_case == "1") id = 1;
  if (c.validate_case == "2") id = 2;
  if (id == 0) fail(ErrorCategory::kConfiguration, "validate_case must be 1, 2 or fig1");

  ValidationOptions o;
  o.lattice.buffer = c.validation_buffer;
  o.far_tolerance = c.far_tolerance;
  o.smooth_ceiling = c.smooth_ceiling;
  o.workers = c.workers;
  CalibrationTable table;
  auto t0 = std::chrono::steady_clock::now();
  if (!c.table.empty()) {
    require_file(c.table, "calibration table");
    table = parse_calibration_table(read_text_file(c.table));
    m.input(c.table);
  } else {
    const std::vector<double> grid = validation_theta_grid(id);
    table = build_calibration_table(grid, testcase(id).nu_target, o.lattice, {}, c.workers);
    const std::string path = out_path(c, "", "validation_table_case" + std::to_string(id) + ".csv");
    write_text_file(path, format_calibration_table(table));
    m.output(path);
  }
  m.timing("validation_table", seconds_since(t0));
  const ValidationReport r = run_validation(id, table, o);
  m.timing("oracle", r.oracle_seconds);
  m.timing("lk", r.lk_seconds);
  const std::string stem = "validation_case" + std::to_string(id);
  const std::string curves = out_path(c, "", stem + "_curves.csv");
  const std::string summary = out_path(c, "", stem + "_summary.csv");
  write_text_file(curves, format_validation_curves(r));
  const std::string summary_text = format_validation_summary(r);
  write_text_file(summary, summary_text);
  m.output(curves);
  m.output(summary);
  m.note("validate", {{"case", id}, {"passed", r.passed}, {"max_abs_error", r.max_abs_error},
                      {"max_far_error_within_2theta", r.max_far_error_within_2theta},
                      {"overestimates_near_boundary", r.overestimates_near_boundary}});
  std::printf("%s", summary_text.c_str());
}

void stage_bench(const RunConfig& c, Manifest& m) {
  // Simulation on the two benchmark grids with unit spacing.
  std::string sim = "grid,nx,ny,realizations,workers,setup_seconds,simulate_seconds,total_seconds,limit_seconds\n";
  struct Case {
    std::string name;
    std::size_t nx, ny, n;
    double limit;
  };
  for (const Case& k : {Case{"single", 129, 129, 1, 20.0}, Case{"batch", 102, 128, c.bench_realizations, 60.0}}) {
    const GridGeometry grid{k.nx, k.ny, 0.0, 0.0, 1.0, 1.0};
    auto t0 = std::chrono::steady_clock::now();
    const LKModel model = benchmark_model(grid, lattice_config(c, grid.extent()));
    const double setup = seconds_since(t0);
    t0 = std::chrono::steady_clock::now();
    const std::vector<Point> locations = grid.locations();
    const Eigen::MatrixXd draws = simulate(model, locations, k.n, c.seed, {true, c.workers});
    const double run = seconds_since(t0);
    sim += k.name + "," + std::to_string(k.nx) + "," + std::to_string(k.ny) + "," + std::to_string(k.n) + "," +
           std::to_string(c.workers) + "," + format_number(setup) + "," + format_number(run) + "," +
           format_number(setup + run) + "," + format_number(k.limit) + "\n";
    std::printf("bench simulate %s %zux%zu n=%zu: setup %.2fs simulate %.2fs (limit %.0fs)\n", k.name.c_str(), k.nx,
                k.ny, k.n, setup, run, k.limit);
    if (draws.cols() != static_cast<Eigen::Index>(k.n)) fail(ErrorCategory::kNumerical, "simulation size mismatch");
  }
  const std::string sim_path = out_path(c, "", "bench_simulate.csv");
  write_text_file(sim_path, sim);
  m.output(sim_path);

  // Window-fit sweep scaling.
  const std::size_t want = std::max<std::size_t>(1, c.sweep_windows);
  const std::size_t nxi = std::min<std::size_t>(want, 40);
  const std::size_t nyi = (want + nxi - 1) / nxi;
  const auto w = static_cast<std::size_t>(c.sweep_window);
  const GridGeometry grid{nxi + w - 1, nyi + w - 1, 0.0, 0.0, 1.0, 1.0};
  SyntheticOptions so;
  so.method = grid.size() <= 5000 ? SyntheticMethod::kDense : SyntheticMethod::kLocal;
  so.nu = c.nu;
  so.workers = c.workers;
  const ReplicateField data = synthetic_ensemble(
      grid, {ScalarField::constant(3.0), ScalarField::constant(1.0), ScalarField::constant(0.1)},
      c.sweep_replicates, c.seed, so);
  WindowSpec spec;
  spec.width = c.sweep_window;
  spec.nu = c.nu;
  std::vector<SweepTiming> rows;
  for (int workers : parse_worker_list(c.sweep_workers)) {
    const LocalEstimates est = sweep_windows(data, spec, workers);
    rows.push_back(est.timing);
    const double ideal = rows.front().compute_seconds * rows.front().workers / workers;
    std::printf("bench sweep workers=%d windows=%zu setup %.3fs compute %.2fs (ideal %.2fs, ratio %.2f)\n", workers,
                est.timing.windows, est.timing.setup_seconds, est.timing.compute_seconds, ideal,
                est.timing.compute_seconds / ideal);
  }
  const std::string sweep_path = out_path(c, "", "bench_sweep.csv");
  write_text_file(sweep_path, format_timing_table(rows));
  m.output(sweep_path);
}

}  // namespace

LKModel benchmark_model(const GridGeometry& grid, const LatticeConfig& config) {
  const MultiresLattice lattice = build_lattice(config);
  const Rect extent = grid.extent();
  std::vector<std::vector<double>> a;
  for (const LevelGrid& lg : lattice.grids) {
    std::vector<double> f(lg.size());
    // a rises from 4.05 to 4.5 across x.
    for (std::size_t i = 0; i < f.size(); ++i) {
      const double t = std::clamp((lg.node(i).x - extent.xmin) / extent.width(), 0.0, 1.0);
      f[i] = 4.05 + 0.45 * t;
    }
    a.push_back(std::move(f));
  }
  std::vector<Surface> sigma(static_cast<std::size_t>(config.levels),
                             Surface::constant(std::sqrt(1.0 / config.levels)));
  return LKModel(lattice, a, sigma, Surface::constant(0.1));
}

void RunConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorCategory::kConfiguration, what);
  };
  need(seed > 0, "seed must be positive");
  need(workers > 0, "workers must be positive");
  need(!output_dir.empty(), "output_dir must not be empty");
  need(window >= 3 && window % 2 == 1, "window must be an odd width of at least 3");
  need(synth_window >= 1 && synth_window % 2 == 1, "synth_window must be odd");
  need(sweep_window >= 3 && sweep_window % 2 == 1, "sweep_window must be an odd width of at least 3");
  need(nu > 0, "nu must be positive");
  need(levels >= 1, "levels must be at least 1");
  need(coarse_spacing > 0, "coarse_spacing must be positive");
  need(delta > 1, "delta must exceed 1");
  need(buffer >= 0 && validation_buffer >= 0, "buffers must not be negative");
  need(table_theta_min >= 0 && table_theta_max >= 0, "table bounds must not be negative");
  need(realization_format == "csv" || realization_format == "bin", "realization_format must be csv or bin");
  need(simulate_grid == "estimates" || simulate_grid == "config", "simulate_grid must be estimates or config");
  need(nx >= 1 && ny >= 1 && dx > 0 && dy > 0, "grid dimensions and spacings must be positive");
  need(replicates >= 1, "replicates must be at least 1");
  parse_synthetic_method(synth_method);
  parse_field_spec(synth_theta);
  parse_field_spec(synth_sigma);
  parse_field_spec(synth_tau);
  parse_worker_list(sweep_workers);
  if (!input.empty()) require_file(input, "input");
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys{
      string_key("input", "replicate grid file (.csv or .bin); the pipeline synthesizes data when empty",
                 &RunConfig::input),
      string_key("output_dir", "directory for all outputs", &RunConfig::output_dir),
      string_key("estimates", "fit output / adjust input (default <output_dir>/estimates.csv)", &RunConfig::estimates),
      string_key("adjusted", "adjusted estimates (default <output_dir>/estimates_adjusted.csv)", &RunConfig::adjusted),
      string_key("table", "calibration table (default <output_dir>/table.csv)", &RunConfig::table),
      string_key("model", "model descriptor (default <output_dir>/model.json)", &RunConfig::model),
      string_key("realizations_file", "realization output path", &RunConfig::realizations_file),
      string_key("realization_format", "csv or bin", &RunConfig::realization_format),
      seed_key(),
      int_key("workers", "worker threads for every parallel stage", &RunConfig::workers),
      int_key("window", "moving-window width in grid boxes (odd)", &RunConfig::window),
      double_key("nu", "Matern smoothness", &RunConfig::nu),
      bool_key("cos_latitude", "scale longitude distances by cos(latitude)", &RunConfig::cos_latitude),
      double_key("tau_floor", "adjust: nugget floor", &RunConfig::tau_floor),
      double_key("theta_cap", "adjust: range cap", &RunConfig::theta_cap),
      int_key("levels", "LK levels", &RunConfig::levels),
      double_key("coarse_spacing", "level-1 node spacing", &RunConfig::coarse_spacing),
      double_key("delta", "basis support in node spacings", &RunConfig::delta),
      int_key("buffer", "extra node rings beyond the domain", &RunConfig::buffer),
      double_key("table_theta_min", "smallest calibrated range (0: from estimates)", &RunConfig::table_theta_min),
      double_key("table_theta_max", "largest calibrated range (0: from estimates)", &RunConfig::table_theta_max),
      double_key("table_ratio", "ratio between consecutive calibrated ranges", &RunConfig::table_ratio),
      double_key("rmse_ceiling", "calibration failure threshold on relative RMSE", &RunConfig::rmse_ceiling),
      size_key("realizations", "number of realizations to simulate", &RunConfig::realizations),
      bool_key("nugget", "add the nugget to realizations", &RunConfig::nugget),
      string_key("simulate_grid", "estimates (grid of the adjusted estimates) or config (nx, ny, x0, ...)",
                 &RunConfig::simulate_grid),
      size_key("nx", "grid columns", &RunConfig::nx),
      size_key("ny", "grid rows", &RunConfig::ny),
      double_key("x0", "first grid x coordinate", &RunConfig::x0),
      double_key("y0", "first grid y coordinate", &RunConfig::y0),
      double_key("dx", "grid x spacing", &RunConfig::dx),
      double_key("dy", "grid y spacing", &RunConfig::dy),
      size_key("replicates", "synth: replicate count", &RunConfig::replicates),
      string_key("synth_method", "synth: local, dense or lk", &RunConfig::synth_method),
      string_key("synth_theta", "synth: range field (const:v, step:l,r,split, linear:a,b,x0,x1)",
                 &RunConfig::synth_theta),
      string_key("synth_sigma", "synth: standard deviation field", &RunConfig::synth_sigma),
      string_key("synth_tau", "synth: nugget standard deviation field", &RunConfig::synth_tau),
      int_key("synth_window", "synth: local simulation window width", &RunConfig::synth_window),
      string_key("validate_case", "validate: 1, 2 or fig1", &RunConfig::validate_case),
      int_key("validation_buffer", "validate: lattice buffer rings", &RunConfig::validation_buffer),
      double_key("far_tolerance", "validate: case 1 far-center tolerance", &RunConfig::far_tolerance),
      double_key("smooth_ceiling", "validate: case 2 error ceiling", &RunConfig::smooth_ceiling),
      size_key("bench_realizations", "bench: realizations on the 102 x 128 grid", &RunConfig::bench_realizations),
      string_key("sweep_workers", "bench: comma-separated worker counts", &RunConfig::sweep_workers),
      size_key("sweep_windows", "bench: window fits per sweep", &RunConfig::sweep_windows),
      int_key("sweep_window", "bench: window width of the sweep", &RunConfig::sweep_window),
      size_key("sweep_replicates", "bench: replicates in the sweep data", &RunConfig::sweep_replicates),
  };
  return keys;
}

void apply_settings(RunConfig& config, const std::map<std::string, std::string>& settings) {
  for (const auto& [name, value] : settings) {
    const auto& keys = config_keys();
    const auto it = std::find_if(keys.begin(), keys.end(), [&](const ConfigKey& k) { return k.name == name; });
    if (it == keys.end()) fail(ErrorCategory::kConfiguration, "unknown configuration key '" + name + "'");
    it->set(config, value);
  }
}

std::map<std::string, std::string> read_config_file(const std::string& path) {
  const std::string text = read_text_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCategory::kConfiguration, "cannot parse '" + path + "': " + e.what());
  }
  if (j.is_object() && j.contains("format") && j["format"] == "lkemu-manifest") j = j.at("config");
  if (!j.is_object()) fail(ErrorCategory::kConfiguration, "'" + path + "' must hold a JSON object");
  std::map<std::string, std::string> out;
  for (const auto& [key, value] : j.items()) {
    if (value.is_string()) {
      out[key] = value.get<std::string>();
    } else if (value.is_boolean()) {
      out[key] = value.get<bool>() ? "true" : "false";
    } else if (value.is_number()) {
      out[key] = value.dump();
    } else {
      fail(ErrorCategory::kConfiguration, "configuration key '" + key + "' must be a string, number or boolean");
    }
  }
  return out;
}

ScalarField parse_field_spec(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) fail(ErrorCategory::kConfiguration, "field '" + spec + "' needs kind:values");
  const std::string kind = spec.substr(0, colon);
  std::vector<double> v;
  std::stringstream rest(spec.substr(colon + 1));
  std::string item;
  while (std::getline(rest, item, ',')) v.push_back(to_double("field " + spec, item));
  auto count = [&](std::size_t n) {
    if (v.size() != n) {
      fail(ErrorCategory::kConfiguration, "field '" + spec + "' needs " + std::to_string(n) + " values");
    }
  };
  if (kind == "const") {
    count(1);
    return ScalarField::constant(v[0]);
  }
  if (kind == "step") {
    count(3);
    return ScalarField::step_x(v[0], v[1], v[2]);
  }
  if (kind == "linear") {
    count(4);
    return ScalarField::linear_x(v[0], v[1], v[2], v[3]);
  }
  fail(ErrorCategory::kConfiguration, "unknown field kind '" + kind + "' (const, step, linear)");
}

std::vector<int> parse_worker_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const long long n = to_integer("sweep_workers", item);
    if (n < 1 || n > 4096) bad_value("sweep_workers", item, "worker counts must be in 1..4096");
    out.push_back(static_cast<int>(n));
  }
  if (out.empty()) fail(ErrorCategory::kConfiguration, "sweep_workers is empty");
  return out;
}

const std::vector<OutputFile>& documented_outputs() {
  static const std::vector<OutputFile> files{
      {"replicates.csv", "synth: replicate fields, lon,lat,rep_1..rep_M"},
      {"estimates.csv", "fit: theta, sigma, tau, sigma_obs, loglik, converged, degenerate, source per grid box"},
      {"fit_timing.csv", "fit: workers, setup_seconds, compute_seconds, windows"},
      {"estimates_adjusted.csv", "adjust: estimates after the nugget-floor and range-cap rules"},
      {"table.csv", "calibrate: theta, a, alpha_1..alpha_L, rel_rmse with a key=value header"},
      {"model.json", "encode: lattice, node a values, level sigma and nugget surfaces"},
      {"realizations.csv", "simulate: lon,lat,real_1..real_n"},
      {"realizations.bin", "simulate: LKGRID01 binary grid, used with realization_format=bin"},
      {"validation_case1_curves.csv", "validate: paired oracle and LK correlation curves"},
      {"validation_case1_summary.csv", "validate: per-center error summary"},
      {"validation_case2_curves.csv", "validate: paired oracle and LK correlation curves"},
      {"validation_case2_summary.csv", "validate: per-center error summary"},
      {"validation_table_case1.csv", "validate: calibration table used for case 1"},
      {"validation_table_case2.csv", "validate: calibration table used for case 2"},
      {"figure1_curves.csv", "validate fig1: correlation surfaces of four stationary configurations"},
      {"figure1_summary.csv", "validate fig1: range at correlation 0.5 and pairwise mean gaps"},
      {"bench_simulate.csv", "bench: simulation timings on 129 x 129 and 102 x 128 grids"},
      {"bench_sweep.csv", "bench: workers, setup_seconds, compute_seconds, windows"},
      {"manifest.json", "pipeline: configuration, seeds, version, timings, inputs and outputs"},
      {"manifest_<command>.json", "single stages: the same record for that stage"},
  };
  return files;
}

int run_command(const std::string& command, const RunConfig& config) {
  config.validate();
  std::error_code ec;
  fs::create_directories(config.output_dir, ec);
  if (ec || !fs::is_directory(config.output_dir)) {
    fail(ErrorCategory::kIo, "cannot create output directory '" + config.output_dir + "'");
  }
  Manifest m(command, config);
  const auto t0 = std::chrono::steady_clock::now();
  if (command == "pipeline") {
    std::string input = config.input;
    if (input.empty()) input = stage_synth(config, m);
    stage_fit(config, input, m);
    stage_adjust(config, m);
    if (config.table.empty() || !fs::is_regular_file(config.table)) {
      stage_calibrate(config, m);
    } else {
      m.input(config.table);
    }
    stage_encode(config, m);
    stage_simulate(config, m);
  } else if (command == "synth") {
    stage_synth(config, m);
  } else if (command == "fit") {
    if (config.input.empty()) fail(ErrorCategory::kConfiguration, "fit needs an input file");
    stage_fit(config, config.input, m);
  } else if (command == "adjust") {
    stage_adjust(config, m);
  } else if (command == "calibrate") {
    stage_calibrate(config, m);
  } else if (command == "encode") {
    stage_encode(config, m);
  } else if (command == "simulate") {
    stage_simulate(config, m);
  } else if (command == "validate") {
    stage_validate(config, m);
  } else if (command == "bench") {
    stage_bench(config, m);
  } else {
    fail(ErrorCategory::kConfiguration, "unknown command '" + command + "'");
  }
  m.timing("total", seconds_since(t0));
  const std::string name = command == "pipeline" ? "manifest.json" : "manifest_" + command + ".json";
  m.write((fs::path(config.output_dir) / name).string());
  return 0;
}

}  // namespace lkemu
