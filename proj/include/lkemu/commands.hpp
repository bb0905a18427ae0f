#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "lkemu/geometry.hpp"
#include "lkemu/lkmodel.hpp"
#include "lkemu/oracle.hpp"

namespace lkemu {

// Settings shared by every subcommand. Each field is also a configuration
// key and a command-line flag of the same name.
struct RunConfig {
  // Paths. Empty stage paths default to fixed names in output_dir.
  std::string input;
  std::string output_dir = "lkemu_out";
  std::string estimates;
  std::string adjusted;
  std::string table;
  std::string model;
  std::string realizations_file;
  std::string realization_format = "csv";

  std::uint64_t seed = 1;
  int workers = 1;

  // Window fitting and adjustment.
  int window = 11;
  double nu = 1.0;
  bool cos_latitude = false;
  double tau_floor = 0.003;
  double theta_cap = 15.0;

  // Lattice.
  int levels = 3;
  double coarse_spacing = 2.5;
  double delta = 2.5;
  int buffer = 3;

  // Calibration. A zero bound is taken from the adjusted estimates.
  double table_theta_min = 0.0;
  double table_theta_max = 0.0;
  double table_ratio = 1.12;
  double rmse_ceiling = 0.10;

  // Simulation.
  std::size_t realizations = 10;
  bool nugget = true;
  std::string simulate_grid = "estimates";

  // Synthetic data and the grid used when simulate_grid is "config".
  std::size_t nx = 50;
  std::size_t ny = 50;
  double x0 = 0.0;
  double y0 = 0.0;
  double dx = 1.0;
  double dy = 1.0;
  std::size_t replicates = 30;
  std::string synth_method = "local";
  std::string synth_theta = "const:3";
  std::string synth_sigma = "const:1";
  std::string synth_tau = "const:0.1";
  int synth_window = 11;

  // Validation.
  std::string validate_case = "1";
  int validation_buffer = 8;
  double far_tolerance = 0.05;
  double smooth_ceiling = 0.10;

  // Benchmarks.
  std::size_t bench_realizations = 4;
  std::string sweep_workers = "1,2,4,8";
  std::size_t sweep_windows = 1000;
  int sweep_window = 7;
  std::size_t sweep_replicates = 10;

  void validate() const;
};

struct ConfigKey {
  std::string name;
  std::string help;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<ConfigKey>& config_keys();

// Applies key=value pairs; unknown keys and bad values are configuration
// errors.
void apply_settings(RunConfig& config, const std::map<std::string, std::string>& settings);

// Reads a JSON object of keys. A run manifest is accepted too, in which case
// its recorded configuration is used.
std::map<std::string, std::string> read_config_file(const std::string& path);

// "const:v", "step:left,right,split" or "linear:at_left,at_right,x_left,x_right".
ScalarField parse_field_spec(const std::string& spec);

std::vector<int> parse_worker_list(const std::string& text);

// Fixed output names inside output_dir.
struct OutputFile {
  std::string name;
  std::string description;
};
const std::vector<OutputFile>& documented_outputs();

// Simulation benchmark model: a rising from 4.05 to 4.5 across x, equal
// level variances summing to one, nugget 0.1.
LKModel benchmark_model(const GridGeometry& grid, const LatticeConfig& config);

int run_command(const std::string& command, const RunConfig& config);

std::string tool_version();

}  // namespace lkemu
