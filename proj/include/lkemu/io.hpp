#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "lkemu/geometry.hpp"
#include "lkemu/lkmodel.hpp"
#include "lkemu/local_fit.hpp"

namespace lkemu {

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view content);

// Delimited grid data: header "lon,lat,<prefix>1..<prefix>M", one row per
// grid box with x varying fastest.
std::string format_grid_csv(const GridGeometry& grid, const Eigen::MatrixXd& values,
                            std::string_view column_prefix);
struct GridData {
  GridGeometry grid;
  Eigen::MatrixXd values;
};
GridData parse_grid_csv(std::string_view text, std::string_view column_prefix);

// Replicates use the column prefix "rep_".
void write_replicates_csv(const std::string& path, const ReplicateField& data);
ReplicateField read_replicates_csv(const std::string& path);

// Binary grid: magic "LKGRID01", uint64 nx, ny, columns, float64 x0, y0,
// dx, dy, then the N x columns values column by column, little endian.
void write_grid_binary(const std::string& path, const GridGeometry& grid,
                       const Eigen::MatrixXd& values);
GridData read_grid_binary(const std::string& path);

// Reads either format, chosen by the ".bin" extension.
GridData read_grid_file(const std::string& path, std::string_view column_prefix);
void write_grid_file(const std::string& path, const GridGeometry& grid,
                     const Eigen::MatrixXd& values, std::string_view column_prefix);

// Parameter surfaces: lon,lat,theta,sigma,tau,sigma_obs,loglik,converged,
// degenerate,source.
std::string format_estimates_csv(const LocalEstimates& est);
LocalEstimates parse_estimates_csv(std::string_view text);

// workers,setup_seconds,compute_seconds,windows
std::string format_timing_table(std::span<const SweepTiming> rows);

// Self-contained model descriptor: lattice configuration, node a values,
// level standard deviation surfaces and nugget surface.
std::string model_to_json(const LKModel& model);
LKModel model_from_json(std::string_view text);

}  // namespace lkemu
