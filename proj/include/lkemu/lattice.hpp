#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lkemu/geometry.hpp"
#include "lkemu/sparse_cholesky.hpp"

namespace lkemu {

// One rectangular node grid; node (i, j) sits at (x0 + i h, y0 + j h) and has
// index j * nx + i.
struct LevelGrid {
  std::size_t nx = 0;
  std::size_t ny = 0;
  double x0 = 0.0;
  double y0 = 0.0;
  double spacing = 1.0;

  std::size_t size() const { return nx * ny; }
  Point node(std::size_t i, std::size_t j) const {
    return {x0 + static_cast<double>(i) * spacing, y0 + static_cast<double>(j) * spacing};
  }
  Point node(std::size_t k) const { return node(k % nx, k / nx); }
};

struct LatticeConfig {
  Rect domain{};
  double coarse_spacing = 2.5;
  int levels = 3;
  double delta = 2.5;  // basis support radius in units of the level spacing
  int buffer = 3;      // extra node rings beyond each domain edge, per level
};

struct MultiresLattice {
  LatticeConfig config;
  std::vector<LevelGrid> grids;

  int levels() const { return static_cast<int>(grids.size()); }
  std::size_t total_nodes() const;
};

MultiresLattice build_lattice(const LatticeConfig& config);
MultiresLattice build_lattice(Rect domain, double coarse_spacing, int levels, double delta,
                              int buffer = 3);

// Per-level basis evaluations: rows are locations, columns level nodes.
// `omega` holds the unnormalized standard deviations once normalized.
struct BasisMatrix {
  std::vector<SparseRowMatrix> levels;
  std::vector<std::vector<double>> omega;
  bool normalized = false;

  std::size_t rows() const { return levels.empty() ? 0 : static_cast<std::size_t>(levels[0].rows()); }
};

// Unnormalized basis phi*_{j,l}(s) = wendland_c4(|s - u_j| / (delta h_l)).
BasisMatrix basis_matrix(std::span<const Point> locations, const MultiresLattice& lattice);

// Rescales each level so that Var(g_l(s)) = sigma_l(s)^2, using the factor of
// Q_l. sigma_levels[l][i] is sigma_l at location i. Rows with sigma_l(s) = 0
// become zero rows.
BasisMatrix normalize_basis(const BasisMatrix& basis, std::span<const SparseCholesky> factors,
                            std::span<const std::vector<double>> sigma_levels,
                            std::span<const Point> locations = {});

}  // namespace lkemu
