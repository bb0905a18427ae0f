#include "lkemu/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lkemu/error.hpp"
#include "lkemu/kernels.hpp"

namespace lkemu {

std::size_t MultiresLattice::total_nodes() const {
  std::size_t n = 0;
  for (const auto& g : grids) n += g.size();
  return n;
}

MultiresLattice build_lattice(const LatticeConfig& config) {
  if (!(config.coarse_spacing > 0)) {
    fail(ErrorCategory::kConfiguration, "lattice: coarse spacing must be positive");
  }
  if (config.levels < 1) fail(ErrorCategory::kConfiguration, "lattice: need at least one level");
  if (!(config.delta > 1)) {
    fail(ErrorCategory::kConfiguration, "lattice: overlap delta must exceed 1");
  }
  if (config.buffer < 0) fail(ErrorCategory::kConfiguration, "lattice: negative buffer");
  const Rect& d = config.domain;
  if (d.width() < config.coarse_spacing || d.height() < config.coarse_spacing) {
    fail(ErrorCategory::kConfiguration, "lattice: domain is smaller than one coarse spacing");
  }
  MultiresLattice lattice;
  lattice.config = config;
  double h = config.coarse_spacing;
  for (int l = 0; l < config.levels; ++l, h /= 2.0) {
    LevelGrid g;
    g.spacing = h;
    const auto core_x = static_cast<std::size_t>(std::ceil(d.width() / h - 1e-9)) + 1;
    const auto core_y = static_cast<std::size_t>(std::ceil(d.height() / h - 1e-9)) + 1;
    const auto ring = static_cast<std::size_t>(config.buffer);
    g.nx = core_x + 2 * ring;
    g.ny = core_y + 2 * ring;
    g.x0 = d.xmin - static_cast<double>(config.buffer) * h;
    g.y0 = d.ymin - static_cast<double>(config.buffer) * h;
    lattice.grids.push_back(g);
  }
  return lattice;
}

MultiresLattice build_lattice(Rect domain, double coarse_spacing, int levels, double delta,
                              int buffer) {
  return build_lattice(LatticeConfig{domain, coarse_spacing, levels, delta, buffer});
}

namespace {

void add_level_row(const LevelGrid& g, double delta, Point s, int row,
                   std::vector<Eigen::Triplet<double, int>>& triplets) {
  const double radius = delta * g.spacing;
  const auto lo = [](double v) { return static_cast<long>(std::ceil(v)); };
  const auto hi = [](double v) { return static_cast<long>(std::floor(v)); };
  const long i0 = std::max(0L, lo((s.x - radius - g.x0) / g.spacing));
  const long i1 = std::min(static_cast<long>(g.nx) - 1, hi((s.x + radius - g.x0) / g.spacing));
  const long j0 = std::max(0L, lo((s.y - radius - g.y0) / g.spacing));
  const long j1 = std::min(static_cast<long>(g.ny) - 1, hi((s.y + radius - g.y0) / g.spacing));
  for (long j = j0; j <= j1; ++j) {
    for (long i = i0; i <= i1; ++i) {
      const auto iu = static_cast<std::size_t>(i);
      const auto ju = static_cast<std::size_t>(j);
      const double w = wendland_c4(distance(s, g.node(iu, ju)) / radius);
      if (w > 0.0) triplets.emplace_back(row, static_cast<int>(ju * g.nx + iu), w);
    }
  }
}

}  // namespace

BasisMatrix basis_matrix(std::span<const Point> locations, const MultiresLattice& lattice) {
  if (locations.empty()) fail(ErrorCategory::kConfiguration, "basis_matrix: no locations");
  BasisMatrix basis;
  for (const auto& g : lattice.grids) {
    std::vector<Eigen::Triplet<double, int>> triplets;
    triplets.reserve(locations.size() * 36);
    for (std::size_t r = 0; r < locations.size(); ++r) {
      add_level_row(g, lattice.config.delta, locations[r], static_cast<int>(r), triplets);
    }
    SparseRowMatrix m(static_cast<Eigen::Index>(locations.size()),
                      static_cast<Eigen::Index>(g.size()));
    m.setFromTriplets(triplets.begin(), triplets.end());
    m.makeCompressed();
    basis.levels.push_back(std::move(m));
  }
  return basis;
}

namespace {

SparseVector row_vector(const SparseRowMatrix& m, Eigen::Index row) {
  SparseVector v(m.cols());
  for (SparseRowMatrix::InnerIterator it(m, row); it; ++it) v.insertBack(it.index()) = it.value();
  return v;
}

}  // namespace

BasisMatrix normalize_basis(const BasisMatrix& basis, std::span<const SparseCholesky> factors,
                            std::span<const std::vector<double>> sigma_levels,
                            std::span<const Point> locations) {
  if (factors.size() != basis.levels.size() || sigma_levels.size() != basis.levels.size()) {
    fail(ErrorCategory::kConfiguration, "normalize_basis: level count mismatch");
  }
  BasisMatrix out;
  out.normalized = true;
  for (std::size_t l = 0; l < basis.levels.size(); ++l) {
    const SparseRowMatrix& phi = basis.levels[l];
    if (factors[l].size() != phi.cols() ||
        sigma_levels[l].size() != static_cast<std::size_t>(phi.rows())) {
      fail(ErrorCategory::kConfiguration, "normalize_basis: dimension mismatch at level " +
                                              std::to_string(l + 1));
    }
    SparseRowMatrix scaled = phi;
    std::vector<double> omega(static_cast<std::size_t>(phi.rows()), 0.0);
    for (Eigen::Index r = 0; r < phi.rows(); ++r) {
      const double sigma = sigma_levels[l][static_cast<std::size_t>(r)];
      double scale = 0.0;
      if (sigma != 0.0) {
        const double var = factors[l].inverse_quadratic(row_vector(phi, r));
        if (!(var > 0)) {
          std::ostringstream msg;
          msg << "normalize_basis: location " << r;
          if (static_cast<std::size_t>(r) < locations.size()) {
            msg << " (" << locations[static_cast<std::size_t>(r)].x << ", "
                << locations[static_cast<std::size_t>(r)].y << ")";
          }
          msg << " is outside every level-" << l + 1 << " basis support";
          fail(ErrorCategory::kCoverage, msg.str());
        }
        omega[static_cast<std::size_t>(r)] = std::sqrt(var);
        scale = sigma / omega[static_cast<std::size_t>(r)];
      }
      for (SparseRowMatrix::InnerIterator it(scaled, r); it; ++it) it.valueRef() *= scale;
    }
    scaled.prune(0.0);
    out.levels.push_back(std::move(scaled));
    out.omega.push_back(std::move(omega));
  }
  return out;
}

}  // namespace lkemu
