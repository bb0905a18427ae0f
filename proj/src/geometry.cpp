#include "lkemu/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lkemu/error.hpp"

namespace lkemu {

double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

GridGeometry GridGeometry::spanning(Rect extent, std::size_t nx, std::size_t ny) {
  if (nx < 2 || ny < 2) {
    fail(ErrorCategory::kConfiguration, "grid needs at least 2 points per axis");
  }
  GridGeometry g;
  g.nx = nx;
  g.ny = ny;
  g.x0 = extent.xmin;
  g.y0 = extent.ymin;
  g.dx = extent.width() / static_cast<double>(nx - 1);
  g.dy = extent.height() / static_cast<double>(ny - 1);
  return g;
}

Rect GridGeometry::extent() const {
  return {x0, x0 + dx * static_cast<double>(nx > 0 ? nx - 1 : 0), y0,
          y0 + dy * static_cast<double>(ny > 0 ? ny - 1 : 0)};
}

std::vector<Point> GridGeometry::locations() const {
  std::vector<Point> out;
  out.reserve(size());
  for (std::size_t iy = 0; iy < ny; ++iy) {
    for (std::size_t ix = 0; ix < nx; ++ix) out.push_back(point(ix, iy));
  }
  return out;
}

Surface Surface::constant(double value) {
  Surface s;
  s.constant_ = value;
  return s;
}

Surface::Surface(GridGeometry grid, std::vector<double> values)
    : grid_(grid), values_(std::move(values)) {
  if (grid_.size() == 0 || values_.size() != grid_.size()) {
    fail(ErrorCategory::kConfiguration,
         "surface has " + std::to_string(values_.size()) + " values for a grid of " +
             std::to_string(grid_.size()));
  }
}

namespace {

// Cell index and fractional offset along one axis, clamped to the grid.
std::pair<std::size_t, double> locate(double coord, double origin, double step,
                                      std::size_t n) {
  if (n == 1) return {0, 0.0};
  double t = (coord - origin) / step;
  t = std::clamp(t, 0.0, static_cast<double>(n - 1));
  auto i = static_cast<std::size_t>(std::floor(t));
  if (i >= n - 1) i = n - 2;
  return {i, t - static_cast<double>(i)};
}

}  // namespace

double Surface::operator()(Point p) const {
  if (is_constant()) return constant_;
  const auto [ix, fx] = locate(p.x, grid_.x0, grid_.dx, grid_.nx);
  const auto [iy, fy] = locate(p.y, grid_.y0, grid_.dy, grid_.ny);
  const std::size_t ix1 = grid_.nx == 1 ? ix : ix + 1;
  const std::size_t iy1 = grid_.ny == 1 ? iy : iy + 1;
  const double v00 = values_[grid_.index(ix, iy)];
  const double v10 = values_[grid_.index(ix1, iy)];
  const double v01 = values_[grid_.index(ix, iy1)];
  const double v11 = values_[grid_.index(ix1, iy1)];
  // Exact grid hits return the stored value without rounding noise.
  if (fx == 0.0 && fy == 0.0) return v00;
  return (1 - fy) * ((1 - fx) * v00 + fx * v10) + fy * ((1 - fx) * v01 + fx * v11);
}

std::vector<double> Surface::evaluate(std::span<const Point> points) const {
  std::vector<double> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back((*this)(p));
  return out;
}

}  // namespace lkemu
