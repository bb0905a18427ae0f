#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace lkemu {

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

double distance(Point a, Point b);

struct Rect {
  double xmin = 0.0;
  double xmax = 0.0;
  double ymin = 0.0;
  double ymax = 0.0;

  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
  Point center() const { return {0.5 * (xmin + xmax), 0.5 * (ymin + ymax)}; }
  bool contains(Point p) const {
    return p.x >= xmin && p.x <= xmax && p.y >= ymin && p.y <= ymax;
  }

  friend bool operator==(const Rect&, const Rect&) = default;
};

// Regular rectangular grid. Points are ordered with x varying fastest:
// index = iy * nx + ix.
struct GridGeometry {
  std::size_t nx = 0;
  std::size_t ny = 0;
  double x0 = 0.0;
  double y0 = 0.0;
  double dx = 1.0;
  double dy = 1.0;

  static GridGeometry spanning(Rect extent, std::size_t nx, std::size_t ny);

  std::size_t size() const { return nx * ny; }
  std::size_t index(std::size_t ix, std::size_t iy) const { return iy * nx + ix; }
  Point point(std::size_t ix, std::size_t iy) const {
    return {x0 + static_cast<double>(ix) * dx, y0 + static_cast<double>(iy) * dy};
  }
  Point point(std::size_t i) const { return point(i % nx, i / nx); }
  Rect extent() const;
  std::vector<Point> locations() const;

  friend bool operator==(const GridGeometry&, const GridGeometry&) = default;
};

// Scalar field stored either as a constant or as values on a grid. Grid
// surfaces are bilinearly interpolated and clamped at the grid edges.
class Surface {
 public:
  Surface() = default;
  static Surface constant(double value);
  Surface(GridGeometry grid, std::vector<double> values);

  double operator()(Point p) const;
  std::vector<double> evaluate(std::span<const Point> points) const;

  bool is_constant() const { return values_.empty(); }
  double constant_value() const { return constant_; }
  const GridGeometry& grid() const { return grid_; }
  const std::vector<double>& values() const { return values_; }

 private:
  double constant_ = 0.0;
  GridGeometry grid_{};
  std::vector<double> values_;
};

}  // namespace lkemu
