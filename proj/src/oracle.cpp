#include "lkemu/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "lkemu/error.hpp"
#include "lkemu/parallel.hpp"
#include "lkemu/random.hpp"

namespace lkemu {

ScalarField ScalarField::constant(double value) {
  return {Kind::kConstant, [value](Point) { return value; }, value, value};
}

ScalarField ScalarField::step_x(double left_value, double right_value, double split) {
  return {Kind::kPiecewiseConstant,
          [=](Point p) { return p.x <= split ? left_value : right_value; },
          std::min(left_value, right_value), std::max(left_value, right_value)};
}

ScalarField ScalarField::linear_x(double at_left, double at_right, double x_left,
                                  double x_right) {
  if (!(x_right > x_left)) fail(ErrorCategory::kConfiguration, "linear field: empty interval");
  return {Kind::kLinear,
          [=](Point p) {
            const double t = std::clamp((p.x - x_left) / (x_right - x_left), 0.0, 1.0);
            return at_left + t * (at_right - at_left);
          },
          std::min(at_left, at_right), std::max(at_left, at_right)};
}

ScalarField ScalarField::table(Surface surface) {
  double lo = surface.constant_value(), hi = lo;
  if (!surface.is_constant()) {
    const auto [mn, mx] = std::minmax_element(surface.values().begin(), surface.values().end());
    lo = *mn;
    hi = *mx;
  }
  return {Kind::kTable, [s = std::move(surface)](Point p) { return s(p); }, lo, hi};
}

QuadratureGrid QuadratureGrid::for_field(const ScalarField& theta, double cells_per_range) {
  if (!(theta.min() > 0)) fail(ErrorCategory::kParameter, "range field must be positive");
  return {theta.min() / cells_per_range, 8.0, 1e-3};
}

namespace {

struct Box {
  double x0, x1, y0, y1;
};

Box kernel_box(Point s, double theta, double padding_factor) {
  const double r = padding_factor * theta;
  return {s.x - r, s.x + r, s.y - r, s.y + r};
}

void check_padding(const ConvolutionKernel& psi, const QuadratureGrid& quad) {
  const double outside = psi.tail_mass(quad.padding_factor);
  if (outside > quad.tolerance) {
    std::ostringstream msg;
    msg << "quadrature padding of " << quad.padding_factor << " ranges leaves kernel mass "
        << outside << " outside the grid";
    fail(ErrorCategory::kQuadrature, msg.str());
  }
}

}  // namespace

ConvolutionOracle::ConvolutionOracle(std::span<const Point> points, const ThetaField& theta,
                                     const ScalarField& sigma, const ConvolutionKernel& psi,
                                     const QuadratureGrid& quad, int workers)
    : cell_area_(quad.spacing * quad.spacing), patches_(points.size()) {
  if (!(quad.spacing > 0)) fail(ErrorCategory::kConfiguration, "quadrature spacing must be positive");
  check_padding(psi, quad);
  const double h = quad.spacing;
  parallel_for(points.size(), workers, [&](std::size_t k) {
    const Point s = points[k];
    const double t = theta(s);
    if (!(t > 0)) fail(ErrorCategory::kParameter, "range must be positive");
    const Box box = kernel_box(s, t, quad.padding_factor);
    Patch& p = patches_[k];
    p.i0 = static_cast<long>(std::floor(box.x0 / h));
    p.j0 = static_cast<long>(std::floor(box.y0 / h));
    p.nx = static_cast<long>(std::ceil(box.x1 / h)) - p.i0;
    p.ny = static_cast<long>(std::ceil(box.y1 / h)) - p.j0;
    p.values.resize(static_cast<std::size_t>(p.nx * p.ny));
    p.sigma = sigma(s);
    const double inv = 1.0 / t;
    double mass = 0.0;
    for (long j = 0; j < p.ny; ++j) {
      const double dy = (static_cast<double>(p.j0 + j) + 0.5) * h - s.y;
      for (long i = 0; i < p.nx; ++i) {
        const double dx = (static_cast<double>(p.i0 + i) + 0.5) * h - s.x;
        const double v = psi(std::hypot(dx, dy) * inv) * inv;
        p.values[static_cast<std::size_t>(j * p.nx + i)] = v;
        mass += v * v;
      }
    }
    p.mass = mass * cell_area_;
    if (std::abs(p.mass - 1.0) > quad.tolerance) {
      std::ostringstream msg;
      msg << "discretized kernel at (" << s.x << ", " << s.y << ") integrates to " << p.mass
          << "; refine the quadrature spacing";
      fail(ErrorCategory::kQuadrature, msg.str());
    }
  });
}

double ConvolutionOracle::overlap(const Patch& a, const Patch& b) const {
  const long i0 = std::max(a.i0, b.i0), i1 = std::min(a.i0 + a.nx, b.i0 + b.nx);
  const long j0 = std::max(a.j0, b.j0), j1 = std::min(a.j0 + a.ny, b.j0 + b.ny);
  if (i0 >= i1 || j0 >= j1) return 0.0;
  double sum = 0.0;
  for (long j = j0; j < j1; ++j) {
    const double* pa = a.values.data() + (j - a.j0) * a.nx + (i0 - a.i0);
    const double* pb = b.values.data() + (j - b.j0) * b.nx + (i0 - b.i0);
    double row = 0.0;
    for (long i = 0; i < i1 - i0; ++i) row += pa[i] * pb[i];
    sum += row;
  }
  return sum * cell_area_;
}

double ConvolutionOracle::covariance(std::size_t i, std::size_t j) const {
  const Patch& a = patches_[i];
  const Patch& b = patches_[j];
  return a.sigma * b.sigma * (i == j ? a.mass : overlap(a, b));
}

double ConvolutionOracle::correlation(std::size_t i, std::size_t j) const {
  if (i == j) return 1.0;
  return overlap(patches_[i], patches_[j]) / std::sqrt(patches_[i].mass * patches_[j].mass);
}

double ConvolutionOracle::cross_correlation(std::size_t i, const ConvolutionOracle& other,
                                            std::size_t j) const {
  if (cell_area_ != other.cell_area_) {
    fail(ErrorCategory::kConfiguration, "kernel banks use different quadrature grids");
  }
  const Patch& a = patches_[i];
  const Patch& b = other.patches_[j];
  return overlap(a, b) / std::sqrt(a.mass * b.mass);
}

Eigen::MatrixXd ConvolutionOracle::covariance_matrix(int workers) const {
  const std::size_t n = size();
  Eigen::MatrixXd k(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  parallel_for(n, workers, [&](std::size_t i) {
    for (std::size_t j = 0; j <= i; ++j) {
      const double c = covariance(i, j);
      k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = c;
      k(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = c;
    }
  });
  return k;
}

Eigen::MatrixXd ConvolutionOracle::correlation_matrix(int workers) const {
  const Eigen::MatrixXd k = covariance_matrix(workers);
  const Eigen::VectorXd inv = k.diagonal().cwiseSqrt().cwiseInverse();
  return inv.asDiagonal() * k * inv.asDiagonal();
}

double convolution_covariance(Point s, Point s_prime, const ThetaField& theta,
                              const ScalarField& sigma, const ConvolutionKernel& psi,
                              const QuadratureGrid& quad) {
  const Point pts[] = {s, s_prime};
  QuadratureGrid loose = quad;
  loose.tolerance = std::numeric_limits<double>::infinity();
  check_padding(psi, quad);
  return ConvolutionOracle(pts, theta, sigma, psi, loose).covariance(0, 1);
}

double convolution_correlation(Point s, Point s_prime, const ThetaField& theta,
                               const ConvolutionKernel& psi, const QuadratureGrid& quad) {
  const Point pts[] = {s, s_prime};
  const ConvolutionOracle bank(pts, theta, ScalarField::constant(1.0), psi, quad);
  return s == s_prime ? 1.0 : bank.correlation(0, 1);
}

Eigen::MatrixXd convolution_correlations(std::span<const Point> centers,
                                         std::span<const Point> targets, const ThetaField& theta,
                                         const ConvolutionKernel& psi, const QuadratureGrid& quad,
                                         int workers) {
  const auto one = ScalarField::constant(1.0);
  const ConvolutionOracle bank(centers, theta, one, psi, quad, workers);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(targets.size()), static_cast<Eigen::Index>(centers.size()));
  parallel_for(targets.size(), workers, [&](std::size_t t) {
    const ConvolutionOracle single(targets.subspan(t, 1), theta, one, psi, quad);
    for (std::size_t c = 0; c < centers.size(); ++c) {
      out(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) =
          targets[t] == centers[c] ? 1.0 : bank.cross_correlation(c, single, 0);
    }
  });
  return out;
}

Eigen::MatrixXd convolution_covariance_matrix(std::span<const Point> points,
                                              const ThetaField& theta, const ScalarField& sigma,
                                              const ConvolutionKernel& psi,
                                              const QuadratureGrid& quad, int workers) {
  QuadratureGrid loose = quad;
  loose.tolerance = std::numeric_limits<double>::infinity();
  check_padding(psi, quad);
  return ConvolutionOracle(points, theta, sigma, psi, loose, workers).covariance_matrix(workers);
}

TestCase testcase(int case_id) {
  TestCase tc;
  tc.id = case_id;
  tc.theta = testcase_theta(case_id);
  return tc;
}

ThetaField testcase_theta(int case_id) {
  switch (case_id) {
    case 1:
      return ThetaField::step_x(5.0, 1.9, 0.0);
    case 2:
      // From 6 at the left boundary to 1 at the right boundary.
      return ThetaField::linear_x(6.0, 1.0, -24.0, 24.0);
    default:
      fail(ErrorCategory::kConfiguration, "unknown test case " + std::to_string(case_id));
  }
}

Eigen::MatrixXd dense_simulate(const Eigen::MatrixXd& cov, std::size_t n, std::uint64_t seed,
                               RootKind root) {
  const Eigen::Index size = cov.rows();
  if (cov.cols() != size) fail(ErrorCategory::kConfiguration, "dense_simulate: matrix not square");
  if (size > 5000) fail(ErrorCategory::kConfiguration, "dense_simulate: N exceeds 5000");
  Eigen::MatrixXd factor;
  bool have_factor = false;
  if (root == RootKind::kCholesky) {
    const Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() == Eigen::Success) {
      factor = llt.matrixL();
      have_factor = true;
    }
  }
  if (!have_factor) {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    const Eigen::VectorXd& ev = es.eigenvalues();
    const double scale = ev.cwiseAbs().maxCoeff();
    if (ev.minCoeff() < -1e-8 * scale) {
      fail(ErrorCategory::kNumerical, "dense_simulate: covariance matrix is indefinite");
    }
    factor = es.eigenvectors() * ev.cwiseMax(0.0).cwiseSqrt().asDiagonal() *
             es.eigenvectors().transpose();
  }
  Eigen::MatrixXd out(size, static_cast<Eigen::Index>(n));
  Eigen::VectorXd e(size);
  for (std::size_t r = 0; r < n; ++r) {
    auto gen = make_stream(seed, Stream::kDense, r);
    fill_standard_normal(gen, std::span<double>(e.data(), static_cast<std::size_t>(size)));
    out.col(static_cast<Eigen::Index>(r)) = factor * e;
  }
  return out;
}

Eigen::VectorXd symmetric_root_row(const Eigen::MatrixXd& cov, Eigen::Index row) {
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  const Eigen::VectorXd root_ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd& v = es.eigenvectors();
  return v * root_ev.asDiagonal() * v.row(row).transpose();
}

LocalWeights local_weights(const GridGeometry& grid, std::size_t ix, std::size_t iy, int window,
                           const MaternParams& params) {
  if (window < 3 || window % 2 == 0) {
    fail(ErrorCategory::kConfiguration, "local window must be odd and at least 3");
  }
  const auto w = static_cast<std::size_t>(window);
  if (w > grid.nx || w > grid.ny) {
    fail(ErrorCategory::kConfiguration, "local window exceeds the grid extent");
  }
  const std::size_t half = w / 2;
  const std::size_t sx = std::min(ix > half ? ix - half : 0, grid.nx - w);
  const std::size_t sy = std::min(iy > half ? iy - half : 0, grid.ny - w);
  LocalWeights out;
  std::vector<Point> pts;
  Eigen::Index center = 0;
  for (std::size_t j = sy; j < sy + w; ++j) {
    for (std::size_t i = sx; i < sx + w; ++i) {
      if (i == ix && j == iy) center = static_cast<Eigen::Index>(pts.size());
      out.indices.push_back(grid.index(i, j));
      pts.push_back(grid.point(i, j));
    }
  }
  const auto n = static_cast<Eigen::Index>(pts.size());
  Eigen::MatrixXd cov(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = 0; b <= a; ++b) {
      const double c = matern_covariance(
          distance(pts[static_cast<std::size_t>(a)], pts[static_cast<std::size_t>(b)]), params);
      cov(a, b) = c;
      cov(b, a) = c;
    }
  }
  out.weights = symmetric_root_row(cov, center);
  return out;
}

LocalSimulator::LocalSimulator(const ThetaField& theta, const ScalarField& sigma,
                               const ScalarField& tau, const GridGeometry& grid, int window,
                               double nu, int workers)
    : grid_(grid), weights_(grid.size()) {
  // Validate the window once before fanning out.
  local_weights(grid, 0, 0, window, {1.0, 1.0, nu, 0.0});
  parallel_for(grid.size(), workers, [&](std::size_t k) {
    const Point p = grid.point(k);
    const double s = sigma(p);
    const double t = tau(p);
    if (s == 0.0) {
      // Pure nugget: the symmetric root of t^2 I is t I.
      weights_[k].indices = {k};
      weights_[k].weights = Eigen::VectorXd::Constant(1, t);
    } else {
      weights_[k] = local_weights(grid, k % grid.nx, k / grid.nx, window, {s, theta(p), nu, t});
    }
  });
}

Eigen::VectorXd LocalSimulator::apply(const Eigen::VectorXd& noise) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(weights_.size()));
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    const LocalWeights& lw = weights_[k];
    double value = 0.0;
    for (std::size_t i = 0; i < lw.indices.size(); ++i) {
      value += lw.weights[static_cast<Eigen::Index>(i)] * noise[static_cast<Eigen::Index>(lw.indices[i])];
    }
    out[static_cast<Eigen::Index>(k)] = value;
  }
  return out;
}

Eigen::VectorXd LocalSimulator::simulate(std::uint64_t seed, std::uint64_t realization) const {
  Eigen::VectorXd v(static_cast<Eigen::Index>(grid_.size()));
  auto gen = make_stream(seed, Stream::kLocal, realization);
  fill_standard_normal(gen, std::span<double>(v.data(), grid_.size()));
  return apply(v);
}

Eigen::VectorXd local_simulate(const ThetaField& theta, const ScalarField& sigma,
                               const ScalarField& tau, const GridGeometry& grid, int window,
                               std::uint64_t seed, double nu, int workers,
                               std::uint64_t realization) {
  return LocalSimulator(theta, sigma, tau, grid, window, nu, workers).simulate(seed, realization);
}

}  // namespace lkemu
