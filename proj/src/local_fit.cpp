#include "lkemu/local_fit.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <utility>

#include <Eigen/Cholesky>
#include <boost/math/tools/minima.hpp>
#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include "lkemu/error.hpp"
#include "lkemu/kernels.hpp"
#include "lkemu/parallel.hpp"

namespace lkemu {

void WindowSpec::validate() const {
  if (width < 3 || width % 2 == 0) fail(ErrorCategory::kConfiguration, "window width must be odd and at least 3");
  if (!(nu > 0)) fail(ErrorCategory::kParameter, "smoothness must be positive");
  for (const auto& b : {theta_bounds, lambda_bounds}) {
    if (!(b[0] > 0) || !(b[1] > b[0])) {
      fail(ErrorCategory::kConfiguration, "optimizer bounds must be positive and ordered");
    }
  }
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Window covariance structure: pairwise distances reduced to the distinct
// grid offsets, so each range evaluates the correlation once per offset.
class WindowProblem {
 public:
  WindowProblem(const ReplicateField& window, const WindowSpec& spec)
      : spec_(spec), y_(window.values) {
    const GridGeometry& g = window.grid;
    const auto n = static_cast<Eigen::Index>(g.size());
    if (window.values.rows() != n) fail(ErrorCategory::kConfiguration, "window values do not match the grid");
    if (window.values.cols() < 1) fail(ErrorCategory::kConfiguration, "window has no replicates");
    double dx = g.dx;
    if (spec.cos_latitude) {
      const double lat = g.y0 + 0.5 * static_cast<double>(g.ny - 1) * g.dy;
      dx *= std::cos(lat * std::numbers::pi / 180.0);
    }
    std::map<std::pair<std::size_t, std::size_t>, int> offsets;
    offset_index_.resize(n, n);
    for (Eigen::Index a = 0; a < n; ++a) {
      const auto ia = static_cast<std::size_t>(a);
      for (Eigen::Index b = 0; b <= a; ++b) {
        const auto ib = static_cast<std::size_t>(b);
        const std::size_t ox = std::max(ia % g.nx, ib % g.nx) - std::min(ia % g.nx, ib % g.nx);
        const std::size_t oy = ia / g.nx - ib / g.nx;
        auto [it, inserted] = offsets.try_emplace({ox, oy}, static_cast<int>(distances_.size()));
        if (inserted) {
          distances_.push_back(std::hypot(static_cast<double>(ox) * dx, static_cast<double>(oy) * g.dy));
        }
        offset_index_(a, b) = it->second;
      }
    }
    z_ = Eigen::MatrixXd::Ones(n, 1);
    if (window.covariates) {
      z_.conservativeResize(n, 1 + window.covariates->cols());
      z_.rightCols(window.covariates->cols()) = *window.covariates;
    }
    const double mean = y_.mean();
    const double spread = (y_.array() - mean).abs().maxCoeff();
    degenerate_ = !(spread > 1e-12 * std::max(1.0, std::abs(mean)));
  }

  bool degenerate() const { return degenerate_; }

  ProfileValue profile(double theta, double lambda) const {
    ++evaluations_;
    const Eigen::LLT<Eigen::MatrixXd> llt(correlation(theta, lambda));
    if (llt.info() != Eigen::Success) {
      return {-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::quiet_NaN()};
    }
    const double n = static_cast<double>(y_.rows());
    const double m = static_cast<double>(y_.cols());
    double log_det = 0.0;
    for (Eigen::Index i = 0; i < y_.rows(); ++i) log_det += std::log(llt.matrixLLT()(i, i));
    log_det *= 2.0;
    const double quad = residual_quadratic(llt);
    const double sigma2 = quad / (n * m);
    const double ll = -0.5 * n * m * (std::log(2.0 * std::numbers::pi) + 1.0 + std::log(sigma2)) -
                      0.5 * m * log_det;
    return {ll, sigma2};
  }

  double full(double theta, double sigma, double tau) const {
    const double sigma2 = sigma * sigma;
    const Eigen::LLT<Eigen::MatrixXd> llt(correlation(theta, tau * tau / sigma2));
    if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
    const double n = static_cast<double>(y_.rows());
    const double m = static_cast<double>(y_.cols());
    double log_det = 0.0;
    for (Eigen::Index i = 0; i < y_.rows(); ++i) log_det += std::log(llt.matrixLLT()(i, i));
    log_det = 2.0 * log_det + n * std::log(sigma2);
    return -0.5 * n * m * std::log(2.0 * std::numbers::pi) - 0.5 * m * log_det -
           0.5 * residual_quadratic(llt) / sigma2;
  }

  int evaluations() const { return evaluations_; }

 private:
  Eigen::MatrixXd correlation(double theta, double lambda) const {
    std::vector<double> rho(distances_.size());
    for (std::size_t k = 0; k < rho.size(); ++k) rho[k] = matern_correlation(distances_[k], theta, spec_.nu);
    const Eigen::Index n = offset_index_.rows();
    Eigen::MatrixXd a(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index i = j; i < n; ++i) a(i, j) = rho[static_cast<std::size_t>(offset_index_(i, j))];
      a(j, j) += lambda;
    }
    return a;
  }

  // sum_m (y_m - Z d)' A^{-1} (y_m - Z d) at the GLS estimate of d.
  double residual_quadratic(const Eigen::LLT<Eigen::MatrixXd>& llt) const {
    const auto l = llt.matrixL();
    const Eigen::MatrixXd w = l.solve(y_);
    const Eigen::MatrixXd zt = l.solve(z_);
    const Eigen::VectorXd wbar = w.rowwise().mean();
    const Eigen::VectorXd d = (zt.transpose() * zt).ldlt().solve(zt.transpose() * wbar);
    return (w.colwise() - zt * d).squaredNorm();
  }

  const WindowSpec& spec_;
  const Eigen::MatrixXd& y_;
  Eigen::MatrixXd z_;
  Eigen::MatrixXi offset_index_;
  std::vector<double> distances_;
  bool degenerate_ = false;
  mutable int evaluations_ = 0;
};

struct SimplexContext {
  const WindowProblem* problem;
  const WindowSpec* spec;
};

double clamp_log(double v, const std::array<double, 2>& b) {
  return std::clamp(v, std::log(b[0]), std::log(b[1]));
}

double simplex_objective(const gsl_vector* x, void* params) {
  const auto* ctx = static_cast<const SimplexContext*>(params);
  const double lt = clamp_log(gsl_vector_get(x, 0), ctx->spec->theta_bounds);
  const double ll = clamp_log(gsl_vector_get(x, 1), ctx->spec->lambda_bounds);
  const double value = ctx->problem->profile(std::exp(lt), std::exp(ll)).log_likelihood;
  return std::isfinite(value) ? -value : std::numeric_limits<double>::max();
}

struct SimplexResult {
  double log_theta, log_lambda, value;
  bool converged;
};

SimplexResult run_simplex(const SimplexContext& ctx, double log_theta, double log_lambda,
                          double step_size, double tolerance) {
  gsl_multimin_function f{&simplex_objective, 2, const_cast<SimplexContext*>(&ctx)};
  gsl_vector* x = gsl_vector_alloc(2);
  gsl_vector* step = gsl_vector_alloc(2);
  gsl_vector_set(x, 0, log_theta);
  gsl_vector_set(x, 1, log_lambda);
  gsl_vector_set_all(step, step_size);
  gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, 2);
  gsl_multimin_fminimizer_set(s, &f, x, step);
  bool converged = false;
  for (int iter = 0; iter < 400; ++iter) {
    if (gsl_multimin_fminimizer_iterate(s) != GSL_SUCCESS) break;
    if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), tolerance) == GSL_SUCCESS) {
      converged = true;
      break;
    }
  }
  SimplexResult r{clamp_log(gsl_vector_get(s->x, 0), ctx.spec->theta_bounds),
                  clamp_log(gsl_vector_get(s->x, 1), ctx.spec->lambda_bounds), s->fval, converged};
  gsl_multimin_fminimizer_free(s);
  gsl_vector_free(step);
  gsl_vector_free(x);
  return r;
}

WindowFit fit(const WindowProblem& problem, const WindowSpec& spec, const GridGeometry& grid) {
  WindowFit out;
  if (problem.degenerate()) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    out = {nan, nan, nan, nan, false, true, 0};
    return out;
  }
  const SimplexContext ctx{&problem, &spec};
  const double span = static_cast<double>(spec.width - 1) * std::max(grid.dx, grid.dy);
  const std::array<std::pair<double, double>, 3> starts{
      {{0.1 * span, 0.01}, {0.3 * span, 0.1}, {0.9 * span, 1.0}}};
  SimplexResult best{0, 0, std::numeric_limits<double>::infinity(), false};
  for (const auto& [t, l] : starts) {
    const SimplexResult r = run_simplex(ctx, clamp_log(std::log(t), spec.theta_bounds),
                                        clamp_log(std::log(l), spec.lambda_bounds), 0.5, 2e-2);
    if (r.value < best.value) best = r;
  }
  const SimplexResult polished = run_simplex(ctx, best.log_theta, best.log_lambda, 0.05, 1e-6);
  if (polished.value <= best.value) best = polished;
  // One-dimensional refinement of the range with the nugget ratio fixed.
  const double lambda = std::exp(best.log_lambda);
  const double lo = clamp_log(best.log_theta - 0.25, spec.theta_bounds);
  const double hi = clamp_log(best.log_theta + 0.25, spec.theta_bounds);
  const auto [lt, value] = boost::math::tools::brent_find_minima(
      [&](double v) {
        const double ll = problem.profile(std::exp(v), lambda).log_likelihood;
        return std::isfinite(ll) ? -ll : std::numeric_limits<double>::max();
      },
      lo, hi, 40);
  if (value < best.value) {
    best.log_theta = lt;
    best.value = value;
  }
  const double theta = std::exp(best.log_theta);
  const ProfileValue pv = problem.profile(theta, lambda);
  const double eps = 1e-9;
  const bool at_bound = best.log_theta <= std::log(spec.theta_bounds[0]) + eps ||
                        best.log_theta >= std::log(spec.theta_bounds[1]) - eps;
  out.theta = theta;
  out.sigma = std::sqrt(pv.sigma2);
  out.tau = std::sqrt(lambda * pv.sigma2);
  out.log_likelihood = pv.log_likelihood;
  out.converged = best.converged && !at_bound && std::isfinite(pv.log_likelihood);
  out.evaluations = problem.evaluations();
  return out;
}

}  // namespace

ProfileValue profile_log_likelihood(const ReplicateField& window, const WindowSpec& spec,
                                    double theta, double lambda) {
  return WindowProblem(window, spec).profile(theta, lambda);
}

double window_log_likelihood(const ReplicateField& window, const WindowSpec& spec, double theta,
                             double sigma, double tau) {
  return WindowProblem(window, spec).full(theta, sigma, tau);
}

WindowFit window_mle(const ReplicateField& window, const WindowSpec& spec) {
  spec.validate();
  if (window.replicates() < 2) fail(ErrorCategory::kConfiguration, "window fit needs at least 2 replicates");
  const WindowProblem problem(window, spec);
  return fit(problem, spec, window.grid);
}

ReplicateField restrict_window(const ReplicateField& data, std::size_t ix0, std::size_t iy0,
                               int width) {
  const auto w = static_cast<std::size_t>(width);
  const GridGeometry& g = data.grid;
  if (ix0 + w > g.nx || iy0 + w > g.ny) fail(ErrorCategory::kConfiguration, "window leaves the grid");
  ReplicateField out;
  out.grid = {w, w, g.x0 + static_cast<double>(ix0) * g.dx, g.y0 + static_cast<double>(iy0) * g.dy,
              g.dx, g.dy};
  const auto n = static_cast<Eigen::Index>(w * w);
  out.values.resize(n, data.values.cols());
  if (data.covariates) out.covariates = Eigen::MatrixXd(n, data.covariates->cols());
  Eigen::Index row = 0;
  for (std::size_t j = iy0; j < iy0 + w; ++j) {
    for (std::size_t i = ix0; i < ix0 + w; ++i, ++row) {
      const auto src = static_cast<Eigen::Index>(g.index(i, j));
      out.values.row(row) = data.values.row(src);
      if (data.covariates) out.covariates->row(row) = data.covariates->row(src);
    }
  }
  return out;
}

std::vector<double> replicate_sd(const ReplicateField& data) {
  std::vector<double> sd(data.locations(), std::numeric_limits<double>::quiet_NaN());
  const auto m = data.values.cols();
  if (m < 2) return sd;
  for (Eigen::Index i = 0; i < data.values.rows(); ++i) {
    const auto row = data.values.row(i).array();
    sd[static_cast<std::size_t>(i)] = std::sqrt((row - row.mean()).square().sum() / static_cast<double>(m - 1));
  }
  return sd;
}

LocalEstimates sweep_windows(const ReplicateField& data, const WindowSpec& spec, int workers) {
  const auto t_setup = Clock::now();
  spec.validate();
  data.validate();
  const GridGeometry& g = data.grid;
  const auto w = static_cast<std::size_t>(spec.width);
  if (g.nx < w || g.ny < w) fail(ErrorCategory::kConfiguration, "grid is smaller than the window");
  if (data.replicates() < 2) fail(ErrorCategory::kConfiguration, "window fits need at least 2 replicates");
  const std::size_t half = w / 2;
  const std::size_t fx = g.nx - w + 1, fy = g.ny - w + 1;

  LocalEstimates est;
  est.grid = g;
  const std::size_t n = g.size();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  est.theta.assign(n, nan);
  est.sigma.assign(n, nan);
  est.tau.assign(n, nan);
  est.log_likelihood.assign(n, nan);
  est.converged.assign(n, 0);
  est.degenerate.assign(n, 0);
  est.source.resize(n);
  est.task_seconds.assign(n, 0.0);
  est.sigma_obs = replicate_sd(data);
  std::vector<WindowFit> fits(fx * fy);
  std::vector<double> task_seconds(fits.size());
  est.timing.setup_seconds = seconds_since(t_setup);

  const auto t_compute = Clock::now();
  parallel_for(fits.size(), workers, [&](std::size_t k) {
    const auto t0 = Clock::now();
    const ReplicateField window = restrict_window(data, k % fx, k / fx, spec.width);
    try {
      fits[k] = fit(WindowProblem(window, spec), spec, window.grid);
    } catch (const Error&) {
      fits[k] = {nan, nan, nan, nan, false, false, 0};
    }
    task_seconds[k] = seconds_since(t0);
  });
  est.timing.compute_seconds = seconds_since(t_compute);
  est.timing.workers = workers;
  est.timing.windows = fits.size();

  for (std::size_t iy = 0; iy < g.ny; ++iy) {
    for (std::size_t ix = 0; ix < g.nx; ++ix) {
      const std::size_t cx = std::clamp(ix, half, g.nx - 1 - half);
      const std::size_t cy = std::clamp(iy, half, g.ny - 1 - half);
      const std::size_t k = (cy - half) * fx + (cx - half);
      const std::size_t box = g.index(ix, iy);
      const WindowFit& f = fits[k];
      est.theta[box] = f.theta;
      est.sigma[box] = f.sigma;
      est.tau[box] = f.tau;
      est.log_likelihood[box] = f.log_likelihood;
      est.converged[box] = f.converged ? 1 : 0;
      est.degenerate[box] = f.degenerate ? 1 : 0;
      est.source[box] = g.index(cx, cy);
      est.task_seconds[box] = task_seconds[k];
    }
  }
  return est;
}

LocalEstimates adjust_estimates(LocalEstimates est, double tau_floor, double theta_cap) {
  for (std::size_t i = 0; i < est.size(); ++i) {
    if (est.tau[i] < tau_floor && est.sigma[i] > est.sigma_obs[i]) est.sigma[i] = est.sigma_obs[i];
    if (est.theta[i] > theta_cap) est.theta[i] = theta_cap;
  }
  return est;
}

}  // namespace lkemu
