#include "lkemu/kernels.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "lkemu/error.hpp"

namespace lkemu {

void MaternParams::validate() const {
  if (!(sigma > 0) || !(theta > 0) || !(nu > 0) || !(tau >= 0)) {
    fail(ErrorCategory::kParameter,
         "Matern parameters need sigma > 0, theta > 0, nu > 0, tau >= 0 (got sigma=" +
             std::to_string(sigma) + ", theta=" + std::to_string(theta) +
             ", nu=" + std::to_string(nu) + ", tau=" + std::to_string(tau) + ")");
  }
}

double wendland_c4(double d) {
  if (!(d >= 0)) fail(ErrorCategory::kDomain, "wendland_c4: negative distance");
  if (d >= 1.0) return 0.0;
  const double u = 1.0 - d;
  const double u2 = u * u;
  return u2 * u2 * u2 * (35.0 * d * d + 18.0 * d + 3.0) / 3.0;
}

double matern_correlation(double d, double theta, double nu) {
  if (!(theta > 0) || !(nu > 0)) {
    fail(ErrorCategory::kParameter, "matern_correlation: theta and nu must be positive");
  }
  if (!(d >= 0)) fail(ErrorCategory::kDomain, "matern_correlation: negative distance");
  const double r = d / theta;
  if (r == 0.0) return 1.0;
  if (nu == 0.5) return std::exp(-r);
  // Below this the Bessel factor overflows; the limit is 1.
  if (r < 1e-100) return 1.0;
  if (r > 700.0) return 0.0;
  const double log_rho = (1.0 - nu) * std::numbers::ln2 - std::lgamma(nu) + nu * std::log(r) +
                         std::log(std::cyl_bessel_k(nu, r));
  return std::min(1.0, std::exp(log_rho));
}

double matern_covariance(double d, const MaternParams& params) {
  params.validate();
  double cov = params.sigma * params.sigma * matern_correlation(d, params.theta, params.nu);
  if (d == 0.0) cov += params.tau * params.tau;
  return cov;
}

namespace {

double radial_square_integral(double nu, double lower) {
  using boost::math::quadrature::gauss_kronrod;
  auto f = [nu](double r) {
    const double m = matern_correlation(r, 1.0, nu);
    return 2.0 * std::numbers::pi * r * m * m;
  };
  return gauss_kronrod<double, 61>::integrate(f, lower, std::numeric_limits<double>::infinity(),
                                              15, 1e-13);
}

}  // namespace

ConvolutionKernel::ConvolutionKernel(double nu_target, int dim) : nu_target_(nu_target) {
  if (dim != 2) {
    fail(ErrorCategory::kUnsupported, "convolution kernel: only dimension 2 is supported");
  }
  kernel_nu_ = nu_target / 2.0 - dim / 4.0;
  if (!(kernel_nu_ > 0)) {
    fail(ErrorCategory::kUnsupported,
         "convolution kernel: target smoothness " + std::to_string(nu_target) +
             " implies nonpositive kernel smoothness " + std::to_string(kernel_nu_));
  }
  if (kernel_nu_ == 0.5) {
    // Integral of exp(-2r) 2 pi r dr is pi/2.
    scale_ = std::sqrt(2.0 / std::numbers::pi);
  } else {
    scale_ = 1.0 / std::sqrt(radial_square_integral(kernel_nu_, 0.0));
  }
}

double ConvolutionKernel::operator()(double d) const {
  return scale_ * matern_correlation(d, 1.0, kernel_nu_);
}

double ConvolutionKernel::tail_mass(double radius) const {
  if (radius <= 0) return 1.0;
  if (kernel_nu_ == 0.5) {
    return scale_ * scale_ * 2.0 * std::numbers::pi * std::exp(-2.0 * radius) *
           (2.0 * radius + 1.0) / 4.0;
  }
  return scale_ * scale_ * radial_square_integral(kernel_nu_, radius);
}

double convolution_kernel_psi(double d, double nu_target, int dim) {
  return ConvolutionKernel(nu_target, dim)(d);
}

}  // namespace lkemu
