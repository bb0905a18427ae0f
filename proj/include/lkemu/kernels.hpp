#pragma once

namespace lkemu {

struct MaternParams {
  double sigma = 1.0;  // process standard deviation
  double theta = 1.0;  // range
  double nu = 1.0;     // smoothness
  double tau = 0.0;    // nugget standard deviation

  void validate() const;
};

// Wendland C4 radial function, compactly supported on [0, 1].
double wendland_c4(double d);

// Matern correlation 2^(1-nu)/Gamma(nu) (d/theta)^nu K_nu(d/theta); no
// sqrt(2 nu) factor in the scaling.
double matern_correlation(double d, double theta, double nu);

// sigma^2 * correlation, plus tau^2 when d == 0.
double matern_covariance(double d, const MaternParams& params);

// Radial kernel psi whose two-dimensional self-convolution yields a Matern
// field of smoothness nu_target. The kernel is a Matern-shaped function of
// smoothness nu_target/2 - dim/4, scaled so that the integral of psi(|u|)^2
// over the plane is 1.
class ConvolutionKernel {
 public:
  explicit ConvolutionKernel(double nu_target, int dim = 2);

  double operator()(double d) const;
  double kernel_smoothness() const { return kernel_nu_; }
  double target_smoothness() const { return nu_target_; }
  double normalization() const { return scale_; }

  // Integral of psi(|u|)^2 over |u| > radius.
  double tail_mass(double radius) const;

 private:
  double nu_target_;
  double kernel_nu_;
  double scale_;
};

double convolution_kernel_psi(double d, double nu_target, int dim = 2);

}  // namespace lkemu
