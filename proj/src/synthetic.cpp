#include "lkemu/synthetic.hpp"

#include "lkemu/error.hpp"
#include "lkemu/parallel.hpp"
#include "lkemu/random.hpp"

namespace lkemu {

SyntheticMethod parse_synthetic_method(const std::string& name) {
  if (name == "local") return SyntheticMethod::kLocal;
  if (name == "dense") return SyntheticMethod::kDense;
  if (name == "lk") return SyntheticMethod::kLK;
  fail(ErrorCategory::kConfiguration, "unknown synthetic method '" + name + "' (local, dense, lk)");
}

std::string synthetic_method_name(SyntheticMethod method) {
  switch (method) {
    case SyntheticMethod::kLocal:
      return "local";
    case SyntheticMethod::kDense:
      return "dense";
    case SyntheticMethod::kLK:
      return "lk";
  }
  return "local";
}

LocalEstimates sample_parameters(const GridGeometry& grid, const ParamFields& fields) {
  LocalEstimates est;
  est.grid = grid;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Point p = grid.point(i);
    est.theta.push_back(fields.theta(p));
    est.sigma.push_back(fields.sigma(p));
    est.tau.push_back(fields.tau(p));
  }
  est.sigma_obs = est.sigma;
  est.log_likelihood.assign(grid.size(), 0.0);
  est.converged.assign(grid.size(), 1);
  est.degenerate.assign(grid.size(), 0);
  est.source.resize(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) est.source[i] = i;
  est.task_seconds.assign(grid.size(), 0.0);
  return est;
}

ReplicateField synthetic_ensemble(const GridGeometry& grid, const ParamFields& fields,
                                  std::size_t m, std::uint64_t seed,
                                  const SyntheticOptions& options) {
  if (grid.size() == 0) fail(ErrorCategory::kConfiguration, "synthetic grid is empty");
  // Synthetic data get their own seed so a pipeline that reuses the master
  // seed for simulation does not replay the same noise.
  auto derive = make_stream(seed, Stream::kSynthetic, 0);
  const std::uint64_t sub = derive();
  ReplicateField out;
  out.grid = grid;
  out.values.resize(static_cast<Eigen::Index>(grid.size()), static_cast<Eigen::Index>(m));
  switch (options.method) {
    case SyntheticMethod::kLocal: {
      const LocalSimulator sim(fields.theta, fields.sigma, fields.tau, grid, options.window,
                               options.nu, options.workers);
      parallel_for(m, options.workers, [&](std::size_t r) {
        out.values.col(static_cast<Eigen::Index>(r)) = sim.simulate(sub, r);
      });
      break;
    }
    case SyntheticMethod::kDense: {
      if (fields.theta.kind() != ScalarField::Kind::kConstant ||
          fields.sigma.kind() != ScalarField::Kind::kConstant ||
          fields.tau.kind() != ScalarField::Kind::kConstant) {
        fail(ErrorCategory::kUnsupported, "dense synthetic data need constant parameters");
      }
      const MaternParams p{fields.sigma.min(), fields.theta.min(), options.nu, fields.tau.min()};
      p.validate();
      const auto pts = grid.locations();
      const auto n = static_cast<Eigen::Index>(pts.size());
      if (n > 5000) fail(ErrorCategory::kConfiguration, "dense synthetic data limited to 5000 locations");
      Eigen::MatrixXd k(n, n);
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
          k(i, j) = matern_covariance(distance(pts[static_cast<std::size_t>(i)], pts[static_cast<std::size_t>(j)]), p);
          k(j, i) = k(i, j);
        }
      }
      out.values = dense_simulate(k, m, sub);
      break;
    }
    case SyntheticMethod::kLK: {
      if (options.table == nullptr) fail(ErrorCategory::kConfiguration, "LK synthetic data need a calibration table");
      LatticeConfig config = options.table->config;
      config.domain = grid.extent();
      const LKModel model = encode_nonstationary(sample_parameters(grid, fields), *options.table,
                                                 build_lattice(config), options.workers);
      const auto pts = grid.locations();
      out.values = simulate(model, pts, m, sub, {true, options.workers});
      break;
    }
  }
  return out;
}

}  // namespace lkemu
