#pragma once

#include <cstdint>
#include <string>

#include "lkemu/encode.hpp"
#include "lkemu/geometry.hpp"
#include "lkemu/lkmodel.hpp"
#include "lkemu/oracle.hpp"

namespace lkemu {

struct ParamFields {
  ScalarField theta = ScalarField::constant(3.0);
  ScalarField sigma = ScalarField::constant(1.0);
  ScalarField tau = ScalarField::constant(0.1);
};

enum class SyntheticMethod {
  kLocal,  // moving-window local simulation
  kDense,  // exact Matern, constant parameters only
  kLK,     // LK encoding of the parameter fields
};

SyntheticMethod parse_synthetic_method(const std::string& name);
std::string synthetic_method_name(SyntheticMethod method);

struct SyntheticOptions {
  SyntheticMethod method = SyntheticMethod::kLocal;
  double nu = 1.0;
  int window = 11;
  // Required for kLK.
  const CalibrationTable* table = nullptr;
  int workers = 1;
};

// Parameter fields sampled at the grid boxes as LocalEstimates.
LocalEstimates sample_parameters(const GridGeometry& grid, const ParamFields& fields);

// M independent replicate fields; column r depends only on (seed, r).
ReplicateField synthetic_ensemble(const GridGeometry& grid, const ParamFields& fields,
                                  std::size_t m, std::uint64_t seed,
                                  const SyntheticOptions& options = {});

}  // namespace lkemu
