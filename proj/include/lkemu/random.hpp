#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace lkemu {

// Stages used to key independent random streams off one master seed.
enum class Stream : std::uint64_t {
  kCoefficients = 1,
  kNugget = 2,
  kDense = 3,
  kLocal = 4,
  kSynthetic = 5,
  kProbe = 6,
};

// Counter-based stream derivation: the generator for (seed, stage, index,
// sub) depends only on those four keys, never on scheduling.
std::mt19937_64 make_stream(std::uint64_t seed, Stream stage, std::uint64_t index,
                            std::uint64_t sub = 0);

void fill_standard_normal(std::mt19937_64& gen, std::span<double> out);

}  // namespace lkemu
