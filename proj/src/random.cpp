#include "lkemu/random.hpp"

namespace lkemu {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::mt19937_64 make_stream(std::uint64_t seed, Stream stage, std::uint64_t index,
                            std::uint64_t sub) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(stage));
  h = splitmix64(h ^ index);
  h = splitmix64(h ^ sub);
  std::seed_seq seq{static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  return std::mt19937_64(seq);
}

void fill_standard_normal(std::mt19937_64& gen, std::span<double> out) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& v : out) v = normal(gen);
}

}  // namespace lkemu
