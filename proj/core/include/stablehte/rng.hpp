#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

#include "stablehte/matrix.hpp"

namespace stablehte {

std::uint64_t fnv1a64(std::string_view s);
std::uint64_t fnv1a64(const void* data, std::size_t bytes);
std::uint64_t splitmix64(std::uint64_t x);

// Deterministic random stream. Independent streams for independent concerns
// are made with fork(label); the child seed depends only on the parent seed
// and the label, never on how many draws the parent has made, so adding a
// draw in one code path cannot shift the values another path sees.
class RngState {
 public:
  explicit RngState(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t draws() const { return draws_; }

  RngState fork(std::string_view label) const;
  RngState fork(std::string_view label, std::uint64_t index) const;

  double uniform();                       // [0, 1)
  double uniform(double lo, double hi);
  double normal();                        // standard normal
  std::uint64_t next_u64();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  void fill_normal(Matrix& m);
  void fill_normal(std::span<double> out);
  void fill_uniform(std::span<double> out, double lo, double hi);

  // Fisher-Yates permutation of 0..n-1.
  std::vector<int> permutation(int n);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::uint64_t draws_ = 0;
};

}  // namespace stablehte
