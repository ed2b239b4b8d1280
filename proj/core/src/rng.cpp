#include "stablehte/rng.hpp"

#include <cmath>
#include <numbers>

namespace stablehte {

std::uint64_t fnv1a64(std::string_view s) { return fnv1a64(s.data(), s.size()); }

std::uint64_t fnv1a64(const void* data, std::size_t bytes) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

RngState::RngState(std::uint64_t seed) : seed_(seed), engine_(seed) {}

RngState RngState::fork(std::string_view label) const {
  return RngState(splitmix64(seed_ ^ fnv1a64(label)));
}

RngState RngState::fork(std::string_view label, std::uint64_t index) const {
  return RngState(splitmix64(splitmix64(seed_ ^ fnv1a64(label)) + index));
}

double RngState::uniform() {
  ++draws_;
  // 53-bit mantissa construction; avoids distribution-object state.
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double RngState::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double RngState::normal() {
  // Polar Box-Muller without caching the second value, so every call maps to
  // a fixed number of engine steps regardless of surrounding code.
  for (;;) {
    ++draws_;
    double u = 2.0 * static_cast<double>(engine_() >> 11) * 0x1.0p-53 - 1.0;
    double v = 2.0 * static_cast<double>(engine_() >> 11) * 0x1.0p-53 - 1.0;
    double s = u * u + v * v;
    if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
  }
}

std::uint64_t RngState::next_u64() {
  ++draws_;
  return engine_();
}

std::uint64_t RngState::below(std::uint64_t n) {
  // Rejection sampling for an unbiased value in [0, n).
  const std::uint64_t limit = n == 0 ? 0 : (~std::uint64_t{0} - (~std::uint64_t{0} % n));
  for (;;) {
    ++draws_;
    std::uint64_t x = engine_();
    if (x < limit || n == 0) return n == 0 ? 0 : x % n;
  }
}

void RngState::fill_normal(Matrix& m) { fill_normal(m.data()); }

void RngState::fill_normal(std::span<double> out) {
  for (double& v : out) v = normal();
}

void RngState::fill_uniform(std::span<double> out, double lo, double hi) {
  for (double& v : out) v = uniform(lo, hi);
}

std::vector<int> RngState::permutation(int n) {
  std::vector<int> p(n);
  for (int i = 0; i < n; ++i) p[i] = i;
  for (int i = n - 1; i > 0; --i) {
    int j = static_cast<int>(below(static_cast<std::uint64_t>(i) + 1));
    std::swap(p[i], p[j]);
  }
  return p;
}

}  // namespace stablehte
