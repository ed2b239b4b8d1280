#include "stablehte/rff.hpp"

#include <cmath>
#include <numbers>

#include "stablehte/errors.hpp"

namespace stablehte {

RffBank RffBank::draw(int columns, int n_a, int n_b, RngState& rng) {
  if (columns < 1) throw ContractError("rff bank: need at least one column");
  if (n_a < 1 || n_b < 1) throw ConfigError("rff bank: feature counts must be at least 1");
  RffBank bank;
  bank.n_a = n_a;
  bank.n_b = n_b;
  bank.a_side.resize(static_cast<std::size_t>(columns));
  bank.b_side.resize(static_cast<std::size_t>(columns));
  const double two_pi = 2.0 * std::numbers::pi;
  for (int c = 0; c < columns; ++c) {
    RngState col_rng = rng.fork("column", static_cast<std::uint64_t>(c));
    auto& a = bank.a_side[static_cast<std::size_t>(c)];
    auto& b = bank.b_side[static_cast<std::size_t>(c)];
    a.freqs.resize(static_cast<std::size_t>(n_a));
    a.phases.resize(static_cast<std::size_t>(n_a));
    b.freqs.resize(static_cast<std::size_t>(n_b));
    b.phases.resize(static_cast<std::size_t>(n_b));
    col_rng.fill_normal(a.freqs);
    col_rng.fill_uniform(a.phases, 0.0, two_pi);
    col_rng.fill_normal(b.freqs);
    col_rng.fill_uniform(b.phases, 0.0, two_pi);
  }
  return bank;
}

Matrix rff_features(std::span<const double> col, const RffSide& side) {
  const int n = static_cast<int>(col.size());
  const int k = side.k();
  const double root2 = std::sqrt(2.0);
  Matrix out(n, k);
  for (int i = 0; i < n; ++i) {
    auto row = out.row(i);
    for (int j = 0; j < k; ++j)
      row[j] = root2 * std::cos(side.freqs[static_cast<std::size_t>(j)] * col[i] +
                                side.phases[static_cast<std::size_t>(j)]);
  }
  return out;
}

}  // namespace stablehte
