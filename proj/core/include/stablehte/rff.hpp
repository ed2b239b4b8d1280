#pragma once

#include <vector>

#include "stablehte/matrix.hpp"
#include "stablehte/rng.hpp"

namespace stablehte {

// One side of a random Fourier feature map: k frequencies from N(0,1) and k
// phases from U(0, 2*pi). Feature j of a scalar x is sqrt(2)*cos(w_j*x+phi_j).
struct RffSide {
  std::vector<double> freqs;
  std::vector<double> phases;

  int k() const { return static_cast<int>(freqs.size()); }
};

// Frozen feature maps for a group of measured columns: column c gets an
// A-side (n_a features) and a B-side (n_b features), so a dependence score
// between columns a and b always pairs a's A-side with b's B-side. Draw once
// per run and reuse; a moving bank would make the objective surface drift
// between alternating updates.
struct RffBank {
  int n_a = 5;
  int n_b = 5;
  std::vector<RffSide> a_side;  // one per column
  std::vector<RffSide> b_side;

  int columns() const { return static_cast<int>(a_side.size()); }

  static RffBank draw(int columns, int n_a, int n_b, RngState& rng);
};

// Plain-value feature map, entry (i,j) = sqrt(2)*cos(w_j*col_i + phi_j).
Matrix rff_features(std::span<const double> col, const RffSide& side);

}  // namespace stablehte
