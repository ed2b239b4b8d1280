#pragma once

#include <string>
#include <vector>

#include "stablehte/matrix.hpp"

namespace stablehte {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment estimates, one slot per parameter matrix. The step
// counter is shared across all slots.
struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  long step = 0;

  void reset() {
    m.clear();
    v.clear();
    step = 0;
  }
};

// One bias-corrected Adam update over a parameter group. params and grads
// must align one-to-one; names are used in error messages. Throws
// OptimizerError if any gradient or updated parameter is non-finite.
void adam_step(std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads,
               const std::vector<std::string>& names, AdamState& state, const AdamConfig& config,
               double lr);

// lr0 * factor^(iter / period), evaluated in doubles. factor = 1 keeps the
// rate constant.
double decayed_lr(double lr0, double factor, int period, long iter);

}  // namespace stablehte
