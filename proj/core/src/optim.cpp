#include "stablehte/optim.hpp"

#include <cmath>

#include "stablehte/errors.hpp"

namespace stablehte {

void adam_step(std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads,
               const std::vector<std::string>& names, AdamState& state, const AdamConfig& config,
               double lr) {
  if (params.size() != grads.size() || params.size() != names.size())
    throw ContractError("adam_step: params, grads and names must align");
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i] = Matrix(params[i]->rows(), params[i]->cols());
      state.v[i] = Matrix(params[i]->rows(), params[i]->cols());
    }
  }
  if (state.m.size() != params.size())
    throw ContractError("adam_step: state was initialized for a different parameter group");

  state.step += 1;
  const double b1 = config.beta1;
  const double b2 = config.beta2;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.step));

  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = *params[i];
    const Matrix& g = *grads[i];
    if (!p.same_shape(g))
      throw ContractError("adam_step: gradient shape mismatch for " + names[i]);
    if (!g.all_finite()) throw OptimizerError("adam_step: non-finite gradient for " + names[i]);

    auto pd = p.data();
    auto gd = g.data();
    auto md = state.m[i].data();
    auto vd = state.v[i].data();
    for (std::size_t k = 0; k < pd.size(); ++k) {
      md[k] = b1 * md[k] + (1.0 - b1) * gd[k];
      vd[k] = b2 * vd[k] + (1.0 - b2) * gd[k] * gd[k];
      const double mhat = md[k] / corr1;
      const double vhat = vd[k] / corr2;
      pd[k] -= lr * mhat / (std::sqrt(vhat) + config.eps);
    }
    if (!p.all_finite()) throw OptimizerError("adam_step: non-finite parameter " + names[i]);
  }
}

double decayed_lr(double lr0, double factor, int period, long iter) {
  if (factor == 1.0 || period <= 0) return lr0;
  return lr0 * std::pow(factor, static_cast<double>(iter) / period);
}

}  // namespace stablehte
