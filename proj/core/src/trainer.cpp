#include "stablehte/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "stablehte/errors.hpp"
#include "stablehte/optim.hpp"
#include "stablehte/rng.hpp"

namespace stablehte {

namespace a = ad;

void TrainConfig::validate() const {
  if (max_iters < 1) throw ConfigError("train: max_iters must be at least 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("train: lr must be positive");
  if (lr_w < 0.0 || !std::isfinite(lr_w)) throw ConfigError("train: lr_w must be non-negative");
  if (!(lr_decay > 0.0)) throw ConfigError("train: lr decay factor must be positive");
  if (lr_decay_period < 1) throw ConfigError("train: lr decay period must be at least 1");
  if (patience < 1) throw ConfigError("train: patience must be at least 1");
  if (k_net < 1 || k_w < 1) throw ConfigError("train: inner step counts must be at least 1");
  if (rff_a < 1 || rff_b < 1) throw ConfigError("train: feature counts must be at least 1");
  if (ld_row_cap < 1 || ld_batch < 1) throw ConfigError("train: row caps must be at least 1");
}

namespace {

void require_finite(double v, const char* term) {
  if (!std::isfinite(v)) throw DivergenceError(std::string("training diverged: ") + term +
                                               " became non-finite");
}

// Factual loss of precomputed head outputs, unweighted mean.
double factual_loss_from_outputs(const Matrix& out0, const Matrix& out1,
                                 const std::vector<int>& t, const std::vector<double>& yf,
                                 OutcomeKind kind) {
  const int n = out0.rows();
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double o = t[i] == 1 ? out1(i, 0) : out0(i, 0);
    if (kind == OutcomeKind::Binary) {
      acc += yf[i] * a::softplus_value(-o) + (1.0 - yf[i]) * a::softplus_value(o);
    } else {
      const double d = o - yf[i];
      acc += d * d;
    }
  }
  return acc / static_cast<double>(n);
}

}  // namespace

double factual_validation_loss(const BackboneConfig& cfg, const Params& params,
                               const Dataset& ds) {
  a::Tape tape;
  ForwardGraph fwd = forward_graph(tape, cfg, params, ds.X, nullptr, false);
  return factual_loss_from_outputs(fwd.out0.value(), fwd.out1.value(), ds.t, ds.yf, cfg.outcome);
}

EffectEstimates predict_effects(const BackboneConfig& cfg, const Params& params, const Matrix& X) {
  Predictions pred = predict(cfg, params, X);
  EffectEstimates est;
  est.y0_hat = std::move(pred.y0_hat);
  est.y1_hat = std::move(pred.y1_hat);
  const std::size_t n = est.y0_hat.size();
  est.ite_hat.resize(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    est.ite_hat[i] = est.y1_hat[i] - est.y0_hat[i];
    acc += est.ite_hat[i];
  }
  est.ate_hat = n == 0 ? 0.0 : acc / static_cast<double>(n);
  return est;
}

TrainResult train(const BackboneConfig& cfg, const Dataset& ds_train, const Dataset& ds_val,
                  const LossWeights& lw, const TrainConfig& tc) {
  cfg.validate();
  lw.validate();
  tc.validate();
  ds_train.validate();
  ds_val.validate();
  if (ds_train.m() != ds_val.m())
    throw DimensionError("train: training and validation covariate widths differ");
  if (ds_train.outcome != ds_val.outcome)
    throw DataError("train: training and validation outcome kinds differ");
  if (cfg.outcome != ds_train.outcome)
    throw ConfigError("train: backbone outcome kind does not match the data");

  const int n = ds_train.n();
  const std::vector<int>& t = ds_train.t;
  std::vector<int> treated = ds_train.treated_indices();
  std::vector<int> control = ds_train.control_indices();
  if (treated.empty() || control.empty())
    throw OverlapError("train: training data must contain both treatment arms");

  RngState rng(tc.seed);
  RngState init_rng = rng.fork("init");
  Params params = init_params(cfg, ds_train.m(), init_rng);
  SampleWeights weights = SampleWeights::ones(n);

  // The dependence banks are drawn unconditionally so the random stream does
  // not depend on which loss terms are active.
  RngState pre_rng = rng.fork("bank-pre");
  RngState rep_rng = rng.fork("bank-rep");
  RffBank bank_pre = RffBank::draw(cfg.h_y, tc.rff_a, tc.rff_b, pre_rng);
  RffBank bank_rep = RffBank::draw(cfg.h_r, tc.rff_a, tc.rff_b, rep_rng);
  std::vector<RffBank> bank_layers;
  const int n_layer_taps = (cfg.d_r - 1) + (cfg.d_y - 1);
  for (int k = 0; k < n_layer_taps; ++k) {
    RngState layer_rng = rng.fork("bank-layer", static_cast<std::uint64_t>(k));
    const int cols = k < cfg.d_r - 1 ? cfg.h_r : cfg.h_y;
    bank_layers.push_back(RffBank::draw(cols, tc.rff_a, tc.rff_b, layer_rng));
  }
  RngState ld_rng = rng.fork("ld-rows");

  const Matrix& X = ds_train.X;
  AdamState net_state;
  AdamState w_state;
  const AdamConfig adam_cfg{};

  TrainResult result;
  result.params = params;
  result.weights = weights;

  const double base_lr_w = tc.lr_w > 0.0 ? tc.lr_w : tc.lr;
  for (int iter = 0; iter < tc.max_iters; ++iter) {
    const double lr = decayed_lr(tc.lr, tc.lr_decay, tc.lr_decay_period, iter);
    const double lr_w = decayed_lr(base_lr_w, tc.lr_decay, tc.lr_decay_period, iter);
    TraceRow row;
    row.iter = iter;
    row.lr = lr;

    // Phase a: network step(s) with the weights frozen.
    const Matrix w_values = Matrix::column(weights.values());
    for (int s = 0; s < tc.k_net; ++s) {
      a::Tape tape;
      ForwardGraph fwd = forward_graph(tape, cfg, params, X, &t, true);
      a::Var w_const = tape.constant(w_values);
      NetworkLossParts parts = network_loss_node(tape, cfg, fwd, t, ds_train.yf, w_const, lw);
      require_finite(parts.outcome, "factual loss");
      require_finite(parts.balance, "balance");
      require_finite(parts.total.value()(0, 0), "network objective");
      tape.backward(parts.total);
      std::vector<Matrix*> slots;
      std::vector<const Matrix*> grads;
      slots.reserve(params.mats.size());
      grads.reserve(params.mats.size());
      for (std::size_t i = 0; i < params.mats.size(); ++i) {
        slots.push_back(&params.mats[i]);
        grads.push_back(&fwd.param_vars[i].grad());
      }
      adam_step(slots, grads, params.names, net_state, adam_cfg, lr);
      row.outcome = parts.outcome;
      row.net_balance = parts.balance;
    }

    // Phase b: weight step(s) with the network frozen.
    if (tc.learn_weights) {
      for (int s = 0; s < tc.k_w; ++s) {
        a::Tape tape;
        ForwardGraph fwd = forward_graph(tape, cfg, params, X, &t, false);
        a::Var theta = tape.leaf(weights.theta, "theta_w");
        a::Var w = a::softplus(theta);
        WeightLossInputs in;
        in.z_pre = fwd.z_pre;
        in.z_rep = fwd.z_rep;
        in.z_layers = fwd.z_layers;
        in.treated_rows = treated;
        in.control_rows = control;
        if (n > tc.ld_row_cap) {
          in.ld_rows.resize(static_cast<std::size_t>(tc.ld_batch));
          for (int& r : in.ld_rows) r = static_cast<int>(ld_rng.below(static_cast<std::uint64_t>(n)));
        }
        WeightLossParts parts =
            weight_loss_node(tape, in, w, lw, bank_pre, bank_rep, bank_layers, std::nullopt);
        require_finite(parts.balance, "weighted balance");
        require_finite(parts.pre_treatment, "prediction-tap dependence");
        require_finite(parts.representation, "representation dependence");
        require_finite(parts.layerwise, "layer dependence");
        require_finite(parts.anchor, "weight anchor");
        require_finite(parts.total.value()(0, 0), "weight objective");
        tape.backward(parts.total);
        std::vector<Matrix*> slots{&weights.theta};
        std::vector<const Matrix*> grads{&theta.grad()};
        static const std::vector<std::string> names{"theta_w"};
        adam_step(slots, grads, names, w_state, adam_cfg, lr_w);
        row.w_balance = parts.balance;
        row.pre_treatment = parts.pre_treatment;
        row.representation = parts.representation;
        row.layerwise = parts.layerwise;
        row.anchor = parts.anchor;
        row.weight_total = parts.total.value()(0, 0);
      }
    }

    const double val = factual_validation_loss(cfg, params, ds_val);
    require_finite(val, "validation loss");
    row.val = val;
    if (tc.record_trace) result.state.trace.push_back(row);
    result.state.iterations_run = iter + 1;

    if (val < result.state.best_val) {
      result.state.best_val = val;
      result.state.best_iter = iter;
      result.params = params;
      result.weights = weights;
    }
    if (iter - result.state.best_iter >= tc.patience) break;
  }
  return result;
}

}  // namespace stablehte
