#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "stablehte/dataset.hpp"
#include "stablehte/losses.hpp"
#include "stablehte/nets.hpp"

namespace stablehte {

// Knobs of the alternating optimization. One iteration runs k_net network
// steps on the weighted factual objective with the sample weights frozen,
// then k_w weight steps on the reweighting objective with the network
// frozen. The weight phase can be switched off entirely, which is how the
// plain backbones are trained.
struct TrainConfig {
  int max_iters = 3000;
  double lr = 1e-3;
  double lr_decay = 1.0;  // multiplicative factor applied every decay period
  int lr_decay_period = 1000;
  int patience = 500;  // iterations without validation improvement
  int k_net = 1;
  int k_w = 1;
  double lr_w = 0.0;  // weight-phase step size; 0 means reuse lr
  std::uint64_t seed = 0;
  int rff_a = 5;  // feature counts of the frozen dependence banks
  int rff_b = 5;
  int ld_row_cap = 4096;  // above this, decorrelation sees a row sample
  int ld_batch = 1024;
  bool learn_weights = true;
  bool record_trace = true;

  void validate() const;
};

// Component values recorded once per iteration. Dependence and balance
// entries hold the raw component values (before their coefficients).
struct TraceRow {
  int iter = 0;
  double lr = 0.0;
  double outcome = 0.0;         // weighted factual loss
  double net_balance = 0.0;     // balance value inside the network objective
  double w_balance = 0.0;       // balance value inside the weight objective
  double pre_treatment = 0.0;   // dependence at the prediction tap
  double representation = 0.0;  // dependence at the representation tap
  double layerwise = 0.0;       // summed dependence at the remaining taps
  double anchor = 0.0;          // (w-1)^2 penalty
  double weight_total = 0.0;    // full weight objective
  double val = 0.0;             // unweighted factual validation loss
};

struct TrainState {
  int iterations_run = 0;
  int best_iter = -1;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<TraceRow> trace;
};

struct TrainResult {
  Params params;           // snapshot at the best validation iterate
  SampleWeights weights;   // matching weight snapshot
  TrainState state;
};

// Alternating optimization of the backbone and the sample weights, with
// Adam, exponential lr decay and early stopping on the unweighted factual
// validation loss. Returns the best evaluated snapshot.
TrainResult train(const BackboneConfig& cfg, const Dataset& ds_train, const Dataset& ds_val,
                  const LossWeights& lw, const TrainConfig& tc);

// Unweighted mean factual loss (cross-entropy on logits for binary, squared
// error for continuous) of the given parameters on a dataset.
double factual_validation_loss(const BackboneConfig& cfg, const Params& params, const Dataset& ds);

struct EffectEstimates {
  std::vector<double> y0_hat;
  std::vector<double> y1_hat;
  std::vector<double> ite_hat;  // y1_hat - y0_hat per unit
  double ate_hat = 0.0;         // mean of ite_hat
};

EffectEstimates predict_effects(const BackboneConfig& cfg, const Params& params, const Matrix& X);

}  // namespace stablehte
