#pragma once

#include <optional>
#include <span>
#include <vector>

#include "stablehte/autodiff.hpp"
#include "stablehte/dataset.hpp"
#include "stablehte/matrix.hpp"
#include "stablehte/rff.hpp"

namespace stablehte {

// Coefficients of the composite objectives. alpha weighs the treated/control
// balance term, gamma1..gamma3 weigh the decorrelation terms at the
// pre-treatment tap, the representation tap and the per-layer taps, and
// lambda is the l2 penalty on outcome-head weights.
struct LossWeights {
  double alpha = 0.0;
  double gamma1 = 0.0;
  double gamma2 = 0.0;
  double gamma3 = 0.0;
  double lambda = 0.0;

  void validate() const;
};

// Learnable per-unit weights, kept nonnegative through w = softplus(theta).
struct SampleWeights {
  Matrix theta;  // n x 1 free parameters

  static SampleWeights ones(int n);  // theta chosen so w is exactly 1
  static double inverse_softplus(double w);
  int n() const { return theta.rows(); }
  std::vector<double> values() const;
};

// Median of pooled pairwise squared distances between rows of the two
// groups; the usual heuristic for picking an RBF kernel width. Falls back to
// 1 when the median vanishes (all rows identical).
double median_bandwidth(const Matrix& rep_t, const Matrix& rep_c);

// ---- Graph builders -------------------------------------------------------
// All builders produce a 1x1 node on the operands' tape. Callers choose what
// is a leaf and what is a constant, which is how the alternating training
// phases freeze one parameter group while updating the other.

// Squared RBF-kernel discrepancy between the two weighted empirical
// distributions (V-statistic). Weights are normalized per group inside.
ad::Var mmd2_node(ad::Tape& tape, ad::Var rep_t, ad::Var rep_c, ad::Var w_t, ad::Var w_c,
                  double bandwidth);

// Stacked feature map for all columns of z: column c contributes its side's
// k features, giving n x (m*k).
ad::Var rff_features_node(ad::Tape& tape, ad::Var z, const std::vector<const RffSide*>& sides);

// Dependence score between two scalar columns: squared Frobenius norm of the
// weighted cross-covariance of their feature maps.
ad::Var hsic_rff_node(ad::Tape& tape, ad::Var a, ad::Var b, ad::Var w, const RffSide& side_a,
                      const RffSide& side_b);

// Sum of pairwise dependence scores over all column pairs a <= b of z,
// including the diagonal. Uses one stacked covariance matrix and a block
// mask rather than m*(m+1)/2 separate small graphs.
ad::Var decorrelation_node(ad::Tape& tape, ad::Var z, ad::Var w, const RffBank& bank);

// (1/n) * sum (w_i - 1)^2. Anchors the weights away from the all-zero
// degenerate solution.
ad::Var weight_penalty_node(ad::Tape& tape, ad::Var w);

// Factual prediction loss: weighted mean of per-unit cross-entropy (binary)
// or squared error (continuous) on the head matching each unit's treatment,
// plus lambda * sum of squared head weights. `w` is usually a constant here;
// gradient flows into predictions and head parameters.
ad::Var outcome_loss_node(ad::Tape& tape, ad::Var out0, ad::Var out1, const std::vector<int>& t,
                          const std::vector<double>& yf, ad::Var w, double lambda,
                          const std::vector<ad::Var>& head_weights, OutcomeKind kind);

// Composite weight objective. Terms with a zero coefficient are not built at
// all, so their cost (and their nodes) vanish from the tape.
struct WeightLossParts {
  ad::Var total;
  double balance = 0.0;        // value of the treated/control term
  double pre_treatment = 0.0;  // value of the Z^p term
  double representation = 0.0; // value of the Z^r term
  double layerwise = 0.0;      // summed value of the Z^o terms
  double anchor = 0.0;         // value of the (w-1)^2 term
};

struct WeightLossInputs {
  ad::Var z_pre;                 // n x d, pre-treatment combined activations
  ad::Var z_rep;                 // n x d, final representation
  std::vector<ad::Var> z_layers; // intermediate activations
  std::vector<int> treated_rows;
  std::vector<int> control_rows;
  // When non-empty, the decorrelation terms are evaluated on these rows only
  // (the balance term always sees all rows). Keeps the per-step cost bounded
  // on large batches.
  std::vector<int> ld_rows;
};

WeightLossParts weight_loss_node(ad::Tape& tape, const WeightLossInputs& in, ad::Var w,
                                 const LossWeights& lw, const RffBank& bank_pre,
                                 const RffBank& bank_rep, const std::vector<RffBank>& bank_layers,
                                 std::optional<double> mmd_bandwidth);

// ---- Plain-value entry points ---------------------------------------------
// Thin wrappers that build the same graphs on a scratch tape and read the
// value, so there is exactly one implementation of each formula.

double mmd2_weighted(const Matrix& rep_t, const Matrix& rep_c, std::span<const double> w_t,
                     std::span<const double> w_c,
                     std::optional<double> bandwidth = std::nullopt);

double hsic_rff_weighted(std::span<const double> a, std::span<const double> b,
                         std::span<const double> w, const RffSide& side_a, const RffSide& side_b);
double hsic_rff_weighted(std::span<const double> a, std::span<const double> b,
                         std::span<const double> w, const RffBank& bank);

double decorrelation_loss(const Matrix& z, std::span<const double> w, const RffBank& bank);

double weight_penalty(std::span<const double> w);

}  // namespace stablehte
