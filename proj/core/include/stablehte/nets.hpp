#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stablehte/autodiff.hpp"
#include "stablehte/dataset.hpp"
#include "stablehte/losses.hpp"
#include "stablehte/matrix.hpp"
#include "stablehte/rng.hpp"

namespace stablehte {

enum class BackboneKind { Tarnet, Cfr, DerCfr };

BackboneKind backbone_from_string(const std::string& s);
std::string to_string(BackboneKind kind);

// Shared-representation two-head architecture: d_r ELU layers of width h_r
// produce the representation, then each treatment arm gets d_y ELU layers of
// width h_y and a linear output unit (read through a sigmoid for binary
// outcomes). Cfr differs from Tarnet only by adding the representation
// balance term to the network objective.
struct BackboneConfig {
  int d_r = 3;
  int d_y = 3;
  int h_r = 64;
  int h_y = 32;
  bool batch_norm = false;
  bool rep_norm = false;
  BackboneKind kind = BackboneKind::Cfr;
  OutcomeKind outcome = OutcomeKind::Binary;

  void validate() const;
};

// Named parameter matrices in a fixed order; the order doubles as the
// optimizer slot order.
struct Params {
  std::vector<std::string> names;
  std::vector<Matrix> mats;

  int index(const std::string& name) const;
  Matrix& at(const std::string& name);
  const Matrix& at(const std::string& name) const;
  std::uint64_t checksum() const;  // byte hash, for change detection
};

// Weights ~ N(0, 1/fan_in), biases zero, batch-norm scales one.
Params init_params(const BackboneConfig& cfg, int input_dim, RngState& rng);

// Handles into a freshly built forward graph. Treatment-dependent taps
// (z_pre and the head entries of z_layers) are only valid when a treatment
// vector was supplied.
struct ForwardGraph {
  ad::Var out0;  // linear output of head 0 (logit when binary)
  ad::Var out1;
  ad::Var y0_hat;  // probability (binary) or value (continuous)
  ad::Var y1_hat;
  ad::Var z_rep;                  // representation Phi(X)
  ad::Var z_pre;                  // per-unit last hidden layer of the factual head
  std::vector<ad::Var> z_layers;  // remaining hidden activations, rep side then head side
  std::vector<ad::Var> param_vars;        // aligned with Params order
  std::vector<ad::Var> head_weight_vars;  // head weight matrices, for the l2 term
  bool has_treatment_taps = false;
};

// Builds the forward pass on `tape`. With params_trainable the parameter
// matrices become leaves (their gradients drive the network update); with it
// false they are constants, which is how the weight-update phase sees a
// frozen network.
ForwardGraph forward_graph(ad::Tape& tape, const BackboneConfig& cfg, const Params& params,
                           const Matrix& X, const std::vector<int>* t, bool params_trainable);

struct Predictions {
  std::vector<double> y0_hat;
  std::vector<double> y1_hat;
};

// Both heads for every unit; no treatment needed.
Predictions predict(const BackboneConfig& cfg, const Params& params, const Matrix& X);

// Value snapshots of the dependence-measured activations.
struct NetworkTaps {
  Matrix z_pre;
  Matrix z_rep;
  std::vector<Matrix> z_layers;
};

NetworkTaps forward_taps(const BackboneConfig& cfg, const Params& params, const Matrix& X,
                         const std::vector<int>& t);

struct NetworkLossParts {
  ad::Var total;
  double outcome = 0.0;  // weighted factual loss value
  double balance = 0.0;  // representation balance value (cfr only)
};

// Objective for the network phase: weighted factual loss plus l2, and for
// the cfr backbone plus alpha times the weighted representation discrepancy
// between arms. `w` is expected to be a constant node here.
NetworkLossParts network_loss_node(ad::Tape& tape, const BackboneConfig& cfg,
                                   const ForwardGraph& fwd, const std::vector<int>& t,
                                   const std::vector<double>& yf, ad::Var w,
                                   const LossWeights& lw,
                                   std::optional<double> mmd_bandwidth = std::nullopt);

}  // namespace stablehte
