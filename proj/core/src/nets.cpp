#include "stablehte/nets.hpp"

#include <cmath>

#include "stablehte/errors.hpp"

namespace stablehte {

namespace a = ad;

BackboneKind backbone_from_string(const std::string& s) {
  if (s == "tarnet") return BackboneKind::Tarnet;
  if (s == "cfr") return BackboneKind::Cfr;
  if (s == "dercfr") return BackboneKind::DerCfr;
  throw ConfigError("unknown backbone kind '" + s + "'");
}

std::string to_string(BackboneKind kind) {
  switch (kind) {
    case BackboneKind::Tarnet: return "tarnet";
    case BackboneKind::Cfr: return "cfr";
    case BackboneKind::DerCfr: return "dercfr";
  }
  return "cfr";
}

void BackboneConfig::validate() const {
  if (kind == BackboneKind::DerCfr)
    throw ConfigError("backbone kind 'dercfr' is not supported by this build");
  if (d_r < 1 || d_y < 1) throw ConfigError("backbone: layer counts must be at least 1");
  if (h_r < 1 || h_y < 1) throw ConfigError("backbone: hidden widths must be at least 1");
}

int Params::index(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i);
  return -1;
}

Matrix& Params::at(const std::string& name) {
  int i = index(name);
  if (i < 0) throw ContractError("params: no entry named " + name);
  return mats[static_cast<std::size_t>(i)];
}

const Matrix& Params::at(const std::string& name) const {
  int i = index(name);
  if (i < 0) throw ContractError("params: no entry named " + name);
  return mats[static_cast<std::size_t>(i)];
}

std::uint64_t Params::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const Matrix& m : mats) {
    auto d = m.data();
    h ^= fnv1a64(d.data(), d.size() * sizeof(double));
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace {

void add_linear(Params& p, const std::string& prefix, int in, int out, RngState& rng) {
  Matrix w(in, out);
  const double sd = 1.0 / std::sqrt(static_cast<double>(in));
  for (double& v : w.data()) v = sd * rng.normal();
  p.names.push_back(prefix + "_w");
  p.mats.push_back(std::move(w));
  p.names.push_back(prefix + "_b");
  p.mats.push_back(Matrix(1, out));
}

void add_batchnorm(Params& p, const std::string& prefix, int width) {
  p.names.push_back(prefix + "_scale");
  p.mats.push_back(Matrix::constant(1, width, 1.0));
  p.names.push_back(prefix + "_shift");
  p.mats.push_back(Matrix(1, width));
}

}  // namespace

Params init_params(const BackboneConfig& cfg, int input_dim, RngState& rng) {
  cfg.validate();
  if (input_dim < 1) throw ConfigError("init_params: input dimension must be at least 1");
  Params p;
  int in = input_dim;
  for (int l = 1; l <= cfg.d_r; ++l) {
    add_linear(p, "rep" + std::to_string(l), in, cfg.h_r, rng);
    if (cfg.batch_norm) add_batchnorm(p, "rep" + std::to_string(l) + "_bn", cfg.h_r);
    in = cfg.h_r;
  }
  for (int head = 0; head <= 1; ++head) {
    int hin = cfg.h_r;
    const std::string h = "head" + std::to_string(head);
    for (int l = 1; l <= cfg.d_y; ++l) {
      add_linear(p, h + "_l" + std::to_string(l), hin, cfg.h_y, rng);
      hin = cfg.h_y;
    }
    add_linear(p, h + "_out", hin, 1, rng);
  }
  return p;
}

namespace {

struct GraphBuilder {
  a::Tape& tape;
  const BackboneConfig& cfg;
  const Params& params;
  bool trainable;
  std::vector<a::Var> param_vars;

  GraphBuilder(a::Tape& t, const BackboneConfig& c, const Params& p, bool tr)
      : tape(t), cfg(c), params(p), trainable(tr) {
    param_vars.reserve(params.mats.size());
    for (std::size_t i = 0; i < params.mats.size(); ++i)
      param_vars.push_back(trainable ? tape.leaf(params.mats[i], params.names[i])
                                     : tape.constant(params.mats[i]));
  }

  a::Var var_of(const std::string& name) {
    int i = params.index(name);
    if (i < 0) throw ContractError("forward: missing parameter " + name);
    return param_vars[static_cast<std::size_t>(i)];
  }

  a::Var ones_col(int n) { return tape.constant(Matrix::constant(n, 1, 1.0)); }

  a::Var linear(a::Var x, const std::string& prefix) {
    a::Var w = var_of(prefix + "_w");
    a::Var b = var_of(prefix + "_b");
    return a::add(a::matmul(x, w), a::matmul(ones_col(x.rows()), b));
  }

  // Full-batch normalization with learnable scale and shift.
  a::Var batchnorm(a::Var h, const std::string& prefix) {
    const int n = h.rows();
    const int width = h.cols();
    a::Var ones = ones_col(n);
    a::Var mu = a::col_mean(h);
    a::Var centered = a::sub(h, a::matmul(ones, mu));
    a::Var var = a::col_mean(a::square(centered));
    a::Var eps = tape.constant(Matrix::constant(1, width, 1e-5));
    a::Var inv_std = a::exp(a::scale(a::log(a::add(var, eps)), -0.5));
    a::Var normed = a::mul(centered, a::matmul(ones, inv_std));
    a::Var scaled = a::mul(normed, a::matmul(ones, var_of(prefix + "_scale")));
    return a::add(scaled, a::matmul(ones, var_of(prefix + "_shift")));
  }

  a::Var row_normalize(a::Var h) {
    const int n = h.rows();
    const int width = h.cols();
    a::Var sq = a::scale(a::row_mean(a::square(h)), static_cast<double>(width));
    a::Var eps = tape.constant(Matrix::constant(n, 1, 1e-12));
    a::Var inv = a::exp(a::scale(a::log(a::add(sq, eps)), -0.5));
    return a::mul(h, a::matmul(inv, tape.constant(Matrix::constant(1, width, 1.0))));
  }
};

}  // namespace

ForwardGraph forward_graph(a::Tape& tape, const BackboneConfig& cfg, const Params& params,
                           const Matrix& X, const std::vector<int>* t, bool params_trainable) {
  cfg.validate();
  const int n = X.rows();
  if (params.index("rep1_w") < 0 || params.at("rep1_w").rows() != X.cols())
    throw DimensionError("forward: input width " + std::to_string(X.cols()) +
                         " does not match the parameters");
  if (t != nullptr && static_cast<int>(t->size()) != n)
    throw DimensionError("forward: treatment length does not match X");

  GraphBuilder gb(tape, cfg, params, params_trainable);
  ForwardGraph fg;
  fg.param_vars = gb.param_vars;

  a::Var h = tape.constant(X);
  std::vector<a::Var> rep_hidden;
  for (int l = 1; l <= cfg.d_r; ++l) {
    const std::string prefix = "rep" + std::to_string(l);
    h = gb.linear(h, prefix);
    if (cfg.batch_norm) h = gb.batchnorm(h, prefix + "_bn");
    h = a::elu(h);
    if (l < cfg.d_r) rep_hidden.push_back(h);
  }
  if (cfg.rep_norm) h = gb.row_normalize(h);
  fg.z_rep = h;

  // Both heads run on every unit; head hidden activations are kept so the
  // factual-path taps can be assembled below.
  std::vector<std::vector<a::Var>> head_hidden(2);
  a::Var outs[2];
  for (int head = 0; head <= 1; ++head) {
    const std::string hp = "head" + std::to_string(head);
    a::Var z = fg.z_rep;
    for (int l = 1; l <= cfg.d_y; ++l) {
      z = a::elu(gb.linear(z, hp + "_l" + std::to_string(l)));
      head_hidden[static_cast<std::size_t>(head)].push_back(z);
    }
    outs[head] = gb.linear(z, hp + "_out");
    for (int l = 1; l <= cfg.d_y; ++l)
      fg.head_weight_vars.push_back(gb.var_of(hp + "_l" + std::to_string(l) + "_w"));
    fg.head_weight_vars.push_back(gb.var_of(hp + "_out_w"));
  }
  fg.out0 = outs[0];
  fg.out1 = outs[1];
  if (cfg.outcome == OutcomeKind::Binary) {
    fg.y0_hat = a::sigmoid(outs[0]);
    fg.y1_hat = a::sigmoid(outs[1]);
  } else {
    fg.y0_hat = outs[0];
    fg.y1_hat = outs[1];
  }

  fg.z_layers = rep_hidden;
  if (t != nullptr) {
    fg.has_treatment_taps = true;
    Matrix tmask(n, cfg.h_y);
    Matrix cmask(n, cfg.h_y);
    for (int i = 0; i < n; ++i) {
      const double ti = (*t)[static_cast<std::size_t>(i)];
      for (int j = 0; j < cfg.h_y; ++j) {
        tmask(i, j) = ti;
        cmask(i, j) = 1.0 - ti;
      }
    }
    a::Var tm = tape.constant(std::move(tmask));
    a::Var cm = tape.constant(std::move(cmask));
    auto factual_merge = [&](a::Var h1, a::Var h0) {
      return a::add(a::mul(h1, tm), a::mul(h0, cm));
    };
    // Last hidden layer of each unit's factual head.
    fg.z_pre = factual_merge(head_hidden[1][static_cast<std::size_t>(cfg.d_y - 1)],
                             head_hidden[0][static_cast<std::size_t>(cfg.d_y - 1)]);
    for (int l = 0; l < cfg.d_y - 1; ++l)
      fg.z_layers.push_back(factual_merge(head_hidden[1][static_cast<std::size_t>(l)],
                                          head_hidden[0][static_cast<std::size_t>(l)]));
  }
  return fg;
}

Predictions predict(const BackboneConfig& cfg, const Params& params, const Matrix& X) {
  a::Tape tape;
  ForwardGraph fg = forward_graph(tape, cfg, params, X, nullptr, false);
  Predictions out;
  out.y0_hat.resize(static_cast<std::size_t>(X.rows()));
  out.y1_hat.resize(static_cast<std::size_t>(X.rows()));
  for (int i = 0; i < X.rows(); ++i) {
    out.y0_hat[static_cast<std::size_t>(i)] = fg.y0_hat.value()(i, 0);
    out.y1_hat[static_cast<std::size_t>(i)] = fg.y1_hat.value()(i, 0);
  }
  return out;
}

NetworkTaps forward_taps(const BackboneConfig& cfg, const Params& params, const Matrix& X,
                         const std::vector<int>& t) {
  a::Tape tape;
  ForwardGraph fg = forward_graph(tape, cfg, params, X, &t, false);
  NetworkTaps taps;
  taps.z_pre = fg.z_pre.value();
  taps.z_rep = fg.z_rep.value();
  for (const a::Var& z : fg.z_layers) taps.z_layers.push_back(z.value());
  return taps;
}

NetworkLossParts network_loss_node(a::Tape& tape, const BackboneConfig& cfg,
                                   const ForwardGraph& fwd, const std::vector<int>& t,
                                   const std::vector<double>& yf, a::Var w,
                                   const LossWeights& lw, std::optional<double> mmd_bandwidth) {
  lw.validate();
  NetworkLossParts parts{};
  a::Var outcome = outcome_loss_node(tape, fwd.out0, fwd.out1, t, yf, w, lw.lambda,
                                     fwd.head_weight_vars, cfg.outcome);
  parts.outcome = outcome.value()(0, 0);
  a::Var total = outcome;

  if (cfg.kind == BackboneKind::Cfr && lw.alpha > 0.0) {
    std::vector<int> treated, control;
    for (int i = 0; i < static_cast<int>(t.size()); ++i)
      (t[static_cast<std::size_t>(i)] == 1 ? treated : control).push_back(i);
    if (treated.empty() || control.empty())
      throw OverlapError("network_loss: balance term needs both treatment arms");
    a::Var rep_t = a::select_rows(fwd.z_rep, treated);
    a::Var rep_c = a::select_rows(fwd.z_rep, control);
    a::Var w_t = a::select_rows(w, treated);
    a::Var w_c = a::select_rows(w, control);
    const double bw =
        mmd_bandwidth ? *mmd_bandwidth : median_bandwidth(rep_t.value(), rep_c.value());
    a::Var balance = mmd2_node(tape, rep_t, rep_c, w_t, w_c, bw);
    parts.balance = balance.value()(0, 0);
    total = a::add(total, a::scale(balance, lw.alpha));
  }
  parts.total = total;
  return parts;
}

}  // namespace stablehte
