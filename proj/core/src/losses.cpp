#include "stablehte/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "stablehte/errors.hpp"

namespace stablehte {

namespace a = ad;

void LossWeights::validate() const {
  if (alpha < 0.0 || gamma1 < 0.0 || gamma2 < 0.0 || gamma3 < 0.0 || lambda < 0.0)
    throw ConfigError("loss weights must be non-negative");
}

double SampleWeights::inverse_softplus(double w) {
  if (w <= 0.0) throw ContractError("inverse_softplus: requires a positive value");
  // Solve softplus(theta) = w, i.e. theta = log(e^w - 1).
  return w + std::log1p(-std::exp(-w));
}

SampleWeights SampleWeights::ones(int n) {
  SampleWeights sw;
  sw.theta = Matrix::constant(n, 1, inverse_softplus(1.0));
  return sw;
}

std::vector<double> SampleWeights::values() const {
  std::vector<double> w(static_cast<std::size_t>(theta.rows()));
  for (int i = 0; i < theta.rows(); ++i) w[static_cast<std::size_t>(i)] = a::softplus_value(theta(i, 0));
  return w;
}

double median_bandwidth(const Matrix& rep_t, const Matrix& rep_c) {
  const int d = rep_t.cols();
  if (rep_c.cols() != d) throw DimensionError("median_bandwidth: column counts differ");
  const int n = rep_t.rows() + rep_c.rows();
  auto row_of = [&](int i) { return i < rep_t.rows() ? rep_t.row(i) : rep_c.row(i - rep_t.rows()); };
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
  for (int i = 0; i < n; ++i) {
    auto ri = row_of(i);
    for (int j = i + 1; j < n; ++j) {
      auto rj = row_of(j);
      double acc = 0.0;
      for (int k = 0; k < d; ++k) {
        const double diff = ri[k] - rj[k];
        acc += diff * diff;
      }
      dists.push_back(acc);
    }
  }
  if (dists.empty()) return 1.0;
  auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
  std::nth_element(dists.begin(), mid, dists.end());
  return *mid > 0.0 ? *mid : 1.0;
}

namespace {

// w / sum(w) as a graph node; rejects weights that sum to zero (softplus
// keeps trained weights positive, but plain-value callers can pass anything).
a::Var normalized_weights(a::Tape& tape, a::Var w, const char* context) {
  if (w.cols() != 1) throw DimensionError(std::string(context) + ": weights must be a column");
  a::Var s = a::sum(w);
  const double total = s.value()(0, 0);
  if (!(total > 0.0))
    throw DegenerateWeightsError(std::string(context) + ": weights sum to " +
                                 std::to_string(total));
  a::Var inv = a::exp(a::scale(a::log(s), -1.0));
  return a::matmul(w, inv);
}

// Weighted cross-covariance of two feature matrices under normalized
// weights: C = (Fa - mu_a)^T diag(wn) (Fb - mu_b).
a::Var feature_covariance(a::Tape& tape, a::Var fa, a::Var fb, a::Var wn) {
  const int n = fa.rows();
  a::Var ones_col = tape.constant(Matrix::constant(n, 1, 1.0));
  a::Var mu_a = a::matmul(wn, fa, true, false);  // 1 x ka
  a::Var mu_b = a::matmul(wn, fb, true, false);
  a::Var fa_c = a::sub(fa, a::matmul(ones_col, mu_a));
  a::Var fb_c = a::sub(fb, a::matmul(ones_col, mu_b));
  a::Var wn_b = a::matmul(wn, tape.constant(Matrix::constant(1, fb.cols(), 1.0)));
  return a::matmul(fa_c, a::mul(fb_c, wn_b), true, false);
}

}  // namespace

a::Var rff_features_node(a::Tape& tape, a::Var z, const std::vector<const RffSide*>& sides) {
  const int n = z.rows();
  const int m = z.cols();
  if (static_cast<int>(sides.size()) != m)
    throw ContractError("rff_features_node: one feature side required per column");
  int total_k = 0;
  for (const RffSide* s : sides) total_k += s->k();

  Matrix scatter(m, total_k);
  Matrix phases(n, total_k);
  int offset = 0;
  for (int c = 0; c < m; ++c) {
    const RffSide& s = *sides[static_cast<std::size_t>(c)];
    for (int j = 0; j < s.k(); ++j) {
      scatter(c, offset + j) = s.freqs[static_cast<std::size_t>(j)];
      const double phi = s.phases[static_cast<std::size_t>(j)];
      for (int i = 0; i < n; ++i) phases(i, offset + j) = phi;
    }
    offset += s.k();
  }
  a::Var angles = a::add(a::matmul(z, tape.constant(std::move(scatter))),
                         tape.constant(std::move(phases)));
  return a::scale(a::cos(angles), std::sqrt(2.0));
}

a::Var hsic_rff_node(a::Tape& tape, a::Var av, a::Var bv, a::Var w, const RffSide& side_a,
                     const RffSide& side_b) {
  if (av.cols() != 1 || bv.cols() != 1)
    throw DimensionError("hsic_rff_node: inputs must be column vectors");
  if (av.rows() != bv.rows() || av.rows() != w.rows())
    throw DimensionError("hsic_rff_node: input lengths differ");
  a::Var fa = rff_features_node(tape, av, {&side_a});
  a::Var fb = rff_features_node(tape, bv, {&side_b});
  a::Var wn = normalized_weights(tape, w, "hsic_rff");
  a::Var cov = feature_covariance(tape, fa, fb, wn);
  return a::sum(a::square(cov));
}

a::Var decorrelation_node(a::Tape& tape, a::Var z, a::Var w, const RffBank& bank) {
  const int m = z.cols();
  if (bank.columns() != m)
    throw ContractError("decorrelation_node: bank was drawn for " +
                        std::to_string(bank.columns()) + " columns, input has " +
                        std::to_string(m));
  std::vector<const RffSide*> a_sides;
  std::vector<const RffSide*> b_sides;
  for (int c = 0; c < m; ++c) {
    a_sides.push_back(&bank.a_side[static_cast<std::size_t>(c)]);
    b_sides.push_back(&bank.b_side[static_cast<std::size_t>(c)]);
  }
  a::Var fa = rff_features_node(tape, z, a_sides);
  a::Var fb = rff_features_node(tape, z, b_sides);
  a::Var wn = normalized_weights(tape, w, "decorrelation");
  a::Var cov = feature_covariance(tape, fa, fb, wn);

  // Keep only blocks with column index a <= b; each pair counted once.
  Matrix mask(fa.cols(), fb.cols());
  int off_a = 0;
  for (int ca = 0; ca < m; ++ca) {
    const int ka = bank.a_side[static_cast<std::size_t>(ca)].k();
    int off_b = 0;
    for (int cb = 0; cb < m; ++cb) {
      const int kb = bank.b_side[static_cast<std::size_t>(cb)].k();
      if (ca <= cb)
        for (int i = 0; i < ka; ++i)
          for (int j = 0; j < kb; ++j) mask(off_a + i, off_b + j) = 1.0;
      off_b += kb;
    }
    off_a += ka;
  }
  return a::sum(a::mul(a::square(cov), tape.constant(std::move(mask))));
}

a::Var weight_penalty_node(a::Tape& tape, a::Var w) {
  const int n = w.rows();
  a::Var ones = tape.constant(Matrix::constant(n, w.cols(), 1.0));
  return a::scale(a::sum(a::square(a::sub(w, ones))), 1.0 / n);
}

a::Var mmd2_node(a::Tape& tape, a::Var rep_t, a::Var rep_c, a::Var w_t, a::Var w_c,
                 double bandwidth) {
  if (rep_t.rows() == 0 || rep_c.rows() == 0)
    throw OverlapError("mmd2: both treatment arms must be non-empty");
  if (rep_t.cols() != rep_c.cols()) throw DimensionError("mmd2: representation widths differ");
  if (!(bandwidth > 0.0)) throw ContractError("mmd2: bandwidth must be positive");
  const int d = rep_t.cols();
  a::Var p = normalized_weights(tape, w_t, "mmd2 treated");
  a::Var q = normalized_weights(tape, w_c, "mmd2 control");

  auto kernel = [&](a::Var u, a::Var v) {
    a::Var ru = a::scale(a::row_mean(a::square(u)), static_cast<double>(d));  // row sq norms
    a::Var rv = a::scale(a::row_mean(a::square(v)), static_cast<double>(d));
    a::Var t1 = a::matmul(ru, tape.constant(Matrix::constant(1, v.rows(), 1.0)));
    a::Var t2 = a::matmul(tape.constant(Matrix::constant(u.rows(), 1, 1.0)), rv, false, true);
    a::Var cross = a::matmul(u, v, false, true);
    a::Var dist = a::sub(a::add(t1, t2), a::scale(cross, 2.0));
    return a::exp(a::scale(dist, -1.0 / bandwidth));
  };

  a::Var ktt = kernel(rep_t, rep_t);
  a::Var kcc = kernel(rep_c, rep_c);
  a::Var ktc = kernel(rep_t, rep_c);
  a::Var ptt = a::matmul(a::matmul(p, ktt, true, false), p);
  a::Var qcc = a::matmul(a::matmul(q, kcc, true, false), q);
  a::Var ptc = a::matmul(a::matmul(p, ktc, true, false), q);
  return a::sub(a::add(ptt, qcc), a::scale(ptc, 2.0));
}

a::Var outcome_loss_node(a::Tape& tape, a::Var out0, a::Var out1, const std::vector<int>& t,
                         const std::vector<double>& yf, a::Var w, double lambda,
                         const std::vector<a::Var>& head_weights, OutcomeKind kind) {
  const int n = static_cast<int>(t.size());
  if (out0.rows() != n || out1.rows() != n || w.rows() != n)
    throw DimensionError("outcome_loss: prediction and weight lengths must match t");
  if (yf.size() != t.size()) throw DimensionError("outcome_loss: yf length must match t");
  if (kind == OutcomeKind::Binary) {
    for (double y : yf)
      if (y != 0.0 && y != 1.0)
        throw ContractError("outcome_loss: binary outcome kind but factual outcome " +
                            std::to_string(y));
  }

  Matrix tmask(n, 1);
  Matrix cmask(n, 1);
  Matrix ycol(n, 1);
  for (int i = 0; i < n; ++i) {
    tmask(i, 0) = t[static_cast<std::size_t>(i)];
    cmask(i, 0) = 1.0 - t[static_cast<std::size_t>(i)];
    ycol(i, 0) = yf[static_cast<std::size_t>(i)];
  }
  a::Var factual = a::add(a::mul(out1, tape.constant(std::move(tmask))),
                          a::mul(out0, tape.constant(std::move(cmask))));
  a::Var per_unit{};
  if (kind == OutcomeKind::Binary) {
    // Cross-entropy on logits, assembled from softplus for stability:
    // y*softplus(-o) + (1-y)*softplus(o).
    a::Var y = tape.constant(ycol);
    Matrix inv(n, 1);
    for (int i = 0; i < n; ++i) inv(i, 0) = 1.0 - ycol(i, 0);
    a::Var y_inv = tape.constant(std::move(inv));
    per_unit = a::add(a::mul(y, a::softplus(a::scale(factual, -1.0))),
                      a::mul(y_inv, a::softplus(factual)));
  } else {
    per_unit = a::square(a::sub(factual, tape.constant(std::move(ycol))));
  }
  a::Var loss = a::scale(a::sum(a::mul(w, per_unit)), 1.0 / n);
  if (lambda > 0.0 && !head_weights.empty()) {
    a::Var reg = a::sum(a::square(head_weights[0]));
    for (std::size_t k = 1; k < head_weights.size(); ++k)
      reg = a::add(reg, a::sum(a::square(head_weights[k])));
    loss = a::add(loss, a::scale(reg, lambda));
  }
  return loss;
}

WeightLossParts weight_loss_node(a::Tape& tape, const WeightLossInputs& in, a::Var w,
                                 const LossWeights& lw, const RffBank& bank_pre,
                                 const RffBank& bank_rep, const std::vector<RffBank>& bank_layers,
                                 std::optional<double> mmd_bandwidth) {
  lw.validate();
  WeightLossParts parts{};
  a::Var anchor = weight_penalty_node(tape, w);
  parts.anchor = anchor.value()(0, 0);
  a::Var total = anchor;

  if (lw.alpha > 0.0) {
    if (in.treated_rows.empty() || in.control_rows.empty())
      throw OverlapError("weight_loss: balance term needs both treatment arms");
    a::Var rep_t = a::select_rows(in.z_rep, in.treated_rows);
    a::Var rep_c = a::select_rows(in.z_rep, in.control_rows);
    a::Var w_t = a::select_rows(w, in.treated_rows);
    a::Var w_c = a::select_rows(w, in.control_rows);
    const double bw = mmd_bandwidth ? *mmd_bandwidth : median_bandwidth(rep_t.value(), rep_c.value());
    a::Var balance = mmd2_node(tape, rep_t, rep_c, w_t, w_c, bw);
    parts.balance = balance.value()(0, 0);
    total = a::add(total, a::scale(balance, lw.alpha));
  }
  const bool any_ld = lw.gamma1 > 0.0 || lw.gamma2 > 0.0 || lw.gamma3 > 0.0;
  const bool sub = any_ld && !in.ld_rows.empty();
  a::Var w_ld = sub ? a::select_rows(w, in.ld_rows) : w;
  auto ld_view = [&](a::Var z) { return sub ? a::select_rows(z, in.ld_rows) : z; };
  if (lw.gamma1 > 0.0) {
    a::Var pre = decorrelation_node(tape, ld_view(in.z_pre), w_ld, bank_pre);
    parts.pre_treatment = pre.value()(0, 0);
    total = a::add(total, a::scale(pre, lw.gamma1));
  }
  if (lw.gamma2 > 0.0) {
    a::Var rep = decorrelation_node(tape, ld_view(in.z_rep), w_ld, bank_rep);
    parts.representation = rep.value()(0, 0);
    total = a::add(total, a::scale(rep, lw.gamma2));
  }
  if (lw.gamma3 > 0.0 && !in.z_layers.empty()) {
    if (bank_layers.size() != in.z_layers.size())
      throw ContractError("weight_loss: need one bank per layer tap");
    a::Var acc = decorrelation_node(tape, ld_view(in.z_layers[0]), w_ld, bank_layers[0]);
    for (std::size_t i = 1; i < in.z_layers.size(); ++i)
      acc = a::add(acc, decorrelation_node(tape, ld_view(in.z_layers[i]), w_ld, bank_layers[i]));
    parts.layerwise = acc.value()(0, 0);
    total = a::add(total, a::scale(acc, lw.gamma3));
  }
  parts.total = total;
  return parts;
}

double mmd2_weighted(const Matrix& rep_t, const Matrix& rep_c, std::span<const double> w_t,
                     std::span<const double> w_c, std::optional<double> bandwidth) {
  if (rep_t.rows() == 0 || rep_c.rows() == 0)
    throw OverlapError("mmd2: both treatment arms must be non-empty");
  const double bw = bandwidth ? *bandwidth : median_bandwidth(rep_t, rep_c);
  a::Tape tape;
  a::Var vt = tape.constant(rep_t);
  a::Var vc = tape.constant(rep_c);
  a::Var wt = tape.constant(Matrix::column(w_t));
  a::Var wc = tape.constant(Matrix::column(w_c));
  return mmd2_node(tape, vt, vc, wt, wc, bw).value()(0, 0);
}

double hsic_rff_weighted(std::span<const double> av, std::span<const double> bv,
                         std::span<const double> w, const RffSide& side_a, const RffSide& side_b) {
  a::Tape tape;
  a::Var a_var = tape.constant(Matrix::column(av));
  a::Var b_var = tape.constant(Matrix::column(bv));
  a::Var w_var = tape.constant(Matrix::column(w));
  return hsic_rff_node(tape, a_var, b_var, w_var, side_a, side_b).value()(0, 0);
}

double hsic_rff_weighted(std::span<const double> av, std::span<const double> bv,
                         std::span<const double> w, const RffBank& bank) {
  if (bank.columns() < 1) throw ContractError("hsic_rff: empty bank");
  return hsic_rff_weighted(av, bv, w, bank.a_side[0], bank.b_side[0]);
}

double decorrelation_loss(const Matrix& z, std::span<const double> w, const RffBank& bank) {
  a::Tape tape;
  a::Var zv = tape.constant(z);
  a::Var wv = tape.constant(Matrix::column(w));
  return decorrelation_node(tape, zv, wv, bank).value()(0, 0);
}

double weight_penalty(std::span<const double> w) {
  a::Tape tape;
  a::Var wv = tape.constant(Matrix::column(w));
  return weight_penalty_node(tape, wv).value()(0, 0);
}

}  // namespace stablehte
