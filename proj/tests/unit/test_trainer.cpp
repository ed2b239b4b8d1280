#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "stablehte/errors.hpp"
#include "stablehte/rng.hpp"
#include "stablehte/trainer.hpp"

using namespace stablehte;

namespace {

// A small binary dataset where each head's subpopulation is linearly
// separable, so a low cross-entropy fit exists.
Dataset separable_dataset(int n, std::uint64_t seed) {
  RngState rng(seed);
  Dataset ds;
  ds.outcome = OutcomeKind::Binary;
  ds.X = Matrix(n, 3);
  rng.fill_normal(ds.X);
  ds.t.resize(n);
  ds.yf.resize(n);
  for (int i = 0; i < n; ++i) {
    ds.t[i] = rng.uniform() < 0.5 ? 1 : 0;
    const double score = ds.X(i, 0) + 0.5 * ds.X(i, 1) - 0.25 * ds.X(i, 2);
    ds.yf[i] = score > 0.0 ? 1.0 : 0.0;
  }
  // make sure both arms are populated
  ds.t[0] = 0;
  ds.t[1] = 1;
  return ds;
}

Dataset continuous_dataset(int n, std::uint64_t seed) {
  RngState rng(seed);
  Dataset ds;
  ds.outcome = OutcomeKind::Continuous;
  ds.X = Matrix(n, 2);
  rng.fill_normal(ds.X);
  ds.t.resize(n);
  ds.yf.resize(n);
  for (int i = 0; i < n; ++i) {
    ds.t[i] = i % 2;
    ds.yf[i] = ds.X(i, 0) - ds.X(i, 1) + (ds.t[i] == 1 ? 1.0 : 0.0);
  }
  return ds;
}

BackboneConfig small_backbone(OutcomeKind kind) {
  BackboneConfig cfg;
  cfg.d_r = 2;
  cfg.d_y = 2;
  cfg.h_r = 8;
  cfg.h_y = 6;
  cfg.kind = BackboneKind::Cfr;
  cfg.outcome = kind;
  return cfg;
}

TrainConfig quick_train(int iters) {
  TrainConfig tc;
  tc.max_iters = iters;
  tc.lr = 5e-3;
  tc.patience = iters;  // no early stop unless the test wants it
  tc.seed = 1234;
  return tc;
}

std::uint64_t theta_checksum(const SampleWeights& w) {
  auto span = w.theta.data();
  return fnv1a64(span.data(), span.size() * sizeof(double));
}

// Plain logistic regression fit by gradient descent; the reference point for
// what "trainable to low cross-entropy" means on a separable instance.
double logistic_regression_ce(const Dataset& ds, int iters, double lr) {
  const int n = ds.n();
  const int m = ds.m();
  std::vector<double> w(static_cast<std::size_t>(m) + 1, 0.0);  // last slot is the intercept
  for (int it = 0; it < iters; ++it) {
    std::vector<double> g(w.size(), 0.0);
    for (int i = 0; i < n; ++i) {
      double z = w[static_cast<std::size_t>(m)];
      for (int j = 0; j < m; ++j) z += w[static_cast<std::size_t>(j)] * ds.X(i, j);
      const double p = 1.0 / (1.0 + std::exp(-z));
      const double d = p - ds.yf[i];
      for (int j = 0; j < m; ++j) g[static_cast<std::size_t>(j)] += d * ds.X(i, j) / n;
      g[static_cast<std::size_t>(m)] += d / n;
    }
    for (std::size_t j = 0; j < w.size(); ++j) w[j] -= lr * g[j];
  }
  double ce = 0.0;
  for (int i = 0; i < n; ++i) {
    double z = w[static_cast<std::size_t>(m)];
    for (int j = 0; j < m; ++j) z += w[static_cast<std::size_t>(j)] * ds.X(i, j);
    ce += ds.yf[i] * ad::softplus_value(-z) + (1.0 - ds.yf[i]) * ad::softplus_value(z);
  }
  return ce / n;
}

}  // namespace

TEST_CASE("train config validation") {
  TrainConfig tc;
  CHECK_NOTHROW(tc.validate());
  TrainConfig bad = tc;
  bad.max_iters = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = tc;
  bad.lr = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = tc;
  bad.patience = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = tc;
  bad.k_w = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("zero coefficients keep every sample weight at exactly one") {
  Dataset train_ds = separable_dataset(60, 5);
  Dataset val = separable_dataset(20, 6);
  BackboneConfig cfg = small_backbone(OutcomeKind::Binary);
  LossWeights lw;  // alpha and all gammas zero
  TrainConfig tc = quick_train(8);
  tc.learn_weights = true;

  TrainResult res = train(cfg, train_ds, val, lw, tc);
  CHECK(res.state.iterations_run == 8);
  for (double w : res.weights.values()) CHECK(w == 1.0);
  CHECK(theta_checksum(res.weights) == theta_checksum(SampleWeights::ones(60)));
}

TEST_CASE("training is deterministic per seed") {
  Dataset train_ds = separable_dataset(50, 7);
  Dataset val = separable_dataset(18, 8);
  BackboneConfig cfg = small_backbone(OutcomeKind::Binary);
  LossWeights lw;
  lw.alpha = 0.5;
  lw.gamma1 = 0.4;
  lw.gamma2 = 0.3;
  lw.gamma3 = 0.2;
  TrainConfig tc = quick_train(6);

  TrainResult a = train(cfg, train_ds, val, lw, tc);
  TrainResult b = train(cfg, train_ds, val, lw, tc);
  CHECK(a.params.checksum() == b.params.checksum());
  CHECK(theta_checksum(a.weights) == theta_checksum(b.weights));
  REQUIRE(a.state.trace.size() == b.state.trace.size());
  for (std::size_t i = 0; i < a.state.trace.size(); ++i) {
    CHECK(a.state.trace[i].outcome == b.state.trace[i].outcome);
    CHECK(a.state.trace[i].weight_total == b.state.trace[i].weight_total);
    CHECK(a.state.trace[i].val == b.state.trace[i].val);
  }

  TrainConfig other = tc;
  other.seed = 999;
  TrainResult c = train(cfg, train_ds, val, lw, other);
  CHECK(a.params.checksum() != c.params.checksum());
}

TEST_CASE("cfr and tarnet traces coincide when the balance weight is zero") {
  Dataset train_ds = separable_dataset(40, 9);
  Dataset val = separable_dataset(16, 10);
  LossWeights lw;  // alpha zero
  TrainConfig tc = quick_train(6);

  BackboneConfig cfr = small_backbone(OutcomeKind::Binary);
  cfr.kind = BackboneKind::Cfr;
  BackboneConfig tarnet = cfr;
  tarnet.kind = BackboneKind::Tarnet;

  TrainResult a = train(cfr, train_ds, val, lw, tc);
  TrainResult b = train(tarnet, train_ds, val, lw, tc);
  CHECK(a.params.checksum() == b.params.checksum());
  REQUIRE(a.state.trace.size() == b.state.trace.size());
  for (std::size_t i = 0; i < a.state.trace.size(); ++i) {
    CHECK(a.state.trace[i].outcome == b.state.trace[i].outcome);
    CHECK(a.state.trace[i].val == b.state.trace[i].val);
    CHECK(a.state.trace[i].net_balance == 0.0);
  }
}

TEST_CASE("weight phase leaves network parameters untouched") {
  Dataset train_ds = separable_dataset(40, 11);
  Dataset val = separable_dataset(14, 12);
  BackboneConfig cfg = small_backbone(OutcomeKind::Binary);
  LossWeights lw;
  lw.alpha = 1.0;
  lw.gamma1 = 0.5;
  lw.gamma2 = 0.5;
  lw.gamma3 = 0.5;
  TrainConfig tc = quick_train(1);

  TrainConfig frozen = tc;
  frozen.learn_weights = false;
  TrainResult with_w = train(cfg, train_ds, val, lw, tc);
  TrainResult without_w = train(cfg, train_ds, val, lw, frozen);

  // one iteration: the weight step must not have altered the network update
  CHECK(with_w.params.checksum() == without_w.params.checksum());
  // but it must have moved the weights off their initialization
  bool moved = false;
  for (double w : with_w.weights.values())
    if (w != 1.0) moved = true;
  CHECK(moved);
  for (double w : without_w.weights.values()) CHECK(w == 1.0);
}

TEST_CASE("separable instance trains below the logistic reference") {
  Dataset train_ds = separable_dataset(200, 13);
  Dataset val = separable_dataset(60, 14);
  const double reference = logistic_regression_ce(train_ds, 4000, 1.0);
  CHECK(reference < 0.3);

  BackboneConfig cfg = small_backbone(OutcomeKind::Binary);
  cfg.kind = BackboneKind::Tarnet;
  LossWeights lw;
  TrainConfig tc = quick_train(400);
  tc.lr = 2e-2;
  tc.learn_weights = false;
  tc.record_trace = true;

  TrainResult res = train(cfg, train_ds, val, lw, tc);
  const double final_ce = res.state.trace.back().outcome;
  CHECK(final_ce < 0.3);
}

TEST_CASE("early stopping returns the best evaluated iterate") {
  Dataset train_ds = separable_dataset(80, 15);
  Dataset val = separable_dataset(30, 16);
  BackboneConfig cfg = small_backbone(OutcomeKind::Binary);
  LossWeights lw;
  TrainConfig tc = quick_train(300);
  tc.patience = 12;
  tc.lr = 3e-2;

  TrainResult res = train(cfg, train_ds, val, lw, tc);
  REQUIRE(!res.state.trace.empty());
  double min_val = res.state.trace[0].val;
  int argmin = 0;
  for (std::size_t i = 0; i < res.state.trace.size(); ++i) {
    if (res.state.trace[i].val < min_val) {
      min_val = res.state.trace[i].val;
      argmin = static_cast<int>(i);
    }
  }
  CHECK(res.state.best_val == min_val);
  CHECK(res.state.best_iter == argmin);
  // the returned snapshot reproduces the recorded best validation loss
  CHECK(factual_validation_loss(cfg, res.params, val) == doctest::Approx(min_val).epsilon(1e-12));
  if (res.state.iterations_run < tc.max_iters)
    CHECK(res.state.iterations_run - 1 - res.state.best_iter >= tc.patience);
}

TEST_CASE("train input validation") {
  Dataset train_ds = separable_dataset(30, 17);
  Dataset val = separable_dataset(10, 18);
  BackboneConfig cfg = small_backbone(OutcomeKind::Binary);
  LossWeights lw;
  TrainConfig tc = quick_train(2);

  Dataset one_arm = train_ds;
  std::fill(one_arm.t.begin(), one_arm.t.end(), 1);
  CHECK_THROWS_AS(train(cfg, one_arm, val, lw, tc), OverlapError);

  Dataset narrow = val;
  narrow.X = Matrix(narrow.n(), 2);
  CHECK_THROWS_AS(train(cfg, train_ds, narrow, lw, tc), DimensionError);

  BackboneConfig wrong_kind = cfg;
  wrong_kind.outcome = OutcomeKind::Continuous;
  CHECK_THROWS_AS(train(wrong_kind, train_ds, val, lw, tc), ConfigError);
}

TEST_CASE("runaway learning rate reports divergence") {
  Dataset train_ds = continuous_dataset(24, 19);
  Dataset val = continuous_dataset(10, 20);
  BackboneConfig cfg = small_backbone(OutcomeKind::Continuous);
  cfg.kind = BackboneKind::Tarnet;
  LossWeights lw;
  TrainConfig tc = quick_train(5);
  tc.lr = 1e120;
  tc.learn_weights = false;
  CHECK_THROWS_AS(train(cfg, train_ds, val, lw, tc), DivergenceError);
}

TEST_CASE("predict_effects reports per-unit differences and their mean") {
  BackboneConfig cfg = small_backbone(OutcomeKind::Binary);
  RngState rng(21);
  Params p = init_params(cfg, 4, rng);
  // clone head 0 into head 1 so the effect is identically zero
  for (std::size_t i = 0; i < p.names.size(); ++i) {
    if (p.names[i].rfind("head1_", 0) == 0) p.mats[i] = p.at("head0_" + p.names[i].substr(6));
  }
  Matrix x(7, 4);
  RngState xr(22);
  xr.fill_normal(x);
  EffectEstimates est = predict_effects(cfg, p, x);
  for (int i = 0; i < 7; ++i) {
    CHECK(est.ite_hat[i] == 0.0);
    CHECK(est.y0_hat[i] == est.y1_hat[i]);
  }
  CHECK(est.ate_hat == 0.0);

  RngState rng2(23);
  Params q = init_params(cfg, 4, rng2);
  EffectEstimates est2 = predict_effects(cfg, q, x);
  double mean = 0.0;
  for (double v : est2.ite_hat) mean += v;
  mean /= 7.0;
  CHECK(est2.ate_hat == doctest::Approx(mean).epsilon(1e-15));
}

TEST_CASE("weight learning responds to active dependence terms") {
  Dataset train_ds = separable_dataset(50, 24);
  Dataset val = separable_dataset(16, 25);
  BackboneConfig cfg = small_backbone(OutcomeKind::Binary);
  LossWeights lw;
  lw.alpha = 1.0;
  lw.gamma1 = 1.0;
  lw.gamma2 = 1.0;
  lw.gamma3 = 1.0;
  TrainConfig tc = quick_train(10);

  TrainResult res = train(cfg, train_ds, val, lw, tc);
  const TraceRow& last = res.state.trace.back();
  CHECK(last.w_balance >= 0.0);
  CHECK(last.pre_treatment > 0.0);
  CHECK(last.representation > 0.0);
  CHECK(last.layerwise > 0.0);
  CHECK(last.weight_total > 0.0);
  bool moved = false;
  for (double w : res.weights.values())
    if (w != 1.0) moved = true;
  CHECK(moved);

  TrainConfig silent = tc;
  silent.record_trace = false;
  TrainResult quiet = train(cfg, train_ds, val, lw, silent);
  CHECK(quiet.state.trace.empty());
  CHECK(quiet.state.best_val == res.state.best_val);
}
