#include <doctest.h>

#include <cmath>
#include <numeric>

#include "stablehte/autodiff.hpp"
#include "stablehte/datagen.hpp"
#include "stablehte/errors.hpp"

using namespace stablehte;

namespace {

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Pearson correlation between the true effect and one covariate column.
double effect_column_corr(const Dataset& ds, int col) {
  double me = 0.0;
  double mx = 0.0;
  const int n = ds.n();
  for (int i = 0; i < n; ++i) {
    me += ds.y1[i] - ds.y0[i];
    mx += ds.X(i, col);
  }
  me /= n;
  mx /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (int i = 0; i < n; ++i) {
    const double de = ds.y1[i] - ds.y0[i] - me;
    const double dx = ds.X(i, col) - mx;
    sxy += de * dx;
    sxx += dx * dx;
    syy += de * de;
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

TEST_CASE("population has the configured shape and binary outcome structure") {
  SynConfig cfg;
  cfg.mI = 8;
  cfg.mC = 8;
  cfg.mA = 8;
  cfg.mV = 2;
  cfg.n = 2000;
  cfg.seed = 31;
  Population pop = generate_population(cfg);
  const Dataset& ds = pop.data;
  CHECK(ds.m() == 26);
  CHECK(ds.n() == 2000);
  CHECK(ds.columns_with_role(ColumnRole::Unstable).size() == 2);
  ds.validate();
  for (int i = 0; i < ds.n(); ++i) {
    const double expect = ds.t[i] == 1 ? ds.y1[i] : ds.y0[i];
    CHECK(ds.yf[i] == expect);
    const double other = ds.t[i] == 1 ? ds.y0[i] : ds.y1[i];
    CHECK(ds.ycf[i] == other);
  }
  // Both outcome arms should have both classes at this scale.
  CHECK(mean(ds.y0) > 0.05);
  CHECK(mean(ds.y0) < 0.95);
  CHECK(mean(ds.y1) > 0.05);
  CHECK(mean(ds.y1) < 0.95);
}

TEST_CASE("identical config and seed give a bit-identical population") {
  SynConfig cfg;
  cfg.n = 500;
  cfg.seed = 77;
  Population a = generate_population(cfg);
  Population b = generate_population(cfg);
  REQUIRE(a.data.n() == b.data.n());
  for (int i = 0; i < a.data.n(); ++i) {
    CHECK(a.data.t[i] == b.data.t[i]);
    CHECK(a.data.yf[i] == b.data.yf[i]);
    for (int j = 0; j < a.data.m(); ++j) CHECK(a.data.X(i, j) == b.data.X(i, j));
  }
  CHECK(a.params.z0_center == b.params.z0_center);
}

TEST_CASE("treated fraction matches the average propensity recomputed from stored params") {
  SynConfig cfg;
  cfg.n = 8000;
  cfg.seed = 5;
  Population pop = generate_population(cfg);
  double expected = 0.0;
  for (int i = 0; i < pop.data.n(); ++i) {
    double z = pop.params.xi[i];
    for (int k = 0; k < cfg.mI + cfg.mC; ++k)
      z += 0.1 * pop.params.theta_t[k] * pop.data.X(i, k);
    expected += ad::sigmoid_value(z);
  }
  expected /= pop.data.n();
  double actual = 0.0;
  for (int v : pop.data.t) actual += v;
  actual /= pop.data.n();
  CHECK(std::abs(actual - expected) < 0.02);
}

TEST_CASE("selection probabilities lie in (0,1] and zero-mismatch rows get 1") {
  SynConfig cfg;
  cfg.n = 300;
  cfg.seed = 9;
  Population pop = generate_population(cfg);
  auto pr = selection_probabilities(pop.data, 2.5);
  for (double p : pr) {
    CHECK(p > 0.0);
    CHECK(p <= 1.0);
  }

  // Force a row whose unstable columns equal the effect exactly.
  Dataset ds = pop.data;
  auto unstable = ds.columns_with_role(ColumnRole::Unstable);
  const double effect = ds.y1[0] - ds.y0[0];
  for (int j : unstable) ds.X(0, j) = effect;
  CHECK(selection_probabilities(ds, 2.5)[0] == 1.0);
}

TEST_CASE("biased sampling preserves row contents and flips effect correlation with rho's sign") {
  SynConfig cfg;
  cfg.n = 6000;
  cfg.seed = 13;
  Population pop = generate_population(cfg);
  const int vcol = cfg.mI + cfg.mC + cfg.mA;  // first unstable column

  EnvSpec pos;
  pos.rho = 2.5;
  EnvSpec neg;
  neg.rho = -2.5;
  RngState rng(99);
  RngState rng2(99);
  Dataset sp = biased_sample(pop.data, pos, rng);
  Dataset sn = biased_sample(pop.data, neg, rng2);
  REQUIRE(sp.n() > 10);
  REQUIRE(sn.n() > 10);
  CHECK(effect_column_corr(sp, vcol) > 0.0);
  CHECK(effect_column_corr(sn, vcol) < 0.0);

  // Membership only: every sampled row must appear verbatim in the parent.
  for (int j = 0; j < sp.m(); ++j) CHECK(sp.roles[j] == pop.data.roles[j]);
  int matched = 0;
  for (int i = 0; i < sp.n(); ++i) {
    for (int r = 0; r < pop.data.n(); ++r) {
      bool same = true;
      for (int j = 0; j < sp.m(); ++j)
        if (sp.X(i, j) != pop.data.X(r, j)) {
          same = false;
          break;
        }
      if (same) {
        ++matched;
        break;
      }
    }
  }
  CHECK(matched == sp.n());
}

TEST_CASE("expected retention shrinks as |rho| grows") {
  SynConfig cfg;
  cfg.n = 3000;
  cfg.seed = 21;
  Population pop = generate_population(cfg);
  double prev = 1e300;
  for (double rho : {1.3, 1.5, 2.5, 3.0}) {
    auto pr = selection_probabilities(pop.data, rho);
    double total = std::accumulate(pr.begin(), pr.end(), 0.0);
    CHECK(total < prev);
    prev = total;
  }
}

TEST_CASE("target count accumulates fresh pools until reached") {
  SynConfig cfg;
  cfg.mI = 2;
  cfg.mC = 2;
  cfg.mA = 2;
  cfg.mV = 1;
  cfg.n = 400;
  cfg.seed = 3;
  Population pop = generate_population(cfg);
  EnvSpec env;
  env.rho = 1.5;
  env.target_count = 900;  // more than one pool can provide
  RngState rng(17);
  Dataset ds = biased_sample(pop, env, rng);
  CHECK(ds.n() == 900);
  ds.validate();
}

TEST_CASE("env suite produces one environment per rho and a 70/30 split") {
  SynConfig cfg;
  cfg.mI = 2;
  cfg.mC = 2;
  cfg.mA = 2;
  cfg.mV = 1;
  cfg.n = 500;
  cfg.seed = 8;
  Population pop = generate_population(cfg);
  EnvSpec size;
  size.rho = 1.5;
  size.target_count = 200;
  RngState rng(4);
  EnvSuite suite = env_suite(pop, {-1.5, 1.5}, 1.5, size, rng);
  REQUIRE(suite.envs.size() == 2);
  CHECK(suite.envs[0].first.rho == -1.5);
  CHECK(suite.envs[0].second.n() == 200);
  CHECK(suite.train.n() == 140);
  CHECK(suite.val.n() == 60);
}

TEST_CASE("mV=0 degenerates to uniform retention") {
  SynConfig cfg;
  cfg.mI = 2;
  cfg.mC = 2;
  cfg.mA = 2;
  cfg.mV = 0;
  cfg.n = 200;
  cfg.seed = 12;
  Population pop = generate_population(cfg);
  auto pr = selection_probabilities(pop.data, 3.0);
  for (double p : pr) CHECK(p == 1.0);
}

TEST_CASE("config and protocol errors") {
  SynConfig bad;
  bad.mI = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  SynConfig zero;
  zero.mI = zero.mC = zero.mA = zero.mV = 0;
  CHECK_THROWS_AS(zero.validate(), ConfigError);

  EnvSpec env;
  env.rho = 0.5;
  CHECK_THROWS_AS(env.validate(), ConfigError);

  SynConfig cfg;
  cfg.n = 50;
  Population pop = generate_population(cfg);
  Dataset noeffect = pop.data;
  noeffect.y0.clear();
  noeffect.y1.clear();
  EnvSpec ok;
  ok.rho = 2.5;
  RngState rng(1);
  CHECK_THROWS_AS(biased_sample(noeffect, ok, rng), ProtocolError);
}
