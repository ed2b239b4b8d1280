#include "stablehte/datagen.hpp"

#include <cmath>
#include <string>

#include "stablehte/autodiff.hpp"
#include "stablehte/errors.hpp"

namespace stablehte {

void SynConfig::validate() const {
  if (mI < 0 || mC < 0 || mA < 0 || mV < 0)
    throw ConfigError("syn config: dimension counts must be non-negative");
  if (m() < 1) throw ConfigError("syn config: at least one covariate column required");
  if (n < 1) throw ConfigError("syn config: n must be at least 1");
}

void EnvSpec::validate() const {
  if (std::abs(rho) <= 1.0)
    throw ConfigError("env spec: |rho| must exceed 1, got " + std::to_string(rho));
  if (target_count < 0) throw ConfigError("env spec: target_count must be non-negative");
  if (target_fraction < 0.0 || target_fraction >= 1.0)
    throw ConfigError("env spec: target_fraction must lie in [0,1)");
  if (target_count > 0 && target_fraction > 0.0)
    throw ConfigError("env spec: set target_count or target_fraction, not both");
}

namespace {

std::vector<ColumnRole> syn_roles(const SynConfig& cfg) {
  std::vector<ColumnRole> roles;
  roles.reserve(static_cast<std::size_t>(cfg.m()));
  for (int j = 0; j < cfg.mI; ++j) roles.push_back(ColumnRole::Instrument);
  for (int j = 0; j < cfg.mC; ++j) roles.push_back(ColumnRole::Confounder);
  for (int j = 0; j < cfg.mA; ++j) roles.push_back(ColumnRole::Adjustment);
  for (int j = 0; j < cfg.mV; ++j) roles.push_back(ColumnRole::Unstable);
  return roles;
}

struct Scores {
  std::vector<double> z0;
  std::vector<double> z1;
};

// Outcome scores: z0 linear and z1 quadratic in the confounder+adjustment
// block, both scaled by 1/(10*(mC+mA)).
Scores outcome_scores(const SynConfig& cfg, const GenParams& params, const Matrix& X) {
  Scores s;
  const int n = X.rows();
  s.z0.assign(static_cast<std::size_t>(n), 0.0);
  s.z1.assign(static_cast<std::size_t>(n), 0.0);
  const int ca = cfg.mC + cfg.mA;
  if (ca == 0) return s;
  const double denom = 10.0 * ca;
  for (int i = 0; i < n; ++i) {
    auto row = X.row(i);
    double acc0 = 0.0;
    double acc1 = 0.0;
    for (int k = 0; k < ca; ++k) {
      const double v = row[cfg.mI + k];
      acc0 += params.theta_y0[static_cast<std::size_t>(k)] * v;
      acc1 += params.theta_y1[static_cast<std::size_t>(k)] * v * v;
    }
    s.z0[static_cast<std::size_t>(i)] = acc0 / denom;
    s.z1[static_cast<std::size_t>(i)] = acc1 / denom;
  }
  return s;
}

// Fills treatments and outcomes for a pool given fixed coefficients. The
// label thresholds come from `params` and are not recomputed here.
Dataset assemble_pool(const SynConfig& cfg, const GenParams& params, Matrix X,
                      const std::vector<double>& xi, RngState& treat_rng) {
  Dataset ds;
  const int n = X.rows();
  ds.X = std::move(X);
  ds.outcome = OutcomeKind::Binary;
  ds.roles = syn_roles(cfg);
  ds.t.resize(static_cast<std::size_t>(n));
  ds.yf.resize(static_cast<std::size_t>(n));
  ds.ycf.resize(static_cast<std::size_t>(n));
  ds.y0.resize(static_cast<std::size_t>(n));
  ds.y1.resize(static_cast<std::size_t>(n));

  const int ic = cfg.mI + cfg.mC;
  Scores s = outcome_scores(cfg, params, ds.X);
  for (int i = 0; i < n; ++i) {
    auto row = ds.X.row(i);
    double z = xi[static_cast<std::size_t>(i)];
    for (int k = 0; k < ic; ++k) z += 0.1 * params.theta_t[static_cast<std::size_t>(k)] * row[k];
    const double propensity = ad::sigmoid_value(z);
    ds.t[static_cast<std::size_t>(i)] = treat_rng.uniform() < propensity ? 1 : 0;

    const double y0 = s.z0[static_cast<std::size_t>(i)] > params.z0_center ? 1.0 : 0.0;
    const double y1 = s.z1[static_cast<std::size_t>(i)] > params.z1_center ? 1.0 : 0.0;
    ds.y0[static_cast<std::size_t>(i)] = y0;
    ds.y1[static_cast<std::size_t>(i)] = y1;
    const int t = ds.t[static_cast<std::size_t>(i)];
    ds.yf[static_cast<std::size_t>(i)] = t == 1 ? y1 : y0;
    ds.ycf[static_cast<std::size_t>(i)] = t == 1 ? y0 : y1;
  }
  return ds;
}

}  // namespace

Population generate_population(const SynConfig& cfg) {
  cfg.validate();
  RngState root(cfg.seed);

  Population pop;
  pop.cfg = cfg;
  GenParams& params = pop.params;

  RngState coeff = root.fork("coefficients");
  params.theta_t.resize(static_cast<std::size_t>(cfg.mI + cfg.mC));
  params.theta_y0.resize(static_cast<std::size_t>(cfg.mC + cfg.mA));
  params.theta_y1.resize(static_cast<std::size_t>(cfg.mC + cfg.mA));
  coeff.fill_uniform(params.theta_t, 8.0, 16.0);
  coeff.fill_uniform(params.theta_y0, 8.0, 16.0);
  coeff.fill_uniform(params.theta_y1, 8.0, 16.0);

  RngState pool = root.fork("pool", 0);
  Matrix X(cfg.n, cfg.m());
  pool.fill_normal(X);
  params.xi.resize(static_cast<std::size_t>(cfg.n));
  pool.fill_normal(params.xi);

  // Thresholds are the parent-pool means, frozen so later pools label
  // identically distributed units by the same rule.
  Scores s = outcome_scores(cfg, params, X);
  double c0 = 0.0;
  double c1 = 0.0;
  for (double v : s.z0) c0 += v;
  for (double v : s.z1) c1 += v;
  params.z0_center = c0 / cfg.n;
  params.z1_center = c1 / cfg.n;

  RngState treat = pool.fork("treatment");
  pop.data = assemble_pool(cfg, params, std::move(X), params.xi, treat);
  return pop;
}

Dataset generate_pool(const SynConfig& cfg, const GenParams& params, RngState& rng) {
  cfg.validate();
  if (params.theta_t.size() != static_cast<std::size_t>(cfg.mI + cfg.mC) ||
      params.theta_y0.size() != static_cast<std::size_t>(cfg.mC + cfg.mA))
    throw ContractError("generate_pool: coefficients do not match the config dimensions");
  Matrix X(cfg.n, cfg.m());
  rng.fill_normal(X);
  std::vector<double> xi(static_cast<std::size_t>(cfg.n));
  rng.fill_normal(xi);
  RngState treat = rng.fork("treatment");
  return assemble_pool(cfg, params, std::move(X), xi, treat);
}

std::vector<double> selection_probabilities(const Dataset& ds, double rho) {
  if (!ds.has_potentials())
    throw ProtocolError("biased sampling requires ground-truth potential outcomes");
  const double sgn = rho > 0.0 ? 1.0 : -1.0;
  const double log_base = std::log(std::abs(rho));
  auto unstable = ds.columns_with_role(ColumnRole::Unstable);
  std::vector<double> pr(static_cast<std::size_t>(ds.n()), 1.0);
  for (int i = 0; i < ds.n(); ++i) {
    const double effect =
        ds.y1[static_cast<std::size_t>(i)] - ds.y0[static_cast<std::size_t>(i)];
    double log_pr = 0.0;
    auto row = ds.X.row(i);
    for (int j : unstable) log_pr += -10.0 * std::abs(effect - sgn * row[j]) * log_base;
    pr[static_cast<std::size_t>(i)] = std::exp(log_pr);
  }
  return pr;
}

Dataset biased_sample(const Dataset& ds, const EnvSpec& env, RngState& rng) {
  env.validate();
  auto pr = selection_probabilities(ds, env.rho);
  std::vector<int> keep;
  for (int i = 0; i < ds.n(); ++i)
    if (rng.uniform() < pr[static_cast<std::size_t>(i)]) keep.push_back(i);
  return ds.subset(keep);
}

Dataset biased_sample(const Population& pop, const EnvSpec& env, RngState& rng) {
  env.validate();
  int target = env.target_count;
  if (target == 0 && env.target_fraction > 0.0)
    target = static_cast<int>(std::lround(env.target_fraction * pop.data.n()));
  if (target == 0) return biased_sample(pop.data, env, rng);

  Dataset acc = biased_sample(pop.data, env, rng);
  // Retention under strong bias is rare, so keep drawing fresh pools from the
  // same coefficients until enough units survive. Bounded to catch configs
  // whose retention rate is effectively zero.
  const long max_pools = 20000;
  long pools = 0;
  while (acc.n() < target) {
    if (++pools > max_pools)
      throw DataError("biased_sample: retention too low to reach " + std::to_string(target) +
                      " units at rho=" + std::to_string(env.rho));
    RngState pool_rng = rng.fork("pool", static_cast<std::uint64_t>(pools));
    Dataset pool = generate_pool(pop.cfg, pop.params, pool_rng);
    RngState keep_rng = pool_rng.fork("keep");
    acc.append_rows(biased_sample(pool, env, keep_rng));
  }
  std::vector<int> head(static_cast<std::size_t>(target));
  for (int i = 0; i < target; ++i) head[static_cast<std::size_t>(i)] = i;
  return acc.subset(head);
}

EnvSuite env_suite(const Population& pop, const std::vector<double>& rho_list, double train_rho,
                   const EnvSpec& size_template, RngState& rng) {
  if (rho_list.empty()) throw ConfigError("env_suite: rho grid must be non-empty");
  EnvSuite suite;
  suite.train_rho = train_rho;
  bool saw_train = false;
  for (std::size_t k = 0; k < rho_list.size(); ++k) {
    EnvSpec env = size_template;
    env.rho = rho_list[k];
    RngState env_rng = rng.fork("environment", static_cast<std::uint64_t>(k));
    Dataset ds = biased_sample(pop, env, env_rng);
    if (env.rho == train_rho && !saw_train) {
      saw_train = true;
      RngState split_rng = rng.fork("train-val-split");
      auto perm = split_rng.permutation(ds.n());
      const int n_train = static_cast<int>(std::lround(0.7 * ds.n()));
      std::vector<int> tr(perm.begin(), perm.begin() + n_train);
      std::vector<int> va(perm.begin() + n_train, perm.end());
      suite.train = ds.subset(tr);
      suite.val = ds.subset(va);
    }
    suite.envs.emplace_back(env, std::move(ds));
  }
  if (!saw_train) {
    EnvSpec env = size_template;
    env.rho = train_rho;
    RngState env_rng = rng.fork("environment-train");
    Dataset ds = biased_sample(pop, env, env_rng);
    RngState split_rng = rng.fork("train-val-split");
    auto perm = split_rng.permutation(ds.n());
    const int n_train = static_cast<int>(std::lround(0.7 * ds.n()));
    std::vector<int> tr(perm.begin(), perm.begin() + n_train);
    std::vector<int> va(perm.begin() + n_train, perm.end());
    suite.train = ds.subset(tr);
    suite.val = ds.subset(va);
  }
  return suite;
}

}  // namespace stablehte
