#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "stablehte/autodiff.hpp"
#include "stablehte/datagen.hpp"
#include "stablehte/errors.hpp"

namespace stablehte {

SemiSynthSchema semi_schema_from_string(const std::string& s) {
  if (s == "twins") return SemiSynthSchema::Twins;
  if (s == "ihdp") return SemiSynthSchema::Ihdp;
  throw ConfigError("unknown observational schema: " + s);
}

std::string to_string(SemiSynthSchema schema) {
  return schema == SemiSynthSchema::Twins ? "twins" : "ihdp";
}

namespace {

constexpr int kTwinsRawCols = 28;
constexpr int kTwinsInstruments = 10;
constexpr int kTwinsShiftCols = 5;
constexpr int kIhdpCols = 25;

// A column is treated as continuous when it takes more than two distinct
// values; the benchmark files encode the discrete ones as 0/1 flags.
std::vector<int> continuous_columns(const Dataset& ds, int first, int last) {
  std::vector<int> cols;
  for (int c = first; c < last; ++c) {
    std::set<double> seen;
    for (int i = 0; i < ds.n(); ++i) {
      seen.insert(ds.X(i, c));
      if (seen.size() > 2) break;
    }
    if (seen.size() > 2) cols.push_back(c);
  }
  return cols;
}

// Weighted quota draw without replacement: each row keeps the key
// log(u)/pr and the k largest keys win, which selects proportionally to pr.
std::vector<int> quota_rows(const std::vector<double>& pr, int k, RngState& rng) {
  const int n = static_cast<int>(pr.size());
  std::vector<std::pair<double, int>> keys;
  keys.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    const double p = pr[static_cast<std::size_t>(i)];
    const double key = p > 0.0 ? std::log(u) / p : -std::numeric_limits<double>::infinity();
    keys.emplace_back(key, i);
  }
  std::partial_sort(keys.begin(), keys.begin() + k, keys.end(),
                    [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<int> rows;
  rows.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) rows.push_back(keys[static_cast<std::size_t>(i)].second);
  std::sort(rows.begin(), rows.end());
  return rows;
}

// Standardizes the named columns of all three splits with the training
// split's mean and standard deviation. Constant columns are left alone.
void zscore_by_train(Dataset& train, Dataset& val, Dataset& test, const std::vector<int>& cols) {
  for (int c : cols) {
    double mean = 0.0;
    for (int i = 0; i < train.n(); ++i) mean += train.X(i, c);
    mean /= static_cast<double>(train.n());
    double ss = 0.0;
    for (int i = 0; i < train.n(); ++i) {
      const double d = train.X(i, c) - mean;
      ss += d * d;
    }
    const double sd = std::sqrt(ss / static_cast<double>(train.n()));
    if (sd == 0.0) continue;
    for (Dataset* ds : {&train, &val, &test})
      for (int i = 0; i < ds->n(); ++i) ds->X(i, c) = (ds->X(i, c) - mean) / sd;
  }
}

struct SplitPlan {
  std::vector<int> test;
  std::vector<int> train;
  std::vector<int> val;
};

SplitPlan plan_splits(const Dataset& ds, const EnvSpec& env, double default_fraction,
                      RngState& rng) {
  env.validate();
  const int n = ds.n();
  const double frac = env.target_fraction > 0.0 ? env.target_fraction : default_fraction;
  const int k = static_cast<int>(std::lround(frac * n));
  if (k < 1 || k > n - 2)
    throw ProtocolError("observational split: test quota leaves no data to train on");

  auto pr = selection_probabilities(ds, env.rho);
  RngState test_rng = rng.fork("test-split");
  SplitPlan plan;
  plan.test = quota_rows(pr, k, test_rng);

  std::vector<char> in_test(static_cast<std::size_t>(n), 0);
  for (int r : plan.test) in_test[static_cast<std::size_t>(r)] = 1;
  std::vector<int> rest;
  rest.reserve(static_cast<std::size_t>(n - k));
  for (int i = 0; i < n; ++i)
    if (!in_test[static_cast<std::size_t>(i)]) rest.push_back(i);

  RngState split_rng = rng.fork("train-val-split");
  std::vector<int> perm = split_rng.permutation(static_cast<int>(rest.size()));
  const int n_train = static_cast<int>(std::lround(0.7 * static_cast<double>(rest.size())));
  plan.train.reserve(static_cast<std::size_t>(n_train));
  for (int i = 0; i < n_train; ++i)
    plan.train.push_back(rest[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])]);
  for (std::size_t i = static_cast<std::size_t>(n_train); i < perm.size(); ++i)
    plan.val.push_back(rest[static_cast<std::size_t>(perm[i])]);
  std::sort(plan.train.begin(), plan.train.end());
  std::sort(plan.val.begin(), plan.val.end());
  return plan;
}

SemiSplits load_twins(const std::string& path, const EnvSpec& env, RngState& rng) {
  Dataset raw = read_dataset_csv(path);
  if (raw.m() != kTwinsRawCols)
    throw LoadError("twins: expected " + std::to_string(kTwinsRawCols) +
                    " covariate columns, found " + std::to_string(raw.m()));
  if (!raw.has_potentials())
    throw LoadError("twins: needs y0 and y1 columns with both twins' outcomes");
  for (int i = 0; i < raw.n(); ++i) {
    const double a = raw.y0[static_cast<std::size_t>(i)];
    const double b = raw.y1[static_cast<std::size_t>(i)];
    if ((a != 0.0 && a != 1.0) || (b != 0.0 && b != 1.0))
      throw LoadError("twins: potential outcomes must be 0/1 mortality flags");
  }

  const int n = raw.n();
  const int m_full = kTwinsRawCols + kTwinsInstruments + kTwinsShiftCols;
  Dataset ds;
  ds.outcome = OutcomeKind::Binary;
  ds.X = Matrix(n, m_full);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < kTwinsRawCols; ++c) ds.X(i, c) = raw.X(i, c);

  RngState aug_rng = rng.fork("augmented-columns");
  for (int c = kTwinsRawCols; c < m_full; ++c)
    for (int i = 0; i < n; ++i) ds.X(i, c) = aug_rng.normal();

  ds.roles.assign(static_cast<std::size_t>(m_full), ColumnRole::Confounder);
  for (int c = kTwinsRawCols; c < kTwinsRawCols + kTwinsInstruments; ++c)
    ds.roles[static_cast<std::size_t>(c)] = ColumnRole::Instrument;
  for (int c = kTwinsRawCols + kTwinsInstruments; c < m_full; ++c)
    ds.roles[static_cast<std::size_t>(c)] = ColumnRole::Unstable;

  // treatment from a random linear score over the non-shift columns
  const int m_ic = kTwinsRawCols + kTwinsInstruments;
  RngState coef_rng = rng.fork("treatment-coefficients");
  std::vector<double> w(static_cast<std::size_t>(m_ic));
  for (double& v : w) v = coef_rng.uniform(-0.1, 0.1);
  RngState noise_rng = rng.fork("treatment-noise");
  RngState draw_rng = rng.fork("treatment-draw");
  ds.t.resize(static_cast<std::size_t>(n));
  ds.yf.resize(static_cast<std::size_t>(n));
  ds.ycf.resize(static_cast<std::size_t>(n));
  ds.y0 = raw.y0;
  ds.y1 = raw.y1;
  for (int i = 0; i < n; ++i) {
    double z = 0.1 * noise_rng.normal();
    for (int c = 0; c < m_ic; ++c) z += w[static_cast<std::size_t>(c)] * ds.X(i, c);
    const int t = draw_rng.uniform() < ad::sigmoid_value(z) ? 1 : 0;
    ds.t[static_cast<std::size_t>(i)] = t;
    ds.yf[static_cast<std::size_t>(i)] =
        t == 1 ? ds.y1[static_cast<std::size_t>(i)] : ds.y0[static_cast<std::size_t>(i)];
    ds.ycf[static_cast<std::size_t>(i)] =
        t == 1 ? ds.y0[static_cast<std::size_t>(i)] : ds.y1[static_cast<std::size_t>(i)];
  }
  ds.validate();

  SplitPlan plan = plan_splits(ds, env, 0.2, rng);
  SemiSplits out;
  out.test = ds.subset(plan.test);
  out.train = ds.subset(plan.train);
  out.val = ds.subset(plan.val);
  zscore_by_train(out.train, out.val, out.test,
                  continuous_columns(ds, 0, kTwinsRawCols));
  return out;
}

SemiSplits load_ihdp(const std::string& path, const EnvSpec& env, RngState& rng) {
  Dataset ds = read_dataset_csv(path);
  if (ds.m() != kIhdpCols)
    throw LoadError("ihdp: expected " + std::to_string(kIhdpCols) +
                    " covariate columns, found " + std::to_string(ds.m()));
  if (!ds.has_potentials())
    throw LoadError("ihdp: needs y0 and y1 columns with simulated outcomes");
  ds.outcome = OutcomeKind::Continuous;

  // the continuous covariates carry the distribution shift
  std::vector<int> cont = continuous_columns(ds, 0, ds.m());
  if (cont.empty()) throw LoadError("ihdp: no continuous covariate columns found");
  ds.roles.assign(static_cast<std::size_t>(ds.m()), ColumnRole::Raw);
  for (int c : cont) ds.roles[static_cast<std::size_t>(c)] = ColumnRole::Unstable;
  ds.validate();

  SplitPlan plan = plan_splits(ds, env, 0.1, rng);
  SemiSplits out;
  out.test = ds.subset(plan.test);
  out.train = ds.subset(plan.train);
  out.val = ds.subset(plan.val);
  zscore_by_train(out.train, out.val, out.test, cont);
  return out;
}

}  // namespace

SemiSplits load_semi_synthetic(const std::string& path, SemiSynthSchema schema,
                               const EnvSpec& env, RngState& rng) {
  switch (schema) {
    case SemiSynthSchema::Twins:
      return load_twins(path, env, rng);
    case SemiSynthSchema::Ihdp:
      return load_ihdp(path, env, rng);
  }
  throw ConfigError("unknown observational schema");
}

}  // namespace stablehte
