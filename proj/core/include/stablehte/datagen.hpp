#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "stablehte/dataset.hpp"
#include "stablehte/rng.hpp"

namespace stablehte {

// Synthetic benchmark family Syn_mI_mC_mA_mV: iid standard-normal covariates
// split into instruments, confounders, adjustments and unstable columns.
struct SynConfig {
  int mI = 8;
  int mC = 8;
  int mA = 8;
  int mV = 2;
  int n = 10000;
  std::uint64_t seed = 0;

  int m() const { return mI + mC + mA + mV; }
  void validate() const;
};

// Coefficients and noise drawn once per benchmark family. Environments and
// replications that should differ only by covariate distribution share one
// of these.
struct GenParams {
  std::vector<double> theta_t;   // over instruments + confounders
  std::vector<double> theta_y0;  // over confounders + adjustments
  std::vector<double> theta_y1;
  std::vector<double> xi;        // per-unit treatment noise of the parent pool
  double z0_center = 0.0;        // outcome thresholds frozen on the parent pool
  double z1_center = 0.0;
};

// One target environment: bias rate plus an optional size request. Exactly
// one of target_count / target_fraction may be set; both zero means "keep
// whatever a single Bernoulli pass retains".
struct EnvSpec {
  double rho = 2.5;
  int target_count = 0;
  double target_fraction = 0.0;

  void validate() const;
};

struct Population {
  Dataset data;
  SynConfig cfg;
  GenParams params;
};

// Draws coefficients, covariates, treatments and potential outcomes for one
// parent pool. Treatment propensity is sigmoid(theta_t.x_IC/10 + xi); the
// potential outcomes threshold linear (arm 0) and squared (arm 1) scores at
// their pool means, giving 0/1 labels.
Population generate_population(const SynConfig& cfg);

// Fresh pool from existing coefficients: new covariates and noise, outcome
// thresholds kept from the parent so the label rule is identical.
Dataset generate_pool(const SynConfig& cfg, const GenParams& params, RngState& rng);

// Per-row retention probability prod over unstable columns of
// |rho|^(-10*|y1-y0-sign(rho)*x|). Rows matching the environment's
// effect-covariate alignment keep probability near 1.
std::vector<double> selection_probabilities(const Dataset& ds, double rho);

// One independent Bernoulli(Pr) pass over ds. Ignores any size request.
Dataset biased_sample(const Dataset& ds, const EnvSpec& env, RngState& rng);

// Size-honoring variant: accumulates Bernoulli passes over freshly generated
// pools (same coefficients, new noise) until the requested count is reached,
// then truncates to it.
Dataset biased_sample(const Population& pop, const EnvSpec& env, RngState& rng);

struct EnvSuite {
  std::vector<std::pair<EnvSpec, Dataset>> envs;  // in rho_list order
  Dataset train;
  Dataset val;
  double train_rho = 0.0;
};

// One environment per rho, all drawn from the shared population; the
// training-rho environment is additionally split 70/30 into train/val.
EnvSuite env_suite(const Population& pop, const std::vector<double>& rho_list, double train_rho,
                   const EnvSpec& size_template, RngState& rng);

// Shapes of the two observational benchmarks this harness understands.
// Twins files carry 28 covariate columns plus binary potential outcomes; the
// loader appends 10 instrument and 5 shift columns and simulates treatment.
// Ihdp files carry 25 covariate columns with continuous outcomes and a real
// treatment column; the shift acts on the continuous covariates.
enum class SemiSynthSchema { Twins, Ihdp };

SemiSynthSchema semi_schema_from_string(const std::string& s);
std::string to_string(SemiSynthSchema schema);

struct SemiSplits {
  Dataset train;
  Dataset val;
  Dataset test;
};

// Loads an observational CSV, applies the schema's augmentation, carves out
// a biased test quota (20% for twins, 10% for ihdp, overridable through
// env.target_fraction) at env.rho, then splits the rest 70/30. Continuous
// raw columns are standardized with training-split statistics.
SemiSplits load_semi_synthetic(const std::string& path, SemiSynthSchema schema,
                               const EnvSpec& env, RngState& rng);

}  // namespace stablehte
