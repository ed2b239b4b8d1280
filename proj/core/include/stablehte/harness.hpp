#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stablehte/datagen.hpp"
#include "stablehte/losses.hpp"
#include "stablehte/metrics.hpp"
#include "stablehte/nets.hpp"
#include "stablehte/trainer.hpp"

namespace stablehte {

// Data source of an experiment. Synthetic runs draw a parent population and
// one biased environment per grid entry; twins/ihdp runs load a CSV and
// carve out a biased test quota instead.
struct DataSection {
  std::string kind = "synthetic";  // synthetic | twins | ihdp
  SynConfig syn;                   // synthetic only; its seed field is ignored
  std::vector<double> rho_grid = {2.5};
  double train_rho = 2.5;
  int env_count = 0;          // per-environment size request (0 = natural size)
  double env_fraction = 0.0;  // alternative size request as a fraction
  std::string path;           // semi-synthetic source file
  double test_rho = -2.5;     // bias rate of the semi-synthetic test quota
  double test_fraction = 0.0; // overrides the schema's default quota when set
};

// One sweep grid point: a label plus loss-coefficient (and optionally
// variant) overrides applied on top of the base config.
struct SweepPoint {
  std::string name;
  std::optional<std::string> variant;
  std::map<std::string, double> overrides;  // alpha, gamma1, gamma2, gamma3, lambda
};

struct SweepSection {
  std::map<std::string, std::vector<double>> axes;  // cartesian product form
  std::vector<SweepPoint> points;                   // explicit list form

  bool empty() const { return axes.empty() && points.empty(); }
};

// Everything one experiment needs, parsed from a single JSON file. The
// canonical serialization of this struct (sorted keys, round-trip floats)
// is hashed into the config digest that every output file embeds.
struct ExperimentConfig {
  DataSection data;
  BackboneConfig model;
  std::string variant = "vanilla";  // vanilla | sbrl | sbrl-hap
  LossWeights losses;
  TrainConfig train;  // seed / learn_weights / record_trace are harness-owned
  SweepSection sweep;
  int replications = 1;
  std::uint64_t seed = 0;
  bool heatmap = false;
  int heatmap_dims = 25;
  int heatmap_rff = 0;  // feature count of the heatmap banks; 0 reuses train.rff
  std::string out_dir = "out";

  void validate() const;
};

ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// Round-trip serialization: config_from_json(canonical_config_json(c))
// produces a config with the same canonical form.
std::string canonical_config_json(const ExperimentConfig& cfg);

// 16 hex characters identifying the effective configuration.
std::string config_digest(const ExperimentConfig& cfg);

// Loss coefficients after variant enforcement: vanilla zeroes every gamma,
// sbrl zeroes gamma2 and gamma3, sbrl-hap keeps all terms.
LossWeights effective_losses(const std::string& variant, const LossWeights& lw);
bool variant_learns_weights(const std::string& variant);

// Outcome kind implied by the data source (binary except for ihdp).
OutcomeKind implied_outcome(const DataSection& data);

// Expands the sweep section into explicit points; a config without a sweep
// section expands to the single passthrough point "-".
std::vector<SweepPoint> expand_sweep(const ExperimentConfig& cfg);

// Base config with one sweep point applied (losses overridden, variant
// possibly replaced, sweep section cleared).
ExperimentConfig apply_point(const ExperimentConfig& cfg, const SweepPoint& point);

// One line of the flat results table.
struct MetricRow {
  int run = 0;
  std::uint64_t seed = 0;
  std::string backbone;
  std::string variant;
  std::string point = "-";
  double rho = 0.0;
  std::string split;
  std::string metric;
  double value = 0.0;
};

// One evaluation dataset of a replication.
struct EnvRecord {
  std::string split;  // train | val | test
  double rho = 0.0;
  Dataset data;
};

struct RepData {
  Dataset train;
  Dataset val;
  std::vector<EnvRecord> eval_sets;  // train and val first, then the grid
};

struct RepOutput {
  std::vector<MetricRow> rows;
  std::vector<TraceRow> trace;
  std::optional<HeatmapResult> heatmap;
  TrainResult model;
  std::uint64_t train_seed = 0;
};

// Shared parent pool of a synthetic experiment, drawn from the experiment
// seed; empty for twins/ihdp configs. All replications and sweep points of
// one experiment sample their environments from this single pool.
std::optional<Population> experiment_population(const ExperimentConfig& cfg);

// Deterministic data for replication `rep`: environments redrawn from the
// shared population (synthetic) or the source re-partitioned (twins/ihdp).
// `pop` must be non-null exactly for synthetic configs.
RepData build_replication_data(const ExperimentConfig& cfg, const Population* pop, int rep);

std::uint64_t replication_train_seed(const ExperimentConfig& cfg, int rep);

// Trains one replication of an already point-applied config.
TrainResult train_replication(const ExperimentConfig& cfg, const RepData& data, int rep,
                              bool trace);

// Metric rows (and optionally the dependence heatmap) for a trained model.
std::vector<MetricRow> evaluate_replication(const ExperimentConfig& cfg, const RepData& data,
                                            const TrainResult& model, int rep,
                                            const std::string& point,
                                            std::optional<HeatmapResult>* heatmap_out);

// Full train-and-evaluate pass for one (point-applied config, replication).
RepOutput run_replication(const ExperimentConfig& cfg, const Population* pop, int rep,
                          const std::string& point, bool trace);

// Model artifact round trip. Files embed the config digest and the
// replication seed; read_model checks the digest when `expect_digest` is
// non-empty and throws LoadError on mismatch.
struct ModelArtifact {
  BackboneConfig model;
  Params params;
  SampleWeights weights;
  int best_iter = -1;
  double best_val = 0.0;
  int iterations = 0;
  std::uint64_t seed = 0;
  std::string digest;
};

void write_model(const std::string& path, const std::string& digest, const BackboneConfig& cfg,
                 const TrainResult& result, std::uint64_t seed);
ModelArtifact read_model(const std::string& path, const std::string& expect_digest);

// Commands behind the CLI subcommands. All of them create the output
// directory, run replications (and sweep points) on `jobs` workers, and
// write deterministic files. They throw on failure; the CLI maps exception
// types onto exit codes.
void cmd_generate(const ExperimentConfig& cfg);
void cmd_train(const ExperimentConfig& cfg, int jobs, bool trace);
void cmd_evaluate(const ExperimentConfig& cfg, int jobs);
void cmd_sweep(const ExperimentConfig& cfg, int jobs, bool trace);

}  // namespace stablehte
