#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "stablehte/errors.hpp"
#include "stablehte/harness.hpp"
#include "stablehte/rng.hpp"

using namespace stablehte;

namespace {

namespace fs = std::filesystem;

fs::path scratch_dir() {
  static fs::path dir = [] {
    auto d = fs::temp_directory_path() /
             ("stablehte_harness_" + std::to_string(std::random_device{}()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(bool(in));
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::uint64_t dataset_hash(const Dataset& ds) {
  std::uint64_t h = fnv1a64(ds.X.data().data(), ds.X.size() * sizeof(double));
  h = splitmix64(h ^ fnv1a64(ds.t.data(), ds.t.size() * sizeof(int)));
  h = splitmix64(h ^ fnv1a64(ds.yf.data(), ds.yf.size() * sizeof(double)));
  return h;
}

// Small but non-degenerate experiment used by the end-to-end cases.
std::string tiny_config_json(const std::string& out_dir, const std::string& variant,
                             int replications) {
  std::ostringstream cfg;
  cfg << R"({
    "data": {"kind": "synthetic", "syn": {"mI": 3, "mC": 3, "mA": 3, "mV": 1, "n": 420},
             "rho_grid": [-2.5, 2.5], "train_rho": 2.5, "env_count": 110},
    "model": {"backbone": "cfr", "d_r": 2, "d_y": 2, "h_r": 8, "h_y": 4},
    "variant": ")"
      << variant << R"(",
    "losses": {"alpha": 0.5, "gamma1": 0.1, "gamma2": 0.1, "gamma3": 0.1, "lambda": 0.0001},
    "train": {"max_iters": 20, "lr": 0.01, "patience": 20, "rff_a": 3, "rff_b": 3},
    "replications": )"
      << replications << R"(,
    "seed": 11,
    "heatmap": true,
    "heatmap_dims": 5,
    "out_dir": ")"
      << out_dir << R"("
  })";
  return cfg.str();
}

}  // namespace

TEST_CASE("config parsing fills defaults and accepts a full file") {
  ExperimentConfig cfg = config_from_json(R"({"data": {"kind": "synthetic"}})");
  CHECK(cfg.variant == "vanilla");
  CHECK(cfg.replications == 1);
  CHECK(cfg.seed == 0);
  CHECK(cfg.heatmap_dims == 25);
  CHECK_FALSE(cfg.heatmap);
  CHECK(cfg.out_dir == "out");
  CHECK(cfg.model.outcome == OutcomeKind::Binary);
  CHECK(cfg.data.rho_grid == std::vector<double>{2.5});

  ExperimentConfig full = config_from_json(R"({
    "data": {"kind": "synthetic", "syn": {"mI": 8, "mC": 8, "mA": 8, "mV": 2, "n": 4000},
             "rho_grid": [-3, -1.5, 1.5, 2.5], "train_rho": 2.5, "env_count": 1000},
    "model": {"backbone": "tarnet", "d_r": 3, "d_y": 3, "h_r": 64, "h_y": 32,
              "batch_norm": true, "rep_norm": true, "outcome": "binary"},
    "variant": "sbrl-hap",
    "losses": {"alpha": 1.0, "gamma1": 0.1, "gamma2": 0.01, "gamma3": 0.001, "lambda": 0.0001},
    "train": {"max_iters": 500, "lr": 0.001, "lr_decay": 0.5, "lr_decay_period": 200,
              "patience": 100, "k_net": 2, "k_w": 1, "rff_a": 5, "rff_b": 5,
              "ld_row_cap": 4096, "ld_batch": 1024},
    "replications": 10,
    "seed": 424242,
    "heatmap": true,
    "heatmap_dims": 25,
    "out_dir": "runs/demo"
  })");
  CHECK(full.model.kind == BackboneKind::Tarnet);
  CHECK(full.model.batch_norm);
  CHECK(full.variant == "sbrl-hap");
  CHECK(full.losses.gamma3 == 0.001);
  CHECK(full.train.k_net == 2);
  CHECK(full.train.lr_decay == 0.5);
  CHECK(full.seed == 424242);
  CHECK(full.data.rho_grid.size() == 4);
}

TEST_CASE("unknown keys are rejected at every level") {
  CHECK_THROWS_AS(config_from_json(R"({"datas": {}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"data": {"kindd": "synthetic"}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"data": {"syn": {"seed": 3}}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"model": {"width": 3}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"losses": {"gamma4": 1}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"train": {"momentum": 0.9}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"sweep": {"grid": {}}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"sweep": {"points": [{"name": "a", "beta": 1}]}})"),
                  ConfigError);
}

TEST_CASE("config validation catches bad values") {
  CHECK_THROWS_AS(config_from_json("not json"), ConfigError);
  CHECK_THROWS_AS(config_from_json("[1,2]"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"seed": -4})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"seed": "x"})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"replications": 0})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"variant": "cfr"})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"data": {"kind": "jobs"}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"data": {"rho_grid": [1.0]}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"data": {"train_rho": 0.5}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"data": {"env_count": 10, "env_fraction": 0.1}})"),
                  ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"data": {"kind": "twins"}})"), ConfigError);
  CHECK_THROWS_AS(
      config_from_json(R"({"data": {"kind": "twins", "path": "x.csv", "test_rho": 1.0}})"),
      ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"losses": {"alpha": -1}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"out_dir": ""})"), ConfigError);
  CHECK_THROWS_AS(
      config_from_json(R"({"data": {"kind": "ihdp", "path": "x.csv"},
                           "model": {"outcome": "binary"}})"),
      ConfigError);
  // and the implied outcome the other way round
  CHECK_THROWS_AS(config_from_json(R"({"model": {"outcome": "continuous"}})"), ConfigError);
}

TEST_CASE("digest is stable under formatting and key order, sensitive to content") {
  const std::string a = R"({"seed": 7, "variant": "sbrl", "data": {"kind": "synthetic"}})";
  const std::string b = R"({
      "data":    {"kind": "synthetic"},
      "variant": "sbrl",
      "seed":    7
  })";
  ExperimentConfig ca = config_from_json(a);
  ExperimentConfig cb = config_from_json(b);
  CHECK(config_digest(ca) == config_digest(cb));
  CHECK(config_digest(ca).size() == 16);

  // round trip through the canonical form reproduces the canonical form
  ExperimentConfig cc = config_from_json(canonical_config_json(ca));
  CHECK(canonical_config_json(cc) == canonical_config_json(ca));

  // the output directory is an execution detail, not part of the identity
  ExperimentConfig moved = ca;
  moved.out_dir = "elsewhere";
  CHECK(config_digest(moved) == config_digest(ca));

  ExperimentConfig reseeded = ca;
  reseeded.seed = 8;
  CHECK(config_digest(reseeded) != config_digest(ca));

  ExperimentConfig retuned = ca;
  retuned.losses.gamma1 = 0.25;
  CHECK(config_digest(retuned) != config_digest(ca));
}

TEST_CASE("variants force their loss coefficients") {
  LossWeights lw;
  lw.alpha = 1.5;
  lw.gamma1 = 0.1;
  lw.gamma2 = 0.2;
  lw.gamma3 = 0.3;
  lw.lambda = 0.01;

  LossWeights vanilla = effective_losses("vanilla", lw);
  CHECK(vanilla.alpha == 1.5);
  CHECK(vanilla.gamma1 == 0.0);
  CHECK(vanilla.gamma2 == 0.0);
  CHECK(vanilla.gamma3 == 0.0);
  CHECK(vanilla.lambda == 0.01);

  LossWeights sbrl = effective_losses("sbrl", lw);
  CHECK(sbrl.alpha == 1.5);
  CHECK(sbrl.gamma1 == 0.1);
  CHECK(sbrl.gamma2 == 0.0);
  CHECK(sbrl.gamma3 == 0.0);

  LossWeights hap = effective_losses("sbrl-hap", lw);
  CHECK(hap.gamma1 == 0.1);
  CHECK(hap.gamma2 == 0.2);
  CHECK(hap.gamma3 == 0.3);

  CHECK_FALSE(variant_learns_weights("vanilla"));
  CHECK(variant_learns_weights("sbrl"));
  CHECK(variant_learns_weights("sbrl-hap"));
  CHECK_THROWS_AS(effective_losses("cfr", lw), ConfigError);
  CHECK_THROWS_AS(variant_learns_weights(""), ConfigError);
}

TEST_CASE("sweep expansion covers axes and explicit points") {
  ExperimentConfig cfg = config_from_json(R"({"data": {"kind": "synthetic"}})");
  std::vector<SweepPoint> single = expand_sweep(cfg);
  REQUIRE(single.size() == 1);
  CHECK(single[0].name == "-");
  CHECK(single[0].overrides.empty());

  ExperimentConfig axes = config_from_json(R"({
    "data": {"kind": "synthetic"},
    "sweep": {"axes": {"gamma1": [0, 0.01, 0.1], "alpha": [1, 2]}}
  })");
  std::vector<SweepPoint> grid = expand_sweep(axes);
  REQUIRE(grid.size() == 6);
  CHECK(grid[0].name == "alpha=1;gamma1=0");
  CHECK(grid[1].name == "alpha=1;gamma1=0.01");
  CHECK(grid[5].name == "alpha=2;gamma1=0.1");
  CHECK(grid[3].overrides.at("alpha") == 2.0);
  CHECK(grid[3].overrides.at("gamma1") == 0.0);

  ExperimentConfig points = config_from_json(R"({
    "data": {"kind": "synthetic"},
    "variant": "sbrl-hap",
    "losses": {"alpha": 1, "gamma1": 0.1, "gamma2": 0.1, "gamma3": 0.1},
    "sweep": {"points": [
      {"name": "full"},
      {"name": "no-balance", "alpha": 0},
      {"name": "no-independence", "gamma1": 0},
      {"name": "no-hap", "variant": "sbrl"}
    ]}
  })");
  std::vector<SweepPoint> named = expand_sweep(points);
  REQUIRE(named.size() == 4);
  ExperimentConfig no_balance = apply_point(points, named[1]);
  CHECK(no_balance.losses.alpha == 0.0);
  CHECK(no_balance.losses.gamma1 == 0.1);
  CHECK(no_balance.variant == "sbrl-hap");
  CHECK(no_balance.sweep.empty());
  ExperimentConfig no_hap = apply_point(points, named[3]);
  CHECK(no_hap.variant == "sbrl");
  CHECK(effective_losses(no_hap.variant, no_hap.losses).gamma2 == 0.0);

  CHECK_THROWS_AS(config_from_json(R"({"sweep": {"axes": {"gamma1": [1]},
                                                 "points": [{"name": "a"}]}})"),
                  ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"sweep": {"points": [{"name": "-"}]}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"sweep": {"points": [{"name": "a"}, {"name": "a"}]}})"),
                  ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"sweep": {"points": [{"name": "a,b"}]}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"sweep": {"points": [{"name": "a", "alpha": -2}]}})"),
                  ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"sweep": {"axes": {"lr": [0.1]}}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"sweep": {"axes": {"gamma1": []}}})"), ConfigError);
}

TEST_CASE("replication data derives deterministically from seed and index") {
  ExperimentConfig cfg = config_from_json(R"({
    "data": {"kind": "synthetic", "syn": {"mI": 3, "mC": 3, "mA": 3, "mV": 1, "n": 600},
             "rho_grid": [-2.5, 2.5], "train_rho": 2.5, "env_count": 150},
    "seed": 5
  })");
  SynConfig syn = cfg.data.syn;
  syn.seed = cfg.seed;
  Population pop = generate_population(syn);

  RepData a = build_replication_data(cfg, &pop, 0);
  RepData b = build_replication_data(cfg, &pop, 0);
  RepData c = build_replication_data(cfg, &pop, 1);

  REQUIRE(a.eval_sets.size() == 4);
  CHECK(a.eval_sets[0].split == "train");
  CHECK(a.eval_sets[1].split == "val");
  CHECK(a.eval_sets[2].split == "test");
  CHECK(a.eval_sets[2].rho == -2.5);
  CHECK(a.eval_sets[3].rho == 2.5);
  CHECK(a.eval_sets[2].data.n() == 150);
  CHECK(a.eval_sets[3].data.n() == 150);
  CHECK(a.train.n() + a.val.n() == 150);
  CHECK(a.train.m() == 10);

  CHECK(dataset_hash(a.train) == dataset_hash(b.train));
  CHECK(dataset_hash(a.eval_sets[2].data) == dataset_hash(b.eval_sets[2].data));
  CHECK(dataset_hash(a.train) != dataset_hash(c.train));

  CHECK(replication_train_seed(cfg, 0) == replication_train_seed(cfg, 0));
  CHECK(replication_train_seed(cfg, 0) != replication_train_seed(cfg, 1));

  CHECK_THROWS_AS(build_replication_data(cfg, nullptr, 0), ContractError);
}

TEST_CASE("model artifacts round trip exactly") {
  BackboneConfig bc;
  bc.d_r = 2;
  bc.d_y = 2;
  bc.h_r = 6;
  bc.h_y = 4;
  bc.batch_norm = true;
  RngState rng(3);
  TrainResult result;
  result.params = init_params(bc, 9, rng);
  result.weights = SampleWeights::ones(17);
  result.weights.theta(3, 0) = 0.123456789012345678;
  result.state.best_iter = 41;
  result.state.best_val = 0.6931471805599453;
  result.state.iterations_run = 61;

  const auto path = (scratch_dir() / "round_trip.model").string();
  write_model(path, "00deadbeef00cafe", bc, result, 991);
  ModelArtifact art = read_model(path, "00deadbeef00cafe");

  CHECK(art.seed == 991);
  CHECK(art.best_iter == 41);
  CHECK(art.best_val == 0.6931471805599453);
  CHECK(art.iterations == 61);
  CHECK(art.model.h_r == 6);
  CHECK(art.model.batch_norm);
  CHECK(art.model.outcome == OutcomeKind::Binary);
  REQUIRE(art.params.names == result.params.names);
  for (std::size_t p = 0; p < art.params.mats.size(); ++p) {
    const Matrix& got = art.params.mats[p];
    const Matrix& want = result.params.mats[p];
    REQUIRE(got.rows() == want.rows());
    REQUIRE(got.cols() == want.cols());
    for (int r = 0; r < got.rows(); ++r)
      for (int col = 0; col < got.cols(); ++col) CHECK(got(r, col) == want(r, col));
  }
  REQUIRE(art.weights.theta.rows() == 17);
  CHECK(art.weights.theta(3, 0) == result.weights.theta(3, 0));

  CHECK_THROWS_AS(read_model(path, "1111111111111111"), LoadError);
  CHECK_THROWS_AS(read_model((scratch_dir() / "missing.model").string(), ""), LoadError);

  std::string text = read_file(path);
  std::ofstream cut((scratch_dir() / "cut.model").string());
  cut << text.substr(0, text.size() / 2);
  cut.close();
  CHECK_THROWS_AS(read_model((scratch_dir() / "cut.model").string(), ""), LoadError);
}

TEST_CASE("generate writes deterministic files with a manifest") {
  const auto dir_a = scratch_dir() / "gen_a";
  const auto dir_b = scratch_dir() / "gen_b";
  ExperimentConfig cfg = config_from_json(tiny_config_json(dir_a.string(), "vanilla", 1));
  cmd_generate(cfg);
  cfg.out_dir = dir_b.string();
  cmd_generate(cfg);

  for (const char* name :
       {"population.csv", "train.csv", "val.csv", "env0.csv", "env1.csv", "roles.json"}) {
    CAPTURE(name);
    REQUIRE(fs::exists(dir_a / name));
    CHECK(read_file(dir_a / name) == read_file(dir_b / name));
  }
  const std::string manifest = read_file(dir_a / "manifest.json");
  CHECK(manifest.find(config_digest(cfg)) != std::string::npos);
  CHECK(manifest.find("genparams") != std::string::npos);
  CHECK(read_file(dir_a / "train.csv").find("# config " + config_digest(cfg)) !=
        std::string::npos);

  Dataset env0 = read_dataset_csv((dir_a / "env0.csv").string());
  CHECK(env0.n() == 110);
  CHECK(env0.m() == 10);
  CHECK(env0.has_potentials());
}

TEST_CASE("singleton sweep matches train plus evaluate byte for byte") {
  const auto sweep_dir = scratch_dir() / "single_sweep";
  const auto split_dir = scratch_dir() / "single_split";
  ExperimentConfig cfg = config_from_json(tiny_config_json(sweep_dir.string(), "sbrl-hap", 2));
  cmd_sweep(cfg, 1, false);

  cfg.out_dir = split_dir.string();
  cmd_train(cfg, 1, false);
  REQUIRE(fs::exists(split_dir / "models" / "rep0.model"));
  REQUIRE(fs::exists(split_dir / "models" / "rep1.model"));
  REQUIRE(fs::exists(split_dir / "trace.csv"));
  cmd_evaluate(cfg, 1);

  CHECK(read_file(sweep_dir / "results.csv") == read_file(split_dir / "results.csv"));
  CHECK(read_file(sweep_dir / "metrics.json") == read_file(split_dir / "metrics.json"));
  CHECK(read_file(sweep_dir / "heatmap.csv") == read_file(split_dir / "heatmap.csv"));
}

TEST_CASE("sweep output is deterministic and carries every point") {
  const auto dir_a = scratch_dir() / "sweep_a";
  const auto dir_b = scratch_dir() / "sweep_b";
  std::string base = tiny_config_json(dir_a.string(), "sbrl-hap", 1);
  base.insert(base.rfind('}'), R"(,
    "sweep": {"points": [
      {"name": "full"},
      {"name": "no-hap", "variant": "sbrl"}
    ]})");
  ExperimentConfig cfg = config_from_json(base);
  cmd_sweep(cfg, 1, true);
  cfg.out_dir = dir_b.string();
  cmd_sweep(cfg, 1, true);

  CHECK(read_file(dir_a / "results.csv") == read_file(dir_b / "results.csv"));
  CHECK(read_file(dir_a / "trace.csv") == read_file(dir_b / "trace.csv"));
  CHECK(read_file(dir_a / "metrics.json") == read_file(dir_b / "metrics.json"));

  const std::string results = read_file(dir_a / "results.csv");
  CHECK(results.find(",full,") != std::string::npos);
  CHECK(results.find(",no-hap,") != std::string::npos);
  CHECK(results.find(",sbrl-hap,") != std::string::npos);
  CHECK(results.find(",sbrl,") != std::string::npos);
  CHECK(results.find(",pehe,") != std::string::npos);
  CHECK(results.find(",f1_factual,") != std::string::npos);
  CHECK(results.find(",decorrelation_mean,") != std::string::npos);
  CHECK(results.rfind("# config " + config_digest(cfg), 0) == 0);

  // every data row leads with the digest and the header names ten columns
  std::istringstream lines(results);
  std::string line;
  std::getline(lines, line);  // comment
  std::getline(lines, line);
  CHECK(line == "config,run,seed,backbone,variant,point,rho,split,metric,value");
  int rows = 0;
  while (std::getline(lines, line)) {
    REQUIRE(line.rfind(config_digest(cfg) + ",", 0) == 0);
    ++rows;
  }
  // 2 points x (train,val + 2 envs with 6 binary metrics each... ) at least
  CHECK(rows > 20);
}

TEST_CASE("worker pool matches single-threaded output") {
  const auto dir_a = scratch_dir() / "jobs1";
  const auto dir_b = scratch_dir() / "jobs3";
  ExperimentConfig cfg = config_from_json(tiny_config_json(dir_a.string(), "sbrl", 3));
  cmd_sweep(cfg, 1, false);
  cfg.out_dir = dir_b.string();
  cmd_sweep(cfg, 3, false);
  CHECK(read_file(dir_a / "results.csv") == read_file(dir_b / "results.csv"));
  CHECK(read_file(dir_a / "metrics.json") == read_file(dir_b / "metrics.json"));
}

TEST_CASE("evaluate refuses artifacts from another config") {
  const auto dir = scratch_dir() / "stale";
  ExperimentConfig cfg = config_from_json(tiny_config_json(dir.string(), "vanilla", 1));
  cmd_train(cfg, 1, false);
  ExperimentConfig changed = cfg;
  changed.losses.alpha = 0.25;
  CHECK_THROWS_AS(cmd_evaluate(changed, 1), LoadError);
  ExperimentConfig missing = cfg;
  missing.out_dir = (scratch_dir() / "never_trained").string();
  CHECK_THROWS_AS(cmd_evaluate(missing, 1), LoadError);
}
