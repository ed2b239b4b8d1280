#include "stablehte/harness.hpp"

#include <algorithm>
#include <atomic>
#include <climits>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include <nlohmann/json.hpp>

#include "stablehte/errors.hpp"
#include "stablehte/text.hpp"

namespace fs = std::filesystem;

namespace stablehte {

using json = nlohmann::json;

namespace {

const char* kDefaultPoint = "-";

void check_keys(const json& obj, const std::string& where,
                std::initializer_list<const char*> allowed) {
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* key : allowed)
      if (item.key() == key) {
        known = true;
        break;
      }
    if (!known) throw ConfigError("unknown key '" + item.key() + "' in " + where);
  }
}

const json& require(const json& obj, const std::string& where, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ConfigError(where + " is missing required key '" + key + "'");
  return *it;
}

double parse_double(const json& j, const std::string& name) {
  if (!j.is_number()) throw ConfigError("'" + name + "' must be a number");
  return j.get<double>();
}

int parse_int(const json& j, const std::string& name) {
  if (!j.is_number_integer()) throw ConfigError("'" + name + "' must be an integer");
  long long v = j.get<long long>();
  if (v < INT_MIN || v > INT_MAX) throw ConfigError("'" + name + "' is out of range");
  return static_cast<int>(v);
}

std::uint64_t parse_u64(const json& j, const std::string& name) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer()) {
    long long v = j.get<long long>();
    if (v < 0) throw ConfigError("'" + name + "' must be nonnegative");
    return static_cast<std::uint64_t>(v);
  }
  throw ConfigError("'" + name + "' must be an integer");
}

bool parse_bool(const json& j, const std::string& name) {
  if (!j.is_boolean()) throw ConfigError("'" + name + "' must be true or false");
  return j.get<bool>();
}

std::string parse_string(const json& j, const std::string& name) {
  if (!j.is_string()) throw ConfigError("'" + name + "' must be a string");
  return j.get<std::string>();
}

const std::set<std::string>& loss_field_names() {
  static const std::set<std::string> names = {"alpha", "gamma1", "gamma2", "gamma3", "lambda"};
  return names;
}

double* loss_field(LossWeights& lw, const std::string& name) {
  if (name == "alpha") return &lw.alpha;
  if (name == "gamma1") return &lw.gamma1;
  if (name == "gamma2") return &lw.gamma2;
  if (name == "gamma3") return &lw.gamma3;
  if (name == "lambda") return &lw.lambda;
  return nullptr;
}

void parse_data_section(const json& j, DataSection& data) {
  check_keys(j, "data", {"kind", "syn", "rho_grid", "train_rho", "env_count", "env_fraction",
                         "path", "test_rho", "test_fraction"});
  if (auto it = j.find("kind"); it != j.end()) data.kind = parse_string(*it, "data.kind");
  if (auto it = j.find("syn"); it != j.end()) {
    check_keys(*it, "data.syn", {"mI", "mC", "mA", "mV", "n"});
    if (auto f = it->find("mI"); f != it->end()) data.syn.mI = parse_int(*f, "data.syn.mI");
    if (auto f = it->find("mC"); f != it->end()) data.syn.mC = parse_int(*f, "data.syn.mC");
    if (auto f = it->find("mA"); f != it->end()) data.syn.mA = parse_int(*f, "data.syn.mA");
    if (auto f = it->find("mV"); f != it->end()) data.syn.mV = parse_int(*f, "data.syn.mV");
    if (auto f = it->find("n"); f != it->end()) data.syn.n = parse_int(*f, "data.syn.n");
  }
  if (auto it = j.find("rho_grid"); it != j.end()) {
    if (!it->is_array()) throw ConfigError("'data.rho_grid' must be an array");
    data.rho_grid.clear();
    for (const auto& v : *it) data.rho_grid.push_back(parse_double(v, "data.rho_grid entry"));
  }
  if (auto it = j.find("train_rho"); it != j.end())
    data.train_rho = parse_double(*it, "data.train_rho");
  if (auto it = j.find("env_count"); it != j.end())
    data.env_count = parse_int(*it, "data.env_count");
  if (auto it = j.find("env_fraction"); it != j.end())
    data.env_fraction = parse_double(*it, "data.env_fraction");
  if (auto it = j.find("path"); it != j.end()) data.path = parse_string(*it, "data.path");
  if (auto it = j.find("test_rho"); it != j.end())
    data.test_rho = parse_double(*it, "data.test_rho");
  if (auto it = j.find("test_fraction"); it != j.end())
    data.test_fraction = parse_double(*it, "data.test_fraction");
}

void parse_model_section(const json& j, BackboneConfig& model, bool* outcome_given) {
  check_keys(j, "model",
             {"backbone", "d_r", "d_y", "h_r", "h_y", "batch_norm", "rep_norm", "outcome"});
  if (auto it = j.find("backbone"); it != j.end())
    model.kind = backbone_from_string(parse_string(*it, "model.backbone"));
  if (auto it = j.find("d_r"); it != j.end()) model.d_r = parse_int(*it, "model.d_r");
  if (auto it = j.find("d_y"); it != j.end()) model.d_y = parse_int(*it, "model.d_y");
  if (auto it = j.find("h_r"); it != j.end()) model.h_r = parse_int(*it, "model.h_r");
  if (auto it = j.find("h_y"); it != j.end()) model.h_y = parse_int(*it, "model.h_y");
  if (auto it = j.find("batch_norm"); it != j.end())
    model.batch_norm = parse_bool(*it, "model.batch_norm");
  if (auto it = j.find("rep_norm"); it != j.end())
    model.rep_norm = parse_bool(*it, "model.rep_norm");
  if (auto it = j.find("outcome"); it != j.end()) {
    model.outcome = outcome_from_string(parse_string(*it, "model.outcome"));
    *outcome_given = true;
  }
}

void parse_losses_section(const json& j, LossWeights& lw) {
  check_keys(j, "losses", {"alpha", "gamma1", "gamma2", "gamma3", "lambda"});
  for (const auto& item : j.items())
    *loss_field(lw, item.key()) = parse_double(item.value(), "losses." + item.key());
}

void parse_train_section(const json& j, TrainConfig& tc) {
  check_keys(j, "train", {"max_iters", "lr", "lr_decay", "lr_decay_period", "patience", "k_net",
                          "k_w", "lr_w", "rff_a", "rff_b", "ld_row_cap", "ld_batch"});
  if (auto it = j.find("max_iters"); it != j.end())
    tc.max_iters = parse_int(*it, "train.max_iters");
  if (auto it = j.find("lr"); it != j.end()) tc.lr = parse_double(*it, "train.lr");
  if (auto it = j.find("lr_decay"); it != j.end())
    tc.lr_decay = parse_double(*it, "train.lr_decay");
  if (auto it = j.find("lr_decay_period"); it != j.end())
    tc.lr_decay_period = parse_int(*it, "train.lr_decay_period");
  if (auto it = j.find("patience"); it != j.end()) tc.patience = parse_int(*it, "train.patience");
  if (auto it = j.find("k_net"); it != j.end()) tc.k_net = parse_int(*it, "train.k_net");
  if (auto it = j.find("k_w"); it != j.end()) tc.k_w = parse_int(*it, "train.k_w");
  if (auto it = j.find("lr_w"); it != j.end()) tc.lr_w = parse_double(*it, "train.lr_w");
  if (auto it = j.find("rff_a"); it != j.end()) tc.rff_a = parse_int(*it, "train.rff_a");
  if (auto it = j.find("rff_b"); it != j.end()) tc.rff_b = parse_int(*it, "train.rff_b");
  if (auto it = j.find("ld_row_cap"); it != j.end())
    tc.ld_row_cap = parse_int(*it, "train.ld_row_cap");
  if (auto it = j.find("ld_batch"); it != j.end()) tc.ld_batch = parse_int(*it, "train.ld_batch");
}

void parse_sweep_section(const json& j, SweepSection& sweep) {
  check_keys(j, "sweep", {"axes", "points"});
  if (auto it = j.find("axes"); it != j.end()) {
    if (!it->is_object()) throw ConfigError("'sweep.axes' must be an object");
    for (const auto& axis : it->items()) {
      if (!loss_field_names().count(axis.key()))
        throw ConfigError("unknown sweep axis '" + axis.key() + "'");
      if (!axis.value().is_array() || axis.value().empty())
        throw ConfigError("sweep axis '" + axis.key() + "' must be a non-empty array");
      std::vector<double> vals;
      for (const auto& v : axis.value())
        vals.push_back(parse_double(v, "sweep.axes." + axis.key()));
      sweep.axes[axis.key()] = std::move(vals);
    }
  }
  if (auto it = j.find("points"); it != j.end()) {
    if (!it->is_array()) throw ConfigError("'sweep.points' must be an array");
    for (const auto& p : *it) {
      if (!p.is_object()) throw ConfigError("sweep points must be objects");
      check_keys(p, "sweep point",
                 {"name", "variant", "alpha", "gamma1", "gamma2", "gamma3", "lambda"});
      SweepPoint point;
      point.name = parse_string(require(p, "sweep point", "name"), "sweep point name");
      if (auto f = p.find("variant"); f != p.end())
        point.variant = parse_string(*f, "sweep point variant");
      for (const std::string& field : loss_field_names())
        if (auto f = p.find(field); f != p.end())
          point.overrides[field] = parse_double(*f, "sweep point " + field);
      sweep.points.push_back(std::move(point));
    }
  }
}

bool valid_variant(const std::string& v) {
  return v == "vanilla" || v == "sbrl" || v == "sbrl-hap";
}

void check_point_name(const std::string& name) {
  if (name.empty()) throw ConfigError("sweep point names must be non-empty");
  if (name.find_first_of(",\"\n\r") != std::string::npos)
    throw ConfigError("sweep point name '" + name + "' contains a character unsafe for csv");
}

std::string axes_point_name(const SweepPoint& p) {
  std::string name;
  for (const auto& [key, value] : p.overrides) {
    if (!name.empty()) name += ';';
    name += key + "=" + shortest_g(value);
  }
  return name;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (data.kind != "synthetic" && data.kind != "twins" && data.kind != "ihdp")
    throw ConfigError("data.kind must be synthetic, twins or ihdp, got '" + data.kind + "'");
  if (!valid_variant(variant))
    throw ConfigError("variant must be vanilla, sbrl or sbrl-hap, got '" + variant + "'");
  if (replications < 1) throw ConfigError("replications must be at least 1");
  if (heatmap_dims < 1) throw ConfigError("heatmap_dims must be at least 1");
  if (heatmap_rff < 0) throw ConfigError("heatmap_rff must be non-negative");
  if (out_dir.empty()) throw ConfigError("out_dir must be non-empty");
  if (data.kind == "synthetic") {
    data.syn.validate();
    if (data.rho_grid.empty()) throw ConfigError("data.rho_grid must be non-empty");
    for (double rho : data.rho_grid)
      if (!(std::fabs(rho) > 1.0))
        throw ConfigError("environment bias rates need |rho| > 1, got " + g17(rho));
    if (!(std::fabs(data.train_rho) > 1.0))
      throw ConfigError("data.train_rho needs |rho| > 1, got " + g17(data.train_rho));
    if (data.env_count < 0) throw ConfigError("data.env_count must be nonnegative");
    if (data.env_fraction < 0.0 || data.env_fraction >= 1.0)
      throw ConfigError("data.env_fraction must lie in [0, 1)");
    if (data.env_count > 0 && data.env_fraction > 0.0)
      throw ConfigError("set only one of data.env_count and data.env_fraction");
  } else {
    if (data.path.empty()) throw ConfigError("data.path is required for " + data.kind);
    if (!(std::fabs(data.test_rho) > 1.0))
      throw ConfigError("data.test_rho needs |rho| > 1, got " + g17(data.test_rho));
    if (data.test_fraction < 0.0 || data.test_fraction >= 1.0)
      throw ConfigError("data.test_fraction must lie in [0, 1)");
  }
  if (model.outcome != implied_outcome(data))
    throw ConfigError("model outcome '" + to_string(model.outcome) + "' conflicts with " +
                      data.kind + " data");
  model.validate();
  losses.validate();
  train.validate();
  if (!sweep.axes.empty() && !sweep.points.empty())
    throw ConfigError("sweep takes either axes or points, not both");
  std::set<std::string> seen;
  for (const SweepPoint& p : sweep.points) {
    check_point_name(p.name);
    if (p.name == kDefaultPoint)
      throw ConfigError("sweep point name '" + p.name + "' is reserved");
    if (!seen.insert(p.name).second)
      throw ConfigError("duplicate sweep point name '" + p.name + "'");
    if (p.variant && !valid_variant(*p.variant))
      throw ConfigError("sweep point '" + p.name + "' has unknown variant '" + *p.variant + "'");
    ExperimentConfig applied = apply_point(*this, p);
    applied.losses.validate();
  }
  for (const auto& [axis, values] : sweep.axes)
    for (double v : values) {
      LossWeights probe = losses;
      *loss_field(probe, axis) = v;
      probe.validate();
    }
}

ExperimentConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid json: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be a json object");
  check_keys(j, "config", {"data", "model", "variant", "losses", "train", "sweep", "replications",
                           "seed", "heatmap", "heatmap_dims", "heatmap_rff", "out_dir"});
  ExperimentConfig cfg;
  bool outcome_given = false;
  try {
    if (auto it = j.find("data"); it != j.end()) parse_data_section(*it, cfg.data);
    if (auto it = j.find("model"); it != j.end())
      parse_model_section(*it, cfg.model, &outcome_given);
    if (auto it = j.find("variant"); it != j.end()) cfg.variant = parse_string(*it, "variant");
    if (auto it = j.find("losses"); it != j.end()) parse_losses_section(*it, cfg.losses);
    if (auto it = j.find("train"); it != j.end()) parse_train_section(*it, cfg.train);
    if (auto it = j.find("sweep"); it != j.end()) parse_sweep_section(*it, cfg.sweep);
    if (auto it = j.find("replications"); it != j.end())
      cfg.replications = parse_int(*it, "replications");
    if (auto it = j.find("seed"); it != j.end()) cfg.seed = parse_u64(*it, "seed");
    if (auto it = j.find("heatmap"); it != j.end()) cfg.heatmap = parse_bool(*it, "heatmap");
    if (auto it = j.find("heatmap_dims"); it != j.end())
      cfg.heatmap_dims = parse_int(*it, "heatmap_dims");
    if (auto it = j.find("heatmap_rff"); it != j.end())
      cfg.heatmap_rff = parse_int(*it, "heatmap_rff");
    if (auto it = j.find("out_dir"); it != j.end()) cfg.out_dir = parse_string(*it, "out_dir");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config value: ") + e.what());
  }
  if (!outcome_given) cfg.model.outcome = implied_outcome(cfg.data);
  cfg.data.syn.seed = 0;
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return config_from_json(buf.str());
}

std::string canonical_config_json(const ExperimentConfig& cfg) {
  json j;
  json data;
  data["kind"] = cfg.data.kind;
  data["syn"] = {{"mI", cfg.data.syn.mI}, {"mC", cfg.data.syn.mC}, {"mA", cfg.data.syn.mA},
                 {"mV", cfg.data.syn.mV}, {"n", cfg.data.syn.n}};
  data["rho_grid"] = cfg.data.rho_grid;
  data["train_rho"] = cfg.data.train_rho;
  data["env_count"] = cfg.data.env_count;
  data["env_fraction"] = cfg.data.env_fraction;
  data["path"] = cfg.data.path;
  data["test_rho"] = cfg.data.test_rho;
  data["test_fraction"] = cfg.data.test_fraction;
  j["data"] = data;
  j["model"] = {{"backbone", to_string(cfg.model.kind)},
                {"d_r", cfg.model.d_r},
                {"d_y", cfg.model.d_y},
                {"h_r", cfg.model.h_r},
                {"h_y", cfg.model.h_y},
                {"batch_norm", cfg.model.batch_norm},
                {"rep_norm", cfg.model.rep_norm},
                {"outcome", to_string(cfg.model.outcome)}};
  j["variant"] = cfg.variant;
  j["losses"] = {{"alpha", cfg.losses.alpha},
                 {"gamma1", cfg.losses.gamma1},
                 {"gamma2", cfg.losses.gamma2},
                 {"gamma3", cfg.losses.gamma3},
                 {"lambda", cfg.losses.lambda}};
  j["train"] = {{"max_iters", cfg.train.max_iters},
                {"lr", cfg.train.lr},
                {"lr_decay", cfg.train.lr_decay},
                {"lr_decay_period", cfg.train.lr_decay_period},
                {"patience", cfg.train.patience},
                {"k_net", cfg.train.k_net},
                {"k_w", cfg.train.k_w},
                {"lr_w", cfg.train.lr_w},
                {"rff_a", cfg.train.rff_a},
                {"rff_b", cfg.train.rff_b},
                {"ld_row_cap", cfg.train.ld_row_cap},
                {"ld_batch", cfg.train.ld_batch}};
  if (!cfg.sweep.empty()) {
    json sweep = json::object();
    if (!cfg.sweep.axes.empty()) {
      json axes = json::object();
      for (const auto& [axis, values] : cfg.sweep.axes) axes[axis] = values;
      sweep["axes"] = axes;
    }
    if (!cfg.sweep.points.empty()) {
      json points = json::array();
      for (const SweepPoint& p : cfg.sweep.points) {
        json point;
        point["name"] = p.name;
        if (p.variant) point["variant"] = *p.variant;
        for (const auto& [field, value] : p.overrides) point[field] = value;
        points.push_back(point);
      }
      sweep["points"] = points;
    }
    j["sweep"] = sweep;
  }
  j["replications"] = cfg.replications;
  j["seed"] = cfg.seed;
  j["heatmap"] = cfg.heatmap;
  j["heatmap_dims"] = cfg.heatmap_dims;
  j["heatmap_rff"] = cfg.heatmap_rff;
  return j.dump();
}

std::string config_digest(const ExperimentConfig& cfg) {
  std::uint64_t h = fnv1a64(canonical_config_json(cfg));
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

LossWeights effective_losses(const std::string& variant, const LossWeights& lw) {
  LossWeights out = lw;
  if (variant == "vanilla") {
    out.gamma1 = 0.0;
    out.gamma2 = 0.0;
    out.gamma3 = 0.0;
  } else if (variant == "sbrl") {
    out.gamma2 = 0.0;
    out.gamma3 = 0.0;
  } else if (variant != "sbrl-hap") {
    throw ConfigError("unknown variant '" + variant + "'");
  }
  return out;
}

bool variant_learns_weights(const std::string& variant) {
  if (!valid_variant(variant)) throw ConfigError("unknown variant '" + variant + "'");
  return variant != "vanilla";
}

OutcomeKind implied_outcome(const DataSection& data) {
  return data.kind == "ihdp" ? OutcomeKind::Continuous : OutcomeKind::Binary;
}

std::vector<SweepPoint> expand_sweep(const ExperimentConfig& cfg) {
  if (!cfg.sweep.points.empty()) return cfg.sweep.points;
  if (cfg.sweep.axes.empty()) {
    SweepPoint passthrough;
    passthrough.name = kDefaultPoint;
    return {passthrough};
  }
  std::vector<SweepPoint> points;
  std::vector<std::pair<std::string, std::vector<double>>> axes(cfg.sweep.axes.begin(),
                                                                cfg.sweep.axes.end());
  std::vector<std::size_t> idx(axes.size(), 0);
  for (;;) {
    SweepPoint p;
    for (std::size_t a = 0; a < axes.size(); ++a) p.overrides[axes[a].first] = axes[a].second[idx[a]];
    p.name = axes_point_name(p);
    points.push_back(std::move(p));
    std::size_t a = axes.size();
    while (a > 0) {
      --a;
      if (++idx[a] < axes[a].second.size()) break;
      idx[a] = 0;
      if (a == 0) return points;
    }
  }
}

ExperimentConfig apply_point(const ExperimentConfig& cfg, const SweepPoint& point) {
  ExperimentConfig out = cfg;
  out.sweep = SweepSection{};
  if (point.variant) out.variant = *point.variant;
  for (const auto& [field, value] : point.overrides) {
    double* slot = loss_field(out.losses, field);
    if (!slot) throw ConfigError("unknown loss field '" + field + "' in sweep point");
    *slot = value;
  }
  return out;
}

RepData build_replication_data(const ExperimentConfig& cfg, const Population* pop, int rep) {
  RepData out;
  if (cfg.data.kind == "synthetic") {
    if (!pop) throw ContractError("synthetic replication needs the shared population");
    EnvSpec size_template;
    size_template.rho = cfg.data.train_rho;
    size_template.target_count = cfg.data.env_count;
    size_template.target_fraction = cfg.data.env_fraction;
    RngState rng = RngState(cfg.seed).fork("environments", static_cast<std::uint64_t>(rep));
    EnvSuite suite = env_suite(*pop, cfg.data.rho_grid, cfg.data.train_rho, size_template, rng);
    out.train = std::move(suite.train);
    out.val = std::move(suite.val);
    out.eval_sets.push_back({"train", suite.train_rho, out.train});
    out.eval_sets.push_back({"val", suite.train_rho, out.val});
    for (auto& [spec, ds] : suite.envs) out.eval_sets.push_back({"test", spec.rho, std::move(ds)});
  } else {
    EnvSpec env;
    env.rho = cfg.data.test_rho;
    env.target_fraction = cfg.data.test_fraction;
    RngState rng = RngState(cfg.seed).fork("partition", static_cast<std::uint64_t>(rep));
    SemiSplits splits = load_semi_synthetic(
        cfg.data.path, semi_schema_from_string(cfg.data.kind), env, rng);
    out.train = std::move(splits.train);
    out.val = std::move(splits.val);
    out.eval_sets.push_back({"train", 0.0, out.train});
    out.eval_sets.push_back({"val", 0.0, out.val});
    out.eval_sets.push_back({"test", cfg.data.test_rho, std::move(splits.test)});
  }
  return out;
}

std::uint64_t replication_train_seed(const ExperimentConfig& cfg, int rep) {
  return RngState(cfg.seed).fork("train-seed", static_cast<std::uint64_t>(rep)).seed();
}

TrainResult train_replication(const ExperimentConfig& cfg, const RepData& data, int rep,
                              bool trace) {
  TrainConfig tc = cfg.train;
  tc.seed = replication_train_seed(cfg, rep);
  tc.learn_weights = variant_learns_weights(cfg.variant);
  tc.record_trace = trace;
  return train(cfg.model, data.train, data.val, effective_losses(cfg.variant, cfg.losses), tc);
}

namespace {

void append_env_rows(std::vector<MetricRow>& rows, const ExperimentConfig& cfg,
                     const EnvRecord& env, const TrainResult& model, int rep, std::uint64_t seed,
                     const std::string& point) {
  MetricRow base;
  base.run = rep;
  base.seed = seed;
  base.backbone = to_string(cfg.model.kind);
  base.variant = cfg.variant;
  base.point = point;
  base.rho = env.rho;
  base.split = env.split;
  auto push = [&](const std::string& metric, double value) {
    MetricRow row = base;
    row.metric = metric;
    row.value = value;
    rows.push_back(std::move(row));
  };
  EffectEstimates est = predict_effects(cfg.model, model.params, env.data.X);
  push("ate_hat", est.ate_hat);
  push("factual_loss", factual_validation_loss(cfg.model, model.params, env.data));
  if (env.data.has_potentials()) {
    push("pehe", pehe(est.ite_hat, env.data.y1, env.data.y0));
    push("eps_ate", eps_ate(est.ite_hat, env.data.y1, env.data.y0));
  }
  if (cfg.model.outcome == OutcomeKind::Binary) {
    const int n = env.data.n();
    std::vector<double> factual_prob(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const auto u = static_cast<std::size_t>(i);
      factual_prob[u] = env.data.t[u] == 1 ? est.y1_hat[u] : est.y0_hat[u];
    }
    push("f1_factual", f1_score(factual_prob, env.data.yf));
    if (env.data.has_counterfactuals()) {
      std::vector<double> cf_prob(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) {
        const auto u = static_cast<std::size_t>(i);
        cf_prob[u] = env.data.t[u] == 1 ? est.y0_hat[u] : est.y1_hat[u];
      }
      push("f1_counterfactual", f1_score(cf_prob, env.data.ycf));
    }
  }
}

}  // namespace

std::vector<MetricRow> evaluate_replication(const ExperimentConfig& cfg, const RepData& data,
                                            const TrainResult& model, int rep,
                                            const std::string& point,
                                            std::optional<HeatmapResult>* heatmap_out) {
  std::vector<MetricRow> rows;
  const std::uint64_t seed = replication_train_seed(cfg, rep);
  for (const EnvRecord& env : data.eval_sets)
    append_env_rows(rows, cfg, env, model, rep, seed, point);
  if (cfg.heatmap) {
    NetworkTaps taps = forward_taps(cfg.model, model.params, data.train.X, data.train.t);
    RngState rng = RngState(cfg.seed).fork("heatmap", static_cast<std::uint64_t>(rep));
    const int hk_a = cfg.heatmap_rff > 0 ? cfg.heatmap_rff : cfg.train.rff_a;
    const int hk_b = cfg.heatmap_rff > 0 ? cfg.heatmap_rff : cfg.train.rff_b;
    HeatmapResult hm = decorrelation_heatmap(taps.z_rep, cfg.heatmap_dims, hk_a, hk_b, rng);
    MetricRow row;
    row.run = rep;
    row.seed = seed;
    row.backbone = to_string(cfg.model.kind);
    row.variant = cfg.variant;
    row.point = point;
    row.rho = data.eval_sets.front().rho;
    row.split = "train";
    row.metric = "decorrelation_mean";
    row.value = hm.off_diagonal_mean;
    rows.push_back(std::move(row));
    if (heatmap_out) *heatmap_out = std::move(hm);
  }
  return rows;
}

RepOutput run_replication(const ExperimentConfig& cfg, const Population* pop, int rep,
                          const std::string& point, bool trace) {
  RepOutput out;
  RepData data = build_replication_data(cfg, pop, rep);
  out.model = train_replication(cfg, data, rep, trace);
  out.train_seed = replication_train_seed(cfg, rep);
  out.rows = evaluate_replication(cfg, data, out.model, rep, point, &out.heatmap);
  out.trace = out.model.state.trace;
  return out;
}

void write_model(const std::string& path, const std::string& digest, const BackboneConfig& cfg,
                 const TrainResult& result, std::uint64_t seed) {
  std::ofstream out(path);
  if (!out) throw LoadError("cannot write model file '" + path + "'");
  out << "stablehte-model 1\n";
  out << "config " << digest << "\n";
  out << "seed " << seed << "\n";
  out << "backbone " << to_string(cfg.kind) << "\n";
  out << "outcome " << to_string(cfg.outcome) << "\n";
  out << "d_r " << cfg.d_r << "\nd_y " << cfg.d_y << "\nh_r " << cfg.h_r << "\nh_y " << cfg.h_y
      << "\n";
  out << "batch_norm " << (cfg.batch_norm ? 1 : 0) << "\nrep_norm " << (cfg.rep_norm ? 1 : 0)
      << "\n";
  out << "best_iter " << result.state.best_iter << "\n";
  out << "best_val " << g17(result.state.best_val) << "\n";
  out << "iterations " << result.state.iterations_run << "\n";
  out << "params " << result.params.names.size() << "\n";
  for (std::size_t p = 0; p < result.params.names.size(); ++p) {
    const Matrix& m = result.params.mats[p];
    out << result.params.names[p] << " " << m.rows() << " " << m.cols() << "\n";
    for (int r = 0; r < m.rows(); ++r) {
      for (int c = 0; c < m.cols(); ++c) {
        if (c) out << " ";
        out << g17(m(r, c));
      }
      out << "\n";
    }
  }
  out << "theta " << result.weights.theta.rows() << "\n";
  for (int i = 0; i < result.weights.theta.rows(); ++i) {
    if (i) out << " ";
    out << g17(result.weights.theta(i, 0));
  }
  out << "\nend\n";
  if (!out) throw LoadError("failed writing model file '" + path + "'");
}

namespace {

template <typename T>
T read_token(std::ifstream& in, const std::string& path, const char* what) {
  T value{};
  if (!(in >> value))
    throw LoadError("model file '" + path + "' is truncated or malformed at " + what);
  return value;
}

void expect_token(std::ifstream& in, const std::string& path, const char* expected) {
  auto got = read_token<std::string>(in, path, expected);
  if (got != expected)
    throw LoadError("model file '" + path + "': expected '" + expected + "', got '" + got + "'");
}

}  // namespace

ModelArtifact read_model(const std::string& path, const std::string& expect_digest) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open model file '" + path + "'");
  expect_token(in, path, "stablehte-model");
  if (read_token<int>(in, path, "version") != 1)
    throw LoadError("model file '" + path + "' has an unsupported version");
  ModelArtifact art;
  expect_token(in, path, "config");
  art.digest = read_token<std::string>(in, path, "config digest");
  if (!expect_digest.empty() && art.digest != expect_digest)
    throw LoadError("model file '" + path + "' was trained under config " + art.digest +
                    ", current config is " + expect_digest);
  expect_token(in, path, "seed");
  art.seed = read_token<std::uint64_t>(in, path, "seed");
  expect_token(in, path, "backbone");
  art.model.kind = backbone_from_string(read_token<std::string>(in, path, "backbone"));
  expect_token(in, path, "outcome");
  art.model.outcome = outcome_from_string(read_token<std::string>(in, path, "outcome"));
  expect_token(in, path, "d_r");
  art.model.d_r = read_token<int>(in, path, "d_r");
  expect_token(in, path, "d_y");
  art.model.d_y = read_token<int>(in, path, "d_y");
  expect_token(in, path, "h_r");
  art.model.h_r = read_token<int>(in, path, "h_r");
  expect_token(in, path, "h_y");
  art.model.h_y = read_token<int>(in, path, "h_y");
  expect_token(in, path, "batch_norm");
  art.model.batch_norm = read_token<int>(in, path, "batch_norm") != 0;
  expect_token(in, path, "rep_norm");
  art.model.rep_norm = read_token<int>(in, path, "rep_norm") != 0;
  expect_token(in, path, "best_iter");
  art.best_iter = read_token<int>(in, path, "best_iter");
  expect_token(in, path, "best_val");
  art.best_val = read_token<double>(in, path, "best_val");
  expect_token(in, path, "iterations");
  art.iterations = read_token<int>(in, path, "iterations");
  expect_token(in, path, "params");
  const int count = read_token<int>(in, path, "param count");
  if (count < 0) throw LoadError("model file '" + path + "' has a negative param count");
  for (int p = 0; p < count; ++p) {
    auto name = read_token<std::string>(in, path, "param name");
    const int rows = read_token<int>(in, path, "param rows");
    const int cols = read_token<int>(in, path, "param cols");
    if (rows <= 0 || cols <= 0)
      throw LoadError("model file '" + path + "': param '" + name + "' has bad shape");
    Matrix m(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) m(r, c) = read_token<double>(in, path, "param value");
    art.params.names.push_back(std::move(name));
    art.params.mats.push_back(std::move(m));
  }
  expect_token(in, path, "theta");
  const int n = read_token<int>(in, path, "theta size");
  if (n <= 0) throw LoadError("model file '" + path + "' has a bad theta size");
  art.weights.theta = Matrix(n, 1);
  for (int i = 0; i < n; ++i) art.weights.theta(i, 0) = read_token<double>(in, path, "theta value");
  expect_token(in, path, "end");
  return art;
}

namespace {

struct Task {
  int point_idx = 0;
  int rep = 0;
};

// Runs one job per (sweep point, replication) on up to `jobs` workers and
// returns outputs in task order, so scheduling cannot reorder results.
std::vector<RepOutput> run_tasks(const std::vector<ExperimentConfig>& point_cfgs,
                                 const std::vector<std::string>& point_names,
                                 const Population* pop, int replications, int jobs, bool trace) {
  std::vector<Task> tasks;
  for (int p = 0; p < static_cast<int>(point_cfgs.size()); ++p)
    for (int rep = 0; rep < replications; ++rep) tasks.push_back({p, rep});
  std::vector<RepOutput> outputs(tasks.size());
  std::vector<std::exception_ptr> errors(tasks.size());
  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      try {
        const Task& task = tasks[i];
        outputs[i] = run_replication(point_cfgs[static_cast<std::size_t>(task.point_idx)], pop,
                                     task.rep, point_names[static_cast<std::size_t>(task.point_idx)],
                                     trace);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (jobs <= 1) {
    work();
  } else {
    std::vector<std::thread> workers;
    const int count = std::min<int>(jobs, static_cast<int>(tasks.size()));
    workers.reserve(static_cast<std::size_t>(count));
    for (int w = 0; w < count; ++w) workers.emplace_back(work);
    for (auto& t : workers) t.join();
  }
  for (const auto& err : errors)
    if (err) std::rethrow_exception(err);
  return outputs;
}

std::string provenance_comment(const std::string& digest, std::uint64_t seed) {
  return "# config " + digest + " seed " + std::to_string(seed);
}

void write_results_csv(const std::string& path, const std::string& digest, std::uint64_t seed,
                       const std::vector<MetricRow>& rows) {
  std::ofstream out(path);
  if (!out) throw LoadError("cannot write '" + path + "'");
  out << provenance_comment(digest, seed) << "\n";
  out << "config,run,seed,backbone,variant,point,rho,split,metric,value\n";
  for (const MetricRow& row : rows)
    out << digest << "," << row.run << "," << row.seed << "," << row.backbone << "," << row.variant
        << "," << row.point << "," << g17(row.rho) << "," << row.split << "," << row.metric << ","
        << g17(row.value) << "\n";
  if (!out) throw LoadError("failed writing '" + path + "'");
}

void write_trace_csv(const std::string& path, const std::string& digest, std::uint64_t seed,
                     const std::vector<std::tuple<int, std::uint64_t, std::string>>& run_ids,
                     const std::vector<const std::vector<TraceRow>*>& traces) {
  std::ofstream out(path);
  if (!out) throw LoadError("cannot write '" + path + "'");
  out << provenance_comment(digest, seed) << "\n";
  out << "run,seed,point,iter,lr,outcome,net_balance,w_balance,pre_treatment,representation,"
         "layerwise,anchor,weight_total,val\n";
  for (std::size_t k = 0; k < traces.size(); ++k) {
    const auto& [run, run_seed, point] = run_ids[k];
    for (const TraceRow& row : *traces[k])
      out << run << "," << run_seed << "," << point << "," << row.iter << "," << g17(row.lr) << ","
          << g17(row.outcome) << "," << g17(row.net_balance) << "," << g17(row.w_balance) << ","
          << g17(row.pre_treatment) << "," << g17(row.representation) << "," << g17(row.layerwise)
          << "," << g17(row.anchor) << "," << g17(row.weight_total) << "," << g17(row.val) << "\n";
  }
  if (!out) throw LoadError("failed writing '" + path + "'");
}

void write_heatmap_csv(const std::string& path, const std::string& digest, std::uint64_t seed,
                       const std::vector<std::tuple<int, std::uint64_t, std::string>>& run_ids,
                       const std::vector<const HeatmapResult*>& maps) {
  std::ofstream out(path);
  if (!out) throw LoadError("cannot write '" + path + "'");
  out << provenance_comment(digest, seed) << "\n";
  out << "run,seed,point,i,j,col_i,col_j,value\n";
  for (std::size_t k = 0; k < maps.size(); ++k) {
    const auto& [run, run_seed, point] = run_ids[k];
    const HeatmapResult& hm = *maps[k];
    for (int i = 0; i < hm.pairwise.rows(); ++i)
      for (int j = 0; j < hm.pairwise.cols(); ++j)
        out << run << "," << run_seed << "," << point << "," << i << "," << j << ","
            << hm.chosen_cols[static_cast<std::size_t>(i)] << ","
            << hm.chosen_cols[static_cast<std::size_t>(j)] << "," << g17(hm.pairwise(i, j))
            << "\n";
  }
  if (!out) throw LoadError("failed writing '" + path + "'");
}

json summarize_point(const std::vector<std::vector<MetricRow>>& per_rep,
                     const std::vector<const TrainResult*>& models) {
  json runs = json::array();
  std::map<std::tuple<std::string, double, std::string>, std::vector<double>> groups;
  for (std::size_t rep = 0; rep < per_rep.size(); ++rep) {
    json envs = json::array();
    std::vector<std::pair<std::pair<std::string, double>, json>> ordered;
    std::map<std::string, std::vector<double>> test_metrics;
    for (const MetricRow& row : per_rep[rep]) {
      bool found = false;
      for (auto& entry : ordered)
        if (entry.first.first == row.split && entry.first.second == row.rho) {
          entry.second[row.metric] = row.value;
          found = true;
          break;
        }
      if (!found) {
        json metrics;
        metrics[row.metric] = row.value;
        ordered.push_back({{row.split, row.rho}, std::move(metrics)});
      }
      groups[{row.split, row.rho, row.metric}].push_back(row.value);
      if (row.split == "test") test_metrics[row.metric].push_back(row.value);
    }
    for (auto& entry : ordered) {
      json env;
      env["split"] = entry.first.first;
      env["rho"] = entry.first.second;
      env["metrics"] = std::move(entry.second);
      envs.push_back(std::move(env));
    }
    json stability = json::object();
    for (const auto& [metric, values] : test_metrics) {
      auto [mean, spread] = stability_aggregate(values);
      stability[metric] = {{"mean", mean}, {"spread", spread}};
    }
    json run;
    run["run"] = static_cast<int>(rep);
    run["seed"] = per_rep[rep].empty() ? 0 : per_rep[rep].front().seed;
    if (models[rep]) {
      run["best_iter"] = models[rep]->state.best_iter;
      run["best_val"] = models[rep]->state.best_val;
      run["iterations"] = models[rep]->state.iterations_run;
    }
    run["envs"] = std::move(envs);
    run["stability"] = std::move(stability);
    runs.push_back(std::move(run));
  }
  json summary = json::array();
  for (const auto& [key, values] : groups) {
    auto [mean, spread] = stability_aggregate(values);
    json entry;
    entry["split"] = std::get<0>(key);
    entry["rho"] = std::get<1>(key);
    entry["metric"] = std::get<2>(key);
    entry["mean"] = mean;
    entry["spread"] = spread;
    summary.push_back(std::move(entry));
  }
  json point;
  point["runs"] = std::move(runs);
  point["summary"] = std::move(summary);
  return point;
}

void write_metrics_json(const std::string& path, const ExperimentConfig& cfg,
                        const std::string& digest,
                        const std::vector<std::string>& point_names,
                        const std::vector<std::string>& point_variants,
                        const std::vector<json>& point_summaries) {
  json j;
  j["config"] = digest;
  j["seed"] = cfg.seed;
  j["replications"] = cfg.replications;
  json points = json::array();
  for (std::size_t p = 0; p < point_names.size(); ++p) {
    json point = point_summaries[p];
    point["point"] = point_names[p];
    point["variant"] = point_variants[p];
    points.push_back(std::move(point));
  }
  j["points"] = std::move(points);
  std::ofstream out(path);
  if (!out) throw LoadError("cannot write '" + path + "'");
  out << j.dump(2) << "\n";
  if (!out) throw LoadError("failed writing '" + path + "'");
}

void write_manifest(const std::string& path, json manifest) {
  std::ofstream out(path);
  if (!out) throw LoadError("cannot write '" + path + "'");
  out << manifest.dump(2) << "\n";
  if (!out) throw LoadError("failed writing '" + path + "'");
}

std::uint64_t genparams_digest(const GenParams& gp) {
  std::uint64_t h = fnv1a64(gp.theta_t.data(), gp.theta_t.size() * sizeof(double));
  h = splitmix64(h ^ fnv1a64(gp.theta_y0.data(), gp.theta_y0.size() * sizeof(double)));
  h = splitmix64(h ^ fnv1a64(gp.theta_y1.data(), gp.theta_y1.size() * sizeof(double)));
  h = splitmix64(h ^ fnv1a64(gp.xi.data(), gp.xi.size() * sizeof(double)));
  h = splitmix64(h ^ fnv1a64(&gp.z0_center, sizeof(double)));
  h = splitmix64(h ^ fnv1a64(&gp.z1_center, sizeof(double)));
  return h;
}

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string model_file_name(const std::string& point, int rep) {
  std::string stem = point == kDefaultPoint ? "rep" : point + "-rep";
  return stem + std::to_string(rep) + ".model";
}

}  // namespace

std::optional<Population> experiment_population(const ExperimentConfig& cfg) {
  if (cfg.data.kind != "synthetic") return std::nullopt;
  SynConfig syn = cfg.data.syn;
  syn.seed = cfg.seed;
  return generate_population(syn);
}

void cmd_generate(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::string digest = config_digest(cfg);
  fs::create_directories(cfg.out_dir);
  const std::vector<std::string> comments = {"config " + digest,
                                             "seed " + std::to_string(cfg.seed)};
  json manifest;
  manifest["command"] = "generate";
  manifest["config"] = digest;
  manifest["seed"] = cfg.seed;
  manifest["kind"] = cfg.data.kind;
  json files = json::array();
  auto emit = [&](const std::string& name, const Dataset& ds, double rho, const std::string& split) {
    const std::string path = (fs::path(cfg.out_dir) / name).string();
    write_dataset_csv(ds, path, comments);
    json entry;
    entry["file"] = name;
    entry["rows"] = ds.n();
    entry["columns"] = ds.m();
    entry["split"] = split;
    entry["rho"] = rho;
    files.push_back(std::move(entry));
  };
  std::optional<Population> pop = experiment_population(cfg);
  RepData data = build_replication_data(cfg, pop ? &*pop : nullptr, 0);
  if (pop) {
    emit("population.csv", pop->data, 0.0, "population");
    manifest["genparams"] = hex64(genparams_digest(pop->params));
    write_roles_json(pop->data, (fs::path(cfg.out_dir) / "roles.json").string());
  } else {
    write_roles_json(data.train, (fs::path(cfg.out_dir) / "roles.json").string());
  }
  emit("train.csv", data.train, data.eval_sets.front().rho, "train");
  emit("val.csv", data.val, data.eval_sets.front().rho, "val");
  int env_index = 0;
  for (const EnvRecord& env : data.eval_sets) {
    if (env.split != "test") continue;
    emit("env" + std::to_string(env_index) + ".csv", env.data, env.rho, "test");
    ++env_index;
  }
  manifest["files"] = std::move(files);
  write_manifest((fs::path(cfg.out_dir) / "manifest.json").string(), std::move(manifest));
}

void cmd_train(const ExperimentConfig& cfg, int jobs, bool trace) {
  cfg.validate();
  const std::string digest = config_digest(cfg);
  fs::create_directories(fs::path(cfg.out_dir) / "models");
  std::optional<Population> pop = experiment_population(cfg);
  std::vector<ExperimentConfig> point_cfgs = {cfg};
  std::vector<std::string> point_names = {kDefaultPoint};
  // cmd_train always records traces; the flag exists for the sweep command
  // where the volume can get large.
  (void)trace;
  std::vector<RepOutput> outputs = run_tasks(point_cfgs, point_names, pop ? &*pop : nullptr,
                                             cfg.replications, jobs, true);
  json manifest;
  manifest["command"] = "train";
  manifest["config"] = digest;
  manifest["seed"] = cfg.seed;
  json models = json::array();
  std::vector<std::tuple<int, std::uint64_t, std::string>> run_ids;
  std::vector<const std::vector<TraceRow>*> traces;
  for (int rep = 0; rep < cfg.replications; ++rep) {
    const RepOutput& out = outputs[static_cast<std::size_t>(rep)];
    const std::string name = model_file_name(kDefaultPoint, rep);
    write_model((fs::path(cfg.out_dir) / "models" / name).string(), digest, cfg.model, out.model,
                out.train_seed);
    json entry;
    entry["file"] = "models/" + name;
    entry["run"] = rep;
    entry["seed"] = out.train_seed;
    entry["best_iter"] = out.model.state.best_iter;
    entry["best_val"] = out.model.state.best_val;
    entry["iterations"] = out.model.state.iterations_run;
    models.push_back(std::move(entry));
    run_ids.emplace_back(rep, out.train_seed, kDefaultPoint);
    traces.push_back(&out.trace);
  }
  manifest["models"] = std::move(models);
  write_trace_csv((fs::path(cfg.out_dir) / "trace.csv").string(), digest, cfg.seed, run_ids,
                  traces);
  write_manifest((fs::path(cfg.out_dir) / "manifest.json").string(), std::move(manifest));
}

void cmd_evaluate(const ExperimentConfig& cfg, int jobs) {
  cfg.validate();
  const std::string digest = config_digest(cfg);
  fs::create_directories(cfg.out_dir);
  std::vector<ModelArtifact> artifacts;
  artifacts.reserve(static_cast<std::size_t>(cfg.replications));
  for (int rep = 0; rep < cfg.replications; ++rep) {
    const std::string path =
        (fs::path(cfg.out_dir) / "models" / model_file_name(kDefaultPoint, rep)).string();
    artifacts.push_back(read_model(path, digest));
  }
  std::optional<Population> pop = experiment_population(cfg);
  std::vector<std::vector<MetricRow>> per_rep(static_cast<std::size_t>(cfg.replications));
  std::vector<std::optional<HeatmapResult>> heatmaps(
      static_cast<std::size_t>(cfg.replications));
  std::vector<TrainResult> models(static_cast<std::size_t>(cfg.replications));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(cfg.replications));
  std::atomic<int> next{0};
  auto work = [&]() {
    for (;;) {
      const int rep = next.fetch_add(1);
      if (rep >= cfg.replications) return;
      const auto u = static_cast<std::size_t>(rep);
      try {
        RepData data = build_replication_data(cfg, pop ? &*pop : nullptr, rep);
        TrainResult model;
        model.params = artifacts[u].params;
        model.weights = artifacts[u].weights;
        model.state.best_iter = artifacts[u].best_iter;
        model.state.best_val = artifacts[u].best_val;
        model.state.iterations_run = artifacts[u].iterations;
        per_rep[u] = evaluate_replication(cfg, data, model, rep, kDefaultPoint, &heatmaps[u]);
        models[u] = std::move(model);
      } catch (...) {
        errors[u] = std::current_exception();
      }
    }
  };
  if (jobs <= 1) {
    work();
  } else {
    std::vector<std::thread> workers;
    const int count = std::min(jobs, cfg.replications);
    for (int w = 0; w < count; ++w) workers.emplace_back(work);
    for (auto& t : workers) t.join();
  }
  for (const auto& err : errors)
    if (err) std::rethrow_exception(err);
  std::vector<MetricRow> rows;
  std::vector<std::tuple<int, std::uint64_t, std::string>> run_ids;
  std::vector<const HeatmapResult*> maps;
  std::vector<const TrainResult*> model_ptrs;
  for (int rep = 0; rep < cfg.replications; ++rep) {
    const auto u = static_cast<std::size_t>(rep);
    rows.insert(rows.end(), per_rep[u].begin(), per_rep[u].end());
    model_ptrs.push_back(&models[u]);
    if (heatmaps[u]) {
      run_ids.emplace_back(rep, artifacts[u].seed, kDefaultPoint);
      maps.push_back(&*heatmaps[u]);
    }
  }
  write_results_csv((fs::path(cfg.out_dir) / "results.csv").string(), digest, cfg.seed, rows);
  write_metrics_json((fs::path(cfg.out_dir) / "metrics.json").string(), cfg, digest,
                     {kDefaultPoint}, {cfg.variant}, {summarize_point(per_rep, model_ptrs)});
  if (cfg.heatmap)
    write_heatmap_csv((fs::path(cfg.out_dir) / "heatmap.csv").string(), digest, cfg.seed, run_ids,
                      maps);
}

void cmd_sweep(const ExperimentConfig& cfg, int jobs, bool trace) {
  cfg.validate();
  const std::string digest = config_digest(cfg);
  fs::create_directories(cfg.out_dir);
  const std::vector<SweepPoint> points = expand_sweep(cfg);
  std::vector<ExperimentConfig> point_cfgs;
  std::vector<std::string> point_names;
  for (const SweepPoint& p : points) {
    point_cfgs.push_back(apply_point(cfg, p));
    point_names.push_back(p.name);
  }
  std::optional<Population> pop = experiment_population(cfg);
  std::vector<RepOutput> outputs = run_tasks(point_cfgs, point_names, pop ? &*pop : nullptr,
                                             cfg.replications, jobs, trace);
  std::vector<MetricRow> rows;
  std::vector<std::string> point_variants;
  std::vector<json> point_summaries;
  std::vector<std::tuple<int, std::uint64_t, std::string>> trace_ids;
  std::vector<const std::vector<TraceRow>*> traces;
  std::vector<std::tuple<int, std::uint64_t, std::string>> map_ids;
  std::vector<const HeatmapResult*> maps;
  for (std::size_t p = 0; p < points.size(); ++p) {
    std::vector<std::vector<MetricRow>> per_rep;
    std::vector<const TrainResult*> model_ptrs;
    for (int rep = 0; rep < cfg.replications; ++rep) {
      const RepOutput& out = outputs[p * static_cast<std::size_t>(cfg.replications) +
                                     static_cast<std::size_t>(rep)];
      rows.insert(rows.end(), out.rows.begin(), out.rows.end());
      per_rep.push_back(out.rows);
      model_ptrs.push_back(&out.model);
      if (trace) {
        trace_ids.emplace_back(rep, out.train_seed, point_names[p]);
        traces.push_back(&out.trace);
      }
      if (out.heatmap) {
        map_ids.emplace_back(rep, out.train_seed, point_names[p]);
        maps.push_back(&*out.heatmap);
      }
    }
    point_variants.push_back(point_cfgs[p].variant);
    point_summaries.push_back(summarize_point(per_rep, model_ptrs));
  }
  write_results_csv((fs::path(cfg.out_dir) / "results.csv").string(), digest, cfg.seed, rows);
  write_metrics_json((fs::path(cfg.out_dir) / "metrics.json").string(), cfg, digest, point_names,
                     point_variants, point_summaries);
  if (trace)
    write_trace_csv((fs::path(cfg.out_dir) / "trace.csv").string(), digest, cfg.seed, trace_ids,
                    traces);
  if (cfg.heatmap)
    write_heatmap_csv((fs::path(cfg.out_dir) / "heatmap.csv").string(), digest, cfg.seed, map_ids,
                      maps);
}

}  // namespace stablehte
