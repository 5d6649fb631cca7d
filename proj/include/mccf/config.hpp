#pragma once

// JSON configuration with three sections: generator, model, train. Every key
// is optional and falls back to the built-in default; unknown keys and wrong
// types are rejected with the full key path.

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mccf/generator.hpp"
#include "mccf/model.hpp"
#include "mccf/train.hpp"

namespace mccf {

struct AppConfig {
  GenConfig generator;
  ModelConfig model;
  TrainConfig train;
};

namespace config_detail {

using json = nlohmann::json;

inline double as_num(const json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError(path + ": expected number");
  return v.get<double>();
}

inline long long as_int(const json& v, const std::string& path) {
  if (!v.is_number_integer()) throw ConfigError(path + ": expected integer");
  return v.get<long long>();
}

inline std::uint64_t as_seed(const json& v, const std::string& path) {
  long long s = as_int(v, path);
  if (s < 0) throw ConfigError(path + ": expected non-negative integer");
  return static_cast<std::uint64_t>(s);
}

inline std::string as_str(const json& v, const std::string& path) {
  if (!v.is_string()) throw ConfigError(path + ": expected string");
  return v.get<std::string>();
}

inline std::vector<std::string> as_str_list(const json& v, const std::string& path) {
  if (!v.is_array()) throw ConfigError(path + ": expected array of strings");
  std::vector<std::string> out;
  for (const auto& e : v) {
    if (!e.is_string()) throw ConfigError(path + ": expected array of strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

inline void apply_targets(GenTargets& t, const json& j, const std::string& base) {
  for (const auto& [key, v] : j.items()) {
    const std::string path = base + "." + key;
    if (key == "fraud_tail_p10") t.fraud_tail_p10 = as_num(v, path);
    else if (key == "genuine_tail_p10") t.genuine_tail_p10 = as_num(v, path);
    else if (key == "fraud_cdf_900") t.fraud_cdf_900 = as_num(v, path);
    else if (key == "genuine_cdf_900") t.genuine_cdf_900 = as_num(v, path);
    else if (key == "fraud_top3_pages") t.fraud_top3_pages = as_num(v, path);
    else if (key == "fraud_media_tail_p3") t.fraud_media_tail_p3 = as_num(v, path);
    else if (key == "genuine_media_tail_p3") t.genuine_media_tail_p3 = as_num(v, path);
    else throw ConfigError(path + ": unknown key");
  }
}

inline void apply_generator(GenConfig& g, const json& j) {
  if (!j.is_object()) throw ConfigError("generator: expected object");
  for (const auto& [key, v] : j.items()) {
    const std::string path = "generator." + key;
    if (key == "n_clicks") g.n_clicks = as_int(v, path);
    else if (key == "positive_rate") g.positive_rate = as_num(v, path);
    else if (key == "targets") apply_targets(g.targets, v, path);
    else if (key == "page_vocab") g.page_vocab = as_str_list(v, path);
    else if (key == "ring_min") g.ring_min = static_cast<int>(as_int(v, path));
    else if (key == "ring_max") g.ring_max = static_cast<int>(as_int(v, path));
    else if (key == "n_advertisers") g.n_advertisers = static_cast<int>(as_int(v, path));
    else if (key == "keywords_per_advertiser") g.keywords_per_advertiser = static_cast<int>(as_int(v, path));
    else if (key == "attackable_fraction") g.attackable_fraction = as_num(v, path);
    else if (key == "wide_dim") g.wide_dim = static_cast<int>(as_int(v, path));
    else if (key == "node_attr_dim") g.node_attr_dim = static_cast<int>(as_int(v, path));
    else if (key == "edge_attr_dim") g.edge_attr_dim = static_cast<int>(as_int(v, path));
    else if (key == "seed") g.seed = as_seed(v, path);
    else throw ConfigError(path + ": unknown key");
  }
}

inline void apply_model(ModelConfig& m, const json& j) {
  if (!j.is_object()) throw ConfigError("model: expected object");
  for (const auto& [key, v] : j.items()) {
    const std::string path = "model." + key;
    if (key == "wide_dim") m.wide_dim = static_cast<int>(as_int(v, path));
    else if (key == "embed_dim") m.embed_dim = static_cast<int>(as_int(v, path));
    else if (key == "wd_hidden") m.wd_hidden = static_cast<int>(as_int(v, path));
    else if (key == "wd_out") m.wd_out = static_cast<int>(as_int(v, path));
    else if (key == "t_max") m.t_max = static_cast<int>(as_int(v, path));
    else if (key == "beh_layers") m.beh_layers = static_cast<int>(as_int(v, path));
    else if (key == "beh_heads") m.beh_heads = static_cast<int>(as_int(v, path));
    else if (key == "beh_ffn") m.beh_ffn = static_cast<int>(as_int(v, path));
    else if (key == "graph_depth") m.graph_depth = static_cast<int>(as_int(v, path));
    else if (key == "graph_hidden") m.graph_hidden = static_cast<int>(as_int(v, path));
    else if (key == "node_attr_dim") m.node_attr_dim = static_cast<int>(as_int(v, path));
    else if (key == "neighbor_cap") m.neighbor_cap = static_cast<int>(as_int(v, path));
    else if (key == "fuse_hidden") m.fuse_hidden = static_cast<int>(as_int(v, path));
    else if (key == "proj_hidden") m.proj_hidden = static_cast<int>(as_int(v, path));
    else if (key == "proj_out") m.proj_out = static_cast<int>(as_int(v, path));
    else if (key == "projection_source") m.projection_source = as_str(v, path);
    else throw ConfigError(path + ": unknown key");
  }
}

inline void apply_train(TrainConfig& t, const json& j) {
  if (!j.is_object()) throw ConfigError("train: expected object");
  for (const auto& [key, v] : j.items()) {
    const std::string path = "train." + key;
    if (key == "batch_samples") {
      long long n = as_int(v, path);
      if (n < 2 || n % 2 != 0) throw ConfigError(path + ": expected a positive even sample count");
      t.pairs = static_cast<int>(n / 2);
    } else if (key == "lr") t.lr = as_num(v, path);
    else if (key == "lambda") t.lambda = as_num(v, path);
    else if (key == "tau") t.tau = as_num(v, path);
    else if (key == "epochs") t.epochs = static_cast<int>(as_int(v, path));
    else if (key == "runs") t.runs = static_cast<int>(as_int(v, path));
    else if (key == "variant") t.variant = as_str(v, path);
    else if (key == "balance") t.balance = as_num(v, path);
    else if (key == "w_ce") t.w_ce = as_num(v, path);
    else if (key == "split") t.split = as_num(v, path);
    else if (key == "seed") t.seed = as_seed(v, path);
    else throw ConfigError(path + ": unknown key");
  }
}

}  // namespace config_detail

inline void validate_config(const AppConfig& cfg) {
  const TrainConfig& t = cfg.train;
  if (t.pairs < 1) throw ConfigError("train.batch_samples: too small");
  if (!(t.lr > 0.0)) throw ConfigError("train.lr: must be positive");
  if (t.lambda < 0.0) throw ConfigError("train.lambda: must be non-negative");
  if (!(t.tau > 0.0)) throw ConfigError("train.tau: must be positive");
  if (t.epochs < 0) throw ConfigError("train.epochs: must be non-negative");
  if (t.runs < 1) throw ConfigError("train.runs: must be positive");
  if (!(t.balance >= 0.0 && t.balance <= 1.0)) throw ConfigError("train.balance: must lie in [0,1]");
  if (t.w_ce < 0.0) throw ConfigError("train.w_ce: must be non-negative");
  if (!(t.split > 0.0 && t.split < 1.0)) throw ConfigError("train.split: must lie in (0,1)");
  try {
    ablation_for(t.variant);
  } catch (const ContractError&) {
    throw ConfigError("train.variant: expected one of full, no_wd, no_b, no_v, ce");
  }
  if (cfg.model.embed_dim < 1 || cfg.model.embed_dim % cfg.model.beh_heads != 0)
    throw ConfigError("model.embed_dim: must be a positive multiple of model.beh_heads");
  if (cfg.model.projection_source != "hidden" && cfg.model.projection_source != "logits")
    throw ConfigError("model.projection_source: expected 'hidden' or 'logits'");
  if (cfg.model.node_attr_dim != cfg.generator.node_attr_dim)
    throw ConfigError("model.node_attr_dim: must match generator.node_attr_dim");
  if (cfg.model.wide_dim != cfg.generator.wide_dim)
    throw ConfigError("model.wide_dim: must match generator.wide_dim");
}

inline AppConfig parse_config(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  AppConfig cfg;
  for (const auto& [key, v] : j.items()) {
    if (key == "generator") config_detail::apply_generator(cfg.generator, v);
    else if (key == "model") config_detail::apply_model(cfg.model, v);
    else if (key == "train") config_detail::apply_train(cfg.train, v);
    else throw ConfigError(key + ": unknown key");
  }
  validate_config(cfg);
  return cfg;
}

inline AppConfig load_config_file(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  return parse_config(j);
}

inline nlohmann::ordered_json config_json(const AppConfig& cfg) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json gen;
  const GenConfig& g = cfg.generator;
  gen["n_clicks"] = g.n_clicks;
  gen["positive_rate"] = g.positive_rate;
  nlohmann::ordered_json targets;
  targets["fraud_tail_p10"] = g.targets.fraud_tail_p10;
  targets["genuine_tail_p10"] = g.targets.genuine_tail_p10;
  targets["fraud_cdf_900"] = g.targets.fraud_cdf_900;
  targets["genuine_cdf_900"] = g.targets.genuine_cdf_900;
  targets["fraud_top3_pages"] = g.targets.fraud_top3_pages;
  targets["fraud_media_tail_p3"] = g.targets.fraud_media_tail_p3;
  targets["genuine_media_tail_p3"] = g.targets.genuine_media_tail_p3;
  gen["targets"] = std::move(targets);
  gen["page_vocab"] = g.page_vocab;
  gen["ring_min"] = g.ring_min;
  gen["ring_max"] = g.ring_max;
  gen["n_advertisers"] = g.n_advertisers;
  gen["keywords_per_advertiser"] = g.keywords_per_advertiser;
  gen["attackable_fraction"] = g.attackable_fraction;
  gen["wide_dim"] = g.wide_dim;
  gen["node_attr_dim"] = g.node_attr_dim;
  gen["edge_attr_dim"] = g.edge_attr_dim;
  gen["seed"] = g.seed;
  j["generator"] = std::move(gen);

  nlohmann::ordered_json model;
  const ModelConfig& m = cfg.model;
  model["wide_dim"] = m.wide_dim;
  model["embed_dim"] = m.embed_dim;
  model["wd_hidden"] = m.wd_hidden;
  model["wd_out"] = m.wd_out;
  model["t_max"] = m.t_max;
  model["beh_layers"] = m.beh_layers;
  model["beh_heads"] = m.beh_heads;
  model["beh_ffn"] = m.beh_ffn;
  model["graph_depth"] = m.graph_depth;
  model["graph_hidden"] = m.graph_hidden;
  model["node_attr_dim"] = m.node_attr_dim;
  model["neighbor_cap"] = m.neighbor_cap;
  model["fuse_hidden"] = m.fuse_hidden;
  model["proj_hidden"] = m.proj_hidden;
  model["proj_out"] = m.proj_out;
  model["projection_source"] = m.projection_source;
  j["model"] = std::move(model);

  nlohmann::ordered_json train;
  const TrainConfig& t = cfg.train;
  train["batch_samples"] = 2 * t.pairs;
  train["lr"] = t.lr;
  train["lambda"] = t.lambda;
  train["tau"] = t.tau;
  train["epochs"] = t.epochs;
  train["runs"] = t.runs;
  train["variant"] = t.variant;
  train["balance"] = t.balance;
  train["w_ce"] = t.w_ce;
  train["split"] = t.split;
  train["seed"] = t.seed;
  j["train"] = std::move(train);
  return j;
}

}  // namespace mccf
