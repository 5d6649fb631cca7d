// mccf: one binary for the whole pipeline. Subcommands generate synthetic
// click logs, train and evaluate the multimodal detector, run the ablation
// grid, export PCA projections, audit gradients against finite differences,
// and check generator output against its calibration targets. Artifacts are
// accompanied by a run manifest recording config, seeds and input digests.

#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mccf/config.hpp"
#include "mccf/gradcheck.hpp"
#include "mccf/loss.hpp"
#include "mccf/manifest.hpp"
#include "mccf/model_io.hpp"
#include "mccf/train.hpp"

namespace fs = std::filesystem;
using namespace mccf;

namespace {

struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

const char* kCommands[] = {"gen", "train", "eval", "ablate", "project", "gradcheck", "validate-stats"};

const char* kFlagHelp =
    "flags:\n"
    "  --config PATH   JSON config file; missing keys fall back to built-in defaults\n"
    "  --data DIR      data directory holding clicks.ndjson, nodes.csv, edges.csv\n"
    "  --model PATH    saved model file to evaluate\n"
    "  --out PATH      output directory (gen) or file (train/eval/ablate/project)\n"
    "  --seed N        override the generator and train seeds\n"
    "  --runs N        override train.runs\n"
    "  --variant NAME  override train.variant: full, no_wd, no_b, no_v, ce\n"
    "  --threshold F   fraud-probability threshold for confusion metrics (default 0.5)\n"
    "  --print-config  print the effective config as JSON and exit\n"
    "  --help          show help for the command\n"
    "\n"
    "environment:\n"
    "  MCCF_LOG        log verbosity on stderr: error (default), info, debug\n"
    "\n"
    "exit codes: 0 success, 1 usage error, 2 data or contract error, 3 numeric failure\n";

void print_main_usage(std::FILE* to) {
  std::fprintf(to,
               "mccf: multimodal click-fraud detection pipeline\n"
               "\n"
               "usage: mccf <command> [flags]\n"
               "\n"
               "commands:\n"
               "  gen             generate a synthetic labeled click log and media graph\n"
               "  train           train the detector; writes a model file plus metrics.json\n"
               "  eval            score a saved model over a data directory's test slice\n"
               "  ablate          train every ablation variant and compare against full\n"
               "  project         export 2-d PCA projections of inputs and hidden layers\n"
               "  gradcheck       audit every gradient path against finite differences\n"
               "  validate-stats  check a click log against the generator's calibration targets\n"
               "\n%s",
               kFlagHelp);
}

void print_command_usage(const std::string& cmd, std::FILE* to) {
  static const std::map<std::string, const char*> lines = {
      {"gen", "usage: mccf gen --out DIR [--config PATH] [--seed N] [--print-config]"},
      {"train",
       "usage: mccf train --data DIR --out MODEL_FILE [--config PATH] [--seed N] [--runs N]\n"
       "                  [--variant NAME] [--threshold F] [--print-config]"},
      {"eval",
       "usage: mccf eval --data DIR --model MODEL_FILE [--config PATH] [--out ROW_FILE]\n"
       "                 [--variant NAME] [--threshold F] [--seed N] [--print-config]"},
      {"ablate",
       "usage: mccf ablate --data DIR --out REPORT_FILE [--config PATH] [--seed N] [--runs N]\n"
       "                   [--threshold F] [--print-config]"},
      {"project", "usage: mccf project --data DIR --out CSV_FILE [--config PATH] [--seed N] [--print-config]"},
      {"gradcheck", "usage: mccf gradcheck"},
      {"validate-stats", "usage: mccf validate-stats --data DIR [--config PATH] [--print-config]"},
  };
  std::fprintf(to, "%s\n\n%s", lines.at(cmd), kFlagHelp);
}

struct CliArgs {
  std::string command;
  std::optional<std::string> config, data, model, out, variant;
  std::optional<std::uint64_t> seed;
  std::optional<int> runs;
  std::optional<double> threshold;
  bool print_config = false;
  bool help = false;
};

std::uint64_t parse_u64(const std::string& flag, const std::string& text) {
  char* end = nullptr;
  errno = 0;
  unsigned long long v = std::strtoull(text.c_str(), &end, 10);
  if (errno != 0 || end != text.c_str() + text.size() || text.empty() || text[0] == '-')
    throw UsageError(flag + ": expected an unsigned integer, got '" + text + "'");
  return v;
}

int parse_pos_int(const std::string& flag, const std::string& text) {
  char* end = nullptr;
  errno = 0;
  long v = std::strtol(text.c_str(), &end, 10);
  if (errno != 0 || end != text.c_str() + text.size() || text.empty() || v < 1 || v > 1'000'000)
    throw UsageError(flag + ": expected a positive integer, got '" + text + "'");
  return static_cast<int>(v);
}

double parse_double(const std::string& flag, const std::string& text) {
  char* end = nullptr;
  errno = 0;
  double v = std::strtod(text.c_str(), &end);
  if (errno != 0 || end != text.c_str() + text.size() || text.empty())
    throw UsageError(flag + ": expected a number, got '" + text + "'");
  return v;
}

CliArgs parse_args(int argc, char** argv) {
  CliArgs a;
  a.command = argv[1];
  bool known = false;
  for (const char* c : kCommands) known = known || a.command == c;
  if (!known) throw UsageError("unknown command: " + a.command);

  auto value = [&](int& i, const std::string& flag) -> std::string {
    if (i + 1 >= argc) throw UsageError(flag + " requires a value");
    return argv[++i];
  };
  for (int i = 2; i < argc; ++i) {
    std::string f = argv[i];
    if (f == "--config") a.config = value(i, f);
    else if (f == "--data") a.data = value(i, f);
    else if (f == "--model") a.model = value(i, f);
    else if (f == "--out") a.out = value(i, f);
    else if (f == "--variant") a.variant = value(i, f);
    else if (f == "--seed") a.seed = parse_u64(f, value(i, f));
    else if (f == "--runs") a.runs = parse_pos_int(f, value(i, f));
    else if (f == "--threshold") a.threshold = parse_double(f, value(i, f));
    else if (f == "--print-config") a.print_config = true;
    else if (f == "--help" || f == "-h") a.help = true;
    else throw UsageError("unknown flag: " + f);
  }
  return a;
}

AppConfig effective_config(const CliArgs& a) {
  AppConfig cfg = a.config ? load_config_file(*a.config) : parse_config(nlohmann::json::object());
  if (a.seed) {
    cfg.generator.seed = *a.seed;
    cfg.train.seed = *a.seed;
  }
  if (a.runs) cfg.train.runs = *a.runs;
  if (a.variant) cfg.train.variant = *a.variant;
  validate_config(cfg);
  return cfg;
}

std::string require_flag(const std::optional<std::string>& v, const std::string& flag, const std::string& cmd) {
  if (!v) throw UsageError(cmd + ": " + flag + " is required");
  return *v;
}

// ---- manifest plumbing -------------------------------------------------

class WallClock {
 public:
  long long ms() const {
    auto dt = std::chrono::steady_clock::now() - start_;
    return std::chrono::duration_cast<std::chrono::milliseconds>(dt).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

RunManifest base_manifest(const CliArgs& a, const AppConfig& cfg, std::uint64_t seed) {
  RunManifest m;
  m.command = a.command;
  m.config = config_json(cfg);
  m.seed = seed;
  if (a.config) m.input_digests[*a.config] = file_digest_hex(*a.config);
  return m;
}

// ---- data loading ------------------------------------------------------

struct LoadedData {
  std::unique_ptr<HeteroGraph> graph;  // heap-pinned; Dataset keeps a pointer
  Dataset ds;
  std::map<std::string, std::string> digests;
};

LoadedData load_data_dir(const std::string& dir, const AppConfig& cfg) {
  const std::string clicks_path = (fs::path(dir) / "clicks.ndjson").string();
  const std::string nodes_path = (fs::path(dir) / "nodes.csv").string();
  const std::string edges_path = (fs::path(dir) / "edges.csv").string();
  LoadedData out;
  for (const std::string& p : {clicks_path, nodes_path, edges_path}) out.digests[p] = file_digest_hex(p);
  out.graph = std::make_unique<HeteroGraph>(HeteroGraph::parse(read_file(nodes_path), read_file(edges_path)));
  std::vector<ClickRecord> records = parse_click_records(read_file(clicks_path), cfg.model.wide_dim);
  MCCF_INFO("loaded %zu clicks, %lld graph nodes from %s", records.size(),
            static_cast<long long>(out.graph->node_count()), dir.c_str());
  out.ds = prepare_dataset(std::move(records), *out.graph, cfg.model, cfg.train.split);
  return out;
}

// The model's embedding tables are sized from the data directory's vocabulary,
// so a saved model only fits the data it was trained on. Catch the obvious
// mismatches up front with a readable message.
void check_model_fits(const ParamSet& params, const Dataset& ds, const ModelConfig& mcfg) {
  auto expect_shape = [&](const std::string& name, std::vector<std::int64_t> want) {
    if (!params.has(name)) throw DataError("model file: missing tensor " + name);
    if (params.at(name).shape != want)
      throw DataError("model file: tensor " + name + " has shape " + shape_str(params.at(name).shape) +
                      ", but this config and data need " + shape_str(want));
  };
  const std::int64_t E = mcfg.embed_dim;
  expect_shape("wd.embed", {deep_table_rows(ds.vocab), E});
  expect_shape("beh.embed", {ds.vocab.rows(Vocab::kPage), E});
  expect_shape("fuse.fc1.weight", {mcfg.fuse_hidden, mcfg.fuse_in()});
}

nlohmann::ordered_json eval_row_json(const EvalRow& row) {
  nlohmann::ordered_json j;
  j["precision"] = row.precision;
  j["recall"] = row.recall;
  j["f1"] = row.f1;
  if (row.auc) j["auc"] = *row.auc;
  return j;
}

// ---- subcommands -------------------------------------------------------

int cmd_gen(const CliArgs& a, const AppConfig& cfg) {
  WallClock clock;
  const std::string dir = require_flag(a.out, "--out", "gen");
  fs::create_directories(dir);
  GenResult res = generate_dataset(cfg.generator);
  MCCF_INFO("generated %zu clicks, %lld nodes, %lld edges", res.records.size(),
            static_cast<long long>(res.graph.node_count()), static_cast<long long>(res.graph.edge_count()));
  atomic_write_file((fs::path(dir) / "clicks.ndjson").string(), serialize_click_records(res.records));
  atomic_write_file((fs::path(dir) / "nodes.csv").string(), res.graph.nodes_csv());
  atomic_write_file((fs::path(dir) / "edges.csv").string(), res.graph.edges_csv());

  RunManifest m = base_manifest(a, cfg, cfg.generator.seed);
  m.outputs = {"clicks.ndjson", "nodes.csv", "edges.csv"};
  m.wall_ms = clock.ms();
  write_manifest((fs::path(dir) / "manifest.json").string(), m);
  std::printf("wrote %zu clicks to %s\n", res.records.size(), dir.c_str());
  return 0;
}

int cmd_train(const CliArgs& a, const AppConfig& cfg) {
  WallClock clock;
  const std::string data_dir = require_flag(a.data, "--data", "train");
  const std::string out_path = require_flag(a.out, "--out", "train");
  const double threshold = a.threshold.value_or(0.5);
  LoadedData loaded = load_data_dir(data_dir, cfg);

  ParamSet first_run;
  MetricsReport rep = run_many(loaded.ds, cfg.model, cfg.train, threshold, &first_run);
  save_params(out_path, first_run);
  const std::string metrics_path = (fs::path(out_path).parent_path() / "metrics.json").string();
  nlohmann::ordered_json mj = metrics_json(rep);
  atomic_write_file(metrics_path, mj.dump(2) + "\n");

  RunManifest m = base_manifest(a, cfg, cfg.train.seed);
  m.input_digests.insert(loaded.digests.begin(), loaded.digests.end());
  m.outputs = {out_path, metrics_path};
  m.wall_ms = clock.ms();
  write_manifest(out_path + ".manifest.json", m);

  std::string auc_text = mj["mean"].contains("auc") ? mj["mean"]["auc"].dump() : "absent";
  std::printf("variant %s over %d run(s): mean f1 %s, mean auc %s\n", cfg.train.variant.c_str(), cfg.train.runs,
              mj["mean"]["f1"].dump().c_str(), auc_text.c_str());
  return 0;
}

int cmd_eval(const CliArgs& a, const AppConfig& cfg) {
  WallClock clock;
  const std::string data_dir = require_flag(a.data, "--data", "eval");
  const std::string model_path = require_flag(a.model, "--model", "eval");
  const double threshold = a.threshold.value_or(0.5);
  LoadedData loaded = load_data_dir(data_dir, cfg);
  ParamSet params = load_params(model_path);
  check_model_fits(params, loaded.ds, cfg.model);

  EvalRow row = evaluate_model(loaded.ds, cfg.model, params, cfg.train.variant, threshold, cfg.train.seed,
                               cfg.train.w_ce);
  nlohmann::ordered_json j;
  j["variant"] = cfg.train.variant;
  j["threshold"] = threshold;
  j["metrics"] = eval_row_json(row);
  std::printf("%s\n", j.dump(2).c_str());

  if (a.out) {
    atomic_write_file(*a.out, j.dump(2) + "\n");
    RunManifest m = base_manifest(a, cfg, cfg.train.seed);
    m.input_digests.insert(loaded.digests.begin(), loaded.digests.end());
    m.input_digests[model_path] = file_digest_hex(model_path);
    m.outputs = {*a.out};
    m.wall_ms = clock.ms();
    write_manifest(*a.out + ".manifest.json", m);
  }
  return 0;
}

int cmd_ablate(const CliArgs& a, const AppConfig& cfg) {
  WallClock clock;
  const std::string data_dir = require_flag(a.data, "--data", "ablate");
  const std::string out_path = require_flag(a.out, "--out", "ablate");
  const double threshold = a.threshold.value_or(0.5);
  LoadedData loaded = load_data_dir(data_dir, cfg);

  const std::vector<std::string> variants = {"full", "no_wd", "no_b", "no_v", "ce"};
  std::map<std::string, MetricsReport> table = ablation_table(loaded.ds, cfg.model, cfg.train, variants, threshold);
  nlohmann::ordered_json j = ablation_json(table);
  atomic_write_file(out_path, j.dump(2) + "\n");

  RunManifest m = base_manifest(a, cfg, cfg.train.seed);
  m.input_digests.insert(loaded.digests.begin(), loaded.digests.end());
  m.outputs = {out_path};
  m.wall_ms = clock.ms();
  write_manifest(out_path + ".manifest.json", m);

  for (const std::string& v : variants) {
    const auto& mj = j["variants"][v];
    std::string auc_text = mj["mean"].contains("auc") ? mj["mean"]["auc"].dump() : "absent";
    std::printf("%-6s mean f1 %s, mean auc %s\n", v.c_str(), mj["mean"]["f1"].dump().c_str(), auc_text.c_str());
  }
  return 0;
}

int cmd_project(const CliArgs& a, const AppConfig& cfg) {
  WallClock clock;
  const std::string data_dir = require_flag(a.data, "--data", "project");
  const std::string out_path = require_flag(a.out, "--out", "project");
  LoadedData loaded = load_data_dir(data_dir, cfg);

  std::string csv = pca_csv(loaded.ds, cfg.model, cfg.train);
  atomic_write_file(out_path, csv);

  RunManifest m = base_manifest(a, cfg, cfg.train.seed);
  m.input_digests.insert(loaded.digests.begin(), loaded.digests.end());
  m.outputs = {out_path};
  m.wall_ms = clock.ms();
  write_manifest(out_path + ".manifest.json", m);
  std::printf("wrote %s\n", out_path.c_str());
  return 0;
}

int cmd_validate_stats(const CliArgs& a, const AppConfig& cfg) {
  const std::string data_dir = require_flag(a.data, "--data", "validate-stats");
  LoadedData loaded = load_data_dir(data_dir, cfg);
  StatReport rep = validate_statistics(loaded.ds.records, *loaded.graph);
  const GenTargets& t = cfg.generator.targets;

  struct Line {
    const char* name;
    double observed, target;
    bool lower_bound;  // pass when observed >= target instead of within band
  };
  const double band = 0.02;
  const std::vector<Line> lines = {
      {"fraud_tail_p10", rep.fraud.ip_tail_p10, t.fraud_tail_p10, false},
      {"genuine_tail_p10", rep.genuine.ip_tail_p10, t.genuine_tail_p10, false},
      {"fraud_cdf_900", rep.fraud.age_cdf_900, t.fraud_cdf_900, false},
      {"genuine_cdf_900", rep.genuine.age_cdf_900, t.genuine_cdf_900, false},
      {"fraud_top3_pages", rep.fraud.top3_share, 0.99, true},
      {"fraud_media_tail_p3", rep.fraud.media_tail_p3, t.fraud_media_tail_p3, false},
      {"genuine_media_tail_p3", rep.genuine.media_tail_p3, t.genuine_media_tail_p3, false},
      {"positive_rate", rep.positive_rate, cfg.generator.positive_rate, false},
  };
  bool all_ok = true;
  for (const Line& l : lines) {
    bool ok = l.lower_bound ? l.observed >= l.target : std::abs(l.observed - l.target) <= band;
    all_ok = all_ok && ok;
    std::printf("%-22s observed %.4f  target %s%.4f  %s\n", l.name, l.observed, l.lower_bound ? ">= " : "",
                l.target, ok ? "ok" : "MISS");
  }
  std::printf("%s\n", all_ok ? "all statistics within tolerance" : "statistics outside tolerance");
  if (!all_ok) throw DataError("validate-stats: dataset misses its calibration targets");
  return 0;
}

// ---- gradient audit ----------------------------------------------------

// Small fixed instances, the same style the unit suite uses: a six-node
// graph, short page sequences, and a model a few units wide. Finite
// differences over every coordinate stay fast at this size.

ModelConfig audit_config() {
  ModelConfig c;
  c.wide_dim = 3;
  c.embed_dim = 8;
  c.wd_hidden = 6;
  c.wd_out = 5;
  c.t_max = 6;
  c.beh_layers = 1;
  c.beh_heads = 2;
  c.beh_ffn = 7;
  c.graph_depth = 2;
  c.graph_hidden = 8;
  c.node_attr_dim = 4;
  c.neighbor_cap = 2;  // below ip0's degree so the sampler participates
  c.fuse_hidden = 6;
  c.proj_hidden = 5;
  c.proj_out = 4;
  return c;
}

HeteroGraph audit_graph(int s) {
  HeteroGraph g(s, 2);
  auto attrs = [&](double base) {
    std::vector<double> a(static_cast<std::size_t>(s));
    for (int i = 0; i < s; ++i) a[static_cast<std::size_t>(i)] = base + 0.1 * i;
    return a;
  };
  g.add_node(NodeType::ip, "i0", attrs(0.3));
  g.add_node(NodeType::ip, "i1", attrs(-0.2));
  g.add_node(NodeType::cookie, "c0", attrs(0.7));
  g.add_node(NodeType::cookie, "c1", attrs(0.1));
  g.add_node(NodeType::cookie, "c2", attrs(-0.4));
  g.add_node(NodeType::device, "d0", attrs(0.5));
  const std::vector<std::pair<int, int>> clicks = {{0, 2}, {0, 3}, {0, 4}, {1, 2}, {1, 4}};
  for (auto [u, v] : clicks) g.add_edge(u, v, "click", std::vector<double>(2, 0.05));
  g.add_edge(2, 5, "uses", std::vector<double>(2, 0.0));
  return g;
}

FeatureBundle audit_bundle(const ModelConfig& cfg, double shift, std::vector<int> pages, std::optional<int> ip,
                           std::optional<int> ck, std::optional<int> dv) {
  FeatureBundle b;
  b.wide.resize(static_cast<std::size_t>(cfg.wide_dim));
  for (int i = 0; i < cfg.wide_dim; ++i) b.wide[static_cast<std::size_t>(i)] = shift + 0.1 * (i + 1);
  b.deep_ids = {1, 2};
  b.behavior_ids.assign(static_cast<std::size_t>(cfg.t_max), 0);
  b.behavior_mask.assign(static_cast<std::size_t>(cfg.t_max), 0);
  const std::size_t off = static_cast<std::size_t>(cfg.t_max) - pages.size();
  for (std::size_t i = 0; i < pages.size(); ++i) {
    b.behavior_ids[off + i] = pages[i];
    b.behavior_mask[off + i] = 1;
  }
  b.ip_node = ip;
  b.cookie_node = ck;
  b.device_node = dv;
  return b;
}

ParamSet param_subset(const ParamSet& full, const std::string& prefix) {
  ParamSet out;
  for (const auto& name : full.names)
    if (name.rfind(prefix, 0) == 0) out.add(name, full.at(name), full.decay.at(name));
  return out;
}

struct AuditRow {
  std::string component;
  FdResult fd;
};

// Objective family shared by the audit rows. `which` picks the sub-network or
// loss; returns the scalar objective and optionally the analytic gradients.
double audit_objective(const ModelConfig& cfg, const ParamSet& ps, const HeteroGraph& g,
                       const std::vector<FeatureBundle>& batch, const std::string& which,
                       std::unordered_map<std::string, Tensor>* grads_out = nullptr) {
  Tape tape;
  BoundParams bound = bind_params(tape, ps);
  ForwardContext ctx(cfg, tape, bound, g, 7);
  Var obj = [&]() {
    if (which == "wide_deep") return sum_squares(slice_row(wide_deep_rows(ctx, {batch[0]}), 0));
    if (which == "behavior") return sum_squares(behavior_encode(ctx, batch[0]));
    if (which == "graph") return sum_squares(graph_encode(ctx, 0, cfg.graph_depth));
    BatchOutput out = mccf_forward_batch(ctx, batch);
    if (which == "fusion") return add(sum_squares(out.zproj), sum_squares(out.yhat));
    if (which == "ntxent") return ntxent_batch_loss(out.zproj, 0.5);
    std::vector<int> labels = {1, 1, 0, 0};
    if (which == "cross_entropy") return cross_entropy_loss(out.yhat, labels);
    // combined: the full training objective at default weights
    std::vector<Var> parts = {ntxent_batch_loss(out.zproj, 0.5), cross_entropy_loss(out.yhat, labels),
                              scale(l2_sum(bound), 0.01 / 2.0)};
    return add_many(parts);
  }();
  if (grads_out != nullptr) {
    tape.backward(obj.id);
    *grads_out = collect_grads(tape, bound);
  }
  return obj.val().at(0);
}

int cmd_gradcheck(const CliArgs&, const AppConfig&) {
  const ModelConfig cfg = audit_config();
  const HeteroGraph g = audit_graph(cfg.node_attr_dim);
  const ParamSet full = init_mccf_params(cfg, 5, 6, 2024);
  const std::vector<FeatureBundle> batch = {
      audit_bundle(cfg, 0.0, {1, 2}, 0, 2, 5),
      audit_bundle(cfg, 0.4, {2, 4, 1}, 0, 4, {}),
      audit_bundle(cfg, -0.3, {}, 1, {}, {}),
      audit_bundle(cfg, 0.2, {3}, {}, 3, 5),
  };

  struct Spec {
    const char* component;
    const char* prefix;  // empty: audit the full parameter set
  };
  const std::vector<Spec> specs = {
      {"wide_deep", "wd."},    {"behavior", "beh."},      {"graph", "graph."},  {"fusion", ""},
      {"ntxent_loss", ""},     {"cross_entropy", ""},     {"combined_objective", ""},
  };
  const std::map<std::string, std::string> objective_of = {
      {"wide_deep", "wide_deep"},     {"behavior", "behavior"},           {"graph", "graph"},
      {"fusion", "fusion"},           {"ntxent_loss", "ntxent"},          {"cross_entropy", "cross_entropy"},
      {"combined_objective", "combined"},
  };

  const double tol = 1e-5;
  std::vector<AuditRow> rows;
  for (const Spec& s : specs) {
    ParamSet ps = *s.prefix ? param_subset(full, s.prefix) : full;
    const std::string which = objective_of.at(s.component);
    std::unordered_map<std::string, Tensor> grads;
    audit_objective(cfg, ps, g, batch, which, &grads);
    auto f = [&](const ParamSet& p) { return audit_objective(cfg, p, g, batch, which); };
    rows.push_back({s.component, finite_diff_check(f, ps, grads)});
    MCCF_DEBUG("audited %s: %zu parameters", s.component, ps.names.size());
  }

  bool all_ok = true;
  std::printf("%-20s %-12s %s\n", "component", "max rel err", "worst parameter");
  for (const AuditRow& r : rows) {
    bool ok = r.fd.max_rel_err <= tol;
    all_ok = all_ok && ok;
    std::printf("%-20s %-12.3e %s[%lld]%s\n", r.component.c_str(), r.fd.max_rel_err, r.fd.worst_param.c_str(),
                static_cast<long long>(r.fd.worst_coord), ok ? "" : "  EXCEEDS 1e-5");
  }
  if (!all_ok) throw NumericError("gradcheck: at least one gradient disagrees with finite differences");
  std::printf("all gradients within 1e-5 of central differences\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    print_main_usage(stderr);
    return 1;
  }
  const std::string first = argv[1];
  if (first == "--help" || first == "-h" || first == "help") {
    print_main_usage(stdout);
    return 0;
  }
  try {
    CliArgs a = parse_args(argc, argv);
    if (a.help) {
      print_command_usage(a.command, stdout);
      return 0;
    }
    AppConfig cfg = effective_config(a);
    if (a.print_config) {
      std::printf("%s\n", config_json(cfg).dump(2).c_str());
      return 0;
    }
    if (a.command == "gen") return cmd_gen(a, cfg);
    if (a.command == "train") return cmd_train(a, cfg);
    if (a.command == "eval") return cmd_eval(a, cfg);
    if (a.command == "ablate") return cmd_ablate(a, cfg);
    if (a.command == "project") return cmd_project(a, cfg);
    if (a.command == "gradcheck") return cmd_gradcheck(a, cfg);
    return cmd_validate_stats(a, cfg);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "mccf: %s\nrun 'mccf --help' for usage\n", e.what());
    return 1;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "mccf: numeric failure: %s\n", e.what());
    return 3;
  } catch (const DataError& e) {
    std::fprintf(stderr, "mccf: %s\n", e.what());
    return 2;
  } catch (const ContractError& e) {
    std::fprintf(stderr, "mccf: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "mccf: %s\n", e.what());
    return 2;
  }
}
