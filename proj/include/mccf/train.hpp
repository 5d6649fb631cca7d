#pragma once

// Pair sampling, the training loop, evaluation, multi-run aggregation, the
// ablation harness, and the 2-d projection export. One run = xavier init from
// the run seed, Adam over sampled pair batches, then metrics on the
// chronological tail split.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mccf/click_data.hpp"
#include "mccf/loss.hpp"
#include "mccf/metrics.hpp"
#include "mccf/model.hpp"
#include "mccf/pca.hpp"

namespace mccf {

struct TrainConfig {
  int pairs = 32;        // M positive pairs per batch, 2M rows
  double lr = 0.001;
  double lambda = 0.01;  // L2 weight on decaying parameters
  double tau = 0.5;
  int epochs = 10;
  int runs = 5;
  std::string variant = "full";  // full | no_wd | no_b | no_v | ce
  double balance = 0.5;          // fraction of pairs drawn from the fraud class
  double w_ce = 1.0;             // 0 switches to a post-hoc linear probe for scoring
  double split = 0.8;            // chronological train fraction
  std::uint64_t seed = 42;
};

struct Dataset {
  std::vector<ClickRecord> records;  // sorted by click time
  const HeteroGraph* graph = nullptr;
  Vocab vocab;  // built from the train slice only
  std::vector<FeatureBundle> bundles;
  std::vector<std::size_t> train_idx, test_idx;
};

inline Dataset prepare_dataset(std::vector<ClickRecord> records, const HeteroGraph& graph, const ModelConfig& mcfg,
                               double split) {
  if (records.size() < 2) throw DataError("prepare_dataset: need at least two records");
  if (!(split > 0.0 && split < 1.0)) throw ContractError("prepare_dataset: split must lie in (0,1)");
  Dataset ds;
  ds.records = std::move(records);
  ds.graph = &graph;
  std::stable_sort(ds.records.begin(), ds.records.end(),
                   [](const ClickRecord& a, const ClickRecord& b) { return a.click_time < b.click_time; });
  std::size_t n_train = static_cast<std::size_t>(
      std::llround(static_cast<double>(ds.records.size()) * split));
  n_train = std::min(std::max<std::size_t>(n_train, 1), ds.records.size() - 1);

  for (std::size_t i = 0; i < n_train; ++i) {
    const ClickRecord& r = ds.records[i];
    ds.vocab.observe(Vocab::kAdvertiser, r.advertiser_id);
    ds.vocab.observe(Vocab::kKeyword, r.keyword_id);
    for (const std::string& p : r.pages) ds.vocab.observe(Vocab::kPage, p);
  }
  ds.bundles.reserve(ds.records.size());
  for (const ClickRecord& r : ds.records)
    ds.bundles.push_back(assemble_features(r, ds.vocab, graph, mcfg.wide_dim, mcfg.t_max));
  for (std::size_t i = 0; i < ds.records.size(); ++i) (i < n_train ? ds.train_idx : ds.test_idx).push_back(i);
  return ds;
}

// ceil(balance * M) fraud pairs, the rest genuine; pair members are distinct
// draws from the class pool. Emitted as 2M indices, pair m at (2m, 2m+1).
inline std::vector<std::size_t> sample_pair_batch(const std::vector<std::size_t>& fraud_pool,
                                                  const std::vector<std::size_t>& genuine_pool, int pairs,
                                                  double balance, Rng& rng) {
  if (pairs < 1) throw ContractError("sample_pair_batch: need at least one pair");
  if (!(balance >= 0.0 && balance <= 1.0)) throw ContractError("sample_pair_batch: balance must lie in [0,1]");
  const int n_fraud = static_cast<int>(std::ceil(balance * pairs));
  const int n_genuine = pairs - n_fraud;
  if (n_fraud > 0 && fraud_pool.size() < 2) throw DataError("sample_pair_batch: fewer than two fraud samples");
  if (n_genuine > 0 && genuine_pool.size() < 2) throw DataError("sample_pair_batch: fewer than two genuine samples");

  std::vector<std::size_t> out;
  out.reserve(2 * static_cast<std::size_t>(pairs));
  auto draw_pair = [&](const std::vector<std::size_t>& pool) {
    std::uint64_t i = rng.below(pool.size());
    std::uint64_t j = rng.below(pool.size() - 1);
    if (j >= i) ++j;
    out.push_back(pool[i]);
    out.push_back(pool[j]);
  };
  for (int m = 0; m < n_fraud; ++m) draw_pair(fraud_pool);
  for (int m = 0; m < n_genuine; ++m) draw_pair(genuine_pool);
  return out;
}

struct TrainedModel {
  ParamSet params;
  std::vector<double> epoch_loss;  // mean objective per epoch
};

namespace train_detail {

inline void class_pools(const Dataset& ds, const std::vector<std::size_t>& idx, std::vector<std::size_t>& fraud,
                        std::vector<std::size_t>& genuine) {
  for (std::size_t i : idx) {
    if (ds.records[i].label == Label::fraud) fraud.push_back(i);
    else if (ds.records[i].label == Label::genuine) genuine.push_back(i);
  }
}

}  // namespace train_detail

inline TrainedModel train_model(const Dataset& ds, const ModelConfig& mcfg, const TrainConfig& tcfg,
                                std::uint64_t run_seed) {
  const Ablation ab = ablation_for(tcfg.variant);
  const double w_ctr = tcfg.variant == "ce" ? 0.0 : 1.0;
  if (w_ctr == 0.0 && tcfg.w_ce <= 0.0) throw ContractError("train_model: objective has no positive term");
  if (tcfg.pairs < 1 || tcfg.epochs < 0) throw ContractError("train_model: bad pairs/epochs");

  std::vector<std::size_t> fraud, genuine;
  train_detail::class_pools(ds, ds.train_idx, fraud, genuine);
  const std::size_t n_labeled = fraud.size() + genuine.size();
  if (n_labeled < 2) throw DataError("train_model: train split holds fewer than two labeled records");

  TrainedModel tm{init_mccf_params(mcfg, deep_table_rows(ds.vocab), ds.vocab.rows(Vocab::kPage), run_seed), {}};
  AdamConfig acfg;
  acfg.lr = tcfg.lr;
  AdamState adam;
  Rng sampler(derive_seed(run_seed, "pair-sampler"));
  const std::uint64_t nbase = derive_seed(run_seed, "neighbor-sampler");

  const std::size_t rows_per_batch = 2 * static_cast<std::size_t>(tcfg.pairs);
  const std::size_t batches = (n_labeled + rows_per_batch - 1) / rows_per_batch;
  std::uint64_t step = 0;
  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    double total = 0.0;
    for (std::size_t b = 0; b < batches; ++b, ++step) {
      std::vector<std::size_t> idx = sample_pair_batch(fraud, genuine, tcfg.pairs, tcfg.balance, sampler);
      std::vector<FeatureBundle> batch;
      std::vector<int> labels;
      batch.reserve(idx.size());
      for (std::size_t i : idx) {
        batch.push_back(ds.bundles[i]);
        labels.push_back(ds.records[i].label == Label::fraud ? 1 : 0);
      }

      Tape tape;
      BoundParams bound = bind_params(tape, tm.params);
      std::uint64_t stream = nbase + step;
      ForwardContext ctx(mcfg, tape, bound, *ds.graph, splitmix64(stream), ab);
      BatchOutput out = mccf_forward_batch(ctx, batch);
      std::vector<Var> parts;
      if (w_ctr > 0.0) parts.push_back(scale(ntxent_batch_loss(out.zproj, tcfg.tau), w_ctr));
      if (tcfg.w_ce > 0.0) parts.push_back(scale(cross_entropy_loss(out.yhat, labels), tcfg.w_ce));
      parts.push_back(scale(l2_sum(bound), tcfg.lambda / 2.0));
      Var obj = add_many(parts);
      total += obj.val().at(0);
      tape.backward(obj.id);
      adam_step(tm.params, collect_grads(tape, bound), adam, acfg);
    }
    tm.epoch_loss.push_back(batches == 0 ? 0.0 : total / static_cast<double>(batches));
  }
  return tm;
}

// Batched inference over a fixed index list. Fills fraud probabilities and,
// when asked, the fusion hidden rows (for probes and projections).
inline void forward_scores(const Dataset& ds, const std::vector<std::size_t>& idx, const ModelConfig& mcfg,
                           const ParamSet& params, Ablation ab, std::uint64_t neighbor_seed,
                           std::vector<double>* probs, Tensor* hidden = nullptr, std::size_t batch_cap = 256) {
  if (probs != nullptr) {
    probs->clear();
    probs->reserve(idx.size());
  }
  if (hidden != nullptr) *hidden = Tensor({static_cast<std::int64_t>(idx.size()), mcfg.fuse_hidden});
  std::size_t done = 0, batch_no = 0;
  while (done < idx.size()) {
    std::size_t take = std::min(batch_cap, idx.size() - done);
    std::vector<FeatureBundle> batch;
    batch.reserve(take);
    for (std::size_t k = 0; k < take; ++k) batch.push_back(ds.bundles[idx[done + k]]);
    Tape tape;
    BoundParams bound = bind_params(tape, params);
    std::uint64_t stream = neighbor_seed + batch_no;
    ForwardContext ctx(mcfg, tape, bound, *ds.graph, splitmix64(stream), ab);
    BatchOutput out = mccf_forward_batch(ctx, batch);
    const Tensor& yhat = out.yhat.val();
    for (std::size_t k = 0; k < take; ++k) {
      if (probs != nullptr) probs->push_back(yhat.at(static_cast<std::int64_t>(2 * k + 1)));
      if (hidden != nullptr) {
        const Tensor& h = out.h1.val();
        std::copy(h.row_ptr(static_cast<std::int64_t>(k)), h.row_ptr(static_cast<std::int64_t>(k)) + h.cols(),
                  hidden->row_ptr(static_cast<std::int64_t>(done + k)));
      }
    }
    done += take;
    ++batch_no;
  }
}

// Logistic read-out trained on frozen hidden rows; the scoring path when the
// combined objective carries no cross-entropy term.
struct LinearProbe {
  Tensor weight;  // 2 x d
  Tensor bias;    // 2
};

inline LinearProbe fit_linear_probe(const Tensor& hidden, const std::vector<int>& labels, std::uint64_t seed,
                                    int steps = 300, double lr = 0.05) {
  hidden.require_rank(2, "fit_linear_probe");
  if (static_cast<std::size_t>(hidden.rows()) != labels.size())
    throw ContractError("fit_linear_probe: row/label mismatch");
  Rng rng(derive_seed(seed, "probe"));
  ParamSet ps;
  ps.add("probe.weight", xavier_init({2, hidden.cols()}, hidden.cols(), 2, rng), true);
  ps.add("probe.bias", Tensor::zeros({2}), false);
  AdamConfig acfg;
  acfg.lr = lr;
  AdamState adam;
  for (int s = 0; s < steps; ++s) {
    Tape tape;
    BoundParams bound = bind_params(tape, ps);
    Var logits = linear_rows(leaf(tape, hidden), bound.at("probe.weight"), bound.at("probe.bias"));
    Var loss = cross_entropy_loss(softmax(logits), labels);
    tape.backward(loss.id);
    adam_step(ps, collect_grads(tape, bound), adam, acfg);
  }
  return {ps.at("probe.weight"), ps.at("probe.bias")};
}

inline std::vector<double> probe_scores(const Tensor& hidden, const LinearProbe& probe) {
  Tape tape;
  Var yhat = softmax(linear_rows(leaf(tape, hidden), leaf(tape, probe.weight), leaf(tape, probe.bias)));
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(hidden.rows()));
  const Tensor& y = yhat.val();
  for (std::int64_t r = 0; r < y.rows(); ++r) out.push_back(y.at(2 * r + 1));
  return out;
}

struct EvalRow {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  std::optional<double> auc;  // absent when the test slice holds one class
  ConfusionCounts counts;
};

inline EvalRow evaluate_model(const Dataset& ds, const ModelConfig& mcfg, const ParamSet& params,
                              const std::string& variant, double threshold, std::uint64_t run_seed,
                              double w_ce = 1.0) {
  std::vector<std::size_t> labeled;
  for (std::size_t i : ds.test_idx)
    if (ds.records[i].label != Label::unlabeled) labeled.push_back(i);
  if (labeled.empty()) throw DataError("evaluate_model: test split holds no labeled records");

  const Ablation ab = ablation_for(variant);
  const std::uint64_t eval_seed = derive_seed(run_seed, "eval-neighbors");
  std::vector<double> scores;
  if (w_ce > 0.0) {
    forward_scores(ds, labeled, mcfg, params, ab, eval_seed, &scores);
  } else {
    // no trained softmax head: fit a probe on train hidden rows, score test
    std::vector<std::size_t> tr_labeled;
    for (std::size_t i : ds.train_idx)
      if (ds.records[i].label != Label::unlabeled) tr_labeled.push_back(i);
    Tensor tr_hidden, te_hidden;
    forward_scores(ds, tr_labeled, mcfg, params, ab, derive_seed(run_seed, "probe-neighbors"), nullptr, &tr_hidden);
    std::vector<int> tr_labels;
    for (std::size_t i : tr_labeled) tr_labels.push_back(ds.records[i].label == Label::fraud ? 1 : 0);
    LinearProbe probe = fit_linear_probe(tr_hidden, tr_labels, run_seed);
    forward_scores(ds, labeled, mcfg, params, ab, eval_seed, nullptr, &te_hidden);
    scores = probe_scores(te_hidden, probe);
  }

  std::vector<int> labels;
  labels.reserve(labeled.size());
  for (std::size_t i : labeled) labels.push_back(ds.records[i].label == Label::fraud ? 1 : 0);

  EvalRow row;
  row.counts = confusion(scores, labels, threshold);
  row.precision = precision(row.counts);
  row.recall = recall(row.counts);
  row.f1 = f1_score(row.counts);
  bool has_pos = std::find(labels.begin(), labels.end(), 1) != labels.end();
  bool has_neg = std::find(labels.begin(), labels.end(), 0) != labels.end();
  if (has_pos && has_neg) row.auc = auc_exact(scores, labels);
  return row;
}

struct MetricsReport {
  std::string variant;
  std::vector<EvalRow> runs;
  std::vector<std::vector<double>> loss_histories;
};

inline MetricsReport run_many(const Dataset& ds, const ModelConfig& mcfg, const TrainConfig& tcfg,
                              double threshold = 0.5, ParamSet* first_run_params = nullptr) {
  if (tcfg.runs < 1) throw ContractError("run_many: runs must be positive");
  MetricsReport rep;
  rep.variant = tcfg.variant;
  for (int r = 0; r < tcfg.runs; ++r) {
    std::uint64_t run_seed = tcfg.seed + static_cast<std::uint64_t>(r);
    TrainedModel tm = train_model(ds, mcfg, tcfg, run_seed);
    if (r == 0 && first_run_params != nullptr) *first_run_params = tm.params;
    rep.runs.push_back(evaluate_model(ds, mcfg, tm.params, tcfg.variant, threshold, run_seed, tcfg.w_ce));
    rep.loss_histories.push_back(tm.epoch_loss);
  }
  return rep;
}

namespace train_detail {

inline double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

inline double sample_std(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  double m = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

}  // namespace train_detail

inline double report_mean(const MetricsReport& rep, const std::string& metric) {
  std::vector<double> xs;
  for (const EvalRow& r : rep.runs) {
    if (metric == "precision") xs.push_back(r.precision);
    else if (metric == "recall") xs.push_back(r.recall);
    else if (metric == "f1") xs.push_back(r.f1);
    else if (metric == "auc") {
      if (!r.auc) throw ContractError("report_mean: auc absent in a run");
      xs.push_back(*r.auc);
    } else throw ContractError("report_mean: unknown metric " + metric);
  }
  return train_detail::mean_of(xs);
}

inline nlohmann::ordered_json metrics_json(const MetricsReport& rep) {
  bool all_auc = true;
  for (const EvalRow& r : rep.runs) all_auc = all_auc && r.auc.has_value();

  nlohmann::ordered_json j;
  j["runs"] = nlohmann::ordered_json::array();
  for (const EvalRow& r : rep.runs) {
    nlohmann::ordered_json row;
    row["precision"] = r.precision;
    row["recall"] = r.recall;
    row["f1"] = r.f1;
    if (r.auc) row["auc"] = *r.auc;
    j["runs"].push_back(std::move(row));
  }
  std::vector<std::string> metrics = {"precision", "recall", "f1"};
  if (all_auc) metrics.push_back("auc");
  nlohmann::ordered_json mean, stdev;
  for (const std::string& m : metrics) {
    std::vector<double> xs;
    for (const EvalRow& r : rep.runs)
      xs.push_back(m == "precision" ? r.precision : m == "recall" ? r.recall : m == "f1" ? r.f1 : *r.auc);
    mean[m] = train_detail::mean_of(xs);
    stdev[m] = train_detail::sample_std(xs);
  }
  j["mean"] = std::move(mean);
  j["std"] = std::move(stdev);
  j["variant"] = rep.variant;
  return j;
}

// Trains and evaluates each variant with the same data and base seed.
inline std::map<std::string, MetricsReport> ablation_table(const Dataset& ds, const ModelConfig& mcfg,
                                                           const TrainConfig& base,
                                                           const std::vector<std::string>& variants,
                                                           double threshold = 0.5) {
  std::map<std::string, MetricsReport> out;
  for (const std::string& v : variants) {
    TrainConfig t = base;
    t.variant = v;
    out[v] = run_many(ds, mcfg, t, threshold);
  }
  return out;
}

inline nlohmann::ordered_json ablation_json(const std::map<std::string, MetricsReport>& table) {
  nlohmann::ordered_json j;
  j["variants"] = nlohmann::ordered_json::object();
  const std::vector<std::string> order = {"full", "no_wd", "no_b", "no_v", "ce"};
  for (const std::string& v : order)
    if (table.count(v)) j["variants"][v] = metrics_json(table.at(v));
  for (const auto& [v, rep] : table)
    if (!j["variants"].contains(v)) j["variants"][v] = metrics_json(rep);
  if (table.count("full")) {
    nlohmann::ordered_json deltas;
    double full_auc = report_mean(table.at("full"), "auc");
    double full_f1 = report_mean(table.at("full"), "f1");
    for (const std::string& v : order) {
      if (v == "full" || !table.count(v)) continue;
      nlohmann::ordered_json d;
      d["auc"] = full_auc - report_mean(table.at(v), "auc");
      d["f1"] = full_f1 - report_mean(table.at(v), "f1");
      deltas[v] = std::move(d);
    }
    j["deltas_vs_full"] = std::move(deltas);
  }
  return j;
}

// The projection export compares three spaces over the labeled test rows:
// "input" is the raw numeric input (wide features joined with the three node
// attribute blocks, zeros where a record has no such node), "hidden_ce" and
// "hidden_ntxent" are fusion hidden rows from a cross-entropy-only and a
// contrastive run trained here on the same seed. Each space is reduced to its
// top two principal directions; a rank-1 space leaves pc2 at zero.
inline std::string pca_csv(const Dataset& ds, const ModelConfig& mcfg, const TrainConfig& base) {
  std::vector<std::size_t> labeled;
  for (std::size_t i : ds.test_idx)
    if (ds.records[i].label != Label::unlabeled) labeled.push_back(i);
  if (labeled.size() < 2) throw DataError("pca_csv: need at least two labeled test records");

  const int s = ds.graph->node_attr_dim();
  const std::int64_t d_in = mcfg.wide_dim + 3 * s;
  Tensor X({static_cast<std::int64_t>(labeled.size()), d_in});
  for (std::size_t r = 0; r < labeled.size(); ++r) {
    const FeatureBundle& b = ds.bundles[labeled[r]];
    double* row = X.row_ptr(static_cast<std::int64_t>(r));
    std::copy(b.wide.begin(), b.wide.end(), row);
    const std::optional<int> nodes[] = {b.ip_node, b.cookie_node, b.device_node};
    for (int k = 0; k < 3; ++k) {
      double* block = row + mcfg.wide_dim + k * s;
      if (nodes[k]) {
        const std::vector<double>& a = ds.graph->attrs_of(*nodes[k]);
        std::copy(a.begin(), a.end(), block);
      }
    }
  }

  TrainConfig ce_cfg = base;
  ce_cfg.variant = "ce";
  TrainedModel ce_model = train_model(ds, mcfg, ce_cfg, base.seed);
  TrainConfig full_cfg = base;
  full_cfg.variant = "full";
  TrainedModel full_model = train_model(ds, mcfg, full_cfg, base.seed);
  Tensor h_ce, h_full;
  forward_scores(ds, labeled, mcfg, ce_model.params, ablation_for("ce"), derive_seed(base.seed, "pca-ce"), nullptr,
                 &h_ce);
  forward_scores(ds, labeled, mcfg, full_model.params, ablation_for("full"), derive_seed(base.seed, "pca-ntxent"),
                 nullptr, &h_full);

  std::ostringstream os;
  os.precision(17);
  os << "pc1,pc2,label,source\n";
  auto emit = [&](const Tensor& M, const char* source) {
    PcaResult p = pca_fit(M, static_cast<int>(std::min<std::int64_t>(2, M.cols())));
    for (std::size_t r = 0; r < labeled.size(); ++r) {
      double pc1 = p.projected.at(static_cast<std::int64_t>(r) * p.found);
      double pc2 = p.found > 1 ? p.projected.at(static_cast<std::int64_t>(r) * p.found + 1) : 0.0;
      int label = ds.records[labeled[r]].label == Label::fraud ? 1 : 0;
      os << pc1 << ',' << pc2 << ',' << label << ',' << source << '\n';
    }
  };
  emit(X, "input");
  emit(h_ce, "hidden_ce");
  emit(h_full, "hidden_ntxent");
  return os.str();
}

}  // namespace mccf
