#pragma once

// The click-fraud network: a wide&deep tabular encoder, a small transformer
// over the page sequence, a mean-aggregation graph encoder over the media
// graph, a fusion head producing 2-class logits, and a projection head for
// the contrastive embedding space. Everything runs on the tape so gradients
// flow end to end. Per-modality ablation switches replace a disabled
// modality with a zero block of the same width without evaluating it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mccf/click_data.hpp"
#include "mccf/hetero_graph.hpp"
#include "mccf/optim.hpp"
#include "mccf/rng.hpp"
#include "mccf/tape.hpp"

namespace mccf {

struct ModelConfig {
  int wide_dim = 40;    // l
  int embed_dim = 128;  // deep / behavior embedding width
  int wd_hidden = 256;
  int wd_out = 128;
  int t_max = 300;
  int beh_layers = 2;
  int beh_heads = 4;
  int beh_ffn = 128;
  int graph_depth = 2;
  int graph_hidden = 64;
  int node_attr_dim = 32;  // s
  int neighbor_cap = 10;   // S, per-hop sample size
  int fuse_hidden = 128;
  int proj_hidden = 64;
  int proj_out = 32;
  std::string projection_source = "hidden";  // "hidden" (h1) or "logits" (z2)

  int graph_block() const { return graph_depth == 0 ? node_attr_dim : graph_hidden; }
  int fuse_in() const { return wd_out + embed_dim + 3 * graph_block(); }
  int wd_in(int deep_fields = 2) const { return wide_dim + deep_fields * embed_dim; }
};

struct Ablation {
  bool use_wd = true;
  bool use_b = true;
  bool use_v = true;
};

inline Ablation ablation_for(const std::string& variant) {
  if (variant == "full" || variant == "ce") return {};
  if (variant == "no_wd") return {false, true, true};
  if (variant == "no_b") return {true, false, true};
  if (variant == "no_v") return {true, true, false};
  throw ContractError("ablation_for: unknown variant '" + variant + "'");
}

inline ParamSet init_mccf_params(const ModelConfig& cfg, int deep_rows, int page_rows, std::uint64_t seed) {
  if (cfg.embed_dim < 1 || cfg.embed_dim % cfg.beh_heads != 0)
    throw ContractError("init_mccf_params: embed_dim must be a positive multiple of beh_heads");
  if (deep_rows < 1 || page_rows < 1) throw ContractError("init_mccf_params: embedding tables need rows");
  if (cfg.projection_source != "hidden" && cfg.projection_source != "logits")
    throw ContractError("init_mccf_params: projection_source must be 'hidden' or 'logits'");
  if (cfg.t_max < 1 || cfg.graph_depth < 0 || cfg.wide_dim < 1 || cfg.node_attr_dim < 1)
    throw ContractError("init_mccf_params: bad dimension");

  Rng rng(derive_seed(seed, "init"));
  ParamSet p;
  const std::int64_t E = cfg.embed_dim;

  auto weight = [&](const std::string& name, std::int64_t out, std::int64_t in) {
    p.add(name, xavier_init({out, in}, in, out, rng), true);
  };
  auto bias = [&](const std::string& name, std::int64_t n) { p.add(name, Tensor::zeros({n}), false); };

  p.add("wd.embed", xavier_init({deep_rows, E}, deep_rows, E, rng), true);
  weight("wd.fc1.weight", cfg.wd_hidden, cfg.wd_in());
  bias("wd.fc1.bias", cfg.wd_hidden);
  weight("wd.fc2.weight", cfg.wd_out, cfg.wd_hidden);
  bias("wd.fc2.bias", cfg.wd_out);

  p.add("beh.embed", xavier_init({page_rows, E}, page_rows, E, rng), true);
  p.add("beh.pos", xavier_init({cfg.t_max + 1, E}, cfg.t_max + 1, E, rng), true);
  p.add("beh.start", xavier_init({E}, E, E, rng), true);
  for (int l = 0; l < cfg.beh_layers; ++l) {
    const std::string pre = "beh.layer" + std::to_string(l) + ".";
    for (const char* w : {"wq", "wk", "wv", "wo"}) {
      weight(pre + "attn." + w + ".weight", E, E);
      bias(pre + "attn." + w + ".bias", E);
    }
    p.add(pre + "ln1.gain", Tensor::full({E}, 1.0), false);
    bias(pre + "ln1.bias", E);
    weight(pre + "ffn.fc1.weight", cfg.beh_ffn, E);
    bias(pre + "ffn.fc1.bias", cfg.beh_ffn);
    weight(pre + "ffn.fc2.weight", E, cfg.beh_ffn);
    bias(pre + "ffn.fc2.bias", E);
    p.add(pre + "ln2.gain", Tensor::full({E}, 1.0), false);
    bias(pre + "ln2.bias", E);
  }

  for (int d = 1; d <= cfg.graph_depth; ++d) {
    const std::int64_t in = 2 * (d == 1 ? cfg.node_attr_dim : cfg.graph_hidden);
    weight("graph.w" + std::to_string(d), cfg.graph_hidden, in);
  }

  weight("fuse.fc1.weight", cfg.fuse_hidden, cfg.fuse_in());
  bias("fuse.fc1.bias", cfg.fuse_hidden);
  weight("fuse.fc2.weight", 2, cfg.fuse_hidden);
  bias("fuse.fc2.bias", 2);

  const std::int64_t proj_in = (cfg.projection_source == "logits") ? 2 : cfg.fuse_hidden;
  weight("proj.fc1.weight", cfg.proj_hidden, proj_in);
  weight("proj.fc2.weight", cfg.proj_out, cfg.proj_hidden);
  return p;
}

// Per-batch forward state: one tape, memoized graph levels and neighbor
// samples (one sample set per node per step), and the behavior-id read
// counter used by the ablation contract tests.
struct ForwardContext {
  const ModelConfig& cfg;
  Tape& tape;
  BoundParams& params;
  const HeteroGraph& graph;
  std::uint64_t neighbor_seed;
  Ablation ablation;
  long long behavior_id_reads = 0;

  std::map<int, std::vector<int>> sampled;
  std::map<std::pair<int, int>, Var> level_memo;  // (level, node) -> h
  std::map<std::pair<std::int64_t, std::int64_t>, Var> zero_memo;

  ForwardContext(const ModelConfig& c, Tape& t, BoundParams& p, const HeteroGraph& g, std::uint64_t seed,
                 Ablation ab = {})
      : cfg(c), tape(t), params(p), graph(g), neighbor_seed(seed), ablation(ab) {}

  Var zeros(std::int64_t rows, std::int64_t cols) {  // rows == 0 means rank-1
    auto key = std::make_pair(rows, cols);
    auto it = zero_memo.find(key);
    if (it != zero_memo.end()) return it->second;
    Tensor t = rows == 0 ? Tensor::zeros({cols}) : Tensor::zeros({rows, cols});
    Var v = leaf(tape, std::move(t));
    zero_memo.emplace(key, v);
    return v;
  }
};

// ---- graph encoder ----

inline const std::vector<int>& sampled_neighbors(ForwardContext& ctx, int node) {
  auto it = ctx.sampled.find(node);
  if (it != ctx.sampled.end()) return it->second;
  std::vector<int> pick = ctx.graph.neighbors(node);
  std::sort(pick.begin(), pick.end());  // canonical order: edge insertion order must not matter
  const std::size_t cap = static_cast<std::size_t>(ctx.cfg.neighbor_cap);
  if (pick.size() > cap) {
    std::uint64_t s = ctx.neighbor_seed + 0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(node + 1);
    Rng r(splitmix64(s));
    r.partial_shuffle(pick, cap);
    pick.resize(cap);
    std::sort(pick.begin(), pick.end());
  }
  return ctx.sampled.emplace(node, std::move(pick)).first->second;
}

inline Var graph_encode(ForwardContext& ctx, int node, int depth) {
  if (node < 0 || node >= static_cast<int>(ctx.graph.node_count()))
    throw ContractError("graph_encode: unknown node " + std::to_string(node));
  if (depth < 0) throw ContractError("graph_encode: negative depth");
  auto key = std::make_pair(depth, node);
  auto it = ctx.level_memo.find(key);
  if (it != ctx.level_memo.end()) return it->second;

  Var h = [&]() {
    if (depth == 0) return leaf(ctx.tape, Tensor::vec(ctx.graph.attrs_of(node)));
    Var self = graph_encode(ctx, node, depth - 1);
    const std::vector<int>& nbrs = sampled_neighbors(ctx, node);
    const std::int64_t prev_w = depth == 1 ? ctx.cfg.node_attr_dim : ctx.cfg.graph_hidden;
    Var nmean = [&]() {
      if (nbrs.empty()) return ctx.zeros(0, prev_w);
      std::vector<Var> hs;
      hs.reserve(nbrs.size());
      for (int u : nbrs) hs.push_back(graph_encode(ctx, u, depth - 1));
      return mean_many(hs);
    }();
    Var W = ctx.params.at("graph.w" + std::to_string(depth));
    return relu(matmul(W, concat({self, nmean})));
  }();
  ctx.level_memo.emplace(key, h);
  return h;
}

// ---- behavior encoder ----

inline Var behavior_encoder_layer(ForwardContext& ctx, Var X, int layer) {
  const std::string pre = "beh.layer" + std::to_string(layer) + ".";
  auto P = [&](const std::string& s) { return ctx.params.at(pre + s); };
  const int H = ctx.cfg.beh_heads;
  const std::int64_t hd = ctx.cfg.embed_dim / H;

  Var Q = linear_rows(X, P("attn.wq.weight"), P("attn.wq.bias"));
  Var K = linear_rows(X, P("attn.wk.weight"), P("attn.wk.bias"));
  Var V = linear_rows(X, P("attn.wv.weight"), P("attn.wv.bias"));
  std::vector<Var> heads;
  heads.reserve(static_cast<std::size_t>(H));
  for (int h = 0; h < H; ++h) {
    Var Qh = slice_cols(Q, h * hd, (h + 1) * hd);
    Var Kh = slice_cols(K, h * hd, (h + 1) * hd);
    Var Vh = slice_cols(V, h * hd, (h + 1) * hd);
    Var A = softmax(scale(matmul_nt(Qh, Kh), 1.0 / std::sqrt(static_cast<double>(hd))));
    heads.push_back(matmul(A, Vh));
  }
  Var O = linear_rows(concat_cols(heads), P("attn.wo.weight"), P("attn.wo.bias"));
  X = layer_norm(add(X, O), P("ln1.gain"), P("ln1.bias"));
  Var F = linear_rows(relu(linear_rows(X, P("ffn.fc1.weight"), P("ffn.fc1.bias"))), P("ffn.fc2.weight"),
                      P("ffn.fc2.bias"));
  return layer_norm(add(X, F), P("ln2.gain"), P("ln2.bias"));
}

// Padding positions never influence real positions under masked attention, so
// the padded prefix is stripped instead: the sequence-start row plus the real
// tokens, with learned positions 0..n assigned relative to the real sequence.
inline Var behavior_encode(ForwardContext& ctx, const FeatureBundle& bundle) {
  std::vector<std::int64_t> real;
  for (std::size_t i = 0; i < bundle.behavior_ids.size(); ++i)
    if (bundle.behavior_mask[i]) real.push_back(bundle.behavior_ids[i]);
  ctx.behavior_id_reads += static_cast<long long>(real.size());
  const std::int64_t n = static_cast<std::int64_t>(real.size());
  if (n > ctx.cfg.t_max)
    throw ContractError("behavior_encode: sequence longer than t_max " + std::to_string(ctx.cfg.t_max));

  std::vector<Var> rows;
  rows.reserve(static_cast<std::size_t>(n) + 1);
  rows.push_back(ctx.params.at("beh.start"));
  if (n > 0) {
    Var emb = gather_rows(ctx.params.at("beh.embed"), real);
    for (std::int64_t j = 0; j < n; ++j) rows.push_back(slice_row(emb, j));
  }
  Var X = stack_rows(rows);
  std::vector<std::int64_t> pos_ids(static_cast<std::size_t>(n) + 1);
  for (std::int64_t i = 0; i <= n; ++i) pos_ids[static_cast<std::size_t>(i)] = i;
  X = add(X, gather_rows(ctx.params.at("beh.pos"), pos_ids));
  for (int l = 0; l < ctx.cfg.beh_layers; ++l) X = behavior_encoder_layer(ctx, X, l);
  return slice_row(X, 0);
}

// ---- wide&deep encoder ----

inline Var wide_deep_rows(ForwardContext& ctx, const std::vector<FeatureBundle>& bundles) {
  std::vector<Var> xs;
  xs.reserve(bundles.size());
  for (const FeatureBundle& b : bundles) {
    if (static_cast<int>(b.wide.size()) != ctx.cfg.wide_dim)
      throw ContractError("wide_deep_rows: wide arity " + std::to_string(b.wide.size()) + " != " +
                          std::to_string(ctx.cfg.wide_dim));
    std::vector<std::int64_t> ids(b.deep_ids.begin(), b.deep_ids.end());
    Var e = gather_rows(ctx.params.at("wd.embed"), ids);
    std::vector<Var> parts;
    parts.reserve(ids.size() + 1);
    for (std::int64_t j = 0; j < static_cast<std::int64_t>(ids.size()); ++j) parts.push_back(slice_row(e, j));
    parts.push_back(leaf(ctx.tape, Tensor::vec(b.wide)));
    xs.push_back(concat(parts));
  }
  Var X = stack_rows(xs);
  Var H = relu(linear_rows(X, ctx.params.at("wd.fc1.weight"), ctx.params.at("wd.fc1.bias")));
  return relu(linear_rows(H, ctx.params.at("wd.fc2.weight"), ctx.params.at("wd.fc2.bias")));
}

// ---- media composition: [ip | cookie | device], zeros when absent ----

inline Var media_rows(ForwardContext& ctx, const std::vector<FeatureBundle>& bundles) {
  const std::int64_t bw = ctx.cfg.graph_block();
  std::vector<Var> rows;
  rows.reserve(bundles.size());
  for (const FeatureBundle& b : bundles) {
    std::vector<Var> blocks;
    blocks.reserve(3);
    for (const std::optional<int>& node : {b.ip_node, b.cookie_node, b.device_node})
      blocks.push_back(node ? graph_encode(ctx, *node, ctx.cfg.graph_depth) : ctx.zeros(0, bw));
    rows.push_back(concat(blocks));
  }
  return stack_rows(rows);
}

// ---- fusion + projection ----

struct BatchOutput {
  Var vwd, vb, vv;  // modality rows
  Var h1, z2, yhat; // fusion hidden, logits, class probabilities
  Var zproj;        // contrastive embedding rows
};

inline BatchOutput mccf_forward_batch(ForwardContext& ctx, const std::vector<FeatureBundle>& bundles) {
  if (bundles.empty()) throw ContractError("mccf_forward_batch: empty batch");
  const Ablation& ab = ctx.ablation;
  if (!ab.use_wd && !ab.use_b && !ab.use_v)
    throw ContractError("mccf_forward_batch: all modalities disabled");
  const std::int64_t B = static_cast<std::int64_t>(bundles.size());

  BatchOutput out;
  out.vwd = ab.use_wd ? wide_deep_rows(ctx, bundles) : ctx.zeros(B, ctx.cfg.wd_out);
  if (ab.use_b) {
    std::vector<Var> vb;
    vb.reserve(bundles.size());
    for (const FeatureBundle& b : bundles) vb.push_back(behavior_encode(ctx, b));
    out.vb = stack_rows(vb);
  } else {
    out.vb = ctx.zeros(B, ctx.cfg.embed_dim);
  }
  out.vv = ab.use_v ? media_rows(ctx, bundles) : ctx.zeros(B, 3 * ctx.cfg.graph_block());

  Var V = concat_cols({out.vwd, out.vb, out.vv});
  out.h1 = relu(linear_rows(V, ctx.params.at("fuse.fc1.weight"), ctx.params.at("fuse.fc1.bias")));
  out.z2 = linear_rows(out.h1, ctx.params.at("fuse.fc2.weight"), ctx.params.at("fuse.fc2.bias"));
  out.yhat = softmax(out.z2);

  Var zin = (ctx.cfg.projection_source == "logits") ? out.z2 : out.h1;
  out.zproj = matmul_nt(relu(matmul_nt(zin, ctx.params.at("proj.fc1.weight"))), ctx.params.at("proj.fc2.weight"));
  return out;
}

struct ModelOutput {
  Tensor v_wd, v_b, v_v, h1, z2, y_hat, z;
};

inline ModelOutput mccf_forward(const ModelConfig& cfg, const ParamSet& params, const HeteroGraph& graph,
                                const FeatureBundle& bundle, std::uint64_t neighbor_seed, Ablation ablation = {}) {
  Tape tape;
  BoundParams bound = bind_params(tape, params);
  ForwardContext ctx(cfg, tape, bound, graph, neighbor_seed, ablation);
  BatchOutput b = mccf_forward_batch(ctx, {bundle});
  auto row0 = [](Var v) {
    const Tensor& t = v.val();
    Tensor r({t.cols()});
    std::copy(t.row_ptr(0), t.row_ptr(0) + t.cols(), r.data.begin());
    return r;
  };
  ModelOutput out;
  out.v_wd = row0(b.vwd);
  out.v_b = row0(b.vb);
  out.v_v = row0(b.vv);
  out.h1 = row0(b.h1);
  out.z2 = row0(b.z2);
  out.y_hat = row0(b.yhat);
  out.z = row0(b.zproj);
  return out;
}

}  // namespace mccf
