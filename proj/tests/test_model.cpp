#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "mccf/gradcheck.hpp"
#include "mccf/model.hpp"

using namespace mccf;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.wide_dim = 3;
  c.embed_dim = 8;
  c.wd_hidden = 6;
  c.wd_out = 5;
  c.t_max = 6;
  c.beh_layers = 2;
  c.beh_heads = 2;
  c.beh_ffn = 7;
  c.graph_depth = 2;
  c.graph_hidden = 8;
  c.node_attr_dim = 4;
  c.neighbor_cap = 3;
  c.fuse_hidden = 6;
  c.proj_hidden = 5;
  c.proj_out = 4;
  return c;
}

FeatureBundle make_bundle(const ModelConfig& cfg, std::vector<int> pages, std::vector<int> deep = {1, 2},
                          std::optional<int> ip = {}, std::optional<int> ck = {}, std::optional<int> dv = {}) {
  FeatureBundle b;
  b.wide.resize(static_cast<std::size_t>(cfg.wide_dim));
  for (int i = 0; i < cfg.wide_dim; ++i) b.wide[static_cast<std::size_t>(i)] = 0.1 * (i + 1);
  b.deep_ids = std::move(deep);
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

// Two ips, three cookies, one device. ip0 has degree 3 so a cap of 2 forces
// sampling. `swap_edge_order` reverses edge insertion without moving nodes.
HeteroGraph small_graph(int s, bool swap_edge_order = false) {
  HeteroGraph g(s, 4);
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
  std::vector<std::array<int, 2>> edges = {{0, 2}, {0, 3}, {0, 4}, {1, 2}, {1, 4}};
  if (swap_edge_order) std::reverse(edges.begin(), edges.end());
  for (auto e : edges) g.add_edge(e[0], e[1], "click", std::vector<double>(4, 0.05));
  g.add_edge(2, 5, "uses", std::vector<double>(4, 0.0));
  return g;
}

ParamSet subset(const ParamSet& full, const std::string& prefix) {
  ParamSet out;
  for (const auto& name : full.names)
    if (name.rfind(prefix, 0) == 0) out.add(name, full.at(name), full.decay.at(name));
  return out;
}

}  // namespace

// ---- initialization ----

TEST(ModelInit, ShapesAndDecayFlags) {
  ModelConfig cfg = tiny_config();
  ParamSet ps = init_mccf_params(cfg, 11, 9, 42);

  EXPECT_EQ(ps.at("wd.embed").shape, (std::vector<std::int64_t>{11, 8}));
  EXPECT_EQ(ps.at("wd.fc1.weight").shape, (std::vector<std::int64_t>{6, 3 + 2 * 8}));
  EXPECT_EQ(ps.at("wd.fc2.weight").shape, (std::vector<std::int64_t>{5, 6}));
  EXPECT_EQ(ps.at("beh.embed").shape, (std::vector<std::int64_t>{9, 8}));
  EXPECT_EQ(ps.at("beh.pos").shape, (std::vector<std::int64_t>{7, 8}));
  EXPECT_EQ(ps.at("beh.start").shape, (std::vector<std::int64_t>{8}));
  EXPECT_EQ(ps.at("beh.layer1.attn.wq.weight").shape, (std::vector<std::int64_t>{8, 8}));
  EXPECT_EQ(ps.at("beh.layer0.ffn.fc1.weight").shape, (std::vector<std::int64_t>{7, 8}));
  EXPECT_EQ(ps.at("beh.layer0.ffn.fc2.weight").shape, (std::vector<std::int64_t>{8, 7}));
  EXPECT_EQ(ps.at("graph.w1").shape, (std::vector<std::int64_t>{8, 8}));   // h x 2s
  EXPECT_EQ(ps.at("graph.w2").shape, (std::vector<std::int64_t>{8, 16}));  // h x 2h
  EXPECT_EQ(ps.at("fuse.fc1.weight").shape, (std::vector<std::int64_t>{6, 5 + 8 + 3 * 8}));
  EXPECT_EQ(ps.at("fuse.fc2.weight").shape, (std::vector<std::int64_t>{2, 6}));
  EXPECT_EQ(ps.at("proj.fc1.weight").shape, (std::vector<std::int64_t>{5, 6}));
  EXPECT_EQ(ps.at("proj.fc2.weight").shape, (std::vector<std::int64_t>{4, 5}));

  EXPECT_TRUE(ps.decay.at("wd.embed"));
  EXPECT_TRUE(ps.decay.at("beh.start"));
  EXPECT_TRUE(ps.decay.at("graph.w2"));
  EXPECT_TRUE(ps.decay.at("proj.fc1.weight"));
  EXPECT_FALSE(ps.decay.at("wd.fc1.bias"));
  EXPECT_FALSE(ps.decay.at("beh.layer0.ln1.gain"));
  EXPECT_FALSE(ps.decay.at("beh.layer1.ln2.bias"));
  EXPECT_FALSE(ps.decay.at("fuse.fc2.bias"));

  // layer-norm gains start at one
  for (double v : ps.at("beh.layer0.ln1.gain").data) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(ModelInit, LogitsProjectionShrinksProjInput) {
  ModelConfig cfg = tiny_config();
  cfg.projection_source = "logits";
  ParamSet ps = init_mccf_params(cfg, 5, 5, 1);
  EXPECT_EQ(ps.at("proj.fc1.weight").shape, (std::vector<std::int64_t>{5, 2}));
}

TEST(ModelInit, RejectsBadConfigs) {
  ModelConfig cfg = tiny_config();
  cfg.embed_dim = 9;  // not divisible by heads = 2
  EXPECT_THROW(init_mccf_params(cfg, 5, 5, 1), ContractError);
  cfg = tiny_config();
  cfg.projection_source = "embedding";
  EXPECT_THROW(init_mccf_params(cfg, 5, 5, 1), ContractError);
  EXPECT_THROW(init_mccf_params(tiny_config(), 0, 5, 1), ContractError);
}

TEST(ModelInit, AblationVariantMap) {
  EXPECT_TRUE(ablation_for("full").use_wd);
  EXPECT_TRUE(ablation_for("ce").use_b);
  EXPECT_FALSE(ablation_for("no_wd").use_wd);
  EXPECT_TRUE(ablation_for("no_wd").use_b);
  EXPECT_FALSE(ablation_for("no_b").use_b);
  EXPECT_FALSE(ablation_for("no_v").use_v);
  EXPECT_THROW(ablation_for("no_everything"), ContractError);
}

// ---- wide&deep ----

// hand-worked forward: e(1)=[1,2], e(2)=[3,4], wide=[5,6], so x=[1,2,3,4,5,6];
// fc1 picks coords 0 and 5 then shifts by [0.5,-10]: relu([1.5,-4])=[1.5,0];
// fc2 doubles/triples then adds [0,1]: relu([3,1])=[3,1].
TEST(WideDeep, HandComputedForward) {
  ModelConfig cfg;
  cfg.wide_dim = 2;
  cfg.embed_dim = 2;
  cfg.wd_hidden = 2;
  cfg.wd_out = 2;
  ParamSet ps;
  ps.add("wd.embed", Tensor({3, 2}, {0, 0, 1, 2, 3, 4}), true);
  ps.add("wd.fc1.weight", Tensor({2, 6}, {1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1}), true);
  ps.add("wd.fc1.bias", Tensor::vec({0.5, -10}), false);
  ps.add("wd.fc2.weight", Tensor({2, 2}, {2, 0, 0, 3}), true);
  ps.add("wd.fc2.bias", Tensor::vec({0, 1}), false);

  FeatureBundle b;
  b.wide = {5, 6};
  b.deep_ids = {1, 2};

  HeteroGraph g(1, 1);
  Tape tape;
  BoundParams bound = bind_params(tape, ps);
  ForwardContext ctx(cfg, tape, bound, g, 0);
  Var v = wide_deep_rows(ctx, {b});
  ASSERT_EQ(v.val().shape, (std::vector<std::int64_t>{1, 2}));
  EXPECT_DOUBLE_EQ(v.val().at(0), 3.0);
  EXPECT_DOUBLE_EQ(v.val().at(1), 1.0);
}

TEST(WideDeep, RejectsWrongWideArity) {
  ModelConfig cfg = tiny_config();
  ParamSet ps = init_mccf_params(cfg, 5, 5, 3);
  HeteroGraph g(cfg.node_attr_dim, 4);
  FeatureBundle b = make_bundle(cfg, {1});
  b.wide.pop_back();
  Tape tape;
  BoundParams bound = bind_params(tape, ps);
  ForwardContext ctx(cfg, tape, bound, g, 0);
  EXPECT_THROW(wide_deep_rows(ctx, {b}), ContractError);
}

// ---- behavior encoder ----

TEST(BehaviorEncoder, PaddingNeverLeaks) {
  ModelConfig cfg = tiny_config();
  ParamSet ps = init_mccf_params(cfg, 5, 6, 7);
  HeteroGraph g(cfg.node_attr_dim, 4);

  FeatureBundle a = make_bundle(cfg, {2, 4, 1});
  FeatureBundle b = make_bundle(cfg, {2, 4, 1});
  // poison the padded slots of b; the mask marks them dead
  for (std::size_t i = 0; i < b.behavior_mask.size(); ++i)
    if (!b.behavior_mask[i]) b.behavior_ids[i] = 5;

  Tape tape;
  BoundParams bound = bind_params(tape, ps);
  ForwardContext ctx(cfg, tape, bound, g, 0);
  Var va = behavior_encode(ctx, a);
  Var vb = behavior_encode(ctx, b);
  EXPECT_EQ(va.val().data, vb.val().data);
}

TEST(BehaviorEncoder, TokensAndOrderMatter) {
  ModelConfig cfg = tiny_config();
  ParamSet ps = init_mccf_params(cfg, 5, 6, 7);
  HeteroGraph g(cfg.node_attr_dim, 4);
  Tape tape;
  BoundParams bound = bind_params(tape, ps);
  ForwardContext ctx(cfg, tape, bound, g, 0);

  Var base = behavior_encode(ctx, make_bundle(cfg, {2, 4}));
  Var swapped_token = behavior_encode(ctx, make_bundle(cfg, {2, 3}));
  Var reversed = behavior_encode(ctx, make_bundle(cfg, {4, 2}));
  EXPECT_NE(base.val().data, swapped_token.val().data);
  EXPECT_NE(base.val().data, reversed.val().data);  // learned positions break symmetry
}

TEST(BehaviorEncoder, EmptySequenceUsesStartTokenOnly) {
  ModelConfig cfg = tiny_config();
  ParamSet ps = init_mccf_params(cfg, 5, 6, 7);
  HeteroGraph g(cfg.node_attr_dim, 4);
  Tape tape;
  BoundParams bound = bind_params(tape, ps);
  ForwardContext ctx(cfg, tape, bound, g, 0);
  Var v = behavior_encode(ctx, make_bundle(cfg, {}));
  ASSERT_EQ(v.val().numel(), cfg.embed_dim);
  EXPECT_TRUE(v.val().all_finite());
  EXPECT_EQ(ctx.behavior_id_reads, 0);
}

TEST(BehaviorEncoder, RejectsSequencePastCapacity) {
  ModelConfig cfg = tiny_config();
  ParamSet ps = init_mccf_params(cfg, 5, 6, 7);
  HeteroGraph g(cfg.node_attr_dim, 4);
  FeatureBundle b = make_bundle(cfg, {1, 2, 3, 4, 1, 2});
  b.behavior_ids.insert(b.behavior_ids.end(), {1, 2});
  b.behavior_mask.insert(b.behavior_mask.end(), {1, 1});
  Tape tape;
  BoundParams bound = bind_params(tape, ps);
  ForwardContext ctx(cfg, tape, bound, g, 0);
  EXPECT_THROW(behavior_encode(ctx, b), ContractError);
}

// ---- graph encoder ----

TEST(GraphEncoder, DepthZeroReturnsAttributes) {
  ModelConfig cfg = tiny_config();
  HeteroGraph g = small_graph(cfg.node_attr_dim);
  ParamSet ps = init_mccf_params(cfg, 5, 5, 7);
  Tape tape;
  BoundParams bound = bind_params(tape, ps);
  ForwardContext ctx(cfg, tape, bound, g, 0);
  Var h = graph_encode(ctx, 3, 0);
  EXPECT_EQ(h.val().data, g.attrs_of(3));
}

// hand-worked aggregation with W = [I/2 | I/2]: each level averages the node
// with the mean of its neighbors. a=(1,1) and b=(3,3) joined by one edge both
// land on (2,2); isolated c=(-5,1) halves and loses its negative lane.
TEST(GraphEncoder, HandComputedMeanAggregation) {
  ModelConfig cfg;
  cfg.node_attr_dim = 2;
  cfg.graph_hidden = 2;
  cfg.graph_depth = 2;
  cfg.neighbor_cap = 10;
  HeteroGraph g(2, 1);
  int a = g.add_node(NodeType::ip, "a", {1, 1});
  int b = g.add_node(NodeType::cookie, "b", {3, 3});
  int c = g.add_node(NodeType::cookie, "c", {-5, 1});
  g.add_edge(a, b, "click", {0});

  ParamSet ps;
  Tensor half({2, 4}, {0.5, 0, 0.5, 0, 0, 0.5, 0, 0.5});
  ps.add("graph.w1", half, true);
  ps.add("graph.w2", half, true);

  Tape tape;
  BoundParams bound = bind_params(tape, ps);
  ForwardContext ctx(cfg, tape, bound, g, 0);
  Var ha = graph_encode(ctx, a, 1);
  EXPECT_DOUBLE_EQ(ha.val().at(0), 2.0);
  EXPECT_DOUBLE_EQ(ha.val().at(1), 2.0);
  Var ha2 = graph_encode(ctx, a, 2);
  EXPECT_DOUBLE_EQ(ha2.val().at(0), 2.0);
  EXPECT_DOUBLE_EQ(ha2.val().at(1), 2.0);
  Var hc = graph_encode(ctx, c, 1);
  EXPECT_DOUBLE_EQ(hc.val().at(0), 0.0);
  EXPECT_DOUBLE_EQ(hc.val().at(1), 0.5);
}

TEST(GraphEncoder, EdgeInsertionOrderIsIrrelevant) {
  ModelConfig cfg = tiny_config();
  cfg.neighbor_cap = 2;  // ip0 has degree 3, so the sampler runs
  ParamSet ps = init_mccf_params(cfg, 5, 5, 7);
  HeteroGraph g1 = small_graph(cfg.node_attr_dim, false);
  HeteroGraph g2 = small_graph(cfg.node_attr_dim, true);

  std::vector<double> out1, out2;
  for (HeteroGraph* g : {&g1, &g2}) {
    Tape tape;
    BoundParams bound = bind_params(tape, ps);
    ForwardContext ctx(cfg, tape, bound, *g, 99);
    Var h = graph_encode(ctx, 0, cfg.graph_depth);
    (g == &g1 ? out1 : out2) = h.val().data;
  }
  EXPECT_EQ(out1, out2);
}

TEST(GraphEncoder, SamplerRespectsCapAndSeed) {
  ModelConfig cfg = tiny_config();
  cfg.neighbor_cap = 2;
  ParamSet ps = init_mccf_params(cfg, 5, 5, 7);
  HeteroGraph g = small_graph(cfg.node_attr_dim);
  ASSERT_EQ(g.degree(0), 3);

  Tape tape;
  BoundParams bound = bind_params(tape, ps);
  ForwardContext ctx(cfg, tape, bound, g, 123);
  const std::vector<int>& picked = sampled_neighbors(ctx, 0);
  ASSERT_EQ(picked.size(), 2u);
  EXPECT_TRUE(std::is_sorted(picked.begin(), picked.end()));
  for (int u : picked) {
    const auto& nb = g.neighbors(0);
    EXPECT_NE(std::find(nb.begin(), nb.end(), u), nb.end());
  }

  Tape tape2;
  BoundParams bound2 = bind_params(tape2, ps);
  ForwardContext ctx2(cfg, tape2, bound2, g, 123);
  EXPECT_EQ(sampled_neighbors(ctx2, 0), picked);
}

TEST(GraphEncoder, UnknownNodeThrows) {
  ModelConfig cfg = tiny_config();
  ParamSet ps = init_mccf_params(cfg, 5, 5, 7);
  HeteroGraph g = small_graph(cfg.node_attr_dim);
  Tape tape;
  BoundParams bound = bind_params(tape, ps);
  ForwardContext ctx(cfg, tape, bound, g, 0);
  EXPECT_THROW(graph_encode(ctx, 99, 1), ContractError);
  EXPECT_THROW(graph_encode(ctx, -1, 1), ContractError);
}

// media row layout is [ip | cookie | device]; absent nodes leave zero blocks
TEST(GraphEncoder, MediaRowBlockLayout) {
  ModelConfig cfg;
  cfg.wide_dim = 2;
  cfg.node_attr_dim = 2;
  cfg.graph_hidden = 2;
  cfg.graph_depth = 1;
  cfg.t_max = 4;
  HeteroGraph g(2, 1);
  int a = g.add_node(NodeType::ip, "a", {1, 1});
  int b = g.add_node(NodeType::cookie, "b", {3, 3});
  g.add_edge(a, b, "click", {0});
  ParamSet ps;
  ps.add("graph.w1", Tensor({2, 4}, {0.5, 0, 0.5, 0, 0, 0.5, 0, 0.5}), true);

  Tape tape;
  BoundParams bound = bind_params(tape, ps);
  ForwardContext ctx(cfg, tape, bound, g, 0);
  FeatureBundle bd = make_bundle(cfg, {}, {1, 2}, std::nullopt, b, std::nullopt);
  Var rows = media_rows(ctx, {bd});
  ASSERT_EQ(rows.val().shape, (std::vector<std::int64_t>{1, 6}));
  std::vector<double> expect = {0, 0, 2, 2, 0, 0};
  EXPECT_EQ(rows.val().data, expect);
}

// ---- fusion, ablation, projection ----

TEST(Fusion, AllZeroParametersGiveCoinFlip) {
  ModelConfig cfg = tiny_config();
  ParamSet ps = init_mccf_params(cfg, 5, 6, 7);
  for (const auto& name : ps.names)
    for (double& v : ps.at(name).data) v = 0.0;

  HeteroGraph g = small_graph(cfg.node_attr_dim);
  FeatureBundle b = make_bundle(cfg, {1, 2}, {1, 2}, 0, 2, 5);
  ModelOutput out = mccf_forward(cfg, ps, g, b, 17);
  EXPECT_DOUBLE_EQ(out.y_hat.at(0), 0.5);
  EXPECT_DOUBLE_EQ(out.y_hat.at(1), 0.5);
  for (double v : out.z.data) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(Fusion, ClassProbabilitiesSumToOne) {
  ModelConfig cfg = tiny_config();
  ParamSet ps = init_mccf_params(cfg, 5, 6, 7);
  HeteroGraph g = small_graph(cfg.node_attr_dim);
  std::vector<FeatureBundle> batch = {make_bundle(cfg, {1, 2}, {1, 2}, 0, 2, 5),
                                      make_bundle(cfg, {3}, {2, 3}, 1, 4, std::nullopt),
                                      make_bundle(cfg, {}, {1, 3})};
  Tape tape;
  BoundParams bound = bind_params(tape, ps);
  ForwardContext ctx(cfg, tape, bound, g, 5);
  BatchOutput out = mccf_forward_batch(ctx, batch);
  ASSERT_EQ(out.yhat.val().shape, (std::vector<std::int64_t>{3, 2}));
  for (std::int64_t r = 0; r < 3; ++r) {
    double s = out.yhat.val().at(2 * r) + out.yhat.val().at(2 * r + 1);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  EXPECT_EQ(out.zproj.val().shape, (std::vector<std::int64_t>{3, 4}));
}

TEST(Fusion, DisabledModalitiesBecomeZeroBlocks) {
  ModelConfig cfg = tiny_config();
  ParamSet ps = init_mccf_params(cfg, 5, 6, 7);
  HeteroGraph g = small_graph(cfg.node_attr_dim);
  std::vector<FeatureBundle> batch = {make_bundle(cfg, {1, 2}, {1, 2}, 0, 2, 5)};

  Tape tape;
  BoundParams bound = bind_params(tape, ps);
  ForwardContext ctx(cfg, tape, bound, g, 5, ablation_for("no_wd"));
  BatchOutput out = mccf_forward_batch(ctx, batch);
  for (double v : out.vwd.val().data) EXPECT_DOUBLE_EQ(v, 0.0);

  Tape tape2;
  BoundParams bound2 = bind_params(tape2, ps);
  ForwardContext ctx2(cfg, tape2, bound2, g, 5, ablation_for("no_v"));
  BatchOutput out2 = mccf_forward_batch(ctx2, batch);
  for (double v : out2.vv.val().data) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(Fusion, NoBehaviorVariantNeverReadsPageIds) {
  ModelConfig cfg = tiny_config();
  ParamSet ps = init_mccf_params(cfg, 5, 6, 7);
  HeteroGraph g = small_graph(cfg.node_attr_dim);

  FeatureBundle a = make_bundle(cfg, {1, 2, 3}, {1, 2}, 0, 2, 5);
  FeatureBundle b = a;
  b.behavior_ids.assign(b.behavior_ids.size(), 4);  // different pages, same everything else

  std::vector<std::vector<double>> yhat, zproj;
  long long reads = -1;
  for (const FeatureBundle* f : {&a, &b}) {
    Tape tape;
    BoundParams bound = bind_params(tape, ps);
    ForwardContext ctx(cfg, tape, bound, g, 5, ablation_for("no_b"));
    BatchOutput out = mccf_forward_batch(ctx, {*f});
    yhat.push_back(out.yhat.val().data);
    zproj.push_back(out.zproj.val().data);
    reads = ctx.behavior_id_reads;
  }
  EXPECT_EQ(reads, 0);
  EXPECT_EQ(yhat[0], yhat[1]);
  EXPECT_EQ(zproj[0], zproj[1]);

  Tape tape;
  BoundParams bound = bind_params(tape, ps);
  ForwardContext ctx(cfg, tape, bound, g, 5);
  mccf_forward_batch(ctx, {a});
  EXPECT_EQ(ctx.behavior_id_reads, 3);
}

TEST(Fusion, AllModalitiesDisabledThrows) {
  ModelConfig cfg = tiny_config();
  ParamSet ps = init_mccf_params(cfg, 5, 6, 7);
  HeteroGraph g = small_graph(cfg.node_attr_dim);
  Tape tape;
  BoundParams bound = bind_params(tape, ps);
  ForwardContext ctx(cfg, tape, bound, g, 5, Ablation{false, false, false});
  EXPECT_THROW(mccf_forward_batch(ctx, {make_bundle(cfg, {1})}), ContractError);
  Tape tape2;
  BoundParams bound2 = bind_params(tape2, ps);
  ForwardContext ctx2(cfg, tape2, bound2, g, 5);
  EXPECT_THROW(mccf_forward_batch(ctx2, {}), ContractError);
}

TEST(Fusion, LogitsProjectionSourceRuns) {
  ModelConfig cfg = tiny_config();
  cfg.projection_source = "logits";
  ParamSet ps = init_mccf_params(cfg, 5, 6, 7);
  HeteroGraph g = small_graph(cfg.node_attr_dim);
  ModelOutput out = mccf_forward(cfg, ps, g, make_bundle(cfg, {1, 2}, {1, 2}, 0, 2, 5), 17);
  EXPECT_EQ(out.z.numel(), cfg.proj_out);
  EXPECT_TRUE(out.z.all_finite());
}

TEST(Fusion, ForwardIsDeterministic) {
  ModelConfig cfg = tiny_config();
  cfg.neighbor_cap = 2;
  ParamSet ps = init_mccf_params(cfg, 5, 6, 7);
  HeteroGraph g = small_graph(cfg.node_attr_dim);
  FeatureBundle b = make_bundle(cfg, {1, 4, 2}, {1, 2}, 0, 2, 5);

  ModelOutput o1 = mccf_forward(cfg, ps, g, b, 31);
  ModelOutput o2 = mccf_forward(cfg, ps, g, b, 31);
  EXPECT_EQ(o1.y_hat.data, o2.y_hat.data);
  EXPECT_EQ(o1.z.data, o2.z.data);
  EXPECT_EQ(o1.v_b.data, o2.v_b.data);
  EXPECT_EQ(o1.v_v.data, o2.v_v.data);
}

// ---- gradients: central differences against the tape, h = 1e-6 ----

namespace {

double run_subnet(const ModelConfig& cfg, const ParamSet& ps, const HeteroGraph& g, const FeatureBundle& bundle,
                  const std::string& which, std::unordered_map<std::string, Tensor>* grads_out = nullptr) {
  Tape tape;
  BoundParams bound = bind_params(tape, ps);
  ForwardContext ctx(cfg, tape, bound, g, 7);
  Var v = [&]() {
    if (which == "wd") return slice_row(wide_deep_rows(ctx, {bundle}), 0);
    if (which == "beh") return behavior_encode(ctx, bundle);
    return graph_encode(ctx, 0, cfg.graph_depth);
  }();
  Var obj = sum_squares(v);
  if (grads_out != nullptr) {
    tape.backward(obj.id);
    *grads_out = collect_grads(tape, bound);
  }
  return obj.val().at(0);
}

}  // namespace

TEST(ModelGrad, WideDeepMatchesFiniteDifferences) {
  ModelConfig cfg = tiny_config();
  ParamSet full = init_mccf_params(cfg, 5, 6, 21);
  ParamSet ps = subset(full, "wd.");
  HeteroGraph g = small_graph(cfg.node_attr_dim);
  FeatureBundle b = make_bundle(cfg, {1, 2});

  std::unordered_map<std::string, Tensor> grads;
  run_subnet(cfg, ps, g, b, "wd", &grads);
  auto f = [&](const ParamSet& p) { return run_subnet(cfg, p, g, b, "wd"); };
  FdResult r = finite_diff_check(f, ps, grads);
  EXPECT_LE(r.max_rel_err, 1e-5) << r.worst_param << "[" << r.worst_coord << "]";
}

TEST(ModelGrad, BehaviorEncoderMatchesFiniteDifferences) {
  ModelConfig cfg = tiny_config();
  cfg.beh_layers = 1;
  ParamSet full = init_mccf_params(cfg, 5, 6, 22);
  ParamSet ps = subset(full, "beh.");
  HeteroGraph g = small_graph(cfg.node_attr_dim);
  FeatureBundle b = make_bundle(cfg, {2, 4, 1});

  std::unordered_map<std::string, Tensor> grads;
  run_subnet(cfg, ps, g, b, "beh", &grads);
  auto f = [&](const ParamSet& p) { return run_subnet(cfg, p, g, b, "beh"); };
  FdResult r = finite_diff_check(f, ps, grads);
  EXPECT_LE(r.max_rel_err, 1e-5) << r.worst_param << "[" << r.worst_coord << "]";
}

TEST(ModelGrad, GraphEncoderMatchesFiniteDifferences) {
  ModelConfig cfg = tiny_config();
  cfg.neighbor_cap = 2;  // exercise the sampled path
  ParamSet full = init_mccf_params(cfg, 5, 6, 23);
  ParamSet ps = subset(full, "graph.");
  HeteroGraph g = small_graph(cfg.node_attr_dim);
  FeatureBundle b = make_bundle(cfg, {});

  std::unordered_map<std::string, Tensor> grads;
  run_subnet(cfg, ps, g, b, "graph", &grads);
  auto f = [&](const ParamSet& p) { return run_subnet(cfg, p, g, b, "graph"); };
  FdResult r = finite_diff_check(f, ps, grads);
  EXPECT_LE(r.max_rel_err, 1e-5) << r.worst_param << "[" << r.worst_coord << "]";
}

namespace {

double run_full_model(const ModelConfig& cfg, const ParamSet& ps, const HeteroGraph& g,
                      const std::vector<FeatureBundle>& batch,
                      std::unordered_map<std::string, Tensor>* grads_out = nullptr) {
  Tape tape;
  BoundParams bound = bind_params(tape, ps);
  ForwardContext ctx(cfg, tape, bound, g, 7);
  BatchOutput out = mccf_forward_batch(ctx, batch);
  Var obj = add(sum_squares(out.zproj), sum_squares(out.yhat));
  if (grads_out != nullptr) {
    tape.backward(obj.id);
    *grads_out = collect_grads(tape, bound);
  }
  return obj.val().at(0);
}

}  // namespace

TEST(ModelGrad, FullModelMatchesFiniteDifferences) {
  ModelConfig cfg = tiny_config();
  cfg.beh_layers = 1;
  cfg.neighbor_cap = 2;
  ParamSet ps = init_mccf_params(cfg, 5, 6, 24);
  HeteroGraph g = small_graph(cfg.node_attr_dim);
  std::vector<FeatureBundle> batch = {make_bundle(cfg, {1, 2}, {1, 2}, 0, 2, 5),
                                      make_bundle(cfg, {4}, {2, 3}, 1, 4, std::nullopt)};

  std::unordered_map<std::string, Tensor> grads;
  run_full_model(cfg, ps, g, batch, &grads);
  auto f = [&](const ParamSet& p) { return run_full_model(cfg, p, g, batch); };
  FdResult r = finite_diff_check(f, ps, grads);
  EXPECT_LE(r.max_rel_err, 1e-5) << r.worst_param << "[" << r.worst_coord << "]";
}
