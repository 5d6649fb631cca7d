#include <gtest/gtest.h>

#include <cmath>
#include <queue>
#include <set>

#include "mccf/generator.hpp"

using namespace mccf;

TEST(Solvers, GeometricClosedForm) {
  // Frozen from 1 - target^(1/(threshold-1)).
  EXPECT_NEAR(solve_geometric_param(0.5469, 10), 0.06485564162357171, 1e-12);
  EXPECT_NEAR(solve_geometric_param(0.1153, 10), 0.21339117961659915, 1e-12);
  EXPECT_NEAR(solve_geometric_param(0.2186, 3), 0.5324532108975617, 1e-12);
  EXPECT_NEAR(solve_geometric_param(0.0631, 3), 0.7488028662583905, 1e-12);
}

TEST(Solvers, GeometricInverseCheck) {
  // Independent of the closed form: plug p back into the tail formula.
  const double p = solve_geometric_param(0.5469, 10);
  EXPECT_NEAR(std::pow(1.0 - p, 9), 0.5469, 1e-12);
  const double q = solve_geometric_param(0.0631, 3);
  EXPECT_NEAR(std::pow(1.0 - q, 2), 0.0631, 1e-12);
}

TEST(Solvers, GeometricLimitAndErrors) {
  EXPECT_LT(solve_geometric_param(0.999999, 10), 2e-7);  // target -> 1 gives p -> 0
  EXPECT_THROW(solve_geometric_param(0.0, 10), ContractError);
  EXPECT_THROW(solve_geometric_param(1.0, 10), ContractError);
  EXPECT_THROW(solve_geometric_param(-0.1, 10), ContractError);
  EXPECT_THROW(solve_geometric_param(0.5, 1), ContractError);
}

TEST(Solvers, ExponentialClosedForm) {
  EXPECT_NEAR(solve_exponential_rate(0.4081, 900.0), 0.0005826861969838419, 1e-15);
  EXPECT_NEAR(solve_exponential_rate(0.2478, 900.0), 0.0003163922588287789, 1e-15);
  // Unit case: cdf 1 - e^(-1) at t = 1 gives rate exactly 1.
  EXPECT_NEAR(solve_exponential_rate(1.0 - std::exp(-1.0), 1.0), 1.0, 1e-12);
  EXPECT_THROW(solve_exponential_rate(0.0, 900.0), ContractError);
  EXPECT_THROW(solve_exponential_rate(1.0, 900.0), ContractError);
  EXPECT_THROW(solve_exponential_rate(0.5, 0.0), ContractError);
}

namespace {

ClickRecord stub_record(const std::string& id, const std::string& ip, const std::string& ck,
                        long long age, const std::string& page, Label label) {
  ClickRecord r;
  r.click_id = id;
  r.click_time = 100000;
  r.ip = ip;
  r.cookie_id = ck;
  r.advertiser_id = "adv_00";
  r.keyword_id = "kw_000";
  r.abs_pos = 1;
  r.cd_time = 1.0;
  r.cookie_time = 100000 - age;
  r.pages = {page};
  r.wide = {0.0};
  r.label = label;
  return r;
}

}  // namespace

TEST(ValidateStats, HandCountedFractionsExact) {
  std::vector<ClickRecord> recs;
  // Fraud: cookie ckA clicks ipA 10 times and ipB once; ckB clicks ipB twice.
  // Ages: exactly 3 of the 13 fraud intervals are <= 900.
  // Pages: 7 Homepage, 4 Detail, 1 Search, 1 Cart. Top-3 by (count desc,
  // name asc) = {Homepage, Detail, Cart}, so the share is 12/13.
  for (int i = 0; i < 10; ++i) {
    long long age = (i < 2) ? 500 : 5000;
    std::string page = (i < 7) ? "Homepage" : "Detail";
    recs.push_back(stub_record("f" + std::to_string(i), "ipA", "ckA", age, page, Label::fraud));
  }
  recs.push_back(stub_record("f10", "ipB", "ckA", 900, "Detail", Label::fraud));
  recs.push_back(stub_record("f11", "ipB", "ckB", 5000, "Search", Label::fraud));
  recs.push_back(stub_record("f12", "ipB", "ckB", 5000, "Cart", Label::fraud));
  // Genuine: one click, age 100, page List.
  recs.push_back(stub_record("g0", "ipC", "ckC", 100, "List", Label::genuine));

  HeteroGraph g(1, 0);
  int ipA = g.add_node(NodeType::ip, "ipA", {0.0});
  int ipB = g.add_node(NodeType::ip, "ipB", {0.0});
  int ipC = g.add_node(NodeType::ip, "ipC", {0.0});
  int ckA = g.add_node(NodeType::cookie, "ckA", {0.0});
  int ckB = g.add_node(NodeType::cookie, "ckB", {0.0});
  int ckC = g.add_node(NodeType::cookie, "ckC", {0.0});
  int dvA = g.add_node(NodeType::device, "dvA", {0.0});
  g.add_edge(ckA, ipA, "click", {});
  g.add_edge(ckA, ipB, "click", {});
  g.add_edge(ckA, dvA, "uses", {});
  g.add_edge(ckB, ipB, "click", {});
  g.add_edge(ckC, ipC, "click", {});

  StatReport rep = validate_statistics(recs, g);
  ASSERT_TRUE(rep.fraud.present);
  ASSERT_TRUE(rep.genuine.present);
  EXPECT_EQ(rep.fraud.n_clicks, 13);
  EXPECT_EQ(rep.fraud.n_ips, 2);
  EXPECT_EQ(rep.fraud.n_cookies, 2);
  EXPECT_DOUBLE_EQ(rep.fraud.ip_tail_p10, 0.5);        // ipA has 10, ipB has 3
  EXPECT_DOUBLE_EQ(rep.fraud.age_cdf_900, 3.0 / 13.0);
  EXPECT_DOUBLE_EQ(rep.fraud.top3_share, 12.0 / 13.0);
  EXPECT_DOUBLE_EQ(rep.fraud.media_tail_p3, 0.5);      // ckA degree 3, ckB degree 1
  EXPECT_DOUBLE_EQ(rep.genuine.ip_tail_p10, 0.0);
  EXPECT_DOUBLE_EQ(rep.genuine.age_cdf_900, 1.0);
  EXPECT_DOUBLE_EQ(rep.genuine.top3_share, 1.0);
  EXPECT_DOUBLE_EQ(rep.genuine.media_tail_p3, 0.0);
  EXPECT_DOUBLE_EQ(rep.positive_rate, 13.0 / 14.0);
}

TEST(ValidateStats, SingleClassMarksOtherAbsent) {
  GenConfig cfg;
  cfg.n_clicks = 200;
  cfg.positive_rate = 0.0;
  cfg.seed = 3;
  GenResult res = generate_dataset(cfg);
  StatReport rep = validate_statistics(res.records, res.graph);
  EXPECT_FALSE(rep.fraud.present);
  ASSERT_TRUE(rep.genuine.present);
  EXPECT_EQ(rep.genuine.n_clicks, 200);
  EXPECT_DOUBLE_EQ(rep.positive_rate, 0.0);
}

TEST(Generator, PositiveCountIsExact) {
  GenConfig cfg;
  cfg.n_clicks = 1000;
  cfg.seed = 11;
  GenResult res = generate_dataset(cfg);
  ASSERT_EQ(res.records.size(), 1000u);
  long long fraud = 0;
  for (const auto& r : res.records) {
    ASSERT_NE(r.label, Label::unlabeled);
    if (r.label == Label::fraud) ++fraud;
  }
  EXPECT_EQ(fraud, 109);  // round(0.1089 * 1000)
}

TEST(Generator, DeterministicBytesAcrossRuns) {
  GenConfig cfg;
  cfg.n_clicks = 600;
  cfg.seed = 7;
  GenResult a = generate_dataset(cfg);
  GenResult b = generate_dataset(cfg);
  EXPECT_EQ(serialize_click_records(a.records), serialize_click_records(b.records));
  EXPECT_EQ(a.graph.nodes_csv(), b.graph.nodes_csv());
  EXPECT_EQ(a.graph.edges_csv(), b.graph.edges_csv());
  cfg.seed = 8;
  GenResult c = generate_dataset(cfg);
  EXPECT_NE(serialize_click_records(a.records), serialize_click_records(c.records));
}

TEST(Generator, RecordsAreChronologicalWithSequentialIds) {
  GenConfig cfg;
  cfg.n_clicks = 500;
  cfg.seed = 5;
  GenResult res = generate_dataset(cfg);
  for (std::size_t i = 0; i < res.records.size(); ++i) {
    if (i > 0) EXPECT_GE(res.records[i].click_time, res.records[i - 1].click_time);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "c%07zu", i);
    EXPECT_EQ(res.records[i].click_id, buf);
  }
}

TEST(Generator, GeneratedRecordsRoundTrip) {
  GenConfig cfg;
  cfg.n_clicks = 300;
  cfg.seed = 9;
  GenResult res = generate_dataset(cfg);
  std::string text = serialize_click_records(res.records);
  std::vector<ClickRecord> back = parse_click_records(text, cfg.wide_dim);
  EXPECT_EQ(back, res.records);
  HeteroGraph g2 = HeteroGraph::parse(res.graph.nodes_csv(), res.graph.edges_csv());
  EXPECT_EQ(g2.nodes_csv(), res.graph.nodes_csv());
  EXPECT_EQ(g2.edges_csv(), res.graph.edges_csv());
}

TEST(Generator, RingsInduceConnectedMediaSubgraphs) {
  GenConfig cfg;
  cfg.n_clicks = 4000;
  cfg.seed = 13;
  GenResult res = generate_dataset(cfg);
  ASSERT_GT(res.rings.size(), 5u);
  for (const auto& ring : res.rings) {
    if (ring.size() < 2) continue;
    std::set<std::string> want(ring.begin(), ring.end());
    std::set<int> seen_nodes;
    std::queue<int> q;
    int start = *res.graph.find(NodeType::cookie, ring[0]);
    q.push(start);
    seen_nodes.insert(start);
    std::size_t reached = 1;
    while (!q.empty()) {
      int ck = q.front();
      q.pop();
      for (int media : res.graph.neighbors(ck)) {
        if (!seen_nodes.insert(media).second) continue;
        for (int other : res.graph.neighbors(media)) {
          if (res.graph.type_of(other) != NodeType::cookie) continue;
          if (!want.count(res.graph.id_of(other))) continue;
          if (seen_nodes.insert(other).second) {
            ++reached;
            q.push(other);
          }
        }
      }
    }
    EXPECT_EQ(reached, ring.size());
  }
}

TEST(Generator, DevicePresenceVariesAndMediaDegreesReachThree) {
  GenConfig cfg;
  cfg.n_clicks = 2000;
  cfg.seed = 17;
  GenResult res = generate_dataset(cfg);
  bool some_device = false, some_absent = false;
  for (const auto& r : res.records) {
    (r.device_id ? some_device : some_absent) = true;
  }
  EXPECT_TRUE(some_device);
  EXPECT_TRUE(some_absent);
  int heavy = 0;
  for (int i = 0; i < static_cast<int>(res.graph.node_count()); ++i)
    if (res.graph.type_of(i) == NodeType::cookie && res.graph.degree(i) >= 3) ++heavy;
  EXPECT_GT(heavy, 0);
}

TEST(Generator, LabelWordsAppearOnlyInLabelField) {
  GenConfig cfg;
  cfg.n_clicks = 400;
  cfg.seed = 19;
  GenResult res = generate_dataset(cfg);
  std::string text = serialize_click_records(res.records);
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    std::string line = text.substr(start, end - start);
    for (const char* tag : {"\"label\":\"fraud\"", "\"label\":\"genuine\""}) {
      std::size_t at = line.find(tag);
      if (at != std::string::npos) line.erase(at, std::string(tag).size());
    }
    EXPECT_EQ(line.find("fraud"), std::string::npos) << line;
    EXPECT_EQ(line.find("genuine"), std::string::npos) << line;
    start = end + 1;
  }
  EXPECT_EQ(res.graph.nodes_csv().find("fraud"), std::string::npos);
  EXPECT_EQ(res.graph.edges_csv().find("fraud"), std::string::npos);
}

TEST(Generator, InfeasibleConfigsRejected) {
  GenConfig cfg;
  cfg.n_clicks = 10;
  cfg.positive_rate = 0.1;  // one fraud click cannot host a ring of two
  EXPECT_THROW(generate_dataset(cfg), ConfigError);

  GenConfig bad = GenConfig{};
  bad.n_clicks = 0;
  EXPECT_THROW(generate_dataset(bad), ConfigError);

  GenConfig badt = GenConfig{};
  badt.targets.fraud_tail_p10 = 1.5;
  EXPECT_THROW(generate_dataset(badt), ConfigError);

  GenConfig badr = GenConfig{};
  badr.ring_min = 5;
  badr.ring_max = 2;
  EXPECT_THROW(generate_dataset(badr), ConfigError);
}

TEST(Generator, CalibrationHitsAllTargetsAtScale) {
  GenConfig cfg;  // defaults: n = 50000, positive rate 0.1089
  cfg.seed = 1;
  GenResult res = generate_dataset(cfg);
  StatReport rep = validate_statistics(res.records, res.graph);

  EXPECT_NEAR(rep.positive_rate, 0.1089, 1e-9);  // exact by construction
  ASSERT_TRUE(rep.fraud.present);
  ASSERT_TRUE(rep.genuine.present);
  EXPECT_NEAR(rep.fraud.ip_tail_p10, 0.5469, 0.02);
  EXPECT_NEAR(rep.genuine.ip_tail_p10, 0.1153, 0.02);
  EXPECT_NEAR(rep.fraud.age_cdf_900, 0.4081, 0.02);
  EXPECT_NEAR(rep.genuine.age_cdf_900, 0.2478, 0.02);
  EXPECT_NEAR(rep.fraud.media_tail_p3, 0.2186, 0.02);
  EXPECT_NEAR(rep.genuine.media_tail_p3, 0.0631, 0.02);
  EXPECT_NEAR(rep.fraud.top3_share, 0.998, 0.02);
  EXPECT_GE(rep.fraud.top3_share, 0.99);
}
