#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "mccf/metrics.hpp"
#include "mccf/rng.hpp"

using namespace mccf;

namespace {

// quadratic reference: every fraud/genuine pair scored 2/1/0
double brute_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  long long num = 0, pos = 0, neg = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    ++pos;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] == 1) continue;
      if (scores[i] > scores[j]) num += 2;
      else if (scores[i] == scores[j]) num += 1;
    }
  }
  for (int l : labels)
    if (l != 1) ++neg;
  return static_cast<double>(num) / static_cast<double>(2 * pos * neg);
}

}  // namespace

// 3 fraud hits, 1 false alarm, 2 missed frauds, 4 clean passes
TEST(Confusion, HandCountedCase) {
  std::vector<double> scores = {0.9, 0.8, 0.7, 0.6, 0.4, 0.3, 0.2, 0.1, 0.05, 0.5};
  std::vector<int> labels = {1, 1, 1, 0, 1, 1, 0, 0, 0, 0};
  ConfusionCounts c = confusion(scores, labels, 0.5);
  EXPECT_EQ(c.tp, 3);
  EXPECT_EQ(c.fp, 2);  // 0.6 and the boundary 0.5 both flag
  EXPECT_EQ(c.fn, 2);
  EXPECT_EQ(c.tn, 3);
  EXPECT_DOUBLE_EQ(precision(c), 3.0 / 5.0);
  EXPECT_DOUBLE_EQ(recall(c), 3.0 / 5.0);
  EXPECT_DOUBLE_EQ(f1_score(c), 3.0 / 5.0);  // p == r collapses the harmonic mean
}

TEST(Confusion, AsymmetricPrecisionRecall) {
  // tp 3, fp 1, fn 2, tn 0
  std::vector<double> scores = {1, 1, 1, 1, 0, 0};
  std::vector<int> labels = {1, 1, 1, 0, 1, 1};
  ConfusionCounts c = confusion(scores, labels, 0.5);
  EXPECT_EQ(c.tp, 3);
  EXPECT_EQ(c.fp, 1);
  EXPECT_EQ(c.fn, 2);
  EXPECT_DOUBLE_EQ(precision(c), 0.75);
  EXPECT_DOUBLE_EQ(recall(c), 0.6);
  EXPECT_DOUBLE_EQ(f1_score(c), 2.0 * 0.75 * 0.6 / (0.75 + 0.6));
}

TEST(Confusion, ZeroDenominatorsGiveZeroNotNan) {
  ConfusionCounts none = confusion({0.1, 0.2}, {0, 0}, 0.5);
  EXPECT_DOUBLE_EQ(precision(none), 0.0);
  EXPECT_DOUBLE_EQ(recall(none), 0.0);
  EXPECT_DOUBLE_EQ(f1_score(none), 0.0);
}

TEST(Confusion, SizeMismatchThrows) {
  EXPECT_THROW(confusion({0.1}, {0, 1}, 0.5), ContractError);
}

TEST(Auc, HandCases) {
  // fraud at 0.9 beats both genuine, fraud at 0.7 beats one: 3 of 4 pairs
  EXPECT_DOUBLE_EQ(auc_exact({0.9, 0.8, 0.7, 0.6}, {1, 0, 1, 0}), 0.75);
  EXPECT_DOUBLE_EQ(auc_exact({0.9, 0.8, 0.1}, {1, 1, 0}), 1.0);
  EXPECT_DOUBLE_EQ(auc_exact({0.1, 0.9}, {1, 0}), 0.0);
  EXPECT_DOUBLE_EQ(auc_exact({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0}), 0.5);
  // one win, one tie, two losses: (2 + 1) / (2 * 4) = 0.375
  EXPECT_DOUBLE_EQ(auc_exact({0.3, 0.3, 0.2, 0.4, 0.5}, {1, 0, 0, 0, 0}), 0.375);
}

TEST(Auc, MatchesBruteForceOnRandomInstances) {
  Rng rng(6021023);
  int run = 0;
  while (run < 200) {
    std::size_t n = 2 + static_cast<std::size_t>(rng.range(0, 58));
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    bool has_pos = false, has_neg = false;
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = static_cast<double>(rng.range(0, 7)) / 7.0;  // snapped: plenty of ties
      labels[i] = static_cast<int>(rng.range(0, 1));
      (labels[i] == 1 ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg) continue;
    ++run;
    EXPECT_DOUBLE_EQ(auc_exact(scores, labels), brute_auc(scores, labels)) << "instance " << run;
  }
}

TEST(Auc, SingleClassThrows) {
  EXPECT_THROW(auc_exact({0.1, 0.2}, {1, 1}), ContractError);
  EXPECT_THROW(auc_exact({0.1, 0.2}, {0, 0}), ContractError);
  EXPECT_THROW(auc_exact({0.1}, {0, 1}), ContractError);
}
