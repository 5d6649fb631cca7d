#pragma once

// Classification metrics. AUC runs on an integer numerator (2 per win, 1 per
// tie, over all fraud/genuine pairs), so a sweep over sorted scores and the
// quadratic pair count agree bit for bit, not just approximately.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "mccf/common.hpp"

namespace mccf {

struct ConfusionCounts {
  long long tp = 0, fp = 0, fn = 0, tn = 0;
};

// label 1 means fraud; predict fraud when score >= threshold
inline ConfusionCounts confusion(const std::vector<double>& scores, const std::vector<int>& labels,
                                 double threshold) {
  if (scores.size() != labels.size())
    throw ContractError("confusion: " + std::to_string(scores.size()) + " scores vs " +
                        std::to_string(labels.size()) + " labels");
  ConfusionCounts c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    bool pred = scores[i] >= threshold;
    bool truth = labels[i] == 1;
    if (pred && truth) ++c.tp;
    else if (pred && !truth) ++c.fp;
    else if (!pred && truth) ++c.fn;
    else ++c.tn;
  }
  return c;
}

inline double precision(const ConfusionCounts& c) {
  long long d = c.tp + c.fp;
  return d == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(d);
}

inline double recall(const ConfusionCounts& c) {
  long long d = c.tp + c.fn;
  return d == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(d);
}

inline double f1_score(const ConfusionCounts& c) {
  double p = precision(c), r = recall(c);
  return (p + r) == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

// One pass over scores sorted ascending. Equal-score groups contribute their
// full cross count as ties; strictly lower genuine scores contribute wins.
inline double auc_exact(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw ContractError("auc_exact: " + std::to_string(scores.size()) + " scores vs " +
                        std::to_string(labels.size()) + " labels");
  long long pos = 0, neg = 0;
  for (int l : labels) (l == 1 ? pos : neg) += 1;
  if (pos == 0 || neg == 0) throw ContractError("auc_exact: need both classes present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  long long numerator = 0;  // 2 * wins + ties
  long long neg_below = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    long long gp = 0, gn = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? gp : gn) += 1;
      ++j;
    }
    numerator += 2 * neg_below * gp + gn * gp;
    neg_below += gn;
    i = j;
  }
  return static_cast<double>(numerator) / static_cast<double>(2 * pos * neg);
}

}  // namespace mccf
