#pragma once

// Training objectives. The contrastive loss treats consecutive row pairs
// (2m, 2m+1) of the embedding matrix as positives: two fraud clicks or two
// genuine clicks. For each direction of each pair,
//   l(i,j) = -s_ij/tau + log sum_{k != i} exp(s_ik/tau)
// where s is cosine similarity between L2-normalized rows, and the batch loss
// averages l over all 2M directed terms. Cross entropy runs on the softmax
// class output with a floor so log never sees zero.

#include <string>
#include <vector>

#include "mccf/optim.hpp"
#include "mccf/tape.hpp"

namespace mccf {

inline Var ntxent_batch_loss(Var Z, double tau) {
  Z.val().require_rank(2, "ntxent_batch_loss");
  const std::int64_t n = Z.val().rows();
  if (n < 2 || n % 2 != 0)
    throw ContractError("ntxent_batch_loss: need an even row count >= 2, got " + std::to_string(n));
  if (!(tau > 0.0)) throw ContractError("ntxent_batch_loss: tau must be positive");

  std::vector<Var> rows;
  rows.reserve(static_cast<std::size_t>(n));
  for (std::int64_t r = 0; r < n; ++r) rows.push_back(l2_normalize(slice_row(Z, r)));
  Var S = matmul_nt(stack_rows(rows), stack_rows(rows));

  std::vector<Var> terms;
  terms.reserve(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t j = i ^ 1;  // pair partner
    Var row = slice_row(S, i);
    Var lse = logsumexp(scale(drop_index(row, i), 1.0 / tau));
    terms.push_back(sub(lse, scale(pick(row, j), 1.0 / tau)));
  }
  return scale(add_many(terms), 1.0 / static_cast<double>(n));
}

inline Var cross_entropy_loss(Var yhat, const std::vector<int>& labels, double floor = 1e-12) {
  yhat.val().require_rank(2, "cross_entropy_loss");
  const std::int64_t rows = yhat.val().rows();  // copy dims: op pushes may relocate node storage
  const std::int64_t cols = yhat.val().cols();
  if (static_cast<std::int64_t>(labels.size()) != rows)
    throw ContractError("cross_entropy_loss: " + std::to_string(labels.size()) + " labels for " +
                        std::to_string(rows) + " rows");
  std::vector<Var> terms;
  terms.reserve(labels.size());
  for (std::int64_t r = 0; r < rows; ++r) {
    int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= cols) throw ContractError("cross_entropy_loss: label " + std::to_string(y) + " out of range");
    terms.push_back(log_clamped(pick(slice_row(yhat, r), y), floor));
  }
  return scale(add_many(terms), -1.0 / static_cast<double>(labels.size()));
}

// Unscaled sum of theta^2 over every parameter flagged for decay. The caller
// applies lambda/2 so the penalty enters the objective exactly once.
inline Var l2_sum(const BoundParams& bound) {
  std::vector<Var> terms;
  for (const auto& name : bound.source->names)
    if (bound.source->decay.at(name)) terms.push_back(sum_squares(bound.at(name)));
  if (terms.empty()) throw ContractError("l2_sum: no decaying parameters");
  return add_many(terms);
}

}  // namespace mccf
