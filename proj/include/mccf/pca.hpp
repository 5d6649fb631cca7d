#pragma once

// Principal components by power iteration with deflation on the explicit
// covariance matrix. Components carry a sign convention (the coordinate of
// largest magnitude is positive) so runs are comparable across machines.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mccf/rng.hpp"
#include "mccf/tensor.hpp"

namespace mccf {

struct PcaResult {
  Tensor components;              // found x d, unit rows
  std::vector<double> variances;  // eigenvalues, non-increasing
  Tensor projected;               // n x found
  std::vector<double> mean;       // column means removed before fitting
  int found = 0;                  // components extracted before rank ran out
  bool rank_deficient = false;
};

namespace pca_detail {

inline void fix_sign(std::vector<double>& v) {
  std::size_t arg = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (std::abs(v[i]) > std::abs(v[arg])) arg = i;
  if (v[arg] < 0.0)
    for (double& x : v) x = -x;
}

inline double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace pca_detail

inline PcaResult pca_fit(const Tensor& X, int k, double tol = 1e-9, int max_iter = 10000) {
  X.require_rank(2, "pca_fit");
  const std::int64_t n = X.rows(), d = X.cols();
  if (n < 2) throw ContractError("pca_fit: need at least two rows");
  if (k < 1 || k > d) throw ContractError("pca_fit: k must lie in [1, " + std::to_string(d) + "]");

  PcaResult res;
  res.mean.assign(static_cast<std::size_t>(d), 0.0);
  for (std::int64_t r = 0; r < n; ++r)
    for (std::int64_t c = 0; c < d; ++c) res.mean[static_cast<std::size_t>(c)] += X.at(r * d + c);
  for (double& m : res.mean) m /= static_cast<double>(n);

  Tensor Xc = X;
  for (std::int64_t r = 0; r < n; ++r)
    for (std::int64_t c = 0; c < d; ++c) Xc.at(r * d + c) -= res.mean[static_cast<std::size_t>(c)];

  // covariance, deflated in place as components come out
  std::vector<double> C(static_cast<std::size_t>(d * d), 0.0);
  for (std::int64_t r = 0; r < n; ++r)
    for (std::int64_t a = 0; a < d; ++a) {
      double xa = Xc.at(r * d + a);
      if (xa == 0.0) continue;
      for (std::int64_t b = 0; b < d; ++b) C[static_cast<std::size_t>(a * d + b)] += xa * Xc.at(r * d + b);
    }
  for (double& v : C) v /= static_cast<double>(n - 1);
  double trace = 0.0;
  for (std::int64_t a = 0; a < d; ++a) trace += C[static_cast<std::size_t>(a * d + a)];
  const double floor = 1e-12 * std::max(1.0, trace);

  std::vector<std::vector<double>> comps;
  for (int j = 0; j < k; ++j) {
    Rng rng(0x5ca1ab1eu + static_cast<std::uint64_t>(j));
    std::vector<double> v(static_cast<std::size_t>(d));
    for (double& x : v) x = rng.normal();
    double nv = pca_detail::norm(v);
    for (double& x : v) x /= nv;

    std::vector<double> w(static_cast<std::size_t>(d));
    for (int it = 0; it < max_iter; ++it) {
      for (std::int64_t a = 0; a < d; ++a) {
        double s = 0.0;
        for (std::int64_t b = 0; b < d; ++b) s += C[static_cast<std::size_t>(a * d + b)] * v[static_cast<std::size_t>(b)];
        w[static_cast<std::size_t>(a)] = s;
      }
      double nw = pca_detail::norm(w);
      if (nw <= floor) break;  // direction annihilated: spectrum exhausted
      double diff_plus = 0.0, diff_minus = 0.0;
      for (std::size_t a = 0; a < v.size(); ++a) {
        double wa = w[a] / nw;
        diff_plus += (wa - v[a]) * (wa - v[a]);
        diff_minus += (wa + v[a]) * (wa + v[a]);
        v[a] = wa;
      }
      if (std::min(std::sqrt(diff_plus), std::sqrt(diff_minus)) <= tol) break;
    }

    double lambda = 0.0;  // v' C v
    for (std::int64_t a = 0; a < d; ++a) {
      double s = 0.0;
      for (std::int64_t b = 0; b < d; ++b) s += C[static_cast<std::size_t>(a * d + b)] * v[static_cast<std::size_t>(b)];
      lambda += v[static_cast<std::size_t>(a)] * s;
    }
    if (lambda <= floor) {
      res.rank_deficient = true;
      break;
    }
    pca_detail::fix_sign(v);
    res.variances.push_back(lambda);
    comps.push_back(v);
    for (std::int64_t a = 0; a < d; ++a)
      for (std::int64_t b = 0; b < d; ++b)
        C[static_cast<std::size_t>(a * d + b)] -= lambda * v[static_cast<std::size_t>(a)] * v[static_cast<std::size_t>(b)];
  }

  res.found = static_cast<int>(comps.size());
  if (res.found == 0) throw NumericError("pca_fit: no component with positive variance");
  res.components = Tensor({res.found, d});
  for (int j = 0; j < res.found; ++j)
    for (std::int64_t c = 0; c < d; ++c) res.components.at(j * d + c) = comps[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)];
  res.projected = Tensor({n, res.found});
  for (std::int64_t r = 0; r < n; ++r)
    for (int j = 0; j < res.found; ++j) {
      double s = 0.0;
      for (std::int64_t c = 0; c < d; ++c) s += Xc.at(r * d + c) * res.components.at(j * d + c);
      res.projected.at(r * res.found + j) = s;
    }
  return res;
}

}  // namespace mccf
