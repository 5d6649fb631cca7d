#pragma once

// Central-difference gradient checking. Reports, never asserts; callers decide
// what error is acceptable.

#include <string>
#include <unordered_map>
#include <utility>

#include "mccf/optim.hpp"

namespace mccf {

struct FdResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::int64_t worst_coord = -1;
};

// f re-evaluates the scalar objective from a ParamSet. For every coordinate of
// every parameter: numeric = (f(theta+h) - f(theta-h)) / (2h), compared with
// the supplied analytic gradient via |a - n| / max(1, |n|). Parameters missing
// from `analytic` are treated as having zero gradient.
template <typename F>
FdResult finite_diff_check(F&& f, ParamSet params, const std::unordered_map<std::string, Tensor>& analytic,
                           double h = 1e-6) {
  if (!(h > 0.0)) throw ContractError("finite_diff_check: h must be positive");
  FdResult res;
  for (const auto& name : params.names) {
    Tensor& theta = params.at(name);
    auto ait = analytic.find(name);
    for (std::int64_t i = 0; i < theta.numel(); ++i) {
      double keep = theta.at(i);
      theta.at(i) = keep + h;
      double fp = f(std::as_const(params));
      theta.at(i) = keep - h;
      double fm = f(std::as_const(params));
      theta.at(i) = keep;
      double numeric = (fp - fm) / (2.0 * h);
      double a = ait == analytic.end() ? 0.0 : ait->second.at(i);
      double rel = std::abs(a - numeric) / std::max(1.0, std::abs(numeric));
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst_param = name;
        res.worst_coord = i;
      }
    }
  }
  return res;
}

}  // namespace mccf
