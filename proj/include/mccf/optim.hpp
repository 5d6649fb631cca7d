#pragma once

// Parameter registry, Xavier initialization, Adam.

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "mccf/rng.hpp"
#include "mccf/tape.hpp"
#include "mccf/tensor.hpp"

namespace mccf {

// Named parameter tensors with a stable iteration order. `decay` marks
// parameters that participate in the L2 penalty (weights yes; biases and
// layer-norm gains no).
struct ParamSet {
  std::vector<std::string> names;
  std::unordered_map<std::string, Tensor> values;
  std::unordered_map<std::string, bool> decay;

  void add(const std::string& name, Tensor t, bool with_decay) {
    if (values.count(name)) throw ContractError("ParamSet: duplicate parameter " + name);
    names.push_back(name);
    values.emplace(name, std::move(t));
    decay.emplace(name, with_decay);
  }

  bool has(const std::string& name) const { return values.count(name) != 0; }

  Tensor& at(const std::string& name) {
    auto it = values.find(name);
    if (it == values.end()) throw ContractError("ParamSet: unknown parameter " + name);
    return it->second;
  }

  const Tensor& at(const std::string& name) const {
    auto it = values.find(name);
    if (it == values.end()) throw ContractError("ParamSet: unknown parameter " + name);
    return it->second;
  }

  std::int64_t total_size() const {
    std::int64_t n = 0;
    for (const auto& name : names) n += values.at(name).numel();
    return n;
  }
};

// Parameters mounted on a tape as leaves for one forward/backward pass.
struct BoundParams {
  Tape* tape = nullptr;
  std::unordered_map<std::string, Var> vars;
  const ParamSet* source = nullptr;

  Var at(const std::string& name) const {
    auto it = vars.find(name);
    if (it == vars.end()) throw ContractError("BoundParams: unknown parameter " + name);
    return it->second;
  }
};

inline BoundParams bind_params(Tape& tape, const ParamSet& params) {
  BoundParams bound;
  bound.tape = &tape;
  bound.source = &params;
  for (const auto& name : params.names) bound.vars.emplace(name, leaf(tape, params.values.at(name)));
  return bound;
}

// Gradients for every bound parameter backward actually reached.
inline std::unordered_map<std::string, Tensor> collect_grads(Tape& tape, const BoundParams& bound) {
  std::unordered_map<std::string, Tensor> grads;
  for (const auto& name : bound.source->names) {
    const Var& v = bound.vars.at(name);
    if (tape.node(v.id).grad_live) grads.emplace(name, tape.grad(v.id));
  }
  return grads;
}

// Uniform on +-sqrt(6/(fan_in+fan_out)). Draw order is row-major, so a fixed
// seed reproduces the same tensor.
inline Tensor xavier_init(std::vector<std::int64_t> shape, std::int64_t fan_in, std::int64_t fan_out, Rng& rng) {
  if (fan_in <= 0 || fan_out <= 0)
    throw ContractError("xavier_init: fan_in and fan_out must be positive, got " + std::to_string(fan_in) + "/" +
                        std::to_string(fan_out));
  Tensor t(std::move(shape));
  double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : t.data) v = rng.uniform(-bound, bound);
  return t;
}

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::int64_t t = 0;
  std::unordered_map<std::string, Tensor> m;
  std::unordered_map<std::string, Tensor> v;
};

// One Adam step with bias correction. Parameters without a gradient entry are
// left untouched (their moments too). A parameter whose gradient history is
// identically zero never moves: m and v stay zero, so the update is exactly 0.
inline void adam_step(ParamSet& params, const std::unordered_map<std::string, Tensor>& grads, AdamState& state,
                      const AdamConfig& cfg = {}) {
  state.t += 1;
  double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (const auto& name : params.names) {
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    Tensor& theta = params.at(name);
    const Tensor& g = git->second;
    ensure_same_shape(theta, g, "adam_step");
    Tensor& m = state.m.try_emplace(name, Tensor(theta.shape)).first->second;
    Tensor& v = state.v.try_emplace(name, Tensor(theta.shape)).first->second;
    for (std::int64_t i = 0; i < theta.numel(); ++i) {
      double gi = g.at(i);
      m.at(i) = cfg.beta1 * m.at(i) + (1.0 - cfg.beta1) * gi;
      v.at(i) = cfg.beta2 * v.at(i) + (1.0 - cfg.beta2) * gi * gi;
      double mhat = m.at(i) / bc1;
      double vhat = v.at(i) / bc2;
      theta.at(i) -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
    if (!theta.all_finite()) throw NumericError("adam_step: parameter " + name + " became non-finite");
  }
}

}  // namespace mccf
