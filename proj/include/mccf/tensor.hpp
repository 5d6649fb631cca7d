#pragma once

// Dense row-major tensor of doubles. Plain value type; differentiation
// happens on the tape (tape.hpp), which stores these per node.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "mccf/common.hpp"

namespace mccf {

struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<double> data;

  Tensor() = default;

  explicit Tensor(std::vector<std::int64_t> s) : shape(std::move(s)) {
    data.assign(static_cast<std::size_t>(check_shape(shape)), 0.0);
  }

  Tensor(std::vector<std::int64_t> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<std::int64_t>(data.size()) != check_shape(shape))
      throw ContractError("Tensor: data size " + std::to_string(data.size()) +
                          " does not match shape " + shape_str(shape));
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  static Tensor vec(std::vector<double> d) {
    auto n = static_cast<std::int64_t>(d.size());
    return Tensor({n}, std::move(d));
  }

  static Tensor mat(std::int64_t rows, std::int64_t cols, std::vector<double> d) {
    return Tensor({rows, cols}, std::move(d));
  }

  static Tensor zeros(std::vector<std::int64_t> s) { return Tensor(std::move(s)); }

  static Tensor full(std::vector<std::int64_t> s, double v) {
    Tensor t(std::move(s));
    for (double& x : t.data) x = v;
    return t;
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }

  std::int64_t rows() const {
    require_rank(2, "rows");
    return shape[0];
  }
  std::int64_t cols() const {
    require_rank(2, "cols");
    return shape[1];
  }

  double& at(std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
  double at(std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }

  double& at(std::int64_t r, std::int64_t c) { return data[static_cast<std::size_t>(r * shape[1] + c)]; }
  double at(std::int64_t r, std::int64_t c) const { return data[static_cast<std::size_t>(r * shape[1] + c)]; }

  const double* row_ptr(std::int64_t r) const { return data.data() + r * shape[1]; }
  double* row_ptr(std::int64_t r) { return data.data() + r * shape[1]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void require_rank(int r, const char* who) const {
    if (rank() != r)
      throw ContractError(std::string(who) + ": expected rank " + std::to_string(r) + " tensor, got shape " +
                          shape_str(shape));
  }

 private:
  static std::int64_t check_shape(const std::vector<std::int64_t>& s) {
    if (s.empty()) throw ContractError("Tensor: shape must have at least one dimension");
    std::int64_t n = 1;
    for (std::int64_t d : s) {
      if (d <= 0) throw ContractError("Tensor: dimensions must be positive, got " + shape_str(s));
      n *= d;
    }
    return n;
  }
};

inline void ensure_same_shape(const Tensor& a, const Tensor& b, const char* who) {
  if (!a.same_shape(b))
    throw ContractError(std::string(who) + ": shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
}

}  // namespace mccf
