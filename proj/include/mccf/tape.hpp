#pragma once

// Reverse-mode autodiff on a tape. Every operation appends a node holding the
// op kind, input node ids, the forward value, and whatever intermediates the
// backward pass needs (aux/iaux). Nodes are created in topological order, so
// the backward pass is a single reverse sweep that visits each node once.
//
// Gradient semantics follow the usual convention: backward() recomputes
// gradients of interior nodes from scratch and *accumulates* into leaf
// gradients; zero_grad() clears everything.

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mccf/common.hpp"
#include "mccf/tensor.hpp"

namespace mccf {

using NodeId = std::int32_t;

enum class OpKind {
  leaf,
  matmul,
  matmul_nt,
  add,
  add_many,
  sub,
  scale,
  concat,
  concat_cols,
  stack_rows,
  relu,
  softmax,
  mean,
  mean_many,
  l2_normalize,
  dot,
  gather_rows,
  slice_row,
  slice_cols,
  slice_range,
  drop_index,
  add_rowvec,
  layer_norm,
  logsumexp,
  pick,
  log_clamped,
  sum_squares,
  cosine,
};

inline const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::leaf: return "leaf";
    case OpKind::matmul: return "matmul";
    case OpKind::matmul_nt: return "matmul_nt";
    case OpKind::add: return "add";
    case OpKind::add_many: return "add_many";
    case OpKind::sub: return "sub";
    case OpKind::scale: return "scale";
    case OpKind::concat: return "concat";
    case OpKind::concat_cols: return "concat_cols";
    case OpKind::stack_rows: return "stack_rows";
    case OpKind::relu: return "relu";
    case OpKind::softmax: return "softmax";
    case OpKind::mean: return "mean";
    case OpKind::mean_many: return "mean_many";
    case OpKind::l2_normalize: return "l2_normalize";
    case OpKind::dot: return "dot";
    case OpKind::gather_rows: return "gather_rows";
    case OpKind::slice_row: return "slice_row";
    case OpKind::slice_cols: return "slice_cols";
    case OpKind::slice_range: return "slice_range";
    case OpKind::drop_index: return "drop_index";
    case OpKind::add_rowvec: return "add_rowvec";
    case OpKind::layer_norm: return "layer_norm";
    case OpKind::logsumexp: return "logsumexp";
    case OpKind::pick: return "pick";
    case OpKind::log_clamped: return "log_clamped";
    case OpKind::sum_squares: return "sum_squares";
    case OpKind::cosine: return "cosine";
  }
  return "?";
}

namespace detail {

using MapMat = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using CMapMat = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// C (m x n) = A (m x k) * B (k x n), optionally transposing the stored operands
// and optionally accumulating. Eigen supplies the inner kernel; everything
// around it (shapes, tape, gradients) is ours.
inline void gemm(const double* a, std::int64_t ar, std::int64_t ac, bool ta, const double* b, std::int64_t br,
                 std::int64_t bc, bool tb, double* c, bool accumulate) {
  CMapMat A(a, ar, ac);
  CMapMat B(b, br, bc);
  std::int64_t m = ta ? ac : ar;
  std::int64_t n = tb ? br : bc;
  MapMat C(c, m, n);
  if (!ta && !tb) {
    if (accumulate) C.noalias() += A * B; else C.noalias() = A * B;
  } else if (!ta && tb) {
    if (accumulate) C.noalias() += A * B.transpose(); else C.noalias() = A * B.transpose();
  } else if (ta && !tb) {
    if (accumulate) C.noalias() += A.transpose() * B; else C.noalias() = A.transpose() * B;
  } else {
    if (accumulate) C.noalias() += A.transpose() * B.transpose(); else C.noalias() = A.transpose() * B.transpose();
  }
}

}  // namespace detail

class Tape {
 public:
  struct Node {
    OpKind kind;
    std::vector<NodeId> in;
    Tensor value;
    Tensor grad;                      // allocated lazily during backward
    std::vector<double> aux;          // saved scalars/intermediates
    std::vector<std::int64_t> iaux;   // saved indices
    bool grad_live = false;
  };

  std::size_t size() const { return nodes_.size(); }

  const Node& node(NodeId id) const { return nodes_[check_id(id)]; }

  const Tensor& value(NodeId id) const { return nodes_[check_id(id)].value; }

  // Gradient of a node; reads as zeros when backward never reached it.
  const Tensor& grad(NodeId id) {
    Node& n = nodes_[check_id(id)];
    if (!n.grad_live) {
      n.grad = Tensor(n.value.shape);
      n.grad_live = true;
    }
    return n.grad;
  }

  void zero_grad() {
    for (Node& n : nodes_) {
      n.grad = Tensor();
      n.grad_live = false;
    }
  }

  // ---- node constructors ------------------------------------------------

  NodeId leaf(Tensor t) {
    if (!t.all_finite()) throw NumericError("leaf: non-finite input tensor");
    return push(OpKind::leaf, {}, std::move(t));
  }

  NodeId matmul(NodeId a, NodeId b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (A.rank() == 2 && B.rank() == 2) {
      if (A.cols() != B.rows())
        throw ContractError("matmul: inner dimensions disagree " + shape_str(A.shape) + " vs " + shape_str(B.shape));
      Tensor out({A.rows(), B.cols()});
      detail::gemm(A.data.data(), A.rows(), A.cols(), false, B.data.data(), B.rows(), B.cols(), false,
                   out.data.data(), false);
      return push(OpKind::matmul, {a, b}, std::move(out));
    }
    if (A.rank() == 2 && B.rank() == 1) {
      if (A.cols() != B.numel())
        throw ContractError("matmul: inner dimensions disagree " + shape_str(A.shape) + " vs " + shape_str(B.shape));
      Tensor out({A.rows()});
      detail::gemm(A.data.data(), A.rows(), A.cols(), false, B.data.data(), B.numel(), 1, false, out.data.data(),
                   false);
      return push(OpKind::matmul, {a, b}, std::move(out));
    }
    throw ContractError("matmul: unsupported ranks " + shape_str(A.shape) + " vs " + shape_str(B.shape));
  }

  // A (m x k) * B^T (k x n) where B is stored (n x k).
  NodeId matmul_nt(NodeId a, NodeId b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    A.require_rank(2, "matmul_nt");
    B.require_rank(2, "matmul_nt");
    if (A.cols() != B.cols())
      throw ContractError("matmul_nt: inner dimensions disagree " + shape_str(A.shape) + " vs " + shape_str(B.shape));
    Tensor out({A.rows(), B.rows()});
    detail::gemm(A.data.data(), A.rows(), A.cols(), false, B.data.data(), B.rows(), B.cols(), true, out.data.data(),
                 false);
    return push(OpKind::matmul_nt, {a, b}, std::move(out));
  }

  NodeId add(NodeId a, NodeId b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    ensure_same_shape(A, B, "add");
    Tensor out = A;
    for (std::int64_t i = 0; i < out.numel(); ++i) out.at(i) += B.at(i);
    return push(OpKind::add, {a, b}, std::move(out));
  }

  NodeId add_many(const std::vector<NodeId>& xs) {
    if (xs.empty()) throw ContractError("add_many: needs at least one input");
    Tensor out = val(xs[0]);
    for (std::size_t j = 1; j < xs.size(); ++j) {
      const Tensor& X = val(xs[j]);
      ensure_same_shape(out, X, "add_many");
      for (std::int64_t i = 0; i < out.numel(); ++i) out.at(i) += X.at(i);
    }
    return push(OpKind::add_many, xs, std::move(out));
  }

  NodeId sub(NodeId a, NodeId b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    ensure_same_shape(A, B, "sub");
    Tensor out = A;
    for (std::int64_t i = 0; i < out.numel(); ++i) out.at(i) -= B.at(i);
    return push(OpKind::sub, {a, b}, std::move(out));
  }

  NodeId scale(NodeId a, double c) {
    if (!std::isfinite(c)) throw NumericError("scale: non-finite factor");
    Tensor out = val(a);
    for (double& v : out.data) v *= c;
    return push(OpKind::scale, {a}, std::move(out), {c});
  }

  NodeId concat(const std::vector<NodeId>& xs) {
    if (xs.empty()) throw ContractError("concat: needs at least one input");
    std::int64_t total = 0;
    for (NodeId x : xs) {
      val(x).require_rank(1, "concat");
      total += val(x).numel();
    }
    Tensor out({total});
    std::int64_t off = 0;
    for (NodeId x : xs) {
      const Tensor& X = val(x);
      std::copy(X.data.begin(), X.data.end(), out.data.begin() + off);
      off += X.numel();
    }
    return push(OpKind::concat, xs, std::move(out));
  }

  NodeId concat_cols(const std::vector<NodeId>& xs) {
    if (xs.empty()) throw ContractError("concat_cols: needs at least one input");
    std::int64_t rows = val(xs[0]).rank() == 2 ? val(xs[0]).rows() : -1;
    std::int64_t total = 0;
    for (NodeId x : xs) {
      val(x).require_rank(2, "concat_cols");
      if (val(x).rows() != rows)
        throw ContractError("concat_cols: row counts disagree " + shape_str(val(xs[0]).shape) + " vs " +
                            shape_str(val(x).shape));
      total += val(x).cols();
    }
    Tensor out({rows, total});
    std::int64_t off = 0;
    for (NodeId x : xs) {
      const Tensor& X = val(x);
      for (std::int64_t r = 0; r < rows; ++r)
        std::copy(X.row_ptr(r), X.row_ptr(r) + X.cols(), out.row_ptr(r) + off);
      off += X.cols();
    }
    return push(OpKind::concat_cols, xs, std::move(out));
  }

  NodeId stack_rows(const std::vector<NodeId>& xs) {
    if (xs.empty()) throw ContractError("stack_rows: needs at least one input");
    std::int64_t width = val(xs[0]).numel();
    for (NodeId x : xs) {
      val(x).require_rank(1, "stack_rows");
      if (val(x).numel() != width)
        throw ContractError("stack_rows: widths disagree " + shape_str(val(xs[0]).shape) + " vs " +
                            shape_str(val(x).shape));
    }
    Tensor out({static_cast<std::int64_t>(xs.size()), width});
    for (std::size_t i = 0; i < xs.size(); ++i)
      std::copy(val(xs[i]).data.begin(), val(xs[i]).data.end(), out.row_ptr(static_cast<std::int64_t>(i)));
    return push(OpKind::stack_rows, xs, std::move(out));
  }

  NodeId relu(NodeId a) {
    Tensor out = val(a);
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return push(OpKind::relu, {a}, std::move(out));
  }

  // Row-wise softmax with max subtraction; rank-1 input is one row.
  NodeId softmax(NodeId a) {
    const Tensor& X = val(a);
    if (X.rank() != 1 && X.rank() != 2)
      throw ContractError("softmax: expected rank 1 or 2, got shape " + shape_str(X.shape));
    Tensor out = X;
    std::int64_t rows = X.rank() == 2 ? X.rows() : 1;
    std::int64_t cols = X.rank() == 2 ? X.cols() : X.numel();
    for (std::int64_t r = 0; r < rows; ++r) {
      double* p = out.data.data() + r * cols;
      double mx = p[0];
      for (std::int64_t c = 1; c < cols; ++c) mx = std::max(mx, p[c]);
      double sum = 0.0;
      for (std::int64_t c = 0; c < cols; ++c) {
        p[c] = std::exp(p[c] - mx);
        sum += p[c];
      }
      for (std::int64_t c = 0; c < cols; ++c) p[c] /= sum;
    }
    return push(OpKind::softmax, {a}, std::move(out));
  }

  NodeId mean(NodeId a) {
    const Tensor& X = val(a);
    double s = 0.0;
    for (double v : X.data) s += v;
    return push(OpKind::mean, {a}, Tensor::scalar(s / static_cast<double>(X.numel())));
  }

  NodeId mean_many(const std::vector<NodeId>& xs) {
    if (xs.empty()) throw ContractError("mean_many: needs at least one input");
    Tensor out = val(xs[0]);
    for (std::size_t j = 1; j < xs.size(); ++j) {
      const Tensor& X = val(xs[j]);
      ensure_same_shape(out, X, "mean_many");
      for (std::int64_t i = 0; i < out.numel(); ++i) out.at(i) += X.at(i);
    }
    double inv = 1.0 / static_cast<double>(xs.size());
    for (double& v : out.data) v *= inv;
    return push(OpKind::mean_many, xs, std::move(out));
  }

  // Guarded like torch.nn.functional.normalize: a (near-)zero row divides by
  // the floor instead of throwing, so dead-ReLU projections stay trainable.
  NodeId l2_normalize(NodeId a) {
    const Tensor& X = val(a);
    X.require_rank(1, "l2_normalize");
    double r = 0.0;
    for (double v : X.data) r += v * v;
    r = std::max(std::sqrt(r), 1e-12);
    Tensor out = X;
    for (double& v : out.data) v /= r;
    return push(OpKind::l2_normalize, {a}, std::move(out), {r});
  }

  NodeId dot(NodeId a, NodeId b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    A.require_rank(1, "dot");
    B.require_rank(1, "dot");
    ensure_same_shape(A, B, "dot");
    double s = 0.0;
    for (std::int64_t i = 0; i < A.numel(); ++i) s += A.at(i) * B.at(i);
    return push(OpKind::dot, {a, b}, Tensor::scalar(s));
  }

  NodeId gather_rows(NodeId table, const std::vector<std::int64_t>& ids) {
    const Tensor& T = val(table);
    T.require_rank(2, "gather_rows");
    if (ids.empty()) throw ContractError("gather_rows: needs at least one id");
    for (std::int64_t id : ids)
      if (id < 0 || id >= T.rows())
        throw ContractError("gather_rows: id " + std::to_string(id) + " out of range [0," + std::to_string(T.rows()) +
                            ")");
    Tensor out({static_cast<std::int64_t>(ids.size()), T.cols()});
    for (std::size_t i = 0; i < ids.size(); ++i)
      std::copy(T.row_ptr(ids[i]), T.row_ptr(ids[i]) + T.cols(), out.row_ptr(static_cast<std::int64_t>(i)));
    return push(OpKind::gather_rows, {table}, std::move(out), {}, ids);
  }

  NodeId slice_row(NodeId a, std::int64_t r) {
    const Tensor& X = val(a);
    X.require_rank(2, "slice_row");
    if (r < 0 || r >= X.rows()) throw ContractError("slice_row: row " + std::to_string(r) + " out of range");
    Tensor out({X.cols()});
    std::copy(X.row_ptr(r), X.row_ptr(r) + X.cols(), out.data.begin());
    return push(OpKind::slice_row, {a}, std::move(out), {}, {r});
  }

  NodeId slice_cols(NodeId a, std::int64_t c0, std::int64_t c1) {
    const Tensor& X = val(a);
    X.require_rank(2, "slice_cols");
    if (c0 < 0 || c1 > X.cols() || c0 >= c1) throw ContractError("slice_cols: bad column range");
    Tensor out({X.rows(), c1 - c0});
    for (std::int64_t r = 0; r < X.rows(); ++r)
      std::copy(X.row_ptr(r) + c0, X.row_ptr(r) + c1, out.row_ptr(r));
    return push(OpKind::slice_cols, {a}, std::move(out), {}, {c0, c1});
  }

  NodeId slice_range(NodeId a, std::int64_t i0, std::int64_t i1) {
    const Tensor& X = val(a);
    X.require_rank(1, "slice_range");
    if (i0 < 0 || i1 > X.numel() || i0 >= i1) throw ContractError("slice_range: bad range");
    Tensor out({i1 - i0});
    std::copy(X.data.begin() + i0, X.data.begin() + i1, out.data.begin());
    return push(OpKind::slice_range, {a}, std::move(out), {}, {i0, i1});
  }

  NodeId drop_index(NodeId a, std::int64_t i) {
    const Tensor& X = val(a);
    X.require_rank(1, "drop_index");
    if (X.numel() < 2) throw ContractError("drop_index: input too small");
    if (i < 0 || i >= X.numel()) throw ContractError("drop_index: index out of range");
    Tensor out({X.numel() - 1});
    std::copy(X.data.begin(), X.data.begin() + i, out.data.begin());
    std::copy(X.data.begin() + i + 1, X.data.end(), out.data.begin() + i);
    return push(OpKind::drop_index, {a}, std::move(out), {}, {i});
  }

  NodeId add_rowvec(NodeId a, NodeId b) {
    const Tensor& X = val(a);
    const Tensor& B = val(b);
    X.require_rank(2, "add_rowvec");
    B.require_rank(1, "add_rowvec");
    if (B.numel() != X.cols())
      throw ContractError("add_rowvec: width mismatch " + shape_str(X.shape) + " vs " + shape_str(B.shape));
    Tensor out = X;
    for (std::int64_t r = 0; r < X.rows(); ++r)
      for (std::int64_t c = 0; c < X.cols(); ++c) out.at(r, c) += B.at(c);
    return push(OpKind::add_rowvec, {a, b}, std::move(out));
  }

  // Per-row layer norm with learnable gain and bias.
  NodeId layer_norm(NodeId a, NodeId gain, NodeId bias, double eps = 1e-5) {
    const Tensor& X = val(a);
    const Tensor& G = val(gain);
    const Tensor& B = val(bias);
    X.require_rank(2, "layer_norm");
    G.require_rank(1, "layer_norm");
    B.require_rank(1, "layer_norm");
    if (G.numel() != X.cols() || B.numel() != X.cols())
      throw ContractError("layer_norm: gain/bias width mismatch " + shape_str(X.shape));
    std::int64_t m = X.rows(), n = X.cols();
    Tensor out({m, n});
    std::vector<double> aux;                       // [eps, inv_std per row, xhat...]
    aux.reserve(static_cast<std::size_t>(1 + m + m * n));
    aux.push_back(eps);
    std::vector<double> xhat(static_cast<std::size_t>(m * n));
    for (std::int64_t r = 0; r < m; ++r) {
      const double* x = X.row_ptr(r);
      double mu = 0.0;
      for (std::int64_t c = 0; c < n; ++c) mu += x[c];
      mu /= static_cast<double>(n);
      double var = 0.0;
      for (std::int64_t c = 0; c < n; ++c) var += (x[c] - mu) * (x[c] - mu);
      var /= static_cast<double>(n);
      double inv = 1.0 / std::sqrt(var + eps);
      aux.push_back(inv);
      for (std::int64_t c = 0; c < n; ++c) {
        double xh = (x[c] - mu) * inv;
        xhat[static_cast<std::size_t>(r * n + c)] = xh;
        out.at(r, c) = G.at(c) * xh + B.at(c);
      }
    }
    aux.insert(aux.end(), xhat.begin(), xhat.end());
    return push(OpKind::layer_norm, {a, gain, bias}, std::move(out), std::move(aux));
  }

  NodeId logsumexp(NodeId a) {
    const Tensor& X = val(a);
    X.require_rank(1, "logsumexp");
    double mx = X.at(0);
    for (std::int64_t i = 1; i < X.numel(); ++i) mx = std::max(mx, X.at(i));
    double s = 0.0;
    for (std::int64_t i = 0; i < X.numel(); ++i) s += std::exp(X.at(i) - mx);
    return push(OpKind::logsumexp, {a}, Tensor::scalar(mx + std::log(s)));
  }

  NodeId pick(NodeId a, std::int64_t i) {
    const Tensor& X = val(a);
    X.require_rank(1, "pick");
    if (i < 0 || i >= X.numel()) throw ContractError("pick: index out of range");
    return push(OpKind::pick, {a}, Tensor::scalar(X.at(i)), {}, {i});
  }

  NodeId log_clamped(NodeId a, double floor) {
    const Tensor& X = val(a);
    if (X.numel() != 1) throw ContractError("log_clamped: expected scalar input");
    if (!(floor > 0.0)) throw ContractError("log_clamped: floor must be positive");
    double x = X.at(0) > floor ? X.at(0) : floor;
    return push(OpKind::log_clamped, {a}, Tensor::scalar(std::log(x)), {floor});
  }

  NodeId sum_squares(NodeId a) {
    const Tensor& X = val(a);
    double s = 0.0;
    for (double v : X.data) s += v * v;
    return push(OpKind::sum_squares, {a}, Tensor::scalar(s));
  }

  NodeId cosine(NodeId a, NodeId b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    A.require_rank(1, "cosine");
    B.require_rank(1, "cosine");
    ensure_same_shape(A, B, "cosine");
    double ra = 0.0, rb = 0.0, d = 0.0;
    for (std::int64_t i = 0; i < A.numel(); ++i) {
      ra += A.at(i) * A.at(i);
      rb += B.at(i) * B.at(i);
      d += A.at(i) * B.at(i);
    }
    ra = std::sqrt(ra);
    rb = std::sqrt(rb);
    if (ra == 0.0 || rb == 0.0) throw ContractError("cosine: zero-norm input");
    double c = d / (ra * rb);
    return push(OpKind::cosine, {a, b}, Tensor::scalar(c), {ra, rb, c});
  }

  // ---- backward ----------------------------------------------------------

  void backward(NodeId root) {
    Node& r = nodes_[check_id(root)];
    if (r.value.numel() != 1)
      throw ContractError("backward: loss must be scalar, got shape " + shape_str(r.value.shape));
    // Interior gradients are recomputed per call; leaf gradients accumulate.
    for (Node& n : nodes_) {
      if (n.kind != OpKind::leaf) {
        n.grad = Tensor();
        n.grad_live = false;
      }
    }
    gbuf(root).at(0) += 1.0;
    for (NodeId id = static_cast<NodeId>(nodes_.size()) - 1; id >= 0; --id) {
      Node& n = nodes_[id];
      if (!n.grad_live || n.kind == OpKind::leaf) continue;
      backstep(n);
    }
  }

 private:
  std::vector<Node> nodes_;

  NodeId check_id(NodeId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
      throw ContractError("tape: bad node id " + std::to_string(id));
    return id;
  }

  const Tensor& val(NodeId id) const { return nodes_[check_id(id)].value; }

  Tensor& gbuf(NodeId id) {
    Node& n = nodes_[id];
    if (!n.grad_live) {
      n.grad = Tensor(n.value.shape);
      n.grad_live = true;
    }
    return n.grad;
  }

  NodeId push(OpKind kind, std::vector<NodeId> in, Tensor value, std::vector<double> aux = {},
              std::vector<std::int64_t> iaux = {}) {
    if (!value.all_finite())
      throw NumericError(std::string(op_name(kind)) + ": non-finite value produced at node " +
                         std::to_string(nodes_.size()));
    Node n;
    n.kind = kind;
    n.in = std::move(in);
    n.value = std::move(value);
    n.aux = std::move(aux);
    n.iaux = std::move(iaux);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size()) - 1;
  }

  void backstep(Node& n) {
    const Tensor& g = n.grad;
    switch (n.kind) {
      case OpKind::leaf:
        break;

      case OpKind::matmul: {
        const Tensor& A = val(n.in[0]);
        const Tensor& B = val(n.in[1]);
        Tensor& da = gbuf(n.in[0]);
        Tensor& db = gbuf(n.in[1]);
        if (B.rank() == 2) {
          // dA += G B^T ; dB += A^T G
          detail::gemm(g.data.data(), A.rows(), B.cols(), false, B.data.data(), B.rows(), B.cols(), true,
                       da.data.data(), true);
          detail::gemm(A.data.data(), A.rows(), A.cols(), true, g.data.data(), A.rows(), B.cols(), false,
                       db.data.data(), true);
        } else {
          // y = A x : dA += g x^T ; dx += A^T g
          for (std::int64_t i = 0; i < A.rows(); ++i)
            for (std::int64_t j = 0; j < A.cols(); ++j) da.at(i, j) += g.at(i) * B.at(j);
          detail::gemm(A.data.data(), A.rows(), A.cols(), true, g.data.data(), A.rows(), 1, false, db.data.data(),
                       true);
        }
        break;
      }

      case OpKind::matmul_nt: {
        const Tensor& A = val(n.in[0]);
        const Tensor& B = val(n.in[1]);
        // C = A B^T : dA += G B ; dB += G^T A
        detail::gemm(g.data.data(), A.rows(), B.rows(), false, B.data.data(), B.rows(), B.cols(), false,
                     gbuf(n.in[0]).data.data(), true);
        detail::gemm(g.data.data(), A.rows(), B.rows(), true, A.data.data(), A.rows(), A.cols(), false,
                     gbuf(n.in[1]).data.data(), true);
        break;
      }

      case OpKind::add: {
        Tensor& da = gbuf(n.in[0]);
        Tensor& db = gbuf(n.in[1]);
        for (std::int64_t i = 0; i < g.numel(); ++i) {
          da.at(i) += g.at(i);
          db.at(i) += g.at(i);
        }
        break;
      }

      case OpKind::add_many:
      case OpKind::mean_many: {
        double w = n.kind == OpKind::mean_many ? 1.0 / static_cast<double>(n.in.size()) : 1.0;
        for (NodeId x : n.in) {
          Tensor& dx = gbuf(x);
          for (std::int64_t i = 0; i < g.numel(); ++i) dx.at(i) += w * g.at(i);
        }
        break;
      }

      case OpKind::sub: {
        Tensor& da = gbuf(n.in[0]);
        Tensor& db = gbuf(n.in[1]);
        for (std::int64_t i = 0; i < g.numel(); ++i) {
          da.at(i) += g.at(i);
          db.at(i) -= g.at(i);
        }
        break;
      }

      case OpKind::scale: {
        Tensor& dx = gbuf(n.in[0]);
        double c = n.aux[0];
        for (std::int64_t i = 0; i < g.numel(); ++i) dx.at(i) += c * g.at(i);
        break;
      }

      case OpKind::concat: {
        std::int64_t off = 0;
        for (NodeId x : n.in) {
          Tensor& dx = gbuf(x);
          for (std::int64_t i = 0; i < dx.numel(); ++i) dx.at(i) += g.at(off + i);
          off += dx.numel();
        }
        break;
      }

      case OpKind::concat_cols: {
        std::int64_t off = 0;
        std::int64_t rows = n.value.rows();
        for (NodeId x : n.in) {
          Tensor& dx = gbuf(x);
          std::int64_t w = dx.cols();
          for (std::int64_t r = 0; r < rows; ++r)
            for (std::int64_t c = 0; c < w; ++c) dx.at(r, c) += g.at(r, off + c);
          off += w;
        }
        break;
      }

      case OpKind::stack_rows: {
        std::int64_t w = n.value.cols();
        for (std::size_t i = 0; i < n.in.size(); ++i) {
          Tensor& dx = gbuf(n.in[i]);
          const double* gr = g.row_ptr(static_cast<std::int64_t>(i));
          for (std::int64_t c = 0; c < w; ++c) dx.at(c) += gr[c];
        }
        break;
      }

      case OpKind::relu: {
        const Tensor& X = val(n.in[0]);
        Tensor& dx = gbuf(n.in[0]);
        // Subgradient 0 at the kink.
        for (std::int64_t i = 0; i < g.numel(); ++i)
          if (X.at(i) > 0.0) dx.at(i) += g.at(i);
        break;
      }

      case OpKind::softmax: {
        const Tensor& Y = n.value;
        Tensor& dx = gbuf(n.in[0]);
        std::int64_t rows = Y.rank() == 2 ? Y.rows() : 1;
        std::int64_t cols = Y.rank() == 2 ? Y.cols() : Y.numel();
        for (std::int64_t r = 0; r < rows; ++r) {
          const double* y = Y.data.data() + r * cols;
          const double* gr = g.data.data() + r * cols;
          double inner = 0.0;
          for (std::int64_t c = 0; c < cols; ++c) inner += gr[c] * y[c];
          double* d = dx.data.data() + r * cols;
          for (std::int64_t c = 0; c < cols; ++c) d[c] += y[c] * (gr[c] - inner);
        }
        break;
      }

      case OpKind::mean: {
        Tensor& dx = gbuf(n.in[0]);
        double w = g.at(0) / static_cast<double>(dx.numel());
        for (std::int64_t i = 0; i < dx.numel(); ++i) dx.at(i) += w;
        break;
      }

      case OpKind::l2_normalize: {
        const Tensor& Y = n.value;
        Tensor& dx = gbuf(n.in[0]);
        double r = n.aux[0];
        double inner = 0.0;
        for (std::int64_t i = 0; i < g.numel(); ++i) inner += g.at(i) * Y.at(i);
        for (std::int64_t i = 0; i < g.numel(); ++i) dx.at(i) += (g.at(i) - inner * Y.at(i)) / r;
        break;
      }

      case OpKind::dot: {
        const Tensor& A = val(n.in[0]);
        const Tensor& B = val(n.in[1]);
        Tensor& da = gbuf(n.in[0]);
        Tensor& db = gbuf(n.in[1]);
        double gv = g.at(0);
        for (std::int64_t i = 0; i < A.numel(); ++i) {
          da.at(i) += gv * B.at(i);
          db.at(i) += gv * A.at(i);
        }
        break;
      }

      case OpKind::gather_rows: {
        Tensor& dt = gbuf(n.in[0]);
        std::int64_t w = n.value.cols();
        for (std::size_t i = 0; i < n.iaux.size(); ++i) {
          double* dst = dt.row_ptr(n.iaux[i]);
          const double* src = g.row_ptr(static_cast<std::int64_t>(i));
          for (std::int64_t c = 0; c < w; ++c) dst[c] += src[c];
        }
        break;
      }

      case OpKind::slice_row: {
        Tensor& dx = gbuf(n.in[0]);
        double* dst = dx.row_ptr(n.iaux[0]);
        for (std::int64_t c = 0; c < g.numel(); ++c) dst[c] += g.at(c);
        break;
      }

      case OpKind::slice_cols: {
        Tensor& dx = gbuf(n.in[0]);
        std::int64_t c0 = n.iaux[0];
        for (std::int64_t r = 0; r < g.rows(); ++r)
          for (std::int64_t c = 0; c < g.cols(); ++c) dx.at(r, c0 + c) += g.at(r, c);
        break;
      }

      case OpKind::slice_range: {
        Tensor& dx = gbuf(n.in[0]);
        std::int64_t i0 = n.iaux[0];
        for (std::int64_t i = 0; i < g.numel(); ++i) dx.at(i0 + i) += g.at(i);
        break;
      }

      case OpKind::drop_index: {
        Tensor& dx = gbuf(n.in[0]);
        std::int64_t skip = n.iaux[0];
        for (std::int64_t i = 0; i < g.numel(); ++i) dx.at(i < skip ? i : i + 1) += g.at(i);
        break;
      }

      case OpKind::add_rowvec: {
        Tensor& dx = gbuf(n.in[0]);
        Tensor& db = gbuf(n.in[1]);
        for (std::int64_t r = 0; r < g.rows(); ++r)
          for (std::int64_t c = 0; c < g.cols(); ++c) {
            dx.at(r, c) += g.at(r, c);
            db.at(c) += g.at(r, c);
          }
        break;
      }

      case OpKind::layer_norm: {
        const Tensor& G = val(n.in[1]);
        Tensor& dx = gbuf(n.in[0]);
        Tensor& dgain = gbuf(n.in[1]);
        Tensor& dbias = gbuf(n.in[2]);
        std::int64_t m = n.value.rows(), w = n.value.cols();
        const double* inv_std = n.aux.data() + 1;
        const double* xhat = n.aux.data() + 1 + m;
        for (std::int64_t r = 0; r < m; ++r) {
          const double* gr = g.row_ptr(r);
          const double* xh = xhat + r * w;
          double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
          for (std::int64_t c = 0; c < w; ++c) {
            double dxh = gr[c] * G.at(c);
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * xh[c];
            dgain.at(c) += gr[c] * xh[c];
            dbias.at(c) += gr[c];
          }
          mean_dxhat /= static_cast<double>(w);
          mean_dxhat_xhat /= static_cast<double>(w);
          for (std::int64_t c = 0; c < w; ++c) {
            double dxh = gr[c] * G.at(c);
            dx.at(r, c) += inv_std[r] * (dxh - mean_dxhat - xh[c] * mean_dxhat_xhat);
          }
        }
        break;
      }

      case OpKind::logsumexp: {
        const Tensor& X = val(n.in[0]);
        Tensor& dx = gbuf(n.in[0]);
        double y = n.value.at(0);
        double gv = g.at(0);
        for (std::int64_t i = 0; i < X.numel(); ++i) dx.at(i) += gv * std::exp(X.at(i) - y);
        break;
      }

      case OpKind::pick: {
        gbuf(n.in[0]).at(n.iaux[0]) += g.at(0);
        break;
      }

      case OpKind::log_clamped: {
        const Tensor& X = val(n.in[0]);
        double floor = n.aux[0];
        if (X.at(0) > floor) gbuf(n.in[0]).at(0) += g.at(0) / X.at(0);
        break;
      }

      case OpKind::sum_squares: {
        const Tensor& X = val(n.in[0]);
        Tensor& dx = gbuf(n.in[0]);
        double gv = g.at(0);
        for (std::int64_t i = 0; i < X.numel(); ++i) dx.at(i) += 2.0 * gv * X.at(i);
        break;
      }

      case OpKind::cosine: {
        const Tensor& A = val(n.in[0]);
        const Tensor& B = val(n.in[1]);
        Tensor& da = gbuf(n.in[0]);
        Tensor& db = gbuf(n.in[1]);
        double ra = n.aux[0], rb = n.aux[1], c = n.aux[2];
        double gv = g.at(0);
        for (std::int64_t i = 0; i < A.numel(); ++i) {
          da.at(i) += gv * (B.at(i) / (ra * rb) - c * A.at(i) / (ra * ra));
          db.at(i) += gv * (A.at(i) / (ra * rb) - c * B.at(i) / (rb * rb));
        }
        break;
      }
    }
  }
};

// ---- Var: ergonomic handle ------------------------------------------------

struct Var {
  Tape* tape = nullptr;
  NodeId id = -1;

  Var() = default;
  Var(Tape& t, NodeId i) : tape(&t), id(i) {}

  const Tensor& val() const { return tape->value(id); }
  const Tensor& grad() const { return tape->grad(id); }
};

namespace detail {
inline Tape& same_tape(const Var& a, const Var& b) {
  if (a.tape == nullptr || a.tape != b.tape) throw ContractError("ops: operands live on different tapes");
  return *a.tape;
}
inline std::vector<NodeId> ids_of(const std::vector<Var>& xs, const char* who) {
  if (xs.empty()) throw ContractError(std::string(who) + ": needs at least one input");
  std::vector<NodeId> ids;
  ids.reserve(xs.size());
  for (const Var& v : xs) {
    if (v.tape != xs[0].tape) throw ContractError(std::string(who) + ": operands live on different tapes");
    ids.push_back(v.id);
  }
  return ids;
}
}  // namespace detail

inline Var leaf(Tape& t, Tensor v) { return {t, t.leaf(std::move(v))}; }
inline Var matmul(Var a, Var b) { return {detail::same_tape(a, b), detail::same_tape(a, b).matmul(a.id, b.id)}; }
inline Var matmul_nt(Var a, Var b) { return {detail::same_tape(a, b), detail::same_tape(a, b).matmul_nt(a.id, b.id)}; }
inline Var add(Var a, Var b) { return {detail::same_tape(a, b), detail::same_tape(a, b).add(a.id, b.id)}; }
inline Var add_many(const std::vector<Var>& xs) {
  auto ids = detail::ids_of(xs, "add_many");
  return {*xs[0].tape, xs[0].tape->add_many(ids)};
}
inline Var sub(Var a, Var b) { return {detail::same_tape(a, b), detail::same_tape(a, b).sub(a.id, b.id)}; }
inline Var scale(Var a, double c) { return {*a.tape, a.tape->scale(a.id, c)}; }
inline Var concat(const std::vector<Var>& xs) {
  auto ids = detail::ids_of(xs, "concat");
  return {*xs[0].tape, xs[0].tape->concat(ids)};
}
inline Var concat_cols(const std::vector<Var>& xs) {
  auto ids = detail::ids_of(xs, "concat_cols");
  return {*xs[0].tape, xs[0].tape->concat_cols(ids)};
}
inline Var stack_rows(const std::vector<Var>& xs) {
  auto ids = detail::ids_of(xs, "stack_rows");
  return {*xs[0].tape, xs[0].tape->stack_rows(ids)};
}
inline Var relu(Var a) { return {*a.tape, a.tape->relu(a.id)}; }
inline Var softmax(Var a) { return {*a.tape, a.tape->softmax(a.id)}; }
inline Var mean(Var a) { return {*a.tape, a.tape->mean(a.id)}; }
inline Var mean_many(const std::vector<Var>& xs) {
  auto ids = detail::ids_of(xs, "mean_many");
  return {*xs[0].tape, xs[0].tape->mean_many(ids)};
}
inline Var l2_normalize(Var a) { return {*a.tape, a.tape->l2_normalize(a.id)}; }
inline Var dot(Var a, Var b) { return {detail::same_tape(a, b), detail::same_tape(a, b).dot(a.id, b.id)}; }
inline Var gather_rows(Var t, const std::vector<std::int64_t>& ids) {
  return {*t.tape, t.tape->gather_rows(t.id, ids)};
}
inline Var slice_row(Var a, std::int64_t r) { return {*a.tape, a.tape->slice_row(a.id, r)}; }
inline Var slice_cols(Var a, std::int64_t c0, std::int64_t c1) { return {*a.tape, a.tape->slice_cols(a.id, c0, c1)}; }
inline Var slice_range(Var a, std::int64_t i0, std::int64_t i1) {
  return {*a.tape, a.tape->slice_range(a.id, i0, i1)};
}
inline Var drop_index(Var a, std::int64_t i) { return {*a.tape, a.tape->drop_index(a.id, i)}; }
inline Var add_rowvec(Var a, Var b) { return {detail::same_tape(a, b), detail::same_tape(a, b).add_rowvec(a.id, b.id)}; }
inline Var layer_norm(Var a, Var gain, Var bias, double eps = 1e-5) {
  detail::same_tape(a, gain);
  detail::same_tape(a, bias);
  return {*a.tape, a.tape->layer_norm(a.id, gain.id, bias.id, eps)};
}
inline Var logsumexp(Var a) { return {*a.tape, a.tape->logsumexp(a.id)}; }
inline Var pick(Var a, std::int64_t i) { return {*a.tape, a.tape->pick(a.id, i)}; }
inline Var log_clamped(Var a, double floor) { return {*a.tape, a.tape->log_clamped(a.id, floor)}; }
inline Var sum_squares(Var a) { return {*a.tape, a.tape->sum_squares(a.id)}; }
inline Var cosine(Var a, Var b) { return {detail::same_tape(a, b), detail::same_tape(a, b).cosine(a.id, b.id)}; }

// y = W x + b for a rank-1 x, and the row-wise version for a rank-2 X.
inline Var linear(Var x, Var W, Var b) { return add(matmul(W, x), b); }
inline Var linear_rows(Var X, Var W, Var b) { return add_rowvec(matmul_nt(X, W), b); }

}  // namespace mccf
