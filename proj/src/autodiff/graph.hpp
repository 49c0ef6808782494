// Copyright (c) 2026, The wiper-lab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "autodiff/tensor.hpp"

namespace wiper {

/// Handle to a node recorded in a Graph.
struct Var {
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::size_t id = npos;

  bool valid() const noexcept { return id != npos; }
  friend bool operator==(Var, Var) = default;
};

/// Scalar function and derivative applied entry-wise by column_penalty.
template <std::floating_point T>
struct EntryPenalty {
  std::function<T(T)> value;
  std::function<T(T)> derivative;
};

// Tape-based reverse-mode differentiation. Nodes are appended in evaluation
// order, so the tape itself is a topological order and backward walks it in
// reverse. Every reduction sums in a fixed index order, which keeps gradients
// bit-reproducible for identical inputs.
//
// A Graph is single-use: record a forward pass, call backward() once, discard.
template <std::floating_point T>
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) noexcept = default;
  Graph& operator=(Graph&&) noexcept = default;

  // Leaves.
  Var constant(Tensor<T> value);
  /// Borrows `value`; it must outlive the graph.
  Var constant_ref(const Tensor<T>& value);
  /// Borrows `param`; backward() accumulates dLoss/dParam into param.grad().
  Var parameter(Tensor<T>& param);

  // Layer ops.
  /// x [B, in], w [out, in], b [out] (b may be an invalid Var) -> [B, out].
  Var linear(Var x, Var w, Var b);
  /// x [B, C, H, W], w [K, C, kh, kw], b [K], stride 1 -> [B, K, H + 2p - kh + 1, W + 2p - kw + 1].
  Var conv2d(Var x, Var w, Var b, std::size_t padding);
  Var relu(Var x);
  /// 2x2 window, stride 2, trailing odd row/column dropped. Ties resolve to the first maximum.
  Var max_pool2(Var x);
  /// [B, ...] -> [B, prod(...)].
  Var flatten(Var x);
  Var add(Var a, Var b);
  Var scale(Var a, T factor);

  // Reductions to scalars.
  Var sum(Var x);
  /// sum_i coeffs[i] * x[i]; coeffs must match x's shape.
  Var weighted_sum(Var x, const Tensor<T>& coeffs);
  /// Batch mean of -log softmax(logits)[label], max-subtracted.
  Var cross_entropy(Var logits, std::span<const std::size_t> labels);
  /// Batch mean of KL(softmax(teacher/t) || softmax(student/t)).
  Var soft_kl(Var student_logits, const Tensor<T>& teacher_logits, T temperature);
  /// alpha * sum over the listed columns j and every row c of penalty(w[c, j]).
  Var column_penalty(Var w, std::span<const std::size_t> columns, const EntryPenalty<T>& penalty, T alpha);

  void backward(Var loss);

  const Tensor<T>& value(Var v) const;
  /// Node gradient after backward(); empty if the node was not reached.
  std::span<const T> grad(Var v) const;
  bool requires_grad(Var v) const;
  bool backward_done() const noexcept { return backward_done_; }
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  using BackwardFn = std::function<void(Graph&, std::size_t)>;

  struct Node {
    std::string_view op;
    std::optional<Tensor<T>> owned;
    const Tensor<T>* borrowed = nullptr;
    Tensor<T>* leaf = nullptr;
    bool requires_grad = false;
    std::vector<T> grad;
    BackwardFn backward_fn;
  };

  Var push(std::string_view op, Tensor<T> value, bool requires_grad, BackwardFn fn);
  const Node& node(Var v) const;
  std::vector<T>& grad_buffer(std::size_t id);
  std::span<const T> self_grad(std::size_t id) const { return nodes_[id].grad; }
  bool needs(Var v) const { return v.valid() && nodes_[v.id].requires_grad; }

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace wiper
