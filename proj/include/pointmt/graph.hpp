#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "pointmt/geometry.hpp"
#include "pointmt/layers.hpp"
#include "pointmt/tensor.hpp"

namespace pointmt {

/// Handle to a node of a Graph.
struct Var {
  static constexpr std::size_t none = std::numeric_limits<std::size_t>::max();
  std::size_t id = none;

  bool valid() const noexcept { return id != none; }
};

/// Reverse-mode tape for one sample. Nodes are appended in evaluation order,
/// so walking them backwards is a valid topological order. Parameters are
/// referenced, never copied; their gradients live on the tape until
/// `accumulate_parameter_grads` hands them back in store order.
template <typename T>
class Graph {
 public:
  using Backward = std::function<void(Graph&, const Tensor<T>& grad_out)>;

  /// With `record == false` no backward closures are kept (inference).
  explicit Graph(bool record = true) : record_(record) {}

  Var constant(Tensor<T> value);
  Var input(Tensor<T> value);
  Var parameter(const ParameterStore<T>& store, ParamId id);

  /// Appends an op result. `backward` receives the result's gradient and
  /// accumulates into the parents; it only runs when a gradient reached the
  /// result.
  Var emit(Tensor<T> value, std::initializer_list<Var> parents, Backward backward);

  const Tensor<T>& value(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  bool has_grad(Var v) const { return !nodes_.at(v.id).grad.empty(); }

  /// Gradient of the last `backward` root with respect to `v` (zeros if none
  /// reached it).
  Tensor<T> grad(Var v) const;

  /// Mutable gradient buffer, allocated on first use.
  Tensor<T>& grad_buffer(Var v);

  bool recording() const noexcept { return record_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Seeds d(root)/d(root) = 1 and propagates. `root` must hold one value.
  void backward(Var root);

  /// Adds every parameter node's gradient into `grads` (indexed by ParamId,
  /// each tensor shaped like the store's value).
  void accumulate_parameter_grads(std::vector<Tensor<T>>& grads) const;

 private:
  struct Node {
    Tensor<T> value;
    const Tensor<T>* external = nullptr;
    Tensor<T> grad;
    Backward backward;
    std::optional<ParamId> param;
    bool requires_grad = false;
  };

  bool record_;
  std::vector<Node> nodes_;
};

namespace ops {

/// x * W (+ b). `bias` may be an invalid Var.
template <typename T>
Var linear(Graph<T>& g, Var x, Var weight, Var bias);

template <typename T>
Var linear(Graph<T>& g, Var x, const LinearHandle& layer, const ParameterStore<T>& store);

template <typename T>
Var relu(Graph<T>& g, Var x);

template <typename T>
Var add(Graph<T>& g, Var a, Var b);

/// Elementwise 0.5 * (a + b).
template <typename T>
Var average(Graph<T>& g, Var a, Var b);

template <typename T>
Var concat_cols(Graph<T>& g, Var a, Var b);

template <typename T>
Var concat_rows(Graph<T>& g, Var a, Var b);

template <typename T>
Var slice_rows(Graph<T>& g, Var x, std::size_t begin, std::size_t end);

template <typename T>
Var gather_rows(Graph<T>& g, Var x, std::vector<std::size_t> rows);

/// Row-wise layer normalization with gain/shift (epsilon 1e-5).
template <typename T>
Var layer_norm(Graph<T>& g, Var x, Var gain, Var shift);

/// (N*k) x C: row (i, j) = P[nbr(i, j)] - P[i] (+ bias). Equals a linear map
/// applied to gathered relative features when P = features * W.
template <typename T>
Var relative_rows(Graph<T>& g, Var projected, const NeighborhoodIndex& nbr, Var bias);

/// (N*k) x C -> N x C, max over each consecutive group of k rows.
template <typename T>
Var group_max(Graph<T>& g, Var x, std::size_t k);

/// N x C -> 1 x C.
template <typename T>
Var reduce_rows(Graph<T>& g, Var x, PoolMode mode);

/// Column-wise softmax over the rows of a k x C table, each column divided
/// by its own temperature (1 x C).
template <typename T>
Var softmax_columns(Graph<T>& g, Var scores, Var temperature);

/// -log softmax(logits)[label] for a 1 x K row.
template <typename T>
Var softmax_cross_entropy(Graph<T>& g, Var logits, std::size_t label);

/// sum(x .* weights) as a 1-element tensor.
template <typename T>
Var weighted_sum(Graph<T>& g, Var x, Tensor<T> weights);

}  // namespace ops

}  // namespace pointmt
