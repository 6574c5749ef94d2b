/*
 * Copyright 2026 The semifair Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Minimal tape-based reverse-mode differentiation over dense tensors.
//
// A Graph records nodes in creation order, so the node list is already a
// topological order and backward() is a single reverse sweep. Parameters
// live outside the graph (in a model bundle); a graph leaf created from a
// Parameter adds its gradient into Parameter::grad during backward().

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "semifair/tensor.hpp"

namespace semifair {

/// A named, optionally trainable tensor with an accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Tensor v, bool train = true)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()),
        trainable(train) {}

  void zero_grad() { grad = Tensor(value.shape()); }
};

namespace ad {

enum class Op : std::uint8_t {
  kLeaf,
  kParam,
  kMatmul,
  kAddBias,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kScale,
  kAddScalar,
  kRelu,
  kTanh,
  kSoftplus,
  kSigmoid,
  kSquare,
  kLog,
  kLogClipped,
  kSoftmax,
  kGradientReversal,
  kReparameterize,
  kDropout,
  kConcatCols,
  kSliceCol,
  kRowSum,
  kSum,
  kMean,
  kAbsCosine,
  kMulRowwise,
  kStopGradient,
};

const char* op_name(Op op);

enum class Activation { kRelu, kTanh, kSoftplus, kSigmoid };

class Graph;

/// Handle to a node in a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}

  const Tensor& value() const;
  /// Gradient of the last backward() root with respect to this node. Zero
  /// tensor if the node was not reached.
  Tensor grad() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Op op() const;

  Graph* graph() const { return graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf that never receives a gradient.
  Var constant(Tensor value);
  /// Leaf whose gradient is tracked (for tests and probes).
  Var variable(Tensor value);
  /// Leaf bound to a parameter; backward() adds into param.grad when the
  /// parameter is trainable. The Parameter must outlive backward().
  Var param(Parameter& p);

  /// Fills every reachable node's gradient with d(root)/d(node) and
  /// accumulates trainable parameter gradients. Root must hold one value.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }

  // Internals used by op implementations.
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;
  Var emit(Op op, Tensor value, std::vector<std::size_t> parents,
           BackwardFn fn);
  const Tensor& value_of(std::size_t id) const { return nodes_[id].value; }
  const Tensor& grad_of(std::size_t id) const { return nodes_[id].grad; }
  Op op_of(std::size_t id) const { return nodes_[id].op; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Adds `delta` into the gradient buffer of node `id` (allocating it).
  void accumulate(std::size_t id, const Tensor& delta);
  Tensor& grad_buffer(std::size_t id);

 private:
  struct Node {
    Op op = Op::kLeaf;
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    Parameter* param = nullptr;
  };

  std::vector<Node> nodes_;
};

// ---- operations ---------------------------------------------------------

Var matmul(Var a, Var b);
/// Adds a bias row vector (shape [k] or [1,k]) to every row of `a`.
Var add_bias(Var a, Var bias);
/// input·weight + bias, broadcast over rows.
Var dense(Var input, Var weight, Var bias);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// Multiplies every row of `a` elementwise by the vector `v` ([k] or [1,k]).
Var mul_rowwise(Var a, Var v);
Var div(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var square(Var a);
/// Natural log; entries must be strictly positive.
Var log(Var a);
/// log(clamp(a, 1e-12, 1)). Below the floor the gradient stays 1/a (the
/// derivative of the unclipped log); it is zero only for a <= 0.
Var log_clipped(Var a);

Var activation(Var a, Activation kind);
inline Var relu(Var a) { return activation(a, Activation::kRelu); }
inline Var tanh(Var a) { return activation(a, Activation::kTanh); }
inline Var softplus(Var a) { return activation(a, Activation::kSoftplus); }
inline Var sigmoid(Var a) { return activation(a, Activation::kSigmoid); }

/// Row-wise softmax with max subtraction. Requires at least two columns.
Var softmax(Var a);

/// Identity forward; backward multiplies the upstream gradient by -lambda.
Var gradient_reversal(Var a, double lambda);

/// h = epsilon * sigma + mu. Negative sigma entries raise DomainError.
Var reparameterize(Var mu, Var sigma, const Tensor& epsilon);

/// Inverted dropout. In training mode `mask` (1 = keep, 0 = drop) is
/// required when rate > 0; survivors are scaled by 1/(1-rate).
Var dropout(Var a, double rate, const std::optional<Tensor>& mask,
            bool training);

Var concat_cols(const std::vector<Var>& parts);
/// Column `j` as an n x 1 node.
Var slice_col(Var a, std::size_t j);
/// Sum over columns: n x k -> n x 1.
Var row_sum(Var a);
Var sum(Var a);
Var mean(Var a);
/// Per-row |a.b| / (|a||b|) as an n x 1 node. Rows where either norm is
/// zero produce 0 and increment `zero_rows` when it is non-null.
Var abs_cosine_rows(Var a, Var b, std::size_t* zero_rows = nullptr);
/// Copies the value into a new leaf with no gradient path.
Var stop_gradient(Var a);

}  // namespace ad
}  // namespace semifair
