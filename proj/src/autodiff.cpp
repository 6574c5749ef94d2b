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

#include "semifair/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace semifair::ad {

namespace {

constexpr double kLogFloor = 1e-12;
constexpr double kGradFloor = 1e-300;

void require_same_graph(Var a, Var b, const char* what) {
  if (a.graph() != b.graph()) {
    throw std::invalid_argument(std::string(what) +
                                ": operands belong to different graphs");
  }
}

void require_same_shape(Var a, Var b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shape mismatch " +
                         shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

/// Output tensor with a's shape, ready to be filled through mat().
Tensor like(const Tensor& a) { return Tensor(a.shape()); }

// Elementwise unary op helper: value = f(x), dx = g * df(x, y).
template <typename Fwd, typename Deriv>
Var unary(Var a, Op op, Fwd fwd, Deriv deriv) {
  const Tensor& x = a.value();
  Tensor out = like(x);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
  const std::size_t pa = a.id();
  return a.graph()->emit(
      op, std::move(out), {pa}, [pa, deriv](Graph& g, std::size_t self) {
        if (!g.requires_grad(pa)) return;
        const Tensor& xv = g.value_of(pa);
        const Tensor& yv = g.value_of(self);
        const Tensor& up = g.grad_of(self);
        Tensor d = like(xv);
        for (std::size_t i = 0; i < xv.size(); ++i) {
          d[i] = up[i] * deriv(xv[i], yv[i]);
        }
        g.accumulate(pa, d);
      });
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kParam: return "param";
    case Op::kMatmul: return "matmul";
    case Op::kAddBias: return "add_bias";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kDiv: return "div";
    case Op::kScale: return "scale";
    case Op::kAddScalar: return "add_scalar";
    case Op::kRelu: return "relu";
    case Op::kTanh: return "tanh";
    case Op::kSoftplus: return "softplus";
    case Op::kSigmoid: return "sigmoid";
    case Op::kSquare: return "square";
    case Op::kLog: return "log";
    case Op::kLogClipped: return "log_clipped";
    case Op::kSoftmax: return "softmax";
    case Op::kGradientReversal: return "gradient_reversal";
    case Op::kReparameterize: return "reparameterize";
    case Op::kDropout: return "dropout";
    case Op::kConcatCols: return "concat_cols";
    case Op::kSliceCol: return "slice_col";
    case Op::kRowSum: return "row_sum";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kAbsCosine: return "abs_cosine_rows";
    case Op::kMulRowwise: return "mul_rowwise";
    case Op::kStopGradient: return "stop_gradient";
  }
  return "unknown";
}

// ---- Var / Graph --------------------------------------------------------

const Tensor& Var::value() const { return graph_->value_of(id_); }

Tensor Var::grad() const {
  const Tensor& g = graph_->grad_of(id_);
  if (g.shape() == value().shape()) return g;
  return Tensor(value().shape());
}

Op Var::op() const { return graph_->op_of(id_); }

Var Graph::constant(Tensor value) {
  value.require_finite("constant");
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::variable(Tensor value) {
  value.require_finite("variable");
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::param(Parameter& p) {
  Node n;
  n.op = Op::kParam;
  n.value = p.value;
  n.requires_grad = p.trainable;
  n.param = &p;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::emit(Op op, Tensor value, std::vector<std::size_t> parents,
                BackwardFn fn) {
  value.require_finite(op_name(op));
  Node n;
  n.op = op;
  n.value = std::move(value);
  n.requires_grad = std::any_of(parents.begin(), parents.end(),
                                [&](std::size_t p) { return nodes_[p].requires_grad; });
  n.parents = std::move(parents);
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Tensor& Graph::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

void Graph::accumulate(std::size_t id, const Tensor& delta) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (!n.has_grad) {
    n.grad = delta;
    n.has_grad = true;
    return;
  }
  n.grad.mat() += delta.mat();
}

void Graph::backward(Var root) {
  if (root.graph() != this) {
    throw std::invalid_argument("backward: root belongs to another graph");
  }
  if (root.value().size() != 1) {
    throw DimensionError("backward requires a scalar root, got shape " +
                         shape_to_string(root.shape()));
  }
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
  Tensor& seed = grad_buffer(root.id());
  seed.fill(1.0);
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.requires_grad) continue;
    if (n.backward) n.backward(*this, i);
    if (n.param != nullptr && n.param->trainable) {
      if (n.param->grad.shape() != n.value.shape()) n.param->zero_grad();
      n.param->grad.mat() += nodes_[i].grad.mat();
    }
  }
}

// ---- linear algebra -----------------------------------------------------

Var matmul(Var a, Var b) {
  require_same_graph(a, b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows()) {
    throw DimensionError("matmul: shapes " + shape_to_string(av.shape()) +
                         " and " + shape_to_string(bv.shape()) +
                         " do not conform");
  }
  Tensor out({av.rows(), bv.cols()});
  out.mat().noalias() = av.mat() * bv.mat();
  const std::size_t pa = a.id(), pb = b.id();
  return a.graph()->emit(Op::kMatmul, std::move(out), {pa, pb},
                         [pa, pb](Graph& g, std::size_t self) {
                           const Tensor& up = g.grad_of(self);
                           if (g.requires_grad(pa)) {
                             Tensor da = like(g.value_of(pa));
                             da.mat().noalias() =
                                 up.mat() * g.value_of(pb).mat().transpose();
                             g.accumulate(pa, da);
                           }
                           if (g.requires_grad(pb)) {
                             Tensor db = like(g.value_of(pb));
                             db.mat().noalias() =
                                 g.value_of(pa).mat().transpose() * up.mat();
                             g.accumulate(pb, db);
                           }
                         });
}

Var add_bias(Var a, Var bias) {
  require_same_graph(a, bias, "add_bias");
  const Tensor& av = a.value();
  const Tensor& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != av.cols() || av.rank() != 2) {
    throw DimensionError("add_bias: input " + shape_to_string(av.shape()) +
                         " incompatible with bias " +
                         shape_to_string(bv.shape()));
  }
  Tensor out = av;
  out.mat().rowwise() += bv.mat().row(0);
  const std::size_t pa = a.id(), pb = bias.id();
  return a.graph()->emit(Op::kAddBias, std::move(out), {pa, pb},
                         [pa, pb](Graph& g, std::size_t self) {
                           const Tensor& up = g.grad_of(self);
                           if (g.requires_grad(pa)) g.accumulate(pa, up);
                           if (g.requires_grad(pb)) {
                             Tensor db = like(g.value_of(pb));
                             db.mat().row(0) = up.mat().colwise().sum();
                             g.accumulate(pb, db);
                           }
                         });
}

Var dense(Var input, Var weight, Var bias) {
  const Tensor& xv = input.value();
  const Tensor& wv = weight.value();
  if (xv.rank() != 2 || wv.rank() != 2 || xv.cols() != wv.rows() ||
      bias.value().size() != wv.cols()) {
    throw DimensionError("dense: input " + shape_to_string(xv.shape()) +
                         ", weight " + shape_to_string(wv.shape()) +
                         ", bias " + shape_to_string(bias.shape()));
  }
  return add_bias(matmul(input, weight), bias);
}

// ---- elementwise binary -------------------------------------------------

Var add(Var a, Var b) {
  require_same_graph(a, b, "add");
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  out.mat() += b.value().mat();
  const std::size_t pa = a.id(), pb = b.id();
  return a.graph()->emit(Op::kAdd, std::move(out), {pa, pb},
                         [pa, pb](Graph& g, std::size_t self) {
                           const Tensor& up = g.grad_of(self);
                           g.accumulate(pa, up);
                           g.accumulate(pb, up);
                         });
}

Var sub(Var a, Var b) {
  require_same_graph(a, b, "sub");
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  out.mat() -= b.value().mat();
  const std::size_t pa = a.id(), pb = b.id();
  return a.graph()->emit(Op::kSub, std::move(out), {pa, pb},
                         [pa, pb](Graph& g, std::size_t self) {
                           const Tensor& up = g.grad_of(self);
                           g.accumulate(pa, up);
                           if (g.requires_grad(pb)) {
                             Tensor d = like(up);
                             d.mat() = -up.mat();
                             g.accumulate(pb, d);
                           }
                         });
}

Var mul(Var a, Var b) {
  require_same_graph(a, b, "mul");
  require_same_shape(a, b, "mul");
  Tensor out = like(a.value());
  out.mat() = a.value().mat().cwiseProduct(b.value().mat());
  const std::size_t pa = a.id(), pb = b.id();
  return a.graph()->emit(
      Op::kMul, std::move(out), {pa, pb}, [pa, pb](Graph& g, std::size_t self) {
        const Tensor& up = g.grad_of(self);
        if (g.requires_grad(pa)) {
          Tensor d = like(up);
          d.mat() = up.mat().cwiseProduct(g.value_of(pb).mat());
          g.accumulate(pa, d);
        }
        if (g.requires_grad(pb)) {
          Tensor d = like(up);
          d.mat() = up.mat().cwiseProduct(g.value_of(pa).mat());
          g.accumulate(pb, d);
        }
      });
}

Var mul_rowwise(Var a, Var v) {
  require_same_graph(a, v, "mul_rowwise");
  const Tensor& av = a.value();
  const Tensor& vv = v.value();
  if (av.rank() != 2 || vv.rows() != 1 || vv.cols() != av.cols()) {
    throw DimensionError("mul_rowwise: input " + shape_to_string(av.shape()) +
                         " incompatible with vector " + shape_to_string(vv.shape()));
  }
  Tensor out = av;
  out.mat().array().rowwise() *= vv.mat().row(0).array();
  const std::size_t pa = a.id(), pv = v.id();
  return a.graph()->emit(
      Op::kMulRowwise, std::move(out), {pa, pv}, [pa, pv](Graph& g, std::size_t self) {
        const Tensor& up = g.grad_of(self);
        if (g.requires_grad(pa)) {
          Tensor d = up;
          d.mat().array().rowwise() *= g.value_of(pv).mat().row(0).array();
          g.accumulate(pa, d);
        }
        if (g.requires_grad(pv)) {
          Tensor d = like(g.value_of(pv));
          d.mat().row(0) = up.mat().cwiseProduct(g.value_of(pa).mat()).colwise().sum();
          g.accumulate(pv, d);
        }
      });
}

Var div(Var a, Var b) {
  require_same_graph(a, b, "div");
  require_same_shape(a, b, "div");
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < bv.size(); ++i) {
    if (bv[i] == 0.0) throw DomainError("div: division by zero");
  }
  Tensor out = like(a.value());
  out.mat() = a.value().mat().cwiseQuotient(bv.mat());
  const std::size_t pa = a.id(), pb = b.id();
  return a.graph()->emit(
      Op::kDiv, std::move(out), {pa, pb}, [pa, pb](Graph& g, std::size_t self) {
        const Tensor& up = g.grad_of(self);
        const Tensor& bvv = g.value_of(pb);
        if (g.requires_grad(pa)) {
          Tensor d = like(up);
          d.mat() = up.mat().cwiseQuotient(bvv.mat());
          g.accumulate(pa, d);
        }
        if (g.requires_grad(pb)) {
          Tensor d = like(up);
          d.mat() = -up.mat()
                         .cwiseProduct(g.value_of(self).mat())
                         .cwiseQuotient(bvv.mat());
          g.accumulate(pb, d);
        }
      });
}

Var scale(Var a, double c) {
  Tensor out = a.value();
  out.mat() *= c;
  const std::size_t pa = a.id();
  return a.graph()->emit(Op::kScale, std::move(out), {pa},
                         [pa, c](Graph& g, std::size_t self) {
                           Tensor d = g.grad_of(self);
                           d.mat() *= c;
                           g.accumulate(pa, d);
                         });
}

Var add_scalar(Var a, double c) {
  Tensor out = a.value();
  out.mat().array() += c;
  const std::size_t pa = a.id();
  return a.graph()->emit(Op::kAddScalar, std::move(out), {pa},
                         [pa](Graph& g, std::size_t self) {
                           g.accumulate(pa, g.grad_of(self));
                         });
}

// ---- elementwise unary --------------------------------------------------

Var square(Var a) {
  return unary(
      a, Op::kSquare, [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

Var log(Var a) {
  const Tensor& x = a.value();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0)) throw DomainError("log: nonpositive argument");
  }
  return unary(
      a, Op::kLog, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Var log_clipped(Var a) {
  return unary(
      a, Op::kLogClipped,
      [](double v) { return std::log(std::clamp(v, kLogFloor, 1.0)); },
      // The clip bounds the value only. Below the floor the gradient is that
      // of the unclipped log, so a confidently wrong classifier still gets a
      // signal instead of freezing.
      // The divisor is floored so an underflowed softmax entry cannot turn
      // the product with its (tiny) Jacobian into inf * 0.
      [](double v, double) {
        if (v <= 0.0) return 0.0;
        return 1.0 / std::clamp(v, kGradFloor, 1.0);
      });
}

Var activation(Var a, Activation kind) {
  switch (kind) {
    case Activation::kRelu:
      return unary(
          a, Op::kRelu, [](double x) { return x > 0.0 ? x : 0.0; },
          [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
    case Activation::kTanh:
      return unary(
          a, Op::kTanh, [](double x) { return std::tanh(x); },
          [](double, double y) { return 1.0 - y * y; });
    case Activation::kSoftplus:
      // log(1 + e^x) evaluated without overflow for large |x|.
      return unary(
          a, Op::kSoftplus,
          [](double x) {
            return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
          },
          [](double x, double) {
            return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                            : std::exp(x) / (1.0 + std::exp(x));
          });
    case Activation::kSigmoid:
      return unary(
          a, Op::kSigmoid,
          [](double x) {
            return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                            : std::exp(x) / (1.0 + std::exp(x));
          },
          [](double, double y) { return y * (1.0 - y); });
  }
  throw std::invalid_argument("activation: unknown kind");
}

Var softmax(Var a) {
  const Tensor& x = a.value();
  if (x.cols() < 2) {
    throw DimensionError("softmax needs at least two columns, got " +
                         shape_to_string(x.shape()));
  }
  Tensor out = like(x);
  const std::size_t n = x.rows(), k = x.cols();
  for (std::size_t r = 0; r < n; ++r) {
    double mx = x.at(r, 0);
    for (std::size_t c = 1; c < k; ++c) mx = std::max(mx, x.at(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      out.at(r, c) = std::exp(x.at(r, c) - mx);
      z += out.at(r, c);
    }
    for (std::size_t c = 0; c < k; ++c) out.at(r, c) /= z;
  }
  const std::size_t pa = a.id();
  return a.graph()->emit(
      Op::kSoftmax, std::move(out), {pa}, [pa](Graph& g, std::size_t self) {
        const Tensor& y = g.value_of(self);
        const Tensor& up = g.grad_of(self);
        Tensor d = like(y);
        // dx = y * (up - sum(up * y)) per row
        for (std::size_t r = 0; r < y.rows(); ++r) {
          double dot = 0.0;
          for (std::size_t c = 0; c < y.cols(); ++c) dot += up.at(r, c) * y.at(r, c);
          for (std::size_t c = 0; c < y.cols(); ++c) {
            d.at(r, c) = y.at(r, c) * (up.at(r, c) - dot);
          }
        }
        g.accumulate(pa, d);
      });
}

Var gradient_reversal(Var a, double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw DomainError("gradient_reversal: lambda must be finite and >= 0, got " +
                      std::to_string(lambda));
  }
  const std::size_t pa = a.id();
  return a.graph()->emit(Op::kGradientReversal, a.value(), {pa},
                         [pa, lambda](Graph& g, std::size_t self) {
                           Tensor d = g.grad_of(self);
                           d.mat() *= -lambda;
                           g.accumulate(pa, d);
                         });
}

Var reparameterize(Var mu, Var sigma, const Tensor& epsilon) {
  require_same_graph(mu, sigma, "reparameterize");
  require_same_shape(mu, sigma, "reparameterize");
  if (epsilon.shape() != mu.shape()) {
    throw DimensionError("reparameterize: epsilon shape " +
                         shape_to_string(epsilon.shape()) + " vs mu " +
                         shape_to_string(mu.shape()));
  }
  const Tensor& sv = sigma.value();
  for (std::size_t i = 0; i < sv.size(); ++i) {
    if (sv[i] < 0.0) throw DomainError("reparameterize: negative sigma entry");
  }
  Tensor out = like(sv);
  out.mat() = epsilon.mat().cwiseProduct(sv.mat()) + mu.value().mat();
  const std::size_t pm = mu.id(), ps = sigma.id();
  return mu.graph()->emit(Op::kReparameterize, std::move(out), {pm, ps},
                          [pm, ps, epsilon](Graph& g, std::size_t self) {
                            const Tensor& up = g.grad_of(self);
                            g.accumulate(pm, up);
                            if (g.requires_grad(ps)) {
                              Tensor d = like(up);
                              d.mat() = up.mat().cwiseProduct(epsilon.mat());
                              g.accumulate(ps, d);
                            }
                          });
}

Var dropout(Var a, double rate, const std::optional<Tensor>& mask,
            bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw DomainError("dropout: rate must lie in [0, 1), got " +
                      std::to_string(rate));
  }
  if (!training || rate == 0.0) return a;
  if (!mask) throw std::invalid_argument("dropout: training mode needs a mask");
  if (mask->shape() != a.shape()) {
    throw DimensionError("dropout: mask shape " + shape_to_string(mask->shape()) +
                         " vs input " + shape_to_string(a.shape()));
  }
  Tensor factor = *mask;
  factor.mat() *= 1.0 / (1.0 - rate);
  Tensor out = like(a.value());
  out.mat() = a.value().mat().cwiseProduct(factor.mat());
  const std::size_t pa = a.id();
  return a.graph()->emit(Op::kDropout, std::move(out), {pa},
                         [pa, factor](Graph& g, std::size_t self) {
                           Tensor d = like(factor);
                           d.mat() = g.grad_of(self).mat().cwiseProduct(factor.mat());
                           g.accumulate(pa, d);
                         });
}

// ---- shape / reduction --------------------------------------------------

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t n = parts.front().rows();
  std::size_t total = 0;
  std::vector<std::size_t> ids;
  std::vector<std::size_t> widths;
  for (const Var& p : parts) {
    require_same_graph(parts.front(), p, "concat_cols");
    if (p.value().rank() != 2 || p.rows() != n) {
      throw DimensionError("concat_cols: row mismatch, " +
                           shape_to_string(parts.front().shape()) + " vs " +
                           shape_to_string(p.shape()));
    }
    ids.push_back(p.id());
    widths.push_back(p.cols());
    total += p.cols();
  }
  Tensor out({n, total});
  std::size_t offset = 0;
  for (const Var& p : parts) {
    out.mat().middleCols(offset, p.cols()) = p.value().mat();
    offset += p.cols();
  }
  return parts.front().graph()->emit(
      Op::kConcatCols, std::move(out), ids,
      [ids, widths](Graph& g, std::size_t self) {
        const Tensor& up = g.grad_of(self);
        std::size_t off = 0;
        for (std::size_t i = 0; i < ids.size(); ++i) {
          if (g.requires_grad(ids[i])) {
            Tensor d = like(g.value_of(ids[i]));
            d.mat() = up.mat().middleCols(off, widths[i]);
            g.accumulate(ids[i], d);
          }
          off += widths[i];
        }
      });
}

Var slice_col(Var a, std::size_t j) {
  const Tensor& x = a.value();
  if (x.rank() != 2 || j >= x.cols()) {
    throw DimensionError("slice_col: column " + std::to_string(j) +
                         " out of range for " + shape_to_string(x.shape()));
  }
  Tensor out({x.rows(), 1});
  out.mat() = x.mat().col(j);
  const std::size_t pa = a.id();
  return a.graph()->emit(Op::kSliceCol, std::move(out), {pa},
                         [pa, j](Graph& g, std::size_t self) {
                           Tensor d = like(g.value_of(pa));
                           d.mat().col(j) = g.grad_of(self).mat();
                           g.accumulate(pa, d);
                         });
}

Var row_sum(Var a) {
  const Tensor& x = a.value();
  Tensor out({x.rows(), 1});
  out.mat() = x.mat().rowwise().sum();
  const std::size_t pa = a.id();
  return a.graph()->emit(Op::kRowSum, std::move(out), {pa},
                         [pa](Graph& g, std::size_t self) {
                           Tensor d = like(g.value_of(pa));
                           const Tensor& up = g.grad_of(self);
                           for (std::size_t r = 0; r < d.rows(); ++r) {
                             d.mat().row(r).setConstant(up[r]);
                           }
                           g.accumulate(pa, d);
                         });
}

Var sum(Var a) {
  const Tensor& x = a.value();
  double s = 0.0;
  for (double v : x.data()) s += v;
  const std::size_t pa = a.id();
  return a.graph()->emit(Op::kSum, Tensor::scalar(s), {pa},
                         [pa](Graph& g, std::size_t self) {
                           Tensor d = like(g.value_of(pa));
                           d.fill(g.grad_of(self).item());
                           g.accumulate(pa, d);
                         });
}

Var mean(Var a) {
  const Tensor& x = a.value();
  if (x.size() == 0) throw DimensionError("mean of empty tensor");
  double s = 0.0;
  for (double v : x.data()) s += v;
  const double n = static_cast<double>(x.size());
  const std::size_t pa = a.id();
  return a.graph()->emit(Op::kMean, Tensor::scalar(s / n), {pa},
                         [pa, n](Graph& g, std::size_t self) {
                           Tensor d = like(g.value_of(pa));
                           d.fill(g.grad_of(self).item() / n);
                           g.accumulate(pa, d);
                         });
}

Var abs_cosine_rows(Var a, Var b, std::size_t* zero_rows) {
  require_same_graph(a, b, "abs_cosine_rows");
  require_same_shape(a, b, "abs_cosine_rows");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t n = av.rows();
  Tensor out({n, 1});
  for (std::size_t r = 0; r < n; ++r) {
    const double na = av.mat().row(r).norm();
    const double nb = bv.mat().row(r).norm();
    if (na == 0.0 || nb == 0.0) {
      if (zero_rows) ++*zero_rows;
      continue;
    }
    out[r] = std::abs(av.mat().row(r).dot(bv.mat().row(r))) / (na * nb);
  }
  const std::size_t pa = a.id(), pb = b.id();
  return a.graph()->emit(
      Op::kAbsCosine, std::move(out), {pa, pb},
      [pa, pb](Graph& g, std::size_t self) {
        const Tensor& x = g.value_of(pa);
        const Tensor& y = g.value_of(pb);
        const Tensor& up = g.grad_of(self);
        Tensor dx = like(x), dy = like(y);
        for (std::size_t r = 0; r < x.rows(); ++r) {
          const auto xr = x.mat().row(r);
          const auto yr = y.mat().row(r);
          const double nx = xr.norm(), ny = yr.norm();
          if (nx == 0.0 || ny == 0.0) continue;
          const double dot = xr.dot(yr);
          const double sign = dot > 0.0 ? 1.0 : (dot < 0.0 ? -1.0 : 0.0);
          const double c = dot / (nx * ny);
          const double u = up[r] * sign;
          dx.mat().row(r) = u * (yr / (nx * ny) - c * xr / (nx * nx));
          dy.mat().row(r) = u * (xr / (nx * ny) - c * yr / (ny * ny));
        }
        if (g.requires_grad(pa)) g.accumulate(pa, dx);
        if (g.requires_grad(pb)) g.accumulate(pb, dy);
      });
}

Var stop_gradient(Var a) { return a.graph()->constant(a.value()); }

}  // namespace semifair::ad
