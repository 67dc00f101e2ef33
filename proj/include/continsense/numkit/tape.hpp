#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "continsense/errors.hpp"
#include "continsense/numkit/matrix.hpp"
#include "continsense/numkit/params.hpp"

namespace continsense::numkit {

enum class ActivationKind { Sigmoid, Tanh, Identity };

inline const char* to_string(ActivationKind k) {
  switch (k) {
    case ActivationKind::Sigmoid: return "sigmoid";
    case ActivationKind::Tanh: return "tanh";
    case ActivationKind::Identity: return "identity";
  }
  return "?";
}

inline ActivationKind parse_activation(const std::string& s) {
  if (s == "sigmoid") return ActivationKind::Sigmoid;
  if (s == "tanh") return ActivationKind::Tanh;
  if (s == "identity") return ActivationKind::Identity;
  throw ConfigError("unknown activation '" + s + "' (expected sigmoid|tanh|identity)");
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double apply_activation(ActivationKind k, double x) {
  switch (k) {
    case ActivationKind::Sigmoid: return sigmoid(x);
    case ActivationKind::Tanh: return std::tanh(x);
    case ActivationKind::Identity: return x;
  }
  return x;
}

// Elementwise activation on a plain matrix. Rejects non-finite input.
inline DenseMatrix activation(ActivationKind kind, const DenseMatrix& a) {
  if (!a.all_finite()) throw NumericError(std::string("activation(") + to_string(kind) + "): non-finite input");
  DenseMatrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = apply_activation(kind, out[i]);
  return out;
}

inline void check_mask(const DenseMatrix& mask) {
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] != 0.0 && mask[i] != 1.0) throw InputError("mask entries must be 0 or 1");
  }
}

// (1/2n) * sum(((estimate - observed) .* mask)^2) with n = number of columns.
inline double masked_loss(const DenseMatrix& estimate, const DenseMatrix& observed, const DenseMatrix& mask) {
  require_same_shape(estimate, observed, "masked_loss");
  require_same_shape(estimate, mask, "masked_loss");
  check_mask(mask);
  if (estimate.cols() == 0) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    const double d = (estimate[i] - observed[i]) * mask[i];
    s += d * d;
  }
  return s / (2.0 * static_cast<double>(estimate.cols()));
}

class Tape;

// Handle to a node on a Tape. Cheap to copy; only valid until the tape is
// reset.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const DenseMatrix& value() const;
  const DenseMatrix& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

// Reverse-mode tape over a closed op set. A tape records one forward pass;
// reset() rewinds it while keeping node storage so that repeated epochs over
// an identical graph do not reallocate.
class Tape {
 public:
  enum class Op {
    Param,
    Constant,
    MatMul,
    Add,
    AddColumn,  // n x m plus an n x 1 column broadcast over columns
    Sub,
    Hadamard,
    Scale,
    OneMinus,
    Sigmoid,
    Tanh,
    Identity,
    ConcatCols,
    MaskedLoss,
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void reset() {
    used_ = 0;
    param_nodes_.clear();
    store_ = nullptr;
  }

  std::size_t node_count() const noexcept { return used_; }

  // Leaf bound to a parameter of `store`. Repeated calls for the same id
  // return the same node.
  Var param(const ParamStore& store, ParamId id) {
    if (store_ != nullptr && store_ != &store) {
      throw InputError("Tape: parameters from two different stores on one tape");
    }
    store_ = &store;
    if (auto it = param_nodes_.find(id); it != param_nodes_.end()) return Var{this, it->second};
    Node& n = push(Op::Param, std::initializer_list<int>{});
    n.param = id;
    n.value = store.at(id).value;
    n.needs_grad = true;
    param_nodes_.emplace(id, n.index);
    return Var{this, n.index};
  }

  Var constant(const DenseMatrix& v) {
    Node& n = push(Op::Constant, std::initializer_list<int>{});
    n.value = v;
    return Var{this, n.index};
  }

  Var matmul(Var a, Var b) {
    check(a, b);
    Node& n = push(Op::MatMul, {a.id, b.id});
    matmul_into(nodes_[a.id].value, nodes_[b.id].value, n.value);
    return Var{this, n.index};
  }

  Var add(Var a, Var b) {
    check(a, b);
    // push() may grow nodes_, so input references are taken afterwards.
    const bool same = nodes_[a.id].value.same_shape(nodes_[b.id].value);
    const bool column = nodes_[b.id].value.cols() == 1 && nodes_[b.id].value.rows() == nodes_[a.id].value.rows();
    if (same) {
      Node& n = push(Op::Add, {a.id, b.id});
      n.value = nodes_[a.id].value;
      const DenseMatrix& bv = nodes_[b.id].value;
      for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] += bv[i];
      return Var{this, n.index};
    }
    if (column) {
      Node& n = push(Op::AddColumn, {a.id, b.id});
      n.value = nodes_[a.id].value;
      const DenseMatrix& bv = nodes_[b.id].value;
      for (std::size_t r = 0; r < n.value.rows(); ++r)
        for (std::size_t c = 0; c < n.value.cols(); ++c) n.value(r, c) += bv[r];
      return Var{this, n.index};
    }
    throw DimensionError("add: shape mismatch " + nodes_[a.id].value.shape() + " vs " + nodes_[b.id].value.shape());
  }

  Var sub(Var a, Var b) {
    check(a, b);
    require_same_shape(nodes_[a.id].value, nodes_[b.id].value, "sub");
    Node& n = push(Op::Sub, {a.id, b.id});
    n.value = nodes_[a.id].value;
    const DenseMatrix& bv = nodes_[b.id].value;
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] -= bv[i];
    return Var{this, n.index};
  }

  Var hadamard(Var a, Var b) {
    check(a, b);
    require_same_shape(nodes_[a.id].value, nodes_[b.id].value, "hadamard");
    Node& n = push(Op::Hadamard, {a.id, b.id});
    n.value = nodes_[a.id].value;
    const DenseMatrix& bv = nodes_[b.id].value;
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] *= bv[i];
    return Var{this, n.index};
  }

  Var scale(Var a, double s) {
    check(a);
    Node& n = push(Op::Scale, {a.id});
    n.scalar = s;
    n.value = nodes_[a.id].value;
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] *= s;
    return Var{this, n.index};
  }

  Var one_minus(Var a) {
    check(a);
    Node& n = push(Op::OneMinus, {a.id});
    n.value = nodes_[a.id].value;
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = 1.0 - n.value[i];
    return Var{this, n.index};
  }

  Var activate(ActivationKind kind, Var a) {
    check(a);
    const Op op = kind == ActivationKind::Sigmoid ? Op::Sigmoid
                  : kind == ActivationKind::Tanh  ? Op::Tanh
                                                  : Op::Identity;
    Node& n = push(op, {a.id});
    n.value = nodes_[a.id].value;
    for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = apply_activation(kind, n.value[i]);
    return Var{this, n.index};
  }

  Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no inputs");
    std::vector<int> ids;
    ids.reserve(parts.size());
    std::size_t rows = parts.front().tape == this ? nodes_[parts.front().id].value.rows() : 0;
    std::size_t cols = 0;
    for (const Var& p : parts) {
      check(p);
      const DenseMatrix& v = nodes_[p.id].value;
      if (v.rows() != rows) throw DimensionError("concat_cols: row mismatch " + v.shape());
      cols += v.cols();
      ids.push_back(p.id);
    }
    Node& n = push(Op::ConcatCols, ids);
    n.value.reset(rows, cols);
    std::size_t off = 0;
    for (int id : n.inputs) {
      const DenseMatrix& v = nodes_[id].value;
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < v.cols(); ++c) n.value(r, off + c) = v(r, c);
      off += v.cols();
    }
    return Var{this, n.index};
  }

  // Scalar (1x1) masked squared loss. `observed` and `mask` are constants.
  Var masked_loss(Var estimate, const DenseMatrix& observed, const DenseMatrix& mask) {
    check(estimate);
    const double v = numkit::masked_loss(nodes_[estimate.id].value, observed, mask);
    Var obs = constant(observed);
    Var msk = constant(mask);
    Node& n = push(Op::MaskedLoss, {estimate.id, obs.id, msk.id});
    n.value.reset(1, 1);
    n.value[0] = v;
    return Var{this, n.index};
  }

  const DenseMatrix& value(Var v) const { return node(v).value; }
  const DenseMatrix& grad(Var v) const { return node(v).grad; }

  // Reverse sweep from a 1x1 output. Populates grad() on every node that
  // depends on a parameter.
  void backward(Var out) {
    const Node& o = node(out);
    if (o.value.size() != 1) throw DimensionError("backward: output must be 1x1, got " + o.value.shape());
    for (std::size_t i = 0; i <= static_cast<std::size_t>(out.id); ++i) {
      Node& n = nodes_[i];
      if (n.needs_grad) n.grad.reset(n.value.rows(), n.value.cols());
    }
    nodes_[out.id].grad.reset(1, 1);
    nodes_[out.id].grad[0] = 1.0;
    for (int i = out.id; i >= 0; --i) propagate(nodes_[i]);
  }

  // Gradients of `loss` w.r.t. every trainable parameter of `store`.
  // Trainable parameters that the loss does not reach get a zero entry.
  GradientMap gradients(Var loss, const ParamStore& store) {
    if (store_ != &store || param_nodes_.empty()) {
      throw InputError("gradients: loss is not connected to the given parameter store");
    }
    backward(loss);
    GradientMap g;
    for (const Parameter& p : store) {
      if (!p.trainable) continue;
      auto it = param_nodes_.find(p.id);
      if (it != param_nodes_.end() && it->second <= loss.id) {
        g.emplace(p.id, nodes_[it->second].grad);
      } else {
        g.emplace(p.id, DenseMatrix(p.value.rows(), p.value.cols()));
      }
    }
    return g;
  }

 private:
  struct Node {
    Op op = Op::Constant;
    int index = -1;
    std::vector<int> inputs;
    double scalar = 0.0;
    ParamId param = 0;
    bool needs_grad = false;
    DenseMatrix value;
    DenseMatrix grad;
  };

  const Node& node(Var v) const {
    if (v.tape != this || v.id < 0 || static_cast<std::size_t>(v.id) >= used_) {
      throw InputError("Tape: variable does not belong to this tape");
    }
    return nodes_[v.id];
  }

  void check(Var a) const { (void)node(a); }
  void check(Var a, Var b) const {
    (void)node(a);
    (void)node(b);
  }

  Node& push(Op op, std::initializer_list<int> inputs) { return push_range(op, inputs.begin(), inputs.end()); }
  Node& push(Op op, const std::vector<int>& inputs) { return push_range(op, inputs.begin(), inputs.end()); }

  template <typename It>
  Node& push_range(Op op, It first, It last) {
    if (used_ == nodes_.size()) nodes_.emplace_back();
    Node& n = nodes_[used_];
    n.op = op;
    n.index = static_cast<int>(used_);
    n.inputs.assign(first, last);
    n.scalar = 0.0;
    n.needs_grad = false;
    for (int id : n.inputs) n.needs_grad = n.needs_grad || nodes_[id].needs_grad;
    ++used_;
    return n;
  }

  void propagate(Node& n) {
    if (!n.needs_grad || n.op == Op::Param) return;
    const DenseMatrix& g = n.grad;
    auto target = [&](std::size_t k) -> Node* {
      Node& in = nodes_[n.inputs[k]];
      return in.needs_grad ? &in : nullptr;
    };
    switch (n.op) {
      case Op::Param:
      case Op::Constant:
        break;
      case Op::MatMul: {
        const Node& a = nodes_[n.inputs[0]];
        const Node& b = nodes_[n.inputs[1]];
        if (Node* da = target(0)) matmul_a_bt_acc(g, b.value, da->grad);
        if (Node* db = target(1)) matmul_at_b_acc(a.value, g, db->grad);
        break;
      }
      case Op::Add:
        if (Node* da = target(0))
          for (std::size_t i = 0; i < g.size(); ++i) da->grad[i] += g[i];
        if (Node* db = target(1))
          for (std::size_t i = 0; i < g.size(); ++i) db->grad[i] += g[i];
        break;
      case Op::AddColumn:
        if (Node* da = target(0))
          for (std::size_t i = 0; i < g.size(); ++i) da->grad[i] += g[i];
        if (Node* db = target(1))
          for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < g.cols(); ++c) db->grad[r] += g(r, c);
        break;
      case Op::Sub:
        if (Node* da = target(0))
          for (std::size_t i = 0; i < g.size(); ++i) da->grad[i] += g[i];
        if (Node* db = target(1))
          for (std::size_t i = 0; i < g.size(); ++i) db->grad[i] -= g[i];
        break;
      case Op::Hadamard: {
        const DenseMatrix& av = nodes_[n.inputs[0]].value;
        const DenseMatrix& bv = nodes_[n.inputs[1]].value;
        if (Node* da = target(0))
          for (std::size_t i = 0; i < g.size(); ++i) da->grad[i] += g[i] * bv[i];
        if (Node* db = target(1))
          for (std::size_t i = 0; i < g.size(); ++i) db->grad[i] += g[i] * av[i];
        break;
      }
      case Op::Scale:
        if (Node* da = target(0))
          for (std::size_t i = 0; i < g.size(); ++i) da->grad[i] += n.scalar * g[i];
        break;
      case Op::OneMinus:
        if (Node* da = target(0))
          for (std::size_t i = 0; i < g.size(); ++i) da->grad[i] -= g[i];
        break;
      case Op::Sigmoid:
        if (Node* da = target(0))
          for (std::size_t i = 0; i < g.size(); ++i) {
            const double y = n.value[i];
            da->grad[i] += g[i] * y * (1.0 - y);
          }
        break;
      case Op::Tanh:
        if (Node* da = target(0))
          for (std::size_t i = 0; i < g.size(); ++i) {
            const double y = n.value[i];
            da->grad[i] += g[i] * (1.0 - y * y);
          }
        break;
      case Op::Identity:
        if (Node* da = target(0))
          for (std::size_t i = 0; i < g.size(); ++i) da->grad[i] += g[i];
        break;
      case Op::ConcatCols: {
        std::size_t off = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          Node& in = nodes_[n.inputs[k]];
          const std::size_t c_in = in.value.cols();
          if (in.needs_grad)
            for (std::size_t r = 0; r < in.value.rows(); ++r)
              for (std::size_t c = 0; c < c_in; ++c) in.grad(r, c) += g(r, off + c);
          off += c_in;
        }
        break;
      }
      case Op::MaskedLoss: {
        Node* de = target(0);
        if (!de) break;
        const DenseMatrix& e = nodes_[n.inputs[0]].value;
        const DenseMatrix& o = nodes_[n.inputs[1]].value;
        const DenseMatrix& m = nodes_[n.inputs[2]].value;
        const double s = g[0] / static_cast<double>(e.cols());
        for (std::size_t i = 0; i < e.size(); ++i) de->grad[i] += s * ((e[i] - o[i]) * m[i]) * m[i];
        break;
      }
    }
  }

  std::vector<Node> nodes_;
  std::size_t used_ = 0;
  std::unordered_map<ParamId, int> param_nodes_;
  const ParamStore* store_ = nullptr;

  friend struct Var;
};

inline const DenseMatrix& Var::value() const { return tape->value(*this); }
inline const DenseMatrix& Var::grad() const { return tape->grad(*this); }

inline Var matmul(Var a, Var b) { return a.tape->matmul(a, b); }
inline Var operator+(Var a, Var b) { return a.tape->add(a, b); }
inline Var operator-(Var a, Var b) { return a.tape->sub(a, b); }
inline Var hadamard(Var a, Var b) { return a.tape->hadamard(a, b); }
inline Var operator*(double s, Var a) { return a.tape->scale(a, s); }
inline Var one_minus(Var a) { return a.tape->one_minus(a); }
inline Var sigmoid(Var a) { return a.tape->activate(ActivationKind::Sigmoid, a); }
inline Var tanh(Var a) { return a.tape->activate(ActivationKind::Tanh, a); }
inline Var activate(ActivationKind k, Var a) { return a.tape->activate(k, a); }

}  // namespace continsense::numkit
