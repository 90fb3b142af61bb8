#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ovc/tensor.hpp"

namespace ovc::ad {

struct Parameter {
  Tensor value;
  Tensor grad;
};

/// Named learnable tensors with gradient accumulators. Iteration order is
/// lexicographic by name, which keeps checkpoints and optimizer state stable.
class ParameterStore {
 public:
  Parameter& add(const std::string& name, Tensor init) {
    if (params_.count(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
    Tensor grad(init.shape());
    auto [it, _] = params_.emplace(name, Parameter{std::move(init), std::move(grad)});
    return it->second;
  }

  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  Parameter& at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
    return it->second;
  }
  const Parameter& at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
    return it->second;
  }

  /// Replaces a value in place; the shape is frozen at creation.
  void set_value(const std::string& name, const Tensor& value) {
    Parameter& p = at(name);
    if (p.value.shape() != value.shape()) {
      throw DimensionError("parameter '" + name + "' has shape " + shape_str(p.value.shape()) +
                           ", got " + shape_str(value.shape()));
    }
    p.value = value;
  }

  void zero_grad() {
    for (auto& [_, p] : params_) p.grad.fill(0.0);
  }

  std::size_t size() const noexcept { return params_.size(); }
  std::size_t total_elements() const {
    std::size_t n = 0;
    for (const auto& [_, p] : params_) n += p.value.size();
    return n;
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  friend bool operator==(const ParameterStore& a, const ParameterStore& b) {
    if (a.params_.size() != b.params_.size()) return false;
    for (auto ia = a.params_.begin(), ib = b.params_.begin(); ia != a.params_.end(); ++ia, ++ib) {
      if (ia->first != ib->first || !(ia->second.value == ib->second.value)) return false;
    }
    return true;
  }

 private:
  std::map<std::string, Parameter> params_;
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; only valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const noexcept { return id_; }
  Tape& tape() const { return *tape_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Define-by-run reverse-mode tape. Nodes are appended during the forward
/// pass, so append order is a topological order.
class Tape {
 public:
  /// Receives the gradient of this node's output and pushes it to its inputs.
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value) {
    nodes_.push_back(Node{std::move(value), nullptr, {}, false, {}, nullptr});
    return Var(this, nodes_.size() - 1);
  }

  /// Leaf bound to a stored parameter. The value is referenced, not copied, so
  /// the store must outlive the tape and stay unmodified during the pass.
  Var parameter(ParameterStore& store, const std::string& name) {
    Parameter& p = store.at(name);
    nodes_.push_back(Node{{}, &p.value, {}, true, {}, &p});
    return Var(this, nodes_.size() - 1);
  }

  /// Leaf referencing a read-only parameter (inference on a shared store).
  Var parameter(const ParameterStore& store, const std::string& name) {
    const Parameter& p = store.at(name);
    nodes_.push_back(Node{{}, &p.value, {}, false, {}, nullptr});
    return Var(this, nodes_.size() - 1);
  }

  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
    return record(std::move(value), std::vector<Var>(inputs), std::move(fn));
  }

  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn fn) {
    bool needs = false;
    for (const Var& v : inputs) {
      if (&v.tape() != this) throw std::invalid_argument("operation mixes nodes from different tapes");
      needs = needs || nodes_[v.id()].requires_grad;
    }
    nodes_.push_back(Node{std::move(value), nullptr, {}, needs, needs ? std::move(fn) : BackwardFn{}, nullptr});
    return Var(this, nodes_.size() - 1);
  }

  const Tensor& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.value;
  }

  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool requires_grad(const Var& v) const { return nodes_[v.id()].requires_grad; }

  /// Gradient buffer of a node, allocated on first use.
  Tensor& grad(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.shape() != value(id).shape()) n.grad = Tensor(value(id).shape());
    return n.grad;
  }
  Tensor& grad(const Var& v) { return grad(v.id()); }

  std::size_t size() const noexcept { return nodes_.size(); }

  /// Propagates d(output)/d(node) through the tape and adds the result into
  /// the gradient accumulators of every reachable parameter.
  void backward(const Var& output) {
    if (&output.tape() != this) throw std::invalid_argument("backward: output belongs to another tape");
    if (value(output.id()).size() != 1) {
      throw DimensionError("backward requires a scalar output, got shape " +
                           shape_str(value(output.id()).shape()));
    }
    for (Node& n : nodes_) n.grad = Tensor();
    grad(output.id()).fill(1.0);
    for (std::size_t i = output.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.size() == 0) continue;
      if (n.backward) n.backward(*this, n.grad);
      if (n.param) {
        auto dst = n.param->grad.data();
        auto src = n.grad.data();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
      }
    }
  }

 private:
  struct Node {
    Tensor value;
    const Tensor* external;
    Tensor grad;
    bool requires_grad;
    BackwardFn backward;
    Parameter* param;
  };

  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }

}  // namespace ovc::ad
