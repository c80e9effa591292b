#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "leafae/tensor.hpp"

namespace leafae {

using NodeId = std::size_t;

template <typename T>
class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid as long as its graph.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Graph<T>* graph, NodeId id) : graph_(graph), id_(id) {}

  NodeId id() const noexcept { return id_; }
  Graph<T>& graph() const { return *graph_; }
  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  Graph<T>* graph_ = nullptr;
  NodeId id_ = 0;
};

/// What a node's backward rule sees. `grad_inputs[i]` is null when input i
/// does not need a gradient; otherwise the rule adds its contribution to it.
template <typename T>
struct BackwardContext {
  std::span<const Tensor<T>* const> inputs;
  const Tensor<T>& output;
  const Tensor<T>& grad_output;
  std::span<Tensor<T>* const> grad_inputs;
};

template <typename T>
using BackwardFn = std::function<void(const BackwardContext<T>&)>;

/// Result of a backward pass: one optional gradient per node, indexed by id.
template <typename T>
class Gradients {
 public:
  explicit Gradients(std::vector<std::optional<Tensor<T>>> grads) : grads_(std::move(grads)) {}

  bool contains(NodeId id) const { return id < grads_.size() && grads_[id].has_value(); }
  bool contains(const Var<T>& v) const { return contains(v.id()); }

  /// Gradient of the loss w.r.t. the node, or nullptr when the node was not
  /// reached from the loss or does not require a gradient.
  const Tensor<T>* find(const Var<T>& v) const {
    return contains(v) ? &*grads_[v.id()] : nullptr;
  }

  const Tensor<T>& at(const Var<T>& v) const {
    if (!contains(v)) {
      throw ContractViolation("no gradient recorded for node " + std::to_string(v.id()));
    }
    return *grads_[v.id()];
  }

 private:
  std::vector<std::optional<Tensor<T>>> grads_;
};

/// Dynamically built computation graph. Nodes are appended in creation order,
/// which is a topological order since a node can only reference existing ones.
/// A Graph is single-writer: do not build or differentiate it concurrently.
template <typename T>
class Graph {
 public:
  struct Node {
    std::string_view kind;
    std::vector<NodeId> inputs;
    Tensor<T> value;
    bool requires_grad = false;
    BackwardFn<T> backward;
  };

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<T> leaf(Tensor<T> value, bool requires_grad = false) {
    nodes_.push_back(Node{"leaf", {}, std::move(value), requires_grad, {}});
    return Var<T>(this, nodes_.size() - 1);
  }

  Var<T> constant(Tensor<T> value) { return leaf(std::move(value), false); }

  /// Records an operation. The backward rule is kept only when some input
  /// needs a gradient.
  Var<T> apply(std::string_view kind, std::vector<NodeId> inputs, Tensor<T> value,
               BackwardFn<T> backward) {
    bool needs = false;
    for (NodeId in : inputs) {
      if (in >= nodes_.size()) {
        throw ContractViolation("graph input refers to a future node");
      }
      needs = needs || nodes_[in].requires_grad;
    }
    nodes_.push_back(Node{kind, std::move(inputs), std::move(value), needs,
                          needs ? std::move(backward) : BackwardFn<T>{}});
    return Var<T>(this, nodes_.size() - 1);
  }

  const Node& node(NodeId id) const { return nodes_.at(id); }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Reverse-mode differentiation of a scalar node. Gradients are zero-filled
  /// fresh on every call and summed across fan-out.
  Gradients<T> backward(const Var<T>& loss) const {
    if (&loss.graph() != this) {
      throw ContractViolation("loss belongs to a different graph");
    }
    const Node& root = nodes_.at(loss.id());
    if (root.value.size() != 1 || root.value.rank() != 0) {
      throw ContractViolation("backward() needs a scalar loss, got shape " +
                              to_string(root.value.shape()));
    }

    std::vector<bool> reached(nodes_.size(), false);
    reached[loss.id()] = root.requires_grad;
    for (NodeId id = loss.id() + 1; id-- > 0;) {
      if (!reached[id]) continue;
      for (NodeId in : nodes_[id].inputs) {
        if (nodes_[in].requires_grad) reached[in] = true;
      }
    }

    std::vector<std::optional<Tensor<T>>> grads(nodes_.size());
    if (!root.requires_grad) return Gradients<T>(std::move(grads));
    grads[loss.id()] = Tensor<T>(Shape{}, std::vector<T>{T{1}});

    std::vector<const Tensor<T>*> in_values;
    std::vector<Tensor<T>*> in_grads;
    for (NodeId id = loss.id() + 1; id-- > 0;) {
      const Node& n = nodes_[id];
      if (!reached[id] || !n.backward || !grads[id]) continue;
      in_values.clear();
      in_grads.clear();
      for (NodeId in : n.inputs) {
        in_values.push_back(&nodes_[in].value);
        if (reached[in]) {
          // -0 is the exact additive identity, so a single contribution is
          // stored bit-for-bit.
          if (!grads[in]) grads[in] = Tensor<T>(nodes_[in].value.shape(), T(-0.0));
          in_grads.push_back(&*grads[in]);
        } else {
          in_grads.push_back(nullptr);
        }
      }
      n.backward(BackwardContext<T>{in_values, n.value, *grads[id], in_grads});
    }
    return Gradients<T>(std::move(grads));
  }

 private:
  std::deque<Node> nodes_;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return graph_->node(id_).value;
}

template <typename T>
bool Var<T>::requires_grad() const {
  return graph_->node(id_).requires_grad;
}

}  // namespace leafae
