// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "auxadapt/error.hpp"
#include "auxadapt/tensor.hpp"

namespace auxadapt {

/// Handle to a node recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

/// Gradients keyed by parameter name. Ordered so iteration is deterministic.
template <typename T>
using GradientSet = std::map<std::string, Tensor<T>>;

/// Linear record of a forward computation. Each node owns its value; op
/// nodes carry a closure that pushes the node's gradient into its inputs.
/// Nodes are only appended, so input ids are always smaller than the ids
/// of the nodes that consume them and a reverse sweep is a valid
/// topological order.
template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    bool trainable = false;
    std::string param;
    Backward backward;
  };

  Var constant(Tensor<T> value) {
    nodes_.push_back(Node{std::move(value), {}, false, false, {}, {}});
    return Var{nodes_.size() - 1};
  }

  /// Named network parameter. Frozen parameters are recorded but never
  /// receive gradients.
  Var parameter(std::string name, Tensor<T> value, bool trainable) {
    nodes_.push_back(Node{std::move(value), {}, trainable, trainable, std::move(name), {}});
    return Var{nodes_.size() - 1};
  }

  Var record(Tensor<T> value, bool requires_grad, Backward backward) {
    Node node;
    node.value = std::move(value);
    node.requires_grad = requires_grad;
    if (requires_grad) node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var{nodes_.size() - 1};
  }

  const Tensor<T>& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Gradient buffer of a node, zero-initialised on first access.
  Tensor<T>& grad(Var v) {
    Node& node = nodes_.at(v.id);
    if (node.grad.empty()) node.grad = Tensor<T>(node.value.shape());
    return node.grad;
  }
  const Tensor<T>& grad_of(std::size_t id) const { return nodes_.at(id).grad; }

  /// Reverse sweep from a scalar loss node. Returns gradients for every
  /// trainable parameter on the tape (zero if the loss does not depend on
  /// it); frozen parameters are absent.
  GradientSet<T> backward(Var loss) {
    if (loss.id >= nodes_.size()) fail(Error::Kind::argument, "backward: loss node is not on this tape");
    if (nodes_[loss.id].value.size() != 1) {
      fail(Error::Kind::argument, "backward: terminal node is not a scalar, shape " +
                                      shape_string(nodes_[loss.id].value.shape()));
    }
    for (auto& node : nodes_) node.grad = Tensor<T>();
    visited_.clear();
    grad(loss)[0] = T{1};
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& node = nodes_[i];
      if (!node.backward || node.grad.empty()) continue;
      visited_.push_back(i);
      node.backward(*this, i);
    }
    GradientSet<T> out;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const Node& node = nodes_[i];
      if (node.param.empty() || !node.trainable) continue;
      out[node.param] = node.grad.empty() ? Tensor<T>(node.value.shape()) : node.grad;
    }
    return out;
  }

  /// Op nodes visited by the last backward(), in visit order.
  const std::vector<std::size_t>& last_backward_order() const noexcept { return visited_; }

 private:
  std::vector<Node> nodes_;
  std::vector<std::size_t> visited_;
};

}  // namespace auxadapt
