#pragma once

#include <functional>
#include <memory>

#include "cloudtomo/nn/tensor.hpp"

namespace cloudtomo::nn {

// Dynamic tape. Nodes are created in forward order; backward replays the
// reachable subgraph in reverse creation order, which is a valid topological
// order because parents always predate children.
struct Node {
  Tensor value;
  Tensor grad;  // allocated on demand, same shape as value
  double scalar_value = 0.0;  // double-precision shadow for scalar reductions
  bool has_scalar = false;
  bool requires_grad = false;
  int64_t id = 0;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;  // accumulates into parents' grads

  void ensure_grad() {
    if (grad.data.empty()) grad = Tensor::zeros(value.shape);
  }
};

using Var = std::shared_ptr<Node>;

Var make_leaf(Tensor value, bool requires_grad);
Var make_constant(Tensor value);

// requires_grad is inherited from parents.
Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backprop);

// Seeds a scalar root with grad 1 and runs the tape backwards.
void backward(const Var& root);

inline double scalar_of(const Var& v) {
  if (v->has_scalar) return v->scalar_value;
  require(v->value.numel() == 1, ErrorCode::invalid_argument, "scalar_of on non-scalar node");
  return double(v->value.data[0]);
}

}  // namespace cloudtomo::nn
