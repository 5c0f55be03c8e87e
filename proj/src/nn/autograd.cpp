#include "cloudtomo/nn/autograd.hpp"

#include <algorithm>
#include <atomic>
#include <unordered_set>

namespace cloudtomo::nn {

namespace {
std::atomic<int64_t> g_next_id{1};
}

Var make_leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  n->id = g_next_id.fetch_add(1);
  return n;
}

Var make_constant(Tensor value) { return make_leaf(std::move(value), false); }

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->id = g_next_id.fetch_add(1);
  for (const auto& p : parents)
    if (p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
  }
  return n;
}

void backward(const Var& root) {
  require(root->value.numel() == 1, ErrorCode::invalid_argument,
          "backward expects a scalar root");
  if (!root->requires_grad) return;

  // Collect the reachable grad-requiring subgraph.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{root.get()};
  seen.insert(root.get());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& p : n->parents)
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
  }
  std::sort(order.begin(), order.end(), [](Node* a, Node* b) { return a->id > b->id; });

  root->ensure_grad();
  root->grad.data[0] = real(1);
  for (Node* n : order)
    if (n->backprop) n->backprop(*n);
}

}  // namespace cloudtomo::nn
