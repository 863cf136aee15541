#ifndef ASYMCODEC_AUTODIFF_HPP
#define ASYMCODEC_AUTODIFF_HPP

#include <functional>
#include <memory>
#include <unordered_map>
#include <utility>
#include <vector>

#include "asymcodec/tensor.hpp"

namespace asymcodec {

namespace detail {
inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename Scalar>
struct Node;

/// Receives the output gradient and accumulates into one buffer per parent.
/// A buffer is null when that parent does not require a gradient.
template <typename Scalar>
using BackwardFn =
    std::function<void(const Node<Scalar>& self, const Tensor<Scalar>& grad_out, std::vector<Tensor<Scalar>*>& grad_in)>;

template <typename Scalar>
struct Node {
  Tensor<Scalar> value;
  Tensor<Scalar> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn<Scalar> backward;

  bool is_leaf() const { return parents.empty(); }
};

/// Handle to a value in the autodiff graph. Copies share the node.
template <typename Scalar_>
class Var {
 public:
  using Scalar = Scalar_;
  using NodePtr = std::shared_ptr<Node<Scalar>>;

  Var() = default;
  explicit Var(Tensor<Scalar> value, bool requires_grad = false) : node_(std::make_shared<Node<Scalar>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  static Var parameter(Tensor<Scalar> value) { return Var(std::move(value), true); }
  static Var constant(Tensor<Scalar> value) { return Var(std::move(value), false); }

  bool defined() const { return static_cast<bool>(node_); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  const Tensor<Scalar>& value() const { return node_->value; }
  Tensor<Scalar>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }

  /// Accumulated gradient of a leaf; zeros of the value's shape when none was produced.
  Tensor<Scalar> grad() const {
    if (node_->grad.empty() && node_->value.size() > 0) return Tensor<Scalar>(node_->value.shape());
    return node_->grad;
  }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad() { node_->grad = Tensor<Scalar>(); }

  /// Same value, cut from the graph.
  Var detach() const { return Var(node_->value, false); }

  const NodePtr& node() const { return node_; }
  explicit Var(NodePtr node) : node_(std::move(node)) {}

 private:
  NodePtr node_;
};

/// Builds the result node of an op. Parents are recorded only when grad mode
/// is on and at least one parent requires a gradient.
template <typename Scalar>
Var<Scalar> make_result(Tensor<Scalar> value, std::vector<Var<Scalar>> parents, BackwardFn<Scalar> fn) {
  auto node = std::make_shared<Node<Scalar>>();
  node->value = std::move(value);
  bool needs = false;
  if (grad_enabled()) {
    for (const auto& p : parents) needs = needs || p.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (const auto& p : parents) node->parents.push_back(p.node());
    node->backward = std::move(fn);
  }
  return Var<Scalar>(std::move(node));
}

/// Reverse-mode sweep from a scalar loss. Gradients accumulate into leaves;
/// interior gradients are discarded after use.
template <typename Scalar>
void backward(const Var<Scalar>& loss) {
  if (!loss.defined() || loss.value().size() != 1) {
    throw ShapeError("backward requires a scalar loss, got shape " +
                     (loss.defined() ? loss.shape().str() : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) return;

  using NodeT = Node<Scalar>;
  std::vector<NodeT*> order;
  std::unordered_map<NodeT*, int> state;
  std::vector<std::pair<NodeT*, std::size_t>> stack{{loss.node().get(), 0}};
  state[loss.node().get()] = 1;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      NodeT* parent = node->parents[next++].get();
      if (parent->requires_grad && state[parent] == 0) {
        state[parent] = 1;
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  std::unordered_map<NodeT*, Tensor<Scalar>> grads;
  grads[loss.node().get()] = Tensor<Scalar>(loss.shape(), Scalar(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT* node = *it;
    auto found = grads.find(node);
    if (found == grads.end()) continue;
    Tensor<Scalar> grad_out = std::move(found->second);
    grads.erase(found);
    if (node->is_leaf()) {
      if (node->grad.empty()) {
        node->grad = std::move(grad_out);
      } else {
        node->grad.array() += grad_out.array();
      }
      continue;
    }
    std::vector<Tensor<Scalar>*> grad_in(node->parents.size(), nullptr);
    for (std::size_t i = 0; i < node->parents.size(); ++i) {
      NodeT* parent = node->parents[i].get();
      if (!parent->requires_grad) continue;
      auto& slot = grads[parent];
      if (slot.empty() && parent->value.size() > 0) slot = Tensor<Scalar>(parent->value.shape());
      grad_in[i] = &slot;
    }
    node->backward(*node, grad_out, grad_in);
  }
}

}  // namespace asymcodec

#endif  // ASYMCODEC_AUTODIFF_HPP
