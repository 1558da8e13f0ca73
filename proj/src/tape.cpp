#include "couple_sed/tape.hpp"

namespace csed::numkit {

Var Tape::leaf(Tensor value, bool trainable) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = trainable;
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, Backward fn) {
  bool needs = false;
  for (Var v : inputs) needs = needs || nodes_[v.id].requires_grad;
  Node n;
  n.value = std::move(value);
  n.requires_grad = needs;
  if (needs) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.empty()) return Tensor(n.value.shape());
  return n.grad;
}

Tensor& Tape::grad_buffer(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.empty()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

void Tape::backward(Var loss) {
  if (value(loss).size() != 1) {
    throw ShapeError("backward requires a scalar loss, got shape " +
                     shape_str(value(loss).shape()));
  }
  grad_buffer(loss)[0] += 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    // Closures only write to strictly earlier nodes, so this reference stays valid.
    n.backward(*this, n.grad);
  }
}

}  // namespace csed::numkit
