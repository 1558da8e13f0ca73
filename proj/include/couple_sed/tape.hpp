#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "couple_sed/tensor.hpp"

namespace csed::numkit {

/// Handle to a value recorded on a Tape.
struct Var {
  std::uint32_t id = UINT32_MAX;
  bool valid() const { return id != UINT32_MAX; }
};

/// Reverse-mode gradient tape. Every primitive in ops.hpp that takes a Tape
/// records its output together with a closure that pushes the output gradient
/// back into its inputs. Nodes that do not depend on a trainable leaf carry no
/// closure and are skipped during replay.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor& out_grad)>;

  Var leaf(Tensor value, bool trainable = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Records an op output. `fn` is dropped if no input requires a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, Backward fn);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  /// Gradient accumulated so far; a zero tensor when nothing reached `v`.
  Tensor grad(Var v) const;
  /// Lazily allocated gradient buffer used by op closures.
  Tensor& grad_buffer(Var v);

  /// Seeds d(loss)/d(loss) = 1 and replays every closure in reverse order.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

}  // namespace csed::numkit
