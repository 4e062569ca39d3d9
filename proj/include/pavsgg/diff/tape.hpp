#pragma once

#include <cstddef>
#include <functional>
#include <unordered_map>
#include <vector>

#include "pavsgg/diff/params.hpp"
#include "pavsgg/diff/tensor.hpp"

namespace pavsgg::diff {

class Tape;

// Handle to a value recorded on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Define-by-run reverse-mode tape. Nodes are recorded in evaluation order,
// which is also a topological order; backward walks them once in reverse.
// Single-threaded: one tape per thread.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Leaf bound to a parameter; repeated calls return the same node.
  Var param(const Param& p);
  // Free leaf that tracks gradients but is not tied to a store.
  Var variable(Tensor value);

  Var record(Tensor value, std::vector<std::size_t> parents, BackwardFn backward);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  // Gradient of a node after backward; zeros if the node was not reached.
  Tensor grad(std::size_t id) const;
  Tensor grad(const Var& v) const { return grad(v.id()); }
  void accumulate(std::size_t id, const Tensor& g);
  Tensor& grad_buffer(std::size_t id);

  // Seeds d(loss)/d(loss) = 1 and propagates. Throws ShapeError for a
  // non-scalar loss.
  void backward(const Var& loss);

  // Adds leaf gradients into the matching parameters of `store`.
  void accumulate_param_grads(ParamStore& store) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
    const Param* param = nullptr;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Param*, std::size_t> param_nodes_;
};

// Runs backward on `loss` and accumulates into `store`. Parameters that do
// not influence the loss keep their current (typically zero) gradient.
void backward(Tape& tape, const Var& loss, ParamStore& store);

}  // namespace pavsgg::diff
