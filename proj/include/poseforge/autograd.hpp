#pragma once

// Minimal reverse-mode automatic differentiation.
//
// A Tensor is a cheap handle to an immutable Node. Ops executed while a Tape
// is active on the current thread (see TapeScope) are appended to it in
// execution order, which is a valid topological order. Leaves are created
// outside any tape and hold the learnable parameters; they receive gradients
// through `backward` or `compute_gradients`.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace poseforge::ag {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class GradBuffers;
class Gradients;
class Tape;
class Tensor;
struct Node;
using NodePtr = std::shared_ptr<Node>;

// Computes input gradients from the gradient of this node's output.
using BackwardFn = std::function<void(const Node& self, std::span<const double> grad_out,
                                      GradBuffers& buffers)>;

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // accumulated leaf gradient
  bool requires_grad = false;
  bool leaf = true;
  const char* op = "leaf";
  std::vector<NodePtr> inputs;
  BackwardFn backward;
  std::size_t tape_slot = 0;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor parameter(Shape shape, std::vector<double> values);
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->value.size(); }
  std::span<const double> values() const { return node_->value; }
  double operator[](std::size_t i) const { return node_->value[i]; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->leaf; }
  const char* op() const { return node_->op; }

  // Leaves only: in-place parameter updates and gradient access.
  std::span<double> mutable_values();
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad();
  void zero_grad();

  Node* node() const noexcept { return node_.get(); }
  const NodePtr& node_ptr() const noexcept { return node_; }

 private:
  NodePtr node_;
};

// Ordered record of differentiable operations (the computation record).
class Tape {
 public:
  void record(const NodePtr& node);
  std::span<const NodePtr> nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  std::vector<NodePtr> nodes_;
};

// Makes `tape` the active record on this thread for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Suspends recording (inference).
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

// Gradient storage handed to backward functions during one reverse sweep.
class GradBuffers {
 public:
  GradBuffers(const Tape& tape);
  // Zero-initialized gradient buffer for `node`; empty span if the node does
  // not require a gradient.
  std::span<double> of(const Node& node);

 private:
  friend class Gradients;
  friend Gradients compute_gradients(const Tape& tape, const Tensor& loss);
  const Tape& tape_;
  std::vector<std::vector<double>> slots_;
  std::unordered_map<const Node*, std::vector<double>> leaves_;
};

// Leaf gradients from one reverse sweep.
class Gradients {
 public:
  std::span<const double> of(const Tensor& leaf) const;
  bool has(const Tensor& leaf) const;
  // Adds every gradient into the owning leaf's `grad`.
  void accumulate_into_leaves() const;
  // Adds `other` into this (per-leaf sum).
  void merge(const Gradients& other);
  std::size_t leaf_count() const { return leaves_.size(); }

 private:
  friend Gradients compute_gradients(const Tape&, const Tensor&);
  std::unordered_map<const Node*, std::vector<double>> leaves_;
  std::vector<NodePtr> owners_;
};

// Reverse sweep over `tape` seeded with d(loss)/d(loss) = 1. Leaf grads are
// returned, not written. Throws ContractError for a non-scalar loss.
Gradients compute_gradients(const Tape& tape, const Tensor& loss);

// compute_gradients followed by accumulation into the leaves: calling it twice
// on the same record doubles every leaf gradient.
Gradients backward(const Tape& tape, const Tensor& loss);

namespace detail {
// Builds a result tensor. When some input requires a gradient and a tape is
// active, the node is recorded with `fn` as its backward rule.
Tensor make_result(Shape shape, std::vector<double> value, const char* op,
                   std::vector<Tensor> inputs, BackwardFn fn);
}  // namespace detail

}  // namespace poseforge::ag
