#include "poseforge/autograd.hpp"

#include <cmath>
#include <sstream>

#include "poseforge/errors.hpp"

namespace poseforge::ag {

namespace {
thread_local Tape* g_active_tape = nullptr;
}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  if (numel(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " holds " +
                         std::to_string(numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  return Tensor(std::move(node));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  Tensor t = constant(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  t.node_->grad.assign(t.node_->value.size(), 0.0);
  return t;
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const std::size_t n = numel(shape);
  return constant(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return constant({}, {value}); }

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

std::span<double> Tensor::mutable_values() {
  if (!node_->leaf) throw ContractError("mutable_values() on a non-leaf tensor");
  return node_->value;
}

std::span<double> Tensor::mutable_grad() {
  if (node_->grad.size() != node_->value.size()) node_->grad.assign(node_->value.size(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

void Tape::record(const NodePtr& node) {
  node->tape_slot = nodes_.size();
  nodes_.push_back(node);
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

Tape* active_tape() { return g_active_tape; }

GradBuffers::GradBuffers(const Tape& tape) : tape_(tape), slots_(tape.size()) {}

std::span<double> GradBuffers::of(const Node& node) {
  if (!node.requires_grad) return {};
  if (node.leaf) {
    auto& g = leaves_[&node];
    if (g.empty()) g.assign(node.value.size(), 0.0);
    return g;
  }
  auto& g = slots_.at(node.tape_slot);
  if (g.empty()) g.assign(node.value.size(), 0.0);
  return g;
}

std::span<const double> Gradients::of(const Tensor& leaf) const {
  auto it = leaves_.find(leaf.node());
  if (it == leaves_.end()) return {};
  return it->second;
}

bool Gradients::has(const Tensor& leaf) const { return leaves_.count(leaf.node()) != 0; }

void Gradients::accumulate_into_leaves() const {
  for (const auto& owner : owners_) {
    auto it = leaves_.find(owner.get());
    if (it == leaves_.end()) continue;
    if (owner->grad.size() != owner->value.size()) owner->grad.assign(owner->value.size(), 0.0);
    for (std::size_t i = 0; i < it->second.size(); ++i) owner->grad[i] += it->second[i];
  }
}

void Gradients::merge(const Gradients& other) {
  for (const auto& owner : other.owners_) {
    const auto& src = other.leaves_.at(owner.get());
    auto [it, inserted] = leaves_.try_emplace(owner.get(), src);
    if (inserted) {
      owners_.push_back(owner);
    } else {
      for (std::size_t i = 0; i < src.size(); ++i) it->second[i] += src[i];
    }
  }
}

Gradients compute_gradients(const Tape& tape, const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  Gradients out;
  const Node& root = *loss.node();
  if (!root.requires_grad) return out;
  if (root.leaf) {
    out.leaves_[&root] = {1.0};
    out.owners_.push_back(loss.node_ptr());
    return out;
  }
  const auto nodes = tape.nodes();
  if (root.tape_slot >= nodes.size() || nodes[root.tape_slot].get() != &root) {
    throw ContractError("loss is not part of the given computation record");
  }
  GradBuffers buffers(tape);
  buffers.of(root)[0] = 1.0;
  for (std::size_t k = root.tape_slot + 1; k-- > 0;) {
    const Node& node = *nodes[k];
    auto& g = buffers.slots_[k];
    if (g.empty()) continue;
    if (node.backward) node.backward(node, g, buffers);
    std::vector<double>().swap(g);
  }
  // Collect leaf owners so the result keeps them alive and can write back.
  for (const auto& n : nodes) {
    for (const auto& in : n->inputs) {
      if (in->leaf && buffers.leaves_.count(in.get()) && !out.leaves_.count(in.get())) {
        out.leaves_[in.get()] = std::move(buffers.leaves_[in.get()]);
        out.owners_.push_back(in);
      }
    }
  }
  return out;
}

Gradients backward(const Tape& tape, const Tensor& loss) {
  Gradients g = compute_gradients(tape, loss);
  g.accumulate_into_leaves();
  return g;
}

namespace detail {

Tensor make_result(Shape shape, std::vector<double> value, const char* op,
                   std::vector<Tensor> inputs, BackwardFn fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  node->leaf = false;
  Tape* tape = g_active_tape;
  bool needs = false;
  if (tape) {
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node_ptr());
    node->backward = std::move(fn);
    tape->record(node);
  }
  return Tensor(std::move(node));
}

}  // namespace detail

}  // namespace poseforge::ag
