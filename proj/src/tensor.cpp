#include "seqtx/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace seqtx {

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

std::span<float> TensorNode::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0f);
  return grad;
}

Tensor::Tensor(Shape shape, float fill, bool requires_grad)
    : node_(std::make_shared<TensorNode>()) {
  for (auto d : shape)
    if (d == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
  node_->data.assign(numel(shape), fill);
  node_->shape = std::move(shape);
  node_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<float> values, bool requires_grad)
    : node_(std::make_shared<TensorNode>()) {
  for (auto d : shape)
    if (d == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
  if (numel(shape) != values.size())
    throw ShapeError("shape " + shape_str(shape) + " does not match " +
                     std::to_string(values.size()) + " values");
  node_->shape = std::move(shape);
  node_->data = std::move(values);
  node_->requires_grad = requires_grad;
}

float Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

std::size_t Tensor::offset(std::initializer_list<std::size_t> index) const {
  if (index.size() != rank())
    throw ShapeError("index rank " + std::to_string(index.size()) + " vs tensor " +
                     shape_str(shape()));
  std::size_t off = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= node_->shape[axis]) throw ShapeError("index out of range for " + shape_str(shape()));
    off = off * node_->shape[axis] + i;
    ++axis;
  }
  return off;
}

float Tensor::at(std::initializer_list<std::size_t> index) const {
  return node_->data[offset(index)];
}

float& Tensor::at(std::initializer_list<std::size_t> index) { return node_->data[offset(index)]; }

Tensor Tensor::detach() const { return Tensor(shape(), node_->data); }

namespace {
thread_local Graph* g_active = nullptr;
}

void Graph::record(BackwardFn fn) {
  consumed_ = false;
  tape_.push_back(std::move(fn));
}

void Graph::backward(const Tensor& loss) {
  if (consumed_) throw Error("backward called twice without a new forward pass");
  if (!loss.defined() || loss.size() != 1)
    throw ShapeError("backward requires a scalar loss");
  if (!loss.requires_grad()) throw Error("loss does not depend on any trainable tensor");
  Pause pause;
  loss.node()->grad_buffer()[0] += 1.0f;
  for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) (*it)();
  tape_.clear();
  consumed_ = true;
}

void Graph::clear() {
  tape_.clear();
  consumed_ = false;
}

Graph* Graph::active() { return g_active; }

Graph::Scope::Scope(Graph& graph) : previous_(g_active) { g_active = &graph; }
Graph::Scope::~Scope() { g_active = previous_; }

Graph::Pause::Pause() : previous_(g_active) { g_active = nullptr; }
Graph::Pause::~Pause() { g_active = previous_; }

}  // namespace seqtx
