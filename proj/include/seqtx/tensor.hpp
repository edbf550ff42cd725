#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "seqtx/common.hpp"

namespace seqtx {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Storage shared by every Tensor handle that refers to the same value.
struct TensorNode {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;  // empty until something writes a gradient
  bool requires_grad = false;

  std::span<float> grad_buffer();  // allocates zeros on first use
  bool has_grad() const { return !grad.empty(); }
};

// Dense row-major float32 array. Copies of a Tensor share storage; use
// clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f, bool requires_grad = false);
  Tensor(Shape shape, std::vector<float> values, bool requires_grad = false);

  static Tensor scalar(float value) { return Tensor(Shape{1}, value); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->data.size(); }

  std::span<float> data() { return node_->data; }
  std::span<const float> data() const { return node_->data; }
  const std::vector<float>& values() const { return node_->data; }

  bool has_grad() const { return node_->has_grad(); }
  std::span<const float> grad() const { return node_->grad; }
  std::span<float> grad_buffer() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad.clear(); }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }

  float item() const;
  float at(std::initializer_list<std::size_t> index) const;
  float& at(std::initializer_list<std::size_t> index);

  // Same values in fresh storage, cut off from any graph.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  const std::shared_ptr<TensorNode>& node() const { return node_; }

 private:
  std::size_t offset(std::initializer_list<std::size_t> index) const;

  std::shared_ptr<TensorNode> node_;
};

// Tape of executed differentiable operations. Operations record onto the
// graph made active by a Graph::Scope on the current thread; with no active
// graph nothing is recorded.
class Graph {
 public:
  using BackwardFn = std::function<void()>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  void record(BackwardFn fn);

  // Seeds d(loss)/d(loss) = 1 and runs the tape in reverse. The tape is
  // released afterwards; a second call without a new forward throws.
  void backward(const Tensor& loss);

  std::size_t size() const { return tape_.size(); }
  void clear();

  static Graph* active();

  class Scope {
   public:
    explicit Scope(Graph& graph);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Graph* previous_;
  };

  // Suspends recording (inference passes inside a training step).
  class Pause {
   public:
    Pause();
    ~Pause();
    Pause(const Pause&) = delete;
    Pause& operator=(const Pause&) = delete;

   private:
    Graph* previous_;
  };

 private:
  std::vector<BackwardFn> tape_;
  bool consumed_ = false;
};

}  // namespace seqtx
