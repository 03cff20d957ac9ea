#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace forge {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Graph node behind a Tensor handle. Leaves (parameters, inputs) have no
// backward function; every op output records its inputs and a closure that
// pushes the output gradient into them.
struct Node {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;  // empty until something writes a gradient
  bool requires_grad = false;
  std::uint64_t seq = 0;    // creation order; the tape is sorted on it
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  bool is_leaf() const { return !backward_fn; }
  // Lazily sized gradient buffer.
  std::span<float> grad_buffer();
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<float> values, bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::int64_t dim(int axis) const;
  int rank() const { return static_cast<int>(node_->shape.size()); }
  std::int64_t numel() const { return static_cast<std::int64_t>(node_->data.size()); }

  std::span<const float> data() const { return node_->data; }
  // In-place access; only for parameter initialization and optimizer steps.
  std::span<float> mutable_data() { return node_->data; }
  float item() const;
  float at(std::int64_t row, std::int64_t col) const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool value) { node_->requires_grad = value; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const float> grad() const { return node_->grad; }
  std::span<float> mutable_grad() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad.clear(); }

  // Fresh leaf with copied data and no graph history.
  Tensor detach() const;
  Tensor clone_leaf(bool requires_grad) const;

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

  // Builds an op output. When grad mode is on and any input requires grad,
  // the output records the inputs and backward closure; otherwise it is a
  // plain constant.
  static Tensor make_result(Shape shape, std::vector<float> data,
                            std::vector<Tensor> inputs,
                            std::function<void(Node&)> backward_fn);

 private:
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  std::shared_ptr<Node> node_;
};

struct Parameter {
  std::string name;
  Tensor tensor;
};

using ParameterList = std::vector<Parameter>;

// Reverse-mode pass from a scalar loss. Leaf gradients accumulate across
// calls until zeroed; intermediate gradients are reset at the start of
// each pass.
void backward(const Tensor& loss);

// Nodes reachable from `root` that participate in differentiation, in
// execution order (inputs before outputs).
std::vector<Node*> build_tape(const Tensor& root);

bool grad_enabled();

// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

}  // namespace forge
