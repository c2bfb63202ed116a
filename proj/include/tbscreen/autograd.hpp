#pragma once

// Reverse-mode differentiation over Tensor values.
//
// Every op builds a Node holding its forward value, the nodes it consumed and
// a backward closure that owns whatever forward context it needs. Calling
// backward() on a root walks the graph in reverse topological order and
// accumulates gradients into the `grad` slot of each node's value.

#include <functional>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "tbscreen/tensor.hpp"

namespace tbscreen {

enum class OpKind {
  leaf,
  conv2d,
  matmul,
  relu,
  softmax,
  squash,
  add,
  mul,
  scale,
  reduce_sum,
  norm,
  margin_loss,
  cross_entropy,
  sigmoid,
  downsample,
  pad2d,
  bias_add,
  reshape,
  to_capsules,
  capsule_predict,
  route_sum,
  agreement,
  threshold,
};

std::string_view op_name(OpKind kind);

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  OpKind kind = OpKind::leaf;
  Tensor value;
  std::vector<NodePtr> inputs;
  // Reads value.grad() and accumulates into each input's gradient. Empty for
  // leaves and for ops that are not differentiable.
  std::function<void(Node&)> backward;
  bool requires_grad = false;
};

/// Handle to a graph node. Cheap to copy; copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  Tensor& value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  OpKind kind() const { return node_->kind; }
  bool requires_grad() const { return node_->requires_grad; }
  std::span<const double> grad() const { return node_->value.grad(); }
  bool has_grad() const { return node_->value.has_grad(); }

  const NodePtr& node() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  NodePtr node_;
};

/// Leaf that receives a gradient on backward.
Var parameter(Tensor value);
/// Leaf that does not.
Var constant(Tensor value);

/// Back-propagates from `root`. A one-element root is seeded with 1; any
/// other root needs an explicit seed of its shape.
void backward(const Var& root);
void backward(const Var& root, const Tensor& seed);

// ---------------------------------------------------------------------------
// Differentiable ops.

/// Valid (unpadded) 2-D convolution: input [C,H,W], kernels [O,C,k,k].
Var conv2d(const Var& input, const Var& kernels, std::size_t stride);
Var matmul(const Var& a, const Var& b);
Var relu(const Var& x);
Var sigmoid(const Var& x);
/// Softmax along `axis`, max-shifted.
Var softmax(const Var& x, std::size_t axis);
/// Capsule nonlinearity along the last axis.
Var squash(const Var& s);
Var add(const Var& a, const Var& b);
/// Elementwise product of equal shapes.
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, double factor);
/// Sum of all elements, shape [1].
Var reduce_sum(const Var& x);
/// Euclidean norm along the last axis; the gradient at a zero vector is 0.
Var norm(const Var& x);

struct MarginLossParams {
  double m_plus = 0.9;
  double m_minus = 0.1;
  double lambda = 0.5;
};
/// Capsule margin loss summed over classes. `target` must be one-hot.
Var margin_loss(const Var& class_lengths, const Tensor& target, const MarginLossParams& p = {});
/// Softmax + negative log likelihood of class `target`, shape [1].
Var cross_entropy(const Var& logits, std::size_t target);

/// Mean pooling over non-overlapping factor×factor blocks of [C,H,W].
Var downsample(const Var& x, std::size_t factor);
/// Zero padding of `pad` pixels on every side of [C,H,W].
Var pad2d(const Var& x, std::size_t pad);
/// Adds bias[c] to every element of channel c of x[C,...].
Var bias_add(const Var& x, const Var& bias);
Var reshape(const Var& x, Shape shape);

/// [caps_channels*dim, H, W] feature maps -> [caps_channels*H*W, dim]
/// capsules; capsule (c, y, x) sits at row (c*H + y)*W + x.
Var to_capsules(const Var& x, std::size_t dim);
/// Prediction vectors: u [N,Din], W [N,J,Dout,Din] -> [N,J,Dout].
Var capsule_predict(const Var& u, const Var& weights);
/// Coupling-weighted sum: c [N,J], u_hat [N,J,D] -> [J,D].
Var route_sum(const Var& coupling, const Var& u_hat);
/// Agreement: u_hat [N,J,D], v [J,D] -> [N,J] dot products.
Var agreement(const Var& u_hat, const Var& v);

/// Heaviside step (x >= t -> 1). Not differentiable: back-propagating through
/// it raises UnsupportedError.
Var threshold(const Var& x, double t);

}  // namespace tbscreen
