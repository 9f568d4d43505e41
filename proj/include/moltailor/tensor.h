#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "moltailor/error.h"

namespace moltailor {

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class NonFiniteValue : public Error {
 public:
  using Error::Error;
};

class DisconnectedGraph : public Error {
 public:
  using Error::Error;
};

using Shape = std::vector<int>;

std::string shape_string(const Shape& s);
std::size_t shape_size(const Shape& s);

// A recorded value. Nodes created while gradients are enabled and with at
// least one parent that requires grad keep their parents and a backward
// closure; the graph is the tape.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated on first accumulation
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, double value, bool requires_grad = false);
  static Tensor from(const Shape& shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int axis) const;  // negative axes count from the end
  std::size_t size() const { return node_->value.size(); }

  std::span<const double> data() const { return node_->value; }
  // Direct write access, for initialisation and optimizer updates only.
  std::span<double> mutable_data() { return node_->value; }
  double item() const;
  double at(std::initializer_list<int> index) const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return !node_->grad.empty(); }
  // Zeros when nothing has been accumulated.
  std::span<const double> grad() const;
  std::span<double> mutable_grad() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad.clear(); }

  // Reverse pass from this scalar. Throws DisconnectedGraph when nothing
  // upstream requires grad.
  void backward() const;

  // Same values, no history.
  Tensor detach() const;

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Disables recording for the lifetime of the guard (per thread).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Enables ops::dropout on this thread while alive; masks are drawn from a
// generator seeded with `seed`. Outside a scope dropout is the identity.
class DropoutScope {
 public:
  DropoutScope(double p, std::uint64_t seed);
  ~DropoutScope();
  DropoutScope(const DropoutScope&) = delete;
  DropoutScope& operator=(const DropoutScope&) = delete;

  struct State;

 private:
  std::unique_ptr<State> state_;
  State* previous_;
};

namespace ops {

// (..., m, k) x (k, n), or batched (b..., m, k) x (b..., k, n).
Tensor matmul(const Tensor& a, const Tensor& b);
// a x b^T on the last two axes with equal leading axes.
Tensor matmul_nt(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// x + bias along the last axis.
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor scale(const Tensor& x, double s);

Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);  // erf form
// Inverted dropout inside a DropoutScope, identity otherwise.
Tensor dropout(const Tensor& x);
Tensor softmax(const Tensor& x, int axis = -1);

// Normalises over the last axis. gamma/beta may be undefined (no affine).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// Rows of table (V, d) for ids laid out in ids_shape; result ids_shape + {d}.
Tensor embedding(const Tensor& table, const std::vector<int>& ids, const Shape& ids_shape);

Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& x, int axis, int begin, int end);
Tensor permute(const Tensor& x, const std::vector<int>& perm);
Tensor transpose(const Tensor& x, int axis0, int axis1);
Tensor reshape(const Tensor& x, const Shape& shape);

// scores (b, h, q, k) + bias (b, k) broadcast over heads and queries. The
// bias is a constant.
Tensor add_key_bias(const Tensor& scores, const std::vector<double>& bias);

Tensor sum(const Tensor& x);
Tensor sum_axis(const Tensor& x, int axis);
Tensor mean(const Tensor& x);
// mean((pred - target)^2) over all elements.
Tensor mse(const Tensor& pred, const Tensor& target);

}  // namespace ops
}  // namespace moltailor
