#pragma once

#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tailcast::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape) noexcept;
std::string shape_string(const Shape& shape);

// Dense row-major f64 tensor with value semantics.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& vector() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double item() const;

  void fill(double v);
  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

struct Node;

// Handle to a value in the dynamic computation graph.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  // Leaf whose gradient is accumulated by backward().
  static Var parameter(Tensor value);
  static Var constant(Tensor value);

  const Tensor& value() const;
  Tensor& mutable_value();
  // Accumulated gradient; zeros when the node was never reached.
  const Tensor& grad() const;
  void zero_grad();
  bool requires_grad() const;
  const Shape& shape() const { return value().shape(); }
  const std::shared_ptr<Node>& node() const noexcept { return node_; }
  explicit operator bool() const noexcept { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

struct Node {
  Tensor value;
  Tensor grad;  // allocated lazily, same shape as value
  bool requires_grad = false;
  bool is_leaf = true;
  bool consumed = false;  // set on the root after backward()
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  Tensor& grad_buffer();
};

// Disables graph recording on this thread while alive (inference).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};
bool grad_enabled() noexcept;

// Reverse-mode sweep from a scalar. Each graph supports one sweep: calling backward twice
// on the same root throws BackwardTwice, since intermediate closures are released.
void backward(const Var& loss);

// --- ops --------------------------------------------------------------------------------
// Binary elementwise ops accept rhs whose shape equals lhs or a trailing suffix of it
// (broadcast over leading dimensions).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);
// c - a
Var rsub_scalar(double c, const Var& a);

// [..., k] x [k, n] -> [..., n]
Var matmul(const Var& a, const Var& b);
// [b, m, k] x [b, k, n] -> [b, m, n]
Var bmm(const Var& a, const Var& b);

// Derivative at exactly 0 is taken as 1.
Var leaky_relu(const Var& a, double slope);
Var sigmoid(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
// Gradient passes only where lo < a < hi.
Var clamp(const Var& a, double lo, double hi);

Var sum(const Var& a);
Var mean(const Var& a);

// Softmax over the last dimension restricted to entries where mask != 0; masked outputs are
// exactly 0. mask shape must be a trailing suffix of a's shape (covering at least the last dim).
Var masked_softmax(const Var& a, const Tensor& mask);

Var concat_last_dim(const std::vector<Var>& parts);
// [..., n] and [..., n] -> [..., n, n] with out[..., i, j] = s[..., i] + t[..., j]
Var pairwise_sum(const Var& s, const Var& t);
Var reshape(const Var& a, Shape shape);

// --- gradient checking ------------------------------------------------------------------
// max over parameter entries of |analytic - central difference| / max(|analytic|, |fd|, 1e-8).
// The function must be deterministic; evaluation points on a non-differentiable kink should be
// perturbed away by the caller since finite differences are meaningless there.
double grad_check(const std::function<Var(const std::vector<Var>&)>& f, std::vector<Var> params, double h = 1e-5);

}  // namespace tailcast::ad
