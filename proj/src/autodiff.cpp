#include "autodiff.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "error.hpp"

namespace tailcast::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

thread_local bool t_grad_enabled = true;

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw Error(ErrorKind::ShapeMismatch, std::string(op) + ": " + shape_string(a) + " vs " + shape_string(b));
}

bool is_suffix(const Shape& full, const Shape& tail) {
  if (tail.size() > full.size()) return false;
  return std::equal(tail.begin(), tail.end(), full.end() - static_cast<std::ptrdiff_t>(tail.size()));
}

Var make_result(const char* op, Tensor value, std::vector<std::shared_ptr<Node>> inputs,
                std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = op;
  const bool needs = t_grad_enabled && std::any_of(inputs.begin(), inputs.end(),
                                                   [](const auto& n) { return n->requires_grad; });
  if (needs) {
    node->requires_grad = true;
    node->is_leaf = false;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward_fn);
  }
  return Var(std::move(node));
}

Node& in(Node& self, std::size_t k) { return *self.inputs[k]; }

template <class Fwd, class Dfdx>
Var unary(const char* op, const Var& a, Fwd fwd, Dfdx dfdx) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
  return make_result(op, std::move(y), {a.node()}, [dfdx](Node& self) {
    Node& xa = in(self, 0);
    if (!xa.requires_grad) return;
    Tensor& g = xa.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * dfdx(xa.value[i], self.value[i]);
  });
}

struct Broadcast {
  std::size_t outer = 0;
  std::size_t inner = 0;
};

Broadcast broadcast(const char* op, const Tensor& a, const Tensor& b) {
  if (!is_suffix(a.shape(), b.shape())) shape_error(op, a.shape(), b.shape());
  Broadcast bc;
  bc.inner = b.size();
  bc.outer = bc.inner ? a.size() / bc.inner : 0;
  return bc;
}

// Elementwise binary op with suffix broadcasting of b. grad_a/grad_b receive (x, y, out).
template <class Fwd, class Ga, class Gb>
Var binary(const char* op, const Var& a, const Var& b, Fwd fwd, Ga grad_a, Gb grad_b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  const Broadcast bc = broadcast(op, x, y);
  Tensor out(x.shape());
  for (std::size_t o = 0; o < bc.outer; ++o)
    for (std::size_t i = 0; i < bc.inner; ++i) out[o * bc.inner + i] = fwd(x[o * bc.inner + i], y[i]);
  return make_result(op, std::move(out), {a.node(), b.node()}, [bc, grad_a, grad_b](Node& self) {
    Node& na = in(self, 0);
    Node& nb = in(self, 1);
    const Tensor& x = na.value;
    const Tensor& y = nb.value;
    if (na.requires_grad) {
      Tensor& g = na.grad_buffer();
      for (std::size_t o = 0; o < bc.outer; ++o)
        for (std::size_t i = 0; i < bc.inner; ++i) {
          const std::size_t k = o * bc.inner + i;
          g[k] += self.grad[k] * grad_a(x[k], y[i], self.value[k]);
        }
    }
    if (nb.requires_grad) {
      Tensor& g = nb.grad_buffer();
      for (std::size_t o = 0; o < bc.outer; ++o)
        for (std::size_t i = 0; i < bc.inner; ++i) {
          const std::size_t k = o * bc.inner + i;
          g[i] += self.grad[k] * grad_b(x[k], y[i], self.value[k]);
        }
    }
  });
}

}  // namespace

std::size_t shape_size(const Shape& shape) noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
  if (data_.size() != shape_size(shape_))
    throw Error(ErrorKind::ShapeMismatch, "value count " + std::to_string(data_.size()) + " does not match shape " +
                                              shape_string(shape_));
}

double Tensor::item() const {
  if (data_.size() != 1) throw Error(ErrorKind::ShapeMismatch, "item() on tensor of shape " + shape_string(shape_));
  return data_[0];
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor& Node::grad_buffer() {
  if (grad.size() != value.size() || grad.shape() != value.shape()) grad = Tensor(value.shape(), 0.0);
  return grad;
}

Var Var::parameter(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  return Var(std::move(n));
}

Var Var::constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Var(std::move(n));
}

const Tensor& Var::value() const { return node_->value; }
Tensor& Var::mutable_value() { return node_->value; }
const Tensor& Var::grad() const { return node_->grad_buffer(); }
void Var::zero_grad() { node_->grad_buffer().fill(0.0); }
bool Var::requires_grad() const { return node_->requires_grad; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool grad_enabled() noexcept { return t_grad_enabled; }

void backward(const Var& loss) {
  Node* root = loss.node().get();
  if (root->value.size() != 1)
    throw Error(ErrorKind::NonScalarLoss, "backward() needs a scalar, got shape " + shape_string(root->value.shape()));
  if (root->consumed) throw Error(ErrorKind::BackwardTwice, "graph already differentiated; rebuild it");
  if (!root->is_leaf) root->consumed = true;
  if (!root->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<std::shared_ptr<Node>> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<std::shared_ptr<Node>, std::size_t>> stack{{loss.node(), 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      auto child = node->inputs[next++];
      if (child->requires_grad && !child->is_leaf && seen.insert(child.get()).second) stack.emplace_back(child, 0);
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  root->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node& n = **it;
    if (n.backward) n.backward(n);
    n.backward = nullptr;
    // Interior gradients are scratch; a leaf root keeps its accumulated gradient.
    if (!n.is_leaf) n.grad = Tensor();
  }
}

Var add(const Var& a, const Var& b) {
  return binary("add", a, b, [](double x, double y) { return x + y; },
                [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Var sub(const Var& a, const Var& b) {
  return binary("sub", a, b, [](double x, double y) { return x - y; },
                [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

Var mul(const Var& a, const Var& b) {
  return binary("mul", a, b, [](double x, double y) { return x * y; },
                [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

Var div(const Var& a, const Var& b) {
  return binary("div", a, b, [](double x, double y) { return x / y; },
                [](double, double y, double) { return 1.0 / y; },
                [](double, double y, double out) { return -out / y; });
}

Var scale(const Var& a, double c) {
  return unary("scale", a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var add_scalar(const Var& a, double c) {
  return unary("add_scalar", a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var rsub_scalar(double c, const Var& a) {
  return unary("rsub_scalar", a, [c](double x) { return c - x; }, [](double, double) { return -1.0; });
}

Var leaky_relu(const Var& a, double slope) {
  return unary("leaky_relu", a, [slope](double x) { return x >= 0.0 ? x : slope * x; },
               [slope](double x, double) { return x >= 0.0 ? 1.0 : slope; });
}

Var sigmoid(const Var& a) {
  return unary("sigmoid", a,
               [](double x) {
                 if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
                 const double e = std::exp(x);
                 return e / (1.0 + e);
               },
               [](double, double y) { return y * (1.0 - y); });
}

Var exp(const Var& a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
  return unary("log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var clamp(const Var& a, double lo, double hi) {
  return unary("clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
               [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Var sum(const Var& a) {
  const Tensor& x = a.value();
  const double s = std::accumulate(x.values().begin(), x.values().end(), 0.0);
  return make_result("sum", Tensor::scalar(s), {a.node()}, [](Node& self) {
    Node& xa = in(self, 0);
    Tensor& g = xa.grad_buffer();
    const double d = self.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += d;
  });
}

Var mean(const Var& a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw Error(ErrorKind::ShapeMismatch, "mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var matmul(const Var& a, const Var& b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.rank() < 2 || y.rank() != 2 || x.shape().back() != y.dim(0)) shape_error("matmul", x.shape(), y.shape());
  const std::size_t k = y.dim(0), n = y.dim(1);
  const std::size_t m = x.size() / k;
  Shape out_shape = x.shape();
  out_shape.back() = n;
  Tensor out(out_shape);
  MapMat(out.data(), m, n).noalias() = CMapMat(x.data(), m, k) * CMapMat(y.data(), k, n);
  return make_result("matmul", std::move(out), {a.node(), b.node()}, [m, k, n](Node& self) {
    Node& na = in(self, 0);
    Node& nb = in(self, 1);
    CMapMat g(self.grad.data(), m, n);
    if (na.requires_grad) MapMat(na.grad_buffer().data(), m, k).noalias() += g * CMapMat(nb.value.data(), k, n).transpose();
    if (nb.requires_grad) MapMat(nb.grad_buffer().data(), k, n).noalias() += CMapMat(na.value.data(), m, k).transpose() * g;
  });
}

Var bmm(const Var& a, const Var& b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.rank() != 3 || y.rank() != 3 || x.dim(0) != y.dim(0) || x.dim(2) != y.dim(1))
    shape_error("bmm", x.shape(), y.shape());
  const std::size_t bs = x.dim(0), m = x.dim(1), k = x.dim(2), n = y.dim(2);
  Tensor out(Shape{bs, m, n});
  for (std::size_t i = 0; i < bs; ++i)
    MapMat(out.data() + i * m * n, m, n).noalias() =
        CMapMat(x.data() + i * m * k, m, k) * CMapMat(y.data() + i * k * n, k, n);
  return make_result("bmm", std::move(out), {a.node(), b.node()}, [bs, m, k, n](Node& self) {
    Node& na = in(self, 0);
    Node& nb = in(self, 1);
    for (std::size_t i = 0; i < bs; ++i) {
      CMapMat g(self.grad.data() + i * m * n, m, n);
      if (na.requires_grad)
        MapMat(na.grad_buffer().data() + i * m * k, m, k).noalias() +=
            g * CMapMat(nb.value.data() + i * k * n, k, n).transpose();
      if (nb.requires_grad)
        MapMat(nb.grad_buffer().data() + i * k * n, k, n).noalias() +=
            CMapMat(na.value.data() + i * m * k, m, k).transpose() * g;
    }
  });
}

Var masked_softmax(const Var& a, const Tensor& mask) {
  const Tensor& x = a.value();
  if (x.rank() < 1 || mask.rank() < 1 || !is_suffix(x.shape(), mask.shape()))
    shape_error("masked_softmax", x.shape(), mask.shape());
  const std::size_t n = x.shape().back();
  const std::size_t rows = n ? x.size() / n : 0;
  const std::size_t mask_rows = n ? mask.size() / n : 0;
  Tensor out(x.shape(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * n;
    const double* mr = mask.data() + (r % mask_rows) * n;
    double* yr = out.data() + r * n;
    double mx = -INFINITY;
    for (std::size_t j = 0; j < n; ++j)
      if (mr[j] != 0.0) mx = std::max(mx, xr[j]);
    if (mx == -INFINITY) throw Error(ErrorKind::EmptyMaskRow, "row " + std::to_string(r) + " has no unmasked entry");
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (mr[j] != 0.0) z += (yr[j] = std::exp(xr[j] - mx));
    for (std::size_t j = 0; j < n; ++j) yr[j] /= z;
  }
  return make_result("masked_softmax", std::move(out), {a.node()}, [rows, n](Node& self) {
    Node& xa = in(self, 0);
    Tensor& g = xa.grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * n;
      const double* dy = self.grad.data() + r * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += y[j] * dy[j];
      // Masked outputs are 0, so their gradient contribution vanishes automatically.
      for (std::size_t j = 0; j < n; ++j) g[r * n + j] += y[j] * (dy[j] - dot);
    }
  });
}

Var concat_last_dim(const std::vector<Var>& parts) {
  if (parts.empty()) throw Error(ErrorKind::ShapeMismatch, "concat of zero tensors");
  Shape lead = parts[0].shape();
  lead.pop_back();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  std::vector<std::shared_ptr<Node>> inputs;
  for (const auto& p : parts) {
    Shape s = p.shape();
    const std::size_t w = s.back();
    s.pop_back();
    if (s != lead) shape_error("concat_last_dim", parts[0].shape(), p.shape());
    widths.push_back(w);
    total += w;
    inputs.push_back(p.node());
  }
  const std::size_t rows = shape_size(lead);
  Shape out_shape = lead;
  out_shape.push_back(total);
  Tensor out(out_shape);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(v.data() + r * widths[k], widths[k], out.data() + r * total + offset);
    offset += widths[k];
  }
  return make_result("concat_last_dim", std::move(out), std::move(inputs), [widths, rows, total](Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      Node& p = in(self, k);
      if (p.requires_grad) {
        Tensor& g = p.grad_buffer();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < widths[k]; ++j) g[r * widths[k] + j] += self.grad[r * total + off + j];
      }
      off += widths[k];
    }
  });
}

Var pairwise_sum(const Var& s, const Var& t) {
  const Tensor& x = s.value();
  const Tensor& y = t.value();
  if (x.shape() != y.shape() || x.rank() < 1) shape_error("pairwise_sum", x.shape(), y.shape());
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.size() / n;
  Shape out_shape = x.shape();
  out_shape.push_back(n);
  Tensor out(out_shape);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) out[(r * n + i) * n + j] = x[r * n + i] + y[r * n + j];
  return make_result("pairwise_sum", std::move(out), {s.node(), t.node()}, [rows, n](Node& self) {
    Node& ns = in(self, 0);
    Node& nt = in(self, 1);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t i = 0; i < n; ++i) {
        const double* g = self.grad.data() + (r * n + i) * n;
        if (ns.requires_grad) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[j];
          ns.grad_buffer()[r * n + i] += acc;
        }
        if (nt.requires_grad) {
          Tensor& gt = nt.grad_buffer();
          for (std::size_t j = 0; j < n; ++j) gt[r * n + j] += g[j];
        }
      }
  });
}

Var reshape(const Var& a, Shape shape) {
  if (shape_size(shape) != a.value().size()) shape_error("reshape", a.shape(), shape);
  Tensor out(std::move(shape), a.value().vector());
  return make_result("reshape", std::move(out), {a.node()}, [](Node& self) {
    Node& xa = in(self, 0);
    Tensor& g = xa.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

double grad_check(const std::function<Var(const std::vector<Var>&)>& f, std::vector<Var> params, double h) {
  for (auto& p : params) p.zero_grad();
  backward(f(params));
  std::vector<Tensor> analytic;
  for (const auto& p : params) analytic.push_back(p.grad());

  double worst = 0.0;
  NoGradGuard no_grad;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& v = params[k].mutable_value();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double orig = v[i];
      const double up = orig + h, down = orig - h;
      v[i] = up;
      const double fp = f(params).value().item();
      v[i] = down;
      const double fm = f(params).value().item();
      v[i] = orig;
      // Divide by the step actually taken, which removes the rounding of orig +/- h.
      const double fd = (fp - fm) / (up - down);
      const double an = analytic[k][i];
      const double denom = std::max({std::abs(an), std::abs(fd), 1e-8});
      worst = std::max(worst, std::abs(an - fd) / denom);
    }
  }
  return worst;
}

}  // namespace tailcast::ad
