#include "moltailor/tensor.h"

#include "moltailor/random.h"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace moltailor {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

thread_local bool t_grad_enabled = true;

int norm_axis(int axis, int rank) {
  const int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) throw ShapeMismatch("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  return a;
}

void check_finite(const char* op, const std::vector<double>& v) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw NonFiniteValue(std::string("non-finite value produced by ") + op + " at element " + std::to_string(i));
    }
  }
}

// Output node wired to `parents` when any of them needs a gradient.
std::shared_ptr<Node> make_node(const char* op, Shape shape, std::vector<double> value,
                                std::initializer_list<const Tensor*> parents) {
  check_finite(op, value);
  auto n = std::make_shared<Node>();
  n->op = op;
  n->shape = std::move(shape);
  n->value = std::move(value);
  if (t_grad_enabled) {
    for (const Tensor* p : parents) n->requires_grad = n->requires_grad || p->requires_grad();
    if (n->requires_grad) {
      for (const Tensor* p : parents) n->parents.push_back(p->node_ptr());
    }
  }
  return n;
}

std::shared_ptr<Node> make_node(const char* op, Shape shape, std::vector<double> value,
                                const std::vector<Tensor>& parents) {
  check_finite(op, value);
  auto n = std::make_shared<Node>();
  n->op = op;
  n->shape = std::move(shape);
  n->value = std::move(value);
  if (t_grad_enabled) {
    for (const Tensor& p : parents) n->requires_grad = n->requires_grad || p.requires_grad();
    if (n->requires_grad) {
      for (const Tensor& p : parents) n->parents.push_back(p.node_ptr());
    }
  }
  return n;
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeMismatch(std::string(op) + ": " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

// outer x axis x inner decomposition
struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, int axis) {
  AxisSplit r;
  for (int i = 0; i < axis; ++i) r.outer *= s[i];
  r.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

template <typename F>
Tensor unary(const char* op, const Tensor& x, F f) {
  std::vector<double> out(x.size());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return Tensor(make_node(op, x.shape(), std::move(out), {&x}));
}

}  // namespace

std::string shape_string(const Shape& s) {
  std::ostringstream o;
  o << '(';
  for (std::size_t i = 0; i < s.size(); ++i) o << (i ? "," : "") << s[i];
  o << ')';
  return o.str();
}

std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) {
    if (d < 0) throw ShapeMismatch("negative dimension in " + shape_string(s));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) { return full(shape, 0.0, requires_grad); }

Tensor Tensor::full(const Shape& shape, double value, bool requires_grad) {
  return from(shape, std::vector<double>(shape_size(shape), value), requires_grad);
}

Tensor Tensor::from(const Shape& shape, std::vector<double> values, bool requires_grad) {
  if (values.size() != shape_size(shape)) {
    throw ShapeMismatch("buffer of " + std::to_string(values.size()) + " values for shape " + shape_string(shape));
  }
  check_finite("from", values);
  auto n = std::make_shared<Node>();
  n->shape = shape;
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v, bool requires_grad) { return from({}, {v}, requires_grad); }

int Tensor::dim(int axis) const { return shape()[norm_axis(axis, rank())]; }

double Tensor::item() const {
  if (size() != 1) throw ShapeMismatch("item() on tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

double Tensor::at(std::initializer_list<int> index) const {
  if (static_cast<int>(index.size()) != rank()) throw ShapeMismatch("index rank mismatch");
  std::size_t flat = 0;
  int axis = 0;
  for (int i : index) {
    if (i < 0 || i >= shape()[axis]) throw ShapeMismatch("index out of range");
    flat = flat * shape()[axis] + i;
    ++axis;
  }
  return node_->value[flat];
}

std::span<const double> Tensor::grad() const {
  if (node_->grad.empty()) node_->grad.assign(node_->value.size(), 0.0);
  return node_->grad;
}

Tensor Tensor::detach() const { return from(shape(), node_->value, false); }

void Tensor::backward() const {
  if (size() != 1) throw ShapeMismatch("backward() needs a scalar, got " + shape_string(shape()));
  if (!node_->requires_grad) throw DisconnectedGraph("loss does not depend on any tensor that requires grad");

  // Post-order DFS gives a topological order; reverse it for the sweep.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

struct DropoutScope::State {
  double p;
  Rng rng;
};

namespace {
thread_local DropoutScope::State* t_dropout = nullptr;
}

DropoutScope::DropoutScope(double p, std::uint64_t seed) : state_(new State{p, Rng(seed)}), previous_(t_dropout) {
  if (!(p >= 0.0 && p < 1.0)) throw Error("dropout probability must be in [0, 1)");
  t_dropout = state_.get();
}

DropoutScope::~DropoutScope() { t_dropout = previous_; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool grad_enabled() { return t_grad_enabled; }

namespace ops {

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2) throw ShapeMismatch("matmul needs rank >= 2");
  const int m = a.dim(-2), k = a.dim(-1);
  if (b.dim(-2) != k) {
    throw ShapeMismatch("matmul inner dims: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  const int n = b.dim(-1);
  Shape out_shape = a.shape();
  out_shape.back() = n;

  if (b.rank() == 2) {
    // Fold leading axes of a into rows.
    const std::size_t rows = a.size() / k;
    std::vector<double> out(rows * n);
    MutMap(out.data(), rows, n).noalias() = ConstMap(a.data().data(), rows, k) * ConstMap(b.data().data(), k, n);
    auto node = make_node("matmul", out_shape, std::move(out), {&a, &b});
    if (node->requires_grad) {
      node->backward_fn = [rows, k, n](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        ConstMap g(self.grad.data(), rows, n);
        if (pa.requires_grad) MutMap(pa.grad_buffer().data(), rows, k).noalias() += g * ConstMap(pb.value.data(), k, n).transpose();
        if (pb.requires_grad) MutMap(pb.grad_buffer().data(), k, n).noalias() += ConstMap(pa.value.data(), rows, k).transpose() * g;
      };
    }
    return Tensor(node);
  }

  if (a.rank() != b.rank() || !std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin())) {
    throw ShapeMismatch("batched matmul leading dims: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  const std::size_t batch = a.size() / (static_cast<std::size_t>(m) * k);
  std::vector<double> out(batch * m * n);
  for (std::size_t i = 0; i < batch; ++i) {
    MutMap(out.data() + i * m * n, m, n).noalias() =
        ConstMap(a.data().data() + i * m * k, m, k) * ConstMap(b.data().data() + i * k * n, k, n);
  }
  auto node = make_node("matmul", out_shape, std::move(out), {&a, &b});
  if (node->requires_grad) {
    node->backward_fn = [batch, m, k, n](Node& self) {
      Node& pa = *self.parents[0];
      Node& pb = *self.parents[1];
      for (std::size_t i = 0; i < batch; ++i) {
        ConstMap g(self.grad.data() + i * m * n, m, n);
        if (pa.requires_grad)
          MutMap(pa.grad_buffer().data() + i * m * k, m, k).noalias() += g * ConstMap(pb.value.data() + i * k * n, k, n).transpose();
        if (pb.requires_grad)
          MutMap(pb.grad_buffer().data() + i * k * n, k, n).noalias() += ConstMap(pa.value.data() + i * m * k, m, k).transpose() * g;
      }
    };
  }
  return Tensor(node);
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || a.rank() != b.rank() || !std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin()) ||
      a.dim(-1) != b.dim(-1)) {
    throw ShapeMismatch("matmul_nt: " + shape_string(a.shape()) + " x " + shape_string(b.shape()) + "^T");
  }
  const int m = a.dim(-2), k = a.dim(-1), n = b.dim(-2);
  const std::size_t batch = a.size() / (static_cast<std::size_t>(m) * k);
  Shape out_shape = a.shape();
  out_shape.back() = n;
  std::vector<double> out(batch * m * n);
  for (std::size_t i = 0; i < batch; ++i) {
    MutMap(out.data() + i * m * n, m, n).noalias() =
        ConstMap(a.data().data() + i * m * k, m, k) * ConstMap(b.data().data() + i * n * k, n, k).transpose();
  }
  auto node = make_node("matmul_nt", out_shape, std::move(out), {&a, &b});
  if (node->requires_grad) {
    node->backward_fn = [batch, m, k, n](Node& self) {
      Node& pa = *self.parents[0];
      Node& pb = *self.parents[1];
      for (std::size_t i = 0; i < batch; ++i) {
        ConstMap g(self.grad.data() + i * m * n, m, n);
        if (pa.requires_grad)
          MutMap(pa.grad_buffer().data() + i * m * k, m, k).noalias() += g * ConstMap(pb.value.data() + i * n * k, n, k);
        if (pb.requires_grad)
          MutMap(pb.grad_buffer().data() + i * n * k, n, k).noalias() += g.transpose() * ConstMap(pa.value.data() + i * m * k, m, k);
      }
    };
  }
  return Tensor(node);
}

namespace {

Tensor add_scaled(const char* op, const Tensor& a, const Tensor& b, double sb) {
  require_same_shape(op, a, b);
  std::vector<double> out(a.size());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + sb * y[i];
  auto node = make_node(op, a.shape(), std::move(out), {&a, &b});
  if (node->requires_grad) {
    node->backward_fn = [sb](Node& self) {
      for (int p = 0; p < 2; ++p) {
        Node& parent = *self.parents[p];
        if (!parent.requires_grad) continue;
        auto& g = parent.grad_buffer();
        const double s = p == 0 ? 1.0 : sb;
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
      }
    };
  }
  return Tensor(node);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return add_scaled("add", a, b, 1.0); }
Tensor sub(const Tensor& a, const Tensor& b) { return add_scaled("sub", a, b, -1.0); }

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.size());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  auto node = make_node("mul", a.shape(), std::move(out), {&a, &b});
  if (node->requires_grad) {
    node->backward_fn = [](Node& self) {
      Node& pa = *self.parents[0];
      Node& pb = *self.parents[1];
      if (pa.requires_grad) {
        auto& g = pa.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
      }
      if (pb.requires_grad) {
        auto& g = pb.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
      }
    };
  }
  return Tensor(node);
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (bias.rank() != 1 || x.rank() < 1 || bias.dim(0) != x.dim(-1)) {
    throw ShapeMismatch("add_bias: " + shape_string(x.shape()) + " + " + shape_string(bias.shape()));
  }
  const std::size_t d = bias.size(), rows = x.size() / d;
  std::vector<double> out(x.size());
  const auto in = x.data(), b = bias.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = in[r * d + j] + b[j];
  auto node = make_node("add_bias", x.shape(), std::move(out), {&x, &bias});
  if (node->requires_grad) {
    node->backward_fn = [rows, d](Node& self) {
      Node& px = *self.parents[0];
      Node& pb = *self.parents[1];
      if (px.requires_grad) {
        auto& g = px.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      }
      if (pb.requires_grad) {
        auto& g = pb.grad_buffer();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < d; ++j) g[j] += self.grad[r * d + j];
      }
    };
  }
  return Tensor(node);
}

Tensor scale(const Tensor& x, double s) {
  Tensor out = unary("scale", x, [s](double v) { return s * v; });
  if (out.requires_grad()) {
    out.node()->backward_fn = [s](Node& self) {
      auto& g = self.parents[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
    };
  }
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = unary("relu", x, [](double v) { return v > 0 ? v : 0.0; });
  if (out.requires_grad()) {
    out.node()->backward_fn = [](Node& self) {
      Node& p = *self.parents[0];
      auto& g = p.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += p.value[i] > 0 ? self.grad[i] : 0.0;
    };
  }
  return out;
}

Tensor gelu(const Tensor& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  const auto in = x.data();
  std::vector<double> out(x.size());
  // derivative kept from the forward pass; erf dominates the cost
  std::vector<double> slope;
  const bool keep = grad_enabled() && x.requires_grad();
  if (keep) slope.resize(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = in[i];
    const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
    out[i] = v * cdf;
    if (keep) slope[i] = cdf + v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
  }
  auto node = make_node("gelu", x.shape(), std::move(out), {&x});
  if (node->requires_grad) {
    node->backward_fn = [slope = std::move(slope)](Node& self) {
      auto& g = self.parents[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * slope[i];
    };
  }
  return Tensor(node);
}

Tensor dropout(const Tensor& x) {
  if (!t_dropout || t_dropout->p == 0.0) return x;
  const double keep = 1.0 - t_dropout->p, scale = 1.0 / keep;
  std::vector<double> mask(x.size());
  for (double& m : mask) m = t_dropout->rng.uniform() < keep ? scale : 0.0;
  std::vector<double> out(x.size());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] * mask[i];
  auto node = make_node("dropout", x.shape(), std::move(out), {&x});
  if (node->requires_grad) {
    node->backward_fn = [mask = std::move(mask)](Node& self) {
      auto& g = self.parents[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
    };
  }
  return Tensor(node);
}

Tensor softmax(const Tensor& x, int axis) {
  const int ax = norm_axis(axis, x.rank());
  const AxisSplit s = split_at(x.shape(), ax);
  if (s.len == 0) throw ShapeMismatch("softmax over an empty axis");
  std::vector<double> out(x.size());
  const auto in = x.data();
  if (s.inner == 1) {
    // contiguous rows: vectorised exp
    using Row = Eigen::Map<const Eigen::ArrayXd>;
    for (std::size_t o = 0; o < s.outer; ++o) {
      const Row r(in.data() + o * s.len, static_cast<Eigen::Index>(s.len));
      Eigen::Map<Eigen::ArrayXd> dst(out.data() + o * s.len, static_cast<Eigen::Index>(s.len));
      // Eigen clamps exp near -708 instead of underflowing; masked keys must stay exactly 0
      const Eigen::ArrayXd shifted = r - r.maxCoeff();
      dst = (shifted < -708.0).select(0.0, shifted.exp());
      double z = 0.0;  // fixed order; Eigen's redux order depends on alignment
      for (std::size_t j = 0; j < s.len; ++j) z += dst[j];
      dst /= z;
    }
  }
  for (std::size_t o = 0; o < s.outer && s.inner != 1; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.len * s.inner + i;
      double mx = in[base];
      for (std::size_t j = 1; j < s.len; ++j) mx = std::max(mx, in[base + j * s.inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < s.len; ++j) {
        const double e = std::exp(in[base + j * s.inner] - mx);
        out[base + j * s.inner] = e;
        z += e;
      }
      for (std::size_t j = 0; j < s.len; ++j) out[base + j * s.inner] /= z;
    }
  }
  auto node = make_node("softmax", x.shape(), std::move(out), {&x});
  if (node->requires_grad) {
    node->backward_fn = [s](Node& self) {
      auto& g = self.parents[0]->grad_buffer();
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t i = 0; i < s.inner; ++i) {
          const std::size_t base = o * s.len * s.inner + i;
          double dot = 0.0;
          for (std::size_t j = 0; j < s.len; ++j) dot += self.grad[base + j * s.inner] * self.value[base + j * s.inner];
          for (std::size_t j = 0; j < s.len; ++j) {
            const std::size_t k = base + j * s.inner;
            g[k] += self.value[k] * (self.grad[k] - dot);
          }
        }
      }
    };
  }
  return Tensor(node);
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t d = x.dim(-1), rows = x.size() / d;
  const bool affine = gamma.defined();
  if (affine && (gamma.size() != d || !beta.defined() || beta.size() != d)) {
    throw ShapeMismatch("layer_norm affine parameters must have the last-axis width");
  }
  std::vector<double> out(x.size());
  auto xhat = std::make_shared<std::vector<double>>(x.size());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  const auto in = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = in.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (row[j] - mu) * rs;
      (*xhat)[r * d + j] = h;
      out[r * d + j] = affine ? h * gamma.data()[j] + beta.data()[j] : h;
    }
  }
  std::shared_ptr<Node> node = affine ? make_node("layer_norm", x.shape(), std::move(out), {&x, &gamma, &beta})
                                      : make_node("layer_norm", x.shape(), std::move(out), {&x});
  if (node->requires_grad) {
    node->backward_fn = [rows, d, affine, xhat, rstd](Node& self) {
      Node& px = *self.parents[0];
      const double* gam = affine ? self.parents[1]->value.data() : nullptr;
      std::vector<double> dxhat(d);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* gy = self.grad.data() + r * d;
        const double* h = xhat->data() + r * d;
        if (affine) {
          if (self.parents[1]->requires_grad) {
            auto& gg = self.parents[1]->grad_buffer();
            for (std::size_t j = 0; j < d; ++j) gg[j] += gy[j] * h[j];
          }
          if (self.parents[2]->requires_grad) {
            auto& gb = self.parents[2]->grad_buffer();
            for (std::size_t j = 0; j < d; ++j) gb[j] += gy[j];
          }
        }
        if (!px.requires_grad) continue;
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          dxhat[j] = affine ? gy[j] * gam[j] : gy[j];
          m1 += dxhat[j];
          m2 += dxhat[j] * h[j];
        }
        m1 /= static_cast<double>(d);
        m2 /= static_cast<double>(d);
        auto& gx = px.grad_buffer();
        for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += (*rstd)[r] * (dxhat[j] - m1 - h[j] * m2);
      }
    };
  }
  return Tensor(node);
}

Tensor embedding(const Tensor& table, const std::vector<int>& ids, const Shape& ids_shape) {
  if (table.rank() != 2) throw ShapeMismatch("embedding table must be 2-D");
  if (ids.size() != shape_size(ids_shape)) throw ShapeMismatch("embedding ids do not match their shape");
  const int vocab = table.dim(0);
  const std::size_t d = table.dim(1);
  std::vector<double> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= vocab) throw ShapeMismatch("embedding id " + std::to_string(ids[i]) + " out of range");
    std::copy_n(table.data().data() + ids[i] * d, d, out.data() + i * d);
  }
  Shape shape = ids_shape;
  shape.push_back(static_cast<int>(d));
  auto node = make_node("embedding", shape, std::move(out), {&table});
  if (node->requires_grad) {
    node->backward_fn = [ids, d](Node& self) {
      auto& g = self.parents[0]->grad_buffer();
      for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t j = 0; j < d; ++j) g[ids[i] * d + j] += self.grad[i * d + j];
    };
  }
  return Tensor(node);
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeMismatch("concat of nothing");
  const int ax = norm_axis(axis, parts[0].rank());
  Shape shape = parts[0].shape();
  shape[ax] = 0;
  for (const Tensor& p : parts) {
    Shape a = p.shape(), b = parts[0].shape();
    if (a.size() != b.size()) throw ShapeMismatch("concat rank mismatch");
    a[ax] = b[ax] = 0;
    if (a != b) throw ShapeMismatch("concat: " + shape_string(p.shape()) + " vs " + shape_string(parts[0].shape()));
    shape[ax] += p.dim(ax);
  }
  const AxisSplit s = split_at(shape, ax);
  std::vector<std::size_t> widths;  // contiguous chunk per outer index
  for (const Tensor& p : parts) widths.push_back(static_cast<std::size_t>(p.dim(ax)) * s.inner);
  const std::size_t row = s.len * s.inner;
  std::vector<double> out(shape_size(shape));
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto src = parts[k].data();
    for (std::size_t o = 0; o < s.outer; ++o) std::copy_n(src.data() + o * widths[k], widths[k], out.data() + o * row + offset);
    offset += widths[k];
  }
  auto node = make_node("concat", shape, std::move(out), parts);
  if (node->requires_grad) {
    node->backward_fn = [widths, row, outer = s.outer](Node& self) {
      std::size_t off = 0;
      for (std::size_t k = 0; k < widths.size(); ++k) {
        Node& p = *self.parents[k];
        if (p.requires_grad) {
          auto& g = p.grad_buffer();
          for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t j = 0; j < widths[k]; ++j) g[o * widths[k] + j] += self.grad[o * row + off + j];
        }
        off += widths[k];
      }
    };
  }
  return Tensor(node);
}

Tensor slice(const Tensor& x, int axis, int begin, int end) {
  const int ax = norm_axis(axis, x.rank());
  if (begin < 0 || end > x.dim(ax) || begin > end) {
    throw ShapeMismatch("slice [" + std::to_string(begin) + "," + std::to_string(end) + ") of " + shape_string(x.shape()));
  }
  const AxisSplit s = split_at(x.shape(), ax);
  Shape shape = x.shape();
  shape[ax] = end - begin;
  const std::size_t width = static_cast<std::size_t>(end - begin) * s.inner;
  const std::size_t row = s.len * s.inner, off = static_cast<std::size_t>(begin) * s.inner;
  std::vector<double> out(s.outer * width);
  const auto in = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) std::copy_n(in.data() + o * row + off, width, out.data() + o * width);
  auto node = make_node("slice", shape, std::move(out), {&x});
  if (node->requires_grad) {
    node->backward_fn = [width, row, off, outer = s.outer](Node& self) {
      auto& g = self.parents[0]->grad_buffer();
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t j = 0; j < width; ++j) g[o * row + off + j] += self.grad[o * width + j];
    };
  }
  return Tensor(node);
}

Tensor permute(const Tensor& x, const std::vector<int>& perm) {
  const int r = x.rank();
  if (static_cast<int>(perm.size()) != r) throw ShapeMismatch("permute rank mismatch");
  std::vector<bool> used(r, false);
  for (int p : perm) {
    if (p < 0 || p >= r || used[p]) throw ShapeMismatch("invalid permutation");
    used[p] = true;
  }
  Shape shape(r);
  std::vector<std::size_t> in_stride(r, 1);
  for (int i = r - 2; i >= 0; --i) in_stride[i] = in_stride[i + 1] * x.shape()[i + 1];
  std::vector<std::size_t> stride(r);  // input stride for each output axis
  for (int i = 0; i < r; ++i) {
    shape[i] = x.shape()[perm[i]];
    stride[i] = in_stride[perm[i]];
  }
  // map[out_flat] = in_flat
  auto map = std::make_shared<std::vector<std::size_t>>(x.size());
  std::vector<int> idx(r, 0);
  std::size_t src = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    (*map)[k] = src;
    for (int a = r - 1; a >= 0; --a) {
      ++idx[a];
      src += stride[a];
      if (idx[a] < shape[a]) break;
      src -= stride[a] * shape[a];
      idx[a] = 0;
    }
  }
  std::vector<double> out(x.size());
  const auto in = x.data();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = in[(*map)[k]];
  auto node = make_node("permute", shape, std::move(out), {&x});
  if (node->requires_grad) {
    node->backward_fn = [map](Node& self) {
      auto& g = self.parents[0]->grad_buffer();
      for (std::size_t k = 0; k < map->size(); ++k) g[(*map)[k]] += self.grad[k];
    };
  }
  return Tensor(node);
}

Tensor transpose(const Tensor& x, int axis0, int axis1) {
  std::vector<int> perm(x.rank());
  std::iota(perm.begin(), perm.end(), 0);
  std::swap(perm[norm_axis(axis0, x.rank())], perm[norm_axis(axis1, x.rank())]);
  return permute(x, perm);
}

Tensor reshape(const Tensor& x, const Shape& shape) {
  if (shape_size(shape) != x.size()) {
    throw ShapeMismatch("reshape " + shape_string(x.shape()) + " -> " + shape_string(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  auto node = make_node("reshape", shape, std::move(out), {&x});
  if (node->requires_grad) {
    node->backward_fn = [](Node& self) {
      auto& g = self.parents[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    };
  }
  return Tensor(node);
}

Tensor add_key_bias(const Tensor& scores, const std::vector<double>& bias) {
  if (scores.rank() != 4) throw ShapeMismatch("add_key_bias expects (b, h, q, k) scores");
  const std::size_t b = scores.dim(0), h = scores.dim(1), q = scores.dim(2), k = scores.dim(3);
  if (bias.size() != b * k) throw ShapeMismatch("key bias must be (b, k)");
  std::vector<double> out(scores.size());
  const auto in = scores.data();
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < h * q; ++j) {
      const std::size_t base = (i * h * q + j) * k;
      for (std::size_t t = 0; t < k; ++t) out[base + t] = in[base + t] + bias[i * k + t];
    }
  auto node = make_node("add_key_bias", scores.shape(), std::move(out), {&scores});
  if (node->requires_grad) {
    node->backward_fn = [](Node& self) {
      auto& g = self.parents[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    };
  }
  return Tensor(node);
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  auto node = make_node("sum", {}, {s}, {&x});
  if (node->requires_grad) {
    node->backward_fn = [](Node& self) {
      auto& g = self.parents[0]->grad_buffer();
      for (double& v : g) v += self.grad[0];
    };
  }
  return Tensor(node);
}

Tensor sum_axis(const Tensor& x, int axis) {
  const int ax = norm_axis(axis, x.rank());
  const AxisSplit s = split_at(x.shape(), ax);
  Shape shape = x.shape();
  shape.erase(shape.begin() + ax);
  std::vector<double> out(s.outer * s.inner, 0.0);
  const auto in = x.data();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t j = 0; j < s.len; ++j)
      for (std::size_t i = 0; i < s.inner; ++i) out[o * s.inner + i] += in[(o * s.len + j) * s.inner + i];
  auto node = make_node("sum_axis", shape, std::move(out), {&x});
  if (node->requires_grad) {
    node->backward_fn = [s](Node& self) {
      auto& g = self.parents[0]->grad_buffer();
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t j = 0; j < s.len; ++j)
          for (std::size_t i = 0; i < s.inner; ++i) g[(o * s.len + j) * s.inner + i] += self.grad[o * s.inner + i];
    };
  }
  return Tensor(node);
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw ShapeMismatch("mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor mse(const Tensor& pred, const Tensor& target) {
  require_same_shape("mse", pred, target);
  if (pred.size() == 0) throw ShapeMismatch("mse of empty tensors");
  const double n = static_cast<double>(pred.size());
  double s = 0.0;
  const auto p = pred.data(), t = target.data();
  for (std::size_t i = 0; i < pred.size(); ++i) s += (p[i] - t[i]) * (p[i] - t[i]);
  auto node = make_node("mse", {}, {s / n}, {&pred, &target});
  if (node->requires_grad) {
    node->backward_fn = [n](Node& self) {
      Node& pp = *self.parents[0];
      Node& pt = *self.parents[1];
      const double c = 2.0 * self.grad[0] / n;
      for (std::size_t i = 0; i < pp.value.size(); ++i) {
        const double d = pp.value[i] - pt.value[i];
        if (pp.requires_grad) pp.grad_buffer()[i] += c * d;
        if (pt.requires_grad) pt.grad_buffer()[i] -= c * d;
      }
    };
  }
  return Tensor(node);
}

}  // namespace ops
}  // namespace moltailor
