#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "gcav/common.hpp"

namespace gcav {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

namespace detail {

struct TensorNode {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // allocated on first gradient touch
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Distributes this node's grad into the parents' grad buffers.
  std::function<void(TensorNode&)> backprop;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

}  // namespace detail

// Dense 64-bit tensor participating in a define-by-run gradient tape.
// The tape is rebuilt on every forward pass; a Tensor is a cheap handle
// (shared node) with value semantics at the handle level.
class Tensor {
 public:
  Tensor() : n_(std::make_shared<detail::TensorNode>()) {}

  static Tensor from(std::vector<double> data, Shape shape) {
    if (shape_numel(shape) != data.size())
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
    Tensor t;
    t.n_->shape = std::move(shape);
    t.n_->data = std::move(data);
    return t;
  }

  static Tensor zeros(Shape shape) {
    const std::size_t n = shape_numel(shape);
    return from(std::vector<double>(n, 0.0), std::move(shape));
  }

  static Tensor full(Shape shape, double v) {
    const std::size_t n = shape_numel(shape);
    return from(std::vector<double>(n, v), std::move(shape));
  }

  static Tensor ones(Shape shape) { return full(std::move(shape), 1.0); }

  static Tensor scalar(double v) { return from({v}, Shape{1}); }

  // Glorot-style uniform init in +-sqrt(6 / (fan_in + fan_out)).
  static Tensor glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<double> d(fan_in * fan_out);
    for (double& x : d) x = rng.uniform(-limit, limit);
    Tensor t = from(std::move(d), Shape{fan_in, fan_out});
    t.set_requires_grad(true);
    return t;
  }

  const Shape& shape() const { return n_->shape; }
  std::size_t size() const { return n_->data.size(); }
  std::size_t rank() const { return n_->shape.size(); }
  std::size_t rows() const { return n_->shape.at(0); }
  std::size_t cols() const { return n_->shape.at(1); }
  bool is_scalar() const { return n_->data.size() == 1; }

  double value() const {
    if (!is_scalar()) throw ContractViolation("value() on non-scalar tensor " + shape_str(shape()));
    return n_->data[0];
  }

  std::vector<double>& data() { return n_->data; }
  const std::vector<double>& data() const { return n_->data; }
  double& at(std::size_t i) { return n_->data.at(i); }
  double at(std::size_t i) const { return n_->data.at(i); }
  double& at(std::size_t r, std::size_t c) { return n_->data.at(r * cols() + c); }
  double at(std::size_t r, std::size_t c) const { return n_->data.at(r * cols() + c); }

  bool requires_grad() const { return n_->requires_grad; }
  Tensor& set_requires_grad(bool b) {
    n_->requires_grad = b;
    return *this;
  }

  bool has_grad() const { return n_->grad.size() == n_->data.size(); }
  std::vector<double>& grad() {
    n_->ensure_grad();
    return n_->grad;
  }
  const std::vector<double>& grad() const {
    if (!has_grad()) throw ContractViolation("gradient not populated");
    return n_->grad;
  }
  void zero_grad() {
    n_->ensure_grad();
    std::fill(n_->grad.begin(), n_->grad.end(), 0.0);
  }

  // Same data, detached from the tape: never receives gradient.
  Tensor detach() const {
    Tensor t;
    t.n_->shape = n_->shape;
    t.n_->data = n_->data;
    return t;
  }

  std::shared_ptr<detail::TensorNode> node() const { return n_; }

  static Tensor wrap(std::shared_ptr<detail::TensorNode> n) {
    Tensor t;
    t.n_ = std::move(n);
    return t;
  }

 private:
  std::shared_ptr<detail::TensorNode> n_;
};

namespace detail {

inline std::shared_ptr<TensorNode> make_node(Shape shape, std::vector<double> data,
                                             std::vector<std::shared_ptr<TensorNode>> parents) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  bool rg = false;
  for (const auto& p : parents) rg = rg || p->requires_grad;
  n->requires_grad = rg;
  if (rg) n->parents = std::move(parents);
  return n;
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " differ");
}

}  // namespace detail

// ---- elementwise arithmetic ----

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  auto n = detail::make_node(a.shape(), std::move(out), {a.node(), b.node()});
  if (n->requires_grad)
    n->backprop = [](detail::TensorNode& self) {
      for (auto& p : self.parents) {
        if (!p->requires_grad) continue;
        p->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
      }
    };
  return Tensor::wrap(n);
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  auto n = detail::make_node(a.shape(), std::move(out), {a.node(), b.node()});
  if (n->requires_grad)
    n->backprop = [](detail::TensorNode& self) {
      auto& pa = self.parents[0];
      auto& pb = self.parents[1];
      if (pa->requires_grad) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] -= self.grad[i];
      }
    };
  return Tensor::wrap(n);
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  auto n = detail::make_node(a.shape(), std::move(out), {a.node(), b.node()});
  if (n->requires_grad)
    n->backprop = [](detail::TensorNode& self) {
      auto& pa = self.parents[0];
      auto& pb = self.parents[1];
      if (pa->requires_grad) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i] * pb->data[i];
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] += self.grad[i] * pa->data[i];
      }
    };
  return Tensor::wrap(n);
}

inline Tensor add_scalar(const Tensor& a, double s) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + s;
  auto n = detail::make_node(a.shape(), std::move(out), {a.node()});
  if (n->requires_grad)
    n->backprop = [](detail::TensorNode& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    };
  return Tensor::wrap(n);
}

inline Tensor mul_scalar(const Tensor& a, double s) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * s;
  auto n = detail::make_node(a.shape(), std::move(out), {a.node()});
  if (n->requires_grad)
    n->backprop = [s](detail::TensorNode& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i] * s;
    };
  return Tensor::wrap(n);
}

inline Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

// t + s where s is a tensor scalar (shape [1]); gradient reaches both sides.
inline Tensor add_scalar_tensor(const Tensor& a, const Tensor& s) {
  if (!s.is_scalar()) throw ShapeError("add_scalar_tensor: rhs " + shape_str(s.shape()) + " is not scalar");
  std::vector<double> out(a.size());
  const double sv = s.data()[0];
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + sv;
  auto n = detail::make_node(a.shape(), std::move(out), {a.node(), s.node()});
  if (n->requires_grad)
    n->backprop = [](detail::TensorNode& self) {
      auto& pa = self.parents[0];
      auto& ps = self.parents[1];
      if (pa->requires_grad) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
      }
      if (ps->requires_grad) {
        ps->ensure_grad();
        double acc = 0.0;
        for (double g : self.grad) acc += g;
        ps->grad[0] += acc;
      }
    };
  return Tensor::wrap(n);
}

inline Tensor mul_scalar_tensor(const Tensor& a, const Tensor& s) {
  if (!s.is_scalar()) throw ShapeError("mul_scalar_tensor: rhs " + shape_str(s.shape()) + " is not scalar");
  std::vector<double> out(a.size());
  const double sv = s.data()[0];
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * sv;
  auto n = detail::make_node(a.shape(), std::move(out), {a.node(), s.node()});
  if (n->requires_grad)
    n->backprop = [](detail::TensorNode& self) {
      auto& pa = self.parents[0];
      auto& ps = self.parents[1];
      const double sv2 = ps->data[0];
      if (pa->requires_grad) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i] * sv2;
      }
      if (ps->requires_grad) {
        ps->ensure_grad();
        double acc = 0.0;
        for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * pa->data[i];
        ps->grad[0] += acc;
      }
    };
  return Tensor::wrap(n);
}

// [R x C] + [C] bias broadcast over rows.
inline Tensor add_rowvec(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 1 || a.cols() != b.shape()[0])
    throw ShapeError("add_rowvec: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = a.data()[i * c + j] + b.data()[j];
  auto n = detail::make_node(a.shape(), std::move(out), {a.node(), b.node()});
  if (n->requires_grad)
    n->backprop = [r, c](detail::TensorNode& self) {
      auto& pa = self.parents[0];
      auto& pb = self.parents[1];
      if (pa->requires_grad) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) pb->grad[j] += self.grad[i * c + j];
      }
    };
  return Tensor::wrap(n);
}

// [R x C] op [R]: per-row scalar broadcast across columns.
inline Tensor add_col(const Tensor& a, const Tensor& v) {
  if (a.rank() != 2 || v.rank() != 1 || a.rows() != v.shape()[0])
    throw ShapeError("add_col: shapes " + shape_str(a.shape()) + " and " + shape_str(v.shape()));
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = a.data()[i * c + j] + v.data()[i];
  auto n = detail::make_node(a.shape(), std::move(out), {a.node(), v.node()});
  if (n->requires_grad)
    n->backprop = [r, c](detail::TensorNode& self) {
      auto& pa = self.parents[0];
      auto& pv = self.parents[1];
      if (pa->requires_grad) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i];
      }
      if (pv->requires_grad) {
        pv->ensure_grad();
        for (std::size_t i = 0; i < r; ++i) {
          double acc = 0.0;
          for (std::size_t j = 0; j < c; ++j) acc += self.grad[i * c + j];
          pv->grad[i] += acc;
        }
      }
    };
  return Tensor::wrap(n);
}

inline Tensor sub_col(const Tensor& a, const Tensor& v) { return add_col(a, mul_scalar(v, -1.0)); }

// ---- nonlinearities ----

inline Tensor relu(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
  auto n = detail::make_node(a.shape(), std::move(out), {a.node()});
  if (n->requires_grad)
    n->backprop = [](detail::TensorNode& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      // subgradient at 0 is 0
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        if (p->data[i] > 0.0) p->grad[i] += self.grad[i];
    };
  return Tensor::wrap(n);
}

inline Tensor vtanh(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a.data()[i]);
  auto n = detail::make_node(a.shape(), std::move(out), {a.node()});
  if (n->requires_grad)
    n->backprop = [](detail::TensorNode& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        p->grad[i] += self.grad[i] * (1.0 - self.data[i] * self.data[i]);
    };
  return Tensor::wrap(n);
}

inline Tensor vexp(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a.data()[i]);
  auto n = detail::make_node(a.shape(), std::move(out), {a.node()});
  if (n->requires_grad)
    n->backprop = [](detail::TensorNode& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i] * self.data[i];
    };
  return Tensor::wrap(n);
}

inline Tensor vlog(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(a.data()[i]);
  auto n = detail::make_node(a.shape(), std::move(out), {a.node()});
  if (n->requires_grad)
    n->backprop = [](detail::TensorNode& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i] / p->data[i];
    };
  return Tensor::wrap(n);
}

inline Tensor square(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * a.data()[i];
  auto n = detail::make_node(a.shape(), std::move(out), {a.node()});
  if (n->requires_grad)
    n->backprop = [](detail::TensorNode& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i] * 2.0 * p->data[i];
    };
  return Tensor::wrap(n);
}

// Gradient passes only strictly inside (lo, hi).
inline Tensor clamp(const Tensor& a, double lo, double hi) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(std::max(a.data()[i], lo), hi);
  auto n = detail::make_node(a.shape(), std::move(out), {a.node()});
  if (n->requires_grad)
    n->backprop = [lo, hi](detail::TensorNode& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        if (p->data[i] > lo && p->data[i] < hi) p->grad[i] += self.grad[i];
    };
  return Tensor::wrap(n);
}

// Elementwise min; ties route gradient to the first argument.
inline Tensor minimum(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "minimum");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(a.data()[i], b.data()[i]);
  auto n = detail::make_node(a.shape(), std::move(out), {a.node(), b.node()});
  if (n->requires_grad)
    n->backprop = [](detail::TensorNode& self) {
      auto& pa = self.parents[0];
      auto& pb = self.parents[1];
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        const bool take_a = pa->data[i] <= pb->data[i];
        auto& p = take_a ? pa : pb;
        if (!p->requires_grad) continue;
        p->ensure_grad();
        p->grad[i] += self.grad[i];
      }
    };
  return Tensor::wrap(n);
}

// ---- matrix ops ----

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows())
    throw ShapeError("matmul: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                     " do not chain");
  const std::size_t m = a.rows(), k = a.cols(), p = b.cols();
  std::vector<double> out(m * p, 0.0);
  {
    const double* A = a.data().data();
    const double* B = b.data().data();
    double* C = out.data();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t t = 0; t < k; ++t) {
        const double av = A[i * k + t];
        if (av == 0.0) continue;
        const double* Brow = B + t * p;
        double* Crow = C + i * p;
        for (std::size_t j = 0; j < p; ++j) Crow[j] += av * Brow[j];
      }
  }
  auto n = detail::make_node(Shape{m, p}, std::move(out), {a.node(), b.node()});
  if (n->requires_grad)
    n->backprop = [m, k, p](detail::TensorNode& self) {
      auto& pa = self.parents[0];
      auto& pb = self.parents[1];
      const double* G = self.grad.data();
      if (pa->requires_grad) {
        pa->ensure_grad();
        const double* B = pb->data.data();
        double* GA = pa->grad.data();
        // dA = G * B^T
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t t = 0; t < k; ++t) {
            double acc = 0.0;
            const double* Grow = G + i * p;
            const double* Brow = B + t * p;
            for (std::size_t j = 0; j < p; ++j) acc += Grow[j] * Brow[j];
            GA[i * k + t] += acc;
          }
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        const double* A = pa->data.data();
        double* GB = pb->grad.data();
        // dB = A^T * G
        for (std::size_t t = 0; t < k; ++t)
          for (std::size_t i = 0; i < m; ++i) {
            const double av = A[i * k + t];
            if (av == 0.0) continue;
            const double* Grow = G + i * p;
            double* GBrow = GB + t * p;
            for (std::size_t j = 0; j < p; ++j) GBrow[j] += av * Grow[j];
          }
      }
    };
  return Tensor::wrap(n);
}

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.size())
    throw ShapeError("reshape: " + shape_str(a.shape()) + " to " + shape_str(shape));
  auto n = detail::make_node(std::move(shape), a.data(), {a.node()});
  if (n->requires_grad)
    n->backprop = [](detail::TensorNode& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    };
  return Tensor::wrap(n);
}

// out[i] = a[i, idx[i]]; used to pick the taken action's value per row.
inline Tensor gather_rows(const Tensor& a, const std::vector<int>& idx) {
  if (a.rank() != 2 || idx.size() != a.rows())
    throw ShapeError("gather_rows: " + shape_str(a.shape()) + " with " + std::to_string(idx.size()) +
                     " indices");
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r);
  for (std::size_t i = 0; i < r; ++i) {
    if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= c)
      throw ContractViolation("gather_rows: index " + std::to_string(idx[i]) + " out of range");
    out[i] = a.data()[i * c + static_cast<std::size_t>(idx[i])];
  }
  auto n = detail::make_node(Shape{r}, std::move(out), {a.node()});
  if (n->requires_grad)
    n->backprop = [idx, c](detail::TensorNode& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        p->grad[i * c + static_cast<std::size_t>(idx[i])] += self.grad[i];
    };
  return Tensor::wrap(n);
}

// Row subset: out[i] = a[rows[i], :].
inline Tensor select_rows(const Tensor& a, const std::vector<int>& rows) {
  if (a.rank() != 2) throw ShapeError("select_rows: expected rank-2, got " + shape_str(a.shape()));
  const std::size_t c = a.cols(), k = rows.size();
  std::vector<double> out(k * c);
  for (std::size_t i = 0; i < k; ++i) {
    if (rows[i] < 0 || static_cast<std::size_t>(rows[i]) >= a.rows())
      throw ContractViolation("select_rows: row " + std::to_string(rows[i]) + " out of range");
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = a.data()[static_cast<std::size_t>(rows[i]) * c + j];
  }
  auto n = detail::make_node(Shape{k, c}, std::move(out), {a.node()});
  if (n->requires_grad)
    n->backprop = [rows, c](detail::TensorNode& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < c; ++j)
          p->grad[static_cast<std::size_t>(rows[i]) * c + j] += self.grad[i * c + j];
    };
  return Tensor::wrap(n);
}

inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.rows() != b.rows())
    throw ShapeError("concat_cols: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const std::size_t r = a.rows(), ca = a.cols(), cb = b.cols();
  std::vector<double> out(r * (ca + cb));
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < ca; ++j) out[i * (ca + cb) + j] = a.data()[i * ca + j];
    for (std::size_t j = 0; j < cb; ++j) out[i * (ca + cb) + ca + j] = b.data()[i * cb + j];
  }
  auto n = detail::make_node(Shape{r, ca + cb}, std::move(out), {a.node(), b.node()});
  if (n->requires_grad)
    n->backprop = [r, ca, cb](detail::TensorNode& self) {
      auto& pa = self.parents[0];
      auto& pb = self.parents[1];
      if (pa->requires_grad) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < ca; ++j) pa->grad[i * ca + j] += self.grad[i * (ca + cb) + j];
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < cb; ++j) pb->grad[i * cb + j] += self.grad[i * (ca + cb) + ca + j];
      }
    };
  return Tensor::wrap(n);
}

// ---- reductions ----

inline Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  auto n = detail::make_node(Shape{1}, {acc}, {a.node()});
  if (n->requires_grad)
    n->backprop = [](detail::TensorNode& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      for (double& g : p->grad) g += self.grad[0];
    };
  return Tensor::wrap(n);
}

inline Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw ShapeError("mean of empty tensor");
  return mul_scalar(sum(a), 1.0 / static_cast<double>(a.size()));
}

// Row-wise mean over columns: [R x C] -> [R].
inline Tensor mean_cols(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("mean_cols: expected rank-2, got " + shape_str(a.shape()));
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r, 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < c; ++j) acc += a.data()[i * c + j];
    out[i] = acc / static_cast<double>(c);
  }
  auto n = detail::make_node(Shape{r}, std::move(out), {a.node()});
  if (n->requires_grad)
    n->backprop = [r, c](detail::TensorNode& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      const double inv = 1.0 / static_cast<double>(c);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) p->grad[i * c + j] += self.grad[i] * inv;
    };
  return Tensor::wrap(n);
}

// Column-wise mean over rows: [R x C] -> [C].
inline Tensor mean_rows(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("mean_rows: expected rank-2, got " + shape_str(a.shape()));
  const std::size_t r = a.rows(), c = a.cols();
  if (r == 0) throw ShapeError("mean_rows of zero-row tensor");
  std::vector<double> out(c, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += a.data()[i * c + j];
  for (std::size_t j = 0; j < c; ++j) out[j] /= static_cast<double>(r);
  auto n = detail::make_node(Shape{c}, std::move(out), {a.node()});
  if (n->requires_grad)
    n->backprop = [r, c](detail::TensorNode& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      const double inv = 1.0 / static_cast<double>(r);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) p->grad[i * c + j] += self.grad[j] * inv;
    };
  return Tensor::wrap(n);
}

// Numerically stable row-wise log-softmax.
inline Tensor log_softmax(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("log_softmax: expected rank-2, got " + shape_str(a.shape()));
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    double mx = a.data()[i * c];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, a.data()[i * c + j]);
    double lse = 0.0;
    for (std::size_t j = 0; j < c; ++j) lse += std::exp(a.data()[i * c + j] - mx);
    lse = mx + std::log(lse);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = a.data()[i * c + j] - lse;
  }
  auto n = detail::make_node(a.shape(), std::move(out), {a.node()});
  if (n->requires_grad)
    n->backprop = [r, c](detail::TensorNode& self) {
      auto& p = self.parents[0];
      p->ensure_grad();
      for (std::size_t i = 0; i < r; ++i) {
        double gsum = 0.0;
        for (std::size_t j = 0; j < c; ++j) gsum += self.grad[i * c + j];
        for (std::size_t j = 0; j < c; ++j)
          p->grad[i * c + j] += self.grad[i * c + j] - std::exp(self.data[i * c + j]) * gsum;
      }
    };
  return Tensor::wrap(n);
}

// ---- backward pass ----

// Reverse-mode sweep from a scalar loss. Gradients accumulate into the
// .grad buffers of every tape-connected tensor that requires grad;
// detached or unreachable parameters are left untouched.
inline void backward(const Tensor& loss) {
  if (!loss.is_scalar())
    throw ContractViolation("backward: loss must be scalar, got " + shape_str(loss.shape()));
  if (!loss.requires_grad()) throw ContractViolation("backward: loss is not tape-connected");

  // iterative DFS topological sort over grad-requiring nodes
  std::vector<detail::TensorNode*> order;
  std::unordered_set<detail::TensorNode*> seen;
  struct Frame {
    detail::TensorNode* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({loss.node().get(), 0});
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      detail::TensorNode* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  loss.node()->ensure_grad();
  loss.node()->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorNode* node = *it;
    if (node->backprop) {
      node->ensure_grad();
      node->backprop(*node);
    }
  }
}

}  // namespace gcav
