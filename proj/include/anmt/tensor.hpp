#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "anmt/rng.hpp"

namespace anmt {

// Thread-local switch: when false, forward ops do not record backward
// closures, so decoding and evaluation never build a tape.
inline bool& grad_enabled() {
  thread_local bool flag = true;
  return flag;
}

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_enabled()) { grad_enabled() = false; }
  ~NoGradGuard() { grad_enabled() = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

inline std::string shape_str(const std::vector<std::size_t>& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << " x ";
    os << s[i];
  }
  os << "]";
  return os.str();
}

template <class S>
struct TensorNode {
  std::vector<std::size_t> shape;
  std::vector<S> value;
  std::vector<S> grad;  // allocated lazily; same length as value when present
  bool requires_grad{false};
  std::vector<std::shared_ptr<TensorNode<S>>> parents;
  std::function<void(TensorNode<S>&)> backward;

  std::size_t size() const { return value.size(); }
  void ensure_grad() {
    if (grad.size() != value.size()) {
      grad.assign(value.size(), S(0));
    }
  }
};

// Dense row-major tensor handle. Copies alias the same storage, which is how
// models hold views of ParameterStore entries; value data of a finished node
// is treated as immutable by everything except the optimizer.
template <class S>
class Tensor {
 public:
  using Node = TensorNode<S>;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false) {
    return filled(std::move(shape), S(0), requires_grad);
  }

  static Tensor filled(std::vector<std::size_t> shape, S v, bool requires_grad = false) {
    auto n = std::make_shared<Node>();
    std::size_t total = 1;
    for (std::size_t e : shape) total *= e;
    n->shape = std::move(shape);
    n->value.assign(total, v);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor from(std::vector<std::size_t> shape, std::vector<S> values,
                     bool requires_grad = false) {
    std::size_t total = 1;
    for (std::size_t e : shape) total *= e;
    if (total != values.size()) {
      throw std::invalid_argument("tensor: value count " + std::to_string(values.size()) +
                                  " does not match shape " + shape_str(shape));
    }
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor scalar(S v) { return from({}, {v}); }

  bool defined() const { return node_ != nullptr; }
  const std::vector<std::size_t>& shape() const { return node_->shape; }
  std::size_t size() const { return node_->value.size(); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t rows() const { return node_->shape.at(0); }
  std::size_t cols() const { return node_->shape.at(1); }

  std::vector<S>& value() { return node_->value; }
  const std::vector<S>& value() const { return node_->value; }
  S* data() { return node_->value.data(); }
  const S* data() const { return node_->value.data(); }

  S item() const {
    if (size() != 1) {
      throw std::invalid_argument("item() on tensor of size " + std::to_string(size()));
    }
    return node_->value[0];
  }

  S at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }
  S& at(std::size_t r, std::size_t c) { return node_->value[r * cols() + c]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool f) { node_->requires_grad = f; }

  std::vector<S>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  const std::vector<S>& grad() const {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() { node_->grad.assign(node_->value.size(), S(0)); }

  std::shared_ptr<Node> node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// ---------------------------------------------------------------------------
// raw kernels

// c[m x n] (+)= a[m x k] * b[k x n]
template <class S>
inline void gemm(const S* a, const S* b, S* c, std::size_t m, std::size_t k, std::size_t n,
                 bool accumulate) {
  if (!accumulate) {
    std::fill(c, c + m * n, S(0));
  }
  for (std::size_t i = 0; i < m; ++i) {
    const S* arow = a + i * k;
    S* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const S av = arow[p];
      if (av == S(0)) continue;
      const S* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        crow[j] += av * brow[j];
      }
    }
  }
}

// c[m x n] (+)= a[m x k] * b[n x k]^T
template <class S>
inline void gemm_nt(const S* a, const S* b, S* c, std::size_t m, std::size_t k, std::size_t n,
                    bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const S* arow = a + i * k;
    S* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const S* brow = b + j * k;
      S acc = S(0);
      for (std::size_t p = 0; p < k; ++p) {
        acc += arow[p] * brow[p];
      }
      crow[j] = accumulate ? crow[j] + acc : acc;
    }
  }
}

// c[k x n] (+)= a[m x k]^T * b[m x n]
template <class S>
inline void gemm_tn(const S* a, const S* b, S* c, std::size_t m, std::size_t k, std::size_t n,
                    bool accumulate) {
  if (!accumulate) {
    std::fill(c, c + k * n, S(0));
  }
  for (std::size_t i = 0; i < m; ++i) {
    const S* arow = a + i * k;
    const S* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const S av = arow[p];
      if (av == S(0)) continue;
      S* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        crow[j] += av * brow[j];
      }
    }
  }
}

// ---------------------------------------------------------------------------
// op plumbing

namespace detail {

template <class S>
inline bool tape_wanted(std::initializer_list<const Tensor<S>*> inputs) {
  if (!grad_enabled()) return false;
  for (const Tensor<S>* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

template <class S, class F>
inline void attach(Tensor<S>& out, std::vector<std::shared_ptr<TensorNode<S>>> parents, F&& fn) {
  out.set_requires_grad(true);
  out.node()->parents = std::move(parents);
  out.node()->backward = std::function<void(TensorNode<S>&)>(std::forward<F>(fn));
}

template <class S>
inline void check_matrix(const Tensor<S>& t, const char* op) {
  if (t.rank() != 2) {
    throw std::invalid_argument(std::string(op) + ": expected a matrix, got shape " +
                                shape_str(t.shape()));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// differentiable operations

template <class S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_matrix(a, "matmul");
  detail::check_matrix(b, "matmul");
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner extents disagree, " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  auto out = Tensor<S>::zeros({m, n});
  gemm(a.data(), b.data(), out.data(), m, k, n, false);
  if (detail::tape_wanted<S>({&a, &b})) {
    auto an = a.node(), bn = b.node();
    detail::attach(out, {an, bn}, [an, bn, m, k, n](TensorNode<S>& o) {
      if (an->requires_grad) {
        gemm_nt(o.grad.data(), bn->value.data(), an->grad.data(), m, n, k, true);
      }
      if (bn->requires_grad) {
        gemm_tn(an->value.data(), o.grad.data(), bn->grad.data(), m, k, n, true);
      }
    });
  }
  return out;
}

// a [m x k] times b[n x k] transposed -> [m x n]
template <class S>
Tensor<S> matmul_nt(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_matrix(a, "matmul_nt");
  detail::check_matrix(b, "matmul_nt");
  if (a.cols() != b.cols()) {
    throw std::invalid_argument("matmul_nt: inner extents disagree, " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  auto out = Tensor<S>::zeros({m, n});
  gemm_nt(a.data(), b.data(), out.data(), m, k, n, false);
  if (detail::tape_wanted<S>({&a, &b})) {
    auto an = a.node(), bn = b.node();
    detail::attach(out, {an, bn}, [an, bn, m, k, n](TensorNode<S>& o) {
      // dA += dC * B ; dB += dC^T * A
      if (an->requires_grad) {
        gemm(o.grad.data(), bn->value.data(), an->grad.data(), m, n, k, true);
      }
      if (bn->requires_grad) {
        gemm_tn(o.grad.data(), an->value.data(), bn->grad.data(), m, n, k, true);
      }
    });
  }
  return out;
}

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("add: shape mismatch, " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
  auto out = Tensor<S>::zeros(a.shape());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) {
    out.data()[i] = a.data()[i] + b.data()[i];
  }
  if (detail::tape_wanted<S>({&a, &b})) {
    auto an = a.node(), bn = b.node();
    detail::attach(out, {an, bn}, [an, bn, n](TensorNode<S>& o) {
      if (an->requires_grad) {
        for (std::size_t i = 0; i < n; ++i) an->grad[i] += o.grad[i];
      }
      if (bn->requires_grad) {
        for (std::size_t i = 0; i < n; ++i) bn->grad[i] += o.grad[i];
      }
    });
  }
  return out;
}

// x [n x d] plus row vector v [d] broadcast over rows.
template <class S>
Tensor<S> add_rowvec(const Tensor<S>& x, const Tensor<S>& v) {
  detail::check_matrix(x, "add_rowvec");
  if (v.rank() != 1 || v.size() != x.cols()) {
    throw std::invalid_argument("add_rowvec: vector shape " + shape_str(v.shape()) +
                                " does not match row width of " + shape_str(x.shape()));
  }
  const std::size_t n = x.rows(), d = x.cols();
  auto out = Tensor<S>::zeros(x.shape());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      out.data()[i * d + j] = x.data()[i * d + j] + v.data()[j];
    }
  }
  if (detail::tape_wanted<S>({&x, &v})) {
    auto xn = x.node(), vn = v.node();
    detail::attach(out, {xn, vn}, [xn, vn, n, d](TensorNode<S>& o) {
      if (xn->requires_grad) {
        for (std::size_t i = 0; i < n * d; ++i) xn->grad[i] += o.grad[i];
      }
      if (vn->requires_grad) {
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < d; ++j) vn->grad[j] += o.grad[i * d + j];
        }
      }
    });
  }
  return out;
}

template <class S>
Tensor<S> scale(const Tensor<S>& x, S c) {
  auto out = Tensor<S>::zeros(x.shape());
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = x.data()[i] * c;
  if (detail::tape_wanted<S>({&x})) {
    auto xn = x.node();
    detail::attach(out, {xn}, [xn, c, n](TensorNode<S>& o) {
      if (xn->requires_grad) {
        for (std::size_t i = 0; i < n; ++i) xn->grad[i] += c * o.grad[i];
      }
    });
  }
  return out;
}

template <class S>
Tensor<S> relu(const Tensor<S>& x) {
  auto out = Tensor<S>::zeros(x.shape());
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) {
    out.data()[i] = x.data()[i] > S(0) ? x.data()[i] : S(0);
  }
  if (detail::tape_wanted<S>({&x})) {
    auto xn = x.node();
    detail::attach(out, {xn}, [xn, n](TensorNode<S>& o) {
      if (xn->requires_grad) {
        for (std::size_t i = 0; i < n; ++i) {
          if (xn->value[i] > S(0)) xn->grad[i] += o.grad[i];
        }
      }
    });
  }
  return out;
}

// Row-wise softmax with max subtraction. Rows are along the last axis.
template <class S>
Tensor<S> softmax_rows(const Tensor<S>& x) {
  detail::check_matrix(x, "softmax_rows");
  const std::size_t n = x.rows(), d = x.cols();
  if (d == 0) {
    throw std::invalid_argument("softmax_rows: empty rows");
  }
  auto out = Tensor<S>::zeros(x.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const S* row = x.data() + i * d;
    S* orow = out.data() + i * d;
    S mx = row[0];
    for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, row[j]);
    S sum = S(0);
    for (std::size_t j = 0; j < d; ++j) {
      orow[j] = std::exp(row[j] - mx);
      sum += orow[j];
    }
    const S inv = S(1) / sum;
    for (std::size_t j = 0; j < d; ++j) orow[j] *= inv;
  }
  if (detail::tape_wanted<S>({&x})) {
    auto xn = x.node();
    auto on = out.node();
    detail::attach(out, {xn}, [xn, on, n, d](TensorNode<S>& o) {
      if (!xn->requires_grad) return;
      for (std::size_t i = 0; i < n; ++i) {
        const S* y = on->value.data() + i * d;
        const S* dy = o.grad.data() + i * d;
        S dot = S(0);
        for (std::size_t j = 0; j < d; ++j) dot += dy[j] * y[j];
        S* dx = xn->grad.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) dx[j] += y[j] * (dy[j] - dot);
      }
    });
  }
  return out;
}

template <class S>
Tensor<S> log_softmax_rows(const Tensor<S>& x) {
  detail::check_matrix(x, "log_softmax_rows");
  const std::size_t n = x.rows(), d = x.cols();
  auto out = Tensor<S>::zeros(x.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const S* row = x.data() + i * d;
    S* orow = out.data() + i * d;
    S mx = row[0];
    for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, row[j]);
    S sum = S(0);
    for (std::size_t j = 0; j < d; ++j) sum += std::exp(row[j] - mx);
    const S lse = mx + std::log(sum);
    for (std::size_t j = 0; j < d; ++j) orow[j] = row[j] - lse;
  }
  if (detail::tape_wanted<S>({&x})) {
    auto xn = x.node();
    auto on = out.node();
    detail::attach(out, {xn}, [xn, on, n, d](TensorNode<S>& o) {
      if (!xn->requires_grad) return;
      for (std::size_t i = 0; i < n; ++i) {
        const S* y = on->value.data() + i * d;
        const S* dy = o.grad.data() + i * d;
        S total = S(0);
        for (std::size_t j = 0; j < d; ++j) total += dy[j];
        S* dx = xn->grad.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) dx[j] += dy[j] - std::exp(y[j]) * total;
      }
    });
  }
  return out;
}

// Per-row normalization to zero mean and unit variance, then affine gain/bias.
// A zero-variance row is handled by the epsilon inside the square root.
template <class S>
Tensor<S> layer_norm_rows(const Tensor<S>& x, const Tensor<S>& gain, const Tensor<S>& bias) {
  detail::check_matrix(x, "layer_norm_rows");
  const std::size_t n = x.rows(), d = x.cols();
  if (gain.size() != d || bias.size() != d) {
    throw std::invalid_argument("layer_norm_rows: gain/bias length must be " + std::to_string(d));
  }
  const S eps = S(1e-6);
  auto out = Tensor<S>::zeros(x.shape());
  std::vector<S> xhat(n * d), inv_sigma(n);
  for (std::size_t i = 0; i < n; ++i) {
    const S* row = x.data() + i * d;
    S mean = S(0);
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<S>(d);
    S var = S(0);
    for (std::size_t j = 0; j < d; ++j) {
      const S c = row[j] - mean;
      var += c * c;
    }
    var /= static_cast<S>(d);
    const S inv = S(1) / std::sqrt(var + eps);
    inv_sigma[i] = inv;
    for (std::size_t j = 0; j < d; ++j) {
      const S xh = (row[j] - mean) * inv;
      xhat[i * d + j] = xh;
      out.data()[i * d + j] = gain.data()[j] * xh + bias.data()[j];
    }
  }
  if (detail::tape_wanted<S>({&x, &gain, &bias})) {
    auto xn = x.node(), gn = gain.node(), bn = bias.node();
    detail::attach(out, {xn, gn, bn},
                   [xn, gn, bn, n, d, xhat = std::move(xhat),
                    inv_sigma = std::move(inv_sigma)](TensorNode<S>& o) {
      for (std::size_t i = 0; i < n; ++i) {
        const S* dy = o.grad.data() + i * d;
        const S* xh = xhat.data() + i * d;
        if (gn->requires_grad) {
          for (std::size_t j = 0; j < d; ++j) gn->grad[j] += dy[j] * xh[j];
        }
        if (bn->requires_grad) {
          for (std::size_t j = 0; j < d; ++j) bn->grad[j] += dy[j];
        }
        if (xn->requires_grad) {
          S mean_dxh = S(0), mean_dxh_xh = S(0);
          for (std::size_t j = 0; j < d; ++j) {
            const S dxh = dy[j] * gn->value[j];
            mean_dxh += dxh;
            mean_dxh_xh += dxh * xh[j];
          }
          mean_dxh /= static_cast<S>(d);
          mean_dxh_xh /= static_cast<S>(d);
          S* dx = xn->grad.data() + i * d;
          for (std::size_t j = 0; j < d; ++j) {
            const S dxh = dy[j] * gn->value[j];
            dx[j] += inv_sigma[i] * (dxh - mean_dxh - xh[j] * mean_dxh_xh);
          }
        }
      }
    });
  }
  return out;
}

// Gather rows of a table by 0-based indices. Used for embedding lookup and
// for selecting encoder states by alignment position.
template <class S>
Tensor<S> gather_rows(const Tensor<S>& table, const std::vector<int>& ids) {
  detail::check_matrix(table, "gather_rows");
  const std::size_t d = table.cols();
  auto out = Tensor<S>::zeros({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const int id = ids[i];
    if (id < 0 || static_cast<std::size_t>(id) >= table.rows()) {
      throw std::out_of_range("gather_rows: index " + std::to_string(id) +
                              " out of range for table " + shape_str(table.shape()));
    }
    std::copy_n(table.data() + static_cast<std::size_t>(id) * d, d, out.data() + i * d);
  }
  if (detail::tape_wanted<S>({&table})) {
    auto tn = table.node();
    detail::attach(out, {tn}, [tn, ids, d](TensorNode<S>& o) {
      if (!tn->requires_grad) return;
      for (std::size_t i = 0; i < ids.size(); ++i) {
        S* dst = tn->grad.data() + static_cast<std::size_t>(ids[i]) * d;
        const S* src = o.grad.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

template <class S>
Tensor<S> concat_cols(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) {
    throw std::invalid_argument("concat_cols: no inputs");
  }
  const std::size_t n = parts[0].rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    detail::check_matrix(p, "concat_cols");
    if (p.rows() != n) {
      throw std::invalid_argument("concat_cols: row count mismatch");
    }
    total += p.cols();
  }
  auto out = Tensor<S>::zeros({n, total});
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t d = p.cols();
    for (std::size_t i = 0; i < n; ++i) {
      std::copy_n(p.data() + i * d, d, out.data() + i * total + off);
    }
    off += d;
  }
  bool tape = grad_enabled();
  if (tape) {
    bool any = false;
    for (const auto& p : parts) any = any || p.requires_grad();
    tape = any;
  }
  if (tape) {
    std::vector<std::shared_ptr<TensorNode<S>>> ps;
    std::vector<std::size_t> widths;
    for (const auto& p : parts) {
      ps.push_back(p.node());
      widths.push_back(p.cols());
    }
    detail::attach(out, ps, [ps, widths, n, total](TensorNode<S>& o) {
      std::size_t off2 = 0;
      for (std::size_t pi = 0; pi < ps.size(); ++pi) {
        const std::size_t d = widths[pi];
        if (ps[pi]->requires_grad) {
          for (std::size_t i = 0; i < n; ++i) {
            const S* src = o.grad.data() + i * total + off2;
            S* dst = ps[pi]->grad.data() + i * d;
            for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
          }
        }
        off2 += d;
      }
    });
  }
  return out;
}

template <class S>
Tensor<S> concat_rows(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) {
    throw std::invalid_argument("concat_rows: no inputs");
  }
  const std::size_t d = parts[0].cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    detail::check_matrix(p, "concat_rows");
    if (p.cols() != d) {
      throw std::invalid_argument("concat_rows: column count mismatch");
    }
    total += p.rows();
  }
  auto out = Tensor<S>::zeros({total, d});
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy_n(p.data(), p.size(), out.data() + off * d);
    off += p.rows();
  }
  bool tape = grad_enabled();
  if (tape) {
    bool any = false;
    for (const auto& p : parts) any = any || p.requires_grad();
    tape = any;
  }
  if (tape) {
    std::vector<std::shared_ptr<TensorNode<S>>> ps;
    std::vector<std::size_t> heights;
    for (const auto& p : parts) {
      ps.push_back(p.node());
      heights.push_back(p.rows());
    }
    detail::attach(out, ps, [ps, heights, d](TensorNode<S>& o) {
      std::size_t off2 = 0;
      for (std::size_t pi = 0; pi < ps.size(); ++pi) {
        if (ps[pi]->requires_grad) {
          const S* src = o.grad.data() + off2 * d;
          for (std::size_t i = 0; i < heights[pi] * d; ++i) ps[pi]->grad[i] += src[i];
        }
        off2 += heights[pi];
      }
    });
  }
  return out;
}

template <class S>
Tensor<S> slice_cols(const Tensor<S>& x, std::size_t start, std::size_t len) {
  detail::check_matrix(x, "slice_cols");
  if (start + len > x.cols()) {
    throw std::out_of_range("slice_cols: [" + std::to_string(start) + ", " +
                            std::to_string(start + len) + ") exceeds width " +
                            std::to_string(x.cols()));
  }
  const std::size_t n = x.rows(), d = x.cols();
  auto out = Tensor<S>::zeros({n, len});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(x.data() + i * d + start, len, out.data() + i * len);
  }
  if (detail::tape_wanted<S>({&x})) {
    auto xn = x.node();
    detail::attach(out, {xn}, [xn, start, len, n, d](TensorNode<S>& o) {
      if (!xn->requires_grad) return;
      for (std::size_t i = 0; i < n; ++i) {
        const S* src = o.grad.data() + i * len;
        S* dst = xn->grad.data() + i * d + start;
        for (std::size_t j = 0; j < len; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

template <class S>
Tensor<S> sum_all(const Tensor<S>& x) {
  S total = S(0);
  for (std::size_t i = 0; i < x.size(); ++i) total += x.data()[i];
  auto out = Tensor<S>::scalar(total);
  if (detail::tape_wanted<S>({&x})) {
    auto xn = x.node();
    detail::attach(out, {xn}, [xn](TensorNode<S>& o) {
      if (!xn->requires_grad) return;
      for (std::size_t i = 0; i < xn->value.size(); ++i) xn->grad[i] += o.grad[0];
    });
  }
  return out;
}

enum class Reduction { Sum, Mean };

// Negative log-likelihood of target indices under row-wise softmax of logits.
// Stable via log-sum-exp; returns a scalar node.
template <class S>
Tensor<S> cross_entropy(const Tensor<S>& logits, const std::vector<int>& targets,
                        Reduction reduction = Reduction::Mean) {
  detail::check_matrix(logits, "cross_entropy");
  const std::size_t n = logits.rows(), v = logits.cols();
  if (targets.size() != n) {
    throw std::invalid_argument("cross_entropy: " + std::to_string(targets.size()) +
                                " targets for " + std::to_string(n) + " rows");
  }
  for (int t : targets) {
    if (t < 0 || static_cast<std::size_t>(t) >= v) {
      throw std::out_of_range("cross_entropy: target index " + std::to_string(t) +
                              " out of range for vocabulary of " + std::to_string(v));
    }
  }
  S total = S(0);
  std::vector<S> lse(n);
  for (std::size_t i = 0; i < n; ++i) {
    const S* row = logits.data() + i * v;
    S mx = row[0];
    for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
    S sum = S(0);
    for (std::size_t j = 0; j < v; ++j) sum += std::exp(row[j] - mx);
    lse[i] = mx + std::log(sum);
    total += lse[i] - row[targets[i]];
  }
  const S denom = reduction == Reduction::Mean ? static_cast<S>(n) : S(1);
  auto out = Tensor<S>::scalar(total / denom);
  if (detail::tape_wanted<S>({&logits})) {
    auto ln = logits.node();
    detail::attach(out, {ln},
                   [ln, targets, n, v, denom, lse = std::move(lse)](TensorNode<S>& o) {
      if (!ln->requires_grad) return;
      const S g = o.grad[0] / denom;
      for (std::size_t i = 0; i < n; ++i) {
        const S* row = ln->value.data() + i * v;
        S* dst = ln->grad.data() + i * v;
        for (std::size_t j = 0; j < v; ++j) {
          dst[j] += g * std::exp(row[j] - lse[i]);
        }
        dst[targets[i]] -= g;
      }
    });
  }
  return out;
}

// Inverted dropout. Identity when rate is zero; mask drawn from the given rng.
template <class S>
Tensor<S> dropout(const Tensor<S>& x, double rate, Rng& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) {
    throw std::invalid_argument("dropout: rate must be below 1");
  }
  const std::size_t n = x.size();
  std::vector<S> mask(n);
  const S keep_inv = S(1.0 / (1.0 - rate));
  for (std::size_t i = 0; i < n; ++i) {
    mask[i] = rng.uniform() < rate ? S(0) : keep_inv;
  }
  auto out = Tensor<S>::zeros(x.shape());
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = x.data()[i] * mask[i];
  if (detail::tape_wanted<S>({&x})) {
    auto xn = x.node();
    detail::attach(out, {xn}, [xn, mask = std::move(mask), n](TensorNode<S>& o) {
      if (!xn->requires_grad) return;
      for (std::size_t i = 0; i < n; ++i) xn->grad[i] += o.grad[i] * mask[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// reverse pass

// Reverse-mode sweep from a scalar loss. The tape (parent links and backward
// closures of interior nodes) is released as it is consumed, so one forward
// pass supports exactly one backward pass.
template <class S>
void backward(const Tensor<S>& loss) {
  if (loss.size() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                shape_str(loss.shape()));
  }
  using NodeP = std::shared_ptr<TensorNode<S>>;
  std::vector<NodeP> order;
  std::unordered_set<TensorNode<S>*> seen;
  std::vector<std::pair<NodeP, std::size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      NodeP next = node->parents[idx++];
      if (seen.insert(next.get()).second) {
        stack.emplace_back(std::move(next), 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  loss.node()->ensure_grad();
  loss.node()->grad[0] = S(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode<S>& node = **it;
    if (!node.backward) continue;
    node.ensure_grad();
    for (auto& p : node.parents) p->ensure_grad();
    node.backward(node);
    node.backward = nullptr;
    node.parents.clear();
  }
}

// ---------------------------------------------------------------------------
// initializers

template <class S>
Tensor<S> glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  const double s = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::vector<S> v(rows * cols);
  for (auto& x : v) x = static_cast<S>(rng.uniform(-s, s));
  return Tensor<S>::from({rows, cols}, std::move(v), true);
}

}  // namespace anmt
