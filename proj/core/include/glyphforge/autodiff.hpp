#pragma once

// Reverse-mode automatic differentiation over small dense tensors. Graphs are
// built per training step and discarded after backward(); parameters are
// persistent leaf nodes. Scalar type S is float for training and double for
// finite-difference verification.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "glyphforge/errors.hpp"

namespace glyphforge::ag {

using Shape = std::vector<int>;

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (const int d : s) n *= d;
  return n;
}

template <class S>
struct TensorT {
  Shape shape;
  std::vector<S> v;

  TensorT() = default;
  explicit TensorT(Shape sh, S fill = S(0))
      : shape(std::move(sh)), v(static_cast<std::size_t>(shape_numel(shape)), fill) {}
  TensorT(Shape sh, std::vector<S> data) : shape(std::move(sh)), v(std::move(data)) {
    assert(static_cast<std::int64_t>(v.size()) == shape_numel(shape));
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(v.size()); }
  int rows() const { return shape.empty() ? 0 : shape[0]; }
  int cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  S& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols() + c]; }
  S at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols() + c]; }

  template <class T>
  TensorT<T> cast() const {
    TensorT<T> out;
    out.shape = shape;
    out.v.resize(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<T>(v[i]);
    return out;
  }
};

template <class S>
struct NodeT {
  TensorT<S> val;
  std::vector<S> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<NodeT<S>>> inputs;
  std::function<void(NodeT<S>&)> backprop;

  void ensure_grad() {
    if (grad.size() != val.v.size()) grad.assign(val.v.size(), S(0));
  }
};

template <class S>
class VarT {
 public:
  VarT() = default;
  explicit VarT(std::shared_ptr<NodeT<S>> n) : node_(std::move(n)) {}

  static VarT leaf(TensorT<S> t, bool requires_grad) {
    auto n = std::make_shared<NodeT<S>>();
    n->val = std::move(t);
    n->requires_grad = requires_grad;
    return VarT(std::move(n));
  }
  static VarT constant(TensorT<S> t) { return leaf(std::move(t), false); }

  bool defined() const { return node_ != nullptr; }
  const TensorT<S>& value() const { return node_->val; }
  TensorT<S>& value() { return node_->val; }
  const std::vector<S>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  void clear_grad() { node_->grad.clear(); }
  const Shape& shape() const { return node_->val.shape; }
  std::shared_ptr<NodeT<S>> node() const { return node_; }

 private:
  std::shared_ptr<NodeT<S>> node_;
};

// ---------------------------------------------------------------------------
// kernels
// ---------------------------------------------------------------------------
namespace detail {

// C[n x m] += A[n x k] * B[k x m]
template <class S>
void gemm_nn(const S* a, const S* b, S* c, int n, int k, int m) {
  const std::int64_t work = static_cast<std::int64_t>(n) * k * m;
#pragma omp parallel for schedule(static) if (work > (1 << 16))
  for (int i = 0; i < n; ++i) {
    S* crow = c + static_cast<std::size_t>(i) * m;
    const S* arow = a + static_cast<std::size_t>(i) * k;
    for (int l = 0; l < k; ++l) {
      const S av = arow[l];
      const S* brow = b + static_cast<std::size_t>(l) * m;
      for (int j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[n x m] += A[n x k] * B[m x k]^T
template <class S>
void gemm_nt(const S* a, const S* b, S* c, int n, int k, int m) {
  const std::int64_t work = static_cast<std::int64_t>(n) * k * m;
#pragma omp parallel for schedule(static) if (work > (1 << 16))
  for (int i = 0; i < n; ++i) {
    S* crow = c + static_cast<std::size_t>(i) * m;
    const S* arow = a + static_cast<std::size_t>(i) * k;
    for (int j = 0; j < m; ++j) {
      const S* brow = b + static_cast<std::size_t>(j) * k;
      S acc = S(0);
      for (int l = 0; l < k; ++l) acc += arow[l] * brow[l];
      crow[j] += acc;
    }
  }
}

// C[k x m] += A[n x k]^T * B[n x m]; A is transposed into a scratch first so
// both inner loops stream contiguously.
template <class S>
void gemm_tn(const S* a, const S* b, S* c, int n, int k, int m) {
  std::vector<S> at(static_cast<std::size_t>(n) * k);
  for (int i = 0; i < n; ++i)
    for (int l = 0; l < k; ++l) at[static_cast<std::size_t>(l) * n + i] = a[static_cast<std::size_t>(i) * k + l];
  const std::int64_t work = static_cast<std::int64_t>(n) * k * m;
#pragma omp parallel for schedule(static) if (work > (1 << 16))
  for (int l = 0; l < k; ++l) {
    S* crow = c + static_cast<std::size_t>(l) * m;
    const S* atrow = at.data() + static_cast<std::size_t>(l) * n;
    for (int i = 0; i < n; ++i) {
      const S av = atrow[i];
      const S* brow = b + static_cast<std::size_t>(i) * m;
      for (int j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

template <class S>
void softmax_row(S* row, int k) {
  S mx = row[0];
  for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
  S sum = S(0);
  for (int j = 0; j < k; ++j) {
    row[j] = std::exp(row[j] - mx);
    sum += row[j];
  }
  const S inv = S(1) / sum;
  for (int j = 0; j < k; ++j) row[j] *= inv;
}

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw NumericError(msg);
}

}  // namespace detail

template <class S>
using NodePtr = std::shared_ptr<NodeT<S>>;

template <class S>
VarT<S> make_op(TensorT<S> out, std::vector<VarT<S>> inputs,
                std::function<void(NodeT<S>&)> backprop) {
  auto n = std::make_shared<NodeT<S>>();
  n->val = std::move(out);
  for (const auto& in : inputs) {
    n->inputs.push_back(in.node());
    n->requires_grad = n->requires_grad || in.requires_grad();
  }
  if (n->requires_grad) n->backprop = std::move(backprop);
  return VarT<S>(std::move(n));
}

// ---------------------------------------------------------------------------
// elementwise and broadcast ops
// ---------------------------------------------------------------------------

template <class S>
void require_same_shape(const VarT<S>& a, const VarT<S>& b, const char* what) {
  if (a.shape() != b.shape())
    throw NumericError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                       shape_str(b.shape()));
}

template <class S>
VarT<S> add(const VarT<S>& a, const VarT<S>& b) {
  require_same_shape(a, b, "add");
  TensorT<S> out(a.shape());
  const auto& av = a.value().v;
  const auto& bv = b.value().v;
  for (std::size_t i = 0; i < av.size(); ++i) out.v[i] = av[i] + bv[i];
  return make_op<S>(std::move(out), {a, b}, [](NodeT<S>& n) {
    for (int s = 0; s < 2; ++s) {
      auto& in = *n.inputs[static_cast<std::size_t>(s)];
      if (!in.requires_grad) continue;
      in.ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) in.grad[i] += n.grad[i];
    }
  });
}

template <class S>
VarT<S> sub(const VarT<S>& a, const VarT<S>& b) {
  require_same_shape(a, b, "sub");
  TensorT<S> out(a.shape());
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = a.value().v[i] - b.value().v[i];
  return make_op<S>(std::move(out), {a, b}, [](NodeT<S>& n) {
    auto& ia = *n.inputs[0];
    auto& ib = *n.inputs[1];
    if (ia.requires_grad) {
      ia.ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) ia.grad[i] += n.grad[i];
    }
    if (ib.requires_grad) {
      ib.ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) ib.grad[i] -= n.grad[i];
    }
  });
}

template <class S>
VarT<S> mul(const VarT<S>& a, const VarT<S>& b) {
  require_same_shape(a, b, "mul");
  TensorT<S> out(a.shape());
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = a.value().v[i] * b.value().v[i];
  return make_op<S>(std::move(out), {a, b}, [](NodeT<S>& n) {
    auto& ia = *n.inputs[0];
    auto& ib = *n.inputs[1];
    if (ia.requires_grad) {
      ia.ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) ia.grad[i] += n.grad[i] * ib.val.v[i];
    }
    if (ib.requires_grad) {
      ib.ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) ib.grad[i] += n.grad[i] * ia.val.v[i];
    }
  });
}

template <class S>
VarT<S> div(const VarT<S>& a, const VarT<S>& b) {
  require_same_shape(a, b, "div");
  TensorT<S> out(a.shape());
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = a.value().v[i] / b.value().v[i];
  return make_op<S>(std::move(out), {a, b}, [](NodeT<S>& n) {
    auto& ia = *n.inputs[0];
    auto& ib = *n.inputs[1];
    if (ia.requires_grad) {
      ia.ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) ia.grad[i] += n.grad[i] / ib.val.v[i];
    }
    if (ib.requires_grad) {
      ib.ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i)
        ib.grad[i] -= n.grad[i] * ia.val.v[i] / (ib.val.v[i] * ib.val.v[i]);
    }
  });
}

template <class S>
VarT<S> scale(const VarT<S>& a, S c) {
  TensorT<S> out(a.shape());
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = a.value().v[i] * c;
  return make_op<S>(std::move(out), {a}, [c](NodeT<S>& n) {
    auto& ia = *n.inputs[0];
    if (!ia.requires_grad) return;
    ia.ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) ia.grad[i] += n.grad[i] * c;
  });
}

template <class S>
VarT<S> add_scalar(const VarT<S>& a, S c) {
  TensorT<S> out(a.shape());
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = a.value().v[i] + c;
  return make_op<S>(std::move(out), {a}, [](NodeT<S>& n) {
    auto& ia = *n.inputs[0];
    if (!ia.requires_grad) return;
    ia.ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) ia.grad[i] += n.grad[i];
  });
}

// x[n x d] + b[1 x d], broadcast over rows
template <class S>
VarT<S> add_bias(const VarT<S>& x, const VarT<S>& b) {
  const int n = x.value().rows(), d = x.value().cols();
  if (b.value().numel() != d)
    throw NumericError("add_bias: bias " + shape_str(b.shape()) + " does not match " +
                       shape_str(x.shape()));
  TensorT<S> out(x.shape());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out.at(i, j) = x.value().at(i, j) + b.value().v[static_cast<std::size_t>(j)];
  return make_op<S>(std::move(out), {x, b}, [n, d](NodeT<S>& n_) {
    auto& ix = *n_.inputs[0];
    auto& ib = *n_.inputs[1];
    if (ix.requires_grad) {
      ix.ensure_grad();
      for (std::size_t i = 0; i < n_.grad.size(); ++i) ix.grad[i] += n_.grad[i];
    }
    if (ib.requires_grad) {
      ib.ensure_grad();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) ib.grad[static_cast<std::size_t>(j)] += n_.grad[static_cast<std::size_t>(i) * d + j];
    }
  });
}

// x[B*n x d] + p[n x d], tiled over B row-blocks
template <class S>
VarT<S> add_block_bias(const VarT<S>& x, const VarT<S>& p) {
  const int rows = x.value().rows(), d = x.value().cols();
  const int n = p.value().rows();
  if (p.value().cols() != d || n == 0 || rows % n != 0)
    throw NumericError("add_block_bias: " + shape_str(x.shape()) + " vs " + shape_str(p.shape()));
  TensorT<S> out(x.shape());
  for (int i = 0; i < rows; ++i) {
    const int r = i % n;
    for (int j = 0; j < d; ++j) out.at(i, j) = x.value().at(i, j) + p.value().at(r, j);
  }
  return make_op<S>(std::move(out), {x, p}, [rows, n, d](NodeT<S>& n_) {
    auto& ix = *n_.inputs[0];
    auto& ip = *n_.inputs[1];
    if (ix.requires_grad) {
      ix.ensure_grad();
      for (std::size_t i = 0; i < n_.grad.size(); ++i) ix.grad[i] += n_.grad[i];
    }
    if (ip.requires_grad) {
      ip.ensure_grad();
      for (int i = 0; i < rows; ++i) {
        const int r = i % n;
        for (int j = 0; j < d; ++j)
          ip.grad[static_cast<std::size_t>(r) * d + j] += n_.grad[static_cast<std::size_t>(i) * d + j];
      }
    }
  });
}

template <class S, class F, class DF>
VarT<S> unary_op(const VarT<S>& a, F f, DF df) {
  TensorT<S> out(a.shape());
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = f(a.value().v[i]);
  return make_op<S>(std::move(out), {a}, [df](NodeT<S>& n) {
    auto& ia = *n.inputs[0];
    if (!ia.requires_grad) return;
    ia.ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      ia.grad[i] += n.grad[i] * df(ia.val.v[i], n.val.v[i]);
  });
}

template <class S>
VarT<S> relu(const VarT<S>& a) {
  return unary_op(
      a, [](S x) { return x > S(0) ? x : S(0); },
      [](S x, S) { return x > S(0) ? S(1) : S(0); });
}

template <class S>
VarT<S> sigmoid(const VarT<S>& a) {
  return unary_op(
      a, [](S x) { return S(1) / (S(1) + std::exp(-x)); }, [](S, S y) { return y * (S(1) - y); });
}

template <class S>
VarT<S> tanh_act(const VarT<S>& a) {
  return unary_op(
      a, [](S x) { return std::tanh(x); }, [](S, S y) { return S(1) - y * y; });
}

template <class S>
VarT<S> exp_act(const VarT<S>& a) {
  return unary_op(
      a, [](S x) { return std::exp(x); }, [](S, S y) { return y; });
}

template <class S>
VarT<S> log_act(const VarT<S>& a) {
  return unary_op(
      a, [](S x) { return std::log(x); }, [](S x, S) { return S(1) / x; });
}

template <class S>
VarT<S> neg(const VarT<S>& a) {
  return scale(a, S(-1));
}

// ---------------------------------------------------------------------------
// matmul / structural ops
// ---------------------------------------------------------------------------

template <class S>
VarT<S> matmul(const VarT<S>& a, const VarT<S>& b) {
  const int n = a.value().rows(), k = a.value().cols();
  const int k2 = b.value().rows(), m = b.value().cols();
  if (k != k2)
    throw NumericError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  TensorT<S> out(Shape{n, m});
  detail::gemm_nn(a.value().v.data(), b.value().v.data(), out.v.data(), n, k, m);
  return make_op<S>(std::move(out), {a, b}, [n, k, m](NodeT<S>& nd) {
    auto& ia = *nd.inputs[0];
    auto& ib = *nd.inputs[1];
    if (ia.requires_grad) {
      ia.ensure_grad();
      detail::gemm_nt(nd.grad.data(), ib.val.v.data(), ia.grad.data(), n, m, k);
    }
    if (ib.requires_grad) {
      ib.ensure_grad();
      detail::gemm_tn(ia.val.v.data(), nd.grad.data(), ib.grad.data(), n, k, m);
    }
  });
}

template <class S>
VarT<S> concat_rows(const std::vector<VarT<S>>& parts) {
  if (parts.empty()) throw NumericError("concat_rows: no inputs");
  const int d = parts[0].value().cols();
  int total = 0;
  for (const auto& p : parts) {
    if (p.value().cols() != d)
      throw NumericError("concat_rows: column mismatch " + shape_str(p.shape()));
    total += p.value().rows();
  }
  TensorT<S> out(Shape{total, d});
  int r = 0;
  for (const auto& p : parts) {
    std::copy(p.value().v.begin(), p.value().v.end(), out.v.begin() + static_cast<std::ptrdiff_t>(r) * d);
    r += p.value().rows();
  }
  return make_op<S>(std::move(out), parts, [d](NodeT<S>& n) {
    int r0 = 0;
    for (auto& inp : n.inputs) {
      const int rows = inp->val.rows();
      if (inp->requires_grad) {
        inp->ensure_grad();
        for (std::size_t i = 0; i < inp->grad.size(); ++i)
          inp->grad[i] += n.grad[static_cast<std::size_t>(r0) * d + i];
      }
      r0 += rows;
    }
  });
}

template <class S>
VarT<S> slice_rows(const VarT<S>& x, int r0, int count) {
  const int n = x.value().rows(), d = x.value().cols();
  if (r0 < 0 || count < 1 || r0 + count > n)
    throw NumericError("slice_rows: bad range [" + std::to_string(r0) + "," +
                       std::to_string(r0 + count) + ") of " + shape_str(x.shape()));
  TensorT<S> out(Shape{count, d});
  std::copy(x.value().v.begin() + static_cast<std::ptrdiff_t>(r0) * d,
            x.value().v.begin() + static_cast<std::ptrdiff_t>(r0 + count) * d, out.v.begin());
  return make_op<S>(std::move(out), {x}, [r0, d](NodeT<S>& n) {
    auto& ix = *n.inputs[0];
    if (!ix.requires_grad) return;
    ix.ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      ix.grad[static_cast<std::size_t>(r0) * d + i] += n.grad[i];
  });
}

template <class S>
VarT<S> slice_cols(const VarT<S>& x, int c0, int count) {
  const int n = x.value().rows(), d = x.value().cols();
  if (c0 < 0 || count < 1 || c0 + count > d)
    throw NumericError("slice_cols: bad range of " + shape_str(x.shape()));
  TensorT<S> out(Shape{n, count});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < count; ++j) out.at(i, j) = x.value().at(i, c0 + j);
  return make_op<S>(std::move(out), {x}, [c0, count, d](NodeT<S>& n_) {
    auto& ix = *n_.inputs[0];
    if (!ix.requires_grad) return;
    ix.ensure_grad();
    const int rows = ix.val.rows();
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < count; ++j)
        ix.grad[static_cast<std::size_t>(i) * d + c0 + j] += n_.grad[static_cast<std::size_t>(i) * count + j];
  });
}

template <class S>
VarT<S> gather_rows(const VarT<S>& x, std::vector<int> indices) {
  const int n = x.value().rows(), d = x.value().cols();
  for (const int idx : indices)
    if (idx < 0 || idx >= n)
      throw NumericError("gather_rows: index " + std::to_string(idx) + " out of " +
                         shape_str(x.shape()));
  TensorT<S> out(Shape{static_cast<int>(indices.size()), d});
  for (std::size_t i = 0; i < indices.size(); ++i)
    std::copy(x.value().v.begin() + static_cast<std::ptrdiff_t>(indices[i]) * d,
              x.value().v.begin() + static_cast<std::ptrdiff_t>(indices[i] + 1) * d,
              out.v.begin() + static_cast<std::ptrdiff_t>(i) * d);
  return make_op<S>(std::move(out), {x}, [indices = std::move(indices), d](NodeT<S>& n) {
    auto& ix = *n.inputs[0];
    if (!ix.requires_grad) return;
    ix.ensure_grad();
    for (std::size_t i = 0; i < indices.size(); ++i)
      for (int j = 0; j < d; ++j)
        ix.grad[static_cast<std::size_t>(indices[i]) * d + j] += n.grad[i * static_cast<std::size_t>(d) + j];
  });
}

template <class S>
VarT<S> embedding_rows(const VarT<S>& table, const std::vector<int>& ids) {
  return gather_rows(table, ids);
}

template <class S>
VarT<S> transpose(const VarT<S>& x) {
  const int n = x.value().rows(), d = x.value().cols();
  TensorT<S> out(Shape{d, n});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out.at(j, i) = x.value().at(i, j);
  return make_op<S>(std::move(out), {x}, [n, d](NodeT<S>& nd) {
    auto& ix = *nd.inputs[0];
    if (!ix.requires_grad) return;
    ix.ensure_grad();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j)
        ix.grad[static_cast<std::size_t>(i) * d + j] += nd.grad[static_cast<std::size_t>(j) * n + i];
  });
}

template <class S>
VarT<S> reshape(const VarT<S>& x, Shape shape) {
  if (shape_numel(shape) != x.value().numel())
    throw NumericError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  TensorT<S> out(std::move(shape), x.value().v);
  return make_op<S>(std::move(out), {x}, [](NodeT<S>& n) {
    auto& ix = *n.inputs[0];
    if (!ix.requires_grad) return;
    ix.ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) ix.grad[i] += n.grad[i];
  });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <class S>
VarT<S> mean_rows(const VarT<S>& x) {
  const int n = x.value().rows(), d = x.value().cols();
  TensorT<S> out(Shape{1, d});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out.v[static_cast<std::size_t>(j)] += x.value().at(i, j);
  const S inv = S(1) / static_cast<S>(n);
  for (auto& v : out.v) v *= inv;
  return make_op<S>(std::move(out), {x}, [n, d, inv](NodeT<S>& nd) {
    auto& ix = *nd.inputs[0];
    if (!ix.requires_grad) return;
    ix.ensure_grad();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) ix.grad[static_cast<std::size_t>(i) * d + j] += nd.grad[static_cast<std::size_t>(j)] * inv;
  });
}

// [B*n x d] -> [B x d], mean within each n-row block
template <class S>
VarT<S> mean_blocks(const VarT<S>& x, int block_rows) {
  const int rows = x.value().rows(), d = x.value().cols();
  if (block_rows < 1 || rows % block_rows != 0)
    throw NumericError("mean_blocks: rows " + std::to_string(rows) + " not divisible by " +
                       std::to_string(block_rows));
  const int b = rows / block_rows;
  TensorT<S> out(Shape{b, d});
  const S inv = S(1) / static_cast<S>(block_rows);
  for (int blk = 0; blk < b; ++blk)
    for (int r = 0; r < block_rows; ++r)
      for (int j = 0; j < d; ++j) out.at(blk, j) += x.value().at(blk * block_rows + r, j) * inv;
  return make_op<S>(std::move(out), {x}, [b, block_rows, d, inv](NodeT<S>& nd) {
    auto& ix = *nd.inputs[0];
    if (!ix.requires_grad) return;
    ix.ensure_grad();
    for (int blk = 0; blk < b; ++blk)
      for (int r = 0; r < block_rows; ++r)
        for (int j = 0; j < d; ++j)
          ix.grad[static_cast<std::size_t>(blk * block_rows + r) * d + j] +=
              nd.grad[static_cast<std::size_t>(blk) * d + j] * inv;
  });
}

// per-row sum over columns: [n x k] -> [n x 1]
template <class S>
VarT<S> row_sum(const VarT<S>& x) {
  const int n = x.value().rows(), k = x.value().cols();
  TensorT<S> out(Shape{n, 1});
  for (int i = 0; i < n; ++i) {
    S acc = S(0);
    for (int j = 0; j < k; ++j) acc += x.value().at(i, j);
    out.v[static_cast<std::size_t>(i)] = acc;
  }
  return make_op<S>(std::move(out), {x}, [n, k](NodeT<S>& nd) {
    auto& ix = *nd.inputs[0];
    if (!ix.requires_grad) return;
    ix.ensure_grad();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < k; ++j) ix.grad[static_cast<std::size_t>(i) * k + j] += nd.grad[static_cast<std::size_t>(i)];
  });
}

template <class S>
VarT<S> sum_all(const VarT<S>& x) {
  TensorT<S> out(Shape{1, 1});
  for (const S v : x.value().v) out.v[0] += v;
  return make_op<S>(std::move(out), {x}, [](NodeT<S>& nd) {
    auto& ix = *nd.inputs[0];
    if (!ix.requires_grad) return;
    ix.ensure_grad();
    for (auto& g : ix.grad) g += nd.grad[0];
  });
}

template <class S>
VarT<S> mean_all(const VarT<S>& x) {
  return scale(sum_all(x), S(1) / static_cast<S>(x.value().numel()));
}

// ---------------------------------------------------------------------------
// row-wise softmax family
// ---------------------------------------------------------------------------

template <class S>
VarT<S> softmax_rows(const VarT<S>& x) {
  const int n = x.value().rows(), k = x.value().cols();
  TensorT<S> out = x.value();
  for (int i = 0; i < n; ++i) detail::softmax_row(out.v.data() + static_cast<std::size_t>(i) * k, k);
  return make_op<S>(std::move(out), {x}, [n, k](NodeT<S>& nd) {
    auto& ix = *nd.inputs[0];
    if (!ix.requires_grad) return;
    ix.ensure_grad();
    for (int i = 0; i < n; ++i) {
      const S* y = nd.val.v.data() + static_cast<std::size_t>(i) * k;
      const S* dy = nd.grad.data() + static_cast<std::size_t>(i) * k;
      S dot = S(0);
      for (int j = 0; j < k; ++j) dot += y[j] * dy[j];
      S* dx = ix.grad.data() + static_cast<std::size_t>(i) * k;
      for (int j = 0; j < k; ++j) dx[j] += y[j] * (dy[j] - dot);
    }
  });
}

template <class S>
VarT<S> log_softmax_rows(const VarT<S>& x) {
  const int n = x.value().rows(), k = x.value().cols();
  TensorT<S> out(x.shape());
  for (int i = 0; i < n; ++i) {
    const S* row = x.value().v.data() + static_cast<std::size_t>(i) * k;
    S mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    S sum = S(0);
    for (int j = 0; j < k; ++j) sum += std::exp(row[j] - mx);
    const S lse = mx + std::log(sum);
    for (int j = 0; j < k; ++j) out.at(i, j) = row[j] - lse;
  }
  return make_op<S>(std::move(out), {x}, [n, k](NodeT<S>& nd) {
    auto& ix = *nd.inputs[0];
    if (!ix.requires_grad) return;
    ix.ensure_grad();
    for (int i = 0; i < n; ++i) {
      const S* y = nd.val.v.data() + static_cast<std::size_t>(i) * k;
      const S* dy = nd.grad.data() + static_cast<std::size_t>(i) * k;
      S dsum = S(0);
      for (int j = 0; j < k; ++j) dsum += dy[j];
      S* dx = ix.grad.data() + static_cast<std::size_t>(i) * k;
      for (int j = 0; j < k; ++j) dx[j] += dy[j] - std::exp(y[j]) * dsum;
    }
  });
}

// [n x k] -> [n x 1]
template <class S>
VarT<S> logsumexp_rows(const VarT<S>& x) {
  const int n = x.value().rows(), k = x.value().cols();
  TensorT<S> out(Shape{n, 1});
  for (int i = 0; i < n; ++i) {
    const S* row = x.value().v.data() + static_cast<std::size_t>(i) * k;
    S mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    S sum = S(0);
    for (int j = 0; j < k; ++j) sum += std::exp(row[j] - mx);
    out.v[static_cast<std::size_t>(i)] = mx + std::log(sum);
  }
  return make_op<S>(std::move(out), {x}, [n, k](NodeT<S>& nd) {
    auto& ix = *nd.inputs[0];
    if (!ix.requires_grad) return;
    ix.ensure_grad();
    for (int i = 0; i < n; ++i) {
      const S* row = ix.val.v.data() + static_cast<std::size_t>(i) * k;
      const S lse = nd.val.v[static_cast<std::size_t>(i)];
      const S g = nd.grad[static_cast<std::size_t>(i)];
      S* dx = ix.grad.data() + static_cast<std::size_t>(i) * k;
      for (int j = 0; j < k; ++j) dx[j] += g * std::exp(row[j] - lse);
    }
  });
}

// fused CE per row: out[i] = logsumexp(logits[i,:]) - logits[i, ids[i]]
template <class S>
VarT<S> cross_entropy_rows(const VarT<S>& logits, std::vector<int> ids) {
  const int n = logits.value().rows(), k = logits.value().cols();
  if (static_cast<int>(ids.size()) != n)
    throw NumericError("cross_entropy_rows: " + std::to_string(ids.size()) + " targets for " +
                       std::to_string(n) + " rows");
  for (const int id : ids)
    if (id < 0 || id >= k) throw DataError("cross_entropy_rows: label out of range");
  TensorT<S> out(Shape{n, 1});
  for (int i = 0; i < n; ++i) {
    const S* row = logits.value().v.data() + static_cast<std::size_t>(i) * k;
    S mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    S sum = S(0);
    for (int j = 0; j < k; ++j) sum += std::exp(row[j] - mx);
    out.v[static_cast<std::size_t>(i)] = mx + std::log(sum) - row[ids[static_cast<std::size_t>(i)]];
  }
  return make_op<S>(std::move(out), {logits}, [n, k, ids = std::move(ids)](NodeT<S>& nd) {
    auto& ix = *nd.inputs[0];
    if (!ix.requires_grad) return;
    ix.ensure_grad();
    for (int i = 0; i < n; ++i) {
      const S* row = ix.val.v.data() + static_cast<std::size_t>(i) * k;
      S mx = row[0];
      for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
      S sum = S(0);
      for (int j = 0; j < k; ++j) sum += std::exp(row[j] - mx);
      const S g = nd.grad[static_cast<std::size_t>(i)];
      S* dx = ix.grad.data() + static_cast<std::size_t>(i) * k;
      for (int j = 0; j < k; ++j) {
        S p = std::exp(row[j] - mx) / sum;
        if (j == ids[static_cast<std::size_t>(i)]) p -= S(1);
        dx[j] += g * p;
      }
    }
  });
}

// ---------------------------------------------------------------------------
// layer norm
// ---------------------------------------------------------------------------

template <class S>
VarT<S> layer_norm_rows(const VarT<S>& x, const VarT<S>& gain, const VarT<S>& bias,
                        S eps = S(1e-5)) {
  const int n = x.value().rows(), d = x.value().cols();
  if (gain.value().numel() != d || bias.value().numel() != d)
    throw NumericError("layer_norm_rows: affine params do not match " + shape_str(x.shape()));
  TensorT<S> out(x.shape());
  auto xhat = std::make_shared<std::vector<S>>(x.value().v.size());
  auto inv_std = std::make_shared<std::vector<S>>(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const S* row = x.value().v.data() + static_cast<std::size_t>(i) * d;
    S mean = S(0);
    for (int j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<S>(d);
    S var = S(0);
    for (int j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<S>(d);
    const S inv = S(1) / std::sqrt(var + eps);
    (*inv_std)[static_cast<std::size_t>(i)] = inv;
    for (int j = 0; j < d; ++j) {
      const S xh = (row[j] - mean) * inv;
      (*xhat)[static_cast<std::size_t>(i) * d + j] = xh;
      out.at(i, j) = xh * gain.value().v[static_cast<std::size_t>(j)] + bias.value().v[static_cast<std::size_t>(j)];
    }
  }
  return make_op<S>(std::move(out), {x, gain, bias}, [n, d, xhat, inv_std](NodeT<S>& nd) {
    auto& ix = *nd.inputs[0];
    auto& ig = *nd.inputs[1];
    auto& ib = *nd.inputs[2];
    if (ig.requires_grad) {
      ig.ensure_grad();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j)
          ig.grad[static_cast<std::size_t>(j)] +=
              nd.grad[static_cast<std::size_t>(i) * d + j] * (*xhat)[static_cast<std::size_t>(i) * d + j];
    }
    if (ib.requires_grad) {
      ib.ensure_grad();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) ib.grad[static_cast<std::size_t>(j)] += nd.grad[static_cast<std::size_t>(i) * d + j];
    }
    if (ix.requires_grad) {
      ix.ensure_grad();
      for (int i = 0; i < n; ++i) {
        const S* dy = nd.grad.data() + static_cast<std::size_t>(i) * d;
        const S* xh = xhat->data() + static_cast<std::size_t>(i) * d;
        const S inv = (*inv_std)[static_cast<std::size_t>(i)];
        S sum_dxhat = S(0), sum_dxhat_xhat = S(0);
        for (int j = 0; j < d; ++j) {
          const S dxh = dy[j] * ig.val.v[static_cast<std::size_t>(j)];
          sum_dxhat += dxh;
          sum_dxhat_xhat += dxh * xh[j];
        }
        S* dx = ix.grad.data() + static_cast<std::size_t>(i) * d;
        const S invd = S(1) / static_cast<S>(d);
        for (int j = 0; j < d; ++j) {
          const S dxh = dy[j] * ig.val.v[static_cast<std::size_t>(j)];
          dx[j] += inv * (dxh - invd * sum_dxhat - xh[j] * invd * sum_dxhat_xhat);
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// scaled dot-product attention (multi-head, block-batched)
//
// q: [B*nq x d], k,v: [B*nk x d]. Blocks attend independently; causal masking
// requires nq == nk. key_mask (optional) marks valid keys per block row.
// ---------------------------------------------------------------------------

template <class S>
VarT<S> attention(const VarT<S>& q, const VarT<S>& k, const VarT<S>& v, int blocks, int heads,
                  bool causal, const std::vector<std::uint8_t>& key_mask = {}) {
  const int d = q.value().cols();
  if (k.value().cols() != d || v.value().cols() != d)
    throw NumericError("attention: width mismatch");
  if (d % heads != 0)
    throw UsageError("attention: dim " + std::to_string(d) + " not divisible by " +
                     std::to_string(heads) + " heads");
  if (blocks < 1 || q.value().rows() % blocks != 0 || k.value().rows() % blocks != 0)
    throw NumericError("attention: rows not divisible into blocks");
  const int nq = q.value().rows() / blocks;
  const int nk = k.value().rows() / blocks;
  if (causal && nq != nk) throw NumericError("attention: causal requires square blocks");
  if (!key_mask.empty() && static_cast<int>(key_mask.size()) != blocks * nk)
    throw NumericError("attention: key mask size mismatch");
  const int hd = d / heads;
  const S inv_sqrt = S(1) / std::sqrt(static_cast<S>(hd));

  TensorT<S> out(q.shape());
  // attention weights saved for backward: [B x H x nq x nk]
  auto weights = std::make_shared<std::vector<S>>(
      static_cast<std::size_t>(blocks) * heads * nq * nk);

  const S* qd = q.value().v.data();
  const S* kd = k.value().v.data();
  const S* vd = v.value().v.data();
  S* od = out.v.data();
  const std::uint8_t* maskd = key_mask.empty() ? nullptr : key_mask.data();

#pragma omp parallel for schedule(static) if (blocks > 2)
  for (int blk = 0; blk < blocks; ++blk) {
    std::vector<S> scores(static_cast<std::size_t>(nk));
    for (int h = 0; h < heads; ++h) {
      const int off = h * hd;
      for (int i = 0; i < nq; ++i) {
        const S* qrow = qd + (static_cast<std::size_t>(blk) * nq + i) * d + off;
        const int jmax = causal ? i + 1 : nk;
        for (int j = 0; j < jmax; ++j) {
          const S* krow = kd + (static_cast<std::size_t>(blk) * nk + j) * d + off;
          S acc = S(0);
          for (int l = 0; l < hd; ++l) acc += qrow[l] * krow[l];
          scores[static_cast<std::size_t>(j)] = acc * inv_sqrt;
          if (maskd && !maskd[static_cast<std::size_t>(blk) * nk + j])
            scores[static_cast<std::size_t>(j)] = S(-1e30);
        }
        for (int j = jmax; j < nk; ++j) scores[static_cast<std::size_t>(j)] = S(-1e30);
        detail::softmax_row(scores.data(), nk);
        S* wrow = weights->data() +
                  ((static_cast<std::size_t>(blk) * heads + h) * nq + i) * nk;
        std::copy(scores.begin(), scores.end(), wrow);
        S* orow = od + (static_cast<std::size_t>(blk) * nq + i) * d + off;
        std::fill(orow, orow + hd, S(0));
        for (int j = 0; j < nk; ++j) {
          const S w = wrow[j];
          if (w == S(0)) continue;
          const S* vrow = vd + (static_cast<std::size_t>(blk) * nk + j) * d + off;
          for (int l = 0; l < hd; ++l) orow[l] += w * vrow[l];
        }
      }
    }
  }

  return make_op<S>(std::move(out), {q, k, v},
                    [blocks, heads, nq, nk, hd, d, inv_sqrt, weights](NodeT<S>& nd) {
    auto& iq = *nd.inputs[0];
    auto& ik = *nd.inputs[1];
    auto& iv = *nd.inputs[2];
    const bool need_q = iq.requires_grad, need_k = ik.requires_grad, need_v = iv.requires_grad;
    if (need_q) iq.ensure_grad();
    if (need_k) ik.ensure_grad();
    if (need_v) iv.ensure_grad();

#pragma omp parallel for schedule(static) if (blocks > 2)
    for (int blk = 0; blk < blocks; ++blk) {
      std::vector<S> dattn(static_cast<std::size_t>(nk));
      for (int h = 0; h < heads; ++h) {
        const int off = h * hd;
        for (int i = 0; i < nq; ++i) {
          const S* dorow = nd.grad.data() + (static_cast<std::size_t>(blk) * nq + i) * d + off;
          const S* wrow = weights->data() +
                          ((static_cast<std::size_t>(blk) * heads + h) * nq + i) * nk;
          // dV and dA
          S dot = S(0);
          for (int j = 0; j < nk; ++j) {
            const S w = wrow[j];
            const S* vrow = iv.val.v.data() + (static_cast<std::size_t>(blk) * nk + j) * d + off;
            S da = S(0);
            for (int l = 0; l < hd; ++l) da += dorow[l] * vrow[l];
            dattn[static_cast<std::size_t>(j)] = da;
            dot += da * w;
            if (need_v && w != S(0)) {
              S* dvrow = iv.grad.data() + (static_cast<std::size_t>(blk) * nk + j) * d + off;
              for (int l = 0; l < hd; ++l) dvrow[l] += w * dorow[l];
            }
          }
          // softmax backward -> dScores, then dQ/dK
          const S* qrow = iq.val.v.data() + (static_cast<std::size_t>(blk) * nq + i) * d + off;
          S* dqrow = need_q ? iq.grad.data() + (static_cast<std::size_t>(blk) * nq + i) * d + off : nullptr;
          for (int j = 0; j < nk; ++j) {
            const S w = wrow[j];
            if (w == S(0)) continue;
            const S ds = w * (dattn[static_cast<std::size_t>(j)] - dot) * inv_sqrt;
            const S* krow = ik.val.v.data() + (static_cast<std::size_t>(blk) * nk + j) * d + off;
            if (need_q)
              for (int l = 0; l < hd; ++l) dqrow[l] += ds * krow[l];
            if (need_k) {
              S* dkrow = ik.grad.data() + (static_cast<std::size_t>(blk) * nk + j) * d + off;
              for (int l = 0; l < hd; ++l) dkrow[l] += ds * qrow[l];
            }
          }
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// conv / pooling (NCHW)
// ---------------------------------------------------------------------------

template <class S>
VarT<S> conv2d(const VarT<S>& x, const VarT<S>& w, const VarT<S>& b, int stride, int pad) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  if (xs.size() != 4 || ws.size() != 4 || xs[1] != ws[1])
    throw NumericError("conv2d: " + shape_str(xs) + " with kernel " + shape_str(ws));
  const int B = xs[0], C = xs[1], H = xs[2], W = xs[3];
  const int O = ws[0], KH = ws[2], KW = ws[3];
  if (b.value().numel() != O) throw NumericError("conv2d: bias size mismatch");
  const int OH = (H + 2 * pad - KH) / stride + 1;
  const int OW = (W + 2 * pad - KW) / stride + 1;
  if (OH < 1 || OW < 1) throw NumericError("conv2d: output would be empty");

  TensorT<S> out(Shape{B, O, OH, OW});
  const S* xd = x.value().v.data();
  const S* wd = w.value().v.data();
  const S* bd = b.value().v.data();
  S* od = out.v.data();

  auto xidx = [C, H, W](int bb, int c, int h, int ww) {
    return ((static_cast<std::size_t>(bb) * C + c) * H + h) * W + ww;
  };
  auto widx = [C, KH, KW](int o, int c, int kh, int kw) {
    return ((static_cast<std::size_t>(o) * C + c) * KH + kh) * KW + kw;
  };
  auto oidx = [O, OH, OW](int bb, int o, int oh, int ow) {
    return ((static_cast<std::size_t>(bb) * O + o) * OH + oh) * OW + ow;
  };

#pragma omp parallel for schedule(static) if (B > 1)
  for (int bb = 0; bb < B; ++bb)
    for (int o = 0; o < O; ++o)
      for (int oh = 0; oh < OH; ++oh)
        for (int ow = 0; ow < OW; ++ow) {
          S acc = bd[o];
          for (int c = 0; c < C; ++c)
            for (int kh = 0; kh < KH; ++kh) {
              const int ih = oh * stride + kh - pad;
              if (ih < 0 || ih >= H) continue;
              for (int kw = 0; kw < KW; ++kw) {
                const int iw = ow * stride + kw - pad;
                if (iw < 0 || iw >= W) continue;
                acc += xd[xidx(bb, c, ih, iw)] * wd[widx(o, c, kh, kw)];
              }
            }
          od[oidx(bb, o, oh, ow)] = acc;
        }

  return make_op<S>(std::move(out), {x, w, b},
                    [B, C, H, W, O, KH, KW, OH, OW, stride, pad, xidx, widx, oidx](NodeT<S>& nd) {
    auto& ix = *nd.inputs[0];
    auto& iw = *nd.inputs[1];
    auto& ib = *nd.inputs[2];
    const S* god = nd.grad.data();
    if (ib.requires_grad) {
      ib.ensure_grad();
      for (int bb = 0; bb < B; ++bb)
        for (int o = 0; o < O; ++o) {
          S acc = S(0);
          for (int oh = 0; oh < OH; ++oh)
            for (int ow = 0; ow < OW; ++ow) acc += god[oidx(bb, o, oh, ow)];
          ib.grad[static_cast<std::size_t>(o)] += acc;
        }
    }
    if (iw.requires_grad) {
      iw.ensure_grad();
#pragma omp parallel for schedule(static) if (O > 1)
      for (int o = 0; o < O; ++o)
        for (int bb = 0; bb < B; ++bb)
          for (int oh = 0; oh < OH; ++oh)
            for (int ow = 0; ow < OW; ++ow) {
              const S g = god[oidx(bb, o, oh, ow)];
              if (g == S(0)) continue;
              for (int c = 0; c < C; ++c)
                for (int kh = 0; kh < KH; ++kh) {
                  const int ih = oh * stride + kh - pad;
                  if (ih < 0 || ih >= H) continue;
                  for (int kw = 0; kw < KW; ++kw) {
                    const int iw_ = ow * stride + kw - pad;
                    if (iw_ < 0 || iw_ >= W) continue;
                    iw.grad[widx(o, c, kh, kw)] += g * ix.val.v[xidx(bb, c, ih, iw_)];
                  }
                }
            }
    }
    if (ix.requires_grad) {
      ix.ensure_grad();
#pragma omp parallel for schedule(static) if (B > 1)
      for (int bb = 0; bb < B; ++bb)
        for (int o = 0; o < O; ++o)
          for (int oh = 0; oh < OH; ++oh)
            for (int ow = 0; ow < OW; ++ow) {
              const S g = god[oidx(bb, o, oh, ow)];
              if (g == S(0)) continue;
              for (int c = 0; c < C; ++c)
                for (int kh = 0; kh < KH; ++kh) {
                  const int ih = oh * stride + kh - pad;
                  if (ih < 0 || ih >= H) continue;
                  for (int kw = 0; kw < KW; ++kw) {
                    const int iw_ = ow * stride + kw - pad;
                    if (iw_ < 0 || iw_ >= W) continue;
                    ix.grad[xidx(bb, c, ih, iw_)] += g * iw.val.v[widx(o, c, kh, kw)];
                  }
                }
            }
    }
  });
}

template <class S>
VarT<S> max_pool2d(const VarT<S>& x, int kernel, int stride) {
  const auto& xs = x.shape();
  if (xs.size() != 4) throw NumericError("max_pool2d: expects NCHW, got " + shape_str(xs));
  const int B = xs[0], C = xs[1], H = xs[2], W = xs[3];
  const int OH = (H - kernel) / stride + 1;
  const int OW = (W - kernel) / stride + 1;
  TensorT<S> out(Shape{B, C, OH, OW});
  auto argmax = std::make_shared<std::vector<std::int64_t>>(out.v.size());
  const S* xd = x.value().v.data();
  std::size_t oi = 0;
  for (int bb = 0; bb < B; ++bb)
    for (int c = 0; c < C; ++c)
      for (int oh = 0; oh < OH; ++oh)
        for (int ow = 0; ow < OW; ++ow, ++oi) {
          S best = S(0);
          std::int64_t besti = -1;
          for (int kh = 0; kh < kernel; ++kh)
            for (int kw = 0; kw < kernel; ++kw) {
              const std::size_t idx = ((static_cast<std::size_t>(bb) * C + c) * H + oh * stride + kh) * W +
                                      ow * stride + kw;
              if (besti < 0 || xd[idx] > best) {
                best = xd[idx];
                besti = static_cast<std::int64_t>(idx);
              }
            }
          out.v[oi] = best;
          (*argmax)[oi] = besti;
        }
  return make_op<S>(std::move(out), {x}, [argmax](NodeT<S>& nd) {
    auto& ix = *nd.inputs[0];
    if (!ix.requires_grad) return;
    ix.ensure_grad();
    for (std::size_t i = 0; i < nd.grad.size(); ++i)
      ix.grad[static_cast<std::size_t>((*argmax)[i])] += nd.grad[i];
  });
}

// [B,C,h,w] -> [B*(h*w) x C]: one token per spatial cell, channels as features
template <class S>
VarT<S> image_to_tokens(const VarT<S>& x) {
  const auto& xs = x.shape();
  if (xs.size() != 4) throw NumericError("image_to_tokens: expects NCHW");
  const int B = xs[0], C = xs[1], H = xs[2], W = xs[3];
  TensorT<S> out(Shape{B * H * W, C});
  for (int bb = 0; bb < B; ++bb)
    for (int c = 0; c < C; ++c)
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w)
          out.at(bb * H * W + h * W + w, c) =
              x.value().v[((static_cast<std::size_t>(bb) * C + c) * H + h) * W + w];
  return make_op<S>(std::move(out), {x}, [B, C, H, W](NodeT<S>& nd) {
    auto& ix = *nd.inputs[0];
    if (!ix.requires_grad) return;
    ix.ensure_grad();
    for (int bb = 0; bb < B; ++bb)
      for (int c = 0; c < C; ++c)
        for (int h = 0; h < H; ++h)
          for (int w = 0; w < W; ++w)
            ix.grad[((static_cast<std::size_t>(bb) * C + c) * H + h) * W + w] +=
                nd.grad[static_cast<std::size_t>(bb * H * W + h * W + w) * C + c];
  });
}

// ---------------------------------------------------------------------------
// sequence / extremum ops used by the spacing loss
// ---------------------------------------------------------------------------

template <class S>
VarT<S> cumsum_rows(const VarT<S>& x) {
  const int n = x.value().rows(), d = x.value().cols();
  TensorT<S> out(x.shape());
  for (int j = 0; j < d; ++j) {
    S acc = S(0);
    for (int i = 0; i < n; ++i) {
      acc += x.value().at(i, j);
      out.at(i, j) = acc;
    }
  }
  return make_op<S>(std::move(out), {x}, [n, d](NodeT<S>& nd) {
    auto& ix = *nd.inputs[0];
    if (!ix.requires_grad) return;
    ix.ensure_grad();
    for (int j = 0; j < d; ++j) {
      S acc = S(0);
      for (int i = n - 1; i >= 0; --i) {
        acc += nd.grad[static_cast<std::size_t>(i) * d + j];
        ix.grad[static_cast<std::size_t>(i) * d + j] += acc;
      }
    }
  });
}

// column-wise extrema over rows; subgradient routes to the first extremal row
template <class S>
VarT<S> reduce_max_rows(const VarT<S>& x) {
  const int n = x.value().rows(), d = x.value().cols();
  TensorT<S> out(Shape{1, d});
  auto arg = std::make_shared<std::vector<int>>(static_cast<std::size_t>(d));
  for (int j = 0; j < d; ++j) {
    int best = 0;
    for (int i = 1; i < n; ++i)
      if (x.value().at(i, j) > x.value().at(best, j)) best = i;
    (*arg)[static_cast<std::size_t>(j)] = best;
    out.v[static_cast<std::size_t>(j)] = x.value().at(best, j);
  }
  return make_op<S>(std::move(out), {x}, [d, arg](NodeT<S>& nd) {
    auto& ix = *nd.inputs[0];
    if (!ix.requires_grad) return;
    ix.ensure_grad();
    const int cols = ix.val.cols();
    for (int j = 0; j < d; ++j)
      ix.grad[static_cast<std::size_t>((*arg)[static_cast<std::size_t>(j)]) * cols + j] += nd.grad[static_cast<std::size_t>(j)];
  });
}

template <class S>
VarT<S> reduce_min_rows(const VarT<S>& x) {
  const int n = x.value().rows(), d = x.value().cols();
  TensorT<S> out(Shape{1, d});
  auto arg = std::make_shared<std::vector<int>>(static_cast<std::size_t>(d));
  for (int j = 0; j < d; ++j) {
    int best = 0;
    for (int i = 1; i < n; ++i)
      if (x.value().at(i, j) < x.value().at(best, j)) best = i;
    (*arg)[static_cast<std::size_t>(j)] = best;
    out.v[static_cast<std::size_t>(j)] = x.value().at(best, j);
  }
  return make_op<S>(std::move(out), {x}, [d, arg](NodeT<S>& nd) {
    auto& ix = *nd.inputs[0];
    if (!ix.requires_grad) return;
    ix.ensure_grad();
    const int cols = ix.val.cols();
    for (int j = 0; j < d; ++j)
      ix.grad[static_cast<std::size_t>((*arg)[static_cast<std::size_t>(j)]) * cols + j] += nd.grad[static_cast<std::size_t>(j)];
  });
}

// elementwise binary extrema; ties route the subgradient to the first input
template <class S>
VarT<S> max_elem(const VarT<S>& a, const VarT<S>& b) {
  require_same_shape(a, b, "max_elem");
  TensorT<S> out(a.shape());
  for (std::size_t i = 0; i < out.v.size(); ++i)
    out.v[i] = a.value().v[i] >= b.value().v[i] ? a.value().v[i] : b.value().v[i];
  return make_op<S>(std::move(out), {a, b}, [](NodeT<S>& n) {
    auto& ia = *n.inputs[0];
    auto& ib = *n.inputs[1];
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      if (ia.val.v[i] >= ib.val.v[i]) {
        if (ia.requires_grad) {
          ia.ensure_grad();
          ia.grad[i] += n.grad[i];
        }
      } else if (ib.requires_grad) {
        ib.ensure_grad();
        ib.grad[i] += n.grad[i];
      }
    }
  });
}

template <class S>
VarT<S> min_elem(const VarT<S>& a, const VarT<S>& b) {
  require_same_shape(a, b, "min_elem");
  TensorT<S> out(a.shape());
  for (std::size_t i = 0; i < out.v.size(); ++i)
    out.v[i] = a.value().v[i] <= b.value().v[i] ? a.value().v[i] : b.value().v[i];
  return make_op<S>(std::move(out), {a, b}, [](NodeT<S>& n) {
    auto& ia = *n.inputs[0];
    auto& ib = *n.inputs[1];
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      if (ia.val.v[i] <= ib.val.v[i]) {
        if (ia.requires_grad) {
          ia.ensure_grad();
          ia.grad[i] += n.grad[i];
        }
      } else if (ib.requires_grad) {
        ib.ensure_grad();
        ib.grad[i] += n.grad[i];
      }
    }
  });
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

template <class S>
void backward(const VarT<S>& root) {
  if (root.value().numel() != 1) throw NumericError("backward: root must be scalar");
  if (!root.requires_grad()) return;

  // iterative post-order over the requires_grad subgraph
  std::vector<NodeT<S>*> order;
  std::unordered_set<NodeT<S>*> visited;
  std::vector<std::pair<NodeT<S>*, std::size_t>> stack;
  stack.push_back({root.node().get(), 0});
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      NodeT<S>* child = node->inputs[next++].get();
      if (child->requires_grad && !visited.count(child)) {
        visited.insert(child);
        stack.push_back({child, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->ensure_grad();
  root.node()->grad[0] = S(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT<S>* node = *it;
    if (node->backprop) {
      node->ensure_grad();
      node->backprop(*node);
    }
  }
}

// ---------------------------------------------------------------------------
// finite-difference verification
// ---------------------------------------------------------------------------

struct GradCheckOptions {
  double eps = 1e-5;
  int max_coords_per_leaf = 0;  // 0 = all coordinates
  std::uint64_t seed = 0;
};

// f rebuilds the scalar graph from the current leaf values on every call.
// Returns the worst relative error between reverse-mode and central
// finite-difference gradients over the selected coordinates.
inline double grad_check(const std::function<VarT<double>()>& f,
                         const std::vector<VarT<double>>& leaves,
                         const GradCheckOptions& opts = {}) {
  if (opts.eps < 1e-6 || opts.eps > 1e-3) throw UsageError("grad_check: eps out of [1e-6, 1e-3]");

  VarT<double> out = f();
  if (!std::isfinite(out.value().v[0])) throw NumericError("grad_check: non-finite function value");
  for (const auto& leaf : leaves) leaf.node()->grad.clear();
  backward(out);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(leaves.size());
  for (const auto& leaf : leaves) {
    if (leaf.grad().empty())
      analytic.emplace_back(leaf.value().v.size(), 0.0);
    else
      analytic.push_back(leaf.grad());
  }

  std::uint64_t state = opts.seed * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL;
  auto next_u64 = [&state]() {
    state ^= state << 13;
    state ^= state >> 7;
    state ^= state << 17;
    return state;
  };

  double worst = 0.0;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto& vals = leaves[li].node()->val.v;
    std::vector<std::size_t> coords(vals.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (opts.max_coords_per_leaf > 0 &&
        vals.size() > static_cast<std::size_t>(opts.max_coords_per_leaf)) {
      for (std::size_t i = coords.size() - 1; i > 0; --i)
        std::swap(coords[i], coords[next_u64() % (i + 1)]);
      coords.resize(static_cast<std::size_t>(opts.max_coords_per_leaf));
    }
    for (const std::size_t ci : coords) {
      const double saved = vals[ci];
      vals[ci] = saved + opts.eps;
      const double fp = f().value().v[0];
      vals[ci] = saved - opts.eps;
      const double fm = f().value().v[0];
      vals[ci] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw NumericError("grad_check: non-finite perturbed value");
      const double numeric = (fp - fm) / (2.0 * opts.eps);
      const double a = analytic[li][ci];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace glyphforge::ag
