#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <unordered_set>
#include <utility>
#include <vector>

#include "fuseformer/common.hpp"

namespace ff {

using Shape = std::vector<size_t>;

inline size_t numel_of(const Shape& s) {
  size_t n = 1;
  for (size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ')';
  return os.str();
}

template <typename T>
class Tensor;

// One recorded node of the computation graph. Leaves have no parents and no
// backward rule; interior nodes hold references to their inputs plus a rule
// that routes the node's gradient into the inputs' gradients (accumulating,
// never overwriting).
template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  bool requires_grad = false;
  std::vector<T> grad;  // empty until first accumulation; then data.size()
  std::vector<Tensor<T>> parents;
  std::function<void(const TensorNode<T>&)> backward_fn;

  size_t numel() const { return data.size(); }

  std::vector<T>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

// Whether newly created ops record backward rules. Disabled during inference
// and inside optimizer updates.
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = prev; }
};

// Reverse-mode traversal order over the recorded graph. Built fresh per
// backward call; `order` lists every node reachable from the root through
// parent edges, inputs before consumers.
template <typename T>
struct Tape {
  std::vector<TensorNode<T>*> order;

  static Tape build(TensorNode<T>* root) {
    Tape tape;
    std::unordered_set<TensorNode<T>*> seen;
    // Iterative post-order DFS.
    std::vector<std::pair<TensorNode<T>*, size_t>> stack;
    stack.emplace_back(root, 0);
    seen.insert(root);
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        TensorNode<T>* p = node->parents[next++].node();
        if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
      } else {
        tape.order.push_back(node);
        stack.pop_back();
      }
    }
    return tape;
  }
};

// Dense n-dimensional array handle with an optional gradient record.
// Copies share the underlying node; fresh nodes come from the named
// constructors. Data is treated as immutable once the tensor has entered a
// recorded computation, except for designated in-place optimizer updates on
// leaf parameters.
template <typename T>
class Tensor {
 public:
  using Scalar = T;

  Tensor() : node_(std::make_shared<TensorNode<T>>()) {}
  explicit Tensor(std::shared_ptr<TensorNode<T>> n) : node_(std::move(n)) {}

  static Tensor from(Shape shape, std::vector<T> data) {
    if (numel_of(shape) != data.size())
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
    auto n = std::make_shared<TensorNode<T>>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    return Tensor(std::move(n));
  }

  static Tensor full(const Shape& shape, T value) {
    return from(shape, std::vector<T>(numel_of(shape), value));
  }
  static Tensor zeros(const Shape& shape) { return full(shape, T(0)); }
  static Tensor ones(const Shape& shape) { return full(shape, T(1)); }
  static Tensor scalar(T value) { return from({1}, {value}); }

  static Tensor uniform(const Shape& shape, Rng& rng, T lo, T hi) {
    std::vector<T> d(numel_of(shape));
    for (auto& v : d) v = T(rng.uniform(double(lo), double(hi)));
    return from(shape, std::move(d));
  }

  static Tensor randn(const Shape& shape, Rng& rng) {
    std::vector<T> d(numel_of(shape));
    for (auto& v : d) v = T(rng.normal());
    return from(shape, std::move(d));
  }

  const Shape& shape() const { return node_->shape; }
  size_t rank() const { return node_->shape.size(); }
  size_t numel() const { return node_->data.size(); }
  size_t extent(size_t axis) const { return node_->shape.at(axis); }

  const std::vector<T>& data() const { return node_->data; }
  // In-place access, reserved for leaf initialization and optimizer updates.
  std::vector<T>& mutable_data() { return node_->data; }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool v) {
    node_->requires_grad = v;
    return *this;
  }

  bool has_grad() const { return !node_->grad.empty(); }
  const std::vector<T>& grad() const {
    if (node_->grad.empty())
      throw Error("gradient not populated; call backward() first");
    return node_->grad;
  }
  void zero_grad() { node_->grad.clear(); }

  T item() const {
    if (numel() != 1)
      throw ShapeError("item() on non-scalar tensor " + shape_str(shape()));
    return node_->data[0];
  }

  // Leaf copy of this tensor's values, cut off from the recorded graph.
  Tensor detach() const { return from(shape(), data()); }

  // Reverse-mode differentiation from a scalar. Seeds d(this)/d(this) = 1,
  // then walks the tape once in reverse topological order, accumulating into
  // every requires_grad leaf. Repeated calls accumulate.
  void backward() const {
    if (numel() != 1)
      throw ShapeError("backward() requires a scalar loss, got " +
                       shape_str(shape()));
    if (!node_->requires_grad)
      throw Error("backward() on a tensor with no recorded gradient path");
    auto tape = Tape<T>::build(node_.get());
    auto& seed = node_->grad_buffer();
    seed[0] += T(1);
    for (auto it = tape.order.rbegin(); it != tape.order.rend(); ++it) {
      TensorNode<T>* n = *it;
      if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
    // Interior nodes keep no gradient state between passes.
    for (TensorNode<T>* n : tape.order)
      if (n->backward_fn) n->grad.clear();
  }

  TensorNode<T>* node() const { return node_.get(); }
  const std::shared_ptr<TensorNode<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<TensorNode<T>> node_;
};

namespace detail {

template <typename T>
Tensor<T> make_op(Shape shape, std::vector<T> data,
                  std::vector<Tensor<T>> parents,
                  std::function<void(const TensorNode<T>&)> backward) {
  auto out = Tensor<T>::from(std::move(shape), std::move(data));
  bool needs = false;
  if (grad_mode())
    for (const auto& p : parents) needs |= p.requires_grad();
  if (needs) {
    out.node()->requires_grad = true;
    out.node()->parents = std::move(parents);
    out.node()->backward_fn = std::move(backward);
  }
  return out;
}

inline bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Broadcasting (trailing-dimension rule: align shapes at the right edge;
// extents must match or be 1).

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  Shape out(std::max(a.size(), b.size()));
  for (size_t i = 0; i < out.size(); ++i) {
    size_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
    size_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
    if (da != db && da != 1 && db != 1)
      throw ShapeError("shapes " + shape_str(a) + " and " + shape_str(b) +
                       " are not broadcastable");
    out[out.size() - 1 - i] = std::max(da, db);
  }
  return out;
}

namespace detail {

// Map a linear index in the broadcast result to a linear index in an operand.
struct BroadcastIndexer {
  std::vector<size_t> out_extent;   // result shape
  std::vector<size_t> op_stride;    // stride 0 where the operand broadcasts

  BroadcastIndexer(const Shape& out, const Shape& op) {
    out_extent = out;
    op_stride.assign(out.size(), 0);
    size_t stride = 1;
    for (size_t i = 0; i < out.size(); ++i) {  // from trailing axis
      size_t oi = out.size() - 1 - i;
      size_t d = i < op.size() ? op[op.size() - 1 - i] : 1;
      op_stride[oi] = (d == 1) ? 0 : stride;
      stride *= d;
    }
  }

  size_t map(size_t linear) const {
    size_t idx = 0;
    for (size_t i = out_extent.size(); i-- > 0;) {
      size_t coord = linear % out_extent[i];
      linear /= out_extent[i];
      idx += coord * op_stride[i];
    }
    return idx;
  }
};

// Elementwise binary op with broadcasting. FwdFn: (a,b)->out.
// DaFn/DbFn: (a,b,out,grad_out)->contribution to da/db.
template <typename T, typename FwdFn, typename DaFn, typename DbFn>
Tensor<T> binary_op(const Tensor<T>& a, const Tensor<T>& b, FwdFn fwd,
                    DaFn dfa, DbFn dfb, const char* /*name*/) {
  Shape out_shape = broadcast_shape(a.shape(), b.shape());
  size_t n = numel_of(out_shape);
  std::vector<T> out(n);

  const auto& av = a.data();
  const auto& bv = b.data();
  if (a.shape() == b.shape()) {
    for (size_t i = 0; i < n; ++i) out[i] = fwd(av[i], bv[i]);
  } else if (detail::is_suffix(b.shape(), a.shape()) && out_shape == a.shape()) {
    size_t m = bv.size();
    for (size_t i = 0; i < n; ++i) out[i] = fwd(av[i], bv[i % m]);
  } else if (detail::is_suffix(a.shape(), b.shape()) && out_shape == b.shape()) {
    size_t m = av.size();
    for (size_t i = 0; i < n; ++i) out[i] = fwd(av[i % m], bv[i]);
  } else {
    BroadcastIndexer ia(out_shape, a.shape()), ib(out_shape, b.shape());
    for (size_t i = 0; i < n; ++i) out[i] = fwd(av[ia.map(i)], bv[ib.map(i)]);
  }

  TensorNode<T>* an = a.node();
  TensorNode<T>* bn = b.node();
  Shape ash = a.shape(), bsh = b.shape(), osh = out_shape;
  auto backward = [an, bn, dfa, dfb, ash, bsh, osh](const TensorNode<T>& self) {
    const auto& g = self.grad;
    BroadcastIndexer ia(osh, ash), ib(osh, bsh);
    bool same = (ash == bsh);
    if (an->requires_grad) {
      auto& da = an->grad_buffer();
      for (size_t i = 0; i < g.size(); ++i) {
        size_t j = same ? i : ia.map(i);
        da[j] += dfa(an->data[j], bn->data[same ? i : ib.map(i)], self.data[i],
                     g[i]);
      }
    }
    if (bn->requires_grad) {
      auto& db = bn->grad_buffer();
      for (size_t i = 0; i < g.size(); ++i) {
        size_t j = same ? i : ib.map(i);
        db[j] += dfb(an->data[same ? i : ia.map(i)], bn->data[j], self.data[i],
                     g[i]);
      }
    }
  };
  return make_op<T>(std::move(out_shape), std::move(out), {a, b},
                    std::move(backward));
}

// Elementwise unary op. DFn: (x, y, grad_out) -> contribution to dx.
template <typename T, typename FwdFn, typename DFn>
Tensor<T> unary_op(const Tensor<T>& x, FwdFn fwd, DFn dfx) {
  const auto& xv = x.data();
  std::vector<T> out(xv.size());
  for (size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  TensorNode<T>* xn = x.node();
  auto backward = [xn, dfx](const TensorNode<T>& self) {
    if (!xn->requires_grad) return;
    auto& dx = xn->grad_buffer();
    for (size_t i = 0; i < self.grad.size(); ++i)
      dx[i] += dfx(xn->data[i], self.data[i], self.grad[i]);
  };
  return make_op<T>(x.shape(), std::move(out), {x}, std::move(backward));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_op(
      a, b, [](T x, T y) { return x + y; },
      [](T, T, T, T g) { return g; }, [](T, T, T, T g) { return g; }, "add");
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_op(
      a, b, [](T x, T y) { return x - y; },
      [](T, T, T, T g) { return g; }, [](T, T, T, T g) { return -g; }, "sub");
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_op(
      a, b, [](T x, T y) { return x * y; },
      [](T, T y, T, T g) { return g * y; },
      [](T x, T, T, T g) { return g * x; }, "mul");
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_op(
      a, b, [](T x, T y) { return x / y; },
      [](T, T y, T, T g) { return g / y; },
      [](T x, T y, T, T g) { return -g * x / (y * y); }, "div");
}

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <typename T>
Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) { return div(a, b); }

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T c) {
  return detail::unary_op(
      x, [c](T v) { return v * c; }, [c](T, T, T g) { return g * c; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T c) {
  return detail::unary_op(
      x, [c](T v) { return v + c; }, [](T, T, T g) { return g; });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& x) {
  return scale(x, T(-1));
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return detail::unary_op(
      x, [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T, T g) { return v > T(0) ? g : T(0); });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
  return detail::unary_op(
      x, [slope](T v) { return v > T(0) ? v : slope * v; },
      [slope](T v, T, T g) { return v > T(0) ? g : slope * g; });
}

// Exact GELU, x * Phi(x).
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr double inv_sqrt2 = 0.7071067811865476;
  constexpr double inv_sqrt2pi = 0.3989422804014327;
  return detail::unary_op(
      x,
      [=](T v) {
        return T(0.5 * double(v) * (1.0 + std::erf(double(v) * inv_sqrt2)));
      },
      [=](T v, T, T g) {
        double cdf = 0.5 * (1.0 + std::erf(double(v) * inv_sqrt2));
        double pdf = inv_sqrt2pi * std::exp(-0.5 * double(v) * double(v));
        return T(double(g) * (cdf + double(v) * pdf));
      });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  return detail::unary_op(
      x, [](T v) { return std::exp(v); },
      [](T, T y, T g) { return g * y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
  for (T v : x.data())
    if (v < T(0)) throw DomainError("log of negative input");
  return detail::unary_op(
      x, [](T v) { return std::log(v); },
      [](T v, T, T g) { return g / v; });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& x) {
  for (T v : x.data())
    if (v < T(0)) throw DomainError("sqrt of negative input");
  return detail::unary_op(
      x, [](T v) { return std::sqrt(v); },
      [](T, T y, T g) { return y > T(0) ? g / (T(2) * y) : T(0); });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return detail::unary_op(
      x, [](T v) { return std::tanh(v); },
      [](T, T y, T g) { return g * (T(1) - y * y); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::unary_op(
      x, [](T v) { return T(1) / (T(1) + std::exp(-v)); },
      [](T, T y, T g) { return g * y * (T(1) - y); });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  return detail::unary_op(
      x, [](T v) { return std::abs(v); },
      [](T v, T, T g) { return v >= T(0) ? g : -g; });
}

// Pass-through gradient inside [lo, hi], zero outside.
template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi) {
  return detail::unary_op(
      x, [=](T v) { return std::min(std::max(v, lo), hi); },
      [=](T v, T, T g) { return (v >= lo && v <= hi) ? g : T(0); });
}

// ---------------------------------------------------------------------------
// Matrix multiply. Raw kernels accumulate into C so backward can reuse them
// for gradient accumulation without temporaries.

namespace detail {

template <typename T>
void mm_nn_acc(const T* a, const T* b, T* c, size_t m, size_t k, size_t n) {
  for (size_t i = 0; i < m; ++i) {
    const T* ai = a + i * k;
    T* ci = c + i * n;
    for (size_t p = 0; p < k; ++p) {
      T av = ai[p];
      const T* bp = b + p * n;
      for (size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// c (m,n) += a (m,k) * b(n,k)^T
template <typename T>
void mm_nt_acc(const T* a, const T* b, T* c, size_t m, size_t k, size_t n) {
  for (size_t i = 0; i < m; ++i) {
    const T* ai = a + i * k;
    T* ci = c + i * n;
    for (size_t j = 0; j < n; ++j) {
      const T* bj = b + j * k;
      T acc = T(0);
      for (size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

// c (k,n) += a (m,k)^T * b (m,n)
template <typename T>
void mm_tn_acc(const T* a, const T* b, T* c, size_t m, size_t k, size_t n) {
  for (size_t p = 0; p < m; ++p) {
    const T* ap = a + p * k;
    const T* bp = b + p * n;
    for (size_t i = 0; i < k; ++i) {
      T av = ap[i];
      if (av == T(0)) continue;
      T* ci = c + i * n;
      for (size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

template <typename T>
void require_matrix(const Tensor<T>& t, const char* role) {
  if (t.rank() != 2)
    throw ShapeError(std::string("matmul ") + role + " must be rank 2, got " +
                     shape_str(t.shape()));
}

}  // namespace detail

// Standard product a (m,k) x b (k,n). Backward: dA = dC*B^T, dB = A^T*dC.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_matrix(a, "lhs");
  detail::require_matrix(b, "rhs");
  size_t m = a.extent(0), k = a.extent(1), k2 = b.extent(0), n = b.extent(1);
  if (k != k2)
    throw ShapeError("matmul inner extents disagree: " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  std::vector<T> out(m * n, T(0));
  detail::mm_nn_acc(a.data().data(), b.data().data(), out.data(), m, k, n);
  TensorNode<T>* an = a.node();
  TensorNode<T>* bn = b.node();
  auto backward = [an, bn, m, k, n](const TensorNode<T>& self) {
    const T* g = self.grad.data();
    if (an->requires_grad)
      detail::mm_nt_acc(g, bn->data.data(), an->grad_buffer().data(), m, n, k);
    if (bn->requires_grad)
      detail::mm_tn_acc(an->data.data(), g, bn->grad_buffer().data(), m, k, n);
  };
  return detail::make_op<T>({m, n}, std::move(out), {a, b}, std::move(backward));
}

// a (m,k) x b (n,k)^T, the layout attention wants for Q*K^T.
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_matrix(a, "lhs");
  detail::require_matrix(b, "rhs");
  size_t m = a.extent(0), k = a.extent(1), n = b.extent(0);
  if (b.extent(1) != k)
    throw ShapeError("matmul_nt inner extents disagree: " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<T> out(m * n, T(0));
  detail::mm_nt_acc(a.data().data(), b.data().data(), out.data(), m, k, n);
  TensorNode<T>* an = a.node();
  TensorNode<T>* bn = b.node();
  auto backward = [an, bn, m, k, n](const TensorNode<T>& self) {
    const T* g = self.grad.data();
    if (an->requires_grad)
      detail::mm_nn_acc(g, bn->data.data(), an->grad_buffer().data(), m, n, k);
    if (bn->requires_grad)
      detail::mm_tn_acc(g, an->data.data(), bn->grad_buffer().data(), m, n, k);
  };
  return detail::make_op<T>({m, n}, std::move(out), {a, b}, std::move(backward));
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  detail::require_matrix(x, "operand");
  size_t m = x.extent(0), n = x.extent(1);
  std::vector<T> out(m * n);
  const auto& xv = x.data();
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < n; ++j) out[j * m + i] = xv[i * n + j];
  TensorNode<T>* xn = x.node();
  auto backward = [xn, m, n](const TensorNode<T>& self) {
    if (!xn->requires_grad) return;
    auto& dx = xn->grad_buffer();
    for (size_t i = 0; i < m; ++i)
      for (size_t j = 0; j < n; ++j) dx[i * n + j] += self.grad[j * m + i];
  };
  return detail::make_op<T>({n, m}, std::move(out), {x}, std::move(backward));
}

// ---------------------------------------------------------------------------
// Shape ops

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape new_shape) {
  if (numel_of(new_shape) != x.numel())
    throw ShapeError("reshape " + shape_str(x.shape()) + " -> " +
                     shape_str(new_shape) + " changes element count");
  TensorNode<T>* xn = x.node();
  auto backward = [xn](const TensorNode<T>& self) {
    if (!xn->requires_grad) return;
    auto& dx = xn->grad_buffer();
    for (size_t i = 0; i < self.grad.size(); ++i) dx[i] += self.grad[i];
  };
  return detail::make_op<T>(std::move(new_shape), x.data(), {x},
                            std::move(backward));
}

// Contiguous slice [r0, r1) along the first axis.
template <typename T>
Tensor<T> slice0(const Tensor<T>& x, size_t r0, size_t r1) {
  if (x.rank() == 0 || r0 >= r1 || r1 > x.extent(0))
    throw ShapeError("slice0 [" + std::to_string(r0) + "," +
                     std::to_string(r1) + ") out of range for " +
                     shape_str(x.shape()));
  size_t row = x.numel() / x.extent(0);
  Shape out_shape = x.shape();
  out_shape[0] = r1 - r0;
  std::vector<T> out(x.data().begin() + r0 * row, x.data().begin() + r1 * row);
  TensorNode<T>* xn = x.node();
  auto backward = [xn, r0, row](const TensorNode<T>& self) {
    if (!xn->requires_grad) return;
    auto& dx = xn->grad_buffer();
    for (size_t i = 0; i < self.grad.size(); ++i)
      dx[r0 * row + i] += self.grad[i];
  };
  return detail::make_op<T>(std::move(out_shape), std::move(out), {x},
                            std::move(backward));
}

template <typename T>
Tensor<T> concat0(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat0 of zero tensors");
  Shape out_shape = parts[0].shape();
  size_t rows = 0;
  for (const auto& p : parts) {
    if (p.rank() != out_shape.size() ||
        !std::equal(p.shape().begin() + 1, p.shape().end(),
                    out_shape.begin() + 1))
      throw ShapeError("concat0 operands disagree beyond axis 0: " +
                       shape_str(out_shape) + " vs " + shape_str(p.shape()));
    rows += p.extent(0);
  }
  out_shape[0] = rows;
  std::vector<T> out;
  out.reserve(numel_of(out_shape));
  for (const auto& p : parts)
    out.insert(out.end(), p.data().begin(), p.data().end());
  std::vector<TensorNode<T>*> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  auto backward = [nodes](const TensorNode<T>& self) {
    size_t off = 0;
    for (TensorNode<T>* pn : nodes) {
      size_t n = pn->data.size();
      if (pn->requires_grad) {
        auto& dp = pn->grad_buffer();
        for (size_t i = 0; i < n; ++i) dp[i] += self.grad[off + i];
      }
      off += n;
    }
  };
  return detail::make_op<T>(std::move(out_shape), std::move(out), parts,
                            std::move(backward));
}

// Column slice [c0, c1) of a rank-2 tensor.
template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, size_t c0, size_t c1) {
  detail::require_matrix(x, "operand");
  size_t m = x.extent(0), n = x.extent(1);
  if (c0 >= c1 || c1 > n)
    throw ShapeError("slice_cols [" + std::to_string(c0) + "," +
                     std::to_string(c1) + ") out of range for " +
                     shape_str(x.shape()));
  size_t w = c1 - c0;
  std::vector<T> out(m * w);
  const auto& xv = x.data();
  for (size_t i = 0; i < m; ++i)
    std::copy_n(xv.begin() + i * n + c0, w, out.begin() + i * w);
  TensorNode<T>* xn = x.node();
  auto backward = [xn, m, n, c0, w](const TensorNode<T>& self) {
    if (!xn->requires_grad) return;
    auto& dx = xn->grad_buffer();
    for (size_t i = 0; i < m; ++i)
      for (size_t j = 0; j < w; ++j)
        dx[i * n + c0 + j] += self.grad[i * w + j];
  };
  return detail::make_op<T>({m, w}, std::move(out), {x}, std::move(backward));
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols of zero tensors");
  size_t m = parts[0].extent(0), n = 0;
  for (const auto& p : parts) {
    detail::require_matrix(p, "operand");
    if (p.extent(0) != m)
      throw ShapeError("concat_cols row counts disagree");
    n += p.extent(1);
  }
  std::vector<T> out(m * n);
  size_t off = 0;
  for (const auto& p : parts) {
    size_t w = p.extent(1);
    for (size_t i = 0; i < m; ++i)
      std::copy_n(p.data().begin() + i * w, w, out.begin() + i * n + off);
    off += w;
  }
  std::vector<TensorNode<T>*> nodes;
  std::vector<size_t> widths;
  for (const auto& p : parts) {
    nodes.push_back(p.node());
    widths.push_back(p.extent(1));
  }
  auto backward = [nodes, widths, m, n](const TensorNode<T>& self) {
    size_t off = 0;
    for (size_t pi = 0; pi < nodes.size(); ++pi) {
      size_t w = widths[pi];
      if (nodes[pi]->requires_grad) {
        auto& dp = nodes[pi]->grad_buffer();
        for (size_t i = 0; i < m; ++i)
          for (size_t j = 0; j < w; ++j)
            dp[i * w + j] += self.grad[i * n + off + j];
      }
      off += w;
    }
  };
  return detail::make_op<T>({m, n}, std::move(out), parts, std::move(backward));
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = T(0);
  for (T v : x.data()) acc += v;
  TensorNode<T>* xn = x.node();
  auto backward = [xn](const TensorNode<T>& self) {
    if (!xn->requires_grad) return;
    auto& dx = xn->grad_buffer();
    for (auto& v : dx) v += self.grad[0];
  };
  return detail::make_op<T>({1}, {acc}, {x}, std::move(backward));
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / T(x.numel()));
}

// Sum over the last axis, keeping it as extent 1 so the result broadcasts
// back against the input.
template <typename T>
Tensor<T> sum_last(const Tensor<T>& x) {
  if (x.rank() == 0) throw ShapeError("sum_last of rank-0 tensor");
  size_t len = x.shape().back();
  size_t rows = x.numel() / len;
  std::vector<T> out(rows, T(0));
  const auto& xv = x.data();
  for (size_t r = 0; r < rows; ++r)
    for (size_t i = 0; i < len; ++i) out[r] += xv[r * len + i];
  Shape out_shape = x.shape();
  out_shape.back() = 1;
  TensorNode<T>* xn = x.node();
  auto backward = [xn, len, rows](const TensorNode<T>& self) {
    if (!xn->requires_grad) return;
    auto& dx = xn->grad_buffer();
    for (size_t r = 0; r < rows; ++r)
      for (size_t i = 0; i < len; ++i) dx[r * len + i] += self.grad[r];
  };
  return detail::make_op<T>(std::move(out_shape), std::move(out), {x},
                            std::move(backward));
}

template <typename T>
Tensor<T> mean_last(const Tensor<T>& x) {
  return scale(sum_last(x), T(1) / T(x.shape().back()));
}

// ---------------------------------------------------------------------------
// Softmax along an axis, computed with max subtraction. Backward:
// dx = y * (g - sum(g * y)) along the axis.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, size_t axis) {
  if (axis >= x.rank())
    throw ShapeError("softmax axis " + std::to_string(axis) +
                     " out of range for " + shape_str(x.shape()));
  size_t len = x.extent(axis);
  size_t inner = 1;
  for (size_t i = axis + 1; i < x.rank(); ++i) inner *= x.extent(i);
  size_t outer = x.numel() / (len * inner);

  const auto& xv = x.data();
  std::vector<T> out(x.numel());
  for (size_t o = 0; o < outer; ++o) {
    for (size_t in = 0; in < inner; ++in) {
      size_t base = o * len * inner + in;
      T mx = xv[base];
      for (size_t i = 1; i < len; ++i)
        mx = std::max(mx, xv[base + i * inner]);
      T z = T(0);
      for (size_t i = 0; i < len; ++i) {
        T e = std::exp(xv[base + i * inner] - mx);
        out[base + i * inner] = e;
        z += e;
      }
      T inv = T(1) / z;
      for (size_t i = 0; i < len; ++i) out[base + i * inner] *= inv;
    }
  }
  TensorNode<T>* xn = x.node();
  auto backward = [xn, outer, len, inner](const TensorNode<T>& self) {
    if (!xn->requires_grad) return;
    auto& dx = xn->grad_buffer();
    for (size_t o = 0; o < outer; ++o) {
      for (size_t in = 0; in < inner; ++in) {
        size_t base = o * len * inner + in;
        T dot = T(0);
        for (size_t i = 0; i < len; ++i) {
          size_t idx = base + i * inner;
          dot += self.grad[idx] * self.data[idx];
        }
        for (size_t i = 0; i < len; ++i) {
          size_t idx = base + i * inner;
          dx[idx] += self.data[idx] * (self.grad[idx] - dot);
        }
      }
    }
  };
  return detail::make_op<T>(x.shape(), std::move(out), {x},
                            std::move(backward));
}

template <typename T>
Tensor<T> softmax_last(const Tensor<T>& x) {
  return softmax(x, x.rank() - 1);
}

}  // namespace ff
