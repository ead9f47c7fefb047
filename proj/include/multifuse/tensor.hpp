#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "multifuse/kernels.hpp"

// Define-by-run reverse-mode autodiff over dense row-major tensors.
// T = float for training, double for finite-difference checking.

namespace multifuse {

template <typename T>
struct TensorNode {
  std::vector<std::size_t> shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode<T>>> parents;
  std::function<void(TensorNode<T>&)> backward_fn;
};

template <typename T>
using NodePtr = std::shared_ptr<TensorNode<T>>;

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

struct NoGradGuard {
  bool saved;
  NoGradGuard() : saved(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = saved; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

inline std::size_t numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

inline std::string shape_str(const std::vector<std::size_t>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr<T> node) : node_(std::move(node)) {}

  static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false) {
    return from_data(shape, std::vector<T>(numel(shape), T(0)), requires_grad);
  }

  static Tensor from_data(std::vector<std::size_t> shape, std::vector<T> data,
                          bool requires_grad = false) {
    if (data.size() != numel(shape))
      throw std::invalid_argument("tensor: data size does not match shape " + shape_str(shape));
    auto n = std::make_shared<TensorNode<T>>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  bool defined() const { return node_ != nullptr; }
  const std::vector<std::size_t>& shape() const { return node_->shape; }
  std::size_t size() const { return node_->value.size(); }
  std::vector<T>& value() { return node_->value; }
  const std::vector<T>& value() const { return node_->value; }
  std::vector<T>& grad() { return node_->grad; }
  const std::vector<T>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  NodePtr<T> node() const { return node_; }

  T item() const {
    if (size() != 1) throw std::invalid_argument("item: tensor is not scalar");
    return node_->value[0];
  }

  // Reverse pass from a scalar output: zeroes every reachable grad buffer,
  // seeds d(out)/d(out) = 1, then walks the graph in reverse topological order.
  void backward() const {
    if (!node_ || node_->value.size() != 1)
      throw std::invalid_argument("backward: output must be scalar");
    std::vector<TensorNode<T>*> order;
    std::unordered_set<TensorNode<T>*> seen{node_.get()};
    struct Frame {
      TensorNode<T>* n;
      std::size_t next;
    };
    std::vector<Frame> stack{{node_.get(), 0}};
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next < f.n->parents.size()) {
        TensorNode<T>* p = f.n->parents[f.next++].get();
        if (seen.insert(p).second) stack.push_back({p, 0});
      } else {
        order.push_back(f.n);
        stack.pop_back();
      }
    }
    for (TensorNode<T>* n : order) n->grad.assign(n->value.size(), T(0));
    node_->grad[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it)
      if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }

 private:
  NodePtr<T> node_;
};

namespace detail {

template <typename T>
Tensor<T> make_op(std::vector<std::size_t> shape, std::vector<T> value,
                  std::vector<NodePtr<T>> parents, std::function<void(TensorNode<T>&)> backward) {
  auto n = std::make_shared<TensorNode<T>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  bool rec = grad_mode();
  if (rec) {
    rec = false;
    for (const auto& p : parents) rec = rec || p->requires_grad;
  }
  if (rec) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward);
  }
  return Tensor<T>(std::move(n));
}

// Axis decomposition: index = (outer * len + t) * inner + i.
struct AxisView {
  std::size_t outer = 1, len = 1, inner = 1;
};

inline AxisView axis_view(const std::vector<std::size_t>& shape, std::size_t axis,
                          const char* op) {
  if (axis >= shape.size())
    throw std::invalid_argument(std::string(op) + ": axis out of range for shape " +
                                shape_str(shape));
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
  v.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

template <typename T>
void check_finite(const std::vector<T>& v, const char* op) {
  for (T x : v)
    if (!std::isfinite(static_cast<double>(x)))
      throw std::runtime_error(std::string(op) + ": non-finite output value");
}

}  // namespace detail

// --- elementwise ---

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  const bool same = sa == sb;
  const bool suffix = !same && sb.size() < sa.size() &&
                      std::equal(sb.begin(), sb.end(), sa.end() - sb.size());
  if (!same && !suffix)
    throw std::invalid_argument("add: shapes " + shape_str(sa) + " and " + shape_str(sb) +
                                " are neither equal nor suffix-broadcastable");
  const std::size_t nb = b.size();
  std::vector<T> out(a.size());
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i % nb];

  auto pa = a.node();
  auto pb = b.node();
  return detail::make_op<T>(
      sa, std::move(out), {pa, pb}, [pa = pa.get(), pb = pb.get(), nb](TensorNode<T>& n) {
        if (pa->requires_grad)
          for (std::size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += n.grad[i];
        if (pb->requires_grad)
          for (std::size_t i = 0; i < n.grad.size(); ++i) pb->grad[i % nb] += n.grad[i];
      });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("mul: shapes " + shape_str(a.shape()) + " and " +
                                shape_str(b.shape()) + " differ");
  std::vector<T> out(a.size());
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];

  auto pa = a.node();
  auto pb = b.node();
  return detail::make_op<T>(a.shape(), std::move(out), {pa, pb},
                            [pa = pa.get(), pb = pb.get()](TensorNode<T>& n) {
                              if (pa->requires_grad)
                                for (std::size_t i = 0; i < n.grad.size(); ++i)
                                  pa->grad[i] += n.grad[i] * pb->value[i];
                              if (pb->requires_grad)
                                for (std::size_t i = 0; i < n.grad.size(); ++i)
                                  pb->grad[i] += n.grad[i] * pa->value[i];
                            });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T c) {
  std::vector<T> out(x.size());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * xv[i];
  auto px = x.node();
  return detail::make_op<T>(x.shape(), std::move(out), {px}, [px = px.get(), c](TensorNode<T>& n) {
    for (std::size_t i = 0; i < n.grad.size(); ++i) px->grad[i] += c * n.grad[i];
  });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T c) {
  std::vector<T> out(x.size());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] + c;
  auto px = x.node();
  return detail::make_op<T>(x.shape(), std::move(out), {px}, [px = px.get()](TensorNode<T>& n) {
    for (std::size_t i = 0; i < n.grad.size(); ++i) px->grad[i] += n.grad[i];
  });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  std::vector<T> out(x.size());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(xv[i]);
  auto px = x.node();
  return detail::make_op<T>(x.shape(), std::move(out), {px}, [px = px.get()](TensorNode<T>& n) {
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      px->grad[i] += n.grad[i] * (T(1) - n.value[i] * n.value[i]);
  });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  std::vector<T> out(x.size());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = T(1) / (T(1) + std::exp(-xv[i]));
  auto px = x.node();
  return detail::make_op<T>(x.shape(), std::move(out), {px}, [px = px.get()](TensorNode<T>& n) {
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      px->grad[i] += n.grad[i] * n.value[i] * (T(1) - n.value[i]);
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> out(x.size());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > T(0) ? xv[i] : T(0);
  auto px = x.node();
  return detail::make_op<T>(x.shape(), std::move(out), {px}, [px = px.get()](TensorNode<T>& n) {
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      if (px->value[i] > T(0)) px->grad[i] += n.grad[i];
  });
}

// --- matmul (2D x 2D, 3D x 2D with shared right operand, 3D x 3D batched) ---

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  auto bad = [&] {
    return std::invalid_argument("matmul: incompatible shapes " + shape_str(sa) + " x " +
                                 shape_str(sb));
  };
  using kernels::isize;
  auto pa = a.node();
  auto pb = b.node();

  if (sa.size() == 2 && sb.size() == 2) {
    if (sa[1] != sb[0]) throw bad();
    const isize m = static_cast<isize>(sa[0]), k = static_cast<isize>(sa[1]),
                n = static_cast<isize>(sb[1]);
    std::vector<T> out(static_cast<std::size_t>(m * n));
    kernels::matmul_nn(a.value().data(), b.value().data(), out.data(), m, k, n);
    return detail::make_op<T>(
        {sa[0], sb[1]}, std::move(out), {pa, pb},
        [pa = pa.get(), pb = pb.get(), m, k, n](TensorNode<T>& nd) {
          if (pa->requires_grad) {
            std::vector<T> da(static_cast<std::size_t>(m * k));
            kernels::matmul_nt(nd.grad.data(), pb->value.data(), da.data(), m, n, k);
            for (std::size_t i = 0; i < da.size(); ++i) pa->grad[i] += da[i];
          }
          if (pb->requires_grad) {
            std::vector<T> db(static_cast<std::size_t>(k * n));
            kernels::matmul_tn(pa->value.data(), nd.grad.data(), db.data(), k, m, n);
            for (std::size_t i = 0; i < db.size(); ++i) pb->grad[i] += db[i];
          }
        });
  }

  if (sa.size() == 3 && sb.size() == 2) {
    if (sa[2] != sb[0]) throw bad();
    const isize bm = static_cast<isize>(sa[0] * sa[1]), k = static_cast<isize>(sa[2]),
                n = static_cast<isize>(sb[1]);
    std::vector<T> out(static_cast<std::size_t>(bm * n));
    kernels::matmul_nn(a.value().data(), b.value().data(), out.data(), bm, k, n);
    return detail::make_op<T>(
        {sa[0], sa[1], sb[1]}, std::move(out), {pa, pb},
        [pa = pa.get(), pb = pb.get(), bm, k, n](TensorNode<T>& nd) {
          if (pa->requires_grad) {
            std::vector<T> da(static_cast<std::size_t>(bm * k));
            kernels::matmul_nt(nd.grad.data(), pb->value.data(), da.data(), bm, n, k);
            for (std::size_t i = 0; i < da.size(); ++i) pa->grad[i] += da[i];
          }
          if (pb->requires_grad) {
            std::vector<T> db(static_cast<std::size_t>(k * n));
            kernels::matmul_tn(pa->value.data(), nd.grad.data(), db.data(), k, bm, n);
            for (std::size_t i = 0; i < db.size(); ++i) pb->grad[i] += db[i];
          }
        });
  }

  if (sa.size() == 3 && sb.size() == 3) {
    if (sa[0] != sb[0] || sa[2] != sb[1]) throw bad();
    const isize batch = static_cast<isize>(sa[0]), m = static_cast<isize>(sa[1]),
                k = static_cast<isize>(sa[2]), n = static_cast<isize>(sb[2]);
    std::vector<T> out(static_cast<std::size_t>(batch * m * n));
    for (isize i = 0; i < batch; ++i)
      kernels::matmul_nn(a.value().data() + i * m * k, b.value().data() + i * k * n,
                         out.data() + i * m * n, m, k, n);
    return detail::make_op<T>(
        {sa[0], sa[1], sb[2]}, std::move(out), {pa, pb},
        [pa = pa.get(), pb = pb.get(), batch, m, k, n](TensorNode<T>& nd) {
          std::vector<T> tmp;
          for (isize i = 0; i < batch; ++i) {
            const T* g = nd.grad.data() + i * m * n;
            if (pa->requires_grad) {
              tmp.assign(static_cast<std::size_t>(m * k), T(0));
              kernels::matmul_nt(g, pb->value.data() + i * k * n, tmp.data(), m, n, k);
              T* da = pa->grad.data() + i * m * k;
              for (std::size_t j = 0; j < tmp.size(); ++j) da[j] += tmp[j];
            }
            if (pb->requires_grad) {
              tmp.assign(static_cast<std::size_t>(k * n), T(0));
              kernels::matmul_tn(pa->value.data() + i * m * k, g, tmp.data(), k, m, n);
              T* db = pb->grad.data() + i * k * n;
              for (std::size_t j = 0; j < tmp.size(); ++j) db[j] += tmp[j];
            }
          }
        });
  }
  throw bad();
}

// Swap the last two axes (rank 2 or 3).
template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  const auto& s = x.shape();
  if (s.size() != 2 && s.size() != 3)
    throw std::invalid_argument("transpose: rank 2 or 3 required, got shape " + shape_str(s));
  const std::size_t batch = s.size() == 3 ? s[0] : 1;
  const std::size_t r = s[s.size() - 2], c = s[s.size() - 1];
  std::vector<T> out(x.size());
  const auto& xv = x.value();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[(b * c + j) * r + i] = xv[(b * r + i) * c + j];

  std::vector<std::size_t> os = s;
  std::swap(os[os.size() - 2], os[os.size() - 1]);
  auto px = x.node();
  return detail::make_op<T>(std::move(os), std::move(out), {px},
                            [px = px.get(), batch, r, c](TensorNode<T>& n) {
                              for (std::size_t b = 0; b < batch; ++b)
                                for (std::size_t i = 0; i < r; ++i)
                                  for (std::size_t j = 0; j < c; ++j)
                                    px->grad[(b * r + i) * c + j] += n.grad[(b * c + j) * r + i];
                            });
}

// --- structural ---

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, std::size_t axis) {
  if (xs.empty()) throw std::invalid_argument("concat: no inputs");
  const auto& s0 = xs[0].shape();
  std::size_t total = 0;
  for (const auto& x : xs) {
    const auto& s = x.shape();
    if (s.size() != s0.size())
      throw std::invalid_argument("concat: rank mismatch " + shape_str(s0) + " vs " +
                                  shape_str(s));
    for (std::size_t i = 0; i < s.size(); ++i)
      if (i != axis && s[i] != s0[i])
        throw std::invalid_argument("concat: shapes " + shape_str(s0) + " and " + shape_str(s) +
                                    " differ off axis " + std::to_string(axis));
    total += s[axis];
  }
  const auto view = detail::axis_view(s0, axis, "concat");

  std::vector<std::size_t> os = s0;
  os[axis] = total;
  std::vector<T> out(numel(os));
  std::vector<std::size_t> lens;
  std::vector<NodePtr<T>> parents;
  std::size_t offset = 0;
  for (const auto& x : xs) {
    const std::size_t len = x.shape()[axis];
    const auto& xv = x.value();
    for (std::size_t o = 0; o < view.outer; ++o)
      std::copy(xv.begin() + static_cast<std::ptrdiff_t>(o * len * view.inner),
                xv.begin() + static_cast<std::ptrdiff_t>((o + 1) * len * view.inner),
                out.begin() + static_cast<std::ptrdiff_t>((o * total + offset) * view.inner));
    offset += len;
    lens.push_back(len);
    parents.push_back(x.node());
  }

  std::vector<TensorNode<T>*> raw;
  for (const auto& p : parents) raw.push_back(p.get());
  return detail::make_op<T>(std::move(os), std::move(out), std::move(parents),
                            [raw, lens, view, total](TensorNode<T>& n) {
                              std::size_t off = 0;
                              for (std::size_t idx = 0; idx < raw.size(); ++idx) {
                                const std::size_t len = lens[idx];
                                if (raw[idx]->requires_grad)
                                  for (std::size_t o = 0; o < view.outer; ++o) {
                                    const T* g = n.grad.data() + (o * total + off) * view.inner;
                                    T* d = raw[idx]->grad.data() + o * len * view.inner;
                                    for (std::size_t j = 0; j < len * view.inner; ++j) d[j] += g[j];
                                  }
                                off += len;
                              }
                            });
}

template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b, std::size_t axis) {
  return concat(std::vector<Tensor<T>>{a, b}, axis);
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x, std::size_t axis) {
  const auto view = detail::axis_view(x.shape(), axis, "mean");
  std::vector<std::size_t> os;
  for (std::size_t i = 0; i < x.shape().size(); ++i)
    if (i != axis) os.push_back(x.shape()[i]);
  if (os.empty()) os.push_back(1);

  std::vector<T> out(view.outer * view.inner, T(0));
  const auto& xv = x.value();
  for (std::size_t o = 0; o < view.outer; ++o)
    for (std::size_t t = 0; t < view.len; ++t)
      for (std::size_t i = 0; i < view.inner; ++i)
        out[o * view.inner + i] += xv[(o * view.len + t) * view.inner + i];
  const T inv = T(1) / static_cast<T>(view.len);
  for (T& v : out) v *= inv;

  auto px = x.node();
  return detail::make_op<T>(std::move(os), std::move(out), {px},
                            [px = px.get(), view, inv](TensorNode<T>& n) {
                              for (std::size_t o = 0; o < view.outer; ++o)
                                for (std::size_t t = 0; t < view.len; ++t)
                                  for (std::size_t i = 0; i < view.inner; ++i)
                                    px->grad[(o * view.len + t) * view.inner + i] +=
                                        n.grad[o * view.inner + i] * inv;
                            });
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
  const std::size_t n = x.size();
  if (n == 0) throw std::invalid_argument("mean_all: empty tensor");
  T acc = T(0);
  for (T v : x.value()) acc += v;
  const T inv = T(1) / static_cast<T>(n);
  auto px = x.node();
  return detail::make_op<T>({1}, {acc * inv}, {px}, [px = px.get(), inv](TensorNode<T>& nd) {
    for (std::size_t i = 0; i < px->grad.size(); ++i) px->grad[i] += nd.grad[0] * inv;
  });
}

// Select one index along the middle axis of [B x T x d].
template <typename T>
Tensor<T> take_time(const Tensor<T>& x, std::size_t t) {
  const auto& s = x.shape();
  if (s.size() != 3)
    throw std::invalid_argument("take_time: rank-3 input required, got " + shape_str(s));
  if (t >= s[1]) throw std::invalid_argument("take_time: index out of range");
  const std::size_t batch = s[0], len = s[1], d = s[2];
  std::vector<T> out(batch * d);
  const auto& xv = x.value();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t j = 0; j < d; ++j) out[b * d + j] = xv[(b * len + t) * d + j];
  auto px = x.node();
  return detail::make_op<T>({batch, d}, std::move(out), {px},
                            [px = px.get(), batch, len, d, t](TensorNode<T>& n) {
                              for (std::size_t b = 0; b < batch; ++b)
                                for (std::size_t j = 0; j < d; ++j)
                                  px->grad[(b * len + t) * d + j] += n.grad[b * d + j];
                            });
}

// --- normalization and attention primitives ---

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, std::size_t axis, double eps = 1e-5) {
  const auto view = detail::axis_view(x.shape(), axis, "layer_norm");
  std::vector<T> out(x.size());
  std::vector<T> inv_std(view.outer * view.inner);
  const auto& xv = x.value();
  for (std::size_t o = 0; o < view.outer; ++o)
    for (std::size_t i = 0; i < view.inner; ++i) {
      double mu = 0;
      for (std::size_t t = 0; t < view.len; ++t) mu += xv[(o * view.len + t) * view.inner + i];
      mu /= static_cast<double>(view.len);
      double var = 0;
      for (std::size_t t = 0; t < view.len; ++t) {
        const double dv = xv[(o * view.len + t) * view.inner + i] - mu;
        var += dv * dv;
      }
      var /= static_cast<double>(view.len);
      const double s = std::sqrt(var + eps);
      inv_std[o * view.inner + i] = static_cast<T>(1.0 / s);
      for (std::size_t t = 0; t < view.len; ++t) {
        const std::size_t idx = (o * view.len + t) * view.inner + i;
        out[idx] = static_cast<T>((xv[idx] - mu) / s);
      }
    }
  detail::check_finite(out, "layer_norm");

  auto px = x.node();
  return detail::make_op<T>(
      x.shape(), std::move(out), {px},
      [px = px.get(), view, inv_std = std::move(inv_std)](TensorNode<T>& n) {
        // dx = (1/s) * (g - mean(g) - y * mean(g*y)) per normalized slice
        for (std::size_t o = 0; o < view.outer; ++o)
          for (std::size_t i = 0; i < view.inner; ++i) {
            double mg = 0, mgy = 0;
            for (std::size_t t = 0; t < view.len; ++t) {
              const std::size_t idx = (o * view.len + t) * view.inner + i;
              mg += n.grad[idx];
              mgy += static_cast<double>(n.grad[idx]) * n.value[idx];
            }
            mg /= static_cast<double>(view.len);
            mgy /= static_cast<double>(view.len);
            const double is = inv_std[o * view.inner + i];
            for (std::size_t t = 0; t < view.len; ++t) {
              const std::size_t idx = (o * view.len + t) * view.inner + i;
              px->grad[idx] += static_cast<T>(is * (n.grad[idx] - mg - n.value[idx] * mgy));
            }
          }
      });
}

// mask entries: nonzero keeps x, zero substitutes fill (used with -inf before softmax).
template <typename T>
Tensor<T> masked_fill(const Tensor<T>& x, const std::vector<T>& mask, T fill) {
  if (mask.size() != x.size())
    throw std::invalid_argument("masked_fill: mask size " + std::to_string(mask.size()) +
                                " does not match tensor shape " + shape_str(x.shape()));
  std::vector<T> out(x.size());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = mask[i] != T(0) ? xv[i] : fill;
  auto px = x.node();
  return detail::make_op<T>(x.shape(), std::move(out), {px},
                            [px = px.get(), mask](TensorNode<T>& n) {
                              for (std::size_t i = 0; i < n.grad.size(); ++i)
                                if (mask[i] != T(0)) px->grad[i] += n.grad[i];
                            });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  const auto view = detail::axis_view(x.shape(), axis, "softmax");
  if (view.len == 0) throw std::invalid_argument("softmax: empty axis");
  std::vector<T> out(x.size());
  const auto& xv = x.value();
  for (std::size_t o = 0; o < view.outer; ++o)
    for (std::size_t i = 0; i < view.inner; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t t = 0; t < view.len; ++t)
        mx = std::max(mx, static_cast<double>(xv[(o * view.len + t) * view.inner + i]));
      if (!std::isfinite(mx))
        throw std::runtime_error("softmax: slice has no finite entry along axis");
      double sum = 0;
      for (std::size_t t = 0; t < view.len; ++t) {
        const std::size_t idx = (o * view.len + t) * view.inner + i;
        const double e = std::exp(static_cast<double>(xv[idx]) - mx);
        out[idx] = static_cast<T>(e);
        sum += e;
      }
      for (std::size_t t = 0; t < view.len; ++t) {
        const std::size_t idx = (o * view.len + t) * view.inner + i;
        out[idx] = static_cast<T>(out[idx] / sum);
      }
    }
  detail::check_finite(out, "softmax");

  auto px = x.node();
  return detail::make_op<T>(x.shape(), std::move(out), {px},
                            [px = px.get(), view](TensorNode<T>& n) {
                              // dx = y * (g - sum(g*y)) per slice
                              for (std::size_t o = 0; o < view.outer; ++o)
                                for (std::size_t i = 0; i < view.inner; ++i) {
                                  double dot = 0;
                                  for (std::size_t t = 0; t < view.len; ++t) {
                                    const std::size_t idx = (o * view.len + t) * view.inner + i;
                                    dot += static_cast<double>(n.grad[idx]) * n.value[idx];
                                  }
                                  for (std::size_t t = 0; t < view.len; ++t) {
                                    const std::size_t idx = (o * view.len + t) * view.inner + i;
                                    px->grad[idx] +=
                                        static_cast<T>(n.value[idx] * (n.grad[idx] - dot));
                                  }
                                }
                            });
}

// Rows of `table` gathered per id; ids[b][t] indexes the output position [b, t, :].
template <typename T>
Tensor<T> embedding_lookup(const Tensor<T>& table, const std::vector<std::vector<int>>& ids) {
  const auto& s = table.shape();
  if (s.size() != 2)
    throw std::invalid_argument("embedding_lookup: table must be rank 2, got " + shape_str(s));
  if (ids.empty() || ids[0].empty())
    throw std::invalid_argument("embedding_lookup: empty id batch");
  const std::size_t batch = ids.size(), len = ids[0].size(), d = s[1];
  for (const auto& row : ids) {
    if (row.size() != len) throw std::invalid_argument("embedding_lookup: ragged id batch");
    for (int id : row)
      if (id < 0 || static_cast<std::size_t>(id) >= s[0])
        throw std::invalid_argument("embedding_lookup: id " + std::to_string(id) +
                                    " outside table of " + std::to_string(s[0]) + " rows");
  }

  std::vector<T> out(batch * len * d);
  const auto& tv = table.value();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < len; ++t)
      std::copy(tv.begin() + static_cast<std::ptrdiff_t>(ids[b][t] * static_cast<int>(d)),
                tv.begin() + static_cast<std::ptrdiff_t>((ids[b][t] + 1) * static_cast<int>(d)),
                out.begin() + static_cast<std::ptrdiff_t>((b * len + t) * d));

  auto pt = table.node();
  return detail::make_op<T>({batch, len, d}, std::move(out), {pt},
                            [pt = pt.get(), ids, batch, len, d](TensorNode<T>& n) {
                              for (std::size_t b = 0; b < batch; ++b)
                                for (std::size_t t = 0; t < len; ++t) {
                                  T* dst = pt->grad.data() + ids[b][t] * static_cast<int>(d);
                                  const T* g = n.grad.data() + (b * len + t) * d;
                                  for (std::size_t j = 0; j < d; ++j) dst[j] += g[j];
                                }
                            });
}

// Mean over the batch of -log softmax(logits)[i, label_i].
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
  const auto& s = logits.shape();
  if (s.size() != 2)
    throw std::invalid_argument("cross_entropy: logits must be rank 2, got " + shape_str(s));
  if (labels.size() != s[0])
    throw std::invalid_argument("cross_entropy: batch " + shape_str(s) + " vs " +
                                std::to_string(labels.size()) + " labels");
  const std::size_t batch = s[0], classes = s[1];
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= classes)
      throw std::invalid_argument("cross_entropy: label " + std::to_string(y) + " out of range");

  const auto& lv = logits.value();
  std::vector<T> probs(lv.size());
  double loss = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < classes; ++c)
      mx = std::max(mx, static_cast<double>(lv[b * classes + c]));
    double sum = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      const double e = std::exp(static_cast<double>(lv[b * classes + c]) - mx);
      probs[b * classes + c] = static_cast<T>(e);
      sum += e;
    }
    for (std::size_t c = 0; c < classes; ++c)
      probs[b * classes + c] = static_cast<T>(probs[b * classes + c] / sum);
    loss -= std::log(static_cast<double>(probs[b * classes + labels[b]]));
  }
  loss /= static_cast<double>(batch);
  if (!std::isfinite(loss)) throw std::runtime_error("cross_entropy: non-finite loss");

  auto pl = logits.node();
  return detail::make_op<T>(
      {1}, {static_cast<T>(loss)}, {pl},
      [pl = pl.get(), probs = std::move(probs), labels, batch, classes](TensorNode<T>& n) {
        const T g = n.grad[0] / static_cast<T>(batch);
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t c = 0; c < classes; ++c)
            pl->grad[b * classes + c] +=
                g * (probs[b * classes + c] -
                     (static_cast<std::size_t>(labels[b]) == c ? T(1) : T(0)));
      });
}

}  // namespace multifuse
