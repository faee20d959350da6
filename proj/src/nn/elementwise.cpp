#include <cmath>

#include <fmt/format.h>

#include "restorer/nn/ops.hpp"

namespace restorer::nn {

namespace {

template <typename T>
void require_same_shape(const char* op, const Var<T>& a, const Var<T>& b) {
  if (a.shape() == b.shape()) return;
  if (a.value().rank() != b.value().rank())
    throw ShapeError(fmt::format("{}: rank mismatch {} vs {}", op, to_string(a.shape()), to_string(b.shape())));
  for (int i = 0; i < a.value().rank(); ++i)
    if (a.dim(i) != b.dim(i))
      throw ShapeError(fmt::format("{}: axis {} has {} vs {}", op, i, a.dim(i), b.dim(i)));
}

template <typename T>
void accumulate(const std::shared_ptr<Node<T>>& n, std::span<const T> g, T factor = T(1)) {
  if (!n->requires_grad) return;
  auto dst = n->grad_buffer().values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += factor * g[i];
}

// Elementwise unary op with derivative computed from input and output.
template <typename T, typename F, typename D>
Var<T> unary(const Var<T>& a, F f, D df) {
  Tensor<T> out(a.shape());
  const auto x = a.value().values();
  auto y = out.values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(x[i]);
  auto an = a.node_ptr();
  return a.tape().make(
      std::move(out),
      [an, df](Node<T>& self) {
        if (!an->requires_grad) return;
        auto dst = an->grad_buffer().values();
        const auto xv = an->value.values();
        const auto yv = self.value.values();
        const auto g = self.grad.values();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i] * df(xv[i], yv[i]);
      },
      a);
}

}  // namespace

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape("add", a, b);
  Tensor<T> out = a.value();
  auto y = out.values();
  const auto bv = b.value().values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  auto an = a.node_ptr(), bn = b.node_ptr();
  return a.tape().make(
      std::move(out),
      [an, bn](Node<T>& self) {
        accumulate<T>(an, self.grad.values());
        accumulate<T>(bn, self.grad.values());
      },
      a, b);
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape("sub", a, b);
  Tensor<T> out = a.value();
  auto y = out.values();
  const auto bv = b.value().values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  auto an = a.node_ptr(), bn = b.node_ptr();
  return a.tape().make(
      std::move(out),
      [an, bn](Node<T>& self) {
        accumulate<T>(an, self.grad.values());
        accumulate<T>(bn, self.grad.values(), T(-1));
      },
      a, b);
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape("mul", a, b);
  Tensor<T> out = a.value();
  auto y = out.values();
  const auto bv = b.value().values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  auto an = a.node_ptr(), bn = b.node_ptr();
  return a.tape().make(
      std::move(out),
      [an, bn](Node<T>& self) {
        const auto g = self.grad.values();
        if (an->requires_grad) {
          auto dst = an->grad_buffer().values();
          const auto bv = bn->value.values();
          for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i] * bv[i];
        }
        if (bn->requires_grad) {
          auto dst = bn->grad_buffer().values();
          const auto av = an->value.values();
          for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i] * av[i];
        }
      },
      a, b);
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  return unary<T>(a, [s](T x) { return s * x; }, [s](T, T) { return s; });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T s) {
  return unary<T>(a, [s](T x) { return x + s; }, [](T, T) { return T(1); });
}

template <typename T>
Var<T> abs(const Var<T>& a) {
  return unary<T>(
      a, [](T x) { return std::abs(x); }, [](T x, T) { return x > 0 ? T(1) : (x < 0 ? T(-1) : T(0)); });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  return unary<T>(a, [](T x) { return x > 0 ? x : T(0); }, [](T x, T) { return x > 0 ? T(1) : T(0); });
}

template <typename T>
Var<T> elu(const Var<T>& a) {
  return unary<T>(
      a, [](T x) { return x >= 0 ? x : std::expm1(x); }, [](T x, T y) { return x >= 0 ? T(1) : y + T(1); });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& a, T alpha) {
  return unary<T>(
      a, [alpha](T x) { return x >= 0 ? x : alpha * x; }, [alpha](T x, T) { return x >= 0 ? T(1) : alpha; });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  double acc = 0.0;
  for (T v : a.value().values()) acc += v;
  auto an = a.node_ptr();
  return a.tape().make(
      Tensor<T>::scalar(static_cast<T>(acc)),
      [an](Node<T>& self) {
        if (!an->requires_grad) return;
        const T g = self.grad[0];
        for (T& d : an->grad_buffer().values()) d += g;
      },
      a);
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  const auto n = a.value().numel();
  if (n == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), T(1) / static_cast<T>(n));
}

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  Tensor<T> out = a.value().reshaped(std::move(shape));
  auto an = a.node_ptr();
  return a.tape().make(
      std::move(out), [an](Node<T>& self) { accumulate<T>(an, self.grad.values()); }, a);
}

template <typename T>
Var<T> detach(const Var<T>& a) {
  return a.tape().constant(a.value());
}

namespace {

struct AxisSplit {
  std::int64_t outer = 1, mid = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, int axis) {
  AxisSplit r;
  for (int i = 0; i < axis; ++i) r.outer *= s[i];
  r.mid = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

int normalize_axis(int axis, int rank, const char* op) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) throw ShapeError(fmt::format("{}: axis {} out of range for rank {}", op, axis, rank));
  return axis;
}

}  // namespace

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts[0].shape();
  axis = normalize_axis(axis, static_cast<int>(first.size()), "concat");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    if (p.shape().size() != first.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t i = 0; i < first.size(); ++i)
      if (static_cast<int>(i) != axis && p.shape()[i] != first[i])
        throw ShapeError(fmt::format("concat: axis {} has {} vs {}", i, p.shape()[i], first[i]));
    out_shape[axis] += p.shape()[axis];
  }
  Tensor<T> out(out_shape);
  const auto os = split_at(out_shape, axis);
  std::int64_t offset = 0;
  std::vector<std::int64_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const auto ps = split_at(p.shape(), axis);
    const T* src = p.value().data();
    for (std::int64_t o = 0; o < ps.outer; ++o)
      std::copy_n(src + o * ps.mid * ps.inner, ps.mid * ps.inner,
                  out.data() + (o * os.mid + offset) * os.inner);
    offset += ps.mid;
  }
  std::vector<std::shared_ptr<Node<T>>> nodes;
  for (const auto& p : parts) nodes.push_back(p.node_ptr());
  return parts[0].tape().make_n(
      std::move(out),
      [nodes, offsets, axis](Node<T>& self) {
        const auto os = split_at(self.value.shape(), axis);
        for (std::size_t k = 0; k < nodes.size(); ++k) {
          if (!nodes[k]->requires_grad) continue;
          const auto ps = split_at(nodes[k]->value.shape(), axis);
          T* dst = nodes[k]->grad_buffer().data();
          for (std::int64_t o = 0; o < ps.outer; ++o) {
            const T* src = self.grad.data() + (o * os.mid + offsets[k]) * os.inner;
            T* d = dst + o * ps.mid * ps.inner;
            for (std::int64_t i = 0; i < ps.mid * ps.inner; ++i) d[i] += src[i];
          }
        }
      },
      parts);
}

template <typename T>
Var<T> slice(const Var<T>& a, int axis, std::int64_t start, std::int64_t length) {
  axis = normalize_axis(axis, a.value().rank(), "slice");
  if (start < 0 || length < 0 || start + length > a.dim(axis))
    throw ShapeError(fmt::format("slice: [{}, {}) outside axis {} of size {}", start, start + length, axis, a.dim(axis)));
  Shape out_shape = a.shape();
  out_shape[axis] = length;
  Tensor<T> out(out_shape);
  const auto is = split_at(a.shape(), axis);
  for (std::int64_t o = 0; o < is.outer; ++o)
    std::copy_n(a.value().data() + (o * is.mid + start) * is.inner, length * is.inner,
                out.data() + o * length * is.inner);
  auto an = a.node_ptr();
  return a.tape().make(
      std::move(out),
      [an, axis, start, length](Node<T>& self) {
        if (!an->requires_grad) return;
        const auto is = split_at(an->value.shape(), axis);
        T* dst = an->grad_buffer().data();
        for (std::int64_t o = 0; o < is.outer; ++o) {
          const T* src = self.grad.data() + o * length * is.inner;
          T* d = dst + (o * is.mid + start) * is.inner;
          for (std::int64_t i = 0; i < length * is.inner; ++i) d[i] += src[i];
        }
      },
      a);
}

template <typename T>
Var<T> pad_reflect(const Var<T>& a, int axis, std::int64_t before, std::int64_t after) {
  axis = normalize_axis(axis, a.value().rank(), "pad_reflect");
  const std::int64_t n = a.dim(axis);
  if (before < 0 || after < 0 || before >= n || after >= n)
    throw ShapeError(fmt::format("pad_reflect: padding ({}, {}) needs axis {} longer than {}", before, after, axis,
                                 std::max(before, after)));
  if (before == 0 && after == 0) return a;
  Shape out_shape = a.shape();
  out_shape[axis] = n + before + after;
  std::vector<std::int64_t> source(out_shape[axis]);
  for (std::int64_t j = 0; j < out_shape[axis]; ++j) {
    std::int64_t i = j - before;
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
    source[j] = i;
  }
  Tensor<T> out(out_shape);
  const auto is = split_at(a.shape(), axis);
  const std::int64_t m = out_shape[axis];
  for (std::int64_t o = 0; o < is.outer; ++o)
    for (std::int64_t j = 0; j < m; ++j)
      std::copy_n(a.value().data() + (o * n + source[j]) * is.inner, is.inner, out.data() + (o * m + j) * is.inner);
  auto an = a.node_ptr();
  return a.tape().make(
      std::move(out),
      [an, axis, source](Node<T>& self) {
        if (!an->requires_grad) return;
        const auto is = split_at(an->value.shape(), axis);
        const auto m = static_cast<std::int64_t>(source.size());
        T* dst = an->grad_buffer().data();
        for (std::int64_t o = 0; o < is.outer; ++o)
          for (std::int64_t j = 0; j < m; ++j) {
            const T* src = self.grad.data() + (o * m + j) * is.inner;
            T* d = dst + (o * is.mid + source[j]) * is.inner;
            for (std::int64_t i = 0; i < is.inner; ++i) d[i] += src[i];
          }
      },
      a);
}

#define RESTORER_INSTANTIATE(T)                                                      \
  template Var<T> add(const Var<T>&, const Var<T>&);                                 \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                 \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                 \
  template Var<T> scale(const Var<T>&, T);                                           \
  template Var<T> add_scalar(const Var<T>&, T);                                      \
  template Var<T> abs(const Var<T>&);                                                \
  template Var<T> relu(const Var<T>&);                                               \
  template Var<T> elu(const Var<T>&);                                                \
  template Var<T> leaky_relu(const Var<T>&, T);                                      \
  template Var<T> sum(const Var<T>&);                                                \
  template Var<T> mean(const Var<T>&);                                               \
  template Var<T> reshape(const Var<T>&, Shape);                                     \
  template Var<T> detach(const Var<T>&);                                             \
  template Var<T> concat(const std::vector<Var<T>>&, int);                           \
  template Var<T> slice(const Var<T>&, int, std::int64_t, std::int64_t);             \
  template Var<T> pad_reflect(const Var<T>&, int, std::int64_t, std::int64_t);

RESTORER_INSTANTIATE(float)
RESTORER_INSTANTIATE(double)
#undef RESTORER_INSTANTIATE

}  // namespace restorer::nn
