#include <cmath>

#include <fmt/format.h>

#include "restorer/nn/ops.hpp"

namespace restorer::nn {

template <typename T>
Var<T> weight_norm(const Var<T>& v, const Var<T>& g, int axis) {
  const int rank = v.value().rank();
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) throw ShapeError(fmt::format("weight_norm: axis {} out of range", axis));
  const auto m = v.dim(axis);
  if (g.value().numel() != m)
    throw ShapeError(fmt::format("weight_norm: gain has {} entries, axis {} has {}", g.value().numel(), axis, m));
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= v.dim(i);
  for (int i = axis + 1; i < rank; ++i) inner *= v.dim(i);

  std::vector<T> norm(m, T(0));
  const T* vv = v.value().data();
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t j = 0; j < m; ++j)
      for (std::int64_t i = 0; i < inner; ++i) {
        const T e = vv[(o * m + j) * inner + i];
        norm[j] += e * e;
      }
  for (auto& n : norm) n = std::sqrt(n);

  Tensor<T> out(v.shape());
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t j = 0; j < m; ++j) {
      const T s = norm[j] > 0 ? g.value()[j] / norm[j] : T(0);
      for (std::int64_t i = 0; i < inner; ++i) {
        const auto k = (o * m + j) * inner + i;
        out[k] = s * vv[k];
      }
    }

  auto vn = v.node_ptr(), gn = g.node_ptr();
  return v.tape().make(
      std::move(out),
      [vn, gn, norm, outer, m, inner](Node<T>& self) {
        const T* vv = vn->value.data();
        const T* dw = self.grad.data();
        std::vector<T> dot(m, T(0));
        for (std::int64_t o = 0; o < outer; ++o)
          for (std::int64_t j = 0; j < m; ++j)
            for (std::int64_t i = 0; i < inner; ++i) {
              const auto k = (o * m + j) * inner + i;
              dot[j] += dw[k] * vv[k];
            }
        if (gn->requires_grad) {
          auto& dg = gn->grad_buffer();
          for (std::int64_t j = 0; j < m; ++j)
            if (norm[j] > 0) dg[j] += dot[j] / norm[j];
        }
        if (vn->requires_grad) {
          T* dv = vn->grad_buffer().data();
          for (std::int64_t o = 0; o < outer; ++o)
            for (std::int64_t j = 0; j < m; ++j) {
              if (norm[j] == 0) continue;
              const T s = gn->value[j] / norm[j];
              const T c = dot[j] / (norm[j] * norm[j]);
              for (std::int64_t i = 0; i < inner; ++i) {
                const auto k = (o * m + j) * inner + i;
                dv[k] += s * (dw[k] - c * vv[k]);
              }
            }
        }
      },
      v, g);
}

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias, T eps) {
  if (x.value().rank() < 2) throw ShapeError("layer_norm: input needs a batch and a channel axis");
  const auto n = x.dim(0), c = x.dim(1);
  const auto per = x.value().numel() / n;
  const auto inner = per / c;
  if (gain.value().numel() != c || bias.value().numel() != c)
    throw ShapeError(fmt::format("layer_norm: affine parameters must have {} entries (axis 1)", c));

  Tensor<T> xhat(x.shape());
  std::vector<T> inv_std(n);
  for (std::int64_t b = 0; b < n; ++b) {
    const T* src = x.value().data() + b * per;
    double mu = 0.0;
    for (std::int64_t i = 0; i < per; ++i) mu += src[i];
    mu /= static_cast<double>(per);
    double var = 0.0;
    for (std::int64_t i = 0; i < per; ++i) var += (src[i] - mu) * (src[i] - mu);
    var /= static_cast<double>(per);
    inv_std[b] = static_cast<T>(1.0 / std::sqrt(var + eps));
    T* dst = xhat.data() + b * per;
    for (std::int64_t i = 0; i < per; ++i) dst[i] = static_cast<T>((src[i] - mu)) * inv_std[b];
  }
  Tensor<T> out(x.shape());
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const auto off = b * per + ch * inner;
      const T gv = gain.value()[ch], bv = bias.value()[ch];
      for (std::int64_t i = 0; i < inner; ++i) out[off + i] = gv * xhat[off + i] + bv;
    }

  auto xn = x.node_ptr(), gn = gain.node_ptr(), bn = bias.node_ptr();
  return x.tape().make(
      std::move(out),
      [xn, gn, bn, xhat = std::move(xhat), inv_std, n, c, per, inner](Node<T>& self) {
        const T* dy = self.grad.data();
        if (gn->requires_grad || bn->requires_grad) {
          std::vector<T> dg(c, T(0)), db(c, T(0));
          for (std::int64_t b = 0; b < n; ++b)
            for (std::int64_t ch = 0; ch < c; ++ch) {
              const auto off = b * per + ch * inner;
              for (std::int64_t i = 0; i < inner; ++i) {
                dg[ch] += dy[off + i] * xhat[off + i];
                db[ch] += dy[off + i];
              }
            }
          if (gn->requires_grad)
            for (std::int64_t ch = 0; ch < c; ++ch) gn->grad_buffer()[ch] += dg[ch];
          if (bn->requires_grad)
            for (std::int64_t ch = 0; ch < c; ++ch) bn->grad_buffer()[ch] += db[ch];
        }
        if (!xn->requires_grad) return;
        T* dx = xn->grad_buffer().data();
        std::vector<T> dxhat(per);
        for (std::int64_t b = 0; b < n; ++b) {
          double m1 = 0.0, m2 = 0.0;
          for (std::int64_t ch = 0; ch < c; ++ch) {
            const T gv = gn->value[ch];
            for (std::int64_t i = 0; i < inner; ++i) {
              const auto k = ch * inner + i;
              dxhat[k] = dy[b * per + k] * gv;
              m1 += dxhat[k];
              m2 += dxhat[k] * xhat[b * per + k];
            }
          }
          m1 /= static_cast<double>(per);
          m2 /= static_cast<double>(per);
          for (std::int64_t k = 0; k < per; ++k)
            dx[b * per + k] += inv_std[b] * static_cast<T>(dxhat[k] - m1 - xhat[b * per + k] * m2);
        }
      },
      x, gain, bias);
}

#define RESTORER_INSTANTIATE(T)                                             \
  template Var<T> weight_norm(const Var<T>&, const Var<T>&, int);           \
  template Var<T> layer_norm(const Var<T>&, const Var<T>&, const Var<T>&, T);

RESTORER_INSTANTIATE(float)
RESTORER_INSTANTIATE(double)
#undef RESTORER_INSTANTIATE

}  // namespace restorer::nn
