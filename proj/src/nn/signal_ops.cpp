#include <cmath>

#include <fmt/format.h>

#include "restorer/nn/ops.hpp"

namespace restorer::nn {

template <typename T>
Var<T> stft(const Var<T>& x, const dsp::StftConfig& cfg) {
  if (x.value().rank() != 2) throw ShapeError("stft: input must be [N, L], got " + to_string(x.shape()));
  const auto n = x.dim(0), len = x.dim(1);
  auto& engine = dsp::stft_engine<T>(cfg);
  const auto frames = engine.frames(static_cast<std::size_t>(len));
  const auto bins = engine.bins();
  const auto plane = static_cast<std::int64_t>(frames) * bins;
  Tensor<T> out({n, 2, frames, bins});
  for (std::int64_t b = 0; b < n; ++b) {
    T* re = out.data() + b * 2 * plane;
    engine.forward(std::span<const T>(x.value().data() + b * len, len), std::span<T>(re, plane),
                   std::span<T>(re + plane, plane));
  }
  auto xn = x.node_ptr();
  return x.tape().make(
      std::move(out),
      [xn, cfg, plane, len](Node<T>& self) {
        if (!xn->requires_grad) return;
        auto& engine = dsp::stft_engine<T>(cfg);
        T* dx = xn->grad_buffer().data();
        for (std::int64_t b = 0; b < self.value.dim(0); ++b) {
          const T* g = self.grad.data() + b * 2 * plane;
          engine.forward_adjoint(std::span<const T>(g, plane), std::span<const T>(g + plane, plane),
                                 std::span<T>(dx + b * len, len));
        }
      },
      x);
}

template <typename T>
Var<T> istft(const Var<T>& spec, const dsp::StftConfig& cfg, std::int64_t length) {
  if (spec.value().rank() != 4 || spec.dim(1) != 2)
    throw ShapeError("istft: input must be [N, 2, frames, bins], got " + to_string(spec.shape()));
  auto& engine = dsp::stft_engine<T>(cfg);
  if (spec.dim(3) != engine.bins())
    throw ShapeError(fmt::format("istft: axis 3 has {} bins, window needs {}", spec.dim(3), engine.bins()));
  const auto n = spec.dim(0);
  const auto plane = spec.dim(2) * spec.dim(3);
  Tensor<T> out({n, length});
  for (std::int64_t b = 0; b < n; ++b) {
    const T* re = spec.value().data() + b * 2 * plane;
    engine.inverse(std::span<const T>(re, plane), std::span<const T>(re + plane, plane),
                   std::span<T>(out.data() + b * length, length));
  }
  auto sn = spec.node_ptr();
  return spec.tape().make(
      std::move(out),
      [sn, cfg, plane, length](Node<T>& self) {
        if (!sn->requires_grad) return;
        auto& engine = dsp::stft_engine<T>(cfg);
        T* ds = sn->grad_buffer().data();
        for (std::int64_t b = 0; b < self.value.dim(0); ++b) {
          T* re = ds + b * 2 * plane;
          engine.inverse_adjoint(std::span<const T>(self.grad.data() + b * length, length), std::span<T>(re, plane),
                                 std::span<T>(re + plane, plane));
        }
      },
      spec);
}

template <typename T>
Var<T> complex_modulus(const Var<T>& spec) {
  if (spec.value().rank() != 4 || spec.dim(1) != 2)
    throw ShapeError("complex_modulus: input must be [N, 2, T, F], got " + to_string(spec.shape()));
  const auto n = spec.dim(0), plane = spec.dim(2) * spec.dim(3);
  Tensor<T> out({n, 1, spec.dim(2), spec.dim(3)});
  for (std::int64_t b = 0; b < n; ++b) {
    const T* re = spec.value().data() + b * 2 * plane;
    const T* im = re + plane;
    T* m = out.data() + b * plane;
    for (std::int64_t i = 0; i < plane; ++i) m[i] = std::hypot(re[i], im[i]);
  }
  auto sn = spec.node_ptr();
  return spec.tape().make(
      std::move(out),
      [sn, plane](Node<T>& self) {
        if (!sn->requires_grad) return;
        T* ds = sn->grad_buffer().data();
        for (std::int64_t b = 0; b < self.value.dim(0); ++b) {
          const T* re = sn->value.data() + b * 2 * plane;
          const T* im = re + plane;
          const T* m = self.value.data() + b * plane;
          const T* g = self.grad.data() + b * plane;
          T* dre = ds + b * 2 * plane;
          T* dim = dre + plane;
          for (std::int64_t i = 0; i < plane; ++i) {
            if (m[i] == 0) continue;
            dre[i] += g[i] * re[i] / m[i];
            dim[i] += g[i] * im[i] / m[i];
          }
        }
      },
      spec);
}

template <typename T>
Var<T> apply_phase(const Var<T>& magnitude, const Var<T>& reference) {
  if (reference.value().rank() != 4 || reference.dim(1) != 2)
    throw ShapeError("apply_phase: reference must be [N, 2, T, F], got " + to_string(reference.shape()));
  const Shape expect{reference.dim(0), 1, reference.dim(2), reference.dim(3)};
  if (magnitude.shape() != expect)
    throw ShapeError("apply_phase: magnitude must be " + to_string(expect) + ", got " + to_string(magnitude.shape()));
  const auto n = reference.dim(0), plane = reference.dim(2) * reference.dim(3);
  Tensor<T> out(reference.shape());
  for (std::int64_t b = 0; b < n; ++b) {
    const T* re = reference.value().data() + b * 2 * plane;
    const T* im = re + plane;
    const T* m = magnitude.value().data() + b * plane;
    T* ore = out.data() + b * 2 * plane;
    T* oim = ore + plane;
    for (std::int64_t i = 0; i < plane; ++i) {
      const T r = std::hypot(re[i], im[i]);
      if (r == 0) continue;
      ore[i] = m[i] * re[i] / r;
      oim[i] = m[i] * im[i] / r;
    }
  }
  auto mn = magnitude.node_ptr(), rn = reference.node_ptr();
  return magnitude.tape().make(
      std::move(out),
      [mn, rn, plane](Node<T>& self) {
        for (std::int64_t b = 0; b < self.value.dim(0); ++b) {
          const T* re = rn->value.data() + b * 2 * plane;
          const T* im = re + plane;
          const T* m = mn->value.data() + b * plane;
          const T* gre = self.grad.data() + b * 2 * plane;
          const T* gim = gre + plane;
          T* dm = mn->requires_grad ? mn->grad_buffer().data() + b * plane : nullptr;
          T* dre = rn->requires_grad ? rn->grad_buffer().data() + b * 2 * plane : nullptr;
          for (std::int64_t i = 0; i < plane; ++i) {
            const T r = std::hypot(re[i], im[i]);
            if (r == 0) continue;
            if (dm) dm[i] += (gre[i] * re[i] + gim[i] * im[i]) / r;
            if (dre) {
              const T c = m[i] * (gre[i] * im[i] - gim[i] * re[i]) / (r * r * r);
              dre[i] += c * im[i];
              dre[i + plane] -= c * re[i];
            }
          }
        }
      },
      magnitude, reference);
}

template <typename T>
Var<T> downsample2(const Var<T>& x) {
  if (x.value().rank() != 2) throw ShapeError("downsample2: input must be [N, L], got " + to_string(x.shape()));
  const auto n = x.dim(0), len = x.dim(1), half = len / 2;
  Tensor<T> out({n, half});
  for (std::int64_t b = 0; b < n; ++b)
    dsp::decimate2<T>(std::span<const T>(x.value().data() + b * len, len), std::span<T>(out.data() + b * half, half));
  auto xn = x.node_ptr();
  return x.tape().make(
      std::move(out),
      [xn, len, half](Node<T>& self) {
        if (!xn->requires_grad) return;
        T* dx = xn->grad_buffer().data();
        for (std::int64_t b = 0; b < self.value.dim(0); ++b)
          dsp::decimate2_adjoint<T>(std::span<const T>(self.grad.data() + b * half, half),
                                    std::span<T>(dx + b * len, len));
      },
      x);
}

template <typename T>
Var<T> upsample2(const Var<T>& x, std::int64_t length) {
  if (x.value().rank() != 2) throw ShapeError("upsample2: input must be [N, L], got " + to_string(x.shape()));
  const auto n = x.dim(0), len = x.dim(1);
  if (length < 2 * len - 1 || length > 2 * len + 1)
    throw ShapeError(fmt::format("upsample2: cannot produce {} samples from {}", length, len));
  Tensor<T> out({n, length});
  for (std::int64_t b = 0; b < n; ++b)
    dsp::interpolate2<T>(std::span<const T>(x.value().data() + b * len, len),
                         std::span<T>(out.data() + b * length, length));
  auto xn = x.node_ptr();
  return x.tape().make(
      std::move(out),
      [xn, len, length](Node<T>& self) {
        if (!xn->requires_grad) return;
        T* dx = xn->grad_buffer().data();
        for (std::int64_t b = 0; b < self.value.dim(0); ++b)
          dsp::interpolate2_adjoint<T>(std::span<const T>(self.grad.data() + b * length, length),
                                       std::span<T>(dx + b * len, len));
      },
      x);
}

#define RESTORER_INSTANTIATE(T)                                                      \
  template Var<T> stft(const Var<T>&, const dsp::StftConfig&);                       \
  template Var<T> istft(const Var<T>&, const dsp::StftConfig&, std::int64_t);        \
  template Var<T> complex_modulus(const Var<T>&);                                    \
  template Var<T> apply_phase(const Var<T>&, const Var<T>&);                         \
  template Var<T> downsample2(const Var<T>&);                                        \
  template Var<T> upsample2(const Var<T>&, std::int64_t);

RESTORER_INSTANTIATE(float)
RESTORER_INSTANTIATE(double)
#undef RESTORER_INSTANTIATE

}  // namespace restorer::nn
