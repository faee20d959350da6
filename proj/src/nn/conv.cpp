#include <algorithm>

#include <Eigen/Core>
#include <fmt/format.h>

#include "restorer/nn/ops.hpp"

namespace restorer::nn {

Conv2dSpec Conv2dSpec::same(int kh, int kw) {
  Conv2dSpec s;
  s.pad_begin = {(kh - 1) / 2, (kw - 1) / 2};
  s.pad_end = {kh - 1 - s.pad_begin[0], kw - 1 - s.pad_begin[1]};
  return s;
}

Conv2dSpec Conv2dSpec::half(int kh, int kw, int sh, int sw) {
  if (kh < sh || kw < sw) throw std::invalid_argument("Conv2dSpec::half: kernel smaller than stride");
  Conv2dSpec s;
  s.stride = {sh, sw};
  s.pad_begin = {(kh - sh) / 2, (kw - sw) / 2};
  s.pad_end = {kh - sh - s.pad_begin[0], kw - sw - s.pad_begin[1]};
  return s;
}

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

struct Geometry {
  std::int64_t channels, h, w;  // image
  int kh, kw;
  Conv2dSpec spec;
  std::int64_t oh, ow;  // columns
  std::int64_t rows() const { return channels * kh * kw; }
  std::int64_t cols() const { return oh * ow; }
};

Geometry make_geometry(std::int64_t c, std::int64_t h, std::int64_t w, int kh, int kw, const Conv2dSpec& spec,
                       const char* op) {
  Geometry g{c, h, w, kh, kw, spec, 0, 0};
  const auto eh = h + spec.pad_begin[0] + spec.pad_end[0] - kh;
  const auto ew = w + spec.pad_begin[1] + spec.pad_end[1] - kw;
  if (spec.stride[0] < 1 || spec.stride[1] < 1) throw ShapeError(fmt::format("{}: stride must be positive", op));
  if (eh < 0) throw ShapeError(fmt::format("{}: axis 2 of size {} smaller than kernel {}", op, h, kh));
  if (ew < 0) throw ShapeError(fmt::format("{}: axis 3 of size {} smaller than kernel {}", op, w, kw));
  g.oh = eh / spec.stride[0] + 1;
  g.ow = ew / spec.stride[1] + 1;
  return g;
}

// Output columns [lo, hi) whose input index o * stride - pad + k lies in [0, n).
inline std::pair<std::int64_t, std::int64_t> valid_range(std::int64_t n, std::int64_t out, int stride, int pad, int k) {
  const std::int64_t shift = pad - k;  // o * stride >= shift
  std::int64_t lo = shift <= 0 ? 0 : (shift + stride - 1) / stride;
  std::int64_t hi = n - 1 + shift < 0 ? 0 : (n - 1 + shift) / stride + 1;
  lo = std::min(lo, out);
  hi = std::clamp(hi, lo, out);
  return {lo, hi};
}

// image [channels, h, w] -> col [channels*kh*kw, oh*ow]
template <typename T>
void im2col(const T* img, const Geometry& g, T* col) {
  const int sh = g.spec.stride[0], sw = g.spec.stride[1];
  const int ph = g.spec.pad_begin[0], pw = g.spec.pad_begin[1];
  for (std::int64_t c = 0; c < g.channels; ++c)
    for (int ki = 0; ki < g.kh; ++ki)
      for (int kj = 0; kj < g.kw; ++kj) {
        T* row = col + ((c * g.kh + ki) * g.kw + kj) * g.cols();
        const auto [lo, hi] = valid_range(g.w, g.ow, sw, pw, kj);
        for (std::int64_t oy = 0; oy < g.oh; ++oy) {
          T* dst = row + oy * g.ow;
          const std::int64_t iy = oy * sh - ph + ki;
          if (iy < 0 || iy >= g.h) {
            std::fill_n(dst, g.ow, T(0));
            continue;
          }
          const std::int64_t base = (c * g.h + iy) * g.w + kj - pw;
          std::fill_n(dst, lo, T(0));
          if (sw == 1) {
            std::copy(img + base + lo, img + base + hi, dst + lo);
          } else {
            for (std::int64_t ox = lo; ox < hi; ++ox) dst[ox] = img[base + ox * sw];
          }
          std::fill(dst + hi, dst + g.ow, T(0));
        }
      }
}

// Adjoint of im2col: accumulates col into image.
template <typename T>
void col2im(const T* col, const Geometry& g, T* img) {
  const int sh = g.spec.stride[0], sw = g.spec.stride[1];
  const int ph = g.spec.pad_begin[0], pw = g.spec.pad_begin[1];
  for (std::int64_t c = 0; c < g.channels; ++c)
    for (int ki = 0; ki < g.kh; ++ki)
      for (int kj = 0; kj < g.kw; ++kj) {
        const T* row = col + ((c * g.kh + ki) * g.kw + kj) * g.cols();
        const auto [lo, hi] = valid_range(g.w, g.ow, sw, pw, kj);
        for (std::int64_t oy = 0; oy < g.oh; ++oy) {
          const std::int64_t iy = oy * sh - ph + ki;
          if (iy < 0 || iy >= g.h) continue;
          const T* src = row + oy * g.ow;
          const std::int64_t base = (c * g.h + iy) * g.w + kj - pw;
          if (sw == 1) {
            for (std::int64_t ox = lo; ox < hi; ++ox) img[base + ox] += src[ox];
          } else {
            for (std::int64_t ox = lo; ox < hi; ++ox) img[base + ox * sw] += src[ox];
          }
        }
      }
}

// Per-thread column buffers, reused across calls to avoid page-faulting fresh
// allocations for every convolution.
template <typename T>
T* scratch(int slot, std::size_t size) {
  thread_local std::vector<T> buffers[2];
  auto& b = buffers[slot];
  if (b.size() < size) b.resize(size);
  return b.data();
}

template <typename T>
void check_bias(const Var<T>& bias, std::int64_t channels, const char* op) {
  if (bias.defined() && (bias.value().rank() != 1 || bias.dim(0) != channels))
    throw ShapeError(fmt::format("{}: bias shape {} does not match {} channels", op, to_string(bias.shape()), channels));
}

template <typename T>
void add_bias(Tensor<T>& out, const Var<T>& bias) {
  if (!bias.defined()) return;
  const auto n = out.dim(0), c = out.dim(1), hw = out.numel() / (n * c);
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < c; ++j) {
      T* p = out.data() + (i * c + j) * hw;
      const T b = bias.value()[j];
      for (std::int64_t k = 0; k < hw; ++k) p[k] += b;
    }
}

template <typename T>
void bias_backward(const Tensor<T>& grad, const std::shared_ptr<Node<T>>& bn) {
  if (!bn || !bn->requires_grad) return;
  const auto n = grad.dim(0), c = grad.dim(1), hw = grad.numel() / (n * c);
  auto& db = bn->grad_buffer();
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < c; ++j) {
      const T* p = grad.data() + (i * c + j) * hw;
      T acc = 0;
      for (std::int64_t k = 0; k < hw; ++k) acc += p[k];
      db[j] += acc;
    }
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, const Conv2dSpec& spec) {
  if (x.value().rank() != 4) throw ShapeError("conv2d: input must be [N, C, H, W], got " + to_string(x.shape()));
  if (w.value().rank() != 4) throw ShapeError("conv2d: weight must be [Co, Ci, kh, kw], got " + to_string(w.shape()));
  const int groups = spec.groups;
  const auto n = x.dim(0), ci = x.dim(1), co = w.dim(0);
  if (groups < 1 || ci % groups != 0 || co % groups != 0)
    throw ShapeError(fmt::format("conv2d: {} groups do not divide {} -> {} channels", groups, ci, co));
  const auto cig = ci / groups, cog = co / groups;
  if (w.dim(1) != cig)
    throw ShapeError(fmt::format("conv2d: axis 1 of input has {} channels, weight expects {}", ci, w.dim(1) * groups));
  check_bias(bias, co, "conv2d");
  const int kh = static_cast<int>(w.dim(2)), kw = static_cast<int>(w.dim(3));
  const Geometry g = make_geometry(cig, x.dim(2), x.dim(3), kh, kw, spec, "conv2d");

  Tensor<T> out({n, co, g.oh, g.ow});
  T* col = scratch<T>(0, g.rows() * g.cols());
  const auto in_stride = cig * g.h * g.w;
  for (std::int64_t b = 0; b < n; ++b)
    for (int gr = 0; gr < groups; ++gr) {
      im2col(x.value().data() + (b * groups + gr) * in_stride, g, col);
      CMapMat<T> wm(w.value().data() + gr * cog * g.rows(), cog, g.rows());
      CMapMat<T> cm(col, g.rows(), g.cols());
      MapMat<T> om(out.data() + (b * co + gr * cog) * g.cols(), cog, g.cols());
      om.noalias() = wm * cm;
    }
  add_bias(out, bias);

  auto xn = x.node_ptr(), wn = w.node_ptr(), bn = bias.defined() ? bias.node_ptr() : nullptr;
  auto backward = [xn, wn, bn, g, groups, cog](Node<T>& self) {
    const auto n = self.value.dim(0), co = self.value.dim(1);
    const auto in_stride = g.channels * g.h * g.w;
    T* col = scratch<T>(0, g.rows() * g.cols());
    T* dcol = scratch<T>(1, xn->requires_grad ? g.rows() * g.cols() : 0);
    for (std::int64_t b = 0; b < n; ++b)
      for (int gr = 0; gr < groups; ++gr) {
        CMapMat<T> dout(self.grad.data() + (b * co + gr * cog) * g.cols(), cog, g.cols());
        if (wn->requires_grad) {
          im2col(xn->value.data() + (b * groups + gr) * in_stride, g, col);
          CMapMat<T> cm(col, g.rows(), g.cols());
          MapMat<T> dw(wn->grad_buffer().data() + gr * cog * g.rows(), cog, g.rows());
          dw.noalias() += dout * cm.transpose();
        }
        if (xn->requires_grad) {
          CMapMat<T> wm(wn->value.data() + gr * cog * g.rows(), cog, g.rows());
          MapMat<T> dc(dcol, g.rows(), g.cols());
          dc.noalias() = wm.transpose() * dout;
          col2im(dcol, g, xn->grad_buffer().data() + (b * groups + gr) * in_stride);
        }
      }
    bias_backward(self.grad, bn);
  };
  if (bias.defined()) return x.tape().make(std::move(out), backward, x, w, bias);
  return x.tape().make(std::move(out), backward, x, w);
}

template <typename T>
Var<T> conv2d_transpose(const Var<T>& x, const Var<T>& w, const Var<T>& bias, const Conv2dSpec& spec) {
  if (x.value().rank() != 4)
    throw ShapeError("conv2d_transpose: input must be [N, C, H, W], got " + to_string(x.shape()));
  if (w.value().rank() != 4)
    throw ShapeError("conv2d_transpose: weight must be [Cin, Cout, kh, kw], got " + to_string(w.shape()));
  if (spec.groups != 1) throw ShapeError("conv2d_transpose: groups are not supported");
  const auto n = x.dim(0), cin = x.dim(1), cout = w.dim(1);
  if (w.dim(0) != cin)
    throw ShapeError(fmt::format("conv2d_transpose: axis 1 of input has {} channels, weight expects {}", cin, w.dim(0)));
  check_bias(bias, cout, "conv2d_transpose");
  const int kh = static_cast<int>(w.dim(2)), kw = static_cast<int>(w.dim(3));
  const auto oh = (x.dim(2) - 1) * spec.stride[0] + kh - spec.pad_begin[0] - spec.pad_end[0];
  const auto ow = (x.dim(3) - 1) * spec.stride[1] + kw - spec.pad_begin[1] - spec.pad_end[1];
  if (oh < 1 || ow < 1) throw ShapeError("conv2d_transpose: padding exceeds output size");
  // The output image plays the role of the forward convolution's input.
  const Geometry g = make_geometry(cout, oh, ow, kh, kw, spec, "conv2d_transpose");
  if (g.oh != x.dim(2) || g.ow != x.dim(3)) throw ShapeError("conv2d_transpose: inconsistent geometry");

  Tensor<T> out({n, cout, oh, ow});
  T* col = scratch<T>(0, g.rows() * g.cols());
  const auto out_stride = cout * oh * ow;
  CMapMat<T> wm(w.value().data(), cin, g.rows());
  for (std::int64_t b = 0; b < n; ++b) {
    CMapMat<T> xm(x.value().data() + b * cin * g.cols(), cin, g.cols());
    MapMat<T> cm(col, g.rows(), g.cols());
    cm.noalias() = wm.transpose() * xm;
    col2im(col, g, out.data() + b * out_stride);
  }
  add_bias(out, bias);

  auto xn = x.node_ptr(), wn = w.node_ptr(), bn = bias.defined() ? bias.node_ptr() : nullptr;
  auto backward = [xn, wn, bn, g](Node<T>& self) {
    const auto n = self.value.dim(0), cin = xn->value.dim(1);
    const auto out_stride = g.channels * g.h * g.w;
    T* col = scratch<T>(0, g.rows() * g.cols());
    for (std::int64_t b = 0; b < n; ++b) {
      im2col(self.grad.data() + b * out_stride, g, col);
      CMapMat<T> cm(col, g.rows(), g.cols());
      if (xn->requires_grad) {
        CMapMat<T> wm(wn->value.data(), cin, g.rows());
        MapMat<T> dx(xn->grad_buffer().data() + b * cin * g.cols(), cin, g.cols());
        dx.noalias() += wm * cm;
      }
      if (wn->requires_grad) {
        CMapMat<T> xm(xn->value.data() + b * cin * g.cols(), cin, g.cols());
        MapMat<T> dw(wn->grad_buffer().data(), cin, g.rows());
        dw.noalias() += xm * cm.transpose();
      }
    }
    bias_backward(self.grad, bn);
  };
  if (bias.defined()) return x.tape().make(std::move(out), backward, x, w, bias);
  return x.tape().make(std::move(out), backward, x, w);
}

template <typename T>
Var<T> conv1d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, const Conv1dSpec& spec) {
  if (x.value().rank() != 3) throw ShapeError("conv1d: input must be [N, C, L], got " + to_string(x.shape()));
  if (w.value().rank() != 3) throw ShapeError("conv1d: weight must be [Co, Ci, k], got " + to_string(w.shape()));
  Conv2dSpec s2;
  s2.stride = {1, spec.stride};
  s2.pad_begin = {0, spec.pad_begin};
  s2.pad_end = {0, spec.pad_end};
  s2.groups = spec.groups;
  auto y = conv2d(reshape(x, {x.dim(0), x.dim(1), 1, x.dim(2)}), reshape(w, {w.dim(0), w.dim(1), 1, w.dim(2)}),
                  bias, s2);
  return reshape(y, {y.dim(0), y.dim(1), y.dim(3)});
}

template <typename T>
Var<T> nearest_upsample(const Var<T>& x, int fh, int fw) {
  if (x.value().rank() != 4) throw ShapeError("nearest_upsample: input must be [N, C, H, W]");
  if (fh < 1 || fw < 1) throw ShapeError("nearest_upsample: factors must be positive");
  const auto planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor<T> out({x.dim(0), x.dim(1), h * fh, w * fw});
  const auto oh = h * fh, ow = w * fw;
  for (std::int64_t p = 0; p < planes; ++p)
    for (std::int64_t i = 0; i < oh; ++i) {
      const T* src = x.value().data() + (p * h + i / fh) * w;
      T* dst = out.data() + (p * oh + i) * ow;
      for (std::int64_t j = 0; j < w; ++j)
        for (int r = 0; r < fw; ++r) dst[j * fw + r] = src[j];
    }
  auto xn = x.node_ptr();
  return x.tape().make(
      std::move(out),
      [xn, fh, fw](Node<T>& self) {
        if (!xn->requires_grad) return;
        const auto planes = xn->value.dim(0) * xn->value.dim(1), h = xn->value.dim(2), w = xn->value.dim(3);
        const auto oh = h * fh, ow = w * fw;
        T* dx = xn->grad_buffer().data();
        for (std::int64_t p = 0; p < planes; ++p)
          for (std::int64_t i = 0; i < oh; ++i) {
            const T* src = self.grad.data() + (p * oh + i) * ow;
            T* dst = dx + (p * h + i / fh) * w;
            for (std::int64_t j = 0; j < w; ++j)
              for (int r = 0; r < fw; ++r) dst[j] += src[j * fw + r];
          }
      },
      x);
}

#define RESTORER_INSTANTIATE(T)                                                                       \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, const Conv2dSpec&);             \
  template Var<T> conv2d_transpose(const Var<T>&, const Var<T>&, const Var<T>&, const Conv2dSpec&);   \
  template Var<T> conv1d(const Var<T>&, const Var<T>&, const Var<T>&, const Conv1dSpec&);             \
  template Var<T> nearest_upsample(const Var<T>&, int, int);

RESTORER_INSTANTIATE(float)
RESTORER_INSTANTIATE(double)
#undef RESTORER_INSTANTIATE

}  // namespace restorer::nn
