#pragma once

#include <array>
#include <vector>

#include "restorer/dsp.hpp"
#include "restorer/nn/autograd.hpp"

namespace restorer::nn {

// ---- elementwise and structural ----------------------------------------

template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, T s);
template <typename T> Var<T> add_scalar(const Var<T>& a, T s);
template <typename T> Var<T> abs(const Var<T>& a);
template <typename T> Var<T> relu(const Var<T>& a);
/// x for x >= 0, exp(x) - 1 otherwise.
template <typename T> Var<T> elu(const Var<T>& a);
/// x for x >= 0, alpha * x otherwise.
template <typename T> Var<T> leaky_relu(const Var<T>& a, T alpha = T(0.3));
template <typename T> Var<T> sum(const Var<T>& a);
template <typename T> Var<T> mean(const Var<T>& a);
template <typename T> Var<T> reshape(const Var<T>& a, Shape shape);
/// Same value, no gradient path.
template <typename T> Var<T> detach(const Var<T>& a);
template <typename T> Var<T> concat(const std::vector<Var<T>>& parts, int axis);
template <typename T> Var<T> slice(const Var<T>& a, int axis, std::int64_t start, std::int64_t length);
/// Reflect padding (edge sample not repeated) along one axis.
template <typename T> Var<T> pad_reflect(const Var<T>& a, int axis, std::int64_t before, std::int64_t after);

// ---- convolution -----------------------------------------------------------

// Cross-correlation geometry. Output size per axis is
// (in + pad_begin + pad_end - kernel) / stride + 1.
struct Conv2dSpec {
  std::array<int, 2> stride{1, 1};
  std::array<int, 2> pad_begin{0, 0};
  std::array<int, 2> pad_end{0, 0};
  int groups = 1;

  /// Stride-1 "same" padding for an odd or even kernel.
  static Conv2dSpec same(int kh, int kw);
  /// floor((k - s) / 2) per side so divisible inputs map to in / stride.
  static Conv2dSpec half(int kh, int kw, int sh, int sw);
};

struct Conv1dSpec {
  int stride = 1;
  int pad_begin = 0;
  int pad_end = 0;
  int groups = 1;
};

/// x [N, Ci, H, W], w [Co, Ci/groups, kh, kw], optional bias [Co].
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, const Conv2dSpec& spec);

/// Adjoint of conv2d with the same weight tensor: x [N, Co, H, W],
/// w [Co, Ci, kh, kw] -> [N, Ci, (H-1)*sh + kh - pads, ...]. groups must be 1.
template <typename T>
Var<T> conv2d_transpose(const Var<T>& x, const Var<T>& w, const Var<T>& bias, const Conv2dSpec& spec);

/// x [N, Ci, L], w [Co, Ci/groups, k], optional bias [Co].
template <typename T>
Var<T> conv1d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, const Conv1dSpec& spec);

/// Replicates every pixel into an fh x fw block.
template <typename T>
Var<T> nearest_upsample(const Var<T>& x, int fh, int fw);

// ---- normalization -----------------------------------------------------------

/// w = g * v / ||v||, norm taken over every axis except `axis`; g has v.dim(axis) entries.
template <typename T>
Var<T> weight_norm(const Var<T>& v, const Var<T>& g, int axis = 0);

/// Per-example normalization over all non-batch axes followed by a per-channel
/// affine (gain/bias indexed by axis 1).
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias, T eps = T(1e-5));

// ---- signal ops --------------------------------------------------------------

/// x [N, L] -> [N, 2, frames, bins] (real, imaginary).
template <typename T>
Var<T> stft(const Var<T>& x, const dsp::StftConfig& cfg);
/// [N, 2, frames, bins] -> [N, length].
template <typename T>
Var<T> istft(const Var<T>& spec, const dsp::StftConfig& cfg, std::int64_t length);
/// [N, 2, T, F] -> [N, 1, T, F] magnitude.
template <typename T>
Var<T> complex_modulus(const Var<T>& spec);
/// magnitude [N, 1, T, F] times the unit phasor of reference [N, 2, T, F];
/// zero where the reference is zero.
template <typename T>
Var<T> apply_phase(const Var<T>& magnitude, const Var<T>& reference);
/// [N, L] -> [N, L/2] half-band decimation.
template <typename T>
Var<T> downsample2(const Var<T>& x);
/// [N, L] -> [N, length] half-band interpolation by two; length is 2L - 1, 2L or 2L + 1.
template <typename T>
Var<T> upsample2(const Var<T>& x, std::int64_t length);

}  // namespace restorer::nn
