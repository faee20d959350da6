#include <cmath>
#include <numbers>

#include "restorer/dsp.hpp"

namespace restorer::dsp {

namespace {
constexpr int kTaps = 63;
constexpr int kCenter = kTaps / 2;
}  // namespace

const std::vector<double>& halfband_taps() {
  static const std::vector<double> taps = [] {
    std::vector<double> h(kTaps);
    double sum = 0.0;
    for (int j = 0; j < kTaps; ++j) {
      const int d = j - kCenter;
      const double ideal = d == 0 ? 0.5 : std::sin(std::numbers::pi * d / 2.0) / (std::numbers::pi * d);
      const double hamming = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * j / (kTaps - 1));
      h[j] = ideal * hamming;
      sum += h[j];
    }
    for (double& v : h) v /= sum;
    return h;
  }();
  return taps;
}

template <typename T>
void decimate2(std::span<const T> in, std::span<T> out) {
  const auto& h = halfband_taps();
  const auto len = static_cast<std::ptrdiff_t>(in.size());
  for (std::size_t n = 0; n < out.size(); ++n) {
    const std::ptrdiff_t base = 2 * static_cast<std::ptrdiff_t>(n) - kCenter;
    double acc = 0.0;
    for (int j = 0; j < kTaps; ++j) {
      const std::ptrdiff_t i = base + j;
      if (i >= 0 && i < len) acc += h[j] * in[i];
    }
    out[n] = static_cast<T>(acc);
  }
}

template <typename T>
void decimate2_adjoint(std::span<const T> grad_out, std::span<T> grad_in) {
  const auto& h = halfband_taps();
  const auto len = static_cast<std::ptrdiff_t>(grad_in.size());
  for (std::size_t n = 0; n < grad_out.size(); ++n) {
    const std::ptrdiff_t base = 2 * static_cast<std::ptrdiff_t>(n) - kCenter;
    const double g = grad_out[n];
    for (int j = 0; j < kTaps; ++j) {
      const std::ptrdiff_t i = base + j;
      if (i >= 0 && i < len) grad_in[i] += static_cast<T>(h[j] * g);
    }
  }
}

// out[m] = 2 sum_j h[j] u[m + j - c], where u is `in` zero-stuffed by two.
template <typename T>
void interpolate2(std::span<const T> in, std::span<T> out) {
  const auto& h = halfband_taps();
  const auto len = static_cast<std::ptrdiff_t>(in.size());
  for (std::size_t m = 0; m < out.size(); ++m) {
    const std::ptrdiff_t base = static_cast<std::ptrdiff_t>(m) - kCenter;
    double acc = 0.0;
    // only even u indices are nonzero
    for (int j = (base % 2 == 0) ? 0 : 1; j < kTaps; j += 2) {
      const std::ptrdiff_t i = (base + j) / 2;
      if (base + j >= 0 && i < len) acc += h[j] * in[i];
    }
    out[m] = static_cast<T>(2.0 * acc);
  }
}

template <typename T>
void interpolate2_adjoint(std::span<const T> grad_out, std::span<T> grad_in) {
  const auto& h = halfband_taps();
  const auto len = static_cast<std::ptrdiff_t>(grad_in.size());
  for (std::size_t m = 0; m < grad_out.size(); ++m) {
    const std::ptrdiff_t base = static_cast<std::ptrdiff_t>(m) - kCenter;
    const double g = 2.0 * grad_out[m];
    for (int j = (base % 2 == 0) ? 0 : 1; j < kTaps; j += 2) {
      const std::ptrdiff_t i = (base + j) / 2;
      if (base + j >= 0 && i < len) grad_in[i] += static_cast<T>(h[j] * g);
    }
  }
}

template void decimate2<float>(std::span<const float>, std::span<float>);
template void decimate2<double>(std::span<const double>, std::span<double>);
template void decimate2_adjoint<float>(std::span<const float>, std::span<float>);
template void decimate2_adjoint<double>(std::span<const double>, std::span<double>);
template void interpolate2<float>(std::span<const float>, std::span<float>);
template void interpolate2<double>(std::span<const double>, std::span<double>);
template void interpolate2_adjoint<float>(std::span<const float>, std::span<float>);
template void interpolate2_adjoint<double>(std::span<const double>, std::span<double>);

AudioClip downsample2(const AudioClip& clip) {
  AudioClip out;
  out.sample_rate = clip.sample_rate / 2;
  out.samples.assign(clip.size() / 2, 0.0);
  decimate2<double>(clip.samples, out.samples);
  return out;
}

AudioClip upsample2(const AudioClip& clip) {
  AudioClip out;
  out.sample_rate = clip.sample_rate * 2;
  out.samples.assign(clip.size() * 2, 0.0);
  interpolate2<double>(clip.samples, out.samples);
  return out;
}

}  // namespace restorer::dsp
