#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>
#include <tuple>

#include <fmt/format.h>
#include <unsupported/Eigen/FFT>

#include "restorer/dsp.hpp"

namespace restorer::dsp {

std::string to_string(Window w) {
  switch (w) {
    case Window::Hann: return "hann";
    case Window::Hamming: return "hamming";
    case Window::Rectangular: return "rectangular";
  }
  return "unknown";
}

Window window_from_string(const std::string& name) {
  if (name == "hann") return Window::Hann;
  if (name == "hamming") return Window::Hamming;
  if (name == "rectangular" || name == "rect") return Window::Rectangular;
  throw std::invalid_argument("unknown window: " + name);
}

std::vector<double> make_window(Window type, int length) {
  std::vector<double> w(length, 1.0);
  const double step = 2.0 * std::numbers::pi / length;
  for (int n = 0; n < length; ++n) {
    switch (type) {
      case Window::Hann: w[n] = 0.5 - 0.5 * std::cos(step * n); break;
      case Window::Hamming: w[n] = 0.54 - 0.46 * std::cos(step * n); break;
      case Window::Rectangular: break;
    }
  }
  return w;
}

int StftConfig::frames(std::size_t length) const {
  if (center) return static_cast<int>(length / hop_size) + 1;
  if (length < static_cast<std::size_t>(window_size)) return 0;
  return static_cast<int>((length - window_size) / hop_size) + 1;
}

bool StftConfig::satisfies_cola() const {
  const auto w = make_window(window, window_size);
  std::vector<double> sum(hop_size, 0.0);
  for (int n = 0; n < window_size; ++n) sum[n % hop_size] += w[n] * w[n];
  const auto [lo, hi] = std::minmax_element(sum.begin(), sum.end());
  return *lo > 0.0 && (*hi - *lo) <= 1e-9 * *hi;
}

void StftConfig::validate() const {
  if (window_size < 8 || window_size % 2 != 0)
    throw std::invalid_argument(fmt::format("StftConfig: window_size must be even and >= 8, got {}", window_size));
  if (hop_size < 1 || hop_size > window_size || window_size % hop_size != 0)
    throw std::invalid_argument(
        fmt::format("StftConfig: hop_size {} must divide window_size {}", hop_size, window_size));
}

template <typename T>
struct StftEngine<T>::Impl {
  Eigen::FFT<T> fft;
  std::vector<T> window;
  std::vector<T> frame;
  std::vector<std::complex<T>> half;
  std::vector<T> padded;
  // Cached sum of squared windows for the last (frames) seen.
  int denom_frames = -1;
  std::vector<T> denom;

  const std::vector<T>& denominator(const StftConfig& cfg, int frames) {
    if (frames != denom_frames) {
      const int n = cfg.window_size;
      denom.assign(static_cast<std::size_t>(frames - 1) * cfg.hop_size + n, T(0));
      for (int m = 0; m < frames; ++m)
        for (int i = 0; i < n; ++i) denom[static_cast<std::size_t>(m) * cfg.hop_size + i] += window[i] * window[i];
      denom_frames = frames;
    }
    return denom;
  }
};

namespace {

inline std::size_t reflect_index(std::ptrdiff_t j, std::size_t length) {
  const auto len = static_cast<std::ptrdiff_t>(length);
  if (j < 0) j = -j;
  if (j >= len) j = 2 * (len - 1) - j;
  return static_cast<std::size_t>(j);
}

}  // namespace

template <typename T>
StftEngine<T>::StftEngine(const StftConfig& cfg) : cfg_(cfg), impl_(std::make_unique<Impl>()) {
  cfg_.validate();
  impl_->fft.SetFlag(Eigen::FFT<T>::HalfSpectrum);
  const auto w = make_window(cfg_.window, cfg_.window_size);
  impl_->window.assign(w.begin(), w.end());
  impl_->frame.resize(cfg_.window_size);
}

template <typename T>
StftEngine<T>::~StftEngine() = default;
template <typename T>
StftEngine<T>::StftEngine(StftEngine&&) noexcept = default;
template <typename T>
StftEngine<T>& StftEngine<T>::operator=(StftEngine&&) noexcept = default;

template <typename T>
void StftEngine<T>::forward(std::span<const T> x, std::span<T> re, std::span<T> im) {
  const int n = cfg_.window_size;
  const int hop = cfg_.hop_size;
  const int nb = bins();
  if (x.size() < static_cast<std::size_t>(n))
    throw InputTooShort(fmt::format("stft: input too short ({} samples < window {})", x.size(), n));
  const int nf = frames(x.size());
  const std::size_t pad = cfg_.center ? static_cast<std::size_t>(n / 2) : 0;
  auto& s = *impl_;
  s.padded.resize(x.size() + 2 * pad);
  for (std::size_t i = 0; i < s.padded.size(); ++i)
    s.padded[i] = x[reflect_index(static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(pad), x.size())];
  for (int m = 0; m < nf; ++m) {
    const T* src = s.padded.data() + static_cast<std::size_t>(m) * hop;
    for (int i = 0; i < n; ++i) s.frame[i] = s.window[i] * src[i];
    s.fft.fwd(s.half, s.frame);
    T* r = re.data() + static_cast<std::size_t>(m) * nb;
    T* q = im.data() + static_cast<std::size_t>(m) * nb;
    for (int k = 0; k < nb; ++k) {
      r[k] = s.half[k].real();
      q[k] = s.half[k].imag();
    }
  }
}

template <typename T>
void StftEngine<T>::forward_adjoint(std::span<const T> grad_re, std::span<const T> grad_im, std::span<T> grad_x) {
  const int n = cfg_.window_size;
  const int hop = cfg_.hop_size;
  const int nb = bins();
  const int nf = frames(grad_x.size());
  const std::size_t pad = cfg_.center ? static_cast<std::size_t>(n / 2) : 0;
  auto& s = *impl_;
  s.padded.assign(grad_x.size() + 2 * pad, T(0));
  s.half.resize(nb);
  // grad of frame sample i is Re(sum_k Z_k e^{+j 2 pi k i / n}), computed as a
  // scaled real inverse transform.
  for (int m = 0; m < nf; ++m) {
    const T* r = grad_re.data() + static_cast<std::size_t>(m) * nb;
    const T* q = grad_im.data() + static_cast<std::size_t>(m) * nb;
    for (int k = 0; k < nb; ++k) {
      const T scale = (k == 0 || k == nb - 1) ? T(n) : T(n) / T(2);
      s.half[k] = std::complex<T>(r[k] * scale, (k == 0 || k == nb - 1) ? T(0) : q[k] * scale);
    }
    s.fft.inv(s.frame, s.half, n);
    T* dst = s.padded.data() + static_cast<std::size_t>(m) * hop;
    for (int i = 0; i < n; ++i) dst[i] += s.window[i] * s.frame[i];
  }
  for (std::size_t i = 0; i < s.padded.size(); ++i)
    grad_x[reflect_index(static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(pad), grad_x.size())] +=
        s.padded[i];
}

template <typename T>
void StftEngine<T>::inverse(std::span<const T> re, std::span<const T> im, std::span<T> out) {
  const int n = cfg_.window_size;
  const int hop = cfg_.hop_size;
  const int nb = bins();
  const int nf = static_cast<int>(re.size() / nb);
  const std::size_t pad = cfg_.center ? static_cast<std::size_t>(n / 2) : 0;
  auto& s = *impl_;
  const auto& denom = s.denominator(cfg_, nf);
  if (pad + out.size() > denom.size())
    throw std::invalid_argument(fmt::format("istft: {} frames cannot cover {} samples", nf, out.size()));
  s.padded.assign(denom.size(), T(0));
  s.half.resize(nb);
  for (int m = 0; m < nf; ++m) {
    const T* r = re.data() + static_cast<std::size_t>(m) * nb;
    const T* q = im.data() + static_cast<std::size_t>(m) * nb;
    for (int k = 0; k < nb; ++k) s.half[k] = std::complex<T>(r[k], (k == 0 || k == nb - 1) ? T(0) : q[k]);
    s.fft.inv(s.frame, s.half, n);
    T* dst = s.padded.data() + static_cast<std::size_t>(m) * hop;
    for (int i = 0; i < n; ++i) dst[i] += s.window[i] * s.frame[i];
  }
  const T floor = T(1e-8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T d = denom[i + pad];
    out[i] = d > floor ? s.padded[i + pad] / d : T(0);
  }
}

template <typename T>
void StftEngine<T>::inverse_adjoint(std::span<const T> grad_out, std::span<T> grad_re, std::span<T> grad_im) {
  const int n = cfg_.window_size;
  const int hop = cfg_.hop_size;
  const int nb = bins();
  const int nf = static_cast<int>(grad_re.size() / nb);
  const std::size_t pad = cfg_.center ? static_cast<std::size_t>(n / 2) : 0;
  auto& s = *impl_;
  const auto& denom = s.denominator(cfg_, nf);
  s.padded.assign(denom.size(), T(0));
  const T floor = T(1e-8);
  for (std::size_t i = 0; i < grad_out.size(); ++i) {
    const T d = denom[i + pad];
    if (d > floor) s.padded[i + pad] = grad_out[i] / d;
  }
  for (int m = 0; m < nf; ++m) {
    const T* src = s.padded.data() + static_cast<std::size_t>(m) * hop;
    for (int i = 0; i < n; ++i) s.frame[i] = s.window[i] * src[i];
    s.fft.fwd(s.half, s.frame);
    T* r = grad_re.data() + static_cast<std::size_t>(m) * nb;
    T* q = grad_im.data() + static_cast<std::size_t>(m) * nb;
    for (int k = 0; k < nb; ++k) {
      const bool edge = (k == 0 || k == nb - 1);
      const T c = edge ? T(1) / T(n) : T(2) / T(n);
      r[k] += c * s.half[k].real();
      if (!edge) q[k] += c * s.half[k].imag();
    }
  }
}

template <typename T>
StftEngine<T>& stft_engine(const StftConfig& cfg) {
  using Key = std::tuple<int, int, int, bool>;
  thread_local std::map<Key, std::unique_ptr<StftEngine<T>>> cache;
  const Key key{cfg.window_size, cfg.hop_size, static_cast<int>(cfg.window), cfg.center};
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, std::make_unique<StftEngine<T>>(cfg)).first;
  return *it->second;
}

template class StftEngine<float>;
template class StftEngine<double>;
template StftEngine<float>& stft_engine<float>(const StftConfig&);
template StftEngine<double>& stft_engine<double>(const StftConfig&);

Spectrogram stft(const AudioClip& clip, const StftConfig& cfg) {
  cfg.validate();
  if (clip.size() < static_cast<std::size_t>(cfg.window_size))
    throw InputTooShort(
        fmt::format("stft: input too short ({} samples < window {})", clip.size(), cfg.window_size));
  Spectrogram spec;
  spec.config = cfg;
  spec.frames = cfg.frames(clip.size());
  spec.bins = cfg.bins();
  spec.original_length = clip.size();
  spec.sample_rate = clip.sample_rate;
  const std::size_t count = static_cast<std::size_t>(spec.frames) * spec.bins;
  std::vector<double> re(count), im(count);
  stft_engine<double>(cfg).forward(clip.samples, re, im);
  spec.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) spec.values[i] = {re[i], im[i]};
  return spec;
}

AudioClip istft(const Spectrogram& spec) {
  spec.config.validate();
  if (!spec.config.satisfies_cola())
    throw std::invalid_argument(fmt::format("istft: window {} with hop {} is not constant-overlap-add",
                                            to_string(spec.config.window), spec.config.hop_size));
  if (spec.bins != spec.config.bins() || spec.values.size() != static_cast<std::size_t>(spec.frames) * spec.bins)
    throw std::invalid_argument("istft: spectrogram dimensions inconsistent with its configuration");
  std::vector<double> re(spec.values.size()), im(spec.values.size());
  for (std::size_t i = 0; i < spec.values.size(); ++i) {
    re[i] = spec.values[i].real();
    im[i] = spec.values[i].imag();
  }
  AudioClip out;
  out.sample_rate = spec.sample_rate > 0 ? spec.sample_rate : 44100;
  out.samples.assign(spec.original_length, 0.0);
  if (spec.frames > 0) stft_engine<double>(spec.config).inverse(re, im, out.samples);
  return out;
}

}  // namespace restorer::dsp
