#pragma once

#include <complex>
#include <cstddef>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "restorer/audio.hpp"

namespace restorer::dsp {

enum class Window { Hann, Hamming, Rectangular };

std::string to_string(Window w);
Window window_from_string(const std::string& name);

/// Periodic analysis window of the given length.
std::vector<double> make_window(Window type, int length);

struct StftConfig {
  int window_size = 2048;
  int hop_size = 512;
  Window window = Window::Hann;
  // Reflect-pad by window_size/2 on both ends so every input sample is fully
  // overlapped; the original length is kept for the inverse.
  bool center = true;

  int bins() const { return window_size / 2 + 1; }
  /// Frame count for a signal of `length` samples.
  int frames(std::size_t length) const;
  /// Sum of shifted squared windows is constant (relative tolerance 1e-9).
  bool satisfies_cola() const;
  /// Throws std::invalid_argument if sizes are inconsistent.
  void validate() const;

  bool operator==(const StftConfig&) const = default;
};

struct Spectrogram {
  int frames = 0;
  int bins = 0;
  std::vector<std::complex<double>> values;  // frames x bins, row-major
  StftConfig config;
  std::size_t original_length = 0;
  int sample_rate = 0;

  std::complex<double>& at(int frame, int bin) { return values[static_cast<std::size_t>(frame) * bins + bin]; }
  const std::complex<double>& at(int frame, int bin) const {
    return values[static_cast<std::size_t>(frame) * bins + bin];
  }
};

Spectrogram stft(const AudioClip& clip, const StftConfig& cfg);
AudioClip istft(const Spectrogram& spec);

// Frame-level STFT machinery shared with the autodiff ops. One engine per
// configuration; not thread-safe (owns FFT scratch).
template <typename T>
class StftEngine {
 public:
  explicit StftEngine(const StftConfig& cfg);
  ~StftEngine();
  StftEngine(StftEngine&&) noexcept;
  StftEngine& operator=(StftEngine&&) noexcept;

  const StftConfig& config() const { return cfg_; }
  int frames(std::size_t length) const { return cfg_.frames(length); }
  int bins() const { return cfg_.bins(); }

  /// x has `length` samples; re/im receive frames*bins values each.
  void forward(std::span<const T> x, std::span<T> re, std::span<T> im);
  /// Adjoint of forward: accumulates into grad_x.
  void forward_adjoint(std::span<const T> grad_re, std::span<const T> grad_im, std::span<T> grad_x);
  /// Least-squares overlap-add inverse producing `out.size()` samples.
  void inverse(std::span<const T> re, std::span<const T> im, std::span<T> out);
  /// Adjoint of inverse: accumulates into grad_re / grad_im.
  void inverse_adjoint(std::span<const T> grad_out, std::span<T> grad_re, std::span<T> grad_im);

 private:
  struct Impl;
  StftConfig cfg_;
  std::unique_ptr<Impl> impl_;
};

/// Shared engine for the calling thread.
template <typename T>
StftEngine<T>& stft_engine(const StftConfig& cfg);

// Half-band resampling with a 63-tap Hamming-windowed sinc (zero phase).
const std::vector<double>& halfband_taps();

AudioClip downsample2(const AudioClip& clip);
AudioClip upsample2(const AudioClip& clip);

template <typename T>
void decimate2(std::span<const T> in, std::span<T> out);
template <typename T>
void decimate2_adjoint(std::span<const T> grad_out, std::span<T> grad_in);
template <typename T>
void interpolate2(std::span<const T> in, std::span<T> out);
template <typename T>
void interpolate2_adjoint(std::span<const T> grad_out, std::span<T> grad_in);

struct BandPassSpec {
  double low_cut = 100.0;
  double high_cut = 7000.0;
  int order = 4;

  void validate(int sample_rate) const;
};

enum class FilterMode {
  Causal,
  // Forward-backward application; zero phase, squared magnitude response.
  ZeroPhase,
};

/// Butterworth band-pass as cascaded second-order sections.
AudioClip bandpass(const AudioClip& clip, const BandPassSpec& spec, FilterMode mode = FilterMode::Causal);

/// Population std of the window ending at each sample (shrinking prefix windows).
std::vector<double> rolling_std(std::span<const double> x, std::size_t window);
std::vector<double> rolling_std(const AudioClip& clip, double window_seconds = 0.1);

/// Value returned by snr_db when the estimate equals the reference.
inline constexpr double kInfiniteSnr = std::numeric_limits<double>::infinity();

/// 10 log10(sum ref^2 / sum (ref - est)^2).
double snr_db(std::span<const double> reference, std::span<const double> estimate);
double snr_db(const AudioClip& reference, const AudioClip& estimate);

}  // namespace restorer::dsp
