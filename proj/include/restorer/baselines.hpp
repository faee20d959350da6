#pragma once

#include <optional>
#include <vector>

#include "restorer/dsp.hpp"

namespace restorer::baselines {

struct LogMmseConfig {
  dsp::StftConfig stft{1024, 256};
  double noise_quantile = 0.1;  // share of lowest-energy frames averaged into the noise PSD
  double dd_alpha = 0.98;       // decision-directed smoothing
  double gain_floor = 0.01;
  // Per-bin noise PSD to use instead of the estimate.
  std::optional<std::vector<double>> noise_psd;

  void validate() const;
};

/// Mean periodogram of the lowest-energy frames of the whole clip.
std::vector<double> estimate_noise_psd(const dsp::Spectrogram& spec, double quantile);

/// Log-spectral amplitude MMSE gains (frames x bins), clamped to [gain_floor, 1].
std::vector<double> logmmse_gains(const dsp::Spectrogram& spec, const std::vector<double>& noise_psd,
                                  const LogMmseConfig& cfg);

/// Throws InputTooShort if the clip is shorter than one window.
AudioClip logmmse_denoise(const AudioClip& clip, const LogMmseConfig& cfg = {});

struct WienerConfig {
  int window_len = 3;  // odd
  std::optional<double> noise_power;

  void validate() const;
};

// out[i] = mu + max(var - nu, 0) / max(var, nu) * (x - mu) with local mean and
// variance over window_len samples; windows shrink at the clip edges so a
// constant signal passes unchanged.
AudioClip wiener_denoise(const AudioClip& clip, const WienerConfig& cfg = {});

}  // namespace restorer::baselines
