#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "restorer/baselines.hpp"

namespace restorer::baselines {

namespace {

constexpr double kMinPriorSnr = 0.0031622776601683794;  // -25 dB

// E1(v) = -Ei(-v) for v > 0.
double exp_integral_e1(double v) { return -std::expint(-v); }

}  // namespace

void LogMmseConfig::validate() const {
  stft.validate();
  if (!(noise_quantile > 0.0 && noise_quantile < 1.0))
    throw std::invalid_argument("logmmse: noise_quantile must lie in (0, 1)");
  if (!(dd_alpha >= 0.0 && dd_alpha < 1.0)) throw std::invalid_argument("logmmse: dd_alpha must lie in [0, 1)");
  if (!(gain_floor > 0.0)) throw std::invalid_argument("logmmse: gain_floor must be positive");
  if (noise_psd && static_cast<int>(noise_psd->size()) != stft.bins())
    throw std::invalid_argument(
        fmt::format("logmmse: noise_psd has {} bins, STFT has {}", noise_psd->size(), stft.bins()));
}

std::vector<double> estimate_noise_psd(const dsp::Spectrogram& spec, double quantile) {
  std::vector<double> energy(static_cast<std::size_t>(spec.frames), 0.0);
  for (int t = 0; t < spec.frames; ++t)
    for (int f = 0; f < spec.bins; ++f) energy[t] += std::norm(spec.at(t, f));
  std::vector<int> order(energy.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return energy[a] < energy[b]; });
  const auto count = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(quantile * spec.frames)));
  std::vector<double> psd(static_cast<std::size_t>(spec.bins), 0.0);
  for (std::size_t i = 0; i < count; ++i)
    for (int f = 0; f < spec.bins; ++f) psd[f] += std::norm(spec.at(order[i], f));
  for (double& p : psd) p /= static_cast<double>(count);
  return psd;
}

std::vector<double> logmmse_gains(const dsp::Spectrogram& spec, const std::vector<double>& noise_psd,
                                  const LogMmseConfig& cfg) {
  std::vector<double> gains(spec.values.size(), 1.0);
  std::vector<double> prev_clean(static_cast<std::size_t>(spec.bins), 0.0);  // |G X|^2 / noise of the previous frame
  for (int t = 0; t < spec.frames; ++t)
    for (int f = 0; f < spec.bins; ++f) {
      const double noise = noise_psd[f];
      double g = 1.0;
      if (noise > 0.0) {
        const double gamma = std::min(std::norm(spec.at(t, f)) / noise, 1e6);
        const double ml = std::max(gamma - 1.0, 0.0);
        double xi = t == 0 ? cfg.dd_alpha + (1.0 - cfg.dd_alpha) * ml
                           : cfg.dd_alpha * prev_clean[f] + (1.0 - cfg.dd_alpha) * ml;
        xi = std::max(xi, kMinPriorSnr);
        const double v = xi / (1.0 + xi) * gamma;
        g = v > 0.0 ? xi / (1.0 + xi) * std::exp(0.5 * exp_integral_e1(v)) : cfg.gain_floor;
        g = std::clamp(g, cfg.gain_floor, 1.0);
        prev_clean[f] = g * g * gamma;
      }
      gains[static_cast<std::size_t>(t) * spec.bins + f] = g;
    }
  return gains;
}

AudioClip logmmse_denoise(const AudioClip& clip, const LogMmseConfig& cfg) {
  cfg.validate();
  if (clip.size() < static_cast<std::size_t>(cfg.stft.window_size))
    throw InputTooShort(fmt::format("logmmse: clip of {} samples is shorter than the {}-sample window", clip.size(),
                                    cfg.stft.window_size));
  auto spec = dsp::stft(clip, cfg.stft);
  const auto psd = cfg.noise_psd ? *cfg.noise_psd : estimate_noise_psd(spec, cfg.noise_quantile);
  const auto gains = logmmse_gains(spec, psd, cfg);
  for (std::size_t i = 0; i < spec.values.size(); ++i) spec.values[i] *= gains[i];
  return dsp::istft(spec);
}

}  // namespace restorer::baselines
