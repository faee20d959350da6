#include <algorithm>

#include "restorer/baselines.hpp"

namespace restorer::baselines {

void WienerConfig::validate() const {
  if (window_len < 1 || window_len % 2 == 0) throw std::invalid_argument("wiener: window_len must be odd and >= 1");
  if (noise_power && !(*noise_power >= 0.0)) throw std::invalid_argument("wiener: noise_power must be nonnegative");
}

AudioClip wiener_denoise(const AudioClip& clip, const WienerConfig& cfg) {
  cfg.validate();
  const auto n = clip.size();
  const auto half = static_cast<std::size_t>(cfg.window_len / 2);
  std::vector<double> mean(n), var(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t b = i >= half ? i - half : 0, e = std::min(n, i + half + 1);
    double s = 0.0;
    for (std::size_t j = b; j < e; ++j) s += clip.samples[j];
    const double mu = s / static_cast<double>(e - b);
    double v = 0.0;
    for (std::size_t j = b; j < e; ++j) v += (clip.samples[j] - mu) * (clip.samples[j] - mu);
    mean[i] = mu;
    var[i] = v / static_cast<double>(e - b);
  }
  double nu = 0.0;
  if (cfg.noise_power) {
    nu = *cfg.noise_power;
  } else if (n > 0) {
    for (double v : var) nu += v;
    nu /= static_cast<double>(n);
  }
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double denom = std::max(var[i], nu);
    const double g = denom > 0.0 ? std::max(var[i] - nu, 0.0) / denom : 0.0;
    out.samples[i] = mean[i] + g * (clip.samples[i] - mean[i]);
  }
  return out;
}

}  // namespace restorer::baselines
