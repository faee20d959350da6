#include <cmath>
#include <complex>
#include <stdexcept>

#include <fmt/format.h>

#include "restorer/dsp.hpp"
#include "restorer/noise.hpp"
#include "restorer/random.hpp"

namespace restorer::noise {

void NoiseExtensionConfig::validate() const {
  if (!(overlap_fraction >= 0.0 && overlap_fraction < 1.0))
    throw std::invalid_argument(fmt::format("noise extension: overlap_fraction must be in [0, 1), got {}",
                                            overlap_fraction));
  if (!(phase_noise_variance >= 0.0))
    throw std::invalid_argument("noise extension: phase_noise_variance must be non-negative");
}

namespace {

int phase_window(std::size_t length) {
  int w = 256;
  while (w > 1 && static_cast<std::size_t>(w) > length) w /= 2;
  return w;
}

std::vector<double> perturb_phase(const std::vector<double>& x, double variance, Rng& rng) {
  const int window = phase_window(x.size());
  if (window < 8) return x;
  dsp::StftConfig cfg;
  cfg.window_size = window;
  cfg.hop_size = window / 4;
  auto spec = dsp::stft(AudioClip(x, 1), cfg);
  const double sd = std::sqrt(variance);
  for (auto& v : spec.values) v *= std::polar(1.0, rng.normal(0.0, sd));
  return dsp::istft(spec).samples;
}

}  // namespace

AudioClip extend_noise(const NoiseSegment& seg, std::size_t target_len, const NoiseExtensionConfig& cfg) {
  cfg.validate();
  const auto& src = seg.audio.samples;
  if (src.empty()) throw std::invalid_argument("extend_noise: empty segment");
  if (target_len < 1) throw std::invalid_argument("extend_noise: target length must be at least 1");

  const std::size_t n = src.size();
  std::size_t overlap = static_cast<std::size_t>(std::llround(cfg.overlap_fraction * static_cast<double>(n)));
  overlap = std::min(overlap, n - 1);
  const std::size_t stride = n - overlap;

  AudioClip out;
  out.sample_rate = seg.audio.sample_rate;
  out.samples.assign(target_len, 0.0);
  for (std::size_t r = 0, offset = 0; offset < target_len; ++r, offset += stride) {
    Rng rng(derive_seed(cfg.seed, r));
    std::vector<double> replica = cfg.phase_noise_variance > 0.0 ? perturb_phase(src, cfg.phase_noise_variance, rng)
                                                                 : src;
    if (cfg.shift) std::rotate(replica.begin(), replica.begin() + rng.below(n), replica.end());
    const bool fade_in = r > 0;
    const bool fade_out = offset + n < target_len;
    for (std::size_t t = 0; t < n && offset + t < target_len; ++t) {
      double gain = 1.0;
      if (fade_in && t < overlap) gain = static_cast<double>(t + 1) / static_cast<double>(overlap + 1);
      if (fade_out && t >= stride) gain = 1.0 - static_cast<double>(t - stride + 1) / static_cast<double>(overlap + 1);
      out.samples[offset + t] += gain * replica[t];
    }
    if (!fade_out) break;
  }
  return out;
}

}  // namespace restorer::noise
