#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "restorer/dsp.hpp"

namespace restorer::dsp {

std::vector<double> rolling_std(std::span<const double> x, std::size_t window) {
  if (window < 1) throw std::invalid_argument("rolling_std: window must be at least one sample");
  std::vector<double> out(x.size());
  // Running sums of x - shift, where shift is refreshed once per window so
  // cancellation error cannot accumulate across loud-to-quiet transitions.
  double shift = 0.0, s1 = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t begin = i + 1 >= window ? i + 1 - window : 0;
    if (i % window == 0) {
      shift = 0.0;
      for (std::size_t j = begin; j <= i; ++j) shift += x[j];
      shift /= static_cast<double>(i + 1 - begin);
      s1 = s2 = 0.0;
      for (std::size_t j = begin; j <= i; ++j) {
        s1 += x[j] - shift;
        s2 += (x[j] - shift) * (x[j] - shift);
      }
    } else {
      s1 += x[i] - shift;
      s2 += (x[i] - shift) * (x[i] - shift);
      if (i >= window) {
        const double old = x[i - window] - shift;
        s1 -= old;
        s2 -= old * old;
      }
    }
    const double n = static_cast<double>(i + 1 - begin);
    const double mean = s1 / n;
    out[i] = std::sqrt(std::max(0.0, s2 / n - mean * mean));
  }
  return out;
}

std::vector<double> rolling_std(const AudioClip& clip, double window_seconds) {
  const auto window = static_cast<std::size_t>(std::llround(window_seconds * clip.sample_rate));
  return rolling_std(clip.samples, std::max<std::size_t>(window, 1));
}

double snr_db(std::span<const double> reference, std::span<const double> estimate) {
  if (reference.size() != estimate.size())
    throw std::invalid_argument(
        fmt::format("snr_db: length mismatch ({} vs {})", reference.size(), estimate.size()));
  double signal = 0.0, noise = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    signal += reference[i] * reference[i];
    const double e = reference[i] - estimate[i];
    noise += e * e;
  }
  if (signal == 0.0) throw std::invalid_argument("snr_db: reference is all zeros");
  if (noise == 0.0) return kInfiniteSnr;
  return 10.0 * std::log10(signal / noise);
}

double snr_db(const AudioClip& reference, const AudioClip& estimate) {
  return snr_db(std::span<const double>(reference.samples), std::span<const double>(estimate.samples));
}

}  // namespace restorer::dsp
