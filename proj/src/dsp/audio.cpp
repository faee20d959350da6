#include "restorer/audio.hpp"

#include <cmath>

namespace restorer {

void AudioClip::validate() const {
  if (sample_rate <= 0) throw std::invalid_argument("AudioClip: sample_rate must be positive");
  for (double v : samples) {
    if (!std::isfinite(v)) throw std::invalid_argument("AudioClip: non-finite sample");
  }
}

double energy(const std::vector<double>& x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

double rms(const std::vector<double>& x) {
  if (x.empty()) return 0.0;
  return std::sqrt(energy(x) / static_cast<double>(x.size()));
}

}  // namespace restorer
