#pragma once

#include <vector>

#include "restorer/audio.hpp"
#include "restorer/random.hpp"

namespace restorer::testing {

struct Gap {
  double start_s;
  double duration_s;
};

// Loud uniform noise (amplitude `loud`) with quiet low-level hiss in the gaps.
inline AudioClip loud_with_gaps(double seconds, int rate, const std::vector<Gap>& gaps, std::uint64_t seed,
                                double loud = 1.0, double quiet = 0.001) {
  Rng rng(seed);
  AudioClip c;
  c.sample_rate = rate;
  c.samples.resize(static_cast<std::size_t>(seconds * rate));
  for (auto& v : c.samples) v = rng.uniform(-loud, loud);
  for (const auto& g : gaps) {
    const auto b = static_cast<std::size_t>(g.start_s * rate);
    const auto e = std::min(c.samples.size(), static_cast<std::size_t>((g.start_s + g.duration_s) * rate));
    for (std::size_t i = b; i < e; ++i) c.samples[i] = rng.uniform(-quiet, quiet);
  }
  return c;
}

// Alternating +a/-a: the rolling std is identical everywhere past the first window.
inline AudioClip constant_amplitude(double seconds, int rate, double a = 0.5) {
  AudioClip c;
  c.sample_rate = rate;
  c.samples.resize(static_cast<std::size_t>(seconds * rate));
  for (std::size_t i = 0; i < c.samples.size(); ++i) c.samples[i] = (i % 2 == 0) ? a : -a;
  return c;
}

}  // namespace restorer::testing
