#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace restorer {

/// Thrown when a signal is too short for the requested transform.
class InputTooShort : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Mono waveform with its sample rate.
struct AudioClip {
  std::vector<double> samples;
  int sample_rate = 44100;

  AudioClip() = default;
  AudioClip(std::vector<double> s, int rate) : samples(std::move(s)), sample_rate(rate) {}

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate; }

  /// Throws std::invalid_argument on a non-positive rate or non-finite samples.
  void validate() const;
};

double energy(const std::vector<double>& x);
double rms(const std::vector<double>& x);

}  // namespace restorer
