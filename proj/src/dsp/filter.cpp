#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <fmt/format.h>

#include "restorer/dsp.hpp"

namespace restorer::dsp {

namespace {

struct Biquad {
  double b0, b1, b2, a1, a2;  // normalized by a0
};

enum class Edge { LowPass, HighPass };

void append_butterworth(std::vector<Biquad>& out, Edge edge, double cutoff, int order, int rate) {
  const double w0 = 2.0 * std::numbers::pi * cutoff / rate;
  const double cw = std::cos(w0);
  const double sw = std::sin(w0);
  for (int k = 0; k < order / 2; ++k) {
    const double q = 1.0 / (2.0 * std::sin(std::numbers::pi * (2 * k + 1) / (2.0 * order)));
    const double alpha = sw / (2.0 * q);
    const double a0 = 1.0 + alpha;
    Biquad s{};
    if (edge == Edge::LowPass) {
      s.b0 = (1.0 - cw) / 2.0 / a0;
      s.b1 = (1.0 - cw) / a0;
    } else {
      s.b0 = (1.0 + cw) / 2.0 / a0;
      s.b1 = -(1.0 + cw) / a0;
    }
    s.b2 = s.b0;
    s.a1 = -2.0 * cw / a0;
    s.a2 = (1.0 - alpha) / a0;
    out.push_back(s);
  }
  if (order % 2 == 1) {
    const double k = std::tan(w0 / 2.0);
    Biquad s{};
    s.a1 = (k - 1.0) / (k + 1.0);
    if (edge == Edge::LowPass) {
      s.b0 = k / (1.0 + k);
      s.b1 = s.b0;
    } else {
      s.b0 = 1.0 / (1.0 + k);
      s.b1 = -s.b0;
    }
    out.push_back(s);
  }
}

void run_sections(const std::vector<Biquad>& sections, std::vector<double>& x) {
  for (const auto& s : sections) {
    double z1 = 0.0, z2 = 0.0;
    for (double& v : x) {
      const double in = v;
      const double y = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * y + z2;
      z2 = s.b2 * in - s.a2 * y;
      v = y;
    }
  }
}

}  // namespace

void BandPassSpec::validate(int sample_rate) const {
  if (!(low_cut > 0.0 && low_cut < high_cut && high_cut < sample_rate / 2.0))
    throw std::invalid_argument(fmt::format(
        "BandPassSpec: need 0 < low_cut ({}) < high_cut ({}) < sample_rate/2 ({})", low_cut, high_cut,
        sample_rate / 2.0));
  if (order < 1) throw std::invalid_argument("BandPassSpec: order must be >= 1");
}

AudioClip bandpass(const AudioClip& clip, const BandPassSpec& spec, FilterMode mode) {
  spec.validate(clip.sample_rate);
  std::vector<Biquad> sections;
  append_butterworth(sections, Edge::HighPass, spec.low_cut, spec.order, clip.sample_rate);
  append_butterworth(sections, Edge::LowPass, spec.high_cut, spec.order, clip.sample_rate);
  AudioClip out = clip;
  run_sections(sections, out.samples);
  if (mode == FilterMode::ZeroPhase) {
    std::reverse(out.samples.begin(), out.samples.end());
    run_sections(sections, out.samples);
    std::reverse(out.samples.begin(), out.samples.end());
  }
  return out;
}

}  // namespace restorer::dsp
