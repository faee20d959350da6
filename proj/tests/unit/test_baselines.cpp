#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "restorer/baselines.hpp"
#include "restorer/random.hpp"

using namespace restorer;
using namespace restorer::baselines;

namespace {

AudioClip gaussian_noise(std::size_t n, double sigma, std::uint64_t seed, int rate = 16000) {
  Rng rng(seed);
  AudioClip c;
  c.sample_rate = rate;
  c.samples.resize(n);
  for (auto& v : c.samples) v = sigma * rng.normal();
  return c;
}

double variance(const std::vector<double>& x) {
  double m = 0.0;
  for (double v : x) m += v;
  m /= static_cast<double>(x.size());
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size());
}

// Tone gated on between 0.5 s and 2.5 s of a 3 s clip, so the clip has
// noise-only frames for the whole-clip noise estimate.
AudioClip gated_tone(int rate) {
  AudioClip c;
  c.sample_rate = rate;
  c.samples.resize(static_cast<std::size_t>(3 * rate));
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double t = static_cast<double>(i) / rate;
    if (t >= 0.5 && t < 2.5) c.samples[i] = 0.5 * std::sin(2.0 * std::numbers::pi * 1000.0 * t);
  }
  return c;
}

}  // namespace

TEST(LogMmse, ZeroInputGivesZeroOutput) {
  AudioClip zero(std::vector<double>(8000, 0.0), 16000);
  const auto out = logmmse_denoise(zero);
  ASSERT_EQ(out.size(), zero.size());
  for (double v : out.samples) EXPECT_EQ(v, 0.0);
}

TEST(LogMmse, ImprovesToneInWhiteNoise) {
  const int rate = 16000;
  const auto clean = gated_tone(rate);
  double e_signal = 0.0;
  for (double v : clean.samples) e_signal += v * v;
  // sigma chosen so the clip-level SNR is 5 dB.
  const double sigma = std::sqrt(e_signal / clean.size() / std::pow(10.0, 0.5));
  auto noise = gaussian_noise(clean.size(), sigma, 3, rate);
  AudioClip noisy = clean;
  for (std::size_t i = 0; i < noisy.size(); ++i) noisy.samples[i] += noise.samples[i];
  EXPECT_NEAR(dsp::snr_db(clean, noisy), 5.0, 0.2);
  const auto out = logmmse_denoise(noisy);
  EXPECT_GT(dsp::snr_db(clean, out), dsp::snr_db(clean, noisy));
}

TEST(LogMmse, GainsRespectClamps) {
  LogMmseConfig cfg;
  cfg.gain_floor = 0.05;
  auto noisy = gaussian_noise(16000, 0.1, 4);
  const auto tone = gated_tone(16000);
  for (std::size_t i = 0; i < noisy.size(); ++i) noisy.samples[i] += tone.samples[i];
  const auto spec = dsp::stft(noisy, cfg.stft);
  const auto gains = logmmse_gains(spec, estimate_noise_psd(spec, cfg.noise_quantile), cfg);
  ASSERT_EQ(gains.size(), spec.values.size());
  double lo = 1.0, hi = 0.0;
  for (double g : gains) {
    lo = std::min(lo, g);
    hi = std::max(hi, g);
  }
  EXPECT_GE(lo, cfg.gain_floor);
  EXPECT_LE(hi, 1.0 + 1e-6);
  EXPECT_LT(lo, 0.5);
}

TEST(LogMmse, ZeroNoisePsdIsIdentity) {
  LogMmseConfig cfg;
  cfg.noise_psd = std::vector<double>(static_cast<std::size_t>(cfg.stft.bins()), 0.0);
  const auto x = gaussian_noise(5000, 0.3, 5);
  const auto out = logmmse_denoise(x, cfg);
  ASSERT_EQ(out.size(), x.size());
  for (std::size_t i = 0; i < x.size(); ++i) ASSERT_NEAR(out.samples[i], x.samples[i], 1e-6);
}

TEST(LogMmse, NoisePsdUsesLowestEnergyFrames) {
  dsp::Spectrogram spec;
  spec.frames = 10;
  spec.bins = 2;
  spec.values.resize(20);
  for (int t = 0; t < 10; ++t) {
    spec.at(t, 0) = {static_cast<double>(t + 1), 0.0};
    spec.at(t, 1) = {0.0, 1.0};
  }
  const auto psd = estimate_noise_psd(spec, 0.2);  // frames 0 and 1
  EXPECT_DOUBLE_EQ(psd[0], (1.0 + 4.0) / 2.0);
  EXPECT_DOUBLE_EQ(psd[1], 1.0);
}

TEST(LogMmse, ErrorsAndShapeContract) {
  EXPECT_THROW(logmmse_denoise(AudioClip(std::vector<double>(500, 0.1), 16000)), InputTooShort);
  LogMmseConfig bad;
  bad.noise_quantile = 1.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = {};
  bad.noise_psd = std::vector<double>(3, 0.0);
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  const auto x = gaussian_noise(4321, 1.0, 6);
  const auto out = logmmse_denoise(x);
  ASSERT_EQ(out.size(), x.size());
  for (double v : out.samples) ASSERT_TRUE(std::isfinite(v));
}

TEST(Wiener, ConstantInputUnchanged) {
  AudioClip c(std::vector<double>(50, 0.37), 8000);
  const auto out = wiener_denoise(c);
  for (double v : out.samples) EXPECT_DOUBLE_EQ(v, 0.37);
}

TEST(Wiener, MatchesHandEvaluation) {
  const std::vector<double> x{1.0, 3.0, 2.0, 6.0, 4.0};
  const double nu = 1.0;
  // Windows: {0,1}, {0..2}, {1..3}, {2..4}, {3,4}.
  const std::vector<std::vector<double>> windows{{1, 3}, {1, 3, 2}, {3, 2, 6}, {2, 6, 4}, {6, 4}};
  std::vector<double> expected;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double mu = 0.0;
    for (double v : windows[i]) mu += v;
    mu /= static_cast<double>(windows[i].size());
    double var = 0.0;
    for (double v : windows[i]) var += (v - mu) * (v - mu);
    var /= static_cast<double>(windows[i].size());
    expected.push_back(mu + std::max(var - nu, 0.0) / std::max(var, nu) * (x[i] - mu));
  }
  WienerConfig cfg;
  cfg.noise_power = nu;
  const auto out = wiener_denoise(AudioClip(x, 8000), cfg);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(out.samples[i], expected[i], 1e-15) << i;
}

TEST(Wiener, ReducesWhiteNoiseVariance) {
  const auto x = gaussian_noise(20000, 0.5, 7);
  const auto out = wiener_denoise(x);
  EXPECT_LT(variance(out.samples), variance(x.samples));
  EXPECT_EQ(out.size(), x.size());
}

TEST(Wiener, UnitWindowWithoutNoiseIsIdentity) {
  const auto x = gaussian_noise(100, 1.0, 8);
  WienerConfig cfg;
  cfg.window_len = 1;
  cfg.noise_power = 0.0;
  EXPECT_EQ(wiener_denoise(x, cfg).samples, x.samples);
  cfg.window_len = 4;
  EXPECT_THROW(wiener_denoise(x, cfg), std::invalid_argument);
}
