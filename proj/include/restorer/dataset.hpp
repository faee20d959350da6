#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "restorer/audio.hpp"
#include "restorer/noise.hpp"

namespace restorer::data {

struct PairSynthesisConfig {
  std::array<double, 2> low_cut_range{50.0, 150.0};     // Hz
  std::array<double, 2> high_cut_range{5000.0, 10000.0};  // Hz
  std::array<double, 2> snr_range{10.0, 30.0};          // dB
  double clip_seconds = 5.0;
  int filter_order = 4;
  double min_level_dbfs = -60.0;  // quieter clean windows are discarded
  double test_fraction = 0.2;     // share of source recordings held out
  std::uint64_t seed = 0;
  noise::NoiseExtensionConfig extension;

  void validate() const;
};

struct TrainingPair {
  AudioClip clean;     // target, not band-limited
  AudioClip filtered;  // band-passed clean, the signal part of `noisy`
  AudioClip noisy;
  double mix_snr = 0.0;
  double low_cut = 0.0;
  double high_cut = 0.0;
  std::string noise_id;
};

// noisy = bandpass(clean) + g * extend_noise(segment), g solved so that
// snr_db(bandpass(clean), noisy) equals the sampled SNR. All randomness comes
// from `seed`.
TrainingPair make_pair(const AudioClip& clean, const std::vector<noise::NoiseSegment>& bank,
                       const PairSynthesisConfig& cfg, std::uint64_t seed);

struct PairRecord {
  std::int64_t pair_id = 0;
  std::string clean_path;  // relative to the dataset root
  std::string noisy_path;
  double mix_snr = 0.0;
  double low_cut = 0.0;
  double high_cut = 0.0;
  std::string noise_id;
  std::string source;
  double source_start_s = 0.0;
  std::string split;  // "train" or "test"
};

struct Dataset {
  std::filesystem::path root;
  std::vector<PairRecord> pairs;

  std::vector<PairRecord> split(const std::string& name) const;
  AudioClip load_clean(const PairRecord& r) const;
  AudioClip load_noisy(const PairRecord& r) const;
};

// Cuts non-overlapping clip_seconds windows from the clean recordings
// (round-robin across files), synthesizes one pair per window and writes
// {root}/clean, {root}/noisy, manifest.jsonl, train.jsonl and test.jsonl.
// Throws if fewer than n_pairs usable windows exist.
Dataset build_dataset(const std::vector<std::filesystem::path>& clean_files, const noise::NoiseBank& bank,
                      const PairSynthesisConfig& cfg, std::size_t n_pairs, const std::filesystem::path& root);

/// Reads {root}/manifest.jsonl.
Dataset load_dataset(const std::filesystem::path& root);

/// Sorted WAV files of a directory (non-recursive).
std::vector<std::filesystem::path> list_wavs(const std::filesystem::path& dir);

struct SnrBuckets {
  std::vector<PairRecord> low;     // highest SNRs
  std::vector<PairRecord> medium;
  std::vector<PairRecord> high;    // lowest SNRs
};

/// Tertiles by mix_snr; the remainder goes to the high-noise bucket first, then medium.
SnrBuckets bucket_by_snr(std::vector<PairRecord> pairs);

}  // namespace restorer::data
