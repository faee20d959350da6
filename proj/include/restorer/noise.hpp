#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "restorer/audio.hpp"

namespace restorer::noise {

struct NoiseExtractionConfig {
  double quantile = 0.005;
  double min_duration = 0.1;  // seconds
  double std_window = 0.1;    // seconds

  void validate() const;
};

struct NoiseSegment {
  std::string id;
  std::string source_id;
  AudioClip audio;
  double start_s = 0.0;
  double duration_s = 0.0;
};

struct NoiseExtensionConfig {
  double overlap_fraction = 0.2;
  double phase_noise_variance = 0.1;  // rad^2
  bool shift = true;
  std::uint64_t seed = 0;

  void validate() const;
};

/// q-quantile with linear interpolation between order statistics.
double quantile(std::vector<double> values, double q);

/// Threshold below which a rolling std counts as quiet for this clip.
double quiet_threshold(const AudioClip& clip, const NoiseExtractionConfig& cfg);

// Maximal runs where the rolling std is strictly below the per-recording
// threshold. A run of window end points [i, j] covers samples
// [i - window + 1, j], so every full window inside a segment is quiet. A span
// that overlaps the previous segment starts where that one ended.
std::vector<NoiseSegment> find_quiet_segments(const AudioClip& clip, const NoiseExtractionConfig& cfg,
                                              const std::string& source_id = "");

/// Tiles `seg` to exactly `target_len` samples with crossfaded overlap-add.
/// Each replica gets its own STFT phase perturbation and circular shift.
AudioClip extend_noise(const NoiseSegment& seg, std::size_t target_len, const NoiseExtensionConfig& cfg);

struct SkippedFile {
  std::string source;
  std::string reason;
};

struct NoiseBank {
  std::vector<NoiseSegment> segments;
  std::vector<SkippedFile> skipped;
};

// Mines every file in order. With an output directory, writes one float32
// WAV per segment plus manifest.jsonl ({id, source, start_s, duration_s, rms,
// path}; unreadable inputs get {source, skipped, reason}).
NoiseBank scan_corpus(const std::vector<std::filesystem::path>& paths, const NoiseExtractionConfig& cfg,
                      const std::optional<std::filesystem::path>& out_dir = std::nullopt);

/// Loads a bank written by scan_corpus (directory or manifest path).
NoiseBank load_noise_bank(const std::filesystem::path& location);

}  // namespace restorer::noise
