#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "restorer/dsp.hpp"
#include "restorer/noise.hpp"
#include "restorer/wav.hpp"

namespace restorer::noise {

void NoiseExtractionConfig::validate() const {
  if (!(quantile > 0.0 && quantile < 1.0))
    throw std::invalid_argument(fmt::format("noise extraction: quantile must be in (0, 1), got {}", quantile));
  if (!(min_duration > 0.0)) throw std::invalid_argument("noise extraction: min_duration must be positive");
  if (!(std_window > 0.0)) throw std::invalid_argument("noise extraction: std_window must be positive");
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile: no values");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("quantile: q outside [0, 1]");
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  std::nth_element(values.begin(), values.begin() + lo, values.end());
  const double a = values[lo];
  if (lo + 1 >= values.size()) return a;
  const double b = *std::min_element(values.begin() + lo + 1, values.end());
  return a + (pos - static_cast<double>(lo)) * (b - a);
}

namespace {

std::size_t window_samples(const AudioClip& clip, const NoiseExtractionConfig& cfg) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.std_window * clip.sample_rate)));
}

}  // namespace

double quiet_threshold(const AudioClip& clip, const NoiseExtractionConfig& cfg) {
  cfg.validate();
  return quantile(dsp::rolling_std(clip.samples, window_samples(clip, cfg)), cfg.quantile);
}

std::vector<NoiseSegment> find_quiet_segments(const AudioClip& clip, const NoiseExtractionConfig& cfg,
                                              const std::string& source_id) {
  cfg.validate();
  std::vector<NoiseSegment> out;
  if (clip.empty()) return out;
  const std::size_t window = window_samples(clip, cfg);
  if (clip.size() < window)
    throw InputTooShort(fmt::format("find_quiet_segments: {} samples shorter than the {}-sample std window",
                                    clip.size(), window));
  const auto rs = dsp::rolling_std(clip.samples, window);
  const double tau = quantile(rs, cfg.quantile);
  const auto min_len = static_cast<std::size_t>(std::ceil(cfg.min_duration * clip.sample_rate - 1e-9));

  std::size_t i = 0;
  std::size_t taken = 0;  // first sample not yet in a segment
  while (i < rs.size()) {
    if (!(rs[i] < tau)) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < rs.size() && rs[j + 1] < tau) ++j;
    // Trimming to `taken` keeps segments disjoint; windows inside still end in the run.
    const std::size_t begin = std::max(i + 1 >= window ? i + 1 - window : 0, taken);
    const std::size_t len = j + 1 - begin;
    if (len >= min_len) {
      taken = j + 1;
      NoiseSegment seg;
      seg.source_id = source_id;
      seg.id = fmt::format("{}{}{:04d}", source_id, source_id.empty() ? "" : "_", out.size());
      seg.audio.sample_rate = clip.sample_rate;
      seg.audio.samples.assign(clip.samples.begin() + begin, clip.samples.begin() + j + 1);
      seg.start_s = static_cast<double>(begin) / clip.sample_rate;
      seg.duration_s = static_cast<double>(len) / clip.sample_rate;
      out.push_back(std::move(seg));
    }
    i = j + 1;
  }
  return out;
}

NoiseBank scan_corpus(const std::vector<std::filesystem::path>& paths, const NoiseExtractionConfig& cfg,
                      const std::optional<std::filesystem::path>& out_dir) {
  cfg.validate();
  NoiseBank bank;
  std::ofstream manifest;
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    manifest.open(*out_dir / "manifest.jsonl", std::ios::trunc);
    if (!manifest) throw std::runtime_error("cannot write " + (*out_dir / "manifest.jsonl").string());
  }
  for (std::size_t f = 0; f < paths.size(); ++f) {
    const auto& path = paths[f];
    std::vector<NoiseSegment> found;
    try {
      const auto clip = read_wav(path);
      found = find_quiet_segments(clip, cfg, fmt::format("{:03d}_{}", f, path.stem().string()));
    } catch (const std::exception& e) {
      spdlog::warn("skipping {}: {}", path.string(), e.what());
      bank.skipped.push_back({path.string(), e.what()});
      if (out_dir)
        manifest << nlohmann::json{{"source", path.string()}, {"skipped", true}, {"reason", e.what()}}.dump() << '\n';
      continue;
    }
    spdlog::debug("{}: {} quiet segments", path.string(), found.size());
    for (auto& seg : found) {
      seg.source_id = path.string();
      if (out_dir) {
        const auto file = seg.id + ".wav";
        write_wav(*out_dir / file, seg.audio, WavEncoding::Float32);
        manifest << nlohmann::json{{"id", seg.id},
                                   {"source", seg.source_id},
                                   {"start_s", seg.start_s},
                                   {"duration_s", seg.duration_s},
                                   {"rms", rms(seg.audio.samples)},
                                   {"path", file}}
                        .dump()
                 << '\n';
      }
      bank.segments.push_back(std::move(seg));
    }
  }
  return bank;
}

NoiseBank load_noise_bank(const std::filesystem::path& location) {
  const auto manifest_path =
      std::filesystem::is_directory(location) ? location / "manifest.jsonl" : location;
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("cannot read noise bank manifest " + manifest_path.string());
  NoiseBank bank;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    if (j.value("skipped", false)) {
      bank.skipped.push_back({j.at("source").get<std::string>(), j.value("reason", "")});
      continue;
    }
    NoiseSegment seg;
    seg.id = j.at("id").get<std::string>();
    seg.source_id = j.at("source").get<std::string>();
    seg.start_s = j.at("start_s").get<double>();
    seg.duration_s = j.at("duration_s").get<double>();
    seg.audio = read_wav(manifest_path.parent_path() / j.at("path").get<std::string>());
    bank.segments.push_back(std::move(seg));
  }
  return bank;
}

}  // namespace restorer::noise
