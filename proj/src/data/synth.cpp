#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "restorer/dataset.hpp"
#include "restorer/dsp.hpp"
#include "restorer/random.hpp"
#include "restorer/wav.hpp"

namespace restorer::data {

namespace {

void check_range(const std::array<double, 2>& r, const char* name) {
  if (!(r[0] <= r[1]) || !std::isfinite(r[0]) || !std::isfinite(r[1]))
    throw std::invalid_argument(fmt::format("pair synthesis: {} range [{}, {}] is not ordered", name, r[0], r[1]));
}

std::size_t clip_samples(const PairSynthesisConfig& cfg, int rate) {
  return static_cast<std::size_t>(std::llround(cfg.clip_seconds * rate));
}

}  // namespace

void PairSynthesisConfig::validate() const {
  check_range(low_cut_range, "low_cut");
  check_range(high_cut_range, "high_cut");
  check_range(snr_range, "snr");
  if (!(low_cut_range[0] > 0.0)) throw std::invalid_argument("pair synthesis: low cut must be positive");
  if (!(low_cut_range[1] < high_cut_range[0]))
    throw std::invalid_argument("pair synthesis: low and high cut ranges overlap");
  if (!(clip_seconds > 0.0)) throw std::invalid_argument("pair synthesis: clip_seconds must be positive");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0))
    throw std::invalid_argument("pair synthesis: test_fraction must be in [0, 1)");
  extension.validate();
}

TrainingPair make_pair(const AudioClip& clean, const std::vector<noise::NoiseSegment>& bank,
                       const PairSynthesisConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (bank.empty()) throw std::invalid_argument("make_pair: noise bank is empty");
  if (clean.size() != clip_samples(cfg, clean.sample_rate))
    throw std::invalid_argument(fmt::format("make_pair: clean clip has {} samples, expected {}", clean.size(),
                                            clip_samples(cfg, clean.sample_rate)));
  if (energy(clean.samples) == 0.0) throw std::invalid_argument("make_pair: clean clip is silent");

  Rng rng(seed);
  TrainingPair pair;
  pair.low_cut = rng.uniform(cfg.low_cut_range[0], cfg.low_cut_range[1]);
  pair.high_cut = rng.uniform(cfg.high_cut_range[0], cfg.high_cut_range[1]);
  pair.mix_snr = rng.uniform(cfg.snr_range[0], cfg.snr_range[1]);

  pair.clean = clean;
  pair.filtered = dsp::bandpass(clean, dsp::BandPassSpec{pair.low_cut, pair.high_cut, cfg.filter_order},
                                dsp::FilterMode::ZeroPhase);
  const double e_signal = energy(pair.filtered.samples);
  if (e_signal == 0.0) throw std::invalid_argument("make_pair: band-passed clean clip is silent");

  AudioClip noise;
  double e_noise = 0.0;
  for (std::size_t attempt = 0; attempt < 4 * bank.size() + 4; ++attempt) {
    const auto& seg = bank[rng.below(bank.size())];
    auto ext = cfg.extension;
    ext.seed = rng.next_u64();
    noise = noise::extend_noise(seg, clean.size(), ext);
    e_noise = energy(noise.samples);
    if (e_noise > 0.0) {
      pair.noise_id = seg.id;
      break;
    }
    spdlog::warn("noise segment {} is silent; drawing another", seg.id);
  }
  if (e_noise == 0.0) throw std::invalid_argument("make_pair: every drawn noise segment is silent");

  const double gain = std::sqrt(e_signal / (e_noise * std::pow(10.0, pair.mix_snr / 10.0)));
  pair.noisy = pair.filtered;
  for (std::size_t i = 0; i < noise.size(); ++i) pair.noisy.samples[i] += gain * noise.samples[i];
  return pair;
}

std::vector<std::filesystem::path> list_wavs(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw std::invalid_argument("not a directory: " + dir.string());
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (e.is_regular_file() && ext == ".wav") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

nlohmann::json to_json(const PairRecord& r) {
  return {{"pair_id", r.pair_id},   {"clean_path", r.clean_path}, {"noisy_path", r.noisy_path},
          {"mix_snr", r.mix_snr},   {"low_cut", r.low_cut},       {"high_cut", r.high_cut},
          {"noise_id", r.noise_id}, {"source", r.source},         {"source_start_s", r.source_start_s},
          {"split", r.split}};
}

PairRecord from_json(const nlohmann::json& j) {
  PairRecord r;
  r.pair_id = j.at("pair_id").get<std::int64_t>();
  r.clean_path = j.at("clean_path").get<std::string>();
  r.noisy_path = j.at("noisy_path").get<std::string>();
  r.mix_snr = j.at("mix_snr").get<double>();
  r.low_cut = j.at("low_cut").get<double>();
  r.high_cut = j.at("high_cut").get<double>();
  r.noise_id = j.at("noise_id").get<std::string>();
  r.source = j.value("source", "");
  r.source_start_s = j.value("source_start_s", 0.0);
  r.split = j.value("split", "train");
  return r;
}

void write_lines(const std::filesystem::path& path, const std::vector<PairRecord>& records, const char* split) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& r : records)
    if (!split || r.split == split) out << to_json(r).dump() << '\n';
}

struct Window {
  std::size_t file;
  std::size_t start;
};

}  // namespace

Dataset build_dataset(const std::vector<std::filesystem::path>& clean_files, const noise::NoiseBank& bank,
                      const PairSynthesisConfig& cfg, std::size_t n_pairs, const std::filesystem::path& root) {
  cfg.validate();
  Dataset ds;
  ds.root = root;
  std::filesystem::create_directories(root / "clean");
  std::filesystem::create_directories(root / "noisy");
  if (n_pairs == 0) {
    write_lines(root / "manifest.jsonl", {}, nullptr);
    write_lines(root / "train.jsonl", {}, nullptr);
    write_lines(root / "test.jsonl", {}, nullptr);
    return ds;
  }
  if (bank.segments.empty()) throw std::invalid_argument("build_dataset: noise bank is empty");

  const double min_rms = std::pow(10.0, cfg.min_level_dbfs / 20.0);
  std::vector<AudioClip> sources;
  std::vector<std::vector<std::size_t>> usable;
  for (const auto& path : clean_files) {
    sources.push_back(read_wav(path));
    const auto& clip = sources.back();
    const std::size_t len = clip_samples(cfg, clip.sample_rate);
    usable.emplace_back();
    for (std::size_t start = 0; len > 0 && start + len <= clip.size(); start += len) {
      const std::vector<double> win(clip.samples.begin() + start, clip.samples.begin() + start + len);
      if (rms(win) >= min_rms) usable.back().push_back(start);
    }
  }
  std::vector<Window> windows;
  for (std::size_t k = 0; windows.size() < n_pairs; ++k) {
    bool any = false;
    for (std::size_t f = 0; f < sources.size() && windows.size() < n_pairs; ++f)
      if (k < usable[f].size()) {
        windows.push_back({f, usable[f][k]});
        any = true;
      }
    if (!any) break;
  }
  if (windows.size() < n_pairs)
    throw std::runtime_error(fmt::format("build_dataset: clean audio supports only {} pairs of {} s, {} requested",
                                         windows.size(), cfg.clip_seconds, n_pairs));

  // Hold out whole source recordings.
  std::vector<std::size_t> used_sources;
  for (const auto& w : windows)
    if (std::find(used_sources.begin(), used_sources.end(), w.file) == used_sources.end())
      used_sources.push_back(w.file);
  Rng split_rng(derive_seed(cfg.seed, 0x5EED));
  for (std::size_t i = used_sources.size(); i > 1; --i) std::swap(used_sources[i - 1], used_sources[split_rng.below(i)]);
  std::size_t n_test = static_cast<std::size_t>(std::ceil(cfg.test_fraction * used_sources.size()));
  if (cfg.test_fraction > 0.0 && used_sources.size() >= 2) n_test = std::clamp<std::size_t>(n_test, 1, used_sources.size() - 1);
  if (used_sources.size() < 2) n_test = 0;
  std::vector<bool> is_test(sources.size(), false);
  for (std::size_t i = 0; i < n_test; ++i) is_test[used_sources[i]] = true;

  for (std::size_t id = 0; id < windows.size(); ++id) {
    const auto& w = windows[id];
    const auto& src = sources[w.file];
    const std::size_t len = clip_samples(cfg, src.sample_rate);
    AudioClip clean(std::vector<double>(src.samples.begin() + w.start, src.samples.begin() + w.start + len),
                    src.sample_rate);
    const auto pair = make_pair(clean, bank.segments, cfg, derive_seed(cfg.seed, id));
    PairRecord r;
    r.pair_id = static_cast<std::int64_t>(id);
    r.clean_path = fmt::format("clean/{:06d}.wav", id);
    r.noisy_path = fmt::format("noisy/{:06d}.wav", id);
    r.mix_snr = pair.mix_snr;
    r.low_cut = pair.low_cut;
    r.high_cut = pair.high_cut;
    r.noise_id = pair.noise_id;
    r.source = clean_files[w.file].string();
    r.source_start_s = static_cast<double>(w.start) / src.sample_rate;
    r.split = is_test[w.file] ? "test" : "train";
    write_wav(root / r.clean_path, pair.clean, WavEncoding::Float32);
    write_wav(root / r.noisy_path, pair.noisy, WavEncoding::Float32);
    ds.pairs.push_back(std::move(r));
  }
  write_lines(root / "manifest.jsonl", ds.pairs, nullptr);
  write_lines(root / "train.jsonl", ds.pairs, "train");
  write_lines(root / "test.jsonl", ds.pairs, "test");
  return ds;
}

Dataset load_dataset(const std::filesystem::path& root) {
  std::ifstream in(root / "manifest.jsonl");
  if (!in) throw std::runtime_error("cannot read dataset manifest in " + root.string());
  Dataset ds;
  ds.root = root;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ds.pairs.push_back(from_json(nlohmann::json::parse(line)));
  return ds;
}

std::vector<PairRecord> Dataset::split(const std::string& name) const {
  std::vector<PairRecord> out;
  std::copy_if(pairs.begin(), pairs.end(), std::back_inserter(out), [&](const auto& r) { return r.split == name; });
  return out;
}

AudioClip Dataset::load_clean(const PairRecord& r) const { return read_wav(root / r.clean_path); }
AudioClip Dataset::load_noisy(const PairRecord& r) const { return read_wav(root / r.noisy_path); }

SnrBuckets bucket_by_snr(std::vector<PairRecord> pairs) {
  std::sort(pairs.begin(), pairs.end(), [](const PairRecord& a, const PairRecord& b) {
    return a.mix_snr != b.mix_snr ? a.mix_snr < b.mix_snr : a.pair_id < b.pair_id;
  });
  const std::size_t n = pairs.size(), base = n / 3, rem = n % 3;
  const std::size_t n_high = base + (rem > 0 ? 1 : 0);
  const std::size_t n_medium = base + (rem > 1 ? 1 : 0);
  SnrBuckets b;
  b.high.assign(pairs.begin(), pairs.begin() + n_high);
  b.medium.assign(pairs.begin() + n_high, pairs.begin() + n_high + n_medium);
  b.low.assign(pairs.begin() + n_high + n_medium, pairs.end());
  return b;
}

}  // namespace restorer::data
