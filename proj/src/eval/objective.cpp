#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "restorer/dsp.hpp"
#include "restorer/evaluation.hpp"
#include "restorer/random.hpp"
#include "restorer/wav.hpp"

namespace restorer::eval {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string quote(const std::filesystem::path& p) {
  std::string out = "'";
  for (char c : p.string()) {
    if (c == '\'')
      out += "'\\''";
    else
      out += c;
  }
  return out + "'";
}

// Mean of the finite values; non-finite ones are counted as saturated.
// Accumulated relative to the first value so a constant sequence has exactly
// that value as its mean.
Cell mean_cell(const std::vector<double>& values) {
  Cell c;
  double origin = kNaN, sum = 0.0;
  for (double v : values) {
    if (std::isfinite(v)) {
      if (c.count == 0) origin = v;
      sum += v - origin;
      ++c.count;
    } else {
      ++c.saturated;
    }
  }
  c.mean = c.count ? origin + sum / static_cast<double>(c.count) : kNaN;
  return c;
}

// Mean over runs with sample standard deviation / sqrt(runs).
Cell run_cell(const std::vector<double>& values) {
  Cell c = mean_cell(values);
  if (c.count >= 2) {
    double ss = 0.0;
    for (double v : values)
      if (std::isfinite(v)) ss += (v - c.mean) * (v - c.mean);
    const double sd = std::sqrt(ss / static_cast<double>(c.count - 1));
    c.std_error = sd / std::sqrt(static_cast<double>(c.count));
  }
  return c;
}

}  // namespace

EmbeddingFn external_embedding(std::string command, std::filesystem::path scratch_dir) {
  return [command = std::move(command), dir = std::move(scratch_dir), counter = std::size_t{0}](
             const AudioClip& clean, const AudioClip& estimate) mutable {
    std::filesystem::create_directories(dir);
    const auto a = dir / fmt::format("emb_{}_ref.wav", counter);
    const auto b = dir / fmt::format("emb_{}_est.wav", counter);
    ++counter;
    write_wav(a, clean);
    write_wav(b, estimate);
    const std::string cmd = fmt::format("{} {} {}", command, quote(a), quote(b));
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) throw std::runtime_error("cannot run embedding command: " + command);
    std::string out;
    std::array<char, 256> buf{};
    while (std::fgets(buf.data(), static_cast<int>(buf.size()), pipe)) out += buf.data();
    const int status = pclose(pipe);
    std::filesystem::remove(a);
    std::filesystem::remove(b);
    if (status != 0) throw std::runtime_error(fmt::format("embedding command exited with status {}", status));
    std::size_t used = 0;
    double value;
    try {
      value = std::stod(out, &used);
    } catch (const std::exception&) {
      throw std::runtime_error("embedding command printed no number: " + out);
    }
    return value;
  };
}

MethodReport eval_objective(const data::Dataset& dataset, const DenoiseFn& denoise, const ObjectiveOptions& opts) {
  const auto pairs = opts.split.empty() ? dataset.pairs : dataset.split(opts.split);
  return eval_objective(dataset, pairs, denoise, opts);
}

MethodReport eval_objective(const data::Dataset& dataset, const std::vector<data::PairRecord>& pairs,
                            const DenoiseFn& denoise, const ObjectiveOptions& opts) {
  MethodReport report;
  report.method = opts.method;

  std::map<std::int64_t, std::string> bucket_of;
  const auto buckets = data::bucket_by_snr(pairs);
  for (const auto& r : buckets.low) bucket_of[r.pair_id] = "low";
  for (const auto& r : buckets.medium) bucket_of[r.pair_id] = "medium";
  for (const auto& r : buckets.high) bucket_of[r.pair_id] = "high";

  auto ordered = pairs;
  std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) { return a.pair_id < b.pair_id; });
  for (const auto& rec : ordered) {
    try {
      const auto clean = dataset.load_clean(rec);
      const auto noisy = dataset.load_noisy(rec);
      const auto out = denoise(noisy);
      if (out.size() != noisy.size())
        throw std::runtime_error(fmt::format("denoiser changed the length ({} -> {})", noisy.size(), out.size()));
      PairResult p;
      p.pair_id = rec.pair_id;
      p.bucket = bucket_of.at(rec.pair_id);
      p.mix_snr = rec.mix_snr;
      p.snr_in = dsp::snr_db(clean, noisy);
      p.snr_out = dsp::snr_db(clean, out);
      // Both infinite only when the input was already clean: nothing to gain.
      p.delta_snr = (std::isinf(p.snr_in) && std::isinf(p.snr_out)) ? 0.0 : p.snr_out - p.snr_in;
      if (opts.embedding) p.embedding_gain = opts.embedding(clean, noisy) - opts.embedding(clean, out);
      report.pairs.push_back(std::move(p));
    } catch (const std::exception& e) {
      spdlog::warn("pair {} failed: {}", rec.pair_id, e.what());
      report.failures.push_back({rec.pair_id, e.what()});
    }
  }

  std::map<std::string, std::vector<double>> delta, emb;
  for (const auto& p : report.pairs) {
    delta[p.bucket].push_back(p.delta_snr);
    delta["all"].push_back(p.delta_snr);
    if (p.embedding_gain) {
      emb[p.bucket].push_back(*p.embedding_gain);
      emb["all"].push_back(*p.embedding_gain);
    }
  }
  report.low = mean_cell(delta["low"]);
  report.medium = mean_cell(delta["medium"]);
  report.high = mean_cell(delta["high"]);
  report.all = mean_cell(delta["all"]);
  if (opts.embedding) {
    report.emb_low = mean_cell(emb["low"]);
    report.emb_medium = mean_cell(emb["medium"]);
    report.emb_high = mean_cell(emb["high"]);
    report.emb_all = mean_cell(emb["all"]);
  }
  return report;
}

MethodReport run_repeated_eval(const TrainFn& train_fn, std::size_t n_runs, std::uint64_t seed,
                               const std::string& method) {
  if (n_runs == 0) throw std::invalid_argument("run_repeated_eval: n_runs must be positive");
  MethodReport report;
  report.method = method;
  std::array<std::vector<double>, 4> delta;
  std::array<std::vector<double>, 4> emb;
  bool any_emb = false;
  for (std::size_t run = 0; run < n_runs; ++run) {
    RunLog log;
    log.run = run;
    log.seed = derive_seed(seed, run);
    try {
      const auto r = train_fn(run, log.seed);
      log.low = r.low;
      log.medium = r.medium;
      log.high = r.high;
      log.all = r.all;
      const std::array<const Cell*, 4> cells{&r.low, &r.medium, &r.high, &r.all};
      for (std::size_t i = 0; i < 4; ++i) delta[i].push_back(cells[i]->mean);
      if (r.emb_all) {
        any_emb = true;
        const std::array<const Cell*, 4> e{&*r.emb_low, &*r.emb_medium, &*r.emb_high, &*r.emb_all};
        for (std::size_t i = 0; i < 4; ++i) emb[i].push_back(e[i]->mean);
      }
    } catch (const std::exception& e) {
      spdlog::warn("run {} failed: {}", run, e.what());
      log.error = e.what();
    }
    report.run_log.push_back(std::move(log));
  }
  report.runs = delta[3].size();
  report.low = run_cell(delta[0]);
  report.medium = run_cell(delta[1]);
  report.high = run_cell(delta[2]);
  report.all = run_cell(delta[3]);
  if (any_emb) {
    report.emb_low = run_cell(emb[0]);
    report.emb_medium = run_cell(emb[1]);
    report.emb_high = run_cell(emb[2]);
    report.emb_all = run_cell(emb[3]);
  }
  return report;
}

}  // namespace restorer::eval
