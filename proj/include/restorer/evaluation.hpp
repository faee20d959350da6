#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "restorer/audio.hpp"
#include "restorer/dataset.hpp"

namespace restorer::eval {

using DenoiseFn = std::function<AudioClip(const AudioClip&)>;
// Distance between the clean reference and an estimate, lower is better.
using EmbeddingFn = std::function<double(const AudioClip& clean, const AudioClip& estimate)>;

/// Runs `command clean.wav estimate.wav` per pair and parses one number from
/// its stdout. Throws std::runtime_error on a non-zero exit or unparsable output.
EmbeddingFn external_embedding(std::string command, std::filesystem::path scratch_dir);

struct PairResult {
  std::int64_t pair_id = 0;
  std::string bucket;  // "low", "medium" or "high" noise
  double mix_snr = 0.0;
  double snr_in = 0.0;
  double snr_out = 0.0;
  double delta_snr = 0.0;  // +inf when the estimate equals the clean signal
  // Reduction of the embedding distance, d(clean, noisy) - d(clean, out).
  std::optional<double> embedding_gain;
};

struct PairFailure {
  std::int64_t pair_id = 0;
  std::string reason;
};

/// Mean of one metric over a set of pairs or runs.
struct Cell {
  double mean = 0.0;  // NaN when count == 0
  std::optional<double> std_error;  // only for repeated runs with at least 2 runs
  std::size_t count = 0;
  std::size_t saturated = 0;  // non-finite values left out of the mean
};

struct RunLog {
  std::size_t run = 0;
  std::uint64_t seed = 0;
  std::optional<std::string> error;
  std::optional<Cell> low, medium, high, all;
};

struct MethodReport {
  std::string method;
  std::size_t runs = 1;
  Cell low, medium, high, all;
  std::optional<Cell> emb_low, emb_medium, emb_high, emb_all;
  std::vector<PairResult> pairs;  // single-run reports only, sorted by pair id
  std::vector<PairFailure> failures;
  std::vector<RunLog> run_log;  // repeated evaluations only

  bool saturated() const { return all.saturated > 0; }
};

struct EvalReport {
  std::vector<MethodReport> methods;

  nlohmann::json to_json() const;
  /// Aligned text table with columns low / medium / high / all.
  std::string to_table() const;
};

nlohmann::json to_json(const MethodReport& m);
MethodReport method_report_from_json(const nlohmann::json& j);
EvalReport eval_report_from_json(const nlohmann::json& j);

struct ObjectiveOptions {
  std::string method = "model";
  std::string split = "test";  // empty string evaluates every pair
  EmbeddingFn embedding;      // optional
};

/// Denoises every pair of the split and averages delta SNR per noise bucket.
/// Pairs that fail to load or denoise are listed in `failures` and excluded.
MethodReport eval_objective(const data::Dataset& dataset, const DenoiseFn& denoise, const ObjectiveOptions& opts = {});

/// Same, on an explicit pair list (bucketed among themselves).
MethodReport eval_objective(const data::Dataset& dataset, const std::vector<data::PairRecord>& pairs,
                            const DenoiseFn& denoise, const ObjectiveOptions& opts = {});

using TrainFn = std::function<MethodReport(std::size_t run, std::uint64_t seed)>;

/// Calls train_fn for runs 0..n_runs-1 with seeds derive_seed(seed, run) and
/// reports the mean over runs with standard error std / sqrt(runs). Failed runs
/// are logged and excluded.
MethodReport run_repeated_eval(const TrainFn& train_fn, std::size_t n_runs, std::uint64_t seed,
                               const std::string& method = "model");

// "3.4 ± 0.0", or "3.4" without a standard error.
std::string format_cell(const Cell& c, int precision = 1);

// ---- subjective scores ----

struct RatingRecord {
  std::string session_id;
  std::string rater_id;
  std::string item_id;
  std::string condition;
  int score = 0;
  std::int64_t timestamp = 0;  // unix milliseconds

  void validate() const;
};

nlohmann::json to_json(const RatingRecord& r);
RatingRecord rating_from_json(const nlohmann::json& j);
std::vector<RatingRecord> read_ratings(const std::filesystem::path& jsonl);
void write_ratings(const std::filesystem::path& jsonl, const std::vector<RatingRecord>& records);

struct ScoreDifference {
  std::string condition;
  std::size_t n = 0;
  double mean = 0.0;
  double std = 0.0;         // sample standard deviation, NaN for n < 2
  double half_width = 0.0;  // 1.96 std / sqrt(n)

  double ci_low() const { return mean - half_width; }
  double ci_high() const { return mean + half_width; }
};

class MissingReference : public std::invalid_argument {
 public:
  MissingReference(const std::string& what, std::vector<std::string> offenders)
      : std::invalid_argument(what), offenders_(std::move(offenders)) {}
  const std::vector<std::string>& offenders() const { return offenders_; }

 private:
  std::vector<std::string> offenders_;
};

/// Per-(rater, item) difference to the reference condition, averaged per
/// condition, sorted by condition name. Throws MissingReference listing the
/// "rater/item" keys without a reference score and std::invalid_argument on
/// duplicate (rater, item, condition) scores.
std::vector<ScoreDifference> score_differences(const std::vector<RatingRecord>& records,
                                               const std::string& reference_condition);

enum class WilcoxonMethod { Auto, Exact, Normal };

struct WilcoxonResult {
  double statistic = 0.0;  // min(W+, W-)
  double w_plus = 0.0;
  double w_minus = 0.0;
  double p_value = 1.0;  // two-sided
  std::size_t n = 0;     // non-zero differences
  bool exact = false;
};

/// Paired two-sided signed-rank test on a - b. Zero differences are dropped,
/// ties get average ranks. Auto uses the exact null distribution for n <= 25
/// and the normal approximation with tie and continuity corrections above.
/// Throws std::invalid_argument on unequal lengths, all-zero differences
/// ("degenerate sample") or fewer than 5 non-zero differences.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b,
                                    WilcoxonMethod method = WilcoxonMethod::Auto);

}  // namespace restorer::eval
