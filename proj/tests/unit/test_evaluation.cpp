#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "restorer/baselines.hpp"
#include "restorer/dsp.hpp"
#include "restorer/evaluation.hpp"
#include "restorer/random.hpp"
#include "toy_corpus.hpp"

using namespace restorer;
using namespace restorer::eval;

namespace {

class ObjectiveTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = new std::filesystem::path(std::filesystem::temp_directory_path() / "restorer_test_evaluation");
    corpus_ = new restorer::testing::ToyCorpus(restorer::testing::build_toy_corpus(*root_ / "corpus", 11));
  }
  static void TearDownTestSuite() {
    std::filesystem::remove_all(*root_);
    delete corpus_;
    delete root_;
  }
  static const data::Dataset& dataset() { return corpus_->dataset; }

  static inline std::filesystem::path* root_ = nullptr;
  static inline restorer::testing::ToyCorpus* corpus_ = nullptr;
};

AudioClip halve(const AudioClip& x) {
  AudioClip y = x;
  for (auto& v : y.samples) v *= 0.5;
  return y;
}

}  // namespace

TEST_F(ObjectiveTest, IdentityGivesExactlyZero) {
  const auto r = eval_objective(dataset(), [](const AudioClip& x) { return x; });
  ASSERT_EQ(r.pairs.size(), dataset().split("test").size());
  for (const auto& p : r.pairs) EXPECT_EQ(p.delta_snr, 0.0);
  for (const auto* c : {&r.low, &r.medium, &r.high, &r.all}) {
    EXPECT_EQ(c->mean, 0.0);
    EXPECT_FALSE(c->std_error.has_value());
  }
  EXPECT_EQ(r.all.count, r.pairs.size());
  EXPECT_TRUE(r.failures.empty());
  EXPECT_FALSE(r.saturated());
}

TEST_F(ObjectiveTest, CleanOracleSaturates) {
  std::map<std::vector<double>, AudioClip> clean_of;
  for (const auto& rec : dataset().split("test"))
    clean_of[dataset().load_noisy(rec).samples] = dataset().load_clean(rec);
  const auto r = eval_objective(dataset(), [&](const AudioClip& x) { return clean_of.at(x.samples); });
  for (const auto& p : r.pairs) EXPECT_TRUE(std::isinf(p.delta_snr) && p.delta_snr > 0);
  EXPECT_TRUE(r.saturated());
  EXPECT_EQ(r.all.saturated, r.pairs.size());
  EXPECT_EQ(r.all.count, 0u);
  EXPECT_TRUE(std::isnan(r.all.mean));
  const auto j = to_json(r);
  EXPECT_EQ(j["pairs"][0]["delta_snr"], "inf");
  EXPECT_TRUE(j["saturated"].get<bool>());
  EXPECT_NE(EvalReport{{r}}.to_table().find("not averaged"), std::string::npos);
}

TEST_F(ObjectiveTest, BucketMeansMatchBruteForce) {
  const auto test = dataset().split("test");
  const auto r = eval_objective(dataset(), halve);

  // Independent bucketing: rank by (mix_snr, pair_id); the lowest third is the
  // high-noise bucket, with the remainder assigned to high first, then medium.
  auto sorted = test;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    return std::tie(a.mix_snr, a.pair_id) < std::tie(b.mix_snr, b.pair_id);
  });
  const std::size_t n = sorted.size();
  const std::size_t n_high = (n + 2) / 3, n_medium = (n + 1) / 3;
  std::map<std::string, std::pair<double, int>> acc;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& rec = sorted[i];
    const std::string bucket = i < n_high ? "high" : i < n_high + n_medium ? "medium" : "low";
    const auto clean = dataset().load_clean(rec);
    const auto noisy = dataset().load_noisy(rec);
    const double d = dsp::snr_db(clean, halve(noisy)) - dsp::snr_db(clean, noisy);
    acc[bucket].first += d;
    acc[bucket].second += 1;
    acc["all"].first += d;
    acc["all"].second += 1;
  }
  const std::map<std::string, const Cell*> cells{{"low", &r.low}, {"medium", &r.medium}, {"high", &r.high}, {"all", &r.all}};
  for (const auto& [name, cell] : cells) {
    EXPECT_EQ(cell->count, static_cast<std::size_t>(acc[name].second)) << name;
    EXPECT_NEAR(cell->mean, acc[name].first / acc[name].second, 1e-9) << name;
  }
}

TEST_F(ObjectiveTest, InvariantToManifestOrder) {
  const auto base = to_json(eval_objective(dataset(), halve));
  auto shuffled = dataset();
  Rng rng(4);
  for (std::size_t i = shuffled.pairs.size(); i > 1; --i) std::swap(shuffled.pairs[i - 1], shuffled.pairs[rng.below(i)]);
  EXPECT_EQ(to_json(eval_objective(shuffled, halve)), base);
}

TEST_F(ObjectiveTest, FailedPairsAreCountedAndExcluded) {
  auto broken = dataset();
  auto test = broken.split("test");
  const auto victim = test.front().pair_id;
  for (auto& p : broken.pairs)
    if (p.pair_id == victim) p.noisy_path = "missing/nowhere.wav";
  const auto r = eval_objective(broken, [](const AudioClip& x) { return x; });
  ASSERT_EQ(r.failures.size(), 1u);
  EXPECT_EQ(r.failures[0].pair_id, victim);
  EXPECT_EQ(r.pairs.size(), test.size() - 1);
  EXPECT_EQ(r.all.count, test.size() - 1);
  EXPECT_EQ(to_json(r)["failures"].size(), 1u);

  // A denoiser that changes the length is a failure too.
  const auto shorter = eval_objective(dataset(), [](const AudioClip& x) {
    AudioClip y = x;
    y.samples.pop_back();
    return y;
  });
  EXPECT_EQ(shorter.failures.size(), test.size());
}

TEST_F(ObjectiveTest, EmbeddingHookColumns) {
  ObjectiveOptions opts;
  opts.method = "halved";
  // Distance = RMS error; halving the noisy signal changes it by a known amount per pair.
  opts.embedding = [](const AudioClip& c, const AudioClip& e) {
    double s = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) s += (c.samples[i] - e.samples[i]) * (c.samples[i] - e.samples[i]);
    return std::sqrt(s / c.size());
  };
  const auto r = eval_objective(dataset(), halve, opts);
  ASSERT_TRUE(r.emb_all.has_value());
  double sum = 0.0;
  for (const auto& p : r.pairs) {
    const auto rec = *std::find_if(dataset().pairs.begin(), dataset().pairs.end(),
                                   [&](const auto& q) { return q.pair_id == p.pair_id; });
    const auto clean = dataset().load_clean(rec);
    const auto noisy = dataset().load_noisy(rec);
    const double expect = opts.embedding(clean, noisy) - opts.embedding(clean, halve(noisy));
    EXPECT_NEAR(*p.embedding_gain, expect, 1e-12);
    sum += expect;
  }
  EXPECT_NEAR(r.emb_all->mean, sum / r.pairs.size(), 1e-12);
  const auto table = EvalReport{{r}}.to_table();
  EXPECT_NE(table.find("emb all"), std::string::npos);
}

TEST_F(ObjectiveTest, ExternalEmbeddingProgram) {
  const auto script = *root_ / "emb.sh";
  {
    std::ofstream out(script);
    out << "#!/bin/sh\ntest -f \"$1\" && test -f \"$2\" && echo 0.25\n";
  }
  std::filesystem::permissions(script, std::filesystem::perms::owner_all);
  auto fn = external_embedding(script.string(), *root_ / "emb_scratch");
  const AudioClip x(std::vector<double>(100, 0.1), 8000);
  EXPECT_DOUBLE_EQ(fn(x, x), 0.25);

  auto failing = external_embedding("false", *root_ / "emb_scratch");
  EXPECT_THROW(failing(x, x), std::runtime_error);
  auto silent = external_embedding("true", *root_ / "emb_scratch");
  EXPECT_THROW(silent(x, x), std::runtime_error);
}

TEST_F(ObjectiveTest, ReportJsonRoundTripAndTable) {
  EvalReport rep;
  rep.methods.push_back(eval_objective(dataset(), halve, {"halved", "test", {}}));
  rep.methods.push_back(eval_objective(dataset(), [](const AudioClip& x) { return x; }, {"identity", "test", {}}));
  const auto j = rep.to_json();
  EXPECT_EQ(eval_report_from_json(j).to_json(), j);

  const auto table = rep.to_table();
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos < table.size()) {
    const auto nl = table.find('\n', pos);
    lines.push_back(table.substr(pos, nl - pos));
    pos = nl + 1;
  }
  // title, header, rule, two rows
  ASSERT_GE(lines.size(), 5u);
  EXPECT_EQ(lines[1].substr(0, 6), "method");
  EXPECT_EQ(lines[3].substr(0, 6), "halved");
  EXPECT_EQ(lines[4].substr(0, 8), "identity");
  // Right-aligned columns end at the same offset.
  EXPECT_EQ(lines[1].size(), lines[4].size());
  EXPECT_NE(lines[4].find("0.0"), std::string::npos);
}

TEST(RepeatedEval, SingleRunHasNoStandardError) {
  const auto r = run_repeated_eval(
      [](std::size_t, std::uint64_t) {
        MethodReport m;
        m.low = m.medium = m.high = m.all = Cell{3.4, std::nullopt, 10, 0};
        return m;
      },
      1, 0);
  EXPECT_EQ(r.runs, 1u);
  EXPECT_FALSE(r.all.std_error.has_value());
  EXPECT_EQ(format_cell(r.all), "3.4");
}

TEST(RepeatedEval, ConstantMetricHasZeroError) {
  const auto r = run_repeated_eval(
      [](std::size_t, std::uint64_t) {
        MethodReport m;
        m.low = m.medium = m.high = m.all = Cell{3.4, std::nullopt, 10, 0};
        return m;
      },
      10, 0);
  ASSERT_TRUE(r.all.std_error.has_value());
  EXPECT_EQ(*r.all.std_error, 0.0);
  EXPECT_EQ(format_cell(r.all), "3.4 ± 0.0");
}

TEST(RepeatedEval, MatchesBruteForceAndSkipsFailures) {
  std::vector<std::uint64_t> seeds;
  const auto r = run_repeated_eval(
      [&](std::size_t run, std::uint64_t seed) {
        seeds.push_back(seed);
        if (run == 3) throw std::runtime_error("diverged");
        Rng rng(seed);
        MethodReport m;
        m.low = Cell{rng.uniform(0, 2), std::nullopt, 5, 0};
        m.medium = Cell{rng.uniform(2, 4), std::nullopt, 5, 0};
        m.high = Cell{rng.uniform(4, 6), std::nullopt, 5, 0};
        m.all = Cell{rng.uniform(1, 5), std::nullopt, 15, 0};
        return m;
      },
      6, 42);
  ASSERT_EQ(seeds.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(seeds[i], derive_seed(42, i));
  EXPECT_EQ(r.runs, 5u);
  ASSERT_EQ(r.run_log.size(), 6u);
  EXPECT_TRUE(r.run_log[3].error.has_value());

  std::vector<double> v;
  for (const auto& log : r.run_log)
    if (!log.error) v.push_back(log.all->mean);
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= v.size();
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double se = std::sqrt(ss / (v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
  EXPECT_NEAR(r.all.mean, mean, 1e-12);
  EXPECT_NEAR(*r.all.std_error, se, 1e-12);

  const auto back = method_report_from_json(to_json(r));
  EXPECT_EQ(to_json(back), to_json(r));
}

// ---- subjective statistics ----

namespace {

RatingRecord rec(const std::string& rater, const std::string& item, const std::string& cond, int score) {
  return {"s-" + rater, rater, item, cond, score, 0};
}

const ScoreDifference& find(const std::vector<ScoreDifference>& v, const std::string& c) {
  return *std::find_if(v.begin(), v.end(), [&](const auto& d) { return d.condition == c; });
}

}  // namespace

TEST(ScoreDifferences, EqualScoresGiveZero) {
  std::vector<RatingRecord> rs;
  for (const auto* r : {"a", "b", "c"})
    for (const auto* c : {"original", "ours"}) rs.push_back(rec(r, "item1", c, 60));
  const auto d = score_differences(rs, "original");
  ASSERT_EQ(d.size(), 2u);
  for (const auto& x : d) {
    EXPECT_EQ(x.mean, 0.0);
    EXPECT_EQ(x.half_width, 0.0);
    EXPECT_EQ(x.n, 3u);
  }
}

TEST(ScoreDifferences, KnownDiffs) {
  std::vector<RatingRecord> rs{rec("a", "i", "original", 20), rec("a", "i", "ours", 30),
                               rec("b", "i", "original", 40), rec("b", "i", "ours", 60),
                               rec("c", "i", "original", 50), rec("c", "i", "ours", 80)};
  const auto d = find(score_differences(rs, "original"), "ours");
  EXPECT_DOUBLE_EQ(d.mean, 20.0);
  EXPECT_DOUBLE_EQ(d.std, 10.0);
  EXPECT_NEAR(d.half_width, 1.96 * 10.0 / std::sqrt(3.0), 1e-12);
  EXPECT_NEAR(d.ci_low(), 20.0 - 1.96 * 10.0 / std::sqrt(3.0), 1e-12);

  const auto ref = find(score_differences(rs, "original"), "original");
  EXPECT_EQ(ref.mean, 0.0);
  EXPECT_EQ(ref.half_width, 0.0);
}

TEST(ScoreDifferences, PermutationInvariant) {
  Rng rng(8);
  std::vector<RatingRecord> rs;
  for (int r = 0; r < 6; ++r)
    for (int i = 0; i < 5; ++i)
      for (const auto* c : {"original", "a", "b"})
        rs.push_back(rec("r" + std::to_string(r), "i" + std::to_string(i), c, static_cast<int>(rng.below(101))));
  const auto base = score_differences(rs, "original");
  for (int trial = 0; trial < 5; ++trial) {
    for (std::size_t i = rs.size(); i > 1; --i) std::swap(rs[i - 1], rs[rng.below(i)]);
    const auto d = score_differences(rs, "original");
    ASSERT_EQ(d.size(), base.size());
    for (std::size_t k = 0; k < d.size(); ++k) {
      EXPECT_EQ(d[k].condition, base[k].condition);
      EXPECT_EQ(d[k].mean, base[k].mean);
      EXPECT_EQ(d[k].half_width, base[k].half_width);
    }
  }
}

TEST(ScoreDifferences, MissingReferenceListsOffenders) {
  std::vector<RatingRecord> rs{rec("a", "i1", "original", 20), rec("a", "i1", "ours", 30), rec("a", "i2", "ours", 30),
                               rec("b", "i1", "ours", 30)};
  try {
    score_differences(rs, "original");
    FAIL() << "expected MissingReference";
  } catch (const MissingReference& e) {
    EXPECT_EQ(e.offenders(), (std::vector<std::string>{"a/i2", "b/i1"}));
    EXPECT_NE(std::string(e.what()).find("a/i2"), std::string::npos);
  }
  rs.push_back(rec("a", "i1", "ours", 31));
  rs.push_back(rec("a", "i2", "original", 1));
  rs.push_back(rec("b", "i1", "original", 1));
  EXPECT_THROW(score_differences(rs, "original"), std::invalid_argument);
}

TEST(ScoreDifferences, RecoversKnownShifts) {
  // 11 raters x 10 items, condition shifts of +50, +16 and 0 over the reference
  // plus rater/item noise.
  Rng rng(2020);
  std::vector<RatingRecord> rs;
  const std::map<std::string, int> shift{{"ours-0.01", 50}, {"ours-0", 16}, {"logmmse", 0}};
  for (int r = 0; r < 11; ++r)
    for (int i = 0; i < 10; ++i) {
      const int base = 20 + static_cast<int>(rng.below(15));
      const auto rater = "r" + std::to_string(r), item = "i" + std::to_string(i);
      rs.push_back(rec(rater, item, "original", base));
      for (const auto& [c, s] : shift) {
        const int noise = static_cast<int>(std::lround(rng.normal(0.0, 8.0)));
        rs.push_back(rec(rater, item, c, std::clamp(base + s + noise, 0, 100)));
      }
    }
  const auto d = score_differences(rs, "original");
  for (const auto& [c, s] : shift) {
    const auto& x = find(d, c);
    EXPECT_EQ(x.n, 110u);
    EXPECT_LE(x.ci_low(), s) << c;
    EXPECT_GE(x.ci_high(), s) << c;
  }
  EXPECT_EQ(find(d, "original").mean, 0.0);
}

TEST(RatingRecords, JsonLinesRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "restorer_ratings_roundtrip.jsonl";
  std::vector<RatingRecord> rs{rec("a", "i", "original", 0), rec("a", "i", "ours", 100)};
  rs[1].timestamp = 1234567;
  write_ratings(path, rs);
  const auto back = read_ratings(path);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(to_json(back[1]), to_json(rs[1]));
  {
    std::ofstream out(path, std::ios::app);
    out << R"({"session_id":"s","rater_id":"r","item_id":"i","condition":"c","score":101})" << "\n";
  }
  EXPECT_THROW(read_ratings(path), std::invalid_argument);
  std::filesystem::remove(path);
  EXPECT_THROW(rating_from_json(nlohmann::json::parse(
                   R"({"session_id":"s","rater_id":"r","item_id":"i","condition":"c","score":50.5})")),
               std::invalid_argument);
}

// ---- Wilcoxon signed-rank ----

namespace {

// Two-sided p by enumerating all 2^n sign patterns over average ranks.
std::pair<double, double> wilcoxon_oracle(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) d.push_back(a[i] - b[i]);
  const std::size_t n = d.size();
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n; ++i) {
    double less = 0, equal = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (std::abs(d[j]) < std::abs(d[i])) less += 1;
      if (j != i && std::abs(d[j]) == std::abs(d[i])) equal += 1;
    }
    rank[i] = 1 + less + equal / 2;
  }
  double wp = 0, total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total += rank[i];
    if (d[i] > 0) wp += rank[i];
  }
  const double t = std::min(wp, total - wp);
  std::uint64_t count = 0;
  for (std::uint64_t mask = 0; mask < (1ULL << n); ++mask) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1) s += rank[i];
    if (s <= t) ++count;
  }
  return {t, std::min(1.0, 2.0 * static_cast<double>(count) / static_cast<double>(1ULL << n))};
}

}  // namespace

TEST(Wilcoxon, EqualSamplesAreDegenerate) {
  const std::vector<double> a{1, 2, 3, 4, 5, 6};
  try {
    wilcoxon_signed_rank(a, a);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("degenerate sample"), std::string::npos);
  }
}

TEST(Wilcoxon, AllPositiveSixDiffs) {
  const std::vector<double> a{1, 2, 3, 4, 5, 6}, b(6, 0.0);
  const auto r = wilcoxon_signed_rank(a, b);
  EXPECT_TRUE(r.exact);
  EXPECT_EQ(r.statistic, 0.0);
  EXPECT_EQ(r.w_plus, 21.0);
  EXPECT_EQ(r.p_value, 0.03125);
}

TEST(Wilcoxon, ExactMatchesEnumerationOracle) {
  Rng rng(77);
  int fixtures = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t len = 5 + rng.below(6);
    std::vector<double> a(len), b(len);
    // Integer scores on a coarse grid produce ties and zero differences.
    for (std::size_t i = 0; i < len; ++i) {
      a[i] = static_cast<double>(rng.below(7));
      b[i] = static_cast<double>(rng.below(7));
    }
    std::size_t nonzero = 0;
    for (std::size_t i = 0; i < len; ++i) nonzero += a[i] != b[i];
    if (nonzero < 5) continue;
    ++fixtures;
    const auto [t, p] = wilcoxon_oracle(a, b);
    const auto r = wilcoxon_signed_rank(a, b, WilcoxonMethod::Exact);
    ASSERT_EQ(r.statistic, t) << trial;
    ASSERT_EQ(r.p_value, p) << trial;
    ASSERT_GT(r.p_value, 0.0);
    ASSERT_LE(r.p_value, 1.0);
    const auto swapped = wilcoxon_signed_rank(b, a, WilcoxonMethod::Exact);
    ASSERT_EQ(swapped.p_value, r.p_value);
    ASSERT_EQ(swapped.w_plus, r.w_minus);
  }
  EXPECT_GT(fixtures, 100);
}

TEST(Wilcoxon, ExactAndNormalAgreeAtTwentyFive) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a(25), b(25);
    const double shift = rng.uniform(0.0, 0.8);
    for (std::size_t i = 0; i < 25; ++i) {
      a[i] = rng.normal() + shift;
      b[i] = rng.normal();
    }
    const auto exact = wilcoxon_signed_rank(a, b, WilcoxonMethod::Exact);
    const auto normal = wilcoxon_signed_rank(a, b, WilcoxonMethod::Normal);
    EXPECT_TRUE(exact.exact);
    EXPECT_FALSE(normal.exact);
    EXPECT_EQ(exact.statistic, normal.statistic);
    EXPECT_NEAR(exact.p_value, normal.p_value, 0.01) << trial;
  }
}

TEST(Wilcoxon, AutoSwitchesAboveTwentyFive) {
  Rng rng(6);
  std::vector<double> a(30), b(30);
  for (std::size_t i = 0; i < 30; ++i) {
    a[i] = rng.normal();
    b[i] = rng.normal();
  }
  EXPECT_FALSE(wilcoxon_signed_rank(a, b).exact);
  EXPECT_TRUE(wilcoxon_signed_rank(std::span(a).first(25), std::span(b).first(25)).exact);
}

TEST(Wilcoxon, RejectsBadInput) {
  const std::vector<double> a{1, 2, 3, 4}, b{0, 0, 0, 0};
  EXPECT_THROW(wilcoxon_signed_rank(a, b), std::invalid_argument);
  const std::vector<double> c{1, 2, 3, 4, 5};
  EXPECT_THROW(wilcoxon_signed_rank(c, b), std::invalid_argument);
}
