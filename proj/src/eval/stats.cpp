#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include <fmt/format.h>

#include "restorer/evaluation.hpp"

namespace restorer::eval {

using nlohmann::json;

void RatingRecord::validate() const {
  if (session_id.empty() || rater_id.empty() || item_id.empty() || condition.empty())
    throw std::invalid_argument("rating record: empty identifier");
  if (score < 0 || score > 100) throw std::invalid_argument(fmt::format("rating record: score {} outside 0..100", score));
}

json to_json(const RatingRecord& r) {
  return {{"session_id", r.session_id}, {"rater_id", r.rater_id}, {"item_id", r.item_id},
          {"condition", r.condition},   {"score", r.score},       {"timestamp", r.timestamp}};
}

RatingRecord rating_from_json(const json& j) {
  RatingRecord r;
  r.session_id = j.at("session_id").get<std::string>();
  r.rater_id = j.at("rater_id").get<std::string>();
  r.item_id = j.at("item_id").get<std::string>();
  r.condition = j.at("condition").get<std::string>();
  if (!j.at("score").is_number_integer()) throw std::invalid_argument("rating record: score must be an integer");
  r.score = j["score"].get<int>();
  r.timestamp = j.value("timestamp", std::int64_t{0});
  r.validate();
  return r;
}

std::vector<RatingRecord> read_ratings(const std::filesystem::path& jsonl) {
  std::ifstream in(jsonl);
  if (!in) throw std::runtime_error("cannot open " + jsonl.string());
  std::vector<RatingRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(rating_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw std::invalid_argument(fmt::format("{}:{}: {}", jsonl.string(), line_no, e.what()));
    }
  }
  return out;
}

void write_ratings(const std::filesystem::path& jsonl, const std::vector<RatingRecord>& records) {
  std::ofstream out(jsonl, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + jsonl.string());
  for (const auto& r : records) out << to_json(r).dump() << "\n";
}

std::vector<ScoreDifference> score_differences(const std::vector<RatingRecord>& records,
                                               const std::string& reference_condition) {
  // (rater, item) -> condition -> score
  std::map<std::pair<std::string, std::string>, std::map<std::string, int>> table;
  for (const auto& r : records) {
    auto& scores = table[{r.rater_id, r.item_id}];
    if (!scores.emplace(r.condition, r.score).second)
      throw std::invalid_argument(
          fmt::format("duplicate score for rater {} item {} condition {}", r.rater_id, r.item_id, r.condition));
  }
  std::vector<std::string> offenders;
  for (const auto& [key, scores] : table)
    if (!scores.count(reference_condition)) offenders.push_back(key.first + "/" + key.second);
  if (!offenders.empty()) {
    std::string list;
    for (const auto& o : offenders) list += (list.empty() ? "" : ", ") + o;
    throw MissingReference(fmt::format("no '{}' score for: {}", reference_condition, list), offenders);
  }

  std::map<std::string, std::vector<double>> diffs;
  for (const auto& [key, scores] : table) {
    const int ref = scores.at(reference_condition);
    for (const auto& [cond, s] : scores) diffs[cond].push_back(static_cast<double>(s - ref));
  }
  std::vector<ScoreDifference> out;
  for (const auto& [cond, d] : diffs) {
    ScoreDifference sd;
    sd.condition = cond;
    sd.n = d.size();
    double sum = 0.0;
    for (double v : d) sum += v;
    sd.mean = sum / static_cast<double>(sd.n);
    if (sd.n >= 2) {
      double ss = 0.0;
      for (double v : d) ss += (v - sd.mean) * (v - sd.mean);
      sd.std = std::sqrt(ss / static_cast<double>(sd.n - 1));
      sd.half_width = 1.96 * sd.std / std::sqrt(static_cast<double>(sd.n));
    } else {
      sd.std = sd.half_width = std::numeric_limits<double>::quiet_NaN();
    }
    out.push_back(sd);
  }
  return out;
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b, WilcoxonMethod method) {
  if (a.size() != b.size())
    throw std::invalid_argument(fmt::format("wilcoxon: sample sizes differ ({} vs {})", a.size(), b.size()));
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double v = a[i] - b[i];
    if (!std::isfinite(v)) throw std::invalid_argument("wilcoxon: non-finite score");
    if (v != 0.0) d.push_back(v);
  }
  if (d.empty()) throw std::invalid_argument("wilcoxon: degenerate sample (all differences are zero)");
  const std::size_t n = d.size();
  if (n < 5) throw std::invalid_argument(fmt::format("wilcoxon: need at least 5 non-zero differences, got {}", n));

  // Doubled average ranks of |d| are integers.
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return std::abs(d[x]) < std::abs(d[y]); });
  std::vector<std::int64_t> rank2(n);
  double tie_term = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    const auto r2 = static_cast<std::int64_t>(i + 1 + j + 1);  // 2 * mean of ranks i+1..j+1
    for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = r2;
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }
  std::int64_t wp2 = 0, total2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total2 += rank2[i];
    if (d[i] > 0) wp2 += rank2[i];
  }
  WilcoxonResult res;
  res.n = n;
  res.w_plus = wp2 / 2.0;
  res.w_minus = (total2 - wp2) / 2.0;
  res.statistic = std::min(res.w_plus, res.w_minus);
  const std::int64_t t2 = std::min(wp2, total2 - wp2);

  const bool exact = method == WilcoxonMethod::Exact || (method == WilcoxonMethod::Auto && n <= 25);
  res.exact = exact;
  if (exact) {
    if (n > 62) throw std::invalid_argument("wilcoxon: exact distribution limited to 62 differences");
    // counts[s] = number of sign patterns whose doubled positive-rank sum is s.
    std::vector<std::uint64_t> counts(static_cast<std::size_t>(total2) + 1, 0);
    counts[0] = 1;
    std::int64_t reach = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::int64_t s = reach; s >= 0; --s)
        if (counts[s]) counts[s + rank2[i]] += counts[s];
      reach += rank2[i];
    }
    std::uint64_t tail = 0;
    for (std::int64_t s = 0; s <= t2; ++s) tail += counts[s];
    res.p_value = std::min(1.0, 2.0 * static_cast<double>(tail) / std::ldexp(1.0, static_cast<int>(n)));
  } else {
    const double nn = static_cast<double>(n);
    const double mean = nn * (nn + 1.0) / 4.0;
    const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
    const double z = (res.statistic - mean + 0.5) / std::sqrt(var);
    res.p_value = std::min(1.0, std::erfc(-z / std::sqrt(2.0)));
  }
  return res;
}

}  // namespace restorer::eval
