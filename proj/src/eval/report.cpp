#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "restorer/evaluation.hpp"

namespace restorer::eval {

using nlohmann::json;

namespace {

// JSON has no infinities; they are written as the strings "inf" / "-inf" / "nan".
json number(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

double number_from(const json& j) {
  if (j.is_number()) return j.get<double>();
  const auto s = j.get<std::string>();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  throw std::invalid_argument("not a number: " + s);
}

json cell_json(const Cell& c) {
  json j{{"mean", number(c.mean)}, {"count", c.count}, {"saturated", c.saturated}};
  j["std_error"] = c.std_error ? json(*c.std_error) : json(nullptr);
  return j;
}

Cell cell_from(const json& j) {
  Cell c;
  c.mean = number_from(j.at("mean"));
  c.count = j.at("count").get<std::size_t>();
  c.saturated = j.value("saturated", std::size_t{0});
  if (j.contains("std_error") && !j["std_error"].is_null()) c.std_error = j["std_error"].get<double>();
  return c;
}

json buckets_json(const Cell& low, const Cell& medium, const Cell& high, const Cell& all) {
  return {{"low", cell_json(low)}, {"medium", cell_json(medium)}, {"high", cell_json(high)}, {"all", cell_json(all)}};
}

}  // namespace

std::string format_cell(const Cell& c, int precision) {
  if (c.count == 0) return "n/a";
  if (!c.std_error) return fmt::format("{:.{}f}", c.mean, precision);
  return fmt::format("{:.{}f} ± {:.{}f}", c.mean, precision, *c.std_error, precision);
}

json to_json(const MethodReport& m) {
  json j;
  j["method"] = m.method;
  j["runs"] = m.runs;
  j["saturated"] = m.saturated();
  j["delta_snr"] = buckets_json(m.low, m.medium, m.high, m.all);
  if (m.emb_all) j["embedding_gain"] = buckets_json(*m.emb_low, *m.emb_medium, *m.emb_high, *m.emb_all);
  j["pairs"] = json::array();
  for (const auto& p : m.pairs) {
    json pj{{"pair_id", p.pair_id},         {"bucket", p.bucket},           {"mix_snr", p.mix_snr},
            {"snr_in", number(p.snr_in)},   {"snr_out", number(p.snr_out)}, {"delta_snr", number(p.delta_snr)}};
    if (p.embedding_gain) pj["embedding_gain"] = number(*p.embedding_gain);
    j["pairs"].push_back(pj);
  }
  j["failures"] = json::array();
  for (const auto& f : m.failures) j["failures"].push_back({{"pair_id", f.pair_id}, {"reason", f.reason}});
  if (!m.run_log.empty()) {
    j["run_log"] = json::array();
    for (const auto& r : m.run_log) {
      json rj{{"run", r.run}, {"seed", r.seed}};
      if (r.error)
        rj["error"] = *r.error;
      else
        rj["delta_snr"] = buckets_json(*r.low, *r.medium, *r.high, *r.all);
      j["run_log"].push_back(rj);
    }
  }
  return j;
}

MethodReport method_report_from_json(const json& j) {
  MethodReport m;
  m.method = j.at("method").get<std::string>();
  m.runs = j.at("runs").get<std::size_t>();
  const auto& d = j.at("delta_snr");
  m.low = cell_from(d.at("low"));
  m.medium = cell_from(d.at("medium"));
  m.high = cell_from(d.at("high"));
  m.all = cell_from(d.at("all"));
  if (j.contains("embedding_gain")) {
    const auto& e = j["embedding_gain"];
    m.emb_low = cell_from(e.at("low"));
    m.emb_medium = cell_from(e.at("medium"));
    m.emb_high = cell_from(e.at("high"));
    m.emb_all = cell_from(e.at("all"));
  }
  for (const auto& pj : j.value("pairs", json::array())) {
    PairResult p;
    p.pair_id = pj.at("pair_id").get<std::int64_t>();
    p.bucket = pj.at("bucket").get<std::string>();
    p.mix_snr = pj.at("mix_snr").get<double>();
    p.snr_in = number_from(pj.at("snr_in"));
    p.snr_out = number_from(pj.at("snr_out"));
    p.delta_snr = number_from(pj.at("delta_snr"));
    if (pj.contains("embedding_gain")) p.embedding_gain = number_from(pj["embedding_gain"]);
    m.pairs.push_back(std::move(p));
  }
  for (const auto& fj : j.value("failures", json::array()))
    m.failures.push_back({fj.at("pair_id").get<std::int64_t>(), fj.at("reason").get<std::string>()});
  for (const auto& rj : j.value("run_log", json::array())) {
    RunLog r;
    r.run = rj.at("run").get<std::size_t>();
    r.seed = rj.at("seed").get<std::uint64_t>();
    if (rj.contains("error")) {
      r.error = rj["error"].get<std::string>();
    } else {
      const auto& d2 = rj.at("delta_snr");
      r.low = cell_from(d2.at("low"));
      r.medium = cell_from(d2.at("medium"));
      r.high = cell_from(d2.at("high"));
      r.all = cell_from(d2.at("all"));
    }
    m.run_log.push_back(std::move(r));
  }
  return m;
}

json EvalReport::to_json() const {
  json j{{"methods", json::array()}};
  for (const auto& m : methods) j["methods"].push_back(eval::to_json(m));
  return j;
}

EvalReport eval_report_from_json(const json& j) {
  EvalReport r;
  for (const auto& m : j.at("methods")) r.methods.push_back(method_report_from_json(m));
  return r;
}

std::string EvalReport::to_table() const {
  const bool with_emb = std::any_of(methods.begin(), methods.end(), [](const auto& m) { return m.emb_all.has_value(); });
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> head{"method", "low", "medium", "high", "all"};
  if (with_emb) head.insert(head.end(), {"emb low", "emb medium", "emb high", "emb all"});
  rows.push_back(head);
  for (const auto& m : methods) {
    std::vector<std::string> row{m.method, format_cell(m.low), format_cell(m.medium), format_cell(m.high),
                                 format_cell(m.all)};
    if (with_emb) {
      for (const auto* c : {&m.emb_low, &m.emb_medium, &m.emb_high, &m.emb_all})
        row.push_back(c->has_value() ? format_cell(**c, 2) : "n/a");
    }
    rows.push_back(std::move(row));
  }

  // Column widths in code points so "±" does not skew the alignment.
  auto width = [](const std::string& s) {
    std::size_t w = 0;
    for (unsigned char c : s) w += (c & 0xC0) != 0x80;
    return w;
  };
  std::vector<std::size_t> widths(head.size(), 0);
  for (const auto& row : rows)
    for (std::size_t i = 0; i < row.size(); ++i) widths[i] = std::max(widths[i], width(row[i]));

  std::string out = "delta SNR (dB) by noise level\n";
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::string line;
    for (std::size_t i = 0; i < rows[r].size(); ++i) {
      const auto& cell = rows[r][i];
      const std::string pad(widths[i] - width(cell), ' ');
      line += i == 0 ? cell + pad : "  " + pad + cell;
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
    if (r == 0) out += std::string(width(line), '-') + "\n";
  }
  for (const auto& m : methods) {
    if (m.saturated())
      out += fmt::format("{}: {} pair(s) reached the clean signal exactly and are not averaged\n", m.method,
                         m.all.saturated);
    if (!m.failures.empty()) out += fmt::format("{}: {} pair(s) failed\n", m.method, m.failures.size());
  }
  return out;
}

}  // namespace restorer::eval
