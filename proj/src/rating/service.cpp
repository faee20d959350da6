#include "restorer/rating/service.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <fstream>
#include <random>
#include <set>
#include <tuple>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "restorer/random.hpp"

namespace restorer::rating {

using nlohmann::json;

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void write_all(int fd, const std::string& data, const std::filesystem::path& path) {
  std::size_t done = 0;
  while (done < data.size()) {
    const ssize_t n = ::write(fd, data.data() + done, data.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw std::runtime_error(fmt::format("write {}: {}", path.string(), std::strerror(errno)));
    }
    done += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0) throw std::runtime_error(fmt::format("fsync {}: {}", path.string(), std::strerror(errno)));
}

using Triple = std::tuple<std::string, std::size_t, std::size_t>;  // rater, item, condition

}  // namespace

int RatingError::http_status() const {
  switch (kind_) {
    case ErrorKind::Invalid: return 400;
    case ErrorKind::Unauthorized: return 401;
    case ErrorKind::NotFound: return 404;
    case ErrorKind::Conflict: return 409;
  }
  return 500;
}

struct RatingService::StudyState {
  StudyDefinition def;
  std::map<std::string, std::size_t> item_index, condition_index;
  std::filesystem::path journal;
  int fd = -1;
  std::map<std::string, Session> sessions;
  std::map<std::string, std::string> current;  // rater -> session id
  std::map<std::string, std::pair<std::string, std::size_t>> tokens;  // token -> (session, entry)
  std::map<Triple, Score> scores;
  std::set<std::string> rated_tokens;
};

RatingService::RatingService(ServiceOptions opts) : opts_(std::move(opts)) {
  if (opts_.journal_dir.empty()) throw std::invalid_argument("rating service: journal_dir is required");
  std::filesystem::create_directories(opts_.journal_dir);
}

RatingService::~RatingService() {
  for (auto& [id, st] : studies_)
    if (st->fd >= 0) ::close(st->fd);
}

std::int64_t RatingService::now() const {
  if (opts_.clock) return opts_.clock();
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::string RatingService::new_token() {
  if (opts_.token_source) return opts_.token_source();
  std::random_device rd;
  std::string out;
  for (int i = 0; i < 4; ++i) out += fmt::format("{:08x}", rd());
  return out;
}

void RatingService::add_study(StudyDefinition def) {
  def.validate();
  std::lock_guard lock(mutex_);
  if (studies_.count(def.study_id)) throw std::invalid_argument("study already registered: " + def.study_id);
  auto st = std::make_unique<StudyState>();
  for (std::size_t i = 0; i < def.items.size(); ++i) st->item_index[def.items[i].item_id] = i;
  for (std::size_t c = 0; c < def.conditions.size(); ++c) st->condition_index[def.conditions[c]] = c;
  st->journal = opts_.journal_dir / (def.study_id + ".jsonl");
  st->def = std::move(def);

  if (std::filesystem::exists(st->journal)) {
    std::ifstream in(st->journal);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      try {
        apply(*st, json::parse(line));
      } catch (const std::exception& e) {
        spdlog::warn("{}:{}: dropping journal line: {}", st->journal.string(), line_no, e.what());
      }
    }
  }
  compact(*st);
  studies_[st->def.study_id] = std::move(st);
}

std::vector<std::string> RatingService::study_ids() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> ids;
  for (const auto& [id, st] : studies_) ids.push_back(id);
  return ids;
}

void RatingService::apply(StudyState& st, const json& line) {
  const auto type = line.at("type").get<std::string>();
  if (type == "session") {
    Session s;
    s.session_id = line.at("session_id").get<std::string>();
    s.rater_id = line.at("rater_id").get<std::string>();
    s.created_ms = line.at("created_ms").get<std::int64_t>();
    s.expired = line.value("expired", false);
    for (const auto& e : line.at("entries")) {
      Entry entry;
      entry.item = st.item_index.at(e.at(0).get<std::string>());
      entry.condition = st.condition_index.at(e.at(1).get<std::string>());
      entry.token = e.at(2).get<std::string>();
      s.entries.push_back(std::move(entry));
    }
    if (s.entries.size() != st.def.items.size() * st.def.conditions.size())
      throw std::invalid_argument("session does not cover the study");
    if (st.sessions.count(s.session_id)) throw std::invalid_argument("duplicate session " + s.session_id);
    for (std::size_t i = 0; i < s.entries.size(); ++i) st.tokens[s.entries[i].token] = {s.session_id, i};
    st.current[s.rater_id] = s.session_id;
    st.sessions[s.session_id] = std::move(s);
  } else if (type == "rating") {
    const auto token = line.at("token").get<std::string>();
    const auto& [sid, idx] = st.tokens.at(token);
    const auto& s = st.sessions.at(sid);
    const auto& e = s.entries[idx];
    const int score = line.at("score").get<int>();
    if (score < 0 || score > 100) throw std::invalid_argument("score out of range");
    if (!st.scores.emplace(Triple{s.rater_id, e.item, e.condition}, Score{sid, score, line.at("timestamp").get<std::int64_t>()})
             .second)
      throw std::invalid_argument("duplicate rating");
    st.rated_tokens.insert(token);
  } else if (type == "expire") {
    st.sessions.at(line.at("session_id").get<std::string>()).expired = true;
  } else {
    throw std::invalid_argument("unknown record type " + type);
  }
}

void RatingService::append(StudyState& st, const json& line) {
  write_all(st.fd, line.dump() + "\n", st.journal);
}

void RatingService::compact(StudyState& st) {
  std::vector<json> lines;
  std::vector<const Session*> ordered;
  for (const auto& [id, s] : st.sessions) ordered.push_back(&s);
  std::sort(ordered.begin(), ordered.end(), [](const Session* a, const Session* b) {
    return std::tie(a->created_ms, a->session_id) < std::tie(b->created_ms, b->session_id);
  });
  for (const auto* s : ordered) {
    json entries = json::array();
    for (const auto& e : s->entries)
      entries.push_back({st.def.items[e.item].item_id, st.def.conditions[e.condition], e.token});
    lines.push_back({{"type", "session"}, {"session_id", s->session_id}, {"rater_id", s->rater_id},
                     {"created_ms", s->created_ms}, {"expired", s->expired}, {"entries", entries}});
  }
  std::vector<std::pair<std::int64_t, json>> ratings;
  for (const auto& [triple, sc] : st.scores) {
    const auto& s = st.sessions.at(sc.session_id);
    const auto it = std::find_if(s.entries.begin(), s.entries.end(), [&](const Entry& e) {
      return e.item == std::get<1>(triple) && e.condition == std::get<2>(triple);
    });
    ratings.push_back({sc.timestamp, {{"type", "rating"}, {"session_id", sc.session_id}, {"token", it->token},
                                      {"score", sc.score}, {"timestamp", sc.timestamp}}});
  }
  std::stable_sort(ratings.begin(), ratings.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (auto& r : ratings) lines.push_back(std::move(r.second));

  const auto tmp = st.journal.string() + ".tmp";
  const int tfd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (tfd < 0) throw std::runtime_error(fmt::format("open {}: {}", tmp, std::strerror(errno)));
  std::string data;
  for (const auto& l : lines) data += l.dump() + "\n";
  try {
    write_all(tfd, data, tmp);
  } catch (...) {
    ::close(tfd);
    throw;
  }
  ::close(tfd);
  std::filesystem::rename(tmp, st.journal);
  if (st.fd >= 0) ::close(st.fd);
  st.fd = ::open(st.journal.c_str(), O_WRONLY | O_APPEND);
  if (st.fd < 0) throw std::runtime_error(fmt::format("open {}: {}", st.journal.string(), std::strerror(errno)));
}

RatingService::StudyState& RatingService::study(const std::string& study_id) const {
  const auto it = studies_.find(study_id);
  if (it == studies_.end()) throw RatingError(ErrorKind::NotFound, "unknown study");
  return *it->second;
}

std::pair<RatingService::StudyState*, RatingService::Session*> RatingService::live_session(
    const std::string& session_id) const {
  for (const auto& [id, st] : studies_) {
    const auto it = st->sessions.find(session_id);
    if (it == st->sessions.end()) continue;
    auto& s = it->second;
    if (s.expired || now() - s.created_ms > opts_.session_ttl_ms)
      throw RatingError(ErrorKind::Unauthorized, "session expired");
    return {st.get(), &s};
  }
  throw RatingError(ErrorKind::NotFound, "unknown session");
}

std::vector<std::size_t> RatingService::presentation_order(const StudyState& st, const std::string& rater_id) const {
  const std::size_t n = st.def.items.size() * st.def.conditions.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(derive_seed(opts_.seed, fnv1a(st.def.study_id)), fnv1a(rater_id)));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

SessionView RatingService::view(const StudyState& st, const Session& s) const {
  SessionView v;
  v.session_id = s.session_id;
  v.total = s.entries.size();
  v.next_index = v.total;
  for (std::size_t i = 0; i < s.entries.size(); ++i) {
    const bool rated = st.scores.count(Triple{s.rater_id, s.entries[i].item, s.entries[i].condition}) > 0;
    v.rated += rated;
    if (!rated && v.next_index == v.total) v.next_index = i;
  }
  return v;
}

SessionView RatingService::create_session(const std::string& study_id, const std::string& rater_id) {
  if (rater_id.empty()) throw RatingError(ErrorKind::Invalid, "rater_id must not be empty");
  std::lock_guard lock(mutex_);
  auto& st = study(study_id);
  const auto cur = st.current.find(rater_id);
  if (cur != st.current.end()) {
    auto& s = st.sessions.at(cur->second);
    const auto v = view(st, s);
    if (v.complete()) throw RatingError(ErrorKind::Conflict, "rater has completed the study");
    if (!s.expired && now() - s.created_ms <= opts_.session_ttl_ms) return v;
  }
  const std::size_t n_cond = st.def.conditions.size();
  json entries = json::array();
  for (std::size_t k : presentation_order(st, rater_id))
    entries.push_back({st.def.items[k / n_cond].item_id, st.def.conditions[k % n_cond], new_token()});
  const json line{{"type", "session"}, {"session_id", new_token()}, {"rater_id", rater_id},
                  {"created_ms", now()},  {"expired", false},        {"entries", entries}};
  append(st, line);
  apply(st, line);
  return view(st, st.sessions.at(line["session_id"].get<std::string>()));
}

SessionView RatingService::session(const std::string& session_id) const {
  std::lock_guard lock(mutex_);
  const auto [st, s] = live_session(session_id);
  return view(*st, *s);
}

EntryView RatingService::entry(const std::string& session_id, std::size_t index) const {
  std::lock_guard lock(mutex_);
  const auto [st, s] = live_session(session_id);
  if (index >= s->entries.size()) throw RatingError(ErrorKind::NotFound, "playlist index out of range");
  const auto& e = s->entries[index];
  return {index, s->entries.size(), e.token, st->scores.count(Triple{s->rater_id, e.item, e.condition}) > 0};
}

Clip RatingService::serve_clip(const std::string& session_id, std::size_t index) const {
  std::filesystem::path path;
  std::string token;
  {
    std::lock_guard lock(mutex_);
    const auto [st, s] = live_session(session_id);
    if (index >= s->entries.size()) throw RatingError(ErrorKind::NotFound, "playlist index out of range");
    const auto& e = s->entries[index];
    path = st->def.items[e.item].audio.at(st->def.conditions[e.condition]);
    token = e.token;
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read clip");
  Clip c;
  c.bytes.assign(std::istreambuf_iterator<char>(in), {});
  c.token = std::move(token);
  return c;
}

SessionView RatingService::submit_rating(const std::string& session_id, const std::string& token,
                                         const json& score) {
  std::lock_guard lock(mutex_);
  const auto [st, s] = live_session(session_id);
  const auto it = st->tokens.find(token);
  if (it == st->tokens.end() || it->second.first != session_id) throw RatingError(ErrorKind::NotFound, "unknown token");
  if (!score.is_number_integer()) throw RatingError(ErrorKind::Invalid, "score must be an integer between 0 and 100");
  const auto value = score.get<std::int64_t>();
  if (value < 0 || value > 100) throw RatingError(ErrorKind::Invalid, "score must be an integer between 0 and 100");
  const auto& e = s->entries[it->second.second];
  if (st->scores.count(Triple{s->rater_id, e.item, e.condition}))
    throw RatingError(ErrorKind::Conflict, "entry already rated");
  const json line{{"type", "rating"}, {"session_id", session_id}, {"token", token}, {"score", value},
                  {"timestamp", now()}};
  append(*st, line);
  apply(*st, line);
  return view(*st, *s);
}

Export RatingService::export_ratings(const std::string& study_id) const {
  std::lock_guard lock(mutex_);
  const auto& st = study(study_id);
  Export out;
  for (const auto& [rater, sid] : st.current) {
    for (std::size_t i = 0; i < st.def.items.size(); ++i)
      for (std::size_t c = 0; c < st.def.conditions.size(); ++c) {
        const auto it = st.scores.find(Triple{rater, i, c});
        if (it == st.scores.end()) {
          out.missing.push_back(fmt::format("{}/{}/{}", rater, st.def.items[i].item_id, st.def.conditions[c]));
          continue;
        }
        out.records.push_back({it->second.session_id, rater, st.def.items[i].item_id, st.def.conditions[c],
                               it->second.score, it->second.timestamp});
      }
  }
  return out;
}

void RatingService::expire_session(const std::string& session_id) {
  std::lock_guard lock(mutex_);
  for (auto& [id, st] : studies_) {
    if (!st->sessions.count(session_id)) continue;
    const json line{{"type", "expire"}, {"session_id", session_id}};
    append(*st, line);
    apply(*st, line);
    return;
  }
  throw RatingError(ErrorKind::NotFound, "unknown session");
}

}  // namespace restorer::rating
