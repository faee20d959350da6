#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "restorer/evaluation.hpp"

namespace restorer::rating {

struct StudyItem {
  std::string item_id;
  std::map<std::string, std::filesystem::path> audio;  // condition -> WAV file
};

struct StudyDefinition {
  std::string study_id;
  std::vector<std::string> conditions;
  // Synthetic studies rate the clean signal as one more condition named "clean".
  bool include_clean_reference = false;
  std::vector<StudyItem> items;

  /// Every item has every condition, ids are unique and non-empty, and the
  /// "clean" condition is present exactly when include_clean_reference is set.
  void validate() const;
};

nlohmann::json to_json(const StudyDefinition& s);
/// Relative audio paths are resolved against `base_dir`.
StudyDefinition study_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
StudyDefinition load_study(const std::filesystem::path& path);

enum class ErrorKind { Invalid, Unauthorized, NotFound, Conflict };

class RatingError : public std::runtime_error {
 public:
  RatingError(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }
  int http_status() const;

 private:
  ErrorKind kind_;
};

/// What a rater sees about their session.
struct SessionView {
  std::string session_id;
  std::size_t total = 0;
  std::size_t rated = 0;
  std::size_t next_index = 0;  // first unrated entry, == total when complete
  bool complete() const { return rated == total; }
};

struct EntryView {
  std::size_t index = 0;
  std::size_t total = 0;
  std::string token;
  bool rated = false;
};

struct Clip {
  std::vector<std::uint8_t> bytes;
  std::string token;
};

struct Export {
  std::vector<eval::RatingRecord> records;
  std::vector<std::string> missing;  // "rater/item/condition" triples without a score
};

struct ServiceOptions {
  std::filesystem::path journal_dir;
  std::uint64_t seed = 0;                        // presentation orders
  std::int64_t session_ttl_ms = 7LL * 24 * 3600 * 1000;
  std::function<std::int64_t()> clock;           // unix ms; system clock when empty
  std::function<std::string()> token_source;     // random 128-bit hex when empty
};

// Blinded listening-test sessions backed by one append-only JSON-lines journal
// per study. Every mutation is written and fsynced before it returns.
class RatingService {
 public:
  explicit RatingService(ServiceOptions opts);
  ~RatingService();
  RatingService(const RatingService&) = delete;
  RatingService& operator=(const RatingService&) = delete;

  /// Registers a study and replays (then compacts) its journal.
  void add_study(StudyDefinition study);
  std::vector<std::string> study_ids() const;

  /// Returns the rater's live session, or opens one. The presentation order
  /// depends only on (seed, study, rater). An expired session is replaced by a
  /// new one that keeps the ratings already given.
  SessionView create_session(const std::string& study_id, const std::string& rater_id);
  SessionView session(const std::string& session_id) const;
  EntryView entry(const std::string& session_id, std::size_t index) const;
  Clip serve_clip(const std::string& session_id, std::size_t index) const;
  SessionView submit_rating(const std::string& session_id, const std::string& token, const nlohmann::json& score);

  Export export_ratings(const std::string& study_id) const;

  /// Marks a session expired; later requests on it fail with Unauthorized.
  void expire_session(const std::string& session_id);

 private:
  struct Entry {
    std::size_t item = 0;
    std::size_t condition = 0;
    std::string token;
  };
  struct Session {
    std::string session_id;
    std::string rater_id;
    std::int64_t created_ms = 0;
    bool expired = false;
    std::vector<Entry> entries;
  };
  struct Score {
    std::string session_id;
    int score = 0;
    std::int64_t timestamp = 0;
  };
  struct StudyState;

  StudyState& study(const std::string& study_id) const;
  std::pair<StudyState*, Session*> live_session(const std::string& session_id) const;
  std::vector<std::size_t> presentation_order(const StudyState& st, const std::string& rater_id) const;
  std::string new_token();
  std::int64_t now() const;
  SessionView view(const StudyState& st, const Session& s) const;
  void apply(StudyState& st, const nlohmann::json& line);
  void append(StudyState& st, const nlohmann::json& line);
  void compact(StudyState& st);

  ServiceOptions opts_;
  mutable std::mutex mutex_;
  std::map<std::string, std::unique_ptr<StudyState>> studies_;
};

}  // namespace restorer::rating
