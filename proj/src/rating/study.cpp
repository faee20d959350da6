#include <fstream>
#include <set>

#include "restorer/rating/service.hpp"

namespace restorer::rating {

using nlohmann::json;

void StudyDefinition::validate() const {
  if (study_id.empty()) throw std::invalid_argument("study: empty study_id");
  if (study_id.find_first_of("/\\. ") != std::string::npos)
    throw std::invalid_argument("study: study_id may not contain '/', '\\', '.' or spaces");
  if (conditions.empty()) throw std::invalid_argument("study: no conditions");
  if (items.empty()) throw std::invalid_argument("study: no items");
  std::set<std::string> conds;
  for (const auto& c : conditions) {
    if (c.empty()) throw std::invalid_argument("study: empty condition name");
    if (!conds.insert(c).second) throw std::invalid_argument("study: duplicate condition " + c);
  }
  if (include_clean_reference != (conds.count("clean") > 0))
    throw std::invalid_argument(include_clean_reference
                                    ? "study: include_clean_reference needs a condition named \"clean\""
                                    : "study: condition \"clean\" requires include_clean_reference");
  std::set<std::string> ids;
  for (const auto& item : items) {
    if (item.item_id.empty()) throw std::invalid_argument("study: empty item_id");
    if (!ids.insert(item.item_id).second) throw std::invalid_argument("study: duplicate item " + item.item_id);
    for (const auto& c : conditions)
      if (!item.audio.count(c)) throw std::invalid_argument("study: item " + item.item_id + " lacks condition " + c);
    if (item.audio.size() != conditions.size())
      throw std::invalid_argument("study: item " + item.item_id + " has audio for an undeclared condition");
  }
}

json to_json(const StudyDefinition& s) {
  json items = json::array();
  for (const auto& item : s.items) {
    json audio = json::object();
    for (const auto& [c, p] : item.audio) audio[c] = p.string();
    items.push_back({{"item_id", item.item_id}, {"audio", audio}});
  }
  return {{"study_id", s.study_id},
          {"conditions", s.conditions},
          {"include_clean_reference", s.include_clean_reference},
          {"items", items}};
}

StudyDefinition study_from_json(const json& j, const std::filesystem::path& base_dir) {
  StudyDefinition s;
  s.study_id = j.at("study_id").get<std::string>();
  s.conditions = j.at("conditions").get<std::vector<std::string>>();
  s.include_clean_reference = j.value("include_clean_reference", false);
  for (const auto& ij : j.at("items")) {
    StudyItem item;
    item.item_id = ij.at("item_id").get<std::string>();
    for (const auto& [c, p] : ij.at("audio").items()) {
      std::filesystem::path path = p.get<std::string>();
      if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
      item.audio[c] = path;
    }
    s.items.push_back(std::move(item));
  }
  s.validate();
  return s;
}

StudyDefinition load_study(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open study file " + path.string());
  return study_from_json(json::parse(in), path.parent_path());
}

}  // namespace restorer::rating
