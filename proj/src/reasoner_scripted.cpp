#include <fstream>
#include <sstream>

#include "envdeploy/errors.hpp"
#include "envdeploy/reasoner.hpp"

namespace envdeploy {

ScriptedProvider::ScriptedProvider(std::vector<Entry> entries)
    : entries_(std::move(entries)) {}

ScriptedProvider ScriptedProvider::from_json(const nlohmann::json& doc) {
  const nlohmann::json* list = &doc;
  if (doc.is_object() && doc.contains("session")) {
    list = &doc.at("session");
  }
  if (!list->is_array()) {
    throw ValidationError("scripted session must be a JSON array");
  }
  std::vector<Entry> entries;
  entries.reserve(list->size());
  for (const nlohmann::json& item : *list) {
    if (!item.is_object() || !item.contains("kind") ||
        !item.at("kind").is_string()) {
      throw ValidationError("scripted entry needs a string 'kind'");
    }
    const auto kind =
        decision_kind_from_string(item.at("kind").get<std::string>());
    if (!kind) {
      throw ValidationError("unknown decision kind '" +
                            item.at("kind").get<std::string>() + "'");
    }
    Entry e;
    e.kind = *kind;
    e.payload = item.value("payload", nlohmann::json::object());
    e.rationale = item.value("rationale", "");
    entries.push_back(std::move(e));
  }
  return ScriptedProvider(std::move(entries));
}

std::unique_ptr<ScriptedProvider> ScriptedProvider::load_file(
    const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open scripted session: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("scripted session is not valid JSON: " +
                          std::string(e.what()));
  }
  return std::make_unique<ScriptedProvider>(from_json(doc));
}

DecisionResponse ScriptedProvider::decide(const DecisionRequest& req) {
  if (position_ >= entries_.size()) {
    throw ScriptMismatch("scripted session exhausted at request " +
                         std::to_string(position_) + " (" +
                         std::string(to_string(req.kind)) + ")");
  }
  const Entry& entry = entries_[position_];
  if (entry.kind != req.kind) {
    throw ScriptMismatch("scripted session entry " + std::to_string(position_) +
                         " is " + std::string(to_string(entry.kind)) +
                         ", request is " + std::string(to_string(req.kind)));
  }
  ++position_;
  DecisionResponse resp;
  resp.kind = req.kind;
  resp.payload = entry.payload;
  resp.rationale = entry.rationale;
  resp.provider = ProviderKind::Scripted;
  return resp;
}

}  // namespace envdeploy
