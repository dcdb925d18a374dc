#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace envdeploy {

// Every question the pipeline can ask an external decision maker. Each kind
// has a fixed context shape and a fixed reply payload shape, documented at
// the call sites that build the requests.
enum class DecisionKind {
  Sufficiency,     // are the retrieved files enough to configure the env
  Classify,        // which readiness level does a command validate
  Adjust,          // fix level assignment, suggest missing commands
  AnalyzeFailure,  // categorize a failed execution
  PlanRepair,      // turn an analysis into patch actions
  PolicyDecide,    // advance/stay/rollback, or pick the next command
  SearchSuggest,   // files worth retrieving next
};

std::string_view to_string(DecisionKind kind);
std::optional<DecisionKind> decision_kind_from_string(std::string_view name);

enum class ProviderKind { Remote, Scripted, Heuristic };

std::string_view to_string(ProviderKind kind);

struct DecisionRequest {
  DecisionKind kind = DecisionKind::Sufficiency;
  nlohmann::json context;  // already excerpted and redacted by the builder
  int budget_hint = 0;     // rough token allowance, 0 means provider default
};

struct DecisionResponse {
  DecisionKind kind = DecisionKind::Sufficiency;
  nlohmann::json payload;
  std::string rationale;
  ProviderKind provider = ProviderKind::Heuristic;
};

// One decision backend. Implementations must be deterministic given the
// request stream (the remote provider is as deterministic as its service).
// decide() throws ReasonerError when no usable reply can be produced;
// callers fall back to the built-in heuristics on that.
class DecisionProvider {
public:
  virtual ~DecisionProvider() = default;
  virtual DecisionResponse decide(const DecisionRequest& req) = 0;
  virtual ProviderKind kind() const = 0;
};

// Deterministic prompt text for a request. Same request, same bytes.
std::string render_prompt(const DecisionRequest& req);

// Head and tail of a long text with a truncation marker between.
std::string excerpt(const std::string& text, std::size_t byte_cap);

// Copy of an environment map with every value replaced by a placeholder.
// Context builders must pass environment data through this; values never
// reach a prompt.
nlohmann::json redacted_env(const std::map<std::string, std::string>& env);

// Pulls the first balanced JSON object out of free-form reply text.
// Returns nullopt when none parses.
std::optional<nlohmann::json> extract_json_object(const std::string& text);

// --- Providers ---------------------------------------------------------

std::unique_ptr<DecisionProvider> make_heuristic_provider();

// Replays recorded decisions in order; throws ScriptMismatch when the
// requested kind differs from the next recorded entry or the script is
// exhausted. Used by tests and offline fixtures.
class ScriptedProvider : public DecisionProvider {
public:
  struct Entry {
    DecisionKind kind;
    nlohmann::json payload;
    std::string rationale;
  };

  explicit ScriptedProvider(std::vector<Entry> entries);

  static ScriptedProvider from_json(const nlohmann::json& doc);
  static std::unique_ptr<ScriptedProvider> load_file(const std::string& path);

  DecisionResponse decide(const DecisionRequest& req) override;
  ProviderKind kind() const override { return ProviderKind::Scripted; }

  std::size_t remaining() const { return entries_.size() - position_; }
  bool exhausted() const { return position_ >= entries_.size(); }

private:
  std::vector<Entry> entries_;
  std::size_t position_ = 0;
};

struct RemoteConfig {
  std::string endpoint;  // e.g. "http://localhost:8080"
  std::string model;
  std::string api_key_env = "ENVDEPLOY_API_KEY";  // name only, read at send
  double temperature = 1.0;
  int timeout_s = 120;
  int max_in_flight = 4;
};

// Chat-completion client. Sends render_prompt(req) as a single user message,
// extracts the JSON object from the reply, retries once on an unparsable
// reply, then falls back to the heuristic provider for that request.
// Transport failures after the retry surface as ReasonerError.
std::unique_ptr<DecisionProvider> make_remote_provider(RemoteConfig config);

}  // namespace envdeploy
