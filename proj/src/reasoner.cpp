#include "envdeploy/reasoner.hpp"

#include <algorithm>

#include "envdeploy/maturity.hpp"

namespace envdeploy {

std::string_view to_string(DecisionKind kind) {
  switch (kind) {
    case DecisionKind::Sufficiency:
      return "sufficiency";
    case DecisionKind::Classify:
      return "classify";
    case DecisionKind::Adjust:
      return "adjust";
    case DecisionKind::AnalyzeFailure:
      return "analyze_failure";
    case DecisionKind::PlanRepair:
      return "plan_repair";
    case DecisionKind::PolicyDecide:
      return "policy_decide";
    case DecisionKind::SearchSuggest:
      return "search_suggest";
  }
  return "sufficiency";
}

std::optional<DecisionKind> decision_kind_from_string(std::string_view name) {
  static const std::pair<std::string_view, DecisionKind> kMap[] = {
      {"sufficiency", DecisionKind::Sufficiency},
      {"classify", DecisionKind::Classify},
      {"adjust", DecisionKind::Adjust},
      {"analyze_failure", DecisionKind::AnalyzeFailure},
      {"plan_repair", DecisionKind::PlanRepair},
      {"policy_decide", DecisionKind::PolicyDecide},
      {"search_suggest", DecisionKind::SearchSuggest},
  };
  for (const auto& [n, k] : kMap) {
    if (n == name) return k;
  }
  return std::nullopt;
}

std::string_view to_string(ProviderKind kind) {
  switch (kind) {
    case ProviderKind::Remote:
      return "remote";
    case ProviderKind::Scripted:
      return "scripted";
    case ProviderKind::Heuristic:
      return "heuristic";
  }
  return "heuristic";
}

std::string excerpt(const std::string& text, std::size_t byte_cap) {
  return truncate_stream(text, byte_cap);
}

nlohmann::json redacted_env(const std::map<std::string, std::string>& env) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [k, v] : env) {
    (void)v;
    out[k] = "<redacted>";
  }
  return out;
}

std::optional<nlohmann::json> extract_json_object(const std::string& text) {
  for (std::size_t start = text.find('{'); start != std::string::npos;
       start = text.find('{', start + 1)) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < text.size(); ++i) {
      const char c = text[i];
      if (escaped) {
        escaped = false;
        continue;
      }
      if (in_string) {
        if (c == '\\') escaped = true;
        else if (c == '"') in_string = false;
        continue;
      }
      if (c == '"') {
        in_string = true;
      } else if (c == '{') {
        ++depth;
      } else if (c == '}') {
        --depth;
        if (depth == 0) {
          const std::string body = text.substr(start, i - start + 1);
          const nlohmann::json doc =
              nlohmann::json::parse(body, nullptr, false);
          if (!doc.is_discarded() && doc.is_object()) return doc;
          break;  // malformed at this start; try the next '{'
        }
      }
    }
  }
  return std::nullopt;
}

namespace {

const char* kLevelGlossary =
    "Readiness levels: installable (project dependencies install cleanly), "
    "testable (the test suite or toolchain checks execute), "
    "runnable (the application itself starts).\n";

void append_context_block(std::string& p, const nlohmann::json& context) {
  // Alphabetical key order from the json object keeps the bytes stable.
  p += "Context:\n";
  p += context.dump(2);
  p += "\n";
}

}  // namespace

std::string render_prompt(const DecisionRequest& req) {
  std::string p;
  switch (req.kind) {
    case DecisionKind::Sufficiency:
      p += "You prepare development environments from repository files.\n";
      append_context_block(p, req.context);
      p += "Decide whether these files carry enough information to install "
           "dependencies and build the project.\n";
      p += "Reply with a JSON object: {\"verdict\": \"sufficient\" | "
           "\"need_more\", \"suggestions\": [\"what to look for next\"]}\n";
      break;
    case DecisionKind::Classify:
      p += "You sort validation commands into environment readiness levels.\n";
      p += kLevelGlossary;
      append_context_block(p, req.context);
      p += "Which level does executing this command validate?\n";
      p += "Reply with a JSON object: {\"level\": \"installable\" | "
           "\"testable\" | \"runnable\"} or {\"rejected\": true}\n";
      break;
    case DecisionKind::Adjust:
      p += "You review the command set used to validate a prepared "
           "environment.\n";
      p += kLevelGlossary;
      append_context_block(p, req.context);
      p += "Is this command appropriate for this level?\n";
      p += "What common commands are missing?\n";
      if (req.context.contains("command")) {
        p += "Reply with a JSON object: {\"level\": \"installable\" | "
             "\"testable\" | \"runnable\"}\n";
      } else {
        p += "Reply with a JSON object: {\"missing\": [\"command\", ...]}\n";
      }
      break;
    case DecisionKind::AnalyzeFailure:
      p += "You diagnose failed shell executions inside a container.\n";
      append_context_block(p, req.context);
      p += "Name the failure category and quote the decisive diagnostic "
           "line verbatim.\n";
      p += "Reply with a JSON object: {\"category\": "
           "\"missing_system_dependency\" | \"missing_language_dependency\" | "
           "\"missing_env_var\" | \"compilation_error\" | \"runtime_error\" | "
           "\"missing_artifact\" | \"unknown\", \"evidence\": \"...\", "
           "\"detail\": \"package or token\", \"faulty_line_text\": \"...\"}\n";
      break;
    case DecisionKind::PlanRepair:
      p += "You repair a sectioned bootstrap script after a failed "
           "execution.\n";
      append_context_block(p, req.context);
      p += "Propose patch actions. Sections: 3 base packages, 4 language "
           "environment, 5 project build, 6 completion. Section 1 and 2 are "
           "off limits.\n";
      p += "Reply with a JSON object: {\"mode\": \"single_command\" | "
           "\"whole_script\", \"actions\": [{\"kind\": \"append_line\", "
           "\"section\": 4, \"text\": \"...\"} | {\"kind\": \"replace_line\", "
           "\"line_id\": 7, \"text\": \"...\"} | {\"kind\": \"delete_line\", "
           "\"line_id\": 7}]}\n";
      break;
    case DecisionKind::PolicyDecide:
      p += "You steer a deployment validation loop.\n";
      p += kLevelGlossary;
      append_context_block(p, req.context);
      if (req.context.value("phase", "") == "select") {
        p += "Pick the next validation command to run.\n";
        p += "Reply with a JSON object: {\"command\": \"...\"}\n";
      } else {
        p += "Decide how the current level should move.\n";
        p += "Reply with a JSON object: {\"action\": \"advance\" | \"stay\" | "
             "\"rollback\"}\n";
      }
      break;
    case DecisionKind::SearchSuggest:
      p += "You locate files relevant to environment setup in a repository "
           "listing.\n";
      append_context_block(p, req.context);
      p += "Reply with a JSON object: {\"suggestions\": [\"path\", ...]}\n";
      break;
  }
  return p;
}

}  // namespace envdeploy
