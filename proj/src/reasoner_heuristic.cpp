#include "envdeploy/orchestrator.hpp"
#include "envdeploy/pyramid.hpp"
#include "envdeploy/reasoner.hpp"
#include "envdeploy/repo_index.hpp"

namespace envdeploy {

namespace {

// Built-in decision maker: every question is answered by the same rule
// tables the call sites use when no provider is wired in, expressed over
// the request context. Deterministic and offline.
class HeuristicProvider : public DecisionProvider {
public:
  DecisionResponse decide(const DecisionRequest& req) override {
    DecisionResponse resp;
    resp.kind = req.kind;
    resp.provider = ProviderKind::Heuristic;
    switch (req.kind) {
      case DecisionKind::Sufficiency:
        resp.payload = sufficiency(req.context);
        resp.rationale = "manifest/docs rule";
        break;
      case DecisionKind::Classify:
        resp.payload = classify(req.context);
        break;
      case DecisionKind::Adjust:
        resp.payload = adjust(req.context);
        break;
      case DecisionKind::AnalyzeFailure:
        resp.payload = heuristic_analysis_from_context(req.context);
        resp.rationale = "diagnostic pattern table";
        break;
      case DecisionKind::PlanRepair:
        resp.payload = heuristic_plan_from_context(req.context);
        resp.rationale = "category fix table";
        break;
      case DecisionKind::PolicyDecide:
        resp.payload = policy(req.context);
        break;
      case DecisionKind::SearchSuggest:
        resp.payload = {
            {"suggestions",
             {"dependency manifest", "readme", "workflows"}},
        };
        resp.rationale = "standard environment files";
        break;
    }
    return resp;
  }

  ProviderKind kind() const override { return ProviderKind::Heuristic; }

private:
  static nlohmann::json sufficiency(const nlohmann::json& context) {
    std::vector<RetrievedFile> files;
    if (context.contains("files") && context.at("files").is_array()) {
      for (const nlohmann::json& f : context.at("files")) {
        RetrievedFile rf;
        rf.relative_path = f.value("path", "");
        rf.content = f.value("excerpt", f.value("content", ""));
        rf.kind = classify_path(rf.relative_path);
        files.push_back(std::move(rf));
      }
    }
    const SufficiencyVerdict v = heuristic_sufficiency(files);
    return {
        {"verdict",
         v.verdict == Sufficiency::Sufficient ? "sufficient" : "need_more"},
        {"suggestions", v.suggestions},
    };
  }

  static nlohmann::json classify(const nlohmann::json& context) {
    const std::string command = context.value("command", "");
    auto [level, why] = heuristic_classify_text(command);
    if (!level) {
      return {{"rejected", true}, {"reason", why}};
    }
    return {{"level", std::string(to_string(*level))}, {"reason", why}};
  }

  static nlohmann::json adjust(const nlohmann::json& context) {
    if (context.contains("command")) {
      // Duplicate placement: the rule level when one matches, else the
      // lowest level the command currently occupies.
      const std::string command = context.value("command", "");
      auto [level, why] = heuristic_classify_text(command);
      (void)why;
      std::string chosen;
      if (level) {
        chosen = std::string(to_string(*level));
      } else if (context.contains("current_levels") &&
                 context.at("current_levels").is_array() &&
                 !context.at("current_levels").empty() &&
                 context.at("current_levels").front().is_string()) {
        chosen = context.at("current_levels").front().get<std::string>();
      } else {
        chosen = "installable";
      }
      return {{"level", chosen}};
    }
    // Supplementation: only an empty level gets standard commands, and only
    // when the stack profile justifies them.
    const auto level = level_from_string(context.value("level", ""));
    const bool have_commands = context.contains("commands") &&
                               context.at("commands").is_array() &&
                               !context.at("commands").empty();
    if (!level || have_commands) {
      return {{"missing", nlohmann::json::array()}};
    }
    StackProfile profile;
    if (context.contains("stack_traits") &&
        context.at("stack_traits").is_array()) {
      for (const nlohmann::json& t : context.at("stack_traits")) {
        if (t.is_string()) profile.traits.push_back(t.get<std::string>());
      }
    }
    TestPyramid empty;
    return {{"missing", heuristic_supplements(empty, *level, &profile)}};
  }

  static nlohmann::json policy(const nlohmann::json& context) {
    const std::string phase = context.value("phase", "transition");
    if (phase == "select") {
      if (context.contains("default") && context.at("default").is_string()) {
        return {{"command", context.at("default").get<std::string>()}};
      }
      return nlohmann::json::object();
    }
    const bool satisfied = context.value("level_satisfied", false);
    return {{"action", satisfied ? "advance" : "stay"}};
  }
};

}  // namespace

std::unique_ptr<DecisionProvider> make_heuristic_provider() {
  return std::make_unique<HeuristicProvider>();
}

}  // namespace envdeploy
