#include "envdeploy/orchestrator.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <regex>

#include "envdeploy/errors.hpp"

namespace envdeploy {

namespace {

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string cur;
  for (char c : text) {
    if (c == '\n') {
      lines.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  if (!cur.empty()) lines.push_back(cur);
  return lines;
}

}  // namespace

std::string_view to_string(RepairMode mode) {
  switch (mode) {
    case RepairMode::Hybrid:
      return "hybrid";
    case RepairMode::WholeScript:
      return "whole_script";
    case RepairMode::SingleCommand:
      return "single_command";
  }
  return "hybrid";
}

std::optional<RepairMode> repair_mode_from_string(std::string_view name) {
  if (name == "hybrid") return RepairMode::Hybrid;
  if (name == "whole_script" || name == "whole-script") {
    return RepairMode::WholeScript;
  }
  if (name == "single_command" || name == "single-command") {
    return RepairMode::SingleCommand;
  }
  return std::nullopt;
}

LoopBudget LoopBudget::defaults_for(RepairMode mode) {
  LoopBudget b;
  if (mode == RepairMode::SingleCommand) b.total_step_limit = 250;
  return b;
}

std::string_view to_string(FailureCategory category) {
  switch (category) {
    case FailureCategory::MissingSystemDependency:
      return "missing_system_dependency";
    case FailureCategory::MissingLanguageDependency:
      return "missing_language_dependency";
    case FailureCategory::MissingEnvVar:
      return "missing_env_var";
    case FailureCategory::CompilationError:
      return "compilation_error";
    case FailureCategory::RuntimeError:
      return "runtime_error";
    case FailureCategory::MissingArtifact:
      return "missing_artifact";
    case FailureCategory::Unknown:
      return "unknown";
  }
  return "unknown";
}

std::optional<FailureCategory> failure_category_from_string(
    std::string_view name) {
  static const std::pair<std::string_view, FailureCategory> kMap[] = {
      {"missing_system_dependency", FailureCategory::MissingSystemDependency},
      {"missing_language_dependency",
       FailureCategory::MissingLanguageDependency},
      {"missing_env_var", FailureCategory::MissingEnvVar},
      {"compilation_error", FailureCategory::CompilationError},
      {"runtime_error", FailureCategory::RuntimeError},
      {"missing_artifact", FailureCategory::MissingArtifact},
      {"unknown", FailureCategory::Unknown},
  };
  for (const auto& [n, c] : kMap) {
    if (n == name) return c;
  }
  return std::nullopt;
}

std::string_view to_string(StepPhase phase) {
  switch (phase) {
    case StepPhase::ExecutionLoop:
      return "execution_loop";
    case StepPhase::FeedbackLoop:
      return "feedback_loop";
    case StepPhase::Repair:
      return "repair";
  }
  return "execution_loop";
}

std::optional<StepPhase> step_phase_from_string(std::string_view name) {
  if (name == "execution_loop") return StepPhase::ExecutionLoop;
  if (name == "feedback_loop") return StepPhase::FeedbackLoop;
  if (name == "repair") return StepPhase::Repair;
  return std::nullopt;
}

// --- Failure analysis ---------------------------------------------------

namespace {

struct PatternHit {
  FailureCategory category;
  std::string evidence;
  std::string detail;
};

// Ordered diagnostic table. Specific compiler/header patterns outrank the
// generic missing-file pattern, and dependency patterns outrank the generic
// traceback pattern, because the earlier ones carry an actionable detail.
std::optional<PatternHit> scan_lines(const std::vector<std::string>& lines) {
  struct Rule {
    FailureCategory category;
    std::regex re;
    bool has_group;
  };
  static const std::vector<Rule> kRules = [] {
    std::vector<Rule> r;
    auto add = [&r](FailureCategory c, const char* pattern, bool group) {
      r.push_back(Rule{c, std::regex(pattern), group});
    };
    // Language-level dependencies.
    add(FailureCategory::MissingLanguageDependency,
        R"(ModuleNotFoundError: No module named '([^']+)')", true);
    add(FailureCategory::MissingLanguageDependency,
        R"(ImportError: No module named '?([A-Za-z0-9_.]+)'?)", true);
    add(FailureCategory::MissingLanguageDependency,
        R"(Cannot find module '([^']+)')", true);
    add(FailureCategory::MissingLanguageDependency,
        R"(Could not find a version that satisfies the requirement ([A-Za-z0-9_.\[\]-]+))",
        true);
    add(FailureCategory::MissingLanguageDependency,
        R"(No matching distribution found for ([A-Za-z0-9_.\[\]-]+))", true);
    // System-level dependencies.
    add(FailureCategory::MissingSystemDependency,
        R"(([A-Za-z0-9_.+-]+): command not found)", true);
    add(FailureCategory::MissingSystemDependency,
        R"(sh: ([A-Za-z0-9_.+-]+): not found)", true);
    add(FailureCategory::MissingSystemDependency,
        R"(E: Unable to locate package (\S+))", true);
    add(FailureCategory::MissingSystemDependency,
        R"re([Dd]ependency "?([A-Za-z0-9_.+-]+)"? (?:not found|found: NO))re",
        true);
    add(FailureCategory::MissingSystemDependency,
        R"(No package '([^']+)' found)", true);
    add(FailureCategory::MissingSystemDependency,
        R"(Package ([A-Za-z0-9_.+-]+) was not found in the pkg-config search path)",
        true);
    add(FailureCategory::MissingSystemDependency,
        R"(error while loading shared libraries: ([^:]+):)", true);
    // Environment variables.
    add(FailureCategory::MissingEnvVar,
        R"(([A-Z_][A-Z0-9_]*): unbound variable)", true);
    add(FailureCategory::MissingEnvVar,
        R"([Ee]nvironment variable '?([A-Z_][A-Z0-9_]*)'? (?:is )?(?:not set|missing|required|unset))",
        true);
    add(FailureCategory::MissingEnvVar, R"(KeyError: '([A-Z_][A-Z0-9_]{2,})')",
        true);
    // Compilation problems, including missing headers.
    add(FailureCategory::CompilationError,
        R"(fatal error: ([^:]+): No such file or directory)", true);
    add(FailureCategory::CompilationError,
        R"([^ :]+\.(?:c|cc|cpp|cxx|h|hpp|java|rs|go|ts|tsx|cs):[0-9]+(?::[0-9]+)?:.*error)",
        false);
    add(FailureCategory::CompilationError, R"(SyntaxError:)", false);
    add(FailureCategory::CompilationError, R"(error: cannot find symbol)",
        false);
    add(FailureCategory::CompilationError, R"(undefined reference to)", false);
    // Missing files and directories.
    add(FailureCategory::MissingArtifact, R"(can't open file '([^']+)')", true);
    add(FailureCategory::MissingArtifact,
        R"(FileNotFoundError: \[Errno 2\][^:]*: '([^']+)')", true);
    add(FailureCategory::MissingArtifact,
        R"(ENOENT: no such file or directory,[^']*'([^']+)')", true);
    add(FailureCategory::MissingArtifact,
        R"(([^\s:'"]+): No such file or directory)", true);
    // Crashes without a more specific signature.
    add(FailureCategory::RuntimeError, R"(Traceback \(most recent call last\))",
        false);
    add(FailureCategory::RuntimeError, R"(Segmentation fault)", false);
    add(FailureCategory::RuntimeError, R"(core dumped)", false);
    add(FailureCategory::RuntimeError, R"(panic:)", false);
    add(FailureCategory::RuntimeError, R"(Exception in thread)", false);
    add(FailureCategory::RuntimeError, R"(npm ERR! code ELIFECYCLE)", false);
    return r;
  }();

  for (const Rule& rule : kRules) {
    for (const std::string& line : lines) {
      std::smatch m;
      if (std::regex_search(line, m, rule.re)) {
        PatternHit hit;
        hit.category = rule.category;
        hit.evidence = line;
        if (rule.has_group && m.size() > 1) hit.detail = m[1].str();
        // A relative or absolute module path is a missing file, not a
        // missing package.
        if (hit.category == FailureCategory::MissingLanguageDependency &&
            (hit.detail.rfind("./", 0) == 0 || hit.detail.rfind("/", 0) == 0 ||
             hit.detail.rfind("../", 0) == 0)) {
          hit.category = FailureCategory::MissingArtifact;
        }
        return hit;
      }
    }
  }
  return std::nullopt;
}

std::string last_nonempty_line(const std::vector<std::string>& lines) {
  for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
    if (!it->empty()) return *it;
  }
  return "";
}

constexpr const char* kFaultMarker = "failed command: ";

std::string marker_command(const std::vector<std::string>& lines) {
  for (const std::string& line : lines) {
    const std::size_t pos = line.find(kFaultMarker);
    if (pos != std::string::npos) {
      return line.substr(pos + std::string_view(kFaultMarker).size());
    }
  }
  return "";
}

}  // namespace

nlohmann::json heuristic_analysis_from_context(const nlohmann::json& context) {
  const int exit_code = context.value("exit", 1);
  const std::string stderr_text = context.value("stderr", "");
  const std::string stdout_text = context.value("stdout", "");
  const std::vector<std::string> err_lines = split_lines(stderr_text);
  const std::vector<std::string> out_lines = split_lines(stdout_text);

  nlohmann::json result = {
      {"category", "unknown"},
      {"evidence", ""},
      {"detail", ""},
      {"faulty_line_text", marker_command(err_lines)},
  };

  if (exit_code == kTimeoutExitCode) {
    result["category"] = "runtime_error";
    result["evidence"] = last_nonempty_line(err_lines);
    result["detail"] = "timeout";
    return result;
  }

  std::optional<PatternHit> hit = scan_lines(err_lines);
  if (!hit) hit = scan_lines(out_lines);
  if (hit) {
    result["category"] = std::string(to_string(hit->category));
    result["evidence"] = hit->evidence;
    result["detail"] = hit->detail;
    return result;
  }

  std::string evidence = last_nonempty_line(err_lines);
  if (evidence.empty()) evidence = last_nonempty_line(out_lines);
  result["evidence"] = evidence;
  return result;
}

namespace {

nlohmann::json analysis_context(const ExecOutcome& failed) {
  return nlohmann::json{
      {"command", failed.command},
      {"exit", failed.exit_code},
      {"stderr", excerpt(failed.stderr_text, 8192)},
      {"stdout", excerpt(failed.stdout_text, 8192)},
  };
}

FailureAnalysis analysis_from_payload(const nlohmann::json& payload,
                                      const ExecOutcome& failed,
                                      const BashFile& bf) {
  FailureAnalysis out;
  const auto category =
      failure_category_from_string(payload.value("category", ""));
  out.category = category.value_or(FailureCategory::Unknown);
  out.evidence = payload.value("evidence", "");
  out.detail = payload.value("detail", "");
  const std::string faulty_text = payload.value("faulty_line_text", "");
  if (!faulty_text.empty()) out.faulty_line = bf.find_line_by_text(faulty_text);
  return out;
}

bool evidence_verbatim(const std::string& evidence, const ExecOutcome& failed) {
  if (evidence.empty()) return true;
  return failed.stderr_text.find(evidence) != std::string::npos ||
         failed.stdout_text.find(evidence) != std::string::npos;
}

}  // namespace

FailureAnalysis analyze_failure(const ExecOutcome& failed, const BashFile& bf,
                                DecisionProvider* reasoner) {
  const nlohmann::json context = analysis_context(failed);

  auto heuristic = [&]() {
    return analysis_from_payload(heuristic_analysis_from_context(context),
                                 failed, bf);
  };

  if (!reasoner) return heuristic();

  DecisionRequest req;
  req.kind = DecisionKind::AnalyzeFailure;
  req.context = context;
  try {
    const DecisionResponse resp = reasoner->decide(req);
    FailureAnalysis out = analysis_from_payload(resp.payload, failed, bf);
    if (!failure_category_from_string(resp.payload.value("category", ""))) {
      return heuristic();
    }
    // The quoted diagnostic must actually come from the output; anything
    // else is discarded along with the rest of the reply.
    if (!evidence_verbatim(out.evidence, failed)) return heuristic();
    return out;
  } catch (const ReasonerError&) {
    return heuristic();
  }
}

// --- Repair planning ----------------------------------------------------

namespace {

bool safe_detail_token(const std::string& detail) {
  if (detail.empty() || detail.size() > 120) return false;
  return std::all_of(detail.begin(), detail.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '_' || c == '.' || c == '/' || c == '+' ||
           c == '-' || c == '@';
  });
}

// One-line fix for the categories that have an obvious append, as
// (section, text). Nullopt when the category needs more than one line.
std::optional<std::pair<int, std::string>> single_fix_line(
    FailureCategory category, const std::string& detail,
    const std::string& evidence) {
  switch (category) {
    case FailureCategory::MissingSystemDependency:
      if (!safe_detail_token(detail)) return std::nullopt;
      return {{3, "pkg_install " + detail}};
    case FailureCategory::MissingLanguageDependency: {
      if (!safe_detail_token(detail)) return std::nullopt;
      const bool node = evidence.find("Cannot find module") != std::string::npos;
      return {{4, (node ? "npm install " : "pip install ") + detail}};
    }
    case FailureCategory::MissingEnvVar: {
      if (detail.empty() || !std::all_of(detail.begin(), detail.end(),
                                         [](unsigned char c) {
                                           return std::isupper(c) ||
                                                  std::isdigit(c) || c == '_';
                                         })) {
        return std::nullopt;
      }
      return {{4, "export " + detail + "=\"${" + detail + ":-}\""}};
    }
    case FailureCategory::MissingArtifact: {
      if (!safe_detail_token(detail)) return std::nullopt;
      const std::string base = detail.substr(detail.find_last_of('/') + 1);
      if (detail.back() == '/' || base.find('.') == std::string::npos) {
        return {{5, "mkdir -p '" + detail + "'"}};
      }
      return {{5, "mkdir -p \"$(dirname '" + detail + "')\" && touch '" +
                      detail + "'"}};
    }
    default:
      return std::nullopt;
  }
}

nlohmann::json script_lines_json(const BashFile& bf) {
  nlohmann::json arr = nlohmann::json::array();
  for (const Section& sec : bf.sections()) {
    for (const ScriptLine& line : sec.lines) {
      arr.push_back({
          {"id", line.line_id},
          {"section", sec.id},
          {"text", line.text},
          {"origin", std::string(to_string(line.origin))},
      });
    }
  }
  return arr;
}

}  // namespace

nlohmann::json heuristic_plan_from_context(const nlohmann::json& context) {
  const auto category =
      failure_category_from_string(context.value("category", "unknown"))
          .value_or(FailureCategory::Unknown);
  const std::string detail = context.value("detail", "");
  const std::string evidence = context.value("evidence", "");
  const std::string mode = context.value("suggested_mode", "single_command");
  const auto fix = single_fix_line(category, detail, evidence);

  if (mode != "whole_script") {
    nlohmann::json actions = nlohmann::json::array();
    if (fix) {
      actions.push_back({
          {"kind", "append_line"},
          {"section", fix->first},
          {"text", fix->second},
      });
    }
    return {{"mode", "single_command"}, {"actions", actions}};
  }

  // Whole rebuild: drop sections 3..6 and regenerate them from the stack
  // profile, keeping previously added repair lines and the new fix.
  std::vector<std::string> traits;
  if (context.contains("stack_traits") && context.at("stack_traits").is_array()) {
    for (const nlohmann::json& t : context.at("stack_traits")) {
      if (t.is_string()) traits.push_back(t.get<std::string>());
    }
  }
  StackProfile profile;
  profile.traits = traits;
  const BashFile tmpl = BashFile::from_template(profile);

  nlohmann::json actions = nlohmann::json::array();
  std::vector<std::vector<std::string>> retained(7);
  if (context.contains("script") && context.at("script").is_array()) {
    for (const nlohmann::json& line : context.at("script")) {
      const int section = line.value("section", 0);
      if (section < 3 || section > 6) continue;
      actions.push_back({
          {"kind", "delete_line"},
          {"line_id", line.value("id", 0)},
      });
      if (line.value("origin", "") == "repair") {
        const std::string text = line.value("text", "");
        auto& bucket = retained[static_cast<std::size_t>(section)];
        if (!text.empty() &&
            std::find(bucket.begin(), bucket.end(), text) == bucket.end()) {
          bucket.push_back(text);
        }
      }
    }
  }

  for (int s = 3; s <= 6; ++s) {
    std::vector<std::string> appended;
    auto append = [&](const std::string& text) {
      if (std::find(appended.begin(), appended.end(), text) != appended.end()) {
        return;
      }
      appended.push_back(text);
      actions.push_back({
          {"kind", "append_line"},
          {"section", s},
          {"text", text},
      });
    };
    for (const ScriptLine& line : tmpl.section(s).lines) append(line.text);
    for (const std::string& text : retained[static_cast<std::size_t>(s)]) {
      append(text);
    }
    if (fix && fix->first == s) append(fix->second);
  }
  return {{"mode", "whole_script"}, {"actions", actions}};
}

namespace {

std::optional<RepairPlan> plan_from_payload(const nlohmann::json& payload,
                                            const BashFile& bf,
                                            const OrchestratorConfig& config,
                                            const FailureAnalysis& analysis) {
  if (!payload.is_object()) return std::nullopt;
  const auto mode = repair_mode_from_string(payload.value("mode", ""));
  if (!mode || *mode == RepairMode::Hybrid) return std::nullopt;
  // Ablation modes are hard constraints on every plan.
  if (config.repair_mode == RepairMode::SingleCommand &&
      *mode != RepairMode::SingleCommand) {
    return std::nullopt;
  }
  if (config.repair_mode == RepairMode::WholeScript &&
      *mode != RepairMode::WholeScript) {
    return std::nullopt;
  }
  if (!payload.contains("actions") || !payload.at("actions").is_array()) {
    return std::nullopt;
  }

  RepairPlan plan;
  plan.mode = *mode;
  const std::string cause = std::string(to_string(analysis.category)) +
                            (analysis.evidence.empty()
                                 ? ""
                                 : ": " + excerpt(analysis.evidence, 160));
  for (const nlohmann::json& action : payload.at("actions")) {
    if (!action.is_object()) return std::nullopt;
    RepairRecord record;
    record.cause = cause;
    record.timestamp_ms = now_ms();
    const std::string kind = action.value("kind", "");
    if (kind == "append_line") {
      record.kind = RepairKind::AppendLine;
      record.target_section = action.value("section", 0);
      if (record.target_section < 2 ||
          record.target_section > BashFile::kSectionCount) {
        return std::nullopt;
      }
      if (!action.contains("text") || !action.at("text").is_string()) {
        return std::nullopt;
      }
      record.new_text = action.at("text").get<std::string>();
    } else if (kind == "replace_line" || kind == "delete_line") {
      record.kind = kind == "replace_line" ? RepairKind::ReplaceLine
                                           : RepairKind::DeleteLine;
      record.target_line = action.value("line_id", std::uint64_t{0});
      const int section = bf.section_of_line(record.target_line);
      if (section < 2) return std::nullopt;  // absent line or section 1
      if (record.kind == RepairKind::ReplaceLine) {
        if (!action.contains("text") || !action.at("text").is_string()) {
          return std::nullopt;
        }
        record.new_text = action.at("text").get<std::string>();
      }
    } else {
      return std::nullopt;
    }
    if (record.new_text &&
        (record.new_text->find('\n') != std::string::npos ||
         !shell_text_ok(*record.new_text))) {
      return std::nullopt;
    }
    plan.actions.push_back(std::move(record));
  }
  if (config.repair_mode == RepairMode::SingleCommand &&
      plan.actions.size() > 1) {
    return std::nullopt;
  }
  return plan;
}

}  // namespace

RepairPlan plan_repair(const FailureAnalysis& analysis, const BashFile& bf,
                       const OrchestratorConfig& config,
                       DecisionProvider* provider, RepairState& state) {
  std::string suggested;
  switch (config.repair_mode) {
    case RepairMode::SingleCommand:
      suggested = "single_command";
      break;
    case RepairMode::WholeScript:
      suggested = "whole_script";
      break;
    case RepairMode::Hybrid:
      if (state.consecutive_single_failures >= config.single_repair_escalation ||
          analysis.category == FailureCategory::CompilationError) {
        suggested = "whole_script";
      } else {
        suggested = "single_command";
      }
      break;
  }

  nlohmann::json context = {
      {"category", std::string(to_string(analysis.category))},
      {"detail", analysis.detail},
      {"evidence", analysis.evidence},
      {"config_mode", std::string(to_string(config.repair_mode))},
      {"suggested_mode", suggested},
      {"stack_traits", bf.profile().traits},
      {"script", script_lines_json(bf)},
  };
  if (analysis.faulty_line) context["faulty_line_id"] = *analysis.faulty_line;

  std::optional<RepairPlan> plan;
  std::string rationale;
  if (provider) {
    DecisionRequest req;
    req.kind = DecisionKind::PlanRepair;
    req.context = context;
    try {
      const DecisionResponse resp = provider->decide(req);
      plan = plan_from_payload(resp.payload, bf, config, analysis);
      if (plan) rationale = resp.rationale;
    } catch (const ReasonerError&) {
      plan.reset();
    }
  }
  if (!plan || plan->actions.empty()) {
    plan = plan_from_payload(heuristic_plan_from_context(context), bf, config,
                             analysis);
    rationale.clear();
  }
  if (!plan || plan->actions.empty()) {
    throw EmptyPlanError("no applicable repair for " +
                         std::string(to_string(analysis.category)) +
                         (analysis.detail.empty() ? ""
                                                  : " (" + analysis.detail + ")"));
  }
  plan->rationale = rationale.empty()
                        ? "heuristic " + std::string(to_string(plan->mode)) +
                              " plan for " +
                              std::string(to_string(analysis.category))
                        : rationale;
  return *plan;
}

// --- Test selection -----------------------------------------------------

namespace {

std::optional<MaturityLevel> level_of_text(const TestPyramid& pyramid,
                                           const std::string& text) {
  for (MaturityLevel l : kCommandLevels) {
    for (const CandidateCommand& c : pyramid.level(l)) {
      if (c.text == text) return l;
    }
  }
  return std::nullopt;
}

}  // namespace

std::optional<CandidateCommand> select_next_test(
    MaturityLevel state, const TestPyramid& pyramid,
    const StateHistory& history, DecisionProvider* policy,
    const SelectionOptions& opts) {
  auto succeeded = [&](const std::string& text) {
    for (const StateHistory::Record& r : history.records) {
      if (r.outcome.command == text && r.outcome.success()) return true;
    }
    return false;
  };
  auto excluded = [&](const std::string& text) {
    return opts.excluded && opts.excluded->count(text) > 0;
  };
  auto candidates_at = [&](MaturityLevel level) {
    std::vector<const CandidateCommand*> out;
    if (level == MaturityLevel::Unconfigured) return out;
    for (const CandidateCommand& c : pyramid.level(level)) {
      if (!succeeded(c.text) && !excluded(c.text)) out.push_back(&c);
    }
    return out;
  };

  // The level under validation first, then exactly one level up; gradual
  // validation never skips levels.
  const MaturityLevel base =
      state == MaturityLevel::Unconfigured ? MaturityLevel::Installability
                                           : state;
  std::vector<const CandidateCommand*> pool = candidates_at(base);
  std::vector<const CandidateCommand*> upper;
  if (const auto up = successor(base)) upper = candidates_at(*up);

  const CandidateCommand* pick =
      !pool.empty() ? pool.front() : (!upper.empty() ? upper.front() : nullptr);

  if (!policy) {
    if (!pick) return std::nullopt;
    return *pick;
  }

  DecisionRequest req;
  req.kind = DecisionKind::PolicyDecide;
  nlohmann::json base_list = nlohmann::json::array();
  for (const CandidateCommand* c : pool) base_list.push_back(c->text);
  nlohmann::json upper_list = nlohmann::json::array();
  for (const CandidateCommand* c : upper) upper_list.push_back(c->text);
  req.context = {
      {"phase", "select"},
      {"state", std::string(to_string(state))},
      {"candidates", base_list},
      {"candidates_above", upper_list},
      {"default", pick ? nlohmann::json(pick->text) : nlohmann::json()},
  };
  try {
    const DecisionResponse resp = policy->decide(req);
    const std::string chosen = resp.payload.value("command", "");
    if (!chosen.empty()) {
      for (const CandidateCommand* c : pool) {
        if (c->text == chosen) return *c;
      }
      for (const CandidateCommand* c : upper) {
        if (c->text == chosen) return *c;
      }
    }
  } catch (const ReasonerError&) {
    // Default selection stands.
  }
  if (!pick) return std::nullopt;
  return *pick;
}

// --- Orchestrator -------------------------------------------------------

struct Orchestrator::Run {
  BashFile bf;
  const TestPyramid* pyramid = nullptr;
  const SandboxFactory* factory = nullptr;
  std::unique_ptr<Sandbox> sandbox;
  DeploymentReport report;
  RepairState repair_state;
  MaturityLevel state = MaturityLevel::Unconfigured;
  int fb_iterations = 0;
  bool last_repair_was_single = false;
  bool last_repair_applied = false;
  std::set<std::string> attempted;
};

Orchestrator::Orchestrator(OrchestratorConfig config, DecisionProvider* repairer,
                           DecisionProvider* policy)
    : config_(std::move(config)), repairer_(repairer), policy_(policy) {}

namespace {

std::string describe_plan(const RepairPlan& plan) {
  if (plan.mode == RepairMode::WholeScript || plan.actions.size() > 1) {
    return "rebuild sections 3-6 (" + std::to_string(plan.actions.size()) +
           " actions)";
  }
  const RepairRecord& a = plan.actions.front();
  switch (a.kind) {
    case RepairKind::AppendLine:
      return "append section " + std::to_string(a.target_section) + ": " +
             a.new_text.value_or("");
    case RepairKind::ReplaceLine:
      return "replace line " + std::to_string(a.target_line) + ": " +
             a.new_text.value_or("");
    case RepairKind::DeleteLine:
      return "delete line " + std::to_string(a.target_line);
  }
  return "no-op";
}

}  // namespace

bool Orchestrator::execution_loop(Run& run) {
  auto can_step = [&] {
    return static_cast<int>(run.report.trajectory.size()) <
           config_.budget.total_step_limit;
  };
  int attempts = 0;
  while (attempts < config_.budget.execution_loop_limit) {
    if (!can_step()) {
      run.report.exhausted = true;
      return false;
    }
    ExecOutcome outcome = run.sandbox->run_script(run.bf.render());
    if (!config_.collect_streams) {
      outcome.stdout_text.clear();
      outcome.stderr_text.clear();
    }
    ++attempts;
    TrajectoryStep step;
    step.index = static_cast<int>(run.report.trajectory.size()) + 1;
    step.phase = StepPhase::ExecutionLoop;
    step.action = outcome.command;
    step.state_before = run.state;
    step.state_after = run.state;
    step.outcome = outcome;
    run.report.trajectory.push_back(std::move(step));

    if (outcome.success()) {
      run.repair_state.consecutive_single_failures = 0;
      run.last_repair_was_single = false;
      run.last_repair_applied = false;
      return true;
    }
    if (!config_.feedback_enabled) return false;
    if (!can_step()) {
      run.report.exhausted = true;
      return false;
    }
    repair_once(run, outcome);
  }
  run.report.exhausted = true;
  return false;
}

bool Orchestrator::repair_once(Run& run, const ExecOutcome& failed) {
  // This failure arrived after the previous repair, so that repair did not
  // resolve the problem; the escalation counter tracks single-mode streaks.
  if (run.last_repair_was_single && run.last_repair_applied) {
    ++run.repair_state.consecutive_single_failures;
  }

  const FailureAnalysis analysis = analyze_failure(failed, run.bf, repairer_);

  auto push_repair = [&](std::string action, std::optional<RepairMode> mode,
                         bool applied) {
    TrajectoryStep step;
    step.index = static_cast<int>(run.report.trajectory.size()) + 1;
    step.phase = StepPhase::Repair;
    step.action = std::move(action);
    step.state_before = run.state;
    step.state_after = run.state;
    step.repair_mode = mode;
    step.repair_applied = applied;
    run.report.trajectory.push_back(std::move(step));
  };

  RepairPlan plan;
  try {
    plan = plan_repair(analysis, run.bf, config_, repairer_, run.repair_state);
  } catch (const EmptyPlanError& e) {
    push_repair(std::string("no applicable plan: ") + e.what(), std::nullopt,
                false);
    run.last_repair_was_single = false;
    run.last_repair_applied = false;
    return false;
  }

  // Transactional: all actions land, or the script stays untouched.
  BashFile next = run.bf;
  try {
    for (const RepairRecord& action : plan.actions) {
      next = apply_repair(next, action);
    }
  } catch (const PatchError& e) {
    push_repair(std::string("patch rejected: ") + e.what(), plan.mode, false);
    run.last_repair_was_single = false;
    run.last_repair_applied = false;
    return false;
  }
  run.bf = std::move(next);
  run.report.repairs_applied += 1;
  push_repair(describe_plan(plan), plan.mode, true);
  run.last_repair_was_single = plan.mode == RepairMode::SingleCommand;
  run.last_repair_applied = true;
  if (plan.mode == RepairMode::WholeScript) {
    run.repair_state.consecutive_single_failures = 0;
  }
  return true;
}

void Orchestrator::feedback_loop(Run& run) {
  auto can_step = [&] {
    return static_cast<int>(run.report.trajectory.size()) <
           config_.budget.total_step_limit;
  };
  auto transition_decision = [&](bool satisfied, const CandidateCommand& cand,
                                 const ExecOutcome& outcome) {
    if (!policy_) return default_policy(satisfied);
    DecisionRequest req;
    req.kind = DecisionKind::PolicyDecide;
    req.context = {
        {"phase", "transition"},
        {"state", std::string(to_string(run.state))},
        {"command", cand.text},
        {"exit", outcome.exit_code},
        {"level_satisfied", satisfied},
    };
    try {
      const DecisionResponse resp = policy_->decide(req);
      const std::string action = resp.payload.value("action", "");
      if (action == "advance") {
        return PolicyDecision{PolicyAction::Advance, resp.rationale};
      }
      if (action == "stay") {
        return PolicyDecision{PolicyAction::Stay, resp.rationale};
      }
      if (action == "rollback") {
        return PolicyDecision{PolicyAction::Rollback, resp.rationale};
      }
    } catch (const ReasonerError&) {
      // Fall through to the default.
    }
    return default_policy(satisfied);
  };

  run.state = MaturityLevel::Installability;
  for (;;) {
    if (run.fb_iterations >= config_.budget.feedback_loop_limit || !can_step()) {
      run.report.exhausted = true;
      return;
    }
    SelectionOptions opts;
    if (!config_.feedback_enabled) opts.excluded = &run.attempted;
    const auto cand = select_next_test(run.state, *run.pyramid,
                                       run.report.history, policy_, opts);
    if (!cand) return;  // nothing left to validate
    const auto cand_level = level_of_text(*run.pyramid, cand->text);
    ++run.fb_iterations;

    ExecOutcome outcome = run.sandbox->run_command(cand->text);
    if (!config_.collect_streams) {
      outcome.stdout_text.clear();
      outcome.stderr_text.clear();
    }
    run.report.history.append(cand_level.value_or(run.state), outcome);

    const MaturityLevel before = run.state;
    TrajectoryStep step;
    step.index = static_cast<int>(run.report.trajectory.size()) + 1;
    step.phase = StepPhase::FeedbackLoop;
    step.action = cand->text;
    step.outcome = outcome;
    step.state_before = before;

    if (outcome.success()) {
      run.repair_state.consecutive_single_failures = 0;
      run.last_repair_was_single = false;
      run.last_repair_applied = false;
      const PolicyDecision d = transition_decision(true, *cand, outcome);
      run.state = transition(run.state, true, d);
      step.state_after = run.state;
      run.report.trajectory.push_back(std::move(step));
      if (cand_level == MaturityLevel::Runnability) return;  // terminal
      continue;
    }

    if (!config_.feedback_enabled) {
      step.state_after = before;
      run.report.trajectory.push_back(std::move(step));
      run.attempted.insert(cand->text);
      continue;
    }

    const PolicyDecision d = transition_decision(false, *cand, outcome);
    run.state = transition(run.state, false, d);
    step.state_after = run.state;
    run.report.trajectory.push_back(std::move(step));

    if (!can_step()) {
      run.report.exhausted = true;
      return;
    }
    repair_once(run, outcome);

    if (config_.fresh_sandbox_on_rollback) {
      run.sandbox->destroy();
      run.sandbox = (*run.factory)();
    }
    if (!can_step()) {
      run.report.exhausted = true;
      return;
    }
    if (!execution_loop(run)) return;  // script regressed and stayed broken
  }
}

DeploymentReport Orchestrator::deploy(const BashFile& initial,
                                      const TestPyramid& pyramid,
                                      const SandboxFactory& make_sandbox,
                                      const std::string& repo_id) {
  Run run;
  run.bf = initial;
  run.pyramid = &pyramid;
  run.factory = &make_sandbox;
  run.report.repo = repo_id;
  run.report.config_echo = {
      {"repair_mode", std::string(to_string(config_.repair_mode))},
      {"feedback_enabled", config_.feedback_enabled},
      {"fresh_sandbox_on_rollback", config_.fresh_sandbox_on_rollback},
      {"single_repair_escalation", config_.single_repair_escalation},
      {"execution_loop_limit", config_.budget.execution_loop_limit},
      {"feedback_loop_limit", config_.budget.feedback_loop_limit},
      {"total_step_limit", config_.budget.total_step_limit},
  };

  const auto t0 = std::chrono::steady_clock::now();
  run.sandbox = make_sandbox();

  if (execution_loop(run)) {
    feedback_loop(run);
  }

  run.report.final_state = max_supported_state(run.report.history);
  run.report.final_script = run.bf.render();
  run.report.steps_used = static_cast<int>(run.report.trajectory.size());
  run.report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  try {
    if (run.sandbox) run.sandbox->destroy();
  } catch (...) {
    // Teardown failures do not change the deployment result.
  }
  return run.report;
}

std::string render_trace(const DeploymentReport& report) {
  std::string out;
  for (const TrajectoryStep& step : report.trajectory) {
    out += "#" + std::to_string(step.index) + " ";
    switch (step.phase) {
      case StepPhase::ExecutionLoop:
      case StepPhase::FeedbackLoop: {
        out += step.phase == StepPhase::ExecutionLoop ? "[execution] "
                                                      : "[feedback] ";
        out += step.action;
        if (step.outcome) {
          out += " -> exit " + std::to_string(step.outcome->exit_code);
        }
        out += " [" + std::string(to_string(step.state_before));
        if (step.state_after != step.state_before) {
          out += " -> " + std::string(to_string(step.state_after));
        }
        out += "]";
        break;
      }
      case StepPhase::Repair: {
        out += "[repair ";
        if (step.repair_mode) {
          out += step.repair_mode == RepairMode::WholeScript ? "whole"
                                                             : "single";
          out += step.repair_applied.value_or(false) ? " applied" : " rejected";
        } else {
          out += "none";
        }
        out += "] " + step.action;
        out += " [" + std::string(to_string(step.state_before)) + "]";
        break;
      }
    }
    out += "\n";
  }
  out += "final: " + std::string(to_string(report.final_state));
  out += " (repairs applied: " + std::to_string(report.repairs_applied);
  out += ", steps: " + std::to_string(report.steps_used);
  out += ", exhausted: " + std::string(report.exhausted ? "yes" : "no") + ")\n";
  return out;
}

}  // namespace envdeploy
