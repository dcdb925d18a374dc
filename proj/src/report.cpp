#include "envdeploy/report.hpp"

#include <algorithm>

#include "envdeploy/errors.hpp"

namespace envdeploy {

namespace {

constexpr int kSchemaVersion = 1;

void require(bool ok, const std::string& what) {
  if (!ok) throw ValidationError("report: " + what);
}

MaturityLevel parse_level(const nlohmann::json& doc, const char* key) {
  require(doc.contains(key) && doc.at(key).is_string(),
          std::string(key) + " must be a string");
  const auto level = level_from_string(doc.at(key).get<std::string>());
  require(level.has_value(),
          "unknown level '" + doc.at(key).get<std::string>() + "'");
  return *level;
}

}  // namespace

nlohmann::json to_json(const ExecOutcome& outcome) {
  return {
      {"command", outcome.command},
      {"exit", outcome.exit_code},
      {"stdout", outcome.stdout_text},
      {"stderr", outcome.stderr_text},
      {"duration_ms", outcome.duration_ms},
      {"truncated", outcome.truncated},
  };
}

ExecOutcome exec_outcome_from_json(const nlohmann::json& doc) {
  require(doc.is_object(), "outcome must be an object");
  require(doc.contains("command") && doc.at("command").is_string(),
          "outcome.command must be a string");
  require(doc.contains("exit") && doc.at("exit").is_number_integer(),
          "outcome.exit must be an integer");
  ExecOutcome out;
  out.command = doc.at("command").get<std::string>();
  out.exit_code = doc.at("exit").get<int>();
  out.stdout_text = doc.value("stdout", "");
  out.stderr_text = doc.value("stderr", "");
  out.duration_ms = doc.value("duration_ms", std::int64_t{0});
  out.truncated = doc.value("truncated", false);
  return out;
}

nlohmann::json to_json(const TrajectoryStep& step) {
  nlohmann::json doc = {
      {"index", step.index},
      {"phase", std::string(to_string(step.phase))},
      {"action", step.action},
      {"state_before", std::string(to_string(step.state_before))},
      {"state_after", std::string(to_string(step.state_after))},
  };
  if (step.outcome) doc["outcome"] = to_json(*step.outcome);
  if (step.repair_mode) {
    doc["repair_mode"] = std::string(to_string(*step.repair_mode));
  }
  if (step.repair_applied) doc["repair_applied"] = *step.repair_applied;
  return doc;
}

TrajectoryStep trajectory_step_from_json(const nlohmann::json& doc) {
  require(doc.is_object(), "step must be an object");
  require(doc.contains("index") && doc.at("index").is_number_integer(),
          "step.index must be an integer");
  require(doc.contains("phase") && doc.at("phase").is_string(),
          "step.phase must be a string");
  TrajectoryStep step;
  step.index = doc.at("index").get<int>();
  const auto phase = step_phase_from_string(doc.at("phase").get<std::string>());
  require(phase.has_value(),
          "unknown phase '" + doc.at("phase").get<std::string>() + "'");
  step.phase = *phase;
  require(doc.contains("action") && doc.at("action").is_string(),
          "step.action must be a string");
  step.action = doc.at("action").get<std::string>();
  step.state_before = parse_level(doc, "state_before");
  step.state_after = parse_level(doc, "state_after");
  if (doc.contains("outcome")) {
    step.outcome = exec_outcome_from_json(doc.at("outcome"));
  }
  if (doc.contains("repair_mode")) {
    require(doc.at("repair_mode").is_string(),
            "step.repair_mode must be a string");
    const auto mode =
        repair_mode_from_string(doc.at("repair_mode").get<std::string>());
    require(mode.has_value() && *mode != RepairMode::Hybrid,
            "step.repair_mode must be single_command or whole_script");
    step.repair_mode = mode;
  }
  if (doc.contains("repair_applied")) {
    require(doc.at("repair_applied").is_boolean(),
            "step.repair_applied must be a boolean");
    step.repair_applied = doc.at("repair_applied").get<bool>();
  }
  return step;
}

nlohmann::json to_json(const StateHistory& history) {
  nlohmann::json arr = nlohmann::json::array();
  for (const StateHistory::Record& r : history.records) {
    arr.push_back({
        {"level", std::string(to_string(r.level))},
        {"outcome", to_json(r.outcome)},
    });
  }
  return arr;
}

StateHistory state_history_from_json(const nlohmann::json& doc) {
  require(doc.is_array(), "history must be an array");
  StateHistory history;
  for (const nlohmann::json& item : doc) {
    require(item.is_object() && item.contains("outcome"),
            "history record needs an outcome");
    history.append(parse_level(item, "level"),
                   exec_outcome_from_json(item.at("outcome")));
  }
  return history;
}

nlohmann::json to_json(const OrchestratorConfig& config) {
  return {
      {"repair_mode", std::string(to_string(config.repair_mode))},
      {"feedback_enabled", config.feedback_enabled},
      {"fresh_sandbox_on_rollback", config.fresh_sandbox_on_rollback},
      {"single_repair_escalation", config.single_repair_escalation},
      {"collect_streams", config.collect_streams},
      {"budget",
       {
           {"execution_loop_limit", config.budget.execution_loop_limit},
           {"feedback_loop_limit", config.budget.feedback_loop_limit},
           {"total_step_limit", config.budget.total_step_limit},
       }},
  };
}

OrchestratorConfig config_from_json(const nlohmann::json& doc) {
  require(doc.is_object(), "config must be an object");
  OrchestratorConfig config;
  if (doc.contains("repair_mode")) {
    require(doc.at("repair_mode").is_string(),
            "config.repair_mode must be a string");
    const auto mode =
        repair_mode_from_string(doc.at("repair_mode").get<std::string>());
    require(mode.has_value(), "unknown repair_mode '" +
                                  doc.at("repair_mode").get<std::string>() +
                                  "'");
    config.repair_mode = *mode;
    config.budget = LoopBudget::defaults_for(*mode);
  }
  if (doc.contains("feedback_enabled")) {
    require(doc.at("feedback_enabled").is_boolean(),
            "config.feedback_enabled must be a boolean");
    config.feedback_enabled = doc.at("feedback_enabled").get<bool>();
  }
  if (doc.contains("fresh_sandbox_on_rollback")) {
    require(doc.at("fresh_sandbox_on_rollback").is_boolean(),
            "config.fresh_sandbox_on_rollback must be a boolean");
    config.fresh_sandbox_on_rollback =
        doc.at("fresh_sandbox_on_rollback").get<bool>();
  }
  if (doc.contains("single_repair_escalation")) {
    require(doc.at("single_repair_escalation").is_number_integer() &&
                doc.at("single_repair_escalation").get<int>() >= 1,
            "config.single_repair_escalation must be a positive integer");
    config.single_repair_escalation =
        doc.at("single_repair_escalation").get<int>();
  }
  if (doc.contains("collect_streams")) {
    require(doc.at("collect_streams").is_boolean(),
            "config.collect_streams must be a boolean");
    config.collect_streams = doc.at("collect_streams").get<bool>();
  }
  if (doc.contains("budget")) {
    const nlohmann::json& b = doc.at("budget");
    require(b.is_object(), "config.budget must be an object");
    auto read_limit = [&](const char* key, int* dst) {
      if (!b.contains(key)) return;
      require(b.at(key).is_number_integer() && b.at(key).get<int>() >= 1,
              std::string("config.budget.") + key +
                  " must be a positive integer");
      *dst = b.at(key).get<int>();
    };
    read_limit("execution_loop_limit", &config.budget.execution_loop_limit);
    read_limit("feedback_loop_limit", &config.budget.feedback_loop_limit);
    read_limit("total_step_limit", &config.budget.total_step_limit);
  }
  return config;
}

nlohmann::json to_json(const DeploymentReport& report) {
  nlohmann::json trajectory = nlohmann::json::array();
  for (const TrajectoryStep& step : report.trajectory) {
    trajectory.push_back(to_json(step));
  }
  return {
      {"schema", kSchemaVersion},
      {"repo", report.repo},
      {"final_state", std::string(to_string(report.final_state))},
      {"repairs_applied", report.repairs_applied},
      {"steps_used", report.steps_used},
      {"exhausted", report.exhausted},
      {"wall_time_s", report.wall_time_s},
      {"config", report.config_echo},
      {"final_script", report.final_script},
      {"trajectory", std::move(trajectory)},
      {"history", to_json(report.history)},
  };
}

DeploymentReport report_from_json(const nlohmann::json& doc) {
  require(doc.is_object(), "report must be an object");
  require(doc.contains("schema") && doc.at("schema").is_number_integer(),
          "missing schema version");
  require(doc.at("schema").get<int>() == kSchemaVersion,
          "unsupported schema version " + doc.at("schema").dump());
  DeploymentReport report;
  report.repo = doc.value("repo", "");
  report.final_state = parse_level(doc, "final_state");
  require(doc.contains("repairs_applied") &&
              doc.at("repairs_applied").is_number_integer(),
          "repairs_applied must be an integer");
  report.repairs_applied = doc.at("repairs_applied").get<int>();
  require(doc.contains("steps_used") &&
              doc.at("steps_used").is_number_integer(),
          "steps_used must be an integer");
  report.steps_used = doc.at("steps_used").get<int>();
  require(doc.contains("exhausted") && doc.at("exhausted").is_boolean(),
          "exhausted must be a boolean");
  report.exhausted = doc.at("exhausted").get<bool>();
  report.wall_time_s = doc.value("wall_time_s", 0.0);
  if (doc.contains("config")) report.config_echo = doc.at("config");
  report.final_script = doc.value("final_script", "");
  require(doc.contains("trajectory") && doc.at("trajectory").is_array(),
          "trajectory must be an array");
  for (const nlohmann::json& step : doc.at("trajectory")) {
    report.trajectory.push_back(trajectory_step_from_json(step));
  }
  if (doc.contains("history")) {
    report.history = state_history_from_json(doc.at("history"));
  }
  return report;
}

nlohmann::json CorpusSummary::to_json() const {
  return {
      {"runs", runs},
      {"repos", repos},
      {"final_state_counts", final_state_counts},
      {"repos_installable", repos_installable},
      {"repos_testable", repos_testable},
      {"repos_runnable", repos_runnable},
      {"pct_installable", pct_installable},
      {"retention_install_to_test", retention_install_to_test},
      {"retention_test_to_run", retention_test_to_run},
      {"pass_rate", pass_rate},
      {"total_repairs", total_repairs},
      {"mean_steps", mean_steps},
  };
}

CorpusSummary summarize(const std::vector<DeploymentReport>& reports) {
  CorpusSummary s;
  s.runs = static_cast<int>(reports.size());
  std::map<std::string, MaturityLevel> best;
  long long step_total = 0;
  for (const DeploymentReport& r : reports) {
    s.final_state_counts[std::string(to_string(r.final_state))] += 1;
    s.total_repairs += r.repairs_applied;
    step_total += r.steps_used;
    auto [it, inserted] = best.emplace(r.repo, r.final_state);
    if (!inserted && compare(r.final_state, it->second) == Ordering::Greater) {
      it->second = r.final_state;
    }
  }
  s.repos = static_cast<int>(best.size());
  for (const auto& [repo, state] : best) {
    if (compare(state, MaturityLevel::Installability) != Ordering::Less) {
      ++s.repos_installable;
    }
    if (compare(state, MaturityLevel::Testability) != Ordering::Less) {
      ++s.repos_testable;
    }
    if (state == MaturityLevel::Runnability) ++s.repos_runnable;
  }
  auto pct = [](int num, int den) {
    return den > 0 ? 100.0 * num / den : 0.0;
  };
  s.pct_installable = pct(s.repos_installable, s.repos);
  s.retention_install_to_test = pct(s.repos_testable, s.repos_installable);
  s.retention_test_to_run = pct(s.repos_runnable, s.repos_testable);
  s.pass_rate = pct(s.repos_runnable, s.repos);
  s.mean_steps = s.runs > 0 ? static_cast<double>(step_total) / s.runs : 0.0;
  return s;
}

}  // namespace envdeploy
