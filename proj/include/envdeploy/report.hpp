#pragma once

#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "envdeploy/orchestrator.hpp"

namespace envdeploy {

// Versioned JSON forms of the deployment artifacts. to_json/from_json are
// exact inverses for any value the orchestrator can produce; from_json
// throws ValidationError on shape violations.

nlohmann::json to_json(const ExecOutcome& outcome);
ExecOutcome exec_outcome_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const TrajectoryStep& step);
TrajectoryStep trajectory_step_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const StateHistory& history);
StateHistory state_history_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const DeploymentReport& report);
DeploymentReport report_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const OrchestratorConfig& config);
OrchestratorConfig config_from_json(const nlohmann::json& doc);

// Cross-run rollup. Funnel counts are per repository (best run wins), so
// repeated runs of one repository do not inflate the rates; retention
// percentages relate adjacent levels of that funnel.
struct CorpusSummary {
  int runs = 0;
  int repos = 0;
  std::map<std::string, int> final_state_counts;  // per run, by level name

  // Repositories whose best run reached at least the given level.
  int repos_installable = 0;
  int repos_testable = 0;
  int repos_runnable = 0;

  // Percentages in [0, 100]; 0 when the denominator is 0.
  double pct_installable = 0;        // repos_installable / repos
  double retention_install_to_test = 0;  // repos_testable / repos_installable
  double retention_test_to_run = 0;      // repos_runnable / repos_testable
  double pass_rate = 0;              // repos_runnable / repos

  int total_repairs = 0;
  double mean_steps = 0;

  nlohmann::json to_json() const;
};

CorpusSummary summarize(const std::vector<DeploymentReport>& reports);

}  // namespace envdeploy
