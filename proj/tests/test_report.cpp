#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <string>
#include <vector>

#include "envdeploy/errors.hpp"
#include "envdeploy/report.hpp"

using namespace envdeploy;
using nlohmann::json;

namespace {

ExecOutcome sample_outcome() {
  ExecOutcome out;
  out.command = "pytest";
  out.exit_code = 2;
  out.stdout_text = "collected 3 items";
  out.stderr_text = "ModuleNotFoundError: No module named 'six'";
  out.duration_ms = 417;
  out.truncated = true;
  return out;
}

DeploymentReport run_sample_deployment() {
  StackProfile profile;
  profile.traits = {"python", "requirements"};
  const BashFile bf = BashFile::from_template(profile);

  TestPyramid pyramid;
  CandidateCommand install;
  install.text = "pip install -r requirements.txt";
  install.source_path = "README.md";
  pyramid.installability = {install};
  CandidateCommand test;
  test.text = "pytest";
  test.source_path = "README.md";
  pyramid.testability = {test};

  const SimulationTable table = SimulationTable::from_json(json::parse(R"([
    {"match": "#!/usr/bin/env bash*",
     "outcomes": [{"exit": 1,
                   "stderr": "ModuleNotFoundError: No module named 'flask'"},
                  {"exit": 0}]}
  ])"));
  Orchestrator orch(OrchestratorConfig{}, nullptr, nullptr);
  return orch.deploy(
      bf, pyramid,
      [&table]() { return create_simulated_sandbox(SandboxSpec{}, table); },
      "sample/repo");
}

}  // namespace

TEST_CASE("exec outcome round trips through json") {
  const ExecOutcome out = sample_outcome();
  const json doc = to_json(out);
  CHECK(doc.at("command") == "pytest");
  CHECK(doc.at("exit") == 2);
  CHECK(doc.at("duration_ms") == 417);
  CHECK(doc.at("truncated") == true);
  CHECK(exec_outcome_from_json(doc) == out);
}

TEST_CASE("exec outcome parsing applies defaults and rejects bad shapes") {
  const ExecOutcome minimal =
      exec_outcome_from_json(json{{"command", "ls"}, {"exit", 0}});
  CHECK(minimal.command == "ls");
  CHECK(minimal.stdout_text.empty());
  CHECK(minimal.duration_ms == 0);
  CHECK_FALSE(minimal.truncated);

  CHECK_THROWS_AS(exec_outcome_from_json(json::array()), ValidationError);
  CHECK_THROWS_AS(exec_outcome_from_json(json{{"exit", 0}}), ValidationError);
  CHECK_THROWS_AS(exec_outcome_from_json(json{{"command", "ls"}}),
                  ValidationError);
  CHECK_THROWS_AS(
      exec_outcome_from_json(json{{"command", "ls"}, {"exit", "zero"}}),
      ValidationError);
}

TEST_CASE("trajectory step round trips with and without optionals") {
  TrajectoryStep bare;
  bare.index = 1;
  bare.phase = StepPhase::FeedbackLoop;
  bare.action = "pytest";
  bare.state_before = MaturityLevel::Installability;
  bare.state_after = MaturityLevel::Testability;
  const json bare_doc = to_json(bare);
  CHECK_FALSE(bare_doc.contains("outcome"));
  CHECK_FALSE(bare_doc.contains("repair_mode"));
  CHECK(trajectory_step_from_json(bare_doc) == bare);

  TrajectoryStep full = bare;
  full.phase = StepPhase::Repair;
  full.action = "append section 4: pip install six";
  full.state_after = full.state_before;
  full.outcome = sample_outcome();
  full.repair_mode = RepairMode::SingleCommand;
  full.repair_applied = true;
  const json full_doc = to_json(full);
  CHECK(full_doc.at("repair_mode") == "single_command");
  CHECK(trajectory_step_from_json(full_doc) == full);
}

TEST_CASE("trajectory step parsing rejects bad shapes") {
  const json good = {
      {"index", 3},        {"phase", "feedback_loop"},
      {"action", "pytest"}, {"state_before", "installable"},
      {"state_after", "installable"},
  };
  CHECK(trajectory_step_from_json(good).index == 3);

  json bad = good;
  bad["phase"] = "daydream";
  CHECK_THROWS_AS(trajectory_step_from_json(bad), ValidationError);

  bad = good;
  bad["state_after"] = "ready";
  CHECK_THROWS_AS(trajectory_step_from_json(bad), ValidationError);

  bad = good;
  bad.erase("action");
  CHECK_THROWS_AS(trajectory_step_from_json(bad), ValidationError);

  // Hybrid never appears on a concrete repair step.
  bad = good;
  bad["repair_mode"] = "hybrid";
  CHECK_THROWS_AS(trajectory_step_from_json(bad), ValidationError);

  bad = good;
  bad["repair_applied"] = "yes";
  CHECK_THROWS_AS(trajectory_step_from_json(bad), ValidationError);
}

TEST_CASE("state history round trips") {
  StateHistory history;
  history.append(MaturityLevel::Installability, sample_outcome());
  ExecOutcome ok;
  ok.command = "python app.py";
  ok.exit_code = 0;
  history.append(MaturityLevel::Runnability, ok);

  const json doc = to_json(history);
  REQUIRE(doc.is_array());
  REQUIRE(doc.size() == 2);
  CHECK(doc[0].at("level") == "installable");

  const StateHistory parsed = state_history_from_json(doc);
  REQUIRE(parsed.records.size() == 2);
  CHECK(parsed.records[0].level == MaturityLevel::Installability);
  CHECK(parsed.records[0].outcome == sample_outcome());
  CHECK(parsed.records[1].level == MaturityLevel::Runnability);
  CHECK(parsed.records[1].outcome == ok);

  CHECK_THROWS_AS(state_history_from_json(json::object()), ValidationError);
  CHECK_THROWS_AS(
      state_history_from_json(json::array({{{"level", "installable"}}})),
      ValidationError);
  CHECK_THROWS_AS(state_history_from_json(json::array(
                      {{{"level", "great"},
                        {"outcome", {{"command", "x"}, {"exit", 0}}}}})),
                  ValidationError);
}

TEST_CASE("orchestrator config round trips") {
  OrchestratorConfig config;
  config.repair_mode = RepairMode::WholeScript;
  config.feedback_enabled = false;
  config.fresh_sandbox_on_rollback = true;
  config.single_repair_escalation = 5;
  config.collect_streams = false;
  config.budget.execution_loop_limit = 7;
  config.budget.feedback_loop_limit = 9;
  config.budget.total_step_limit = 11;

  const OrchestratorConfig parsed = config_from_json(to_json(config));
  CHECK(parsed.repair_mode == RepairMode::WholeScript);
  CHECK(parsed.feedback_enabled == false);
  CHECK(parsed.fresh_sandbox_on_rollback == true);
  CHECK(parsed.single_repair_escalation == 5);
  CHECK(parsed.collect_streams == false);
  CHECK(parsed.budget.execution_loop_limit == 7);
  CHECK(parsed.budget.feedback_loop_limit == 9);
  CHECK(parsed.budget.total_step_limit == 11);
}

TEST_CASE("config parsing: mode picks its default budget unless overridden") {
  const OrchestratorConfig defaults = config_from_json(json::object());
  CHECK(defaults.repair_mode == RepairMode::Hybrid);
  CHECK(defaults.budget.total_step_limit == 200);

  const OrchestratorConfig single =
      config_from_json(json{{"repair_mode", "single_command"}});
  CHECK(single.budget.total_step_limit == 250);

  const OrchestratorConfig overridden = config_from_json(
      json{{"repair_mode", "single_command"},
           {"budget", {{"total_step_limit", 42}}}});
  CHECK(overridden.budget.total_step_limit == 42);
  CHECK(overridden.budget.execution_loop_limit == 100);
}

TEST_CASE("config parsing rejects bad values") {
  CHECK_THROWS_AS(config_from_json(json::array()), ValidationError);
  CHECK_THROWS_AS(config_from_json(json{{"repair_mode", "aggressive"}}),
                  ValidationError);
  CHECK_THROWS_AS(config_from_json(json{{"feedback_enabled", 1}}),
                  ValidationError);
  CHECK_THROWS_AS(config_from_json(json{{"single_repair_escalation", 0}}),
                  ValidationError);
  CHECK_THROWS_AS(
      config_from_json(json{{"budget", {{"total_step_limit", 0}}}}),
      ValidationError);
  CHECK_THROWS_AS(config_from_json(json{{"budget", 12}}), ValidationError);
}

TEST_CASE("deployment report round trips byte for byte") {
  const DeploymentReport report = run_sample_deployment();
  REQUIRE(report.repairs_applied == 1);

  const json doc = to_json(report);
  CHECK(doc.at("schema") == 1);
  CHECK(doc.at("repo") == "sample/repo");
  CHECK(doc.at("final_state") == "testable");

  // Serialize, reparse from text, rebuild, serialize again.
  const json reparsed = json::parse(doc.dump());
  const DeploymentReport rebuilt = report_from_json(reparsed);
  CHECK(to_json(rebuilt) == doc);
  CHECK(render_trace(rebuilt) == render_trace(report));
  CHECK(rebuilt.final_script == report.final_script);
  CHECK(rebuilt.trajectory == report.trajectory);
}

TEST_CASE("report parsing enforces the schema") {
  const json good = to_json(run_sample_deployment());

  json bad = good;
  bad.erase("schema");
  CHECK_THROWS_AS(report_from_json(bad), ValidationError);

  bad = good;
  bad["schema"] = 2;
  CHECK_THROWS_AS(report_from_json(bad), ValidationError);

  bad = good;
  bad["final_state"] = "excellent";
  CHECK_THROWS_AS(report_from_json(bad), ValidationError);

  bad = good;
  bad.erase("trajectory");
  CHECK_THROWS_AS(report_from_json(bad), ValidationError);

  bad = good;
  bad["exhausted"] = "no";
  CHECK_THROWS_AS(report_from_json(bad), ValidationError);
}

TEST_CASE("summarize: empty input gives all zeros") {
  const CorpusSummary s = summarize({});
  CHECK(s.runs == 0);
  CHECK(s.repos == 0);
  CHECK(s.pct_installable == 0.0);
  CHECK(s.retention_install_to_test == 0.0);
  CHECK(s.pass_rate == 0.0);
  CHECK(s.mean_steps == 0.0);
}

TEST_CASE("summarize: best run per repository feeds the funnel") {
  auto make = [](const std::string& repo, MaturityLevel state, int repairs,
                 int steps) {
    DeploymentReport r;
    r.repo = repo;
    r.final_state = state;
    r.repairs_applied = repairs;
    r.steps_used = steps;
    return r;
  };

  // repo-a ran twice; only its best run (runnable) counts in the funnel.
  const std::vector<DeploymentReport> reports = {
      make("repo-a", MaturityLevel::Installability, 2, 10),
      make("repo-a", MaturityLevel::Runnability, 1, 6),
      make("repo-b", MaturityLevel::Testability, 0, 4),
      make("repo-c", MaturityLevel::Unconfigured, 3, 20),
      make("repo-d", MaturityLevel::Runnability, 0, 4),
  };
  const CorpusSummary s = summarize(reports);
  CHECK(s.runs == 5);
  CHECK(s.repos == 4);
  CHECK(s.repos_installable == 3);
  CHECK(s.repos_testable == 3);
  CHECK(s.repos_runnable == 2);
  CHECK(s.pct_installable == doctest::Approx(75.0));
  CHECK(s.retention_install_to_test == doctest::Approx(100.0));
  CHECK(s.retention_test_to_run == doctest::Approx(100.0 * 2 / 3));
  CHECK(s.pass_rate == doctest::Approx(50.0));
  CHECK(s.total_repairs == 6);
  CHECK(s.mean_steps == doctest::Approx(44.0 / 5));
  CHECK(s.final_state_counts.at("runnable") == 2);
  CHECK(s.final_state_counts.at("installable") == 1);

  const json doc = s.to_json();
  CHECK(doc.at("repos") == 4);
  CHECK(doc.at("retention_test_to_run") == doctest::Approx(100.0 * 2 / 3));
}
