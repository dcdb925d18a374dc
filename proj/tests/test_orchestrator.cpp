#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <set>
#include <string>
#include <vector>

#include "envdeploy/errors.hpp"
#include "envdeploy/orchestrator.hpp"

using namespace envdeploy;
using nlohmann::json;

namespace {

ExecOutcome failed_with(const std::string& stderr_text, int exit_code = 1) {
  ExecOutcome out;
  out.command = "bash setup.sh";
  out.exit_code = exit_code;
  out.stderr_text = stderr_text;
  return out;
}

StackProfile python_profile() {
  StackProfile p;
  p.traits = {"python", "requirements"};
  return p;
}

CandidateCommand cmd(const std::string& text) {
  CandidateCommand c;
  c.text = text;
  c.source_path = "README.md";
  return c;
}

TestPyramid three_level_pyramid() {
  TestPyramid p;
  p.installability = {cmd("pip install -r requirements.txt")};
  p.testability = {cmd("pytest")};
  p.runnability = {cmd("python app.py")};
  return p;
}

SandboxFactory sim_factory(const std::string& table_json) {
  const SimulationTable table = SimulationTable::from_json(json::parse(table_json));
  return [table]() { return create_simulated_sandbox(SandboxSpec{}, table); };
}

ScriptedProvider::Entry entry(DecisionKind kind, json payload,
                              std::string rationale = "") {
  ScriptedProvider::Entry e;
  e.kind = kind;
  e.payload = std::move(payload);
  e.rationale = std::move(rationale);
  return e;
}

}  // namespace

TEST_CASE("mode, category and phase names round trip") {
  for (const RepairMode m :
       {RepairMode::Hybrid, RepairMode::WholeScript, RepairMode::SingleCommand}) {
    CHECK(repair_mode_from_string(to_string(m)) == m);
  }
  CHECK_FALSE(repair_mode_from_string("both").has_value());
  for (const FailureCategory c :
       {FailureCategory::MissingSystemDependency,
        FailureCategory::MissingLanguageDependency, FailureCategory::MissingEnvVar,
        FailureCategory::CompilationError, FailureCategory::RuntimeError,
        FailureCategory::MissingArtifact, FailureCategory::Unknown}) {
    CHECK(failure_category_from_string(to_string(c)) == c);
  }
  CHECK_FALSE(failure_category_from_string("cosmic_rays").has_value());
  for (const StepPhase p :
       {StepPhase::ExecutionLoop, StepPhase::FeedbackLoop, StepPhase::Repair}) {
    CHECK(step_phase_from_string(to_string(p)) == p);
  }
}

TEST_CASE("single-command runs get a larger total budget") {
  const LoopBudget h = LoopBudget::defaults_for(RepairMode::Hybrid);
  CHECK(h.execution_loop_limit == 100);
  CHECK(h.feedback_loop_limit == 100);
  CHECK(h.total_step_limit == 200);
  CHECK(LoopBudget::defaults_for(RepairMode::WholeScript).total_step_limit == 200);
  CHECK(LoopBudget::defaults_for(RepairMode::SingleCommand).total_step_limit ==
        250);
}

TEST_CASE("failure analysis categorizes by the diagnostic table") {
  const BashFile bf = BashFile::from_template(python_profile());

  SUBCASE("python missing module") {
    const auto a = analyze_failure(
        failed_with("Traceback (most recent call last):\n"
                    "  File \"app.py\", line 1, in <module>\n"
                    "ModuleNotFoundError: No module named 'flask'"),
        bf, nullptr);
    CHECK(a.category == FailureCategory::MissingLanguageDependency);
    CHECK(a.detail == "flask");
    CHECK(a.evidence == "ModuleNotFoundError: No module named 'flask'");
  }

  SUBCASE("node missing module") {
    const auto a = analyze_failure(
        failed_with("Error: Cannot find module 'express'"), bf, nullptr);
    CHECK(a.category == FailureCategory::MissingLanguageDependency);
    CHECK(a.detail == "express");
  }

  SUBCASE("pip resolution failure") {
    const auto a = analyze_failure(
        failed_with("ERROR: No matching distribution found for torch==9.9"),
        bf, nullptr);
    CHECK(a.category == FailureCategory::MissingLanguageDependency);
    // The version pin is not part of the extracted package name.
    CHECK(a.detail == "torch");
  }

  SUBCASE("command not found") {
    const auto a = analyze_failure(
        failed_with("bash: line 4: cmake: command not found"), bf, nullptr);
    CHECK(a.category == FailureCategory::MissingSystemDependency);
    CHECK(a.detail == "cmake");
  }

  SUBCASE("apt package missing") {
    const auto a = analyze_failure(
        failed_with("E: Unable to locate package libfoo-dev"), bf, nullptr);
    CHECK(a.category == FailureCategory::MissingSystemDependency);
    CHECK(a.detail == "libfoo-dev");
  }

  SUBCASE("shared library missing") {
    const auto a = analyze_failure(
        failed_with("./app: error while loading shared libraries: "
                    "libssl.so.1.1: cannot open shared object file"),
        bf, nullptr);
    CHECK(a.category == FailureCategory::MissingSystemDependency);
    CHECK(a.detail == "libssl.so.1.1");
  }

  SUBCASE("unbound variable") {
    const auto a = analyze_failure(
        failed_with("setup.sh: line 12: DATABASE_URL: unbound variable"), bf,
        nullptr);
    CHECK(a.category == FailureCategory::MissingEnvVar);
    CHECK(a.detail == "DATABASE_URL");
  }

  SUBCASE("python KeyError on an env-style name") {
    const auto a = analyze_failure(
        failed_with("KeyError: 'API_KEY'"), bf, nullptr);
    CHECK(a.category == FailureCategory::MissingEnvVar);
    CHECK(a.detail == "API_KEY");
  }

  SUBCASE("missing header outranks the generic missing-file pattern") {
    const auto a = analyze_failure(
        failed_with("src/ext.c:2:10: fatal error: png.h: No such file or "
                    "directory"),
        bf, nullptr);
    CHECK(a.category == FailureCategory::CompilationError);
    CHECK(a.detail == "png.h");
  }

  SUBCASE("compiler error with file and line") {
    const auto a = analyze_failure(
        failed_with("src/main.cpp:42:5: error: expected ';'"), bf, nullptr);
    CHECK(a.category == FailureCategory::CompilationError);
  }

  SUBCASE("missing file artifacts") {
    const auto a = analyze_failure(
        failed_with("python3: can't open file '/workspace/main.py'"), bf,
        nullptr);
    CHECK(a.category == FailureCategory::MissingArtifact);
    CHECK(a.detail == "/workspace/main.py");

    const auto b = analyze_failure(
        failed_with("FileNotFoundError: [Errno 2] No such file or directory: "
                    "'config/settings.yml'"),
        bf, nullptr);
    CHECK(b.category == FailureCategory::MissingArtifact);
    CHECK(b.detail == "config/settings.yml");
  }

  SUBCASE("a path-shaped module is a missing file, not a package") {
    const auto a = analyze_failure(
        failed_with("Error: Cannot find module './lib/helpers'"), bf, nullptr);
    CHECK(a.category == FailureCategory::MissingArtifact);
    CHECK(a.detail == "./lib/helpers");
  }

  SUBCASE("dependency patterns outrank the traceback pattern") {
    const auto a = analyze_failure(
        failed_with("Traceback (most recent call last):\n"
                    "ImportError: No module named requests"),
        bf, nullptr);
    CHECK(a.category == FailureCategory::MissingLanguageDependency);
    CHECK(a.detail == "requests");
  }

  SUBCASE("bare crash is a runtime error") {
    const auto a = analyze_failure(
        failed_with("Traceback (most recent call last):\n"
                    "ValueError: bad input"),
        bf, nullptr);
    CHECK(a.category == FailureCategory::RuntimeError);
  }

  SUBCASE("timeout exit code") {
    const auto a =
        analyze_failure(failed_with("still working...", kTimeoutExitCode), bf,
                        nullptr);
    CHECK(a.category == FailureCategory::RuntimeError);
    CHECK(a.detail == "timeout");
  }

  SUBCASE("stdout is scanned when stderr has no signal") {
    ExecOutcome out;
    out.exit_code = 1;
    out.stderr_text = "";
    out.stdout_text = "npm ERR! code ELIFECYCLE";
    const auto a = analyze_failure(out, bf, nullptr);
    CHECK(a.category == FailureCategory::RuntimeError);
  }

  SUBCASE("nothing matches: unknown with the last nonempty line") {
    const auto a = analyze_failure(
        failed_with("first line\nsomething odd happened\n\n"), bf, nullptr);
    CHECK(a.category == FailureCategory::Unknown);
    CHECK(a.evidence == "something odd happened");
  }
}

TEST_CASE("error-trap marker locates the faulty script line") {
  const BashFile bf = BashFile::from_template(python_profile());
  const std::string line_text = "pkg_install ca-certificates curl git";
  const auto id = bf.find_line_by_text(line_text);
  REQUIRE(id.has_value());

  const auto a = analyze_failure(
      failed_with("E: Unable to locate package curl\n"
                  "failed command: " + line_text + "\n"),
      bf, nullptr);
  CHECK(a.category == FailureCategory::MissingSystemDependency);
  REQUIRE(a.faulty_line.has_value());
  CHECK(*a.faulty_line == *id);

  // No marker, no location.
  const auto b =
      analyze_failure(failed_with("E: Unable to locate package curl"), bf,
                      nullptr);
  CHECK_FALSE(b.faulty_line.has_value());
}

TEST_CASE("provider analysis is used only when evidence is verbatim") {
  const BashFile bf = BashFile::from_template(python_profile());
  const ExecOutcome failed =
      failed_with("some output\nthe daemon refused the connection\n");

  SUBCASE("verbatim evidence is accepted") {
    std::vector<ScriptedProvider::Entry> entries{entry(
        DecisionKind::AnalyzeFailure,
        {{"category", "missing_env_var"},
         {"evidence", "the daemon refused the connection"},
         {"detail", "DAEMON_ADDR"}})};
    ScriptedProvider provider(entries);
    const auto a = analyze_failure(failed, bf, &provider);
    CHECK(a.category == FailureCategory::MissingEnvVar);
    CHECK(a.detail == "DAEMON_ADDR");
  }

  SUBCASE("fabricated evidence falls back to the heuristic") {
    std::vector<ScriptedProvider::Entry> entries{entry(
        DecisionKind::AnalyzeFailure,
        {{"category", "missing_env_var"},
         {"evidence", "error: DAEMON_ADDR not configured"},
         {"detail", "DAEMON_ADDR"}})};
    ScriptedProvider provider(entries);
    const auto a = analyze_failure(failed, bf, &provider);
    CHECK(a.category == FailureCategory::Unknown);
    CHECK(a.evidence == "the daemon refused the connection");
  }

  SUBCASE("unknown category name falls back") {
    std::vector<ScriptedProvider::Entry> entries{
        entry(DecisionKind::AnalyzeFailure,
              {{"category", "gremlins"}, {"evidence", "some output"}})};
    ScriptedProvider provider(entries);
    CHECK(analyze_failure(failed, bf, &provider).category ==
          FailureCategory::Unknown);
  }

  SUBCASE("provider failure falls back") {
    ScriptedProvider provider(std::vector<ScriptedProvider::Entry>{});
    const auto a = analyze_failure(
        failed_with("ModuleNotFoundError: No module named 'flask'"), bf,
        &provider);
    CHECK(a.category == FailureCategory::MissingLanguageDependency);
  }
}

TEST_CASE("repair planning: one-line fixes per category") {
  const BashFile bf = BashFile::from_template(python_profile());
  OrchestratorConfig config;
  RepairState state;

  auto plan_for = [&](FailureCategory category, const std::string& detail,
                      const std::string& evidence = "") {
    FailureAnalysis a;
    a.category = category;
    a.detail = detail;
    a.evidence = evidence;
    return plan_repair(a, bf, config, nullptr, state);
  };

  SUBCASE("system dependency") {
    const RepairPlan p =
        plan_for(FailureCategory::MissingSystemDependency, "cmake");
    CHECK(p.mode == RepairMode::SingleCommand);
    REQUIRE(p.actions.size() == 1);
    CHECK(p.actions[0].kind == RepairKind::AppendLine);
    CHECK(p.actions[0].target_section == 3);
    CHECK(p.actions[0].new_text == "pkg_install cmake");
  }

  SUBCASE("python package") {
    const RepairPlan p = plan_for(FailureCategory::MissingLanguageDependency,
                                  "flask",
                                  "ModuleNotFoundError: No module named 'flask'");
    REQUIRE(p.actions.size() == 1);
    CHECK(p.actions[0].target_section == 4);
    CHECK(p.actions[0].new_text == "pip install flask");
  }

  SUBCASE("node package when the evidence says so") {
    const RepairPlan p = plan_for(FailureCategory::MissingLanguageDependency,
                                  "express", "Cannot find module 'express'");
    REQUIRE(p.actions.size() == 1);
    CHECK(p.actions[0].new_text == "npm install express");
  }

  SUBCASE("environment variable default") {
    const RepairPlan p = plan_for(FailureCategory::MissingEnvVar, "API_KEY");
    REQUIRE(p.actions.size() == 1);
    CHECK(p.actions[0].target_section == 4);
    CHECK(p.actions[0].new_text == "export API_KEY=\"${API_KEY:-}\"");
  }

  SUBCASE("missing directory vs missing file") {
    const RepairPlan dir = plan_for(FailureCategory::MissingArtifact, "data/cache");
    REQUIRE(dir.actions.size() == 1);
    CHECK(dir.actions[0].target_section == 5);
    CHECK(dir.actions[0].new_text == "mkdir -p 'data/cache'");

    const RepairPlan file =
        plan_for(FailureCategory::MissingArtifact, "config/settings.yml");
    REQUIRE(file.actions.size() == 1);
    CHECK(file.actions[0].new_text ==
          "mkdir -p \"$(dirname 'config/settings.yml')\" && touch "
          "'config/settings.yml'");
  }

  SUBCASE("cause records the category and evidence") {
    const RepairPlan p = plan_for(FailureCategory::MissingSystemDependency,
                                  "git", "bash: git: command not found");
    CHECK(p.actions[0].cause.find("missing_system_dependency") !=
          std::string::npos);
    CHECK(p.actions[0].cause.find("command not found") != std::string::npos);
  }

  SUBCASE("hostile detail tokens are refused") {
    CHECK_THROWS_AS(plan_for(FailureCategory::MissingSystemDependency,
                             "x; rm -rf /"),
                    EmptyPlanError);
    CHECK_THROWS_AS(plan_for(FailureCategory::MissingEnvVar, "lower_case"),
                    EmptyPlanError);
  }

  SUBCASE("categories without a one-line fix have no single plan") {
    CHECK_THROWS_AS(plan_for(FailureCategory::Unknown, ""), EmptyPlanError);
    CHECK_THROWS_AS(plan_for(FailureCategory::RuntimeError, ""), EmptyPlanError);
  }
}

TEST_CASE("repair planning: escalation to a whole rebuild") {
  const BashFile bf = BashFile::from_template(python_profile());
  OrchestratorConfig config;

  FailureAnalysis missing_pkg;
  missing_pkg.category = FailureCategory::MissingLanguageDependency;
  missing_pkg.detail = "flask";
  missing_pkg.evidence = "ModuleNotFoundError: No module named 'flask'";

  SUBCASE("repeated single failures escalate") {
    RepairState state;
    state.consecutive_single_failures = config.single_repair_escalation;
    const RepairPlan p = plan_repair(missing_pkg, bf, config, nullptr, state);
    CHECK(p.mode == RepairMode::WholeScript);
    CHECK(p.actions.size() > 1);
  }

  SUBCASE("below the threshold stays single") {
    RepairState state;
    state.consecutive_single_failures = config.single_repair_escalation - 1;
    CHECK(plan_repair(missing_pkg, bf, config, nullptr, state).mode ==
          RepairMode::SingleCommand);
  }

  SUBCASE("compilation errors escalate immediately") {
    RepairState state;
    FailureAnalysis comp;
    comp.category = FailureCategory::CompilationError;
    comp.evidence = "src/main.cpp:1:1: error: nope";
    const RepairPlan p = plan_repair(comp, bf, config, nullptr, state);
    CHECK(p.mode == RepairMode::WholeScript);
  }

  SUBCASE("an explicit valid provider plan overrides the suggestion") {
    RepairState state;
    state.consecutive_single_failures = 10;
    std::vector<ScriptedProvider::Entry> entries{entry(
        DecisionKind::PlanRepair,
        {{"mode", "single_command"},
         {"actions", json::array({{{"kind", "append_line"},
                                   {"section", 4},
                                   {"text", "pip install flask==2.0"}}})}},
        "pin the version instead")};
    ScriptedProvider provider(entries);
    const RepairPlan p = plan_repair(missing_pkg, bf, config, &provider, state);
    CHECK(p.mode == RepairMode::SingleCommand);
    REQUIRE(p.actions.size() == 1);
    CHECK(p.actions[0].new_text == "pip install flask==2.0");
    CHECK(p.rationale == "pin the version instead");
  }
}

TEST_CASE("repair planning: ablation modes are hard constraints") {
  const BashFile bf = BashFile::from_template(python_profile());
  RepairState state;

  FailureAnalysis missing_pkg;
  missing_pkg.category = FailureCategory::MissingLanguageDependency;
  missing_pkg.detail = "flask";
  missing_pkg.evidence = "ModuleNotFoundError: No module named 'flask'";

  SUBCASE("whole-script config discards a single-command provider plan") {
    OrchestratorConfig config;
    config.repair_mode = RepairMode::WholeScript;
    std::vector<ScriptedProvider::Entry> entries{entry(
        DecisionKind::PlanRepair,
        {{"mode", "single_command"},
         {"actions", json::array({{{"kind", "append_line"},
                                   {"section", 4},
                                   {"text", "pip install flask"}}})}})};
    ScriptedProvider provider(entries);
    const RepairPlan p = plan_repair(missing_pkg, bf, config, &provider, state);
    CHECK(p.mode == RepairMode::WholeScript);
  }

  SUBCASE("single-command config discards a whole-script provider plan") {
    OrchestratorConfig config;
    config.repair_mode = RepairMode::SingleCommand;
    std::vector<ScriptedProvider::Entry> entries{entry(
        DecisionKind::PlanRepair,
        {{"mode", "whole_script"},
         {"actions", json::array({{{"kind", "append_line"},
                                   {"section", 4},
                                   {"text", "pip install flask"}}})}})};
    ScriptedProvider provider(entries);
    const RepairPlan p = plan_repair(missing_pkg, bf, config, &provider, state);
    CHECK(p.mode == RepairMode::SingleCommand);
    REQUIRE(p.actions.size() == 1);
    CHECK(p.actions[0].new_text == "pip install flask");
  }

  SUBCASE("single-command config refuses multi-action provider plans") {
    OrchestratorConfig config;
    config.repair_mode = RepairMode::SingleCommand;
    std::vector<ScriptedProvider::Entry> entries{entry(
        DecisionKind::PlanRepair,
        {{"mode", "single_command"},
         {"actions", json::array({{{"kind", "append_line"},
                                   {"section", 4},
                                   {"text", "pip install flask"}},
                                  {{"kind", "append_line"},
                                   {"section", 4},
                                   {"text", "pip install jinja2"}}})}})};
    ScriptedProvider provider(entries);
    const RepairPlan p = plan_repair(missing_pkg, bf, config, &provider, state);
    REQUIRE(p.actions.size() == 1);  // heuristic fallback
    CHECK(p.actions[0].new_text == "pip install flask");
  }

  SUBCASE("whole-script mode always has a rebuild even for unknown failures") {
    OrchestratorConfig config;
    config.repair_mode = RepairMode::WholeScript;
    FailureAnalysis unknown;
    unknown.category = FailureCategory::Unknown;
    const RepairPlan p = plan_repair(unknown, bf, config, nullptr, state);
    CHECK(p.mode == RepairMode::WholeScript);
    CHECK_FALSE(p.actions.empty());
  }

  SUBCASE("provider plans touching protected sections are discarded") {
    OrchestratorConfig config;
    const std::uint64_t section1_line = bf.section(1).lines.front().line_id;
    std::vector<ScriptedProvider::Entry> entries{entry(
        DecisionKind::PlanRepair,
        {{"mode", "single_command"},
         {"actions", json::array({{{"kind", "delete_line"},
                                   {"line_id", section1_line}}})}})};
    ScriptedProvider provider(entries);
    RepairState fresh;
    const RepairPlan p = plan_repair(missing_pkg, bf, config, &provider, fresh);
    // Heuristic fallback: the usual append, not the hostile delete.
    REQUIRE(p.actions.size() == 1);
    CHECK(p.actions[0].kind == RepairKind::AppendLine);
  }
}

TEST_CASE("whole rebuild drops sections 3-6 but keeps repair lines") {
  OrchestratorConfig config;
  RepairState state;

  BashFile bf = BashFile::from_template(python_profile());
  RepairRecord earlier;
  earlier.kind = RepairKind::AppendLine;
  earlier.target_section = 4;
  earlier.new_text = "pip install extra-pkg";
  earlier.cause = "missing_language_dependency";
  bf = apply_repair(bf, earlier);

  FailureAnalysis comp;
  comp.category = FailureCategory::CompilationError;  // forces the rebuild
  comp.evidence = "x.c:1:1: error: boom";
  const RepairPlan p = plan_repair(comp, bf, config, nullptr, state);
  REQUIRE(p.mode == RepairMode::WholeScript);

  BashFile next = bf;
  for (const RepairRecord& action : p.actions) {
    next = apply_repair(next, action);
  }
  const std::string text = next.render();
  CHECK(text.find("pip install extra-pkg") != std::string::npos);
  CHECK(text.find("pip install -r requirements.txt") != std::string::npos);
  // Old generated lines were replaced, not duplicated.
  CHECK(text.find("pkg_install python3 python3-venv python3-pip") !=
        std::string::npos);
  const std::string rendered_once = next.render();
  std::size_t first = rendered_once.find("pip install extra-pkg");
  CHECK(rendered_once.find("pip install extra-pkg", first + 1) ==
        std::string::npos);
}

TEST_CASE("test selection walks the pyramid one level at a time") {
  const TestPyramid pyramid = [] {
    TestPyramid p;
    p.installability = {cmd("pip install -r requirements.txt"),
                        cmd("pip install -e .")};
    p.testability = {cmd("pytest")};
    p.runnability = {cmd("python app.py")};
    return p;
  }();

  StateHistory history;
  auto mark_success = [&](MaturityLevel level, const std::string& text) {
    ExecOutcome out;
    out.command = text;
    out.exit_code = 0;
    history.append(level, out);
  };

  SUBCASE("unconfigured starts at installability") {
    const auto pick = select_next_test(MaturityLevel::Unconfigured, pyramid,
                                       history, nullptr);
    REQUIRE(pick.has_value());
    CHECK(pick->text == "pip install -r requirements.txt");
  }

  SUBCASE("succeeded commands are skipped") {
    mark_success(MaturityLevel::Installability,
                 "pip install -r requirements.txt");
    const auto pick = select_next_test(MaturityLevel::Installability, pyramid,
                                       history, nullptr);
    REQUIRE(pick.has_value());
    CHECK(pick->text == "pip install -e .");
  }

  SUBCASE("a failed attempt stays eligible") {
    ExecOutcome out;
    out.command = "pip install -r requirements.txt";
    out.exit_code = 1;
    history.append(MaturityLevel::Installability, out);
    const auto pick = select_next_test(MaturityLevel::Installability, pyramid,
                                       history, nullptr);
    REQUIRE(pick.has_value());
    CHECK(pick->text == "pip install -r requirements.txt");
  }

  SUBCASE("the level above is reachable, two above is not") {
    mark_success(MaturityLevel::Installability,
                 "pip install -r requirements.txt");
    mark_success(MaturityLevel::Installability, "pip install -e .");
    const auto pick = select_next_test(MaturityLevel::Installability, pyramid,
                                       history, nullptr);
    REQUIRE(pick.has_value());
    CHECK(pick->text == "pytest");  // one level up

    mark_success(MaturityLevel::Testability, "pytest");
    // Only runnability remains, two levels above installability.
    CHECK_FALSE(select_next_test(MaturityLevel::Installability, pyramid,
                                 history, nullptr)
                    .has_value());
    // From testability it is adjacent.
    const auto run = select_next_test(MaturityLevel::Testability, pyramid,
                                      history, nullptr);
    REQUIRE(run.has_value());
    CHECK(run->text == "python app.py");
  }

  SUBCASE("excluded commands are never proposed") {
    std::set<std::string> excluded = {"pip install -r requirements.txt"};
    SelectionOptions opts;
    opts.excluded = &excluded;
    const auto pick = select_next_test(MaturityLevel::Installability, pyramid,
                                       history, nullptr, opts);
    REQUIRE(pick.has_value());
    CHECK(pick->text == "pip install -e .");
  }

  SUBCASE("policy may pick any candidate at the two levels") {
    std::vector<ScriptedProvider::Entry> entries{
        entry(DecisionKind::PolicyDecide, {{"command", "pip install -e ."}})};
    ScriptedProvider provider(entries);
    const auto pick = select_next_test(MaturityLevel::Installability, pyramid,
                                       history, &provider);
    REQUIRE(pick.has_value());
    CHECK(pick->text == "pip install -e .");
  }

  SUBCASE("policy picks outside the candidate set are ignored") {
    std::vector<ScriptedProvider::Entry> entries{
        entry(DecisionKind::PolicyDecide, {{"command", "python app.py"}})};
    ScriptedProvider provider(entries);
    const auto pick = select_next_test(MaturityLevel::Installability, pyramid,
                                       history, &provider);
    REQUIRE(pick.has_value());
    CHECK(pick->text == "pip install -r requirements.txt");
  }

  SUBCASE("policy transport failure keeps the default") {
    ScriptedProvider provider(std::vector<ScriptedProvider::Entry>{});
    const auto pick = select_next_test(MaturityLevel::Installability, pyramid,
                                       history, &provider);
    REQUIRE(pick.has_value());
    CHECK(pick->text == "pip install -r requirements.txt");
  }

  SUBCASE("empty pyramid yields nothing") {
    const TestPyramid empty;
    CHECK_FALSE(select_next_test(MaturityLevel::Installability, empty, history,
                                 nullptr)
                    .has_value());
  }
}

TEST_CASE("deployment: clean three-level walk") {
  const BashFile bf = BashFile::from_template(python_profile());
  Orchestrator orch(OrchestratorConfig{}, nullptr, nullptr);
  const DeploymentReport report = orch.deploy(
      bf, three_level_pyramid(), sim_factory(R"([
        {"match": "#!/usr/bin/env bash*", "outcomes": [{"exit": 0}]}
      ])"),
      "demo");

  CHECK(report.repo == "demo");
  CHECK(report.final_state == MaturityLevel::Runnability);
  CHECK(report.repairs_applied == 0);
  CHECK(report.steps_used == 4);
  CHECK_FALSE(report.exhausted);
  CHECK(report.final_script == bf.render());

  const std::string trace = render_trace(report);
  CHECK(trace ==
        "#1 [execution] bash setup.sh -> exit 0 [unconfigured]\n"
        "#2 [feedback] pip install -r requirements.txt -> exit 0 "
        "[installable -> testable]\n"
        "#3 [feedback] pytest -> exit 0 [testable -> runnable]\n"
        "#4 [feedback] python app.py -> exit 0 [runnable]\n"
        "final: runnable (repairs applied: 0, steps: 4, exhausted: no)\n");
}

TEST_CASE("deployment: script failure repaired then validated") {
  const BashFile bf = BashFile::from_template(python_profile());
  Orchestrator orch(OrchestratorConfig{}, nullptr, nullptr);
  const DeploymentReport report = orch.deploy(
      bf, three_level_pyramid(), sim_factory(R"([
        {"match": "#!/usr/bin/env bash*",
         "outcomes": [{"exit": 1,
                       "stderr": "ModuleNotFoundError: No module named 'flask'"},
                      {"exit": 0}]}
      ])"),
      "demo");

  CHECK(report.final_state == MaturityLevel::Runnability);
  CHECK(report.repairs_applied == 1);
  CHECK(report.steps_used == 6);
  CHECK(report.final_script.find("pip install flask") != std::string::npos);

  const std::string trace = render_trace(report);
  CHECK(trace ==
        "#1 [execution] bash setup.sh -> exit 1 [unconfigured]\n"
        "#2 [repair single applied] append section 4: pip install flask "
        "[unconfigured]\n"
        "#3 [execution] bash setup.sh -> exit 0 [unconfigured]\n"
        "#4 [feedback] pip install -r requirements.txt -> exit 0 "
        "[installable -> testable]\n"
        "#5 [feedback] pytest -> exit 0 [testable -> runnable]\n"
        "#6 [feedback] python app.py -> exit 0 [runnable]\n"
        "final: runnable (repairs applied: 1, steps: 6, exhausted: no)\n");
}

TEST_CASE("deployment: feedback failure repairs and re-validates") {
  const BashFile bf = BashFile::from_template(python_profile());
  Orchestrator orch(OrchestratorConfig{}, nullptr, nullptr);
  const DeploymentReport report = orch.deploy(
      bf, three_level_pyramid(), sim_factory(R"([
        {"match": "#!/usr/bin/env bash*", "outcomes": [{"exit": 0}]},
        {"match": "pytest",
         "outcomes": [{"exit": 1,
                       "stderr": "ModuleNotFoundError: No module named 'pytest'"},
                      {"exit": 0}]}
      ])"),
      "demo");

  CHECK(report.final_state == MaturityLevel::Runnability);
  CHECK(report.repairs_applied == 1);
  CHECK(report.steps_used == 7);

  const std::string trace = render_trace(report);
  CHECK(trace ==
        "#1 [execution] bash setup.sh -> exit 0 [unconfigured]\n"
        "#2 [feedback] pip install -r requirements.txt -> exit 0 "
        "[installable -> testable]\n"
        "#3 [feedback] pytest -> exit 1 [testable]\n"
        "#4 [repair single applied] append section 4: pip install pytest "
        "[testable]\n"
        "#5 [execution] bash setup.sh -> exit 0 [testable]\n"
        "#6 [feedback] pytest -> exit 0 [testable -> runnable]\n"
        "#7 [feedback] python app.py -> exit 0 [runnable]\n"
        "final: runnable (repairs applied: 1, steps: 7, exhausted: no)\n");

  // History keeps both the failure and the success at testability.
  int testability_records = 0;
  for (const auto& r : report.history.records) {
    if (r.level == MaturityLevel::Testability) ++testability_records;
  }
  CHECK(testability_records == 2);
}

TEST_CASE("deployment: terminal state below runnable") {
  // Runnability stays empty, so validation stops after testability.
  TestPyramid pyramid;
  pyramid.installability = {cmd("pip install -r requirements.txt")};
  pyramid.testability = {cmd("pytest")};

  const BashFile bf = BashFile::from_template(python_profile());
  Orchestrator orch(OrchestratorConfig{}, nullptr, nullptr);
  const DeploymentReport report = orch.deploy(
      bf, pyramid, sim_factory(R"([
        {"match": "#!/usr/bin/env bash*", "outcomes": [{"exit": 0}]}
      ])"),
      "demo");

  CHECK(report.final_state == MaturityLevel::Testability);
  CHECK(report.steps_used == 3);
  CHECK_FALSE(report.exhausted);
}

TEST_CASE("deployment: unrepairable failure reports no-plan steps") {
  OrchestratorConfig config;
  config.budget.execution_loop_limit = 2;
  config.budget.total_step_limit = 10;
  const BashFile bf = BashFile::from_template(python_profile());
  Orchestrator orch(config, nullptr, nullptr);
  const DeploymentReport report = orch.deploy(
      bf, three_level_pyramid(), sim_factory(R"([
        {"match": "#!/usr/bin/env bash*",
         "outcomes": [{"exit": 1, "stderr": "something odd happened"}]}
      ])"),
      "demo");

  CHECK(report.final_state == MaturityLevel::Unconfigured);
  CHECK(report.repairs_applied == 0);
  CHECK(report.exhausted);
  REQUIRE(report.steps_used == 4);
  CHECK(report.trajectory[1].phase == StepPhase::Repair);
  CHECK_FALSE(report.trajectory[1].repair_mode.has_value());
  CHECK(report.trajectory[1].repair_applied == false);
  CHECK(report.trajectory[1].action.find("no applicable plan:") == 0);
  const std::string trace = render_trace(report);
  CHECK(trace.find("[repair none] no applicable plan:") != std::string::npos);
  CHECK(trace.find("exhausted: yes") != std::string::npos);
}

TEST_CASE("deployment: single repairs escalate inside one run") {
  OrchestratorConfig config;
  config.budget.execution_loop_limit = 5;
  config.budget.total_step_limit = 20;
  const BashFile bf = BashFile::from_template(python_profile());
  Orchestrator orch(config, nullptr, nullptr);
  const DeploymentReport report = orch.deploy(
      bf, three_level_pyramid(), sim_factory(R"([
        {"match": "#!/usr/bin/env bash*",
         "outcomes": [{"exit": 1,
                       "stderr": "ModuleNotFoundError: No module named 'flask'"}]}
      ])"),
      "demo");

  CHECK(report.exhausted);
  REQUIRE(report.steps_used == 10);
  // Repairs sit at odd trajectory indexes: single, single, single, whole
  // (the streak hit the threshold), then single again after the reset.
  const std::vector<RepairMode> expected = {
      RepairMode::SingleCommand, RepairMode::SingleCommand,
      RepairMode::SingleCommand, RepairMode::WholeScript,
      RepairMode::SingleCommand};
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const TrajectoryStep& step = report.trajectory[2 * i + 1];
    REQUIRE(step.phase == StepPhase::Repair);
    REQUIRE(step.repair_mode.has_value());
    CHECK(*step.repair_mode == expected[i]);
    CHECK(step.repair_applied == true);
  }
}

TEST_CASE("deployment: disabled feedback never repairs") {
  OrchestratorConfig config;
  config.feedback_enabled = false;

  SUBCASE("script failure ends the run") {
    const BashFile bf = BashFile::from_template(python_profile());
    Orchestrator orch(config, nullptr, nullptr);
    const DeploymentReport report = orch.deploy(
        bf, three_level_pyramid(), sim_factory(R"([
          {"match": "#!/usr/bin/env bash*",
           "outcomes": [{"exit": 1, "stderr": "boom"}]}
        ])"),
        "demo");
    CHECK(report.steps_used == 1);
    CHECK(report.repairs_applied == 0);
    CHECK(report.final_state == MaturityLevel::Unconfigured);
  }

  SUBCASE("failed commands are skipped, not repaired") {
    const BashFile bf = BashFile::from_template(python_profile());
    Orchestrator orch(config, nullptr, nullptr);
    const DeploymentReport report = orch.deploy(
        bf, three_level_pyramid(), sim_factory(R"([
          {"match": "#!/usr/bin/env bash*", "outcomes": [{"exit": 0}]},
          {"match": "pytest", "outcomes": [{"exit": 1, "stderr": "failed"}]}
        ])"),
        "demo");
    CHECK(report.repairs_applied == 0);
    for (const TrajectoryStep& step : report.trajectory) {
      CHECK(step.phase != StepPhase::Repair);
    }
    // pytest failed once and was excluded; the runnability probe still ran.
    CHECK(report.final_state == MaturityLevel::Runnability);
    CHECK(report.steps_used == 4);
  }
}

TEST_CASE("deployment: whole-script ablation uses only rebuilds") {
  OrchestratorConfig config;
  config.repair_mode = RepairMode::WholeScript;
  config.budget = LoopBudget::defaults_for(config.repair_mode);
  const BashFile bf = BashFile::from_template(python_profile());
  Orchestrator orch(config, nullptr, nullptr);
  const DeploymentReport report = orch.deploy(
      bf, three_level_pyramid(), sim_factory(R"([
        {"match": "#!/usr/bin/env bash*",
         "outcomes": [{"exit": 1,
                       "stderr": "ModuleNotFoundError: No module named 'flask'"},
                      {"exit": 0}]}
      ])"),
      "demo");

  CHECK(report.final_state == MaturityLevel::Runnability);
  CHECK(report.repairs_applied == 1);
  for (const TrajectoryStep& step : report.trajectory) {
    if (step.phase == StepPhase::Repair) {
      REQUIRE(step.repair_mode.has_value());
      CHECK(*step.repair_mode == RepairMode::WholeScript);
    }
  }
  const std::string trace = render_trace(report);
  CHECK(trace.find("[repair whole applied] rebuild sections 3-6") !=
        std::string::npos);
}

TEST_CASE("deployment: budget caps the trajectory exactly") {
  // A feedback command that never succeeds cycles feedback step, repair,
  // re-validation; the total step cap ends the run mid-cycle.
  const char* table = R"([
    {"match": "#!/usr/bin/env bash*", "outcomes": [{"exit": 0}]},
    {"match": "pip install -r requirements.txt",
     "outcomes": [{"exit": 1, "stderr": "bash: pip: command not found"}]}
  ])";

  SUBCASE("default budget stops at 200 steps") {
    OrchestratorConfig config;
    const BashFile bf = BashFile::from_template(python_profile());
    Orchestrator orch(config, nullptr, nullptr);
    const DeploymentReport report =
        orch.deploy(bf, three_level_pyramid(), sim_factory(table), "demo");
    CHECK(report.exhausted);
    CHECK(report.steps_used == 200);
  }

  SUBCASE("single-command budget stops at 250 steps") {
    OrchestratorConfig config;
    config.repair_mode = RepairMode::SingleCommand;
    config.budget = LoopBudget::defaults_for(config.repair_mode);
    const BashFile bf = BashFile::from_template(python_profile());
    Orchestrator orch(config, nullptr, nullptr);
    const DeploymentReport report =
        orch.deploy(bf, three_level_pyramid(), sim_factory(table), "demo");
    CHECK(report.exhausted);
    CHECK(report.steps_used == 250);
    for (const TrajectoryStep& step : report.trajectory) {
      if (step.phase == StepPhase::Repair && step.repair_mode) {
        CHECK(*step.repair_mode == RepairMode::SingleCommand);
      }
    }
  }
}

TEST_CASE("deployment: rollback can demand a fresh sandbox") {
  const char* table = R"([
    {"match": "#!/usr/bin/env bash*", "outcomes": [{"exit": 0}]},
    {"match": "pip install -r requirements.txt",
     "outcomes": [{"exit": 1, "stderr": "bash: pip: command not found"}]}
  ])";
  const SimulationTable parsed = SimulationTable::from_json(json::parse(table));

  auto run_with = [&](bool fresh) {
    int factory_calls = 0;
    SandboxFactory factory = [&factory_calls, parsed]() {
      ++factory_calls;
      return create_simulated_sandbox(SandboxSpec{}, parsed);
    };
    OrchestratorConfig config;
    config.fresh_sandbox_on_rollback = fresh;
    config.budget.feedback_loop_limit = 2;
    config.budget.total_step_limit = 30;
    const BashFile bf = BashFile::from_template(python_profile());
    Orchestrator orch(config, nullptr, nullptr);
    const DeploymentReport report =
        orch.deploy(bf, three_level_pyramid(), factory, "demo");
    return std::pair<int, DeploymentReport>(factory_calls, report);
  };

  const auto [fresh_calls, fresh_report] = run_with(true);
  CHECK(fresh_calls == 3);  // initial + one per feedback failure
  CHECK(fresh_report.exhausted);

  const auto [reuse_calls, reuse_report] = run_with(false);
  CHECK(reuse_calls == 1);
  CHECK(reuse_report.steps_used == fresh_report.steps_used);
}

TEST_CASE("deployment: stream collection can be disabled") {
  OrchestratorConfig config;
  config.collect_streams = false;
  config.budget.execution_loop_limit = 1;
  const BashFile bf = BashFile::from_template(python_profile());
  Orchestrator orch(config, nullptr, nullptr);
  const DeploymentReport report = orch.deploy(
      bf, three_level_pyramid(), sim_factory(R"([
        {"match": "#!/usr/bin/env bash*",
         "outcomes": [{"exit": 1, "stderr": "something odd happened"}]}
      ])"),
      "demo");
  REQUIRE_FALSE(report.trajectory.empty());
  REQUIRE(report.trajectory[0].outcome.has_value());
  CHECK(report.trajectory[0].outcome->stderr_text.empty());
}

TEST_CASE("deployment: config echo records the effective settings") {
  const BashFile bf = BashFile::from_template(python_profile());
  OrchestratorConfig config;
  config.single_repair_escalation = 7;
  Orchestrator orch(config, nullptr, nullptr);
  const DeploymentReport report = orch.deploy(
      bf, TestPyramid{}, sim_factory(R"([
        {"match": "#!/usr/bin/env bash*", "outcomes": [{"exit": 0}]}
      ])"),
      "demo");
  CHECK(report.config_echo.at("repair_mode") == "hybrid");
  CHECK(report.config_echo.at("single_repair_escalation") == 7);
  CHECK(report.config_echo.at("total_step_limit") == 200);
  CHECK(report.wall_time_s >= 0.0);
}
