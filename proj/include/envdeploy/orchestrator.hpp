#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "envdeploy/bashfile.hpp"
#include "envdeploy/maturity.hpp"
#include "envdeploy/pyramid.hpp"
#include "envdeploy/reasoner.hpp"
#include "envdeploy/sandbox.hpp"

namespace envdeploy {

// How failures may be repaired. Hybrid picks per failure between a targeted
// single-command patch and a whole rebuild of sections 3..6; the other two
// force one strategy and exist for ablation runs.
enum class RepairMode { Hybrid, WholeScript, SingleCommand };

std::string_view to_string(RepairMode mode);
std::optional<RepairMode> repair_mode_from_string(std::string_view name);

struct LoopBudget {
  int execution_loop_limit = 100;
  int feedback_loop_limit = 100;
  int total_step_limit = 200;

  // Single-command-only runs get headroom for their smaller, more frequent
  // patches.
  static LoopBudget defaults_for(RepairMode mode);
};

enum class FailureCategory {
  MissingSystemDependency,
  MissingLanguageDependency,
  MissingEnvVar,
  CompilationError,
  RuntimeError,
  MissingArtifact,
  Unknown,
};

std::string_view to_string(FailureCategory category);
std::optional<FailureCategory> failure_category_from_string(
    std::string_view name);

struct FailureAnalysis {
  FailureCategory category = FailureCategory::Unknown;
  // Verbatim line from the captured output that decided the category; empty
  // only when the output had nothing to quote.
  std::string evidence;
  std::string detail;  // extracted package, module, variable or path
  std::optional<std::uint64_t> faulty_line;
};

struct RepairPlan {
  RepairMode mode = RepairMode::SingleCommand;  // never Hybrid
  std::vector<RepairRecord> actions;
  std::string rationale;
};

// Escalation bookkeeping across one deployment: hybrid planning switches to
// a whole rebuild once this many single-command repairs failed in a row.
struct RepairState {
  int consecutive_single_failures = 0;
};

enum class StepPhase { ExecutionLoop, FeedbackLoop, Repair };

std::string_view to_string(StepPhase phase);
std::optional<StepPhase> step_phase_from_string(std::string_view name);

struct TrajectoryStep {
  int index = 0;
  StepPhase phase = StepPhase::ExecutionLoop;
  std::string action;  // command text, or a repair summary
  std::optional<ExecOutcome> outcome;
  MaturityLevel state_before = MaturityLevel::Unconfigured;
  MaturityLevel state_after = MaturityLevel::Unconfigured;
  std::optional<RepairMode> repair_mode;  // repair steps only
  std::optional<bool> repair_applied;     // repair steps only

  bool operator==(const TrajectoryStep&) const = default;
};

struct DeploymentReport {
  std::string repo;
  MaturityLevel final_state = MaturityLevel::Unconfigured;
  std::vector<TrajectoryStep> trajectory;
  StateHistory history;  // pyramid command outcomes by level
  std::string final_script;
  int repairs_applied = 0;
  int steps_used = 0;
  bool exhausted = false;
  double wall_time_s = 0;
  nlohmann::json config_echo;
};

struct OrchestratorConfig {
  RepairMode repair_mode = RepairMode::Hybrid;
  bool feedback_enabled = true;
  bool fresh_sandbox_on_rollback = false;
  int single_repair_escalation = 3;
  LoopBudget budget = LoopBudget::defaults_for(RepairMode::Hybrid);
  bool collect_streams = true;  // false drops streams from the trajectory
};

// --- Free operations ----------------------------------------------------

// Categorizes a failed outcome. With a provider the question is delegated
// (heuristic fallback on error); the built-in path scans stderr, then
// stdout, against an ordered diagnostic pattern table and locates the
// faulty script line via the error-trap marker.
FailureAnalysis analyze_failure(const ExecOutcome& failed, const BashFile& bf,
                                DecisionProvider* reasoner);

// Turns an analysis into a patch plan. Respects the configured mode
// (ablation modes are hard constraints; a provider plan violating them is
// discarded in favor of the heuristic), escalates hybrid planning to a
// whole rebuild after repeated single-repair failures, and throws
// EmptyPlanError when no applicable action exists.
RepairPlan plan_repair(const FailureAnalysis& analysis, const BashFile& bf,
                       const OrchestratorConfig& config,
                       DecisionProvider* provider, RepairState& state);

struct SelectionOptions {
  // Commands never to propose again (used by the no-feedback mode).
  const std::set<std::string>* excluded = nullptr;
};

// Default selection: first not-yet-succeeded command at the current level,
// else at the level one above. A policy provider may override with any
// pyramid command at those two levels. Returns nullopt when nothing is left
// to propose.
std::optional<CandidateCommand> select_next_test(
    MaturityLevel state, const TestPyramid& pyramid,
    const StateHistory& history, DecisionProvider* policy,
    const SelectionOptions& opts = {});

// JSON-level heuristic cores shared with the heuristic provider. Context
// shapes match what analyze_failure and plan_repair send to providers.
nlohmann::json heuristic_analysis_from_context(const nlohmann::json& context);
nlohmann::json heuristic_plan_from_context(const nlohmann::json& context);

// --- Orchestrator -------------------------------------------------------

using SandboxFactory = std::function<std::unique_ptr<Sandbox>()>;

// Drives one deployment: executes the script until it passes (repairing
// each failure), then walks the maturity levels bottom-up, running one
// validation command at a time, repairing and re-validating on failure.
// Every step lands in the trajectory; budgets bound both loops and the
// overall step count.
class Orchestrator {
public:
  Orchestrator(OrchestratorConfig config, DecisionProvider* repairer,
               DecisionProvider* policy);

  DeploymentReport deploy(const BashFile& initial, const TestPyramid& pyramid,
                          const SandboxFactory& make_sandbox,
                          const std::string& repo_id);

private:
  struct Run;  // per-deployment mutable state

  bool execution_loop(Run& run);
  void feedback_loop(Run& run);
  bool repair_once(Run& run, const ExecOutcome& failed);

  OrchestratorConfig config_;
  DecisionProvider* repairer_;
  DecisionProvider* policy_;
};

// Stable line-per-step text rendering of a report; excludes all timing so
// runs compare byte-for-byte.
std::string render_trace(const DeploymentReport& report);

}  // namespace envdeploy
