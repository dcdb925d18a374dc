#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace envdeploy {

// Readiness levels of a deployed environment, ordered from nothing-works to
// the application actually starting. Unconfigured is the bottom element; the
// three named levels above it correspond to dependency installation, test
// execution, and application startup.
enum class MaturityLevel : int {
  Unconfigured = 0,
  Installability = 1,
  Testability = 2,
  Runnability = 3,
};

inline constexpr MaturityLevel kMaturityLevels[] = {
    MaturityLevel::Unconfigured,
    MaturityLevel::Installability,
    MaturityLevel::Testability,
    MaturityLevel::Runnability,
};

// Levels that carry validation commands; Unconfigured has none.
inline constexpr MaturityLevel kCommandLevels[] = {
    MaturityLevel::Installability,
    MaturityLevel::Testability,
    MaturityLevel::Runnability,
};

enum class Ordering { Less, Equal, Greater };

Ordering compare(MaturityLevel a, MaturityLevel b);

// Next level up, or nullopt at the top.
std::optional<MaturityLevel> successor(MaturityLevel level);

// Next level down, or nullopt at the bottom.
std::optional<MaturityLevel> predecessor(MaturityLevel level);

// Stable serialization names: "unconfigured", "installable", "testable",
// "runnable". Used in every JSON artifact; do not change.
std::string_view to_string(MaturityLevel level);
std::optional<MaturityLevel> level_from_string(std::string_view name);

// Exit code the `timeout` wrapper produces when a command overruns.
inline constexpr int kTimeoutExitCode = 124;

// Captured result of one command or script execution. Streams are truncated
// at capture time (head and tail halves kept) so they stay loggable.
struct ExecOutcome {
  std::string command;
  int exit_code = 0;
  std::string stdout_text;
  std::string stderr_text;
  std::int64_t duration_ms = 0;
  bool truncated = false;

  // The only success signal the system trusts.
  bool success() const { return exit_code == 0; }
  bool timed_out() const { return exit_code == kTimeoutExitCode; }

  bool operator==(const ExecOutcome&) const = default;
};

// True iff at least one outcome succeeded. An empty set has no evidence and
// counts as failure.
bool aggregate_exec(std::span<const ExecOutcome> outcomes);

// Per-level record of every validation command outcome seen so far.
struct StateHistory {
  struct Record {
    MaturityLevel level;
    ExecOutcome outcome;
  };

  std::vector<Record> records;

  void append(MaturityLevel level, ExecOutcome outcome);
  // All outcomes recorded at exactly this level.
  std::vector<ExecOutcome> at_level(MaturityLevel level) const;
  bool any_success_at(MaturityLevel level) const;
};

// What the policy wants done with the current level after an outcome.
enum class PolicyAction { Advance, Stay, Rollback };

struct PolicyDecision {
  PolicyAction action = PolicyAction::Stay;
  std::string rationale;
};

// Built-in policy when no external decision maker is wired in: advance on a
// satisfied level, hold position otherwise.
PolicyDecision default_policy(bool level_satisfied);

// One transition step. Moves at most one level in either direction and
// clamps at the ends. A satisfied level never moves down; an unsatisfied
// level never moves up, whatever the decision says.
MaturityLevel transition(MaturityLevel current, bool level_satisfied,
                         const PolicyDecision& decision);

// Highest level with at least one successful outcome in the history;
// Unconfigured when there is none. Order of records does not matter.
MaturityLevel max_supported_state(const StateHistory& history);

// Keeps the first and last byte_cap/2 bytes with a marker between; sets
// *truncated when anything was dropped. byte_cap of 0 means unlimited.
std::string truncate_stream(std::string text, std::size_t byte_cap,
                            bool* truncated = nullptr);

}  // namespace envdeploy
