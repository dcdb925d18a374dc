#include "envdeploy/maturity.hpp"

#include <algorithm>

namespace envdeploy {

Ordering compare(MaturityLevel a, MaturityLevel b) {
  const int ia = static_cast<int>(a);
  const int ib = static_cast<int>(b);
  if (ia < ib) return Ordering::Less;
  if (ia > ib) return Ordering::Greater;
  return Ordering::Equal;
}

std::optional<MaturityLevel> successor(MaturityLevel level) {
  if (level == MaturityLevel::Runnability) return std::nullopt;
  return static_cast<MaturityLevel>(static_cast<int>(level) + 1);
}

std::optional<MaturityLevel> predecessor(MaturityLevel level) {
  if (level == MaturityLevel::Unconfigured) return std::nullopt;
  return static_cast<MaturityLevel>(static_cast<int>(level) - 1);
}

std::string_view to_string(MaturityLevel level) {
  switch (level) {
    case MaturityLevel::Unconfigured:
      return "unconfigured";
    case MaturityLevel::Installability:
      return "installable";
    case MaturityLevel::Testability:
      return "testable";
    case MaturityLevel::Runnability:
      return "runnable";
  }
  return "unconfigured";
}

std::optional<MaturityLevel> level_from_string(std::string_view name) {
  for (MaturityLevel level : kMaturityLevels) {
    if (to_string(level) == name) return level;
  }
  return std::nullopt;
}

bool aggregate_exec(std::span<const ExecOutcome> outcomes) {
  return std::any_of(outcomes.begin(), outcomes.end(),
                     [](const ExecOutcome& o) { return o.success(); });
}

void StateHistory::append(MaturityLevel level, ExecOutcome outcome) {
  records.push_back(Record{level, std::move(outcome)});
}

std::vector<ExecOutcome> StateHistory::at_level(MaturityLevel level) const {
  std::vector<ExecOutcome> out;
  for (const Record& r : records) {
    if (r.level == level) out.push_back(r.outcome);
  }
  return out;
}

bool StateHistory::any_success_at(MaturityLevel level) const {
  return std::any_of(records.begin(), records.end(), [&](const Record& r) {
    return r.level == level && r.outcome.success();
  });
}

PolicyDecision default_policy(bool level_satisfied) {
  if (level_satisfied) {
    return PolicyDecision{PolicyAction::Advance, "level satisfied"};
  }
  return PolicyDecision{PolicyAction::Stay, "level not satisfied"};
}

MaturityLevel transition(MaturityLevel current, bool level_satisfied,
                         const PolicyDecision& decision) {
  // The outcome gates the direction: no upward move without a satisfied
  // level, no downward move with one. Within that gate the decision picks
  // advance / stay / rollback, clamped at the boundary levels.
  if (level_satisfied) {
    if (decision.action == PolicyAction::Advance) {
      return successor(current).value_or(current);
    }
    return current;
  }
  if (decision.action == PolicyAction::Rollback) {
    return predecessor(current).value_or(current);
  }
  return current;
}

MaturityLevel max_supported_state(const StateHistory& history) {
  MaturityLevel best = MaturityLevel::Unconfigured;
  for (const StateHistory::Record& r : history.records) {
    if (r.outcome.success() &&
        compare(r.level, best) == Ordering::Greater) {
      best = r.level;
    }
  }
  return best;
}

std::string truncate_stream(std::string text, std::size_t byte_cap,
                            bool* truncated) {
  if (truncated) *truncated = false;
  if (byte_cap == 0 || text.size() <= byte_cap) return text;

  const std::size_t head = byte_cap / 2;
  const std::size_t tail = byte_cap - head;
  const std::size_t dropped = text.size() - head - tail;

  std::string out;
  out.reserve(byte_cap + 64);
  out.append(text, 0, head);
  out += "\n...[";
  out += std::to_string(dropped);
  out += " bytes truncated]...\n";
  out.append(text, text.size() - tail, tail);
  if (truncated) *truncated = true;
  return out;
}

}  // namespace envdeploy
