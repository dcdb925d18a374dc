#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "envdeploy/bashfile.hpp"
#include "envdeploy/maturity.hpp"
#include "envdeploy/reasoner.hpp"

namespace envdeploy {

enum class CommandOrigin { Mined, Supplemented };

std::string_view to_string(CommandOrigin origin);

// A shell command harvested from repository documentation, CI configs or
// build files, before or after classification.
struct CandidateCommand {
  std::string text;
  std::string source_path;
  std::optional<std::pair<int, int>> source_lines;  // 1-based, inclusive
  int extraction_round = 0;
  CommandOrigin origin = CommandOrigin::Mined;

  bool operator==(const CandidateCommand&) const = default;
};

// Validation commands grouped by the readiness level they probe.
struct TestPyramid {
  std::vector<CandidateCommand> installability;
  std::vector<CandidateCommand> testability;
  std::vector<CandidateCommand> runnability;

  const std::vector<CandidateCommand>& level(MaturityLevel l) const;
  std::vector<CandidateCommand>& level(MaturityLevel l);
  bool contains_text(std::string_view text) const;
  std::size_t total() const;

  // Schema: {"installability":[{"cmd","source","origin"}],...}. Optional
  // per-command keys "lines" ([first,last]) and "round" round-trip too.
  nlohmann::json to_json() const;
  static TestPyramid from_json(const nlohmann::json& doc);
};

// Pulls candidate commands out of one file. Understands markdown code
// fences and "$ "-prefixed lines, CI "run:" entries (including block
// scalars), and Makefile recipes. Duplicates within the file are dropped,
// first occurrence wins. Every candidate's text is a substring of the file.
std::vector<CandidateCommand> extract_commands(const std::string& content,
                                               const std::string& source_path,
                                               int extraction_round = 0);

struct FilterResult {
  bool keep = false;
  std::string reason;
};

// Drops comments, bare prose, cd-only lines, prompt fragments and other
// non-executable noise before classification.
FilterResult filter_command(const CandidateCommand& candidate);

struct ClassificationResult {
  CandidateCommand command;
  std::optional<MaturityLevel> level;  // nullopt means rejected
  std::string reason;
};

// Assigns a command to the readiness level it validates. With a provider
// the question is delegated (heuristic fallback on ReasonerError or an
// unusable payload); without one the rule table decides.
ClassificationResult classify_command(const CandidateCommand& candidate,
                                      DecisionProvider* reasoner);

// Rule-table core of classification, shared with the heuristic provider
// and with adjustment. Returns the level plus the matched-rule description.
std::pair<std::optional<MaturityLevel>, std::string> heuristic_classify_text(
    std::string_view text);

struct RefinementVerdict {
  bool accomplished = false;
  std::string reason;
};

// Mining is done when the round budget is spent or every level holds at
// least one command.
RefinementVerdict refinement_decision(const TestPyramid& pyramid,
                                      int rounds_used, int max_rounds);

// Final pyramid pass: removes cross-level duplicates (each text kept at one
// level) and conservatively supplements standard commands for empty levels
// the stack profile justifies. Supplemented commands carry
// origin=Supplemented. Idempotent. With an advisor the per-command level
// choice and the supplement list are delegated; transport failure degrades
// to deduplication only.
TestPyramid adjust_pyramid(const TestPyramid& pyramid,
                           DecisionProvider* advisor,
                           const StackProfile* profile = nullptr);

// Heuristic supplement list for one level: standard commands the profile
// justifies that the pyramid lacks. Shared with the heuristic provider.
std::vector<std::string> heuristic_supplements(const TestPyramid& pyramid,
                                               MaturityLevel level,
                                               const StackProfile* profile);

}  // namespace envdeploy
