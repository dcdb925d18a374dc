#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace envdeploy {

// Where a script line came from. Repair-origin lines survive whole-script
// rebuilds; template lines are regenerated from the stack profile.
enum class LineOrigin { Template, Generated, Repair };

std::string_view to_string(LineOrigin origin);

struct ScriptLine {
  std::uint64_t line_id = 0;  // unique within one BashFile, never reused
  std::string text;
  LineOrigin origin = LineOrigin::Generated;
};

struct Section {
  int id = 0;  // 1..6
  std::string title;
  std::vector<ScriptLine> lines;
};

enum class RepairKind { ReplaceLine, AppendLine, DeleteLine };

std::string_view to_string(RepairKind kind);

// One recorded patch. ReplaceLine and DeleteLine address a line_id;
// AppendLine addresses a section. Records are kept verbatim so a history
// replay rebuilds the exact same script.
struct RepairRecord {
  RepairKind kind = RepairKind::AppendLine;
  std::uint64_t target_line = 0;
  int target_section = 0;
  std::optional<std::string> new_text;
  std::string cause;
  std::int64_t timestamp_ms = 0;
};

// Detected stack traits of a repository, e.g. "python", "requirements",
// "node", "jvm-maven", "cmake", "has-tests". Drives template population.
struct StackProfile {
  std::vector<std::string> traits;
  std::vector<std::string> marker_files;

  bool has(std::string_view trait) const;
};

struct PatchOptions {
  // Section 1 holds the execution context (shell options, logging, error
  // trap); edits there are rejected unless explicitly allowed.
  bool allow_context_section_edits = false;
};

// Structured bootstrap script: six fixed sections executed top to bottom.
//   1 execution context, 2 package manager abstraction, 3 base packages,
//   4 language environment, 5 project build logic, 6 completion marker.
class BashFile {
public:
  static constexpr int kSectionCount = 6;
  static const std::array<std::string_view, kSectionCount> kSectionTitles;

  // Fresh script for a stack profile. Sections 3..5 are populated from the
  // profile; an empty profile yields comment-only placeholders there.
  static BashFile from_template(const StackProfile& profile);

  // Rebuilds the structure from rendered text. Line ids are assigned fresh
  // and origins are not recoverable (all lines come back Generated), but
  // render(parse(render(bf))) == render(bf) holds for any bf.
  static BashFile parse(const std::string& text);

  const std::vector<Section>& sections() const { return sections_; }
  const Section& section(int id) const;
  const std::vector<RepairRecord>& repair_history() const { return history_; }
  const StackProfile& profile() const { return profile_; }
  int version() const { return version_; }

  const ScriptLine* find_line(std::uint64_t line_id) const;
  // First line whose text matches exactly; used to locate a faulty command
  // reported by the error trap.
  std::optional<std::uint64_t> find_line_by_text(std::string_view text) const;
  int section_of_line(std::uint64_t line_id) const;  // 0 when absent

  std::string render() const;

private:
  friend BashFile apply_repair(const BashFile& bf, const RepairRecord& action,
                               const PatchOptions& opts);

  std::vector<Section> sections_;
  std::vector<RepairRecord> history_;
  StackProfile profile_;
  int version_ = 1;
  std::uint64_t next_line_id_ = 1;

  std::uint64_t take_line_id() { return next_line_id_++; }
};

// Returns a new BashFile with the action applied and recorded; version is
// one higher. Throws PatchError on a missing line/section, an edit to
// section 1 (unless allowed), or a text payload that fails the shell scan.
BashFile apply_repair(const BashFile& bf, const RepairRecord& action,
                      const PatchOptions& opts = {});

// from_template(profile) with the whole history re-applied in order.
BashFile replay_history(const StackProfile& profile,
                        const std::vector<RepairRecord>& history,
                        const PatchOptions& opts = {});

// Container recipe that bakes the script in and runs it at build time.
// Deterministic for a given (script, image) pair. Throws EmitError on a
// malformed image reference.
std::string emit_dockerfile(const BashFile& bf, const std::string& base_image);

// Cheap structural scan: balanced quotes and no unterminated line
// continuation. Not a shell parser; `bash -n` stays the authority.
bool shell_text_ok(const std::string& text);

// True when the reference looks like a valid image name[:tag][@digest].
bool valid_image_reference(const std::string& ref);

}  // namespace envdeploy
