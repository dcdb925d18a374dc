#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "envdeploy/reasoner.hpp"

namespace envdeploy {

enum class FileKind { Source, Docs, BuildConfig, CiConfig, Script, Data, Other };

std::string_view to_string(FileKind kind);

struct FileEntry {
  std::string relative_path;  // '/'-separated, no leading "./"
  FileKind kind = FileKind::Other;
  std::uint64_t size_bytes = 0;
  std::optional<std::string> language_hint;
};

struct DirTree {
  std::string name;
  std::vector<DirTree> dirs;
  std::vector<std::string> files;  // plain names, sorted
};

struct IndexOptions {
  std::vector<std::string> ignore_dirs = {".git", ".hg", ".svn",
                                          "node_modules", "__pycache__"};
  // Files above this size are indexed but never eligible for content
  // retrieval.
  std::uint64_t content_size_cap = 1 << 20;
};

// Path classification used both at index time and when re-deriving the kind
// of a retrieved file.
FileKind classify_path(std::string_view relative_path);
std::optional<std::string> language_hint_for(std::string_view relative_path);

// Read-only snapshot of a repository working tree.
class FileIndex {
public:
  // Walks root recursively, skipping ignored directories and symlinks
  // (recorded as warnings). Throws IndexError when root is missing or not a
  // directory. Entries come back sorted by path.
  static FileIndex build(const std::filesystem::path& root,
                         IndexOptions opts = {});

  const std::filesystem::path& root() const { return root_; }
  const IndexOptions& options() const { return options_; }
  const std::vector<FileEntry>& entries() const { return entries_; }
  const DirTree& tree() const { return tree_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  const FileEntry* find(std::string_view relative_path) const;
  // Indented directory listing, suitable for embedding in a prompt.
  std::string tree_text() const;

private:
  std::filesystem::path root_;
  IndexOptions options_;
  std::vector<FileEntry> entries_;
  DirTree tree_;
  std::vector<std::string> warnings_;
};

// Progress of the iterative environment-file search over one repository.
struct RetrievalState {
  std::vector<std::string> involved_files;  // already retrieved, in order
  int rounds_used = 0;
  int max_rounds = 5;
  std::vector<std::string> suggestions;  // hints for the next round

  bool involved(std::string_view relative_path) const;

  // Files rejected for content retrieval (too large or not valid UTF-8);
  // kept so they are not re-proposed every round.
  std::vector<std::string> content_ineligible;
};

struct RetrievedFile {
  std::string relative_path;
  std::string content;
  FileKind kind = FileKind::Other;
};

// One retrieval round: proposes up to batch_limit not-yet-involved files,
// preferring build configs, then CI configs, docs and scripts, plus
// anything matching a query hint. Reads their content, marks them involved
// and advances rounds_used. Throws RetrievalExhausted when the round budget
// is already spent.
std::vector<RetrievedFile> retrieve_env_files(
    const FileIndex& index, RetrievalState& state,
    const std::vector<std::string>& query_hints, int batch_limit = 5);

enum class Sufficiency { Sufficient, NeedMore };

struct SufficiencyVerdict {
  Sufficiency verdict = Sufficiency::NeedMore;
  std::vector<std::string> suggestions;  // nonempty when NeedMore
};

// Decides whether the retrieved set is enough to derive a bootstrap script.
// With a provider the question is delegated (heuristic fallback on
// ReasonerError); without one the built-in rule applies: a dependency
// manifest or a docs file containing executable commands suffices.
SufficiencyVerdict sufficiency_check(const std::vector<RetrievedFile>& files,
                                     DecisionProvider* reasoner);

// Heuristic core of sufficiency_check, shared with the heuristic provider.
SufficiencyVerdict heuristic_sufficiency(const std::vector<RetrievedFile>& files);

}  // namespace envdeploy
