#include "envdeploy/repo_index.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "envdeploy/errors.hpp"
#include "envdeploy/pyramid.hpp"

namespace envdeploy {

namespace {

namespace fs = std::filesystem;

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string basename_of(std::string_view path) {
  const std::size_t slash = path.find_last_of('/');
  return std::string(slash == std::string_view::npos ? path
                                                     : path.substr(slash + 1));
}

std::string ext_of(std::string_view path) {
  const std::string base = basename_of(path);
  const std::size_t dot = base.find_last_of('.');
  if (dot == std::string::npos || dot == 0) return "";
  return lower(base.substr(dot));
}

bool starts_with(std::string_view s, std::string_view prefix) {
  return s.substr(0, prefix.size()) == prefix;
}

bool utf8_valid(const std::string& text) {
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    std::size_t len = 0;
    if (c < 0x80) {
      if (c == 0) return false;  // NUL bytes mean binary content here
      len = 1;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
    } else {
      return false;
    }
    if (i + len > n) return false;
    for (std::size_t j = 1; j < len; ++j) {
      if ((static_cast<unsigned char>(text[i + j]) & 0xC0) != 0x80) return false;
    }
    i += len;
  }
  return true;
}

}  // namespace

std::string_view to_string(FileKind kind) {
  switch (kind) {
    case FileKind::Source:
      return "source";
    case FileKind::Docs:
      return "docs";
    case FileKind::BuildConfig:
      return "build_config";
    case FileKind::CiConfig:
      return "ci_config";
    case FileKind::Script:
      return "script";
    case FileKind::Data:
      return "data";
    case FileKind::Other:
      return "other";
  }
  return "other";
}

FileKind classify_path(std::string_view relative_path) {
  const std::string path = lower(std::string(relative_path));
  const std::string base = basename_of(path);
  const std::string ext = ext_of(path);

  // CI configurations first: they are yaml like plenty of data files.
  if (starts_with(path, ".github/workflows/") || starts_with(path, ".circleci/") ||
      base.find(".gitlab-ci") != std::string::npos ||
      base.find(".travis") != std::string::npos || base == "jenkinsfile" ||
      starts_with(base, "azure-pipelines") || base == "appveyor.yml" ||
      base == ".drone.yml") {
    return FileKind::CiConfig;
  }

  static const std::set<std::string> kBuildNames = {
      "pyproject.toml", "setup.py",      "setup.cfg",      "pipfile",
      "pipfile.lock",   "pom.xml",       "build.gradle",   "build.gradle.kts",
      "cmakelists.txt", "makefile",      "gnumakefile",    "package.json",
      "package-lock.json", "yarn.lock",  "meson.build",    "cargo.toml",
      "cargo.lock",     "go.mod",        "go.sum",         "gemfile",
      "gemfile.lock",   "composer.json", "environment.yml", "tox.ini",
      "noxfile.py",     "stack.yaml",    "sconstruct",     "configure",
      "configure.ac",   "makefile.am",   "build",          "build.bazel",
      "workspace",      "justfile",
  };
  if (kBuildNames.count(base) || starts_with(base, "requirements") ||
      starts_with(base, "settings.gradle") || starts_with(base, "dockerfile") ||
      starts_with(base, "docker-compose")) {
    return FileKind::BuildConfig;
  }
  if (ext == ".gemspec" || ext == ".cabal" || ext == ".mk") {
    return FileKind::BuildConfig;
  }

  static const std::set<std::string> kDocExts = {".md", ".rst", ".adoc", ".txt"};
  if (kDocExts.count(ext) || starts_with(base, "readme") ||
      starts_with(base, "install") || starts_with(base, "changelog") ||
      starts_with(base, "license") || starts_with(base, "contributing") ||
      starts_with(base, "copying")) {
    return FileKind::Docs;
  }

  static const std::set<std::string> kScriptExts = {".sh", ".bash", ".zsh",
                                                    ".ps1", ".bat", ".cmd"};
  if (kScriptExts.count(ext)) return FileKind::Script;

  static const std::set<std::string> kSourceExts = {
      ".py", ".java", ".kt",  ".scala", ".c",   ".cc", ".cpp", ".cxx", ".h",
      ".hh", ".hpp",  ".js",  ".jsx",   ".ts",  ".tsx", ".go", ".rs",  ".rb",
      ".php", ".cs",  ".swift", ".m",   ".mm",  ".pl",  ".lua", ".r",  ".jl",
      ".ipynb",
  };
  if (kSourceExts.count(ext)) return FileKind::Source;

  static const std::set<std::string> kDataExts = {
      ".json", ".yaml", ".yml", ".xml", ".toml", ".ini", ".cfg", ".csv",
      ".tsv",  ".sql",  ".proto", ".html", ".css", ".svg",
  };
  if (kDataExts.count(ext)) return FileKind::Data;

  return FileKind::Other;
}

std::optional<std::string> language_hint_for(std::string_view relative_path) {
  static const std::map<std::string, std::string> kByExt = {
      {".py", "python"}, {".java", "java"},   {".kt", "kotlin"},
      {".c", "c"},       {".cc", "cpp"},      {".cpp", "cpp"},
      {".cxx", "cpp"},   {".h", "c"},         {".hh", "cpp"},
      {".hpp", "cpp"},   {".js", "javascript"}, {".jsx", "javascript"},
      {".ts", "typescript"}, {".tsx", "typescript"}, {".go", "go"},
      {".rs", "rust"},   {".rb", "ruby"},     {".php", "php"},
      {".cs", "csharp"}, {".swift", "swift"}, {".scala", "scala"},
      {".pl", "perl"},   {".lua", "lua"},     {".r", "r"},
      {".jl", "julia"},
  };
  const auto it = kByExt.find(ext_of(relative_path));
  if (it == kByExt.end()) return std::nullopt;
  return it->second;
}

FileIndex FileIndex::build(const std::filesystem::path& root,
                           IndexOptions opts) {
  std::error_code ec;
  if (!fs::exists(root, ec) || ec) {
    throw IndexError("repository root does not exist: " + root.string());
  }
  if (!fs::is_directory(root, ec) || ec) {
    throw IndexError("repository root is not a directory: " + root.string());
  }

  FileIndex index;
  index.root_ = root;
  index.options_ = opts;
  index.tree_.name = root.filename().string();

  const std::set<std::string> ignored(opts.ignore_dirs.begin(),
                                      opts.ignore_dirs.end());

  fs::recursive_directory_iterator it(
      root, fs::directory_options::skip_permission_denied, ec);
  if (ec) {
    throw IndexError("cannot walk repository root: " + ec.message());
  }
  const fs::recursive_directory_iterator end;
  for (; it != end; it.increment(ec)) {
    if (ec) {
      index.warnings_.push_back("walk interrupted: " + ec.message());
      break;
    }
    const fs::directory_entry& entry = *it;
    const std::string name = entry.path().filename().string();

    if (entry.is_symlink()) {
      index.warnings_.push_back("symlink skipped: " +
                                fs::relative(entry.path(), root).generic_string());
      if (entry.is_directory()) it.disable_recursion_pending();
      continue;
    }
    if (entry.is_directory()) {
      if (ignored.count(name)) it.disable_recursion_pending();
      continue;
    }
    if (!entry.is_regular_file()) continue;

    FileEntry fe;
    fe.relative_path = fs::relative(entry.path(), root).generic_string();
    fe.kind = classify_path(fe.relative_path);
    std::error_code size_ec;
    fe.size_bytes = entry.file_size(size_ec);
    if (size_ec) fe.size_bytes = 0;
    fe.language_hint = language_hint_for(fe.relative_path);
    index.entries_.push_back(std::move(fe));
  }

  std::sort(index.entries_.begin(), index.entries_.end(),
            [](const FileEntry& a, const FileEntry& b) {
              return a.relative_path < b.relative_path;
            });

  // Directory tree from the sorted entry list.
  for (const FileEntry& fe : index.entries_) {
    DirTree* node = &index.tree_;
    std::string_view rest = fe.relative_path;
    for (;;) {
      const std::size_t slash = rest.find('/');
      if (slash == std::string_view::npos) {
        node->files.push_back(std::string(rest));
        break;
      }
      const std::string dir(rest.substr(0, slash));
      rest = rest.substr(slash + 1);
      auto child = std::find_if(node->dirs.begin(), node->dirs.end(),
                                [&](const DirTree& d) { return d.name == dir; });
      if (child == node->dirs.end()) {
        node->dirs.push_back(DirTree{dir, {}, {}});
        node = &node->dirs.back();
      } else {
        node = &*child;
      }
    }
  }
  return index;
}

const FileEntry* FileIndex::find(std::string_view relative_path) const {
  const auto it = std::lower_bound(
      entries_.begin(), entries_.end(), relative_path,
      [](const FileEntry& e, std::string_view p) { return e.relative_path < p; });
  if (it != entries_.end() && it->relative_path == relative_path) return &*it;
  return nullptr;
}

namespace {

void render_tree(const DirTree& node, int depth, std::string& out) {
  const std::string indent(static_cast<std::size_t>(depth) * 2, ' ');
  for (const DirTree& d : node.dirs) {
    out += indent + d.name + "/\n";
    render_tree(d, depth + 1, out);
  }
  for (const std::string& f : node.files) {
    out += indent + f + "\n";
  }
}

}  // namespace

std::string FileIndex::tree_text() const {
  std::string out = tree_.name + "/\n";
  render_tree(tree_, 1, out);
  return out;
}

bool RetrievalState::involved(std::string_view relative_path) const {
  return std::find(involved_files.begin(), involved_files.end(),
                   relative_path) != involved_files.end();
}

namespace {

int kind_rank(FileKind kind) {
  switch (kind) {
    case FileKind::BuildConfig:
      return 0;
    case FileKind::CiConfig:
      return 1;
    case FileKind::Docs:
      return 2;
    case FileKind::Script:
      return 3;
    default:
      return 4;
  }
}

bool hint_match(const std::string& path, const std::vector<std::string>& hints) {
  const std::string low = lower(path);
  for (const std::string& h : hints) {
    if (h.empty()) continue;
    if (low.find(lower(h)) != std::string::npos) return true;
  }
  return false;
}

int path_depth(const std::string& path) {
  return static_cast<int>(std::count(path.begin(), path.end(), '/'));
}

}  // namespace

std::vector<RetrievedFile> retrieve_env_files(
    const FileIndex& index, RetrievalState& state,
    const std::vector<std::string>& query_hints, int batch_limit) {
  if (state.rounds_used >= state.max_rounds) {
    throw RetrievalExhausted("retrieval budget spent after " +
                             std::to_string(state.rounds_used) + " rounds");
  }

  struct Scored {
    const FileEntry* entry;
    int rank;
  };
  std::vector<Scored> candidates;
  for (const FileEntry& fe : index.entries()) {
    if (state.involved(fe.relative_path)) continue;
    if (std::find(state.content_ineligible.begin(),
                  state.content_ineligible.end(),
                  fe.relative_path) != state.content_ineligible.end()) {
      continue;
    }
    const bool env_kind = kind_rank(fe.kind) < 4;
    const bool hinted = hint_match(fe.relative_path, query_hints);
    if (!env_kind && !hinted) continue;
    if (fe.size_bytes > index.options().content_size_cap) {
      state.content_ineligible.push_back(fe.relative_path);
      continue;
    }
    candidates.push_back(Scored{&fe, kind_rank(fe.kind)});
  }

  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Scored& a, const Scored& b) {
                     if (a.rank != b.rank) return a.rank < b.rank;
                     const int da = path_depth(a.entry->relative_path);
                     const int db = path_depth(b.entry->relative_path);
                     if (da != db) return da < db;
                     return a.entry->relative_path < b.entry->relative_path;
                   });

  std::vector<RetrievedFile> out;
  for (const Scored& s : candidates) {
    if (static_cast<int>(out.size()) >= batch_limit) break;
    std::ifstream in(index.root() / s.entry->relative_path, std::ios::binary);
    if (!in) {
      state.content_ineligible.push_back(s.entry->relative_path);
      continue;
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    std::string content = buf.str();
    if (!utf8_valid(content)) {
      state.content_ineligible.push_back(s.entry->relative_path);
      continue;
    }
    RetrievedFile rf;
    rf.relative_path = s.entry->relative_path;
    rf.content = std::move(content);
    rf.kind = s.entry->kind;
    state.involved_files.push_back(rf.relative_path);
    out.push_back(std::move(rf));
  }
  state.rounds_used += 1;
  return out;
}

SufficiencyVerdict heuristic_sufficiency(
    const std::vector<RetrievedFile>& files) {
  bool has_manifest = false;
  bool has_docs = false;
  bool docs_with_commands = false;
  bool has_ci = false;
  for (const RetrievedFile& f : files) {
    const FileKind kind = classify_path(f.relative_path);
    if (kind == FileKind::BuildConfig) has_manifest = true;
    if (kind == FileKind::CiConfig) has_ci = true;
    if (kind == FileKind::Docs) {
      has_docs = true;
      if (!docs_with_commands) {
        for (const CandidateCommand& c :
             extract_commands(f.content, f.relative_path)) {
          if (filter_command(c).keep) {
            docs_with_commands = true;
            break;
          }
        }
      }
    }
  }
  if (has_manifest || docs_with_commands) {
    return {Sufficiency::Sufficient, {}};
  }
  SufficiencyVerdict v;
  v.verdict = Sufficiency::NeedMore;
  if (!has_manifest) v.suggestions.push_back("dependency manifest");
  if (!has_docs) v.suggestions.push_back("readme");
  if (!has_ci) v.suggestions.push_back("workflows");
  if (v.suggestions.empty()) v.suggestions.push_back("setup documentation");
  return v;
}

SufficiencyVerdict sufficiency_check(const std::vector<RetrievedFile>& files,
                                     DecisionProvider* reasoner) {
  if (!reasoner) return heuristic_sufficiency(files);

  DecisionRequest req;
  req.kind = DecisionKind::Sufficiency;
  nlohmann::json file_list = nlohmann::json::array();
  for (const RetrievedFile& f : files) {
    file_list.push_back({
        {"path", f.relative_path},
        {"excerpt", excerpt(f.content, 2048)},
    });
  }
  req.context = {{"files", std::move(file_list)}};
  try {
    const DecisionResponse resp = reasoner->decide(req);
    if (resp.payload.contains("verdict") &&
        resp.payload.at("verdict").is_string()) {
      const std::string v = resp.payload.at("verdict").get<std::string>();
      SufficiencyVerdict out;
      if (v == "sufficient") {
        out.verdict = Sufficiency::Sufficient;
        return out;
      }
      if (v == "need_more") {
        out.verdict = Sufficiency::NeedMore;
        if (resp.payload.contains("suggestions") &&
            resp.payload.at("suggestions").is_array()) {
          for (const nlohmann::json& s : resp.payload.at("suggestions")) {
            if (s.is_string()) out.suggestions.push_back(s.get<std::string>());
          }
        }
        if (out.suggestions.empty()) {
          out.suggestions.push_back("setup documentation");
        }
        return out;
      }
    }
    return heuristic_sufficiency(files);
  } catch (const ReasonerError&) {
    return heuristic_sufficiency(files);
  }
}

}  // namespace envdeploy
