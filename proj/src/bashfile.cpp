#include "envdeploy/bashfile.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "envdeploy/errors.hpp"

namespace envdeploy {

namespace {

constexpr std::string_view kShebang = "#!/usr/bin/env bash";
constexpr std::string_view kSectionPrefix = "### SECTION ";

std::string trimmed(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace

const std::array<std::string_view, BashFile::kSectionCount>
    BashFile::kSectionTitles = {
        "Execution Context Initialization",
        "OS & Package Manager Abstraction",
        "Base Environment Preparation",
        "Generic Environment Preparation",
        "Domain-Specific Build Logic",
        "Orchestration Entry Point",
};

std::string_view to_string(LineOrigin origin) {
  switch (origin) {
    case LineOrigin::Template:
      return "template";
    case LineOrigin::Generated:
      return "generated";
    case LineOrigin::Repair:
      return "repair";
  }
  return "generated";
}

std::string_view to_string(RepairKind kind) {
  switch (kind) {
    case RepairKind::ReplaceLine:
      return "replace_line";
    case RepairKind::AppendLine:
      return "append_line";
    case RepairKind::DeleteLine:
      return "delete_line";
  }
  return "append_line";
}

bool StackProfile::has(std::string_view trait) const {
  return std::find(traits.begin(), traits.end(), trait) != traits.end();
}

namespace {

// Template line lists per section. Kept as plain functions so a whole-script
// rebuild can re-derive them from the profile alone.

std::vector<std::string> context_lines() {
  return {
      "set -Eeo pipefail",
      "export DEBIAN_FRONTEND=noninteractive",
      "LOG_FILE=\"${LOG_FILE:-/tmp/bootstrap.log}\"",
      "log() { printf '[bootstrap] %s\\n' \"$*\" | tee -a \"$LOG_FILE\" >&2; }",
      "trap 'log \"failed command: ${BASH_COMMAND}\"' ERR",
      "cd \"${REPO_DIR:-$(pwd)}\"",
      "log \"starting in $(pwd)\"",
  };
}

std::vector<std::string> pkg_manager_lines() {
  return {
      "PKG_MANAGER=none",
      "if command -v apt-get >/dev/null 2>&1; then PKG_MANAGER=apt; "
      "elif command -v apk >/dev/null 2>&1; then PKG_MANAGER=apk; "
      "elif command -v dnf >/dev/null 2>&1; then PKG_MANAGER=dnf; fi",
      "pkg_update() { case \"$PKG_MANAGER\" in apt) apt-get update -y ;; "
      "apk) apk update ;; dnf) dnf -y makecache ;; "
      "*) log \"no supported package manager; skipping index update\" ;; esac; }",
      "pkg_install() { case \"$PKG_MANAGER\" in "
      "apt) apt-get install -y --no-install-recommends \"$@\" ;; "
      "apk) apk add --no-cache \"$@\" ;; dnf) dnf install -y \"$@\" ;; "
      "*) log \"no supported package manager; cannot install: $*\" ;; esac; }",
  };
}

std::vector<std::string> base_prep_lines(const StackProfile& p) {
  if (p.traits.empty()) {
    return {"# no recognized stack; base preparation skipped"};
  }
  std::vector<std::string> out = {
      "pkg_update",
      "pkg_install ca-certificates curl git",
  };
  if (p.has("python")) out.push_back("pkg_install python3 python3-venv python3-pip");
  if (p.has("node")) out.push_back("pkg_install nodejs npm");
  if (p.has("jvm-maven")) out.push_back("pkg_install default-jdk maven");
  if (p.has("jvm-gradle")) out.push_back("pkg_install default-jdk gradle");
  if (p.has("cmake") || p.has("meson") || p.has("make")) {
    out.push_back("pkg_install build-essential");
  }
  if (p.has("cmake")) out.push_back("pkg_install cmake");
  if (p.has("meson")) out.push_back("pkg_install meson ninja-build pkg-config");
  if (p.has("rust")) out.push_back("pkg_install rustc cargo");
  if (p.has("go")) out.push_back("pkg_install golang");
  return out;
}

std::vector<std::string> generic_prep_lines(const StackProfile& p) {
  std::vector<std::string> out;
  if (p.has("python")) {
    out.push_back("python3 -m venv .venv");
    out.push_back(". .venv/bin/activate");
    out.push_back("python -m pip install --upgrade pip");
    if (p.has("requirements")) out.push_back("pip install -r requirements.txt");
    if (p.has("pyproject") || p.has("setup-py")) out.push_back("pip install -e .");
  }
  if (p.has("node")) out.push_back("npm install");
  if (p.has("rust")) out.push_back("cargo fetch");
  if (p.has("go")) out.push_back("go mod download");
  if (out.empty()) out.push_back("# no language environment steps detected");
  return out;
}

std::vector<std::string> build_logic_lines(const StackProfile& p) {
  std::vector<std::string> out;
  if (p.has("jvm-maven")) out.push_back("mvn -B -q -DskipTests package");
  if (p.has("jvm-gradle")) out.push_back("gradle -q assemble");
  if (p.has("cmake")) {
    out.push_back("cmake -S . -B build");
    out.push_back("cmake --build build -j\"$(nproc)\"");
  } else if (p.has("meson")) {
    out.push_back("meson setup build");
    out.push_back("meson compile -C build");
  } else if (p.has("make")) {
    out.push_back("make");
  }
  if (p.has("node")) out.push_back("npm run build --if-present");
  if (p.has("rust")) out.push_back("cargo build");
  if (p.has("go")) out.push_back("go build ./...");
  if (out.empty()) out.push_back("# no project-specific build steps detected");
  return out;
}

std::vector<std::string> entry_point_lines() {
  return {"log \"bootstrap complete (sections 1-5 finished)\""};
}

}  // namespace

BashFile BashFile::from_template(const StackProfile& profile) {
  BashFile bf;
  bf.profile_ = profile;

  const std::array<std::vector<std::string>, kSectionCount> bodies = {
      context_lines(),
      pkg_manager_lines(),
      base_prep_lines(profile),
      generic_prep_lines(profile),
      build_logic_lines(profile),
      entry_point_lines(),
  };

  for (int i = 0; i < kSectionCount; ++i) {
    Section sec;
    sec.id = i + 1;
    sec.title = std::string(kSectionTitles[static_cast<std::size_t>(i)]);
    for (const std::string& text : bodies[static_cast<std::size_t>(i)]) {
      sec.lines.push_back(
          ScriptLine{bf.take_line_id(), text, LineOrigin::Template});
    }
    bf.sections_.push_back(std::move(sec));
  }
  return bf;
}

BashFile BashFile::parse(const std::string& text) {
  std::vector<std::string> lines;
  {
    std::string current;
    for (char c : text) {
      if (c == '\n') {
        lines.push_back(current);
        current.clear();
      } else {
        current += c;
      }
    }
    if (!current.empty()) lines.push_back(current);
  }

  if (lines.empty() || lines.front().rfind("#!", 0) != 0) {
    throw ValidationError("script does not start with a shebang line");
  }

  BashFile bf;
  Section* open = nullptr;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::string& line = lines[i];
    if (line.rfind(kSectionPrefix, 0) == 0) {
      std::string rest = line.substr(kSectionPrefix.size());
      const std::size_t colon = rest.find(':');
      if (colon == std::string::npos) {
        throw ValidationError("malformed section header: " + line);
      }
      int id = 0;
      try {
        id = std::stoi(rest.substr(0, colon));
      } catch (const std::exception&) {
        throw ValidationError("malformed section header: " + line);
      }
      const int expected = static_cast<int>(bf.sections_.size()) + 1;
      if (id != expected) {
        throw ValidationError("section " + std::to_string(id) +
                              " out of order, expected " +
                              std::to_string(expected));
      }
      Section sec;
      sec.id = id;
      sec.title = trimmed(rest.substr(colon + 1));
      bf.sections_.push_back(std::move(sec));
      open = &bf.sections_.back();
    } else {
      if (!open) {
        throw ValidationError("script line before first section header");
      }
      open->lines.push_back(
          ScriptLine{bf.take_line_id(), line, LineOrigin::Generated});
    }
  }
  if (static_cast<int>(bf.sections_.size()) != kSectionCount) {
    throw ValidationError("expected " + std::to_string(kSectionCount) +
                          " sections, found " +
                          std::to_string(bf.sections_.size()));
  }
  return bf;
}

const Section& BashFile::section(int id) const {
  if (id < 1 || id > kSectionCount) {
    throw PatchError("section id out of range: " + std::to_string(id));
  }
  return sections_[static_cast<std::size_t>(id - 1)];
}

const ScriptLine* BashFile::find_line(std::uint64_t line_id) const {
  for (const Section& sec : sections_) {
    for (const ScriptLine& line : sec.lines) {
      if (line.line_id == line_id) return &line;
    }
  }
  return nullptr;
}

std::optional<std::uint64_t> BashFile::find_line_by_text(
    std::string_view text) const {
  const std::string want = trimmed(text);
  for (const Section& sec : sections_) {
    for (const ScriptLine& line : sec.lines) {
      if (trimmed(line.text) == want) return line.line_id;
    }
  }
  return std::nullopt;
}

int BashFile::section_of_line(std::uint64_t line_id) const {
  for (const Section& sec : sections_) {
    for (const ScriptLine& line : sec.lines) {
      if (line.line_id == line_id) return sec.id;
    }
  }
  return 0;
}

std::string BashFile::render() const {
  std::string out;
  out += kShebang;
  out += '\n';
  for (const Section& sec : sections_) {
    out += kSectionPrefix;
    out += std::to_string(sec.id);
    out += ": ";
    out += sec.title;
    out += '\n';
    for (const ScriptLine& line : sec.lines) {
      out += line.text;
      out += '\n';
    }
  }
  return out;
}

BashFile apply_repair(const BashFile& bf, const RepairRecord& action,
                      const PatchOptions& opts) {
  auto check_text = [&](const std::optional<std::string>& text) {
    if (!text || trimmed(*text).empty()) {
      throw PatchError("repair action carries no replacement text");
    }
    if (text->find('\n') != std::string::npos) {
      throw PatchError("repair text must be a single line");
    }
    if (!shell_text_ok(*text)) {
      throw PatchError("repair text fails the shell structure scan: " + *text);
    }
  };
  auto check_section_open = [&](int section_id) {
    if (section_id == 1 && !opts.allow_context_section_edits) {
      throw PatchError("section 1 holds the execution context and is not editable");
    }
  };

  BashFile next = bf;
  switch (action.kind) {
    case RepairKind::AppendLine: {
      if (action.target_section < 1 ||
          action.target_section > BashFile::kSectionCount) {
        throw PatchError("append targets unknown section " +
                         std::to_string(action.target_section));
      }
      check_section_open(action.target_section);
      check_text(action.new_text);
      Section& sec =
          next.sections_[static_cast<std::size_t>(action.target_section - 1)];
      sec.lines.push_back(
          ScriptLine{next.take_line_id(), *action.new_text, LineOrigin::Repair});
      break;
    }
    case RepairKind::ReplaceLine: {
      const int sec_id = next.section_of_line(action.target_line);
      if (sec_id == 0) {
        throw PatchError("replace targets unknown line id " +
                         std::to_string(action.target_line));
      }
      check_section_open(sec_id);
      check_text(action.new_text);
      Section& sec = next.sections_[static_cast<std::size_t>(sec_id - 1)];
      for (ScriptLine& line : sec.lines) {
        if (line.line_id == action.target_line) {
          line.text = *action.new_text;
          line.origin = LineOrigin::Repair;
          break;
        }
      }
      break;
    }
    case RepairKind::DeleteLine: {
      const int sec_id = next.section_of_line(action.target_line);
      if (sec_id == 0) {
        throw PatchError("delete targets unknown line id " +
                         std::to_string(action.target_line));
      }
      check_section_open(sec_id);
      Section& sec = next.sections_[static_cast<std::size_t>(sec_id - 1)];
      std::erase_if(sec.lines, [&](const ScriptLine& line) {
        return line.line_id == action.target_line;
      });
      break;
    }
  }
  next.history_.push_back(action);
  next.version_ = bf.version() + 1;
  return next;
}

BashFile replay_history(const StackProfile& profile,
                        const std::vector<RepairRecord>& history,
                        const PatchOptions& opts) {
  BashFile bf = BashFile::from_template(profile);
  for (const RepairRecord& action : history) {
    bf = apply_repair(bf, action, opts);
  }
  return bf;
}

std::string emit_dockerfile(const BashFile& bf, const std::string& base_image) {
  if (!valid_image_reference(base_image)) {
    throw EmitError("malformed base image reference: " + base_image);
  }
  const std::string script = bf.render();
  if (!shell_text_ok(script)) {
    throw EmitError("rendered script fails the shell structure scan");
  }
  std::string out;
  out += "FROM " + base_image + "\n";
  out += "WORKDIR /workspace\n";
  out += "COPY . /workspace\n";
  out += "RUN bash ./setup.sh\n";
  out += "CMD [\"/bin/bash\"]\n";
  return out;
}

bool shell_text_ok(const std::string& text) {
  // Tracks quote state across the whole text. Double quotes honor backslash
  // escapes; single quotes are literal until the closing quote.
  enum class Q { None, Single, Double } q = Q::None;
  bool escaped = false;
  for (char c : text) {
    if (escaped) {
      escaped = false;
      continue;
    }
    switch (q) {
      case Q::None:
        if (c == '\\') escaped = true;
        else if (c == '\'') q = Q::Single;
        else if (c == '"') q = Q::Double;
        break;
      case Q::Single:
        if (c == '\'') q = Q::None;
        break;
      case Q::Double:
        if (c == '\\') escaped = true;
        else if (c == '"') q = Q::None;
        break;
    }
  }
  if (q != Q::None) return false;
  // A trailing backslash would swallow the newline that render() appends.
  if (escaped) return false;
  return true;
}

bool valid_image_reference(const std::string& ref) {
  if (ref.empty() || ref.size() > 255) return false;
  if (ref.find("::") != std::string::npos) return false;
  if (ref.front() == ':' || ref.front() == '/' || ref.back() == ':' ||
      ref.back() == '/') {
    return false;
  }
  for (char c : ref) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '.' ||
                    c == '_' || c == '-' || c == '/' || c == ':' || c == '@';
    if (!ok) return false;
  }
  return true;
}

}  // namespace envdeploy
