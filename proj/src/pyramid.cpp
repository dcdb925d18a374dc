#include "envdeploy/pyramid.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <sstream>

#include "envdeploy/errors.hpp"

namespace envdeploy {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() &&
         s.substr(s.size() - suffix.size()) == suffix;
}

std::string basename_of(std::string_view path) {
  const std::size_t slash = path.find_last_of('/');
  return std::string(slash == std::string_view::npos ? path
                                                     : path.substr(slash + 1));
}

}  // namespace

std::string_view to_string(CommandOrigin origin) {
  return origin == CommandOrigin::Mined ? "mined" : "supplemented";
}

const std::vector<CandidateCommand>& TestPyramid::level(MaturityLevel l) const {
  switch (l) {
    case MaturityLevel::Installability:
      return installability;
    case MaturityLevel::Testability:
      return testability;
    case MaturityLevel::Runnability:
      return runnability;
    default:
      throw Error("pyramid has no command list for level " +
                  std::string(to_string(l)));
  }
}

std::vector<CandidateCommand>& TestPyramid::level(MaturityLevel l) {
  return const_cast<std::vector<CandidateCommand>&>(
      static_cast<const TestPyramid*>(this)->level(l));
}

bool TestPyramid::contains_text(std::string_view text) const {
  for (MaturityLevel l : kCommandLevels) {
    for (const CandidateCommand& c : level(l)) {
      if (c.text == text) return true;
    }
  }
  return false;
}

std::size_t TestPyramid::total() const {
  return installability.size() + testability.size() + runnability.size();
}

nlohmann::json TestPyramid::to_json() const {
  auto level_to_json = [](const std::vector<CandidateCommand>& cmds) {
    nlohmann::json arr = nlohmann::json::array();
    for (const CandidateCommand& c : cmds) {
      nlohmann::json item = {
          {"cmd", c.text},
          {"source", c.source_path},
          {"origin", std::string(to_string(c.origin))},
      };
      if (c.source_lines) {
        item["lines"] = {c.source_lines->first, c.source_lines->second};
      }
      if (c.extraction_round != 0) item["round"] = c.extraction_round;
      arr.push_back(std::move(item));
    }
    return arr;
  };
  return nlohmann::json{
      {"installability", level_to_json(installability)},
      {"testability", level_to_json(testability)},
      {"runnability", level_to_json(runnability)},
  };
}

TestPyramid TestPyramid::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) {
    throw ValidationError("pyramid document must be a JSON object");
  }
  auto parse_level = [&](const char* key) {
    std::vector<CandidateCommand> out;
    if (!doc.contains(key)) return out;
    const nlohmann::json& arr = doc.at(key);
    if (!arr.is_array()) {
      throw ValidationError(std::string("pyramid key '") + key +
                            "' must be an array");
    }
    for (const nlohmann::json& item : arr) {
      if (!item.is_object() || !item.contains("cmd") ||
          !item.at("cmd").is_string()) {
        throw ValidationError(std::string("pyramid entry under '") + key +
                              "' needs a string 'cmd'");
      }
      CandidateCommand c;
      c.text = item.at("cmd").get<std::string>();
      if (item.contains("source")) {
        if (!item.at("source").is_string()) {
          throw ValidationError("pyramid entry 'source' must be a string");
        }
        c.source_path = item.at("source").get<std::string>();
      }
      if (item.contains("origin")) {
        const std::string o = item.at("origin").get<std::string>();
        if (o == "mined") {
          c.origin = CommandOrigin::Mined;
        } else if (o == "supplemented") {
          c.origin = CommandOrigin::Supplemented;
        } else {
          throw ValidationError("pyramid entry has unknown origin '" + o + "'");
        }
      }
      if (item.contains("lines") && item.at("lines").is_array() &&
          item.at("lines").size() == 2) {
        c.source_lines = {item.at("lines")[0].get<int>(),
                          item.at("lines")[1].get<int>()};
      }
      if (item.contains("round")) c.extraction_round = item.at("round").get<int>();
      out.push_back(std::move(c));
    }
    return out;
  };
  TestPyramid p;
  p.installability = parse_level("installability");
  p.testability = parse_level("testability");
  p.runnability = parse_level("runnability");
  return p;
}

// --- Extraction ---------------------------------------------------------

namespace {

// Fence languages worth mining for shell commands. Anything else (python,
// json, yaml snippets...) is sample code, not commands to run.
bool shell_fence_lang(const std::string& lang) {
  static const std::set<std::string> kLangs = {
      "",     "bash",  "sh",   "shell",         "console", "terminal",
      "zsh",  "text",  "txt",  "shell-session", "cmd",     "commandline",
  };
  return kLangs.count(lower(lang)) > 0;
}

std::string strip_prompt(const std::string& line) {
  std::string t = trim(line);
  if (t.rfind("$ ", 0) == 0) return trim(t.substr(2));
  if (t.rfind("> ", 0) == 0) return trim(t.substr(2));
  return t;
}

void add_candidate(std::vector<CandidateCommand>& out,
                   std::set<std::string>& seen, std::string text,
                   const std::string& source_path, int line_no, int round) {
  if (text.empty() || seen.count(text)) return;
  seen.insert(text);
  CandidateCommand c;
  c.text = std::move(text);
  c.source_path = source_path;
  c.source_lines = {{line_no, line_no}};
  c.extraction_round = round;
  out.push_back(std::move(c));
}

std::vector<std::string> content_lines(const std::string& content) {
  std::vector<std::string> lines;
  std::string cur;
  for (char c : content) {
    if (c == '\n') {
      lines.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) lines.push_back(cur);
  return lines;
}

std::vector<CandidateCommand> extract_markdown(const std::string& content,
                                               const std::string& path,
                                               int round) {
  std::vector<CandidateCommand> out;
  std::set<std::string> seen;
  const std::vector<std::string> lines = content_lines(content);

  bool in_fence = false;
  bool fence_minable = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string& raw = lines[i];
    const std::string t = trim(raw);
    const int line_no = static_cast<int>(i) + 1;
    if (t.rfind("```", 0) == 0) {
      if (!in_fence) {
        in_fence = true;
        fence_minable = shell_fence_lang(trim(t.substr(3)));
      } else {
        in_fence = false;
        fence_minable = false;
      }
      continue;
    }
    if (in_fence) {
      if (!fence_minable) continue;
      std::string cmd = strip_prompt(raw);
      if (cmd.empty() || cmd.front() == '#') continue;
      // Continuation remnants: keep the head, drop the trailing backslash.
      if (ends_with(cmd, "\\")) cmd = trim(cmd.substr(0, cmd.size() - 1));
      add_candidate(out, seen, cmd, path, line_no, round);
    } else if (t.rfind("$ ", 0) == 0) {
      add_candidate(out, seen, trim(t.substr(2)), path, line_no, round);
    }
  }
  return out;
}

std::size_t indent_of(const std::string& line) {
  std::size_t n = 0;
  while (n < line.size() && (line[n] == ' ' || line[n] == '\t')) ++n;
  return n;
}

std::vector<CandidateCommand> extract_ci_yaml(const std::string& content,
                                              const std::string& path,
                                              int round) {
  std::vector<CandidateCommand> out;
  std::set<std::string> seen;
  const std::vector<std::string> lines = content_lines(content);

  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string t = trim(lines[i]);
    if (t.rfind("- ", 0) == 0) t = trim(t.substr(2));
    if (t.rfind("run:", 0) != 0) continue;
    std::string rest = trim(t.substr(4));
    const int line_no = static_cast<int>(i) + 1;
    if (rest == "|" || rest == ">" || rest == "|-" || rest == ">-") {
      // Block scalar: every deeper-indented line that follows is a command.
      const std::size_t base = indent_of(lines[i]);
      for (std::size_t j = i + 1; j < lines.size(); ++j) {
        if (trim(lines[j]).empty()) continue;
        if (indent_of(lines[j]) <= base) break;
        std::string cmd = trim(lines[j]);
        if (cmd.front() == '#') continue;
        if (ends_with(cmd, "\\")) cmd = trim(cmd.substr(0, cmd.size() - 1));
        add_candidate(out, seen, cmd, path, static_cast<int>(j) + 1, round);
      }
    } else if (!rest.empty()) {
      // Quoted scalars keep the command inside the quotes.
      if (rest.size() >= 2 && (rest.front() == '"' || rest.front() == '\'') &&
          rest.back() == rest.front()) {
        rest = rest.substr(1, rest.size() - 2);
      }
      add_candidate(out, seen, rest, path, line_no, round);
    }
  }
  return out;
}

std::vector<CandidateCommand> extract_makefile(const std::string& content,
                                               const std::string& path,
                                               int round) {
  std::vector<CandidateCommand> out;
  std::set<std::string> seen;
  const std::vector<std::string> lines = content_lines(content);

  bool in_recipe = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string& raw = lines[i];
    if (raw.empty()) continue;
    if (raw[0] == '\t') {
      if (!in_recipe) continue;
      std::string cmd = trim(raw);
      while (!cmd.empty() && (cmd.front() == '@' || cmd.front() == '-')) {
        cmd = trim(cmd.substr(1));
      }
      if (cmd.empty() || cmd.front() == '#') continue;
      if (ends_with(cmd, "\\")) cmd = trim(cmd.substr(0, cmd.size() - 1));
      add_candidate(out, seen, cmd, path, static_cast<int>(i) + 1, round);
    } else {
      // Rule lines look like "target: deps"; assignments and comments are
      // not rule lines and close any open recipe.
      const std::string t = trim(raw);
      const std::size_t colon = t.find(':');
      in_recipe = !t.empty() && t[0] != '#' && colon != std::string::npos &&
                  colon > 0 && t.find('=') > colon;
    }
  }
  return out;
}

}  // namespace

std::vector<CandidateCommand> extract_commands(const std::string& content,
                                               const std::string& source_path,
                                               int extraction_round) {
  const std::string base = lower(basename_of(source_path));
  if (base.rfind("makefile", 0) == 0 || base == "gnumakefile" ||
      ends_with(base, ".mk")) {
    return extract_makefile(content, source_path, extraction_round);
  }
  if (ends_with(base, ".yml") || ends_with(base, ".yaml")) {
    return extract_ci_yaml(content, source_path, extraction_round);
  }
  return extract_markdown(content, source_path, extraction_round);
}

// --- Filtering ----------------------------------------------------------

namespace {

const std::set<std::string>& known_tools() {
  static const std::set<std::string> kTools = {
      "pytest", "py.test", "tox",    "ctest", "rspec",  "jest",
      "mocha",  "vitest",  "make",   "yarn",  "ninja",  "phpunit",
      "flake8", "pylint",  "mypy",   "ruff",  "unittest",
  };
  return kTools;
}

bool assignment_only(const std::string& text) {
  const std::size_t eq = text.find('=');
  if (eq == std::string::npos || eq == 0) return false;
  if (text.find(' ') != std::string::npos) return false;
  for (std::size_t i = 0; i < eq; ++i) {
    const char c = text[i];
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
  }
  return true;
}

}  // namespace

FilterResult filter_command(const CandidateCommand& candidate) {
  const std::string text = trim(candidate.text);
  if (text.empty()) return {false, "empty line"};
  if (text.front() == '#') return {false, "comment"};
  if (text.rfind("//", 0) == 0 || text.front() == '<' || text.front() == '>') {
    return {false, "markup or quoted output"};
  }
  if (!std::any_of(text.begin(), text.end(), [](unsigned char c) {
        return std::isalpha(c);
      })) {
    return {false, "no letters"};
  }
  const std::string low = lower(text);
  if (low.rfind("error:", 0) == 0 || low.rfind("warning:", 0) == 0 ||
      low.rfind("usage:", 0) == 0 || low.rfind("note:", 0) == 0) {
    return {false, "diagnostic output, not a command"};
  }
  if (assignment_only(text)) return {false, "variable assignment only"};

  const std::vector<std::string> words = split_ws(text);
  if (words.size() == 1) {
    const std::string& w = words[0];
    const bool runnable_path = w.rfind("./", 0) == 0;
    if (!runnable_path && !known_tools().count(lower(w))) {
      return {false, "single word without a known tool"};
    }
  }
  if (words[0] == "cd" && text.find("&&") == std::string::npos &&
      text.find(';') == std::string::npos) {
    return {false, "changes directory only"};
  }
  if (text.back() == ':') return {false, "looks like a heading"};
  if (words.size() > 16 && text.find("&&") == std::string::npos &&
      text.find('|') == std::string::npos &&
      text.find('=') == std::string::npos) {
    return {false, "looks like prose"};
  }
  return {true, "kept"};
}

// --- Classification -----------------------------------------------------

namespace {

struct Level {
  static constexpr std::optional<MaturityLevel> reject() {
    return std::nullopt;
  }
};

using ClassOutcome = std::pair<std::optional<MaturityLevel>, std::string>;

ClassOutcome install(const std::string& why) {
  return {MaturityLevel::Installability, why};
}
ClassOutcome test(const std::string& why) {
  return {MaturityLevel::Testability, why};
}
ClassOutcome run(const std::string& why) {
  return {MaturityLevel::Runnability, why};
}
ClassOutcome reject(const std::string& why) { return {std::nullopt, why}; }

bool has_token(const std::vector<std::string>& tokens, std::string_view t) {
  return std::find(tokens.begin(), tokens.end(), t) != tokens.end();
}

// Splits a compound command on top-level && ; || into parts, quote-aware.
std::vector<std::string> split_compound(const std::string& text) {
  std::vector<std::string> parts;
  std::string cur;
  char quote = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quote) {
      cur += c;
      if (c == quote) quote = 0;
      continue;
    }
    if (c == '\'' || c == '"') {
      quote = c;
      cur += c;
      continue;
    }
    if ((c == '&' || c == '|') && i + 1 < text.size() && text[i + 1] == c) {
      parts.push_back(trim(cur));
      cur.clear();
      ++i;
      continue;
    }
    if (c == ';') {
      parts.push_back(trim(cur));
      cur.clear();
      continue;
    }
    cur += c;
  }
  parts.push_back(trim(cur));
  std::erase_if(parts, [](const std::string& p) { return p.empty(); });
  return parts;
}

ClassOutcome classify_simple(const std::string& input);

// "poetry run pytest" and friends: classify what the wrapper runs.
std::optional<std::string> unwrap_runner(const std::vector<std::string>& tokens) {
  static const std::vector<std::vector<std::string>> kWrappers = {
      {"poetry", "run"}, {"pipenv", "run"}, {"uv", "run"},
      {"bundle", "exec"}, {"npx"}, {"yarn", "exec"},
  };
  for (const auto& w : kWrappers) {
    if (tokens.size() > w.size() &&
        std::equal(w.begin(), w.end(), tokens.begin())) {
      std::string rest;
      for (std::size_t i = w.size(); i < tokens.size(); ++i) {
        if (!rest.empty()) rest += ' ';
        rest += tokens[i];
      }
      return rest;
    }
  }
  return std::nullopt;
}

ClassOutcome classify_python(const std::vector<std::string>& tokens) {
  if (tokens.size() == 1) return reject("bare interpreter");
  const std::string& a1 = tokens[1];
  if (a1 == "-m") {
    if (tokens.size() < 3) return reject("module runner without a module");
    const std::string& mod = tokens[2];
    if (mod == "pip") {
      if (has_token(tokens, "install")) return install("pip module install");
      return test("pip module probe");
    }
    if (mod == "venv" || mod == "build" || mod == "ensurepip") {
      return install("environment setup module");
    }
    if (mod == "pytest" || mod == "unittest") return test("test runner module");
    return run("module execution");
  }
  if (a1 == "setup.py" || ends_with(a1, "/setup.py")) {
    if (has_token(tokens, "test")) return test("setup.py test target");
    return install("setup.py build/install");
  }
  if (a1 == "-c") return run("inline script execution");
  if (ends_with(a1, ".py")) return run("script execution");
  return run("interpreter with arguments");
}

ClassOutcome classify_npm_like(const std::vector<std::string>& tokens) {
  if (tokens.size() == 1) {
    return tokens[0] == "yarn" ? install("bare yarn installs")
                               : reject("bare package manager call");
  }
  std::string sub = tokens[1];
  std::size_t script_at = 2;
  if (sub == "run" && tokens.size() > 2) {
    sub = tokens[2];
    script_at = 3;
  }
  (void)script_at;
  const std::string sub_low = lower(sub);
  if (sub == "install" || sub == "ci" || sub == "i" || sub == "add") {
    return install("package install subcommand");
  }
  if (sub == "test" || sub == "t" || sub_low.rfind("test", 0) == 0) {
    return test("test script");
  }
  if (sub == "start" || sub == "serve" || sub == "dev" ||
      sub_low.rfind("start", 0) == 0) {
    return run("startup script");
  }
  if (sub == "build") return install("build script");
  if (tokens[1] == "run") return run("custom script execution");
  return reject("package manager subcommand outside the validation set");
}

ClassOutcome classify_mvn(const std::vector<std::string>& tokens) {
  bool saw_goal = false;
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    const std::string& t = tokens[i];
    if (t.size() >= 2 && t[0] == '-') continue;
    saw_goal = true;
    if (t == "test" || ends_with(t, ":test")) return test("maven test goal");
    if (t == "exec:java" || ends_with(t, ":run")) return run("maven run goal");
    if (t == "install" || t == "package" || t == "compile" || t == "verify" ||
        ends_with(t, ":resolve")) {
      return install("maven build goal");
    }
  }
  if (saw_goal) return install("maven lifecycle goal");
  return reject("maven call without a goal");
}

ClassOutcome classify_gradle(const std::vector<std::string>& tokens) {
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    const std::string& t = tokens[i];
    if (!t.empty() && t[0] == '-') continue;
    if (t == "test" || t == "check") return test("gradle test task");
    if (t == "run" || t == "bootRun") return run("gradle run task");
    if (t == "build" || t == "assemble" || t == "jar" || t == "classes") {
      return install("gradle build task");
    }
  }
  return reject("gradle call without a recognized task");
}

ClassOutcome classify_make(const std::vector<std::string>& tokens) {
  std::vector<std::string> targets;
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    if (!tokens[i].empty() && tokens[i][0] != '-' &&
        tokens[i].find('=') == std::string::npos) {
      targets.push_back(tokens[i]);
    }
  }
  for (const std::string& t : targets) {
    if (t == "test" || t == "check" || t == "tests") return test("make test target");
  }
  for (const std::string& t : targets) {
    if (t == "run" || t == "start" || t == "serve") return run("make run target");
  }
  return install("make build target");
}

ClassOutcome classify_script_path(const std::string& head) {
  const std::string base = lower(basename_of(head));
  auto mentions = [&](std::string_view w) {
    return base.find(w) != std::string::npos;
  };
  if (ends_with(base, ".sh")) {
    if (mentions("test")) return test("test script by name");
    if (mentions("install") || mentions("setup") || mentions("build") ||
        mentions("bootstrap") || mentions("configure")) {
      return install("setup script by name");
    }
    if (mentions("run") || mentions("start") || mentions("serve") ||
        mentions("launch")) {
      return run("launcher script by name");
    }
    return run("shell script execution");
  }
  return run("local executable startup");
}

ClassOutcome classify_simple(const std::string& input) {
  std::string text = trim(input);
  // Leading env assignments and benign prefixes do not change the level.
  for (;;) {
    const std::vector<std::string> toks = split_ws(text);
    if (toks.empty()) return reject("empty command");
    const std::string& t0 = toks[0];
    if (t0 == "sudo" || t0 == "time" || t0 == "env" || t0 == "exec") {
      text = trim(text.substr(text.find(t0) + t0.size()));
      continue;
    }
    if (assignment_only(t0) && toks.size() > 1) {
      text = trim(text.substr(text.find(t0) + t0.size()));
      continue;
    }
    break;
  }

  const std::vector<std::string> tokens = split_ws(text);
  if (tokens.empty()) return reject("empty command");

  if (text.find("--version") != std::string::npos) {
    return test("version probe");
  }

  if (auto wrapped = unwrap_runner(tokens)) {
    if (trim(*wrapped).empty()) return reject("wrapper without a command");
    ClassOutcome inner = classify_simple(*wrapped);
    if (inner.first) return {inner.first, "wrapped: " + inner.second};
    return inner;
  }

  std::string head = tokens[0];
  const bool local_path = head.rfind("./", 0) == 0 || head.rfind("/", 0) == 0;
  const std::string head_base = lower(basename_of(head));

  static const std::set<std::string> kTestTools = {
      "pytest", "py.test", "tox",    "ctest",  "rspec", "jest",   "mocha",
      "vitest", "phpunit", "flake8", "pylint", "mypy",  "ruff",   "unittest",
  };
  if (kTestTools.count(head_base)) return test("test or toolchain runner");

  static const std::set<std::string> kServers = {
      "uvicorn", "gunicorn", "streamlit", "jupyter", "jupyter-lab",
      "jupyter-notebook",
  };
  if (kServers.count(head_base)) return run("server startup");

  if (head_base == "python" || head_base == "python3" || head_base == "python2") {
    return classify_python(tokens);
  }
  if (head_base == "pip" || head_base == "pip3") {
    if (tokens.size() > 1 &&
        (tokens[1] == "install" || tokens[1] == "download" ||
         tokens[1] == "wheel")) {
      return install("pip install");
    }
    if (tokens.size() > 1 && tokens[1] == "check") return test("pip check");
    return reject("pip subcommand outside the validation set");
  }
  if (head_base == "npm" || head_base == "yarn" || head_base == "pnpm") {
    return classify_npm_like(tokens);
  }
  if (head_base == "node") {
    if (tokens.size() > 1) return run("node script startup");
    return reject("bare interpreter");
  }
  if (head_base == "mvn") return classify_mvn(tokens);
  if (head_base == "gradle" || head_base == "gradlew") {
    return classify_gradle(tokens);
  }
  if (head_base == "make") return classify_make(tokens);
  if (head_base == "cargo") {
    if (tokens.size() < 2) return reject("bare cargo call");
    const std::string& sub = tokens[1];
    if (sub == "test" || sub == "bench") return test("cargo test");
    if (sub == "run") return run("cargo run");
    if (sub == "build" || sub == "fetch" || sub == "install" || sub == "check") {
      return install("cargo build");
    }
    return reject("cargo subcommand outside the validation set");
  }
  if (head_base == "go") {
    if (tokens.size() < 2) return reject("bare go call");
    const std::string& sub = tokens[1];
    if (sub == "test" || sub == "vet") return test("go test");
    if (sub == "run") return run("go run");
    if (sub == "build" || sub == "install" || sub == "mod" || sub == "get") {
      return install("go build");
    }
    return reject("go subcommand outside the validation set");
  }
  static const std::set<std::string> kSysPkg = {
      "apt-get", "apt", "apk", "dnf", "yum", "zypper", "brew",
      "conda",   "mamba",
  };
  if (kSysPkg.count(head_base)) {
    if (has_token(tokens, "install") || has_token(tokens, "add") ||
        has_token(tokens, "create") || has_token(tokens, "update") ||
        has_token(tokens, "upgrade")) {
      return install("system package operation");
    }
    return reject("package manager subcommand outside the validation set");
  }
  if (head_base == "poetry" || head_base == "pipenv") {
    if (tokens.size() > 1 && tokens[1] == "install") return install("dependency install");
    return reject("dependency manager subcommand outside the validation set");
  }
  if (head_base == "gem" || head_base == "composer" || head_base == "cpanm") {
    if (has_token(tokens, "install")) return install("dependency install");
    return reject("dependency manager subcommand outside the validation set");
  }
  if (head_base == "bundle") {
    if (tokens.size() > 1 && tokens[1] == "install") return install("dependency install");
    return reject("dependency manager subcommand outside the validation set");
  }
  if (head_base == "dotnet") {
    if (tokens.size() > 1 && tokens[1] == "test") return test("dotnet test");
    if (tokens.size() > 1 && tokens[1] == "run") return run("dotnet run");
    if (tokens.size() > 1 && (tokens[1] == "build" || tokens[1] == "restore")) {
      return install("dotnet build");
    }
    return reject("dotnet subcommand outside the validation set");
  }
  if (head_base == "docker" || head_base == "docker-compose") {
    const bool compose = head_base == "docker-compose" ||
                         (tokens.size() > 1 && tokens[1] == "compose");
    if (compose) {
      if (has_token(tokens, "up")) return run("compose startup");
      if (has_token(tokens, "build")) return install("compose build");
      return reject("compose subcommand outside the validation set");
    }
    if (tokens.size() > 1 && tokens[1] == "run") return run("container startup");
    if (tokens.size() > 1 && tokens[1] == "build") return install("image build");
    return reject("docker subcommand outside the validation set");
  }
  if (head_base == "java") {
    if (has_token(tokens, "-jar")) return run("jar startup");
    if (tokens.size() > 1) return run("class startup");
    return reject("bare interpreter");
  }
  if (head_base == "flask" || head_base == "rails" || head_base == "php") {
    if (has_token(tokens, "run") || has_token(tokens, "server") ||
        has_token(tokens, "-S")) {
      return run("framework server startup");
    }
    return reject("framework subcommand outside the validation set");
  }
  if (head_base == "cmake") {
    if (has_token(tokens, "--build") || has_token(tokens, "-S") ||
        has_token(tokens, "-B") || tokens.size() > 1) {
      return install("cmake configure/build");
    }
    return reject("bare cmake call");
  }
  if (head_base == "meson") {
    if (tokens.size() > 1 && tokens[1] == "test") return test("meson test");
    return install("meson configure/build");
  }
  if (head_base == "ninja") {
    if (has_token(tokens, "test")) return test("ninja test target");
    return install("ninja build");
  }
  if (head_base == "configure" && local_path) return install("configure script");
  if (head_base == "bash" || head_base == "sh") {
    if (tokens.size() > 1 && ends_with(tokens[1], ".sh")) {
      return classify_script_path(tokens[1]);
    }
    return reject("bare shell call");
  }
  if (local_path) return classify_script_path(head);

  return reject("no classification rule matched");
}

}  // namespace

std::pair<std::optional<MaturityLevel>, std::string> heuristic_classify_text(
    std::string_view text) {
  // Compounds are classified by their final goal: trailing cd/mkdir/echo
  // parts are scaffolding, the last substantive part decides.
  const std::vector<std::string> parts = split_compound(std::string(text));
  if (parts.empty()) return reject("empty command");
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
    const std::vector<std::string> toks = split_ws(*it);
    if (toks.empty()) continue;
    if (toks[0] == "cd" || toks[0] == "mkdir" || toks[0] == "echo" ||
        toks[0] == "true") {
      continue;
    }
    return classify_simple(*it);
  }
  return reject("only directory and output scaffolding");
}

ClassificationResult classify_command(const CandidateCommand& candidate,
                                      DecisionProvider* reasoner) {
  ClassificationResult result;
  result.command = candidate;

  auto heuristic = [&]() {
    auto [level, why] = heuristic_classify_text(candidate.text);
    result.level = level;
    result.reason = why;
  };

  if (!reasoner) {
    heuristic();
    return result;
  }

  DecisionRequest req;
  req.kind = DecisionKind::Classify;
  req.context = {
      {"command", candidate.text},
      {"source", candidate.source_path},
      {"levels", {"installable", "testable", "runnable"}},
  };
  try {
    const DecisionResponse resp = reasoner->decide(req);
    if (resp.payload.contains("rejected") &&
        resp.payload.at("rejected").is_boolean() &&
        resp.payload.at("rejected").get<bool>()) {
      result.level = std::nullopt;
      result.reason = resp.rationale.empty() ? "rejected by provider"
                                             : resp.rationale;
      return result;
    }
    if (resp.payload.contains("level") && resp.payload.at("level").is_string()) {
      const auto level =
          level_from_string(resp.payload.at("level").get<std::string>());
      if (level && *level != MaturityLevel::Unconfigured) {
        result.level = level;
        result.reason = resp.rationale.empty() ? "assigned by provider"
                                               : resp.rationale;
        return result;
      }
    }
    heuristic();
    result.reason += " (provider payload unusable)";
  } catch (const ReasonerError&) {
    heuristic();
    result.reason += " (provider unavailable)";
  }
  return result;
}

RefinementVerdict refinement_decision(const TestPyramid& pyramid,
                                      int rounds_used, int max_rounds) {
  if (rounds_used >= max_rounds) {
    return {true, "round budget spent"};
  }
  if (!pyramid.installability.empty() && !pyramid.testability.empty() &&
      !pyramid.runnability.empty()) {
    return {true, "every level holds at least one command"};
  }
  std::string missing;
  for (MaturityLevel l : kCommandLevels) {
    if (pyramid.level(l).empty()) {
      if (!missing.empty()) missing += ", ";
      missing += to_string(l);
    }
  }
  return {false, "levels still empty: " + missing};
}

// --- Adjustment ---------------------------------------------------------

std::vector<std::string> heuristic_supplements(const TestPyramid& pyramid,
                                               MaturityLevel level,
                                               const StackProfile* profile) {
  std::vector<std::string> out;
  if (!profile || !pyramid.level(level).empty()) return out;
  switch (level) {
    case MaturityLevel::Installability:
      if (profile->has("python") && profile->has("requirements")) {
        out.push_back("pip install -r requirements.txt");
      } else if (profile->has("python") && profile->has("pyproject")) {
        out.push_back("pip install -e .");
      }
      if (profile->has("node")) out.push_back("npm install");
      if (profile->has("jvm-maven")) out.push_back("mvn -B install");
      if (profile->has("rust")) out.push_back("cargo build");
      if (profile->has("go")) out.push_back("go build ./...");
      break;
    case MaturityLevel::Testability:
      if (profile->has("python") && profile->has("has-tests")) {
        out.push_back("pytest");
      }
      if (profile->has("node")) out.push_back("npm test");
      if (profile->has("jvm-maven")) out.push_back("mvn -B test");
      if (profile->has("rust")) out.push_back("cargo test");
      if (profile->has("go")) out.push_back("go test ./...");
      break;
    default:
      // Startup commands are application-specific; a guessed one would sit
      // at the top of the pyramid and mislead the whole deployment. Never
      // supplemented.
      break;
  }
  return out;
}

TestPyramid adjust_pyramid(const TestPyramid& pyramid,
                           DecisionProvider* advisor,
                           const StackProfile* profile) {
  // Occurrences per text, in level order.
  std::map<std::string, std::vector<MaturityLevel>> occurrences;
  for (MaturityLevel l : kCommandLevels) {
    for (const CandidateCommand& c : pyramid.level(l)) {
      occurrences[c.text].push_back(l);
    }
  }

  bool advisor_degraded = false;

  auto choose_level = [&](const std::string& text,
                          const std::vector<MaturityLevel>& levels) {
    auto heuristic_choice = [&]() {
      auto [rule_level, why] = heuristic_classify_text(text);
      (void)why;
      if (rule_level) return *rule_level;
      return levels.front();  // lowest: levels come in level order
    };
    if (!advisor || advisor_degraded) return heuristic_choice();
    DecisionRequest req;
    req.kind = DecisionKind::Adjust;
    nlohmann::json current = nlohmann::json::array();
    for (MaturityLevel l : levels) current.push_back(std::string(to_string(l)));
    req.context = {
        {"command", text},
        {"current_levels", current},
    };
    try {
      const DecisionResponse resp = advisor->decide(req);
      if (resp.payload.contains("level") &&
          resp.payload.at("level").is_string()) {
        const auto level =
            level_from_string(resp.payload.at("level").get<std::string>());
        if (level && *level != MaturityLevel::Unconfigured) return *level;
      }
      return heuristic_choice();
    } catch (const ReasonerError&) {
      advisor_degraded = true;
      return heuristic_choice();
    }
  };

  // Pass 1: cross-level deduplication.
  TestPyramid out;
  std::map<std::string, MaturityLevel> placement;
  for (const auto& [text, levels] : occurrences) {
    placement[text] = levels.size() == 1 ? levels.front()
                                         : choose_level(text, levels);
  }
  std::set<std::string> placed;
  for (MaturityLevel l : kCommandLevels) {
    for (const CandidateCommand& c : pyramid.level(l)) {
      if (placed.count(c.text)) continue;
      const MaturityLevel target = placement.at(c.text);
      out.level(target).push_back(c);
      placed.insert(c.text);
    }
  }

  // Pass 2: conservative supplementation for empty levels. Skipped entirely
  // once the advisor transport failed.
  if (advisor_degraded) return out;
  for (MaturityLevel l : kCommandLevels) {
    std::vector<std::string> missing;
    if (advisor) {
      DecisionRequest req;
      req.kind = DecisionKind::Adjust;
      nlohmann::json texts = nlohmann::json::array();
      for (const CandidateCommand& c : out.level(l)) texts.push_back(c.text);
      req.context = {
          {"level", std::string(to_string(l))},
          {"commands", texts},
      };
      if (profile) {
        req.context["stack_traits"] = profile->traits;
      }
      try {
        const DecisionResponse resp = advisor->decide(req);
        if (resp.payload.contains("missing") &&
            resp.payload.at("missing").is_array()) {
          for (const nlohmann::json& m : resp.payload.at("missing")) {
            if (m.is_string()) missing.push_back(m.get<std::string>());
          }
        }
      } catch (const ReasonerError&) {
        advisor_degraded = true;
        return out;
      }
    } else {
      missing = heuristic_supplements(out, l, profile);
    }
    for (const std::string& text : missing) {
      if (text.empty() || out.contains_text(text)) continue;
      CandidateCommand c;
      c.text = text;
      c.source_path = "";
      c.origin = CommandOrigin::Supplemented;
      out.level(l).push_back(std::move(c));
    }
  }
  return out;
}

}  // namespace envdeploy
