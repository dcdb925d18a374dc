#include "envdeploy/sandbox.hpp"

#include <fstream>
#include <utility>

#include "envdeploy/bashfile.hpp"
#include "envdeploy/errors.hpp"

namespace envdeploy {

ExecOutcome Sandbox::run_script(const std::string& script_text) {
  if (!running_) throw SandboxStopped("run_script on a destroyed sandbox");
  return capped(do_run_script(script_text));
}

ExecOutcome Sandbox::run_command(const std::string& command) {
  return run_command(command, spec_.command_time_limit_s);
}

ExecOutcome Sandbox::run_command(const std::string& command, int time_limit_s) {
  if (!running_) throw SandboxStopped("run_command on a destroyed sandbox");
  return capped(do_run_command(command, time_limit_s));
}

void Sandbox::destroy() {
  if (!running_) return;
  running_ = false;
  do_destroy();
}

ExecOutcome Sandbox::capped(ExecOutcome outcome) const {
  bool t1 = false, t2 = false;
  outcome.stdout_text =
      truncate_stream(std::move(outcome.stdout_text), spec_.stream_byte_cap, &t1);
  outcome.stderr_text =
      truncate_stream(std::move(outcome.stderr_text), spec_.stream_byte_cap, &t2);
  outcome.truncated = outcome.truncated || t1 || t2;
  return outcome;
}

// --- SimulationTable ----------------------------------------------------

SimulationTable::SimulationTable(std::vector<Rule> rules)
    : rules_(std::move(rules)), cursors_(rules_.size(), 0) {}

SimulationTable SimulationTable::from_json(const nlohmann::json& doc) {
  if (!doc.is_array()) {
    throw ValidationError("simulation table must be a JSON array");
  }
  std::vector<Rule> rules;
  for (const nlohmann::json& item : doc) {
    if (!item.is_object() || !item.contains("match") ||
        !item.at("match").is_string()) {
      throw ValidationError("simulation rule needs a string 'match'");
    }
    Rule rule;
    rule.match = item.at("match").get<std::string>();
    if (item.contains("prefix")) {
      if (!item.at("prefix").is_boolean()) {
        throw ValidationError("simulation rule 'prefix' must be a boolean");
      }
      rule.prefix = item.at("prefix").get<bool>();
    } else if (!rule.match.empty() && rule.match.back() == '*') {
      rule.prefix = true;
      rule.match.pop_back();
    }
    if (!item.contains("outcomes") || !item.at("outcomes").is_array() ||
        item.at("outcomes").empty()) {
      throw ValidationError("simulation rule '" + rule.match +
                            "' needs a nonempty 'outcomes' array");
    }
    for (const nlohmann::json& o : item.at("outcomes")) {
      if (!o.is_object()) {
        throw ValidationError("simulation outcome must be an object");
      }
      Outcome outcome;
      if (o.contains("exit")) {
        if (!o.at("exit").is_number_integer()) {
          throw ValidationError("simulation outcome 'exit' must be an integer");
        }
        outcome.exit_code = o.at("exit").get<int>();
      }
      if (o.contains("stdout")) {
        if (!o.at("stdout").is_string()) {
          throw ValidationError("simulation outcome 'stdout' must be a string");
        }
        outcome.stdout_text = o.at("stdout").get<std::string>();
      }
      if (o.contains("stderr")) {
        if (!o.at("stderr").is_string()) {
          throw ValidationError("simulation outcome 'stderr' must be a string");
        }
        outcome.stderr_text = o.at("stderr").get<std::string>();
      }
      rule.outcomes.push_back(std::move(outcome));
    }
    rules.push_back(std::move(rule));
  }
  return SimulationTable(std::move(rules));
}

SimulationTable SimulationTable::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read simulation table: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("simulation table " + path + ": " + e.what());
  }
  return from_json(doc);
}

SimulationTable::Outcome SimulationTable::next_outcome(const std::string& text) {
  for (std::size_t i = 0; i < rules_.size(); ++i) {
    const Rule& rule = rules_[i];
    const bool hit = rule.prefix ? text.rfind(rule.match, 0) == 0
                                 : text == rule.match;
    if (!hit) continue;
    std::size_t& cursor = cursors_[i];
    const Outcome& out =
        rule.outcomes[std::min(cursor, rule.outcomes.size() - 1)];
    if (cursor < rule.outcomes.size()) ++cursor;
    return out;
  }
  return Outcome{};
}

// --- Simulated sandbox --------------------------------------------------

namespace {

class SimSandbox final : public Sandbox {
public:
  SimSandbox(SandboxSpec spec, SimulationTable table)
      : Sandbox(std::move(spec)), table_(std::move(table)) {}

protected:
  ExecOutcome do_run_script(const std::string& script_text) override {
    const SimulationTable::Outcome sim = table_.next_outcome(script_text);
    // Script runs are labeled by the file they would execute, keeping
    // traces stable across script edits.
    return to_outcome("bash setup.sh", sim);
  }

  ExecOutcome do_run_command(const std::string& command, int) override {
    return to_outcome(command, table_.next_outcome(command));
  }

  void do_destroy() override {}

private:
  static ExecOutcome to_outcome(std::string label,
                                const SimulationTable::Outcome& sim) {
    ExecOutcome out;
    out.command = std::move(label);
    out.exit_code = sim.exit_code;
    out.stdout_text = sim.stdout_text;
    out.stderr_text = sim.stderr_text;
    out.duration_ms = 0;
    return out;
  }

  SimulationTable table_;
};

}  // namespace

std::unique_ptr<Sandbox> create_simulated_sandbox(SandboxSpec spec,
                                                  SimulationTable table) {
  if (!valid_image_reference(spec.base_image)) {
    throw ImageError("malformed base image reference: " + spec.base_image);
  }
  return std::make_unique<SimSandbox>(std::move(spec), std::move(table));
}

}  // namespace envdeploy
