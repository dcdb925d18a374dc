#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "envdeploy/maturity.hpp"

namespace envdeploy {

// Everything needed to create one isolated execution environment.
struct SandboxSpec {
  std::string base_image = "ubuntu:22.04";
  std::string workdir = "/workspace";

  struct Mount {
    std::string host_path;
    std::string container_path;
    bool read_only = false;
  };
  std::vector<Mount> mounts;

  std::map<std::string, std::string> env;
  bool network_enabled = true;
  std::optional<std::uint64_t> memory_limit_bytes;

  // Wall-clock caps enforced with a `timeout` wrapper inside the sandbox;
  // an overrun surfaces as exit code 124.
  int script_time_limit_s = 900;
  int command_time_limit_s = 300;

  // Per-stream byte cap on captured output, head and tail halves kept.
  std::size_t stream_byte_cap = 64 * 1024;
};

// One isolated environment executing scripts and commands. Outcomes report
// exit status and captured streams; a nonzero exit is a result, not an
// error. Errors are reserved for the transport and lifecycle.
class Sandbox {
public:
  virtual ~Sandbox() = default;

  const SandboxSpec& spec() const { return spec_; }
  bool running() const { return running_; }

  // Uploads the script and executes it in the workdir under the script
  // time limit. Throws SandboxStopped after destroy().
  ExecOutcome run_script(const std::string& script_text);

  // Executes one shell command in the workdir under the command time limit.
  ExecOutcome run_command(const std::string& command);
  ExecOutcome run_command(const std::string& command, int time_limit_s);

  // Tears the environment down. Idempotent; later calls are no-ops.
  void destroy();

protected:
  explicit Sandbox(SandboxSpec spec) : spec_(std::move(spec)) {}

  virtual ExecOutcome do_run_script(const std::string& script_text) = 0;
  virtual ExecOutcome do_run_command(const std::string& command,
                                     int time_limit_s) = 0;
  virtual void do_destroy() = 0;

  ExecOutcome capped(ExecOutcome outcome) const;

  SandboxSpec spec_;
  bool running_ = true;
};

// Deterministic stand-in for a real environment. Rules are matched first to
// last against the executed text (exact, or prefix when the pattern ends
// with '*' or sets "prefix": true). Each rule's outcomes are consumed in
// order; the last outcome repeats once the list is spent. Unmatched text
// succeeds with empty output.
//
// JSON schema: [{"match": "...", "outcomes": [{"exit": 1, "stdout": "...",
// "stderr": "..."}]}]
class SimulationTable {
public:
  struct Outcome {
    int exit_code = 0;
    std::string stdout_text;
    std::string stderr_text;
  };

  struct Rule {
    std::string match;
    bool prefix = false;
    std::vector<Outcome> outcomes;
  };

  SimulationTable() = default;
  explicit SimulationTable(std::vector<Rule> rules);

  static SimulationTable from_json(const nlohmann::json& doc);
  static SimulationTable load_file(const std::string& path);

  // First matching rule wins; advances that rule's outcome cursor.
  Outcome next_outcome(const std::string& text);

  const std::vector<Rule>& rules() const { return rules_; }

private:
  std::vector<Rule> rules_;
  std::vector<std::size_t> cursors_;
};

std::unique_ptr<Sandbox> create_simulated_sandbox(SandboxSpec spec,
                                                  SimulationTable table);

struct DockerConfig {
  // unix:///var/run/docker.sock, tcp://host:port or http://host:port.
  // Empty picks DOCKER_HOST, then the default socket path.
  std::string endpoint;
  std::string api_version = "v1.41";
  bool pull_missing_image = true;
};

// Engine-backed sandbox: creates and starts a container that idles, then
// execs scripts and commands into it. Throws SandboxUnavailable when the
// engine is unreachable and ImageError when the image cannot be resolved.
std::unique_ptr<Sandbox> create_docker_sandbox(SandboxSpec spec,
                                               DockerConfig config = {});

// Engine reachability probe used to gate tests and CLI validation.
bool docker_engine_available(const DockerConfig& config = {});

}  // namespace envdeploy
