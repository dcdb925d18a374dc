#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <string>

#include "envdeploy/errors.hpp"
#include "envdeploy/sandbox.hpp"

using namespace envdeploy;
using nlohmann::json;

namespace {

SimulationTable table_from(const char* text) {
  return SimulationTable::from_json(json::parse(text));
}

}  // namespace

TEST_CASE("simulation table parses rules and outcomes") {
  const SimulationTable table = table_from(R"([
    {"match": "pip install flask",
     "outcomes": [{"exit": 1, "stderr": "boom"}, {"exit": 0}]},
    {"match": "pytest*", "outcomes": [{"exit": 0, "stdout": "ok"}]}
  ])");
  REQUIRE(table.rules().size() == 2);
  CHECK(table.rules()[0].match == "pip install flask");
  CHECK_FALSE(table.rules()[0].prefix);
  REQUIRE(table.rules()[0].outcomes.size() == 2);
  CHECK(table.rules()[0].outcomes[0].exit_code == 1);
  CHECK(table.rules()[0].outcomes[0].stderr_text == "boom");
  CHECK(table.rules()[1].match == "pytest");  // trailing '*' stripped
  CHECK(table.rules()[1].prefix);
}

TEST_CASE("simulation table accepts explicit prefix flag") {
  const SimulationTable table = table_from(R"([
    {"match": "npm ", "prefix": true, "outcomes": [{"exit": 7}]}
  ])");
  REQUIRE(table.rules().size() == 1);
  CHECK(table.rules()[0].prefix);
  SimulationTable copy = table;
  CHECK(copy.next_outcome("npm install").exit_code == 7);
  CHECK(copy.next_outcome("pnpm install").exit_code == 0);
}

TEST_CASE("simulation table rejects malformed documents") {
  CHECK_THROWS_AS(table_from(R"({"match": "x"})"), ValidationError);
  CHECK_THROWS_AS(table_from(R"([{"outcomes": []}])"), ValidationError);
  CHECK_THROWS_AS(table_from(R"([{"match": "x"}])"), ValidationError);
  CHECK_THROWS_AS(table_from(R"([{"match": "x", "outcomes": []}])"),
                  ValidationError);
  CHECK_THROWS_AS(table_from(R"([{"match": "x",
                                  "outcomes": [{"exit": "no"}]}])"),
                  ValidationError);
  CHECK_THROWS_AS(table_from(R"([{"match": "x", "prefix": 3,
                                  "outcomes": [{"exit": 0}]}])"),
                  ValidationError);
  // An empty outcome object is legal: exit 0, empty streams.
  SimulationTable defaults = table_from(R"([{"match": "x", "outcomes": [{}]}])");
  CHECK(defaults.next_outcome("x").exit_code == 0);
}

TEST_CASE("first matching rule wins") {
  SimulationTable table = table_from(R"([
    {"match": "pip*", "outcomes": [{"exit": 1}]},
    {"match": "pip install flask", "outcomes": [{"exit": 2}]}
  ])");
  CHECK(table.next_outcome("pip install flask").exit_code == 1);
}

TEST_CASE("outcome cursor advances and the last outcome repeats") {
  SimulationTable table = table_from(R"([
    {"match": "make", "outcomes": [{"exit": 2}, {"exit": 1}, {"exit": 0}]}
  ])");
  CHECK(table.next_outcome("make").exit_code == 2);
  CHECK(table.next_outcome("make").exit_code == 1);
  CHECK(table.next_outcome("make").exit_code == 0);
  CHECK(table.next_outcome("make").exit_code == 0);
  CHECK(table.next_outcome("make").exit_code == 0);
}

TEST_CASE("unmatched text succeeds with empty output") {
  SimulationTable table;
  const auto out = table.next_outcome("anything at all");
  CHECK(out.exit_code == 0);
  CHECK(out.stdout_text.empty());
  CHECK(out.stderr_text.empty());
}

TEST_CASE("simulated sandbox matches scripts and commands") {
  SandboxSpec spec;
  SimulationTable table = table_from(R"([
    {"match": "#!/usr/bin/env bash*",
     "outcomes": [{"exit": 1, "stderr": "ModuleNotFoundError: No module named 'flask'"},
                  {"exit": 0}]},
    {"match": "pytest", "outcomes": [{"exit": 0, "stdout": "3 passed"}]}
  ])");
  auto sandbox = create_simulated_sandbox(spec, table);
  REQUIRE(sandbox != nullptr);
  CHECK(sandbox->running());

  const ExecOutcome first = sandbox->run_script("#!/usr/bin/env bash\nset -e\n");
  CHECK(first.exit_code == 1);
  CHECK(first.command == "bash setup.sh");
  CHECK(first.stderr_text.find("ModuleNotFoundError") != std::string::npos);
  CHECK(first.duration_ms >= 0);

  const ExecOutcome second = sandbox->run_script("#!/usr/bin/env bash\nset -e\n");
  CHECK(second.exit_code == 0);

  const ExecOutcome cmd = sandbox->run_command("pytest");
  CHECK(cmd.exit_code == 0);
  CHECK(cmd.command == "pytest");
  CHECK(cmd.stdout_text == "3 passed");
}

TEST_CASE("each simulated sandbox owns its cursors") {
  SimulationTable table = table_from(R"([
    {"match": "make", "outcomes": [{"exit": 1}, {"exit": 0}]}
  ])");
  auto a = create_simulated_sandbox(SandboxSpec{}, table);
  auto b = create_simulated_sandbox(SandboxSpec{}, table);
  CHECK(a->run_command("make").exit_code == 1);
  CHECK(a->run_command("make").exit_code == 0);
  // b starts from the first outcome again.
  CHECK(b->run_command("make").exit_code == 1);
}

TEST_CASE("stream caps mark truncation") {
  SandboxSpec spec;
  spec.stream_byte_cap = 32;
  json doc = json::array();
  doc.push_back({{"match", "noisy"},
                 {"outcomes", json::array({{{"exit", 0},
                                            {"stdout", std::string(500, 'x')}}})}});
  auto sandbox = create_simulated_sandbox(spec, SimulationTable::from_json(doc));
  const ExecOutcome out = sandbox->run_command("noisy");
  CHECK(out.truncated);
  CHECK(out.stdout_text.size() < 500);
  CHECK(out.stdout_text.find("truncated") != std::string::npos);

  SandboxSpec roomy;
  auto sandbox2 =
      create_simulated_sandbox(roomy, SimulationTable::from_json(doc));
  const ExecOutcome ok = sandbox2->run_command("noisy");
  CHECK_FALSE(ok.truncated);
  CHECK(ok.stdout_text == std::string(500, 'x'));
}

TEST_CASE("destroyed sandbox refuses further work") {
  auto sandbox = create_simulated_sandbox(SandboxSpec{}, SimulationTable{});
  sandbox->destroy();
  CHECK_FALSE(sandbox->running());
  sandbox->destroy();  // idempotent
  CHECK_THROWS_AS(sandbox->run_command("true"), SandboxStopped);
  CHECK_THROWS_AS(sandbox->run_script("#!/usr/bin/env bash\n"), SandboxStopped);
}

TEST_CASE("docker probe reports cleanly when no engine is present") {
  DockerConfig config;
  config.endpoint = "unix:///nonexistent/docker.sock";
  CHECK_FALSE(docker_engine_available(config));
  SandboxSpec spec;
  CHECK_THROWS_AS(create_docker_sandbox(spec, config), SandboxUnavailable);
}
