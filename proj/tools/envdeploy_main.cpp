// envdeploy: generates bootstrap scripts for repositories, mines their
// validation commands, and drives deployment in a sandbox until the
// environment reaches the highest reachable readiness level.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>
#include <vector>

#include "CLI11.hpp"

#include "envdeploy/errors.hpp"
#include "envdeploy/pipeline.hpp"
#include "envdeploy/report.hpp"
#include "envdeploy/sandbox.hpp"

namespace {

using namespace envdeploy;

constexpr int kExitSuccess = 0;
constexpr int kExitTargetMissed = 1;
constexpr int kExitUsage = 64;
constexpr int kExitData = 65;
constexpr int kExitNoSandbox = 69;
constexpr int kExitInternal = 70;

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path);
  out << content;
}

// --- Shared option groups ----------------------------------------------

struct ProviderOptions {
  std::string provider = "none";  // none|heuristic|scripted|remote
  std::string scripted_session;
  std::string remote_endpoint;
  std::string remote_model;
  double remote_temperature = 1.0;
  bool policy_from_provider = false;
};

void add_provider_flags(CLI::App* cmd, ProviderOptions& opts) {
  cmd->add_option("--provider", opts.provider,
                  "Decision provider: none, heuristic, scripted or remote")
      ->check(CLI::IsMember({"none", "heuristic", "scripted", "remote"}));
  cmd->add_option("--scripted-session", opts.scripted_session,
                  "Recorded decision session (JSON), for --provider scripted")
      ->check(CLI::ExistingFile);
  cmd->add_option("--remote-endpoint", opts.remote_endpoint,
                  "Chat-completion endpoint, for --provider remote");
  cmd->add_option("--remote-model", opts.remote_model,
                  "Model name sent to the remote endpoint");
  cmd->add_option("--remote-temperature", opts.remote_temperature,
                  "Sampling temperature for the remote provider");
  cmd->add_flag("--policy-from-provider", opts.policy_from_provider,
                "Let the provider also pick tests and state transitions");
}

std::unique_ptr<DecisionProvider> make_provider(const ProviderOptions& opts) {
  if (opts.provider == "none") return nullptr;
  if (opts.provider == "heuristic") return make_heuristic_provider();
  if (opts.provider == "scripted") {
    if (opts.scripted_session.empty()) {
      throw ValidationError("--provider scripted needs --scripted-session");
    }
    return ScriptedProvider::load_file(opts.scripted_session);
  }
  RemoteConfig config;
  if (opts.remote_endpoint.empty()) {
    throw ValidationError("--provider remote needs --remote-endpoint");
  }
  config.endpoint = opts.remote_endpoint;
  config.model = opts.remote_model;
  config.temperature = opts.remote_temperature;
  return make_remote_provider(std::move(config));
}

struct SandboxOptions {
  std::string sandbox = "docker";  // docker|simulate
  std::string simulate_table;
  std::string image = "ubuntu:22.04";
  std::string docker_endpoint;
  bool no_network = false;
};

void add_sandbox_flags(CLI::App* cmd, SandboxOptions& opts) {
  cmd->add_option("--sandbox", opts.sandbox, "Sandbox backend")
      ->check(CLI::IsMember({"docker", "simulate"}));
  cmd->add_option("--simulate", opts.simulate_table,
                  "Simulation table (JSON); implies --sandbox simulate")
      ->check(CLI::ExistingFile);
  cmd->add_option("--image", opts.image, "Base container image");
  cmd->add_option("--docker-endpoint", opts.docker_endpoint,
                  "Engine endpoint (unix:///... or tcp://host:port)");
  cmd->add_flag("--no-network", opts.no_network,
                "Disable networking inside the sandbox");
}

SandboxFactory make_factory(const SandboxOptions& opts,
                            const std::string& repo_path) {
  SandboxSpec spec;
  spec.base_image = opts.image;
  spec.network_enabled = !opts.no_network;
  if (!repo_path.empty()) {
    SandboxSpec::Mount mount;
    mount.host_path = std::filesystem::absolute(repo_path).string();
    mount.container_path = spec.workdir;
    spec.mounts.push_back(std::move(mount));
  }

  const bool simulate =
      opts.sandbox == "simulate" || !opts.simulate_table.empty();
  if (simulate) {
    SimulationTable table;  // empty table: everything succeeds
    if (!opts.simulate_table.empty()) {
      table = SimulationTable::load_file(opts.simulate_table);
    }
    return [spec, table] { return create_simulated_sandbox(spec, table); };
  }

  DockerConfig docker;
  docker.endpoint = opts.docker_endpoint;
  if (!docker_engine_available(docker)) {
    throw SandboxUnavailable("docker engine is not reachable (try --sandbox "
                             "simulate with a simulation table)");
  }
  return [spec, docker] { return create_docker_sandbox(spec, docker); };
}

struct DeployOptions {
  std::string config_file;
  std::string repair_mode;
  bool no_feedback = false;
  bool fresh_sandbox = false;
  bool no_streams = false;
  int escalation = 0;
  int exec_limit = 0;
  int feedback_limit = 0;
  int step_limit = 0;
  std::string target = "runnable";
};

void add_deploy_flags(CLI::App* cmd, DeployOptions& opts) {
  cmd->add_option("--config", opts.config_file,
                  "Orchestrator config (JSON); flags override its values")
      ->check(CLI::ExistingFile);
  cmd->add_option("--repair-mode", opts.repair_mode,
                  "hybrid, whole-script or single-command")
      ->check(CLI::IsMember({"hybrid", "whole-script", "single-command"}));
  cmd->add_flag("--no-feedback", opts.no_feedback,
                "Skip repair; run the script once and each test at most once");
  cmd->add_flag("--fresh-sandbox-on-rollback", opts.fresh_sandbox,
                "Recreate the sandbox when a failed test forces re-validation");
  cmd->add_flag("--no-streams", opts.no_streams,
                "Drop captured stdout/stderr from the report");
  cmd->add_option("--escalation", opts.escalation,
                  "Failed single repairs in a row before a whole rebuild");
  cmd->add_option("--exec-limit", opts.exec_limit,
                  "Execution loop iteration budget");
  cmd->add_option("--feedback-limit", opts.feedback_limit,
                  "Feedback loop iteration budget");
  cmd->add_option("--step-limit", opts.step_limit, "Total step budget");
  cmd->add_option("--target", opts.target,
                  "Readiness level that counts as success")
      ->check(CLI::IsMember({"installable", "testable", "runnable"}));
}

OrchestratorConfig build_config(const DeployOptions& opts) {
  OrchestratorConfig config;
  if (!opts.config_file.empty()) {
    config = config_from_json(nlohmann::json::parse(
        read_text_file(opts.config_file), nullptr, true));
  }
  if (!opts.repair_mode.empty()) {
    config.repair_mode = *repair_mode_from_string(opts.repair_mode);
    config.budget = LoopBudget::defaults_for(config.repair_mode);
  }
  if (opts.no_feedback) config.feedback_enabled = false;
  if (opts.fresh_sandbox) config.fresh_sandbox_on_rollback = true;
  if (opts.no_streams) config.collect_streams = false;
  if (opts.escalation > 0) config.single_repair_escalation = opts.escalation;
  if (opts.exec_limit > 0) config.budget.execution_loop_limit = opts.exec_limit;
  if (opts.feedback_limit > 0) {
    config.budget.feedback_loop_limit = opts.feedback_limit;
  }
  if (opts.step_limit > 0) config.budget.total_step_limit = opts.step_limit;
  return config;
}

int exit_for_state(MaturityLevel final_state, const std::string& target) {
  const MaturityLevel wanted = *level_from_string(target);
  return compare(final_state, wanted) == Ordering::Less ? kExitTargetMissed
                                                        : kExitSuccess;
}

void print_result_line(const DeploymentReport& report) {
  std::cout << report.repo << ": " << to_string(report.final_state)
            << " (repairs: " << report.repairs_applied
            << ", steps: " << report.steps_used
            << (report.exhausted ? ", budget exhausted" : "") << ")\n";
}

// --- Subcommand state ---------------------------------------------------

struct RunArgs {
  std::string repo;
  std::string out = "envdeploy-out";
  std::string repo_id;
  int max_rounds = 5;
  bool trace = false;
  ProviderOptions provider;
  SandboxOptions sandbox;
  DeployOptions deploy;
};

int cmd_run(const RunArgs& args) {
  auto provider = make_provider(args.provider);
  RunOptions opts;
  opts.repo_path = args.repo;
  opts.out_dir = args.out;
  opts.repo_id = args.repo_id;
  opts.pipeline.max_rounds = args.max_rounds;
  opts.pipeline.base_image = args.sandbox.image;
  opts.orchestrator = build_config(args.deploy);
  opts.make_sandbox = make_factory(args.sandbox, args.repo);
  opts.reasoner = provider.get();
  opts.policy = args.provider.policy_from_provider ? provider.get() : nullptr;

  const RunResult result = run_pipeline(opts);
  print_result_line(result.report);
  if (args.trace) std::cout << render_trace(result.report);
  std::cout << "artifacts: " << args.out << "\n";
  return exit_for_state(result.report.final_state, args.deploy.target);
}

struct BashfileArgs {
  std::string repo;
  std::string out;         // empty: stdout
  std::string dockerfile;  // empty: skip
  std::string image = "ubuntu:22.04";
  int max_rounds = 5;
  ProviderOptions provider;
};

int cmd_bashfile(const BashfileArgs& args) {
  auto provider = make_provider(args.provider);
  const FileIndex index = FileIndex::build(args.repo);
  PipelineOptions opts;
  opts.max_rounds = args.max_rounds;
  const GenerationResult result =
      generate_bashfile(index, provider.get(), opts);
  const std::string script = result.bashfile.render();
  if (args.out.empty()) {
    std::cout << script;
  } else {
    write_text_file(args.out, script);
  }
  if (!args.dockerfile.empty()) {
    write_text_file(args.dockerfile,
                    emit_dockerfile(result.bashfile, args.image));
  }
  return kExitSuccess;
}

struct PyramidArgs {
  std::string repo;
  std::string out;  // empty: stdout
  int max_rounds = 5;
  ProviderOptions provider;
};

int cmd_pyramid(const PyramidArgs& args) {
  auto provider = make_provider(args.provider);
  const FileIndex index = FileIndex::build(args.repo);
  const StackProfile profile = detect_profile(index);
  PipelineOptions opts;
  opts.max_rounds = args.max_rounds;
  const PyramidResult result =
      build_pyramid(index, provider.get(), profile, opts);
  const std::string text = result.pyramid.to_json().dump(2) + "\n";
  if (args.out.empty()) {
    std::cout << text;
  } else {
    write_text_file(args.out, text);
  }
  return kExitSuccess;
}

struct DeployArgs {
  std::string script;
  std::string pyramid;
  std::string repo;  // mounted into the sandbox when given
  std::string out = "envdeploy-out";
  std::string repo_id = "deploy";
  bool trace = false;
  ProviderOptions provider;
  SandboxOptions sandbox;
  DeployOptions deploy;
};

int cmd_deploy(const DeployArgs& args) {
  auto provider = make_provider(args.provider);
  const BashFile script = BashFile::parse(read_text_file(args.script));
  const TestPyramid pyramid = TestPyramid::from_json(
      nlohmann::json::parse(read_text_file(args.pyramid), nullptr, true));

  Orchestrator orchestrator(
      build_config(args.deploy), provider.get(),
      args.provider.policy_from_provider ? provider.get() : nullptr);
  const DeploymentReport report = orchestrator.deploy(
      script, pyramid, make_factory(args.sandbox, args.repo), args.repo_id);

  std::filesystem::create_directories(args.out);
  const std::filesystem::path out(args.out);
  write_text_file((out / "report.json").string(),
                  to_json(report).dump(2) + "\n");
  write_text_file((out / "trace.txt").string(), render_trace(report));
  write_text_file((out / "setup.sh").string(), report.final_script);
  print_result_line(report);
  if (args.trace) std::cout << render_trace(report);
  return exit_for_state(report.final_state, args.deploy.target);
}

struct BatchArgs {
  std::vector<std::string> repos;
  std::string list_file;
  std::string out = "envdeploy-batch";
  int parallel = 1;
  int max_rounds = 5;
  ProviderOptions provider;
  SandboxOptions sandbox;
  DeployOptions deploy;
};

int cmd_batch(const BatchArgs& args) {
  std::vector<std::string> repos = args.repos;
  if (!args.list_file.empty()) {
    std::istringstream in(read_text_file(args.list_file));
    std::string line;
    while (std::getline(in, line)) {
      while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) {
        line.pop_back();
      }
      if (!line.empty() && line[0] != '#') repos.push_back(line);
    }
  }
  if (repos.empty()) {
    throw ValidationError("batch needs repository paths or --list");
  }

  std::filesystem::create_directories(args.out);
  std::vector<DeploymentReport> reports;
  nlohmann::json errors = nlohmann::json::array();
  std::mutex mu;
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= repos.size()) return;
      const std::string& repo = repos[i];
      const std::string name =
          std::filesystem::absolute(repo).filename().string() + "-" +
          std::to_string(i);
      try {
        // Each repository gets its own provider so scripted sessions and
        // remote rate gates never interleave across repositories.
        auto provider = make_provider(args.provider);
        RunOptions opts;
        opts.repo_path = repo;
        opts.out_dir = (std::filesystem::path(args.out) / name).string();
        opts.repo_id = std::filesystem::absolute(repo).filename().string();
        opts.pipeline.max_rounds = args.max_rounds;
        opts.pipeline.base_image = args.sandbox.image;
        opts.orchestrator = build_config(args.deploy);
        opts.make_sandbox = make_factory(args.sandbox, repo);
        opts.reasoner = provider.get();
        opts.policy =
            args.provider.policy_from_provider ? provider.get() : nullptr;
        RunResult result = run_pipeline(opts);
        std::lock_guard<std::mutex> lock(mu);
        print_result_line(result.report);
        reports.push_back(std::move(result.report));
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(mu);
        std::cerr << repo << ": error: " << e.what() << "\n";
        errors.push_back({{"repo", repo}, {"error", e.what()}});
      }
    }
  };

  const int threads = std::max(1, std::min<int>(args.parallel,
                                                static_cast<int>(repos.size())));
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();

  nlohmann::json summary = summarize(reports).to_json();
  summary["errors"] = errors;
  write_text_file((std::filesystem::path(args.out) / "summary.json").string(),
                  summary.dump(2) + "\n");
  std::cout << "summary: " << args.out << "/summary.json\n";
  return errors.empty() ? kExitSuccess : kExitInternal;
}

struct SummarizeArgs {
  std::vector<std::string> inputs;
};

int cmd_summarize(const SummarizeArgs& args) {
  std::vector<DeploymentReport> reports;
  for (const std::string& input : args.inputs) {
    std::vector<std::string> files;
    if (std::filesystem::is_directory(input)) {
      for (const auto& entry :
           std::filesystem::recursive_directory_iterator(input)) {
        if (entry.is_regular_file() &&
            entry.path().filename() == "report.json") {
          files.push_back(entry.path().string());
        }
      }
      std::sort(files.begin(), files.end());
    } else {
      files.push_back(input);
    }
    for (const std::string& file : files) {
      reports.push_back(report_from_json(
          nlohmann::json::parse(read_text_file(file), nullptr, true)));
    }
  }
  std::cout << summarize(reports).to_json().dump(2) << "\n";
  return kExitSuccess;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Automated environment deployment for code repositories"};
  app.require_subcommand(1);

  RunArgs run_args;
  CLI::App* run = app.add_subcommand(
      "run", "Generate, mine and deploy one repository end to end");
  run->add_option("repo", run_args.repo, "Repository directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  run->add_option("--out", run_args.out, "Artifact output directory");
  run->add_option("--repo-id", run_args.repo_id, "Report identifier");
  run->add_option("--max-rounds", run_args.max_rounds, "Retrieval rounds");
  run->add_flag("--trace", run_args.trace, "Print the step trace");
  add_provider_flags(run, run_args.provider);
  add_sandbox_flags(run, run_args.sandbox);
  add_deploy_flags(run, run_args.deploy);

  BashfileArgs bashfile_args;
  CLI::App* bashfile = app.add_subcommand(
      "bashfile", "Generate the bootstrap script for a repository");
  bashfile->add_option("repo", bashfile_args.repo, "Repository directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  bashfile->add_option("--out", bashfile_args.out,
                       "Script file (default: stdout)");
  bashfile->add_option("--dockerfile", bashfile_args.dockerfile,
                       "Also write a Dockerfile here");
  bashfile->add_option("--image", bashfile_args.image, "Base container image");
  bashfile->add_option("--max-rounds", bashfile_args.max_rounds,
                       "Retrieval rounds");
  add_provider_flags(bashfile, bashfile_args.provider);

  PyramidArgs pyramid_args;
  CLI::App* pyramid = app.add_subcommand(
      "pyramid", "Mine the validation command pyramid for a repository");
  pyramid->add_option("repo", pyramid_args.repo, "Repository directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  pyramid->add_option("--out", pyramid_args.out,
                      "Pyramid JSON file (default: stdout)");
  pyramid->add_option("--max-rounds", pyramid_args.max_rounds,
                      "Retrieval rounds");
  add_provider_flags(pyramid, pyramid_args.provider);

  DeployArgs deploy_args;
  CLI::App* deploy = app.add_subcommand(
      "deploy", "Deploy an existing script against an existing pyramid");
  deploy->add_option("--script", deploy_args.script, "Bootstrap script")
      ->required()
      ->check(CLI::ExistingFile);
  deploy->add_option("--pyramid", deploy_args.pyramid, "Pyramid JSON")
      ->required()
      ->check(CLI::ExistingFile);
  deploy->add_option("repo", deploy_args.repo,
                     "Repository directory to mount (docker sandbox)");
  deploy->add_option("--out", deploy_args.out, "Artifact output directory");
  deploy->add_option("--repo-id", deploy_args.repo_id, "Report identifier");
  deploy->add_flag("--trace", deploy_args.trace, "Print the step trace");
  add_provider_flags(deploy, deploy_args.provider);
  add_sandbox_flags(deploy, deploy_args.sandbox);
  add_deploy_flags(deploy, deploy_args.deploy);

  BatchArgs batch_args;
  CLI::App* batch = app.add_subcommand(
      "batch", "Run the pipeline over many repositories");
  batch->add_option("repos", batch_args.repos, "Repository directories");
  batch->add_option("--list", batch_args.list_file,
                    "File with one repository path per line")
      ->check(CLI::ExistingFile);
  batch->add_option("--out", batch_args.out, "Batch output directory");
  batch->add_option("--parallel", batch_args.parallel, "Worker threads");
  batch->add_option("--max-rounds", batch_args.max_rounds, "Retrieval rounds");
  add_provider_flags(batch, batch_args.provider);
  add_sandbox_flags(batch, batch_args.sandbox);
  add_deploy_flags(batch, batch_args.deploy);

  SummarizeArgs summarize_args;
  CLI::App* summarize_cmd = app.add_subcommand(
      "summarize", "Roll deployment reports up into corpus statistics");
  summarize_cmd
      ->add_option("inputs", summarize_args.inputs,
                   "report.json files or directories containing them")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitSuccess : kExitUsage;
  }

  try {
    if (run->parsed()) return cmd_run(run_args);
    if (bashfile->parsed()) return cmd_bashfile(bashfile_args);
    if (pyramid->parsed()) return cmd_pyramid(pyramid_args);
    if (deploy->parsed()) return cmd_deploy(deploy_args);
    if (batch->parsed()) return cmd_batch(batch_args);
    if (summarize_cmd->parsed()) return cmd_summarize(summarize_args);
  } catch (const SandboxUnavailable& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNoSandbox;
  } catch (const ImageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNoSandbox;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const IndexError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: invalid JSON: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}
