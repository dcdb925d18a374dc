// Python extension surface. Structured values cross the boundary as JSON
// text; the package __init__ turns them into dicts. Keeping the ABI to
// strings means the python layer never tracks C++ struct changes.

#include <pybind11/pybind11.h>

#include <filesystem>
#include <string>

#include "json.hpp"

#include "envdeploy/bashfile.hpp"
#include "envdeploy/errors.hpp"
#include "envdeploy/orchestrator.hpp"
#include "envdeploy/pipeline.hpp"
#include "envdeploy/pyramid.hpp"
#include "envdeploy/repo_index.hpp"
#include "envdeploy/report.hpp"
#include "envdeploy/sandbox.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

envdeploy::SandboxFactory simulated_factory(const std::string& table_json) {
  envdeploy::SimulationTable table;
  if (!table_json.empty()) {
    table = envdeploy::SimulationTable::from_json(json::parse(table_json));
  }
  return [table]() {
    return envdeploy::create_simulated_sandbox(envdeploy::SandboxSpec{}, table);
  };
}

std::string classify_text(const std::string& command) {
  const auto [level, reason] = envdeploy::heuristic_classify_text(command);
  json out;
  out["level"] = level ? json(std::string(envdeploy::to_string(*level)))
                       : json(nullptr);
  out["reason"] = reason;
  return out.dump();
}

std::string generate_script(const std::string& repo,
                            const std::string& base_image) {
  const auto index = envdeploy::FileIndex::build(repo);
  const auto gen = envdeploy::generate_bashfile(index, nullptr);
  json out;
  out["script"] = gen.bashfile.render();
  out["dockerfile"] = envdeploy::emit_dockerfile(gen.bashfile, base_image);
  out["profile"] = gen.profile.traits;
  out["marker_files"] = gen.profile.marker_files;
  out["files_consulted"] = gen.retrieval.involved_files;
  out["rounds_used"] = gen.retrieval.rounds_used;
  return out.dump();
}

std::string mine_pyramid(const std::string& repo) {
  const auto index = envdeploy::FileIndex::build(repo);
  const auto profile = envdeploy::detect_profile(index);
  const auto result = envdeploy::build_pyramid(index, nullptr, profile);
  json out;
  out["pyramid"] = result.pyramid.to_json();
  out["rounds_used"] = result.rounds_used;
  out["refinement_reason"] = result.refinement_reason;
  out["mined"] = result.mined;
  out["rejected"] = result.rejected;
  return out.dump();
}

std::string deploy(const std::string& repo, const std::string& simulation,
                   const std::string& config_json,
                   const std::string& repo_id) {
  const auto index = envdeploy::FileIndex::build(repo);
  const auto gen = envdeploy::generate_bashfile(index, nullptr);
  const auto pyr = envdeploy::build_pyramid(index, nullptr, gen.profile);

  envdeploy::OrchestratorConfig config;
  if (!config_json.empty()) {
    config = envdeploy::config_from_json(json::parse(config_json));
  }

  const std::string id =
      repo_id.empty() ? std::filesystem::path(repo).filename().string()
                      : repo_id;
  envdeploy::Orchestrator orch(config, nullptr, nullptr);
  const auto report =
      orch.deploy(gen.bashfile, pyr.pyramid, simulated_factory(simulation), id);
  return envdeploy::to_json(report).dump();
}

std::string render_report_trace(const std::string& report_json) {
  const auto report = envdeploy::report_from_json(json::parse(report_json));
  return envdeploy::render_trace(report);
}

std::string summarize_reports(const std::string& reports_json) {
  const json docs = json::parse(reports_json);
  std::vector<envdeploy::DeploymentReport> reports;
  for (const json& doc : docs) {
    reports.push_back(envdeploy::report_from_json(doc));
  }
  return envdeploy::summarize(reports).to_json().dump();
}

std::string emit_dockerfile_for(const std::string& script_text,
                                const std::string& base_image) {
  const auto bf = envdeploy::BashFile::parse(script_text);
  return envdeploy::emit_dockerfile(bf, base_image);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Bootstrap script generation, validation command mining and "
            "sandboxed deployment for source repositories.";

  py::register_exception<envdeploy::Error>(m, "Error");

  m.def("version", [] { return std::string("0.1.0"); });

  m.def("classify", &classify_text, py::arg("command"),
        "Assign a shell command to the readiness level it validates. "
        "Returns JSON with a level name or null plus the matched rule.");

  m.def("generate_script", &generate_script, py::arg("repo"),
        py::arg("base_image") = "ubuntu:22.04",
        "Derive the six-section bootstrap script and a Dockerfile for a "
        "local repository. Returns JSON.");

  m.def("mine_pyramid", &mine_pyramid, py::arg("repo"),
        "Mine and classify validation commands for a local repository. "
        "Returns JSON.");

  m.def("deploy", &deploy, py::arg("repo"), py::arg("simulation") = "",
        py::arg("config") = "", py::arg("repo_id") = "",
        "Run the full generate/mine/deploy pass against a simulated "
        "sandbox. simulation is a JSON rule table, config a JSON "
        "orchestrator configuration; both may be empty. Returns the "
        "deployment report as JSON.");

  m.def("render_report_trace", &render_report_trace, py::arg("report"),
        "Stable line-per-step text rendering of a report given as JSON.");

  m.def("summarize", &summarize_reports, py::arg("reports"),
        "Cross-run rollup of a JSON array of deployment reports. "
        "Returns JSON.");

  m.def("emit_dockerfile", &emit_dockerfile_for, py::arg("script"),
        py::arg("base_image") = "ubuntu:22.04",
        "Container recipe that bakes the given script in and runs it at "
        "build time.");
}
