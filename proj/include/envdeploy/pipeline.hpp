#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "envdeploy/bashfile.hpp"
#include "envdeploy/orchestrator.hpp"
#include "envdeploy/pyramid.hpp"
#include "envdeploy/repo_index.hpp"
#include "envdeploy/sandbox.hpp"

namespace envdeploy {

// Infers stack traits ("python", "node", "cmake", "has-tests", ...) from
// marker files in the index. marker_files records what matched, one path
// per trait occurrence.
StackProfile detect_profile(const FileIndex& index);

struct PipelineOptions {
  int max_rounds = 5;
  int batch_limit = 5;
  std::string base_image = "ubuntu:22.04";
};

struct GenerationResult {
  BashFile bashfile;
  StackProfile profile;
  std::vector<RetrievedFile> files;  // everything retrieved, in order
  RetrievalState retrieval;
  SufficiencyVerdict sufficiency;
};

// Iterative search for environment-relevant files, stopped by a sufficiency
// verdict or the round budget, followed by script generation from the
// detected profile.
GenerationResult generate_bashfile(const FileIndex& index,
                                   DecisionProvider* reasoner,
                                   const PipelineOptions& opts = {});

struct PyramidResult {
  TestPyramid pyramid;
  int rounds_used = 0;
  std::string refinement_reason;
  int mined = 0;     // commands that survived filtering and classification
  int rejected = 0;  // extracted but dropped
};

// Mines validation commands over retrieval rounds until refinement says
// stop, then runs the final adjustment pass (dedup + supplementation).
PyramidResult build_pyramid(const FileIndex& index, DecisionProvider* reasoner,
                            const StackProfile& profile,
                            const PipelineOptions& opts = {});

struct RunOptions {
  std::string repo_path;  // local directory
  std::string out_dir;
  std::string repo_id;  // defaults to the repo directory name
  PipelineOptions pipeline;
  OrchestratorConfig orchestrator;
  SandboxFactory make_sandbox;  // required
  DecisionProvider* reasoner = nullptr;
  DecisionProvider* policy = nullptr;
};

struct RunResult {
  DeploymentReport report;
  TestPyramid pyramid;
  BashFile initial_script;
  std::filesystem::path script_path;
  std::filesystem::path dockerfile_path;
  std::filesystem::path report_path;
  std::filesystem::path pyramid_path;
  std::filesystem::path trace_path;
};

// Full pass over one repository: index, generate, mine, deploy, and write
// setup.sh, Dockerfile, report.json, pyramid.json and trace.txt into
// out_dir. Throws on indexing or validation problems; sandbox availability
// problems surface as SandboxUnavailable from the factory.
RunResult run_pipeline(const RunOptions& opts);

}  // namespace envdeploy
