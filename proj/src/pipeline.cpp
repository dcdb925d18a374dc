#include "envdeploy/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "envdeploy/errors.hpp"
#include "envdeploy/report.hpp"

namespace envdeploy {

namespace {

std::string basename_of(const std::string& path) {
  const std::size_t slash = path.find_last_of('/');
  return slash == std::string::npos ? path : path.substr(slash + 1);
}

bool has_segment(const std::string& path, std::string_view segment) {
  std::size_t start = 0;
  while (start <= path.size()) {
    std::size_t end = path.find('/', start);
    if (end == std::string::npos) end = path.size();
    if (std::string_view(path).substr(start, end - start) == segment) {
      return true;
    }
    start = end + 1;
  }
  return false;
}

bool looks_like_test_file(const std::string& base) {
  auto ends = [&](std::string_view suffix) {
    return base.size() >= suffix.size() &&
           base.compare(base.size() - suffix.size(), suffix.size(), suffix) ==
               0;
  };
  if (base.rfind("test_", 0) == 0 && ends(".py")) return true;
  return ends("_test.py") || ends("_test.go") || ends(".test.js") ||
         ends(".test.ts") || ends("Test.java") || ends("_spec.rb");
}

}  // namespace

StackProfile detect_profile(const FileIndex& index) {
  StackProfile profile;
  std::set<std::string> traits;
  auto mark = [&](const std::string& trait, const std::string& path) {
    if (traits.insert(trait).second) profile.traits.push_back(trait);
    profile.marker_files.push_back(path);
  };

  for (const FileEntry& entry : index.entries()) {
    const std::string base = basename_of(entry.relative_path);
    if (base == "requirements.txt" || base.rfind("requirements", 0) == 0) {
      if (base.rfind("requirements", 0) == 0 &&
          (base == "requirements.txt" || base == "requirements-dev.txt" ||
           base == "requirements_dev.txt")) {
        mark("python", entry.relative_path);
        mark("requirements", entry.relative_path);
      }
    }
    if (base == "pyproject.toml") {
      mark("python", entry.relative_path);
      mark("pyproject", entry.relative_path);
    }
    if (base == "setup.py") {
      mark("python", entry.relative_path);
      mark("setup-py", entry.relative_path);
    }
    if (base == "package.json" && !has_segment(entry.relative_path,
                                               "node_modules")) {
      mark("node", entry.relative_path);
    }
    if (base == "pom.xml") mark("jvm-maven", entry.relative_path);
    if (base == "build.gradle" || base == "build.gradle.kts" ||
        base == "settings.gradle" || base == "settings.gradle.kts") {
      mark("jvm-gradle", entry.relative_path);
    }
    if (base == "CMakeLists.txt") mark("cmake", entry.relative_path);
    if (base == "Makefile" || base == "makefile" || base == "GNUmakefile") {
      mark("make", entry.relative_path);
    }
    if (base == "meson.build") mark("meson", entry.relative_path);
    if (base == "Cargo.toml") mark("rust", entry.relative_path);
    if (base == "go.mod") mark("go", entry.relative_path);
    if (has_segment(entry.relative_path, "tests") ||
        has_segment(entry.relative_path, "test") ||
        looks_like_test_file(base)) {
      mark("has-tests", entry.relative_path);
    }
  }
  return profile;
}

GenerationResult generate_bashfile(const FileIndex& index,
                                   DecisionProvider* reasoner,
                                   const PipelineOptions& opts) {
  GenerationResult result;
  result.retrieval.max_rounds = opts.max_rounds;
  std::vector<std::string> hints;

  for (;;) {
    std::vector<RetrievedFile> batch;
    try {
      batch = retrieve_env_files(index, result.retrieval, hints,
                                 opts.batch_limit);
    } catch (const RetrievalExhausted&) {
      break;
    }
    result.files.insert(result.files.end(), batch.begin(), batch.end());
    result.sufficiency = sufficiency_check(result.files, reasoner);
    if (result.sufficiency.verdict == Sufficiency::Sufficient) break;
    hints = result.sufficiency.suggestions;
    if (batch.empty() && hints.empty()) break;  // nothing left to try
  }

  result.profile = detect_profile(index);
  result.bashfile = BashFile::from_template(result.profile);
  return result;
}

PyramidResult build_pyramid(const FileIndex& index, DecisionProvider* reasoner,
                            const StackProfile& profile,
                            const PipelineOptions& opts) {
  PyramidResult result;
  RetrievalState state;
  state.max_rounds = opts.max_rounds;
  std::vector<std::string> hints;

  for (;;) {
    const RefinementVerdict verdict =
        refinement_decision(result.pyramid, state.rounds_used,
                            state.max_rounds);
    if (verdict.accomplished) {
      result.refinement_reason = verdict.reason;
      break;
    }
    std::vector<RetrievedFile> batch;
    try {
      batch = retrieve_env_files(index, state, hints, opts.batch_limit);
    } catch (const RetrievalExhausted&) {
      result.refinement_reason =
          refinement_decision(result.pyramid, state.rounds_used,
                              state.max_rounds)
              .reason;
      break;
    }
    for (const RetrievedFile& file : batch) {
      const std::vector<CandidateCommand> extracted =
          extract_commands(file.content, file.relative_path,
                           state.rounds_used);
      for (const CandidateCommand& candidate : extracted) {
        if (result.pyramid.contains_text(candidate.text)) continue;
        const FilterResult filtered = filter_command(candidate);
        if (!filtered.keep) {
          ++result.rejected;
          continue;
        }
        const ClassificationResult classified =
            classify_command(candidate, reasoner);
        if (!classified.level) {
          ++result.rejected;
          continue;
        }
        result.pyramid.level(*classified.level).push_back(candidate);
        ++result.mined;
      }
    }
    hints = {"test", "run", "install"};
  }

  result.rounds_used = state.rounds_used;
  result.pyramid = adjust_pyramid(result.pyramid, reasoner, &profile);
  return result;
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw EmitError("cannot write " + path.string());
  out << content;
  if (!out) throw EmitError("short write to " + path.string());
}

}  // namespace

RunResult run_pipeline(const RunOptions& opts) {
  if (!opts.make_sandbox) {
    throw ValidationError("run_pipeline needs a sandbox factory");
  }
  std::filesystem::create_directories(opts.out_dir);

  const FileIndex index = FileIndex::build(opts.repo_path);
  const std::string repo_id =
      !opts.repo_id.empty()
          ? opts.repo_id
          : std::filesystem::absolute(opts.repo_path).filename().string();

  const GenerationResult generated =
      generate_bashfile(index, opts.reasoner, opts.pipeline);
  const PyramidResult mined =
      build_pyramid(index, opts.reasoner, generated.profile, opts.pipeline);

  Orchestrator orchestrator(opts.orchestrator, opts.reasoner, opts.policy);
  RunResult result;
  result.initial_script = generated.bashfile;
  result.pyramid = mined.pyramid;
  result.report = orchestrator.deploy(generated.bashfile, mined.pyramid,
                                      opts.make_sandbox, repo_id);

  const std::filesystem::path out(opts.out_dir);
  result.script_path = out / "setup.sh";
  result.dockerfile_path = out / "Dockerfile";
  result.report_path = out / "report.json";
  result.pyramid_path = out / "pyramid.json";
  result.trace_path = out / "trace.txt";

  write_file(result.script_path, result.report.final_script);
  const BashFile final_bf = BashFile::parse(result.report.final_script);
  write_file(result.dockerfile_path,
             emit_dockerfile(final_bf, opts.pipeline.base_image));
  write_file(result.report_path, to_json(result.report).dump(2) + "\n");
  write_file(result.pyramid_path, result.pyramid.to_json().dump(2) + "\n");
  write_file(result.trace_path, render_trace(result.report));
  return result;
}

}  // namespace envdeploy
