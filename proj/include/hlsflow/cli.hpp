#pragma once
// The hlsflow command line: every module as a subcommand, plus `pipeline run`.

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "hlsflow/betatrials.hpp"
#include "hlsflow/designspace.hpp"
#include "hlsflow/ragkit.hpp"
#include "hlsflow/synthrunner.hpp"

namespace hlsflow::cli {

// Settings shared across subcommands, loaded from a YAML file via --config.
// Command-line flags override file values. Layout:
//   paths:     {run_root, index_dir}
//   execution: {pool_size, per_job_timeout_seconds, max_retries,
//               targets: [{name, prefix: [words...]}]}
//   retrieval: {k, m, window_bytes, stride_bytes}
//   stopping:  {ci_level, precision_halfwidth, success_theta, success_prob,
//               futility_theta, futility_prob, min_trials, max_trials}
//   templates: {DESIGN_GOAL: "...", ...}
struct GlobalConfig {
  std::filesystem::path run_root = "run";
  std::filesystem::path index_dir = "rag_index";
  synthrunner::ExecutionPlan plan;
  ragkit::RetrievalConfig retrieval;
  betatrials::StoppingConfig stopping;
  std::map<designspace::DirectiveType, std::string> template_overrides;

  static GlobalConfig parse(std::string_view yaml_text);  // rejects unknown keys
  static GlobalConfig load(const std::filesystem::path& path);
  designspace::DirectiveTemplates templates() const;
};

inline constexpr std::string_view kIndexFile = "index.ndjson";
inline constexpr std::string_view kPipelineReport = "pipeline_report.json";

// Exit codes: 0 success, 1 runtime failure, 2 usage error, and the
// `trials run` codes (3 futility, 4 max_trials).
int dispatch(int argc, const char* const* argv);
int dispatch(const std::vector<std::string>& args);  // without the program name

} // namespace hlsflow::cli
