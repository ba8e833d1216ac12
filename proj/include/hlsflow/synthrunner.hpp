#pragma once
// Parallel execution of design points against a pluggable synthesis backend.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stop_token>
#include <string>
#include <vector>

#include "hlsflow/designspace.hpp"

namespace hlsflow::synthrunner {

enum class JobState { Pending, Running, Succeeded, SynthesisFailed, TimedOut, TransportFailed };

std::string_view to_string(JobState s);
std::optional<JobState> job_state_from_string(std::string_view s);
bool is_terminal(JobState s);

struct SynthesisOutcome {
  bool success = false;
  std::optional<double> latency_ms;
  std::optional<double> area;
  double synth_seconds = 0;
  std::string log_text;

  static SynthesisOutcome succeeded(double latency_ms, double area, double synth_seconds, std::string log = {});
  static SynthesisOutcome failed(std::string reason, double synth_seconds = 0);
};

struct Job {
  std::uint64_t point_index = 0;
  std::filesystem::path directive_path;
  JobState state = JobState::Pending;
  std::string reason;
  int attempts = 0;
  std::optional<std::string> worker_id;
  std::filesystem::path log_path;
  std::optional<SynthesisOutcome> outcome;
};

// Local when command_prefix is empty; otherwise every backend command line
// is prefixed (e.g. {"ssh", "node3"}).
struct ExecutionTarget {
  std::string name = "local";
  std::vector<std::string> command_prefix;
};

struct ExecutionPlan {
  std::size_t pool_size = 1;
  std::vector<ExecutionTarget> targets = {ExecutionTarget{}};
  double per_job_timeout_seconds = 3600;
  int max_retries = 2;  // transport failures only

  void validate() const;
};

struct BackendRequest {
  std::uint64_t point_index = 0;
  std::filesystem::path directive_path;
  const ExecutionTarget* target = nullptr;
  int attempt = 1;
  double timeout_seconds = 0;
  std::stop_token stop;  // requested when the job's deadline passes
};

struct BackendResponse {
  enum class Kind { Completed, TransportFailure, TimedOut };
  Kind kind = Kind::Completed;
  SynthesisOutcome outcome;
  std::string transport_reason;

  static BackendResponse completed(SynthesisOutcome o) { return {Kind::Completed, std::move(o), {}}; }
  static BackendResponse transport_failure(std::string why) { return {Kind::TransportFailure, {}, std::move(why)}; }
  static BackendResponse timed_out() { return {Kind::TimedOut, {}, {}}; }
};

// Implementations must tolerate concurrent synthesize() calls.
class SynthesisBackend {
public:
  virtual ~SynthesisBackend() = default;
  virtual BackendResponse synthesize(const BackendRequest& request) = 0;
};

// `<prefix...> <command...> <directive_path>`; exit 0 plus LATENCY_MS=, AREA=,
// SYNTH_S= lines on stdout means success. Exit codes listed as transport
// codes (255 is what ssh reports for connection failures) are retried.
class CommandBackend : public SynthesisBackend {
public:
  explicit CommandBackend(std::vector<std::string> command, std::set<int> transport_exit_codes = {255});
  BackendResponse synthesize(const BackendRequest& request) override;

  // Parses the metric lines of a successful run.
  static SynthesisOutcome parse_output(const std::string& stdout_text, const std::string& stderr_text);

private:
  std::vector<std::string> command_;
  std::set<int> transport_exit_codes_;
};

struct MockArray {
  std::string name;
  std::string path;
  std::int64_t accesses_per_iteration = 1;
  double area_per_port = 1;
};

struct MockKernelProfile {
  std::int64_t iterations = 1;
  std::int64_t ops_per_iteration = 1;
  std::vector<MockArray> arrays;
  double base_area = 1;
  double min_clock_ns = 1;
  std::optional<std::string> loop_path;  // restricts which UNROLL/PIPELINE_II dims model the loop

  void validate() const;
  static MockKernelProfile from_json(std::string_view text);
  static MockKernelProfile load(const std::filesystem::path& path);
  std::string to_json() const;
};

// Knob values a point resolves to under the mock model.
struct MockKnobs {
  bool latency_goal = false;
  double clock_ns = 0;
  std::int64_t unroll = 1;
  std::optional<std::int64_t> initiation_interval;
  std::map<std::string, std::int64_t> interleave;  // array name -> banks

  std::int64_t effective_ii() const { return initiation_interval.value_or(unroll); }
};

MockKnobs resolve_knobs(const MockKernelProfile& profile, const designspace::DesignPoint& point);

struct MockEstimate {
  double cycles = 0;
  double latency_ms = 0;
  double area = 0;
  double synth_seconds = 0;
};
// Cost model, irrespective of feasibility.
MockEstimate mock_estimate(const MockKernelProfile& profile, const MockKnobs& knobs);

// Deterministic stand-in for the HLS tool.
SynthesisOutcome mock_synthesize(const MockKernelProfile& profile, const designspace::DesignPoint& point);

// Baseline rows (no dimensions) synthesize with default knobs at min_clock_ns.
class MockBackend : public SynthesisBackend {
public:
  MockBackend(MockKernelProfile profile, designspace::DesignSpaceSpec spec);
  BackendResponse synthesize(const BackendRequest& request) override;

private:
  MockKernelProfile profile_;
  designspace::DesignSpaceSpec spec_;
};

struct RetryEvent {
  std::uint64_t point_index = 0;
  int attempt = 0;
  std::string target;
  std::string reason;
};

struct RunSummary {
  std::size_t total_jobs = 0;
  std::map<std::string, std::size_t> counts;  // terminal state name -> jobs
  std::size_t total_attempts = 0;
  std::vector<RetryEvent> retries;
  std::size_t resumed = 0;  // jobs restored from a previous journal
  double wall_seconds = 0;

  std::string to_json() const;
};

struct RunOptions {
  std::filesystem::path run_root = "run";
  // Explicit run directory; defaults to run_root/<timestamp>.
  std::optional<std::filesystem::path> run_dir;
  // Reuse terminal records already in run_dir/journal.ndjson.
  bool resume = false;
};

struct RunResult {
  designspace::Manifest manifest;
  std::vector<Job> jobs;  // sorted by point index
  RunSummary summary;
  std::filesystem::path run_dir;
};

// Runs every manifest row. Individual job failures never abort the run.
RunResult run_all(const designspace::Manifest& manifest, const std::filesystem::path& manifest_dir,
                  const ExecutionPlan& plan, SynthesisBackend& backend, const RunOptions& options = {});

struct LogCollection {
  std::vector<std::pair<std::uint64_t, std::string>> logs;
  std::vector<std::uint64_t> missing;
};

LogCollection collect_logs(const std::filesystem::path& run_dir);

std::string job_dir_name(std::uint64_t index);  // dp_%06d

} // namespace hlsflow::synthrunner
