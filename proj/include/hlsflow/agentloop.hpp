#pragma once
// Specialist/verifier loop engine with NDJSON traces and per-phase metrics.

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hlsflow/common.hpp"

namespace hlsflow::agentloop {

struct TaskSpec {
  int phase_id = 0;
  std::string description;
  std::string deliverable_contract;
};

struct Verdict {
  bool accepted = false;
  std::string feedback;  // non-empty on reject

  static Verdict accept() { return {true, {}}; }
  static Verdict reject(std::string feedback);  // throws on empty feedback
};

class Specialist {
public:
  virtual ~Specialist() = default;
  virtual std::string produce(const TaskSpec& task, const std::optional<std::string>& feedback) = 0;
};

class Verifier {
public:
  virtual ~Verifier() = default;
  virtual Verdict verify(const TaskSpec& task, const std::string& deliverable) = 0;
};

enum class Actor { Specialist, Verifier };
std::string_view to_string(Actor a);

struct TraceEvent {
  std::string episode_id;
  int phase_id = 0;
  Actor actor = Actor::Specialist;
  int round = 1;
  std::optional<bool> accepted;  // verifier events only
  std::optional<std::string> feedback;
  std::optional<std::string> error;
  double timestamp = 0;
};

struct Episode {
  std::string episode_id;
  int phase_id = 0;
  int rounds = 0;
  std::vector<TraceEvent> transitions;
  bool accepted = false;
  std::optional<std::string> final_feedback;
  std::optional<std::string> error;
};

using Clock = std::function<double()>;  // seconds
double system_clock_seconds();

struct LoopOptions {
  int max_rounds = 5;
  Clock clock = system_clock_seconds;
  std::string episode_id;  // defaults to "phase<id>"
};

Episode run_episode(const TaskSpec& task, Specialist& specialist, Verifier& verifier, const LoopOptions& options = {});

struct PhaseMetrics {
  int phase_id = 0;
  std::size_t episodes = 0;
  double mean_rounds = 0;
  int max_rounds_observed = 0;
  double single_pass_rate = 0;  // percent

  std::string mean_text() const;  // two decimals
  std::string rate_text() const;  // one decimal, with %
};

// One entry per phase, ascending phase id.
std::vector<PhaseMetrics> compute_metrics(const std::vector<Episode>& episodes);
std::string metrics_table(const std::vector<PhaseMetrics>& metrics);
std::string metrics_json(const std::vector<PhaseMetrics>& metrics);

std::string trace_to_ndjson(const std::vector<Episode>& episodes);
// Rebuilds episodes in first-seen order.
std::vector<Episode> episodes_from_ndjson(std::string_view text);
std::vector<Episode> load_trace(const std::filesystem::path& path);

struct BackendPair {
  std::shared_ptr<Specialist> specialist;
  std::shared_ptr<Verifier> verifier;
};

struct PipelineOptions {
  int max_rounds = 5;
  bool continue_on_failure = false;
  Clock clock = system_clock_seconds;
  std::optional<std::filesystem::path> trace_path;
};

struct PipelineResult {
  std::vector<Episode> episodes;
  std::optional<int> failed_phase;  // first phase not accepted
  bool ok() const { return !failed_phase; }
};

PipelineResult run_pipeline(const std::vector<TaskSpec>& tasks,
                            const std::function<BackendPair(const TaskSpec&)>& backends,
                            const PipelineOptions& options = {});

// Receives {"phase_id","description","deliverable_contract","feedback"} JSON on
// stdin and prints the deliverable. A nonzero exit is a backend error.
class CommandSpecialist : public Specialist {
public:
  explicit CommandSpecialist(std::string command, double timeout_seconds = 3600);
  std::string produce(const TaskSpec& task, const std::optional<std::string>& feedback) override;

private:
  std::string command_;
  double timeout_seconds_;
};

// Receives the deliverable on stdin (phase in HLSFLOW_PHASE_ID); exit 0
// accepts, exit 1 rejects with feedback on stdout, anything else is an error.
class CommandVerifier : public Verifier {
public:
  explicit CommandVerifier(std::string command, double timeout_seconds = 3600);
  Verdict verify(const TaskSpec& task, const std::string& deliverable) override;

private:
  std::string command_;
  double timeout_seconds_;
};

} // namespace hlsflow::agentloop
