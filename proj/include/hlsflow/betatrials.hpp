#pragma once
// Three-stage trial harness, Beta-Binomial posterior queries, adaptive
// stopping and cost accounting.

#include <filesystem>
#include <optional>
#include <stop_token>
#include <string>
#include <utility>
#include <vector>

#include "hlsflow/common.hpp"

namespace hlsflow::betatrials {

enum class Stage { Compile, Execute, Synthesize };
std::string_view to_string(Stage s);
std::optional<Stage> stage_from_string(std::string_view s);

struct TrialOutcome {
  bool passed = false;
  std::optional<Stage> failed_stage;
  std::string reason;
  double cost_usd = 0;
  double wall_seconds = 0;
  double tokens_in = 0;
  double tokens_out = 0;
  double api_calls = 0;
};

std::string outcome_to_json(const TrialOutcome& o);
TrialOutcome outcome_from_json(std::string_view line);

struct StageCommands {
  std::string compile;
  std::string execute;
  std::string synthesize;
};

struct TrialOptions {
  std::filesystem::path work_dir = ".";
  double stage_timeout_seconds = 0;  // 0: no limit
  std::stop_token stop;
};

inline constexpr std::string_view kMetricsSidecar = "metrics.json";

// Runs the stages in order under work_dir and stops at the first nonzero exit.
// A stage may leave metrics.json {cost_usd, wall_seconds, tokens_in,
// tokens_out, api_calls}; it is added to the trial and removed. Without any
// sidecar wall_seconds, the measured wall time is used.
TrialOutcome run_trial(const StageCommands& stages, const TrialOptions& options = {});

class TrialLedger {
public:
  void append(const TrialOutcome& o);
  const std::vector<TrialOutcome>& outcomes() const { return outcomes_; }
  std::size_t n() const { return outcomes_.size(); }
  std::size_t k() const;

  std::string to_ndjson() const;
  static TrialLedger from_ndjson(std::string_view text);
  static TrialLedger load(const std::filesystem::path& path);

private:
  std::vector<TrialOutcome> outcomes_;
};

// Regularized incomplete beta I_x(a, b).
double reg_inc_beta(double x, double a, double b);
// Smallest q with I_q(a, b) >= p, by 60 rounds of bisection.
double beta_quantile(double p, double a, double b);

struct BetaPosterior {
  double alpha = 1;
  double beta = 1;

  double mean() const { return alpha / (alpha + beta); }
  std::pair<double, double> credible_interval(double level = 0.95) const;  // equal-tailed
  double prob_theta_gt(double t) const { return 1 - reg_inc_beta(t, alpha, beta); }
  double prob_theta_lt(double t) const { return reg_inc_beta(t, alpha, beta); }
};

// Uniform Beta(1,1) prior.
BetaPosterior posterior(std::size_t n, std::size_t k);

struct StoppingConfig {
  double ci_level = 0.95;
  double precision_halfwidth = 0.125;
  double success_theta = 0.90;
  double success_prob = 0.90;
  double futility_theta = 0.10;
  double futility_prob = 0.33;
  std::size_t min_trials = 30;
  std::size_t max_trials = 100;

  void validate() const;
};

enum class StopReason { Precision, Success, Futility, MaxTrials };
std::string_view to_string(StopReason r);

struct StopDecision {
  std::optional<StopReason> reason;  // empty: continue
  bool stop() const { return reason.has_value(); }
};

StopDecision should_stop(const BetaPosterior& post, const StoppingConfig& config, std::size_t n);

struct CostSummary {
  std::size_t n = 0;
  std::size_t k = 0;
  double mean_cost = 0;
  double total_cost = 0;
  double mean_time = 0;  // seconds
  double mean_tokens_in = 0;
  double mean_tokens_out = 0;
  double mean_api_calls = 0;
  std::optional<double> cost_per_success;  // mean_cost / (k/n); empty when k == 0

  std::string cost_per_success_text() const;  // two decimals or "undefined"
};

CostSummary cost_summary(const TrialLedger& ledger);
// Same arithmetic from aggregate figures.
std::optional<double> cost_per_success(double mean_cost, std::size_t n, std::size_t k);

struct SequentialOptions {
  StoppingConfig stopping;
  TrialOptions trial;  // work_dir is the parent of per-trial directories
  std::size_t parallelism = 1;
  std::optional<std::filesystem::path> ledger_path;  // NDJSON, appended per completion
};

struct SequentialResult {
  TrialLedger ledger;
  StopDecision decision;
};

// Runs trials until should_stop fires. Completions are ordered by the time they
// finish; trials still in flight when the run stops are cancelled and dropped.
SequentialResult run_sequential(const StageCommands& stages, const SequentialOptions& options);

// Exit code for `trials run`: 0 success/precision, 3 futility, 4 max_trials.
int exit_code_for(const StopDecision& d);

struct ConfigRow {
  std::string name;
  std::size_t n = 0;
  std::size_t k = 0;
};

std::string posterior_table(const std::vector<ConfigRow>& rows, double ci_level = 0.95);
std::string cost_table(const std::vector<std::pair<std::string, CostSummary>>& rows);
std::string analysis_json(const std::vector<std::pair<std::string, TrialLedger>>& ledgers, double ci_level = 0.95);

std::string format_minutes(double seconds);  // "12m13s"
std::string group_thousands(double v);       // rounded, "9,311,098"

} // namespace hlsflow::betatrials
