#include "hlsflow/betatrials.hpp"

#include <cmath>
#include <condition_variable>
#include <deque>
#include <limits>
#include <mutex>
#include <thread>

#include <fmt/format.h>

#include "hlsflow/subprocess.hpp"
#include "json.hpp"

namespace hlsflow::betatrials {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(Stage s) {
  switch (s) {
  case Stage::Compile: return "compile";
  case Stage::Execute: return "execute";
  case Stage::Synthesize: return "synthesize";
  }
  return "?";
}

std::optional<Stage> stage_from_string(std::string_view s) {
  for (Stage st : {Stage::Compile, Stage::Execute, Stage::Synthesize})
    if (to_string(st) == s) return st;
  return std::nullopt;
}

std::string outcome_to_json(const TrialOutcome& o) {
  json j;
  j["passed"] = o.passed;
  j["failed_stage"] = o.failed_stage ? json(std::string(to_string(*o.failed_stage))) : json(nullptr);
  if (!o.reason.empty()) j["reason"] = o.reason;
  j["cost_usd"] = o.cost_usd;
  j["wall_seconds"] = o.wall_seconds;
  j["tokens_in"] = o.tokens_in;
  j["tokens_out"] = o.tokens_out;
  j["api_calls"] = o.api_calls;
  return j.dump();
}

TrialOutcome outcome_from_json(std::string_view line) {
  TrialOutcome o;
  try {
    auto j = json::parse(line);
    o.passed = j.at("passed").get<bool>();
    if (j.contains("failed_stage") && !j["failed_stage"].is_null()) {
      auto name = j["failed_stage"].get<std::string>();
      o.failed_stage = stage_from_string(name);
      if (!o.failed_stage) throw ValidationError("unknown stage '" + name + "'");
    }
    o.reason = j.value("reason", "");
    o.cost_usd = j.value("cost_usd", 0.0);
    o.wall_seconds = j.value("wall_seconds", 0.0);
    o.tokens_in = j.value("tokens_in", 0.0);
    o.tokens_out = j.value("tokens_out", 0.0);
    o.api_calls = j.value("api_calls", 0.0);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("ledger record: ") + e.what());
  }
  if (o.passed == o.failed_stage.has_value()) throw ValidationError("ledger record: passed must equal absence of failed_stage");
  return o;
}

TrialOutcome run_trial(const StageCommands& stages, const TrialOptions& options) {
  const std::pair<Stage, const std::string*> order[] = {
      {Stage::Compile, &stages.compile}, {Stage::Execute, &stages.execute}, {Stage::Synthesize, &stages.synthesize}};
  for (const auto& [stage, cmd] : order)
    if (trim(*cmd).empty()) throw ValidationError(fmt::format("no {} command configured", to_string(stage)));

  std::error_code ec;
  fs::create_directories(options.work_dir, ec);
  if (ec) throw IoError("cannot create trial directory " + options.work_dir.string() + ": " + ec.message());

  TrialOutcome out;
  bool sidecar_time = false;
  double measured = 0;
  const auto sidecar = options.work_dir / kMetricsSidecar;
  for (const auto& [stage, cmd] : order) {
    ProcessOptions po;
    po.cwd = options.work_dir;
    po.stop = options.stop;
    if (options.stage_timeout_seconds > 0)
      po.timeout = std::chrono::milliseconds(static_cast<long long>(options.stage_timeout_seconds * 1000));
    auto r = run_shell(*cmd, po);
    measured += r.wall_seconds;

    if (fs::exists(sidecar)) {
      try {
        auto j = json::parse(read_file(sidecar));
        out.cost_usd += j.value("cost_usd", 0.0);
        out.tokens_in += j.value("tokens_in", 0.0);
        out.tokens_out += j.value("tokens_out", 0.0);
        out.api_calls += j.value("api_calls", 0.0);
        if (j.contains("wall_seconds")) {
          out.wall_seconds += j["wall_seconds"].get<double>();
          sidecar_time = true;
        }
      } catch (const json::exception& e) {
        out.reason = fmt::format("{}: malformed {}: {}", to_string(stage), kMetricsSidecar, e.what());
      }
      fs::remove(sidecar, ec);
    }

    std::string why;
    if (r.spawn_failed) why = "could not start: " + r.error;
    else if (r.cancelled) why = "cancelled";
    else if (r.timed_out) why = "timed out";
    else if (r.term_signal) why = fmt::format("killed by signal {}", r.term_signal);
    else if (r.exit_code != 0) why = fmt::format("exit code {}", r.exit_code);
    if (!why.empty()) {
      out.failed_stage = stage;
      auto err = trim(r.stderr_text);
      out.reason = fmt::format("{}: {}{}", to_string(stage), why, err.empty() ? "" : " (" + err + ")");
      break;
    }
  }
  out.passed = !out.failed_stage;
  if (!sidecar_time) out.wall_seconds = measured;
  return out;
}

void TrialLedger::append(const TrialOutcome& o) {
  if (o.passed == o.failed_stage.has_value()) throw ValidationError("trial outcome: passed must equal absence of failed_stage");
  outcomes_.push_back(o);
}

std::size_t TrialLedger::k() const {
  std::size_t k = 0;
  for (const auto& o : outcomes_) k += o.passed;
  return k;
}

std::string TrialLedger::to_ndjson() const {
  std::string out;
  for (const auto& o : outcomes_) out += outcome_to_json(o) + "\n";
  return out;
}

TrialLedger TrialLedger::from_ndjson(std::string_view text) {
  TrialLedger l;
  for (const auto& line : split_lines(text))
    if (!trim(line).empty()) l.append(outcome_from_json(line));
  return l;
}

TrialLedger TrialLedger::load(const fs::path& path) { return from_ndjson(read_file(path)); }

namespace {

double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1, qam = a - 1;
  double c = 1, d = 1 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1) < kEps) break;
  }
  return h;
}

} // namespace

double reg_inc_beta(double x, double a, double b) {
  if (!(x >= 0 && x <= 1) || !(a > 0) || !(b > 0) || !std::isfinite(a) || !std::isfinite(b))
    throw ValidationError(fmt::format("reg_inc_beta domain: x={} a={} b={}", x, a, b));
  if (x == 0) return 0;
  if (x == 1) return 1;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1) / (a + b + 2)) return front * beta_cf(a, b, x) / a;
  return 1 - front * beta_cf(b, a, 1 - x) / b;
}

double beta_quantile(double p, double a, double b) {
  if (!(p >= 0 && p <= 1)) throw ValidationError(fmt::format("quantile probability {} outside [0,1]", p));
  double lo = 0, hi = 1;
  for (int i = 0; i < 60; ++i) {
    double mid = 0.5 * (lo + hi);
    if (reg_inc_beta(mid, a, b) < p) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

std::pair<double, double> BetaPosterior::credible_interval(double level) const {
  if (!(level > 0 && level < 1)) throw ValidationError("credible level must be in (0,1)");
  const double tail = (1 - level) / 2;
  return {beta_quantile(tail, alpha, beta), beta_quantile(1 - tail, alpha, beta)};
}

BetaPosterior posterior(std::size_t n, std::size_t k) {
  if (k > n) throw ValidationError(fmt::format("k={} exceeds n={}", k, n));
  return {1.0 + static_cast<double>(k), 1.0 + static_cast<double>(n - k)};
}

void StoppingConfig::validate() const {
  for (double v : {ci_level, precision_halfwidth, success_theta, success_prob, futility_theta, futility_prob})
    if (!(v > 0 && v < 1)) throw ValidationError("stopping thresholds must lie strictly between 0 and 1");
  if (max_trials < 1) throw ValidationError("max_trials must be >= 1");
  if (min_trials > max_trials) throw ValidationError("min_trials must not exceed max_trials");
}

std::string_view to_string(StopReason r) {
  switch (r) {
  case StopReason::Precision: return "precision";
  case StopReason::Success: return "success";
  case StopReason::Futility: return "futility";
  case StopReason::MaxTrials: return "max_trials";
  }
  return "?";
}

StopDecision should_stop(const BetaPosterior& post, const StoppingConfig& config, std::size_t n) {
  if (n < config.min_trials) return {};
  if (post.prob_theta_gt(config.success_theta) > config.success_prob) return {StopReason::Success};
  if (post.prob_theta_lt(config.futility_theta) > config.futility_prob) return {StopReason::Futility};
  auto [lo, hi] = post.credible_interval(config.ci_level);
  if ((hi - lo) / 2 <= config.precision_halfwidth) return {StopReason::Precision};
  if (n >= config.max_trials) return {StopReason::MaxTrials};
  return {};
}

std::optional<double> cost_per_success(double mean_cost, std::size_t n, std::size_t k) {
  if (k == 0 || n == 0) return std::nullopt;
  return mean_cost / (static_cast<double>(k) / static_cast<double>(n));
}

std::string CostSummary::cost_per_success_text() const {
  return cost_per_success ? format_fixed(*cost_per_success, 2) : std::string("undefined");
}

CostSummary cost_summary(const TrialLedger& ledger) {
  CostSummary s;
  s.n = ledger.n();
  s.k = ledger.k();
  if (s.n == 0) throw ValidationError("cost summary needs at least one trial");
  for (const auto& o : ledger.outcomes()) {
    s.total_cost += o.cost_usd;
    s.mean_time += o.wall_seconds;
    s.mean_tokens_in += o.tokens_in;
    s.mean_tokens_out += o.tokens_out;
    s.mean_api_calls += o.api_calls;
  }
  const double n = static_cast<double>(s.n);
  s.mean_cost = s.total_cost / n;
  s.mean_time /= n;
  s.mean_tokens_in /= n;
  s.mean_tokens_out /= n;
  s.mean_api_calls /= n;
  s.cost_per_success = betatrials::cost_per_success(s.mean_cost, s.n, s.k);
  return s;
}

SequentialResult run_sequential(const StageCommands& stages, const SequentialOptions& options) {
  options.stopping.validate();
  if (options.parallelism < 1) throw ValidationError("parallelism must be >= 1");
  for (const auto* cmd : {&stages.compile, &stages.execute, &stages.synthesize})
    if (trim(*cmd).empty()) throw ValidationError("all three stage commands must be configured");
  SequentialResult result;
  if (options.ledger_path) {
    std::error_code ec;
    if (options.ledger_path->has_parent_path()) fs::create_directories(options.ledger_path->parent_path(), ec);
    append_file(*options.ledger_path, "");
  }

  std::mutex mu;
  std::condition_variable cv;
  std::deque<TrialOutcome> done;
  std::size_t launched = 0, in_flight = 0;
  std::vector<std::jthread> workers;  // destroyed first: cancels and joins stragglers

  auto launch = [&] {
    std::size_t id = launched++;
    ++in_flight;
    workers.emplace_back([&, id](std::stop_token st) {
      TrialOptions t = options.trial;
      t.work_dir = options.trial.work_dir / fmt::format("trial_{:04d}", id);
      t.stop = st;
      TrialOutcome o;
      try {
        o = run_trial(stages, t);
      } catch (const std::exception& e) {
        o.failed_stage = Stage::Compile;
        o.reason = std::string("harness error: ") + e.what();
      }
      std::lock_guard lock(mu);
      done.push_back(std::move(o));
      cv.notify_all();
    });
  };

  for (;;) {
    while (in_flight < options.parallelism && result.ledger.n() + in_flight < options.stopping.max_trials) launch();
    TrialOutcome o;
    {
      std::unique_lock lock(mu);
      cv.wait(lock, [&] { return !done.empty(); });
      o = std::move(done.front());
      done.pop_front();
    }
    --in_flight;
    result.ledger.append(o);
    if (options.ledger_path) append_file(*options.ledger_path, outcome_to_json(o) + "\n");
    result.decision = should_stop(posterior(result.ledger.n(), result.ledger.k()), options.stopping, result.ledger.n());
    if (result.decision.stop()) break;
  }
  for (auto& w : workers) w.request_stop();
  workers.clear();
  return result;
}

int exit_code_for(const StopDecision& d) {
  if (!d.reason) return 0;
  switch (*d.reason) {
  case StopReason::Futility: return 3;
  case StopReason::MaxTrials: return 4;
  default: return 0;
  }
}

std::string format_minutes(double seconds) {
  long total = std::lround(seconds);
  return fmt::format("{}m{}s", total / 60, total % 60);
}

std::string group_thousands(double v) {
  auto digits = fmt::format("{}", std::llround(std::fabs(v)));
  std::string out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i && (digits.size() - i) % 3 == 0) out += ',';
    out += digits[i];
  }
  return (v < 0 && std::llround(std::fabs(v)) != 0 ? "-" : "") + out;
}

namespace {

std::string render(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& r : rows) {
    width.resize(std::max(width.size(), r.size()), 0);
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  }
  std::string out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::string line;
    for (std::size_t c = 0; c < rows[i].size(); ++c) {
      if (c) line += "  ";
      line += c == 0 ? fmt::format("{:<{}}", rows[i][c], width[c]) : fmt::format("{:>{}}", rows[i][c], width[c]);
    }
    out += line + "\n";
    if (i == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w;
      out += std::string(total + 2 * (width.size() - 1), '-') + "\n";
    }
  }
  return out;
}

std::string pct(double v) { return format_fixed(100 * v, 1); }

} // namespace

std::string posterior_table(const std::vector<ConfigRow>& rows, double ci_level) {
  std::vector<std::vector<std::string>> t = {
      {"Config", "n", "k", "Pass Rate", "Post. Mean", fmt::format("{}% CI", format_number(100 * ci_level)),
       "P(theta>90)"}};
  for (const auto& r : rows) {
    auto post = posterior(r.n, r.k);
    auto [lo, hi] = post.credible_interval(ci_level);
    t.push_back({r.name, std::to_string(r.n), std::to_string(r.k),
                 r.n ? pct(static_cast<double>(r.k) / static_cast<double>(r.n)) : "-", pct(post.mean()),
                 fmt::format("[{}, {}]", pct(lo), pct(hi)), format_fixed(post.prob_theta_gt(0.90), 2)});
  }
  return render(t);
}

std::string cost_table(const std::vector<std::pair<std::string, CostSummary>>& rows) {
  std::vector<std::vector<std::string>> t = {{"Config", "n", "k", "Mean Cost ($)", "Total Cost ($)",
                                              "Mean Time (min)", "Mean Tokens In", "Mean Tokens Out",
                                              "Mean API Calls", "Cost per Success ($)"}};
  for (const auto& [name, s] : rows)
    t.push_back({name, std::to_string(s.n), std::to_string(s.k), format_fixed(s.mean_cost, 2),
                 format_fixed(s.total_cost, 2), format_minutes(s.mean_time), group_thousands(s.mean_tokens_in),
                 group_thousands(s.mean_tokens_out), group_thousands(s.mean_api_calls), s.cost_per_success_text()});
  return render(t);
}

std::string analysis_json(const std::vector<std::pair<std::string, TrialLedger>>& ledgers, double ci_level) {
  json out = json::array();
  for (const auto& [name, ledger] : ledgers) {
    auto post = posterior(ledger.n(), ledger.k());
    auto [lo, hi] = post.credible_interval(ci_level);
    json j = {{"config", name},
              {"n", ledger.n()},
              {"k", ledger.k()},
              {"alpha", post.alpha},
              {"beta", post.beta},
              {"posterior_mean", post.mean()},
              {"ci_level", ci_level},
              {"ci_low", lo},
              {"ci_high", hi},
              {"p_theta_gt_0_9", post.prob_theta_gt(0.9)}};
    if (ledger.n() > 0) {
      auto c = cost_summary(ledger);
      j["pass_rate"] = static_cast<double>(c.k) / static_cast<double>(c.n);
      j["mean_cost"] = c.mean_cost;
      j["total_cost"] = c.total_cost;
      j["mean_time_seconds"] = c.mean_time;
      j["mean_tokens_in"] = c.mean_tokens_in;
      j["mean_tokens_out"] = c.mean_tokens_out;
      j["mean_api_calls"] = c.mean_api_calls;
      j["cost_per_success"] = c.cost_per_success ? json(*c.cost_per_success) : json("undefined");
    }
    out.push_back(j);
  }
  return out.dump(2) + "\n";
}

} // namespace hlsflow::betatrials
