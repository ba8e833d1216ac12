#include "hlsflow/agentloop.hpp"

#include <algorithm>
#include <chrono>
#include <set>

#include <fmt/format.h>

#include "hlsflow/subprocess.hpp"
#include "json.hpp"

namespace hlsflow::agentloop {

using json = nlohmann::json;

Verdict Verdict::reject(std::string feedback) {
  if (trim(feedback).empty()) throw ValidationError("reject verdict needs non-empty feedback");
  return {false, std::move(feedback)};
}

std::string_view to_string(Actor a) { return a == Actor::Specialist ? "specialist" : "verifier"; }

double system_clock_seconds() {
  return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
}

Episode run_episode(const TaskSpec& task, Specialist& specialist, Verifier& verifier, const LoopOptions& options) {
  if (options.max_rounds < 1) throw ValidationError("max_rounds must be >= 1");
  Episode ep;
  ep.episode_id = options.episode_id.empty() ? fmt::format("phase{}", task.phase_id) : options.episode_id;
  ep.phase_id = task.phase_id;
  auto now = [&] { return options.clock ? options.clock() : 0.0; };
  auto event = [&](Actor actor, int round) {
    TraceEvent e;
    e.episode_id = ep.episode_id;
    e.phase_id = task.phase_id;
    e.actor = actor;
    e.round = round;
    e.timestamp = now();
    return e;
  };

  std::optional<std::string> feedback;
  for (int round = 1; round <= options.max_rounds; ++round) {
    ep.rounds = round;
    auto produced = event(Actor::Specialist, round);
    std::string deliverable;
    try {
      deliverable = specialist.produce(task, feedback);
    } catch (const std::exception& e) {
      produced.error = e.what();
      ep.transitions.push_back(produced);
      ep.error = fmt::format("specialist error in round {}: {}", round, e.what());
      ep.final_feedback = feedback;
      return ep;
    }
    ep.transitions.push_back(produced);

    auto checked = event(Actor::Verifier, round);
    Verdict verdict;
    try {
      verdict = verifier.verify(task, deliverable);
      if (!verdict.accepted && trim(verdict.feedback).empty()) throw ValidationError("verifier rejected without feedback");
    } catch (const std::exception& e) {
      checked.error = e.what();
      ep.transitions.push_back(checked);
      ep.error = fmt::format("verifier error in round {}: {}", round, e.what());
      ep.final_feedback = feedback;
      return ep;
    }
    checked.accepted = verdict.accepted;
    if (!verdict.accepted) checked.feedback = verdict.feedback;
    ep.transitions.push_back(checked);
    if (verdict.accepted) {
      ep.accepted = true;
      ep.final_feedback.reset();
      return ep;
    }
    feedback = verdict.feedback;
    ep.final_feedback = feedback;
  }
  return ep;
}

std::string PhaseMetrics::mean_text() const { return format_fixed(mean_rounds, 2); }
std::string PhaseMetrics::rate_text() const { return format_fixed(single_pass_rate, 1) + "%"; }

std::vector<PhaseMetrics> compute_metrics(const std::vector<Episode>& episodes) {
  std::map<int, std::vector<const Episode*>> by_phase;
  for (const auto& e : episodes) by_phase[e.phase_id].push_back(&e);
  std::vector<PhaseMetrics> out;
  for (const auto& [phase, eps] : by_phase) {
    PhaseMetrics m;
    m.phase_id = phase;
    m.episodes = eps.size();
    long total = 0;
    std::size_t single = 0;
    for (const auto* e : eps) {
      total += e->rounds;
      m.max_rounds_observed = std::max(m.max_rounds_observed, e->rounds);
      if (e->rounds == 1 && e->accepted) ++single;
    }
    m.mean_rounds = static_cast<double>(total) / static_cast<double>(eps.size());
    m.single_pass_rate = 100.0 * static_cast<double>(single) / static_cast<double>(eps.size());
    out.push_back(m);
  }
  return out;
}

std::string metrics_table(const std::vector<PhaseMetrics>& metrics) {
  std::string out = fmt::format("{:<6} {:>8} {:>11} {:>10} {:>16}\n", "Phase", "Episodes", "Mean rounds",
                                "Max rounds", "Single-pass rate");
  for (const auto& m : metrics)
    out += fmt::format("{:<6} {:>8} {:>11} {:>10} {:>16}\n", m.phase_id, m.episodes, m.mean_text(),
                       m.max_rounds_observed, m.rate_text());
  return out;
}

std::string metrics_json(const std::vector<PhaseMetrics>& metrics) {
  json j = json::array();
  for (const auto& m : metrics)
    j.push_back({{"phase_id", m.phase_id},
                 {"episodes", m.episodes},
                 {"mean_rounds", m.mean_rounds},
                 {"max_rounds", m.max_rounds_observed},
                 {"single_pass_rate", m.single_pass_rate}});
  return j.dump(2) + "\n";
}

std::string trace_to_ndjson(const std::vector<Episode>& episodes) {
  std::string out;
  for (const auto& ep : episodes) {
    for (const auto& e : ep.transitions) {
      json j;
      j["episode_id"] = e.episode_id;
      j["phase_id"] = e.phase_id;
      j["actor"] = std::string(to_string(e.actor));
      j["round"] = e.round;
      if (e.accepted) j["verdict"] = *e.accepted ? "accept" : "reject";
      if (e.feedback) j["feedback"] = *e.feedback;
      if (e.error) j["error"] = *e.error;
      j["timestamp"] = e.timestamp;
      out += j.dump() + "\n";
    }
  }
  return out;
}

std::vector<Episode> episodes_from_ndjson(std::string_view text) {
  std::vector<Episode> out;
  std::map<std::string, std::size_t> slot;
  int line_no = 0;
  for (const auto& line : split_lines(text)) {
    ++line_no;
    if (trim(line).empty()) continue;
    TraceEvent e;
    try {
      auto j = json::parse(line);
      e.episode_id = j.at("episode_id").get<std::string>();
      e.phase_id = j.at("phase_id").get<int>();
      auto actor = j.at("actor").get<std::string>();
      if (actor == "specialist") e.actor = Actor::Specialist;
      else if (actor == "verifier") e.actor = Actor::Verifier;
      else throw ValidationError("unknown actor '" + actor + "'");
      e.round = j.at("round").get<int>();
      if (j.contains("verdict")) e.accepted = j["verdict"].get<std::string>() == "accept";
      if (j.contains("feedback")) e.feedback = j["feedback"].get<std::string>();
      if (j.contains("error")) e.error = j["error"].get<std::string>();
      e.timestamp = j.value("timestamp", 0.0);
    } catch (const json::exception& ex) {
      throw ValidationError(fmt::format("trace line {}: {}", line_no, ex.what()));
    }
    auto [it, fresh] = slot.try_emplace(e.episode_id, out.size());
    if (fresh) {
      Episode ep;
      ep.episode_id = e.episode_id;
      ep.phase_id = e.phase_id;
      out.push_back(std::move(ep));
    }
    Episode& ep = out[it->second];
    Actor expected = ep.transitions.empty() || ep.transitions.back().actor == Actor::Verifier ? Actor::Specialist
                                                                                              : Actor::Verifier;
    if (e.actor != expected)
      throw ValidationError(fmt::format("trace line {}: episode {} does not alternate actors", line_no, ep.episode_id));
    ep.rounds = std::max(ep.rounds, e.round);
    if (e.error) ep.error = *e.error;
    if (e.actor == Actor::Verifier && e.accepted) {
      ep.accepted = *e.accepted;
      if (*e.accepted) ep.final_feedback.reset();
      else ep.final_feedback = e.feedback;
    }
    ep.transitions.push_back(std::move(e));
  }
  return out;
}

std::vector<Episode> load_trace(const std::filesystem::path& path) { return episodes_from_ndjson(read_file(path)); }

PipelineResult run_pipeline(const std::vector<TaskSpec>& tasks,
                            const std::function<BackendPair(const TaskSpec&)>& backends,
                            const PipelineOptions& options) {
  std::set<int> phases;
  for (const auto& t : tasks)
    if (!phases.insert(t.phase_id).second) throw ValidationError(fmt::format("duplicate phase id {}", t.phase_id));
  PipelineResult result;
  for (const auto& task : tasks) {
    auto pair = backends(task);
    if (!pair.specialist || !pair.verifier)
      throw ValidationError(fmt::format("no backends configured for phase {}", task.phase_id));
    LoopOptions lo;
    lo.max_rounds = options.max_rounds;
    lo.clock = options.clock;
    lo.episode_id = fmt::format("phase{}", task.phase_id);
    auto ep = run_episode(task, *pair.specialist, *pair.verifier, lo);
    bool accepted = ep.accepted;
    result.episodes.push_back(std::move(ep));
    if (!accepted) {
      if (!result.failed_phase) result.failed_phase = task.phase_id;
      if (!options.continue_on_failure) break;
    }
  }
  if (options.trace_path) write_file(*options.trace_path, trace_to_ndjson(result.episodes));
  return result;
}

namespace {

ProcessOptions command_options(double timeout_seconds, std::string input) {
  ProcessOptions o;
  o.stdin_text = std::move(input);
  o.timeout = std::chrono::milliseconds(static_cast<long long>(timeout_seconds * 1000));
  return o;
}

} // namespace

CommandSpecialist::CommandSpecialist(std::string command, double timeout_seconds)
    : command_(std::move(command)), timeout_seconds_(timeout_seconds) {
  if (trim(command_).empty()) throw ValidationError("specialist command is empty");
}

std::string CommandSpecialist::produce(const TaskSpec& task, const std::optional<std::string>& feedback) {
  json in = {{"phase_id", task.phase_id},
             {"description", task.description},
             {"deliverable_contract", task.deliverable_contract},
             {"feedback", feedback ? json(*feedback) : json(nullptr)}};
  auto r = run_shell(command_, command_options(timeout_seconds_, in.dump() + "\n"));
  if (r.spawn_failed) throw Error("specialist could not start: " + r.error);
  if (r.timed_out) throw Error("specialist timed out");
  if (!r.ok()) throw Error(fmt::format("specialist exited with code {}: {}", r.exit_code, trim(r.stderr_text)));
  return r.stdout_text;
}

CommandVerifier::CommandVerifier(std::string command, double timeout_seconds)
    : command_(std::move(command)), timeout_seconds_(timeout_seconds) {
  if (trim(command_).empty()) throw ValidationError("verifier command is empty");
}

Verdict CommandVerifier::verify(const TaskSpec& task, const std::string& deliverable) {
  auto opts = command_options(timeout_seconds_, deliverable);
  opts.extra_env.push_back(fmt::format("HLSFLOW_PHASE_ID={}", task.phase_id));
  auto r = run_shell(command_, opts);
  if (r.spawn_failed) throw Error("verifier could not start: " + r.error);
  if (r.timed_out) throw Error("verifier timed out");
  if (r.term_signal) throw Error(fmt::format("verifier killed by signal {}", r.term_signal));
  if (r.exit_code == 0) return Verdict::accept();
  if (r.exit_code == 1) {
    auto fb = trim(r.stdout_text);
    if (fb.empty()) fb = trim(r.stderr_text);
    if (fb.empty()) fb = "rejected (verifier gave no feedback)";
    return Verdict::reject(fb);
  }
  throw Error(fmt::format("verifier exited with code {}: {}", r.exit_code, trim(r.stderr_text)));
}

} // namespace hlsflow::agentloop
