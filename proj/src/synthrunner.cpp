#include "hlsflow/synthrunner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <ctime>
#include <deque>
#include <future>
#include <mutex>
#include <thread>

#include <fmt/format.h>

#include "hlsflow/subprocess.hpp"
#include "json.hpp"

namespace hlsflow::synthrunner {

using designspace::DesignPoint;
using designspace::DirectiveType;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::pair<JobState, std::string_view> kStateNames[] = {
    {JobState::Pending, "pending"},
    {JobState::Running, "running"},
    {JobState::Succeeded, "succeeded"},
    {JobState::SynthesisFailed, "synthesis_failed"},
    {JobState::TimedOut, "timed_out"},
    {JobState::TransportFailed, "transport_failed"},
};

std::string timestamp_now() {
  auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  localtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", &tm);
  return buf;
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> json_opt(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}

} // namespace

std::string_view to_string(JobState s) {
  for (auto& [state, name] : kStateNames)
    if (state == s) return name;
  return "?";
}

std::optional<JobState> job_state_from_string(std::string_view s) {
  for (auto& [state, name] : kStateNames)
    if (name == s) return state;
  return std::nullopt;
}

bool is_terminal(JobState s) { return s != JobState::Pending && s != JobState::Running; }

std::string job_dir_name(std::uint64_t index) { return fmt::format("dp_{:06d}", index); }

SynthesisOutcome SynthesisOutcome::succeeded(double latency_ms, double area, double synth_seconds, std::string log) {
  SynthesisOutcome o;
  o.success = true;
  o.latency_ms = latency_ms;
  o.area = area;
  o.synth_seconds = synth_seconds;
  o.log_text = std::move(log);
  return o;
}

SynthesisOutcome SynthesisOutcome::failed(std::string reason, double synth_seconds) {
  SynthesisOutcome o;
  o.success = false;
  o.synth_seconds = synth_seconds;
  o.log_text = reason.empty() ? std::string("synthesis failed (no reason reported)") : std::move(reason);
  return o;
}

void ExecutionPlan::validate() const {
  if (pool_size < 1) throw ValidationError("execution plan: pool_size must be >= 1");
  if (!(per_job_timeout_seconds > 0)) throw ValidationError("execution plan: timeout must be > 0");
  if (max_retries < 0) throw ValidationError("execution plan: max_retries must be >= 0");
  if (targets.empty()) throw ValidationError("execution plan: at least one execution target is required");
}

// ---------------------------------------------------------------------------
// Command backend

CommandBackend::CommandBackend(std::vector<std::string> command, std::set<int> transport_exit_codes)
    : command_(std::move(command)), transport_exit_codes_(std::move(transport_exit_codes)) {
  if (command_.empty()) throw ValidationError("command backend: empty command");
}

SynthesisOutcome CommandBackend::parse_output(const std::string& stdout_text, const std::string& stderr_text) {
  std::optional<double> latency, area, synth;
  for (const auto& line : split_lines(stdout_text)) {
    auto t = trim(line);
    auto take = [&](std::string_view key, std::optional<double>& slot) {
      if (t.rfind(key, 0) == 0) slot = parse_double(std::string_view(t).substr(key.size()));
    };
    take("LATENCY_MS=", latency);
    take("AREA=", area);
    take("SYNTH_S=", synth);
  }
  std::string log = stdout_text + stderr_text;
  if (!latency || !area || !synth) {
    std::string missing;
    if (!latency) missing += " LATENCY_MS";
    if (!area) missing += " AREA";
    if (!synth) missing += " SYNTH_S";
    return SynthesisOutcome::failed("backend exited 0 but did not report:" + missing + "\n" + log, synth.value_or(0));
  }
  if (*latency < 0 || *area < 0 || *synth < 0)
    return SynthesisOutcome::failed("backend reported negative metrics\n" + log, std::max(0.0, *synth));
  return SynthesisOutcome::succeeded(*latency, *area, *synth, log);
}

BackendResponse CommandBackend::synthesize(const BackendRequest& request) {
  std::vector<std::string> argv;
  if (request.target) argv = request.target->command_prefix;
  argv.insert(argv.end(), command_.begin(), command_.end());
  argv.push_back(request.directive_path.string());

  ProcessOptions opts;
  opts.stop = request.stop;
  if (request.timeout_seconds > 0)
    opts.timeout = std::chrono::milliseconds(static_cast<long long>(std::ceil(request.timeout_seconds * 1000)));
  auto r = run_process(argv, opts);
  if (r.spawn_failed) return BackendResponse::transport_failure(r.error);
  if (r.timed_out || r.cancelled) return BackendResponse::timed_out();
  if (r.term_signal)
    return BackendResponse::completed(
        SynthesisOutcome::failed(fmt::format("backend killed by signal {}\n{}{}", r.term_signal, r.stdout_text, r.stderr_text)));
  if (transport_exit_codes_.count(r.exit_code))
    return BackendResponse::transport_failure(fmt::format("exit code {}: {}", r.exit_code, trim(r.stderr_text)));
  if (r.exit_code != 0)
    return BackendResponse::completed(SynthesisOutcome::failed(
        fmt::format("synthesis exited with code {}\n{}{}", r.exit_code, r.stdout_text, r.stderr_text)));
  return BackendResponse::completed(parse_output(r.stdout_text, r.stderr_text));
}

// ---------------------------------------------------------------------------
// Mock kernel model

void MockKernelProfile::validate() const {
  if (iterations < 1 || ops_per_iteration < 1) throw ValidationError("mock profile: iterations and ops must be >= 1");
  if (!(base_area > 0) || !(min_clock_ns > 0)) throw ValidationError("mock profile: base_area and min_clock_ns must be > 0");
  std::set<std::string> paths, names;
  for (const auto& a : arrays) {
    if (a.accesses_per_iteration < 1 || !(a.area_per_port > 0))
      throw ValidationError("mock profile: array '" + a.name + "' needs positive K and area_per_port");
    if (!paths.insert(a.path).second) throw ValidationError("mock profile: duplicate array path '" + a.path + "'");
    if (!names.insert(a.name).second) throw ValidationError("mock profile: duplicate array name '" + a.name + "'");
  }
}

MockKernelProfile MockKernelProfile::from_json(std::string_view text) {
  MockKernelProfile p;
  try {
    auto j = json::parse(text);
    p.iterations = j.at("iterations").get<std::int64_t>();
    p.ops_per_iteration = j.at("ops_per_iteration").get<std::int64_t>();
    p.base_area = j.at("base_area").get<double>();
    p.min_clock_ns = j.at("min_clock_ns").get<double>();
    if (j.contains("loop_path")) p.loop_path = j["loop_path"].get<std::string>();
    for (const auto& a : j.value("arrays", json::array())) {
      MockArray arr;
      arr.name = a.at("name").get<std::string>();
      arr.path = a.value("path", arr.name);
      arr.accesses_per_iteration = a.at("accesses_per_iteration").get<std::int64_t>();
      arr.area_per_port = a.at("area_per_port").get<double>();
      p.arrays.push_back(std::move(arr));
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("mock profile: ") + e.what());
  }
  p.validate();
  return p;
}

MockKernelProfile MockKernelProfile::load(const fs::path& path) { return from_json(read_file(path)); }

std::string MockKernelProfile::to_json() const {
  json j;
  j["iterations"] = iterations;
  j["ops_per_iteration"] = ops_per_iteration;
  j["base_area"] = base_area;
  j["min_clock_ns"] = min_clock_ns;
  if (loop_path) j["loop_path"] = *loop_path;
  j["arrays"] = json::array();
  for (const auto& a : arrays)
    j["arrays"].push_back({{"name", a.name}, {"path", a.path}, {"accesses_per_iteration", a.accesses_per_iteration},
                           {"area_per_port", a.area_per_port}});
  return j.dump(2) + "\n";
}

MockKnobs resolve_knobs(const MockKernelProfile& profile, const DesignPoint& point) {
  MockKnobs k;
  k.clock_ns = profile.min_clock_ns;
  bool have_unroll = false, have_ii = false;
  auto models_loop = [&](const designspace::Setting& s) {
    return !profile.loop_path || (s.target_path && *s.target_path == *profile.loop_path);
  };
  for (const auto& s : point.assignment) {
    switch (s.type) {
    case DirectiveType::DesignGoal: k.latency_goal = s.value.text() == "latency"; break;
    case DirectiveType::ClockPeriod: k.clock_ns = s.value.as_number(); break;
    case DirectiveType::Unroll:
      if (!models_loop(s)) break;
      if (have_unroll) throw ValidationError("mock: more than one UNROLL dimension models the loop; set loop_path");
      have_unroll = true;
      k.unroll = designspace::is_skip_value(s.value) ? 1 : s.value.as_integer();
      break;
    case DirectiveType::PipelineII:
      if (!models_loop(s)) break;
      if (have_ii) throw ValidationError("mock: more than one PIPELINE_II dimension models the loop; set loop_path");
      have_ii = true;
      if (designspace::is_skip_value(s.value)) k.initiation_interval.reset();
      else k.initiation_interval = s.value.as_integer();
      break;
    case DirectiveType::Interleave: {
      auto it = std::find_if(profile.arrays.begin(), profile.arrays.end(),
                             [&](const MockArray& a) { return s.target_path && a.path == *s.target_path; });
      if (it == profile.arrays.end())
        throw ValidationError("mock: unknown array path '" + s.target_path.value_or("") + "' in dimension '" +
                              s.dimension_id + "'");
      k.interleave[it->name] = s.value.as_integer();
      break;
    }
    }
  }
  for (const auto& a : profile.arrays) k.interleave.try_emplace(a.name, 1);
  return k;
}

MockEstimate mock_estimate(const MockKernelProfile& profile, const MockKnobs& knobs) {
  MockEstimate e;
  const double u = static_cast<double>(knobs.unroll);
  const double ii_eff = static_cast<double>(knobs.effective_ii());
  e.cycles = static_cast<double>(profile.iterations) / u * ii_eff +
             std::ceil(static_cast<double>(profile.ops_per_iteration) / u);
  if (knobs.latency_goal) e.cycles *= 0.9;
  e.latency_ms = e.cycles * knobs.clock_ns * 1e-6;
  double ports = 0;
  for (const auto& a : profile.arrays) ports += a.area_per_port * static_cast<double>(knobs.interleave.at(a.name));
  const double goal = knobs.latency_goal ? 1.15 : 1.0;
  e.area = goal * (profile.base_area * (1 + 0.8 * (u - 1)) + ports);
  e.synth_seconds = 60 * u * (knobs.initiation_interval ? 2 : 1);
  return e;
}

SynthesisOutcome mock_synthesize(const MockKernelProfile& profile, const DesignPoint& point) {
  auto knobs = resolve_knobs(profile, point);
  auto est = mock_estimate(profile, knobs);
  std::vector<std::string> violations;
  if (knobs.clock_ns < profile.min_clock_ns)
    violations.push_back(fmt::format("clock infeasible: period {} ns < minimum {} ns", format_number(knobs.clock_ns),
                                     format_number(profile.min_clock_ns)));
  for (const auto& a : profile.arrays) {
    auto need = designspace::compute_interleave_requirement(a.accesses_per_iteration, knobs.unroll, knobs.initiation_interval);
    auto have = knobs.interleave.at(a.name);
    if (have < need) violations.push_back(fmt::format("interleave {} < required {} for {}", have, need, a.name));
  }
  if (!violations.empty()) {
    std::string reason;
    for (const auto& v : violations) reason += (reason.empty() ? "" : "; ") + v;
    return SynthesisOutcome::failed(reason, est.synth_seconds);
  }
  auto log = fmt::format("LATENCY_MS={}\nAREA={}\nSYNTH_S={}\n", format_number(est.latency_ms), format_number(est.area),
                         format_number(est.synth_seconds));
  return SynthesisOutcome::succeeded(est.latency_ms, est.area, est.synth_seconds, log);
}

MockBackend::MockBackend(MockKernelProfile profile, designspace::DesignSpaceSpec spec)
    : profile_(std::move(profile)), spec_(std::move(spec)) {
  profile_.validate();
  designspace::validate(spec_);
}

BackendResponse MockBackend::synthesize(const BackendRequest& request) {
  auto total = designspace::space_size(spec_);
  DesignPoint point;
  if (request.point_index < total) point = designspace::point_at(spec_, request.point_index);
  else if (request.point_index == total) point.index = total;  // baseline: default knobs
  else throw ValidationError(fmt::format("mock: point {} outside the design space", request.point_index));
  return BackendResponse::completed(mock_synthesize(profile_, point));
}

// ---------------------------------------------------------------------------
// Runner

std::string RunSummary::to_json() const {
  json j;
  j["total_jobs"] = total_jobs;
  j["counts"] = json::object();
  for (auto& [state, n] : counts) j["counts"][state] = n;
  j["total_attempts"] = total_attempts;
  j["retried_attempts"] = retries.size();
  j["resumed"] = resumed;
  j["wall_seconds"] = wall_seconds;
  j["retries"] = json::array();
  for (const auto& r : retries)
    j["retries"].push_back({{"index", r.point_index}, {"attempt", r.attempt}, {"target", r.target}, {"reason", r.reason}});
  return j.dump(2) + "\n";
}

namespace {

struct JournalRecord {
  JobState state = JobState::Pending;
  std::optional<double> latency_ms, area;
  double synth_seconds = 0;
  int attempts = 0;
  std::string reason;
};

std::map<std::uint64_t, JournalRecord> read_journal(const fs::path& path) {
  std::map<std::uint64_t, JournalRecord> out;
  if (!fs::exists(path)) return out;
  for (const auto& line : split_lines(read_file(path))) {
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception&) {
      continue;  // torn final line from an interrupted write
    }
    JournalRecord r;
    auto state = job_state_from_string(j.value("state", ""));
    if (!state || !is_terminal(*state)) continue;
    r.state = *state;
    r.latency_ms = json_opt(j, "latency_ms");
    r.area = json_opt(j, "area");
    r.synth_seconds = j.value("synth_seconds", 0.0);
    r.attempts = j.value("attempts", 0);
    r.reason = j.value("reason", "");
    out[j.at("index").get<std::uint64_t>()] = r;
  }
  return out;
}

fs::path make_run_dir(const RunOptions& options) {
  if (options.run_dir) return *options.run_dir;
  auto base = options.run_root / timestamp_now();
  auto dir = base;
  for (int n = 1; fs::exists(dir); ++n) dir = fs::path(base.string() + "-" + std::to_string(n));
  return dir;
}

} // namespace

RunResult run_all(const designspace::Manifest& manifest, const fs::path& manifest_dir, const ExecutionPlan& plan,
                  SynthesisBackend& backend, const RunOptions& options) {
  plan.validate();
  auto started = std::chrono::steady_clock::now();

  RunResult result;
  result.run_dir = make_run_dir(options);
  std::error_code ec;
  fs::create_directories(result.run_dir, ec);
  if (ec) throw IoError("cannot create run directory " + result.run_dir.string() + ": " + ec.message());
  const auto journal_path = result.run_dir / "journal.ndjson";
  std::map<std::uint64_t, JournalRecord> previous;
  if (options.resume) previous = read_journal(journal_path);
  append_file(journal_path, "");  // fails early when the run directory is not writable

  std::vector<Job> jobs;
  std::set<std::uint64_t> seen;
  for (const auto& row : manifest.rows) {
    if (!seen.insert(row.index).second) throw ValidationError(fmt::format("manifest has duplicate index {}", row.index));
    Job job;
    job.point_index = row.index;
    job.directive_path = fs::absolute(manifest_dir / row.script_path);
    job.log_path = result.run_dir / job_dir_name(row.index) / "log.txt";
    if (auto it = previous.find(row.index); it != previous.end()) {
      job.state = it->second.state;
      job.attempts = it->second.attempts;
      job.reason = it->second.reason;
      SynthesisOutcome o;
      o.success = job.state == JobState::Succeeded;
      o.latency_ms = it->second.latency_ms;
      o.area = it->second.area;
      o.synth_seconds = it->second.synth_seconds;
      o.log_text = it->second.reason;
      job.outcome = o;
      ++result.summary.resumed;
    }
    jobs.push_back(std::move(job));
  }

  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::size_t> queue;
  std::size_t outstanding = 0;
  std::size_t dispatches = 0;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (is_terminal(jobs[i].state)) continue;
    queue.push_back(i);
    ++outstanding;
  }

  auto finish = [&](Job& job) {
    // caller holds mu
    json rec;
    rec["index"] = job.point_index;
    rec["state"] = std::string(to_string(job.state));
    rec["latency_ms"] = job.outcome ? opt_json(job.outcome->latency_ms) : json(nullptr);
    rec["area"] = job.outcome ? opt_json(job.outcome->area) : json(nullptr);
    rec["synth_seconds"] = job.outcome ? job.outcome->synth_seconds : 0.0;
    rec["attempts"] = job.attempts;
    if (!job.reason.empty()) rec["reason"] = job.reason;
    append_file(journal_path, rec.dump() + "\n");
    --outstanding;
    cv.notify_all();
  };

  auto worker = [&](std::size_t worker_no) {
    for (;;) {
      std::size_t idx;
      const ExecutionTarget* target;
      int attempt;
      {
        std::unique_lock lock(mu);
        cv.wait(lock, [&] { return !queue.empty() || outstanding == 0; });
        if (queue.empty()) return;
        idx = queue.front();
        queue.pop_front();
        target = &plan.targets[dispatches++ % plan.targets.size()];
        Job& job = jobs[idx];
        job.state = JobState::Running;
        attempt = ++job.attempts;
        job.worker_id = fmt::format("w{}@{}", worker_no, target->name);
      }
      Job& job = jobs[idx];

      BackendRequest request;
      request.point_index = job.point_index;
      request.directive_path = job.directive_path;
      request.target = target;
      request.attempt = attempt;
      request.timeout_seconds = plan.per_job_timeout_seconds;

      BackendResponse response;
      {
        std::promise<BackendResponse> promise;
        auto future = promise.get_future();
        std::jthread call([&](std::stop_token st) {
          BackendRequest r = request;
          r.stop = st;
          try {
            promise.set_value(backend.synthesize(r));
          } catch (const std::exception& e) {
            promise.set_value(BackendResponse::transport_failure(std::string("backend error: ") + e.what()));
          }
        });
        auto budget = std::chrono::duration<double>(plan.per_job_timeout_seconds);
        if (future.wait_for(budget) == std::future_status::ready) {
          response = future.get();
        } else {
          call.request_stop();
          response = BackendResponse::timed_out();
        }
      }  // joins the call thread

      std::string log_entry = fmt::format("=== attempt {} on {} ===\n", attempt, target->name);
      switch (response.kind) {
      case BackendResponse::Kind::Completed: log_entry += response.outcome.log_text; break;
      case BackendResponse::Kind::TimedOut:
        log_entry += fmt::format("timed out after {} s\n", format_number(plan.per_job_timeout_seconds));
        break;
      case BackendResponse::Kind::TransportFailure: log_entry += "transport failure: " + response.transport_reason; break;
      }
      if (!log_entry.empty() && log_entry.back() != '\n') log_entry += '\n';
      fs::create_directories(job.log_path.parent_path());
      append_file(job.log_path, log_entry);

      std::lock_guard lock(mu);
      switch (response.kind) {
      case BackendResponse::Kind::Completed: {
        auto outcome = response.outcome;
        if (outcome.success && (!outcome.latency_ms || !outcome.area))
          outcome = SynthesisOutcome::failed("backend reported success without latency/area", outcome.synth_seconds);
        if (!outcome.success && outcome.log_text.empty()) outcome.log_text = "synthesis failed (no reason reported)";
        job.state = outcome.success ? JobState::Succeeded : JobState::SynthesisFailed;
        job.reason = outcome.success ? std::string() : trim(outcome.log_text);
        job.outcome = outcome;
        finish(job);
        break;
      }
      case BackendResponse::Kind::TimedOut:
        job.state = JobState::TimedOut;
        job.reason = "timed out";
        job.outcome = SynthesisOutcome::failed("timed out", plan.per_job_timeout_seconds);
        finish(job);
        break;
      case BackendResponse::Kind::TransportFailure:
        if (attempt <= plan.max_retries) {
          result.summary.retries.push_back({job.point_index, attempt, target->name, response.transport_reason});
          job.state = JobState::Pending;
          queue.push_back(idx);
          cv.notify_all();
        } else {
          job.state = JobState::TransportFailed;
          job.reason = response.transport_reason;
          job.outcome = SynthesisOutcome::failed("transport failure: " + response.transport_reason);
          finish(job);
        }
        break;
      }
    }
  };

  {
    std::vector<std::jthread> pool;
    std::size_t n = std::min(plan.pool_size, std::max<std::size_t>(outstanding, 1));
    for (std::size_t w = 0; w < n; ++w) pool.emplace_back(worker, w);
  }

  result.manifest = manifest;
  for (auto& row : result.manifest.rows) {
    auto it = std::find_if(jobs.begin(), jobs.end(), [&](const Job& j) { return j.point_index == row.index; });
    designspace::ManifestResult res;
    res.status = std::string(to_string(it->state));
    if (it->outcome) {
      if (it->state == JobState::Succeeded) {
        res.latency_ms = it->outcome->latency_ms;
        res.area = it->outcome->area;
      }
      res.synth_seconds = it->outcome->synth_seconds;
    }
    row.result = res;
  }
  std::sort(result.manifest.rows.begin(), result.manifest.rows.end(),
            [](const auto& a, const auto& b) { return a.index < b.index; });
  std::sort(jobs.begin(), jobs.end(), [](const Job& a, const Job& b) { return a.point_index < b.point_index; });

  result.summary.total_jobs = jobs.size();
  for (const auto& job : jobs) {
    ++result.summary.counts[std::string(to_string(job.state))];
    result.summary.total_attempts += static_cast<std::size_t>(job.attempts);
  }
  std::sort(result.summary.retries.begin(), result.summary.retries.end(),
            [](const RetryEvent& a, const RetryEvent& b) {
              return std::tie(a.point_index, a.attempt) < std::tie(b.point_index, b.attempt);
            });
  result.summary.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  result.jobs = std::move(jobs);
  write_file(result.run_dir / "summary.json", result.summary.to_json());
  return result;
}

LogCollection collect_logs(const fs::path& run_dir) {
  std::error_code ec;
  if (!fs::is_directory(run_dir, ec)) throw IoError("run directory " + run_dir.string() + " is not readable");
  std::set<std::uint64_t> expected;
  for (const auto& entry : fs::directory_iterator(run_dir, ec)) {
    auto name = entry.path().filename().string();
    if (!entry.is_directory() || name.rfind("dp_", 0) != 0) continue;
    if (auto idx = parse_int(name.substr(3)); idx && *idx >= 0) expected.insert(static_cast<std::uint64_t>(*idx));
  }
  if (ec) throw IoError("cannot list " + run_dir.string() + ": " + ec.message());
  for (auto& [idx, rec] : read_journal(run_dir / "journal.ndjson")) expected.insert(idx);

  LogCollection out;
  for (auto idx : expected) {
    auto path = run_dir / job_dir_name(idx) / "log.txt";
    if (fs::is_regular_file(path)) out.logs.emplace_back(idx, read_file(path));
    else out.missing.push_back(idx);
  }
  return out;
}

} // namespace hlsflow::synthrunner
