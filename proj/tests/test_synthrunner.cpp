#include <gtest/gtest.h>

#include <map>
#include <mutex>
#include <set>

#include "hlsflow/synthrunner.hpp"
#include "test_util.hpp"

using namespace hlsflow;
using namespace hlsflow::synthrunner;
using designspace::DesignSpaceSpec;

namespace {

MockKernelProfile example_profile() {
  MockKernelProfile p;
  p.iterations = 1000;
  p.ops_per_iteration = 8;
  p.base_area = 100;
  p.min_clock_ns = 2.0;
  p.arrays = {MockArray{"x", "/k/x", 4, 10}};
  return p;
}

DesignSpaceSpec single_point_spec(const std::string& goal, const std::string& clock, const std::string& unroll,
                                  const std::string& ii, const std::string& interleave) {
  return designspace::parse_spec("kernel_name: k\nbase_hls_tcl_file: b.tcl\ndimensions:\n"
                                 "  - id: goal\n    type: DESIGN_GOAL\n    values: [" + goal + "]\n"
                                 "  - id: clk\n    type: CLOCK_PERIOD\n    values: [" + clock + "]\n"
                                 "  - id: u\n    type: UNROLL\n    target_hls_path: /k/L\n    values: [" + unroll + "]\n"
                                 "  - id: ii\n    type: PIPELINE_II\n    target_hls_path: /k/L\n    values: [" + ii + "]\n"
                                 "  - id: il\n    type: INTERLEAVE\n    target_hls_path: /k/x\n    values: [" + interleave + "]\n");
}

RunOptions under(const std::filesystem::path& run_root) {
  RunOptions o;
  o.run_root = run_root;
  return o;
}

designspace::Manifest bare_manifest(std::size_t n) {
  designspace::Manifest m;
  for (std::size_t i = 0; i < n; ++i) {
    designspace::ManifestRow row;
    row.index = i;
    row.script_path = designspace::script_name(i);
    m.rows.push_back(row);
  }
  return m;
}

// Scripted faults: transport failures on chosen (index, attempt) pairs and
// permanent synthesis failures on chosen indices.
class ScriptedBackend : public SynthesisBackend {
public:
  std::set<std::pair<std::uint64_t, int>> transport_faults;
  std::set<std::uint64_t> synthesis_failures;
  std::map<std::uint64_t, int> calls;

  BackendResponse synthesize(const BackendRequest& r) override {
    {
      std::lock_guard lock(mu_);
      ++calls[r.point_index];
    }
    if (transport_faults.count({r.point_index, r.attempt})) return BackendResponse::transport_failure("ssh: reset");
    if (synthesis_failures.count(r.point_index))
      return BackendResponse::completed(SynthesisOutcome::failed("error: resource conflict"));
    return BackendResponse::completed(
        SynthesisOutcome::succeeded(1.0 + static_cast<double>(r.point_index), 10.0, 1.0, "ok"));
  }

private:
  std::mutex mu_;
};

} // namespace

TEST(MockModel, FeasibleHandEvaluation) {
  auto spec = single_point_spec("area", "2.0", "2", "1", "8");
  auto out = mock_synthesize(example_profile(), designspace::point_at(spec, 0));
  ASSERT_TRUE(out.success) << out.log_text;
  auto knobs = resolve_knobs(example_profile(), designspace::point_at(spec, 0));
  auto est = mock_estimate(example_profile(), knobs);
  EXPECT_DOUBLE_EQ(est.cycles, 504);
  EXPECT_NEAR(*out.latency_ms, 0.001008, 1e-15);
  EXPECT_DOUBLE_EQ(*out.area, 260);
  EXPECT_DOUBLE_EQ(out.synth_seconds, 240);
}

TEST(MockModel, InterleaveBelowRequirementFails) {
  auto spec = single_point_spec("area", "2.0", "no", "1", "3");
  auto out = mock_synthesize(example_profile(), designspace::point_at(spec, 0));
  EXPECT_FALSE(out.success);
  EXPECT_NE(out.log_text.find("interleave 3 < required 4 for x"), std::string::npos) << out.log_text;
}

TEST(MockModel, ClockBelowMinimumFails) {
  auto spec = single_point_spec("area", "1.0", "2", "1", "8");
  auto out = mock_synthesize(example_profile(), designspace::point_at(spec, 0));
  EXPECT_FALSE(out.success);
  EXPECT_NE(out.log_text.find("clock infeasible"), std::string::npos) << out.log_text;
}

TEST(MockModel, LatencyGoalScaling) {
  auto spec = single_point_spec("latency", "2.0", "2", "1", "8");
  auto out = mock_synthesize(example_profile(), designspace::point_at(spec, 0));
  ASSERT_TRUE(out.success);
  EXPECT_NEAR(*out.latency_ms, 504 * 0.9 * 2.0 * 1e-6, 1e-15);
  EXPECT_NEAR(*out.area, 260 * 1.15, 1e-9);
}

TEST(MockModel, PureFunction) {
  auto spec = single_point_spec("area", "3.0", "4", "none", "4");
  auto a = mock_synthesize(example_profile(), designspace::point_at(spec, 0));
  auto b = mock_synthesize(example_profile(), designspace::point_at(spec, 0));
  EXPECT_EQ(a.success, b.success);
  EXPECT_EQ(a.latency_ms, b.latency_ms);
  EXPECT_EQ(a.area, b.area);
  EXPECT_EQ(a.log_text, b.log_text);
}

TEST(MockModel, UnrollMonotonicity) {
  auto profile = example_profile();
  for (std::optional<std::int64_t> ii : {std::optional<std::int64_t>{}, std::optional<std::int64_t>{1},
                                         std::optional<std::int64_t>{2}}) {
    for (bool goal : {false, true}) {
      double prev_cycles = 1e300, prev_area = -1;
      for (std::int64_t u : {1, 2, 4, 8, 16}) {
        MockKnobs k;
        k.latency_goal = goal;
        k.clock_ns = 2.0;
        k.unroll = u;
        k.initiation_interval = ii;
        k.interleave = {{"x", 4}};
        auto e = mock_estimate(profile, k);
        EXPECT_LE(e.cycles, prev_cycles);
        EXPECT_GE(e.area, prev_area);
        prev_cycles = e.cycles;
        prev_area = e.area;
      }
    }
  }
}

TEST(MockModel, UnknownInterleavePathIsAnError) {
  auto spec = designspace::parse_spec("kernel_name: k\nbase_hls_tcl_file: b\ndimensions:\n"
                                      "  - id: il\n    type: INTERLEAVE\n    target_hls_path: /k/nope\n    values: [2]\n");
  EXPECT_THROW(mock_synthesize(example_profile(), designspace::point_at(spec, 0)), ValidationError);
}

TEST(MockProfile, JsonRoundTrip) {
  auto p = example_profile();
  auto q = MockKernelProfile::from_json(p.to_json());
  EXPECT_EQ(q.iterations, p.iterations);
  EXPECT_EQ(q.arrays.size(), 1u);
  EXPECT_EQ(q.arrays[0].path, "/k/x");
  EXPECT_THROW(MockKernelProfile::from_json(R"({"iterations": 0})"), ValidationError);
}

TEST(CommandBackend, ParsesMetrics) {
  auto o = CommandBackend::parse_output("info\nLATENCY_MS=1.5\nAREA=200\nSYNTH_S=30\n", "");
  ASSERT_TRUE(o.success);
  EXPECT_EQ(*o.latency_ms, 1.5);
  EXPECT_EQ(*o.area, 200);
  EXPECT_EQ(o.synth_seconds, 30);
  EXPECT_FALSE(CommandBackend::parse_output("AREA=1\n", "").success);
}

TEST(RunAll, SingleJobSucceeds) {
  testutil::TempDir dir;
  ScriptedBackend backend;
  ExecutionPlan plan;
  auto res = run_all(bare_manifest(1), dir.path(), plan, backend, under(dir / "run"));
  ASSERT_EQ(res.jobs.size(), 1u);
  EXPECT_EQ(res.jobs[0].state, JobState::Succeeded);
  ASSERT_TRUE(res.manifest.rows[0].result);
  EXPECT_EQ(res.manifest.rows[0].result->status, "succeeded");
  EXPECT_TRUE(std::filesystem::exists(res.run_dir / "summary.json"));
  EXPECT_TRUE(std::filesystem::exists(res.run_dir / "journal.ndjson"));
  EXPECT_TRUE(std::filesystem::exists(res.run_dir / "dp_000000" / "log.txt"));
}

TEST(RunAll, TimeoutMarksJobTimedOut) {
  testutil::TempDir dir;
  CommandBackend backend({"sh", "-c", "sleep 10"});
  ExecutionPlan plan;
  plan.per_job_timeout_seconds = 1;
  auto start = std::chrono::steady_clock::now();
  auto res = run_all(bare_manifest(1), dir.path(), plan, backend, under(dir / "run"));
  EXPECT_LT(std::chrono::steady_clock::now() - start, std::chrono::seconds(8));
  EXPECT_EQ(res.jobs[0].state, JobState::TimedOut);
  EXPECT_EQ(res.jobs[0].attempts, 1);
}

TEST(RunAll, TransientTransportFaultsAreRetried) {
  testutil::TempDir dir;
  ScriptedBackend backend;
  for (std::uint64_t i : {3, 17, 42, 64, 99}) backend.transport_faults.insert({i, 1});
  ExecutionPlan plan;
  plan.pool_size = 8;
  plan.max_retries = 2;
  auto res = run_all(bare_manifest(100), dir.path(), plan, backend, under(dir / "run"));
  ASSERT_EQ(res.jobs.size(), 100u);
  std::set<std::uint64_t> indices;
  for (const auto& j : res.jobs) {
    EXPECT_TRUE(is_terminal(j.state));
    indices.insert(j.point_index);
    EXPECT_EQ(j.state, JobState::Succeeded);
  }
  EXPECT_EQ(indices.size(), 100u);
  EXPECT_GE(res.summary.retries.size(), 5u);
  for (const auto& r : res.summary.retries) EXPECT_TRUE(backend.transport_faults.count({r.point_index, r.attempt}));
  EXPECT_EQ(res.manifest.rows.size(), 100u);
  for (std::size_t i = 0; i < res.manifest.rows.size(); ++i) EXPECT_EQ(res.manifest.rows[i].index, i);
}

TEST(RunAll, ExhaustedRetriesEndTransportFailed) {
  testutil::TempDir dir;
  ScriptedBackend backend;
  for (int a = 1; a <= 3; ++a) backend.transport_faults.insert({0, a});
  ExecutionPlan plan;
  plan.max_retries = 2;
  auto res = run_all(bare_manifest(1), dir.path(), plan, backend, under(dir / "run"));
  EXPECT_EQ(res.jobs[0].state, JobState::TransportFailed);
  EXPECT_EQ(res.jobs[0].attempts, 3);
  EXPECT_EQ(res.summary.retries.size(), 2u);
}

TEST(RunAll, SynthesisFailuresAreNeverRetried) {
  testutil::TempDir dir;
  ScriptedBackend backend;
  backend.synthesis_failures = {1, 2};
  ExecutionPlan plan;
  plan.pool_size = 3;
  auto res = run_all(bare_manifest(4), dir.path(), plan, backend, under(dir / "run"));
  EXPECT_EQ(res.jobs[1].state, JobState::SynthesisFailed);
  EXPECT_EQ(res.jobs[1].attempts, 1);
  EXPECT_EQ(backend.calls[1], 1);
  EXPECT_TRUE(res.summary.retries.empty());
  EXPECT_NE(res.jobs[2].reason.find("resource conflict"), std::string::npos);
}

TEST(RunAll, TransportExitCodeFromCommand) {
  testutil::TempDir dir;
  CommandBackend backend({"sh", "-c", "exit 255"});
  ExecutionPlan plan;
  plan.max_retries = 1;
  auto res = run_all(bare_manifest(1), dir.path(), plan, backend, under(dir / "run"));
  EXPECT_EQ(res.jobs[0].state, JobState::TransportFailed);
  EXPECT_EQ(res.jobs[0].attempts, 2);
}

TEST(RunAll, CommandBackendWithPrefixTargets) {
  testutil::TempDir dir;
  CommandBackend backend({"sh", "-c", "echo LATENCY_MS=2; echo AREA=3; echo SYNTH_S=1"});
  ExecutionPlan plan;
  plan.pool_size = 2;
  plan.targets = {ExecutionTarget{"hostA", {"env", "HOST=A"}}, ExecutionTarget{"hostB", {"env", "HOST=B"}}};
  auto res = run_all(bare_manifest(4), dir.path(), plan, backend, under(dir / "run"));
  std::set<std::string> targets;
  for (const auto& j : res.jobs) {
    EXPECT_EQ(j.state, JobState::Succeeded) << j.reason;
    ASSERT_TRUE(j.worker_id);
    targets.insert(j.worker_id->substr(j.worker_id->find('@') + 1));
  }
  EXPECT_EQ(targets, (std::set<std::string>{"hostA", "hostB"}));
}

TEST(RunAll, PoolSizeDoesNotChangeResults) {
  testutil::TempDir dir;
  write_file(dir / "b.tcl", "");
  auto spec = designspace::parse_spec("kernel_name: k\nbase_hls_tcl_file: b.tcl\ndimensions:\n"
                                      "  - id: goal\n    type: DESIGN_GOAL\n    values: [area, latency]\n"
                                      "  - id: clk\n    type: CLOCK_PERIOD\n    values: [1.0, 2.0, 4.0]\n"
                                      "  - id: u\n    type: UNROLL\n    target_hls_path: /k/L\n    values: [no, 2, 4]\n"
                                      "  - id: il\n    type: INTERLEAVE\n    target_hls_path: /k/x\n    values: [1, 4, 8]\n");
  auto manifest = designspace::emit_directives(spec, designspace::expand(spec), dir / "dse",
                                               designspace::DirectiveTemplates::defaults(), {false, dir.path()});
  MockBackend backend(example_profile(), spec);
  ExecutionPlan p1, p8;
  p8.pool_size = 8;
  auto a = run_all(manifest, dir / "dse", p1, backend, under(dir / "run"));
  auto b = run_all(manifest, dir / "dse", p8, backend, under(dir / "run"));
  EXPECT_NE(a.run_dir, b.run_dir);
  EXPECT_EQ(a.manifest.to_csv(), b.manifest.to_csv());
  EXPECT_TRUE(a.manifest.has_results());
}

TEST(RunAll, ResumeReusesTerminalRecords) {
  testutil::TempDir dir;
  ScriptedBackend first;
  first.synthesis_failures = {2};
  ExecutionPlan plan;
  RunOptions opts{dir / "run", dir / "run/fixed", false};
  auto a = run_all(bare_manifest(5), dir.path(), plan, first, opts);

  // Simulate an interrupted run: keep only the first two journal records plus a torn line.
  auto lines = split_lines(read_file(dir / "run/fixed/journal.ndjson"));
  std::string kept;
  std::set<std::uint64_t> kept_indices;
  for (const auto& l : lines) {
    if (l.empty() || kept_indices.size() == 2) continue;
    kept += l + "\n";
    auto at = l.find("\"index\":");
    kept_indices.insert(static_cast<std::uint64_t>(std::stoull(l.substr(at + 8))));
  }
  write_file(dir / "run/fixed/journal.ndjson", kept + "{\"index\": 4, \"sta");

  ScriptedBackend second;
  second.synthesis_failures = {2};
  opts.resume = true;
  auto b = run_all(bare_manifest(5), dir.path(), plan, second, opts);
  EXPECT_EQ(b.summary.resumed, 2u);
  for (auto i : kept_indices) EXPECT_EQ(second.calls.count(i), 0u);
  EXPECT_EQ(a.manifest.to_csv(), b.manifest.to_csv());
}

TEST(RunAll, InvalidPlanRejected) {
  testutil::TempDir dir;
  ScriptedBackend backend;
  ExecutionPlan plan;
  plan.pool_size = 0;
  EXPECT_THROW(run_all(bare_manifest(1), dir.path(), plan, backend, under(dir / "run")), ValidationError);
  plan.pool_size = 1;
  plan.per_job_timeout_seconds = 0;
  EXPECT_THROW(run_all(bare_manifest(1), dir.path(), plan, backend, under(dir / "run")), ValidationError);
}

TEST(CollectLogs, CountsAndMissing) {
  testutil::TempDir dir;
  ScriptedBackend backend;
  ExecutionPlan plan;
  auto res = run_all(bare_manifest(3), dir.path(), plan, backend, under(dir / "run"));
  auto logs = collect_logs(res.run_dir);
  EXPECT_EQ(logs.logs.size(), 3u);
  EXPECT_TRUE(logs.missing.empty());
  std::filesystem::remove(res.run_dir / "dp_000001" / "log.txt");
  logs = collect_logs(res.run_dir);
  EXPECT_EQ(logs.logs.size(), 2u);
  EXPECT_EQ(logs.missing, (std::vector<std::uint64_t>{1}));
  std::filesystem::create_directories(dir / "empty");
  auto none = collect_logs(dir / "empty");
  EXPECT_TRUE(none.logs.empty());
  EXPECT_TRUE(none.missing.empty());
}
