// End-to-end tests of the hlsflow executable.

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "hlsflow/designspace.hpp"
#include "hlsflow/paretolab.hpp"
#include "hlsflow/refactor.hpp"
#include "hlsflow/subprocess.hpp"
#include "json.hpp"
#include "test_util.hpp"

using namespace hlsflow;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

ProcessResult cli(std::vector<std::string> args, ProcessOptions opts = {}) {
  args.insert(args.begin(), HLSFLOW_CLI_PATH);
  if (!opts.timeout) opts.timeout = std::chrono::seconds(120);
  return run_process(args, opts);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

fs::path dse_dir() { return testutil::data_dir() / "data" / "dse"; }

// Copies the DSE fixture so that generated files stay inside the temp dir.
fs::path stage_dse(const testutil::TempDir& tmp) {
  for (const char* f : {"kernel.yaml", "base.tcl", "profile.json"})
    fs::copy_file(dse_dir() / f, tmp / f);
  return tmp / "kernel.yaml";
}

} // namespace

TEST(Cli, HelpExitsZeroEverywhere) {
  std::vector<std::vector<std::string>> cmds = {
      {}, {"dse"}, {"dse", "gen"}, {"dse", "run"}, {"dse", "pareto"}, {"dse", "report"},
      {"numerics", "search"}, {"trials", "run"}, {"trials", "analyze"}, {"loop", "run"}, {"loop", "metrics"},
      {"refactor", "static-mem"}, {"refactor", "literal-cast"}, {"refactor", "label-loops"},
      {"codeql", "emit"}, {"rag", "index"}, {"rag", "query"}, {"pipeline", "run"}};
  for (auto c : cmds) {
    c.push_back("--help");
    auto r = cli(c);
    EXPECT_EQ(r.exit_code, 0) << c.front();
    EXPECT_NE(r.stdout_text.find("Usage"), std::string::npos);
  }
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(cli({"frobnicate"}).exit_code, 2);
  EXPECT_EQ(cli({}).exit_code, 2);
  EXPECT_EQ(cli({"dse", "gen"}).exit_code, 2);
  auto r = cli({"codeql", "emit", "--function", "f"});
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE((r.stdout_text + r.stderr_text).find("--file"), std::string::npos);
}

TEST(Cli, DseGenWritesOneRowPerPoint) {
  testutil::TempDir tmp;
  auto spec = stage_dse(tmp);
  auto r = cli({"dse", "gen", spec.string(), "-o", (tmp / "d").string()});
  ASSERT_EQ(r.exit_code, 0) << r.stderr_text;
  auto m = designspace::Manifest::load(tmp / "d" / "manifest.csv");
  EXPECT_EQ(m.rows.size(), 288u);
  EXPECT_TRUE(fs::exists(tmp / "d" / designspace::script_name(0)));
  EXPECT_TRUE(fs::exists(tmp / "d" / designspace::script_name(287)));

  auto rb = cli({"dse", "gen", spec.string(), "-o", (tmp / "b").string(), "--include-baseline"});
  ASSERT_EQ(rb.exit_code, 0) << rb.stderr_text;
  EXPECT_EQ(designspace::Manifest::load(tmp / "b" / "manifest.csv").rows.size(), 289u);
}

TEST(Cli, DseRunMockNeedsProfile) {
  testutil::TempDir tmp;
  auto spec = stage_dse(tmp);
  ASSERT_EQ(cli({"dse", "gen", spec.string(), "-o", (tmp / "d").string()}).exit_code, 0);
  auto r = cli({"dse", "run", (tmp / "d" / "manifest.csv").string(), "--run-dir", (tmp / "run").string()});
  EXPECT_EQ(r.exit_code, 2);
}

TEST(Cli, DseRunReportAndParetoMatchLibrary) {
  testutil::TempDir tmp;
  auto spec = stage_dse(tmp);
  ASSERT_EQ(cli({"dse", "gen", spec.string(), "-o", (tmp / "d").string()}).exit_code, 0);
  auto run = cli({"dse", "run", (tmp / "d" / "manifest.csv").string(), "--profile", (tmp / "profile.json").string(),
                  "--spec", spec.string(), "--run-dir", (tmp / "run").string(), "-j", "4"});
  ASSERT_EQ(run.exit_code, 0) << run.stderr_text;
  auto results = tmp / "run" / "manifest.csv";
  ASSERT_TRUE(fs::exists(results));

  auto m = designspace::Manifest::load(results);
  auto records = paretolab::records_from_manifest(m);
  auto front = paretolab::pareto_front(records);
  for (auto [flag, fmt] : {std::pair{"text-table", paretolab::ReportFormat::TextTable},
                           std::pair{"csv", paretolab::ReportFormat::Csv},
                           std::pair{"plot-data", paretolab::ReportFormat::PlotData}}) {
    auto r = cli({"dse", "report", results.string(), "--format", flag, "--kernel", "torsion"});
    ASSERT_EQ(r.exit_code, 0) << r.stderr_text;
    EXPECT_EQ(r.stdout_text, paretolab::emit_report(records, front, fmt, "torsion")) << flag;
  }

  auto p = cli({"dse", "pareto", results.string(), "-o", (tmp / "front.csv").string()});
  ASSERT_EQ(p.exit_code, 0) << p.stderr_text;
  auto text = slurp(tmp / "front.csv");
  std::size_t lines = 0;
  for (char c : text) lines += c == '\n';
  EXPECT_EQ(lines, front.indices.size() + 1);
}

TEST(Cli, PipelineWritesReportJson) {
  testutil::TempDir tmp;
  auto spec = stage_dse(tmp);
  auto out = tmp / "pipe";
  auto r = cli({"pipeline", "run", spec.string(), "-o", out.string(), "--profile", (tmp / "profile.json").string(),
                "-j", "2"});
  ASSERT_EQ(r.exit_code, 0) << r.stderr_text;
  auto j = json::parse(slurp(out / "pipeline_report.json"));
  EXPECT_EQ(j.at("kernel"), "torsion");
  EXPECT_EQ(j.at("directives").at("count"), 288);
  for (const char* key : {"text_table", "csv", "plot_data"})
    EXPECT_TRUE(fs::exists(out / j.at("reports").at(key).get<std::string>())) << key;
  EXPECT_TRUE(fs::exists(out / j.at("results_manifest").get<std::string>()));

  auto m = designspace::Manifest::load(out / j.at("results_manifest").get<std::string>());
  auto front = paretolab::pareto_front(paretolab::records_from_manifest(m));
  std::vector<std::uint64_t> indices;
  for (const auto& i : j.at("pareto").at("indices")) indices.push_back(i.get<std::uint64_t>());
  EXPECT_EQ(indices, front.indices);
}

TEST(Cli, CodeqlEmitMatchesFixture) {
  auto r = cli({"codeql", "emit", "--function", "Torsion_Angles", "--file", "reaxff_torsion_angles.cpp"});
  ASSERT_EQ(r.exit_code, 0) << r.stderr_text;
  EXPECT_EQ(r.stdout_text, slurp(testutil::data_dir() / "data" / "codeql" / "torsion_angles.ql"));
}

TEST(Cli, ConfigRejectsUnknownKeys) {
  testutil::TempDir tmp;
  spit(tmp / "bad.yaml", "execution:\n  pool_sise: 4\n");
  auto r = cli({"--config", (tmp / "bad.yaml").string(), "codeql", "emit", "--function", "f", "--file", "f.cpp"});
  EXPECT_NE(r.exit_code, 0);
  EXPECT_NE(r.stderr_text.find("pool_sise"), std::string::npos);

  spit(tmp / "good.yaml", "execution:\n  pool_size: 4\nretrieval:\n  k: 10\n  m: 3\n");
  EXPECT_EQ(cli({"--config", (tmp / "good.yaml").string(), "codeql", "emit", "--function", "f", "--file", "f.cpp"})
                .exit_code,
            0);
}

TEST(Cli, RefactorDiffAndWrite) {
  testutil::TempDir tmp;
  auto src = testutil::data_dir() / "golden" / "refactor" / "label_loops_nested_four";
  fs::copy_file(src / "input.cpp", tmp / "k.cpp");
  auto original = slurp(tmp / "k.cpp");

  auto d = cli({"refactor", "label-loops", (tmp / "k.cpp").string(), "--kernel", "compute"});
  ASSERT_EQ(d.exit_code, 0) << d.stderr_text;
  EXPECT_NE(d.stdout_text.find("@@"), std::string::npos);
  EXPECT_EQ(slurp(tmp / "k.cpp"), original);

  auto w = cli({"refactor", "label-loops", (tmp / "k.cpp").string(), "--kernel", "compute", "--write"});
  ASSERT_EQ(w.exit_code, 0) << w.stderr_text;
  EXPECT_EQ(slurp(tmp / "k.cpp"), slurp(src / "expected.cpp"));

  auto again = cli({"refactor", "label-loops", (tmp / "k.cpp").string(), "--kernel", "compute"});
  EXPECT_EQ(again.exit_code, 0);
  EXPECT_EQ(again.stdout_text, "");
}

TEST(Cli, RefactorStaticMemUsesSizeMap) {
  testutil::TempDir tmp;
  auto src = testutil::data_dir() / "golden" / "refactor" / "static_mem_global_double";
  fs::copy_file(src / "input.cpp", tmp / "k.cpp");
  spit(tmp / "sizes.json", json::parse(slurp(src / "args.json")).at("sizes").dump());
  auto w = cli({"refactor", "static-mem", (tmp / "k.cpp").string(), "--sizes", (tmp / "sizes.json").string(),
                "--write"});
  ASSERT_EQ(w.exit_code, 0) << w.stderr_text;
  EXPECT_EQ(slurp(tmp / "k.cpp"), slurp(src / "expected.cpp"));
}

TEST(Cli, RagIndexThenQuery) {
  testutil::TempDir tmp;
  spit(tmp / "docs" / "pipe.txt", "Use the pipeline directive with an initiation interval of one.");
  spit(tmp / "docs" / "mem.txt", "Interleave the array across banks to add memory ports.");
  spit(tmp / "docs" / "clk.txt", "A shorter clock period raises timing pressure on the datapath.");
  auto idx = tmp / "idx";
  auto r = cli({"rag", "index", (tmp / "docs").string(), "--index-dir", idx.string()});
  ASSERT_EQ(r.exit_code, 0) << r.stderr_text;

  auto q = cli({"rag", "query", "Interleave the array across banks to add memory ports.", "--index-dir",
                idx.string(), "-k", "3", "-m", "2", "--json"});
  ASSERT_EQ(q.exit_code, 0) << q.stderr_text;
  auto first = json::parse(q.stdout_text.substr(0, q.stdout_text.find('\n')));
  EXPECT_EQ(first.at("doc_id"), "mem.txt");
  std::size_t lines = 0;
  for (char c : q.stdout_text) lines += c == '\n';
  EXPECT_EQ(lines, 2u);
}

TEST(Cli, TrialsStopReasonsMapToExitCodes) {
  testutil::TempDir tmp;
  auto ok = cli({"trials", "run", "--compile", "true", "--execute", "true", "--synthesize", "true", "--work-dir",
                 (tmp / "ok").string()});
  EXPECT_EQ(ok.exit_code, 0) << ok.stderr_text;
  EXPECT_NE(ok.stdout_text.find("stop: success"), std::string::npos);

  auto bad = cli({"trials", "run", "--compile", "false", "--execute", "true", "--synthesize", "true", "--work-dir",
                  (tmp / "bad").string()});
  EXPECT_EQ(bad.exit_code, 3);
  EXPECT_NE(bad.stdout_text.find("stop: futility"), std::string::npos);

  auto an = cli({"trials", "analyze", "ok=" + (tmp / "ok" / "ledger.ndjson").string(),
                 "bad=" + (tmp / "bad" / "ledger.ndjson").string()});
  ASSERT_EQ(an.exit_code, 0) << an.stderr_text;
  EXPECT_NE(an.stdout_text.find("96.9"), std::string::npos);
  EXPECT_NE(an.stdout_text.find("3.1"), std::string::npos);
}

TEST(Cli, LoopRunAndMetrics) {
  testutil::TempDir tmp;
  spit(tmp / "tasks.json", R"([{"phase_id":0,"description":"profile"},{"phase_id":1,"description":"refactor"}])");
  // Verifier rejects the first attempt of each phase, accepts once feedback is echoed back.
  auto r = cli({"loop", "run", (tmp / "tasks.json").string(), "--specialist",
                "grep -q '\"feedback\":null' && echo draft || echo revised", "--verifier",
                "grep -q revised || { echo needs work; exit 1; }", "--trace", (tmp / "t.ndjson").string()});
  ASSERT_EQ(r.exit_code, 0) << r.stderr_text;
  auto m = cli({"loop", "metrics", (tmp / "t.ndjson").string(), "--json"});
  ASSERT_EQ(m.exit_code, 0) << m.stderr_text;
  EXPECT_NE(m.stdout_text.find("\"phase_id\""), std::string::npos);
}
