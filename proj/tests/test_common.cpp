#include <gtest/gtest.h>

#include <chrono>
#include <thread>

#include "hlsflow/common.hpp"
#include "hlsflow/subprocess.hpp"
#include "test_util.hpp"

using namespace hlsflow;

TEST(Common, FormatNumberRoundTrips) {
  for (double v : {0.0, 1.0, 0.1, 2.5e-7, 1234567.125, -3.75, 0.001008}) {
    auto text = format_number(v);
    ASSERT_TRUE(parse_double(text).has_value());
    EXPECT_EQ(*parse_double(text), v) << text;
  }
  EXPECT_EQ(format_number(260), "260");
  EXPECT_EQ(format_number(0.001008), "0.001008");
}

TEST(Common, FormatFixedDisplayRounding) {
  EXPECT_EQ(format_fixed(16.82, 1), "16.8");
  EXPECT_EQ(format_fixed(90.74, 1), "90.7");
  EXPECT_EQ(format_fixed(1.0, 2), "1.00");
}

TEST(Common, ParseRejectsGarbage) {
  EXPECT_FALSE(parse_double("1.5x").has_value());
  EXPECT_FALSE(parse_double("").has_value());
  EXPECT_FALSE(parse_int("2.0").has_value());
  EXPECT_EQ(parse_int("-42"), -42);
}

TEST(Common, Identifiers) {
  EXPECT_TRUE(is_identifier("Calc_t"));
  EXPECT_TRUE(is_identifier("_x1"));
  EXPECT_FALSE(is_identifier("1x"));
  EXPECT_FALSE(is_identifier(""));
  EXPECT_FALSE(is_identifier("a-b"));
}

TEST(Csv, QuotesAndRoundTrip) {
  std::vector<std::string> row = {"plain", "with,comma", "with \"quote\"", "multi\nline", ""};
  auto text = csv::format_row(row);
  EXPECT_EQ(text, "plain,\"with,comma\",\"with \"\"quote\"\"\",\"multi\nline\",\n");
  auto parsed = csv::parse(text);
  ASSERT_EQ(parsed.size(), 1u);
  EXPECT_EQ(parsed[0], row);
}

TEST(Csv, UnterminatedQuoteIsAnError) { EXPECT_THROW(csv::parse("a,\"b\n"), ValidationError); }

TEST(Files, WriteCreatesParentsAndReadsBack) {
  testutil::TempDir dir;
  auto p = dir / "a/b/c.txt";
  write_file(p, "hello\n");
  append_file(p, "world\n");
  EXPECT_EQ(read_file(p), "hello\nworld\n");
  EXPECT_THROW(read_file(dir / "missing"), IoError);
}

TEST(Subprocess, CapturesOutputAndExitCode) {
  auto r = run_shell("echo out; echo err >&2; exit 3");
  EXPECT_EQ(r.exit_code, 3);
  EXPECT_EQ(r.stdout_text, "out\n");
  EXPECT_EQ(r.stderr_text, "err\n");
  EXPECT_FALSE(r.ok());
}

TEST(Subprocess, FeedsStdinAndSetsEnvAndCwd) {
  testutil::TempDir dir;
  ProcessOptions o;
  o.stdin_text = "abc";
  o.extra_env = {"HLSFLOW_X=42"};
  o.cwd = dir.path();
  auto r = run_shell("cat; echo \" $HLSFLOW_X\"; pwd", o);
  ASSERT_TRUE(r.ok()) << r.stderr_text;
  EXPECT_EQ(r.stdout_text, "abc 42\n" + std::filesystem::canonical(dir.path()).string() + "\n");
}

TEST(Subprocess, TimeoutKillsProcessGroup) {
  ProcessOptions o;
  o.timeout = std::chrono::milliseconds(200);
  auto start = std::chrono::steady_clock::now();
  auto r = run_shell("sleep 10 & sleep 10; wait", o);
  auto elapsed = std::chrono::steady_clock::now() - start;
  EXPECT_TRUE(r.timed_out);
  EXPECT_LT(elapsed, std::chrono::seconds(5));
}

TEST(Subprocess, StopTokenCancels) {
  std::stop_source src;
  ProcessOptions o;
  o.stop = src.get_token();
  std::jthread stopper([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    src.request_stop();
  });
  auto r = run_shell("sleep 10", o);
  EXPECT_TRUE(r.cancelled);
}

TEST(Subprocess, SpawnFailureIsReported) {
  auto r = run_process({"/nonexistent/definitely-not-here"});
  EXPECT_TRUE(r.spawn_failed);
  EXPECT_FALSE(r.error.empty());
}
