#pragma once
// Child-process execution with captured output, stdin feeding, wall-clock
// timeout and cooperative cancellation. POSIX only.

#include <chrono>
#include <filesystem>
#include <optional>
#include <stop_token>
#include <string>
#include <vector>

namespace hlsflow {

struct ProcessResult {
  int exit_code = -1;       // valid when !spawn_failed && !timed_out && !cancelled
  int term_signal = 0;      // nonzero when the child died from a signal
  bool spawn_failed = false;
  bool timed_out = false;
  bool cancelled = false;
  std::string stdout_text;
  std::string stderr_text;
  std::string error;        // spawn failure description
  double wall_seconds = 0;

  bool ok() const { return !spawn_failed && !timed_out && !cancelled && term_signal == 0 && exit_code == 0; }
};

struct ProcessOptions {
  std::string stdin_text;
  std::optional<std::filesystem::path> cwd;
  std::optional<std::chrono::milliseconds> timeout;
  std::vector<std::string> extra_env;  // "KEY=VALUE"
  std::stop_token stop;
};

// Runs argv[0] (PATH lookup) with the remaining arguments. The child is placed
// in its own process group; on timeout or stop request the whole group is killed.
ProcessResult run_process(const std::vector<std::string>& argv, const ProcessOptions& options = {});

// Convenience for `/bin/sh -c <command>`.
ProcessResult run_shell(const std::string& command, const ProcessOptions& options = {});

} // namespace hlsflow
