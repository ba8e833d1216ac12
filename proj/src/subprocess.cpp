#include "hlsflow/subprocess.hpp"

#include <cerrno>
#include <csignal>
#include <cstring>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

extern char** environ;

namespace hlsflow {
namespace {

struct Pipe {
  int fds[2] = {-1, -1};
  bool open() { return ::pipe2(fds, O_CLOEXEC) == 0; }
  void close_read() { if (fds[0] >= 0) { ::close(fds[0]); fds[0] = -1; } }
  void close_write() { if (fds[1] >= 0) { ::close(fds[1]); fds[1] = -1; } }
  ~Pipe() { close_read(); close_write(); }
};

void set_nonblocking(int fd) {
  int flags = ::fcntl(fd, F_GETFL);
  ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
}

} // namespace

ProcessResult run_process(const std::vector<std::string>& argv, const ProcessOptions& options) {
  // Writes to a child that closed its stdin must fail with EPIPE, not kill us.
  static const bool sigpipe_ignored = [] { std::signal(SIGPIPE, SIG_IGN); return true; }();
  (void)sigpipe_ignored;
  ProcessResult result;
  auto started = std::chrono::steady_clock::now();
  if (argv.empty()) {
    result.spawn_failed = true;
    result.error = "empty command line";
    return result;
  }

  Pipe in, out, err, status;
  if (!in.open() || !out.open() || !err.open() || !status.open()) {
    result.spawn_failed = true;
    result.error = std::string("pipe: ") + std::strerror(errno);
    return result;
  }

  // Everything the child touches is prepared before fork.
  std::vector<char*> cargv;
  for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
  cargv.push_back(nullptr);
  std::vector<std::string> env_storage;
  for (char** e = environ; e && *e; ++e) env_storage.emplace_back(*e);
  for (const auto& e : options.extra_env) env_storage.push_back(e);
  std::vector<char*> cenv;
  for (auto& e : env_storage) cenv.push_back(e.data());
  cenv.push_back(nullptr);
  std::string cwd = options.cwd ? options.cwd->string() : std::string();

  pid_t pid = ::fork();
  if (pid < 0) {
    result.spawn_failed = true;
    result.error = std::string("fork: ") + std::strerror(errno);
    return result;
  }
  if (pid == 0) {
    ::setpgid(0, 0);
    ::dup2(in.fds[0], STDIN_FILENO);
    ::dup2(out.fds[1], STDOUT_FILENO);
    ::dup2(err.fds[1], STDERR_FILENO);
    if (!cwd.empty() && ::chdir(cwd.c_str()) != 0) {
      int e = errno;
      [[maybe_unused]] auto n = ::write(status.fds[1], &e, sizeof(e));
      ::_exit(127);
    }
    ::execvpe(cargv[0], cargv.data(), cenv.data());
    int e = errno;
    [[maybe_unused]] auto n = ::write(status.fds[1], &e, sizeof(e));
    ::_exit(127);
  }

  ::setpgid(pid, pid);
  in.close_read();
  out.close_write();
  err.close_write();
  status.close_write();

  int exec_errno = 0;
  if (::read(status.fds[0], &exec_errno, sizeof(exec_errno)) == static_cast<ssize_t>(sizeof(exec_errno))) {
    int st = 0;
    ::waitpid(pid, &st, 0);
    result.spawn_failed = true;
    result.error = "cannot execute '" + argv[0] + "': " + std::strerror(exec_errno);
    result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
  }

  set_nonblocking(in.fds[1]);
  set_nonblocking(out.fds[0]);
  set_nonblocking(err.fds[0]);
  std::size_t written = 0;
  if (options.stdin_text.empty()) in.close_write();

  auto deadline = options.timeout ? std::optional(started + *options.timeout) : std::nullopt;
  bool killed = false;
  char buf[65536];
  while (out.fds[0] >= 0 || err.fds[0] >= 0) {
    auto now = std::chrono::steady_clock::now();
    if (!killed && deadline && now >= *deadline) {
      result.timed_out = true;
      ::kill(-pid, SIGKILL);
      killed = true;
    }
    if (!killed && options.stop.stop_requested()) {
      result.cancelled = true;
      ::kill(-pid, SIGKILL);
      killed = true;
    }
    pollfd fds[3];
    int n = 0;
    int idx_out = -1, idx_err = -1, idx_in = -1;
    if (out.fds[0] >= 0) { idx_out = n; fds[n++] = {out.fds[0], POLLIN, 0}; }
    if (err.fds[0] >= 0) { idx_err = n; fds[n++] = {err.fds[0], POLLIN, 0}; }
    if (in.fds[1] >= 0) { idx_in = n; fds[n++] = {in.fds[1], POLLOUT, 0}; }
    int rc = ::poll(fds, static_cast<nfds_t>(n), 20);
    if (rc < 0) {
      if (errno == EINTR) continue;
      break;
    }
    auto drain = [&](Pipe& p, int idx, std::string& sink) {
      if (idx < 0 || !(fds[idx].revents & (POLLIN | POLLHUP | POLLERR))) return;
      ssize_t got = ::read(p.fds[0], buf, sizeof(buf));
      if (got > 0) sink.append(buf, static_cast<std::size_t>(got));
      else if (got == 0 || (errno != EAGAIN && errno != EINTR)) p.close_read();
    };
    drain(out, idx_out, result.stdout_text);
    drain(err, idx_err, result.stderr_text);
    if (idx_in >= 0 && (fds[idx_in].revents & (POLLOUT | POLLERR | POLLHUP))) {
      if (fds[idx_in].revents & (POLLERR | POLLHUP)) {
        in.close_write();
      } else {
        ssize_t w = ::write(in.fds[1], options.stdin_text.data() + written, options.stdin_text.size() - written);
        if (w > 0) written += static_cast<std::size_t>(w);
        else if (w < 0 && errno != EAGAIN && errno != EINTR) in.close_write();
        if (written >= options.stdin_text.size()) in.close_write();
      }
    }
  }
  in.close_write();

  int st = 0;
  for (;;) {
    pid_t r = ::waitpid(pid, &st, WNOHANG);
    if (r == pid || (r < 0 && errno != EINTR)) break;
    if (!killed && ((deadline && std::chrono::steady_clock::now() >= *deadline) || options.stop.stop_requested())) {
      (options.stop.stop_requested() ? result.cancelled : result.timed_out) = true;
      ::kill(-pid, SIGKILL);
      killed = true;
    }
    ::usleep(2000);
  }
  // Reap any stragglers left in the group (background children of a shell).
  if (killed) ::kill(-pid, SIGKILL);
  if (WIFEXITED(st)) result.exit_code = WEXITSTATUS(st);
  else if (WIFSIGNALED(st)) result.term_signal = WTERMSIG(st);
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

ProcessResult run_shell(const std::string& command, const ProcessOptions& options) {
  return run_process({"/bin/sh", "-c", command}, options);
}

} // namespace hlsflow
