#include "wfs/executor.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <utility>

#include "wfs/errors.hpp"

extern char** environ;

namespace wfs {

namespace fs = std::filesystem;

std::string to_string(NetworkPolicy p) {
  return p == NetworkPolicy::None ? "none" : "llm-endpoints-only";
}

NetworkPolicy parse_network_policy(const std::string& s) {
  if (s == "none") return NetworkPolicy::None;
  if (s == "llm-endpoints-only") return NetworkPolicy::LlmEndpointsOnly;
  throw ValidationError("unknown network policy '" + s + "'");
}

void ExecutionLimits::validate() const {
  if (!(wall_timeout_s > 0)) throw ValidationError("wall timeout must be > 0");
  if (max_stdout_bytes == 0) throw ValidationError("max_stdout_bytes must be > 0");
}

InterpreterRegistry default_interpreters() {
  return {{"python3", {"python3", "{script}"}},
          {"python", {"python3", "{script}"}},
          {"sh", {"/bin/sh", "{script}"}},
          {"bash", {"bash", "{script}"}}};
}

namespace {

class ScratchDir {
 public:
  ScratchDir() {
    std::string tmpl = (fs::temp_directory_path() / "wfs-exec-XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw IoError("cannot create scratch directory");
    path_ = tmpl;
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  ~Fd() { reset(); }
  Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Fd& operator=(Fd&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  int get() const { return fd_; }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

struct Pipe {
  Fd read;
  Fd write;
};

Pipe make_pipe() {
  int fds[2];
  if (::pipe2(fds, O_CLOEXEC) != 0) throw IoError(std::string("pipe2: ") + std::strerror(errno));
  return {Fd(fds[0]), Fd(fds[1])};
}

std::string resolve_program(const std::string& program) {
  if (program.find('/') != std::string::npos) return program;
  const char* path = std::getenv("PATH");
  std::string dirs = path ? path : "/usr/local/bin:/usr/bin:/bin";
  std::size_t start = 0;
  while (start <= dirs.size()) {
    const auto end = std::min(dirs.find(':', start), dirs.size());
    const fs::path candidate = fs::path(dirs.substr(start, end - start)) / program;
    if (::access(candidate.c_str(), X_OK) == 0) return candidate.string();
    start = end + 1;
  }
  throw ExecutionError(ExecutionError::Kind::Launch, "interpreter '" + program + "' not found on PATH",
                       "");
}

void ignore_sigpipe_once() {
  static const bool done = [] {
    ::signal(SIGPIPE, SIG_IGN);
    return true;
  }();
  (void)done;
}

std::string tail(const std::string& s, std::size_t n = 2000) {
  return s.size() <= n ? s : s.substr(s.size() - n);
}

}  // namespace

Executor::Executor(InterpreterRegistry interpreters, ExecutionLimits limits)
    : interpreters_(std::move(interpreters)), limits_(std::move(limits)) {
  limits_.validate();
  ignore_sigpipe_once();
}

json Executor::stdin_document(const Workflow& workflow, const RunParameters& params) const {
  json prompts = json::object();
  for (const auto& [name, tpl] : workflow.prompts.templates) prompts[name] = tpl.text;
  json llm = json();
  if (limits_.network == NetworkPolicy::LlmEndpointsOnly && params.llm) llm = *params.llm;
  return {{"contract", to_string(workflow.code.entry_contract)},
          {"n", params.n},
          {"task", params.task},
          {"prompts", prompts},
          {"llm", llm},
          {"seed", params.seed},
          {"batch", params.batch},
          {"workflow_id", workflow.id}};
}

std::vector<Sample> parse_sample_lines(const std::string& stdout_text, NodeId source_node) {
  std::vector<Sample> samples;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < stdout_text.size()) {
    auto nl = stdout_text.find('\n', pos);
    if (nl == std::string::npos) nl = stdout_text.size();
    std::string line = stdout_text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;

    auto parsed = json::parse(line, nullptr, false);
    if (parsed.is_discarded())
      throw ParseError("malformed JSON on stdout line " + std::to_string(line_no), line_no);
    if (!parsed.is_object())
      throw BatchError("payload-shape violation: stdout line " + std::to_string(line_no) +
                       " is not a JSON object");

    Sample s;
    s.source_node = source_node;
    if (parsed.contains("payload")) {
      s.payload = parsed["payload"];
      if (parsed.contains("index")) {
        if (!parsed["index"].is_number_unsigned() && !parsed["index"].is_number_integer())
          throw BatchError("sample index on stdout line " + std::to_string(line_no) +
                           " is not an integer");
        const auto idx = parsed["index"].get<long long>();
        if (idx < 0)
          throw BatchError("negative sample index on stdout line " + std::to_string(line_no));
        s.index = static_cast<std::uint32_t>(idx);
      } else {
        s.index = static_cast<std::uint32_t>(samples.size());
      }
    } else {
      s.payload = std::move(parsed);
      s.index = static_cast<std::uint32_t>(samples.size());
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

ExecutionOutcome Executor::execute(const Workflow& workflow, const RunParameters& params,
                                   NodeId source_node) const {
  if (params.n < 1) throw ValidationError("batch size n must be >= 1");
  const auto interp = interpreters_.find(workflow.code.interpreter_hint);
  if (interp == interpreters_.end())
    throw ExecutionError(ExecutionError::Kind::Launch,
                         "no interpreter registered for hint '" + workflow.code.interpreter_hint +
                             "'",
                         "");

  ScratchDir scratch;
  const fs::path script_path = scratch.path() / "workflow_script";
  {
    std::ofstream out(script_path, std::ios::binary);
    out << workflow.code.script;
    if (!out) throw IoError("cannot write workflow script");
  }

  // Everything the child needs is prepared before fork().
  std::vector<std::string> argv_store;
  for (const auto& part : interp->second) {
    std::string arg = part;
    if (const auto p = arg.find("{script}"); p != std::string::npos)
      arg.replace(p, 8, script_path.string());
    argv_store.push_back(std::move(arg));
  }
  if (argv_store.empty())
    throw ExecutionError(ExecutionError::Kind::Launch, "empty interpreter command", "");
  const std::string program = resolve_program(argv_store.front());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  argv.push_back(nullptr);

  std::vector<std::string> env_store;
  for (const auto& name : limits_.allowed_env) {
    if (const char* v = std::getenv(name.c_str())) env_store.push_back(name + "=" + v);
  }
  std::vector<char*> envp;
  for (auto& e : env_store) envp.push_back(e.data());
  envp.push_back(nullptr);

  const std::string input = stdin_document(workflow, params).dump() + "\n";
  const std::string workdir = scratch.path().string();

  Pipe in = make_pipe();
  Pipe out = make_pipe();
  Pipe err = make_pipe();

  const pid_t pid = ::fork();
  if (pid < 0) throw IoError(std::string("fork: ") + std::strerror(errno));
  if (pid == 0) {
    ::setpgid(0, 0);
    ::dup2(in.read.get(), STDIN_FILENO);
    ::dup2(out.write.get(), STDOUT_FILENO);
    ::dup2(err.write.get(), STDERR_FILENO);
    if (::chdir(workdir.c_str()) != 0) ::_exit(126);
    ::execve(program.c_str(), argv.data(), envp.data());
    ::_exit(127);
  }
  ::setpgid(pid, pid);
  in.read.reset();
  out.write.reset();
  err.write.reset();
  ::fcntl(in.write.get(), F_SETFL, O_NONBLOCK);

  std::string stdout_buf;
  std::string stderr_buf;
  std::size_t written = 0;
  std::optional<ExecutionError::Kind> failure;
  const auto deadline = std::chrono::steady_clock::now() +
                        std::chrono::milliseconds(static_cast<long>(limits_.wall_timeout_s * 1000));
  constexpr std::size_t kStderrCap = 1u << 20;

  bool out_open = true;
  bool err_open = true;
  while (out_open || err_open) {
    const auto now = std::chrono::steady_clock::now();
    if (now >= deadline) {
      failure = ExecutionError::Kind::Timeout;
      break;
    }
    pollfd fds[3];
    nfds_t count = 0;
    int out_i = -1, err_i = -1, in_i = -1;
    if (out_open) { fds[count] = {out.read.get(), POLLIN, 0}; out_i = static_cast<int>(count++); }
    if (err_open) { fds[count] = {err.read.get(), POLLIN, 0}; err_i = static_cast<int>(count++); }
    if (in.write.get() >= 0) { fds[count] = {in.write.get(), POLLOUT, 0}; in_i = static_cast<int>(count++); }
    const auto wait_ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count() + 1;
    const int ready = ::poll(fds, count, static_cast<int>(std::min<long long>(wait_ms, 1000)));
    if (ready < 0) {
      if (errno == EINTR) continue;
      throw IoError(std::string("poll: ") + std::strerror(errno));
    }
    if (in_i >= 0 && (fds[in_i].revents & (POLLOUT | POLLERR | POLLHUP))) {
      const ssize_t n = ::write(in.write.get(), input.data() + written, input.size() - written);
      if (n > 0) written += static_cast<std::size_t>(n);
      if (n < 0 && errno != EAGAIN) written = input.size();  // child closed stdin early
      if (written >= input.size()) in.write.reset();
    }
    char buf[65536];
    auto drain = [&](int idx, Fd& fd, bool& open, std::string& sink, bool is_stdout) {
      if (idx < 0 || !(fds[idx].revents & (POLLIN | POLLHUP | POLLERR))) return;
      const ssize_t n = ::read(fd.get(), buf, sizeof buf);
      if (n > 0) {
        if (is_stdout) {
          sink.append(buf, static_cast<std::size_t>(n));
          if (sink.size() > limits_.max_stdout_bytes) failure = ExecutionError::Kind::Overflow;
        } else if (sink.size() < kStderrCap) {
          sink.append(buf, std::min(static_cast<std::size_t>(n), kStderrCap - sink.size()));
        }
      } else if (n == 0 || (errno != EAGAIN && errno != EINTR)) {
        open = false;
      }
    };
    drain(out_i, out.read, out_open, stdout_buf, true);
    drain(err_i, err.read, err_open, stderr_buf, false);
    if (failure) break;
  }

  if (failure) ::kill(-pid, SIGKILL);
  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  // Grandchildren of a killed group must not linger either.
  if (failure) ::kill(-pid, SIGKILL);

  if (failure == ExecutionError::Kind::Timeout)
    throw ExecutionError(*failure,
                         "workflow script exceeded wall timeout of " +
                             std::to_string(limits_.wall_timeout_s) + " s",
                         stderr_buf);
  if (failure == ExecutionError::Kind::Overflow)
    throw ExecutionError(*failure,
                         "workflow script exceeded stdout limit of " +
                             std::to_string(limits_.max_stdout_bytes) + " bytes",
                         stderr_buf);
  if (WIFSIGNALED(status))
    throw ExecutionError(ExecutionError::Kind::Signal,
                         "workflow script killed by signal " + std::to_string(WTERMSIG(status)) +
                             "; stderr: " + tail(stderr_buf, 500),
                         stderr_buf);
  const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  if (code == 127 && stdout_buf.empty())
    throw ExecutionError(ExecutionError::Kind::Launch, "could not launch " + program, stderr_buf);
  if (code != 0)
    throw ExecutionError(ExecutionError::Kind::NonZeroExit,
                         "workflow script exited with status " + std::to_string(code) +
                             "; stderr: " + tail(stderr_buf, 500),
                         stderr_buf);

  ExecutionOutcome outcome;
  outcome.samples = parse_sample_lines(stdout_buf, source_node);
  validate_batch(outcome.samples, params.n);
  std::sort(outcome.samples.begin(), outcome.samples.end(),
            [](const Sample& a, const Sample& b) { return a.index < b.index; });
  outcome.stderr_text = std::move(stderr_buf);
  outcome.exit_code = code;
  return outcome;
}

}  // namespace wfs
