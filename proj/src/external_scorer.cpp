// Subprocess bridge for the line-delimited JSON scoring protocol.

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <mutex>
#include <optional>

#include "isa/errors.hpp"
#include "isa/scorer.hpp"
#include "json.hpp"

namespace isa {

namespace {

using Clock = std::chrono::steady_clock;

class ScorerProcess {
 public:
  explicit ScorerProcess(const std::string& command) {
    int in_pair[2], out_pair[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, in_pair) != 0 ||
        ::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, out_pair) != 0)
      throw ScorerUnavailableError(std::string("socketpair: ") + std::strerror(errno));
    pid_ = ::fork();
    if (pid_ < 0) throw ScorerUnavailableError(std::string("fork: ") + std::strerror(errno));
    if (pid_ == 0) {
      ::dup2(in_pair[1], STDIN_FILENO);
      ::dup2(out_pair[1], STDOUT_FILENO);
      ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(in_pair[1]);
    ::close(out_pair[1]);
    to_child_ = in_pair[0];
    from_child_ = out_pair[0];
    ::fcntl(to_child_, F_SETFL, ::fcntl(to_child_, F_GETFL) | O_NONBLOCK);
    ::fcntl(from_child_, F_SETFL, ::fcntl(from_child_, F_GETFL) | O_NONBLOCK);
  }

  ~ScorerProcess() { shutdown(); }
  ScorerProcess(const ScorerProcess&) = delete;
  ScorerProcess& operator=(const ScorerProcess&) = delete;

  bool healthy() const { return healthy_; }

  std::vector<double> run(const std::string& audio_path, std::span<const TimeSegment> windows,
                          std::chrono::milliseconds timeout) {
    healthy_ = false;  // restored only if the whole batch completes cleanly
    const long long first_id = next_id_;
    std::string outbox;
    for (const auto& w : windows) {
      nlohmann::ordered_json req;
      req["id"] = next_id_++;
      req["audio_path"] = audio_path;
      req["start"] = w.start;
      req["end"] = w.end;
      outbox += req.dump();
      outbox += '\n';
    }

    std::vector<std::optional<double>> results(windows.size());
    std::size_t received = 0;
    std::size_t written = 0;
    auto deadline = Clock::now() + timeout;

    while (received < windows.size()) {
      pollfd fds[2];
      nfds_t nfds = 0;
      fds[nfds++] = {from_child_, POLLIN, 0};
      if (written < outbox.size()) fds[nfds++] = {to_child_, POLLOUT, 0};
      auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
      if (left.count() <= 0) throw TimeoutError(timeout_message(timeout));
      int ready = ::poll(fds, nfds, static_cast<int>(left.count()));
      if (ready < 0) {
        if (errno == EINTR) continue;
        throw ScorerUnavailableError(std::string("poll: ") + std::strerror(errno));
      }
      if (ready == 0) throw TimeoutError(timeout_message(timeout));

      if (nfds == 2 && (fds[1].revents & (POLLOUT | POLLERR | POLLHUP))) {
        ssize_t n = ::send(to_child_, outbox.data() + written, outbox.size() - written, MSG_NOSIGNAL);
        if (n < 0 && errno != EAGAIN && errno != EINTR) throw exited("stdin closed");
        if (n > 0) written += static_cast<std::size_t>(n);
      }
      if (fds[0].revents & (POLLIN | POLLERR | POLLHUP)) {
        char chunk[4096];
        ssize_t n = ::read(from_child_, chunk, sizeof chunk);
        if (n == 0) throw exited("stdout closed before all responses arrived");
        if (n < 0) {
          if (errno == EAGAIN || errno == EINTR) continue;
          throw exited(std::strerror(errno));
        }
        inbox_.append(chunk, static_cast<std::size_t>(n));
        std::size_t nl;
        while ((nl = inbox_.find('\n')) != std::string::npos) {
          std::string line = inbox_.substr(0, nl);
          inbox_.erase(0, nl + 1);
          if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
          auto [index, score] = parse_response(line, first_id, windows.size());
          if (results[index]) throw ProtocolError("duplicate response for id " + std::to_string(first_id + static_cast<long long>(index)));
          results[index] = score;
          ++received;
          deadline = Clock::now() + timeout;
        }
      }
    }
    healthy_ = true;
    std::vector<double> out;
    out.reserve(results.size());
    for (const auto& r : results) out.push_back(*r);
    return out;
  }

 private:
  static std::string timeout_message(std::chrono::milliseconds timeout) {
    return "external scorer did not answer within " + std::to_string(timeout.count()) + " ms";
  }

  ScorerUnavailableError exited(const std::string& why) {
    std::string status;
    if (pid_ > 0) {
      int st = 0;
      pid_t r = ::waitpid(pid_, &st, WNOHANG);
      if (r == pid_) {
        pid_ = -1;
        if (WIFEXITED(st)) status = " (exit status " + std::to_string(WEXITSTATUS(st)) + ")";
        else if (WIFSIGNALED(st)) status = " (signal " + std::to_string(WTERMSIG(st)) + ")";
      }
    }
    return ScorerUnavailableError("external scorer process died: " + why + status);
  }

  std::pair<std::size_t, double> parse_response(const std::string& line, long long first_id,
                                                std::size_t count) {
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      throw ProtocolError("malformed response line: " + line);
    }
    if (!obj.is_object() || !obj.contains("id") || !obj["id"].is_number_integer())
      throw ProtocolError("response without integer id: " + line);
    long long id = obj["id"].get<long long>();
    if (id < first_id || id >= first_id + static_cast<long long>(count))
      throw ProtocolError("response for unknown id " + std::to_string(id));
    if (obj.contains("error"))
      throw ScorerError("external scorer failed request " + std::to_string(id) + ": " +
                        obj["error"].dump());
    if (!obj.contains("score") || !obj["score"].is_number())
      throw ProtocolError("response without numeric score: " + line);
    double score = obj["score"].get<double>();
    if (!(score >= 0.0 && score <= 1.0))
      throw ProtocolError("score " + std::to_string(score) + " outside [0, 1] for id " +
                          std::to_string(id));
    return {static_cast<std::size_t>(id - first_id), score};
  }

  void shutdown() {
    if (to_child_ >= 0) ::close(to_child_);
    to_child_ = -1;
    if (pid_ > 0) {
      // EOF on stdin asks the process to exit; give it a moment, then kill.
      for (int i = 0; i < 50; ++i) {
        if (::waitpid(pid_, nullptr, WNOHANG) == pid_) {
          pid_ = -1;
          break;
        }
        ::usleep(2000);
      }
      if (pid_ > 0) {
        ::kill(pid_, SIGKILL);
        ::waitpid(pid_, nullptr, 0);
        pid_ = -1;
      }
    }
    if (from_child_ >= 0) ::close(from_child_);
    from_child_ = -1;
  }

  pid_t pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string inbox_;
  long long next_id_ = 0;
  bool healthy_ = true;
};

}  // namespace

struct ExternalScorer::Pool {
  std::mutex mutex;
  std::vector<std::unique_ptr<ScorerProcess>> idle;
};

ExternalScorer::ExternalScorer(std::string command, std::chrono::milliseconds timeout)
    : command_(std::move(command)), timeout_(timeout), pool_(std::make_unique<Pool>()) {}

ExternalScorer::~ExternalScorer() = default;

double ExternalScorer::score(const ScoringContext& ctx, const TimeSegment& window) const {
  return score_batch(ctx, std::span<const TimeSegment>(&window, 1), Execution::Serial).front();
}

std::vector<double> ExternalScorer::score_batch(const ScoringContext& ctx,
                                                std::span<const TimeSegment> windows,
                                                Execution) const {
  if (windows.empty()) return {};
  std::unique_ptr<ScorerProcess> proc;
  {
    std::lock_guard lock(pool_->mutex);
    if (!pool_->idle.empty()) {
      proc = std::move(pool_->idle.back());
      pool_->idle.pop_back();
    }
  }
  if (!proc) proc = std::make_unique<ScorerProcess>(command_);
  // A process that failed mid-batch is dropped; its destructor reaps it.
  std::vector<double> out = proc->run(ctx.audio_path, windows, timeout_);
  if (proc->healthy()) {
    std::lock_guard lock(pool_->mutex);
    pool_->idle.push_back(std::move(proc));
  }
  return out;
}

}  // namespace isa
