#include "lanefusion/bridge.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <iostream>
#include <stdexcept>
#include <thread>

namespace lanefusion {

namespace {

void warn(const std::string& msg) { std::cerr << "[lanefusion] warning: " << msg << '\n'; }

}  // namespace

nlohmann::json make_recommend_request(std::int64_t id, const std::string& scene_text,
                                      const Observation& obs) {
  return {{"id", id}, {"kind", "recommend"}, {"scene_text", scene_text}, {"obs", obs.values}};
}

nlohmann::json make_feedback_request(std::int64_t id, const FeedbackSample& sample) {
  return {{"id", id}, {"kind", "feedback"}, {"sample", feedback_to_json(sample)}};
}

nlohmann::json make_shutdown_request(std::int64_t id) {
  return {{"id", id}, {"kind", "shutdown"}};
}

BridgeProcess::BridgeProcess(const std::vector<std::string>& argv, int deadline_ms)
    : deadline_(deadline_ms) {
  if (argv.empty()) throw std::invalid_argument("bridge command is empty");
  // A dead child must surface as EPIPE on write, not kill the trainer.
  ::signal(SIGPIPE, SIG_IGN);

  int in_pipe[2];
  int out_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) != 0 || ::pipe2(out_pipe, O_CLOEXEC) != 0)
    throw std::runtime_error(std::string("bridge pipe: ") + std::strerror(errno));

  std::vector<char*> cargv;
  for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
  cargv.push_back(nullptr);

  pid_ = ::fork();
  if (pid_ < 0) throw std::runtime_error(std::string("bridge fork: ") + std::strerror(errno));
  if (pid_ == 0) {
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::execvp(cargv[0], cargv.data());
    ::_exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  ::fcntl(from_child_, F_SETFL, ::fcntl(from_child_, F_GETFL) | O_NONBLOCK);
  alive_ = true;
}

BridgeProcess::~BridgeProcess() {
  shutdown();
}

void BridgeProcess::mark_dead(const std::string& why) {
  if (alive_) warn("bridge process unavailable: " + why);
  alive_ = false;
}

bool BridgeProcess::write_line(const std::string& line) {
  std::string data = line + '\n';
  std::size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = ::write(to_child_, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      mark_dead(std::string("write failed: ") + std::strerror(errno));
      return false;
    }
    off += static_cast<std::size_t>(n);
  }
  return true;
}

std::optional<nlohmann::json> BridgeProcess::read_response(
    std::int64_t id, std::chrono::steady_clock::time_point deadline) {
  for (;;) {
    // Drain complete lines already buffered.
    std::size_t nl;
    while ((nl = read_buffer_.find('\n')) != std::string::npos) {
      const std::string line = read_buffer_.substr(0, nl);
      read_buffer_.erase(0, nl + 1);
      if (line.empty()) continue;
      nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.is_object() || !j.contains("id") ||
          !j["id"].is_number_integer()) {
        warn("bridge sent a malformed line; ignored");
        continue;
      }
      const auto rid = j["id"].get<std::int64_t>();
      if (rid < id) continue;  // reply to a request that already timed out
      if (rid > id) {
        warn("bridge replied to an id that was never sent; ignored");
        continue;
      }
      if (j.contains("error")) {
        warn("bridge error for request " + std::to_string(id) + ": " + j["error"].dump());
        return std::nullopt;
      }
      return j;
    }

    const auto now = std::chrono::steady_clock::now();
    if (now >= deadline) return std::nullopt;
    const auto wait =
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count() + 1;
    pollfd pfd{from_child_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, static_cast<int>(wait));
    if (ready < 0) {
      if (errno == EINTR) continue;
      mark_dead(std::string("poll failed: ") + std::strerror(errno));
      return std::nullopt;
    }
    if (ready == 0) continue;
    char buf[4096];
    const ssize_t n = ::read(from_child_, buf, sizeof(buf));
    if (n > 0) {
      read_buffer_.append(buf, static_cast<std::size_t>(n));
    } else if (n == 0) {
      mark_dead("stdout closed");
      return std::nullopt;
    } else if (errno != EAGAIN && errno != EINTR) {
      mark_dead(std::string("read failed: ") + std::strerror(errno));
      return std::nullopt;
    }
  }
}

std::optional<nlohmann::json> BridgeProcess::call(nlohmann::json request) {
  if (!alive_) return std::nullopt;
  const std::int64_t id = next_id_++;
  request["id"] = id;
  const auto deadline = std::chrono::steady_clock::now() + deadline_;
  if (!write_line(request.dump())) return std::nullopt;
  return read_response(id, deadline);
}

int BridgeProcess::shutdown() {
  if (pid_ <= 0) return exit_code_;
  if (alive_) write_line(make_shutdown_request(next_id_++).dump());
  if (to_child_ >= 0) ::close(to_child_);
  to_child_ = -1;

  int status = 0;
  pid_t reaped = 0;
  for (int i = 0; i < 200 && reaped == 0; ++i) {
    reaped = ::waitpid(pid_, &status, WNOHANG);
    if (reaped == 0) std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  if (reaped == 0) {
    ::kill(pid_, SIGKILL);
    reaped = ::waitpid(pid_, &status, 0);
  }
  if (reaped == pid_ && WIFEXITED(status)) exit_code_ = WEXITSTATUS(status);
  if (from_child_ >= 0) ::close(from_child_);
  from_child_ = -1;
  pid_ = -1;
  alive_ = false;
  return exit_code_;
}

BridgeAdvisor::BridgeAdvisor(const std::vector<std::string>& argv, int deadline_ms,
                             SimConfig config)
    : process_(argv, deadline_ms), config_(std::move(config)) {}

std::optional<AdvisorRecommendation> BridgeAdvisor::recommend(const SceneState& state,
                                                              const Observation& obs) {
  const auto start = std::chrono::steady_clock::now();
  auto reply = process_.call(make_recommend_request(0, scene_to_text(state, config_), obs));
  std::optional<AdvisorRecommendation> rec;
  if (reply) rec = recommendation_from_json(*reply);
  if (!rec) {
    if (failures_ % 100 == 0)
      warn("bridge recommendation unavailable (deadline, transport or bad reply); "
           "continuing without advice");
    ++failures_;
    return std::nullopt;
  }
  rec->latency_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

void BridgeAdvisor::feedback(const FeedbackSample& sample) {
  process_.call(make_feedback_request(0, sample));
}

}  // namespace lanefusion
