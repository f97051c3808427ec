#pragma once

#include <sys/types.h>

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lanefusion/fusion.hpp"

namespace lanefusion {

// Wire format: one compact JSON object per line in each direction.
//   request:  {"id", "kind": "recommend", "scene_text", "obs"}
//             {"id", "kind": "feedback", "sample"}
//             {"id", "kind": "shutdown"}
//   response: {"id", "action", "confidence", "rationale"} or {"id", "error"}
nlohmann::json make_recommend_request(std::int64_t id, const std::string& scene_text,
                                      const Observation& obs);
nlohmann::json make_feedback_request(std::int64_t id, const FeedbackSample& sample);
nlohmann::json make_shutdown_request(std::int64_t id);

/// Child process speaking the line protocol over its stdin/stdout. Every
/// call is bounded by the deadline; late or malformed replies are dropped.
class BridgeProcess {
 public:
  BridgeProcess(const std::vector<std::string>& argv, int deadline_ms);
  ~BridgeProcess();
  BridgeProcess(const BridgeProcess&) = delete;
  BridgeProcess& operator=(const BridgeProcess&) = delete;

  /// Sends `request` (its "id" is assigned here) and waits for the matching
  /// response. nullopt on timeout, transport failure, or an error reply.
  std::optional<nlohmann::json> call(nlohmann::json request);

  /// Sends shutdown and reaps the child; returns its exit code or -1.
  int shutdown();
  bool alive() const { return alive_; }
  std::int64_t last_id() const { return next_id_ - 1; }

 private:
  bool write_line(const std::string& line);
  std::optional<nlohmann::json> read_response(std::int64_t id,
                                              std::chrono::steady_clock::time_point deadline);
  void mark_dead(const std::string& why);

  pid_t pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::chrono::milliseconds deadline_;
  std::int64_t next_id_ = 1;
  std::string read_buffer_;
  bool alive_ = false;
  int exit_code_ = -1;
};

class BridgeAdvisor : public Advisor {
 public:
  BridgeAdvisor(const std::vector<std::string>& argv, int deadline_ms, SimConfig config);

  AdvisorKind kind() const override { return AdvisorKind::Bridge; }
  std::optional<AdvisorRecommendation> recommend(const SceneState& state,
                                                 const Observation& obs) override;
  void feedback(const FeedbackSample& sample) override;

  BridgeProcess& process() { return process_; }
  std::int64_t timeouts() const { return failures_; }

 private:
  BridgeProcess process_;
  SimConfig config_;
  std::int64_t failures_ = 0;
};

}  // namespace lanefusion
