#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "lanefusion/traffic_sim.hpp"

namespace lanefusion {

enum class AdvisorKind { RuleBased, Replay, Bridge, None };
std::string_view advisor_kind_name(AdvisorKind kind);
std::optional<AdvisorKind> advisor_kind_from_name(std::string_view name);

/// How advice enters the decision: reward shaping on agreement, or a
/// selection-time bias on the advised action's Q-value.
enum class FusionMode { Shaping, QBias };
std::string_view fusion_mode_name(FusionMode mode);
std::optional<FusionMode> fusion_mode_from_name(std::string_view name);

struct FusionConfig {
  AdvisorKind kind = AdvisorKind::RuleBased;
  double delta_a = 1.0;
  FusionMode mode = FusionMode::Shaping;
  double q_bias_beta = 1.0;
  int deadline_ms = 50;
  double confidence_threshold = 0.5;
  int adapt_threshold = 3;
  int adapt_every = 100;  // episodes between override-table rebuilds, 0 = never
  std::string replay_file;
  std::vector<std::string> bridge_cmd;

  void validate() const;
  bool operator==(const FusionConfig&) const = default;
};

struct AdvisorRecommendation {
  Action action = Action::MaintainSpeed;
  double confidence = 0.0;
  std::string rationale;
  double latency_ms = 0.0;
};

enum class ConsistencyOutcome { Agree, Disagree, NoAdvice };

ConsistencyOutcome compare_actions(Action executed,
                                   const std::optional<AdvisorRecommendation>& rec,
                                   double confidence_threshold = 0.5);
double consistency_bonus(ConsistencyOutcome outcome, double delta_a);

struct ConsistencyStats {
  std::int64_t agreements = 0;
  std::int64_t disagreements = 0;

  void record(ConsistencyOutcome outcome);
  bool any() const { return agreements + disagreements > 0; }
  /// Agreement rate; nullopt when no comparison occurred.
  std::optional<double> rate() const;
};

/// Deterministic English rendering of the ego's surroundings.
std::string scene_to_text(const SceneState& state, const SimConfig& config);

struct FeedbackSample {
  Observation obs;
  std::string scene_text;
  Action executed = Action::Straight;
  Action recommended = Action::Straight;
  int episode = 0;
  int step = 0;
  std::optional<double> episode_return_env;
};

nlohmann::json feedback_to_json(const FeedbackSample& sample);
FeedbackSample feedback_from_json(const nlohmann::json& j);
/// Single-line compact serialization used by the feedback log.
std::string feedback_to_line(const FeedbackSample& sample);

/// JSON-lines feedback log. Samples of the running episode are held until
/// close_episode() back-fills their return and writes them out.
class FeedbackLog {
 public:
  FeedbackLog() = default;
  explicit FeedbackLog(const std::filesystem::path& path);
  ~FeedbackLog();
  FeedbackLog(const FeedbackLog&) = delete;
  FeedbackLog& operator=(const FeedbackLog&) = delete;

  void emit(const FeedbackSample& sample);
  void close_episode(double return_env);

  const std::vector<FeedbackSample>& samples() const { return samples_; }
  std::size_t lines_written() const { return lines_written_; }

 private:
  void write_pending();

  std::ofstream out_;
  bool to_file_ = false;
  std::vector<FeedbackSample> samples_;
  std::size_t pending_begin_ = 0;
  std::size_t lines_written_ = 0;
};

std::vector<FeedbackSample> read_feedback_log(const std::filesystem::path& path);

/// Coarse state discretization used for advisor overrides.
struct StateBucket {
  int lane = 0;
  int speed_tercile = 0;  // 0..2 across [v_min_target, v_max_target]
  int gap_bucket = 2;     // 0: <20 m, 1: 20-50 m, 2: >50 m or none

  auto operator<=>(const StateBucket&) const = default;
};

StateBucket bucket_of(const Observation& obs, const SimConfig& config);

struct OverrideTable {
  std::map<StateBucket, Action> overrides;
  std::map<StateBucket, std::array<int, kActionCount>> mismatch_counts;

  std::optional<Action> lookup(const StateBucket& bucket) const;
  bool empty() const { return overrides.empty(); }
};

/// Episode returns of episodes in which the policy agreed with the advisor,
/// grouped by the bucket the agreement happened in.
class AgreementLedger {
 public:
  void note_agreement(const StateBucket& bucket) { current_.insert(bucket); }
  void close_episode(double return_env);
  std::optional<double> mean_return(const StateBucket& bucket) const;
  void add(const StateBucket& bucket, double return_env) { returns_[bucket].push_back(return_env); }

 private:
  std::set<StateBucket> current_;
  std::map<StateBucket, std::vector<double>> returns_;
};

class Advisor {
 public:
  virtual ~Advisor() = default;
  virtual AdvisorKind kind() const = 0;
  virtual std::optional<AdvisorRecommendation> recommend(const SceneState& state,
                                                         const Observation& obs) = 0;
  virtual void feedback(const FeedbackSample&) {}
};

/// Rule output computed from the observation alone, so that an external
/// process holding only the observation can reproduce it.
AdvisorRecommendation rule_recommendation(const Observation& obs, const SimConfig& config);

class RuleBasedAdvisor : public Advisor {
 public:
  explicit RuleBasedAdvisor(SimConfig config) : config_(std::move(config)) {}

  AdvisorKind kind() const override { return AdvisorKind::RuleBased; }
  std::optional<AdvisorRecommendation> recommend(const SceneState& state,
                                                 const Observation& obs) override;

  const OverrideTable& overrides() const { return table_; }
  void set_overrides(OverrideTable table) { table_ = std::move(table); }
  const SimConfig& sim_config() const { return config_; }

 private:
  SimConfig config_;
  OverrideTable table_;
};

/// Replays recommendations from a JSON-lines file, one per call; a `null`
/// line means no advice. Exhaustion yields no advice.
class ReplayAdvisor : public Advisor {
 public:
  explicit ReplayAdvisor(const std::filesystem::path& path);

  AdvisorKind kind() const override { return AdvisorKind::Replay; }
  std::optional<AdvisorRecommendation> recommend(const SceneState& state,
                                                 const Observation& obs) override;
  std::size_t remaining() const { return entries_.size() - next_; }

 private:
  std::vector<std::optional<AdvisorRecommendation>> entries_;
  std::size_t next_ = 0;
};

class NullAdvisor : public Advisor {
 public:
  AdvisorKind kind() const override { return AdvisorKind::None; }
  std::optional<AdvisorRecommendation> recommend(const SceneState&, const Observation&) override {
    return std::nullopt;
  }
};

/// Parses a recommendation object {action, confidence, rationale}.
std::optional<AdvisorRecommendation> recommendation_from_json(const nlohmann::json& j);

std::unique_ptr<Advisor> make_advisor(const FusionConfig& fusion, const SimConfig& sim);

/// Rebuilds the override table from the feedback collected so far and
/// installs it on the advisor. A bucket gets an override when at least
/// `adapt_threshold` samples there executed the same action and their mean
/// episode return beats the mean return of episodes that agreed with the
/// advisor in that bucket.
const OverrideTable& adapt_advisor(RuleBasedAdvisor& advisor,
                                   std::span<const FeedbackSample> feedback,
                                   const AgreementLedger& agreements, int adapt_threshold = 3);

}  // namespace lanefusion
