#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lanefusion/agents.hpp"
#include "lanefusion/config.hpp"
#include "lanefusion/fusion.hpp"
#include "lanefusion/traffic_sim.hpp"

namespace lanefusion {

enum class Scheme { D3qnAdvisor, DdqnAdvisor, DqnAdvisor, D3qnNoAdvisor };

inline constexpr std::array<Scheme, 4> kAllSchemes = {
    Scheme::D3qnAdvisor, Scheme::DdqnAdvisor, Scheme::DqnAdvisor, Scheme::D3qnNoAdvisor};

/// "d3qn+advisor", "ddqn+advisor", "dqn+advisor", "d3qn-no-advisor".
std::string_view scheme_name(Scheme s);
std::optional<Scheme> scheme_from_name(std::string_view name);
AgentKind scheme_agent_kind(Scheme s);
bool scheme_uses_advisor(Scheme s);
/// Directory-safe variant of the scheme name ('+' replaced by '_').
std::string scheme_dir_name(Scheme s);

struct MetricsRow {
  int episode = 0;
  double return_env = 0.0;
  double return_shaped = 0.0;
  int steps = 0;
  int collided = 0;
  int lane_changes = 0;
  int aborted_changes = 0;
  std::optional<double> consistency_rate;
  double epsilon_or_noise = 0.0;
  std::optional<double> loss_mean;
};

inline constexpr std::string_view kMetricsHeader =
    "episode,return_env,return_shaped,steps,collided,lane_changes,aborted_changes,"
    "consistency_rate,epsilon_or_noise,loss_mean";

std::string metrics_row_to_csv(const MetricsRow& row);
MetricsRow metrics_row_from_csv(const std::string& line);
void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);

/// Per-step record handed to step observers and the trajectory dump.
struct StepRecord {
  int episode = 0;
  int step = 0;
  Action action = Action::Straight;
  SceneState next_state;
  RewardBreakdown reward;
  double reward_shaped = 0.0;
  ConsistencyOutcome outcome = ConsistencyOutcome::NoAdvice;
  std::optional<Action> recommended;
  bool done = false;
  DoneReason done_reason = DoneReason::None;
  bool lane_changed = false;
  bool aborted = false;
};

struct SessionOptions {
  /// Where metrics side files (feedback log, trajectory dump) go; empty
  /// keeps everything in memory.
  std::filesystem::path output_dir;
  /// Run the episode loop instantiation with the fusion path compiled out.
  bool compile_out_fusion = false;
  std::function<void(const StepRecord&)> step_observer;
};

/// Owns one training run: environment seeds, agent, replay, advisor and
/// the fusion bookkeeping. Episodes run strictly in sequence.
class TrainingSession {
 public:
  TrainingSession(const ExperimentConfig& config, Scheme scheme, std::uint64_t seed,
                  SessionOptions options = {});
  ~TrainingSession();
  TrainingSession(const TrainingSession&) = delete;
  TrainingSession& operator=(const TrainingSession&) = delete;

  MetricsRow run_episode();
  int episodes_done() const { return episode_; }

  const Agent& agent() const { return agent_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  const ConsistencyStats& totals() const { return totals_; }
  /// Sum over all stored transitions of the shaping bonus actually granted.
  double total_bonus() const { return total_bonus_; }
  const FeedbackLog& feedback_log() const { return *feedback_; }
  Advisor* advisor() { return advisor_.get(); }
  bool fusion_active() const { return fusion_active_; }

 private:
  template <bool kFusion>
  MetricsRow run_episode_impl();
  void end_of_episode(double return_env);

  ExperimentConfig config_;
  Scheme scheme_;
  std::uint64_t seed_;
  SessionOptions options_;
  NetRng rng_;
  Agent agent_;
  ReplayBuffer buffer_;
  std::unique_ptr<Advisor> advisor_;
  std::unique_ptr<FeedbackLog> feedback_;
  std::unique_ptr<std::ofstream> trajectory_;
  AgreementLedger agreements_;
  ConsistencyStats totals_;
  bool fusion_active_ = false;
  int episode_ = 0;
  std::int64_t env_steps_ = 0;
  double total_bonus_ = 0.0;
  std::size_t feedback_forwarded_ = 0;
};

std::uint64_t episode_seed(std::uint64_t run_seed, std::uint64_t episode);

struct EvalSummary {
  std::vector<double> returns;
  double mean = 0.0;
  double stddev = 0.0;
  int collisions = 0;
};

/// Greedy (zero-noise, epsilon 0) episodes without an advisor, on
/// environment seeds disjoint from training.
EvalSummary evaluate_policy(const Agent& agent, const SimConfig& sim, int episodes,
                            std::uint64_t seed);

struct RunArtifacts {
  std::filesystem::path dir;
  Scheme scheme = Scheme::D3qnAdvisor;
  std::uint64_t seed = 0;
  std::vector<MetricsRow> rows;
  bool ok = false;
  std::string error;
  std::int64_t agreements = 0;
  std::int64_t disagreements = 0;
  std::size_t feedback_lines = 0;
};

/// Full training loop for one (scheme, seed). Writes metrics.csv, eval.csv,
/// checkpoint.json, feedback.jsonl (advisor schemes), manifest.json and,
/// when enabled, trajectory.jsonl under <output_dir>/<scheme>/<seed>/.
/// Training divergence is recorded in the manifest and returned with ok=false.
RunArtifacts train_run(const ExperimentConfig& config, Scheme scheme, std::uint64_t seed);

/// git's blob hash: sha1("blob <len>\0" + content), lowercase hex.
std::string git_blob_sha1(std::string_view content);

struct SweepCell {
  Scheme scheme = Scheme::D3qnAdvisor;
  int count = 0;
  double mean = 0.0;
  double stddev = 0.0;
  int episodes = 0;
  int collisions = 0;
  bool ok = true;
  std::string error;
};

/// Trains (retrain mode) or reuses (transfer mode) a policy per vehicle
/// count, then evaluates eval_episodes greedy episodes per seed. Writes
/// sweep.csv plus SVG plots into <output_dir>/sweep/.
std::vector<SweepCell> sweep_hv_counts(const ExperimentConfig& config,
                                       const std::vector<int>& counts,
                                       const std::vector<Scheme>& schemes,
                                       const std::vector<std::uint64_t>& seeds);

enum class ShapeVerdict { Peaked, NotPeaked, Defect };
/// Peak-at-35 check for one scheme: Peaked when 35 beats both ends,
/// Defect when the high-count mean exceeds the 35 mean by more than 20%.
ShapeVerdict sweep_shape_check(const std::vector<SweepCell>& cells, Scheme scheme,
                               int low_count, int peak_count, int high_count);

struct RunRecord {
  Scheme scheme = Scheme::D3qnAdvisor;
  std::uint64_t seed = 0;
  nlohmann::json config;  // as stored in the manifest
  std::vector<MetricsRow> rows;
};

RunRecord load_run_record(const std::filesystem::path& run_dir);

struct SchemeSummary {
  Scheme scheme = Scheme::D3qnAdvisor;
  std::vector<double> seed_means;  // final-window mean per run
  double mean = 0.0;
};

struct PairwiseGain {
  Scheme a = Scheme::D3qnAdvisor;
  Scheme b = Scheme::D3qnAdvisor;
  double gain_percent = 0.0;  // (mean_a - mean_b) / |mean_b| * 100
};

struct ComparisonReport {
  std::vector<SchemeSummary> schemes;
  std::vector<PairwiseGain> gains;
  int final_window = 0;
};

double percent_gain(double a, double b);

/// Mean return_env over the final `final_window` episodes per scheme across
/// runs, plus pairwise gains. Requires at least `min_runs` runs per scheme
/// and identical configs (seeds and output_dir excepted).
ComparisonReport compare_schemes(const std::vector<RunRecord>& runs, int final_window,
                                 int min_runs = 2);
/// Writes report.md, report.csv and convergence.svg into `dir`.
void write_comparison(const ComparisonReport& report, const std::vector<RunRecord>& runs,
                      const std::filesystem::path& dir, int smoothing_window);

}  // namespace lanefusion
