#include "lanefusion/fusion.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <stdexcept>

#include "lanefusion/bridge.hpp"

namespace lanefusion {

namespace {

constexpr double kNearLeaderGap = 50.0;
constexpr double kSlowLeaderDelta = 3.0;

std::string fixed1(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.1f", v);
  return buf;
}

std::string describe_neighbor(const std::optional<Neighbor>& n, bool ahead) {
  const char* where = ahead ? "ahead" : "behind";
  if (!n) return std::string("no vehicle ") + where;
  std::string text = "vehicle " + std::string(where) + " at " + fixed1(n->gap) + " m, ";
  const double rel = n->relative_speed;
  if (rel < 0.0) {
    text += fixed1(-rel) + " m/s slower";
  } else if (rel > 0.0) {
    text += fixed1(rel) + " m/s faster";
  } else {
    text += "same speed";
  }
  return text;
}

// Observation decoding shared by the rule advisor; missing neighbours decode
// to a gap of sensor_range at zero relative speed, which the rules treat
// the same as "nothing there".
struct DecodedObs {
  double ego_speed;
  int lane;
  double leader_gap, leader_rel;
  double other_front_gap, other_front_rel;
  double other_rear_gap, other_rear_rel;
};

DecodedObs decode(const Observation& obs, const SimConfig& c) {
  return DecodedObs{obs[0] * c.speed_cap,      obs[1] > 0.5 ? 1 : 0,
                    obs[2] * c.sensor_range,   obs[3] * c.speed_cap,
                    obs[6] * c.sensor_range,   obs[7] * c.speed_cap,
                    obs[8] * c.sensor_range,   obs[9] * c.speed_cap};
}

bool other_lane_safe(const DecodedObs& d, const SimConfig& c) {
  if (d.other_front_gap < c.safe_gap) return false;
  if (d.other_rear_gap < c.safe_gap) return false;
  const double closing = d.other_rear_rel;
  if (closing > 0.0 && d.other_rear_gap / closing < c.rear_ttc_min) return false;
  return true;
}

}  // namespace

std::string_view advisor_kind_name(AdvisorKind kind) {
  switch (kind) {
    case AdvisorKind::RuleBased: return "rule";
    case AdvisorKind::Replay: return "replay";
    case AdvisorKind::Bridge: return "bridge";
    case AdvisorKind::None: return "none";
  }
  return "none";
}

std::optional<AdvisorKind> advisor_kind_from_name(std::string_view name) {
  if (name == "rule") return AdvisorKind::RuleBased;
  if (name == "replay") return AdvisorKind::Replay;
  if (name == "bridge") return AdvisorKind::Bridge;
  if (name == "none") return AdvisorKind::None;
  return std::nullopt;
}

std::string_view fusion_mode_name(FusionMode mode) {
  return mode == FusionMode::Shaping ? "shaping" : "q_bias";
}

std::optional<FusionMode> fusion_mode_from_name(std::string_view name) {
  if (name == "shaping") return FusionMode::Shaping;
  if (name == "q_bias") return FusionMode::QBias;
  return std::nullopt;
}

void FusionConfig::validate() const {
  auto fail = [](const char* field, const char* what) {
    throw std::invalid_argument(std::string("advisor.") + field + ": " + what);
  };
  if (!(delta_a >= 0.0)) fail("delta_a", "must be >= 0");
  if (!(q_bias_beta >= 0.0)) fail("q_bias_beta", "must be >= 0");
  if (deadline_ms < 1) fail("deadline_ms", "must be >= 1");
  if (!(confidence_threshold >= 0.0 && confidence_threshold <= 1.0))
    fail("confidence_threshold", "must be in [0, 1]");
  if (adapt_threshold < 1) fail("adapt_threshold", "must be >= 1");
  if (adapt_every < 0) fail("adapt_every", "must be >= 0");
  if (kind == AdvisorKind::Replay && replay_file.empty())
    fail("replay_file", "required for the replay advisor");
  if (kind == AdvisorKind::Bridge && bridge_cmd.empty())
    fail("bridge_cmd", "required for the bridge advisor");
}

ConsistencyOutcome compare_actions(Action executed,
                                   const std::optional<AdvisorRecommendation>& rec,
                                   double confidence_threshold) {
  if (!rec || rec->confidence < confidence_threshold) return ConsistencyOutcome::NoAdvice;
  return rec->action == executed ? ConsistencyOutcome::Agree : ConsistencyOutcome::Disagree;
}

double consistency_bonus(ConsistencyOutcome outcome, double delta_a) {
  return outcome == ConsistencyOutcome::Agree ? delta_a : 0.0;
}

void ConsistencyStats::record(ConsistencyOutcome outcome) {
  if (outcome == ConsistencyOutcome::Agree) ++agreements;
  if (outcome == ConsistencyOutcome::Disagree) ++disagreements;
}

std::optional<double> ConsistencyStats::rate() const {
  if (!any()) return std::nullopt;
  return static_cast<double>(agreements) / static_cast<double>(agreements + disagreements);
}

std::string scene_to_text(const SceneState& state, const SimConfig& config) {
  const auto& ego = state.ego;
  const int other = ego.lane == 0 ? 1 : 0;
  auto lane_label = [](int lane) {
    return lane == 0 ? std::string("lane 0 (rightmost)") : std::string("lane 1 (left)");
  };
  std::string text = "Ego vehicle in " + lane_label(ego.lane) + " at position " +
                     fixed1(ego.longitudinal_pos) + " m, speed " + fixed1(ego.speed) + " m/s. ";
  text += "Same lane: " + describe_neighbor(find_neighbor(state, ego.lane, true, config), true) +
          "; " + describe_neighbor(find_neighbor(state, ego.lane, false, config), false) + ". ";
  text += "Other lane, " + lane_label(other) + ": " +
          describe_neighbor(find_neighbor(state, other, true, config), true) + "; " +
          describe_neighbor(find_neighbor(state, other, false, config), false) + ". ";
  text += "Road: " + std::to_string(config.lane_count) + " lanes, " +
          fixed1(config.road_length) + " m long, " +
          fixed1(std::max(0.0, config.road_length - ego.longitudinal_pos)) + " m remaining.";
  return text;
}

nlohmann::json feedback_to_json(const FeedbackSample& s) {
  nlohmann::json j;
  j["episode"] = s.episode;
  j["step"] = s.step;
  j["obs"] = s.obs.values;
  j["scene_text"] = s.scene_text;
  j["executed"] = std::string(action_name(s.executed));
  j["recommended"] = std::string(action_name(s.recommended));
  j["return_env"] = s.episode_return_env ? nlohmann::json(*s.episode_return_env) : nlohmann::json();
  return j;
}

FeedbackSample feedback_from_json(const nlohmann::json& j) {
  FeedbackSample s;
  s.episode = j.at("episode").get<int>();
  s.step = j.at("step").get<int>();
  const auto& obs = j.at("obs");
  if (!obs.is_array() || obs.size() != kObservationDim)
    throw std::invalid_argument("feedback sample: obs must have 10 entries");
  for (std::size_t i = 0; i < kObservationDim; ++i) s.obs[i] = obs[i].get<double>();
  s.scene_text = j.at("scene_text").get<std::string>();
  auto parse_action = [&](const char* key) {
    auto a = action_from_name(j.at(key).get<std::string>());
    if (!a) throw std::invalid_argument(std::string("feedback sample: bad action in ") + key);
    return *a;
  };
  s.executed = parse_action("executed");
  s.recommended = parse_action("recommended");
  const auto& ret = j.at("return_env");
  if (!ret.is_null()) s.episode_return_env = ret.get<double>();
  return s;
}

std::string feedback_to_line(const FeedbackSample& sample) {
  return feedback_to_json(sample).dump();
}

FeedbackLog::FeedbackLog(const std::filesystem::path& path)
    : out_(path, std::ios::out | std::ios::trunc), to_file_(true) {
  if (!out_) throw std::runtime_error("cannot open feedback log: " + path.string());
}

FeedbackLog::~FeedbackLog() {
  try {
    write_pending();
  } catch (...) {
  }
}

void FeedbackLog::emit(const FeedbackSample& sample) {
  if (sample.executed == sample.recommended)
    throw std::invalid_argument("feedback samples exist only for disagreements");
  samples_.push_back(sample);
}

void FeedbackLog::close_episode(double return_env) {
  for (std::size_t i = pending_begin_; i < samples_.size(); ++i)
    samples_[i].episode_return_env = return_env;
  write_pending();
}

void FeedbackLog::write_pending() {
  for (; pending_begin_ < samples_.size(); ++pending_begin_) {
    if (to_file_) out_ << feedback_to_line(samples_[pending_begin_]) << '\n';
    ++lines_written_;
  }
  if (to_file_) {
    out_.flush();
    if (!out_) throw std::runtime_error("feedback log write failed");
  }
}

std::vector<FeedbackSample> read_feedback_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open feedback log: " + path.string());
  std::vector<FeedbackSample> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(feedback_from_json(nlohmann::json::parse(line)));
  }
  return out;
}

StateBucket bucket_of(const Observation& obs, const SimConfig& config) {
  StateBucket b;
  b.lane = obs[1] > 0.5 ? 1 : 0;
  const double speed = obs[0] * config.speed_cap;
  const double third = (config.v_max_target - config.v_min_target) / 3.0;
  if (speed < config.v_min_target + third) {
    b.speed_tercile = 0;
  } else if (speed < config.v_min_target + 2.0 * third) {
    b.speed_tercile = 1;
  } else {
    b.speed_tercile = 2;
  }
  const double gap = obs[2] * config.sensor_range;
  const bool leader_missing = obs[2] == 1.0 && obs[3] == 0.0;
  if (leader_missing || gap > 50.0) {
    b.gap_bucket = 2;
  } else if (gap < 20.0) {
    b.gap_bucket = 0;
  } else {
    b.gap_bucket = 1;
  }
  return b;
}

std::optional<Action> OverrideTable::lookup(const StateBucket& bucket) const {
  auto it = overrides.find(bucket);
  if (it == overrides.end()) return std::nullopt;
  return it->second;
}

void AgreementLedger::close_episode(double return_env) {
  for (const auto& b : current_) returns_[b].push_back(return_env);
  current_.clear();
}

std::optional<double> AgreementLedger::mean_return(const StateBucket& bucket) const {
  auto it = returns_.find(bucket);
  if (it == returns_.end() || it->second.empty()) return std::nullopt;
  double sum = 0.0;
  for (double r : it->second) sum += r;
  return sum / static_cast<double>(it->second.size());
}

AdvisorRecommendation rule_recommendation(const Observation& obs, const SimConfig& config) {
  const DecodedObs d = decode(obs, config);
  const bool near_leader = d.leader_gap <= kNearLeaderGap;
  const bool other_safe = other_lane_safe(d, config);

  if (near_leader && d.leader_rel <= -kSlowLeaderDelta && other_safe) {
    return {d.lane == 0 ? Action::TurnLeft : Action::TurnRight, 0.9,
            "slower vehicle ahead and the other lane is clear: overtake", 0.0};
  }
  if (d.lane == 1 && other_safe && d.other_front_rel >= 0.0) {
    return {Action::TurnRight, 0.6, "right lane is clear and not slower: keep right", 0.0};
  }
  if (d.ego_speed < config.v_max_target && !near_leader) {
    return {Action::Accelerate, 0.7, "road ahead is free and speed is below target", 0.0};
  }
  return {Action::MaintainSpeed, 0.5, "no better option: hold speed", 0.0};
}

std::optional<AdvisorRecommendation> RuleBasedAdvisor::recommend(const SceneState&,
                                                                 const Observation& obs) {
  if (auto forced = table_.lookup(bucket_of(obs, config_)))
    return AdvisorRecommendation{*forced, 0.8, "learned override from feedback", 0.0};
  return rule_recommendation(obs, config_);
}

std::optional<AdvisorRecommendation> recommendation_from_json(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  if (!j.is_object() || !j.contains("action")) return std::nullopt;
  const auto action = action_from_name(j.at("action").get<std::string>());
  if (!action) return std::nullopt;
  AdvisorRecommendation rec;
  rec.action = *action;
  rec.confidence = std::clamp(j.value("confidence", 1.0), 0.0, 1.0);
  rec.rationale = j.value("rationale", std::string());
  return rec;
}

ReplayAdvisor::ReplayAdvisor(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open replay file: " + path.string());
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    auto rec = recommendation_from_json(j);
    if (!j.is_null() && !rec)
      throw std::invalid_argument("replay file line " + std::to_string(line_no) +
                                  ": expected null or {action, confidence, rationale}");
    entries_.push_back(std::move(rec));
  }
}

std::optional<AdvisorRecommendation> ReplayAdvisor::recommend(const SceneState&,
                                                              const Observation&) {
  if (next_ >= entries_.size()) return std::nullopt;
  return entries_[next_++];
}

std::unique_ptr<Advisor> make_advisor(const FusionConfig& fusion, const SimConfig& sim) {
  switch (fusion.kind) {
    case AdvisorKind::RuleBased: return std::make_unique<RuleBasedAdvisor>(sim);
    case AdvisorKind::Replay: return std::make_unique<ReplayAdvisor>(fusion.replay_file);
    case AdvisorKind::Bridge:
      return std::make_unique<BridgeAdvisor>(fusion.bridge_cmd, fusion.deadline_ms, sim);
    case AdvisorKind::None: return std::make_unique<NullAdvisor>();
  }
  return std::make_unique<NullAdvisor>();
}

const OverrideTable& adapt_advisor(RuleBasedAdvisor& advisor,
                                   std::span<const FeedbackSample> feedback,
                                   const AgreementLedger& agreements, int adapt_threshold) {
  struct Tally {
    int count = 0;
    double return_sum = 0.0;
  };
  std::map<StateBucket, std::array<Tally, kActionCount>> tallies;
  OverrideTable table;
  for (const auto& s : feedback) {
    if (!s.episode_return_env) continue;
    const StateBucket b = bucket_of(s.obs, advisor.sim_config());
    auto& t = tallies[b][action_index(s.executed)];
    ++t.count;
    t.return_sum += *s.episode_return_env;
    auto [it, inserted] = table.mismatch_counts.try_emplace(b);
    if (inserted) it->second.fill(0);
    ++it->second[action_index(s.executed)];
  }
  for (const auto& [bucket, per_action] : tallies) {
    const auto baseline = agreements.mean_return(bucket);
    if (!baseline) continue;
    std::optional<Action> best;
    double best_mean = 0.0;
    for (int a = 0; a < kActionCount; ++a) {
      const Tally& t = per_action[a];
      if (t.count < adapt_threshold) continue;
      const double mean = t.return_sum / t.count;
      if (mean <= *baseline) continue;
      if (!best || mean > best_mean) {
        best = action_from_index(a);
        best_mean = mean;
      }
    }
    if (best) table.overrides.emplace(bucket, *best);
  }
  advisor.set_overrides(std::move(table));
  return advisor.overrides();
}

}  // namespace lanefusion
