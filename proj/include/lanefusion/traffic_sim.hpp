#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string_view>
#include <vector>

namespace lanefusion {

struct SimConfig {
  double road_length = 3000.0;
  int lane_count = 2;
  double lane_width = 3.5;
  int human_count = 35;
  double dt = 0.25;
  int max_steps = 300;
  double v_min_target = 20.0;
  double v_max_target = 30.0;
  double accel_mag = 2.0;
  double vehicle_length = 5.0;
  double sensor_range = 100.0;
  double safe_gap = 10.0;
  double rear_ttc_min = 2.0;
  double delta1 = -15.0;
  double delta2 = 10.0;
  double delta3 = 2.0;
  double speed_cap = 33.0;

  /// Throws std::invalid_argument naming the first offending field.
  void validate() const;

  bool operator==(const SimConfig&) const = default;
};

enum class Action : int {
  TurnLeft = 0,
  TurnRight = 1,
  Straight = 2,
  Accelerate = 3,
  Decelerate = 4,
  MaintainSpeed = 5,
};

inline constexpr int kActionCount = 6;
inline constexpr std::array<Action, kActionCount> kAllActions = {
    Action::TurnLeft,   Action::TurnRight,  Action::Straight,
    Action::Accelerate, Action::Decelerate, Action::MaintainSpeed};

/// Throws std::out_of_range for indices outside 0..5.
Action action_from_index(int index);
constexpr int action_index(Action a) { return static_cast<int>(a); }

/// Canonical wire names: TURN_LEFT, TURN_RIGHT, STRAIGHT, ACCELERATE,
/// DECELERATE, MAINTAIN.
std::string_view action_name(Action a);
std::optional<Action> action_from_name(std::string_view name);

inline bool is_lane_change(Action a) {
  return a == Action::TurnLeft || a == Action::TurnRight;
}

struct VehicleKinematics {
  int id = 0;
  double longitudinal_pos = 0.0;
  int lane = 0;  // 0 = rightmost
  double speed = 0.0;
  bool is_ego = false;
  double desired_speed = 0.0;

  bool operator==(const VehicleKinematics&) const = default;
};

using SimRng = std::mt19937_64;

struct SceneState {
  VehicleKinematics ego;
  std::vector<VehicleKinematics> humans;
  int step = 0;
  SimRng rng;

  bool operator==(const SceneState&) const = default;
};

struct RewardBreakdown {
  double safety = 0.0;
  double efficiency_speed = 0.0;
  double efficiency_lane_change = 0.0;
  double comfort = 0.0;
  double env_total = 0.0;
  double shaping_bonus = 0.0;
};

enum class DoneReason { None, Collision, RoadEnd, MaxSteps };
std::string_view done_reason_name(DoneReason r);

struct StepResult {
  SceneState next_state;
  RewardBreakdown reward;
  bool done = false;
  DoneReason done_reason = DoneReason::None;
  bool lane_changed = false;
  bool aborted_lane_change = false;
};

inline constexpr int kObservationDim = 10;

/// Normalized feature vector fed to the Q-networks.
struct Observation {
  std::array<double, kObservationDim> values{};

  double operator[](std::size_t i) const { return values[i]; }
  double& operator[](std::size_t i) { return values[i]; }
  const double* data() const { return values.data(); }
  bool operator==(const Observation&) const = default;
};

/// Nearest vehicle in a lane, ahead of or behind the ego. `gap` is the
/// bumper-to-bumper distance, `relative_speed` is other minus ego.
struct Neighbor {
  double gap = 0.0;
  double relative_speed = 0.0;
  double speed = 0.0;
};

SceneState reset(const SimConfig& config, std::uint64_t seed);
StepResult step(const SceneState& state, Action action, const SimConfig& config);
StepResult step(const SceneState& state, int action_index, const SimConfig& config);

/// IDM acceleration with a=1.5, b=2.0, s0=2, T=1.5, delta=4, clamped to
/// [-6, 1.5]. Pass an infinite gap when there is no leader.
double idm_acceleration(double gap, double ego_speed, double leader_speed,
                        double desired_speed);

bool lane_change_safe(const SceneState& state, int target_lane, const SimConfig& config);

RewardBreakdown compute_reward(const SceneState& prev, Action action,
                               const SceneState& result_state, bool aborted,
                               bool collided, const SimConfig& config);

Observation observe(const SceneState& state, const SimConfig& config);

/// Nearest human within sensor range in `lane`, ahead (pos >= ego pos) or
/// behind the ego.
std::optional<Neighbor> find_neighbor(const SceneState& state, int lane, bool ahead,
                                      const SimConfig& config);

bool vehicles_collide(const VehicleKinematics& a, const VehicleKinematics& b,
                      double vehicle_length);

}  // namespace lanefusion
