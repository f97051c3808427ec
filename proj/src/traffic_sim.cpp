#include "lanefusion/traffic_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace lanefusion {

namespace {

constexpr double kIdmMaxAccel = 1.5;
constexpr double kIdmComfortDecel = 2.0;
constexpr double kIdmJamDistance = 2.0;
constexpr double kIdmHeadway = 1.5;
constexpr double kIdmExponent = 4.0;
constexpr double kIdmMinAccel = -6.0;

constexpr int kMaxPlacementAttempts = 10000;
constexpr double kHumanDesiredMin = 18.0;
constexpr double kHumanDesiredMax = 26.0;

constexpr std::array<std::string_view, kActionCount> kActionNames = {
    "TURN_LEFT", "TURN_RIGHT", "STRAIGHT", "ACCELERATE", "DECELERATE", "MAINTAIN"};

void require(bool ok, const char* field, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("sim.") + field + ": " + what);
}

// Leader of `self` among the ego and the humans, using current positions.
const VehicleKinematics* leader_of(const VehicleKinematics& self, const SceneState& state) {
  const VehicleKinematics* best = nullptr;
  auto consider = [&](const VehicleKinematics& other) {
    if (&other == &self || other.lane != self.lane) return;
    const bool ahead = other.longitudinal_pos > self.longitudinal_pos ||
                       (other.longitudinal_pos == self.longitudinal_pos && other.id > self.id);
    if (!ahead) return;
    if (best == nullptr || other.longitudinal_pos < best->longitudinal_pos) best = &other;
  };
  consider(state.ego);
  for (const auto& h : state.humans) consider(h);
  return best;
}

}  // namespace

void SimConfig::validate() const {
  require(road_length > 0.0, "road_length", "must be > 0");
  require(lane_count == 2, "lane_count", "must be 2");
  require(lane_width > 0.0, "lane_width", "must be > 0");
  require(human_count >= 0, "human_count", "must be >= 0");
  require(dt > 0.0, "dt", "must be > 0");
  require(max_steps >= 1, "max_steps", "must be >= 1");
  require(v_min_target < v_max_target, "v_min_target", "must be < v_max_target");
  require(v_max_target <= speed_cap, "v_max_target", "must be <= speed_cap");
  require(accel_mag >= 0.0, "accel_mag", "must be >= 0");
  require(vehicle_length > 0.0, "vehicle_length", "must be > 0");
  require(sensor_range > 0.0, "sensor_range", "must be > 0");
  require(safe_gap >= 0.0, "safe_gap", "must be >= 0");
  require(rear_ttc_min >= 0.0, "rear_ttc_min", "must be >= 0");
  require(delta1 < 0.0, "delta1", "must be < 0");
  require(delta2 > 0.0, "delta2", "must be > 0");
  require(delta3 >= 0.0, "delta3", "must be >= 0");
}

Action action_from_index(int index) {
  if (index < 0 || index >= kActionCount)
    throw std::out_of_range("action index out of range: " + std::to_string(index));
  return static_cast<Action>(index);
}

std::string_view action_name(Action a) { return kActionNames[action_index(a)]; }

std::optional<Action> action_from_name(std::string_view name) {
  for (int i = 0; i < kActionCount; ++i)
    if (kActionNames[i] == name) return static_cast<Action>(i);
  return std::nullopt;
}

std::string_view done_reason_name(DoneReason r) {
  switch (r) {
    case DoneReason::None: return "none";
    case DoneReason::Collision: return "collision";
    case DoneReason::RoadEnd: return "road_end";
    case DoneReason::MaxSteps: return "max_steps";
  }
  return "none";
}

SceneState reset(const SimConfig& config, std::uint64_t seed) {
  config.validate();
  SceneState state;
  state.rng.seed(seed);
  state.ego = VehicleKinematics{0, 0.0, 0, config.v_min_target, true, 0.0};

  std::uniform_real_distribution<double> pos_dist(50.0, config.road_length);
  std::uniform_int_distribution<int> lane_dist(0, config.lane_count - 1);
  std::uniform_real_distribution<double> desired_dist(kHumanDesiredMin, kHumanDesiredMax);
  const double min_sep = 2.0 * config.vehicle_length;

  int attempts = 0;
  state.humans.reserve(static_cast<std::size_t>(config.human_count));
  for (int id = 1; id <= config.human_count; ++id) {
    for (;;) {
      if (++attempts > kMaxPlacementAttempts)
        throw std::runtime_error("human placement infeasible: density too high for road_length");
      const double pos = pos_dist(state.rng);
      const int lane = lane_dist(state.rng);
      const bool clash = std::any_of(state.humans.begin(), state.humans.end(), [&](const auto& h) {
        return h.lane == lane && std::abs(h.longitudinal_pos - pos) < min_sep;
      });
      if (clash) continue;
      const double desired = desired_dist(state.rng);
      state.humans.push_back(VehicleKinematics{id, pos, lane, desired, false, desired});
      break;
    }
  }
  return state;
}

double idm_acceleration(double gap, double ego_speed, double leader_speed,
                        double desired_speed) {
  const double free_term = 1.0 - std::pow(ego_speed / desired_speed, kIdmExponent);
  double acc = kIdmMaxAccel * free_term;
  if (std::isfinite(gap)) {
    const double dynamic = ego_speed * kIdmHeadway +
                           ego_speed * (ego_speed - leader_speed) /
                               (2.0 * std::sqrt(kIdmMaxAccel * kIdmComfortDecel));
    const double desired_gap = kIdmJamDistance + std::max(0.0, dynamic);
    const double ratio = desired_gap / gap;
    acc = kIdmMaxAccel * (free_term - ratio * ratio);
  }
  return std::clamp(acc, kIdmMinAccel, kIdmMaxAccel);
}

std::optional<Neighbor> find_neighbor(const SceneState& state, int lane, bool ahead,
                                      const SimConfig& config) {
  const auto& ego = state.ego;
  std::optional<Neighbor> best;
  for (const auto& h : state.humans) {
    if (h.lane != lane) continue;
    const double delta = h.longitudinal_pos - ego.longitudinal_pos;
    if (ahead != (delta >= 0.0)) continue;
    const double gap = std::abs(delta) - config.vehicle_length;
    if (gap > config.sensor_range) continue;
    if (!best || gap < best->gap) best = Neighbor{gap, h.speed - ego.speed, h.speed};
  }
  return best;
}

bool lane_change_safe(const SceneState& state, int target_lane, const SimConfig& config) {
  const auto front = find_neighbor(state, target_lane, true, config);
  const auto rear = find_neighbor(state, target_lane, false, config);
  if (front && front->gap < config.safe_gap) return false;
  if (rear) {
    if (rear->gap < config.safe_gap) return false;
    const double closing = rear->speed - state.ego.speed;
    if (closing > 0.0 && rear->gap / closing < config.rear_ttc_min) return false;
  }
  return true;
}

bool vehicles_collide(const VehicleKinematics& a, const VehicleKinematics& b,
                      double vehicle_length) {
  return a.lane == b.lane && std::abs(a.longitudinal_pos - b.longitudinal_pos) < vehicle_length;
}

RewardBreakdown compute_reward(const SceneState& prev, Action action,
                               const SceneState& result_state, bool aborted,
                               bool collided, const SimConfig& config) {
  RewardBreakdown r;
  r.safety = collided ? config.delta1 : 0.0;
  r.efficiency_speed =
      std::clamp((result_state.ego.speed - config.v_min_target) /
                     (config.v_max_target - config.v_min_target),
                 0.0, 1.0);
  if (is_lane_change(action) && !aborted) {
    const auto leader = find_neighbor(prev, prev.ego.lane, true, config);
    if (leader && leader->speed < prev.ego.speed) r.efficiency_lane_change = config.delta2;
  }
  r.comfort = result_state.ego.lane == 0 ? config.delta3 : 0.0;
  r.env_total = r.safety + r.efficiency_speed + r.efficiency_lane_change + r.comfort;
  return r;
}

StepResult step(const SceneState& state, int index, const SimConfig& config) {
  return step(state, action_from_index(index), config);
}

StepResult step(const SceneState& state, Action action, const SimConfig& config) {
  if (state.step >= config.max_steps)
    throw std::logic_error("step called on a terminal state");

  StepResult result;
  SceneState& next = result.next_state;
  next = state;

  // Lateral: instantaneous lane swap guarded by the safety predicate.
  if (is_lane_change(action)) {
    const int target = state.ego.lane + (action == Action::TurnLeft ? 1 : -1);
    if (target >= 0 && target < config.lane_count && lane_change_safe(state, target, config)) {
      next.ego.lane = target;
      result.lane_changed = true;
    } else {
      result.aborted_lane_change = true;
    }
  }

  // Humans react to the scene as it stands after the ego's lateral move.
  std::vector<double> accels(next.humans.size());
  for (std::size_t i = 0; i < next.humans.size(); ++i) {
    const auto& h = next.humans[i];
    double gap = std::numeric_limits<double>::infinity();
    double leader_speed = h.speed;
    if (const auto* leader = leader_of(h, next)) {
      gap = std::max(leader->longitudinal_pos - h.longitudinal_pos - config.vehicle_length, 1e-3);
      leader_speed = leader->speed;
    }
    accels[i] = idm_acceleration(gap, h.speed, leader_speed, h.desired_speed);
  }
  for (std::size_t i = 0; i < next.humans.size(); ++i) {
    auto& h = next.humans[i];
    h.speed = std::clamp(h.speed + accels[i] * config.dt, 0.0, config.speed_cap);
  }

  double ego_speed = state.ego.speed;
  if (action == Action::Accelerate) ego_speed += config.accel_mag * config.dt;
  if (action == Action::Decelerate) ego_speed -= config.accel_mag * config.dt;
  next.ego.speed = std::clamp(ego_speed, 0.0, config.speed_cap);

  next.ego.longitudinal_pos += next.ego.speed * config.dt;
  for (auto& h : next.humans) h.longitudinal_pos += h.speed * config.dt;
  next.step = state.step + 1;

  const bool collided = std::any_of(next.humans.begin(), next.humans.end(), [&](const auto& h) {
    return vehicles_collide(next.ego, h, config.vehicle_length);
  });

  if (collided) {
    result.done_reason = DoneReason::Collision;
  } else if (next.ego.longitudinal_pos >= config.road_length) {
    result.done_reason = DoneReason::RoadEnd;
  } else if (next.step >= config.max_steps) {
    result.done_reason = DoneReason::MaxSteps;
  }
  result.done = result.done_reason != DoneReason::None;
  result.reward =
      compute_reward(state, action, next, result.aborted_lane_change, collided, config);
  return result;
}

Observation observe(const SceneState& state, const SimConfig& config) {
  Observation obs;
  const auto& ego = state.ego;
  obs[0] = std::clamp(ego.speed / config.speed_cap, 0.0, 1.0);
  obs[1] = static_cast<double>(ego.lane);
  const int other_lane = ego.lane == 0 ? 1 : 0;
  const std::array<std::pair<int, bool>, 4> slots = {
      std::pair{ego.lane, true}, std::pair{ego.lane, false},
      std::pair{other_lane, true}, std::pair{other_lane, false}};
  for (std::size_t k = 0; k < slots.size(); ++k) {
    double gap_feature = 1.0;
    double speed_feature = 0.0;
    if (auto n = find_neighbor(state, slots[k].first, slots[k].second, config)) {
      gap_feature = std::clamp(n->gap / config.sensor_range, 0.0, 1.0);
      speed_feature = std::clamp(n->relative_speed / config.speed_cap, -1.0, 1.0);
    }
    obs[2 + 2 * k] = gap_feature;
    obs[3 + 2 * k] = speed_feature;
  }
  return obs;
}

}  // namespace lanefusion
