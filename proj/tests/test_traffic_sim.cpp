#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "lanefusion/traffic_sim.hpp"
#include "test_support.hpp"

using namespace lanefusion;
using lanefusion::testing::make_scene;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

TEST(Reset, DefaultsPlaceAllHumans) {
  SimConfig cfg;
  const auto s = reset(cfg, 7);
  EXPECT_EQ(s.humans.size(), 35u);
  EXPECT_DOUBLE_EQ(s.ego.longitudinal_pos, 0.0);
  EXPECT_EQ(s.ego.lane, 0);
  EXPECT_TRUE(s.ego.is_ego);
  for (const auto& h : s.humans) {
    EXPECT_GE(h.longitudinal_pos, 50.0);
    EXPECT_LE(h.longitudinal_pos, cfg.road_length);
    EXPECT_TRUE(h.lane == 0 || h.lane == 1);
  }
}

TEST(Reset, SameSeedSameState) {
  SimConfig cfg;
  EXPECT_EQ(reset(cfg, 7), reset(cfg, 7));
  EXPECT_NE(reset(cfg, 7).humans, reset(cfg, 8).humans);
}

TEST(Reset, EmptyRoadNeverCollides) {
  SimConfig cfg;
  cfg.human_count = 0;
  auto s = reset(cfg, 123);
  EXPECT_TRUE(s.humans.empty());
  std::mt19937 pick(5);
  for (int i = 0; i < cfg.max_steps; ++i) {
    auto r = step(s, static_cast<int>(pick() % 6), cfg);
    EXPECT_NE(r.done_reason, DoneReason::Collision);
    EXPECT_GE(r.reward.env_total, 0.0);
    if (r.done) break;
    s = r.next_state;
  }
}

TEST(Reset, InfeasibleDensityThrows) {
  SimConfig cfg;
  cfg.road_length = 100.0;
  cfg.human_count = 50;
  EXPECT_THROW(reset(cfg, 1), std::runtime_error);
}

TEST(SimConfig, ValidateNamesField) {
  SimConfig cfg;
  cfg.dt = 0.0;
  try {
    cfg.validate();
    FAIL() << "expected invalid_argument";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("dt"), std::string::npos);
  }
}

TEST(Step, AccelerateAddsAccelTimesDt) {
  SimConfig cfg;
  auto s = make_scene(0, 0, 20.0, {});
  auto r = step(s, Action::Accelerate, cfg);
  EXPECT_DOUBLE_EQ(r.next_state.ego.speed, 20.5);
  EXPECT_DOUBLE_EQ(r.next_state.ego.longitudinal_pos, 20.5 * 0.25);
  r = step(s, Action::Decelerate, cfg);
  EXPECT_DOUBLE_EQ(r.next_state.ego.speed, 19.5);
}

TEST(Step, SpeedClampedToCap) {
  SimConfig cfg;
  auto s = make_scene(0, 0, cfg.speed_cap, {});
  EXPECT_DOUBLE_EQ(step(s, Action::Accelerate, cfg).next_state.ego.speed, cfg.speed_cap);
  s.ego.speed = 0.2;
  EXPECT_DOUBLE_EQ(step(s, Action::Decelerate, cfg).next_state.ego.speed, 0.0);
}

TEST(Step, TurnLeftFromLeftmostAborts) {
  SimConfig cfg;
  auto s = make_scene(0, 1, 20.0, {});
  auto r = step(s, Action::TurnLeft, cfg);
  EXPECT_EQ(r.next_state.ego.lane, 1);
  EXPECT_TRUE(r.aborted_lane_change);
  EXPECT_FALSE(r.lane_changed);
  EXPECT_DOUBLE_EQ(r.reward.efficiency_lane_change, 0.0);
}

TEST(Step, TurnRightFromRightmostAborts) {
  SimConfig cfg;
  auto r = step(make_scene(0, 0, 20.0, {}), Action::TurnRight, cfg);
  EXPECT_EQ(r.next_state.ego.lane, 0);
  EXPECT_TRUE(r.aborted_lane_change);
}

TEST(Step, UnsafeLaneChangeAborts) {
  SimConfig cfg;
  auto s = make_scene(100, 0, 20.0, {{95, 1, 20.0}});
  auto r = step(s, Action::TurnLeft, cfg);
  EXPECT_EQ(r.next_state.ego.lane, 0);
  EXPECT_TRUE(r.aborted_lane_change);
}

TEST(Step, OverlapIsCollision) {
  SimConfig cfg;
  // Human stopped 8 m ahead (3 m bumper gap); ego at 20 m/s closes 5 m per step.
  auto s = make_scene(100, 0, 20.0, {{108, 0, 0.0}});
  s.humans[0].desired_speed = 0.5;
  auto r = step(s, Action::MaintainSpeed, cfg);
  EXPECT_TRUE(r.done);
  EXPECT_EQ(r.done_reason, DoneReason::Collision);
  EXPECT_DOUBLE_EQ(r.reward.safety, -15.0);
}

TEST(Step, RoadEndAndMaxSteps) {
  SimConfig cfg;
  auto s = make_scene(cfg.road_length - 1.0, 0, 20.0, {});
  EXPECT_EQ(step(s, Action::Straight, cfg).done_reason, DoneReason::RoadEnd);
  s = make_scene(0, 0, 20.0, {});
  s.step = cfg.max_steps - 1;
  auto r = step(s, Action::Straight, cfg);
  EXPECT_EQ(r.done_reason, DoneReason::MaxSteps);
  EXPECT_THROW(step(r.next_state, Action::Straight, cfg), std::logic_error);
}

TEST(Step, RejectsBadActionIndex) {
  SimConfig cfg;
  EXPECT_THROW(step(make_scene(0, 0, 20, {}), 6, cfg), std::out_of_range);
  EXPECT_THROW(step(make_scene(0, 0, 20, {}), -1, cfg), std::out_of_range);
}

TEST(Step, HumansFollowIdm) {
  SimConfig cfg;
  auto s = make_scene(0, 0, 20.0, {{500, 1, 22.0}, {540, 1, 18.0}});
  s.humans[0].desired_speed = 25.0;
  auto r = step(s, Action::Straight, cfg);
  const double gap = 540 - 500 - cfg.vehicle_length;
  const double acc = idm_acceleration(gap, 22.0, 18.0, 25.0);
  EXPECT_DOUBLE_EQ(r.next_state.humans[0].speed, 22.0 + acc * cfg.dt);
  EXPECT_DOUBLE_EQ(r.next_state.humans[1].speed, 18.0);  // free flow at desired speed
}

// Values from tests/oracles/idm_oracle.py.
TEST(Idm, MatchesReferenceOracle) {
  EXPECT_NEAR(idm_acceleration(10, 25, 15, 25), -6.0, 1e-12);
  EXPECT_NEAR(idm_acceleration(40, 20, 18, 25), -0.8922203230275509, 1e-12);
  EXPECT_NEAR(idm_acceleration(60, 22, 24, 26), 0.5238943732375008, 1e-12);
  EXPECT_NEAR(idm_acceleration(25, 10, 10, 20), 0.7126499999999999, 1e-12);
}

TEST(Idm, FreeFlowCases) {
  EXPECT_DOUBLE_EQ(idm_acceleration(kInf, 20, 20, 20), 0.0);
  EXPECT_DOUBLE_EQ(idm_acceleration(kInf, 0, 0, 20), 1.5);
}

TEST(Idm, EquilibriumGapGivesZeroAccelAtFreeTermBalance) {
  // With equal speeds s* = s0 + vT, so accel vanishes when (s*/gap)^2 = 1 - (v/v0)^4.
  const double v = 15.0, v0 = 25.0;
  const double s_star = 2.0 + v * 1.5;
  const double gap = s_star / std::sqrt(1.0 - std::pow(v / v0, 4));
  EXPECT_NEAR(idm_acceleration(gap, v, v, v0), 0.0, 1e-12);
}

TEST(LaneChangeSafe, Examples) {
  SimConfig cfg;
  EXPECT_TRUE(lane_change_safe(make_scene(100, 0, 20, {}), 1, cfg));
  EXPECT_FALSE(lane_change_safe(make_scene(100, 0, 20, {{95, 1, 20}}), 1, cfg));
  // Bumper gap 30 m (35 m between positions), closing 20 m/s -> TTC 1.5 s.
  EXPECT_FALSE(lane_change_safe(make_scene(100, 0, 10, {{65, 1, 30}}), 1, cfg));
  EXPECT_TRUE(lane_change_safe(make_scene(100, 0, 28, {{65, 1, 30}}), 1, cfg));
  EXPECT_FALSE(lane_change_safe(make_scene(100, 0, 20, {{110, 1, 20}}), 1, cfg));
}

TEST(Reward, ThresholdCaseIsZero) {
  SimConfig cfg;
  auto prev = make_scene(0, 1, cfg.v_min_target, {});
  auto r = compute_reward(prev, Action::Straight, prev, false, false, cfg);
  EXPECT_DOUBLE_EQ(r.env_total, 0.0);
}

TEST(Reward, LaneChangePastSlowerLeader) {
  SimConfig cfg;
  auto prev = make_scene(100, 0, 29.5, {{140, 0, 20}});
  auto next = prev;
  next.ego.lane = 1;
  next.ego.speed = cfg.v_max_target;
  auto r = compute_reward(prev, Action::TurnLeft, next, false, false, cfg);
  EXPECT_DOUBLE_EQ(r.env_total, 11.0);
  // No slower leader, no lane-change credit.
  auto empty = make_scene(100, 0, 29.5, {});
  EXPECT_DOUBLE_EQ(compute_reward(empty, Action::TurnLeft, next, false, false, cfg).env_total, 1.0);
}

TEST(Reward, CollisionInRightLaneAtMaxSpeed) {
  SimConfig cfg;
  auto s = make_scene(0, 0, cfg.v_max_target, {});
  auto r = compute_reward(s, Action::Straight, s, false, true, cfg);
  EXPECT_DOUBLE_EQ(r.env_total, -12.0);
  EXPECT_DOUBLE_EQ(r.shaping_bonus, 0.0);
}

TEST(Observe, EmptyRoadEncoding) {
  SimConfig cfg;
  const auto o = observe(make_scene(0, 0, 0.0, {}), cfg);
  const std::array<double, 10> expected = {0, 0, 1, 0, 1, 0, 1, 0, 1, 0};
  EXPECT_EQ(o.values, expected);
}

TEST(Observe, SpeedAndLane) {
  SimConfig cfg;
  const auto o = observe(make_scene(0, 1, 20.0, {}), cfg);
  EXPECT_NEAR(o[0], 20.0 / 33.0, 1e-15);
  EXPECT_DOUBLE_EQ(o[1], 1.0);
}

TEST(Observe, LeaderFeatures) {
  SimConfig cfg;
  // 55 m between positions is a 50 m bumper gap.
  const auto o = observe(make_scene(100, 0, 25.0, {{155, 0, 15.0}, {60, 1, 30.0}}), cfg);
  EXPECT_DOUBLE_EQ(o[2], 0.5);
  EXPECT_DOUBLE_EQ(o[3], -10.0 / 33.0);
  EXPECT_DOUBLE_EQ(o[4], 1.0);  // no same-lane follower
  EXPECT_DOUBLE_EQ(o[8], 35.0 / 100.0);
  EXPECT_DOUBLE_EQ(o[9], 5.0 / 33.0);
}

TEST(Observe, BeyondSensorRangeIsMissing) {
  SimConfig cfg;
  const auto o = observe(make_scene(0, 0, 25.0, {{106, 0, 15.0}}), cfg);
  EXPECT_DOUBLE_EQ(o[2], 1.0);
  EXPECT_DOUBLE_EQ(o[3], 0.0);
}

TEST(Actions, NamesRoundTrip) {
  for (Action a : kAllActions) EXPECT_EQ(action_from_name(action_name(a)), a);
  EXPECT_EQ(action_name(Action::MaintainSpeed), "MAINTAIN");
  EXPECT_FALSE(action_from_name("JUMP").has_value());
}

TEST(Invariants, RandomRollouts) {
  SimConfig cfg;
  std::mt19937_64 rng(99);
  int steps = 0;
  for (std::uint64_t seed = 0; steps < 3000; ++seed) {
    auto s = reset(cfg, seed);
    for (;;) {
      auto r = step(s, static_cast<int>(rng() % 6), cfg);
      ++steps;
      EXPECT_GE(r.reward.env_total, cfg.delta1);
      EXPECT_LE(r.reward.env_total, 1.0 + cfg.delta2 + cfg.delta3);
      for (double x : observe(r.next_state, cfg).values) {
        EXPECT_GE(x, -1.0);
        EXPECT_LE(x, 1.0);
      }
      EXPECT_LE(r.next_state.ego.longitudinal_pos - s.ego.longitudinal_pos,
                cfg.speed_cap * cfg.dt + 1e-9);
      if (r.done) break;
      s = r.next_state;
    }
  }
}

TEST(Collide, Symmetric) {
  VehicleKinematics a{1, 10.0, 0, 20, false, 20}, b{2, 14.0, 0, 20, false, 20};
  EXPECT_TRUE(vehicles_collide(a, b, 5.0));
  EXPECT_TRUE(vehicles_collide(b, a, 5.0));
  b.lane = 1;
  EXPECT_FALSE(vehicles_collide(a, b, 5.0));
  EXPECT_FALSE(vehicles_collide(b, a, 5.0));
}
