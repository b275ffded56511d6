#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "frozen_constants.hpp"
#include "rlcf/idm.hpp"
#include "rlcf/sim.hpp"

using namespace rlcf;

namespace {

class ConstantAccel : public Controller {
 public:
  explicit ConstantAccel(double a) : a_(a) {}
  double acceleration(const Scene&) const override { return a_; }
  std::string id() const override { return "const"; }

 private:
  double a_;
};

}  // namespace

TEST(StepVehicle, EulerBallistic) {
  const auto s = step_vehicle({0.0, 10.0, 0.0, 0.0}, 2.0, 0.1);
  EXPECT_NEAR(s.v, 10.2, 1e-12);
  EXPECT_NEAR(s.x, 1.01, 1e-12);
  EXPECT_EQ(s.a, 2.0);
}

TEST(StepVehicle, StandstillFloor) {
  const auto s = step_vehicle({0.0, 0.0, 0.0, 0.0}, -9.0, 0.1);
  EXPECT_EQ(s.v, 0.0);
  EXPECT_EQ(s.x, 0.0);
}

TEST(StepVehicle, StopsInsideTheStep) {
  const auto s = step_vehicle({0.0, 0.5, 0.0, 0.0}, -9.0, 0.1);
  EXPECT_EQ(s.v, 0.0);
  EXPECT_NEAR(s.x, frozen::kStopDistanceHalfMps, 1e-15);
}

TEST(StepVehicle, KeepsPreviousAcceleration) {
  const auto s = step_vehicle({0.0, 5.0, 1.0, 0.0}, -2.0, 0.1);
  EXPECT_EQ(s.a_prev, 1.0);
  EXPECT_EQ(s.a, -2.0);
}

TEST(StepVehicle, RejectsNonFinite) {
  EXPECT_THROW(step_vehicle({0.0, NAN, 0.0, 0.0}, 0.0, 0.1), std::invalid_argument);
  EXPECT_THROW(step_vehicle({0.0, 1.0, 0.0, 0.0}, INFINITY, 0.1), std::invalid_argument);
  EXPECT_THROW(step_vehicle({0.0, 1.0, 0.0, 0.0}, 0.0, 0.0), std::invalid_argument);
}

TEST(StepVehicle, ZeroAccelerationAdvancesExactly) {
  VehicleState s{0.0, 7.25, 0.0, 0.0};
  for (int k = 0; k < 100; ++k) {
    const double x0 = s.x;
    s = step_vehicle(s, 0.0, 0.1);
    EXPECT_NEAR(s.x - x0, 7.25 * 0.1, 1e-12);
  }
}

TEST(Gap, BumperToBumper) {
  EXPECT_DOUBLE_EQ(gap({120, 0, 0, 0}, {0, 0, 0, 0}, 5.0), 115.0);
  EXPECT_DOUBLE_EQ(gap({5, 0, 0, 0}, {0, 0, 0, 0}, 5.0), 0.0);
  EXPECT_DOUBLE_EQ(observed_gap(250.0, 200.0), 200.0);
  EXPECT_DOUBLE_EQ(observed_gap(50.0, 200.0), 50.0);
}

TEST(RunEpisode, IdmStandstillEquilibrium) {
  IdmParams p;
  IdmController idm(p, IdmClamp::unclamped);
  std::vector<double> leader(501, 0.0);
  SimConfig cfg;
  const auto tr = run_episode(leader, idm, FollowerInit{0.0, p.g_min, 0.0}, cfg, AgentParams{});
  EXPECT_FALSE(tr.crashed);
  ASSERT_EQ(tr.steps(), 500u);
  for (double g : tr.gaps[0]) EXPECT_DOUBLE_EQ(g, p.g_min);
}

TEST(RunEpisode, IdmConvergesToEquilibriumGap) {
  IdmParams p;
  IdmController idm(p, IdmClamp::unclamped);
  const double v_e = 12.0;
  std::vector<double> leader(3001, v_e);
  SimConfig cfg;
  cfg.episode_steps = 3000;
  const auto tr = run_episode(leader, idm, FollowerInit{8.0, 40.0, 0.0}, cfg, AgentParams{});
  EXPECT_FALSE(tr.crashed);
  EXPECT_NEAR(tr.gaps[0].back(), equilibrium_gap(v_e, p), 1e-6);
}

TEST(RunEpisode, LeaderTrapezoidalIntegration) {
  ConstantAccel zero(0.0);
  std::vector<double> leader(101, 3.0);
  SimConfig cfg;
  cfg.episode_steps = 100;
  const auto tr = run_episode(leader, zero, FollowerInit{3.0, 30.0, 0.0}, cfg, AgentParams{});
  EXPECT_NEAR(tr.leader.back().x - tr.leader_initial.x, 100 * 3.0 * 0.1, 1e-9);
  EXPECT_NEAR(tr.gaps[0].back(), 30.0, 1e-9);
}

TEST(RunEpisode, CrashTerminatesAndFlags) {
  ConstantAccel full(2.0);
  std::vector<double> leader(501, 0.0);
  SimConfig cfg;
  const auto tr = run_episode(leader, full, FollowerInit{10.0, 10.0, 0.0}, cfg, AgentParams{});
  ASSERT_TRUE(tr.crashed);
  ASSERT_TRUE(tr.crash_step.has_value());
  EXPECT_EQ(tr.steps(), static_cast<std::size_t>(*tr.crash_step) + 1);
  EXPECT_LE(tr.gaps[0].back(), 0.0);
  for (std::size_t k = 0; k + 1 < tr.steps(); ++k) EXPECT_GT(tr.gaps[0][k], 0.0);
  EXPECT_EQ(tr.rewards[0].back().total, -1.0);
}

TEST(RunEpisode, ContinueClampedKeepsRunning) {
  ConstantAccel full(2.0);
  std::vector<double> leader(501, 0.0);
  SimConfig cfg;
  cfg.crash_mode = CrashMode::continue_clamped;
  const auto tr = run_episode(leader, full, FollowerInit{10.0, 10.0, 0.0}, cfg, AgentParams{});
  EXPECT_TRUE(tr.crashed);
  EXPECT_EQ(tr.steps(), 500u);
  for (double g : tr.gaps[0]) EXPECT_GE(g, 0.0);
}

TEST(RunEpisode, InvariantsOnRandomPlatoon) {
  IdmController idm(IdmParams{}, IdmClamp::clamped);
  std::vector<double> leader;
  for (int k = 0; k <= 1000; ++k) leader.push_back(8.0 + 6.0 * std::sin(k * 0.02));
  const Controller* c[] = {&idm, &idm, &idm};
  const FollowerInit init[] = {{8, 15, 0}, {8, 15, 0}, {8, 15, 0}};
  SimConfig cfg;
  cfg.episode_steps = 1000;
  const auto tr = run_episode(leader, c, init, cfg, AgentParams{});
  EXPECT_FALSE(tr.crashed);
  for (std::size_t i = 0; i < 3; ++i) {
    double x_prev = tr.followers_initial[i].x;
    ASSERT_EQ(tr.followers[i].size(), tr.steps());
    ASSERT_EQ(tr.gaps[i].size(), tr.steps());
    ASSERT_EQ(tr.rewards[i].size(), tr.steps());
    for (const auto& s : tr.followers[i]) {
      EXPECT_GE(s.v, 0.0);
      EXPECT_GE(s.x, x_prev);
      EXPECT_GE(s.a, -9.0);
      EXPECT_LE(s.a, 2.0);
      x_prev = s.x;
    }
  }
}

TEST(RunEpisode, Preconditions) {
  ConstantAccel zero(0.0);
  SimConfig cfg;
  std::vector<double> short_leader(10, 0.0);
  EXPECT_THROW(run_episode(short_leader, zero, FollowerInit{0, 10, 0}, cfg, AgentParams{}), std::invalid_argument);
  std::vector<double> leader(501, 0.0);
  EXPECT_THROW(run_episode(leader, zero, FollowerInit{0, 0.0, 0}, cfg, AgentParams{}), std::invalid_argument);
  SimConfig bad;
  bad.dt = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
}
