#pragma once

// Point-mass longitudinal kinematics and episode stepping for one externally
// driven leader followed by a platoon of controlled vehicles.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rlcf/controller.hpp"
#include "rlcf/errors.hpp"
#include "rlcf/rewards.hpp"

namespace rlcf {

struct VehicleState {
  double x = 0.0;       // position, m
  double v = 0.0;       // speed, m/s
  double a = 0.0;       // acceleration applied during the last step, m/s^2
  double a_prev = 0.0;  // acceleration of the step before, m/s^2
};

enum class CrashMode { terminate, continue_clamped };

struct SimConfig {
  double dt = 0.1;
  int episode_steps = 500;
  double g_max = 200.0;
  double vehicle_length = 5.0;
  CrashMode crash_mode = CrashMode::terminate;
  bool record_rewards = true;  // off for objective evaluations that only need gaps

  void validate() const {
    if (!(dt > 0.0)) throw ConfigError("sim.dt: must be positive");
    if (episode_steps <= 0) throw ConfigError("sim.episode_steps: must be positive");
    if (!(g_max > 0.0)) throw ConfigError("sim.g_max: must be positive");
    if (!(vehicle_length >= 0.0)) throw ConfigError("sim.vehicle_length: must be non-negative");
  }
};

/// Euler update for speed, trapezoidal (ballistic) update for position. A
/// vehicle whose speed would turn negative stops exactly inside the step.
inline VehicleState step_vehicle(const VehicleState& s, double commanded_a, double dt) {
  if (!std::isfinite(s.x) || !std::isfinite(s.v) || !std::isfinite(commanded_a) ||
      !std::isfinite(dt)) {
    throw std::invalid_argument("step_vehicle: non-finite input");
  }
  if (!(dt > 0.0)) throw std::invalid_argument("step_vehicle: dt must be positive");
  VehicleState n;
  n.a = commanded_a;
  n.a_prev = s.a;
  const double v_next = s.v + commanded_a * dt;
  if (v_next < 0.0) {
    n.v = 0.0;
    n.x = s.x + (s.v > 0.0 ? s.v * s.v / (2.0 * -commanded_a) : 0.0);
  } else {
    n.v = v_next;
    n.x = s.x + 0.5 * (s.v + v_next) * dt;
  }
  return n;
}

/// Raw bumper-to-bumper gap.
inline double gap(const VehicleState& leader, const VehicleState& follower,
                  double vehicle_length = 5.0) {
  return leader.x - follower.x - vehicle_length;
}

/// Gap as seen by a policy: anything beyond g_max reads as g_max.
inline double observed_gap(double raw_gap, double g_max) { return std::min(raw_gap, g_max); }

struct FollowerInit {
  double v = 0.0;    // initial speed
  double gap = 0.0;  // initial gap to its predecessor
  double a = 0.0;    // initial acceleration state
};

/// Time series of one episode. Entry k holds the state at the end of step k,
/// i.e. at time (k + 1) * dt; the initial configuration is kept separately.
struct EpisodeTrace {
  double dt = 0.1;
  double vehicle_length = 5.0;
  std::vector<double> time;
  VehicleState leader_initial;
  std::vector<VehicleState> followers_initial;
  std::vector<VehicleState> leader;
  std::vector<std::vector<VehicleState>> followers;      // [follower][step]
  std::vector<std::vector<double>> gaps;                 // [follower][step], raw
  std::vector<std::vector<double>> jerks;                // [follower][step]
  std::vector<std::vector<RewardBreakdown>> rewards;     // [follower][step]
  std::vector<std::string> controller_ids;
  bool crashed = false;
  std::optional<int> crash_step;
  std::optional<int> crash_vehicle;

  std::size_t steps() const { return time.size(); }
  std::size_t follower_count() const { return followers.size(); }
};

/// Drives followers[0] behind the leader, followers[i] behind followers[i-1].
/// The leader position is integrated from its speed series by the trapezoidal
/// rule; its acceleration is the forward difference of that series. If the
/// series is exactly episode_steps long, its last value is held for the final
/// step.
inline EpisodeTrace run_episode(std::span<const double> leader_speeds,
                                std::span<const Controller* const> followers,
                                std::span<const FollowerInit> init, const SimConfig& cfg,
                                const AgentParams& reward_params) {
  cfg.validate();
  const int steps = cfg.episode_steps;
  if (followers.empty()) throw std::invalid_argument("run_episode: need at least one follower");
  if (init.size() != followers.size()) {
    throw std::invalid_argument("run_episode: one initial condition per follower required");
  }
  if (leader_speeds.size() < static_cast<std::size_t>(steps)) {
    throw std::invalid_argument("run_episode: leader speed series shorter than the episode");
  }
  for (const auto& i : init) {
    if (!(i.gap > 0.0)) throw std::invalid_argument("run_episode: initial gaps must be positive");
    if (!(i.v >= 0.0)) throw std::invalid_argument("run_episode: initial speeds must be non-negative");
  }
  auto leader_speed = [&](int k) {
    return std::max(0.0, leader_speeds[std::min<std::size_t>(k, leader_speeds.size() - 1)]);
  };

  const std::size_t n = followers.size();
  const double L = cfg.vehicle_length;
  EpisodeTrace tr;
  tr.dt = cfg.dt;
  tr.vehicle_length = L;
  tr.followers.resize(n);
  tr.gaps.resize(n);
  tr.jerks.resize(n);
  tr.rewards.resize(n);
  for (const auto* c : followers) tr.controller_ids.push_back(c->id());

  VehicleState leader{0.0, leader_speed(0), 0.0, 0.0};
  std::vector<VehicleState> cars(n);
  double front_x = leader.x;
  for (std::size_t i = 0; i < n; ++i) {
    cars[i].x = front_x - L - init[i].gap;
    cars[i].v = init[i].v;
    cars[i].a = init[i].a;
    cars[i].a_prev = init[i].a;
    front_x = cars[i].x;
  }
  tr.leader_initial = leader;
  tr.followers_initial = cars;

  for (auto& f : tr.followers) f.reserve(steps);
  tr.leader.reserve(steps);
  tr.time.reserve(steps);

  std::vector<double> commands(n);
  for (int k = 0; k < steps; ++k) {
    // All controllers observe the configuration at the start of the step.
    for (std::size_t i = 0; i < n; ++i) {
      const VehicleState& front = i == 0 ? leader : cars[i - 1];
      Scene scene;
      scene.v = cars[i].v;
      scene.a = cars[i].a;
      scene.leader = LeaderView{front.v, gap(front, cars[i], L)};
      commands[i] = followers[i]->acceleration(scene);
    }

    const double u0 = leader_speed(k);
    const double u1 = leader_speed(k + 1);
    VehicleState next_leader;
    next_leader.x = leader.x + 0.5 * (u0 + u1) * cfg.dt;
    next_leader.v = u1;
    next_leader.a = (u1 - u0) / cfg.dt;
    next_leader.a_prev = leader.a;
    leader = next_leader;
    for (std::size_t i = 0; i < n; ++i) cars[i] = step_vehicle(cars[i], commands[i], cfg.dt);

    bool crash_now = false;
    for (std::size_t i = 0; i < n; ++i) {
      VehicleState& front = i == 0 ? leader : cars[i - 1];
      double g = gap(front, cars[i], L);
      const double jerk = k == 0 ? 0.0 : (cars[i].a - cars[i].a_prev) / cfg.dt;
      RewardBreakdown r;
      if (g <= 0.0) {
        r = crash_reward();
        if (!tr.crashed) {
          tr.crashed = true;
          tr.crash_step = k;
          tr.crash_vehicle = static_cast<int>(i);
        }
        crash_now = true;
        if (cfg.crash_mode == CrashMode::continue_clamped) {
          cars[i].x = front.x - L;
          cars[i].v = std::min(cars[i].v, front.v);
          g = 0.0;
        }
      } else if (cfg.record_rewards) {
        r = reward_follow(cars[i].v, front.v, g, jerk, reward_params);
      }
      tr.followers[i].push_back(cars[i]);
      tr.gaps[i].push_back(g);
      tr.jerks[i].push_back(jerk);
      tr.rewards[i].push_back(r);
    }
    tr.leader.push_back(leader);
    tr.time.push_back((k + 1) * cfg.dt);
    if (crash_now && cfg.crash_mode == CrashMode::terminate) break;
  }
  return tr;
}

inline EpisodeTrace run_episode(std::span<const double> leader_speeds, const Controller& follower,
                                const FollowerInit& init, const SimConfig& cfg,
                                const AgentParams& reward_params) {
  const Controller* c[] = {&follower};
  const FollowerInit i[] = {init};
  return run_episode(leader_speeds, c, i, cfg, reward_params);
}

/// A single vehicle on an empty road; returns the end-of-step states.
inline std::vector<VehicleState> run_leaderless(const Controller& controller, double v0, double a0,
                                                int steps, double dt) {
  std::vector<VehicleState> out;
  out.reserve(steps);
  VehicleState s{0.0, v0, a0, a0};
  for (int k = 0; k < steps; ++k) {
    Scene scene;
    scene.v = s.v;
    scene.a = s.a;
    s = step_vehicle(s, controller.acceleration(scene), dt);
    out.push_back(s);
  }
  return out;
}

}  // namespace rlcf
