#pragma once

// Validation scenarios and their metrics: external leader profile, platoons,
// time-gap sweeps, time-to-collision and the cross-model comparison.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "rlcf/controller.hpp"
#include "rlcf/errors.hpp"
#include "rlcf/idm.hpp"
#include "rlcf/parallel.hpp"
#include "rlcf/rewards.hpp"
#include "rlcf/sim.hpp"
#include "rlcf/stochastic.hpp"

namespace rlcf {

using json = nlohmann::json;

// ---------------------------------------------------------------- metrics

/// Population variance (divides by n).
inline double population_variance(std::span<const double> x) {
  if (x.empty()) return 0.0;
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / double(x.size());
  double s = 0.0;
  for (double v : x) s += (v - mean) * (v - mean);
  return s / double(x.size());
}

inline std::vector<double> leader_accelerations(const EpisodeTrace& tr) {
  std::vector<double> a;
  a.reserve(tr.steps());
  for (const auto& s : tr.leader) a.push_back(s.a);
  return a;
}

inline std::vector<double> follower_accelerations(const EpisodeTrace& tr, std::size_t i) {
  std::vector<double> a;
  a.reserve(tr.steps());
  for (const auto& s : tr.followers.at(i)) a.push_back(s.a);
  return a;
}

/// Acceleration variance per vehicle, leader first.
inline std::vector<double> acceleration_variances(const EpisodeTrace& tr) {
  std::vector<double> out{population_variance(leader_accelerations(tr))};
  for (std::size_t i = 0; i < tr.follower_count(); ++i) {
    out.push_back(population_variance(follower_accelerations(tr, i)));
  }
  return out;
}

struct Histogram {
  double lo = 0.0;
  double width = 0.5;
  std::vector<long> counts;
  long underflow = 0;
  long overflow = 0;

  long total() const { return underflow + overflow + std::accumulate(counts.begin(), counts.end(), 0L); }
  void add(double x) {
    if (x < lo) {
      ++underflow;
      return;
    }
    const auto bin = static_cast<std::size_t>((x - lo) / width);
    if (bin >= counts.size()) {
      ++overflow;
    } else {
      ++counts[bin];
    }
  }
};

inline Histogram make_histogram(double lo, double hi, double width) {
  if (!(hi > lo) || !(width > 0.0)) throw std::invalid_argument("histogram: bad range");
  Histogram h;
  h.lo = lo;
  h.width = width;
  h.counts.assign(static_cast<std::size_t>(std::llround((hi - lo) / width)), 0);
  return h;
}

struct TtcSample {
  int step = 0;
  int follower = 0;
  double ttc = 0.0;
};

/// Time to collision g / (v - v_l) at every step where the follower closes
/// in; non-closing steps are omitted.
inline std::vector<TtcSample> compute_ttc(const EpisodeTrace& tr) {
  std::vector<TtcSample> out;
  for (std::size_t i = 0; i < tr.follower_count(); ++i) {
    for (std::size_t k = 0; k < tr.followers[i].size(); ++k) {
      const double v = tr.followers[i][k].v;
      const double v_l = i == 0 ? tr.leader[k].v : tr.followers[i - 1][k].v;
      const double g = tr.gaps[i][k];
      if (v > v_l && g > 0.0) out.push_back({static_cast<int>(k), static_cast<int>(i), g / (v - v_l)});
    }
  }
  return out;
}

inline constexpr double kTtcHistogramMax = 20.0;
inline constexpr double kTtcBinWidth = 0.5;

inline Histogram ttc_histogram(std::span<const TtcSample> samples) {
  Histogram h = make_histogram(0.0, kTtcHistogramMax, kTtcBinWidth);
  for (const auto& s : samples) h.add(s.ttc);
  return h;
}

/// Steps at which the leader is braking hard: its deceleration averaged over
/// the trailing `window_s` exceeds `threshold`. Each such step also marks the
/// following `hold_s` so the follower's reaction is covered.
inline std::vector<bool> leader_emergency_mask(const EpisodeTrace& tr, double threshold = 5.0,
                                               double window_s = 1.0, double hold_s = 2.0) {
  const std::size_t n = tr.steps();
  std::vector<bool> mask(n, false);
  const auto w = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(window_s / tr.dt)));
  const auto hold = static_cast<std::size_t>(std::llround(hold_s / tr.dt));
  for (std::size_t k = 0; k < n; ++k) {
    const double v_now = tr.leader[k].v;
    const double v_before = k + 1 >= w + 1 ? tr.leader[k - w].v : tr.leader_initial.v;
    const double span_s = k + 1 >= w + 1 ? double(w) * tr.dt : double(k + 1) * tr.dt;
    if ((v_before - v_now) / span_s > threshold) {
      for (std::size_t j = k; j < std::min(n, k + hold + 1); ++j) mask[j] = true;
    }
  }
  return mask;
}

struct FollowerMetrics {
  std::string controller;
  double accel_variance = 0.0;
  double min_gap = 0.0;
  double mean_gap = 0.0;
  double accumulated_reward = 0.0;  // undiscounted sum of the follow reward
  long jerk_exceedances = 0;
  double max_deceleration = 0.0;
  double max_speed = 0.0;
};

inline constexpr double kComfortJerk = 1.5;  // m/s^3

struct MetricsReport {
  double leader_accel_variance = 0.0;
  std::vector<FollowerMetrics> followers;
  int crashes = 0;
  std::optional<int> crash_step;
  std::vector<TtcSample> ttc;
  Histogram ttc_hist = make_histogram(0.0, kTtcHistogramMax, kTtcBinWidth);
  std::optional<double> sse_log_gap;

  std::vector<double> accel_variances() const {
    std::vector<double> v{leader_accel_variance};
    for (const auto& f : followers) v.push_back(f.accel_variance);
    return v;
  }
  double min_ttc() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& s : ttc) m = std::min(m, s.ttc);
    return m;
  }
};

inline MetricsReport compute_metrics(const EpisodeTrace& tr) {
  MetricsReport m;
  m.leader_accel_variance = population_variance(leader_accelerations(tr));
  for (std::size_t i = 0; i < tr.follower_count(); ++i) {
    FollowerMetrics f;
    f.controller = i < tr.controller_ids.size() ? tr.controller_ids[i] : "";
    f.accel_variance = population_variance(follower_accelerations(tr, i));
    const auto& g = tr.gaps[i];
    if (!g.empty()) {
      f.min_gap = *std::min_element(g.begin(), g.end());
      f.mean_gap = std::accumulate(g.begin(), g.end(), 0.0) / double(g.size());
    }
    for (const auto& r : tr.rewards[i]) f.accumulated_reward += r.total;
    for (double j : tr.jerks[i]) f.jerk_exceedances += std::abs(j) > kComfortJerk;
    for (const auto& s : tr.followers[i]) {
      f.max_deceleration = std::max(f.max_deceleration, -s.a);
      f.max_speed = std::max(f.max_speed, s.v);
    }
    m.followers.push_back(f);
  }
  m.crashes = tr.crashed ? 1 : 0;
  m.crash_step = tr.crash_step;
  m.ttc = compute_ttc(tr);
  m.ttc_hist = ttc_histogram(m.ttc);
  return m;
}

inline json histogram_to_json(const Histogram& h) {
  return {{"lo", h.lo}, {"width", h.width}, {"counts", h.counts},
          {"underflow", h.underflow}, {"overflow", h.overflow}};
}

inline json metrics_to_json(const MetricsReport& m) {
  json followers = json::array();
  for (const auto& f : m.followers) {
    followers.push_back({{"controller", f.controller},
                         {"accel_variance", f.accel_variance},
                         {"min_gap", f.min_gap},
                         {"mean_gap", f.mean_gap},
                         {"accumulated_reward", f.accumulated_reward},
                         {"jerk_exceedances", f.jerk_exceedances},
                         {"max_deceleration", f.max_deceleration},
                         {"max_speed", f.max_speed}});
  }
  json j = {{"leader_accel_variance", m.leader_accel_variance},
            {"variance_formula", "population"},
            {"followers", followers},
            {"crashes", m.crashes},
            {"ttc_samples", m.ttc.size()},
            {"ttc_histogram", histogram_to_json(m.ttc_hist)}};
  if (m.crash_step) j["crash_step"] = *m.crash_step;
  if (!m.ttc.empty()) j["min_ttc"] = m.min_ttc();
  if (m.sse_log_gap) j["sse_log_gap"] = *m.sse_log_gap;
  return j;
}

// ---------------------------------------------------------------- leaders

/// OU leader series of `steps + 1` values starting at v0.
inline std::vector<double> ou_leader(std::uint64_t seed, std::uint64_t episode, int steps, double v0,
                                     const OuParams& p = OuParams::leader()) {
  RandomStream rng(seed, StreamPurpose::leader, episode);
  return generate_leader_profile(p, steps + 1, v0, rng);
}

/// Speed levels held for `hold_s` each, joined by ramps at `ramp_accel`.
inline std::vector<double> plateau_profile(std::span<const double> levels, double hold_s,
                                           double ramp_accel, double dt) {
  if (levels.empty() || !(hold_s > 0.0) || !(ramp_accel > 0.0)) {
    throw std::invalid_argument("plateau_profile: bad arguments");
  }
  std::vector<double> v;
  double cur = levels.front();
  const auto hold = static_cast<int>(std::llround(hold_s / dt));
  for (double target : levels) {
    while (std::abs(target - cur) > 1e-12) {
      const double step = std::min(std::abs(target - cur), ramp_accel * dt);
      cur += target > cur ? step : -step;
      v.push_back(cur);
    }
    for (int k = 0; k < hold; ++k) v.push_back(cur);
  }
  return v;
}

// ---------------------------------------------------------------- scenarios

struct ExternalProfileConfig {
  double initial_gap = 200.0;
  double follower_v0 = 0.0;
  double leader_departure = 30.0;  // s, end of the initial standstill
  double emergency_start = 46.0;   // s
  double emergency_window = 10.0;  // s
  double exceed_time = 88.0;       // s, leader passes the follower's desired speed
};

struct ExternalProfileResult {
  EpisodeTrace trace;
  MetricsReport metrics;
  double standstill_gap = 0.0;           // gap when the leader departs
  double emergency_peak_decel = 0.0;     // follower, inside the emergency window
  double max_speed_after_exceed = 0.0;   // follower
};

inline std::size_t step_at(double t, double dt) {
  // Entry k of a trace holds time (k + 1) * dt.
  return static_cast<std::size_t>(std::max(0.0, std::round(t / dt) - 1.0));
}

inline ExternalProfileResult scenario_external_profile(std::span<const double> leader,
                                                       const Controller& follower,
                                                       const ExternalProfileConfig& cfg,
                                                       SimConfig sim, const AgentParams& p) {
  if (leader.size() < 2) throw DataError("external profile: leader series too short");
  sim.episode_steps = static_cast<int>(leader.size()) - 1;
  ExternalProfileResult r;
  r.trace = run_episode(leader, follower, FollowerInit{cfg.follower_v0, cfg.initial_gap, 0.0}, sim, p);
  r.metrics = compute_metrics(r.trace);
  const auto& f = r.trace.followers[0];
  const std::size_t n = f.size();
  const std::size_t k_dep = step_at(cfg.leader_departure, sim.dt);
  if (k_dep < n) r.standstill_gap = r.trace.gaps[0][k_dep];
  const std::size_t k0 = step_at(cfg.emergency_start, sim.dt);
  const std::size_t k1 = std::min(n, step_at(cfg.emergency_start + cfg.emergency_window, sim.dt) + 1);
  for (std::size_t k = k0; k < k1; ++k) r.emergency_peak_decel = std::max(r.emergency_peak_decel, -f[k].a);
  for (std::size_t k = step_at(cfg.exceed_time, sim.dt); k < n; ++k) {
    r.max_speed_after_exceed = std::max(r.max_speed_after_exceed, f[k].v);
  }
  return r;
}

inline json external_profile_to_json(const ExternalProfileResult& r) {
  return {{"crashed", r.trace.crashed},
          {"standstill_gap", r.standstill_gap},
          {"emergency_peak_deceleration", r.emergency_peak_decel},
          {"max_speed_after_leader_exceeds_v_des", r.max_speed_after_exceed},
          {"metrics", metrics_to_json(r.metrics)}};
}

struct PlatoonResult {
  EpisodeTrace trace;
  MetricsReport metrics;
  std::vector<double> variances;  // leader first
};

/// Followers start at the leader's initial speed, spaced at g_min + v0 * T.
inline PlatoonResult scenario_platoon(std::span<const double> leader,
                                      std::span<const Controller* const> followers, SimConfig sim,
                                      const AgentParams& p) {
  if (followers.empty()) throw ConfigError("platoon: need at least one follower");
  sim.episode_steps = std::min<int>(sim.episode_steps, static_cast<int>(leader.size()) - 1);
  const double v0 = leader.front();
  std::vector<FollowerInit> init(followers.size(), FollowerInit{v0, p.g_min + v0 * p.T, 0.0});
  PlatoonResult r;
  r.trace = run_episode(leader, followers, init, sim, p);
  r.metrics = compute_metrics(r.trace);
  r.variances = acceleration_variances(r.trace);
  return r;
}

/// Each vehicle's variance is at most `slack` times its predecessor's.
inline bool variance_non_increasing(std::span<const double> variances, double slack) {
  for (std::size_t i = 1; i < variances.size(); ++i) {
    if (variances[i] > slack * variances[i - 1]) return false;
  }
  return true;
}

struct SteadyFollowing {
  double min_speed = 2.0;           // m/s
  double max_relative_speed = 0.5;  // m/s
  double max_acceleration = 0.5;    // m/s^2
};

/// Realized time gaps (g - g_min) / v of follower i at steady-following steps.
inline std::vector<double> realized_time_gaps(const EpisodeTrace& tr, std::size_t i, double g_min,
                                              const SteadyFollowing& steady = {}) {
  std::vector<double> out;
  for (std::size_t k = 0; k < tr.followers.at(i).size(); ++k) {
    const auto& s = tr.followers[i][k];
    const double v_l = i == 0 ? tr.leader[k].v : tr.followers[i - 1][k].v;
    if (s.v > steady.min_speed && std::abs(s.v - v_l) < steady.max_relative_speed &&
        std::abs(s.a) < steady.max_acceleration) {
      out.push_back((tr.gaps[i][k] - g_min) / s.v);
    }
  }
  return out;
}

struct TimeGapStats {
  double T = 0.0;
  double mean_time_gap = 0.0;
  std::size_t samples = 0;
  bool crashed = false;
};

struct DriverAgent {
  double T = 0.0;
  const Controller* controller = nullptr;
};

/// Runs every agent, with its own T in the reward parameters, behind the same
/// leader.
inline std::vector<TimeGapStats> scenario_driver_characteristics(std::span<const double> leader,
                                                                 std::span<const DriverAgent> agents,
                                                                 SimConfig sim, AgentParams p,
                                                                 double initial_gap = 50.0,
                                                                 const SteadyFollowing& steady = {}) {
  if (agents.empty()) throw ConfigError("driver characteristics: no agents");
  sim.episode_steps = static_cast<int>(leader.size()) - 1;
  std::vector<TimeGapStats> out;
  for (const auto& a : agents) {
    if (!a.controller) throw ConfigError("driver characteristics: missing controller for T=" + std::to_string(a.T));
    p.T = a.T;
    const EpisodeTrace tr = run_episode(leader, *a.controller, FollowerInit{leader.front(), initial_gap, 0.0}, sim, p);
    const auto gaps = realized_time_gaps(tr, 0, p.g_min, steady);
    TimeGapStats s;
    s.T = a.T;
    s.samples = gaps.size();
    s.mean_time_gap = gaps.empty() ? 0.0 : std::accumulate(gaps.begin(), gaps.end(), 0.0) / double(gaps.size());
    s.crashed = tr.crashed;
    out.push_back(s);
  }
  return out;
}

/// Initial conditions of a randomized car-following episode: leader and
/// follower speeds uniform in [0, v_des], 120 m apart.
struct RandomFollowingEpisode {
  std::vector<double> leader;
  FollowerInit follower;
};

inline RandomFollowingEpisode random_following_episode(std::uint64_t seed, std::uint64_t episode,
                                                       int steps, const AgentParams& p,
                                                       double initial_gap = 120.0) {
  RandomStream init(seed, StreamPurpose::init_conditions, episode);
  const double v_leader = init.uniform(0.0, p.v_des);
  const double v_follower = init.uniform(0.0, p.v_des);
  return {ou_leader(seed, episode, steps, v_leader), FollowerInit{v_follower, initial_gap, 0.0}};
}

struct CrashSurvey {
  int episodes = 0;
  int crashes = 0;
  std::vector<int> crashed_episodes;
};

/// Counts crashes of one controller over independent OU-leader episodes.
inline CrashSurvey crash_survey(const Controller& c, int episodes, std::uint64_t seed, SimConfig sim,
                                const AgentParams& p, unsigned jobs = 1) {
  std::vector<char> crashed(episodes, 0);
  sim.record_rewards = false;
  parallel_for(static_cast<std::size_t>(episodes), jobs, [&](std::size_t e) {
    const auto ep = random_following_episode(seed, e, sim.episode_steps, p);
    crashed[e] = run_episode(ep.leader, c, ep.follower, sim, p).crashed;
  });
  CrashSurvey s;
  s.episodes = episodes;
  for (int e = 0; e < episodes; ++e) {
    if (crashed[e]) {
      ++s.crashes;
      s.crashed_episodes.push_back(e);
    }
  }
  return s;
}

struct TtcSurvey {
  int episodes = 0;
  int crashes = 0;
  std::vector<TtcSample> samples;   // all closing steps
  std::vector<TtcSample> retained;  // outside leader emergency braking
  Histogram histogram = make_histogram(0.0, kTtcHistogramMax, kTtcBinWidth);
  double min_retained = std::numeric_limits<double>::infinity();
  double min_all = std::numeric_limits<double>::infinity();
};

inline TtcSurvey ttc_survey(const Controller& c, int episodes, std::uint64_t seed, SimConfig sim,
                            const AgentParams& p, double emergency_threshold = 5.0) {
  TtcSurvey s;
  s.episodes = episodes;
  sim.record_rewards = false;
  for (int e = 0; e < episodes; ++e) {
    const auto ep = random_following_episode(seed, e, sim.episode_steps, p);
    const EpisodeTrace tr = run_episode(ep.leader, c, ep.follower, sim, p);
    s.crashes += tr.crashed;
    const auto mask = leader_emergency_mask(tr, emergency_threshold);
    for (const auto& t : compute_ttc(tr)) {
      s.samples.push_back(t);
      s.histogram.add(t.ttc);
      s.min_all = std::min(s.min_all, t.ttc);
      if (!mask[t.step]) {
        s.retained.push_back(t);
        s.min_retained = std::min(s.min_retained, t.ttc);
      }
    }
  }
  return s;
}

struct SpeedKeeping {
  std::optional<std::size_t> reached_step;  // first step at or above the target
  double max_speed_after = 0.0;             // from reaching the target on
  double target = 0.0;
  double ceiling = 0.0;

  /// Reached within `deadline_steps` and never above the ceiling afterwards.
  bool ok(std::size_t deadline_steps) const {
    return reached_step && *reached_step < deadline_steps && max_speed_after <= ceiling;
  }
};

/// Drives on an empty road from (v0, a0) and checks that the speed reaches
/// target_fraction * v_des and then stays at or below ceiling_fraction * v_des.
inline SpeedKeeping speed_keeping(const Controller& c, double v0, double a0, int steps,
                                  const AgentParams& p, double dt = 0.1,
                                  double target_fraction = 0.95, double ceiling_fraction = 1.02) {
  SpeedKeeping r;
  r.target = target_fraction * p.v_des;
  r.ceiling = ceiling_fraction * p.v_des;
  const auto tr = run_leaderless(c, v0, a0, steps, dt);
  for (std::size_t k = 0; k < tr.size(); ++k) {
    if (!r.reached_step && tr[k].v >= r.target) r.reached_step = k;
    if (r.reached_step) r.max_speed_after = std::max(r.max_speed_after, tr[k].v);
  }
  return r;
}

// ---------------------------------------------------------------- comparison

struct CompareEntry {
  std::string controller;
  double sse_log_gap = 0.0;
  double accumulated_reward = 0.0;
  bool crashed = false;
  std::size_t steps = 0;
};

/// Table-style comparison of follower 0 of each trace against recorded gaps
/// (reference[0] is the initial gap, reference[k + 1] belongs to trace step k).
inline CompareEntry compare_entry(const EpisodeTrace& tr, std::span<const double> reference) {
  CompareEntry e;
  e.controller = tr.controller_ids.empty() ? "" : tr.controller_ids[0];
  e.crashed = tr.crashed;
  e.steps = tr.steps();
  for (const auto& r : tr.rewards.at(0)) e.accumulated_reward += r.total;
  if (tr.crashed) {
    e.sse_log_gap = kCrashPenalty;
    return e;
  }
  if (reference.size() != tr.steps() + 1) {
    throw DataError("cross_compare: trace has " + std::to_string(tr.steps()) + " steps but reference has " +
                    std::to_string(reference.size()) + " samples");
  }
  e.sse_log_gap = sse_log_gap(tr.gaps[0], reference.subspan(1));
  return e;
}

inline std::vector<CompareEntry> cross_compare(const EpisodeTrace& rl, const EpisodeTrace& idm,
                                               std::span<const double> reference) {
  return {compare_entry(rl, reference), compare_entry(idm, reference)};
}

inline json compare_to_json(const std::vector<CompareEntry>& entries) {
  json rows = json::array();
  for (const auto& e : entries) {
    rows.push_back({{"controller", e.controller},
                    {"sse_log_gap", e.sse_log_gap},
                    {"accumulated_reward", e.accumulated_reward},
                    {"crashed", e.crashed},
                    {"steps", e.steps}});
  }
  return {{"comparison", rows}, {"reward", "undiscounted sum of the car-following reward"}};
}

}  // namespace rlcf
