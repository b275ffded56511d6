#pragma once

// Intelligent Driver Model and its calibration against recorded gaps.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rlcf/controller.hpp"
#include "rlcf/errors.hpp"
#include "rlcf/nelder_mead.hpp"
#include "rlcf/parallel.hpp"
#include "rlcf/sim.hpp"
#include "rlcf/stochastic.hpp"

namespace rlcf {

struct IdmParams {
  double v_des = 33.73;  // m/s
  double T = 0.83;       // s
  double g_min = 4.90;   // m
  double a_max = 4.32;   // m/s^2
  double b_comf = 2.34;  // m/s^2

  static constexpr std::size_t kCount = 5;

  void validate() const {
    auto positive = [](double x, const char* key) {
      if (!(x > 0.0) || !std::isfinite(x)) throw ConfigError(std::string("idm.") + key + ": must be positive");
    };
    positive(v_des, "v_des");
    positive(T, "T");
    positive(g_min, "g_min");
    positive(a_max, "a_max");
    positive(b_comf, "b_comf");
  }

  std::array<double, kCount> to_array() const { return {v_des, T, g_min, a_max, b_comf}; }
  static IdmParams from_array(std::span<const double> x) {
    if (x.size() != kCount) throw std::invalid_argument("IdmParams: need 5 values");
    return {x[0], x[1], x[2], x[3], x[4]};
  }
};

/// s* = g_min + max(0, vT + v (v - v_l) / (2 sqrt(a_max b))).
inline double idm_desired_gap(double v, double v_l, const IdmParams& p) {
  const double dyn = v * p.T + v * (v - v_l) / (2.0 * std::sqrt(p.a_max * p.b_comf));
  return p.g_min + std::max(0.0, dyn);
}

/// Raw model acceleration, not clamped to any actuator range.
inline double idm_accel(double v, double v_l, double g, const IdmParams& p) {
  if (!(g > 0.0)) throw std::domain_error("idm_accel: gap must be positive");
  const double s = idm_desired_gap(v, v_l, p) / g;
  return p.a_max * (1.0 - std::pow(v / p.v_des, 4) - s * s);
}

/// Acceleration on an empty road.
inline double idm_free_accel(double v, const IdmParams& p) {
  return p.a_max * (1.0 - std::pow(v / p.v_des, 4));
}

/// Steady-state gap at speed v behind a leader driving at the same speed.
inline double equilibrium_gap(double v, const IdmParams& p) {
  if (!(v >= 0.0) || !(v < p.v_des)) {
    throw std::domain_error("equilibrium_gap: no finite equilibrium at or above v_des");
  }
  return idm_desired_gap(v, v, p) / std::sqrt(1.0 - std::pow(v / p.v_des, 4));
}

enum class IdmClamp { clamped, unclamped };

/// IDM as a harness controller. In clamped mode the output is limited to the
/// shared action range [lo, hi]; a closed gap commands full braking.
class IdmController : public Controller {
 public:
  explicit IdmController(IdmParams p, IdmClamp mode = IdmClamp::clamped, double lo = -9.0,
                         double hi = 2.0, std::string id = "idm")
      : p_(p), mode_(mode), lo_(lo), hi_(hi), id_(std::move(id)) {
    p_.validate();
  }

  double raw_acceleration(const Scene& scene) const {
    if (!scene.leader) return idm_free_accel(scene.v, p_);
    if (!(scene.leader->gap > 0.0)) return lo_;
    return idm_accel(scene.v, scene.leader->v, scene.leader->gap, p_);
  }
  double acceleration(const Scene& scene) const override {
    const double a = raw_acceleration(scene);
    return mode_ == IdmClamp::clamped ? std::clamp(a, lo_, hi_) : a;
  }
  std::string id() const override { return id_; }
  const IdmParams& params() const { return p_; }
  IdmClamp mode() const { return mode_; }

 private:
  IdmParams p_;
  IdmClamp mode_;
  double lo_;
  double hi_;
  std::string id_;
};

/// One follower behind a recorded leader. Entry k of both series belongs to
/// time k * dt; gaps[0] and follower_v0 are the initial state.
struct CalibrationData {
  double dt = 0.1;
  std::vector<double> leader_speed;
  std::vector<double> gaps;
  double follower_v0 = 0.0;

  void validate() const {
    if (!(dt > 0.0)) throw DataError("calibration data: dt must be positive");
    if (leader_speed.size() < 2 || leader_speed.size() != gaps.size()) {
      throw DataError("calibration data: leader speed and gap series must have equal length >= 2");
    }
    for (std::size_t k = 0; k < gaps.size(); ++k) {
      if (!(gaps[k] > 0.0)) throw DataError("calibration data: non-positive gap at sample " + std::to_string(k));
    }
  }
};

/// Simulates the follower through the whole record; the trace has
/// leader_speed.size() - 1 steps unless the follower crashes.
inline EpisodeTrace simulate_follower(const CalibrationData& d, const Controller& c,
                                      const AgentParams& reward_params = {},
                                      bool record_rewards = true) {
  SimConfig cfg;
  cfg.record_rewards = record_rewards;
  cfg.dt = d.dt;
  cfg.episode_steps = static_cast<int>(d.leader_speed.size()) - 1;
  cfg.crash_mode = CrashMode::terminate;
  return run_episode(d.leader_speed, c, FollowerInit{d.follower_v0, d.gaps[0], 0.0}, cfg,
                     reward_params);
}

inline constexpr double kCrashPenalty = 1e6;

/// Sum over the record of (ln g_sim - ln g_data)^2; simulated gaps are
/// compared from the first step on. Crashes score kCrashPenalty.
inline double sse_log_gap(std::span<const double> simulated, std::span<const double> reference) {
  if (simulated.size() != reference.size()) throw DataError("sse_log_gap: series lengths differ");
  double sse = 0.0;
  for (std::size_t k = 0; k < simulated.size(); ++k) {
    if (!(simulated[k] > 0.0) || !(reference[k] > 0.0)) return kCrashPenalty;
    const double e = std::log(simulated[k]) - std::log(reference[k]);
    sse += e * e;
  }
  return sse;
}

inline double calibration_objective(const CalibrationData& d, const IdmParams& p, IdmClamp mode) {
  const IdmController c(p, mode);
  const EpisodeTrace tr = simulate_follower(d, c, {}, false);
  if (tr.crashed) return kCrashPenalty;
  return sse_log_gap(tr.gaps[0], std::span<const double>(d.gaps).subspan(1));
}

struct IdmBounds {
  IdmParams lo{10.0, 0.3, 0.5, 0.5, 0.5};
  IdmParams hi{50.0, 3.0, 10.0, 6.0, 6.0};

  optim::Bounds to_bounds() const {
    const auto l = lo.to_array();
    const auto h = hi.to_array();
    return {{l.begin(), l.end()}, {h.begin(), h.end()}};
  }
};

struct CalibrationOptions {
  IdmParams init;
  IdmBounds bounds;
  int restarts = 10;
  std::uint64_t seed = 1;
  IdmClamp mode = IdmClamp::clamped;
  unsigned jobs = 1;
  optim::NelderMeadOptions nm;
};

struct CalibrationResult {
  IdmParams params;
  double sse = 0.0;
  int evaluations = 0;
  std::vector<double> restart_values;  // best objective of each start, init first
};

/// Nelder-Mead from `starts` in order; the first start with the lowest
/// objective wins.
inline CalibrationResult calibrate_from(const CalibrationData& d,
                                        const std::vector<std::vector<double>>& starts,
                                        const CalibrationOptions& opt) {
  d.validate();
  if (starts.empty()) throw std::invalid_argument("calibrate: no start points");
  const optim::Bounds b = opt.bounds.to_bounds();
  auto f = [&](std::span<const double> x) {
    return calibration_objective(d, IdmParams::from_array(x), opt.mode);
  };
  std::vector<optim::OptimResult> runs(starts.size());
  parallel_for(starts.size(), opt.jobs,
               [&](std::size_t i) { runs[i] = optim::nelder_mead_bounded(f, starts[i], b, opt.nm); });
  CalibrationResult out;
  const optim::OptimResult best = optim::best_of(runs);
  out.params = IdmParams::from_array(best.x);
  out.sse = best.value;
  for (const auto& r : runs) {
    out.evaluations += r.evaluations;
    out.restart_values.push_back(r.value);
  }
  return out;
}

/// Starts from `init`, then from `restarts` uniform draws inside the bounds.
inline CalibrationResult calibrate(const CalibrationData& d, const CalibrationOptions& opt = {}) {
  opt.init.validate();
  const optim::Bounds b = opt.bounds.to_bounds();
  b.validate();
  RandomStream rng(opt.seed, StreamPurpose::calibration);
  std::vector<std::vector<double>> starts;
  const auto init = opt.init.to_array();
  starts.emplace_back(init.begin(), init.end());
  for (auto& s : optim::random_starts(b, opt.restarts, rng)) starts.push_back(std::move(s));
  return calibrate_from(d, starts, opt);
}

}  // namespace rlcf
