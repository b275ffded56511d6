#pragma once

// Reward functions of the free-driving and car-following policies.

#include <cmath>
#include <stdexcept>
#include <string>

#include "rlcf/errors.hpp"

namespace rlcf {

/// Driving-style parameters shared by both reward functions and the IDM.
struct AgentParams {
  double a_min = -9.0;   // m/s^2
  double a_max = 2.0;    // m/s^2
  double b_comf = 2.0;   // m/s^2
  double j_comf = 2.0;   // m/s^3
  double v_des = 15.0;   // m/s
  double T = 1.5;        // s
  double g_min = 2.0;    // m
  double T_lim = 15.0;   // s
  double w_gap = 0.5;
  double w_jerk = 0.004;

  // The gap-reward knot only exists while the linear taper is shallower than
  // the Gaussian's inflection slope, i.e. T_lim >= 2T.
  void validate() const {
    auto fail = [](const std::string& key, const std::string& why) {
      throw ConfigError("agent." + key + ": " + why);
    };
    if (!(a_min < 0.0)) fail("a_min", "must be negative");
    if (!(a_max > 0.0)) fail("a_max", "must be positive");
    if (!(b_comf > 0.0)) fail("b_comf", "must be positive");
    if (!(j_comf > 0.0)) fail("j_comf", "must be positive");
    if (!(v_des > 0.0)) fail("v_des", "must be positive");
    if (!(T > 0.0)) fail("T", "must be positive");
    if (!(T_lim > T)) fail("T_lim", "must exceed T");
    if (!(T_lim >= 2.0 * T)) fail("T_lim", "must be at least 2*T for the gap reward knot to exist");
    if (!(g_min > 0.0)) fail("g_min", "must be positive");
    if (!(w_gap >= 0.0)) fail("w_gap", "must be non-negative");
    if (!(w_jerk >= 0.0)) fail("w_jerk", "must be non-negative");
  }
};

struct RewardBreakdown {
  double r_speed = 0.0;
  double r_safe = 0.0;
  double r_gap = 0.0;
  double r_jerk = 0.0;
  double total = 0.0;
};

inline double jerk_reward(double jerk, const AgentParams& p) {
  const double q = jerk / p.j_comf;
  return -q * q;
}

inline RewardBreakdown reward_free(double v, double jerk, const AgentParams& p) {
  RewardBreakdown r;
  r.r_speed = v <= p.v_des ? v / p.v_des : 0.0;
  r.r_jerk = jerk_reward(jerk, p);
  r.total = r.r_speed + p.w_jerk * r.r_jerk;
  return r;
}

/// (v - v_l)^2 / g when closing in, else 0. Deliberately without the factor 2
/// of the constant-deceleration stopping relation.
inline double kinematic_deceleration(double v, double v_l, double g) {
  if (!(g > 0.0)) throw std::domain_error("kinematic_deceleration: gap must be positive");
  if (v <= v_l) return 0.0;
  const double dv = v - v_l;
  return dv * dv / g;
}

inline double safety_reward(double b_kin, const AgentParams& p) {
  if (b_kin <= p.b_comf) return 0.0;
  return -std::tanh((b_kin - p.b_comf) / (-p.a_min));
}

/// Speed-dependent geometry of the gap reward.
struct GapRewardShape {
  double g_opt = 0.0;
  double g_var = 0.0;
  double g_lim = 0.0;
  double g_star = 0.0;
};

/// Normalized Gaussian phi((g - g_opt) / g_var) / phi(0).
inline double gap_gaussian(double g, double g_opt, double g_var) {
  const double z = (g - g_opt) / g_var;
  return std::exp(-0.5 * z * z);
}

inline double gap_gaussian_slope(double g, double g_opt, double g_var) {
  return -(g - g_opt) / (g_var * g_var) * gap_gaussian(g, g_opt, g_var);
}

/// Residual whose root is the tangency point of the linear taper that ends at
/// (g_lim, 0).
inline double gap_knot_residual(double g, double g_opt, double g_var, double g_lim) {
  return gap_gaussian_slope(g, g_opt, g_var) * (g_lim - g) + gap_gaussian(g, g_opt, g_var);
}

/// Bisection on [g_opt, g_opt + g_var]: the residual is positive at the peak
/// and non-positive at the inflection point whenever g_lim - g_opt >= 2 g_var.
/// That bracket isolates the near-peak tangency (the far tangency lies in the
/// numerically vanishing tail).
inline double solve_gap_knot(double g_opt, double g_var, double g_lim) {
  if (!(g_lim > g_opt) || !(g_var > 0.0)) {
    throw std::domain_error("solve_gap_knot: need g_lim > g_opt and g_var > 0");
  }
  double lo = g_opt;
  double hi = g_opt + g_var;
  double f_hi = gap_knot_residual(hi, g_opt, g_var, g_lim);
  if (f_hi > 0.0) {
    throw std::domain_error("solve_gap_knot: no sign change in bracket (g_lim too close to g_opt)");
  }
  if (f_hi == 0.0) return hi;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double f_mid = gap_knot_residual(mid, g_opt, g_var, g_lim);
    if (std::abs(f_mid) < 1e-13 || hi - lo < 1e-14 * g_lim) return mid;
    if (f_mid > 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

inline GapRewardShape gap_reward_shape(double v, const AgentParams& p) {
  // One-entry memo: consecutive evaluations mostly share the follower speed.
  thread_local struct {
    bool valid = false;
    double v, T, g_min, T_lim;
    GapRewardShape shape;
  } memo;
  if (memo.valid && memo.v == v && memo.T == p.T && memo.g_min == p.g_min && memo.T_lim == p.T_lim) {
    return memo.shape;
  }
  GapRewardShape s;
  s.g_opt = v * p.T + p.g_min;
  s.g_var = 0.5 * s.g_opt;
  s.g_lim = v * p.T_lim + 2.0 * p.g_min;
  s.g_star = solve_gap_knot(s.g_opt, s.g_var, s.g_lim);
  memo.valid = true;
  memo.v = v;
  memo.T = p.T;
  memo.g_min = p.g_min;
  memo.T_lim = p.T_lim;
  memo.shape = s;
  return s;
}

inline double gap_reward(double g, const GapRewardShape& s) {
  if (g < s.g_star) return gap_gaussian(g, s.g_opt, s.g_var);
  const double at_knot = gap_gaussian(s.g_star, s.g_opt, s.g_var);
  const double taper = 1.0 - (g - s.g_star) / (s.g_lim - s.g_star);
  return taper > 0.0 ? at_knot * taper : 0.0;
}

inline double gap_reward(double g, double v, const AgentParams& p) {
  return gap_reward(g, gap_reward_shape(v, p));
}

/// Reward assigned at a step whose gap closed to zero or below.
inline RewardBreakdown crash_reward() {
  RewardBreakdown r;
  r.r_safe = -1.0;
  r.total = -1.0;
  return r;
}

inline RewardBreakdown reward_follow(double v, double v_l, double g, double jerk,
                                     const AgentParams& p) {
  if (!(g > 0.0)) throw std::domain_error("reward_follow: gap must be positive");
  RewardBreakdown r;
  r.r_safe = safety_reward(kinematic_deceleration(v, v_l, g), p);
  r.r_gap = gap_reward(g, v, p);
  r.r_jerk = jerk_reward(jerk, p);
  r.total = r.r_safe + p.w_gap * r.r_gap + p.w_jerk * r.r_jerk;
  return r;
}

}  // namespace rlcf
