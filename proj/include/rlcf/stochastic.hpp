#pragma once

// Ornstein-Uhlenbeck processes (leader speed profiles, exploration noise) and
// seeded random streams.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "rlcf/errors.hpp"

namespace rlcf {

struct OuParams {
  double theta = 0.0;  // mean reversion rate, 1/s
  double mu = 0.0;     // long-run mean
  double sigma = 0.0;  // diffusion
  double dt = 0.1;     // s
  std::optional<double> clip_lo;
  std::optional<double> clip_hi;

  void validate() const {
    if (!(theta >= 0.0)) throw ConfigError("ou.theta: must be non-negative");
    if (!(sigma >= 0.0)) throw ConfigError("ou.sigma: must be non-negative");
    if (!(dt > 0.0)) throw ConfigError("ou.dt: must be positive");
    if (clip_lo && clip_hi && !(*clip_lo < *clip_hi)) {
      throw ConfigError("ou.clip: lower bound must be below upper bound");
    }
  }

  /// Leader speed process, clipped to [0, 16.6] m/s.
  static OuParams leader() { return {0.132, 7.5, 3.847, 0.1, 0.0, 16.6}; }
  /// Zero-reverting exploration noise in normalized action units.
  static OuParams exploration() { return {0.15, 0.0, 0.2, 0.1, std::nullopt, std::nullopt}; }
};

inline double clip_to(double x, const OuParams& p) {
  if (p.clip_lo) x = std::max(x, *p.clip_lo);
  if (p.clip_hi) x = std::min(x, *p.clip_hi);
  return x;
}

/// One Euler-Maruyama step; `noise` is a standard normal draw, scaled here by
/// sqrt(dt).
inline double ou_step_unclipped(double x, const OuParams& p, double noise) {
  return x + p.theta * (p.mu - x) * p.dt + p.sigma * std::sqrt(p.dt) * noise;
}

inline double ou_step(double x, const OuParams& p, double noise) {
  return clip_to(ou_step_unclipped(x, p, noise), p);
}

inline double exploration_noise_step(double x, const OuParams& p, double noise) {
  return x - p.theta * x * p.dt + p.sigma * std::sqrt(p.dt) * noise;
}

/// Purposes of independent child streams derived from one master seed.
enum class StreamPurpose : std::uint32_t {
  leader = 1,
  exploration = 2,
  init_conditions = 3,
  minibatch = 4,
  network_init = 5,
  evaluation = 6,
  calibration = 7,
};

class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}
  RandomStream(std::uint64_t master, StreamPurpose purpose, std::uint64_t index = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                      static_cast<std::uint32_t>(purpose), static_cast<std::uint32_t>(index),
                      static_cast<std::uint32_t>(index >> 32)};
    engine_.seed(seq);
  }

  double normal() { return normal_(engine_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Leader speed series of `steps` values starting at v0. The latent process
/// evolves unclipped; the emitted speeds are clipped to the parameter bounds.
inline std::vector<double> generate_leader_profile(const OuParams& p, int steps, double v0,
                                                   RandomStream& rng) {
  p.validate();
  if (steps <= 0) throw std::invalid_argument("generate_leader_profile: steps must be positive");
  std::vector<double> out;
  out.reserve(steps);
  double x = v0;
  out.push_back(clip_to(x, p));
  for (int k = 1; k < steps; ++k) {
    x = ou_step_unclipped(x, p, rng.normal());
    out.push_back(clip_to(x, p));
  }
  return out;
}

inline std::vector<double> generate_leader_profile(const OuParams& p, int steps, double v0,
                                                   std::uint64_t seed) {
  RandomStream rng(seed, StreamPurpose::leader);
  return generate_leader_profile(p, steps, v0, rng);
}

/// Stateful exploration noise; reset() at every episode start.
class ExplorationNoise {
 public:
  explicit ExplorationNoise(OuParams p = OuParams::exploration()) : p_(p) {}
  void reset() { x_ = 0.0; }
  double value() const { return x_; }
  double next(RandomStream& rng) {
    x_ = exploration_noise_step(x_, p_, rng.normal());
    return x_;
  }
  const OuParams& params() const { return p_; }

 private:
  OuParams p_;
  double x_ = 0.0;
};

/// Writes a speed profile as CSV with header `t,v`.
inline void write_profile_csv(const std::string& path, const std::vector<double>& speeds, double dt) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write profile: " + path);
  out.precision(17);
  out << "t,v\n";
  for (std::size_t k = 0; k < speeds.size(); ++k) out << k * dt << ',' << speeds[k] << '\n';
}

}  // namespace rlcf
