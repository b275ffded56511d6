#pragma once

// Observation encoding, action decoding and the min-arbitrated composite of the
// free-driving and car-following policies.

#include <algorithm>
#include <array>
#include <memory>
#include <string>

#include "rlcf/controller.hpp"
#include "rlcf/errors.hpp"
#include "rlcf/nn.hpp"
#include "rlcf/rewards.hpp"

namespace rlcf {

enum class PolicyKind { free_driving, car_following };

inline const char* policy_kind_name(PolicyKind k) {
  return k == PolicyKind::free_driving ? "free" : "follow";
}

inline int observation_dim(PolicyKind k) { return k == PolicyKind::free_driving ? 2 : 4; }

/// Normalized observation; only the first `dim` entries are meaningful.
struct Observation {
  std::array<double, 4> values{};
  int dim = 0;

  double operator[](int i) const { return values[i]; }
};

inline Observation build_free_observation(double v, double a, const AgentParams& p) {
  Observation o;
  o.dim = 2;
  o.values[0] = v / p.v_des;
  o.values[1] = (a - p.a_min) / (p.a_max - p.a_min);
  return o;
}

/// Leaderless scenes and gaps beyond g_max read as (relative speed 0, gap 1).
inline Observation build_follow_observation(const Scene& scene, const AgentParams& p, double g_max) {
  Observation o = build_free_observation(scene.v, scene.a, p);
  o.dim = 4;
  if (!scene.leader || scene.leader->gap >= g_max) {
    o.values[2] = 0.0;
    o.values[3] = 1.0;
  } else {
    o.values[2] = (scene.leader->v - scene.v) / p.v_des;
    o.values[3] = scene.leader->gap / g_max;
  }
  return o;
}

inline Observation build_observation(PolicyKind kind, const Scene& scene, const AgentParams& p,
                                     double g_max) {
  return kind == PolicyKind::free_driving ? build_free_observation(scene.v, scene.a, p)
                                          : build_follow_observation(scene, p, g_max);
}

/// Inverse of the observation encoding: (v, a[, v_l, gap]).
inline std::array<double, 4> decode_observation(const Observation& o, const AgentParams& p,
                                                double g_max) {
  std::array<double, 4> out{};
  out[0] = o[0] * p.v_des;
  out[1] = o[1] * (p.a_max - p.a_min) + p.a_min;
  if (o.dim == 4) {
    out[2] = o[2] * p.v_des + out[0];
    out[3] = o[3] * g_max;
  }
  return out;
}

/// Maps the actor's [-1, 1] output to an acceleration: min(|a_min| * u, a_max).
inline double action_to_acceleration(double u, const AgentParams& p) {
  u = std::clamp(u, -1.0, 1.0);
  return std::min(-p.a_min * u, p.a_max);
}

/// Deterministic policy: actor network plus the constants it was trained with.
struct Policy {
  PolicyKind kind = PolicyKind::free_driving;
  nn::MlpParams actor;
  AgentParams params;
  double g_max = 200.0;
  std::string id;

  double act_normalized(const Observation& o) const {
    return nn::forward_scalar(actor, o.values.data(), o.dim);
  }
  double acceleration(const Scene& scene) const {
    return action_to_acceleration(act_normalized(build_observation(kind, scene, params, g_max)), params);
  }
};

class PolicyController : public Controller {
 public:
  explicit PolicyController(std::shared_ptr<const Policy> policy) : policy_(std::move(policy)) {
    if (!policy_) throw ConfigError("policy controller: missing checkpoint");
  }
  double acceleration(const Scene& scene) const override { return policy_->acceleration(scene); }
  std::string id() const override { return policy_->id; }

 private:
  std::shared_ptr<const Policy> policy_;
};

inline double composite_accel(const Policy& free_policy, const Policy& follow_policy,
                              const Scene& scene) {
  return std::min(free_policy.acceleration(scene), follow_policy.acceleration(scene));
}

/// min{free-driving acceleration, car-following acceleration}.
class CompositeController : public Controller {
 public:
  CompositeController(std::shared_ptr<const Policy> free_policy,
                      std::shared_ptr<const Policy> follow_policy)
      : free_(std::move(free_policy)), follow_(std::move(follow_policy)) {
    if (!free_ || !follow_) throw ConfigError("composite controller: missing checkpoint");
    if (free_->kind != PolicyKind::free_driving) throw ConfigError("composite controller: free slot holds a follow policy");
    if (follow_->kind != PolicyKind::car_following) throw ConfigError("composite controller: follow slot holds a free policy");
  }
  double acceleration(const Scene& scene) const override {
    return composite_accel(*free_, *follow_, scene);
  }
  std::string id() const override { return "composite(" + free_->id + "," + follow_->id + ")"; }

  const Policy& free_policy() const { return *free_; }
  const Policy& follow_policy() const { return *follow_; }

 private:
  std::shared_ptr<const Policy> free_;
  std::shared_ptr<const Policy> follow_;
};

}  // namespace rlcf
