#pragma once

// Self-describing JSON checkpoints: network layouts, flat parameter arrays,
// optimizer moments and the driving parameters the policy was trained with.

#include <cstdint>
#include <fstream>
#include <memory>
#include <string>

#include "json.hpp"

#include "rlcf/agent.hpp"
#include "rlcf/errors.hpp"
#include "rlcf/nn.hpp"
#include "rlcf/rewards.hpp"

namespace rlcf {

using json = nlohmann::json;

inline constexpr const char* kCheckpointFormat = "rlcf-policy-checkpoint";
inline constexpr int kCheckpointVersion = 1;

inline json agent_params_to_json(const AgentParams& p) {
  return {{"a_min", p.a_min}, {"a_max", p.a_max}, {"b_comf", p.b_comf}, {"j_comf", p.j_comf},
          {"v_des", p.v_des}, {"T", p.T},         {"g_min", p.g_min},   {"T_lim", p.T_lim},
          {"w_gap", p.w_gap}, {"w_jerk", p.w_jerk}};
}

inline AgentParams agent_params_from_json(const json& j) {
  AgentParams p;
  p.a_min = j.at("a_min").get<double>();
  p.a_max = j.at("a_max").get<double>();
  p.b_comf = j.at("b_comf").get<double>();
  p.j_comf = j.at("j_comf").get<double>();
  p.v_des = j.at("v_des").get<double>();
  p.T = j.at("T").get<double>();
  p.g_min = j.at("g_min").get<double>();
  p.T_lim = j.at("T_lim").get<double>();
  p.w_gap = j.at("w_gap").get<double>();
  p.w_jerk = j.at("w_jerk").get<double>();
  return p;
}

namespace detail {

template <typename M>
json flat(const M& m) {
  json a = json::array();
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(m(r, c));
  return a;
}

template <typename M>
void unflat(const json& a, M& m) {
  if (!a.is_array() || a.size() != static_cast<std::size_t>(m.size())) {
    throw DataError("checkpoint: parameter array has wrong length");
  }
  std::size_t k = 0;
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = a[k++].get<double>();
}

}  // namespace detail

/// Weights are stored column-major, `in` x `out` per layer.
inline json mlp_to_json(const nn::MlpParams& net) {
  json layers = json::array();
  for (const auto& l : net.layers) {
    layers.push_back({{"in", l.in_dim()},
                      {"out", l.out_dim()},
                      {"activation", nn::activation_name(l.activation)},
                      {"weights", detail::flat(l.weights)},
                      {"bias", detail::flat(l.bias)}});
  }
  return {{"layers", layers}};
}

inline nn::MlpParams mlp_from_json(const json& j) {
  nn::MlpParams net;
  for (const auto& lj : j.at("layers")) {
    nn::DenseLayer l;
    const auto in = lj.at("in").get<Eigen::Index>();
    const auto out = lj.at("out").get<Eigen::Index>();
    l.weights.resize(out, in);
    l.bias.resize(out);
    l.activation = nn::activation_from_name(lj.at("activation").get<std::string>());
    detail::unflat(lj.at("weights"), l.weights);
    detail::unflat(lj.at("bias"), l.bias);
    if (!net.layers.empty() && net.layers.back().out_dim() != in) {
      throw DataError("checkpoint: layer dimensions do not chain");
    }
    net.layers.push_back(std::move(l));
  }
  if (net.layers.empty()) throw DataError("checkpoint: network has no layers");
  return net;
}

inline json gradients_to_json(const nn::GradientSet& g) {
  json layers = json::array();
  for (const auto& l : g.layers) layers.push_back({{"weights", detail::flat(l.weights)}, {"bias", detail::flat(l.bias)}});
  return layers;
}

inline nn::GradientSet gradients_from_json(const json& j, const nn::MlpParams& shape) {
  nn::GradientSet g = nn::GradientSet::zeros_like(shape);
  if (j.size() != g.layers.size()) throw DataError("checkpoint: optimizer moments do not match network");
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    detail::unflat(j[i].at("weights"), g.layers[i].weights);
    detail::unflat(j[i].at("bias"), g.layers[i].bias);
  }
  return g;
}

inline json adam_to_json(const nn::AdamState& s) {
  return {{"beta1", s.beta1}, {"beta2", s.beta2}, {"eps", s.eps}, {"step", s.step},
          {"m", gradients_to_json(s.m)}, {"v", gradients_to_json(s.v)}};
}

inline nn::AdamState adam_from_json(const json& j, const nn::MlpParams& shape) {
  nn::AdamState s;
  s.beta1 = j.at("beta1").get<double>();
  s.beta2 = j.at("beta2").get<double>();
  s.eps = j.at("eps").get<double>();
  s.step = j.at("step").get<long>();
  s.m = gradients_from_json(j.at("m"), shape);
  s.v = gradients_from_json(j.at("v"), shape);
  return s;
}

/// Everything needed to resume training or to drive a vehicle with the policy.
struct PolicyCheckpoint {
  PolicyKind kind = PolicyKind::free_driving;
  nn::MlpParams actor;
  nn::MlpParams critic;
  nn::MlpParams actor_target;
  nn::MlpParams critic_target;
  nn::AdamState actor_opt;
  nn::AdamState critic_opt;
  AgentParams params;
  double g_max = 200.0;
  double dt = 0.1;
  std::uint64_t seed = 0;
  int episode = 0;           // episode at which the snapshot was taken
  double trailing_mean = 0;  // monitor value at that episode
  std::string id;

  Policy policy() const {
    Policy p;
    p.kind = kind;
    p.actor = actor;
    p.params = params;
    p.g_max = g_max;
    p.id = id;
    return p;
  }
};

inline json checkpoint_to_json(const PolicyCheckpoint& c) {
  return {{"format", kCheckpointFormat},
          {"version", kCheckpointVersion},
          {"id", c.id},
          {"kind", policy_kind_name(c.kind)},
          {"observation_dim", observation_dim(c.kind)},
          {"normalization", {{"v_des", c.params.v_des}, {"a_min", c.params.a_min},
                             {"a_max", c.params.a_max}, {"g_max", c.g_max}}},
          {"dt", c.dt},
          {"agent", agent_params_to_json(c.params)},
          {"training", {{"seed", c.seed}, {"episode", c.episode}, {"trailing_mean", c.trailing_mean}}},
          {"actor", mlp_to_json(c.actor)},
          {"critic", mlp_to_json(c.critic)},
          {"actor_target", mlp_to_json(c.actor_target)},
          {"critic_target", mlp_to_json(c.critic_target)},
          {"actor_optimizer", adam_to_json(c.actor_opt)},
          {"critic_optimizer", adam_to_json(c.critic_opt)}};
}

inline PolicyCheckpoint checkpoint_from_json(const json& j) {
  if (j.value("format", "") != kCheckpointFormat) throw DataError("checkpoint: unknown format");
  if (j.value("version", 0) != kCheckpointVersion) throw DataError("checkpoint: unsupported version");
  PolicyCheckpoint c;
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "free") {
    c.kind = PolicyKind::free_driving;
  } else if (kind == "follow") {
    c.kind = PolicyKind::car_following;
  } else {
    throw DataError("checkpoint: unknown policy kind '" + kind + "'");
  }
  c.id = j.value("id", std::string{});
  c.params = agent_params_from_json(j.at("agent"));
  c.g_max = j.at("normalization").at("g_max").get<double>();
  c.dt = j.at("dt").get<double>();
  c.seed = j.at("training").at("seed").get<std::uint64_t>();
  c.episode = j.at("training").at("episode").get<int>();
  c.trailing_mean = j.at("training").at("trailing_mean").get<double>();
  c.actor = mlp_from_json(j.at("actor"));
  c.critic = mlp_from_json(j.at("critic"));
  c.actor_target = mlp_from_json(j.at("actor_target"));
  c.critic_target = mlp_from_json(j.at("critic_target"));
  c.actor_opt = adam_from_json(j.at("actor_optimizer"), c.actor);
  c.critic_opt = adam_from_json(j.at("critic_optimizer"), c.critic);
  if (c.actor.input_dim() != observation_dim(c.kind) || c.actor.output_dim() != 1) {
    throw DataError("checkpoint: actor dimensions do not match policy kind");
  }
  return c;
}

inline void save_checkpoint(const PolicyCheckpoint& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out << checkpoint_to_json(c).dump(1) << '\n';
}

inline PolicyCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read checkpoint: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("checkpoint " + path + ": " + e.what());
  }
  try {
    return checkpoint_from_json(j);
  } catch (const json::exception& e) {
    throw DataError("checkpoint " + path + ": " + e.what());
  }
}

inline std::shared_ptr<const Policy> load_policy(const std::string& path) {
  return std::make_shared<const Policy>(load_checkpoint(path).policy());
}

}  // namespace rlcf
