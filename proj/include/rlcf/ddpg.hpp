#pragma once

// Deep deterministic policy gradient: replay buffer, TD targets, critic
// regression, sampled policy gradient, target tracking, and the training
// environments of both policies.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "rlcf/agent.hpp"
#include "rlcf/checkpoint.hpp"
#include "rlcf/errors.hpp"
#include "rlcf/nn.hpp"
#include "rlcf/rewards.hpp"
#include "rlcf/sim.hpp"
#include "rlcf/stochastic.hpp"

namespace rlcf::ddpg {

using nn::Matrix;
using nn::Vector;

struct Transition {
  Observation s;
  double a = 0.0;  // normalized action in [-1, 1]
  double r = 0.0;
  Observation s_next;
  bool terminal = false;
};

/// Fixed-capacity FIFO ring of transitions.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 100000) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
    data_.reserve(std::min<std::size_t>(capacity, 1 << 20));
  }

  void push(const Transition& t) {
    if (data_.size() < capacity_) {
      data_.push_back(t);
    } else {
      data_[head_] = t;
      head_ = (head_ + 1) % capacity_;
    }
  }

  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return data_.empty(); }

  /// i = 0 is the oldest stored transition.
  const Transition& at(std::size_t i) const { return data_[(head_ + i) % data_.size()]; }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // oldest element once the ring is full
  std::vector<Transition> data_;
};

/// Packed minibatch, one transition per column.
struct Minibatch {
  Matrix states;       // obs_dim x N
  Matrix actions;      // 1 x N
  Vector rewards;      // N
  Matrix next_states;  // obs_dim x N
  Vector not_terminal; // N, 0 for terminal transitions

  Eigen::Index size() const { return states.cols(); }
};

inline Minibatch pack(const std::vector<const Transition*>& ts) {
  const int d = ts.front()->s.dim;
  const auto n = static_cast<Eigen::Index>(ts.size());
  Minibatch b;
  b.states.resize(d, n);
  b.actions.resize(1, n);
  b.rewards.resize(n);
  b.next_states.resize(d, n);
  b.not_terminal.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Transition& t = *ts[i];
    for (int k = 0; k < d; ++k) {
      b.states(k, i) = t.s[k];
      b.next_states(k, i) = t.s_next[k];
    }
    b.actions(0, i) = t.a;
    b.rewards(i) = t.r;
    b.not_terminal(i) = t.terminal ? 0.0 : 1.0;
  }
  return b;
}

/// n uniform draws with replacement; nullopt while the buffer holds fewer than
/// n transitions (the caller keeps collecting).
inline std::optional<Minibatch> sample_minibatch(const ReplayBuffer& buf, std::size_t n,
                                                 RandomStream& rng) {
  if (n == 0 || buf.size() < n) return std::nullopt;
  std::vector<const Transition*> picks(n);
  for (auto& p : picks) p = &buf.at(rng.index(buf.size()));
  return pack(picks);
}

enum class OptimizerKind { adam, sgd };

struct DdpgConfig {
  double lr_actor = 1e-3;
  double lr_critic = 1e-3;
  double gamma = 0.95;
  int batch_size = 32;
  double tau = 1e-3;
  std::size_t buffer_capacity = 100000;
  double ou_theta = 0.15;
  double ou_sigma = 0.2;
  int episodes = 10000;
  int steps_per_episode = 500;
  std::vector<int> hidden_free{16};
  std::vector<int> hidden_follow{32, 32};
  OptimizerKind optimizer = OptimizerKind::adam;
  int monitor_window = 30;
  std::uint64_t seed = 1;

  void validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("ddpg.gamma: must lie in (0, 1]");
    if (batch_size <= 0) throw ConfigError("ddpg.batch_size: must be positive");
    if (buffer_capacity == 0) throw ConfigError("ddpg.buffer_capacity: must be positive");
    if (static_cast<std::size_t>(batch_size) > buffer_capacity) {
      throw ConfigError("ddpg.batch_size: must not exceed ddpg.buffer_capacity");
    }
    if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("ddpg.tau: must lie in [0, 1]");
    if (!(lr_actor > 0.0)) throw ConfigError("ddpg.lr_actor: must be positive");
    if (!(lr_critic > 0.0)) throw ConfigError("ddpg.lr_critic: must be positive");
    if (!(ou_theta >= 0.0)) throw ConfigError("ddpg.ou_theta: must be non-negative");
    if (!(ou_sigma >= 0.0)) throw ConfigError("ddpg.ou_sigma: must be non-negative");
    if (episodes <= 0) throw ConfigError("ddpg.episodes: must be positive");
    if (steps_per_episode <= 0) throw ConfigError("ddpg.steps_per_episode: must be positive");
    if (monitor_window <= 0) throw ConfigError("ddpg.monitor_window: must be positive");
  }

  const std::vector<int>& hidden(PolicyKind k) const {
    return k == PolicyKind::free_driving ? hidden_free : hidden_follow;
  }
};

/// Main and target networks of one policy, with optimizer state.
struct Networks {
  nn::MlpParams actor;
  nn::MlpParams critic;
  nn::MlpParams actor_target;
  nn::MlpParams critic_target;
  nn::AdamState actor_opt;
  nn::AdamState critic_opt;
};

/// Actor: obs -> tanh scalar; critic: concat(obs, action) -> scalar. Targets
/// start as copies of the main networks.
inline Networks make_networks(int obs_dim, const std::vector<int>& hidden, RandomStream& rng) {
  Networks n;
  n.actor = nn::make_mlp(obs_dim, hidden, 1, nn::Activation::tanh, rng, 3e-3);
  n.critic = nn::make_mlp(obs_dim + 1, hidden, 1, nn::Activation::identity, rng, 3e-3);
  n.actor_target = n.actor;
  n.critic_target = n.critic;
  n.actor_opt = nn::AdamState::for_net(n.actor);
  n.critic_opt = nn::AdamState::for_net(n.critic);
  return n;
}

inline Matrix concat_rows(const Matrix& top, const Matrix& bottom) {
  Matrix m(top.rows() + bottom.rows(), top.cols());
  m << top, bottom;
  return m;
}

/// y_i = r_i + gamma * Q'(s'_i, mu'(s'_i)); y_i = r_i for terminal transitions.
inline Vector td_targets(const Minibatch& b, const nn::MlpParams& critic_target,
                         const nn::MlpParams& actor_target, double gamma) {
  const Matrix next_actions = nn::forward_batch(actor_target, b.next_states);
  const Matrix q_next = nn::forward_batch(critic_target, concat_rows(b.next_states, next_actions));
  return b.rewards + gamma * b.not_terminal.cwiseProduct(q_next.row(0).transpose());
}

/// Gradient (ascent direction) of J = mean_i Q(s_i, mu(s_i)) w.r.t. the actor
/// parameters, together with J itself.
struct PolicyGradient {
  nn::GradientSet grads;
  double objective = 0.0;
};

inline PolicyGradient policy_gradient(const nn::MlpParams& actor, const nn::MlpParams& critic,
                                      const Matrix& states) {
  const auto n = states.cols();
  const nn::ForwardCache actor_cache = nn::forward_cached(actor, states);
  const nn::ForwardCache critic_cache =
      nn::forward_cached(critic, concat_rows(states, actor_cache.result()));
  PolicyGradient pg;
  pg.objective = critic_cache.result().mean();
  const nn::Backprop dq = nn::backward(critic, critic_cache, Matrix::Constant(1, n, 1.0 / double(n)));
  const Matrix dq_da = dq.input_grad.bottomRows(1);
  pg.grads = nn::backward(actor, actor_cache, dq_da).grads;
  return pg;
}

struct StepDiagnostics {
  double critic_loss = 0.0;
  double policy_objective = 0.0;
};

inline void optimizer_step(nn::MlpParams& net, const nn::GradientSet& g, double lr,
                           nn::AdamState& state, OptimizerKind kind) {
  if (kind == OptimizerKind::adam) {
    nn::adam_step(net, g, lr, state);
  } else {
    nn::sgd_step(net, g, lr);
  }
}

inline nn::GradientSet negated(nn::GradientSet g) {
  for (auto& l : g.layers) {
    l.weights = -l.weights;
    l.bias = -l.bias;
  }
  return g;
}

/// One critic step on the mean squared TD error, one actor step ascending the
/// sampled policy objective (against the freshly updated critic), then soft
/// target updates.
inline StepDiagnostics train_step(Networks& nets, const Minibatch& b, const DdpgConfig& cfg) {
  const auto n = b.size();
  const Vector y = td_targets(b, nets.critic_target, nets.actor_target, cfg.gamma);

  const nn::ForwardCache cache = nn::forward_cached(nets.critic, concat_rows(b.states, b.actions));
  const Matrix residual = cache.result() - y.transpose();
  StepDiagnostics d;
  d.critic_loss = residual.squaredNorm() / double(n);
  if (!std::isfinite(d.critic_loss)) {
    throw TrainingDiverged("critic loss is not finite");
  }
  const nn::Backprop critic_bp = nn::backward(nets.critic, cache, (2.0 / double(n)) * residual);
  optimizer_step(nets.critic, critic_bp.grads, cfg.lr_critic, nets.critic_opt, cfg.optimizer);

  PolicyGradient pg = policy_gradient(nets.actor, nets.critic, b.states);
  d.policy_objective = pg.objective;
  optimizer_step(nets.actor, negated(std::move(pg.grads)), cfg.lr_actor, nets.actor_opt, cfg.optimizer);

  nn::soft_update_inplace(nets.critic_target, nets.critic, cfg.tau);
  nn::soft_update_inplace(nets.actor_target, nets.actor, cfg.tau);
  return d;
}

struct EnvStep {
  Observation next;
  double reward = 0.0;
  bool terminal = false;
  double acceleration = 0.0;
  RewardBreakdown breakdown;
};

/// Episodic training world of one policy.
class TrainingEnv {
 public:
  virtual ~TrainingEnv() = default;
  virtual PolicyKind kind() const = 0;
  virtual Observation reset(RandomStream& init_rng, RandomStream& leader_rng) = 0;
  virtual EnvStep step(double action) = 0;
};

/// A single vehicle on an empty road, starting at a uniform speed in [0, v_des].
class FreeDrivingEnv : public TrainingEnv {
 public:
  FreeDrivingEnv(const AgentParams& p, const SimConfig& sim) : p_(p), sim_(sim) {}
  PolicyKind kind() const override { return PolicyKind::free_driving; }

  Observation reset(RandomStream& init_rng, RandomStream&) override {
    car_ = VehicleState{0.0, init_rng.uniform(0.0, p_.v_des), 0.0, 0.0};
    first_ = true;
    return build_free_observation(car_.v, car_.a, p_);
  }

  EnvStep step(double action) override {
    EnvStep out;
    out.acceleration = action_to_acceleration(action, p_);
    car_ = step_vehicle(car_, out.acceleration, sim_.dt);
    const double jerk = first_ ? 0.0 : (car_.a - car_.a_prev) / sim_.dt;
    first_ = false;
    out.breakdown = reward_free(car_.v, jerk, p_);
    out.reward = out.breakdown.total;
    out.next = build_free_observation(car_.v, car_.a, p_);
    return out;
  }

 private:
  AgentParams p_;
  SimConfig sim_;
  VehicleState car_;
  bool first_ = true;
};

/// Follower behind an Ornstein-Uhlenbeck leader; both start at uniform speeds
/// in [0, v_des], 120 m apart. A closed gap ends the episode with reward -1.
class CarFollowingEnv : public TrainingEnv {
 public:
  CarFollowingEnv(const AgentParams& p, const SimConfig& sim, int steps,
                  OuParams leader = OuParams::leader(), double initial_gap = 120.0)
      : p_(p), sim_(sim), steps_(steps), leader_params_(leader), initial_gap_(initial_gap) {
    leader_params_.dt = sim.dt;
  }
  PolicyKind kind() const override { return PolicyKind::car_following; }

  Observation reset(RandomStream& init_rng, RandomStream& leader_rng) override {
    const double v_leader = init_rng.uniform(0.0, p_.v_des);
    const double v_follower = init_rng.uniform(0.0, p_.v_des);
    profile_ = generate_leader_profile(leader_params_, steps_ + 1, v_leader, leader_rng);
    k_ = 0;
    first_ = true;
    leader_ = VehicleState{initial_gap_ + sim_.vehicle_length, profile_[0], 0.0, 0.0};
    car_ = VehicleState{0.0, v_follower, 0.0, 0.0};
    return observe();
  }

  EnvStep step(double action) override {
    EnvStep out;
    out.acceleration = action_to_acceleration(action, p_);
    car_ = step_vehicle(car_, out.acceleration, sim_.dt);
    const double u0 = profile_[std::min<std::size_t>(k_, profile_.size() - 1)];
    const double u1 = profile_[std::min<std::size_t>(k_ + 1, profile_.size() - 1)];
    leader_.x += 0.5 * (u0 + u1) * sim_.dt;
    leader_.v = u1;
    ++k_;
    const double jerk = first_ ? 0.0 : (car_.a - car_.a_prev) / sim_.dt;
    first_ = false;
    const double g = gap(leader_, car_, sim_.vehicle_length);
    if (g <= 0.0) {
      out.breakdown = crash_reward();
      out.terminal = true;
    } else {
      out.breakdown = reward_follow(car_.v, leader_.v, g, jerk, p_);
    }
    out.reward = out.breakdown.total;
    out.next = observe();
    return out;
  }

  const VehicleState& follower() const { return car_; }
  const VehicleState& leader() const { return leader_; }

 private:
  Observation observe() const {
    Scene s;
    s.v = car_.v;
    s.a = car_.a;
    s.leader = LeaderView{leader_.v, gap(leader_, car_, sim_.vehicle_length)};
    return build_follow_observation(s, p_, sim_.g_max);
  }

  AgentParams p_;
  SimConfig sim_;
  int steps_;
  OuParams leader_params_;
  double initial_gap_;
  std::vector<double> profile_;
  std::size_t k_ = 0;
  bool first_ = true;
  VehicleState leader_;
  VehicleState car_;
};

struct EpisodeRecord {
  int episode = 0;
  double episode_return = 0.0;  // undiscounted
  double trailing_mean = 0.0;
  int steps = 0;
  bool terminated = false;
  double mean_critic_loss = 0.0;
};

struct TrainingResult {
  PolicyCheckpoint best;   // snapshot at the best trailing mean
  PolicyCheckpoint final;  // state after the last episode
  std::vector<EpisodeRecord> curve;
  bool diverged = false;
  std::string divergence_message;
};

namespace detail {

inline PolicyCheckpoint snapshot(const Networks& n, PolicyKind kind, const AgentParams& p,
                                 const SimConfig& sim, std::uint64_t seed, int episode,
                                 double trailing) {
  PolicyCheckpoint c;
  c.kind = kind;
  c.actor = n.actor;
  c.critic = n.critic;
  c.actor_target = n.actor_target;
  c.critic_target = n.critic_target;
  c.actor_opt = n.actor_opt;
  c.critic_opt = n.critic_opt;
  c.params = p;
  c.g_max = sim.g_max;
  c.dt = sim.dt;
  c.seed = seed;
  c.episode = episode;
  c.trailing_mean = trailing;
  c.id = std::string(policy_kind_name(kind)) + "-seed" + std::to_string(seed) + "-ep" +
         std::to_string(episode);
  return c;
}

}  // namespace detail

using EpisodeCallback = std::function<void(const EpisodeRecord&)>;

/// The full training loop for one policy. Each step executes
/// clip(mu(s) + noise, -1, 1), stores the transition and performs one update
/// once the buffer holds a minibatch. Episode-length truncation is not
/// terminal. Divergence stops training and is reported in the result.
inline TrainingResult train_policy(TrainingEnv& env, const DdpgConfig& cfg, const AgentParams& p,
                                   const SimConfig& sim, const EpisodeCallback& on_episode = {}) {
  cfg.validate();
  p.validate();
  const PolicyKind kind = env.kind();
  RandomStream init_rng(cfg.seed, StreamPurpose::init_conditions);
  RandomStream leader_rng(cfg.seed, StreamPurpose::leader);
  RandomStream noise_rng(cfg.seed, StreamPurpose::exploration);
  RandomStream batch_rng(cfg.seed, StreamPurpose::minibatch);
  RandomStream net_rng(cfg.seed, StreamPurpose::network_init);

  Networks nets = make_networks(observation_dim(kind), cfg.hidden(kind), net_rng);
  ReplayBuffer buffer(cfg.buffer_capacity);
  OuParams noise_params{cfg.ou_theta, 0.0, cfg.ou_sigma, sim.dt, std::nullopt, std::nullopt};
  ExplorationNoise noise(noise_params);

  TrainingResult result;
  std::deque<double> window;
  double window_sum = 0.0;
  double best_mean = -std::numeric_limits<double>::infinity();
  result.best = detail::snapshot(nets, kind, p, sim, cfg.seed, 0, best_mean);

  for (int ep = 1; ep <= cfg.episodes; ++ep) {
    noise.reset();
    Observation s = env.reset(init_rng, leader_rng);
    EpisodeRecord rec;
    rec.episode = ep;
    double loss_sum = 0.0;
    int updates = 0;
    try {
      for (int t = 0; t < cfg.steps_per_episode; ++t) {
        const double mu = nn::forward_scalar(nets.actor, s.values.data(), s.dim);
        const double action = std::clamp(mu + noise.next(noise_rng), -1.0, 1.0);
        const EnvStep st = env.step(action);
        buffer.push({s, action, st.reward, st.next, st.terminal});
        rec.episode_return += st.reward;
        ++rec.steps;
        if (auto batch = sample_minibatch(buffer, cfg.batch_size, batch_rng)) {
          loss_sum += train_step(nets, *batch, cfg).critic_loss;
          ++updates;
        }
        s = st.next;
        if (st.terminal) {
          rec.terminated = true;
          break;
        }
      }
    } catch (const TrainingDiverged& e) {
      result.diverged = true;
      result.divergence_message = "episode " + std::to_string(ep) + ": " + e.what();
      break;
    }
    rec.mean_critic_loss = updates > 0 ? loss_sum / updates : 0.0;

    window.push_back(rec.episode_return);
    window_sum += rec.episode_return;
    if (window.size() > static_cast<std::size_t>(cfg.monitor_window)) {
      window_sum -= window.front();
      window.pop_front();
    }
    rec.trailing_mean = window_sum / double(window.size());
    result.curve.push_back(rec);
    const bool window_full = window.size() == static_cast<std::size_t>(cfg.monitor_window) ||
                             cfg.episodes < cfg.monitor_window;
    if (window_full && rec.trailing_mean > best_mean) {
      best_mean = rec.trailing_mean;
      result.best = detail::snapshot(nets, kind, p, sim, cfg.seed, ep, best_mean);
    }
    if (on_episode) on_episode(rec);
  }
  const int last = result.curve.empty() ? 0 : result.curve.back().episode;
  const double last_mean = result.curve.empty() ? 0.0 : result.curve.back().trailing_mean;
  result.final = detail::snapshot(nets, kind, p, sim, cfg.seed, last, last_mean);
  return result;
}

/// Builds the policy's own training world and trains it.
inline TrainingResult train_policy(PolicyKind kind, const DdpgConfig& cfg, const AgentParams& p,
                                   const SimConfig& sim, const EpisodeCallback& on_episode = {}) {
  if (kind == PolicyKind::free_driving) {
    FreeDrivingEnv env(p, sim);
    return train_policy(env, cfg, p, sim, on_episode);
  }
  CarFollowingEnv env(p, sim, cfg.steps_per_episode);
  return train_policy(env, cfg, p, sim, on_episode);
}

}  // namespace rlcf::ddpg
