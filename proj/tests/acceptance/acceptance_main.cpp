// Acceptance suite: one PASS/FAIL line per criterion. Every tolerance used is
// a named constant below. Trained policies are cached in --cache so later runs
// only evaluate.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "rlcf/rlcf.hpp"

using namespace rlcf;
using nlohmann::json;
namespace fs = std::filesystem;

namespace tol {
constexpr double kRewardGrid = 1e-12;
constexpr double kKnotResidual = 1e-8;
constexpr double kKnotDerivative = 1e-4;
constexpr double kIdmIdentity = 1e-9;
constexpr double kIdmBruteForce = 1e-6;
constexpr double kGradCheck = 1e-4;
constexpr int kNetsPerArchitecture = 100;
constexpr double kOuRelative = 0.05;
constexpr long kOuSteps = 1'000'000;

constexpr int kFreeEvalSeeds = 20;
constexpr double kReachFraction = 0.95;
constexpr double kCeilingFraction = 1.02;
constexpr int kReachDeadlineSteps = 200;  // 20 s
constexpr int kSpeedEvalSteps = 1000;
constexpr int kCrashEpisodes = 500;
constexpr double kStandstillLo = 1.0;
constexpr double kStandstillHi = 4.0;
constexpr double kMaxDecel = 9.0;
constexpr int kPlatoonEpisodes = 20;
constexpr int kPlatoonRequired = 19;
constexpr double kPlatoonLinkSlack = 1.10;
constexpr double kTimeGapRelative = 0.20;
constexpr double kCalibRelative = 0.05;
constexpr double kCalibSse = 1e-4;
constexpr int kTtcEpisodes = 15;
constexpr double kTtcFloor = 1.5;
constexpr double kLeaderEmergency = 5.0;
// Minimum retained TTC of the selected composite on the 15 TTC episodes,
// measured on the first complete run and pinned as a regression constant.
constexpr double kPinnedTtcFloor = 1.922824185;  // s, first run on the selected composite
constexpr double kPinnedTtcRelative = 1e-6;

constexpr int kMaxSeeds = 5;
}  // namespace tol

namespace seeds {
constexpr std::uint64_t kFreeValidation = 10001;
constexpr std::uint64_t kFreeAcceptance = 20001;
constexpr std::uint64_t kFollowValidation = 30001;
constexpr int kFollowValidationEpisodes = 200;
// Follow gate scenarios, disjoint from the scored ones.
const std::vector<double> kGateLevels{7.0, 12.0, 9.0};
constexpr double kGateHold = 50.0;         // s
constexpr double kGateStandstillGap = 150.0;  // m
constexpr std::uint64_t kCrashAcceptance = 40001;
constexpr std::uint64_t kPlatoon = 50001;
constexpr std::uint64_t kReference = 60001;
constexpr std::uint64_t kTtc = 70001;
}  // namespace seeds

namespace {

struct Report {
  int passed = 0;
  int failed = 0;
  std::vector<json> rows;

  void line(const std::string& id, const std::string& what, bool ok, const std::string& detail) {
    std::printf("%s %-5s %s | %s\n", ok ? "PASS" : "FAIL", id.c_str(), what.c_str(), detail.c_str());
    std::fflush(stdout);
    (ok ? passed : failed) += 1;
    rows.push_back({{"id", id}, {"criterion", what}, {"pass", ok}, {"detail", detail}});
  }
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ------------------------------------------------------------------ oracles

// Independent restatement of both reward functions; the knot comes from the
// quadratic (g - g_opt)(g_lim - g) = g_var^2 instead of a root search.
namespace oracle {

double free_reward(double v, double jerk, const AgentParams& p) {
  const double speed = v > p.v_des ? 0.0 : v / p.v_des;
  return speed - p.w_jerk * (jerk / p.j_comf) * (jerk / p.j_comf);
}

double knot(double g_opt, double g_var, double g_lim) {
  const double b = g_opt + g_lim;
  const double c = g_opt * g_lim + g_var * g_var;
  return 0.5 * (b - std::sqrt(b * b - 4.0 * c));
}

double follow_reward(double v, double v_l, double g, double jerk, const AgentParams& p) {
  double safe = 0.0;
  if (v > v_l) {
    const double b_kin = (v - v_l) * (v - v_l) / g;
    if (b_kin > p.b_comf) safe = -std::tanh((b_kin - p.b_comf) / std::abs(p.a_min));
  }
  const double g_opt = p.g_min + v * p.T;
  const double g_var = g_opt / 2.0;
  const double g_lim = 2.0 * p.g_min + v * p.T_lim;
  const double gs = knot(g_opt, g_var, g_lim);
  auto gauss = [&](double x) { return std::exp(-(x - g_opt) * (x - g_opt) / (2.0 * g_var * g_var)); };
  double gap_r;
  if (g < gs) {
    gap_r = gauss(g);
  } else if (g < g_lim) {
    gap_r = gauss(gs) * (g_lim - g) / (g_lim - gs);
  } else {
    gap_r = 0.0;
  }
  return safe + p.w_gap * gap_r - p.w_jerk * (jerk / p.j_comf) * (jerk / p.j_comf);
}

}  // namespace oracle

struct GridPoint {
  bool follow;
  double v, v_l, g, jerk;
};

std::vector<GridPoint> reward_grid(const AgentParams& p) {
  std::vector<GridPoint> pts;
  for (double v : {0.0, 3.0, 7.5, 14.999, 15.0, 15.000001, 20.0})
    for (double j : {0.0, 2.0}) pts.push_back({false, v, 0, 0, j});
  pts.push_back({false, 10.0, 0, 0, -35.0});
  for (double v : {0.5, 10.0, 25.0}) {
    const double g_opt = p.g_min + v * p.T;
    const double g_lim = 2.0 * p.g_min + v * p.T_lim;
    const double gs = oracle::knot(g_opt, 0.5 * g_opt, g_lim);
    for (double g : {0.3 * g_opt, g_opt, gs, std::nextafter(gs, 0.0), 0.5 * (gs + g_lim), g_lim, 1.3 * g_lim})
      pts.push_back({true, v, v, g, 0.0});
  }
  // Safety branch boundaries: equal speeds, b_kin exactly at and around b_comf.
  const double dv = 4.0;
  const double g_edge = dv * dv / p.b_comf;
  for (double g : {g_edge, g_edge * 1.01, g_edge * 0.99, 1.0, 0.2}) pts.push_back({true, 12.0, 12.0 - dv, g, 1.0});
  for (double v_l : {12.0, 12.5, 0.0}) pts.push_back({true, 12.0, v_l, 20.0, -3.0});
  pts.push_back({true, 0.0, 5.0, 3.0, 0.0});
  pts.push_back({true, 30.0, 0.0, 5.0, 10.0});
  pts.push_back({true, 8.0, 9.0, 12.0, 0.5});
  pts.push_back({true, 15.0, 14.0, 24.0, -1.0});
  pts.push_back({true, 5.0, 1.0, 8.0, 2.0});
  pts.push_back({true, 20.0, 20.0, 250.0, 0.0});
  return pts;
}

double brute_force_equilibrium_gap(double v, const IdmParams& p) {
  // idm_accel(v, v, g) increases with g; bisect on a wide bracket.
  double lo = 1e-6, hi = 1e4;
  for (int i = 0; i < 400; ++i) {
    const double mid = 0.5 * (lo + hi);
    (idm_accel(v, v, mid, p) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Which ReLU units are active, per hidden layer and sample.
std::vector<bool> relu_pattern(const nn::MlpParams& net, const nn::Matrix& x) {
  const auto cache = nn::forward_cached(net, x);
  std::vector<bool> on;
  for (std::size_t i = 1; i + 1 < cache.outputs.size(); ++i)
    for (Eigen::Index k = 0; k < cache.outputs[i].size(); ++k) on.push_back(cache.outputs[i].data()[k] > 0.0);
  return on;
}

// Fourth-order central differences; probes whose stencil crosses a ReLU kink
// are skipped since the derivative does not exist there.
double grad_check(const nn::MlpParams& net0, RandomStream& rng, int& skipped) {
  nn::MlpParams net = net0;
  nn::Matrix x(net.input_dim(), 3);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1.0, 1.0);
  const auto cache = nn::forward_cached(net, x);
  const auto bp = nn::backward(net, cache, nn::Matrix::Ones(1, x.cols()));
  const auto base = relu_pattern(net, x);
  const double h = 1e-5;
  double worst = 0.0;
  // Round-off in the stencil is about eps * |f| / h ~ 1e-11; the floor keeps
  // near-zero gradients from turning that into a large ratio.
  auto rel = [](double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); };
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    auto probe = [&](double& w, double analytic) {
      const double keep = w;
      double f[4];
      const double offs[4] = {-2 * h, -h, h, 2 * h};
      bool smooth = true;
      for (int i = 0; i < 4; ++i) {
        w = keep + offs[i];
        f[i] = nn::forward_batch(net, x).sum();
        if (i == 0 || i == 3) smooth = smooth && relu_pattern(net, x) == base;
      }
      w = keep;
      if (!smooth) {
        ++skipped;
        return;
      }
      const double numeric = (f[0] - 8 * f[1] + 8 * f[2] - f[3]) / (12 * h);
      worst = std::max(worst, rel(numeric, analytic));
    };
    auto& l = net.layers[li];
    for (Eigen::Index i = 0; i < l.weights.size(); ++i) probe(l.weights.data()[i], bp.grads.layers[li].weights.data()[i]);
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) probe(l.bias.data()[i], bp.grads.layers[li].bias.data()[i]);
  }
  return worst;
}

void criterion_oracles(Report& rep) {
  const AgentParams p;
  {
    const auto grid = reward_grid(p);
    double worst = 0.0;
    for (const auto& g : grid) {
      const double got = g.follow ? reward_follow(g.v, g.v_l, g.g, g.jerk, p).total : reward_free(g.v, g.jerk, p).total;
      const double want = g.follow ? oracle::follow_reward(g.v, g.v_l, g.g, g.jerk, p) : oracle::free_reward(g.v, g.jerk, p);
      worst = std::max(worst, std::abs(got - want));
    }
    rep.line("1.1", "reward functions match hand-computed grid", grid.size() >= 50 && worst <= tol::kRewardGrid,
             fmt("%zu points, max |err| %.2e (tol %.0e)", grid.size(), worst, tol::kRewardGrid));
  }
  {
    double worst_res = 0.0, worst_der = 0.0;
    int n = 0;
    for (int i = 1; i <= 300; ++i, ++n) {
      const double v = 0.1 * i;
      const auto s = gap_reward_shape(v, p);
      worst_res = std::max(worst_res, std::abs(gap_knot_residual(s.g_star, s.g_opt, s.g_var, s.g_lim)));
      const double left = gap_gaussian_slope(s.g_star, s.g_opt, s.g_var);
      const double right = -gap_reward(s.g_star, s) / (s.g_lim - s.g_star);
      worst_der = std::max(worst_der, std::abs(left - right));
    }
    rep.line("1.2", "gap-knot residual", worst_res < tol::kKnotResidual,
             fmt("v in 0.1..30 (%d speeds), max %.2e (tol %.0e)", n, worst_res, tol::kKnotResidual));
    rep.line("1.3", "gap reward two-sided derivative at knot", worst_der < tol::kKnotDerivative,
             fmt("max mismatch %.2e (tol %.0e)", worst_der, tol::kKnotDerivative));
  }
  {
    const IdmParams q;
    double worst = 0.0;
    for (int v = 1; v <= 30; ++v) worst = std::max(worst, std::abs(idm_accel(v, v, equilibrium_gap(v, q), q)));
    rep.line("1.4", "IDM equilibrium identity", worst <= tol::kIdmIdentity,
             fmt("v = 1..30, max |accel| %.2e (tol %.0e)", worst, tol::kIdmIdentity));
    const double ge = equilibrium_gap(10.0, q);
    const double bf = brute_force_equilibrium_gap(10.0, q);
    rep.line("1.5", "IDM g_e(10) vs brute-force root", std::abs(ge - bf) <= tol::kIdmBruteForce,
             fmt("%.12f vs %.12f (tol %.0e)", ge, bf, tol::kIdmBruteForce));
  }
  {
    struct Arch {
      const char* name;
      int in;
      std::vector<int> hidden;
      nn::Activation head;
    };
    const Arch archs[] = {{"free actor", 2, {16}, nn::Activation::tanh},
                          {"free critic", 3, {16}, nn::Activation::identity},
                          {"follow actor", 4, {32, 32}, nn::Activation::tanh},
                          {"follow critic", 5, {32, 32}, nn::Activation::identity}};
    double worst = 0.0;
    int skipped = 0;
    std::string detail;
    for (std::size_t a = 0; a < std::size(archs); ++a) {
      double w = 0.0;
      for (int k = 0; k < tol::kNetsPerArchitecture; ++k) {
        RandomStream rng(900 + a, StreamPurpose::network_init, k);
        // Fan-in init on every layer; the small training head would leave
        // most gradients near zero.
        const auto net = nn::make_mlp(archs[a].in, archs[a].hidden, 1, archs[a].head, rng);
        w = std::max(w, grad_check(net, rng, skipped));
      }
      worst = std::max(worst, w);
      detail += fmt("%s %.1e; ", archs[a].name, w);
    }
    rep.line("1.6", "network gradients vs central differences", worst < tol::kGradCheck,
             fmt("%d nets per architecture: %s%d kink probes skipped (tol %.0e)", tol::kNetsPerArchitecture,
                 detail.c_str(), skipped, tol::kGradCheck));
  }
  {
    OuParams q = OuParams::leader();
    q.clip_lo.reset();
    q.clip_hi.reset();
    const auto x = generate_leader_profile(q, tol::kOuSteps, q.mu, 12345);
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= double(x.size());
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / double(x.size()));
    const double want_sd = q.sigma / std::sqrt(2.0 * q.theta);
    const double em = std::abs(mean - q.mu) / q.mu, es = std::abs(sd - want_sd) / want_sd;
    rep.line("1.7", "leader OU stationary mean and std", em < tol::kOuRelative && es < tol::kOuRelative,
             fmt("mean %.3f (want %.3f, rel %.3f), std %.3f (want %.3f, rel %.3f), tol %.2f", mean, q.mu, em, sd,
                 want_sd, es, tol::kOuRelative));

    OuParams d = q;
    d.sigma = 0.0;
    const auto y = generate_leader_profile(d, 2000, 0.0, 1);
    double x_k = 0.0;
    bool exact = y[0] == 0.0;
    for (std::size_t k = 1; k < y.size(); ++k) {
      x_k = x_k + d.theta * (d.mu - x_k) * d.dt;
      exact = exact && y[k] == x_k;
    }
    rep.line("1.8", "OU with sigma = 0 is the deterministic recurrence", exact, "2000 steps, bitwise");
  }
}

// ------------------------------------------------------------ DDPG mechanics

bool nets_equal(const nn::MlpParams& a, const nn::MlpParams& b) {
  if (!nn::same_shape(a, b)) return false;
  for (std::size_t i = 0; i < a.layers.size(); ++i)
    if (a.layers[i].weights != b.layers[i].weights || a.layers[i].bias != b.layers[i].bias) return false;
  return true;
}

void criterion_ddpg(Report& rep) {
  RandomStream rng(77, StreamPurpose::network_init);
  const auto a = nn::make_mlp(5, {32, 32}, 1, nn::Activation::identity, rng);
  const auto b = nn::make_mlp(5, {32, 32}, 1, nn::Activation::identity, rng);
  rep.line("2.1", "soft update tau = 0 keeps target, tau = 1 copies main",
           nets_equal(nn::soft_update(a, b, 0.0), a) && nets_equal(nn::soft_update(a, b, 1.0), b), "bitwise");

  auto obs = [](double x) {
    Observation o;
    o.dim = 4;
    o.values = {x, 0.5, 0.0, 0.3};
    return o;
  };
  ddpg::ReplayBuffer buf(100);
  for (int i = 0; i < 40; ++i) buf.push({obs(0.01 * i), 0.1, -0.5 + 0.03 * i, obs(0.01 * i + 0.01), i % 3 == 0});
  std::vector<const ddpg::Transition*> all;
  for (std::size_t i = 0; i < buf.size(); ++i) all.push_back(&buf.at(i));
  const auto batch = ddpg::pack(all);
  RandomStream nrng(78, StreamPurpose::network_init);
  const auto nets = ddpg::make_networks(4, {32, 32}, nrng);
  const auto y0 = ddpg::td_targets(batch, nets.critic_target, nets.actor_target, 0.0);
  rep.line("2.2", "gamma = 0 TD targets equal rewards", y0 == batch.rewards, "40 transitions, bitwise");
  const auto y = ddpg::td_targets(batch, nets.critic_target, nets.actor_target, 0.95);
  bool masked = true, boot = true;
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    if (batch.not_terminal(i) == 0.0) masked = masked && y(i) == batch.rewards(i);
    else boot = boot && y(i) != batch.rewards(i);
  }
  rep.line("2.3", "terminal transitions are not bootstrapped", masked && boot, "y = r exactly at terminal steps only");

  ddpg::ReplayBuffer fifo(100);
  for (int i = 0; i < 100 + 37; ++i) fifo.push({obs(0), 0.0, double(i), obs(0), false});
  bool order = fifo.size() == 100;
  for (std::size_t i = 0; i < fifo.size(); ++i) order = order && fifo.at(i).r == double(37 + i);
  rep.line("2.4", "replay buffer FIFO at capacity", order, "capacity 100, 137 insertions, oldest 37 evicted");

  ddpg::DdpgConfig cfg;
  cfg.episodes = 5;
  cfg.ou_sigma = 0.0;
  cfg.seed = 99;
  const auto r1 = ddpg::train_policy(PolicyKind::car_following, cfg, AgentParams{}, SimConfig{});
  const auto r2 = ddpg::train_policy(PolicyKind::car_following, cfg, AgentParams{}, SimConfig{});
  bool same = nets_equal(r1.final.actor, r2.final.actor) && nets_equal(r1.final.critic, r2.final.critic) &&
              r1.curve.size() == r2.curve.size();
  for (std::size_t i = 0; same && i < r1.curve.size(); ++i) same = r1.curve[i].episode_return == r2.curve[i].episode_return;
  rep.line("2.5", "training is bit-identical under a fixed seed with sigma = 0", same, "5 follow episodes, twice");
}

// --------------------------------------------------------- trained policies

std::string config_tag(const ddpg::DdpgConfig& c, const AgentParams& p, const SimConfig& s) {
  ddpg::DdpgConfig h = c;
  h.seed = 0;
  const std::string text = config_to_json([&] {
                             RunConfig r;
                             r.ddpg = h;
                             r.agent = p;
                             r.sim = s;
                             return r;
                           }()).dump();
  std::uint64_t x = 1469598103934665603ull;  // FNV-1a
  for (unsigned char ch : text) x = (x ^ ch) * 1099511628211ull;
  return fmt("%016llx", static_cast<unsigned long long>(x));
}

class PolicyStore {
 public:
  explicit PolicyStore(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  PolicyCheckpoint get(PolicyKind kind, double T, std::uint64_t seed) {
    AgentParams p;
    p.T = T;
    ddpg::DdpgConfig cfg;
    cfg.seed = seed;
    SimConfig sim;
    const auto file = dir_ / fmt("%s_T%.2f_seed%llu_%s.json", policy_kind_name(kind), T,
                                 static_cast<unsigned long long>(seed), config_tag(cfg, p, sim).c_str());
    if (fs::exists(file)) return load_checkpoint(file.string());
    std::printf("  training %s policy, T=%.2f, seed %llu, %d episodes\n", policy_kind_name(kind), T,
                static_cast<unsigned long long>(seed), cfg.episodes);
    std::fflush(stdout);
    const auto r = ddpg::train_policy(kind, cfg, p, sim, [](const ddpg::EpisodeRecord& e) {
      if (e.episode % 1000 == 0) {
        std::printf("    episode %d trailing mean %.1f\n", e.episode, e.trailing_mean);
        std::fflush(stdout);
      }
    });
    if (r.diverged) std::printf("  diverged: %s\n", r.divergence_message.c_str());
    std::ofstream curve(fs::path(file).replace_extension(".curve.csv"));
    curve << "episode,return,trailing30\n";
    for (const auto& e : r.curve) curve << e.episode << ',' << e.episode_return << ',' << e.trailing_mean << '\n';
    save_checkpoint(r.best, file.string());
    return r.best;
  }

  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
};

struct FreeScore {
  int passes = 0;
  double worst_speed_at_deadline = 1e9;
  double worst_overshoot = 0.0;
  // Worst excursion outside [reach, ceiling] band; ties on passes go to the smaller one.
  double miss = 0.0;
  bool operator>(const FreeScore& o) const { return passes != o.passes ? passes > o.passes : miss < o.miss; }
};

FreeScore score_free(const Controller& c, std::uint64_t first_seed, const AgentParams& p) {
  FreeScore s;
  for (int i = 0; i < tol::kFreeEvalSeeds; ++i) {
    RandomStream rng(first_seed + i, StreamPurpose::evaluation);
    const double a0 = rng.uniform(-p.a_max, p.a_max);
    const auto r = speed_keeping(c, 0.0, a0, tol::kSpeedEvalSteps, p, 0.1, tol::kReachFraction, tol::kCeilingFraction);
    s.passes += r.ok(tol::kReachDeadlineSteps);
    const auto tr = run_leaderless(c, 0.0, a0, tol::kReachDeadlineSteps, 0.1);
    s.worst_speed_at_deadline = std::min(s.worst_speed_at_deadline, tr.back().v);
    s.worst_overshoot = std::max(s.worst_overshoot, r.max_speed_after);
  }
  s.miss = std::max({0.0, tol::kReachFraction * p.v_des - s.worst_speed_at_deadline,
                     s.worst_overshoot - tol::kCeilingFraction * p.v_des});
  return s;
}

// Gate for a car-following seed: crash-free on validation episodes, realized
// time gap within tolerance on a validation plateau, and a clean approach to a
// stopped leader from standstill.
struct FollowScore {
  int crashes = 0;
  double T = 0.0;
  double time_gap = 0.0;
  std::size_t samples = 0;
  double standstill_gap = 0.0;
  bool standstill_crashed = false;

  double gap_error() const { return samples == 0 ? 1e9 : std::abs(time_gap - T) / T; }
  bool standstill_ok() const {
    return !standstill_crashed && standstill_gap >= tol::kStandstillLo && standstill_gap <= tol::kStandstillHi;
  }
  int gates() const { return (crashes == 0) + (gap_error() <= tol::kTimeGapRelative) + standstill_ok(); }
  bool passes() const { return gates() == 3; }
  bool operator>(const FollowScore& o) const {
    if (gates() != o.gates()) return gates() > o.gates();
    if (crashes != o.crashes) return crashes < o.crashes;
    return gap_error() < o.gap_error();
  }
};

FollowScore score_follow(const Controller& comp, const SimConfig& sim, const AgentParams& q) {
  FollowScore s;
  s.T = q.T;
  s.crashes = crash_survey(comp, seeds::kFollowValidationEpisodes, seeds::kFollowValidation, sim, q).crashes;

  const auto plateau = plateau_profile(seeds::kGateLevels, seeds::kGateHold, 1.0, sim.dt);
  const DriverAgent agent{q.T, &comp};
  const auto st = scenario_driver_characteristics(plateau, std::span(&agent, 1), sim, q);
  s.time_gap = st.front().mean_time_gap;
  s.samples = st.front().crashed ? 0 : st.front().samples;

  SimConfig still = sim;
  const std::vector<double> stopped(static_cast<std::size_t>(60.0 / sim.dt) + 1, 0.0);
  still.episode_steps = static_cast<int>(stopped.size()) - 1;
  const auto tr = run_episode(stopped, comp, FollowerInit{0.0, seeds::kGateStandstillGap, 0.0}, still, q);
  s.standstill_crashed = tr.crashed;
  s.standstill_gap = tr.gaps.front().back();
  return s;
}

struct Selection {
  std::shared_ptr<const Policy> free_policy;
  std::map<double, std::shared_ptr<const Policy>> follow;  // by T
  json log;
};

Selection select_policies(PolicyStore& store, const std::vector<double>& Ts) {
  Selection sel;
  const AgentParams p;
  json free_log = json::array();
  FreeScore best_score;
  best_score.passes = -1;
  for (int seed = 1; seed <= tol::kMaxSeeds; ++seed) {
    const auto ck = store.get(PolicyKind::free_driving, p.T, seed);
    auto pol = std::make_shared<const Policy>(ck.policy());
    const FreeScore s = score_free(PolicyController(pol), seeds::kFreeValidation, p);
    free_log.push_back({{"seed", seed}, {"checkpoint", ck.id}, {"validation_passes", s.passes},
                        {"worst_speed_at_20s", s.worst_speed_at_deadline},
                        {"worst_overshoot", s.worst_overshoot}, {"band_miss", s.miss}});
    std::printf("  free seed %d (%s): validation %d/%d, worst speed at 20 s %.2f, band miss %.2f\n", seed,
                ck.id.c_str(), s.passes, tol::kFreeEvalSeeds, s.worst_speed_at_deadline, s.miss);
    if (s > best_score) {
      best_score = s;
      sel.free_policy = pol;
    }
    if (s.passes == tol::kFreeEvalSeeds) break;
  }
  sel.log["free"] = {{"tried", free_log}, {"selected", sel.free_policy->id}};

  SimConfig sim;
  for (double T : Ts) {
    AgentParams q;
    q.T = T;
    json tlog = json::array();
    FollowScore best;
    for (int seed = 1; seed <= tol::kMaxSeeds; ++seed) {
      const auto ck = store.get(PolicyKind::car_following, T, seed);
      auto pol = std::make_shared<const Policy>(ck.policy());
      const CompositeController comp(sel.free_policy, pol);
      const FollowScore s = score_follow(comp, sim, q);
      tlog.push_back({{"seed", seed}, {"checkpoint", ck.id}, {"validation_crashes", s.crashes},
                      {"time_gap", s.time_gap}, {"time_gap_samples", s.samples}, {"standstill_gap", s.standstill_gap}});
      std::printf("  follow T=%.1f seed %d (%s): %d/%d validation crashes, time gap %.3f s (%zu samples), "
                  "standstill gap %.2f m\n",
                  T, seed, ck.id.c_str(), s.crashes, seeds::kFollowValidationEpisodes, s.time_gap, s.samples,
                  s.standstill_gap);
      if (!sel.follow.contains(T) || s > best) {
        best = s;
        sel.follow[T] = pol;
      }
      if (s.passes()) break;
    }
    sel.log["follow"][fmt("T=%.1f", T)] = {{"tried", tlog}, {"selected", sel.follow[T]->id}};
  }
  sel.log["max_seeds"] = tol::kMaxSeeds;
  std::ofstream(store.dir() / "selection.json") << sel.log.dump(2) << '\n';
  return sel;
}

constexpr double kDefaultT = 1.5;
const std::vector<double> kSweepT{1.0, 1.5, 2.0};

void criterion_trained(Report& rep, const Selection& sel, const std::string& data_dir) {
  const AgentParams p;
  SimConfig sim;
  const CompositeController comp(sel.free_policy, sel.follow.at(kDefaultT));

  const FreeScore fs_ = score_free(PolicyController(sel.free_policy), seeds::kFreeAcceptance, p);
  rep.line("3.1", "free policy reaches 0.95 v_des within 20 s and stays <= 1.02 v_des",
           fs_.passes == tol::kFreeEvalSeeds,
           fmt("%d/%d fresh seeds; worst speed at 20 s %.2f m/s (need %.2f); max speed after reaching %.2f (cap %.2f)",
               fs_.passes, tol::kFreeEvalSeeds, fs_.worst_speed_at_deadline, tol::kReachFraction * p.v_des,
               fs_.worst_overshoot, tol::kCeilingFraction * p.v_des));

  const auto crashes = crash_survey(comp, tol::kCrashEpisodes, seeds::kCrashAcceptance, sim, p);
  rep.line("3.2", "composite is crash-free on fresh OU-leader episodes", crashes.crashes == 0,
           fmt("%d crashes in %d episodes", crashes.crashes, tol::kCrashEpisodes));

  const auto leader = load_profile_csv(data_dir + "/profiles/external_leader_reconstructed.csv", sim.dt);
  const auto ext = scenario_external_profile(leader, comp, ExternalProfileConfig{}, sim, p);
  rep.line("3.3", "standstill approach ends at a gap in [1, 4] m",
           ext.standstill_gap >= tol::kStandstillLo && ext.standstill_gap <= tol::kStandstillHi,
           fmt("gap %.2f m when the leader departs", ext.standstill_gap));
  rep.line("3.4", "emergency braking phase is crash-free within the braking limit",
           !ext.trace.crashed && ext.emergency_peak_decel <= tol::kMaxDecel,
           fmt("crashed %s, peak deceleration %.2f m/s^2 (limit %.1f)", ext.trace.crashed ? "yes" : "no",
               ext.emergency_peak_decel, tol::kMaxDecel));

  {
    int attenuated = 0, crashed = 0;
    std::vector<double> mean_var(6, 0.0);
    std::vector<const Controller*> cs(5, &comp);
    SimConfig ps = sim;
    ps.episode_steps = 1000;
    for (int e = 0; e < tol::kPlatoonEpisodes; ++e) {
      const auto ep = random_following_episode(seeds::kPlatoon, e, ps.episode_steps, p);
      const auto r = scenario_platoon(ep.leader, cs, ps, p);
      crashed += r.trace.crashed;
      attenuated += r.variances.back() < r.variances.front();
      for (std::size_t i = 0; i < 6; ++i) mean_var[i] += r.variances[i] / tol::kPlatoonEpisodes;
    }
    rep.line("3.5", "platoon: follower 5 acceleration variance below the leader's",
             attenuated >= tol::kPlatoonRequired && crashed == 0,
             fmt("%d/%d episodes (need %d), %d crashed", attenuated, tol::kPlatoonEpisodes, tol::kPlatoonRequired, crashed));
    std::string prof;
    for (double v : mean_var) prof += fmt("%.3f ", v);
    rep.line("3.6", "platoon: variance non-increasing along the platoon within 10% per link",
             variance_non_increasing(mean_var, tol::kPlatoonLinkSlack),
             fmt("mean variance leader..f5: %s", prof.c_str()));
  }

  {
    const std::vector<double> levels{6.0, 10.0, 13.0, 8.0};
    const auto plateau = plateau_profile(levels, 60.0, 1.0, sim.dt);
    std::vector<std::unique_ptr<CompositeController>> owned;
    std::vector<DriverAgent> agents;
    for (double T : kSweepT) {
      owned.push_back(std::make_unique<CompositeController>(sel.free_policy, sel.follow.at(T)));
      agents.push_back({T, owned.back().get()});
    }
    const auto stats = scenario_driver_characteristics(plateau, agents, sim, p);
    bool ordered = true, within = true;
    std::string d;
    for (std::size_t i = 0; i < stats.size(); ++i) {
      if (i > 0) ordered = ordered && stats[i].mean_time_gap > stats[i - 1].mean_time_gap;
      const bool ok = !stats[i].crashed && stats[i].samples > 0 &&
                      std::abs(stats[i].mean_time_gap - stats[i].T) <= tol::kTimeGapRelative * stats[i].T;
      within = within && ok;
      d += fmt("T=%.1f: %.3f s (%zu samples%s); ", stats[i].T, stats[i].mean_time_gap, stats[i].samples,
               stats[i].crashed ? ", crashed" : "");
    }
    rep.line("3.7", "realized time gaps ordered with T", ordered, d);
    rep.line("3.8", "realized time gaps within 20% of T", within, d);
  }
}

// --------------------------------------------------------- cross comparison

void criterion_compare(Report& rep, const Selection& sel) {
  const IdmParams truth;
  const AgentParams p;
  CalibrationData d;
  d.dt = 0.1;
  d.leader_speed = ou_leader(seeds::kReference, 0, 3000, 10.0);
  d.follower_v0 = 10.0;
  d.gaps.assign(d.leader_speed.size(), equilibrium_gap(10.0, truth));
  const IdmController reference(truth, IdmClamp::unclamped, -9.0, 2.0, "idm-reference");
  const auto ref_trace = simulate_follower(d, reference, p, false);
  std::copy(ref_trace.gaps[0].begin(), ref_trace.gaps[0].end(), d.gaps.begin() + 1);

  CalibrationOptions opt;
  opt.mode = IdmClamp::unclamped;
  const auto lo = opt.bounds.lo.to_array(), hi = opt.bounds.hi.to_array();
  std::array<double, IdmParams::kCount> mid{};
  for (std::size_t i = 0; i < mid.size(); ++i) mid[i] = 0.5 * (lo[i] + hi[i]);
  opt.init = IdmParams::from_array(mid);
  opt.restarts = 10;
  opt.seed = seeds::kReference;
  const auto cal = calibrate(d, opt);
  const auto got = cal.params.to_array(), want = truth.to_array();
  double worst = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) worst = std::max(worst, std::abs(got[i] - want[i]) / want[i]);
  rep.line("4.1", "IDM calibration recovers the reference parameters", worst <= tol::kCalibRelative,
           fmt("max relative error %.2e (tol %.2f) from the box midpoint plus %d restarts", worst, tol::kCalibRelative,
               opt.restarts));
  rep.line("4.2", "calibrated SSE(ln g)", cal.sse < tol::kCalibSse, fmt("%.3e (tol %.0e)", cal.sse, tol::kCalibSse));

  const CompositeController rl(sel.free_policy, sel.follow.at(kDefaultT));
  const IdmController calibrated(cal.params, IdmClamp::clamped, -9.0, 2.0, "idm-calibrated");
  const auto rl_trace = simulate_follower(d, rl, p);
  const auto idm_trace = simulate_follower(d, calibrated, p);
  const auto table = cross_compare(rl_trace, idm_trace, d.gaps);
  std::printf("  %s\n", compare_to_json(table).dump().c_str());
  rep.line("4.3", "RL accumulated reward >= calibrated IDM's",
           !table[0].crashed && table[0].accumulated_reward >= table[1].accumulated_reward,
           fmt("RL %.2f (SSE %.2f) vs IDM %.2f (SSE %.2e)", table[0].accumulated_reward, table[0].sse_log_gap,
               table[1].accumulated_reward, table[1].sse_log_gap));
}

// ---------------------------------------------------------------------- TTC

void criterion_ttc(Report& rep, const Selection& sel) {
  const AgentParams p;
  const CompositeController comp(sel.free_policy, sel.follow.at(kDefaultT));
  const auto s = ttc_survey(comp, tol::kTtcEpisodes, seeds::kTtc, SimConfig{}, p, tol::kLeaderEmergency);
  rep.line("5.1", "TTC above 1.5 s outside leader emergency braking",
           s.crashes == 0 && s.min_retained > tol::kTtcFloor,
           fmt("min %.3f s over %zu retained samples (%zu closing samples, overall min %.3f s, %d crashes)",
               s.min_retained, s.retained.size(), s.samples.size(), s.min_all, s.crashes));
  const bool pinned = tol::kPinnedTtcFloor > 0.0;
  const bool match = pinned && std::abs(s.min_retained - tol::kPinnedTtcFloor) <= tol::kPinnedTtcRelative * tol::kPinnedTtcFloor;
  rep.line("5.2", "TTC floor matches the pinned regression value", match,
           pinned ? fmt("%.9f vs pinned %.9f", s.min_retained, tol::kPinnedTtcFloor)
                  : fmt("not pinned; measured %.9f", s.min_retained));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rlcf acceptance suite"};
  std::set<int> criteria{1, 2, 3, 4, 5};
  std::string cache = "acceptance_cache";
  std::string data_dir = RLCF_TEST_DATA_DIR;
  bool train_only = false;
  std::string report_path;
  app.add_option("--criteria", criteria, "criteria to run (1-5)")->delimiter(',');
  app.add_option("--cache", cache, "directory for trained checkpoints");
  app.add_option("--data", data_dir, "data directory");
  app.add_option("--report", report_path, "write a JSON report here");
  app.add_flag("--train-only", train_only, "train and select policies, then exit");
  CLI11_PARSE(app, argc, argv);

  try {
    Report rep;
    const bool need_policies = train_only || criteria.count(3) || criteria.count(4) || criteria.count(5);
    std::optional<Selection> sel;
    if (need_policies) {
      PolicyStore store(cache);
      sel = select_policies(store, kSweepT);
    }
    if (train_only) return 0;
    if (criteria.count(1)) criterion_oracles(rep);
    if (criteria.count(2)) criterion_ddpg(rep);
    if (criteria.count(3)) criterion_trained(rep, *sel, data_dir);
    if (criteria.count(4)) criterion_compare(rep, *sel);
    if (criteria.count(5)) criterion_ttc(rep, *sel);
    std::printf("%d passed, %d failed\n", rep.passed, rep.failed);
    if (!report_path.empty()) {
      json j = {{"passed", rep.passed}, {"failed", rep.failed}, {"criteria", rep.rows}};
      if (sel) j["selection"] = sel->log;
      std::ofstream(report_path) << j.dump(2) << '\n';
    }
    return rep.failed == 0 ? 0 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "acceptance: %s\n", e.what());
    return 2;
  }
}
