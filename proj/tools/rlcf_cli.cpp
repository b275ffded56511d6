// rlcf: train, simulate and validate the modular car-following agent.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rlcf/rlcf.hpp"

namespace fs = std::filesystem;
using namespace rlcf;

namespace {

constexpr const char* kToolVersion = "1.0.0";

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::uint64_t seed = 1;
  bool seed_given = false;
  std::string out_dir = "out";
  unsigned jobs = 1;
};

struct Inputs {
  std::string rl_dir;
  std::string free_ckpt;
  std::string follow_ckpt;
  std::string idm_json;
  std::string data;
  std::string profile;
  std::string leader = "ou";
  int episodes = 0;
  int steps = 0;
  double v0 = -1.0;
  std::vector<std::string> sweep;  // T=path
  bool idm_only = false;
};

RunConfig resolve_config(const Common& c) {
  RunConfig cfg;
  if (!c.config_path.empty()) cfg = load_config(c.config_path);
  for (const auto& o : c.overrides) apply_override(cfg, o);
  if (c.seed_given) cfg.ddpg.seed = c.seed;
  cfg.validate();
  return cfg;
}

fs::path prepare_out(const Common& c) {
  fs::path out(c.out_dir);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw ConfigError("cannot create output directory " + out.string() + ": " + ec.message());
  return out;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path.string());
  f << j.dump(2) << '\n';
}

json read_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot read " + path);
  try {
    json j;
    f >> j;
    return j;
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
}

struct Manifest {
  std::string command;
  std::vector<std::string> argv;
  json config;
  std::uint64_t seed = 0;
  json inputs = json::object();
  json outputs = json::array();
  json results = json::object();

  void write(const fs::path& dir) const {
    write_json(dir / "manifest.json", {{"tool", "rlcf"},
                                       {"version", kToolVersion},
                                       {"checkpoint_format", kCheckpointVersion},
                                       {"command", command},
                                       {"argv", argv},
                                       {"seed", seed},
                                       {"config", config},
                                       {"inputs", inputs},
                                       {"outputs", outputs},
                                       {"results", results}});
  }
};

std::shared_ptr<const Policy> load_policy_checked(const std::string& path, PolicyKind kind) {
  auto p = load_policy(path);
  if (p->kind != kind) {
    throw ConfigError(path + ": expected a " + std::string(policy_kind_name(kind)) + " checkpoint");
  }
  return p;
}

/// Free and follow checkpoints, from --rl DIR (free.json, follow.json) or
/// explicit paths.
std::pair<std::string, std::string> checkpoint_paths(const Inputs& in) {
  std::string free_path = in.free_ckpt, follow_path = in.follow_ckpt;
  if (!in.rl_dir.empty()) {
    if (free_path.empty()) free_path = (fs::path(in.rl_dir) / "free.json").string();
    if (follow_path.empty()) follow_path = (fs::path(in.rl_dir) / "follow.json").string();
  }
  if (free_path.empty() || follow_path.empty()) {
    throw ConfigError("checkpoints: give --rl DIR or both --free and --follow");
  }
  return {free_path, follow_path};
}

std::unique_ptr<CompositeController> load_composite(const Inputs& in, Manifest& m) {
  const auto [free_path, follow_path] = checkpoint_paths(in);
  auto free_policy = load_policy_checked(free_path, PolicyKind::free_driving);
  auto follow_policy = load_policy_checked(follow_path, PolicyKind::car_following);
  m.inputs["free_checkpoint"] = {{"path", free_path}, {"id", free_policy->id}};
  m.inputs["follow_checkpoint"] = {{"path", follow_path}, {"id", follow_policy->id}};
  return std::make_unique<CompositeController>(free_policy, follow_policy);
}

std::unique_ptr<Controller> load_controller(const Inputs& in, const RunConfig& cfg, Manifest& m) {
  if (in.idm_only) {
    IdmParams p = in.idm_json.empty() ? cfg.idm : idm_params_from_json(read_json(in.idm_json));
    m.inputs["idm"] = idm_params_to_json(p);
    return std::make_unique<IdmController>(p, cfg.idm_mode);
  }
  return load_composite(in, m);
}

// ------------------------------------------------------------------ commands

int cmd_train(PolicyKind kind, const Common& c, const std::vector<std::string>& argv) {
  const RunConfig cfg = resolve_config(c);
  const fs::path out = prepare_out(c);
  const std::string name = policy_kind_name(kind);
  Manifest m{"train-" + name, argv, config_to_json(cfg), cfg.ddpg.seed};

  std::ofstream curve(out / (name + "_curve.csv"));
  if (!curve) throw DataError("cannot write reward curve");
  curve << "episode,return,trailing_mean,steps,terminated,critic_loss\n";
  const auto t0 = std::chrono::steady_clock::now();
  const auto result = ddpg::train_policy(kind, cfg.ddpg, cfg.agent, cfg.sim, [&](const ddpg::EpisodeRecord& r) {
    curve << r.episode << ',' << r.episode_return << ',' << r.trailing_mean << ',' << r.steps << ','
          << r.terminated << ',' << r.mean_critic_loss << '\n';
    if (r.episode % 100 == 0) {
      std::fprintf(stderr, "[%s] episode %d return %.1f trailing %.1f\n", name.c_str(), r.episode,
                   r.episode_return, r.trailing_mean);
    }
  });
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  save_checkpoint(result.best, (out / (name + ".json")).string());
  save_checkpoint(result.final, (out / (name + "_final.json")).string());
  json log = {{"config", m.config},
              {"seed", cfg.ddpg.seed},
              {"episodes_run", result.curve.size()},
              {"best_episode", result.best.episode},
              {"best_trailing_mean", result.best.trailing_mean},
              {"seconds", seconds},
              {"diverged", result.diverged}};
  if (result.diverged) log["divergence"] = result.divergence_message;
  write_json(out / (name + "_log.json"), log);
  m.outputs = {name + ".json", name + "_final.json", name + "_curve.csv", name + "_log.json"};
  m.results = {{"best_episode", result.best.episode}, {"best_trailing_mean", result.best.trailing_mean},
               {"checkpoint_id", result.best.id}};
  m.write(out);
  std::cout << "best checkpoint " << result.best.id << " (trailing mean " << result.best.trailing_mean
            << ") written to " << (out / (name + ".json")).string() << '\n';
  if (result.diverged) throw TrainingDiverged(result.divergence_message);
  return 0;
}

int cmd_simulate(const Inputs& in, const Common& c, const std::vector<std::string>& argv) {
  const RunConfig cfg = resolve_config(c);
  const fs::path out = prepare_out(c);
  Manifest m{"simulate", argv, config_to_json(cfg), cfg.ddpg.seed};
  const auto controller = load_controller(in, cfg, m);
  const std::string profile =
      in.profile.empty() ? std::string(RLCF_DATA_DIR) + "/profiles/external_leader_reconstructed.csv" : in.profile;
  const auto leader = load_profile_csv(profile, cfg.sim.dt);
  m.inputs["profile"] = profile;
  ExternalProfileConfig ec;
  ec.initial_gap = cfg.harness.external_initial_gap;
  const auto r = scenario_external_profile(leader, *controller, ec, cfg.sim, cfg.agent);
  write_trace_csv((out / "trace.csv").string(), r.trace);
  const json metrics = external_profile_to_json(r);
  write_json(out / "metrics.json", metrics);
  m.outputs = {"trace.csv", "metrics.json"};
  m.results = metrics;
  m.write(out);
  std::cout << metrics.dump(2) << '\n';
  if (r.trace.crashed) throw ScenarioFailure("external profile: crash at step " + std::to_string(*r.trace.crash_step));
  return 0;
}

int cmd_platoon(const Inputs& in, const Common& c, const std::vector<std::string>& argv) {
  const RunConfig cfg = resolve_config(c);
  const fs::path out = prepare_out(c);
  Manifest m{"platoon", argv, config_to_json(cfg), cfg.ddpg.seed};
  const auto controller = load_controller(in, cfg, m);
  std::vector<const Controller*> stack(cfg.harness.platoon_size, controller.get());
  const int episodes = in.episodes > 0 ? in.episodes : 1;

  json runs = json::array();
  int crashes = 0;
  std::ofstream var_csv(out / "variances.csv");
  var_csv << "episode,leader";
  for (int i = 1; i <= cfg.harness.platoon_size; ++i) var_csv << ",follower" << i;
  var_csv << '\n';
  for (int e = 0; e < episodes; ++e) {
    std::vector<double> leader;
    if (!in.data.empty()) {
      leader = ingest_trajectory(in.data).leader_speed;
      m.inputs["data"] = in.data;
    } else {
      const int steps = in.steps > 0 ? in.steps : cfg.harness.platoon_steps;
      RandomStream init(cfg.ddpg.seed, StreamPurpose::init_conditions, e);
      const double v0 = in.v0 >= 0.0 ? in.v0 : init.uniform(0.0, cfg.agent.v_des);
      leader = ou_leader(cfg.ddpg.seed, e, steps, v0, cfg.leader);
    }
    SimConfig sim = cfg.sim;
    sim.episode_steps = static_cast<int>(leader.size()) - 1;
    const auto r = scenario_platoon(leader, stack, sim, cfg.agent);
    crashes += r.trace.crashed;
    var_csv << e;
    for (double v : r.variances) var_csv << ',' << v;
    var_csv << '\n';
    if (e == 0) write_trace_csv((out / "trace.csv").string(), r.trace);
    runs.push_back({{"episode", e},
                    {"variances", r.variances},
                    {"string_stable", variance_non_increasing(r.variances, 1.1)},
                    {"metrics", metrics_to_json(r.metrics)}});
  }
  const json metrics = {{"episodes", runs}, {"crashes", crashes}};
  write_json(out / "metrics.json", metrics);
  m.outputs = {"trace.csv", "variances.csv", "metrics.json"};
  m.results = {{"crashes", crashes}};
  m.write(out);
  std::cout << "platoon: " << episodes << " episode(s), " << crashes << " crash(es)\n";
  if (crashes > 0) throw ScenarioFailure("platoon: " + std::to_string(crashes) + " crash(es)");
  return 0;
}

int cmd_calibrate(const Inputs& in, const Common& c, const std::vector<std::string>& argv) {
  const RunConfig cfg = resolve_config(c);
  const fs::path out = prepare_out(c);
  if (in.data.empty()) throw ConfigError("calibrate-idm: --data is required");
  Manifest m{"calibrate-idm", argv, config_to_json(cfg), cfg.ddpg.seed};
  const auto data = ingest_trajectory(in.data).calibration_data();
  m.inputs["data"] = in.data;
  CalibrationOptions opt;
  opt.init = cfg.idm;
  opt.restarts = cfg.calibration_restarts;
  opt.seed = cfg.ddpg.seed;
  opt.mode = cfg.idm_mode;
  opt.jobs = c.jobs;
  const auto r = calibrate(data, opt);
  const json result = {{"params", idm_params_to_json(r.params)},
                       {"sse_log_gap", r.sse},
                       {"evaluations", r.evaluations},
                       {"restart_values", r.restart_values},
                       {"clamped", cfg.idm_mode == IdmClamp::clamped}};
  write_json(out / "idm_calibration.json", result);
  m.outputs = {"idm_calibration.json"};
  m.results = result;
  m.write(out);
  std::cout << result.dump(2) << '\n';
  return 0;
}

int cmd_ttc(const Inputs& in, const Common& c, const std::vector<std::string>& argv) {
  const RunConfig cfg = resolve_config(c);
  const fs::path out = prepare_out(c);
  Manifest m{"ttc", argv, config_to_json(cfg), cfg.ddpg.seed};
  const auto controller = load_controller(in, cfg, m);
  const int episodes = in.episodes > 0 ? in.episodes : cfg.harness.ttc_episodes;
  const auto s = ttc_survey(*controller, episodes, cfg.ddpg.seed, cfg.sim, cfg.agent);
  std::ofstream h(out / "ttc_histogram.csv");
  h << "bin_lo,bin_hi,count\n";
  for (std::size_t b = 0; b < s.histogram.counts.size(); ++b) {
    h << s.histogram.lo + double(b) * s.histogram.width << ',' << s.histogram.lo + double(b + 1) * s.histogram.width
      << ',' << s.histogram.counts[b] << '\n';
  }
  json result = {{"episodes", episodes},
                 {"crashes", s.crashes},
                 {"samples", s.samples.size()},
                 {"retained_samples", s.retained.size()},
                 {"histogram", histogram_to_json(s.histogram)}};
  if (!s.samples.empty()) result["min_ttc"] = s.min_all;
  if (!s.retained.empty()) result["min_ttc_outside_leader_emergency"] = s.min_retained;
  write_json(out / "ttc.json", result);
  m.outputs = {"ttc.json", "ttc_histogram.csv"};
  m.results = result;
  m.write(out);
  std::cout << result.dump(2) << '\n';
  if (s.crashes > 0) throw ScenarioFailure("ttc: " + std::to_string(s.crashes) + " crash(es)");
  return 0;
}

int cmd_compare(const Inputs& in, const Common& c, const std::vector<std::string>& argv) {
  const RunConfig cfg = resolve_config(c);
  const fs::path out = prepare_out(c);
  if (in.data.empty()) throw ConfigError("compare: --data is required");
  Manifest m{"compare", argv, config_to_json(cfg), cfg.ddpg.seed};
  const auto rl = load_composite(in, m);
  const IdmParams idm_params = in.idm_json.empty() ? cfg.idm : idm_params_from_json(read_json(in.idm_json));
  m.inputs["idm"] = idm_params_to_json(idm_params);
  m.inputs["data"] = in.data;
  const IdmController idm(idm_params, cfg.idm_mode);
  const auto data = ingest_trajectory(in.data).calibration_data();
  const auto rl_trace = simulate_follower(data, *rl, cfg.agent);
  const auto idm_trace = simulate_follower(data, idm, cfg.agent);
  const json report = compare_to_json(cross_compare(rl_trace, idm_trace, data.gaps));
  write_trace_csv((out / "trace_rl.csv").string(), rl_trace);
  write_trace_csv((out / "trace_idm.csv").string(), idm_trace);
  write_json(out / "compare.json", report);
  m.outputs = {"compare.json", "trace_rl.csv", "trace_idm.csv"};
  m.results = report;
  m.write(out);
  std::cout << report.dump(2) << '\n';
  return 0;
}

int cmd_drivers(const Inputs& in, const Common& c, const std::vector<std::string>& argv) {
  const RunConfig cfg = resolve_config(c);
  const fs::path out = prepare_out(c);
  Manifest m{"drivers", argv, config_to_json(cfg), cfg.ddpg.seed};
  if (in.free_ckpt.empty()) throw ConfigError("drivers: --free is required");
  if (in.sweep.empty()) throw ConfigError("drivers: give one --agent T=PATH per time gap");
  auto free_policy = load_policy_checked(in.free_ckpt, PolicyKind::free_driving);
  std::vector<std::unique_ptr<CompositeController>> owners;
  std::vector<DriverAgent> agents;
  for (const auto& entry : in.sweep) {
    const auto eq = entry.find('=');
    if (eq == std::string::npos) throw ConfigError("--agent " + entry + ": expected T=PATH");
    const double T = config_detail::number("--agent", entry.substr(0, eq));
    owners.push_back(std::make_unique<CompositeController>(
        free_policy, load_policy_checked(entry.substr(eq + 1), PolicyKind::car_following)));
    agents.push_back({T, owners.back().get()});
    m.inputs["agents"].push_back({{"T", T}, {"checkpoint", entry.substr(eq + 1)}});
  }
  const std::vector<double> levels{6.0, 10.0, 13.0, 8.0};
  const auto leader = plateau_profile(levels, 60.0, 1.0, cfg.sim.dt);
  const auto stats = scenario_driver_characteristics(leader, agents, cfg.sim, cfg.agent);
  json rows = json::array();
  for (const auto& s : stats) {
    rows.push_back({{"T", s.T}, {"mean_time_gap", s.mean_time_gap}, {"samples", s.samples}, {"crashed", s.crashed}});
  }
  const json report = {{"agents", rows}};
  write_json(out / "drivers.json", report);
  m.outputs = {"drivers.json"};
  m.results = report;
  m.write(out);
  std::cout << report.dump(2) << '\n';
  for (const auto& s : stats)
    if (s.crashed) throw ScenarioFailure("drivers: crash for T=" + std::to_string(s.T));
  return 0;
}

int cmd_leader_profile(const Inputs& in, const Common& c, const std::vector<std::string>& argv) {
  const RunConfig cfg = resolve_config(c);
  const fs::path out = prepare_out(c);
  Manifest m{"leader-profile", argv, config_to_json(cfg), cfg.ddpg.seed};
  const int steps = in.steps > 0 ? in.steps : cfg.sim.episode_steps;
  const double v0 = in.v0 >= 0.0 ? in.v0 : cfg.leader.mu;
  OuParams p = cfg.leader;
  p.dt = cfg.sim.dt;
  const auto profile = generate_leader_profile(p, steps, v0, cfg.ddpg.seed);
  write_profile_csv((out / "leader_profile.csv").string(), profile, cfg.sim.dt);
  m.outputs = {"leader_profile.csv"};
  m.write(out);
  return 0;
}

/// Reference trajectory: an IDM follower behind an OU leader, in the ingestion
/// format.
int cmd_synth(const Inputs& in, const Common& c, const std::vector<std::string>& argv) {
  const RunConfig cfg = resolve_config(c);
  const fs::path out = prepare_out(c);
  Manifest m{"synth-trajectory", argv, config_to_json(cfg), cfg.ddpg.seed};
  const int steps = in.steps > 0 ? in.steps : 3000;
  const double v0 = in.v0 >= 0.0 ? in.v0 : 10.0;
  const auto leader = ou_leader(cfg.ddpg.seed, 0, steps, v0, cfg.leader);
  const IdmController idm(cfg.idm, cfg.idm_mode);
  SimConfig sim = cfg.sim;
  sim.episode_steps = steps;
  const double g0 = v0 < cfg.idm.v_des ? equilibrium_gap(v0, cfg.idm) : 50.0;
  const auto tr = run_episode(leader, idm, FollowerInit{v0, g0, 0.0}, sim, cfg.agent);
  if (tr.crashed) throw ScenarioFailure("synth-trajectory: reference follower crashed");
  write_trajectory_csv((out / "trajectory.csv").string(), trace_to_trajectory(tr));
  m.inputs["idm"] = idm_params_to_json(cfg.idm);
  m.outputs = {"trajectory.csv"};
  m.write(out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Modular reinforcement-learning car-following agent: training, scenarios, IDM baseline"};
  app.require_subcommand(1);
  const std::vector<std::string> args(argv, argv + argc);

  Common common;
  Inputs in;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "Run configuration file")->check(CLI::ExistingFile);
    sub->add_option("--set", common.overrides, "Override a configuration key, e.g. --set agent.T=1.0")
        ->allow_extra_args(false);
    sub->add_option_function<std::uint64_t>(
        "--seed", [&](std::uint64_t s) { common.seed = s; common.seed_given = true; }, "Master seed");
    sub->add_option("--out", common.out_dir, "Output directory")->capture_default_str();
    sub->add_option("--jobs", common.jobs, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  };
  auto add_rl = [&](CLI::App* sub) {
    sub->add_option("--rl", in.rl_dir, "Directory holding free.json and follow.json");
    sub->add_option("--free", in.free_ckpt, "Free-driving checkpoint");
    sub->add_option("--follow", in.follow_ckpt, "Car-following checkpoint");
  };
  auto add_idm = [&](CLI::App* sub) {
    sub->add_flag("--use-idm", in.idm_only, "Drive with the IDM instead of the RL agent");
    sub->add_option("--idm", in.idm_json, "IDM parameters (calibration output or plain object)");
  };

  auto* train_free = app.add_subcommand("train-free", "Train the free-driving policy");
  add_common(train_free);
  auto* train_follow = app.add_subcommand("train-follow", "Train the car-following policy");
  add_common(train_follow);

  auto* simulate = app.add_subcommand("simulate", "External leader speed profile scenario");
  add_common(simulate);
  add_rl(simulate);
  add_idm(simulate);
  simulate->add_option("--profile", in.profile, "Leader waypoint CSV (t,v)");

  auto* platoon = app.add_subcommand("platoon", "Platoon behind an OU or recorded leader");
  add_common(platoon);
  add_rl(platoon);
  add_idm(platoon);
  platoon->add_option("--data", in.data, "Recorded trajectory; its leader drives the platoon");
  platoon->add_option("--episodes", in.episodes, "Number of OU-leader episodes");
  platoon->add_option("--steps", in.steps, "Steps per OU-leader episode");
  platoon->add_option("--v0", in.v0, "Initial leader speed");

  auto* calib = app.add_subcommand("calibrate-idm", "Calibrate the IDM to a recorded trajectory");
  add_common(calib);
  calib->add_option("--data", in.data, "Trajectory CSV")->required();

  auto* ttc = app.add_subcommand("ttc", "Time-to-collision distribution over OU-leader episodes");
  add_common(ttc);
  add_rl(ttc);
  add_idm(ttc);
  ttc->add_option("--episodes", in.episodes, "Number of episodes");

  auto* compare = app.add_subcommand("compare", "Compare RL agent and IDM against a recorded follower");
  add_common(compare);
  add_rl(compare);
  compare->add_option("--idm", in.idm_json, "IDM parameters (calibration output or plain object)");
  compare->add_option("--data", in.data, "Trajectory CSV")->required();

  auto* drivers = app.add_subcommand("drivers", "Realized time gaps of agents trained with different T");
  add_common(drivers);
  drivers->add_option("--free", in.free_ckpt, "Free-driving checkpoint")->required();
  drivers->add_option("--agent", in.sweep, "T=PATH of a car-following checkpoint (repeatable)")->required();

  auto* leader = app.add_subcommand("leader-profile", "Write an OU leader speed profile");
  add_common(leader);
  leader->add_option("--steps", in.steps, "Number of samples");
  leader->add_option("--v0", in.v0, "Initial speed");

  auto* synth = app.add_subcommand("synth-trajectory", "Write an IDM reference trajectory behind an OU leader");
  add_common(synth);
  synth->add_option("--steps", in.steps, "Number of steps");
  synth->add_option("--v0", in.v0, "Initial speed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ErrorCategory::config);
  }

  try {
    if (*train_free) return cmd_train(PolicyKind::free_driving, common, args);
    if (*train_follow) return cmd_train(PolicyKind::car_following, common, args);
    if (*simulate) return cmd_simulate(in, common, args);
    if (*platoon) return cmd_platoon(in, common, args);
    if (*calib) return cmd_calibrate(in, common, args);
    if (*ttc) return cmd_ttc(in, common, args);
    if (*compare) return cmd_compare(in, common, args);
    if (*drivers) return cmd_drivers(in, common, args);
    if (*leader) return cmd_leader_profile(in, common, args);
    if (*synth) return cmd_synth(in, common, args);
  } catch (const Error& e) {
    std::cerr << "error[" << category_name(e.category()) << "]: " << e.what() << '\n';
    return static_cast<int>(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
