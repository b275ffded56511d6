#pragma once

// Run configuration: a small TOML subset (sections, key = value, numbers,
// booleans, strings, integer arrays, # comments) mapped onto the parameter
// structs, with dotted-key overrides.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "json.hpp"

#include "rlcf/ddpg.hpp"
#include "rlcf/errors.hpp"
#include "rlcf/idm.hpp"
#include "rlcf/io.hpp"
#include "rlcf/rewards.hpp"
#include "rlcf/sim.hpp"
#include "rlcf/stochastic.hpp"

namespace rlcf {

struct HarnessConfig {
  int platoon_size = 5;
  int platoon_steps = 1000;
  int eval_episodes = 500;
  int ttc_episodes = 15;
  double external_initial_gap = 200.0;
  std::vector<double> t_sweep{1.0, 1.5, 2.0};
};

struct RunConfig {
  AgentParams agent;
  ddpg::DdpgConfig ddpg;
  SimConfig sim;
  OuParams leader = OuParams::leader();
  IdmParams idm;
  IdmClamp idm_mode = IdmClamp::clamped;
  int calibration_restarts = 10;
  HarnessConfig harness;

  void validate() const {
    agent.validate();
    ddpg.validate();
    sim.validate();
    leader.validate();
    idm.validate();
    if (calibration_restarts < 0) throw ConfigError("idm.restarts: must be non-negative");
    if (harness.platoon_size <= 0) throw ConfigError("harness.platoon_size: must be positive");
    if (harness.platoon_steps <= 0) throw ConfigError("harness.platoon_steps: must be positive");
    if (harness.eval_episodes <= 0) throw ConfigError("harness.eval_episodes: must be positive");
    if (harness.ttc_episodes <= 0) throw ConfigError("harness.ttc_episodes: must be positive");
    if (!(harness.external_initial_gap > 0.0)) throw ConfigError("harness.external_initial_gap: must be positive");
    if (harness.t_sweep.empty()) throw ConfigError("harness.t_sweep: must not be empty");
  }
};

namespace config_detail {

using Setter = std::function<void(RunConfig&, std::string_view)>;

inline std::string strip_quotes(std::string_view v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return std::string(v.substr(1, v.size() - 2));
  return std::string(v);
}

inline double number(const std::string& key, std::string_view v) {
  const auto d = detail::parse_double(v);
  if (!d) throw ConfigError(key + ": expected a number, got '" + std::string(v) + "'");
  return *d;
}

inline long integer(const std::string& key, std::string_view v) {
  const double d = number(key, v);
  if (d != std::floor(d) || std::abs(d) > 9.0e15) {
    throw ConfigError(key + ": expected an integer, got '" + std::string(v) + "'");
  }
  return static_cast<long>(d);
}

inline bool boolean(const std::string& key, std::string_view v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError(key + ": expected true or false, got '" + std::string(v) + "'");
}

template <typename T>
std::vector<T> list(const std::string& key, std::string_view v, bool integral) {
  v = detail::trim(v);
  if (v.size() < 2 || v.front() != '[' || v.back() != ']') {
    throw ConfigError(key + ": expected a list like [32, 32], got '" + std::string(v) + "'");
  }
  std::vector<T> out;
  const auto body = detail::trim(v.substr(1, v.size() - 2));
  if (body.empty()) return out;
  for (auto cell : detail::split_commas(body)) {
    out.push_back(integral ? static_cast<T>(integer(key, cell)) : static_cast<T>(number(key, cell)));
  }
  return out;
}

inline const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> m;
    auto real = [&m](const std::string& key, auto member) {
      m[key] = [key, member](RunConfig& c, std::string_view v) { member(c) = number(key, v); };
    };
    auto whole = [&m](const std::string& key, auto member) {
      m[key] = [key, member](RunConfig& c, std::string_view v) {
        member(c) = static_cast<std::remove_reference_t<decltype(member(c))>>(integer(key, v));
      };
    };
    real("agent.a_min", [](RunConfig& c) -> double& { return c.agent.a_min; });
    real("agent.a_max", [](RunConfig& c) -> double& { return c.agent.a_max; });
    real("agent.b_comf", [](RunConfig& c) -> double& { return c.agent.b_comf; });
    real("agent.j_comf", [](RunConfig& c) -> double& { return c.agent.j_comf; });
    real("agent.v_des", [](RunConfig& c) -> double& { return c.agent.v_des; });
    real("agent.T", [](RunConfig& c) -> double& { return c.agent.T; });
    real("agent.g_min", [](RunConfig& c) -> double& { return c.agent.g_min; });
    real("agent.T_lim", [](RunConfig& c) -> double& { return c.agent.T_lim; });
    real("agent.w_gap", [](RunConfig& c) -> double& { return c.agent.w_gap; });
    real("agent.w_jerk", [](RunConfig& c) -> double& { return c.agent.w_jerk; });

    real("ddpg.lr_actor", [](RunConfig& c) -> double& { return c.ddpg.lr_actor; });
    real("ddpg.lr_critic", [](RunConfig& c) -> double& { return c.ddpg.lr_critic; });
    real("ddpg.gamma", [](RunConfig& c) -> double& { return c.ddpg.gamma; });
    whole("ddpg.batch_size", [](RunConfig& c) -> int& { return c.ddpg.batch_size; });
    real("ddpg.tau", [](RunConfig& c) -> double& { return c.ddpg.tau; });
    whole("ddpg.buffer_capacity", [](RunConfig& c) -> std::size_t& { return c.ddpg.buffer_capacity; });
    real("ddpg.ou_theta", [](RunConfig& c) -> double& { return c.ddpg.ou_theta; });
    real("ddpg.ou_sigma", [](RunConfig& c) -> double& { return c.ddpg.ou_sigma; });
    whole("ddpg.episodes", [](RunConfig& c) -> int& { return c.ddpg.episodes; });
    whole("ddpg.steps_per_episode", [](RunConfig& c) -> int& { return c.ddpg.steps_per_episode; });
    whole("ddpg.monitor_window", [](RunConfig& c) -> int& { return c.ddpg.monitor_window; });
    whole("ddpg.seed", [](RunConfig& c) -> std::uint64_t& { return c.ddpg.seed; });
    m["ddpg.hidden_free"] = [](RunConfig& c, std::string_view v) { c.ddpg.hidden_free = list<int>("ddpg.hidden_free", v, true); };
    m["ddpg.hidden_follow"] = [](RunConfig& c, std::string_view v) { c.ddpg.hidden_follow = list<int>("ddpg.hidden_follow", v, true); };
    m["ddpg.optimizer"] = [](RunConfig& c, std::string_view v) {
      const auto s = strip_quotes(v);
      if (s == "adam") {
        c.ddpg.optimizer = ddpg::OptimizerKind::adam;
      } else if (s == "sgd") {
        c.ddpg.optimizer = ddpg::OptimizerKind::sgd;
      } else {
        throw ConfigError("ddpg.optimizer: expected \"adam\" or \"sgd\", got '" + std::string(v) + "'");
      }
    };

    real("sim.dt", [](RunConfig& c) -> double& { return c.sim.dt; });
    whole("sim.episode_steps", [](RunConfig& c) -> int& { return c.sim.episode_steps; });
    real("sim.g_max", [](RunConfig& c) -> double& { return c.sim.g_max; });
    real("sim.vehicle_length", [](RunConfig& c) -> double& { return c.sim.vehicle_length; });
    m["sim.crash_mode"] = [](RunConfig& c, std::string_view v) {
      const auto s = strip_quotes(v);
      if (s == "terminate") {
        c.sim.crash_mode = CrashMode::terminate;
      } else if (s == "continue_clamped") {
        c.sim.crash_mode = CrashMode::continue_clamped;
      } else {
        throw ConfigError("sim.crash_mode: expected \"terminate\" or \"continue_clamped\", got '" + std::string(v) + "'");
      }
    };

    real("leader.theta", [](RunConfig& c) -> double& { return c.leader.theta; });
    real("leader.mu", [](RunConfig& c) -> double& { return c.leader.mu; });
    real("leader.sigma", [](RunConfig& c) -> double& { return c.leader.sigma; });
    m["leader.v_min"] = [](RunConfig& c, std::string_view v) { c.leader.clip_lo = number("leader.v_min", v); };
    m["leader.v_max"] = [](RunConfig& c, std::string_view v) { c.leader.clip_hi = number("leader.v_max", v); };

    real("idm.v_des", [](RunConfig& c) -> double& { return c.idm.v_des; });
    real("idm.T", [](RunConfig& c) -> double& { return c.idm.T; });
    real("idm.g_min", [](RunConfig& c) -> double& { return c.idm.g_min; });
    real("idm.a_max", [](RunConfig& c) -> double& { return c.idm.a_max; });
    real("idm.b_comf", [](RunConfig& c) -> double& { return c.idm.b_comf; });
    whole("idm.restarts", [](RunConfig& c) -> int& { return c.calibration_restarts; });
    m["idm.clamp"] = [](RunConfig& c, std::string_view v) {
      c.idm_mode = boolean("idm.clamp", v) ? IdmClamp::clamped : IdmClamp::unclamped;
    };

    whole("harness.platoon_size", [](RunConfig& c) -> int& { return c.harness.platoon_size; });
    whole("harness.platoon_steps", [](RunConfig& c) -> int& { return c.harness.platoon_steps; });
    whole("harness.eval_episodes", [](RunConfig& c) -> int& { return c.harness.eval_episodes; });
    whole("harness.ttc_episodes", [](RunConfig& c) -> int& { return c.harness.ttc_episodes; });
    real("harness.external_initial_gap", [](RunConfig& c) -> double& { return c.harness.external_initial_gap; });
    m["harness.t_sweep"] = [](RunConfig& c, std::string_view v) { c.harness.t_sweep = list<double>("harness.t_sweep", v, false); };
    return m;
  }();
  return table;
}

}  // namespace config_detail

/// Every key the configuration understands, in dotted form.
inline std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : config_detail::setters()) keys.push_back(k);
  return keys;
}

/// Sets one dotted key. A bare key (no section) refers to the agent section.
inline void set_config_value(RunConfig& c, const std::string& key, std::string_view value) {
  const std::string dotted = key.find('.') == std::string::npos ? "agent." + key : key;
  const auto& table = config_detail::setters();
  const auto it = table.find(dotted);
  if (it == table.end()) throw ConfigError(key + ": unknown configuration key");
  try {
    it->second(c, detail::trim(value));
  } catch (const ConfigError& e) {
    if (dotted != key) throw ConfigError(key + " (" + e.what() + ")");
    throw;
  }
}

/// Applies `key=value`.
inline void apply_override(RunConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError(assignment + ": override must have the form key=value");
  }
  set_config_value(c, std::string(detail::trim(std::string_view(assignment).substr(0, eq))),
                   std::string_view(assignment).substr(eq + 1));
}

inline void apply_config_text(RunConfig& c, std::string_view text, const std::string& origin = "config") {
  std::string section;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = text.find('\n', pos);
    std::string_view raw = text.substr(pos, end == std::string_view::npos ? text.size() - pos : end - pos);
    pos = end == std::string_view::npos ? text.size() + 1 : end + 1;
    ++line_no;
    // Strip comments outside quoted strings.
    bool quoted = false;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (raw[i] == '"') quoted = !quoted;
      if (raw[i] == '#' && !quoted) {
        raw = raw.substr(0, i);
        break;
      }
    }
    const auto line = detail::trim(raw);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "malformed section header");
      section = std::string(detail::trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + "expected key = value");
    const auto key = std::string(detail::trim(line.substr(0, eq)));
    const auto dotted = section.empty() ? key : section + "." + key;
    try {
      set_config_value(c, dotted, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig c;
  apply_config_text(c, ss.str(), path);
  return c;
}

inline nlohmann::json config_to_json(const RunConfig& c) {
  nlohmann::json j;
  j["agent"] = agent_params_to_json(c.agent);
  j["ddpg"] = {{"lr_actor", c.ddpg.lr_actor},
               {"lr_critic", c.ddpg.lr_critic},
               {"gamma", c.ddpg.gamma},
               {"batch_size", c.ddpg.batch_size},
               {"tau", c.ddpg.tau},
               {"buffer_capacity", c.ddpg.buffer_capacity},
               {"ou_theta", c.ddpg.ou_theta},
               {"ou_sigma", c.ddpg.ou_sigma},
               {"episodes", c.ddpg.episodes},
               {"steps_per_episode", c.ddpg.steps_per_episode},
               {"monitor_window", c.ddpg.monitor_window},
               {"seed", c.ddpg.seed},
               {"hidden_free", c.ddpg.hidden_free},
               {"hidden_follow", c.ddpg.hidden_follow},
               {"optimizer", c.ddpg.optimizer == ddpg::OptimizerKind::adam ? "adam" : "sgd"}};
  j["sim"] = {{"dt", c.sim.dt},
              {"episode_steps", c.sim.episode_steps},
              {"g_max", c.sim.g_max},
              {"vehicle_length", c.sim.vehicle_length},
              {"crash_mode", c.sim.crash_mode == CrashMode::terminate ? "terminate" : "continue_clamped"}};
  j["leader"] = {{"theta", c.leader.theta}, {"mu", c.leader.mu}, {"sigma", c.leader.sigma}};
  if (c.leader.clip_lo) j["leader"]["v_min"] = *c.leader.clip_lo;
  if (c.leader.clip_hi) j["leader"]["v_max"] = *c.leader.clip_hi;
  j["idm"] = {{"v_des", c.idm.v_des}, {"T", c.idm.T},           {"g_min", c.idm.g_min},
              {"a_max", c.idm.a_max}, {"b_comf", c.idm.b_comf}, {"restarts", c.calibration_restarts},
              {"clamp", c.idm_mode == IdmClamp::clamped}};
  j["harness"] = {{"platoon_size", c.harness.platoon_size},
                  {"platoon_steps", c.harness.platoon_steps},
                  {"eval_episodes", c.harness.eval_episodes},
                  {"ttc_episodes", c.harness.ttc_episodes},
                  {"external_initial_gap", c.harness.external_initial_gap},
                  {"t_sweep", c.harness.t_sweep}};
  return j;
}

/// IDM parameters from a calibration result or a plain parameter object.
inline IdmParams idm_params_from_json(const nlohmann::json& j) {
  const auto& p = j.contains("params") ? j.at("params") : j;
  try {
    IdmParams out{p.at("v_des").get<double>(), p.at("T").get<double>(), p.at("g_min").get<double>(),
                  p.at("a_max").get<double>(), p.at("b_comf").get<double>()};
    out.validate();
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("IDM parameters: ") + e.what());
  }
}

inline nlohmann::json idm_params_to_json(const IdmParams& p) {
  return {{"v_des", p.v_des}, {"T", p.T}, {"g_min", p.g_min}, {"a_max", p.a_max}, {"b_comf", p.b_comf}};
}

}  // namespace rlcf
