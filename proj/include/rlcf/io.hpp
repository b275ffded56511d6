#pragma once

// CSV ingestion of speed profiles and recorded platoon trajectories, and CSV
// export of simulation traces.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "rlcf/errors.hpp"
#include "rlcf/idm.hpp"
#include "rlcf/sim.hpp"

namespace rlcf {

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? line.size() - start : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

/// Header plus numeric rows; errors carry the 1-based line number.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::vector<int> line_numbers;
};

inline CsvTable read_numeric_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  CsvTable t;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto cells = split_commas(body);
    if (t.header.empty()) {
      for (auto c : cells) t.header.emplace_back(c);
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(t.header.size()) + " fields, found " + std::to_string(cells.size()));
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const auto v = parse_double(cells[i]);
      if (!v) {
        throw DataError(path + ":" + std::to_string(line_no) + ": field '" + t.header[i] +
                        "' is not a number: '" + std::string(cells[i]) + "'");
      }
      row.push_back(*v);
    }
    t.rows.push_back(std::move(row));
    t.line_numbers.push_back(line_no);
  }
  if (t.header.empty()) throw DataError(path + ": empty file");
  return t;
}

}  // namespace detail

/// Linear interpolation of (t, y) samples onto t0 + k * dt for k < count;
/// values past the last sample hold the last value.
inline std::vector<double> resample_linear(const std::vector<double>& t, const std::vector<double>& y,
                                           double t0, double dt, std::size_t count) {
  std::vector<double> out(count);
  std::size_t j = 0;
  for (std::size_t k = 0; k < count; ++k) {
    const double tk = t0 + double(k) * dt;
    while (j + 1 < t.size() && t[j + 1] <= tk) ++j;
    if (j + 1 >= t.size() || tk <= t[j]) {
      out[k] = tk <= t.front() ? y.front() : y[j];
    } else {
      const double w = (tk - t[j]) / (t[j + 1] - t[j]);
      out[k] = y[j] + w * (y[j + 1] - y[j]);
    }
  }
  return out;
}

/// Number of grid points covering [t_first, t_last] at spacing dt.
inline std::size_t grid_length(double t_first, double t_last, double dt) {
  return static_cast<std::size_t>(std::ceil((t_last - t_first) / dt - 1e-9)) + 1;
}

/// Speed profile from a `t,v` waypoint file, on the simulation grid starting
/// at the first waypoint.
inline std::vector<double> load_profile_csv(const std::string& path, double dt = 0.1) {
  const auto tab = detail::read_numeric_csv(path);
  if (tab.header.size() != 2 || tab.header[0] != "t" || tab.header[1] != "v") {
    throw DataError(path + ": expected header 't,v'");
  }
  if (tab.rows.size() < 2) throw DataError(path + ": need at least two waypoints");
  std::vector<double> t, v;
  for (std::size_t i = 0; i < tab.rows.size(); ++i) {
    if (i > 0 && !(tab.rows[i][0] > t.back())) {
      throw DataError(path + ":" + std::to_string(tab.line_numbers[i]) + ": time is not increasing");
    }
    if (tab.rows[i][1] < 0.0) {
      throw DataError(path + ":" + std::to_string(tab.line_numbers[i]) + ": negative speed");
    }
    t.push_back(tab.rows[i][0]);
    v.push_back(tab.rows[i][1]);
  }
  return resample_linear(t, v, t.front(), dt, grid_length(t.front(), t.back(), dt));
}

/// Recorded platoon: leader speed plus, per follower, its gap to the vehicle
/// ahead and (when recorded) its own speed, all on a uniform grid.
struct Trajectory {
  double dt = 0.1;
  double t0 = 0.0;
  std::vector<double> leader_speed;
  std::vector<std::vector<double>> gaps;                            // [follower][sample]
  std::vector<std::optional<std::vector<double>>> follower_speeds;  // [follower][sample]
  bool resampled = false;

  std::size_t samples() const { return leader_speed.size(); }
  std::size_t followers() const { return gaps.size(); }

  /// Initial speed of follower i: recorded, or reconstructed from the gap rate.
  double follower_v0(std::size_t i) const {
    if (follower_speeds.at(i)) return (*follower_speeds[i])[0];
    const double ahead = i == 0 ? leader_speed[0]
                                : (follower_speeds[i - 1] ? (*follower_speeds[i - 1])[0] : follower_v0(i - 1));
    return std::max(0.0, ahead - (gaps[i][1] - gaps[i][0]) / dt);
  }

  CalibrationData calibration_data(std::size_t follower = 0) const {
    if (follower != 0) throw DataError("calibration uses the first follower behind the recorded leader");
    CalibrationData d;
    d.dt = dt;
    d.leader_speed = leader_speed;
    d.gaps = gaps.at(0);
    d.follower_v0 = follower_v0(0);
    return d;
  }
};

inline constexpr double kGridStep = 0.1;

/// Reads `t,v_leader,gap1[,v_follower1,gap2,v_follower2,...]`. Files already on
/// a 0.1 s grid are taken as is; anything else is linearly resampled.
inline Trajectory ingest_trajectory(const std::string& path, double dt = kGridStep) {
  const auto tab = detail::read_numeric_csv(path);
  const auto& h = tab.header;
  if (h.size() < 3 || h[0] != "t" || h[1] != "v_leader" || h[2] != "gap1") {
    throw DataError(path + ": header must start with 't,v_leader,gap1'");
  }
  // Column layout after t, v_leader: gap1, v_follower1, gap2, v_follower2, ...
  std::size_t n_followers = 0;
  std::vector<std::optional<std::size_t>> speed_col;
  std::vector<std::size_t> gap_col;
  for (std::size_t c = 2; c < h.size(); ++c) {
    const std::size_t idx = (c - 2) / 2 + 1;
    const bool is_gap = (c - 2) % 2 == 0;
    const std::string want = (is_gap ? "gap" : "v_follower") + std::to_string(idx);
    if (h[c] != want) throw DataError(path + ": column " + std::to_string(c + 1) + " should be '" + want + "'");
    if (is_gap) {
      ++n_followers;
      gap_col.push_back(c);
      speed_col.push_back(std::nullopt);
    } else {
      speed_col.back() = c;
    }
  }
  if (speed_col.size() > 1 && !speed_col[speed_col.size() - 2]) {
    throw DataError(path + ": every follower except the last needs a speed column");
  }
  if (tab.rows.size() < 2) throw DataError(path + ": need at least two samples");

  std::vector<double> t;
  for (std::size_t r = 0; r < tab.rows.size(); ++r) {
    const auto& row = tab.rows[r];
    const std::string where = path + ":" + std::to_string(tab.line_numbers[r]);
    if (r > 0 && !(row[0] > t.back())) throw DataError(where + ": time is not increasing");
    if (row[1] < 0.0) throw DataError(where + ": negative leader speed");
    for (std::size_t i = 0; i < n_followers; ++i) {
      if (!(row[gap_col[i]] > 0.0)) throw DataError(where + ": non-positive gap" + std::to_string(i + 1));
      if (speed_col[i] && row[*speed_col[i]] < 0.0) {
        throw DataError(where + ": negative speed of follower " + std::to_string(i + 1));
      }
    }
    t.push_back(row[0]);
  }

  bool uniform = true;
  for (std::size_t r = 1; r < t.size(); ++r) {
    if (std::abs((t[r] - t[0]) - double(r) * dt) > 1e-9) {
      uniform = false;
      break;
    }
  }

  Trajectory out;
  out.dt = dt;
  out.t0 = t.front();
  out.resampled = !uniform;
  const std::size_t count = uniform ? t.size() : grid_length(t.front(), t.back(), dt);
  auto column = [&](std::size_t c) {
    std::vector<double> y;
    y.reserve(tab.rows.size());
    for (const auto& row : tab.rows) y.push_back(row[c]);
    return uniform ? y : resample_linear(t, y, t.front(), dt, count);
  };
  out.leader_speed = column(1);
  for (std::size_t i = 0; i < n_followers; ++i) {
    out.gaps.push_back(column(gap_col[i]));
    if (speed_col[i]) {
      out.follower_speeds.emplace_back(column(*speed_col[i]));
    } else {
      out.follower_speeds.emplace_back(std::nullopt);
    }
  }
  return out;
}

inline void write_trajectory_csv(const std::string& path, const Trajectory& tr) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out.precision(17);
  out << "t,v_leader";
  for (std::size_t i = 0; i < tr.followers(); ++i) {
    out << ",gap" << i + 1;
    if (tr.follower_speeds[i]) out << ",v_follower" << i + 1;
  }
  out << '\n';
  for (std::size_t k = 0; k < tr.samples(); ++k) {
    out << tr.t0 + double(k) * tr.dt << ',' << tr.leader_speed[k];
    for (std::size_t i = 0; i < tr.followers(); ++i) {
      out << ',' << tr.gaps[i][k];
      if (tr.follower_speeds[i]) out << ',' << (*tr.follower_speeds[i])[k];
    }
    out << '\n';
  }
}

/// Recorded-format view of a simulated episode, including the initial state.
inline Trajectory trace_to_trajectory(const EpisodeTrace& tr) {
  Trajectory out;
  out.dt = tr.dt;
  out.leader_speed.push_back(tr.leader_initial.v);
  for (const auto& s : tr.leader) out.leader_speed.push_back(s.v);
  for (std::size_t i = 0; i < tr.follower_count(); ++i) {
    const double front_x = i == 0 ? tr.leader_initial.x : tr.followers_initial[i - 1].x;
    std::vector<double> g{front_x - tr.followers_initial[i].x - tr.vehicle_length};
    g.insert(g.end(), tr.gaps[i].begin(), tr.gaps[i].end());
    std::vector<double> v{tr.followers_initial[i].v};
    for (const auto& s : tr.followers[i]) v.push_back(s.v);
    out.gaps.push_back(std::move(g));
    out.follower_speeds.emplace_back(std::move(v));
  }
  return out;
}

/// Per step: time, leader x/v/a, then per follower x/v/a/gap/jerk and the
/// reward terms.
inline void write_trace_csv(const std::string& path, const EpisodeTrace& tr) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out.precision(10);
  out << "t,x_leader,v_leader,a_leader";
  for (std::size_t i = 1; i <= tr.follower_count(); ++i) {
    for (const char* f : {"x", "v", "a", "gap", "jerk", "r_safe", "r_gap", "r_jerk", "r_total"}) {
      out << ',' << f << i;
    }
  }
  out << '\n';
  for (std::size_t k = 0; k < tr.steps(); ++k) {
    out << tr.time[k] << ',' << tr.leader[k].x << ',' << tr.leader[k].v << ',' << tr.leader[k].a;
    for (std::size_t i = 0; i < tr.follower_count(); ++i) {
      const auto& s = tr.followers[i][k];
      const auto& r = tr.rewards[i][k];
      out << ',' << s.x << ',' << s.v << ',' << s.a << ',' << tr.gaps[i][k] << ',' << tr.jerks[i][k]
          << ',' << r.r_safe << ',' << r.r_gap << ',' << r.r_jerk << ',' << r.total;
    }
    out << '\n';
  }
}

}  // namespace rlcf
