#pragma once

// Derivative-free simplex minimisation with box bounds handled by a logistic
// change of variables, plus a seeded multistart driver.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "rlcf/stochastic.hpp"

namespace rlcf::optim {

using Objective = std::function<double(std::span<const double>)>;

struct Bounds {
  std::vector<double> lo;
  std::vector<double> hi;

  std::size_t size() const { return lo.size(); }
  void validate() const {
    if (lo.size() != hi.size() || lo.empty()) throw std::invalid_argument("bounds: size mismatch");
    for (std::size_t i = 0; i < lo.size(); ++i) {
      if (!(lo[i] < hi[i])) throw std::invalid_argument("bounds: lower bound must be below upper");
    }
  }
};

struct NelderMeadOptions {
  int max_evaluations = 4000;
  double f_tol = 1e-14;  // spread of simplex values
  double x_tol = 1e-10;  // simplex diameter in the unbounded coordinates
  double initial_step = 0.5;
};

struct OptimResult {
  std::vector<double> x;
  double value = std::numeric_limits<double>::infinity();
  int evaluations = 0;
  bool converged = false;
};

/// Unconstrained Nelder-Mead with the standard coefficients (1, 2, 0.5, 0.5).
inline OptimResult nelder_mead(const Objective& f, std::vector<double> x0,
                               const NelderMeadOptions& opt = {}) {
  const std::size_t n = x0.size();
  if (n == 0) throw std::invalid_argument("nelder_mead: empty start point");
  OptimResult res;
  auto eval = [&](const std::vector<double>& x) {
    ++res.evaluations;
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::max();
  };

  std::vector<std::vector<double>> simplex(n + 1, x0);
  for (std::size_t i = 0; i < n; ++i) simplex[i + 1][i] += opt.initial_step;
  std::vector<double> fv(n + 1);
  for (std::size_t i = 0; i <= n; ++i) fv[i] = eval(simplex[i]);

  std::vector<std::size_t> order(n + 1);
  std::vector<double> centroid(n), trial(n), trial2(n);
  auto point = [&](double t, std::vector<double>& out) {
    // centroid + t * (centroid - worst)
    for (std::size_t j = 0; j < n; ++j) out[j] = centroid[j] + t * (centroid[j] - simplex[order[n]][j]);
  };

  while (res.evaluations < opt.max_evaluations) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return fv[a] < fv[b]; });

    double diameter = 0.0;
    for (std::size_t i = 1; i <= n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        diameter = std::max(diameter, std::abs(simplex[order[i]][j] - simplex[order[0]][j]));
    if (std::abs(fv[order[n]] - fv[order[0]]) <= opt.f_tol && diameter <= opt.x_tol) {
      res.converged = true;
      break;
    }

    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) centroid[j] += simplex[order[i]][j] / double(n);

    const std::size_t w = order[n];
    point(1.0, trial);
    const double fr = eval(trial);
    if (fr < fv[order[0]]) {
      point(2.0, trial2);
      const double fe = eval(trial2);
      if (fe < fr) {
        simplex[w] = trial2;
        fv[w] = fe;
      } else {
        simplex[w] = trial;
        fv[w] = fr;
      }
      continue;
    }
    if (fr < fv[order[n - 1]]) {
      simplex[w] = trial;
      fv[w] = fr;
      continue;
    }
    const bool outside = fr < fv[w];
    point(outside ? 0.5 : -0.5, trial2);
    const double fc = eval(trial2);
    if (fc < (outside ? fr : fv[w])) {
      simplex[w] = trial2;
      fv[w] = fc;
      continue;
    }
    const auto& best = simplex[order[0]];
    for (std::size_t i = 1; i <= n; ++i) {
      auto& s = simplex[order[i]];
      for (std::size_t j = 0; j < n; ++j) s[j] = best[j] + 0.5 * (s[j] - best[j]);
      fv[order[i]] = eval(s);
    }
  }
  const auto best = std::min_element(fv.begin(), fv.end()) - fv.begin();
  res.x = simplex[best];
  res.value = fv[best];
  return res;
}

/// Maps an unbounded coordinate into (lo, hi) and back.
inline double to_bounded(double z, double lo, double hi) { return lo + (hi - lo) / (1.0 + std::exp(-z)); }

inline double to_unbounded(double x, double lo, double hi) {
  const double eps = 1e-9;
  const double u = std::clamp((x - lo) / (hi - lo), eps, 1.0 - eps);
  return std::log(u / (1.0 - u));
}

inline std::vector<double> to_bounded(std::span<const double> z, const Bounds& b) {
  std::vector<double> x(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) x[i] = to_bounded(z[i], b.lo[i], b.hi[i]);
  return x;
}

/// Nelder-Mead in the logistic coordinates; the result is in the original
/// coordinates.
inline OptimResult nelder_mead_bounded(const Objective& f, std::span<const double> x0,
                                       const Bounds& b, const NelderMeadOptions& opt = {}) {
  b.validate();
  if (x0.size() != b.size()) throw std::invalid_argument("nelder_mead_bounded: start/bounds size mismatch");
  std::vector<double> z0(x0.size());
  for (std::size_t i = 0; i < z0.size(); ++i) z0[i] = to_unbounded(x0[i], b.lo[i], b.hi[i]);
  OptimResult r = nelder_mead([&](std::span<const double> z) { return f(to_bounded(z, b)); }, z0, opt);
  r.x = to_bounded(r.x, b);
  return r;
}

/// Uniform random start points inside the bounds.
inline std::vector<std::vector<double>> random_starts(const Bounds& b, int count, RandomStream& rng) {
  std::vector<std::vector<double>> out(count, std::vector<double>(b.size()));
  for (auto& x : out)
    for (std::size_t i = 0; i < b.size(); ++i) x[i] = rng.uniform(b.lo[i], b.hi[i]);
  return out;
}

/// Best result over the given starts; ties keep the earliest start.
inline OptimResult best_of(const std::vector<OptimResult>& runs) {
  if (runs.empty()) throw std::invalid_argument("best_of: no runs");
  std::size_t best = 0;
  for (std::size_t i = 1; i < runs.size(); ++i)
    if (runs[i].value < runs[best].value) best = i;
  return runs[best];
}

}  // namespace rlcf::optim
