#pragma once

#include <optional>
#include <string>

namespace rlcf {

/// What a follower sees of its immediate leader.
struct LeaderView {
  double v = 0.0;    // leader speed, m/s
  double gap = 0.0;  // raw bumper-to-bumper gap, m
};

/// Everything a controller may observe at one step.
struct Scene {
  double v = 0.0;  // own speed
  double a = 0.0;  // own previous commanded acceleration
  std::optional<LeaderView> leader;
};

/// Longitudinal controller: scene in, commanded acceleration out.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual double acceleration(const Scene& scene) const = 0;
  virtual std::string id() const = 0;
};

}  // namespace rlcf
