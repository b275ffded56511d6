#pragma once

#include <stdexcept>
#include <string>

namespace rlcf {

/// Error categories double as process exit codes for the command-line tool.
enum class ErrorCategory : int {
  config = 2,
  data = 3,
  training_diverged = 4,
  scenario_failure = 5,
};

inline const char* category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::config: return "config";
    case ErrorCategory::data: return "data";
    case ErrorCategory::training_diverged: return "training_diverged";
    case ErrorCategory::scenario_failure: return "scenario_failure";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}
  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::config, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorCategory::data, what) {}
};

class TrainingDiverged : public Error {
 public:
  explicit TrainingDiverged(const std::string& what)
      : Error(ErrorCategory::training_diverged, what) {}
};

class ScenarioFailure : public Error {
 public:
  explicit ScenarioFailure(const std::string& what)
      : Error(ErrorCategory::scenario_failure, what) {}
};

}  // namespace rlcf
