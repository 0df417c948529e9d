#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fedsim {

// Caller passed data that violates an operation's preconditions
// (dimension mismatch, empty dataset, impossible partition).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A configuration value failed validation. `field()` names the offending
// dotted config path, e.g. "client.batch_size".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::runtime_error(field + ": " + what), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// Parameters became non-finite during training or aggregation.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t round, std::size_t step, const std::string& what)
      : std::runtime_error("diverged at round " + std::to_string(round) +
                           ", step " + std::to_string(step) + ": " + what),
        round_(round),
        step_(step) {}

  std::size_t round() const noexcept { return round_; }
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t round_;
  std::size_t step_;
};

}  // namespace fedsim
