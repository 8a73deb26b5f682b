#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace msbias {

/// Argument outside the mathematical domain of a field or density.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Invalid numerical or experiment configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A multi-scale step that violated the positivity policy.
class StepFailure : public std::runtime_error {
 public:
  StepFailure(const std::string& what, std::size_t step_index)
      : std::runtime_error(what + " (step " + std::to_string(step_index) + ")"),
        step_index_(step_index) {}

  std::size_t step_index() const noexcept { return step_index_; }

 private:
  std::size_t step_index_;
};

/// A statistical estimator refused to produce a value (divergence, short data).
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace msbias
