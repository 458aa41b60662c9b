#pragma once

#include <stdexcept>
#include <string>

namespace inslicing {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand dimensions do not agree with the problem or model.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A performance evaluator failed or returned a non-finite value.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss. The model is left at its last finite state.
class TrainingDivergedError : public Error {
 public:
  TrainingDivergedError(const std::string& what, int last_stable_step)
      : Error(what), last_stable_step_(last_stable_step) {}
  int last_stable_step() const noexcept { return last_stable_step_; }

 private:
  int last_stable_step_;
};

/// Kernel matrix could not be factorized even after jitter escalation.
class ConditioningError : public Error {
 public:
  using Error::Error;
};

/// The trust-region model predicted no decrease for the proposed step.
class SubproblemDegenerateError : public Error {
 public:
  using Error::Error;
};

class ScenarioGenerationError : public Error {
 public:
  using Error::Error;
};

/// Malformed configuration, JSON or CSV input.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace inslicing
