#pragma once

#include <stdexcept>
#include <string>

namespace nqsched {

/// Thrown when a moment recurrence produces a variance more negative than
/// rounding can explain; signals that the step size is too large for the
/// regime rather than silently clamping a diverging rollout.
class instability_error : public std::runtime_error {
 public:
  explicit instability_error(const std::string& what, long step = -1)
      : std::runtime_error(what), step_(step) {}

  /// Schedule step at which the instability surfaced, or -1 if unknown.
  long step() const { return step_; }

 private:
  long step_;
};

/// Thrown when a closed-form minimizer is undefined at the given state
/// (for example a vanishing denominator at a fully converged state).
class degenerate_state_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace nqsched
