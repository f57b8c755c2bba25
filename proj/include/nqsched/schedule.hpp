#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

namespace nqsched {

struct ScheduleStep {
  double alpha = 0.0;
  double mu = 0.0;
};

/// A length-T sequence of (learning rate, momentum) pairs. Learning rates
/// must be nonnegative; momenta are unconstrained at this level.
struct Schedule {
  std::vector<ScheduleStep> steps;

  Schedule() = default;
  explicit Schedule(std::vector<ScheduleStep> s) : steps(std::move(s)) { validate(); }

  static Schedule constant(double alpha, double mu, std::size_t horizon) {
    return Schedule(std::vector<ScheduleStep>(horizon, ScheduleStep{alpha, mu}));
  }

  std::size_t size() const { return steps.size(); }
  bool empty() const { return steps.empty(); }
  const ScheduleStep& operator[](std::size_t t) const { return steps[t]; }

  void validate() const {
    for (const auto& s : steps)
      if (!(s.alpha >= 0.0))
        throw std::invalid_argument("Schedule: learning rates must be >= 0");
  }
};

/// Parametric decay family alpha_t = alpha0 / (1 + t/K)^beta with a fixed
/// momentum. K and mu default to the values used throughout the experiments.
struct InverseTimeDecay {
  double alpha0;
  double beta;
  double time_constant;
  double mu;

  explicit InverseTimeDecay(double alpha0_, double beta_, double time_constant_ = 5000.0,
                            double mu_ = 0.9)
      : alpha0(alpha0_), beta(beta_), time_constant(time_constant_), mu(mu_) {
    if (!(alpha0 > 0.0)) throw std::invalid_argument("InverseTimeDecay: alpha0 must be > 0");
    if (!(beta >= 0.0)) throw std::invalid_argument("InverseTimeDecay: beta must be >= 0");
    if (!(time_constant > 0.0))
      throw std::invalid_argument("InverseTimeDecay: time constant must be > 0");
    if (!(mu >= 0.0 && mu < 1.0))
      throw std::invalid_argument("InverseTimeDecay: mu must lie in [0, 1)");
  }
};

inline double eval_inverse_time_decay(const InverseTimeDecay& p, long t) {
  if (t < 0) throw std::invalid_argument("eval_inverse_time_decay: t must be >= 0");
  return p.alpha0 / std::pow(1.0 + static_cast<double>(t) / p.time_constant, p.beta);
}

inline Schedule materialize(const InverseTimeDecay& p, std::size_t horizon) {
  std::vector<ScheduleStep> steps(horizon);
  for (std::size_t t = 0; t < horizon; ++t)
    steps[t] = ScheduleStep{eval_inverse_time_decay(p, static_cast<long>(t)), p.mu};
  return Schedule(std::move(steps));
}

}  // namespace nqsched
