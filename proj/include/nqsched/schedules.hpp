#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nqsched/dynamics.hpp"
#include "nqsched/errors.hpp"
#include "nqsched/quad_model.hpp"
#include "nqsched/schedule.hpp"

namespace nqsched {

/// Closed-form (alpha, mu) minimizing the expected loss one step ahead.
///
/// With per-dimension second moments A(theta_i), A(v_i) and cross moments
/// E[theta_i v_i], the stationarity conditions reduce to five weighted sums:
///   S1 = sum h^2 A(theta)        S2 = sum h^3 (A(theta) + sigma2)
///   S3 = sum h   E[theta v]      S4 = sum h^2 E[theta v]
///   S5 = sum h   A(v)
/// giving alpha* = (S1 S5 - S3 S4) / (S2 S5 - S4^2) and
/// mu* = (alpha* S4 - S3) / S5.
///
/// When the velocity statistics vanish (S5 = 0, hence S3 = S4 = 0 as well),
/// the momentum term has no effect on the one-step loss; the convention is
/// mu* = 0 with alpha* = S1 / S2, the momentum-free minimizer.
inline ScheduleStep greedy_step(const MomentState& s, const QuadraticProblem& p) {
  if (s.dim() != p.dim()) throw std::invalid_argument("greedy_step: dimension mismatch");
  double s1 = 0.0, s2 = 0.0, s3 = 0.0, s4 = 0.0, s5 = 0.0;
  for (std::size_t i = 0; i < p.dim(); ++i) {
    const double h = p.h[i];
    const double a_theta = second_moment(s.e_theta[i], s.v_theta[i]);
    const double a_v = second_moment(s.e_v[i], s.v_v[i]);
    const double e_tv = s.e_theta[i] * s.e_v[i] + s.cov[i];
    s1 += h * h * a_theta;
    s2 += h * h * h * (a_theta + p.sigma2[i]);
    s3 += h * e_tv;
    s4 += h * h * e_tv;
    s5 += h * a_v;
  }
  if (s5 <= 0.0) {
    if (s2 <= 0.0)
      throw degenerate_state_error("greedy_step: state is at the optimum of a noiseless problem");
    return {s1 / s2, 0.0};
  }
  const double denom = s2 * s5 - s4 * s4;
  if (denom <= 0.0)
    throw degenerate_state_error("greedy_step: one-step objective has no unique minimizer");
  const double alpha = (s1 * s5 - s3 * s4) / denom;
  const double mu = (alpha * s4 - s3) / s5;
  return {alpha, mu};
}

/// Rolls out T steps, choosing each (alpha, mu) by greedy_step. The returned
/// rollout is built with the same step_stats updates, so replaying the
/// returned schedule through rollout() reproduces it exactly.
inline std::pair<Schedule, RolloutResult> greedy_schedule(const QuadraticProblem& p,
                                                          const MomentState& init,
                                                          std::size_t horizon) {
  if (horizon < 1) throw std::invalid_argument("greedy_schedule: horizon must be >= 1");
  std::vector<ScheduleStep> steps;
  steps.reserve(horizon);
  RolloutResult r;
  r.losses.reserve(horizon + 1);
  MomentState s = init;
  r.losses.push_back(expected_loss(p, s));
  for (std::size_t t = 0; t < horizon; ++t) {
    ScheduleStep step;
    try {
      step = greedy_step(s, p);
      s = step_stats(s, step.alpha, step.mu, p);
    } catch (const degenerate_state_error& e) {
      throw degenerate_state_error(std::string(e.what()) + " (step " + std::to_string(t) + ")");
    } catch (const instability_error& e) {
      throw instability_error(std::string(e.what()) + " (step " + std::to_string(t) + ")",
                              static_cast<long>(t));
    }
    steps.push_back(step);
    r.losses.push_back(expected_loss(p, s));
  }
  r.final_state = std::move(s);
  return {Schedule(std::move(steps)), std::move(r)};
}

/// Optimal learning rate for a single noisy dimension without momentum,
/// as a function of the iterate's second moment A: alpha = A / (h (A + sigma2)).
/// Always lies in [0, 1/h]; at A = sigma2 = 0 the problem is solved and the
/// best step is zero.
inline double univariate_optimal_alpha(double a_theta, double h, double sigma2) {
  if (!(a_theta >= 0.0)) throw std::invalid_argument("univariate_optimal_alpha: A must be >= 0");
  if (!(h > 0.0)) throw std::invalid_argument("univariate_optimal_alpha: h must be > 0");
  if (!(sigma2 >= 0.0))
    throw std::invalid_argument("univariate_optimal_alpha: sigma2 must be >= 0");
  if (a_theta + sigma2 == 0.0) return 0.0;
  return a_theta / (h * (a_theta + sigma2));
}

/// Minimal expected loss after k optimally chosen momentum-free steps on a
/// single noisy dimension. The optimally controlled second moment obeys
/// A+ = A sigma2 / (A + sigma2), whose k-fold composition is
/// A_k = A0 sigma2 / (k A0 + sigma2); the loss is 0.5 h (A_k + sigma2).
inline double univariate_lmin(double a0, double h, double sigma2, std::size_t k) {
  if (k < 1) throw std::invalid_argument("univariate_lmin: k must be >= 1");
  if (!(a0 >= 0.0)) throw std::invalid_argument("univariate_lmin: A0 must be >= 0");
  if (!(h > 0.0)) throw std::invalid_argument("univariate_lmin: h must be > 0");
  if (!(sigma2 >= 0.0)) throw std::invalid_argument("univariate_lmin: sigma2 must be >= 0");
  const double denom = static_cast<double>(k) * a0 + sigma2;
  const double a_k = denom == 0.0 ? 0.0 : a0 * sigma2 / denom;
  return 0.5 * h * (a_k + sigma2);
}

}  // namespace nqsched
