#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nqsched/errors.hpp"
#include "nqsched/quad_model.hpp"
#include "nqsched/schedule.hpp"

namespace nqsched {

/// Sufficient statistics of momentum-SGD iterates on the noisy quadratic.
/// Because the curvature and noise are both diagonal, each coordinate's
/// (theta, v) pair stays jointly Gaussian and evolves independently, so
/// the full distribution is captured by five per-dimension numbers.
struct MomentState {
  std::vector<double> e_theta;  ///< E[theta_i]
  std::vector<double> e_v;      ///< E[v_i]
  std::vector<double> v_theta;  ///< V[theta_i], >= 0
  std::vector<double> v_v;      ///< V[v_i], >= 0
  std::vector<double> cov;      ///< Cov(theta_i, v_i)

  std::size_t dim() const { return e_theta.size(); }
};

/// Second moment E[x]^2 + V[x] of a single coordinate.
inline double second_moment(double mean, double variance) { return mean * mean + variance; }

/// State at the start of a run: given first/second moments for theta and a
/// velocity at rest (zero mean, zero variance, zero covariance).
inline MomentState init_state(const QuadraticProblem& p, std::vector<double> e0,
                              std::vector<double> v0) {
  if (e0.size() != p.dim() || v0.size() != p.dim())
    throw std::invalid_argument("init_state: dimension mismatch");
  for (double v : v0)
    if (!(v >= 0.0)) throw std::invalid_argument("init_state: initial variances must be >= 0");
  MomentState s;
  s.e_theta = std::move(e0);
  s.v_theta = std::move(v0);
  s.e_v.assign(p.dim(), 0.0);
  s.v_v.assign(p.dim(), 0.0);
  s.cov.assign(p.dim(), 0.0);
  return s;
}

inline double expected_loss(const QuadraticProblem& p, const MomentState& s) {
  return expected_loss(p, std::span<const double>(s.e_theta), std::span<const double>(s.v_theta));
}

/// Expected loss above the irreducible noise floor.
inline double excess_loss(const QuadraticProblem& p, const MomentState& s) {
  if (s.dim() != p.dim()) throw std::invalid_argument("excess_loss: dimension mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.dim(); ++i)
    acc += p.h[i] * (s.e_theta[i] * s.e_theta[i] + s.v_theta[i]);
  return 0.5 * acc;
}

namespace detail {

// A computed variance may round slightly negative; anything worse than
// 1e-12 relative to the magnitudes that produced it means the recurrence is
// genuinely diverging and must surface as an error, not a silent clamp.
inline double check_variance(double value, double scale, const char* label) {
  if (value >= 0.0) return value;
  if (value >= -1e-12 * scale) return 0.0;
  throw instability_error(std::string(label) +
                          " went negative beyond rounding tolerance; "
                          "the learning rate is too large for this regime");
}

}  // namespace detail

/// One exact update of the per-dimension means, variances and covariance
/// under a momentum-SGD step with learning rate alpha and momentum mu.
///
/// Per dimension, with b = alpha*h:
///   E[v+]     = mu E[v] - b E[theta]
///   E[theta+] = E[theta] + E[v+]
///   V[v+]     = mu^2 V[v] + b^2 V[theta] - 2 mu b Cov + b^2 sigma2
///   V[theta+] = (1 - 2b) V[theta] + V[v+] + 2 mu Cov
///   Cov+      = mu Cov - b V[theta] + V[v+]
/// Velocity moments are updated first, then theta's, then the covariance
/// using the fresh V[v+].
inline MomentState step_stats(const MomentState& s, double alpha, double mu,
                              const QuadraticProblem& p) {
  if (s.dim() != p.dim()) throw std::invalid_argument("step_stats: dimension mismatch");
  if (!(alpha >= 0.0)) throw std::invalid_argument("step_stats: alpha must be >= 0");
  const std::size_t d = p.dim();
  MomentState out;
  out.e_theta.resize(d);
  out.e_v.resize(d);
  out.v_theta.resize(d);
  out.v_v.resize(d);
  out.cov.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    const double b = alpha * p.h[i];
    const double ev1 = mu * s.e_v[i] - b * s.e_theta[i];
    const double et1 = s.e_theta[i] + ev1;

    const double vv_terms = mu * mu * s.v_v[i] + b * b * s.v_theta[i] + b * b * p.sigma2[i];
    const double vv_cross = 2.0 * mu * b * s.cov[i];
    const double vv1 = detail::check_variance(vv_terms - vv_cross,
                                              vv_terms + std::abs(vv_cross), "velocity variance");

    const double vt_lin = (1.0 - 2.0 * b) * s.v_theta[i];
    const double vt_cross = 2.0 * mu * s.cov[i];
    const double vt1 = detail::check_variance(
        vt_lin + vv1 + vt_cross, std::abs(vt_lin) + vv1 + std::abs(vt_cross), "iterate variance");

    const double c1 = mu * s.cov[i] - b * s.v_theta[i] + vv1;

    out.e_v[i] = ev1;
    out.e_theta[i] = et1;
    out.v_v[i] = vv1;
    out.v_theta[i] = vt1;
    out.cov[i] = c1;
  }
  return out;
}

/// Named index set whose partial loss is tracked alongside a rollout.
using IndexGroup = std::pair<std::string, std::vector<std::size_t>>;

/// Partial expected loss over a subset of dimensions.
inline double partial_loss(const QuadraticProblem& p, const MomentState& s,
                           const std::vector<std::size_t>& idx) {
  double acc = 0.0;
  for (std::size_t i : idx) {
    if (i >= p.dim()) throw std::invalid_argument("partial_loss: index out of range");
    acc += p.h[i] * (s.e_theta[i] * s.e_theta[i] + s.v_theta[i] + p.sigma2[i]);
  }
  return 0.5 * acc;
}

struct RolloutResult {
  std::vector<double> losses;  ///< expected loss per step, index 0 = initial
  std::vector<std::pair<std::string, std::vector<double>>> group_losses;
  MomentState final_state;
};

/// Applies the moment recurrence over a whole schedule, recording the
/// expected loss before any step and after each one.
inline RolloutResult rollout(const QuadraticProblem& p, const MomentState& init,
                             const Schedule& schedule,
                             const std::vector<IndexGroup>& groups = {}) {
  RolloutResult r;
  r.losses.reserve(schedule.size() + 1);
  r.group_losses.reserve(groups.size());
  for (const auto& g : groups) r.group_losses.emplace_back(g.first, std::vector<double>{});

  MomentState s = init;
  auto record = [&](const MomentState& state) {
    r.losses.push_back(expected_loss(p, state));
    for (std::size_t gi = 0; gi < groups.size(); ++gi)
      r.group_losses[gi].second.push_back(partial_loss(p, state, groups[gi].second));
  };
  record(s);
  for (std::size_t t = 0; t < schedule.size(); ++t) {
    try {
      s = step_stats(s, schedule[t].alpha, schedule[t].mu, p);
    } catch (const instability_error& e) {
      throw instability_error(std::string(e.what()) + " (schedule step " + std::to_string(t) + ")",
                              static_cast<long>(t));
    }
    record(s);
  }
  r.final_state = std::move(s);
  return r;
}

/// Full per-step state trace; index 0 is the initial state.
inline std::vector<MomentState> rollout_states(const QuadraticProblem& p, const MomentState& init,
                                               const Schedule& schedule) {
  std::vector<MomentState> states;
  states.reserve(schedule.size() + 1);
  states.push_back(init);
  for (std::size_t t = 0; t < schedule.size(); ++t) {
    try {
      states.push_back(step_stats(states.back(), schedule[t].alpha, schedule[t].mu, p));
    } catch (const instability_error& e) {
      throw instability_error(std::string(e.what()) + " (schedule step " + std::to_string(t) + ")",
                              static_cast<long>(t));
    }
  }
  return states;
}

/// Indices of the k largest-curvature dimensions, ties broken by index.
inline std::vector<std::size_t> top_curvature_indices(const QuadraticProblem& p, std::size_t k) {
  std::vector<std::size_t> idx(p.dim());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return p.h[a] > p.h[b]; });
  idx.resize(k);
  return idx;
}

/// Indices of the k smallest-curvature dimensions, ties broken by index.
inline std::vector<std::size_t> bottom_curvature_indices(const QuadraticProblem& p, std::size_t k) {
  std::vector<std::size_t> idx(p.dim());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return p.h[a] < p.h[b]; });
  idx.resize(k);
  return idx;
}

/// Partial losses over the k highest- and k lowest-curvature dimensions.
inline std::pair<double, double> grouped_loss(const QuadraticProblem& p, const MomentState& s,
                                              std::size_t k) {
  if (k < 1 || k > p.dim()) throw std::invalid_argument("grouped_loss: k out of range");
  if (s.dim() != p.dim()) throw std::invalid_argument("grouped_loss: dimension mismatch");
  return {partial_loss(p, s, top_curvature_indices(p, k)),
          partial_loss(p, s, bottom_curvature_indices(p, k))};
}

/// Standard "top k" / "bottom k" groups used by rollout CSV output.
inline std::vector<IndexGroup> make_top_bottom_groups(const QuadraticProblem& p, std::size_t k) {
  if (k < 1 || k > p.dim()) throw std::invalid_argument("make_top_bottom_groups: k out of range");
  return {{"top" + std::to_string(k), top_curvature_indices(p, k)},
          {"bottom" + std::to_string(k), bottom_curvature_indices(p, k)}};
}

}  // namespace nqsched
