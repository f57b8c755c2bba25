#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "nqsched/dynamics.hpp"
#include "nqsched/errors.hpp"
#include "nqsched/quad_model.hpp"
#include "nqsched/schedule.hpp"
#include "nqsched/schedules.hpp"

namespace nqsched {

enum class Parameterization { PerStep, Fixed, InverseTimeDecay };

/// Settings for gradient-based schedule fitting. Schedules are optimized in
/// the smooth coordinates w_a = log(alpha) and w_m = log(1 - mu), with mu
/// clamped to [0, 0.999].
struct MetaConfig {
  std::size_t horizon = 250;
  double meta_lr = 0.003;
  std::size_t meta_steps = 500;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double meta_lr_decay = 1.0;  ///< per-update multiplier on meta_lr; 1 keeps it constant
  bool cap_enabled = true;
  Parameterization parameterization = Parameterization::PerStep;

  void validate() const {
    if (!(meta_lr > 0.0)) throw std::invalid_argument("MetaConfig: meta_lr must be > 0");
    if (meta_steps < 1) throw std::invalid_argument("MetaConfig: meta_steps must be >= 1");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0))
      throw std::invalid_argument("MetaConfig: beta1 must lie in [0, 1)");
    if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
      throw std::invalid_argument("MetaConfig: beta2 must lie in [0, 1)");
    if (!(adam_eps > 0.0)) throw std::invalid_argument("MetaConfig: eps must be > 0");
    if (!(meta_lr_decay > 0.0 && meta_lr_decay <= 1.0))
      throw std::invalid_argument("MetaConfig: meta_lr_decay must lie in (0, 1]");
  }
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long t = 0;

  AdamState() = default;
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

/// One bias-corrected Adam update; pure function of its inputs.
inline std::pair<AdamState, std::vector<double>> adam_step(AdamState adam,
                                                           std::vector<double> params,
                                                           std::span<const double> grad,
                                                           const MetaConfig& cfg) {
  if (adam.m.size() != params.size() || adam.v.size() != params.size() ||
      grad.size() != params.size())
    throw std::invalid_argument("adam_step: shape mismatch");
  adam.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(adam.t));
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(adam.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    adam.m[i] = cfg.adam_beta1 * adam.m[i] + (1.0 - cfg.adam_beta1) * grad[i];
    adam.v[i] = cfg.adam_beta2 * adam.v[i] + (1.0 - cfg.adam_beta2) * grad[i] * grad[i];
    const double m_hat = adam.m[i] / bc1;
    const double v_hat = adam.v[i] / bc2;
    params[i] -= cfg.meta_lr * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
  }
  return {std::move(adam), std::move(params)};
}

/// Expected loss at the end of the horizon: the meta-objective.
inline double meta_loss(const QuadraticProblem& p, const MomentState& init,
                        const Schedule& schedule) {
  return rollout(p, init, schedule).losses.back();
}

/// Meta-objective value plus its exact gradient in the reparameterized
/// schedule coordinates (d/d log alpha_t and d/d log(1 - mu_t)).
struct MetaGrad {
  double loss = 0.0;
  std::vector<double> d_log_alpha;
  std::vector<double> d_log1m_mu;
};

/// Exact gradient of meta_loss by a reverse sweep through the moment
/// recurrence. Runs the forward pass once, retains the T+1 states, and
/// propagates adjoints backwards; O(T d) time and memory.
inline MetaGrad meta_grad(const QuadraticProblem& p, const MomentState& init,
                          const Schedule& schedule) {
  const std::size_t d = p.dim();
  const std::size_t T = schedule.size();
  const std::vector<MomentState> states = rollout_states(p, init, schedule);

  MetaGrad out;
  out.loss = expected_loss(p, states.back());
  out.d_log_alpha.assign(T, 0.0);
  out.d_log1m_mu.assign(T, 0.0);

  // Adjoints of the five statistics at the current (backward) time.
  std::vector<double> a_et(d), a_ev(d, 0.0), a_vt(d), a_vv(d, 0.0), a_c(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    a_et[i] = p.h[i] * states.back().e_theta[i];
    a_vt[i] = 0.5 * p.h[i];
  }

  for (std::size_t tt = T; tt-- > 0;) {
    const MomentState& s = states[tt];
    const double alpha = schedule[tt].alpha;
    const double mu = schedule[tt].mu;
    double d_alpha = 0.0, d_mu = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double h = p.h[i];
      const double b = alpha * h;

      // vv1 feeds vt1 and c1 with unit weight besides being a state output.
      const double a_vv1 = a_vv[i] + a_vt[i] + a_c[i];

      double ab = 0.0, am = 0.0;
      // c1 = mu*C - b*Vt + vv1
      am += s.cov[i] * a_c[i];
      ab += -s.v_theta[i] * a_c[i];
      double a_c_in = mu * a_c[i];
      double a_vt_in = -b * a_c[i];
      // vt1 = (1 - 2b)*Vt + vv1 + 2*mu*C
      ab += -2.0 * s.v_theta[i] * a_vt[i];
      am += 2.0 * s.cov[i] * a_vt[i];
      a_vt_in += (1.0 - 2.0 * b) * a_vt[i];
      a_c_in += 2.0 * mu * a_vt[i];
      // vv1 = mu^2*Vv + b^2*Vt - 2*mu*b*C + b^2*sigma2
      am += (2.0 * mu * s.v_v[i] - 2.0 * b * s.cov[i]) * a_vv1;
      ab += (2.0 * b * s.v_theta[i] - 2.0 * mu * s.cov[i] + 2.0 * b * p.sigma2[i]) * a_vv1;
      const double a_vv_in = mu * mu * a_vv1;
      a_vt_in += b * b * a_vv1;
      a_c_in += -2.0 * mu * b * a_vv1;
      // et1 = Et + ev1 ; ev1 = mu*Ev - b*Et
      const double a_ev1 = a_ev[i] + a_et[i];
      am += s.e_v[i] * a_ev1;
      ab += -s.e_theta[i] * a_ev1;
      const double a_ev_in = mu * a_ev1;
      const double a_et_in = a_et[i] - b * a_ev1;

      d_alpha += h * ab;
      d_mu += am;
      a_et[i] = a_et_in;
      a_ev[i] = a_ev_in;
      a_vt[i] = a_vt_in;
      a_vv[i] = a_vv_in;
      a_c[i] = a_c_in;
    }
    out.d_log_alpha[tt] = alpha * d_alpha;
    out.d_log1m_mu[tt] = -(1.0 - mu) * d_mu;
  }
  return out;
}

/// Largest learning rate that keeps dimension i's one-step-ahead loss term
/// 0.5 h_i (A(theta_i+) + sigma2_i) at or below its value at the initial
/// state, given the current momentum. The one-step second moment
///   A(theta+) = (1 - alpha h)^2 A(theta) + mu^2 A(v)
///             + 2 mu (1 - alpha h) E[theta v] + (alpha h sigma)^2
/// is an upward parabola in alpha, so the bound is its larger crossing with
/// the initial level. A dimension already past its initial level caps at 0;
/// a converged noiseless dimension imposes no bound.
inline double alpha_cap(const QuadraticProblem& p, const MomentState& init,
                        const MomentState& state, double mu, std::size_t i) {
  if (i >= p.dim()) throw std::invalid_argument("alpha_cap: index out of range");
  if (init.dim() != p.dim() || state.dim() != p.dim())
    throw std::invalid_argument("alpha_cap: dimension mismatch");
  const double h = p.h[i];
  const double s2 = p.sigma2[i];
  const double a0 = second_moment(init.e_theta[i], init.v_theta[i]);
  const double a_theta = second_moment(state.e_theta[i], state.v_theta[i]);
  const double a_v = second_moment(state.e_v[i], state.v_v[i]);
  const double e_tv = state.e_theta[i] * state.e_v[i] + state.cov[i];

  const double qa = h * h * (a_theta + s2);
  const double qb = -2.0 * h * (a_theta + mu * e_tv);
  const double qc = a_theta + mu * mu * a_v + 2.0 * mu * e_tv;
  if (qa == 0.0) return qc <= a0 ? std::numeric_limits<double>::infinity() : 0.0;
  if (qc > a0) return 0.0;
  const double disc = qb * qb - 4.0 * qa * (qc - a0);
  return std::max(0.0, (-qb + std::sqrt(disc)) / (2.0 * qa));
}

/// Cap for a whole schedule step: the minimum over dimensions.
inline double step_alpha_cap(const QuadraticProblem& p, const MomentState& init,
                             const MomentState& state, double mu) {
  double cap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < p.dim(); ++i) cap = std::min(cap, alpha_cap(p, init, state, mu, i));
  return cap;
}

namespace detail {

inline constexpr double kLog1mMuMin = -6.907755278982137;  // log(1e-3): mu <= 0.999
inline constexpr double kLog1mMuMax = 0.0;                 // mu >= 0
inline constexpr double kMinLogAlpha = -700.0;             // exp underflows to ~0
inline constexpr double kInitMu = 0.9;

inline double clamp_log1m_mu(double w) { return std::clamp(w, kLog1mMuMin, kLog1mMuMax); }

inline Schedule build_schedule(std::span<const double> w_alpha, std::span<const double> w_mu) {
  std::vector<ScheduleStep> steps(w_alpha.size());
  for (std::size_t t = 0; t < w_alpha.size(); ++t)
    steps[t] = ScheduleStep{std::exp(w_alpha[t]), 1.0 - std::exp(w_mu[t])};
  return Schedule(std::move(steps));
}

/// Sequentially clamps each per-step rate to its cap along the capped
/// trajectory; idempotent because re-running reproduces the same states.
inline void project_per_step(const QuadraticProblem& p, const MomentState& init,
                             std::vector<double>& w_alpha, const std::vector<double>& w_mu) {
  MomentState s = init;
  for (std::size_t t = 0; t < w_alpha.size(); ++t) {
    const double mu = 1.0 - std::exp(w_mu[t]);
    const double cap = step_alpha_cap(p, init, s, mu);
    double alpha = std::exp(w_alpha[t]);
    if (alpha > cap) {
      alpha = cap;
      w_alpha[t] = cap > 0.0 ? std::log(cap) : kMinLogAlpha;
    }
    s = step_stats(s, alpha, mu, p);
  }
}

/// True when no per-dimension loss term along the rollout exceeds its
/// initial value (up to a sliver of the cap-soundness tolerance).
inline bool schedule_keeps_dims_bounded(const QuadraticProblem& p, const MomentState& init,
                                        const Schedule& schedule) {
  std::vector<double> a0(p.dim());
  for (std::size_t i = 0; i < p.dim(); ++i)
    a0[i] = second_moment(init.e_theta[i], init.v_theta[i]);
  MomentState s = init;
  try {
    for (std::size_t t = 0; t < schedule.size(); ++t) {
      s = step_stats(s, schedule[t].alpha, schedule[t].mu, p);
      for (std::size_t i = 0; i < p.dim(); ++i) {
        const double a = second_moment(s.e_theta[i], s.v_theta[i]);
        if (a > a0[i] + 1e-10 * (a0[i] + p.sigma2[i])) return false;
      }
    }
  } catch (const instability_error&) {
    return false;
  }
  return true;
}

/// Largest alpha0 scale in (0, 1] of `make(alpha0)` whose rollout keeps all
/// dimensions bounded; bisection anchored at the always-feasible zero rate.
template <typename MakeSchedule>
double project_scale(const QuadraticProblem& p, const MomentState& init, double alpha0,
                     MakeSchedule&& make) {
  if (schedule_keeps_dims_bounded(p, init, make(alpha0))) return alpha0;
  double lo = 0.0, hi = alpha0;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (schedule_keeps_dims_bounded(p, init, make(mid)))
      lo = mid;
    else
      hi = mid;
  }
  return lo;
}

inline double initial_alpha(const QuadraticProblem& p, const MomentState& init) {
  const double cap = step_alpha_cap(p, init, init, kInitMu);
  if (!std::isfinite(cap) || cap <= 0.0) return 1.0;
  return 0.5 * cap;
}

}  // namespace detail

struct OptimizeResult {
  Schedule schedule;
  std::vector<double> trace;  ///< meta-loss per meta step (length meta_steps + 1)
  double best_loss = 0.0;
};

/// Fits an independent (alpha, mu) per step by Adam on the exact
/// meta-objective. After every update each rate is projected to its cap
/// (when enabled); the best iterate seen is returned, not the last one.
inline OptimizeResult optimize_schedule(const QuadraticProblem& p, const MomentState& init,
                                        const MetaConfig& cfg) {
  cfg.validate();
  if (cfg.parameterization != Parameterization::PerStep)
    throw std::invalid_argument("optimize_schedule: parameterization must be PerStep");
  if (cfg.horizon < 1) throw std::invalid_argument("optimize_schedule: horizon must be >= 1");
  const std::size_t T = cfg.horizon;

  std::vector<double> w_alpha(T, std::log(detail::initial_alpha(p, init)));
  std::vector<double> w_mu(T, std::log(1.0 - detail::kInitMu));
  if (cfg.cap_enabled) detail::project_per_step(p, init, w_alpha, w_mu);

  OptimizeResult out;
  out.trace.reserve(cfg.meta_steps + 1);
  out.best_loss = std::numeric_limits<double>::infinity();

  AdamState adam(2 * T);
  MetaConfig step_cfg = cfg;
  for (std::size_t it = 0; it <= cfg.meta_steps; ++it) {
    Schedule sched = detail::build_schedule(w_alpha, w_mu);
    MetaGrad g = meta_grad(p, init, sched);
    out.trace.push_back(g.loss);
    if (g.loss < out.best_loss) {
      out.best_loss = g.loss;
      out.schedule = std::move(sched);
    }
    if (it == cfg.meta_steps) break;

    std::vector<double> params(2 * T);
    std::vector<double> grad(2 * T);
    std::copy(w_alpha.begin(), w_alpha.end(), params.begin());
    std::copy(w_mu.begin(), w_mu.end(), params.begin() + T);
    std::copy(g.d_log_alpha.begin(), g.d_log_alpha.end(), grad.begin());
    std::copy(g.d_log1m_mu.begin(), g.d_log1m_mu.end(), grad.begin() + T);
    auto [next_adam, next_params] = adam_step(std::move(adam), std::move(params), grad, step_cfg);
    adam = std::move(next_adam);
    std::copy(next_params.begin(), next_params.begin() + T, w_alpha.begin());
    for (std::size_t t = 0; t < T; ++t) w_mu[t] = detail::clamp_log1m_mu(next_params[T + t]);
    if (cfg.cap_enabled) detail::project_per_step(p, init, w_alpha, w_mu);
    step_cfg.meta_lr *= cfg.meta_lr_decay;
  }
  return out;
}

struct OptimizeFixedResult {
  double alpha = 0.0;
  double mu = 0.0;
  std::vector<double> trace;
  double best_loss = 0.0;
};

/// Fits one (alpha, mu) shared by every step. The cap projection shrinks the
/// shared rate until its own rollout keeps every dimension at or below its
/// initial loss term.
inline OptimizeFixedResult optimize_fixed(const QuadraticProblem& p, const MomentState& init,
                                          const MetaConfig& cfg) {
  cfg.validate();
  if (cfg.parameterization != Parameterization::Fixed)
    throw std::invalid_argument("optimize_fixed: parameterization must be Fixed");
  if (cfg.horizon < 1) throw std::invalid_argument("optimize_fixed: horizon must be >= 1");
  const std::size_t T = cfg.horizon;

  double w_alpha = std::log(detail::initial_alpha(p, init));
  double w_mu = std::log(1.0 - detail::kInitMu);
  auto project = [&]() {
    if (!cfg.cap_enabled) return;
    const double mu = 1.0 - std::exp(w_mu);
    const double alpha = detail::project_scale(
        p, init, std::exp(w_alpha), [&](double a) { return Schedule::constant(a, mu, T); });
    w_alpha = alpha > 0.0 ? std::log(alpha) : detail::kMinLogAlpha;
  };
  project();

  OptimizeFixedResult out;
  out.trace.reserve(cfg.meta_steps + 1);
  out.best_loss = std::numeric_limits<double>::infinity();

  AdamState adam(2);
  MetaConfig step_cfg = cfg;
  for (std::size_t it = 0; it <= cfg.meta_steps; ++it) {
    const double alpha = std::exp(w_alpha);
    const double mu = 1.0 - std::exp(w_mu);
    MetaGrad g = meta_grad(p, init, Schedule::constant(alpha, mu, T));
    out.trace.push_back(g.loss);
    if (g.loss < out.best_loss) {
      out.best_loss = g.loss;
      out.alpha = alpha;
      out.mu = mu;
    }
    if (it == cfg.meta_steps) break;

    double g_wa = 0.0, g_wm = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      g_wa += g.d_log_alpha[t];
      g_wm += g.d_log1m_mu[t];
    }
    auto [next_adam, next_params] =
        adam_step(std::move(adam), {w_alpha, w_mu}, std::vector<double>{g_wa, g_wm}, step_cfg);
    adam = std::move(next_adam);
    w_alpha = next_params[0];
    w_mu = detail::clamp_log1m_mu(next_params[1]);
    project();
    step_cfg.meta_lr *= cfg.meta_lr_decay;
  }
  return out;
}

struct OptimizeParametricResult {
  double alpha0 = 0.0;
  double beta = 0.0;
  std::vector<double> trace;
  double best_loss = 0.0;

  InverseTimeDecay fitted() const { return InverseTimeDecay(alpha0, beta); }
};

/// Fits the inverse-time-decay family by Adam on (log alpha0, log beta);
/// momentum and time constant stay at their fixed defaults.
inline OptimizeParametricResult optimize_parametric(const QuadraticProblem& p,
                                                    const MomentState& init, const MetaConfig& cfg,
                                                    double beta_init = 1.0) {
  cfg.validate();
  if (cfg.parameterization != Parameterization::InverseTimeDecay)
    throw std::invalid_argument("optimize_parametric: parameterization must be InverseTimeDecay");
  if (cfg.horizon < 1) throw std::invalid_argument("optimize_parametric: horizon must be >= 1");
  if (!(beta_init > 0.0)) throw std::invalid_argument("optimize_parametric: beta_init must be > 0");
  const std::size_t T = cfg.horizon;
  constexpr double kLogBetaMin = -20.0, kLogBetaMax = 5.0;

  double w_alpha0 = std::log(detail::initial_alpha(p, init));
  double w_beta = std::clamp(std::log(beta_init), kLogBetaMin, kLogBetaMax);
  auto make = [&](double a0, double beta) { return materialize(InverseTimeDecay(a0, beta), T); };
  auto project = [&]() {
    if (!cfg.cap_enabled) return;
    const double beta = std::exp(w_beta);
    const double a0 = detail::project_scale(p, init, std::exp(w_alpha0),
                                            [&](double a) { return make(a, beta); });
    w_alpha0 = a0 > 0.0 ? std::log(a0) : detail::kMinLogAlpha;
  };
  project();

  OptimizeParametricResult out;
  out.trace.reserve(cfg.meta_steps + 1);
  out.best_loss = std::numeric_limits<double>::infinity();

  AdamState adam(2);
  MetaConfig step_cfg = cfg;
  for (std::size_t it = 0; it <= cfg.meta_steps; ++it) {
    const double alpha0 = std::exp(w_alpha0);
    const double beta = std::exp(w_beta);
    MetaGrad g = meta_grad(p, init, make(alpha0, beta));
    out.trace.push_back(g.loss);
    if (g.loss < out.best_loss) {
      out.best_loss = g.loss;
      out.alpha0 = alpha0;
      out.beta = beta;
    }
    if (it == cfg.meta_steps) break;

    // alpha_t scales linearly with alpha0, so d/d log(alpha0) sums the
    // per-step log-rate gradients; beta enters through
    // d alpha_t / d beta = -alpha_t log(1 + t/K).
    double g_wa0 = 0.0, g_wb = 0.0;
    const double time_constant = InverseTimeDecay(alpha0, beta).time_constant;
    for (std::size_t t = 0; t < T; ++t) {
      g_wa0 += g.d_log_alpha[t];
      g_wb -= g.d_log_alpha[t] * beta *
              std::log1p(static_cast<double>(t) / time_constant);
    }
    auto [next_adam, next_params] =
        adam_step(std::move(adam), {w_alpha0, w_beta}, std::vector<double>{g_wa0, g_wb}, step_cfg);
    adam = std::move(next_adam);
    w_alpha0 = next_params[0];
    w_beta = std::clamp(next_params[1], kLogBetaMin, kLogBetaMax);
    project();
    step_cfg.meta_lr *= cfg.meta_lr_decay;
  }
  return out;
}

}  // namespace nqsched
