#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "nqsched/rng.hpp"

namespace nqsched {

/// Noisy quadratic objective. Each gradient query observes
///   0.5 * sum_i h_i (theta_i - c_i)^2
/// where the minimum c is resampled per query with c_i ~ N(0, sigma2_i).
/// The true minimum sits at the origin; the expected loss of an iterate is
/// 0.5 * sum_i h_i (theta_i^2 + sigma2_i).
struct QuadraticProblem {
  std::vector<double> h;       ///< per-dimension curvatures, all > 0
  std::vector<double> sigma2;  ///< per-dimension noise variances, all >= 0

  QuadraticProblem(std::vector<double> curvatures, std::vector<double> noise_variances)
      : h(std::move(curvatures)), sigma2(std::move(noise_variances)) {
    if (h.empty()) throw std::invalid_argument("QuadraticProblem: empty curvature vector");
    if (h.size() != sigma2.size())
      throw std::invalid_argument("QuadraticProblem: h and sigma2 lengths differ");
    for (double hi : h)
      if (!(hi > 0.0)) throw std::invalid_argument("QuadraticProblem: curvatures must be > 0");
    for (double s : sigma2)
      if (!(s >= 0.0)) throw std::invalid_argument("QuadraticProblem: sigma2 must be >= 0");
  }

  std::size_t dim() const { return h.size(); }

  bool deterministic() const {
    for (double s : sigma2)
      if (s != 0.0) return false;
    return true;
  }
};

enum class SpectrumKind { LogUniform, Uniform, Custom };

/// Recipe for a curvature spectrum. Generated kinds span [1/kappa, 1],
/// sorted descending; Custom takes explicit values.
struct SpectrumSpec {
  SpectrumKind kind = SpectrumKind::LogUniform;
  std::size_t dim = 0;
  double kappa = 1e4;          ///< condition ratio h_max / h_min (> 1)
  std::vector<double> values;  ///< Custom only
};

inline std::vector<double> make_spectrum(const SpectrumSpec& spec) {
  if (spec.kind == SpectrumKind::Custom) {
    if (spec.values.empty())
      throw std::invalid_argument("make_spectrum: Custom spectrum needs values");
    for (double v : spec.values)
      if (!(v > 0.0))
        throw std::invalid_argument("make_spectrum: custom curvatures must be > 0");
    std::vector<double> out = spec.values;
    std::sort(out.begin(), out.end(), std::greater<>());
    return out;
  }
  if (spec.dim == 0) throw std::invalid_argument("make_spectrum: dim must be >= 1");
  if (!(spec.kappa > 1.0)) throw std::invalid_argument("make_spectrum: kappa must be > 1");
  std::vector<double> out(spec.dim);
  if (spec.dim == 1) {
    out[0] = 1.0;
    return out;
  }
  for (std::size_t i = 0; i < spec.dim; ++i) {
    const double frac = static_cast<double>(i) / static_cast<double>(spec.dim - 1);
    out[i] = spec.kind == SpectrumKind::LogUniform
                 ? std::pow(spec.kappa, -frac)
                 : 1.0 - frac * (1.0 - 1.0 / spec.kappa);
  }
  return out;
}

/// Noise rule sigma2_i = 1/h_i, which makes every dimension contribute the
/// same irreducible loss.
inline std::vector<double> default_sigma2(const std::vector<double>& h) {
  std::vector<double> out(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (!(h[i] > 0.0)) throw std::invalid_argument("default_sigma2: curvatures must be > 0");
    out[i] = 1.0 / h[i];
  }
  return out;
}

/// Irreducible expected loss at the optimum: 0.5 * sum_i h_i sigma2_i.
inline double noise_floor(const QuadraticProblem& p) {
  double acc = 0.0;
  for (std::size_t i = 0; i < p.dim(); ++i) acc += p.h[i] * p.sigma2[i];
  return 0.5 * acc;
}

/// Expected loss of an iterate distribution with per-dimension mean e_theta
/// and variance v_theta: 0.5 * sum_i h_i (E^2 + V + sigma2).
inline double expected_loss(const QuadraticProblem& p, std::span<const double> e_theta,
                            std::span<const double> v_theta) {
  if (e_theta.size() != p.dim() || v_theta.size() != p.dim())
    throw std::invalid_argument("expected_loss: dimension mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.dim(); ++i)
    acc += p.h[i] * (e_theta[i] * e_theta[i] + v_theta[i] + p.sigma2[i]);
  return 0.5 * acc;
}

/// Expected loss of a point iterate (zero-variance distribution).
inline double expected_point_loss(const QuadraticProblem& p, std::span<const double> theta) {
  if (theta.size() != p.dim()) throw std::invalid_argument("expected_point_loss: dimension mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.dim(); ++i)
    acc += p.h[i] * (theta[i] * theta[i] + p.sigma2[i]);
  return 0.5 * acc;
}

/// Single-observation loss given a drawn minimum c.
inline double sampled_loss(const QuadraticProblem& p, std::span<const double> theta,
                           std::span<const double> c) {
  if (theta.size() != p.dim() || c.size() != p.dim())
    throw std::invalid_argument("sampled_loss: dimension mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.dim(); ++i) {
    const double d = theta[i] - c[i];
    acc += p.h[i] * d * d;
  }
  return 0.5 * acc;
}

/// Draws one stochastic minimum c, c_i ~ N(0, sigma2_i).
inline std::vector<double> sample_minimum(const QuadraticProblem& p, RngStream& rng) {
  std::vector<double> c(p.dim());
  for (std::size_t i = 0; i < p.dim(); ++i) c[i] = rng.normal(std::sqrt(p.sigma2[i]));
  return c;
}

/// Gradient of the observation with minimum c: h .* (theta - c).
inline std::vector<double> gradient_at(const QuadraticProblem& p, std::span<const double> theta,
                                       std::span<const double> c) {
  if (theta.size() != p.dim() || c.size() != p.dim())
    throw std::invalid_argument("gradient_at: dimension mismatch");
  std::vector<double> g(p.dim());
  for (std::size_t i = 0; i < p.dim(); ++i) g[i] = p.h[i] * (theta[i] - c[i]);
  return g;
}

/// Stochastic gradient with a fresh minimum draw; expectation is h .* theta.
inline std::vector<double> sample_gradient(const QuadraticProblem& p,
                                           std::span<const double> theta, RngStream& rng) {
  if (theta.size() != p.dim()) throw std::invalid_argument("sample_gradient: dimension mismatch");
  return gradient_at(p, theta, sample_minimum(p, rng));
}

}  // namespace nqsched
