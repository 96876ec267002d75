// VP noise schedule, closed-form perturbation kernels in both domains,
// Euler-Maruyama reverse integrators and the pathwise time/frequency
// commutation check.
//
// The diffusion horizon is normalized to T = 1; "steps" counts integrator
// steps over [0, 1]. Reverse integration never evaluates the drift at t = 0:
// the last step is taken at t = T/steps (sigma(0) = 0 would make the score
// target singular).
//
// Score functions are batched: a ScoreFn maps a d x B matrix of flattened
// samples (column-major N x M per column) and a shared diffusion time t to a
// d x B matrix of score estimates. In the frequency domain the columns hold
// phi coordinates and the estimate is of the raw phi-score; the integrator
// applies the Lambda^2 factor of the reverse SDE itself.

#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "freqdiff/core.hpp"
#include "freqdiff/spectral.hpp"
#include "freqdiff/stochastic.hpp"

namespace freqdiff {

/// Linear-beta VP schedule: beta(t) = beta_min + t (beta_max - beta_min),
/// B(t) = int_0^t beta, alpha(t) = exp(-B/2), sigma(t) = sqrt(1 - exp(-B)).
struct VpSchedule {
  double beta_min = 0.1;
  double beta_max = 20.0;
  static constexpr double T = 1.0;

  double beta(double t) const { return beta_min + t * (beta_max - beta_min); }
  double beta_integral(double t) const {
    return beta_min * t + 0.5 * (beta_max - beta_min) * t * t;
  }
  double mean_coeff(double t) const { return std::exp(-0.5 * beta_integral(t)); }
  double noise_scale(double t) const { return std::sqrt(1.0 - std::exp(-beta_integral(t))); }
};

struct ScheduleValues {
  double beta, beta_integral, mean_coeff, noise_scale;
};

inline ScheduleValues schedule_eval(const VpSchedule& sched, double t) {
  if (!(t >= 0.0 && t <= VpSchedule::T))
    throw std::invalid_argument("schedule_eval: t outside [0, T]");
  return {sched.beta(t), sched.beta_integral(t), sched.mean_coeff(t), sched.noise_scale(t)};
}

/// x_t = alpha(t) x0 + sigma(t) eps with eps ~ N(0, I). Returns the sample
/// together with the exact noise draw (the loss target needs -eps/sigma).
inline std::pair<TimeSeries, Mat> perturb_time(const TimeSeries& x0, double t,
                                               const VpSchedule& sched, Rng& rng) {
  if (!(t > 0.0 && t <= VpSchedule::T))
    throw std::invalid_argument("perturb_time: t must lie in (0, T]");
  const double a = sched.mean_coeff(t), s = sched.noise_scale(t);
  Mat eps = rng.normal_matrix(x0.n(), x0.m());
  return {TimeSeries(a * x0.values + s * eps), std::move(eps)};
}

/// phi_t = alpha(t) phi0 + sigma(t) Lambda eps, eps ~ N(0, I) drawn in phi
/// coordinates (row k of eps is scaled by Lambda_k).
inline std::pair<PhiVector, Mat> perturb_freq(const PhiVector& phi0, double t,
                                              const VpSchedule& sched, const LambdaScaling& lam,
                                              Rng& rng) {
  if (!(t > 0.0 && t <= VpSchedule::T))
    throw std::invalid_argument("perturb_freq: t must lie in (0, T]");
  if (lam.n() != phi0.n()) throw DataError("perturb_freq: Lambda length mismatch");
  const double a = sched.mean_coeff(t), s = sched.noise_scale(t);
  Mat eps = rng.normal_matrix(phi0.n(), phi0.m());
  Mat pt = a * phi0.values + s * (lam.diag.asDiagonal() * eps);
  return {PhiVector(std::move(pt)), std::move(eps)};
}

/// Batched score estimate: (d x B flattened inputs, t) -> d x B.
using ScoreFn = std::function<Mat(const Mat&, double)>;

namespace detail {

// Per-path noise columns drawn in path order, so results do not depend on
// how the batched algebra is scheduled.
inline void fill_normal_columns(Mat& out, std::vector<Rng>& streams) {
  for (Index p = 0; p < out.cols(); ++p) {
    for (Index i = 0; i < out.rows(); ++i) out(i, p) = streams[static_cast<std::size_t>(p)].normal();
  }
}

inline std::vector<TimeSeries> columns_to_series(const Mat& flat, Index n, Index m) {
  std::vector<TimeSeries> out;
  out.reserve(static_cast<std::size_t>(flat.cols()));
  for (Index p = 0; p < flat.cols(); ++p) {
    Mat v = Eigen::Map<const Mat>(flat.col(p).data(), n, m);
    out.emplace_back(std::move(v));
  }
  return out;
}

}  // namespace detail

/// Euler-Maruyama on dx = [-(1/2) beta x - beta s(x, t)] dt + sqrt(beta) dw,
/// dt = -T/steps, from x(T) ~ N(0, I) down to t = 0. One rng substream per
/// path; the last drift evaluation happens at t = T/steps.
inline std::vector<TimeSeries> reverse_sample_time(const ScoreFn& score, int n_samples, int steps,
                                                   Index n, Index m, const VpSchedule& sched,
                                                   const Rng& rng) {
  if (steps < 1) throw std::invalid_argument("reverse_sample_time: steps >= 1 violated");
  if (n_samples < 0) throw std::invalid_argument("reverse_sample_time: negative sample count");
  if (n_samples == 0) return {};
  const Index d = n * m;
  std::vector<Rng> streams;
  streams.reserve(static_cast<std::size_t>(n_samples));
  for (int p = 0; p < n_samples; ++p)
    streams.push_back(rng.substream(static_cast<std::uint64_t>(p)));

  Mat x(d, n_samples);
  detail::fill_normal_columns(x, streams);
  const double h = VpSchedule::T / steps;
  Mat z(d, n_samples);
  for (int k = steps; k >= 1; --k) {
    const double t = k * h;
    const double beta = sched.beta(t);
    Mat s = score(x, t);
    if (!s.allFinite())
      throw NumericsError("reverse_sample_time: non-finite score at step index " +
                          std::to_string(k) + " (t = " + std::to_string(t) + ")");
    detail::fill_normal_columns(z, streams);
    x += h * (0.5 * beta * x + beta * s) + std::sqrt(beta * h) * z;
  }
  return detail::columns_to_series(x, n, m);
}

/// Frequency-domain sampler, fully in phi coordinates:
///   d phi = [-(1/2) beta phi - beta Lambda^2 s(phi, t)] dt + sqrt(beta) Lambda dw.
/// Initial draws follow the terminal law N(0, Lambda^2). Each final state is
/// pulled back through phi_inv and the inverse DFT; mirror symmetry is exact
/// by construction, so the reconstruction residue must stay below 1e-8.
inline std::vector<TimeSeries> reverse_sample_freq(const ScoreFn& score, int n_samples, int steps,
                                                   Index n, Index m, const VpSchedule& sched,
                                                   const Rng& rng,
                                                   std::vector<PhiVector>* phi_end_states = nullptr) {
  if (steps < 1) throw std::invalid_argument("reverse_sample_freq: steps >= 1 violated");
  if (n_samples < 0) throw std::invalid_argument("reverse_sample_freq: negative sample count");
  if (n_samples == 0) return {};
  const Index d = n * m;
  const LambdaScaling lam = lambda_scaling(n);
  Vec lam_flat(d), lam_sq_flat(d);
  for (Index i = 0; i < d; ++i) {
    lam_flat(i) = lam.diag(i % n);
    lam_sq_flat(i) = lam_flat(i) * lam_flat(i);
  }

  std::vector<Rng> streams;
  streams.reserve(static_cast<std::size_t>(n_samples));
  for (int p = 0; p < n_samples; ++p)
    streams.push_back(rng.substream(static_cast<std::uint64_t>(p)));

  Mat x(d, n_samples);
  detail::fill_normal_columns(x, streams);
  x.array().colwise() *= lam_flat.array();
  const double h = VpSchedule::T / steps;
  Mat z(d, n_samples);
  for (int k = steps; k >= 1; --k) {
    const double t = k * h;
    const double beta = sched.beta(t);
    Mat s = score(x, t);
    if (!s.allFinite())
      throw NumericsError("reverse_sample_freq: non-finite score at step index " +
                          std::to_string(k) + " (t = " + std::to_string(t) + ")");
    detail::fill_normal_columns(z, streams);
    x += h * (0.5 * beta * x + beta * (lam_sq_flat.asDiagonal() * s)) +
         std::sqrt(beta * h) * (lam_flat.asDiagonal() * z);
  }

  std::vector<TimeSeries> out;
  out.reserve(static_cast<std::size_t>(n_samples));
  if (phi_end_states) phi_end_states->clear();
  for (Index p = 0; p < n_samples; ++p) {
    Mat phis = Eigen::Map<const Mat>(x.col(p).data(), n, m);
    PhiVector pv(std::move(phis));
    out.push_back(series_of_phi(pv));  // throws NumericsError on residue > 1e-8
    if (phi_end_states) phi_end_states->push_back(std::move(pv));
  }
  return out;
}

/// Drives the time-domain forward recursion and the phi-coordinate forward
/// recursion with the same Brownian path (mapped through Q for the latter)
/// and returns the max-abs deviation between dft(time path) and
/// phi_inv(freq path) over every step. The two recursions are images of each
/// other under an exact linear map, so the deviation is pure roundoff.
inline double forward_commutation_check(const TimeSeries& x0, int steps, std::uint64_t seed,
                                        const VpSchedule& sched = {}) {
  if (steps < 100) throw std::invalid_argument("forward_commutation_check: steps >= 100 violated");
  const Index n = x0.n(), m = x0.m();
  Rng rng(seed);
  const double h = VpSchedule::T / steps;
  Mat xt = x0.values;
  Mat ph = phi_of_series(x0).values;
  double worst = 0.0;
  for (int k = 0; k < steps; ++k) {
    const double t = k * h;
    const double beta = sched.beta(t);
    const Mat dw = gauss_increment(n, m, h, rng);
    const Mat dw_phi = phi_of_series(TimeSeries(dw)).values;  // Q dw
    xt += -0.5 * beta * xt * h + std::sqrt(beta) * dw;
    ph += -0.5 * beta * ph * h + std::sqrt(beta) * dw_phi;
    const CMat from_time = dft(TimeSeries(xt)).values;
    const CMat from_freq = phi_inv(PhiVector(ph)).values;
    worst = std::max(worst, (from_time - from_freq).cwiseAbs().maxCoeff());
  }
  return worst;
}

}  // namespace freqdiff
