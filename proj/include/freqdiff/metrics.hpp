// Sample-set distances and signal-localization metrics.
//
// 1-D Wasserstein distances integrate the piecewise-constant empirical
// quantile functions exactly, so unequal sample counts are handled without
// resampling. Sliced distances average 1-D distances over seeded uniform
// directions on the unit sphere; slice i always draws its direction from
// substream i, so results do not depend on evaluation order.

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "freqdiff/core.hpp"
#include "freqdiff/spectral.hpp"
#include "freqdiff/stochastic.hpp"

namespace freqdiff {

/// Homogeneous collection of N x M series with a provenance label.
struct SampleSet {
  std::vector<Mat> samples;
  std::string label;

  Index n() const { return samples.empty() ? 0 : samples.front().rows(); }
  Index m() const { return samples.empty() ? 0 : samples.front().cols(); }
  Index flat_dim() const { return n() * m(); }

  void require_homogeneous(const char* what) const {
    if (samples.empty()) throw DataError(std::string(what) + ": empty sample set");
    for (const Mat& s : samples)
      if (s.rows() != n() || s.cols() != m())
        throw DataError(std::string(what) + ": inhomogeneous shapes in sample set");
  }
};

/// Chart coordinates of every sample: the frequency-domain representation
/// used when a metric is evaluated in the frequency domain.
inline SampleSet to_phi_domain(const SampleSet& set) {
  set.require_homogeneous("to_phi_domain");
  SampleSet out;
  out.label = set.label;
  out.samples.reserve(set.samples.size());
  for (const Mat& s : set.samples) out.samples.push_back(phi_of_series(TimeSeries(s)).values);
  return out;
}

/// Order-p Wasserstein distance between two 1-D empirical distributions.
/// Equal sizes reduce to the sorted-difference mean; unequal sizes integrate
/// the quantile functions over the merged breakpoint grid (exact, breakpoints
/// compared with integer cross products).
inline double wasserstein_1d(std::vector<double> a, std::vector<double> b, double p = 2.0) {
  if (a.empty() || b.empty()) throw DataError("wasserstein_1d: empty input");
  if (!(p >= 1.0)) throw std::invalid_argument("wasserstein_1d: p >= 1 required");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const std::size_t n = a.size(), m = b.size();
  double acc = 0.0;
  if (n == m) {
    for (std::size_t i = 0; i < n; ++i) acc += std::pow(std::abs(a[i] - b[i]), p);
    acc /= static_cast<double>(n);
  } else {
    std::size_t i = 0, j = 0;
    double u = 0.0;
    while (i < n && j < m) {
      // next breakpoint: min((i+1)/n, (j+1)/m), compared exactly
      const unsigned long long lhs = static_cast<unsigned long long>(i + 1) * m;
      const unsigned long long rhs = static_cast<unsigned long long>(j + 1) * n;
      const double next = (lhs <= rhs) ? static_cast<double>(i + 1) / static_cast<double>(n)
                                       : static_cast<double>(j + 1) / static_cast<double>(m);
      acc += (next - u) * std::pow(std::abs(a[i] - b[j]), p);
      u = next;
      if (lhs <= rhs) ++i;
      if (lhs >= rhs) ++j;
    }
  }
  return std::pow(acc, 1.0 / p);
}

struct SlicedWassersteinResult {
  double mean = 0.0;
  double two_standard_errors = 0.0;
  std::vector<double> per_slice;

  nlohmann::json to_json(const std::string& metric, const std::string& domain, int n_projections,
                         std::uint64_t seed) const {
    return {{"metric", metric},
            {"domain", domain},
            {"mean", mean},
            {"two_standard_errors", two_standard_errors},
            {"n_projections", n_projections},
            {"seed", seed}};
  }
};

/// Monte-Carlo sliced Wasserstein distance of order 2: flattened samples are
/// projected on seeded uniform unit vectors and the 1-D distances averaged.
inline SlicedWassersteinResult sliced_wasserstein(const SampleSet& a, const SampleSet& b,
                                                  int n_proj, std::uint64_t seed) {
  a.require_homogeneous("sliced_wasserstein");
  b.require_homogeneous("sliced_wasserstein");
  if (a.n() != b.n() || a.m() != b.m())
    throw DataError("sliced_wasserstein: shape mismatch between sample sets");
  if (n_proj < 1) throw std::invalid_argument("sliced_wasserstein: n_proj >= 1 violated");
  const Index d = a.flat_dim();

  // Flatten once; columns are samples.
  Mat fa(d, static_cast<Index>(a.samples.size()));
  for (std::size_t i = 0; i < a.samples.size(); ++i)
    fa.col(static_cast<Index>(i)) = Eigen::Map<const Vec>(a.samples[i].data(), d);
  Mat fb(d, static_cast<Index>(b.samples.size()));
  for (std::size_t i = 0; i < b.samples.size(); ++i)
    fb.col(static_cast<Index>(i)) = Eigen::Map<const Vec>(b.samples[i].data(), d);

  Rng base(seed);
  SlicedWassersteinResult res;
  res.per_slice.resize(static_cast<std::size_t>(n_proj));
  for (int i = 0; i < n_proj; ++i) {
    Rng rng = base.substream(static_cast<std::uint64_t>(i));
    Vec u(d);
    for (Index k = 0; k < d; ++k) u(k) = rng.normal();
    const double norm = u.norm();
    u /= (norm > 0 ? norm : 1.0);
    Eigen::RowVectorXd pa = u.transpose() * fa;
    Eigen::RowVectorXd pb = u.transpose() * fb;
    res.per_slice[static_cast<std::size_t>(i)] =
        wasserstein_1d(std::vector<double>(pa.data(), pa.data() + pa.size()),
                       std::vector<double>(pb.data(), pb.data() + pb.size()), 2.0);
  }
  double mean = 0.0;
  for (double v : res.per_slice) mean += v;
  mean /= n_proj;
  double var = 0.0;
  for (double v : res.per_slice) var += (v - mean) * (v - mean);
  var = n_proj > 1 ? var / (n_proj - 1) : 0.0;
  res.mean = mean;
  res.two_standard_errors = 2.0 * std::sqrt(var / n_proj);
  return res;
}

/// W_p along every standard basis direction of the flattened samples.
inline Vec marginal_wasserstein(const SampleSet& a, const SampleSet& b, double p = 2.0) {
  a.require_homogeneous("marginal_wasserstein");
  b.require_homogeneous("marginal_wasserstein");
  if (a.n() != b.n() || a.m() != b.m())
    throw DataError("marginal_wasserstein: shape mismatch between sample sets");
  const Index d = a.flat_dim();
  Vec out(d);
  std::vector<double> xa(a.samples.size()), xb(b.samples.size());
  for (Index k = 0; k < d; ++k) {
    for (std::size_t i = 0; i < a.samples.size(); ++i) xa[i] = a.samples[i].data()[k];
    for (std::size_t i = 0; i < b.samples.size(); ++i) xb[i] = b.samples[i].data()[k];
    out(k) = wasserstein_1d(xa, xb, p);
  }
  return out;
}

/// Energy density over time steps, or spectral energy density over
/// frequencies. Both versions sum to the total energy ||x||^2.
inline Vec density_profile(const TimeSeries& x, Domain domain) {
  if (domain == Domain::time) return x.values.rowwise().squaredNorm();
  const CMat spec = dft(x).values;
  return spec.rowwise().squaredNorm().real();
}

inline double cyclic_distance(Index a, Index b, Index n) {
  const Index d = std::abs(a - b);
  return static_cast<double>(std::min(d, n - d));
}

/// Delocalization: the smallest energy-weighted mean cyclic distance to any
/// reference index. Zero for a single spike, up to ~N/2 for spread energy.
inline double delocalization(const TimeSeries& x, Domain domain) {
  const Vec rho = density_profile(x, domain);
  const double total = rho.sum();
  if (!(total > 0)) throw DataError("delocalization: zero signal");
  const Index n = rho.size();
  double best = std::numeric_limits<double>::infinity();
  for (Index ref = 0; ref < n; ++ref) {
    double acc = 0.0;
    for (Index j = 0; j < n; ++j) acc += cyclic_distance(ref, j, n) * rho(j);
    best = std::min(best, acc / total);
  }
  return best;
}

struct BaselineResult {
  SlicedWassersteinResult mean_baseline;  // train vs copies of the average sample
  SlicedWassersteinResult self_baseline;  // two disjoint random halves of train
};

/// The two reference distances a generator is judged against. With an odd
/// training set one element is dropped before the half/half split.
inline BaselineResult baselines(const SampleSet& train, int n_proj, std::uint64_t seed) {
  train.require_homogeneous("baselines");
  if (train.samples.size() < 4) throw DataError("baselines: need at least 4 training samples");

  Mat mean = Mat::Zero(train.n(), train.m());
  for (const Mat& s : train.samples) mean += s;
  mean /= static_cast<double>(train.samples.size());
  SampleSet mean_set{std::vector<Mat>(train.samples.size(), mean), "mean"};

  std::vector<std::size_t> idx(train.samples.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed);
  for (std::size_t i = idx.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform01() * static_cast<double>(i));
    std::swap(idx[i - 1], idx[std::min(j, i - 1)]);
  }
  const std::size_t half = idx.size() / 2;
  SampleSet s1{{}, "self-1"}, s2{{}, "self-2"};
  for (std::size_t i = 0; i < half; ++i) s1.samples.push_back(train.samples[idx[i]]);
  for (std::size_t i = half; i < 2 * half; ++i) s2.samples.push_back(train.samples[idx[i]]);

  BaselineResult res;
  res.mean_baseline = sliced_wasserstein(train, mean_set, n_proj, detail::mix2(seed, 1));
  res.self_baseline = sliced_wasserstein(s1, s2, n_proj, detail::mix2(seed, 2));
  return res;
}

/// Sphere average of |<u, c>| for u uniform on the unit sphere in dimension d:
/// ||c|| * Gamma(d/2) / (Gamma((d+1)/2) sqrt(pi)). Oracle for the translation
/// property of the sliced distance.
inline double sphere_average_abs_projection(double norm_c, Index d) {
  return norm_c * std::exp(std::lgamma(0.5 * static_cast<double>(d)) -
                           std::lgamma(0.5 * static_cast<double>(d + 1))) /
         std::sqrt(M_PI);
}

}  // namespace freqdiff
