// Seeded random streams, Gaussian and mirrored Brownian increments, and a
// statistical self-check of the mirrored construction.
//
// A mirrored increment is the spectrum of a real Gaussian increment: row 0 is
// real with variance dt (so is the Nyquist row for even N), interior rows are
// (e1 + i e2)/sqrt(2) with independent N(0, dt) parts, and the upper half
// mirrors the lower by conjugation. It is built by drawing in phi
// coordinates, scaling by Lambda and applying phi_inv, which makes the block
// covariance structure hold by construction.

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "freqdiff/core.hpp"
#include "freqdiff/spectral.hpp"

namespace freqdiff {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t mix2(std::uint64_t a, std::uint64_t b) {
  std::uint64_t s = a;
  std::uint64_t h = splitmix64(s);
  s = h ^ (b + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2));
  return splitmix64(s);
}

}  // namespace detail

/// Deterministic random stream: identical (seed, stream) gives an identical
/// sample sequence; distinct streams are statistically independent.
/// xoshiro256++ state seeded through splitmix64, normals via Box-Muller.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream) {
    std::uint64_t x = detail::mix2(seed, stream);
    for (auto& s : state_) s = detail::splitmix64(x);
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  /// Independent stream derived from this one's identity.
  Rng substream(std::uint64_t id) const { return Rng(seed_, detail::mix2(stream_, id)); }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform double in [0, 1).
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal (Box-Muller; the spare half of each pair is cached).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  /// N x M matrix of i.i.d. N(0, sd^2) entries, filled column-major.
  Mat normal_matrix(Index n, Index m, double sd = 1.0) {
    Mat out(n, m);
    for (Index v = 0; v < m; ++v)
      for (Index t = 0; t < n; ++t) out(t, v) = sd * normal();
    return out;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::uint64_t state_[4] = {};
  std::uint64_t seed_ = 0, stream_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// The dw term of the forward SDE: i.i.d. entries ~ N(0, dt).
inline Mat gauss_increment(Index n, Index m, double dt, Rng& rng) {
  if (!(dt > 0)) throw std::invalid_argument("gauss_increment: dt > 0 violated");
  return rng.normal_matrix(n, m, std::sqrt(dt));
}

struct MirroredIncrement {
  CMat values;
  double dt = 0.0;
};

/// Mirrored Brownian increment over dt. Each block k = 0 .. floor(N/2) draws
/// from its own substream, so blocks stay independent under any block-level
/// parallel use.
inline MirroredIncrement mirrored_increment(Index n, Index m, double dt, Rng& rng) {
  if (!(dt > 0)) throw std::invalid_argument("mirrored_increment: dt > 0 violated");
  if (n < 1 || m < 1) throw DataError("mirrored_increment: N >= 1 and M >= 1 violated");
  const Index h = n / 2;
  const double sd = std::sqrt(dt);
  Mat z(n, m);
  {
    Rng b0 = rng.substream(0);
    z.row(0) = b0.normal_matrix(1, m, sd);
  }
  const Index top_interior = (n % 2 == 0) ? h - 1 : h;
  for (Index k = 1; k <= top_interior; ++k) {
    Rng bk = rng.substream(static_cast<std::uint64_t>(k));
    z.row(k) = bk.normal_matrix(1, m, sd);      // real part coordinate
    z.row(h + k) = bk.normal_matrix(1, m, sd);  // imaginary part coordinate
  }
  if (n % 2 == 0 && h >= 1) {
    Rng bh = rng.substream(static_cast<std::uint64_t>(h));
    z.row(h) = bh.normal_matrix(1, m, sd);
  }
  const LambdaScaling lam = lambda_scaling(n);
  Mat scaled = lam.diag.asDiagonal() * z;
  return MirroredIncrement{phi_inv(PhiVector(std::move(scaled))).values, dt};
}

// ---------------------------------------------------------------------------
// Statistical self-check of the mirrored construction.

struct MirroredStatsReport {
  Index n = 0, m = 0;
  int n_paths = 0;
  std::uint64_t seed = 0;
  std::vector<double> t_grid;

  // One entry per (grid time, channel, feature); ratio = empirical/theory.
  struct VarianceEntry {
    double t;
    Index kappa;
    char part;  // 'R' or 'I'
    Index feature;
    double theory, empirical, ratio;
  };
  std::vector<VarianceEntry> variances;
  double max_variance_ratio_deviation = 0.0;  // max |ratio - 1|

  double max_abs_corr_within_block = 0.0;  // Re v_k vs Im v_k, same k
  double max_abs_corr_cross_block = 0.0;   // any pair from distinct blocks
  double max_abs_corr_disjoint_increments = 0.0;
  double mirror_max_deviation = 0.0;

  double variance_tolerance = 0.03;
  double correlation_tolerance = 0.02;

  bool variances_ok = false;
  bool correlations_ok = false;
  bool mirror_ok = false;
  bool passed = false;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["suite"] = "mirrored-bm";
    j["N"] = n;
    j["M"] = m;
    j["n_paths"] = n_paths;
    j["seed"] = seed;
    j["t_grid"] = t_grid;
    j["max_variance_ratio_deviation"] = max_variance_ratio_deviation;
    j["max_abs_corr_within_block"] = max_abs_corr_within_block;
    j["max_abs_corr_cross_block"] = max_abs_corr_cross_block;
    j["max_abs_corr_disjoint_increments"] = max_abs_corr_disjoint_increments;
    j["mirror_max_deviation"] = mirror_max_deviation;
    j["variance_tolerance"] = variance_tolerance;
    j["correlation_tolerance"] = correlation_tolerance;
    j["variances_ok"] = variances_ok;
    j["correlations_ok"] = correlations_ok;
    j["mirror_ok"] = mirror_ok;
    j["passed"] = passed;
    nlohmann::json vars = nlohmann::json::array();
    for (const auto& e : variances) {
      vars.push_back({{"t", e.t},
                      {"kappa", e.kappa},
                      {"part", std::string(1, e.part)},
                      {"feature", e.feature},
                      {"theory", e.theory},
                      {"empirical", e.empirical},
                      {"ratio", e.ratio}});
    }
    j["variances"] = vars;
    return j;
  }
};

namespace detail {

struct Channel {
  Index kappa;
  char part;          // 'R' or 'I'
  Index block;        // block index = kappa
  double var_per_t;   // 1 for real blocks, 1/2 for interior parts
};

inline std::vector<Channel> mirrored_channels(Index n) {
  std::vector<Channel> ch;
  const Index h = n / 2;
  ch.push_back({0, 'R', 0, 1.0});
  const Index top_interior = (n % 2 == 0) ? h - 1 : h;
  for (Index k = 1; k <= top_interior; ++k) {
    ch.push_back({k, 'R', k, 0.5});
    ch.push_back({k, 'I', k, 0.5});
  }
  if (n % 2 == 0 && h >= 1) ch.push_back({h, 'R', h, 1.0});
  return ch;
}

}  // namespace detail

/// Simulates n_paths mirrored Brownian paths over the cumulative grid and
/// reports variances against theory (t per real block, t/2 per interior
/// part), cross-correlations, disjoint-increment correlations and the mirror
/// deviation. Pass flags use 3% on variance ratios and 0.02 on correlations.
inline MirroredStatsReport mirrored_stats_check(Index n, Index m, int n_paths,
                                                std::vector<double> t_grid, std::uint64_t seed) {
  if (n_paths < 10000)
    throw std::invalid_argument("mirrored_stats_check: n_paths >= 10^4 violated");
  if (t_grid.empty()) throw std::invalid_argument("mirrored_stats_check: empty t_grid");
  for (std::size_t i = 0; i + 1 < t_grid.size(); ++i)
    if (!(t_grid[i] < t_grid[i + 1]))
      throw std::invalid_argument("mirrored_stats_check: t_grid must be strictly increasing");
  if (!(t_grid.front() > 0)) throw std::invalid_argument("mirrored_stats_check: t_grid must be positive");

  const auto channels = detail::mirrored_channels(n);
  const std::size_t c = channels.size(), g = t_grid.size();

  // Accumulators: per (grid, channel, feature) sums and squares; full channel
  // cross-moments at the final grid time; first/second half increments.
  std::vector<double> sum(g * c * m, 0.0), sumsq(g * c * m, 0.0);
  const std::size_t pair_dim = c * m;
  Mat cross = Mat::Zero(static_cast<Index>(pair_dim), static_cast<Index>(pair_dim));
  std::vector<double> h1_sum(c * m, 0.0), h1_sq(c * m, 0.0);
  std::vector<double> h2_sum(c * m, 0.0), h2_sq(c * m, 0.0), h12(c * m, 0.0);
  double mirror_dev = 0.0;

  const std::size_t mid = g / 2;  // split point for the disjoint-increment check
  Rng base(seed);
  Vec finals(static_cast<Index>(pair_dim));
  for (int p = 0; p < n_paths; ++p) {
    Rng path_rng = base.substream(static_cast<std::uint64_t>(p));
    CMat cum = CMat::Zero(n, m);
    CMat at_mid = CMat::Zero(n, m);
    double prev_t = 0.0;
    for (std::size_t gi = 0; gi < g; ++gi) {
      Rng step_rng = path_rng.substream(static_cast<std::uint64_t>(gi));
      MirroredIncrement inc = mirrored_increment(n, m, t_grid[gi] - prev_t, step_rng);
      cum += inc.values;
      prev_t = t_grid[gi];
      if (gi + 1 == mid) at_mid = cum;
      for (std::size_t ci = 0; ci < c; ++ci) {
        const auto& ch = channels[ci];
        for (Index f = 0; f < m; ++f) {
          const double val = (ch.part == 'R') ? cum(ch.kappa, f).real() : cum(ch.kappa, f).imag();
          const std::size_t idx = (gi * c + ci) * m + f;
          sum[idx] += val;
          sumsq[idx] += val * val;
        }
      }
    }
    {
      SpectralSeries s{cum};
      mirror_dev = std::max(mirror_dev, mirror_symmetry_deviation(s));
    }
    for (std::size_t ci = 0; ci < c; ++ci) {
      const auto& ch = channels[ci];
      for (Index f = 0; f < m; ++f) {
        const double val = (ch.part == 'R') ? cum(ch.kappa, f).real() : cum(ch.kappa, f).imag();
        finals(static_cast<Index>(ci * m + f)) = val;
        const double v1 =
            (ch.part == 'R') ? at_mid(ch.kappa, f).real() : at_mid(ch.kappa, f).imag();
        const double v2 = val - v1;
        const std::size_t idx = ci * m + f;
        h1_sum[idx] += v1;
        h1_sq[idx] += v1 * v1;
        h2_sum[idx] += v2;
        h2_sq[idx] += v2 * v2;
        h12[idx] += v1 * v2;
      }
    }
    cross.noalias() += finals * finals.transpose();
  }

  MirroredStatsReport rep;
  rep.n = n;
  rep.m = m;
  rep.n_paths = n_paths;
  rep.seed = seed;
  rep.t_grid = t_grid;

  const double np = static_cast<double>(n_paths);
  for (std::size_t gi = 0; gi < g; ++gi) {
    for (std::size_t ci = 0; ci < c; ++ci) {
      const auto& ch = channels[ci];
      for (Index f = 0; f < m; ++f) {
        const std::size_t idx = (gi * c + ci) * m + f;
        const double mean = sum[idx] / np;
        const double var = sumsq[idx] / np - mean * mean;
        const double theory = ch.var_per_t * t_grid[gi];
        const double ratio = var / theory;
        rep.variances.push_back({t_grid[gi], ch.kappa, ch.part, f, theory, var, ratio});
        rep.max_variance_ratio_deviation =
            std::max(rep.max_variance_ratio_deviation, std::abs(ratio - 1.0));
      }
    }
  }

  // Pearson correlations across channel/feature pairs at the final grid time.
  {
    const std::size_t gi = g - 1;
    std::vector<double> means(pair_dim), sds(pair_dim);
    for (std::size_t ci = 0; ci < c; ++ci)
      for (Index f = 0; f < m; ++f) {
        const std::size_t idx = ci * m + f;
        means[idx] = sum[(gi * c + ci) * m + f] / np;
        const double var = sumsq[(gi * c + ci) * m + f] / np - means[idx] * means[idx];
        sds[idx] = std::sqrt(std::max(var, 0.0));
      }
    for (std::size_t a = 0; a < pair_dim; ++a) {
      for (std::size_t b = a + 1; b < pair_dim; ++b) {
        const double cov = cross(static_cast<Index>(a), static_cast<Index>(b)) / np -
                           means[a] * means[b];
        const double corr = cov / (sds[a] * sds[b]);
        const auto& ca = channels[a / m];
        const auto& cb = channels[b / m];
        if (ca.block == cb.block && (a % m) == (b % m) && ca.part != cb.part)
          rep.max_abs_corr_within_block =
              std::max(rep.max_abs_corr_within_block, std::abs(corr));
        else if (ca.block != cb.block || (a % m) != (b % m))
          rep.max_abs_corr_cross_block = std::max(rep.max_abs_corr_cross_block, std::abs(corr));
      }
    }
  }

  if (g >= 2) {
    for (std::size_t idx = 0; idx < c * m; ++idx) {
      const double m1 = h1_sum[idx] / np, m2 = h2_sum[idx] / np;
      const double v1 = h1_sq[idx] / np - m1 * m1;
      const double v2 = h2_sq[idx] / np - m2 * m2;
      const double cov = h12[idx] / np - m1 * m2;
      rep.max_abs_corr_disjoint_increments = std::max(
          rep.max_abs_corr_disjoint_increments, std::abs(cov / std::sqrt(v1 * v2)));
    }
  }

  rep.mirror_max_deviation = mirror_dev;
  rep.variances_ok = rep.max_variance_ratio_deviation <= rep.variance_tolerance;
  rep.correlations_ok = rep.max_abs_corr_within_block <= rep.correlation_tolerance &&
                        rep.max_abs_corr_cross_block <= rep.correlation_tolerance &&
                        rep.max_abs_corr_disjoint_increments <= rep.correlation_tolerance;
  rep.mirror_ok = rep.mirror_max_deviation == 0.0;
  rep.passed = rep.variances_ok && rep.correlations_ok && rep.mirror_ok;
  return rep;
}

}  // namespace freqdiff
