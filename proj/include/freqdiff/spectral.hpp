// Unitary DFT, mirror-symmetry handling, the phi coordinate chart and the
// Lambda diagonal scaling.
//
// Transform convention: x~_k = N^{-1/2} sum_tau x_tau exp(-2 pi i k tau / N),
// applied independently to each feature column. The inverse uses the
// conjugate twiddle with the same N^{-1/2} factor, so the pair is unitary.
//
// The production transform is a direct O(N^2) summation over a precomputed
// length-N twiddle table (indices reduced mod N, so there is no phase
// drift); the dense DFT matrix is only ever materialized by
// unitarity_check and by test oracles.

#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>

#include "freqdiff/core.hpp"

namespace freqdiff {

namespace detail {

inline CMat twiddle_table(Index n, double sign) {
  CMat tw(n, 1);
  for (Index j = 0; j < n; ++j)
    tw(j, 0) = std::polar(1.0, sign * 2.0 * M_PI * static_cast<double>(j) / static_cast<double>(n));
  return tw;
}

// y_k = N^{-1/2} sum_tau x_tau * tw[(k*tau) mod N], for every feature column.
template <typename InMat>
CMat dft_core(const InMat& x, double sign) {
  const Index n = x.rows(), m = x.cols();
  const CMat tw = twiddle_table(n, sign);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  CMat out(n, m);
  for (Index k = 0; k < n; ++k) {
    Index idx = 0;  // (k * tau) mod N, advanced by k each tau
    Eigen::RowVectorXcd acc = Eigen::RowVectorXcd::Zero(m);
    for (Index tau = 0; tau < n; ++tau) {
      acc += tw(idx, 0) * x.row(tau);
      idx += k;
      if (idx >= n) idx -= n;
    }
    out.row(k) = scale * acc;
  }
  return out;
}

}  // namespace detail

/// Max absolute deviation from the mirror symmetry s_k = conj(s_{(N-k) mod N}).
inline double mirror_symmetry_deviation(const SpectralSeries& spec) {
  const Index n = spec.n();
  double dev = 0.0;
  for (Index k = 0; k < n; ++k) {
    const Index km = (n - k) % n;
    for (Index v = 0; v < spec.m(); ++v)
      dev = std::max(dev, std::abs(spec.values(k, v) - std::conj(spec.values(km, v))));
  }
  return dev;
}

inline SpectralSeries dft(const TimeSeries& ts) {
  require_nonempty_finite(ts.values, "dft");
  return SpectralSeries(detail::dft_core(ts.values, -1.0));
}

/// Inverse transform of a mirror-symmetric spectrum. The symmetry is required
/// to 1e-9; any imaginary residue of the reconstruction above 1e-8 is an error.
inline TimeSeries idft(const SpectralSeries& spec) {
  if (spec.n() < 1 || spec.m() < 1) throw DataError("idft: empty spectrum");
  if (mirror_symmetry_deviation(spec) > 1e-9)
    throw std::invalid_argument("idft: input violates mirror symmetry beyond 1e-9");
  CMat rec = detail::dft_core(spec.values, +1.0);
  const double residue = rec.imag().cwiseAbs().maxCoeff();
  if (residue > 1e-8)
    throw NumericsError("idft: imaginary residue " + std::to_string(residue) + " exceeds 1e-8");
  return TimeSeries(rec.real());
}

/// Chart extraction: packs the non-redundant real/imaginary parts of a
/// mirror-symmetric spectrum into N real rows (layout documented on PhiVector).
inline PhiVector phi(const SpectralSeries& spec) {
  const Index n = spec.n(), m = spec.m();
  if (n < 1 || m < 1) throw DataError("phi: empty spectrum");
  const Index h = n / 2;
  Mat out(n, m);
  for (Index k = 0; k <= h; ++k) out.row(k) = spec.values.row(k).real();
  if (n % 2 == 0) {
    for (Index k = 1; k < h; ++k) out.row(h + k) = spec.values.row(k).imag();
  } else {
    for (Index k = 1; k <= h; ++k) out.row(h + k) = spec.values.row(k).imag();
  }
  return PhiVector(out);
}

/// Chart inverse: rebuilds the full spectrum, mirror symmetry exact by
/// construction (conjugate rows share the bits of their source rows).
inline SpectralSeries phi_inv(const PhiVector& pv) {
  const Index n = pv.n(), m = pv.m();
  if (n < 1 || m < 1) throw DataError("phi_inv: empty input");
  const Index h = n / 2;
  CMat out(n, m);
  const std::complex<double> i1(0.0, 1.0);
  out.row(0) = pv.values.row(0).cast<std::complex<double>>();
  if (n % 2 == 0) {
    for (Index k = 1; k < h; ++k)
      out.row(k) = pv.values.row(k).cast<std::complex<double>>() + i1 * pv.values.row(h + k);
    if (h >= 1) out.row(h) = pv.values.row(h).cast<std::complex<double>>();
  } else {
    for (Index k = 1; k <= h; ++k)
      out.row(k) = pv.values.row(k).cast<std::complex<double>>() + i1 * pv.values.row(h + k);
  }
  for (Index k = h + 1; k < n; ++k) out.row(k) = out.row(n - k).conjugate();
  return SpectralSeries(out);
}

/// Diagonal noise shaping of the frequency SDE: entry 1 at k = 0 (and at the
/// Nyquist row N/2 when N is even), 1/sqrt(2) everywhere else. Indexed over
/// the phi row layout.
struct LambdaScaling {
  Vec diag;

  Index n() const { return diag.size(); }
};

inline LambdaScaling lambda_scaling(Index n) {
  if (n < 1) throw DataError("lambda_scaling: N >= 1 violated");
  Vec d = Vec::Constant(n, 1.0 / std::sqrt(2.0));
  d(0) = 1.0;
  if (n % 2 == 0) d(n / 2) = 1.0;
  return LambdaScaling{d};
}

/// Max-abs deviation of U U* from the identity for the dense DFT matrix.
inline double unitarity_check(Index n) {
  if (n < 1) throw DataError("unitarity_check: N >= 1 violated");
  CMat u(n, n);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (Index k = 0; k < n; ++k)
    for (Index t = 0; t < n; ++t)
      u(k, t) = scale * std::polar(1.0, -2.0 * M_PI * static_cast<double>(k) *
                                            static_cast<double>(t) / static_cast<double>(n));
  CMat g = u * u.adjoint();
  g -= CMat::Identity(n, n);
  return g.cwiseAbs().maxCoeff();
}

// Composites used all over the place:
//   phi_of_series = phi . dft        (the linear map Q)
//   series_of_phi = idft . phi_inv   (its inverse)

inline PhiVector phi_of_series(const TimeSeries& ts) { return phi(dft(ts)); }

inline TimeSeries series_of_phi(const PhiVector& pv) { return idft(phi_inv(pv)); }

}  // namespace freqdiff
