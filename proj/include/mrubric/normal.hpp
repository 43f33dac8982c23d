#pragma once

// Standard Gaussian density, distribution and quantile functions. Every
// probability computation in the library routes through these.

namespace mrubric::normal {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178032973640562;

double pdf(double x) noexcept;
double log_pdf(double x) noexcept;

/// Phi(x), accurate to full double precision in both tails (relative error in
/// the lower tail, absolute error elsewhere). Accepts +/-infinity.
double cdf(double x) noexcept;

/// log Phi(x), finite for every finite x (asymptotic series below -30).
double log_cdf(double x) noexcept;

/// Phi^{-1}(p) for p in (0, 1); returns -inf/+inf at 0/1. Wichura's AS241
/// (PPND16), relative accuracy about 1e-16.
double quantile(double p) noexcept;

/// Phi(hi) - Phi(lo) for lo <= hi, evaluated on the side of zero that avoids
/// cancellation.
double interval_probability(double lo, double hi) noexcept;

/// log(Phi(hi) - Phi(lo)) for lo < hi, computed from log-CDF differences so
/// cells deep in either tail stay finite. Returns -inf only for lo >= hi.
double log_interval_probability(double lo, double hi) noexcept;

}  // namespace mrubric::normal
