#include "mrubric/normal.hpp"

#include <cmath>
#include <limits>

namespace mrubric::normal {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSqrt1_2 = 0.70710678118654752440084436210485;

// Asymptotic expansion of log Phi(x) for x << 0:
// Phi(x) = phi(x)/(-x) * (1 - 1/x^2 + 3/x^4 - 15/x^6 + ...).
double log_cdf_asymptotic(double x) {
  const double z = 1.0 / (x * x);
  double term = 1.0;
  double series = 1.0;
  for (int k = 1; k <= 6; ++k) {
    term *= -(2.0 * k - 1.0) * z;
    series += term;
  }
  return -0.5 * x * x - kLogSqrt2Pi - std::log(-x) + std::log(series);
}

}  // namespace

double pdf(double x) noexcept { return std::exp(log_pdf(x)); }

double log_pdf(double x) noexcept { return -0.5 * x * x - kLogSqrt2Pi; }

double cdf(double x) noexcept {
  if (x == -kInf) return 0.0;
  if (x == kInf) return 1.0;
  return 0.5 * std::erfc(-x * kSqrt1_2);
}

double log_cdf(double x) noexcept {
  if (x == -kInf) return -kInf;
  if (x == kInf) return 0.0;
  if (x < -30.0) return log_cdf_asymptotic(x);
  if (x > 5.0) return std::log1p(-0.5 * std::erfc(x * kSqrt1_2));
  return std::log(0.5 * std::erfc(-x * kSqrt1_2));
}

double quantile(double p) noexcept {
  if (!(p > 0.0)) return p == 0.0 ? -kInf : std::numeric_limits<double>::quiet_NaN();
  if (!(p < 1.0)) return p == 1.0 ? kInf : std::numeric_limits<double>::quiet_NaN();

  const double q = p - 0.5;
  if (std::fabs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((r * 2509.0809287301226727 + 33430.575583588128105) * r +
                 67265.770927008700853) * r + 45921.953931549871457) * r +
               13731.693765509461125) * r + 1971.5909503065514427) * r +
             133.14166789178437745) * r + 3.387132872796366608) /
           (((((((r * 5226.495278852545925 + 28729.085735721942674) * r +
                 39307.89580009271061) * r + 21213.794301586595867) * r +
               5394.1960214247511077) * r + 687.1870074920579083) * r +
             42.313330701600911252) * r + 1.0);
  }

  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double value;
  if (r <= 5.0) {
    r -= 1.6;
    value = (((((((r * 7.7454501427834140764e-4 + 0.0227238449892691845833) * r +
                  0.24178072517745061177) * r + 1.27045825245236838258) * r +
                3.64784832476320460504) * r + 5.7694972214606914055) * r +
              4.6303378461565452959) * r + 1.42343711074968357734) /
            (((((((r * 1.05075007164441684324e-9 + 5.475938084995344946e-4) * r +
                  0.0151986665636164571966) * r + 0.14810397642748007459) * r +
                0.68976733498510000455) * r + 1.6763848301838038494) * r +
              2.05319162663775882187) * r + 1.0);
  } else {
    r -= 5.0;
    value = (((((((r * 2.01033439929228813265e-7 + 2.71155556874348757815e-5) * r +
                  0.0012426609473880784386) * r + 0.026532189526576123093) * r +
                0.29656057182850489123) * r + 1.7848265399172913358) * r +
              5.4637849111641143699) * r + 6.6579046435011037772) /
            (((((((r * 2.04426310338993978564e-15 + 1.4215117583164458887e-7) * r +
                  1.8463183175100546818e-5) * r + 7.868691311456132591e-4) * r +
                0.0148753612908506148525) * r + 0.13692988092273580531) * r +
              0.59983220655588793769) * r + 1.0);
  }
  return q < 0.0 ? -value : value;
}

double interval_probability(double lo, double hi) noexcept {
  if (!(lo < hi)) return 0.0;
  if (lo > 0.0) return cdf(-lo) - cdf(-hi);
  return cdf(hi) - cdf(lo);
}

double log_interval_probability(double lo, double hi) noexcept {
  if (!(lo < hi)) return -kInf;
  if (lo > 0.0) {
    // reflect into the lower tail
    const double tmp = lo;
    lo = -hi;
    hi = -tmp;
  }
  const double log_hi = log_cdf(hi);
  if (lo == -kInf) return log_hi;
  const double log_lo = log_cdf(lo);
  // log(Phi(hi) - Phi(lo)) = log Phi(hi) + log(1 - exp(log Phi(lo) - log Phi(hi)))
  return log_hi + std::log(-std::expm1(log_lo - log_hi));
}

}  // namespace mrubric::normal
