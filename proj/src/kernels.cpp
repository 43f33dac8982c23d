#include "mrubric/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "mrubric/errors.hpp"
#include "mrubric/normal.hpp"

namespace mrubric {

namespace {

constexpr double kTailStart = 5.0;

// Standard Gaussian truncated to [a, b] with a >= kTailStart (Robert, 1995).
double sample_upper_tail(double a, double b, Rng& rng) {
  if (std::isfinite(b) && (b - a) * a < 1.0) {
    // short interval: uniform proposal, acceptance >= exp(-1)
    for (;;) {
      const double x = a + (b - a) * rng.uniform();
      if (std::log(rng.uniform()) < -0.5 * (x * x - a * a)) return x;
    }
  }
  const double rate = 0.5 * (a + std::sqrt(a * a + 4.0));
  for (;;) {
    const double x = a + rng.exponential() / rate;
    if (x >= b) continue;
    const double d = x - rate;
    if (std::log(rng.uniform()) < -0.5 * d * d) return x;
  }
}

double sample_standard_truncated(double a, double b, Rng& rng) {
  if (a >= kTailStart) return sample_upper_tail(a, b, rng);
  if (b <= -kTailStart) return -sample_upper_tail(-b, -a, rng);
  const double u = rng.uniform();
  if (a >= 0.0) {
    // work with lower-tail probabilities of -x for accuracy
    const double lo = normal::cdf(-b);
    const double hi = normal::cdf(-a);
    return -normal::quantile(lo + u * (hi - lo));
  }
  const double lo = normal::cdf(a);
  const double hi = normal::cdf(b);
  return normal::quantile(lo + u * (hi - lo));
}

}  // namespace

double sample_truncated_gaussian(double mu, double sigma, double lower, double upper, Rng& rng) {
  if (!(lower < upper))
    throw Error(ErrorKind::Interval, "truncation interval is empty: lower=" +
                                         std::to_string(lower) + " upper=" + std::to_string(upper));
  if (!(sigma > 0.0)) throw Error(ErrorKind::Interval, "truncated Gaussian needs sigma > 0");
  const double a = (lower - mu) / sigma;
  const double b = (upper - mu) / sigma;
  double y = mu + sigma * sample_standard_truncated(a, b, rng);
  if (!(y > lower)) y = std::nextafter(lower, upper);
  if (!(y < upper)) y = std::nextafter(upper, lower);
  return y;
}

GaussianPosterior::GaussianPosterior(const Eigen::Ref<const Eigen::MatrixXd>& gram,
                                     const Eigen::Ref<const Eigen::VectorXd>& rhs,
                                     const Eigen::Ref<const Eigen::MatrixXd>& prior_precision,
                                     std::string_view block) {
  const Eigen::MatrixXd precision = gram + prior_precision;
  factor_.compute(precision);
  bool ok = factor_.info() == Eigen::Success;
  if (ok && precision.rows() > 0) {
    const Eigen::VectorXd diag = factor_.matrixL().toDenseMatrix().diagonal();
    // condition-number guard: pivots below 1e-12 of the largest diagonal
    ok = diag.minCoeff() > 1e-6 * std::sqrt(std::max(precision.diagonal().maxCoeff(), 1e-300));
  }
  if (!ok)
    throw Error(ErrorKind::RankDeficiency,
                "posterior precision for block '" + std::string(block) +
                    "' is not positive definite (rank-deficient design with flat prior)");
  mean_ = factor_.solve(rhs);
}

Eigen::MatrixXd GaussianPosterior::covariance() const {
  return factor_.solve(Eigen::MatrixXd::Identity(mean_.size(), mean_.size()));
}

Eigen::VectorXd GaussianPosterior::draw(Rng& rng) const {
  Eigen::VectorXd z(mean_.size());
  for (Eigen::Index j = 0; j < z.size(); ++j) z(j) = rng.normal();
  // precision = L L^T, so L^{-T} z has covariance precision^{-1}
  return mean_ + factor_.matrixU().solve(z);
}

Eigen::VectorXd gaussian_conjugate_update(const Eigen::Ref<const Eigen::MatrixXd>& design,
                                          const Eigen::Ref<const Eigen::VectorXd>& residuals,
                                          const Eigen::Ref<const Eigen::MatrixXd>& prior_precision,
                                          Rng& rng, std::string_view block) {
  if (design.rows() != residuals.size())
    throw Error(ErrorKind::Configuration, "design rows do not align with residuals");
  const Eigen::MatrixXd gram = design.transpose() * design;
  const Eigen::VectorXd rhs = design.transpose() * residuals;
  return GaussianPosterior(gram, rhs, prior_precision, block).draw(rng);
}

Eigen::VectorXd sample_mixture_weights(std::span<const std::size_t> counts, double a, Rng& rng) {
  std::vector<double> concentration(counts.size());
  for (std::size_t m = 0; m < counts.size(); ++m)
    concentration[m] = a + static_cast<double>(counts[m]);
  Eigen::VectorXd omega(static_cast<Eigen::Index>(counts.size()));
  rng.dirichlet(concentration, {omega.data(), counts.size()});
  return omega;
}

double log_variance_target(double variance, double sum_squares, std::size_t n) noexcept {
  if (!(variance > 0.0)) return -std::numeric_limits<double>::infinity();
  const double half_n = 0.5 * static_cast<double>(n);
  return (-0.5 - half_n) * std::log(variance) - 0.5 * variance - 0.5 * sum_squares / variance;
}

double slice_sample_variance(const std::function<double(double)>& log_target, double current,
                             Rng& rng, double width, int max_steps) {
  auto log_density = [&](double t) { return log_target(std::exp(t)) + t; };
  const double t0 = std::log(current);
  const double f0 = log_density(t0);
  if (!std::isfinite(f0))
    throw Error(ErrorKind::StateCorruption,
                "slice sampler started at a variance with non-finite log target: " +
                    std::to_string(current));
  const double level = f0 - rng.exponential();

  double left = t0 - width * rng.uniform();
  double right = left + width;
  int j = static_cast<int>(std::floor(max_steps * rng.uniform()));
  int k = max_steps - 1 - j;
  while (j-- > 0 && log_density(left) > level) left -= width;
  while (k-- > 0 && log_density(right) > level) right += width;

  for (;;) {
    const double t1 = left + (right - left) * rng.uniform();
    if (log_density(t1) > level) return std::exp(t1);
    if (t1 < t0) left = t1;
    else right = t1;
  }
}

}  // namespace mrubric
