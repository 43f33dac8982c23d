#pragma once

// Elementary transition kernels shared by the Gibbs sweep.

#include <Eigen/Dense>

#include <functional>
#include <span>
#include <string_view>

#include "mrubric/rng.hpp"

namespace mrubric {

/// Draw from Gau(mu, sigma^2) truncated to (lower, upper); infinite bounds
/// are allowed. Inverse-CDF in the bulk; exponential or uniform rejection when
/// the interval sits more than 5 sigma out in a tail. The result lies strictly
/// inside the interval.
double sample_truncated_gaussian(double mu, double sigma, double lower, double upper, Rng& rng);

/// Gaussian full conditional Gau(Sigma D^T R, Sigma), Sigma = (D^T D + P)^-1,
/// held as the Cholesky factor of the precision.
class GaussianPosterior {
 public:
  /// From sufficient statistics: gram = D^T D, rhs = D^T R.
  GaussianPosterior(const Eigen::Ref<const Eigen::MatrixXd>& gram,
                    const Eigen::Ref<const Eigen::VectorXd>& rhs,
                    const Eigen::Ref<const Eigen::MatrixXd>& prior_precision,
                    std::string_view block = "coefficients");

  const Eigen::VectorXd& mean() const noexcept { return mean_; }
  Eigen::MatrixXd covariance() const;
  Eigen::VectorXd draw(Rng& rng) const;

 private:
  Eigen::LLT<Eigen::MatrixXd> factor_;
  Eigen::VectorXd mean_;
};

/// One draw of the coefficients of R = D c + eps, eps ~ Gau(0, I), with prior
/// precision P (a zero matrix encodes a flat prior). Throws RankDeficiency when
/// D^T D + P is not positive definite.
Eigen::VectorXd gaussian_conjugate_update(const Eigen::Ref<const Eigen::MatrixXd>& design,
                                          const Eigen::Ref<const Eigen::VectorXd>& residuals,
                                          const Eigen::Ref<const Eigen::MatrixXd>& prior_precision,
                                          Rng& rng, std::string_view block = "coefficients");

/// Dirichlet(a + counts) draw.
Eigen::VectorXd sample_mixture_weights(std::span<const std::size_t> counts, double a, Rng& rng);

/// log of Ga(v | 0.5, 0.5) * prod_j Gau(x_j | 0, v), up to a constant, as a
/// function of the variance v; `sum_squares` = sum_j x_j^2 over n terms.
double log_variance_target(double variance, double sum_squares, std::size_t n) noexcept;

/// One slice-sampling transition (stepping out, then shrinkage) for a
/// positive variance, run on log(variance) with the Jacobian included.
/// log_target is the log density of the variance itself.
double slice_sample_variance(const std::function<double(double)>& log_target, double current,
                             Rng& rng, double width = 1.0, int max_steps = 64);

}  // namespace mrubric
