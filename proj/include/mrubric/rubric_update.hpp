#pragma once

// Metropolis-Hastings update of one rubric's break-points with an
// independence proposal from a Laplace approximation in the unconstrained
// parametrization delta_1 = theta_1, delta_k = log(theta_k - theta_{k-1}).

#include <Eigen/Dense>

#include <span>

#include "mrubric/rng.hpp"
#include "mrubric/types.hpp"

namespace mrubric {

Eigen::VectorXd thresholds_from_delta(const Eigen::Ref<const Eigen::VectorXd>& delta);
Eigen::VectorXd delta_from_thresholds(const Eigen::Ref<const Eigen::VectorXd>& thresholds);

/// Log full conditional of delta: order-statistics prior, cell probabilities
/// of the observations currently assigned to the rubric (latent utilities
/// integrated out), and the log-Jacobian sum_{k>=2} delta_k.
class RubricTarget {
 public:
  RubricTarget(int categories, double sigma_theta, std::span<const int> ratings,
               std::span<const double> predictors);

  int dimension() const noexcept { return categories_ - 1; }
  std::size_t observations() const noexcept { return ratings_.size(); }
  double value(const Eigen::Ref<const Eigen::VectorXd>& delta) const;
  Eigen::VectorXd gradient(const Eigen::Ref<const Eigen::VectorXd>& delta) const;

 private:
  int categories_;
  double sigma_theta_;
  std::span<const int> ratings_;
  std::span<const double> predictors_;
};

struct LaplaceOptions {
  int max_iterations = 100;
  double gradient_tolerance = 1e-8;
  double random_walk_scale = 0.1;
};

/// Cached Gaussian proposal: mode and Cholesky factor of the precision -H.
struct LaplaceProposal {
  Eigen::VectorXd mode;
  Eigen::MatrixXd precision_factor;  // lower triangular
  int age = 0;
  bool valid = false;

  double log_density(const Eigen::Ref<const Eigen::VectorXd>& delta) const;  // up to a constant
  Eigen::VectorXd draw(Rng& rng) const;
};

/// Damped Newton on the target (analytic gradient, central-difference
/// Hessian). Returns an invalid proposal when it fails to converge or the
/// Hessian at the mode is not negative definite.
LaplaceProposal build_laplace_proposal(const RubricTarget& target,
                                       const Eigen::Ref<const Eigen::VectorXd>& start,
                                       const LaplaceOptions& options = {});

struct RubricStepResult {
  bool accepted = false;        // independence proposal accepted
  bool local_accepted = false;  // follow-up random-walk step accepted
  bool fallback = false;  // random-walk step used because mode finding failed
  bool refreshed = false;
};

/// One MH transition for a rubric: a Laplace independence step followed by a
/// random-walk step with the same covariance. The proposal is rebuilt when
/// invalid or when its age reaches refresh_cadence.
RubricStepResult update_rubric_laplace(Rubric& rubric, const RubricTarget& target,
                                       LaplaceProposal& proposal, int refresh_cadence, Rng& rng,
                                       const LaplaceOptions& options = {});

}  // namespace mrubric
