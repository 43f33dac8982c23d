#include "mrubric/rubric_update.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "mrubric/normal.hpp"

namespace mrubric {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Eigen::MatrixXd finite_difference_hessian(const RubricTarget& target,
                                          const Eigen::VectorXd& delta) {
  const Eigen::Index d = delta.size();
  Eigen::MatrixXd h(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double step = 1e-5 * std::max(1.0, std::abs(delta(j)));
    Eigen::VectorXd up = delta, down = delta;
    up(j) += step;
    down(j) -= step;
    h.col(j) = (target.gradient(up) - target.gradient(down)) / (2.0 * step);
  }
  return 0.5 * (h + h.transpose());
}

}  // namespace

Eigen::VectorXd thresholds_from_delta(const Eigen::Ref<const Eigen::VectorXd>& delta) {
  Eigen::VectorXd theta(delta.size());
  if (delta.size() == 0) return theta;
  theta(0) = delta(0);
  for (Eigen::Index k = 1; k < delta.size(); ++k) theta(k) = theta(k - 1) + std::exp(delta(k));
  return theta;
}

Eigen::VectorXd delta_from_thresholds(const Eigen::Ref<const Eigen::VectorXd>& thresholds) {
  Eigen::VectorXd delta(thresholds.size());
  if (thresholds.size() == 0) return delta;
  delta(0) = thresholds(0);
  for (Eigen::Index k = 1; k < thresholds.size(); ++k)
    delta(k) = std::log(thresholds(k) - thresholds(k - 1));
  return delta;
}

RubricTarget::RubricTarget(int categories, double sigma_theta, std::span<const int> ratings,
                           std::span<const double> predictors)
    : categories_(categories), sigma_theta_(sigma_theta), ratings_(ratings),
      predictors_(predictors) {}

double RubricTarget::value(const Eigen::Ref<const Eigen::VectorXd>& delta) const {
  if (!delta.allFinite()) return kNegInf;
  const Eigen::VectorXd theta = thresholds_from_delta(delta);
  if (!Rubric::valid_breaks(theta)) return kNegInf;
  const double inv_var = 1.0 / (sigma_theta_ * sigma_theta_);
  double total = -0.5 * inv_var * theta.squaredNorm();
  for (Eigen::Index k = 1; k < delta.size(); ++k) total += delta(k);
  const double inf = std::numeric_limits<double>::infinity();
  for (std::size_t n = 0; n < ratings_.size(); ++n) {
    const int z = ratings_[n];
    const double mu = predictors_[n];
    const double lo = z <= 1 ? -inf : theta(z - 2) - mu;
    const double hi = z >= categories_ ? inf : theta(z - 1) - mu;
    total += normal::log_interval_probability(lo, hi);
  }
  return total;
}

Eigen::VectorXd RubricTarget::gradient(const Eigen::Ref<const Eigen::VectorXd>& delta) const {
  const Eigen::VectorXd theta = thresholds_from_delta(delta);
  const double inv_var = 1.0 / (sigma_theta_ * sigma_theta_);
  Eigen::VectorXd g_theta = -inv_var * theta;
  const double inf = std::numeric_limits<double>::infinity();
  for (std::size_t n = 0; n < ratings_.size(); ++n) {
    const int z = ratings_[n];
    const double mu = predictors_[n];
    const double lo = z <= 1 ? -inf : theta(z - 2) - mu;
    const double hi = z >= categories_ ? inf : theta(z - 1) - mu;
    const double log_p = normal::log_interval_probability(lo, hi);
    if (z < categories_) g_theta(z - 1) += std::exp(normal::log_pdf(hi) - log_p);
    if (z > 1) g_theta(z - 2) -= std::exp(normal::log_pdf(lo) - log_p);
  }
  // chain rule: d theta_k / d delta_1 = 1, d theta_k / d delta_j = exp(delta_j) for j <= k
  Eigen::VectorXd g(delta.size());
  double tail = 0.0;
  for (Eigen::Index j = delta.size() - 1; j >= 0; --j) {
    tail += g_theta(j);
    g(j) = j == 0 ? tail : tail * std::exp(delta(j)) + 1.0;
  }
  return g;
}

double LaplaceProposal::log_density(const Eigen::Ref<const Eigen::VectorXd>& delta) const {
  const Eigen::VectorXd w = precision_factor.transpose() * (delta - mode);
  return -0.5 * w.squaredNorm();
}

Eigen::VectorXd LaplaceProposal::draw(Rng& rng) const {
  Eigen::VectorXd z(mode.size());
  for (Eigen::Index j = 0; j < z.size(); ++j) z(j) = rng.normal();
  return mode + precision_factor.transpose().triangularView<Eigen::Upper>().solve(z);
}

LaplaceProposal build_laplace_proposal(const RubricTarget& target,
                                       const Eigen::Ref<const Eigen::VectorXd>& start,
                                       const LaplaceOptions& options) {
  LaplaceProposal proposal;
  Eigen::VectorXd delta = start;
  double f = target.value(delta);
  if (!std::isfinite(f)) return proposal;
  const double tolerance =
      options.gradient_tolerance * (1.0 + static_cast<double>(target.observations()));

  bool converged = false;
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    const Eigen::VectorXd g = target.gradient(delta);
    if (!g.allFinite()) return proposal;
    if (g.lpNorm<Eigen::Infinity>() <= tolerance) {
      converged = true;
      break;
    }
    const Eigen::MatrixXd neg_h = -finite_difference_hessian(target, delta);
    Eigen::VectorXd direction;
    double ridge = 0.0;
    for (int attempt = 0; attempt < 60; ++attempt) {
      Eigen::LLT<Eigen::MatrixXd> llt(neg_h + ridge * Eigen::MatrixXd::Identity(g.size(), g.size()));
      if (llt.info() == Eigen::Success) {
        direction = llt.solve(g);
        if (direction.allFinite()) break;
      }
      ridge = ridge == 0.0 ? 1e-6 * std::max(1.0, neg_h.diagonal().cwiseAbs().maxCoeff())
                           : 4.0 * ridge;
      direction.resize(0);
    }
    if (direction.size() == 0) return proposal;

    // backtracking line search (Armijo)
    const double slope = g.dot(direction);
    double step = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 60; ++ls) {
      const Eigen::VectorXd candidate = delta + step * direction;
      const double fc = target.value(candidate);
      if (std::isfinite(fc) && fc >= f + 1e-4 * step * slope) {
        delta = candidate;
        f = fc;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) {
      // no ascent possible from here: accept if the gradient is already tiny
      converged = g.lpNorm<Eigen::Infinity>() <= 1e3 * tolerance;
      break;
    }
  }
  if (!converged) return proposal;

  const Eigen::MatrixXd neg_h = -finite_difference_hessian(target, delta);
  Eigen::LLT<Eigen::MatrixXd> llt(neg_h);
  if (llt.info() != Eigen::Success || !neg_h.allFinite()) return proposal;
  proposal.mode = delta;
  proposal.precision_factor = llt.matrixL();
  proposal.valid = true;
  return proposal;
}

RubricStepResult update_rubric_laplace(Rubric& rubric, const RubricTarget& target,
                                       LaplaceProposal& proposal, int refresh_cadence, Rng& rng,
                                       const LaplaceOptions& options) {
  RubricStepResult result;
  const Eigen::VectorXd current = delta_from_thresholds(rubric.breaks());
  if (!proposal.valid || proposal.age >= refresh_cadence) {
    // Newton from a far-tail state can stall, so also try the previous mode
    // and a neutral start before giving up on the Laplace proposal
    std::vector<Eigen::VectorXd> starts = {current};
    if (proposal.mode.size() == current.size()) starts.push_back(proposal.mode);
    starts.push_back(Eigen::VectorXd::Zero(current.size()));
    for (const auto& start : starts) {
      proposal = build_laplace_proposal(target, start, options);
      if (proposal.valid) break;
    }
    result.refreshed = true;
  }
  const double f_current = target.value(current);

  Eigen::VectorXd candidate;
  double log_ratio;
  if (proposal.valid) {
    ++proposal.age;
    candidate = proposal.draw(rng);
    log_ratio = target.value(candidate) - f_current + proposal.log_density(current) -
                proposal.log_density(candidate);
  } else {
    result.fallback = true;
    candidate = current;
    for (Eigen::Index j = 0; j < candidate.size(); ++j)
      candidate(j) += options.random_walk_scale * rng.normal();
    log_ratio = target.value(candidate) - f_current;
  }
  Eigen::VectorXd state = current;
  double f_state = f_current;
  if (std::isfinite(log_ratio) && std::log(rng.uniform()) < log_ratio &&
      Rubric::valid_breaks(thresholds_from_delta(candidate))) {
    state = candidate;
    f_state = target.value(candidate);
    result.accepted = true;
  }

  // The target has exponential tails in the log-gaps where data are sparse,
  // heavier than the Gaussian proposal, so an independence chain can stall in
  // a tail. A random-walk step shaped by the same covariance restores mixing.
  if (proposal.valid) {
    const double scale = 2.38 / std::sqrt(static_cast<double>(std::max<Eigen::Index>(1, state.size())));
    Eigen::VectorXd z(state.size());
    for (Eigen::Index j = 0; j < z.size(); ++j) z(j) = rng.normal();
    const Eigen::VectorXd local =
        state + scale * proposal.precision_factor.transpose().triangularView<Eigen::Upper>().solve(z);
    const double log_local = target.value(local) - f_state;
    if (std::isfinite(log_local) && std::log(rng.uniform()) < log_local &&
        Rubric::valid_breaks(thresholds_from_delta(local))) {
      state = local;
      result.local_accepted = true;
    }
  }
  if (result.accepted || result.local_accepted) rubric = Rubric(thresholds_from_delta(state));
  return result;
}

}  // namespace mrubric
