#pragma once

// Probability kernel of the multi-rubric cumulative probit model.

#include <Eigen/Dense>

#include "mrubric/rng.hpp"
#include "mrubric/spatial.hpp"
#include "mrubric/types.hpp"

namespace mrubric {

/// Phi(theta_k - mu) - Phi(theta_{k-1} - mu). Throws CategoryRange for k
/// outside 1..K.
double cell_probability(const Rubric& rubric, int k, double mu);

/// log of cell_probability, stable deep in either tail.
double log_cell_probability(const Rubric& rubric, int k, double mu);

/// Unchecked variant used in hot loops (k assumed valid).
inline double log_cell_probability_unchecked(const Rubric& rubric, int k, double mu);

/// x_i^T gamma + alpha_u^T beta_i + psi(s_i)^T eta + b_i.
double linear_predictor(const ModelState& state, const SpatialBasis& basis, const ItemTable& items,
                        std::size_t i, std::size_t u);

/// The same predictor evaluated for every observation in data.
Eigen::VectorXd linear_predictors(const ModelState& state, const SpatialBasis& basis,
                                  const ItemTable& items, const RatingsDataset& data);

/// sum over observations of log w_{iu, Z_iu}. Returns -inf when some cell has
/// zero mass; 0 for an empty dataset.
double observed_data_loglik(const ModelState& state, const RatingsDataset& data,
                            const ItemTable& items, const SpatialBasis& basis);

/// Sorted draw of K-1 iid Gau(0, sigma_theta^2) variables.
Rubric sample_rubric_prior(int categories, double sigma_theta, Rng& rng);

/// Cell index k in 1..K containing y under the rubric.
int category_of(const Rubric& rubric, double y) noexcept;

}  // namespace mrubric

#include "mrubric/normal.hpp"

namespace mrubric {

inline double log_cell_probability_unchecked(const Rubric& rubric, int k, double mu) {
  return normal::log_interval_probability(rubric.lower(k) - mu, rubric.upper(k) - mu);
}

}  // namespace mrubric
