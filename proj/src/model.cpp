#include "mrubric/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "mrubric/errors.hpp"
#include "mrubric/normal.hpp"

namespace mrubric {

namespace {

void check_category(const Rubric& rubric, int k) {
  if (k < 1 || k > rubric.categories())
    throw Error(ErrorKind::CategoryRange, "category " + std::to_string(k) + " outside 1.." +
                                              std::to_string(rubric.categories()));
}

void check_dimensions(const ModelState& state, const SpatialBasis& basis, const ItemTable& items) {
  if (state.gamma.size() != static_cast<Eigen::Index>(items.covariate_dim()))
    throw Error(ErrorKind::Configuration, "gamma length " + std::to_string(state.gamma.size()) +
                                              " differs from covariate dimension " +
                                              std::to_string(items.covariate_dim()));
  if (state.eta.size() != static_cast<Eigen::Index>(basis.rank()))
    throw Error(ErrorKind::Configuration, "eta length " + std::to_string(state.eta.size()) +
                                              " differs from basis rank " +
                                              std::to_string(basis.rank()));
}

}  // namespace

double cell_probability(const Rubric& rubric, int k, double mu) {
  check_category(rubric, k);
  return normal::interval_probability(rubric.lower(k) - mu, rubric.upper(k) - mu);
}

double log_cell_probability(const Rubric& rubric, int k, double mu) {
  check_category(rubric, k);
  return log_cell_probability_unchecked(rubric, k, mu);
}

double linear_predictor(const ModelState& state, const SpatialBasis& basis, const ItemTable& items,
                        std::size_t i, std::size_t u) {
  check_dimensions(state, basis, items);
  const auto ii = static_cast<Eigen::Index>(i);
  const auto uu = static_cast<Eigen::Index>(u);
  double mu = state.item_effects(ii);
  if (state.gamma.size() > 0) mu += items.covariates.row(ii).dot(state.gamma);
  if (state.alpha.cols() > 0) mu += state.alpha.row(uu).dot(state.beta.row(ii));
  if (state.eta.size() > 0) mu += basis.design.row(ii).dot(state.eta);
  return mu;
}

Eigen::VectorXd linear_predictors(const ModelState& state, const SpatialBasis& basis,
                                  const ItemTable& items, const RatingsDataset& data) {
  check_dimensions(state, basis, items);
  Eigen::VectorXd mu(static_cast<Eigen::Index>(data.size()));
  for (std::size_t obs = 0; obs < data.size(); ++obs) {
    const Rating& r = data.entries()[obs];
    mu(static_cast<Eigen::Index>(obs)) = linear_predictor(state, basis, items, r.item, r.user);
  }
  return mu;
}

double observed_data_loglik(const ModelState& state, const RatingsDataset& data,
                            const ItemTable& items, const SpatialBasis& basis) {
  validate_state(state, data, items.covariate_dim(), basis.rank(), false);
  const Eigen::VectorXd mu = linear_predictors(state, basis, items, data);
  double total = 0.0;
  for (std::size_t obs = 0; obs < data.size(); ++obs) {
    const Rating& r = data.entries()[obs];
    const Rubric& rubric = state.rubrics[static_cast<std::size_t>(state.classes[r.user])];
    total += log_cell_probability_unchecked(rubric, r.z, mu(static_cast<Eigen::Index>(obs)));
  }
  return total;
}

Rubric sample_rubric_prior(int categories, double sigma_theta, Rng& rng) {
  if (categories < 2) throw Error(ErrorKind::Configuration, "category count must be >= 2");
  if (!(sigma_theta > 0.0)) throw Error(ErrorKind::Configuration, "sigma_theta must be positive");
  for (;;) {
    Eigen::VectorXd breaks(categories - 1);
    for (Eigen::Index k = 0; k < breaks.size(); ++k) breaks(k) = sigma_theta * rng.normal();
    std::sort(breaks.begin(), breaks.end());
    // ties have probability zero but would break strict ordering
    if (Rubric::valid_breaks(breaks)) return Rubric(std::move(breaks));
  }
}

int category_of(const Rubric& rubric, double y) noexcept {
  const auto& b = rubric.breaks();
  return static_cast<int>(std::upper_bound(b.begin(), b.end(), y) - b.begin()) + 1;
}

}  // namespace mrubric
