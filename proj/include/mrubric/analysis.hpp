#pragma once

// Posterior functionals computed from retained draws.

#include <Eigen/Dense>

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "mrubric/sampler.hpp"
#include "mrubric/spatial.hpp"
#include "mrubric/types.hpp"

namespace mrubric {

/// Population-average expected rating for an item with fixed effect xi and
/// factor loadings of norm beta_norm, averaging over alpha ~ Gau(0, I) and the
/// rubric mixture.
double expected_rating(double xi, double beta_norm, std::span<const double> weights,
                       std::span<const Rubric> rubrics);
/// Same, if every user used rubric `rubric`.
double expected_rating_under(double xi, double beta_norm, const Rubric& rubric);

/// xi_i = x_i^T gamma + b_i + psi(s_i)^T eta for one draw.
double item_fixed_effect(const Draw& draw, const ItemTable& items, const SpatialBasis& basis,
                         std::size_t i);

/// lambda_i for one draw. Throws Configuration when the chain has factors but
/// did not keep them.
double item_quality(const Draw& draw, const ItemTable& items, const SpatialBasis& basis,
                    std::size_t i);
/// lambda_im for one draw.
double rubric_adjusted_quality(const Draw& draw, const ItemTable& items, const SpatialBasis& basis,
                               std::size_t i, int m);

struct ItemQuality {
  Eigen::MatrixXd draws;  // T x I
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;
  Eigen::VectorXd empirical_mean;  // NaN for unrated items
  std::vector<std::size_t> counts;
};

ItemQuality quality_summary(const PosteriorSamples& samples, const RatingsDataset& data,
                            const ItemTable& items, const SpatialBasis& basis, int workers = 1);

/// Posterior mean of lambda_im, I x M.
Eigen::MatrixXd rubric_quality_means(const PosteriorSamples& samples, const ItemTable& items,
                                     const SpatialBasis& basis, int workers = 1);

/// Pi_{uu'} = fraction of draws with C_u = C_u'.
Eigen::MatrixXd coclustering(const PosteriorSamples& samples);
double binder_loss(std::span<const int> assignment, const Eigen::MatrixXd& pi);
/// Sampled partition with the smallest Binder loss (first on ties).
std::vector<int> binder_cluster(const PosteriorSamples& samples, const Eigen::MatrixXd& pi);

struct HeldoutResult {
  double mean = 0.0;
  std::vector<double> per_pair;
  std::size_t floored = 0;  // pairs with zero predictive mass
};

inline constexpr double kLogProbabilityFloor = -690.7755278982137;  // log(1e-300)

/// Average over test pairs of log T^-1 sum_t Pr(Z_iu | C_u, theta, mu_iu).
/// Users flagged unseen have their rubric and factors integrated out under
/// the draw's omega and the Gau(0, I) prior. An empty `seen` marks every user
/// as seen.
HeldoutResult heldout_loglik(const PosteriorSamples& samples, const RatingsDataset& test,
                             const ItemTable& items, const SpatialBasis& basis,
                             std::span<const char> seen = {}, int workers = 1);

/// Users with at least one rating in data.
std::vector<char> seen_users(const RatingsDataset& data);

struct FieldSummary {
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;
};

/// Posterior mean and sd of W(s) = psi(s)^T eta at each location.
FieldSummary spatial_field_summary(const PosteriorSamples& samples, const SpatialBasis& basis,
                                   std::span<const Location> locations);

struct RubricProfile {
  std::size_t users = 0;
  std::size_t ratings = 0;
  Eigen::VectorXd proportions;  // NaN when the rubric holds no ratings
  bool defined() const noexcept { return ratings > 0; }
};

std::vector<RubricProfile> rubric_profile(std::span<const int> assignment, int rubrics,
                                          const RatingsDataset& data);

/// Maximum-weight perfect matching on a square score matrix. Returns
/// match[row] = column.
std::vector<int> hungarian_max(const Eigen::MatrixXd& score);

/// Fraction of users whose label maps to the true label under the best
/// bijection between label sets.
double matched_accuracy(std::span<const int> truth, std::span<const int> estimate);

/// Per-user most frequent label over the draws (lowest label on ties).
std::vector<int> modal_assignment(const PosteriorSamples& samples);

/// Fraction of users assigned to each rubric in a draw.
Eigen::VectorXd occupancy(const Draw& draw);

void export_quality_csv(const ItemQuality& quality, std::span<const std::string> item_ids,
                        const std::filesystem::path& path);
void export_rubric_quality_csv(const Eigen::MatrixXd& means, std::span<const std::string> item_ids,
                               const std::filesystem::path& path);
void export_profiles_csv(const std::vector<RubricProfile>& profiles,
                         const std::filesystem::path& path);
void export_field_csv(const FieldSummary& field, std::span<const Location> locations,
                      const std::filesystem::path& path);

}  // namespace mrubric
