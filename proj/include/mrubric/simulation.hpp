#pragma once

// Synthetic data from the hierarchical model and the two simulation studies.

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mrubric/rng.hpp"
#include "mrubric/sampler.hpp"
#include "mrubric/spatial.hpp"
#include "mrubric/types.hpp"

namespace mrubric {

/// p1 = uniform over five categories, p2 = (0, .25, .5, .25, 0).
Eigen::VectorXd uniform_probs(int categories = 5);
Eigen::VectorXd peaked_probs();

/// theta_k = empirical quantile of the pool at sum_{j<=k} p_j. Coincident
/// quantiles are separated by 1e-8. Throws InsufficientPool when the pool
/// holds fewer than 10 / min(nonzero p) values.
Rubric breakpoints_from_probs(const Eigen::VectorXd& p, std::span<const double> pool);
/// breakpoints_from_probs(tau p1 + (1 - tau) p2).
Rubric tau_rubric(double tau, const Eigen::VectorXd& p1, const Eigen::VectorXd& p2,
                  std::span<const double> pool);
/// Total variation on the sum-of-absolute-differences scale, so that
/// tv_distance(p1, tau p1 + (1 - tau) p2) = 0.8 (1 - tau) for the two study vectors.
double tv_distance(const Eigen::VectorXd& p, const Eigen::VectorXd& q);

enum class SpatialTruth {
  None,
  Radial,    // Gaussian bumps at knots drawn uniformly over the domain
  Spectral,  // spectral basis of the item locations
};

struct SimConfig {
  std::size_t items = 200;
  std::size_t users = 200;
  int categories = 5;
  /// Explicit rubrics take precedence over probability vectors.
  std::vector<Rubric> rubrics;
  std::vector<Eigen::VectorXd> rubric_probs;
  Eigen::VectorXd weights;  // omega; empty means uniform
  int factors = 0;
  double sigma_alpha = 1.0;
  double sigma_beta = 0.0;
  double sigma_b = 1.0;
  double noise_sd = 1.0;  // sd of Y around mu
  Eigen::VectorXd gamma;  // covariate effects; covariates drawn Gau(0, 1)
  SpatialTruth spatial = SpatialTruth::Radial;
  std::size_t basis_rank = 20;  // knots (radial) or rank (spectral)
  bool grid_knots = false;      // radial knots on a square grid instead of at random
  double bandwidth = 50.0;
  double sigma_eta = 1.0;       // eta ~ Gau(0, sigma_eta^2 I)
  BoundingBox domain{0.0, 1.0, 0.0, 1.0};
  /// Number of distinct (item, user) pairs, drawn uniformly at random.
  std::size_t ratings = 4000;
  std::size_t pool_size = 10'000'000;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SimulatedData {
  RatingsDataset data;
  ItemTable items;
  SpatialBasis basis;  // the generating basis (rank 0 when spatial == None)
  ModelState truth;    // utilities are the generated Y
  std::vector<Eigen::VectorXd> rubric_probs;
};

/// Draws every latent quantity, then rates by cell membership of Y.
SimulatedData generate_dataset(const SimConfig& config);

/// Empirical rating distribution among users with truth class m.
Eigen::VectorXd class_rating_distribution(const SimulatedData& sim, int m);

struct FitConfig {
  Hyperparameters hyper;
  double bandwidth = 50.0;
  RankRule rank_rule = VarianceFraction{0.99};
  bool use_true_basis = false;  // fit with the generating basis
  double test_fraction = 0.5;
  int workers = 1;
};

struct TauRow {
  double tau = 0.0;
  std::uint64_t seed = 0;
  double heldout_multi = 0.0;
  double heldout_single = 0.0;
  double delta = 0.0;     // multi - single, mean over test pairs
  double delta_se = 0.0;  // standard error of the paired mean difference
  double correct_assignment = 0.0;
  double top_two_occupancy = 0.0;
  Eigen::VectorXd occupancy;  // final draw, sorted descending
  std::vector<Eigen::VectorXd> profiles;  // two most occupied rubrics, by Binder partition
  std::vector<Eigen::VectorXd> true_probs;
  double seconds = 0.0;
};

/// Default tau-study generator: two rubrics from p1 and the tau mixture,
/// omega = (.5, .5), no factors, eta ~ Gau(0, .5 I) on a radial knot grid.
SimConfig tau_study_config(double tau, std::uint64_t seed);

/// Fits single- and multi-rubric models per tau. Cells run on `parallel`
/// threads; each chain uses fit.workers.
std::vector<TauRow> run_tau_study(std::span<const double> taus, const FitConfig& multi,
                                  std::uint64_t seed, int parallel = 1,
                                  const std::optional<SimConfig>& base = std::nullopt);

/// Supplement configuration: L = 4, sigma_alpha = 2, sigma_beta = 5, sigma_b = 3,
/// eta ~ Gau(0, 3 I) over 20 radial functions, M = 3, I = U = 200, 3981 ratings.
SimConfig factor_study_config(std::uint64_t seed);

struct FactorRow {
  int factors = 0;
  std::uint64_t seed = 0;
  double heldout = 0.0;
  double seconds = 0.0;
};

struct FactorStudy {
  std::vector<FactorRow> rows;
  int best_factors = 0;
  /// zeta_i = beta_i1 / sigma_beta per draw (rows) for the sampled items
  /// (columns) under the true L.
  Eigen::MatrixXd zeta;
  std::vector<std::size_t> zeta_items;
};

FactorStudy run_factor_recovery_study(const FitConfig& fit, std::uint64_t seed,
                                      int max_factors = 7, int parallel = 1,
                                      const std::optional<SimConfig>& base = std::nullopt,
                                      std::size_t zeta_item_count = 20);

}  // namespace mrubric
