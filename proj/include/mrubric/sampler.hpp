#pragma once

// Gibbs sampler for the multi-rubric model. One sweep runs, in order:
//   1 rubric assignments C        7 spatial coefficients eta
//   2 latent utilities Y          8 mixture weights omega
//   3 user factors alpha          9 sigma_b^2   (slice)
//   4 item factors beta          10 sigma_beta^2 (slice)
//   5 regression gamma           11 sigma_eta^2 (slice)
//   6 item effects b             12 rubric break-points (Laplace MH)
// Blocks 3-7 are back-fitting updates on partial residuals
// R = Y - mu + (the block's own contribution), with mu cached per
// observation and patched after each block.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mrubric/rubric_update.hpp"
#include "mrubric/spatial.hpp"
#include "mrubric/types.hpp"

namespace mrubric {

/// Stream identifiers for counter-based random numbers.
enum class Block : std::uint64_t {
  Classes = 1,
  Utilities,
  UserFactors,
  ItemFactors,
  Regression,
  ItemEffects,
  Spatial,
  Weights,
  ScaleB,
  ScaleBeta,
  ScaleEta,
  Rubrics,
  Initialization,
};

/// One retained posterior draw.
struct Draw {
  std::vector<int> classes;
  Eigen::VectorXd weights;
  Eigen::MatrixXd rubrics;  // M x (K-1) break-points
  Eigen::VectorXd gamma;
  Eigen::VectorXd item_effects;
  Eigen::VectorXd eta;
  double sigma_b = 0.0;
  double sigma_beta = 0.0;
  double sigma_eta = 0.0;
  Eigen::MatrixXd alpha;  // 0 x L when factors were not kept
  Eigen::MatrixXd beta;
  double loglik = 0.0;

  Rubric rubric(int m) const { return Rubric(rubrics.row(m).transpose()); }
  int rubric_count() const noexcept { return static_cast<int>(rubrics.rows()); }
  int categories() const noexcept { return static_cast<int>(rubrics.cols()) + 1; }
};

struct ChainMetadata {
  std::uint64_t seed = 0;
  int warmup = 0;
  int samples = 0;
  int thinning = 1;
  int categories = 0;
  std::size_t items = 0;
  std::size_t users = 0;
  int rubrics = 0;
  int factors = 0;
  std::size_t covariates = 0;
  std::size_t basis_rank = 0;
  bool factors_kept = false;
  std::vector<double> acceptance_rates;  // per rubric, sampling phase
  std::size_t laplace_fallbacks = 0;
  double seconds = 0.0;  // wall time, excluded from bitwise comparisons
};

struct PosteriorSamples {
  ChainMetadata meta;
  std::vector<Draw> draws;
};

/// Bitwise equality of every stored value (wall time excluded).
bool bitwise_equal(const Draw& a, const Draw& b);
bool bitwise_equal(const PosteriorSamples& a, const PosteriorSamples& b);

/// Cached quantities that make the block updates cheap.
struct SamplerWorkspace {
  Eigen::VectorXd mu;               // linear predictor per observation
  Eigen::MatrixXd covariate_gram;   // X^T X with X expanded over observations
  Eigen::MatrixXd basis_gram;       // Psi^T Psi expanded over observations
  std::vector<LaplaceProposal> proposals;
  std::vector<std::size_t> accepted;
  std::vector<std::size_t> attempted;
  std::size_t fallbacks = 0;
};

/// Everything needed to resume a chain bit-for-bit.
struct ChainCheckpoint {
  std::uint64_t iteration = 0;
  ModelState state;
  Eigen::VectorXd predictors;  // cached mu, kept so a resumed chain matches bit for bit
  std::vector<LaplaceProposal> proposals;
  std::vector<std::size_t> accepted;
  std::vector<std::size_t> attempted;
  std::size_t fallbacks = 0;
  PosteriorSamples partial;
};

struct ChainOptions {
  int workers = 1;
  bool keep_factors = true;
  /// Recompute mu from scratch every this many sweeps and throw
  /// StateCorruption when it disagrees with the cache by more than 1e-8.
  int cache_check_every = 0;
  int log_every = 0;
  int checkpoint_every = 0;
  std::function<void(const ChainCheckpoint&)> on_checkpoint;
  std::optional<ChainCheckpoint> resume;
  /// Blocks held at their initial values (diagnostics and tests).
  std::vector<Block> frozen;
  LaplaceOptions laplace;
};

class GibbsSampler {
 public:
  GibbsSampler(RatingsDataset data, ItemTable items, SpatialBasis basis, Hyperparameters hyper,
               ChainOptions options = {});

  /// Draw the state from the prior with a = 1, then draw Y inside its cells.
  void initialize();
  /// Replace the current state. Y must respect the cells unless
  /// check_utilities is off (end-of-sweep states after the rubric update).
  void set_state(ModelState state, bool check_utilities = true);
  void restore(const ChainCheckpoint& checkpoint);
  ChainCheckpoint checkpoint() const;

  void sweep();

  // individual steps, exposed for testing
  void update_latent_classes();
  void update_latent_utilities();
  void update_user_factors();
  void update_item_factors();
  void update_regression();
  void update_item_effects();
  void update_spatial();
  void update_mixture_weights();
  void update_scales();
  void update_rubrics();
  /// Zero the step-12 acceptance counters (start of the sampling phase).
  void reset_counters();

  const ModelState& state() const noexcept { return state_; }
  const RatingsDataset& data() const noexcept { return data_; }
  const ItemTable& items() const noexcept { return items_; }
  const SpatialBasis& basis() const noexcept { return basis_; }
  const Hyperparameters& hyper() const noexcept { return hyper_; }
  const SamplerWorkspace& workspace() const noexcept { return ws_; }
  std::uint64_t iteration() const noexcept { return iteration_; }

  /// Replace one observed category (joint-distribution tests regenerate data).
  void set_rating(std::size_t obs, int z) { data_.set_rating(obs, z); }
  /// Overwrite latent utilities, e.g. after regenerating data.
  void set_utilities(Eigen::VectorXd utilities);

  /// Largest |mu_cached - mu_recomputed| over observations.
  double max_cache_error() const;
  /// Sum of log cell probabilities at the current state.
  double current_loglik() const;
  Draw snapshot() const;

 private:
  bool frozen(Block b) const;
  Rng stream(Block b, std::uint64_t entity) const;
  void recompute_predictors();

  RatingsDataset data_;
  ItemTable items_;
  SpatialBasis basis_;
  Hyperparameters hyper_;
  ChainOptions options_;
  ModelState state_;
  SamplerWorkspace ws_;
  std::uint64_t iteration_ = 0;
};

/// Runs warmup + sampling sweeps and keeps every `thinning`-th sampling
/// draw (floor(samples / thinning) draws). Deterministic given the seed and
/// independent of the worker count.
PosteriorSamples run_chain(const RatingsDataset& data, const ItemTable& items,
                           const SpatialBasis& basis, const Hyperparameters& hyper,
                           ChainOptions options = {},
                           const std::optional<ModelState>& initial = std::nullopt);

}  // namespace mrubric
