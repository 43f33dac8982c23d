#pragma once

// Core domain types of the multi-rubric ordinal model.
//
// Indexing conventions: items, users and rubrics are 0-based in memory.
// Rating categories keep their natural 1..K values.

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

namespace mrubric {

struct Rating {
  std::uint32_t item = 0;
  std::uint32_t user = 0;
  int z = 1;

  friend bool operator==(const Rating&, const Rating&) = default;
};

/// Sparse observed set of ratings with per-user and per-item indices.
/// Observation indices refer to positions in entries().
class RatingsDataset {
 public:
  RatingsDataset() = default;
  /// Validates (1 <= z <= K, indices in range, no duplicate pair) and builds
  /// the user/item indices.
  RatingsDataset(std::vector<Rating> entries, int categories, std::size_t items,
                 std::size_t users);

  const std::vector<Rating>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  int categories() const noexcept { return categories_; }
  std::size_t items() const noexcept { return items_; }
  std::size_t users() const noexcept { return users_; }

  /// Observation indices rated by user u (the set I_u).
  std::span<const std::size_t> user_entries(std::size_t u) const noexcept {
    return {user_index_.data() + user_offsets_[u], user_offsets_[u + 1] - user_offsets_[u]};
  }
  /// Observation indices for item i (the set U_i).
  std::span<const std::size_t> item_entries(std::size_t i) const noexcept {
    return {item_index_.data() + item_offsets_[i], item_offsets_[i + 1] - item_offsets_[i]};
  }

  /// Replaces the category of one observation; used when data are regenerated
  /// in joint-distribution tests.
  void set_rating(std::size_t obs, int z);

  /// Subset of observations, keeping the same item/user index space.
  RatingsDataset subset(std::span<const std::size_t> observations) const;

 private:
  std::vector<Rating> entries_;
  int categories_ = 2;
  std::size_t items_ = 0;
  std::size_t users_ = 0;
  std::vector<std::size_t> user_offsets_{0};
  std::vector<std::size_t> user_index_;
  std::vector<std::size_t> item_offsets_{0};
  std::vector<std::size_t> item_index_;
};

struct Location {
  double longitude = 0.0;
  double latitude = 0.0;
};

/// Per-item covariates (I x p, p may be 0) and locations.
struct BoundingBox {
  double lon_min = -180.0, lon_max = 180.0;
  double lat_min = -90.0, lat_max = 90.0;
  bool contains(const Location& s) const noexcept {
    return s.longitude >= lon_min && s.longitude <= lon_max && s.latitude >= lat_min &&
           s.latitude <= lat_max;
  }
};

struct ItemTable {
  Eigen::MatrixXd covariates;
  std::vector<Location> locations;

  std::size_t items() const noexcept { return locations.size(); }
  std::size_t covariate_dim() const noexcept { return static_cast<std::size_t>(covariates.cols()); }

  /// Finite entries, consistent shapes, no constant covariate column.
  void validate() const;
  static ItemTable without_covariates(std::vector<Location> locations);
};

/// Ordered break-points theta_1 < ... < theta_{K-1}; theta_0 = -inf and
/// theta_K = +inf are implicit.
class Rubric {
 public:
  Rubric() = default;
  explicit Rubric(Eigen::VectorXd breaks);

  int categories() const noexcept { return static_cast<int>(breaks_.size()) + 1; }
  const Eigen::VectorXd& breaks() const noexcept { return breaks_; }
  /// theta_{k-1}, the lower edge of category k.
  double lower(int k) const noexcept;
  /// theta_k, the upper edge of category k.
  double upper(int k) const noexcept;

  static bool valid_breaks(const Eigen::Ref<const Eigen::VectorXd>& breaks) noexcept;

 private:
  Eigen::VectorXd breaks_;
};

struct FixedRank {
  std::size_t rank = 0;
};
struct VarianceFraction {
  double fraction = 0.99;
};
using RankRule = std::variant<FixedRank, VarianceFraction>;

struct Hyperparameters {
  int rubrics = 20;             // M
  int factors = 0;              // L
  double kappa = 1.0;           // Dirichlet mass, a = kappa / M
  double sigma_theta = 2.0;     // rubric prior scale
  double bandwidth = 1000.0;    // rho
  RankRule rank_rule = VarianceFraction{0.99};
  double sigma_alpha = 1.0;     // fixed
  double gamma_prior_precision = 0.0;  // 0 encodes the flat prior
  int warmup = 4000;
  int samples = 4000;
  int thinning = 4;
  std::uint64_t seed = 1;
  int proposal_refresh = 50;

  double dirichlet_a() const noexcept { return kappa / rubrics; }
  void validate() const;
};

/// One realization of every latent variable and parameter.
struct ModelState {
  std::vector<int> classes;         // C_u in 0..M-1
  Eigen::VectorXd utilities;        // Y over observations
  std::vector<Rubric> rubrics;      // theta^(m)
  Eigen::VectorXd weights;          // omega
  Eigen::MatrixXd alpha;            // U x L
  Eigen::MatrixXd beta;             // I x L
  Eigen::VectorXd gamma;            // p
  Eigen::VectorXd item_effects;     // b, length I
  Eigen::VectorXd eta;              // r
  double sigma_b = 1.0;
  double sigma_beta = 1.0;
  double sigma_eta = 1.0;

  int factors() const noexcept { return static_cast<int>(alpha.cols()); }
};

/// Checks shapes, the simplex constraint on omega, rubric ordering and, when
/// check_utilities is set, that every Y lies inside its assigned cell.
void validate_state(const ModelState& state, const RatingsDataset& data, std::size_t covariate_dim,
                    std::size_t basis_rank, bool check_utilities = true);

}  // namespace mrubric
