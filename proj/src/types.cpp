#include "mrubric/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mrubric/errors.hpp"

namespace mrubric {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::CategoryRange: return "category-range";
    case ErrorKind::Configuration: return "configuration";
    case ErrorKind::Interval: return "interval";
    case ErrorKind::Rank: return "rank";
    case ErrorKind::InvalidState: return "invalid-state";
    case ErrorKind::InsufficientPool: return "insufficient-pool";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::FilterTooStrict: return "filter-too-strict";
    case ErrorKind::DigestMismatch: return "digest-mismatch";
    case ErrorKind::VersionMismatch: return "version-mismatch";
    case ErrorKind::Io: return "io";
    case ErrorKind::DegenerateKernel: return "degenerate-kernel";
    case ErrorKind::RankDeficiency: return "rank-deficiency";
    case ErrorKind::NumericalDegeneracy: return "numerical-degeneracy";
    case ErrorKind::StateCorruption: return "state-corruption";
  }
  return "unknown";
}

namespace {

void build_csr(std::size_t groups, const std::vector<std::size_t>& keys,
               std::vector<std::size_t>& offsets, std::vector<std::size_t>& index) {
  offsets.assign(groups + 1, 0);
  for (std::size_t key : keys) ++offsets[key + 1];
  for (std::size_t g = 0; g < groups; ++g) offsets[g + 1] += offsets[g];
  index.assign(keys.size(), 0);
  std::vector<std::size_t> cursor(offsets.begin(), offsets.end() - 1);
  for (std::size_t obs = 0; obs < keys.size(); ++obs) index[cursor[keys[obs]]++] = obs;
}

}  // namespace

RatingsDataset::RatingsDataset(std::vector<Rating> entries, int categories, std::size_t items,
                               std::size_t users)
    : entries_(std::move(entries)), categories_(categories), items_(items), users_(users) {
  if (categories_ < 2)
    throw Error(ErrorKind::Configuration, "category count must be at least 2");
  std::vector<std::size_t> by_user(entries_.size()), by_item(entries_.size());
  for (std::size_t obs = 0; obs < entries_.size(); ++obs) {
    const Rating& r = entries_[obs];
    if (r.z < 1 || r.z > categories_)
      throw Error(ErrorKind::CategoryRange, "rating " + std::to_string(r.z) +
                                                " outside 1.." + std::to_string(categories_) +
                                                " at observation " + std::to_string(obs));
    if (r.item >= items_ || r.user >= users_)
      throw Error(ErrorKind::InvalidState,
                  "observation " + std::to_string(obs) + " has out-of-range item or user index");
    by_user[obs] = r.user;
    by_item[obs] = r.item;
  }
  build_csr(users_, by_user, user_offsets_, user_index_);
  build_csr(items_, by_item, item_offsets_, item_index_);

  for (std::size_t u = 0; u < users_; ++u) {
    auto obs = user_entries(u);
    std::vector<std::uint32_t> seen;
    seen.reserve(obs.size());
    for (std::size_t o : obs) seen.push_back(entries_[o].item);
    std::sort(seen.begin(), seen.end());
    if (std::adjacent_find(seen.begin(), seen.end()) != seen.end())
      throw Error(ErrorKind::InvalidState,
                  "duplicate (item, user) pair for user " + std::to_string(u));
  }
}

void RatingsDataset::set_rating(std::size_t obs, int z) {
  if (z < 1 || z > categories_)
    throw Error(ErrorKind::CategoryRange, "rating " + std::to_string(z) + " out of range");
  entries_.at(obs).z = z;
}

RatingsDataset RatingsDataset::subset(std::span<const std::size_t> observations) const {
  std::vector<Rating> kept;
  kept.reserve(observations.size());
  for (std::size_t o : observations) kept.push_back(entries_.at(o));
  return RatingsDataset(std::move(kept), categories_, items_, users_);
}

void ItemTable::validate() const {
  const auto n = static_cast<Eigen::Index>(locations.size());
  if (covariates.rows() != n && !(covariates.cols() == 0))
    throw Error(ErrorKind::Configuration, "covariate rows do not match item count");
  for (const Location& s : locations)
    if (!std::isfinite(s.longitude) || !std::isfinite(s.latitude))
      throw Error(ErrorKind::Configuration, "non-finite item location");
  if (!covariates.allFinite())
    throw Error(ErrorKind::Configuration, "non-finite covariate value");
  for (Eigen::Index j = 0; j < covariates.cols(); ++j) {
    const auto col = covariates.col(j);
    if (n > 0 && (col.array() == col(0)).all())
      throw Error(ErrorKind::Configuration,
                  "covariate column " + std::to_string(j) +
                      " is constant (an intercept is confounded with the break-points)");
  }
}

ItemTable ItemTable::without_covariates(std::vector<Location> locations) {
  ItemTable table;
  table.covariates = Eigen::MatrixXd(static_cast<Eigen::Index>(locations.size()), 0);
  table.locations = std::move(locations);
  return table;
}

Rubric::Rubric(Eigen::VectorXd breaks) : breaks_(std::move(breaks)) {
  if (!valid_breaks(breaks_))
    throw Error(ErrorKind::InvalidState, "rubric break-points must be finite and strictly increasing");
}

bool Rubric::valid_breaks(const Eigen::Ref<const Eigen::VectorXd>& breaks) noexcept {
  for (Eigen::Index k = 0; k < breaks.size(); ++k) {
    if (!std::isfinite(breaks(k))) return false;
    if (k > 0 && !(breaks(k) > breaks(k - 1))) return false;
  }
  return true;
}

double Rubric::lower(int k) const noexcept {
  return k <= 1 ? -std::numeric_limits<double>::infinity() : breaks_(k - 2);
}

double Rubric::upper(int k) const noexcept {
  return k >= categories() ? std::numeric_limits<double>::infinity() : breaks_(k - 1);
}

void Hyperparameters::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::Configuration, msg); };
  if (rubrics < 1) fail("rubric count M must be >= 1");
  if (factors < 0) fail("factor dimension L must be >= 0");
  if (!(kappa > 0.0)) fail("kappa must be positive");
  if (!(sigma_theta > 0.0)) fail("sigma_theta must be positive");
  if (!(bandwidth > 0.0)) fail("bandwidth rho must be positive");
  if (sigma_alpha != 1.0) fail("sigma_alpha is fixed at 1");
  if (!(gamma_prior_precision >= 0.0)) fail("gamma prior precision must be >= 0");
  if (warmup < 0 || samples < 0) fail("warmup and samples must be >= 0");
  if (thinning < 1) fail("thinning must be >= 1");
  if (proposal_refresh < 1) fail("proposal refresh cadence must be >= 1");
  if (const auto* f = std::get_if<VarianceFraction>(&rank_rule))
    if (!(f->fraction > 0.0 && f->fraction <= 1.0)) fail("variance fraction must lie in (0, 1]");
}

void validate_state(const ModelState& s, const RatingsDataset& data, std::size_t covariate_dim,
                    std::size_t basis_rank, bool check_utilities) {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::InvalidState, msg); };
  const auto M = static_cast<Eigen::Index>(s.rubrics.size());
  if (M < 1) fail("state has no rubrics");
  if (s.weights.size() != M) fail("weight vector length differs from rubric count");
  if ((s.weights.array() < 0.0).any() || std::abs(s.weights.sum() - 1.0) > 1e-12)
    fail("mixture weights are not on the simplex");
  for (const Rubric& r : s.rubrics) {
    if (r.categories() != data.categories()) fail("rubric has wrong number of break-points");
    if (!Rubric::valid_breaks(r.breaks())) fail("rubric break-points not strictly increasing");
  }
  if (s.classes.size() != data.users()) fail("class vector length differs from user count");
  for (int c : s.classes)
    if (c < 0 || c >= M) fail("rubric assignment out of range");
  const auto I = static_cast<Eigen::Index>(data.items());
  const auto U = static_cast<Eigen::Index>(data.users());
  if (s.alpha.rows() != U || s.beta.rows() != I || s.alpha.cols() != s.beta.cols())
    fail("latent factor shapes are inconsistent");
  if (s.gamma.size() != static_cast<Eigen::Index>(covariate_dim))
    throw Error(ErrorKind::Configuration, "gamma length differs from covariate dimension");
  if (s.eta.size() != static_cast<Eigen::Index>(basis_rank))
    throw Error(ErrorKind::Configuration, "eta length differs from basis rank");
  if (s.item_effects.size() != I) fail("item effect length differs from item count");
  if (!(s.sigma_b > 0.0) || !(s.sigma_beta > 0.0) || !(s.sigma_eta > 0.0))
    fail("variance scales must be positive");
  if (!check_utilities) return;
  if (s.utilities.size() != static_cast<Eigen::Index>(data.size()))
    fail("utility vector length differs from observation count");
  for (std::size_t obs = 0; obs < data.size(); ++obs) {
    const Rating& r = data.entries()[obs];
    const Rubric& rubric = s.rubrics[static_cast<std::size_t>(s.classes[r.user])];
    const double y = s.utilities(static_cast<Eigen::Index>(obs));
    if (!(y > rubric.lower(r.z) && y < rubric.upper(r.z)))
      fail("latent utility for observation " + std::to_string(obs) + " lies outside its cell");
  }
}

}  // namespace mrubric
