#include "mrubric/simulation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "mrubric/analysis.hpp"
#include "mrubric/errors.hpp"
#include "mrubric/io.hpp"
#include "mrubric/model.hpp"
#include "mrubric/parallel.hpp"

namespace mrubric {

namespace {

enum Stream : std::uint64_t {
  kLocations = 1,
  kKnots,
  kCovariates,
  kEffects,
  kSpatial,
  kFactors,
  kClasses,
  kPairs,
  kNoise,
  kPool,
};

void check_simplex(const Eigen::VectorXd& p) {
  if (p.size() == 0 || (p.array() < 0.0).any() || !p.allFinite() || std::abs(p.sum() - 1.0) > 1e-9)
    throw Error(ErrorKind::Configuration, "probability vector is not on the simplex");
}

Location uniform_location(const BoundingBox& box, Rng& rng) {
  return {box.lon_min + (box.lon_max - box.lon_min) * rng.uniform(),
          box.lat_min + (box.lat_max - box.lat_min) * rng.uniform()};
}

}  // namespace

Eigen::VectorXd uniform_probs(int categories) {
  return Eigen::VectorXd::Constant(categories, 1.0 / categories);
}

Eigen::VectorXd peaked_probs() {
  Eigen::VectorXd p(5);
  p << 0.0, 0.25, 0.5, 0.25, 0.0;
  return p;
}

Rubric breakpoints_from_probs(const Eigen::VectorXd& p, std::span<const double> pool) {
  check_simplex(p);
  if (p.size() < 2) throw Error(ErrorKind::Configuration, "need at least two categories");
  double smallest = 1.0;
  for (Eigen::Index k = 0; k < p.size(); ++k)
    if (p(k) > 0.0) smallest = std::min(smallest, p(k));
  if (static_cast<double>(pool.size()) < 10.0 / smallest)
    throw Error(ErrorKind::InsufficientPool,
                "utility pool of " + std::to_string(pool.size()) + " draws is below 10 / min(p) = " +
                    std::to_string(10.0 / smallest));
  std::vector<double> sorted(pool.begin(), pool.end());
  std::sort(sorted.begin(), sorted.end());
  const auto n = static_cast<double>(sorted.size());
  Eigen::VectorXd theta(p.size() - 1);
  double cumulative = 0.0;
  for (Eigen::Index k = 0; k + 1 < p.size(); ++k) {
    cumulative += p(k);
    // inverse of the empirical CDF
    const double position = std::ceil(cumulative * n - 1e-9) - 1.0;
    const auto index = static_cast<std::size_t>(std::clamp(position, 0.0, n - 1.0));
    theta(k) = sorted[index];
    if (k > 0 && theta(k) < theta(k - 1) + 1e-8) theta(k) = theta(k - 1) + 1e-8;
  }
  return Rubric(theta);
}

Rubric tau_rubric(double tau, const Eigen::VectorXd& p1, const Eigen::VectorXd& p2,
                  std::span<const double> pool) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw Error(ErrorKind::Configuration, "tau must lie in [0, 1]");
  return breakpoints_from_probs(tau * p1 + (1.0 - tau) * p2, pool);
}

double tv_distance(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  if (p.size() != q.size()) throw Error(ErrorKind::Configuration, "distributions differ in length");
  return (p - q).cwiseAbs().sum();
}

void SimConfig::validate() const {
  if (items == 0 || users == 0) throw Error(ErrorKind::Configuration, "need items and users");
  if (categories < 2) throw Error(ErrorKind::Configuration, "need at least two categories");
  const std::size_t M = rubrics.empty() ? rubric_probs.size() : rubrics.size();
  if (M == 0) throw Error(ErrorKind::Configuration, "no rubrics or probability vectors given");
  for (const auto& r : rubrics)
    if (r.categories() != categories)
      throw Error(ErrorKind::Configuration, "rubric has the wrong number of categories");
  for (const auto& p : rubric_probs) {
    if (p.size() != categories)
      throw Error(ErrorKind::Configuration, "probability vector has the wrong length");
    check_simplex(p);
  }
  if (weights.size() > 0) {
    if (static_cast<std::size_t>(weights.size()) != M)
      throw Error(ErrorKind::Configuration, "weights and rubrics differ in count");
    check_simplex(weights);
  }
  if (factors < 0) throw Error(ErrorKind::Configuration, "factors must be nonnegative");
  for (double s : {sigma_alpha, sigma_beta, sigma_b, noise_sd, sigma_eta})
    if (!(s >= 0.0) || !std::isfinite(s))
      throw Error(ErrorKind::Configuration, "scales must be finite and nonnegative");
  if (ratings > items * users)
    throw Error(ErrorKind::Configuration, "more ratings requested than (item, user) pairs");
  if (spatial != SpatialTruth::None && basis_rank == 0)
    throw Error(ErrorKind::Configuration, "spatial truth needs a positive basis rank");
}

SimulatedData generate_dataset(const SimConfig& c) {
  c.validate();
  auto rng_for = [&](Stream s) { return Rng::stream(c.seed, 0, s, 0); };
  const auto I = static_cast<Eigen::Index>(c.items);
  const auto U = static_cast<Eigen::Index>(c.users);
  const std::size_t M = c.rubrics.empty() ? c.rubric_probs.size() : c.rubrics.size();
  SimulatedData out;

  Rng rl = rng_for(kLocations);
  out.items.locations.resize(c.items);
  for (auto& s : out.items.locations) s = uniform_location(c.domain, rl);
  const auto p = static_cast<Eigen::Index>(c.gamma.size());
  out.items.covariates.resize(I, p);
  Rng rc = rng_for(kCovariates);
  for (Eigen::Index j = 0; j < out.items.covariates.size(); ++j) out.items.covariates.data()[j] = rc.normal();

  switch (c.spatial) {
    case SpatialTruth::None:
      out.basis = empty_basis(c.items);
      break;
    case SpatialTruth::Radial: {
      std::vector<Location> knots;
      Rng rk = rng_for(kKnots);
      if (c.grid_knots) {
        const auto side = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(c.basis_rank))));
        for (std::size_t a = 0; a < side && knots.size() < c.basis_rank; ++a)
          for (std::size_t b = 0; b < side && knots.size() < c.basis_rank; ++b)
            knots.push_back({c.domain.lon_min + (c.domain.lon_max - c.domain.lon_min) * (a + 0.5) / side,
                             c.domain.lat_min + (c.domain.lat_max - c.domain.lat_min) * (b + 0.5) / side});
      } else {
        for (std::size_t j = 0; j < c.basis_rank; ++j) knots.push_back(uniform_location(c.domain, rk));
      }
      out.basis = radial_basis(out.items.locations, knots, c.bandwidth);
      break;
    }
    case SpatialTruth::Spectral:
      out.basis = build_basis(out.items.locations, c.bandwidth, FixedRank{c.basis_rank});
      break;
  }

  ModelState& t = out.truth;
  t.gamma = c.gamma;
  Rng re = rng_for(kEffects);
  t.sigma_b = c.sigma_b;
  t.item_effects.resize(I);
  for (Eigen::Index i = 0; i < I; ++i) t.item_effects(i) = c.sigma_b * re.normal();
  Rng rs = rng_for(kSpatial);
  t.sigma_eta = c.sigma_eta;
  t.eta.resize(static_cast<Eigen::Index>(out.basis.rank()));
  for (Eigen::Index j = 0; j < t.eta.size(); ++j) t.eta(j) = c.sigma_eta * rs.normal();
  Rng rf = rng_for(kFactors);
  t.sigma_beta = c.sigma_beta;
  t.alpha.resize(U, c.factors);
  for (Eigen::Index j = 0; j < t.alpha.size(); ++j) t.alpha.data()[j] = c.sigma_alpha * rf.normal();
  t.beta.resize(I, c.factors);
  for (Eigen::Index j = 0; j < t.beta.size(); ++j) t.beta.data()[j] = c.sigma_beta * rf.normal();

  t.weights = c.weights.size() > 0 ? c.weights
                                   : Eigen::VectorXd::Constant(static_cast<Eigen::Index>(M), 1.0 / static_cast<double>(M));
  Rng rcl = rng_for(kClasses);
  std::vector<double> log_w(M);
  for (std::size_t m = 0; m < M; ++m) log_w[m] = std::log(t.weights(static_cast<Eigen::Index>(m)));
  t.classes.resize(c.users);
  for (auto& cl : t.classes) cl = static_cast<int>(rcl.categorical_log(log_w));

  // distinct pairs uniformly at random
  Rng rp = rng_for(kPairs);
  const std::uint64_t total = static_cast<std::uint64_t>(c.items) * c.users;
  std::vector<std::uint64_t> keys;
  if (c.ratings * 2 > total) {
    keys.resize(total);
    std::iota(keys.begin(), keys.end(), std::uint64_t{0});
    for (std::size_t j = 0; j < c.ratings; ++j) std::swap(keys[j], keys[j + rp.below(total - j)]);
    keys.resize(c.ratings);
  } else {
    std::unordered_set<std::uint64_t> chosen;
    while (keys.size() < c.ratings) {
      const std::uint64_t k = rp.below(total);
      if (chosen.insert(k).second) keys.push_back(k);
    }
  }
  std::sort(keys.begin(), keys.end());  // user-major order
  std::vector<Rating> ratings;
  ratings.reserve(keys.size());
  for (std::uint64_t k : keys) ratings.push_back({static_cast<std::uint32_t>(k % c.items), static_cast<std::uint32_t>(k / c.items), 1});

  // placeholder rubrics so predictors can be computed before break-points exist
  t.rubrics.assign(M, Rubric(Eigen::VectorXd::LinSpaced(c.categories - 1, -1.0, 1.0)));
  auto mu = [&](std::size_t i, std::size_t u) { return linear_predictor(t, out.basis, out.items, i, u); };

  if (!c.rubrics.empty()) {
    t.rubrics = c.rubrics;
  } else {
    Rng rpool = rng_for(kPool);
    std::vector<double> pool(c.pool_size);
    for (auto& y : pool) {
      const auto i = static_cast<std::size_t>(rpool.below(c.items));
      const auto u = static_cast<std::size_t>(rpool.below(c.users));
      y = mu(i, u) + c.noise_sd * rpool.normal();
    }
    for (std::size_t m = 0; m < M; ++m) t.rubrics[m] = breakpoints_from_probs(c.rubric_probs[m], pool);
    out.rubric_probs = c.rubric_probs;
  }

  Rng rn = rng_for(kNoise);
  t.utilities.resize(static_cast<Eigen::Index>(ratings.size()));
  for (std::size_t n = 0; n < ratings.size(); ++n) {
    Rating& r = ratings[n];
    const double y = mu(r.item, r.user) + c.noise_sd * rn.normal();
    t.utilities(static_cast<Eigen::Index>(n)) = y;
    r.z = category_of(t.rubrics[static_cast<std::size_t>(t.classes[r.user])], y);
  }
  out.data = RatingsDataset(std::move(ratings), c.categories, c.items, c.users);
  return out;
}

Eigen::VectorXd class_rating_distribution(const SimulatedData& sim, int m) {
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(sim.data.categories());
  for (const Rating& r : sim.data.entries())
    if (sim.truth.classes[r.user] == m) counts(r.z - 1) += 1.0;
  const double n = counts.sum();
  return n > 0 ? Eigen::VectorXd(counts / n) : counts;
}

SimConfig tau_study_config(double tau, std::uint64_t seed) {
  SimConfig c;
  c.items = 300;
  c.users = 500;
  c.ratings = 8000;
  c.rubric_probs = {uniform_probs(5), tau * uniform_probs(5) + (1.0 - tau) * peaked_probs()};
  c.weights = Eigen::Vector2d(0.5, 0.5);
  c.factors = 0;
  c.sigma_beta = 0.0;
  c.sigma_b = 0.5;
  c.gamma = Eigen::Vector2d(0.3, -0.2);
  c.spatial = SpatialTruth::Radial;
  c.grid_knots = true;
  c.basis_rank = 36;
  c.bandwidth = 30.0;
  c.sigma_eta = std::sqrt(0.5);
  c.seed = seed;
  return c;
}

namespace {

PosteriorSamples fit_chain(const RatingsDataset& train, const ItemTable& items,
                           const SpatialBasis& basis, const Hyperparameters& hyper, int workers) {
  ChainOptions options;
  options.workers = workers;
  options.keep_factors = true;
  return run_chain(train, items, basis, hyper, options);
}

std::string tau_label(double tau) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "tau=%.2f", tau);
  return buf;
}

}  // namespace

std::vector<TauRow> run_tau_study(std::span<const double> taus, const FitConfig& fit,
                                  std::uint64_t seed, int parallel,
                                  const std::optional<SimConfig>& base) {
  std::vector<TauRow> rows(taus.size());
  parallel_tasks(taus.size(), parallel, [&](std::size_t cell) {
    const double tau = taus[cell];
    const auto started = std::chrono::steady_clock::now();
    try {
      SimConfig config = base ? *base : tau_study_config(tau, seed);
      if (base) {
        config.seed = seed;
        config.rubric_probs = {uniform_probs(config.categories),
                               tau * uniform_probs(config.categories) +
                                   (1.0 - tau) * peaked_probs()};
      }
      const SimulatedData sim = generate_dataset(config);
      auto [train, test] = split_train_test(sim.data, 1.0 - fit.test_fraction, seed ^ 0x5bd1e995ULL);
      const SpatialBasis basis = fit.use_true_basis
                                     ? sim.basis
                                     : build_basis(sim.items.locations, fit.bandwidth, fit.rank_rule);
      Hyperparameters multi = fit.hyper;
      Hyperparameters single = fit.hyper;
      single.rubrics = 1;
      const PosteriorSamples chain_multi = fit_chain(train, sim.items, basis, multi, fit.workers);
      const PosteriorSamples chain_single = fit_chain(train, sim.items, basis, single, fit.workers);
      const std::vector<char> seen = seen_users(train);
      const HeldoutResult hm = heldout_loglik(chain_multi, test, sim.items, basis, seen);
      const HeldoutResult hs = heldout_loglik(chain_single, test, sim.items, basis, seen);

      TauRow& row = rows[cell];
      row.tau = tau;
      row.seed = seed;
      row.heldout_multi = hm.mean;
      row.heldout_single = hs.mean;
      const auto n = static_cast<double>(hm.per_pair.size());
      double mean = 0.0, sq = 0.0;
      for (std::size_t j = 0; j < hm.per_pair.size(); ++j) mean += hm.per_pair[j] - hs.per_pair[j];
      mean /= n;
      for (std::size_t j = 0; j < hm.per_pair.size(); ++j)
        sq += std::pow(hm.per_pair[j] - hs.per_pair[j] - mean, 2);
      row.delta = mean;
      row.delta_se = n > 1 ? std::sqrt(sq / (n - 1) / n) : 0.0;
      row.correct_assignment = matched_accuracy(sim.truth.classes, modal_assignment(chain_multi));
      Eigen::VectorXd occ = occupancy(chain_multi.draws.back());
      std::sort(occ.data(), occ.data() + occ.size(), std::greater<>());
      row.occupancy = occ;
      row.top_two_occupancy = occ.size() >= 2 ? occ(0) + occ(1) : occ.sum();

      const Eigen::MatrixXd pi = coclustering(chain_multi);
      const std::vector<int> partition = binder_cluster(chain_multi, pi);
      const auto profiles = rubric_profile(partition, multi.rubrics, sim.data);
      std::vector<std::size_t> order(profiles.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return profiles[a].users > profiles[b].users;
      });
      for (std::size_t j = 0; j < std::min<std::size_t>(2, order.size()); ++j)
        if (profiles[order[j]].defined()) row.profiles.push_back(profiles[order[j]].proportions);
      row.true_probs = sim.rubric_probs;
      row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    } catch (const Error& e) {
      throw Error(e.kind(), tau_label(tau) + ": " + e.what());
    }
  });
  return rows;
}

SimConfig factor_study_config(std::uint64_t seed) {
  SimConfig c;
  c.items = 200;
  c.users = 200;
  c.ratings = 3981;
  c.rubric_probs = {uniform_probs(5), peaked_probs(), 0.5 * uniform_probs(5) + 0.5 * peaked_probs()};
  c.weights = Eigen::Vector3d::Constant(1.0 / 3.0);
  c.factors = 4;
  c.sigma_alpha = 2.0;
  c.sigma_beta = 5.0;
  c.sigma_b = 3.0;
  c.spatial = SpatialTruth::Radial;
  c.basis_rank = 20;
  c.bandwidth = 30.0;
  c.sigma_eta = std::sqrt(3.0);
  c.seed = seed;
  return c;
}

FactorStudy run_factor_recovery_study(const FitConfig& fit, std::uint64_t seed, int max_factors,
                                      int parallel, const std::optional<SimConfig>& base,
                                      std::size_t zeta_item_count) {
  if (max_factors < 1) throw Error(ErrorKind::Configuration, "max_factors must be at least 1");
  SimConfig config = base ? *base : factor_study_config(seed);
  config.seed = seed;
  const SimulatedData sim = generate_dataset(config);
  auto [train, test] = split_train_test(sim.data, 1.0 - fit.test_fraction, seed ^ 0x5bd1e995ULL);
  const SpatialBasis basis = fit.use_true_basis
                                 ? sim.basis
                                 : build_basis(sim.items.locations, fit.bandwidth, fit.rank_rule);
  const std::vector<char> seen = seen_users(train);

  FactorStudy study;
  study.rows.resize(static_cast<std::size_t>(max_factors));
  std::vector<PosteriorSamples> chains(static_cast<std::size_t>(max_factors));
  const int true_factors = config.factors;
  parallel_tasks(static_cast<std::size_t>(max_factors), parallel, [&](std::size_t j) {
    const auto started = std::chrono::steady_clock::now();
    Hyperparameters h = fit.hyper;
    h.factors = static_cast<int>(j) + 1;
    try {
      PosteriorSamples chain = fit_chain(train, sim.items, basis, h, fit.workers);
      FactorRow& row = study.rows[j];
      row.factors = h.factors;
      row.seed = seed;
      row.heldout = heldout_loglik(chain, test, sim.items, basis, seen).mean;
      row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      if (h.factors == true_factors) chains[j] = std::move(chain);
    } catch (const Error& e) {
      throw Error(e.kind(), "L=" + std::to_string(h.factors) + ": " + e.what());
    }
  });
  study.best_factors = std::max_element(study.rows.begin(), study.rows.end(),
                                        [](const FactorRow& a, const FactorRow& b) {
                                          return a.heldout < b.heldout;
                                        })->factors;

  if (true_factors >= 1 && true_factors <= max_factors) {
    const PosteriorSamples& chain = chains[static_cast<std::size_t>(true_factors - 1)];
    Rng rng = Rng::stream(seed, 0, 99, 0);
    std::vector<std::size_t> all(config.items);
    std::iota(all.begin(), all.end(), std::size_t{0});
    for (std::size_t j = all.size(); j > 1; --j) std::swap(all[j - 1], all[rng.below(j)]);
    all.resize(std::min(zeta_item_count, all.size()));
    std::sort(all.begin(), all.end());
    study.zeta_items = all;
    study.zeta.resize(static_cast<Eigen::Index>(chain.draws.size()), static_cast<Eigen::Index>(all.size()));
    for (std::size_t t = 0; t < chain.draws.size(); ++t)
      for (std::size_t j = 0; j < all.size(); ++j)
        study.zeta(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) =
            chain.draws[t].beta(static_cast<Eigen::Index>(all[j]), 0) / chain.draws[t].sigma_beta;
  }
  return study;
}

}  // namespace mrubric
