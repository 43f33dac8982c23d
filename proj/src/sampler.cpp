#include "mrubric/sampler.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <iostream>
#include <limits>
#include <string>

#include "mrubric/errors.hpp"
#include "mrubric/kernels.hpp"
#include "mrubric/model.hpp"
#include "mrubric/parallel.hpp"

namespace mrubric {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

template <typename Derived>
bool same_bits(const Eigen::DenseBase<Derived>& a, const Eigen::DenseBase<Derived>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  const typename Derived::PlainObject pa = a, pb = b;
  return std::memcmp(pa.data(), pb.data(), sizeof(double) * static_cast<std::size_t>(pa.size())) == 0;
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

double half_normal(Rng& rng) {
  double s = 0.0;
  while (!(s > 0.0)) s = std::abs(rng.normal());
  return s;
}

}  // namespace

bool bitwise_equal(const Draw& a, const Draw& b) {
  return a.classes == b.classes && same_bits(a.weights, b.weights) &&
         same_bits(a.rubrics, b.rubrics) && same_bits(a.gamma, b.gamma) &&
         same_bits(a.item_effects, b.item_effects) && same_bits(a.eta, b.eta) &&
         same_bits(a.sigma_b, b.sigma_b) && same_bits(a.sigma_beta, b.sigma_beta) &&
         same_bits(a.sigma_eta, b.sigma_eta) && same_bits(a.alpha, b.alpha) &&
         same_bits(a.beta, b.beta) && same_bits(a.loglik, b.loglik);
}

bool bitwise_equal(const PosteriorSamples& a, const PosteriorSamples& b) {
  const ChainMetadata& x = a.meta;
  const ChainMetadata& y = b.meta;
  const bool meta_equal =
      x.seed == y.seed && x.warmup == y.warmup && x.samples == y.samples &&
      x.thinning == y.thinning && x.categories == y.categories && x.items == y.items &&
      x.users == y.users && x.rubrics == y.rubrics && x.factors == y.factors &&
      x.covariates == y.covariates && x.basis_rank == y.basis_rank &&
      x.factors_kept == y.factors_kept && x.laplace_fallbacks == y.laplace_fallbacks &&
      x.acceptance_rates.size() == y.acceptance_rates.size() &&
      std::equal(x.acceptance_rates.begin(), x.acceptance_rates.end(), y.acceptance_rates.begin(),
                 [](double p, double q) { return same_bits(p, q); });
  if (!meta_equal || a.draws.size() != b.draws.size()) return false;
  for (std::size_t t = 0; t < a.draws.size(); ++t)
    if (!bitwise_equal(a.draws[t], b.draws[t])) return false;
  return true;
}

GibbsSampler::GibbsSampler(RatingsDataset data, ItemTable items, SpatialBasis basis,
                           Hyperparameters hyper, ChainOptions options)
    : data_(std::move(data)), items_(std::move(items)), basis_(std::move(basis)),
      hyper_(std::move(hyper)), options_(std::move(options)) {
  hyper_.validate();
  items_.validate();
  if (items_.items() != data_.items())
    throw Error(ErrorKind::Configuration, "item table has " + std::to_string(items_.items()) +
                                              " rows but the dataset has " +
                                              std::to_string(data_.items()) + " items");
  if (basis_.sites() != data_.items())
    throw Error(ErrorKind::Configuration, "basis has " + std::to_string(basis_.sites()) +
                                              " rows but the dataset has " +
                                              std::to_string(data_.items()) + " items");

  const auto p = static_cast<Eigen::Index>(items_.covariate_dim());
  const auto r = static_cast<Eigen::Index>(basis_.rank());
  ws_.covariate_gram = Eigen::MatrixXd::Zero(p, p);
  ws_.basis_gram = Eigen::MatrixXd::Zero(r, r);
  for (std::size_t i = 0; i < data_.items(); ++i) {
    const auto n = static_cast<double>(data_.item_entries(i).size());
    if (n == 0.0) continue;
    const auto ii = static_cast<Eigen::Index>(i);
    if (p > 0) ws_.covariate_gram.noalias() += n * items_.covariates.row(ii).transpose() * items_.covariates.row(ii);
    if (r > 0) ws_.basis_gram.noalias() += n * basis_.design.row(ii).transpose() * basis_.design.row(ii);
  }
  if (p > 0 && hyper_.gamma_prior_precision == 0.0) {
    // flat prior on gamma needs X of full column rank
    GaussianPosterior check(ws_.covariate_gram, Eigen::VectorXd::Zero(p),
                            Eigen::MatrixXd::Zero(p, p), "gamma");
  }
  const auto M = static_cast<std::size_t>(hyper_.rubrics);
  ws_.proposals.assign(M, LaplaceProposal{});
  ws_.accepted.assign(M, 0);
  ws_.attempted.assign(M, 0);
}

bool GibbsSampler::frozen(Block b) const {
  return std::find(options_.frozen.begin(), options_.frozen.end(), b) != options_.frozen.end();
}

Rng GibbsSampler::stream(Block b, std::uint64_t entity) const {
  return Rng::stream(hyper_.seed, iteration_, static_cast<std::uint64_t>(b), entity);
}

void GibbsSampler::initialize() {
  const int M = hyper_.rubrics;
  const int K = data_.categories();
  const auto L = static_cast<Eigen::Index>(hyper_.factors);
  const auto I = static_cast<Eigen::Index>(data_.items());
  const auto U = static_cast<Eigen::Index>(data_.users());
  const auto p = static_cast<Eigen::Index>(items_.covariate_dim());
  const auto r = static_cast<Eigen::Index>(basis_.rank());
  Rng rng = Rng::stream(hyper_.seed, 0, static_cast<std::uint64_t>(Block::Initialization), 0);

  ModelState s;
  s.sigma_b = half_normal(rng);
  s.sigma_beta = half_normal(rng);
  s.sigma_eta = half_normal(rng);
  s.alpha.resize(U, L);
  for (Eigen::Index j = 0; j < s.alpha.size(); ++j) s.alpha.data()[j] = hyper_.sigma_alpha * rng.normal();
  s.beta.resize(I, L);
  for (Eigen::Index j = 0; j < s.beta.size(); ++j) s.beta.data()[j] = s.sigma_beta * rng.normal();
  s.item_effects.resize(I);
  for (Eigen::Index i = 0; i < I; ++i) s.item_effects(i) = s.sigma_b * rng.normal();
  s.eta.resize(r);
  for (Eigen::Index j = 0; j < r; ++j) s.eta(j) = s.sigma_eta * rng.normal();
  s.gamma = Eigen::VectorXd::Zero(p);
  if (hyper_.gamma_prior_precision > 0.0)
    for (Eigen::Index j = 0; j < p; ++j)
      s.gamma(j) = rng.normal() / std::sqrt(hyper_.gamma_prior_precision);
  for (int m = 0; m < M; ++m) s.rubrics.push_back(sample_rubric_prior(K, hyper_.sigma_theta, rng));
  s.weights.resize(M);
  const std::vector<double> ones(static_cast<std::size_t>(M), 1.0);
  rng.dirichlet(ones, {s.weights.data(), static_cast<std::size_t>(M)});
  s.classes.resize(static_cast<std::size_t>(U));
  std::vector<double> log_w(static_cast<std::size_t>(M));
  for (int m = 0; m < M; ++m) log_w[static_cast<std::size_t>(m)] = std::log(s.weights(m));
  for (auto& c : s.classes) c = static_cast<int>(rng.categorical_log(log_w));

  state_ = std::move(s);
  recompute_predictors();
  state_.utilities.resize(static_cast<Eigen::Index>(data_.size()));
  for (std::size_t obs = 0; obs < data_.size(); ++obs) {
    const Rating& rt = data_.entries()[obs];
    const Rubric& rubric = state_.rubrics[static_cast<std::size_t>(state_.classes[rt.user])];
    Rng local = Rng::stream(hyper_.seed, 0, static_cast<std::uint64_t>(Block::Initialization), obs + 1);
    state_.utilities(static_cast<Eigen::Index>(obs)) = sample_truncated_gaussian(
        ws_.mu(static_cast<Eigen::Index>(obs)), 1.0, rubric.lower(rt.z), rubric.upper(rt.z), local);
  }
}

void GibbsSampler::set_state(ModelState state, bool check_utilities) {
  validate_state(state, data_, items_.covariate_dim(), basis_.rank(), check_utilities);
  if (state.rubrics.size() != static_cast<std::size_t>(hyper_.rubrics) ||
      state.factors() != hyper_.factors)
    throw Error(ErrorKind::Configuration, "state dimensions differ from the hyperparameters");
  state_ = std::move(state);
  recompute_predictors();
}

void GibbsSampler::set_utilities(Eigen::VectorXd utilities) {
  if (utilities.size() != static_cast<Eigen::Index>(data_.size()))
    throw Error(ErrorKind::Configuration, "utility vector length differs from observation count");
  state_.utilities = std::move(utilities);
}

void GibbsSampler::restore(const ChainCheckpoint& cp) {
  // the rubric update moves break-points with Y integrated out, so Y may sit outside the
  // new cells until the next sweep redraws it
  set_state(cp.state, false);
  if (cp.predictors.size() == ws_.mu.size()) {
    if (!((cp.predictors - ws_.mu).lpNorm<Eigen::Infinity>() <= 1e-8))
      throw Error(ErrorKind::StateCorruption, "checkpoint predictors disagree with its state");
    ws_.mu = cp.predictors;
  }
  iteration_ = cp.iteration;
  ws_.proposals = cp.proposals;
  ws_.accepted = cp.accepted;
  ws_.attempted = cp.attempted;
  ws_.fallbacks = cp.fallbacks;
}

ChainCheckpoint GibbsSampler::checkpoint() const {
  ChainCheckpoint cp;
  cp.iteration = iteration_;
  cp.state = state_;
  cp.predictors = ws_.mu;
  cp.proposals = ws_.proposals;
  cp.accepted = ws_.accepted;
  cp.attempted = ws_.attempted;
  cp.fallbacks = ws_.fallbacks;
  return cp;
}

void GibbsSampler::recompute_predictors() {
  ws_.mu = linear_predictors(state_, basis_, items_, data_);
}

double GibbsSampler::max_cache_error() const {
  const Eigen::VectorXd fresh = linear_predictors(state_, basis_, items_, data_);
  if (fresh.size() == 0) return 0.0;
  return (fresh - ws_.mu).cwiseAbs().maxCoeff();
}

double GibbsSampler::current_loglik() const {
  double total = 0.0;
  for (std::size_t obs = 0; obs < data_.size(); ++obs) {
    const Rating& r = data_.entries()[obs];
    const Rubric& rubric = state_.rubrics[static_cast<std::size_t>(state_.classes[r.user])];
    total += log_cell_probability_unchecked(rubric, r.z, ws_.mu(static_cast<Eigen::Index>(obs)));
  }
  return total;
}

void GibbsSampler::sweep() {
  if (!frozen(Block::Classes)) update_latent_classes();
  if (!frozen(Block::Utilities)) update_latent_utilities();
  if (!frozen(Block::UserFactors)) update_user_factors();
  if (!frozen(Block::ItemFactors)) update_item_factors();
  if (!frozen(Block::Regression)) update_regression();
  if (!frozen(Block::ItemEffects)) update_item_effects();
  if (!frozen(Block::Spatial)) update_spatial();
  if (!frozen(Block::Weights)) update_mixture_weights();
  update_scales();
  if (!frozen(Block::Rubrics)) update_rubrics();
  ++iteration_;
}

// C_u with weights omega_m * prod_{i in I_u} w_{iu Z_iu}(theta^(m)).
void GibbsSampler::update_latent_classes() {
  const int M = hyper_.rubrics;
  std::vector<double> log_omega(static_cast<std::size_t>(M));
  for (int m = 0; m < M; ++m)
    log_omega[static_cast<std::size_t>(m)] =
        state_.weights(m) > 0.0 ? std::log(state_.weights(m)) : kNegInf;

  parallel_for(data_.users(), options_.workers, [&](std::size_t begin, std::size_t end) {
    std::vector<double> log_w(static_cast<std::size_t>(M));
    for (std::size_t u = begin; u < end; ++u) {
      const auto obs = data_.user_entries(u);
      for (int m = 0; m < M; ++m) {
        double lw = log_omega[static_cast<std::size_t>(m)];
        if (lw == kNegInf) {
          log_w[static_cast<std::size_t>(m)] = lw;
          continue;
        }
        const Rubric& rubric = state_.rubrics[static_cast<std::size_t>(m)];
        for (std::size_t o : obs)
          lw += log_cell_probability_unchecked(rubric, data_.entries()[o].z,
                                               ws_.mu(static_cast<Eigen::Index>(o)));
        log_w[static_cast<std::size_t>(m)] = lw;
      }
      Rng rng = stream(Block::Classes, u);
      const std::size_t c = rng.categorical_log(log_w);
      if (c >= log_w.size())
        throw Error(ErrorKind::NumericalDegeneracy,
                    "all rubric log-weights are -inf for user " + std::to_string(u) +
                        " at iteration " + std::to_string(iteration_));
      state_.classes[u] = static_cast<int>(c);
    }
  });
}

// Y_iu ~ TruncGau(mu_iu, 1, theta_{Z-1}^(C_u), theta_Z^(C_u)).
void GibbsSampler::update_latent_utilities() {
  if (state_.utilities.size() != static_cast<Eigen::Index>(data_.size()))
    state_.utilities.resize(static_cast<Eigen::Index>(data_.size()));
  parallel_for(data_.size(), options_.workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t obs = begin; obs < end; ++obs) {
      const Rating& r = data_.entries()[obs];
      const Rubric& rubric = state_.rubrics[static_cast<std::size_t>(state_.classes[r.user])];
      Rng rng = stream(Block::Utilities, obs);
      const auto o = static_cast<Eigen::Index>(obs);
      state_.utilities(o) =
          sample_truncated_gaussian(ws_.mu(o), 1.0, rubric.lower(r.z), rubric.upper(r.z), rng);
    }
  });
}

// alpha_u given R^(alpha) = Y - mu + alpha_u^T beta_i over i in I_u.
void GibbsSampler::update_user_factors() {
  const auto L = static_cast<Eigen::Index>(hyper_.factors);
  if (L == 0) return;
  const Eigen::MatrixXd prior =
      Eigen::MatrixXd::Identity(L, L) / (hyper_.sigma_alpha * hyper_.sigma_alpha);
  parallel_for(data_.users(), options_.workers, [&](std::size_t begin, std::size_t end) {
    Eigen::MatrixXd gram(L, L);
    Eigen::VectorXd rhs(L);
    for (std::size_t u = begin; u < end; ++u) {
      const auto uu = static_cast<Eigen::Index>(u);
      const auto obs = data_.user_entries(u);
      gram.setZero();
      rhs.setZero();
      const Eigen::VectorXd old = state_.alpha.row(uu).transpose();
      for (std::size_t o : obs) {
        const auto oo = static_cast<Eigen::Index>(o);
        const auto row = state_.beta.row(data_.entries()[o].item);
        const double residual = state_.utilities(oo) - ws_.mu(oo) + row.dot(old);
        gram.noalias() += row.transpose() * row;
        rhs.noalias() += residual * row.transpose();
      }
      Rng rng = stream(Block::UserFactors, u);
      const Eigen::VectorXd fresh = GaussianPosterior(gram, rhs, prior, "alpha").draw(rng);
      const Eigen::VectorXd change = fresh - old;
      for (std::size_t o : obs)
        ws_.mu(static_cast<Eigen::Index>(o)) += state_.beta.row(data_.entries()[o].item).dot(change);
      state_.alpha.row(uu) = fresh.transpose();
    }
  });
}

// beta_i given R^(beta) = Y - mu + alpha_u^T beta_i over u in U_i.
void GibbsSampler::update_item_factors() {
  const auto L = static_cast<Eigen::Index>(hyper_.factors);
  if (L == 0) return;
  const Eigen::MatrixXd prior =
      Eigen::MatrixXd::Identity(L, L) / (state_.sigma_beta * state_.sigma_beta);
  parallel_for(data_.items(), options_.workers, [&](std::size_t begin, std::size_t end) {
    Eigen::MatrixXd gram(L, L);
    Eigen::VectorXd rhs(L);
    for (std::size_t i = begin; i < end; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      const auto obs = data_.item_entries(i);
      gram.setZero();
      rhs.setZero();
      const Eigen::VectorXd old = state_.beta.row(ii).transpose();
      for (std::size_t o : obs) {
        const auto oo = static_cast<Eigen::Index>(o);
        const auto row = state_.alpha.row(data_.entries()[o].user);
        const double residual = state_.utilities(oo) - ws_.mu(oo) + row.dot(old);
        gram.noalias() += row.transpose() * row;
        rhs.noalias() += residual * row.transpose();
      }
      Rng rng = stream(Block::ItemFactors, i);
      const Eigen::VectorXd fresh = GaussianPosterior(gram, rhs, prior, "beta").draw(rng);
      const Eigen::VectorXd change = fresh - old;
      for (std::size_t o : obs)
        ws_.mu(static_cast<Eigen::Index>(o)) += state_.alpha.row(data_.entries()[o].user).dot(change);
      state_.beta.row(ii) = fresh.transpose();
    }
  });
}

// gamma given R^(gamma) = Y - mu + x_i^T gamma (flat prior by default).
void GibbsSampler::update_regression() {
  const auto p = static_cast<Eigen::Index>(items_.covariate_dim());
  if (p == 0) return;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p);
  for (std::size_t i = 0; i < data_.items(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const double fit = items_.covariates.row(ii).dot(state_.gamma);
    double total = 0.0;
    for (std::size_t o : data_.item_entries(i)) {
      const auto oo = static_cast<Eigen::Index>(o);
      total += state_.utilities(oo) - ws_.mu(oo) + fit;
    }
    rhs.noalias() += total * items_.covariates.row(ii).transpose();
  }
  const Eigen::MatrixXd prior = hyper_.gamma_prior_precision * Eigen::MatrixXd::Identity(p, p);
  Rng rng = stream(Block::Regression, 0);
  const Eigen::VectorXd fresh = GaussianPosterior(ws_.covariate_gram, rhs, prior, "gamma").draw(rng);
  const Eigen::VectorXd change = fresh - state_.gamma;
  for (std::size_t i = 0; i < data_.items(); ++i) {
    const double shift = items_.covariates.row(static_cast<Eigen::Index>(i)).dot(change);
    for (std::size_t o : data_.item_entries(i)) ws_.mu(static_cast<Eigen::Index>(o)) += shift;
  }
  state_.gamma = fresh;
}

// b_i ~ Gau(v sum R^(b), v), v = (sigma_b^-2 + |U_i|)^-1.
void GibbsSampler::update_item_effects() {
  const double prior = 1.0 / (state_.sigma_b * state_.sigma_b);
  parallel_for(data_.items(), options_.workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      const auto obs = data_.item_entries(i);
      const double old = state_.item_effects(ii);
      double total = 0.0;
      for (std::size_t o : obs) {
        const auto oo = static_cast<Eigen::Index>(o);
        total += state_.utilities(oo) - ws_.mu(oo) + old;
      }
      const double variance = 1.0 / (prior + static_cast<double>(obs.size()));
      Rng rng = stream(Block::ItemEffects, i);
      const double fresh = variance * total + std::sqrt(variance) * rng.normal();
      for (std::size_t o : obs) ws_.mu(static_cast<Eigen::Index>(o)) += fresh - old;
      state_.item_effects(ii) = fresh;
    }
  });
}

// eta given R^(eta) = Y - mu + psi(s_i)^T eta, prior Gau(0, sigma_eta^2 I).
void GibbsSampler::update_spatial() {
  const auto r = static_cast<Eigen::Index>(basis_.rank());
  if (r == 0) return;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(r);
  for (std::size_t i = 0; i < data_.items(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const double fit = basis_.design.row(ii).dot(state_.eta);
    double total = 0.0;
    for (std::size_t o : data_.item_entries(i)) {
      const auto oo = static_cast<Eigen::Index>(o);
      total += state_.utilities(oo) - ws_.mu(oo) + fit;
    }
    if (total != 0.0) rhs.noalias() += total * basis_.design.row(ii).transpose();
  }
  const Eigen::MatrixXd prior =
      Eigen::MatrixXd::Identity(r, r) / (state_.sigma_eta * state_.sigma_eta);
  Rng rng = stream(Block::Spatial, 0);
  const Eigen::VectorXd fresh = GaussianPosterior(ws_.basis_gram, rhs, prior, "eta").draw(rng);
  const Eigen::VectorXd change = fresh - state_.eta;
  for (std::size_t i = 0; i < data_.items(); ++i) {
    const double shift = basis_.design.row(static_cast<Eigen::Index>(i)).dot(change);
    for (std::size_t o : data_.item_entries(i)) ws_.mu(static_cast<Eigen::Index>(o)) += shift;
  }
  state_.eta = fresh;
}

// omega ~ Dirichlet(a + n_1, ..., a + n_M).
void GibbsSampler::update_mixture_weights() {
  std::vector<std::size_t> counts(static_cast<std::size_t>(hyper_.rubrics), 0);
  for (int c : state_.classes) ++counts[static_cast<std::size_t>(c)];
  Rng rng = stream(Block::Weights, 0);
  state_.weights = sample_mixture_weights(counts, hyper_.dirichlet_a(), rng);
}

// Slice updates of sigma_b^2, sigma_beta^2, sigma_eta^2, each
// leaving Ga(v | 0.5, 0.5) prod Gau(. | 0, v) invariant.
void GibbsSampler::update_scales() {
  auto update = [&](Block block, double& sigma, double sum_squares, std::size_t n) {
    if (frozen(block)) return;
    Rng rng = stream(block, 0);
    const double variance = slice_sample_variance(
        [&](double v) { return log_variance_target(v, sum_squares, n); }, sigma * sigma, rng);
    sigma = std::sqrt(variance);
  };
  update(Block::ScaleB, state_.sigma_b, state_.item_effects.squaredNorm(), data_.items());
  update(Block::ScaleBeta, state_.sigma_beta, state_.beta.squaredNorm(),
         static_cast<std::size_t>(state_.beta.size()));
  update(Block::ScaleEta, state_.sigma_eta, state_.eta.squaredNorm(),
         static_cast<std::size_t>(state_.eta.size()));
}

// theta^(m) by independence MH with a Laplace proposal in delta-space.
void GibbsSampler::update_rubrics() {
  const auto M = static_cast<std::size_t>(hyper_.rubrics);
  std::vector<std::vector<int>> ratings(M);
  std::vector<std::vector<double>> predictors(M);
  for (std::size_t obs = 0; obs < data_.size(); ++obs) {
    const Rating& r = data_.entries()[obs];
    const auto m = static_cast<std::size_t>(state_.classes[r.user]);
    ratings[m].push_back(r.z);
    predictors[m].push_back(ws_.mu(static_cast<Eigen::Index>(obs)));
  }
  for (std::size_t m = 0; m < M; ++m) {
    const RubricTarget target(data_.categories(), hyper_.sigma_theta, ratings[m], predictors[m]);
    Rng rng = stream(Block::Rubrics, m);
    const RubricStepResult result =
        update_rubric_laplace(state_.rubrics[m], target, ws_.proposals[m],
                              hyper_.proposal_refresh, rng, options_.laplace);
    ++ws_.attempted[m];
    if (result.accepted) ++ws_.accepted[m];
    if (result.fallback) ++ws_.fallbacks;
  }
}

void GibbsSampler::reset_counters() {
  std::fill(ws_.accepted.begin(), ws_.accepted.end(), 0);
  std::fill(ws_.attempted.begin(), ws_.attempted.end(), 0);
  ws_.fallbacks = 0;
}

Draw GibbsSampler::snapshot() const {
  Draw d;
  d.classes = state_.classes;
  d.weights = state_.weights;
  const int M = hyper_.rubrics;
  d.rubrics.resize(M, data_.categories() - 1);
  for (int m = 0; m < M; ++m) d.rubrics.row(m) = state_.rubrics[static_cast<std::size_t>(m)].breaks().transpose();
  d.gamma = state_.gamma;
  d.item_effects = state_.item_effects;
  d.eta = state_.eta;
  d.sigma_b = state_.sigma_b;
  d.sigma_beta = state_.sigma_beta;
  d.sigma_eta = state_.sigma_eta;
  if (options_.keep_factors || hyper_.factors == 0) {
    d.alpha = state_.alpha;
    d.beta = state_.beta;
  } else {
    // zero rows with L columns marks factors that were dropped
    d.alpha.resize(0, hyper_.factors);
    d.beta.resize(0, hyper_.factors);
  }
  d.loglik = current_loglik();
  return d;
}

PosteriorSamples run_chain(const RatingsDataset& data, const ItemTable& items,
                           const SpatialBasis& basis, const Hyperparameters& hyper,
                           ChainOptions options, const std::optional<ModelState>& initial) {
  const auto started = std::chrono::steady_clock::now();
  const std::optional<ChainCheckpoint> resume = std::move(options.resume);
  options.resume.reset();
  const int check_every = options.cache_check_every;
  const int log_every = options.log_every;
  const int checkpoint_every = options.checkpoint_every;
  const auto on_checkpoint = options.on_checkpoint;
  const bool keep_factors = options.keep_factors;

  GibbsSampler sampler(data, items, basis, hyper, std::move(options));
  PosteriorSamples out;
  if (resume) {
    sampler.restore(*resume);
    out.draws = resume->partial.draws;
  } else if (initial) {
    sampler.set_state(*initial);
  } else {
    sampler.initialize();
  }

  auto chain_metadata = [&] {
    ChainMetadata meta;
    meta.seed = hyper.seed;
    meta.warmup = hyper.warmup;
    meta.samples = hyper.samples;
    meta.thinning = hyper.thinning;
    meta.categories = data.categories();
    meta.items = data.items();
    meta.users = data.users();
    meta.rubrics = hyper.rubrics;
    meta.factors = hyper.factors;
    meta.covariates = items.covariate_dim();
    meta.basis_rank = basis.rank();
    meta.factors_kept = keep_factors && hyper.factors > 0;
    const auto& ws = sampler.workspace();
    for (std::size_t m = 0; m < ws.accepted.size(); ++m)
      meta.acceptance_rates.push_back(
          ws.attempted[m] ? static_cast<double>(ws.accepted[m]) / static_cast<double>(ws.attempted[m])
                          : 0.0);
    meta.laplace_fallbacks = ws.fallbacks;
    return meta;
  };

  const auto warmup = static_cast<std::uint64_t>(hyper.warmup);
  const std::uint64_t total = warmup + static_cast<std::uint64_t>(hyper.samples);
  for (std::uint64_t it = sampler.iteration(); it < total; ++it) {
    if (it == warmup) sampler.reset_counters();
    try {
      sampler.sweep();
    } catch (const Error& e) {
      throw Error(e.kind(), std::string(e.what()) + " (sweep " + std::to_string(it) + ")");
    }
    if (it >= warmup && (it - warmup + 1) % static_cast<std::uint64_t>(hyper.thinning) == 0)
      out.draws.push_back(sampler.snapshot());
    if (check_every > 0 && (it + 1) % static_cast<std::uint64_t>(check_every) == 0) {
      const double err = sampler.max_cache_error();
      if (!(err <= 1e-8))
        throw Error(ErrorKind::StateCorruption, "cached predictors drifted by " +
                                                    std::to_string(err) + " at sweep " +
                                                    std::to_string(it));
    }
    if (log_every > 0 && (it + 1) % static_cast<std::uint64_t>(log_every) == 0) {
      const auto& ws = sampler.workspace();
      std::size_t acc = 0, att = 0;
      for (std::size_t m = 0; m < ws.accepted.size(); ++m) {
        acc += ws.accepted[m];
        att += ws.attempted[m];
      }
      std::clog << "sweep " << it + 1 << "/" << total << " loglik " << sampler.current_loglik()
                << " rubric-acceptance " << (att ? static_cast<double>(acc) / static_cast<double>(att) : 0.0)
                << '\n';
    }
    if (checkpoint_every > 0 && on_checkpoint &&
        (it + 1) % static_cast<std::uint64_t>(checkpoint_every) == 0) {
      ChainCheckpoint cp = sampler.checkpoint();
      cp.partial.draws = out.draws;
      cp.partial.meta = chain_metadata();
      on_checkpoint(cp);
    }
  }

  out.meta = chain_metadata();
  out.meta.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return out;
}

}  // namespace mrubric
