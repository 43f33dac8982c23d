#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numeric>

#include "mrubric/analysis.hpp"
#include "mrubric/errors.hpp"
#include "mrubric/simulation.hpp"
#include "support.hpp"

using namespace mrubric;

namespace {

Draw make_draw(std::vector<int> classes, Eigen::VectorXd weights, Eigen::MatrixXd rubrics,
               std::size_t items, std::size_t users, int L = 0, std::size_t p = 0,
               std::size_t r = 0) {
  Draw d;
  d.classes = std::move(classes);
  d.weights = std::move(weights);
  d.rubrics = std::move(rubrics);
  d.gamma = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
  d.item_effects = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(items));
  d.eta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(r));
  d.alpha = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(users), L);
  d.beta = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(items), L);
  d.sigma_b = d.sigma_beta = d.sigma_eta = 1.0;
  return d;
}

Eigen::MatrixXd rows(std::initializer_list<std::initializer_list<double>> v) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(v.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : v) {
    Eigen::Index j = 0;
    for (double x : r) m(i, j++) = x;
    ++i;
  }
  return m;
}

// sum_k k * P(Z = k) for a probit with mean xi and unit-variance noise inflated by scale^2
double expected_oracle(const Eigen::VectorXd& breaks, double xi, double scale) {
  double e = 0.0;
  const Eigen::VectorXd b = breaks / scale;
  for (int k = 1; k <= breaks.size() + 1; ++k) e += k * oracle::cell(b, k, xi / scale);
  return e;
}

PosteriorSamples with_draws(std::vector<Draw> draws) {
  PosteriorSamples s;
  s.draws = std::move(draws);
  s.meta.factors_kept = true;
  return s;
}

}  // namespace

TEST_CASE("item quality closed form examples") {
  const Rubric half((Eigen::VectorXd(1) << 0.0).finished());
  const std::vector<double> one = {1.0};
  CHECK(expected_rating(0.0, 0.0, one, std::span(&half, 1)) == doctest::Approx(1.5).epsilon(1e-14));
  const Rubric five((Eigen::VectorXd(4) << -1.0, 0.0, 0.5, 1.0).finished());
  CHECK(expected_rating(60.0, 0.0, one, std::span(&five, 1)) == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(expected_rating(-60.0, 0.0, one, std::span(&five, 1)) == doctest::Approx(1.0).epsilon(1e-12));
  double previous = 1.0;
  for (double xi = -4.0; xi <= 4.0; xi += 0.25) {
    const double v = expected_rating(xi, 0.7, one, std::span(&five, 1));
    CHECK(v > previous);
    CHECK(v <= 5.0);
    previous = v;
  }
}

TEST_CASE("item quality matches simulation of the rating process") {
  const Eigen::MatrixXd th = rows({{-1.0, -0.2, 0.4, 1.3}, {-2.0, -1.5, 0.0, 0.3}});
  const std::vector<double> omega = {0.35, 0.65};
  const Eigen::Vector2d beta(0.6, -0.8);
  const double xi = 0.3;
  const std::vector<Rubric> rubrics = {Rubric(th.row(0).transpose()), Rubric(th.row(1).transpose())};
  const double lambda = expected_rating(xi, beta.norm(), omega, rubrics);

  std::mt19937_64 gen(2024);
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> u01;
  const long n = 10'000'000;
  double sum = 0.0, sq = 0.0;
  for (long t = 0; t < n; ++t) {
    const double mu = xi + beta(0) * n01(gen) + beta(1) * n01(gen);
    const int m = u01(gen) < omega[0] ? 0 : 1;
    const double y = mu + n01(gen);
    int z = 1;
    while (z <= 4 && y > th(m, z - 1)) ++z;
    sum += z;
    sq += static_cast<double>(z) * z;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sq / n - mean * mean) / n);
  CHECK(std::abs(lambda - mean) < 3 * se);
}

TEST_CASE("rubric-adjusted quality") {
  const std::size_t I = 3;
  Draw d = make_draw({0}, (Eigen::VectorXd(2) << 0.25, 0.75).finished(),
                     rows({{-1.0, 0.0, 0.5, 1.0}, {-0.5, 0.2, 0.9, 2.0}}), I, 1, 2, 1, 2);
  d.gamma << 0.4;
  d.item_effects << 0.1, -0.3, 0.8;
  d.eta << 0.5, -0.2;
  d.beta << 0.3, 0.1, -0.5, 0.2, 1.0, 1.0;
  ItemTable items = ItemTable::without_covariates({{0.1, 0.2}, {0.5, 0.5}, {0.9, 0.3}});
  items.covariates = (Eigen::MatrixXd(3, 1) << 1.0, -1.0, 0.5).finished();
  const std::vector<Location> centers = {{0.0, 0.0}, {1.0, 1.0}};
  const SpatialBasis basis = radial_basis(items.locations, centers, 2.0);

  for (std::size_t i = 0; i < I; ++i) {
    const double xi = item_fixed_effect(d, items, basis, i);
    const double expected_xi = items.covariates(static_cast<Eigen::Index>(i), 0) * 0.4 +
                               d.item_effects(static_cast<Eigen::Index>(i)) +
                               basis.design.row(static_cast<Eigen::Index>(i)).dot(d.eta);
    CHECK(xi == doctest::Approx(expected_xi).epsilon(1e-14));
    const double s = std::sqrt(1.0 + d.beta.row(static_cast<Eigen::Index>(i)).squaredNorm());
    double mixture = 0.0;
    for (int m = 0; m < 2; ++m) {
      const double lm = rubric_adjusted_quality(d, items, basis, i, m);
      CHECK(lm == doctest::Approx(expected_oracle(d.rubrics.row(m).transpose(), xi, s)).epsilon(1e-12));
      CHECK(lm >= 1.0);
      CHECK(lm <= 5.0);
      mixture += d.weights(m) * lm;
    }
    CHECK(std::abs(mixture - item_quality(d, items, basis, i)) < 1e-12);
  }

  SUBCASE("single rubric identity") {
    Draw one = d;
    one.weights = Eigen::VectorXd::Ones(1);
    one.rubrics = d.rubrics.topRows(1);
    for (std::size_t i = 0; i < I; ++i)
      CHECK(rubric_adjusted_quality(one, items, basis, i, 0) == item_quality(one, items, basis, i));
  }
  SUBCASE("location confounding") {
    Draw shifted = d;
    shifted.rubrics.array() += 0.7;
    shifted.item_effects.array() += 0.7;
    for (std::size_t i = 0; i < I; ++i)
      CHECK(rubric_adjusted_quality(shifted, items, basis, i, 1) ==
            doctest::Approx(rubric_adjusted_quality(d, items, basis, i, 1)).epsilon(1e-12));
  }
  SUBCASE("dropped factors are reported") {
    Draw lean = d;
    lean.beta.resize(0, 2);
    lean.alpha.resize(0, 2);
    CHECK_THROWS_AS(item_quality(lean, items, basis, 0), Error);
  }
}

TEST_CASE("quality summary") {
  const RatingsDataset data({{0, 0, 5}, {0, 1, 4}, {1, 0, 1}}, 5, 3, 2);
  const ItemTable items = ItemTable::without_covariates({{0, 0}, {1, 1}, {2, 2}});
  std::vector<Draw> draws;
  for (int t = 0; t < 4; ++t) {
    Draw d = make_draw({0, 0}, Eigen::VectorXd::Ones(1), rows({{-1.0, 0.0, 0.5, 1.0}}), 3, 2);
    d.item_effects << 0.1 * t, -0.2, 0.0;
    draws.push_back(d);
  }
  const PosteriorSamples s = with_draws(draws);
  const ItemQuality q = quality_summary(s, data, items, empty_basis(3), 2);
  CHECK(q.draws.rows() == 4);
  CHECK(q.draws.cols() == 3);
  CHECK(q.counts == std::vector<std::size_t>{2, 1, 0});
  CHECK(q.empirical_mean(0) == 4.5);
  CHECK(q.empirical_mean(1) == 1.0);
  CHECK(std::isnan(q.empirical_mean(2)));
  CHECK(q.sd(1) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(q.mean(0) == doctest::Approx(q.draws.col(0).mean()).epsilon(1e-14));
  CHECK((q.draws.array() >= 1.0).all());
  CHECK((q.draws.array() <= 5.0).all());
}

TEST_CASE("co-clustering") {
  const Eigen::MatrixXd th = rows({{0.0}, {1.0}});
  const auto draw = [&](std::vector<int> c) {
    return make_draw(std::move(c), (Eigen::VectorXd(2) << 0.5, 0.5).finished(), th, 1, 4);
  };
  SUBCASE("single draw") {
    const Eigen::MatrixXd pi = coclustering(with_draws({draw({0, 0, 1, 1})}));
    CHECK(pi == rows({{1, 1, 0, 0}, {1, 1, 0, 0}, {0, 0, 1, 1}, {0, 0, 1, 1}}));
  }
  SUBCASE("same and distinct") {
    PosteriorSamples s;
    s.draws = {draw({0, 0, 0, 0}), make_draw({0, 1, 2, 3}, Eigen::VectorXd::Constant(4, 0.25),
                                             rows({{0.0}, {1.0}, {2.0}, {3.0}}), 1, 4)};
    const Eigen::MatrixXd pi = coclustering(s);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) CHECK(pi(i, j) == (i == j ? 1.0 : 0.5));
  }
  SUBCASE("random draws against pair counting and relabeling") {
    std::mt19937_64 gen(5);
    std::uniform_int_distribution<int> lab(0, 2);
    std::vector<Draw> draws, relabeled;
    const std::size_t U = 12;
    for (int t = 0; t < 100; ++t) {
      std::vector<int> c(U);
      for (auto& x : c) x = lab(gen);
      draws.push_back(make_draw(c, Eigen::VectorXd::Constant(3, 1.0 / 3), rows({{0.0}, {1.0}, {2.0}}), 1, U));
      for (auto& x : c) x = (x + t) % 3;
      relabeled.push_back(make_draw(c, Eigen::VectorXd::Constant(3, 1.0 / 3), rows({{0.0}, {1.0}, {2.0}}), 1, U));
    }
    const Eigen::MatrixXd pi = coclustering(with_draws(draws));
    for (std::size_t u = 0; u < U; ++u)
      for (std::size_t v = 0; v < U; ++v) {
        int same = 0;
        for (const auto& d : draws) same += d.classes[u] == d.classes[v];
        CHECK(pi(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(v)) == same / 100.0);
      }
    CHECK((pi - pi.transpose()).norm() == 0.0);
    CHECK(coclustering(with_draws(relabeled)) == pi);
  }
}

TEST_CASE("Binder loss and clustering") {
  CHECK(binder_loss(std::vector<int>{0, 0, 0}, Eigen::MatrixXd::Ones(3, 3)) == 0.0);
  CHECK(binder_loss(std::vector<int>{0, 1, 2}, Eigen::MatrixXd::Identity(3, 3)) == 0.0);
  CHECK_THROWS_AS(binder_loss(std::vector<int>{0, 1}, Eigen::MatrixXd::Identity(3, 3)), Error);

  const Eigen::MatrixXd pi = rows({{1.0, 0.8, 0.2}, {0.8, 1.0, 0.5}, {0.2, 0.5, 1.0}});
  const std::vector<std::vector<int>> partitions = {{0, 0, 0}, {0, 0, 1}, {0, 1, 0}, {0, 1, 1}, {0, 1, 2}};
  // brute force: sum over pairs of |1{same} - pi|
  const auto loss = [&](const std::vector<int>& c) {
    double l = 0.0;
    for (int i = 0; i < 3; ++i)
      for (int j = i + 1; j < 3; ++j) l += std::abs((c[i] == c[j] ? 1.0 : 0.0) - pi(i, j));
    return l;
  };
  std::size_t best = 0;
  for (std::size_t k = 0; k < partitions.size(); ++k) {
    CHECK(binder_loss(partitions[k], pi) == doctest::Approx(loss(partitions[k])).epsilon(1e-14));
    if (loss(partitions[k]) < loss(partitions[best])) best = k;
  }
  CHECK(partitions[best] == std::vector<int>{0, 0, 1});

  std::vector<Draw> draws;
  for (const auto& c : partitions)
    draws.push_back(make_draw(c, Eigen::VectorXd::Constant(3, 1.0 / 3), rows({{0.0}, {1.0}, {2.0}}), 1, 3));
  const auto chosen = binder_cluster(with_draws(draws), pi);
  for (const auto& c : partitions) CHECK(binder_loss(chosen, pi) <= binder_loss(c, pi));
  CHECK(chosen == partitions[best]);

  SUBCASE("identical draws") {
    const std::vector<Draw> same(5, draws[3]);
    const PosteriorSamples s = with_draws(same);
    CHECK(binder_cluster(s, coclustering(s)) == partitions[3]);
  }
  SUBCASE("planted two clusters") {
    const std::size_t U = 30;
    std::vector<int> truth(U);
    for (std::size_t u = 0; u < U; ++u) truth[u] = u < 12 ? 0 : 1;
    std::mt19937_64 gen(8);
    std::uniform_real_distribution<double> u01;
    std::vector<Draw> noisy;
    for (int t = 0; t < 60; ++t) {
      std::vector<int> c = truth;
      for (auto& x : c)
        if (u01(gen) < 0.1) x = 1 - x;
      noisy.push_back(make_draw(c, (Eigen::VectorXd(2) << 0.5, 0.5).finished(), rows({{0.0}, {1.0}}), 1, U));
    }
    noisy.push_back(make_draw(truth, (Eigen::VectorXd(2) << 0.5, 0.5).finished(), rows({{0.0}, {1.0}}), 1, U));
    const PosteriorSamples s = with_draws(noisy);
    CHECK(matched_accuracy(truth, binder_cluster(s, coclustering(s))) == 1.0);
  }
}

TEST_CASE("held-out log-likelihood") {
  const ItemTable items = ItemTable::without_covariates({{0, 0}, {1, 1}});
  SUBCASE("coin flip") {
    const RatingsDataset test({{0, 0, 2}}, 2, 2, 1);
    const PosteriorSamples s = with_draws({make_draw({0}, Eigen::VectorXd::Ones(1), rows({{0.0}}), 2, 1)});
    const HeldoutResult r = heldout_loglik(s, test, items, empty_basis(2));
    CHECK(r.mean == doctest::Approx(std::log(0.5)).epsilon(1e-14));
    CHECK(r.per_pair.size() == 1);
    CHECK(r.floored == 0);
  }
  SUBCASE("perfect predictor") {
    const RatingsDataset test({{0, 0, 2}, {1, 0, 1}}, 2, 2, 1);
    Draw d = make_draw({0}, Eigen::VectorXd::Ones(1), rows({{0.0}}), 2, 1);
    d.item_effects << 60.0, -60.0;
    const HeldoutResult r = heldout_loglik(with_draws({d}), test, items, empty_basis(2));
    CHECK(std::abs(r.mean) < 1e-12);
  }
  SUBCASE("floor for impossible pairs") {
    const RatingsDataset test({{0, 0, 1}}, 2, 2, 1);
    Draw d = make_draw({0}, Eigen::VectorXd::Ones(1), rows({{0.0}}), 2, 1);
    d.item_effects << 1e4, 0.0;
    const HeldoutResult r = heldout_loglik(with_draws({d}), test, items, empty_basis(2));
    CHECK(r.mean == kLogProbabilityFloor);
    CHECK(r.floored == 1);
  }
}

TEST_CASE("held-out log-likelihood matches a naive double loop") {
  const std::size_t I = 4, U = 5, L = 2;
  const ItemTable items = fixture::grid_items(I, 1, 11);
  const std::vector<Location> centers = {{0.3, 0.3}, {0.7, 0.6}};
  const SpatialBasis basis = radial_basis(items.locations, centers, 3.0);
  std::mt19937_64 gen(12);
  std::normal_distribution<double> n01;
  std::vector<Draw> draws;
  for (int t = 0; t < 6; ++t) {
    Draw d = make_draw({0, 1, 2, 0, 1}, (Eigen::VectorXd(3) << 0.2, 0.3, 0.5).finished(),
                       rows({{-1.0, 0.0, 1.0}, {-0.5, 0.1, 0.4}, {-2.0, 1.0, 1.5}}), I, U, L, 1, 2);
    for (auto& c : d.classes) c = static_cast<int>(gen() % 3);
    d.gamma << n01(gen);
    for (Eigen::Index i = 0; i < d.item_effects.size(); ++i) d.item_effects(i) = n01(gen);
    for (Eigen::Index i = 0; i < d.eta.size(); ++i) d.eta(i) = n01(gen);
    for (Eigen::Index i = 0; i < d.alpha.size(); ++i) d.alpha.data()[i] = n01(gen);
    for (Eigen::Index i = 0; i < d.beta.size(); ++i) d.beta.data()[i] = 0.5 * n01(gen);
    draws.push_back(d);
  }
  const PosteriorSamples s = with_draws(draws);
  const RatingsDataset test({{0, 0, 1}, {1, 2, 4}, {3, 1, 3}, {2, 4, 2}, {1, 3, 4}}, 4, I, U);
  const std::vector<char> seen = {1, 1, 0, 1, 0};

  double total = 0.0;
  for (const auto& e : test.entries()) {
    double p = 0.0;
    for (const auto& d : draws) {
      const double xi = items.covariates(e.item, 0) * d.gamma(0) + d.item_effects(e.item) +
                        basis.design.row(e.item).dot(d.eta);
      if (seen[e.user]) {
        const double mu = xi + d.alpha.row(e.user).dot(d.beta.row(e.item));
        p += oracle::cell(d.rubrics.row(d.classes[e.user]).transpose(), e.z, mu);
      } else {
        const double sc = std::sqrt(1.0 + d.beta.row(e.item).squaredNorm());
        for (int m = 0; m < 3; ++m)
          p += d.weights(m) *
               oracle::cell(d.rubrics.row(m).transpose() / sc, e.z, xi / sc);
      }
    }
    total += std::log(p / static_cast<double>(draws.size()));
  }
  const HeldoutResult r = heldout_loglik(s, test, items, basis, seen, 3);
  CHECK(r.mean == doctest::Approx(total / 5.0).epsilon(1e-12));

  SUBCASE("rubric relabeling leaves it unchanged") {
    std::vector<Draw> relabeled = draws;
    for (auto& d : relabeled) {
      const Eigen::MatrixXd th = d.rubrics;
      const Eigen::VectorXd w = d.weights;
      for (int m = 0; m < 3; ++m) {
        d.rubrics.row((m + 1) % 3) = th.row(m);
        d.weights((m + 1) % 3) = w(m);
      }
      for (auto& c : d.classes) c = (c + 1) % 3;
    }
    CHECK(heldout_loglik(with_draws(relabeled), test, items, basis, seen).mean ==
          doctest::Approx(r.mean).epsilon(1e-13));
  }
  SUBCASE("seen users derived from training data") {
    const RatingsDataset train({{0, 1, 2}, {2, 3, 1}}, 4, I, U);
    CHECK(seen_users(train) == std::vector<char>{0, 1, 0, 1, 0});
  }
}

TEST_CASE("spatial field summary") {
  const auto sites = fixture::grid_items(6, 0, 2).locations;
  const SpatialBasis basis = build_basis(sites, 4.0, FixedRank{3});
  std::vector<Draw> draws;
  std::mt19937_64 gen(4);
  std::normal_distribution<double> n01;
  for (int t = 0; t < 5; ++t) {
    Draw d = make_draw({0}, Eigen::VectorXd::Ones(1), rows({{0.0}}), 6, 1, 0, 0, 3);
    for (Eigen::Index j = 0; j < 3; ++j) d.eta(j) = n01(gen);
    draws.push_back(d);
  }
  const std::vector<Location> where = {{0.1, 0.1}, {0.5, 0.9}, {3.0, 3.0}};
  const FieldSummary f = spatial_field_summary(with_draws(draws), basis, where);
  Eigen::VectorXd mean_eta = Eigen::VectorXd::Zero(3);
  for (const auto& d : draws) mean_eta += d.eta / 5.0;
  for (std::size_t j = 0; j < where.size(); ++j)
    CHECK(std::abs(f.mean(static_cast<Eigen::Index>(j)) - basis.evaluate(where[j]).dot(mean_eta)) < 1e-12);
  CHECK((f.sd.array() >= 0.0).all());

  const FieldSummary single = spatial_field_summary(with_draws({draws[0]}), basis, where);
  CHECK(single.sd.norm() == 0.0);
  Draw zero = draws[0];
  zero.eta.setZero();
  CHECK(spatial_field_summary(with_draws({zero, zero}), basis, where).mean.norm() == 0.0);
}

TEST_CASE("rubric profiles") {
  const RatingsDataset data({{0, 0, 1}, {1, 0, 2}, {0, 1, 2}, {1, 1, 2}, {0, 2, 3}}, 3, 2, 3);
  const auto one = rubric_profile(std::vector<int>{0, 0, 0}, 1, data);
  REQUIRE(one.size() == 1);
  CHECK(one[0].proportions(0) == doctest::Approx(0.2));
  CHECK(one[0].proportions(1) == doctest::Approx(0.6));
  CHECK(one[0].proportions(2) == doctest::Approx(0.2));
  const auto two = rubric_profile(std::vector<int>{0, 0, 1}, 3, data);
  CHECK(two[0].users == 2);
  CHECK(two[0].ratings == 4);
  CHECK(two[0].proportions.sum() == doctest::Approx(1.0));
  CHECK(two[1].proportions(2) == 1.0);
  CHECK_FALSE(two[2].defined());
  CHECK(std::isnan(two[2].proportions(0)));
}

TEST_CASE("planted rubric profiles match their generators") {
  SimConfig c;
  c.items = 300;
  c.users = 400;
  c.ratings = 20000;
  c.rubric_probs = {uniform_probs(), peaked_probs()};
  c.weights = (Eigen::VectorXd(2) << 0.5, 0.5).finished();
  c.sigma_b = 0.5;
  c.sigma_eta = 0.5;
  c.basis_rank = 9;
  c.grid_knots = true;
  c.bandwidth = 30.0;
  c.pool_size = 1'000'000;
  c.seed = 3;
  const SimulatedData sim = generate_dataset(c);
  const auto profiles = rubric_profile(sim.truth.classes, 2, sim.data);
  CHECK(tv_distance(profiles[0].proportions, uniform_probs()) < 0.03);
  CHECK(tv_distance(profiles[1].proportions, peaked_probs()) < 0.03);
}

TEST_CASE("Hungarian matching") {
  std::mt19937_64 gen(6);
  std::uniform_real_distribution<double> u01;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + trial % 6;
    Eigen::MatrixXd score(n, n);
    for (Eigen::Index j = 0; j < score.size(); ++j) score.data()[j] = std::floor(10 * u01(gen));
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    double best = -INFINITY;
    do {
      double v = 0.0;
      for (int r = 0; r < n; ++r) v += score(r, perm[static_cast<std::size_t>(r)]);
      best = std::max(best, v);
    } while (std::next_permutation(perm.begin(), perm.end()));
    const auto match = hungarian_max(score);
    double v = 0.0;
    std::vector<int> used(static_cast<std::size_t>(n), 0);
    for (int r = 0; r < n; ++r) {
      v += score(r, match[static_cast<std::size_t>(r)]);
      ++used[static_cast<std::size_t>(match[static_cast<std::size_t>(r)])];
    }
    CHECK(v == best);
    CHECK(std::all_of(used.begin(), used.end(), [](int x) { return x == 1; }));
  }
  CHECK(matched_accuracy(std::vector<int>{0, 0, 1, 1}, std::vector<int>{1, 1, 0, 0}) == 1.0);
  CHECK(matched_accuracy(std::vector<int>{0, 0, 1, 1}, std::vector<int>{2, 2, 2, 0}) == 0.75);
}

TEST_CASE("modal assignment and occupancy") {
  const Eigen::MatrixXd th = rows({{0.0}, {1.0}, {2.0}});
  const Eigen::VectorXd w = Eigen::VectorXd::Constant(3, 1.0 / 3);
  const PosteriorSamples s = with_draws({make_draw({0, 2, 1}, w, th, 1, 3), make_draw({0, 1, 1}, w, th, 1, 3),
                                         make_draw({2, 2, 1}, w, th, 1, 3)});
  CHECK(modal_assignment(s) == std::vector<int>{0, 2, 1});
  const Eigen::VectorXd occ = occupancy(s.draws[1]);
  CHECK(occ(0) == doctest::Approx(1.0 / 3));
  CHECK(occ(1) == doctest::Approx(2.0 / 3));
  CHECK(occ(2) == 0.0);
}

TEST_CASE("CSV exports") {
  const auto dir = std::filesystem::temp_directory_path() / "mrubric_analysis_exports";
  std::filesystem::create_directories(dir);
  ItemQuality q;
  q.mean = (Eigen::VectorXd(2) << 3.5, 2.0).finished();
  q.sd = (Eigen::VectorXd(2) << 0.1, 0.2).finished();
  q.empirical_mean = (Eigen::VectorXd(2) << 4.0, NAN).finished();
  q.counts = {3, 0};
  const std::vector<std::string> ids = {"a", "b"};
  export_quality_csv(q, ids, dir / "quality.csv");
  std::ifstream in(dir / "quality.csv");
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  CHECK(header.rfind("item_id,", 0) == 0);
  CHECK(first.rfind("a,", 0) == 0);
  std::filesystem::remove_all(dir);
}
