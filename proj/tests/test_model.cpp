#include <doctest.h>

#include <random>

#include "mrubric/errors.hpp"
#include "mrubric/model.hpp"
#include "mrubric/normal.hpp"
#include "support.hpp"

using namespace mrubric;

namespace {

Rubric five() { return Rubric((Eigen::VectorXd(4) << -1.5, -0.5, 0.5, 1.5).finished()); }

SpatialBasis dense_basis(const Eigen::MatrixXd& design) {
  SpatialBasis b = empty_basis(static_cast<std::size_t>(design.rows()));
  b.kind = BasisKind::Radial;
  b.design = design;
  return b;
}

}  // namespace

TEST_CASE("normal cdf and quantile agree with long-double oracle") {
  for (double x = -37.0; x <= 8.0; x += 0.173) {
    const double expect = static_cast<double>(oracle::phi(x));
    CHECK(normal::cdf(x) == doctest::Approx(expect).epsilon(1e-13));
    CHECK(std::abs(normal::cdf(x) - expect) < 1e-12);
  }
  for (double p : {1e-300, 1e-20, 1e-6, 0.01, 0.3, 0.5, 0.77, 0.999, 1 - 1e-12}) {
    const double q = normal::quantile(p);
    CHECK(static_cast<double>(oracle::phi(q)) == doctest::Approx(p).epsilon(1e-12));
  }
  CHECK(normal::log_cdf(-40.0) == doctest::Approx(static_cast<double>(std::log(oracle::phi(-40.0L)))).epsilon(1e-10));
}

TEST_CASE("cell_probability examples") {
  const Rubric two((Eigen::VectorXd(1) << 0.0).finished());
  CHECK(cell_probability(two, 1, 0.0) == doctest::Approx(0.5).epsilon(1e-15));
  const double expect = static_cast<double>(oracle::phi(0.5L) - oracle::phi(-0.5L));
  CHECK(std::abs(cell_probability(five(), 3, 0.0) - expect) < 1e-10);
  CHECK(cell_probability(five(), 3, 0.0) == doctest::Approx(0.38292).epsilon(1e-5));
  CHECK_THROWS_AS(cell_probability(five(), 0, 0.0), Error);
  CHECK_THROWS_AS(cell_probability(five(), 6, 0.0), Error);
  try {
    cell_probability(five(), 6, 0.0);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::CategoryRange);
  }
}

TEST_CASE("cell probabilities are nonnegative, sum to one, and are shift invariant") {
  std::mt19937_64 gen(11);
  std::normal_distribution<double> n01;
  for (int rep = 0; rep < 500; ++rep) {
    const int K = 2 + rep % 7;
    Eigen::VectorXd b(K - 1);
    for (auto& v : b) v = 3.0 * n01(gen);
    std::sort(b.begin(), b.end());
    const Rubric r(b);
    const double mu = 4.0 * n01(gen);
    const double c = 2.0 * n01(gen);
    const Rubric shifted(Eigen::VectorXd(b.array() + c));
    double total = 0.0;
    for (int k = 1; k <= K; ++k) {
      const double w = cell_probability(r, k, mu);
      CHECK(w >= 0.0);
      total += w;
      CHECK(std::abs(cell_probability(shifted, k, mu + c) - w) < 1e-12);
      CHECK(std::abs(w - oracle::cell(b, k, mu)) < 1e-12);
    }
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
}

TEST_CASE("log cell probability stays finite deep in the tails") {
  const Rubric r((Eigen::VectorXd(2) << 40.0, 41.0).finished());
  const double lw = log_cell_probability(r, 2, 0.0);
  CHECK(std::isfinite(lw));
  CHECK(lw < -790.0);
  CHECK(std::isfinite(log_cell_probability(r, 3, 0.0)));
  const Rubric low((Eigen::VectorXd(2) << -41.0, -40.0).finished());
  CHECK(std::isfinite(log_cell_probability(low, 1, 0.0)));
  CHECK(log_cell_probability(low, 3, 0.0) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("linear_predictor examples") {
  ModelState s;
  s.gamma = Eigen::VectorXd::Zero(0);
  s.alpha = Eigen::MatrixXd::Zero(1, 0);
  s.beta = Eigen::MatrixXd::Zero(1, 0);
  s.item_effects = Eigen::VectorXd::Zero(1);
  s.eta = Eigen::VectorXd::Zero(0);
  const ItemTable none = ItemTable::without_covariates({{0.0, 0.0}});
  CHECK(linear_predictor(s, empty_basis(1), none, 0, 0) == 0.0);

  ItemTable items;
  items.covariates = Eigen::MatrixXd::Constant(1, 1, 2.0);
  items.locations = {{0.0, 0.0}};
  s.gamma = Eigen::VectorXd::Constant(1, 0.5);
  s.alpha = Eigen::MatrixXd::Constant(1, 1, 1.0);
  s.beta = Eigen::MatrixXd::Constant(1, 1, 3.0);
  s.eta = Eigen::VectorXd::Constant(1, 1.0);
  s.item_effects = Eigen::VectorXd::Constant(1, -0.25);
  const SpatialBasis basis = dense_basis(Eigen::MatrixXd::Constant(1, 1, 0.25));
  CHECK(linear_predictor(s, basis, items, 0, 0) == doctest::Approx(4.0).epsilon(1e-15));

  s.gamma = Eigen::VectorXd::Zero(2);
  CHECK_THROWS_AS(linear_predictor(s, basis, items, 0, 0), Error);
  s.gamma = Eigen::VectorXd::Constant(1, 0.5);
  s.eta = Eigen::VectorXd::Zero(3);
  CHECK_THROWS_AS(linear_predictor(s, basis, items, 0, 0), Error);
}

TEST_CASE("linear_predictor matches a straight-line evaluator on a 5x5 toy") {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> n01;
  const std::size_t I = 5, U = 5, p = 2, L = 3, r = 4;
  const ItemTable items = fixture::grid_items(I, p);
  Eigen::MatrixXd psi(I, r);
  for (auto& v : psi.reshaped()) v = n01(gen);
  const SpatialBasis basis = dense_basis(psi);
  ModelState s;
  s.gamma = Eigen::VectorXd::NullaryExpr(p, [&] { return n01(gen); });
  s.alpha = Eigen::MatrixXd::NullaryExpr(U, L, [&] { return n01(gen); });
  s.beta = Eigen::MatrixXd::NullaryExpr(I, L, [&] { return n01(gen); });
  s.eta = Eigen::VectorXd::NullaryExpr(r, [&] { return n01(gen); });
  s.item_effects = Eigen::VectorXd::NullaryExpr(I, [&] { return n01(gen); });
  std::vector<Rating> ratings;
  for (std::uint32_t u = 0; u < U; ++u)
    for (std::uint32_t i = 0; i < I; ++i) ratings.push_back({i, u, 1});
  const RatingsDataset data(ratings, 3, I, U);
  const Eigen::VectorXd all = linear_predictors(s, basis, items, data);
  for (std::size_t n = 0; n < data.size(); ++n) {
    const auto i = data.entries()[n].item, u = data.entries()[n].user;
    double direct = s.item_effects(i);
    for (std::size_t j = 0; j < p; ++j) direct += items.covariates(i, j) * s.gamma(j);
    for (std::size_t l = 0; l < L; ++l) direct += s.alpha(u, l) * s.beta(i, l);
    for (std::size_t j = 0; j < r; ++j) direct += psi(i, j) * s.eta(j);
    CHECK(std::abs(linear_predictor(s, basis, items, i, u) - direct) < 1e-12);
    CHECK(std::abs(all(static_cast<Eigen::Index>(n)) - direct) < 1e-12);
  }
}

namespace {

ModelState toy_state(std::size_t I, std::size_t U, int K, std::mt19937_64& gen) {
  std::normal_distribution<double> n01;
  ModelState s;
  s.classes.assign(U, 0);
  s.rubrics = {Rubric(Eigen::VectorXd::LinSpaced(K - 1, -1.0, 1.0))};
  s.weights = Eigen::VectorXd::Ones(1);
  s.alpha = Eigen::MatrixXd::Zero(U, 0);
  s.beta = Eigen::MatrixXd::Zero(I, 0);
  s.gamma = Eigen::VectorXd::Zero(0);
  s.eta = Eigen::VectorXd::Zero(0);
  s.item_effects = Eigen::VectorXd::NullaryExpr(I, [&] { return n01(gen); });
  return s;
}

}  // namespace

TEST_CASE("observed_data_loglik examples") {
  std::mt19937_64 gen(2);
  const ItemTable items = ItemTable::without_covariates({{0, 0}, {1, 1}});
  ModelState s = toy_state(2, 3, 2, gen);
  s.rubrics = {Rubric((Eigen::VectorXd(1) << 0.0).finished())};
  s.item_effects.setZero();
  const RatingsDataset one({{0, 0, 2}}, 2, 2, 3);
  CHECK(observed_data_loglik(s, one, items, empty_basis(2)) == doctest::Approx(-0.693147).epsilon(1e-6));
  const RatingsDataset none({}, 2, 2, 3);
  CHECK(observed_data_loglik(s, none, items, empty_basis(2)) == 0.0);

  const ItemTable items5 = fixture::grid_items(5);
  ModelState t = toy_state(5, 2, 4, gen);
  std::vector<Rating> r;
  std::uniform_int_distribution<int> z(1, 4);
  for (std::uint32_t u = 0; u < 2; ++u)
    for (std::uint32_t i = 0; i < 5; ++i) r.push_back({i, u, z(gen)});
  const RatingsDataset ten(r, 4, 5, 2);
  long double product = 1.0L;
  for (const Rating& x : r) product *= oracle::cell(t.rubrics[0].breaks(), x.z, t.item_effects(x.item));
  CHECK(observed_data_loglik(t, ten, items5, empty_basis(5)) ==
        doctest::Approx(static_cast<double>(std::log(product))).epsilon(1e-12));
}

TEST_CASE("sample_rubric_prior moments and ordering") {
  Rng rng(17);
  double sum = 0.0, sq = 0.0;
  const int n = 100000;
  for (int j = 0; j < n; ++j) {
    const double v = sample_rubric_prior(2, 1.7, rng).breaks()(0);
    sum += v;
    sq += v * v;
  }
  const double sd = std::sqrt(sq / n - std::pow(sum / n, 2));
  CHECK(std::abs(sd / 1.7 - 1.0) < 0.02);

  // oracle: 10^6 sorted draws from the standard library generator
  std::mt19937_64 gen(9);
  std::normal_distribution<double> n01;
  double oracle_min = 0.0;
  for (int j = 0; j < 1000000; ++j) {
    double m = n01(gen);
    for (int k = 0; k < 3; ++k) m = std::min(m, n01(gen));
    oracle_min += m;
  }
  oracle_min /= 1e6;
  CHECK(oracle_min == doctest::Approx(-1.0294).epsilon(0.003));
  double ours = 0.0;
  for (int j = 0; j < 200000; ++j) {
    const Rubric r = sample_rubric_prior(5, 1.0, rng);
    ours += r.breaks()(0);
    for (int k = 1; k < 4; ++k) REQUIRE(r.breaks()(k) > r.breaks()(k - 1));
  }
  ours /= 200000;
  CHECK(std::abs(ours - oracle_min) < 0.01);
}

TEST_CASE("dataset invariants") {
  CHECK_THROWS_AS(RatingsDataset({{0, 0, 6}}, 5, 1, 1), Error);
  CHECK_THROWS_AS(RatingsDataset({{0, 0, 0}}, 5, 1, 1), Error);
  CHECK_THROWS_AS(RatingsDataset({{0, 0, 3}, {0, 0, 4}}, 5, 1, 1), Error);
  CHECK_THROWS_AS(RatingsDataset({{2, 0, 3}}, 5, 1, 1), Error);
  const RatingsDataset d({{0, 1, 3}, {1, 1, 4}, {1, 0, 2}}, 5, 3, 2);
  std::size_t by_user = 0, by_item = 0;
  for (std::size_t u = 0; u < d.users(); ++u)
    for (std::size_t o : d.user_entries(u)) {
      CHECK(d.entries()[o].user == u);
      ++by_user;
    }
  for (std::size_t i = 0; i < d.items(); ++i)
    for (std::size_t o : d.item_entries(i)) {
      CHECK(d.entries()[o].item == i);
      ++by_item;
    }
  CHECK(by_user == d.size());
  CHECK(by_item == d.size());
  CHECK(d.item_entries(2).empty());
}

TEST_CASE("item table and rubric validation") {
  ItemTable t = fixture::grid_items(4, 1);
  t.covariates.col(0).setConstant(2.0);
  CHECK_THROWS_AS(t.validate(), Error);
  t.covariates(0, 0) = NAN;
  CHECK_THROWS_AS(t.validate(), Error);
  CHECK_THROWS_AS(Rubric((Eigen::VectorXd(2) << 1.0, 1.0).finished()), Error);
  CHECK_THROWS_AS(Rubric((Eigen::VectorXd(2) << 0.0, INFINITY).finished()), Error);
  const Rubric r = five();
  CHECK(std::isinf(r.lower(1)));
  CHECK(std::isinf(r.upper(5)));
  CHECK(category_of(r, 0.0) == 3);
  CHECK(category_of(r, -9.0) == 1);
  CHECK(category_of(r, 9.0) == 5);
}

TEST_CASE("hyperparameters enforce sigma_alpha = 1 and positivity") {
  Hyperparameters h;
  CHECK_NOTHROW(h.validate());
  CHECK(h.dirichlet_a() == doctest::Approx(0.05));
  h.sigma_alpha = 2.0;
  CHECK_THROWS_AS(h.validate(), Error);
  h = {};
  h.rubrics = 0;
  CHECK_THROWS_AS(h.validate(), Error);
  h = {};
  h.kappa = 0.0;
  CHECK_THROWS_AS(h.validate(), Error);
  h = {};
  h.bandwidth = -1.0;
  CHECK_THROWS_AS(h.validate(), Error);
}

TEST_CASE("state validation rejects utilities outside their cell") {
  std::mt19937_64 gen(4);
  ModelState s = toy_state(2, 1, 3, gen);
  const RatingsDataset d({{0, 0, 2}, {1, 0, 3}}, 3, 2, 1);
  s.utilities = (Eigen::VectorXd(2) << 0.0, 2.0).finished();
  CHECK_NOTHROW(validate_state(s, d, 0, 0));
  s.utilities(0) = 1.5;
  CHECK_THROWS_AS(validate_state(s, d, 0, 0), Error);
  CHECK_NOTHROW(validate_state(s, d, 0, 0, false));
  s.weights = Eigen::VectorXd::Constant(1, 0.9);
  CHECK_THROWS_AS(validate_state(s, d, 0, 0, false), Error);
}
