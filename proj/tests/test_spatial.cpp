#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "mrubric/errors.hpp"
#include "mrubric/spatial.hpp"
#include "support.hpp"

using namespace mrubric;

namespace {

std::vector<Location> random_sites(std::size_t n, unsigned seed, double scale = 1.0) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, scale);
  std::vector<Location> s(n);
  for (auto& x : s) x = {u(gen), u(gen)};
  return s;
}

Eigen::MatrixXd kernel_oracle(const std::vector<Location>& s, double rho) {
  const auto n = static_cast<Eigen::Index>(s.size());
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      const double dx = s[i].longitude - s[j].longitude, dy = s[i].latitude - s[j].latitude;
      k(i, j) = std::exp(-rho * (dx * dx + dy * dy));
    }
  return k;
}

// eigenvalues of a PSD matrix via one-sided Jacobi SVD, descending
Eigen::VectorXd svd_spectrum(const Eigen::MatrixXd& m) {
  return Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues();
}

struct RankFixture {
  std::vector<Location> sites;
  double bandwidth = 0.0;
  double fraction = 0.0;
  std::size_t expected = 0;
};

RankFixture read_fixture(const std::filesystem::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  RankFixture f;
  std::string line;
  std::getline(in, line);
  std::sscanf(line.c_str(), "# bandwidth=%lf fraction=%lf expected_rank=%zu", &f.bandwidth,
              &f.fraction, &f.expected);
  std::getline(in, line);
  while (std::getline(in, line)) {
    Location s;
    std::sscanf(line.c_str(), "%lf,%lf", &s.longitude, &s.latitude);
    f.sites.push_back(s);
  }
  return f;
}

}  // namespace

TEST_CASE("covariogram examples") {
  const std::vector<Location> s = {{0.0, 0.0}, {0.0, 0.0}, {0.01, 0.0}};
  const Eigen::MatrixXd xi = build_covariogram(s, 1000.0);
  CHECK(xi(0, 1) == 1.0);
  CHECK(xi(0, 2) == doctest::Approx(std::exp(-0.1)).epsilon(1e-14));
  CHECK(xi(0, 2) == doctest::Approx(0.904837).epsilon(1e-6));
  CHECK(squared_exponential(s[0], s[2], 1000.0) == doctest::Approx(0.904837).epsilon(1e-6));

  const std::vector<Location> line = {{0.0, 0.0}, {0.5, 0.5}, {1.0, 1.0}};
  const Eigen::MatrixXd k = build_covariogram(line, 3.0);
  CHECK((k - k.transpose()).norm() == 0.0);
  const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(k).eigenvalues();
  CHECK(ev.minCoeff() >= -1e-10);
  for (Eigen::Index i = 0; i < 3; ++i) CHECK(k(i, i) == 1.0);
  CHECK((k.array() > 0.0).all());
}

TEST_CASE("select_rank examples") {
  CHECK(select_rank((Eigen::VectorXd(3) << 2, 1, 1).finished(), 0.6) == 1);
  CHECK(select_rank((Eigen::VectorXd(3) << 2, 1, 1).finished(), 0.7) == 2);
  CHECK(select_rank((Eigen::VectorXd(4) << 3, 2, 1, 0.5).finished(), 1.0) == 4);
  CHECK_THROWS_AS(select_rank(Eigen::VectorXd::Zero(3), 0.9), Error);
  try {
    select_rank(Eigen::VectorXd::Zero(3), 0.9);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DegenerateKernel);
    CHECK(e.numerical());
  }
}

TEST_CASE("select_rank reproduces stored fixtures") {
  for (int n = 1; n <= 5; ++n) {
    const RankFixture f =
        read_fixture("fixtures/rank_fixture_" + std::to_string(n) + ".csv");
    CAPTURE(n);
    const SpatialBasis b = build_basis(f.sites, f.bandwidth, VarianceFraction{f.fraction});
    CHECK(b.rank() == f.expected);
    CHECK(select_rank(b.spectrum, f.fraction) == f.expected);
  }
}

TEST_CASE("full rank reconstructs the covariogram") {
  const auto s = random_sites(30, 1);
  const SpatialBasis b = build_basis(s, 2.0, FixedRank{30});
  const Eigen::MatrixXd xi = kernel_oracle(s, 2.0);
  // tiny eigenvalues are clamped, so compare against the clamped tail
  const double err = (xi - b.design * b.design.transpose()).norm();
  double tail = 0.0;
  for (Eigen::Index d = static_cast<Eigen::Index>(b.rank()); d < b.spectrum.size(); ++d)
    tail += b.spectrum(d) * b.spectrum(d);
  CHECK(err < 1e-8 + std::sqrt(tail) + 1e-9 * b.spectrum(0) * 30);

  const auto t = random_sites(20, 2);
  const SpatialBasis full = build_basis(t, 50.0, FixedRank{20});
  CHECK(full.rank() == 20);
  CHECK((kernel_oracle(t, 50.0) - full.design * full.design.transpose()).norm() < 1e-8);
  CHECK(full.captured_fraction() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(build_basis(t, 50.0, FixedRank{21}), Error);
}

TEST_CASE("rank-1 truncation error on a 3-point toy") {
  const std::vector<Location> s = {{0.0, 0.0}, {0.1, 0.3}, {0.4, 0.2}};
  const SpatialBasis b = build_basis(s, 4.0, FixedRank{1});
  const Eigen::VectorXd d = svd_spectrum(kernel_oracle(s, 4.0));
  const double err = (kernel_oracle(s, 4.0) - b.design * b.design.transpose()).norm();
  CHECK(err == doctest::Approx(std::sqrt(d(1) * d(1) + d(2) * d(2))).epsilon(1e-10));
}

TEST_CASE("Eckart-Young identity and monotone error on random 50-point sets") {
  for (unsigned seed = 0; seed < 5; ++seed) {
    const auto s = random_sites(50, 100 + seed);
    const double rho = 5.0 + 10.0 * seed;
    const Eigen::MatrixXd xi = kernel_oracle(s, rho);
    const Eigen::VectorXd d = svd_spectrum(xi);
    double previous = INFINITY;
    double previous_fraction = 0.0;
    for (std::size_t r = 1; r <= 50; ++r) {
      const SpatialBasis b = build_basis(s, rho, FixedRank{r});
      const double err2 = (xi - b.design * b.design.transpose()).squaredNorm();
      double tail = 0.0;
      for (Eigen::Index j = static_cast<Eigen::Index>(b.rank()); j < d.size(); ++j) tail += d(j) * d(j);
      CAPTURE(seed);
      CAPTURE(r);
      CHECK(std::abs(err2 - tail) <= 1e-8 * d.squaredNorm());
      CHECK(err2 <= previous + 1e-12);
      CHECK(b.captured_fraction() >= previous_fraction - 1e-15);
      previous = err2;
      previous_fraction = b.captured_fraction();
      const Eigen::MatrixXd gram = b.eigenvectors.transpose() * b.eigenvectors;
      CHECK((gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).norm() < 1e-8);
    }
  }
}

TEST_CASE("Nystrom evaluation") {
  const auto s = random_sites(40, 7);
  const double rho = 20.0;
  const SpatialBasis b = build_basis(s, rho, VarianceFraction{0.999});
  for (std::size_t i = 0; i < s.size(); ++i)
    CHECK((b.evaluate(s[i]).transpose() - b.design.row(static_cast<Eigen::Index>(i))).norm() < 1e-8);
  CHECK(b.evaluate({50.0, 50.0}).norm() < 1e-6);
  CHECK((evaluate_basis(b, s[3]) - b.evaluate(s[3])).norm() == 0.0);

  // residual kernel k - psi psi^T is PSD, so |residual(s, s')| <= sqrt(e(s) e(s'))
  const auto knots = random_sites(5, 8);
  const SpatialBasis small = build_basis(knots, 3.0, FixedRank{3});
  const double tail = small.spectrum(3);
  const Eigen::MatrixXd xi = kernel_oracle(knots, 3.0);
  CHECK(((xi - small.design * small.design.transpose()).cwiseAbs().maxCoeff()) <= tail + 1e-10);
  const auto probes = random_sites(30, 9);
  for (std::size_t a = 0; a + 1 < probes.size(); a += 2) {
    const Location p = probes[a], q = probes[a + 1];
    const Eigen::VectorXd psp = small.evaluate(p), psq = small.evaluate(q);
    const double ep = 1.0 - psp.squaredNorm();
    const double eq = 1.0 - psq.squaredNorm();
    CHECK(ep >= -1e-12);
    CHECK(eq >= -1e-12);
    const double k = squared_exponential(p, q, 3.0);
    CHECK(std::abs(k - psp.dot(psq)) <= std::sqrt(std::max(0.0, ep) * std::max(0.0, eq)) + 1e-12);
  }
}

TEST_CASE("basis is invariant to item order") {
  auto s = random_sites(25, 12);
  const SpatialBasis b = build_basis(s, 10.0, FixedRank{8});
  std::vector<std::size_t> perm(s.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 gen(1);
  std::shuffle(perm.begin(), perm.end(), gen);
  std::vector<Location> t(s.size());
  for (std::size_t j = 0; j < s.size(); ++j) t[j] = s[perm[j]];
  const SpatialBasis c = build_basis(t, 10.0, FixedRank{8});
  const Eigen::MatrixXd pb = b.design * b.design.transpose();
  const Eigen::MatrixXd pc = c.design * c.design.transpose();
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      CHECK(std::abs(pc(i, j) - pb(perm[i], perm[j])) < 1e-10);
}

TEST_CASE("iterative eigensolver agrees with the dense one") {
  const auto s = random_sites(300, 21);
  const SpatialBasis dense = build_basis(s, 40.0, VarianceFraction{0.99}, EigenMethod::Dense);
  const SpatialBasis iter = build_basis(s, 40.0, VarianceFraction{0.99}, EigenMethod::Iterative);
  REQUIRE(dense.rank() == iter.rank());
  for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(dense.rank()); ++j)
    CHECK(iter.eigenvalues(j) == doctest::Approx(dense.eigenvalues(j)).epsilon(1e-8));
  const Eigen::MatrixXd a = dense.design * dense.design.transpose();
  const Eigen::MatrixXd b = iter.design * iter.design.transpose();
  CHECK((a - b).norm() / a.norm() < 1e-6);
}

TEST_CASE("radial and empty bases") {
  const auto s = random_sites(10, 3);
  const std::vector<Location> centers = {{0.2, 0.2}, {0.8, 0.8}};
  const SpatialBasis r = radial_basis(s, centers, 5.0);
  CHECK(r.rank() == 2);
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(r.design(static_cast<Eigen::Index>(i), 0) == doctest::Approx(squared_exponential(s[i], centers[0], 5.0)));
    CHECK((r.evaluate(s[i]).transpose() - r.design.row(static_cast<Eigen::Index>(i))).norm() < 1e-15);
  }
  const SpatialBasis e = empty_basis(4);
  CHECK(e.rank() == 0);
  CHECK(e.sites() == 4);
}

TEST_CASE("spectrum export") {
  const auto s = random_sites(10, 4);
  const SpatialBasis b = build_basis(s, 5.0, VarianceFraction{0.9});
  const auto path = std::filesystem::temp_directory_path() / "mrubric_spectrum.csv";
  export_spectrum_csv(b, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "index,eigenvalue,captured_fraction");
  std::size_t rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  CHECK(rows == static_cast<std::size_t>(b.spectrum.size()));
  std::filesystem::remove(path);
}
