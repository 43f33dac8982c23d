#include "mrubric/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "mrubric/errors.hpp"
#include "mrubric/rng.hpp"

namespace mrubric {

double squared_exponential(const Location& a, const Location& b, double rho) noexcept {
  const double dx = a.longitude - b.longitude;
  const double dy = a.latitude - b.latitude;
  return std::exp(-rho * (dx * dx + dy * dy));
}

Eigen::MatrixXd build_covariogram(std::span<const Location> locations, double rho) {
  if (!(rho > 0.0)) throw Error(ErrorKind::Configuration, "bandwidth rho must be positive");
  const auto n = static_cast<Eigen::Index>(locations.size());
  Eigen::MatrixXd xi(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    xi(i, i) = 1.0;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double k = squared_exponential(locations[static_cast<std::size_t>(i)],
                                           locations[static_cast<std::size_t>(j)], rho);
      xi(i, j) = k;
      xi(j, i) = k;
    }
  }
  return xi;
}

namespace {

// Smallest r whose leading squared eigenvalues reach fraction * total, or 0
// when the supplied (possibly partial) spectrum does not reach it.
std::size_t rank_for_fraction(const Eigen::VectorXd& values, double total, double fraction) {
  const double target = fraction * total;
  double cumulative = 0.0;
  for (Eigen::Index d = 0; d < values.size(); ++d) {
    cumulative += values(d) * values(d);
    if (cumulative >= target) return static_cast<std::size_t>(d + 1);
  }
  return 0;
}

void clamp_spectrum(Eigen::VectorXd& values) {
  if (values.size() == 0) return;
  const double threshold = 1e-10 * std::max(values(0), 0.0);
  for (Eigen::Index d = 0; d < values.size(); ++d)
    if (values(d) < threshold) values(d) = 0.0;
}

std::size_t positive_count(const Eigen::VectorXd& values) {
  return static_cast<std::size_t>((values.array() > 0.0).count());
}

Eigen::MatrixXd orthonormal_basis(const Eigen::MatrixXd& m) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
  return qr.householderQ() * Eigen::MatrixXd::Identity(m.rows(), m.cols());
}

}  // namespace

std::size_t select_rank(const Eigen::VectorXd& eigenvalues, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw Error(ErrorKind::Configuration, "variance fraction must lie in (0, 1]");
  const double total = eigenvalues.squaredNorm();
  if (!(total > 0.0)) throw Error(ErrorKind::DegenerateKernel, "covariogram spectrum is all zero");
  const std::size_t r = rank_for_fraction(eigenvalues, total, fraction);
  return r == 0 ? static_cast<std::size_t>(eigenvalues.size()) : r;
}

std::pair<Eigen::VectorXd, Eigen::MatrixXd> leading_eigenpairs(const Eigen::MatrixXd& matrix,
                                                               std::size_t count, double tolerance,
                                                               std::uint64_t seed) {
  const Eigen::Index n = matrix.rows();
  const auto k = static_cast<Eigen::Index>(count);
  if (k == 0) return {Eigen::VectorXd(0), Eigen::MatrixXd(n, 0)};
  const Eigen::Index block = std::min<Eigen::Index>(n, k + std::max<Eigen::Index>(10, k / 4));

  Rng rng(seed);
  Eigen::MatrixXd q(n, block);
  for (Eigen::Index j = 0; j < block; ++j)
    for (Eigen::Index i = 0; i < n; ++i) q(i, j) = rng.normal();
  q = orthonormal_basis(q);

  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
  for (int iter = 0; iter < 1000; ++iter) {
    const Eigen::MatrixXd z = matrix * q;
    Eigen::MatrixXd t = q.transpose() * z;
    t = 0.5 * (t + t.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(t);
    const Eigen::VectorXd ritz = eig.eigenvalues().reverse();
    const Eigen::MatrixXd w = eig.eigenvectors().rowwise().reverse();
    values = ritz.head(k);
    vectors = q * w.leftCols(k);
    const Eigen::MatrixXd residual = z * w.leftCols(k) - vectors * values.asDiagonal();
    const double scale = std::max(std::abs(values(0)), 1e-300);
    if (residual.colwise().norm().maxCoeff() <= tolerance * scale || block == n) break;
    q = orthonormal_basis(z);
  }
  return {values, vectors};
}

SpatialBasis build_basis(std::span<const Location> locations, double rho, const RankRule& rule,
                         EigenMethod method) {
  const auto n = locations.size();
  if (const auto* fixed = std::get_if<FixedRank>(&rule); fixed && fixed->rank > n)
    throw Error(ErrorKind::Rank, "requested rank " + std::to_string(fixed->rank) +
                                     " exceeds the number of sites " + std::to_string(n));
  SpatialBasis basis;
  basis.kind = BasisKind::Spectral;
  basis.knots.assign(locations.begin(), locations.end());
  basis.bandwidth = rho;
  if (n == 0) {
    basis.design = Eigen::MatrixXd(0, 0);
    basis.eigenvectors = Eigen::MatrixXd(0, 0);
    return basis;
  }

  const Eigen::MatrixXd xi = build_covariogram(locations, rho);
  basis.total_squared = xi.squaredNorm();
  if (method == EigenMethod::Auto)
    method = n <= kDenseEigenLimit ? EigenMethod::Dense : EigenMethod::Iterative;

  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
  std::size_t rank = 0;
  if (method == EigenMethod::Dense) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(xi);
    if (eig.info() != Eigen::Success)
      throw Error(ErrorKind::DegenerateKernel, "covariogram eigendecomposition failed");
    values = eig.eigenvalues().reverse();
    vectors = eig.eigenvectors().rowwise().reverse();
    clamp_spectrum(values);
    if (const auto* fixed = std::get_if<FixedRank>(&rule)) {
      rank = fixed->rank;
    } else {
      const double fraction = std::get<VarianceFraction>(rule).fraction;
      rank = select_rank(values, fraction);
    }
  } else if (const auto* fixed = std::get_if<FixedRank>(&rule)) {
    rank = fixed->rank;
    std::tie(values, vectors) = leading_eigenpairs(xi, rank);
    clamp_spectrum(values);
  } else {
    const double fraction = std::get<VarianceFraction>(rule).fraction;
    std::size_t count = std::min<std::size_t>(n, 64);
    for (;;) {
      std::tie(values, vectors) = leading_eigenpairs(xi, count);
      clamp_spectrum(values);
      rank = rank_for_fraction(values, basis.total_squared, fraction);
      if (rank > 0 || count == n) break;
      count = std::min(n, 2 * count);
    }
    if (rank == 0) rank = count;
  }

  rank = std::min(rank, positive_count(values));
  const auto r = static_cast<Eigen::Index>(rank);
  basis.spectrum = values;
  basis.eigenvalues = values.head(r);
  basis.eigenvectors = vectors.leftCols(r);
  basis.design = basis.eigenvectors * basis.eigenvalues.cwiseSqrt().asDiagonal();
  return basis;
}

SpatialBasis radial_basis(std::span<const Location> sites, std::span<const Location> centers,
                          double rho) {
  if (!(rho > 0.0)) throw Error(ErrorKind::Configuration, "bandwidth rho must be positive");
  SpatialBasis basis;
  basis.kind = BasisKind::Radial;
  basis.knots.assign(centers.begin(), centers.end());
  basis.bandwidth = rho;
  basis.design.resize(static_cast<Eigen::Index>(sites.size()),
                      static_cast<Eigen::Index>(centers.size()));
  for (std::size_t i = 0; i < sites.size(); ++i)
    basis.design.row(static_cast<Eigen::Index>(i)) = basis.evaluate(sites[i]).transpose();
  return basis;
}

SpatialBasis empty_basis(std::size_t sites) {
  SpatialBasis basis;
  basis.design = Eigen::MatrixXd(static_cast<Eigen::Index>(sites), 0);
  basis.eigenvectors = Eigen::MatrixXd(static_cast<Eigen::Index>(sites), 0);
  return basis;
}

double SpatialBasis::captured_fraction() const noexcept {
  if (kind == BasisKind::Radial) return 1.0;
  if (!(total_squared > 0.0)) return 0.0;
  return eigenvalues.squaredNorm() / total_squared;
}

Eigen::VectorXd SpatialBasis::evaluate(const Location& s) const {
  const auto r = static_cast<Eigen::Index>(rank());
  Eigen::VectorXd psi(r);
  if (r == 0) return psi;
  if (kind == BasisKind::Radial) {
    for (Eigen::Index j = 0; j < r; ++j)
      psi(j) = squared_exponential(s, knots[static_cast<std::size_t>(j)], bandwidth);
    return psi;
  }
  Eigen::VectorXd k(static_cast<Eigen::Index>(knots.size()));
  for (std::size_t i = 0; i < knots.size(); ++i)
    k(static_cast<Eigen::Index>(i)) = squared_exponential(s, knots[i], bandwidth);
  psi = (eigenvectors.transpose() * k).cwiseQuotient(eigenvalues.cwiseSqrt());
  return psi;
}

Eigen::VectorXd evaluate_basis(const SpatialBasis& basis, const Location& s) {
  return basis.evaluate(s);
}

void export_spectrum_csv(const SpatialBasis& basis, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << "index,eigenvalue,captured_fraction\n";
  out.precision(17);
  double cumulative = 0.0;
  for (Eigen::Index d = 0; d < basis.spectrum.size(); ++d) {
    cumulative += basis.spectrum(d) * basis.spectrum(d);
    out << d + 1 << ',' << basis.spectrum(d) << ','
        << (basis.total_squared > 0.0 ? cumulative / basis.total_squared : 0.0) << '\n';
  }
}

}  // namespace mrubric
