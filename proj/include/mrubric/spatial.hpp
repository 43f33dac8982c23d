#pragma once

// Fixed-rank kriging basis: squared-exponential covariogram over item
// locations, its optimal low-rank spectral factor, and out-of-sample
// (Nystrom) evaluation of the basis functions.

#include <Eigen/Dense>

#include <filesystem>
#include <span>
#include <vector>

#include "mrubric/types.hpp"

namespace mrubric {

/// Xi_ij = exp(-rho * ||s_i - s_j||^2), distances in raw degree coordinates.
Eigen::MatrixXd build_covariogram(std::span<const Location> locations, double rho);

double squared_exponential(const Location& a, const Location& b, double rho) noexcept;

/// Smallest r with sum_{d<=r} D_d^2 / sum_d D_d^2 >= fraction.
/// Eigenvalues must be sorted descending and nonnegative.
std::size_t select_rank(const Eigen::VectorXd& eigenvalues, double fraction);

enum class BasisKind { Spectral, Radial };

enum class EigenMethod {
  Auto,       // dense up to kDenseEigenLimit sites, iterative above
  Dense,
  Iterative,  // block subspace iteration for the leading eigenpairs
};

inline constexpr std::size_t kDenseEigenLimit = 4000;

struct SpatialBasis {
  BasisKind kind = BasisKind::Spectral;
  /// Spectral: the I item locations. Radial: the basis-function centres.
  std::vector<Location> knots;
  double bandwidth = 1.0;
  /// Retained eigenvalues D_r (spectral only), descending.
  Eigen::VectorXd eigenvalues;
  /// Gamma_r, I x r with orthonormal columns (spectral only).
  Eigen::MatrixXd eigenvectors;
  /// Psi, one row psi(s_i)^T per item site.
  Eigen::MatrixXd design;
  /// Every eigenvalue that was computed, descending, negatives clamped.
  Eigen::VectorXd spectrum;
  /// sum of D_d^2 over the full spectrum (= ||Xi||_F^2).
  double total_squared = 0.0;

  std::size_t rank() const noexcept { return static_cast<std::size_t>(design.cols()); }
  std::size_t sites() const noexcept { return static_cast<std::size_t>(design.rows()); }
  double captured_fraction() const noexcept;

  /// psi(s). Spectral bases use the Nystrom extension
  /// k(s)^T Gamma_r D_r^{-1/2}; radial bases evaluate the kernels directly.
  Eigen::VectorXd evaluate(const Location& s) const;
};

/// Spectral basis over the given sites. Eigenvalues below 1e-10 * D_1 are
/// clamped to zero and never retained.
SpatialBasis build_basis(std::span<const Location> locations, double rho, const RankRule& rule,
                         EigenMethod method = EigenMethod::Auto);

/// Gaussian radial basis functions psi_j(s) = exp(-rho ||s - c_j||^2).
SpatialBasis radial_basis(std::span<const Location> sites, std::span<const Location> centers,
                          double rho);

/// A rank-0 basis (no spatial term) over the given number of sites.
SpatialBasis empty_basis(std::size_t sites);

Eigen::VectorXd evaluate_basis(const SpatialBasis& basis, const Location& s);

/// Leading eigenpairs of a symmetric PSD matrix by block subspace iteration
/// with Rayleigh-Ritz extraction. Returns (values descending, vectors).
std::pair<Eigen::VectorXd, Eigen::MatrixXd> leading_eigenpairs(const Eigen::MatrixXd& matrix,
                                                               std::size_t count,
                                                               double tolerance = 1e-8,
                                                               std::uint64_t seed = 7);

/// CSV with columns index, eigenvalue, captured_fraction.
void export_spectrum_csv(const SpatialBasis& basis, const std::filesystem::path& path);

}  // namespace mrubric
