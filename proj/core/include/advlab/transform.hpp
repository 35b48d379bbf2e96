#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>

#include "advlab/linalg.hpp"

namespace advlab {

// Mean-centered principal component model. Columns of `w` are orthonormal.
struct PcaModel {
  Vector mean;         // p
  DenseMatrix w;       // p x q
  Vector eigenvalues;  // all p covariance eigenvalues, descending

  std::size_t input_size() const { return w.rows(); }
  std::size_t components() const { return w.cols(); }
  void validate() const;

  friend bool operator==(const PcaModel&, const PcaModel&) = default;
};

/// Eigendecomposition of the (n-1)-normalized covariance of X; keeps the
/// leading q eigenvectors. Requires n >= 2 and 1 <= q <= p.
PcaModel fit_pca(const DenseMatrix& x, std::size_t q);

// Restricts a fitted model to its leading q components (q <= components()).
PcaModel truncate_pca(const PcaModel& m, std::size_t q);

DenseMatrix pca_project(const PcaModel& m, const DenseMatrix& x);      // (X - mean) W
DenseMatrix pca_reconstruct(const PcaModel& m, const DenseMatrix& y);  // Y W^T + mean

// Fraction of eigenvalue mass in the first q entries. Negative entries count as 0.
double variance_preservation(std::span<const double> eigenvalues, std::size_t q);

/// rows x p matrix whose columns are alpha_j * u + eps_j (alpha_j in [0.5, 1.5])
/// with every row rescaled to unit norm. The minimum pairwise column
/// correlation is verified to be >= corr_min; on failure the noise scale is
/// halved and the draw repeated, up to 8 attempts in total.
DenseMatrix build_correlated_matrix(std::size_t rows, std::size_t p, double corr_min,
                                    std::uint64_t seed,
                                    std::optional<double> noise_scale = std::nullopt);

/// Designed linear mapping Y = (X - mean) C^T + omega, C = [B; A].
/// B holds the leading p_b principal directions as rows; A is a correlated
/// design from build_correlated_matrix.
struct DlmModel {
  DenseMatrix c;  // p_c x p
  std::size_t p_b = 0;
  double sigma = 0.0;
  double corr_min = 0.95;
  PcaModel base_pca;
  std::uint64_t seed = 0;

  std::size_t input_size() const { return c.cols(); }
  std::size_t output_size() const { return c.rows(); }
  void validate() const;

  friend bool operator==(const DlmModel&, const DlmModel&) = default;
};

DlmModel fit_dlm(const DenseMatrix& x, std::size_t p_c, double pca_fraction, double sigma,
                 std::uint64_t seed, double corr_min = 0.95);
// Reuses a fitted PCA; base.components() must be at least round(pca_fraction * p_c).
DlmModel fit_dlm(const PcaModel& base, std::size_t p_c, double pca_fraction, double sigma,
                 std::uint64_t seed, double corr_min = 0.95);

// omega is i.i.d. Normal(0, sigma^2), drawn row-major from noise_seed.
DenseMatrix dlm_transform(const DlmModel& m, const DenseMatrix& x, std::uint64_t noise_seed);

enum class InversionMode { ridge, lasso };

/// Affine map X_hat = (Y - y_offset) * map + x_offset learned from surrogate pairs.
struct InversionResult {
  DenseMatrix map;  // p_c x p
  Vector y_offset;
  Vector x_offset;
  DenseMatrix reconstructed;  // training reconstruction, n x p
  double mean_l2_error = 0.0;
};

/// Ridge fits all pixel columns jointly; lasso fits one column at a time by
/// coordinate descent on the shared Gram matrix of centered Y.
InversionResult invert_linear_map(const DenseMatrix& y, const DenseMatrix& x, InversionMode mode,
                                  double lambda);
DenseMatrix apply_inversion(const InversionResult& inv, const DenseMatrix& y);

// Mean over rows of ||a_i - b_i||_2.
double mean_row_l2(const DenseMatrix& a, const DenseMatrix& b);

enum class BoundKind { lower, upper };

/// lower: constant * sigma^2 * s * ln(p / s) / p_c (requires p > s)
/// upper: f_c * s * ln(p) / p_c
double eval_bounds(BoundKind kind, double constant, double sigma, double s, double p, double p_c,
                   double f_c);

}  // namespace advlab
