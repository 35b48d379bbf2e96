#include "advlab/transform.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "advlab/error.hpp"
#include "advlab/random.hpp"

namespace advlab {
namespace {

constexpr int kCorrelatedAttempts = 8;

DenseMatrix centered(const DenseMatrix& x, std::span<const double> mean) {
  DenseMatrix out = x;
  subtract_row_vector(out, mean);
  return out;
}

void require_cols(const DenseMatrix& x, std::size_t p, const char* op) {
  if (x.cols() != p) {
    throw ShapeError(std::string(op) + ": expected " + std::to_string(p) + " columns, got " +
                     std::to_string(x.cols()));
  }
}

// One draw of the correlated design; empty result if a row or column degenerates.
DenseMatrix draw_correlated(std::size_t rows, std::size_t p, double scale, Rng& rng) {
  Vector u(rows);
  for (double& v : u) v = rng.normal();
  const double mu = std::accumulate(u.begin(), u.end(), 0.0) / static_cast<double>(rows);
  for (double& v : u) v -= mu;  // guarantees both signs, so no column is constant
  Vector alpha(p);
  for (double& a : alpha) a = rng.uniform(0.5, 1.5);

  DenseMatrix a(rows, p);
  for (std::size_t i = 0; i < rows; ++i) {
    auto row = a.row(i);
    double norm2 = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
      row[j] = alpha[j] * u[i] + (scale > 0.0 ? scale * rng.normal() : 0.0);
      norm2 += row[j] * row[j];
    }
    if (!(norm2 > 0.0)) return {};
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& v : row) v *= inv;
  }
  return a;
}

}  // namespace

void PcaModel::validate() const {
  if (w.empty()) throw ShapeError("PcaModel: no components");
  if (mean.size() != w.rows() || eigenvalues.size() != w.rows()) {
    throw ShapeError("PcaModel: mean/eigenvalue length must equal the input dimension");
  }
  const double scale = std::max(1.0, eigenvalues.front());
  for (std::size_t i = 0; i < eigenvalues.size(); ++i) {
    if (eigenvalues[i] < -1e-10 * scale) throw DomainError("PcaModel: negative eigenvalue");
    if (i > 0 && eigenvalues[i] > eigenvalues[i - 1]) {
      throw DomainError("PcaModel: eigenvalues not descending");
    }
  }
  const DenseMatrix gram = matmul_tn(w, w);
  for (std::size_t i = 0; i < gram.rows(); ++i) {
    for (std::size_t j = 0; j < gram.cols(); ++j) {
      if (std::abs(gram(i, j) - (i == j ? 1.0 : 0.0)) > 1e-8) {
        throw DomainError("PcaModel: components are not orthonormal");
      }
    }
  }
}

PcaModel fit_pca(const DenseMatrix& x, std::size_t q) {
  if (x.rows() < 2) throw DomainError("fit_pca: need at least 2 samples");
  if (q < 1 || q > x.cols()) {
    throw DomainError("fit_pca: q = " + std::to_string(q) + " outside [1, " +
                      std::to_string(x.cols()) + "]");
  }
  PcaModel m;
  m.mean = column_means(x);
  const DenseMatrix xc = centered(x, m.mean);
  DenseMatrix cov = matmul_tn(xc, xc);
  const double inv = 1.0 / static_cast<double>(x.rows() - 1);
  const std::size_t p = cov.rows();
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = i; j < p; ++j) {
      const double v = 0.5 * (cov(i, j) + cov(j, i)) * inv;
      cov(i, j) = v;
      cov(j, i) = v;
    }
  }
  EigenDecomposition eig = sym_eigen(cov);
  m.eigenvalues = std::move(eig.eigenvalues);
  m.w = column_block(eig.eigenvectors, 0, q);
  return m;
}

PcaModel truncate_pca(const PcaModel& m, std::size_t q) {
  if (q < 1 || q > m.components()) throw DomainError("truncate_pca: q out of range");
  return PcaModel{m.mean, column_block(m.w, 0, q), m.eigenvalues};
}

DenseMatrix pca_project(const PcaModel& m, const DenseMatrix& x) {
  require_cols(x, m.input_size(), "pca_project");
  return matmul(centered(x, m.mean), m.w);
}

DenseMatrix pca_reconstruct(const PcaModel& m, const DenseMatrix& y) {
  require_cols(y, m.components(), "pca_reconstruct");
  DenseMatrix x = matmul_nt(y, m.w);
  add_row_vector(x, m.mean);
  return x;
}

double variance_preservation(std::span<const double> eigenvalues, std::size_t q) {
  if (eigenvalues.empty()) throw EmptyInputError("variance_preservation: no eigenvalues");
  if (q > eigenvalues.size()) throw DomainError("variance_preservation: q exceeds dimension");
  double kept = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < eigenvalues.size(); ++i) {
    const double v = std::max(eigenvalues[i], 0.0);
    total += v;
    if (i < q) kept += v;
  }
  if (!(total > 0.0)) throw DomainError("variance_preservation: zero total variance");
  return std::min(kept / total, 1.0);
}

DenseMatrix build_correlated_matrix(std::size_t rows, std::size_t p, double corr_min,
                                    std::uint64_t seed, std::optional<double> noise_scale) {
  if (rows < 2) throw DomainError("build_correlated_matrix: need at least 2 rows");
  if (p < 2) throw DomainError("build_correlated_matrix: need at least 2 columns");
  if (!(corr_min > 0.0 && corr_min < 1.0)) {
    throw DomainError("build_correlated_matrix: corr_min must lie in (0, 1)");
  }
  double scale = noise_scale.value_or(0.5 * std::sqrt(0.25 * (1.0 - corr_min) / corr_min));
  if (!(scale >= 0.0) || !std::isfinite(scale)) {
    throw DomainError("build_correlated_matrix: noise scale must be >= 0");
  }
  Rng rng(seed);
  double last = -1.0;
  for (int attempt = 0; attempt < kCorrelatedAttempts; ++attempt, scale *= 0.5) {
    DenseMatrix a = draw_correlated(rows, p, scale, rng);
    if (a.empty()) continue;
    try {
      last = min_pairwise_column_correlation(a);
    } catch (const DegenerateColumnError&) {
      continue;
    }
    if (last >= corr_min) return a;
  }
  throw ConstructionError("build_correlated_matrix: minimum column correlation " +
                          std::to_string(last) + " below " + std::to_string(corr_min) +
                          " after " + std::to_string(kCorrelatedAttempts) + " attempts");
}

void DlmModel::validate() const {
  base_pca.validate();
  if (c.cols() != base_pca.input_size()) throw ShapeError("DlmModel: C width != PCA input size");
  if (p_b > c.rows() || p_b > base_pca.components()) {
    throw ShapeError("DlmModel: p_b exceeds available rows");
  }
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw DomainError("DlmModel: sigma must be >= 0");
  for (std::size_t k = 0; k < p_b; ++k) {
    for (std::size_t j = 0; j < c.cols(); ++j) {
      if (c(k, j) != base_pca.w(j, k)) {
        throw DomainError("DlmModel: row " + std::to_string(k) + " is not a PCA loading");
      }
    }
  }
  if (c.rows() > p_b) {
    const DenseMatrix a = row_block(c, p_b, c.rows() - p_b);
    if (min_pairwise_column_correlation(a) < corr_min) {
      throw DomainError("DlmModel: designed block is not correlated enough");
    }
  }
}

DlmModel fit_dlm(const PcaModel& base, std::size_t p_c, double pca_fraction, double sigma,
                 std::uint64_t seed, double corr_min) {
  const std::size_t p = base.input_size();
  if (p_c < 1 || p_c > p) throw DomainError("fit_dlm: p_c must lie in [1, p]");
  if (!(pca_fraction >= 0.0 && pca_fraction <= 1.0)) {
    throw DomainError("fit_dlm: pca_fraction must lie in [0, 1]");
  }
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw DomainError("fit_dlm: sigma must be >= 0");
  const auto p_b = static_cast<std::size_t>(std::llround(pca_fraction * static_cast<double>(p_c)));
  if (p_b > base.components()) {
    throw DomainError("fit_dlm: base PCA has " + std::to_string(base.components()) +
                      " components, " + std::to_string(p_b) + " needed");
  }

  DenseMatrix b;
  if (p_b > 0) b = transpose(column_block(base.w, 0, p_b));
  DenseMatrix a;
  if (p_c > p_b) a = build_correlated_matrix(p_c - p_b, p, corr_min, derive_seed(seed, 1));

  DlmModel m;
  m.c = vstack(b, a);
  m.p_b = p_b;
  m.sigma = sigma;
  m.corr_min = corr_min;
  m.base_pca = base;
  m.seed = seed;
  return m;
}

DlmModel fit_dlm(const DenseMatrix& x, std::size_t p_c, double pca_fraction, double sigma,
                 std::uint64_t seed, double corr_min) {
  if (p_c < 1 || p_c > x.cols()) throw DomainError("fit_dlm: p_c must lie in [1, p]");
  const auto p_b = static_cast<std::size_t>(std::llround(pca_fraction * static_cast<double>(p_c)));
  return fit_dlm(fit_pca(x, std::max<std::size_t>(p_b, 1)), p_c, pca_fraction, sigma, seed,
                 corr_min);
}

DenseMatrix dlm_transform(const DlmModel& m, const DenseMatrix& x, std::uint64_t noise_seed) {
  require_cols(x, m.input_size(), "dlm_transform");
  DenseMatrix y = matmul_nt(centered(x, m.base_pca.mean), m.c);
  if (m.sigma > 0.0) {
    Rng rng(noise_seed);
    for (double& v : y.data()) v += m.sigma * rng.normal();
  }
  return y;
}

InversionResult invert_linear_map(const DenseMatrix& y, const DenseMatrix& x, InversionMode mode,
                                  double lambda) {
  if (y.rows() != x.rows()) throw ShapeError("invert_linear_map: Y and X row counts differ");
  if (y.empty()) throw EmptyInputError("invert_linear_map: no surrogate pairs");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw DomainError("invert_linear_map: lambda must be >= 0");
  }
  InversionResult r;
  r.y_offset = column_means(y);
  r.x_offset = column_means(x);
  const DenseMatrix yc = centered(y, r.y_offset);
  const DenseMatrix xc = centered(x, r.x_offset);
  if (mode == InversionMode::ridge) {
    r.map = ridge_solve(yc, xc, lambda);
  } else {
    const DenseMatrix gram = matmul_tn(yc, yc);
    const DenseMatrix cross = matmul_tn(yc, xc);
    r.map = DenseMatrix(y.cols(), x.cols());
    Vector rhs(y.cols());
    for (std::size_t j = 0; j < x.cols(); ++j) {
      for (std::size_t k = 0; k < y.cols(); ++k) rhs[k] = cross(k, j);
      const Vector coef = lasso_solve_gram(gram, rhs, lambda);
      for (std::size_t k = 0; k < y.cols(); ++k) r.map(k, j) = coef[k];
    }
  }
  r.reconstructed = apply_inversion(r, y);
  r.mean_l2_error = mean_row_l2(x, r.reconstructed);
  return r;
}

DenseMatrix apply_inversion(const InversionResult& inv, const DenseMatrix& y) {
  require_cols(y, inv.map.rows(), "apply_inversion");
  DenseMatrix x = matmul(centered(y, inv.y_offset), inv.map);
  add_row_vector(x, inv.x_offset);
  return x;
}

double mean_row_l2(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("mean_row_l2: shape mismatch");
  if (a.empty()) throw EmptyInputError("mean_row_l2: no rows");
  double total = 0.0;
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto ra = a.row(r);
    auto rb = b.row(r);
    double s = 0.0;
    for (std::size_t c = 0; c < ra.size(); ++c) s += (ra[c] - rb[c]) * (ra[c] - rb[c]);
    total += std::sqrt(s);
  }
  return total / static_cast<double>(a.rows());
}

double eval_bounds(BoundKind kind, double constant, double sigma, double s, double p, double p_c,
                   double f_c) {
  if (!(s >= 1.0)) throw DomainError("eval_bounds: s must be >= 1");
  if (!(p_c >= 1.0)) throw DomainError("eval_bounds: p_c must be >= 1");
  if (kind == BoundKind::lower) {
    if (!(p > s)) throw DomainError("eval_bounds: lower bound needs p > s");
    return constant * sigma * sigma * s * std::log(p / s) / p_c;
  }
  if (!(p >= 1.0)) throw DomainError("eval_bounds: p must be >= 1");
  return f_c * s * std::log(p) / p_c;
}

}  // namespace advlab
