#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace advlab {

using Vector = std::vector<double>;

/// Row-major dense matrix of finite doubles.
///
/// Sized constructors require positive dimensions; a default-constructed
/// matrix is the 0x0 placeholder. Entries passed in through the data
/// constructor are checked for finiteness. Element access is unchecked.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols);
  DenseMatrix(std::size_t rows, std::size_t cols, double fill);
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static DenseMatrix identity(std::size_t n);
  static DenseMatrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static DenseMatrix diagonal(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  bool all_finite() const noexcept;

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Basic arithmetic. All functions throw ShapeError on incompatible shapes.
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);     // a * b
DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b);  // a^T * b
DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b);  // a * b^T
DenseMatrix transpose(const DenseMatrix& a);
DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix subtract(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix scaled(const DenseMatrix& a, double factor);
double frobenius_norm(const DenseMatrix& a);
double max_abs(const DenseMatrix& a);

Vector column_means(const DenseMatrix& a);
// Adds `v` to every row (v.size() == a.cols()).
void add_row_vector(DenseMatrix& a, std::span<const double> v);
void subtract_row_vector(DenseMatrix& a, std::span<const double> v);
DenseMatrix gather_rows(const DenseMatrix& a, std::span<const std::size_t> indices);
DenseMatrix vstack(const DenseMatrix& top, const DenseMatrix& bottom);
DenseMatrix column_block(const DenseMatrix& a, std::size_t first, std::size_t count);
DenseMatrix row_block(const DenseMatrix& a, std::size_t first, std::size_t count);
DenseMatrix clip(const DenseMatrix& a, double lo, double hi);

// Throws DomainError naming `what` when a non-finite entry is present.
void require_finite(const DenseMatrix& a, const char* what);

struct EigenDecomposition {
  Vector eigenvalues;        // descending
  DenseMatrix eigenvectors;  // column i pairs with eigenvalues[i]
};

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// `symmetry_tol` bounds max |S(i,j) - S(j,i)|. Sweeps stop once the
/// off-diagonal Frobenius mass falls below 1e-10 * ||S||_F (at most 100
/// sweeps). Each eigenvector is sign-normalized so that its entry of
/// largest magnitude is positive, which makes the result deterministic.
EigenDecomposition sym_eigen(const DenseMatrix& s, double symmetry_tol = 1e-9);

/// argmin_M ||A M - B||_F^2 + lambda ||M||_F^2 via Cholesky on the normal
/// equations. lambda == 0 with a rank-deficient A throws SingularityError.
DenseMatrix ridge_solve(const DenseMatrix& a, const DenseMatrix& b, double lambda);

struct LassoOptions {
  double tol = 1e-8;
  std::size_t max_sweeps = 10'000;
};

/// Coordinate-descent minimizer of 0.5 ||A x - b||^2 + lambda ||x||_1.
/// Throws ConvergenceError (carrying the last iterate) after max_sweeps.
Vector lasso_solve(const DenseMatrix& a, std::span<const double> b, double lambda,
                   LassoOptions options = {});

/// Same problem expressed through the Gram matrix G = A^T A and c = A^T b,
/// so many right-hand sides can share one factorization-free setup.
Vector lasso_solve_gram(const DenseMatrix& gram, std::span<const double> atb, double lambda,
                        LassoOptions options = {});

/// Minimum Pearson correlation over all column pairs of `m`.
double min_pairwise_column_correlation(const DenseMatrix& m);

}  // namespace advlab
