#include "advlab/linalg.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "advlab/error.hpp"

namespace advlab {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap view(const DenseMatrix& m) {
  return ConstMap(m.data().data(), static_cast<Eigen::Index>(m.rows()),
                  static_cast<Eigen::Index>(m.cols()));
}

MutMap view(DenseMatrix& m) {
  return MutMap(m.data().data(), static_cast<Eigen::Index>(m.rows()),
                static_cast<Eigen::Index>(m.cols()));
}

std::string dims(const DenseMatrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const DenseMatrix& a, const DenseMatrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shapes " + dims(a) + " and " + dims(b) + " differ");
  }
}

void require_positive_dims(std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) {
    throw ShapeError("DenseMatrix: dimensions must be positive, got " + std::to_string(rows) +
                     "x" + std::to_string(cols));
  }
}

// Solves (L L^T) X = rhs in place, given lower-triangular L stored row-major.
void cholesky_solve_inplace(const DenseMatrix& l, DenseMatrix& rhs) {
  const std::size_t n = l.rows();
  const std::size_t m = rhs.cols();
  for (std::size_t i = 0; i < n; ++i) {
    auto ri = rhs.row(i);
    for (std::size_t k = 0; k < i; ++k) {
      const double lik = l(i, k);
      if (lik == 0.0) continue;
      auto rk = rhs.row(k);
      for (std::size_t j = 0; j < m; ++j) ri[j] -= lik * rk[j];
    }
    const double inv = 1.0 / l(i, i);
    for (std::size_t j = 0; j < m; ++j) ri[j] *= inv;
  }
  for (std::size_t ii = n; ii-- > 0;) {
    auto ri = rhs.row(ii);
    for (std::size_t k = ii + 1; k < n; ++k) {
      const double lki = l(k, ii);
      if (lki == 0.0) continue;
      auto rk = rhs.row(k);
      for (std::size_t j = 0; j < m; ++j) ri[j] -= lki * rk[j];
    }
    const double inv = 1.0 / l(ii, ii);
    for (std::size_t j = 0; j < m; ++j) ri[j] *= inv;
  }
}

}  // namespace

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols) : DenseMatrix(rows, cols, 0.0) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols) {
  require_positive_dims(rows, cols);
  if (!std::isfinite(fill)) throw DomainError("DenseMatrix: non-finite fill value");
  data_.assign(rows * cols, fill);
}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require_positive_dims(rows, cols);
  if (data_.size() != rows * cols) {
    throw ShapeError("DenseMatrix: " + std::to_string(data_.size()) + " values for a " +
                     std::to_string(rows) + "x" + std::to_string(cols) + " matrix");
  }
  if (!all_finite()) throw DomainError("DenseMatrix: non-finite entry in input data");
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseMatrix DenseMatrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("DenseMatrix::from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return DenseMatrix(r, c, std::move(data));
}

DenseMatrix DenseMatrix::diagonal(std::span<const double> values) {
  DenseMatrix m(values.size(), values.size());
  for (std::size_t i = 0; i < values.size(); ++i) m(i, i) = values[i];
  return m;
}

bool DenseMatrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: " + dims(a) + " * " + dims(b));
  DenseMatrix out(a.rows(), b.cols());
  view(out).noalias() = view(a) * view(b);
  return out;
}

DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows()) throw ShapeError("matmul_tn: " + dims(a) + "^T * " + dims(b));
  DenseMatrix out(a.cols(), b.cols());
  view(out).noalias() = view(a).transpose() * view(b);
  return out;
}

DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt: " + dims(a) + " * " + dims(b) + "^T");
  DenseMatrix out(a.rows(), b.rows());
  view(out).noalias() = view(a) * view(b).transpose();
  return out;
}

DenseMatrix transpose(const DenseMatrix& a) {
  DenseMatrix out(a.cols(), a.rows());
  view(out) = view(a).transpose();
  return out;
}

DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b) {
  require_same_shape(a, b, "add");
  DenseMatrix out = a;
  view(out) += view(b);
  return out;
}

DenseMatrix subtract(const DenseMatrix& a, const DenseMatrix& b) {
  require_same_shape(a, b, "subtract");
  DenseMatrix out = a;
  view(out) -= view(b);
  return out;
}

DenseMatrix scaled(const DenseMatrix& a, double factor) {
  DenseMatrix out = a;
  for (double& v : out.data()) v *= factor;
  return out;
}

double frobenius_norm(const DenseMatrix& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return std::sqrt(s);
}

double max_abs(const DenseMatrix& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

Vector column_means(const DenseMatrix& a) {
  Vector means(a.cols(), 0.0);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto row = a.row(r);
    for (std::size_t c = 0; c < a.cols(); ++c) means[c] += row[c];
  }
  if (a.rows() > 0) {
    for (double& m : means) m /= static_cast<double>(a.rows());
  }
  return means;
}

void add_row_vector(DenseMatrix& a, std::span<const double> v) {
  if (v.size() != a.cols()) throw ShapeError("add_row_vector: length mismatch");
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto row = a.row(r);
    for (std::size_t c = 0; c < a.cols(); ++c) row[c] += v[c];
  }
}

void subtract_row_vector(DenseMatrix& a, std::span<const double> v) {
  if (v.size() != a.cols()) throw ShapeError("subtract_row_vector: length mismatch");
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto row = a.row(r);
    for (std::size_t c = 0; c < a.cols(); ++c) row[c] -= v[c];
  }
}

DenseMatrix gather_rows(const DenseMatrix& a, std::span<const std::size_t> indices) {
  DenseMatrix out(indices.size(), a.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= a.rows()) throw ShapeError("gather_rows: index out of range");
    auto src = a.row(indices[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

DenseMatrix vstack(const DenseMatrix& top, const DenseMatrix& bottom) {
  if (top.empty()) return bottom;
  if (bottom.empty()) return top;
  if (top.cols() != bottom.cols()) throw ShapeError("vstack: " + dims(top) + " over " + dims(bottom));
  std::vector<double> data(top.values());
  data.insert(data.end(), bottom.values().begin(), bottom.values().end());
  return DenseMatrix(top.rows() + bottom.rows(), top.cols(), std::move(data));
}

DenseMatrix column_block(const DenseMatrix& a, std::size_t first, std::size_t count) {
  if (first + count > a.cols()) throw ShapeError("column_block: range exceeds " + dims(a));
  DenseMatrix out(a.rows(), count);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto src = a.row(r);
    std::copy(src.begin() + static_cast<std::ptrdiff_t>(first),
              src.begin() + static_cast<std::ptrdiff_t>(first + count), out.row(r).begin());
  }
  return out;
}

DenseMatrix row_block(const DenseMatrix& a, std::size_t first, std::size_t count) {
  if (first + count > a.rows()) throw ShapeError("row_block: range exceeds " + dims(a));
  std::vector<double> data(a.values().begin() + static_cast<std::ptrdiff_t>(first * a.cols()),
                           a.values().begin() +
                               static_cast<std::ptrdiff_t>((first + count) * a.cols()));
  return DenseMatrix(count, a.cols(), std::move(data));
}

DenseMatrix clip(const DenseMatrix& a, double lo, double hi) {
  DenseMatrix out = a;
  for (double& v : out.data()) v = std::clamp(v, lo, hi);
  return out;
}

void require_finite(const DenseMatrix& a, const char* what) {
  if (!a.all_finite()) throw DomainError(std::string(what) + ": non-finite entry");
}

EigenDecomposition sym_eigen(const DenseMatrix& s, double symmetry_tol) {
  if (s.rows() != s.cols()) throw ShapeError("sym_eigen: matrix is " + dims(s) + ", not square");
  const std::size_t n = s.rows();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (std::abs(s(i, j) - s(j, i)) > symmetry_tol) {
        throw SymmetryError("sym_eigen: |S(" + std::to_string(i) + "," + std::to_string(j) +
                            ") - S(" + std::to_string(j) + "," + std::to_string(i) +
                            ")| exceeds tolerance");
      }
    }
  }

  // Work on the symmetrized copy; vt holds eigenvectors as rows so that
  // rotations touch contiguous memory.
  DenseMatrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) = 0.5 * (s(i, j) + s(j, i));
  DenseMatrix vt = DenseMatrix::identity(n);

  const double norm = frobenius_norm(a);
  constexpr double kOffTol = 1e-10;
  constexpr int kMaxSweeps = 100;

  auto off_mass = [&] {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    return std::sqrt(2.0 * off);
  };

  double off = norm == 0.0 ? 0.0 : off_mass();
  bool converged = off <= kOffTol * norm;
  for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
    // Early sweeps skip rotations that are small relative to the mean
    // off-diagonal entry; they are revisited once the large ones are gone.
    const double threshold = sweep < 3 ? 0.2 * off / static_cast<double>(n * n) : 0.0;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double app = a(p, p);
        const double aqq = a(q, q);
        const double scaled_apq = 100.0 * std::abs(apq);
        // Rotation below resolution of both diagonal entries: drop it.
        if ((sweep > 3 && std::abs(app) + scaled_apq == std::abs(app) &&
             std::abs(aqq) + scaled_apq == std::abs(aqq)) ||
            std::abs(apq) < 1e-18 * norm) {
          a(p, q) = a(q, p) = 0.0;
          continue;
        }
        if (std::abs(apq) <= threshold) continue;
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * c;
        const double tau = sn / (1.0 + c);

        auto rp = a.row(p);
        auto rq = a.row(q);
        for (std::size_t k = 0; k < n; ++k) {
          if (k == p || k == q) continue;
          const double g = rp[k];
          const double h = rq[k];
          const double gp = g - sn * (h + g * tau);
          const double hq = h + sn * (g - h * tau);
          rp[k] = gp;
          rq[k] = hq;
          a(k, p) = gp;
          a(k, q) = hq;
        }
        a(p, p) = app - t * apq;
        a(q, q) = aqq + t * apq;
        a(p, q) = a(q, p) = 0.0;

        auto vp = vt.row(p);
        auto vq = vt.row(q);
        for (std::size_t k = 0; k < n; ++k) {
          const double g = vp[k];
          const double h = vq[k];
          vp[k] = g - sn * (h + g * tau);
          vq[k] = h + sn * (g - h * tau);
        }
      }
    }
    off = off_mass();
    converged = off <= kOffTol * norm;
  }
  if (!converged) {
    Vector diag(n);
    for (std::size_t i = 0; i < n; ++i) diag[i] = a(i, i);
    throw ConvergenceError("sym_eigen: Jacobi did not converge in 100 sweeps", std::move(diag));
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

  EigenDecomposition out;
  out.eigenvalues.resize(n);
  out.eigenvectors = DenseMatrix(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t src = order[k];
    out.eigenvalues[k] = a(src, src);
    auto v = vt.row(src);
    std::size_t arg = 0;
    for (std::size_t i = 1; i < n; ++i)
      if (std::abs(v[i]) > std::abs(v[arg])) arg = i;
    const double sign = v[arg] < 0.0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < n; ++i) out.eigenvectors(i, k) = sign * v[i];
  }
  return out;
}

DenseMatrix ridge_solve(const DenseMatrix& a, const DenseMatrix& b, double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw DomainError("ridge_solve: lambda must be finite and >= 0");
  }
  if (a.rows() != b.rows()) throw ShapeError("ridge_solve: A is " + dims(a) + ", B is " + dims(b));
  const std::size_t k = a.cols();
  DenseMatrix gram = matmul_tn(a, a);
  DenseMatrix rhs = matmul_tn(a, b);
  double max_diag = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    gram(i, i) += lambda;
    max_diag = std::max(max_diag, gram(i, i));
  }

  DenseMatrix l(k, k);
  const double floor = 1e-13 * std::max(max_diag, 1e-300);
  for (std::size_t j = 0; j < k; ++j) {
    double d = gram(j, j);
    for (std::size_t m = 0; m < j; ++m) d -= l(j, m) * l(j, m);
    if (!(d > floor)) {
      throw SingularityError(
          "ridge_solve: normal equations are singular (pivot " + std::to_string(j) +
          "); use lambda > 0 to regularize");
    }
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < k; ++i) {
      double v = gram(i, j);
      for (std::size_t m = 0; m < j; ++m) v -= l(i, m) * l(j, m);
      l(i, j) = v / ljj;
    }
  }
  cholesky_solve_inplace(l, rhs);
  return rhs;
}

Vector lasso_solve_gram(const DenseMatrix& gram, std::span<const double> atb, double lambda,
                        LassoOptions options) {
  const std::size_t k = gram.rows();
  if (gram.cols() != k || atb.size() != k) throw ShapeError("lasso_solve_gram: shape mismatch");
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw DomainError("lasso_solve: lambda must be finite and > 0");
  }
  bool any_column = false;
  for (std::size_t j = 0; j < k; ++j) any_column = any_column || gram(j, j) > 0.0;
  if (!any_column) throw DomainError("lasso_solve: every column of A is zero");

  Vector x(k, 0.0);
  Vector gx(k, 0.0);  // G x, kept in sync with x
  for (std::size_t sweep = 0; sweep < options.max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double gjj = gram(j, j);
      if (gjj <= 0.0) continue;
      const double rho = atb[j] - gx[j] + gjj * x[j];
      double next = 0.0;
      if (rho > lambda) {
        next = (rho - lambda) / gjj;
      } else if (rho < -lambda) {
        next = (rho + lambda) / gjj;
      }
      const double delta = next - x[j];
      if (delta != 0.0) {
        auto gj = gram.row(j);
        for (std::size_t i = 0; i < k; ++i) gx[i] += delta * gj[i];
        x[j] = next;
        max_change = std::max(max_change, std::abs(delta));
      }
    }
    if (max_change < options.tol) return x;
  }
  throw ConvergenceError("lasso_solve: no convergence after " +
                             std::to_string(options.max_sweeps) + " sweeps",
                         std::move(x));
}

Vector lasso_solve(const DenseMatrix& a, std::span<const double> b, double lambda,
                   LassoOptions options) {
  if (b.size() != a.rows()) throw ShapeError("lasso_solve: b length differs from A rows");
  const DenseMatrix gram = matmul_tn(a, a);
  Vector atb(a.cols(), 0.0);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto row = a.row(r);
    for (std::size_t c = 0; c < a.cols(); ++c) atb[c] += row[c] * b[r];
  }
  return lasso_solve_gram(gram, atb, lambda, options);
}

double min_pairwise_column_correlation(const DenseMatrix& m) {
  if (m.cols() < 2) throw DomainError("min_pairwise_column_correlation: need >= 2 columns");
  if (m.rows() < 2) throw DomainError("min_pairwise_column_correlation: need >= 2 rows");
  DenseMatrix z = m;
  const Vector means = column_means(m);
  subtract_row_vector(z, means);
  Vector norms(m.cols(), 0.0);
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto row = z.row(r);
    for (std::size_t c = 0; c < z.cols(); ++c) norms[c] += row[c] * row[c];
  }
  for (std::size_t c = 0; c < z.cols(); ++c) {
    double scale = 0.0;
    for (std::size_t r = 0; r < m.rows(); ++r) scale = std::max(scale, std::abs(m(r, c)));
    if (norms[c] <= 1e-24 * std::max(scale * scale, 1e-300) || norms[c] == 0.0) {
      throw DegenerateColumnError(
          "min_pairwise_column_correlation: column " + std::to_string(c) + " has zero variance", c);
    }
    norms[c] = std::sqrt(norms[c]);
  }
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto row = z.row(r);
    for (std::size_t c = 0; c < z.cols(); ++c) row[c] /= norms[c];
  }
  const DenseMatrix corr = matmul_tn(z, z);
  double lowest = 1.0;
  for (std::size_t i = 0; i < corr.rows(); ++i)
    for (std::size_t j = i + 1; j < corr.cols(); ++j) lowest = std::min(lowest, corr(i, j));
  return std::clamp(lowest, -1.0, 1.0);
}

}  // namespace advlab
