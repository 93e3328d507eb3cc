#pragma once

// Dense kernels shared by the pipeline: ridge systems and symmetric
// eigendecomposition. Everything here is a pure function of its inputs.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>

#include "wir/error.hpp"
#include "wir/matrix.hpp"
#include "wir/rng.hpp"

namespace wir {

inline constexpr double kSymmetryTolerance = 1e-9;
inline constexpr double kMinRidge = 1e-12;

namespace detail {

inline void check_square_symmetric(const Matrix& m, const char* who) {
  require(m.rows() == m.cols(), Errc::DimMismatch, std::string(who) + ": matrix not square");
  require(m.all_finite(), Errc::NonFinite, std::string(who) + ": matrix has NaN/Inf");
  const double tol = kSymmetryTolerance * std::max(1.0, max_abs(m.data()));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = i + 1; j < m.cols(); ++j)
      if (std::abs(m(i, j) - m(j, i)) > tol)
        fail(Errc::NotSymmetric, std::string(who) + ": |m(" + std::to_string(i) + "," +
                                     std::to_string(j) + ") - m(" + std::to_string(j) + "," +
                                     std::to_string(i) + ")| exceeds tolerance");
}

}  // namespace detail

/// Lower Cholesky factor of a symmetric positive definite matrix; the
/// strict upper triangle of the result is zero.
inline Matrix cholesky(Matrix a) {
  const std::size_t n = a.rows();
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= a(j, k) * a(j, k);
    require(d > 0.0 && std::isfinite(d), Errc::InvalidArgument,
            "cholesky: matrix not positive definite");
    const double ljj = std::sqrt(d);
    a(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= a(i, k) * a(j, k);
      a(i, j) = s / ljj;
      a(j, i) = 0.0;
    }
  }
  return a;
}

/// Solves L Lᵀ x = b given the lower factor L.
inline Vector cholesky_solve(const Matrix& l, std::span<const double> b) {
  const std::size_t n = l.rows();
  Vector y(b.begin(), b.end());
  for (std::size_t i = 0; i < n; ++i) {
    double s = y[i];
    for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * y[k];
    y[i] = s / l(i, i);
  }
  for (std::size_t i = n; i-- > 0;) {
    double s = y[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= l(k, i) * y[k];
    y[i] = s / l(i, i);
  }
  return y;
}

/// Solves (gram + lambda·I) a = rhs by Cholesky factorization.
///
/// `gram` must be symmetric positive semi-definite. lambda is clamped from
/// below at 1e-12 so the shifted system is always positive definite. One
/// step of iterative refinement is applied to tighten the residual on
/// poorly conditioned grams.
inline Vector ridge_solve(const Matrix& gram, std::span<const double> rhs, double lambda) {
  require(std::isfinite(lambda), Errc::NonFinite, "ridge_solve: lambda not finite");
  require(lambda > 0.0, Errc::InvalidArgument, "ridge_solve: lambda must be > 0");
  require(all_finite(rhs), Errc::NonFinite, "ridge_solve: rhs has NaN/Inf");
  detail::check_square_symmetric(gram, "ridge_solve");
  require(rhs.size() == gram.rows(), Errc::DimMismatch, "ridge_solve: rhs length");
  lambda = std::max(lambda, kMinRidge);

  const std::size_t n = gram.rows();
  Matrix shifted = gram;
  for (std::size_t i = 0; i < n; ++i) shifted(i, i) += lambda;
  const Matrix l = cholesky(shifted);
  Vector a = cholesky_solve(l, rhs);

  Vector residual(rhs.begin(), rhs.end());
  for (std::size_t i = 0; i < n; ++i) residual[i] -= dot(shifted.row(i), a);
  const Vector correction = cholesky_solve(l, residual);
  for (std::size_t i = 0; i < n; ++i) a[i] += correction[i];
  return a;
}

struct EigenDecomposition {
  Vector values;   ///< descending
  Matrix vectors;  ///< column i pairs with values[i]
};

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Eigenvalues come back sorted descending (stable on ties by original
/// diagonal position). Each eigenvector is signed so that its first
/// component with magnitude above 1e-12 is positive.
inline EigenDecomposition sym_eig(const Matrix& m) {
  detail::check_square_symmetric(m, "sym_eig");
  const std::size_t n = m.rows();
  Matrix a = m;
  // symmetrize exactly so the rotations see a symmetric matrix
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = 0.5 * (a(i, j) + a(j, i));
      a(i, j) = v;
      a(j, i) = v;
    }
  Matrix v = Matrix::identity(n);

  double total = 0.0;
  for (double x : a.data()) total += x * x;
  const double stop = total * 1e-30;

  constexpr int kMaxSweeps = 100;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off <= stop || off == 0.0) break;

    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double g = 100.0 * std::abs(apq);
        if (sweep > 3 && std::abs(a(p, p)) + g == std::abs(a(p, p)) &&
            std::abs(a(q, q)) + g == std::abs(a(q, q))) {
          a(p, q) = 0.0;
          a(q, p) = 0.0;
          continue;
        }
        const double theta = 0.5 * (a(q, q) - a(p, p)) / apq;
        double t = 1.0 / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        if (theta < 0.0) t = -t;
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        for (std::size_t k = 0; k < n; ++k) {
          if (k == p || k == q) continue;
          const double akp = a(k, p);
          const double akq = a(k, q);
          const double np = c * akp - s * akq;
          const double nq = s * akp + c * akq;
          a(k, p) = np;
          a(p, k) = np;
          a(k, q) = nq;
          a(q, k) = nq;
        }
        a(p, p) -= t * apq;
        a(q, q) += t * apq;
        a(p, q) = 0.0;
        a(q, p) = 0.0;

        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

  EigenDecomposition out{Vector(n), Matrix(n, n)};
  for (std::size_t c = 0; c < n; ++c) {
    const std::size_t src = order[c];
    out.values[c] = a(src, src);
    double sign = 1.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (std::abs(v(k, src)) > 1e-12) {
        sign = v(k, src) > 0.0 ? 1.0 : -1.0;
        break;
      }
    }
    for (std::size_t k = 0; k < n; ++k) out.vectors(k, c) = sign * v(k, src);
  }
  return out;
}

/// Rows of a seeded Gaussian matrix, orthonormalized by modified
/// Gram-Schmidt (two passes). Requires rows ≤ cols.
inline Matrix random_orthonormal_rows(std::size_t rows, std::size_t cols, SeededRng& rng) {
  require(rows <= cols, Errc::InvalidArgument, "orthonormal rows: rows > cols");
  Matrix p(rows, cols);
  for (double& x : p.data()) x = rng.normal();
  for (std::size_t i = 0; i < rows; ++i) {
    auto ri = p.row(i);
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t j = 0; j < i; ++j) {
        const double proj = dot(ri, p.row(j));
        axpy(-proj, p.row(j), ri);
      }
    }
    const double n = norm2(ri);
    require(n > 1e-12, Errc::InvalidArgument, "orthonormal rows: degenerate draw");
    for (double& x : ri) x /= n;
  }
  return p;
}

}  // namespace wir
