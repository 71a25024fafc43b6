#pragma once

// Dense linear-algebra primitives shared by the integrators and metrics.
// Everything here is a pure function of its arguments.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "lindyn/error.hpp"

namespace lindyn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Relative tolerance for both the symmetry defect and the negative-eigenvalue
/// clamp in psd_sqrt.
inline constexpr double kPsdTolerance = 1e-10;

struct SvdTriple {
  Matrix u;  // rows x rows, orthogonal
  Vector s;  // min(rows, cols), nonincreasing
  Matrix v;  // cols x cols, orthogonal
};

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

/// Largest eigenvalue magnitude of a symmetric matrix.
inline double sym_op_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(m, Eigen::EigenvaluesOnly);
  const Vector& ev = eig.eigenvalues();
  return std::max(std::abs(ev(0)), std::abs(ev(ev.size() - 1)));
}

/// Spectral norm (largest singular value).
inline double op_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  if (m.isZero(0.0)) return 0.0;
  Eigen::BDCSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

inline double frobenius_sq(const Matrix& m) { return m.squaredNorm(); }

/// Operator norm of M - M^T. The Frobenius norm bounds it from above, so the
/// exact value is only computed when the cheap bound is inconclusive.
inline double symmetry_defect(const Matrix& m, double threshold) {
  Matrix skew = m - m.transpose();
  double fro = skew.norm();
  if (fro <= threshold) return fro;
  return op_norm(skew);
}

/// Square root of a symmetric positive semidefinite matrix via symmetric
/// eigendecomposition. Eigenvalues in (-1e-10 ||M||_op, 0) are clamped to 0.
inline Matrix psd_sqrt(const Matrix& m) {
  require(m.rows() == m.cols(), ErrorCode::DimensionMismatch,
          "psd_sqrt needs a square matrix");
  require(all_finite(m), ErrorCode::NonFinite, "psd_sqrt input has non-finite entries");
  if (m.size() == 0) return m;

  Matrix sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
  require(eig.info() == Eigen::Success, ErrorCode::NonFinite,
          "symmetric eigendecomposition failed");
  const Vector& ev = eig.eigenvalues();
  const double norm = std::max(std::abs(ev(0)), std::abs(ev(ev.size() - 1)));

  const double defect = symmetry_defect(m, kPsdTolerance * norm);
  require(defect <= kPsdTolerance * norm, ErrorCode::NonSymmetric,
          "symmetry defect " + std::to_string(defect) + " exceeds tolerance");
  require(ev(0) >= -kPsdTolerance * norm, ErrorCode::IndefiniteInput,
          "eigenvalue " + std::to_string(ev(0)) + " below clamp threshold");

  Vector root = ev.cwiseMax(0.0).cwiseSqrt();
  const Matrix& q = eig.eigenvectors();
  return q * root.asDiagonal() * q.transpose();
}

/// SVD with descending singular values and a deterministic sign convention:
/// for every pair, the entry of largest magnitude in the left vector is made
/// positive (lowest row index wins ties), and the right vector flips with it.
inline SvdTriple svd_desc(const Matrix& a) {
  require(all_finite(a), ErrorCode::NonFinite, "svd_desc input has non-finite entries");
  const Index rows = a.rows();
  const Index cols = a.cols();
  const Index n = std::min(rows, cols);

  if (a.isZero(0.0)) {
    return {Matrix::Identity(rows, rows), Vector::Zero(n), Matrix::Identity(cols, cols)};
  }

  Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Matrix u = svd.matrixU();
  Matrix v = svd.matrixV();
  Vector s = svd.singularValues();

  // Eigen already sorts, but make the ordering contract explicit and stable.
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index i, Index j) { return s(i) > s(j); });
  SvdTriple out{u, Vector(n), v};
  for (Index k = 0; k < n; ++k) {
    const Index src = order[static_cast<std::size_t>(k)];
    out.s(k) = s(src);
    out.u.col(k) = u.col(src);
    out.v.col(k) = v.col(src);
  }

  for (Index k = 0; k < n; ++k) {
    Index best = 0;
    double best_abs = -1.0;
    for (Index r = 0; r < rows; ++r) {
      const double mag = std::abs(out.u(r, k));
      if (mag > best_abs) {
        best_abs = mag;
        best = r;
      }
    }
    if (out.u(best, k) < 0.0) {
      out.u.col(k) *= -1.0;
      out.v.col(k) *= -1.0;
    }
  }
  return out;
}

/// Singular values only, descending.
inline Vector singular_values(const Matrix& a) {
  require(all_finite(a), ErrorCode::NonFinite, "singular_values input has non-finite entries");
  if (a.size() == 0) return Vector();
  if (a.isZero(0.0)) return Vector::Zero(std::min(a.rows(), a.cols()));
  Eigen::BDCSVD<Matrix> svd(a);
  return svd.singularValues();
}

/// ||A||_F^2 / ||A||_op^2.
inline double stable_rank(const Matrix& a) {
  const double fro = a.squaredNorm();
  require(fro > 0.0, ErrorCode::ZeroMatrix, "stable rank of the zero matrix");
  const double op = op_norm(a);
  return fro / (op * op);
}

}  // namespace lindyn
