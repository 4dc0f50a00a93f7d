#pragma once

// Dense linear-algebra helpers shared by the bound and estimator modules.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include "cvalue/errors.hpp"

namespace cvalue {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

namespace detail {

inline void require_same_size(Eigen::Index a, Eigen::Index b, const char* what) {
  if (a != b) {
    std::ostringstream msg;
    msg << what << ": dimension mismatch (" << a << " vs " << b << ")";
    throw DimensionError(msg.str());
  }
}

inline void require_square(const Mat& m, const char* what) {
  if (m.rows() != m.cols()) {
    std::ostringstream msg;
    msg << what << ": expected a square matrix, got " << m.rows() << "x" << m.cols();
    throw DimensionError(msg.str());
  }
}

inline bool is_symmetric(const Mat& m, double rel_tol = 1e-10) {
  if (m.rows() != m.cols()) return false;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

}  // namespace detail

/// Relative threshold below which negative eigenvalues of a covariance are clamped to zero.
inline constexpr double kEigenClampRelative = 1e-10;

/// Symmetric square root S (S * S = sigma) of a positive semi-definite matrix.
///
/// Eigenvalues in [-1e-10 * lambda_max, 0) are treated as zero; anything more
/// negative means sigma is not a covariance and raises DomainError.
inline Mat sym_matrix_sqrt(const Mat& sigma) {
  detail::require_square(sigma, "sym_matrix_sqrt");
  if (!detail::is_symmetric(sigma)) throw DomainError("sym_matrix_sqrt: matrix is not symmetric");
  if (sigma.size() == 0) return sigma;
  const Mat sym = 0.5 * (sigma + sigma.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> eig(sym);
  if (eig.info() != Eigen::Success) throw NumericalError("sym_matrix_sqrt: eigendecomposition failed");
  Vec values = eig.eigenvalues();
  const double lambda_max = std::max(0.0, values.maxCoeff());
  if (values.minCoeff() < -kEigenClampRelative * lambda_max) {
    std::ostringstream msg;
    msg << "sym_matrix_sqrt: matrix is not positive semi-definite (min eigenvalue " << values.minCoeff()
        << ", max " << lambda_max << ")";
    throw DomainError(msg.str());
  }
  values = values.cwiseMax(0.0).cwiseSqrt();
  const Mat& vecs = eig.eigenvectors();
  Mat root = vecs * values.asDiagonal() * vecs.transpose();
  return 0.5 * (root + root.transpose());
}

/// Largest singular value, from the eigenvalues of M^T M.
inline double operator_norm(const Mat& m) {
  if (m.size() == 0) return 0.0;
  const Mat gram = m.transpose() * m;
  Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (gram + gram.transpose()), Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, eig.eigenvalues().maxCoeff()));
}

/// Ratio of largest to smallest singular value; +inf when the matrix is singular.
inline double condition_number(const Mat& m) {
  Eigen::BDCSVD<Mat> svd(m);
  const auto& s = svd.singularValues();
  if (s.size() == 0) return 1.0;
  const double smax = s(0);
  const double smin = s(s.size() - 1);
  if (!(smin > 0.0) || smin <= smax * 1e-15) return std::numeric_limits<double>::infinity();
  return smax / smin;
}

/// Orthogonal projector onto the complement of col(X).  X with zero columns gives the identity.
inline Mat orthocomplement_projector(const Mat& x) {
  const Eigen::Index n = x.rows();
  Mat proj = Mat::Identity(n, n);
  if (x.cols() == 0) return proj;
  Eigen::ColPivHouseholderQR<Mat> qr(x);
  if (qr.rank() < x.cols()) throw DomainError("design matrix is rank deficient");
  const Mat q = qr.householderQ() * Mat::Identity(n, x.cols());
  proj.noalias() -= q * q.transpose();
  return proj;
}

/// Hat matrix X (X^T X)^{-1} X^T.
inline Mat hat_matrix(const Mat& x) { return Mat::Identity(x.rows(), x.rows()) - orthocomplement_projector(x); }

/// Least-squares coefficients (X^T X)^{-1} X^T y; X must have full column rank.
inline Vec least_squares(const Mat& x, const Vec& y) {
  detail::require_same_size(x.rows(), y.size(), "least_squares");
  Eigen::ColPivHouseholderQR<Mat> qr(x);
  if (qr.rank() < x.cols()) throw DomainError("design matrix is rank deficient");
  return qr.solve(y);
}

/// Inverse of a symmetric positive-definite matrix via LDLT; DomainError if not SPD.
inline Mat spd_inverse(const Mat& m, const char* what) {
  Eigen::LDLT<Mat> ldlt(0.5 * (m + m.transpose()));
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    throw DomainError(std::string(what) + ": matrix is not positive definite");
  }
  return ldlt.solve(Mat::Identity(m.rows(), m.cols()));
}

inline Vec ones(Eigen::Index n) { return Vec::Ones(n); }

}  // namespace cvalue
