#pragma once

// Dense numerical kernel shared by the learners: truncated SVD, QR
// orthonormalization, pseudo-inverse least squares, subspace distance and
// singular-value soft-thresholding. Everything is a pure function of its
// arguments.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>

#include "safemtrl/errors.hpp"

namespace safemtrl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kOrthonormalTol = 1e-10;
inline constexpr double kPinvCutoff = 1e-10;
inline constexpr double kRankCutoff = 1e-12;

inline void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw ContractViolation(std::string(what) + ": non-finite entry");
}

/// ||Q^T Q - I||_F for the columns of q.
inline double orthonormality_defect(const Matrix& q) {
  return (q.transpose() * q - Matrix::Identity(q.cols(), q.cols())).norm();
}

/// A d x r matrix whose columns are orthonormal. Construction verifies the
/// invariant, so every BasisMatrix in circulation is a valid basis.
class BasisMatrix {
 public:
  BasisMatrix() = default;

  explicit BasisMatrix(Matrix q) : q_(std::move(q)) {
    require_finite(q_, "BasisMatrix");
    if (q_.cols() > q_.rows()) {
      throw DimensionError("BasisMatrix: more columns than rows");
    }
    const double defect = orthonormality_defect(q_);
    if (defect > kOrthonormalTol) {
      throw ContractViolation("BasisMatrix: columns not orthonormal (defect " +
                              std::to_string(defect) + ")");
    }
  }

  static BasisMatrix identity(Eigen::Index d, Eigen::Index r) {
    return BasisMatrix(Matrix::Identity(d, r));
  }

  const Matrix& matrix() const noexcept { return q_; }
  Eigen::Index rows() const noexcept { return q_.rows(); }
  Eigen::Index cols() const noexcept { return q_.cols(); }

 private:
  Matrix q_;
};

struct SvdResult {
  BasisMatrix left_singular;  // d x r
  Vector singular_values;     // descending
  Matrix right_singular;      // r x T, orthonormal rows
};

namespace detail {

// Flip each left vector so its largest-magnitude entry is positive, and its
// right partner along with it.
inline void canonicalize_signs(Matrix& u, Matrix& v) {
  for (Eigen::Index j = 0; j < u.cols(); ++j) {
    Eigen::Index arg = 0;
    u.col(j).cwiseAbs().maxCoeff(&arg);
    if (u(arg, j) < 0.0) {
      u.col(j) *= -1.0;
      v.col(j) *= -1.0;
    }
  }
}

// Re-orthonormalize nearly orthonormal columns (removes rounding drift from
// the SVD so the BasisMatrix tolerance holds for larger problems).
inline Matrix tidy_orthonormal(const Matrix& q) {
  if (orthonormality_defect(q) <= 1e-13 || q.cols() == 0) return q;
  Eigen::HouseholderQR<Matrix> qr(q);
  Matrix out = qr.householderQ() * Matrix::Identity(q.rows(), q.cols());
  const Matrix r = qr.matrixQR().topRows(q.cols()).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    if (r(j, j) < 0.0) out.col(j) *= -1.0;
  }
  return out;
}

}  // namespace detail

/// The r dominant singular triplets of m with canonical signs.
inline SvdResult top_r_svd(const Matrix& m, Eigen::Index r) {
  require_finite(m, "top_r_svd");
  if (r < 0 || r > std::min(m.rows(), m.cols())) {
    throw DimensionError("top_r_svd: rank " + std::to_string(r) + " exceeds min(" +
                         std::to_string(m.rows()) + ", " + std::to_string(m.cols()) + ")");
  }
  Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Matrix u = svd.matrixU().leftCols(r);
  Matrix v = svd.matrixV().leftCols(r);
  detail::canonicalize_signs(u, v);
  return SvdResult{BasisMatrix(detail::tidy_orthonormal(u)), svd.singularValues().head(r),
                   v.transpose()};
}

/// Largest singular value (spectral norm).
inline double spectral_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::BDCSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

/// Orthonormal basis of span(m) from a QR factorization with positive R diagonal.
inline BasisMatrix qr_orthonormalize(const Matrix& m) {
  require_finite(m, "qr_orthonormalize");
  if (m.cols() > m.rows()) throw DimensionError("qr_orthonormalize: more columns than rows");
  Eigen::JacobiSVD<Matrix> sv(m);
  const auto& s = sv.singularValues();
  if (s.size() > 0) {
    const double smin = s(s.size() - 1);
    if (!(smin > kRankCutoff * s(0))) {
      throw DegeneracyError("qr_orthonormalize: rank-deficient input (smallest singular value " +
                                std::to_string(smin) + ")",
                            smin);
    }
  }
  Eigen::HouseholderQR<Matrix> qr(m);
  Matrix q = qr.householderQ() * Matrix::Identity(m.rows(), m.cols());
  const Matrix r = qr.matrixQR().topRows(m.cols()).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  return BasisMatrix(std::move(q));
}

/// Minimum-norm minimizer of ||y - a w||_2 through the pseudo-inverse, with
/// singular values below kPinvCutoff * sigma_max(a) treated as zero.
inline Vector least_squares(const Matrix& a, const Vector& y) {
  if (a.rows() != y.size()) throw DimensionError("least_squares: row count differs from y");
  require_finite(a, "least_squares");
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(kPinvCutoff);
  return svd.solve(y);
}

/// ||(I - b1 b1^T) b2||_F, in [0, sqrt(r)].
inline double subspace_distance(const BasisMatrix& b1, const BasisMatrix& b2) {
  if (b1.rows() != b2.rows()) throw DimensionError("subspace_distance: row dimensions differ");
  const Matrix& q1 = b1.matrix();
  const Matrix& q2 = b2.matrix();
  return (q2 - q1 * (q1.transpose() * q2)).norm();
}

/// Proximal operator of lambda * nuclear norm: U diag(max(s - lambda, 0)) V^T.
inline Matrix svd_soft_threshold(const Matrix& m, double lambda) {
  if (!(lambda >= 0.0)) throw ParameterError("svd_soft_threshold: lambda must be >= 0");
  require_finite(m, "svd_soft_threshold");
  if (m.size() == 0) return m;
  Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector shrunk = (svd.singularValues().array() - lambda).max(0.0).matrix();
  return svd.matrixU() * shrunk.asDiagonal() * svd.matrixV().transpose();
}

}  // namespace safemtrl
