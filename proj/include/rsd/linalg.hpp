#ifndef RSD_LINALG_HPP
#define RSD_LINALG_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rsd/errors.hpp"

namespace rsd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using Index = Eigen::Index;

namespace linalg {

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

/// Maximum absolute row sum.
inline double inf_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  return m.cwiseAbs().rowwise().sum().maxCoeff();
}

inline double symmetry_residual(const Matrix& m) {
  return inf_norm(m - m.transpose());
}

inline void require_square(const Matrix& m, const std::string& name) {
  if (m.rows() != m.cols()) {
    throw DimensionError(name + " must be square, got " + std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()));
  }
}

/// Ascending eigenvalues of the symmetric part of m.
inline Vector sym_eigenvalues(const Matrix& m) {
  if (m.size() == 0) return Vector();
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

inline double min_eigenvalue(const Matrix& m) { return sym_eigenvalues(m).minCoeff(); }
inline double max_eigenvalue(const Matrix& m) { return sym_eigenvalues(m).maxCoeff(); }

/// Symmetric PSD square root through the spectral decomposition. Negative
/// eigenvalues (rounding) are clamped to zero, so singular inputs are fine.
inline Matrix sym_sqrt_psd(const Matrix& m) {
  if (m.size() == 0) return Matrix(0, 0);
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m));
  Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return symmetrize(es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose());
}

/// Numerical rank with the threshold max(rows, cols) * sigma_max * 1e-12.
inline int numerical_rank(const Matrix& m) {
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<Matrix> svd(m);
  const Vector& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  const double threshold = static_cast<double>(std::max(m.rows(), m.cols())) * s(0) * 1e-12;
  return static_cast<int>((s.array() > threshold).count());
}

/// 2-norm condition number; +inf when singular.
inline double condition_number(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m);
  const Vector& s = svd.singularValues();
  if (s.size() == 0) return 1.0;
  const double smin = s(s.size() - 1);
  if (smin == 0.0) return std::numeric_limits<double>::infinity();
  return s(0) / smin;
}

inline double spectral_radius(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> es(m, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline double spectral_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

inline Matrix block_diagonal(const std::vector<Matrix>& blocks) {
  Index total = 0;
  for (const auto& b : blocks) total += b.rows();
  Matrix out = Matrix::Zero(total, total);
  Index offset = 0;
  for (const auto& b : blocks) {
    out.block(offset, offset, b.rows(), b.cols()) = b;
    offset += b.rows();
  }
  return out;
}

/// Smallest principal angle between span{u} and span{v} for complex vectors,
/// computed from the sine so tiny angles keep full precision.
inline double principal_angle(const CVector& u, const CVector& v) {
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu == 0.0 || nv == 0.0) return M_PI / 2;
  const CVector uu = u / nu;
  const CVector vv = v / nv;
  const Complex proj = uu.dot(vv);  // conjugate-linear in the first argument
  const double sine = (vv - proj * uu).norm();
  const double cosine = std::abs(proj);
  return std::atan2(sine, cosine);
}

/// Angle between a vector and the subspace spanned by the orthonormal
/// columns of basis.
inline double angle_to_subspace(const Vector& v, const Matrix& orthonormal_basis) {
  const double nv = v.norm();
  if (nv == 0.0) return 0.0;
  const Vector unit = v / nv;
  const Vector residual = unit - orthonormal_basis * (orthonormal_basis.transpose() * unit);
  const double sine = std::min(1.0, residual.norm());
  return std::asin(sine);
}

/// Unit norm with the first non-negligible component real and positive.
inline CVector canonicalize(const CVector& v) {
  const double norm = v.norm();
  if (norm == 0.0) return v;
  CVector out = v / norm;
  const double cutoff = 1e-8 * out.cwiseAbs().maxCoeff();
  for (Index i = 0; i < out.size(); ++i) {
    if (std::abs(out(i)) > cutoff) {
      const Complex phase = out(i) / std::abs(out(i));
      out /= phase;
      out(i) = Complex(out(i).real(), 0.0);
      break;
    }
  }
  return out;
}

}  // namespace linalg
}  // namespace rsd

#endif  // RSD_LINALG_HPP
