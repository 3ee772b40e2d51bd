#ifndef RSD_RICCATI_HPP
#define RSD_RICCATI_HPP

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/Jacobi>

#include "rsd/errors.hpp"
#include "rsd/linalg.hpp"
#include "rsd/model.hpp"

namespace rsd {

enum class DareMethod { FixedPoint, Symplectic };

inline const char* to_string(DareMethod m) {
  return m == DareMethod::FixedPoint ? "fixed_point" : "symplectic";
}

/// Steady-state filter quantities for one sensor network.
struct DareSolution {
  Matrix P;         ///< priori covariance
  Matrix P_post;    ///< posteriori covariance
  Matrix K;         ///< steady gain P C^T (C P C^T + R)^-1; empty when only G is known
  Matrix A_closed;  ///< A (I + P G)^-1
  DareMethod method = DareMethod::FixedPoint;
  int iterations = 0;
  double residual = 0.0;            ///< DARE residual, infinity norm
  double posterior_residual = 0.0;  ///< |g(h(P_post)) - P_post|, infinity norm
  std::vector<std::string> warnings;
};

struct SymplecticSpectrum {
  Matrix S;
  std::vector<Complex> stable_eigenvalues;
  std::vector<CVector> stable_eigenvectors;  ///< canonicalized
  std::vector<bool> clustered;               ///< another stable eigenvalue nearby
  CMatrix X_block;
  CMatrix Y_block;
  double unit_circle_margin = 0.0;  ///< min | |lambda| - 1 |
};

struct SymplecticDare {
  DareSolution solution;
  SymplecticSpectrum spectrum;
};

/// Distance from the unit circle below which a symplectic matrix is treated
/// as having a unit-modulus eigenvalue.
inline constexpr double kUnitCircleMargin = 1e-8;

// ---------------------------------------------------------------------------
// Operators

/// h(X) = A X A^T + Q
inline Matrix lyapunov_step(const LinearSystem& sys, const Matrix& x) {
  return linalg::symmetrize(sys.A() * x * sys.A().transpose() + sys.Q());
}

/// g(X) = X - X C^T (C X C^T + R)^-1 C X
inline Matrix riccati_update(const SensorBank& bank, const Matrix& x) {
  if (bank.output_dim() == 0) return x;
  const Matrix& c = bank.C();
  const Matrix xct = x * c.transpose();
  const Matrix innovation = linalg::symmetrize(c * xct + bank.R());
  Eigen::LDLT<Matrix> ldlt(innovation);
  return linalg::symmetrize(x - xct * ldlt.solve(xct.transpose()));
}

/// g expressed through the information matrix: (I + X G)^-1 X.
inline Matrix riccati_update_information(const Matrix& g, const Matrix& x) {
  const Index n = x.rows();
  Eigen::PartialPivLU<Matrix> lu(Matrix::Identity(n, n) + x * g);
  return linalg::symmetrize(lu.solve(x));
}

/// A (I + P G)^-1
inline Matrix closed_loop_matrix(const LinearSystem& sys, const Matrix& g, const Matrix& p) {
  const Index n = sys.n();
  const Matrix m = Matrix::Identity(n, n) + p * g;
  // X (I + P G) = A  <=>  (I + P G)^T X^T = A^T
  return m.transpose().partialPivLu().solve(sys.A().transpose()).transpose();
}

/// || A (I + P G)^-1 P A^T - P + Q ||_inf
inline double dare_residual(const LinearSystem& sys, const Matrix& g, const Matrix& p) {
  const Matrix r = closed_loop_matrix(sys, g, p) * p * sys.A().transpose() - p + sys.Q();
  return linalg::inf_norm(r);
}

inline double dare_tolerance(const Matrix& p) { return 1e-8 * (1.0 + linalg::inf_norm(p)); }

inline Matrix steady_gain(const SensorBank& bank, const Matrix& p) {
  if (bank.output_dim() == 0) return Matrix::Zero(p.rows(), 0);
  const Matrix pct = p * bank.C().transpose();
  const Matrix innovation = linalg::symmetrize(bank.C() * pct + bank.R());
  return innovation.ldlt().solve(pct.transpose()).transpose();
}

namespace detail {

inline void finish_solution(const LinearSystem& sys, const Matrix& g, DareSolution& sol) {
  sol.P = linalg::symmetrize(sol.P);
  sol.P_post = riccati_update_information(g, sol.P);
  sol.A_closed = closed_loop_matrix(sys, g, sol.P);
  sol.residual = dare_residual(sys, g, sol.P);
  sol.posterior_residual = linalg::inf_norm(
      riccati_update_information(g, lyapunov_step(sys, sol.P_post)) - sol.P_post);
  if (sol.residual > dare_tolerance(sol.P)) {
    throw SolverError("DARE residual " + std::to_string(sol.residual) +
                      " exceeds tolerance " + std::to_string(dare_tolerance(sol.P)));
  }
  if (linalg::min_eigenvalue(sol.P) <= 0.0) {
    throw SolverError("DARE solution is not positive definite");
  }
  const double rho = linalg::spectral_radius(sol.A_closed);
  if (rho >= 1.0) {
    throw SolverError("closed-loop matrix is not Schur stable (spectral radius " +
                      std::to_string(rho) + ")");
  }
}

}  // namespace detail

struct FixedPointOptions {
  double tolerance = 1e-12;
  int max_iterations = 100000;
};

/// Iterates P <- h(g(P)) from P = Q until the update is below
/// tolerance * (1 + |P|_inf).
inline DareSolution solve_dare_fixed_point(const LinearSystem& sys, const SensorBank& bank,
                                           const FixedPointOptions& options = {}) {
  if (bank.state_dim() != sys.n()) throw DimensionError("sensor bank / system dimension mismatch");
  const RankCheck obs = check_observability(sys, bank);
  if (!obs.pass) {
    throw SolverError("pair (A, C) is not observable (rank " + std::to_string(obs.rank) + " < " +
                      std::to_string(sys.n()) + ")");
  }
  DareSolution sol;
  sol.method = DareMethod::FixedPoint;
  Matrix p = sys.Q();
  double step = 0.0;
  for (int it = 1; it <= options.max_iterations; ++it) {
    const Matrix next = lyapunov_step(sys, riccati_update(bank, p));
    step = linalg::inf_norm(next - p);
    p = next;
    if (!p.allFinite()) throw SolverError("fixed-point iteration diverged");
    if (step <= options.tolerance * (1.0 + linalg::inf_norm(p))) {
      sol.P = p;
      sol.iterations = it;
      detail::finish_solution(sys, bank.G(), sol);
      sol.P_post = riccati_update(bank, sol.P);
      sol.K = steady_gain(bank, sol.P);
      return sol;
    }
  }
  throw SolverError("fixed-point iteration did not converge in " +
                    std::to_string(options.max_iterations) + " iterations (last update " +
                    std::to_string(step) + ")");
}

// ---------------------------------------------------------------------------
// Symplectic route

inline Matrix symplectic_unit(Index n) {
  Matrix j = Matrix::Zero(2 * n, 2 * n);
  j.topRightCorner(n, n) = -Matrix::Identity(n, n);
  j.bottomLeftCorner(n, n) = Matrix::Identity(n, n);
  return j;
}

/// || J^-1 S^T J S - I ||_inf
inline double symplectic_defect(const Matrix& s) {
  const Index n2 = s.rows();
  const Matrix j = symplectic_unit(n2 / 2);
  // J^-1 = -J
  return linalg::inf_norm(-j * s.transpose() * j * s - Matrix::Identity(n2, n2));
}

/// [[A^T + G A^-1 Q, -G A^-1], [-A^-1 Q, A^-1]]
inline Matrix build_symplectic(const LinearSystem& sys, const Matrix& g,
                               std::vector<std::string>* warnings = nullptr) {
  const Index n = sys.n();
  if (g.rows() != n || g.cols() != n) throw DimensionError("G must be n x n");
  Eigen::FullPivLU<Matrix> lu(sys.A());
  if (!lu.isInvertible()) throw ValidationError("A is singular; symplectic matrix undefined");
  const double cond = linalg::condition_number(sys.A());
  if (cond > kConditionWarning && warnings) {
    warnings->push_back("A is ill-conditioned (cond " + std::to_string(cond) +
                        "); symplectic matrix may be inaccurate");
  }
  const Matrix a_inv = lu.inverse();
  Matrix s(2 * n, 2 * n);
  s.topLeftCorner(n, n) = sys.A().transpose() + g * a_inv * sys.Q();
  s.topRightCorner(n, n) = -g * a_inv;
  s.bottomLeftCorner(n, n) = -a_inv * sys.Q();
  s.bottomRightCorner(n, n) = a_inv;
  return s;
}

namespace detail {

/// Swaps diagonal entries k and k+1 of an upper-triangular complex Schur
/// factor, updating the accumulated unitary.
inline void swap_schur_pair(CMatrix& t, CMatrix& u, Index k) {
  const Complex t11 = t(k, k);
  const Complex t22 = t(k + 1, k + 1);
  // [t12; t22 - t11] is the eigenvector of the 2x2 block for t22.
  Eigen::JacobiRotation<Complex> rot;
  rot.makeGivens(t(k, k + 1), t22 - t11);
  t.applyOnTheLeft(k, k + 1, rot.adjoint());
  t.applyOnTheRight(k, k + 1, rot);
  u.applyOnTheRight(k, k + 1, rot);
  t(k + 1, k) = Complex(0.0, 0.0);
}

/// Schur vectors whose leading n columns span the stable invariant subspace.
inline CMatrix ordered_stable_schur_basis(const Matrix& s, Index n) {
  Eigen::ComplexSchur<CMatrix> schur(s.cast<Complex>());
  if (schur.info() != Eigen::Success) throw SolverError("complex Schur decomposition failed");
  CMatrix t = schur.matrixT();
  CMatrix u = schur.matrixU();
  const Index size = t.rows();
  // Bubble stable eigenvalues to the top; only stable/unstable pairs swap, so
  // the relative order within each group is preserved.
  for (Index pass = 0; pass < size; ++pass) {
    bool swapped = false;
    for (Index k = 0; k + 1 < size; ++k) {
      if (std::abs(t(k, k)) >= 1.0 && std::abs(t(k + 1, k + 1)) < 1.0) {
        swap_schur_pair(t, u, k);
        swapped = true;
      }
    }
    if (!swapped) break;
  }
  for (Index k = 0; k < n; ++k) {
    if (std::abs(t(k, k)) >= 1.0) throw SolverError("Schur reordering failed");
  }
  return u.leftCols(n);
}

}  // namespace detail

/// Stable eigenpairs and clustering flags of a symplectic matrix.
inline SymplecticSpectrum symplectic_spectrum(const Matrix& s, double cluster_tol = 1e-6) {
  SymplecticSpectrum spec;
  spec.S = s;
  Eigen::EigenSolver<Matrix> es(s, true);
  if (es.info() != Eigen::Success) throw SolverError("eigen decomposition of S failed");
  const CVector values = es.eigenvalues();
  const CMatrix vectors = es.eigenvectors();
  spec.unit_circle_margin = std::numeric_limits<double>::infinity();
  std::vector<Index> stable;
  for (Index i = 0; i < values.size(); ++i) {
    spec.unit_circle_margin =
        std::min(spec.unit_circle_margin, std::abs(std::abs(values(i)) - 1.0));
    if (std::abs(values(i)) < 1.0) stable.push_back(i);
  }
  std::sort(stable.begin(), stable.end(), [&](Index a, Index b) {
    if (values(a).real() != values(b).real()) return values(a).real() < values(b).real();
    return values(a).imag() < values(b).imag();
  });
  for (Index i : stable) {
    spec.stable_eigenvalues.push_back(values(i));
    spec.stable_eigenvectors.push_back(linalg::canonicalize(vectors.col(i)));
  }
  spec.clustered.assign(spec.stable_eigenvalues.size(), false);
  for (std::size_t i = 0; i < spec.stable_eigenvalues.size(); ++i) {
    for (std::size_t j = 0; j < spec.stable_eigenvalues.size(); ++j) {
      if (i == j) continue;
      const Complex li = spec.stable_eigenvalues[i];
      if (std::abs(li - spec.stable_eigenvalues[j]) <= cluster_tol * (1.0 + std::abs(li))) {
        spec.clustered[i] = true;
      }
    }
  }
  return spec;
}

/// Solves the DARE for information matrix G from the stable invariant
/// subspace [X; Y] of the symplectic matrix: P = real(Y X^-1).
inline SymplecticDare solve_dare_symplectic(const LinearSystem& sys, const Matrix& g) {
  const Index n = sys.n();
  SymplecticDare out;
  DareSolution& sol = out.solution;
  sol.method = DareMethod::Symplectic;
  const Matrix s = build_symplectic(sys, g, &sol.warnings);
  out.spectrum = symplectic_spectrum(s);
  SymplecticSpectrum& spec = out.spectrum;
  if (spec.unit_circle_margin < kUnitCircleMargin) {
    throw SolverError("symplectic matrix not in dom(Ric): eigenvalue within " +
                      std::to_string(spec.unit_circle_margin) + " of the unit circle");
  }
  if (static_cast<Index>(spec.stable_eigenvalues.size()) != n) {
    throw SolverError("symplectic matrix has " + std::to_string(spec.stable_eigenvalues.size()) +
                      " stable eigenvalues, expected " + std::to_string(n));
  }
  const CMatrix basis = detail::ordered_stable_schur_basis(s, n);
  spec.X_block = basis.topRows(n);
  spec.Y_block = basis.bottomRows(n);
  Eigen::JacobiSVD<CMatrix> svd(spec.X_block);
  const auto& sv = svd.singularValues();
  if (sv(n - 1) <= 1e-12 * sv(0)) {
    throw SolverError(
        "stable subspace is not complementary to span[0; I] (X block numerically singular)");
  }
  // P = Y X^-1  <=>  X^T P^T = Y^T
  const CMatrix p_complex =
      spec.X_block.transpose().fullPivLu().solve(spec.Y_block.transpose()).transpose();
  sol.P = linalg::symmetrize(p_complex.real());
  sol.iterations = 0;
  const Matrix i_pg = Matrix::Identity(n, n) + sol.P * g;
  if (!Eigen::FullPivLU<Matrix>(i_pg).isInvertible()) throw SolverError("I + P G is singular");
  detail::finish_solution(sys, g, sol);
  return out;
}

/// Same as the information-matrix overload, also filling the steady gain.
inline SymplecticDare solve_dare_symplectic(const LinearSystem& sys, const SensorBank& bank) {
  const RankCheck obs = check_observability(sys, bank);
  if (!obs.pass) {
    throw SolverError("pair (A, C) is not observable (rank " + std::to_string(obs.rank) + " < " +
                      std::to_string(sys.n()) + ")");
  }
  SymplecticDare out = solve_dare_symplectic(sys, bank.G());
  out.solution.P_post = riccati_update(bank, out.solution.P);
  out.solution.K = steady_gain(bank, out.solution.P);
  return out;
}

/// Solves F X F^T - X + W = 0 by the vectorized linear system.
inline Matrix solve_discrete_lyapunov(const Matrix& f, const Matrix& w) {
  linalg::require_square(f, "F");
  if (w.rows() != f.rows() || w.cols() != f.cols()) throw DimensionError("W must match F");
  const double rho = linalg::spectral_radius(f);
  if (rho >= 1.0) {
    throw SolverError("discrete Lyapunov equation needs a Schur-stable F (spectral radius " +
                      std::to_string(rho) + ")");
  }
  const Index n = f.rows();
  // vec(F X F^T) = (F kron F) vec(X)
  Matrix kron(n * n, n * n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) kron.block(i * n, j * n, n, n) = f(i, j) * f;
  }
  const Matrix lhs = Matrix::Identity(n * n, n * n) - kron;
  const Vector rhs = Eigen::Map<const Vector>(w.data(), n * n);
  const Vector x = lhs.partialPivLu().solve(rhs);
  return linalg::symmetrize(Eigen::Map<const Matrix>(x.data(), n, n));
}

/// Steady-state solution for a bank using the symplectic route.
inline DareSolution steady_state(const LinearSystem& sys, const SensorBank& bank) {
  return solve_dare_symplectic(sys, bank).solution;
}

}  // namespace rsd

#endif  // RSD_RICCATI_HPP
