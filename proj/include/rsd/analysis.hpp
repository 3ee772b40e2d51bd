#ifndef RSD_ANALYSIS_HPP
#define RSD_ANALYSIS_HPP

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "rsd/errors.hpp"
#include "rsd/linalg.hpp"
#include "rsd/model.hpp"
#include "rsd/riccati.hpp"

namespace rsd {

// ---------------------------------------------------------------------------
// PSD ordering of two covariances

enum class Ordering { StrictlyGreater, GreaterWithKernel, Equal, Indefinite };

inline const char* to_string(Ordering o) {
  switch (o) {
    case Ordering::StrictlyGreater: return "StrictlyGreater";
    case Ordering::GreaterWithKernel: return "GreaterWithKernel";
    case Ordering::Equal: return "Equal";
    case Ordering::Indefinite: return "Indefinite";
  }
  return "?";
}

struct OrderingVerdict {
  Ordering ordering = Ordering::Indefinite;
  int kernel_dimension = 0;
  Matrix kernel_basis;  ///< orthonormal columns for the near-zero eigenvalues
  Vector eigenvalues;   ///< of the symmetrized difference, ascending
  double tolerance = 0.0;
};

inline double default_ordering_tolerance(const Matrix& p_big) {
  return 1e-7 * (1.0 + linalg::inf_norm(p_big));
}

/// Classifies P_big - P_small in the PSD order.
inline OrderingVerdict classify_ordering(const Matrix& p_big, const Matrix& p_small,
                                         std::optional<double> tol = std::nullopt) {
  if (p_big.rows() != p_small.rows() || p_big.cols() != p_small.cols()) {
    throw DimensionError("classify_ordering: dimension mismatch");
  }
  OrderingVerdict v;
  v.tolerance = tol.value_or(default_ordering_tolerance(p_big));
  Eigen::SelfAdjointEigenSolver<Matrix> es(linalg::symmetrize(p_big - p_small));
  v.eigenvalues = es.eigenvalues();
  const double t = v.tolerance;
  const double lo = v.eigenvalues.minCoeff();
  const double hi = v.eigenvalues.maxCoeff();
  std::vector<Index> zero;
  for (Index i = 0; i < v.eigenvalues.size(); ++i) {
    if (std::abs(v.eigenvalues(i)) <= t) zero.push_back(i);
  }
  if (lo > t) {
    v.ordering = Ordering::StrictlyGreater;
  } else if (lo >= -t && hi > t) {
    v.ordering = Ordering::GreaterWithKernel;
  } else if (lo >= -t && hi <= t) {
    v.ordering = Ordering::Equal;
  } else {
    v.ordering = Ordering::Indefinite;
  }
  if (v.ordering == Ordering::GreaterWithKernel || v.ordering == Ordering::Equal) {
    v.kernel_dimension = static_cast<int>(zero.size());
    v.kernel_basis.resize(p_big.rows(), v.kernel_dimension);
    for (std::size_t k = 0; k < zero.size(); ++k) {
      v.kernel_basis.col(static_cast<Index>(k)) = es.eigenvectors().col(zero[k]);
    }
  }
  return v;
}

struct Inertia {
  int positive = 0;
  int zero = 0;
  int negative = 0;
  bool operator==(const Inertia&) const = default;
};

inline Inertia inertia(const Matrix& m, std::optional<double> tol = std::nullopt) {
  const double t = tol.value_or(1e-9 * (1.0 + linalg::inf_norm(m)));
  Inertia out;
  for (double e : linalg::sym_eigenvalues(m)) {
    if (e > t) {
      ++out.positive;
    } else if (e < -t) {
      ++out.negative;
    } else {
      ++out.zero;
    }
  }
  return out;
}

/// Largest threshold among start, start/10, ... (not below floor) at which
/// inertia(m) == inertia(a m a^T) is numerically decidable. Congruence scales
/// each eigenvalue by a factor in [smin(a)^2, smax(a)^2], so a threshold t is
/// safe when no |eigenvalue| of m lies in [min(t, t/smax^2), max(t, t/smin^2)]
/// widened by a factor 10.
inline std::optional<double> congruence_safe_tolerance(const Matrix& m, const Matrix& a,
                                                       double start, double floor) {
  const Eigen::JacobiSVD<Matrix> svd(a);
  const double smax2 = std::pow(svd.singularValues().maxCoeff(), 2);
  const double smin2 = std::pow(svd.singularValues().minCoeff(), 2);
  const Vector ev = linalg::sym_eigenvalues(m);
  for (double t = start; t >= floor; t /= 10.0) {
    const double lo = std::min(t, t / smax2) / 10.0;
    const double hi = std::max(t, t / smin2) * 10.0;
    bool clear = true;
    for (Index i = 0; i < ev.size() && clear; ++i) {
      clear = std::abs(ev(i)) < lo || std::abs(ev(i)) > hi;
    }
    if (clear) return t;
  }
  return std::nullopt;
}

/// Rounding floor of a difference of two computed DARE solutions.
inline double difference_noise_floor(const Matrix& p_big) {
  return 32.0 * std::numeric_limits<double>::epsilon() * static_cast<double>(p_big.rows()) *
         (1.0 + linalg::inf_norm(p_big));
}

// ---------------------------------------------------------------------------
// Trace gap and the Lyapunov identity for the difference

struct TraceGap {
  double trace_base = 0.0;
  double trace_augmented = 0.0;
  double gap = 0.0;
};

inline TraceGap trace_gap(const LinearSystem& sys, const SensorBank& base,
                          const SensorBank& redundant) {
  const DareSolution pb = steady_state(sys, base);
  const DareSolution pa = steady_state(sys, augment(base, redundant));
  return {pb.P.trace(), pa.P.trace(), pb.P.trace() - pa.P.trace()};
}

/// Infinity norm of the left side of
///   A0 D A0^T - D + A0 D G0 (I + P G0)^-1 D A0^T
///     + A (I + P G0)^-1 P A^T - A (I + P G)^-1 P A^T,
/// with D = P_base - P and A0 = A (I + P_base G0)^-1. It vanishes when both
/// covariances solve their DAREs.
inline double verify_lyapunov_identity(const LinearSystem& sys, const SensorBank& base,
                                       const SensorBank& redundant, const Matrix& p_base,
                                       const Matrix& p) {
  const Index n = sys.n();
  const Matrix& a = sys.A();
  const Matrix& g0 = base.G();
  const Matrix g = g0 + redundant.G();
  const Matrix a0 = closed_loop_matrix(sys, g0, p_base);
  const Matrix d = p_base - p;
  const Eigen::PartialPivLU<Matrix> i_pg0(Matrix::Identity(n, n) + p * g0);
  const Eigen::PartialPivLU<Matrix> i_pg(Matrix::Identity(n, n) + p * g);
  const Matrix lhs = a0 * d * a0.transpose() - d +
                     a0 * d * g0 * i_pg0.solve(d) * a0.transpose() +
                     a * i_pg0.solve(p) * a.transpose() - a * i_pg.solve(p) * a.transpose();
  return linalg::inf_norm(lhs);
}

// ---------------------------------------------------------------------------
// Common eigenpairs of the two symplectic matrices

struct EigenpairMatch {
  Complex lambda_base;
  Complex lambda;
  double eigenvalue_distance = 0.0;
  double angle = 0.0;  ///< principal angle between the eigenvectors, radians
};

struct CommonEigenpairReport {
  bool found = false;
  std::vector<EigenpairMatch> matches;
  bool inconclusive = false;  ///< clustered eigenvalues in either spectrum
};

struct EigenpairTolerances {
  double eigenvalue = 1e-6;
  double angle = 1e-6;
};

namespace detail {

struct Eigenpairs {
  std::vector<Complex> values;
  std::vector<CVector> vectors;
};

inline bool has_cluster(const std::vector<Complex>& values, double tol) {
  for (std::size_t i = 0; i < values.size(); ++i)
    for (std::size_t j = i + 1; j < values.size(); ++j)
      if (std::abs(values[i] - values[j]) <= tol * (1.0 + std::abs(values[i]))) return true;
  return false;
}

/// Eigenpairs of m whose eigenvalues satisfy keep(|lambda|).
template <class Keep>
Eigenpairs select_eigenpairs(const Matrix& m, Keep keep) {
  Eigen::EigenSolver<Matrix> es(m, true);
  if (es.info() != Eigen::Success) throw SolverError("eigen decomposition failed");
  Eigenpairs out;
  for (Index i = 0; i < m.rows(); ++i) {
    const Complex lambda = es.eigenvalues()(i);
    if (keep(std::abs(lambda))) {
      out.values.push_back(lambda);
      out.vectors.push_back(linalg::canonicalize(es.eigenvectors().col(i)));
    }
  }
  return out;
}

inline CommonEigenpairReport match_eigenpairs(const Eigenpairs& a, const Eigenpairs& b,
                                              const EigenpairTolerances& tol) {
  CommonEigenpairReport report;
  report.inconclusive =
      has_cluster(a.values, tol.eigenvalue) || has_cluster(b.values, tol.eigenvalue);
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    for (std::size_t j = 0; j < b.values.size(); ++j) {
      const double dist = std::abs(a.values[i] - b.values[j]);
      if (dist > tol.eigenvalue * (1.0 + std::abs(b.values[j]))) continue;
      const double angle = linalg::principal_angle(a.vectors[i], b.vectors[j]);
      if (angle <= tol.angle) {
        report.matches.push_back({a.values[i], b.values[j], dist, angle});
      }
    }
  }
  report.found = !report.matches.empty();
  return report;
}

}  // namespace detail

/// Looks for a stable eigenvalue shared by the symplectic matrices of G0 and
/// G0 + G1 together with a common eigenvector. No match (and no clustering)
/// certifies that the augmented covariance is strictly smaller.
inline CommonEigenpairReport strict_improvement_condition(const LinearSystem& sys,
                                                          const Matrix& g0, const Matrix& g1,
                                                          const EigenpairTolerances& tol = {}) {
  const SymplecticDare base = solve_dare_symplectic(sys, g0);
  const SymplecticDare aug = solve_dare_symplectic(sys, g0 + g1);
  detail::Eigenpairs a{base.spectrum.stable_eigenvalues, base.spectrum.stable_eigenvectors};
  detail::Eigenpairs b{aug.spectrum.stable_eigenvalues, aug.spectrum.stable_eigenvectors};
  return detail::match_eigenpairs(a, b, tol);
}

/// The same test on unstable left eigenpairs (eigenvectors of S^T with
/// |lambda| > 1).
inline CommonEigenpairReport left_eigen_condition(const LinearSystem& sys, const Matrix& g0,
                                                  const Matrix& g1,
                                                  const EigenpairTolerances& tol = {}) {
  const Matrix s0 = build_symplectic(sys, g0);
  const Matrix s1 = build_symplectic(sys, g0 + g1);
  for (const Matrix* s : {&s0, &s1}) {
    const SymplecticSpectrum spec = symplectic_spectrum(*s);
    if (spec.unit_circle_margin < kUnitCircleMargin) {
      throw SolverError("symplectic matrix not in dom(Ric): eigenvalue on the unit circle");
    }
  }
  auto unstable = [](double modulus) { return modulus > 1.0; };
  const detail::Eigenpairs a = detail::select_eigenpairs(Matrix(s0.transpose()), unstable);
  const detail::Eigenpairs b = detail::select_eigenpairs(Matrix(s1.transpose()), unstable);
  return detail::match_eigenpairs(a, b, tol);
}

// ---------------------------------------------------------------------------
// Combined effect analysis

struct EffectAnalysis {
  DareSolution base;
  DareSolution augmented;
  TraceGap gap;
  OrderingVerdict priori;
  OrderingVerdict posteriori;
  Inertia priori_inertia;
  Inertia posteriori_inertia;
  double inertia_tolerance = 0.0;
  CommonEigenpairReport spectral;
  CommonEigenpairReport left_spectral;
  double lyapunov_residual = 0.0;
  /// The spectral test disagrees with the ordering verdict (the ordering
  /// wins).
  bool anomaly = false;
  std::vector<std::string> warnings;
};

inline EffectAnalysis analyze_effect(const LinearSystem& sys, const SensorBank& base,
                                     const SensorBank& redundant,
                                     const EigenpairTolerances& tol = {}) {
  EffectAnalysis out;
  const SensorBank all = augment(base, redundant);
  out.base = steady_state(sys, base);
  out.augmented = steady_state(sys, all);
  out.gap = {out.base.P.trace(), out.augmented.P.trace(),
             out.base.P.trace() - out.augmented.P.trace()};
  out.priori = classify_ordering(out.base.P, out.augmented.P);
  out.posteriori = classify_ordering(out.base.P_post, out.augmented.P_post,
                                     default_ordering_tolerance(out.base.P));
  const Matrix d_post = out.base.P_post - out.augmented.P_post;
  const std::optional<double> safe = congruence_safe_tolerance(
      d_post, sys.A(), out.priori.tolerance, difference_noise_floor(out.base.P));
  if (!safe) {
    out.warnings.push_back(
        "inertia of the covariance difference is numerically ambiguous: eigenvalues sit at the "
        "rounding floor");
  }
  out.inertia_tolerance = safe.value_or(out.priori.tolerance);
  out.priori_inertia = inertia(out.base.P - out.augmented.P, out.inertia_tolerance);
  out.posteriori_inertia = inertia(d_post, out.inertia_tolerance);
  out.spectral = strict_improvement_condition(sys, base.G(), redundant.G(), tol);
  out.left_spectral = left_eigen_condition(sys, base.G(), redundant.G(), tol);
  out.lyapunov_residual =
      verify_lyapunov_identity(sys, base, redundant, out.base.P, out.augmented.P);
  if (linalg::inf_norm(redundant.G()) == 0.0) {
    out.warnings.push_back(
        "redundant sensors carry no information (G1 = 0): assumption 3 (active redundant "
        "sensors) does not hold");
  }
  const bool strict = out.priori.ordering == Ordering::StrictlyGreater;
  if (!out.spectral.inconclusive && out.spectral.found == strict) out.anomaly = true;
  return out;
}

}  // namespace rsd

#endif  // RSD_ANALYSIS_HPP
