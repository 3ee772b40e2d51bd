#ifndef RSD_DESIGN_HPP
#define RSD_DESIGN_HPP

// Iterative convexified design of redundant sensor output matrices.
//
// Each outer iteration fixes a reference matrix C_r (the previous design)
// and solves
//
//   minimize gamma  over (X, C~, gamma)
//   subject to  F(X, C~) <= 0,  [[gamma, E^T], [E, I (x) X]] >= 0,
//               ||C~_s||_2 <= U_s for every redundant sensor s,  X >= delta I,
//
// where F is affine in (X, C~) for fixed C_r. The previous iterate stays
// feasible, so gamma is non-increasing.

#include <chrono>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "rsd/errors.hpp"
#include "rsd/linalg.hpp"
#include "rsd/model.hpp"
#include "rsd/riccati.hpp"
#include "rsd/sdp.hpp"

namespace rsd {

struct DesignSpec {
  LinearSystem sys;
  SensorBank base;
  std::vector<Index> row_partition;  ///< rows per redundant sensor
  Matrix R_tilde;                    ///< block-diagonal noise covariance of the new rows
  double norm_bound = 5.0;
  std::vector<double> sensor_norm_bounds;  ///< per sensor; empty means norm_bound for all
  std::optional<Matrix> C_r0;
  double epsilon = 1e-5;
  int max_outer_iterations = 200;
  sdp::SolverOptions solver;

  Index total_rows() const {
    return std::accumulate(row_partition.begin(), row_partition.end(), Index{0});
  }
  double bound_of(std::size_t sensor) const {
    return sensor_norm_bounds.empty() ? norm_bound : sensor_norm_bounds.at(sensor);
  }
};

enum class DesignStatus { Converged, MaxIterations, NumericalFailure };

inline const char* to_string(DesignStatus s) {
  switch (s) {
    case DesignStatus::Converged: return "converged";
    case DesignStatus::MaxIterations: return "max_iterations";
    case DesignStatus::NumericalFailure: return "numerical_failure";
  }
  return "?";
}

struct PostValidation {
  double dare_trace = 0.0;          ///< tr(P) of the augmented network at C*
  double bound_gap = 0.0;           ///< gamma* - tr(P), >= 0 up to solver accuracy
  double inverse_residual = 0.0;    ///< |X*^-1 - P|_inf
  double x_dare_residual = 0.0;     ///< augmented DARE residual at X*^-1
  double gamma_trace_residual = 0.0;  ///< |gamma* - tr(X*^-1)|
  double base_trace = 0.0;          ///< tr(P_base)
  double performance_bound = 0.0;   ///< tr(P_base) - gamma*
};

struct DesignIteration {
  double gamma = 0.0;
  int solver_iterations = 0;
  sdp::Status solver_status = sdp::Status::Optimal;
  /// Largest violation of the previous iterate in this iteration's blocks
  /// (PSD orientation, clipped at 0); undefined for iteration 0.
  double warm_start_violation = 0.0;
};

struct DesignResult {
  Matrix C_star;
  double gamma_star = 0.0;
  Matrix X_star;
  std::vector<double> gamma_trajectory;
  std::vector<DesignIteration> history;
  int iterations = 0;
  DesignStatus status = DesignStatus::NumericalFailure;
  PostValidation post_validation;
  Matrix gram;                 ///< C*^T R~^-1 C*
  double wall_time_seconds = 0.0;
  std::vector<std::string> warnings;
};

// ---------------------------------------------------------------------------
// LMI blocks

struct DesignData {
  Matrix A;
  Matrix sqrt_Q;
  Matrix G0;
  Matrix C_r;
  Matrix R_tilde;
};

/// The 4x4 block inequality F(X, C~) <= 0 of size 3n + m~:
///   [[-X,      X A, X sqrt(Q), 0    ],
///    [A^T X,   Phi, 0,         C_r^T],
///    [sqrt(Q) X, 0, -I,        0    ],
///    [0,       C_r, 0,         -R~  ]]
/// with Phi = -X - G0 - C~^T R~^-1 C_r - C_r^T R~^-1 C~.
inline sdp::LmiBlock build_f_lmi(const sdp::Variable& x, const sdp::Variable& c_tilde,
                                 const DesignData& d) {
  const Index n = d.A.rows();
  const Index m = d.C_r.rows();
  if (d.A.cols() != n || d.sqrt_Q.rows() != n || d.sqrt_Q.cols() != n || d.G0.rows() != n ||
      d.G0.cols() != n || d.C_r.cols() != n || d.R_tilde.rows() != m || d.R_tilde.cols() != m ||
      x.shape.rows != n || c_tilde.shape.rows != m || c_tilde.shape.cols != n) {
    throw DimensionError("build_f_lmi: inconsistent dimensions");
  }
  const Matrix i_n = Matrix::Identity(n, n);
  const Matrix r_inv = d.R_tilde.llt().solve(Matrix::Identity(m, m));
  sdp::LmiBuilder b(3 * n + m, sdp::Sense::NegativeSemidefinite, "F");
  b.diagonal_term(0, -1.0, x);
  b.term(0, n, i_n, x, d.A);
  b.term(0, 2 * n, i_n, x, d.sqrt_Q);
  b.diagonal_term(n, -1.0, x);
  b.constant(n, n, -d.G0);
  if (m > 0) {
    b.symmetric_term(n, -d.C_r.transpose() * r_inv, c_tilde, i_n);
    b.constant(n, 3 * n, d.C_r.transpose());
    b.constant(3 * n, 3 * n, -d.R_tilde);
  }
  b.constant(2 * n, 2 * n, -i_n);
  return b.build();
}

/// [[gamma, E^T], [E, I_n (x) X]] >= 0 with E the stacked unit vectors;
/// feasible for X > 0 exactly when gamma >= tr(X^-1).
inline sdp::LmiBlock build_trace_lmi(const sdp::Variable& gamma, const sdp::Variable& x) {
  const Index n = x.shape.rows;
  sdp::LmiBuilder b(1 + n * n, sdp::Sense::PositiveSemidefinite, "trace");
  b.diagonal_term(0, 1.0, gamma);
  for (Index i = 0; i < n; ++i) {
    Matrix e = Matrix::Zero(1, n);
    e(0, i) = 1.0;
    b.constant(0, 1 + i * n, e);
    b.diagonal_term(1 + i * n, 1.0, x);
  }
  return b.build();
}

/// [[U I, c], [c^T, U I]] >= 0 for rows [first, first + rows) of C~;
/// equivalent to sigma_max(c) <= U.
inline sdp::LmiBlock build_norm_lmi(const sdp::Variable& c_tilde, Index first, Index rows,
                                    double bound, const std::string& name = "norm") {
  const Index m = c_tilde.shape.rows;
  const Index n = c_tilde.shape.cols;
  if (first < 0 || rows <= 0 || first + rows > m) {
    throw DimensionError("build_norm_lmi: row range outside C~");
  }
  Matrix select = Matrix::Zero(rows, m);
  select.middleCols(first, rows) = Matrix::Identity(rows, rows);
  sdp::LmiBuilder b(rows + n, sdp::Sense::PositiveSemidefinite, name);
  b.constant(0, 0, bound * Matrix::Identity(rows + n, rows + n));
  b.term(0, rows, select, c_tilde, Matrix::Identity(n, n));
  return b.build();
}

/// X - delta I >= 0.
inline sdp::LmiBlock build_strictness_lmi(const sdp::Variable& x, double delta) {
  const Index n = x.shape.rows;
  sdp::LmiBuilder b(n, sdp::Sense::PositiveSemidefinite, "X > 0");
  b.diagonal_term(0, 1.0, x);
  b.constant(0, 0, -delta * Matrix::Identity(n, n));
  return b.build();
}

/// tr(P_base) - gamma: certified lower bound on the MSE improvement.
inline double performance_bound(const LinearSystem& sys, const SensorBank& base, double gamma) {
  return steady_state(sys, base).P.trace() - gamma;
}

/// Sensor bank holding the rows of c split by the partition.
inline SensorBank designed_bank(const Matrix& c, const Matrix& r_tilde,
                                const std::vector<Index>& row_partition,
                                const std::string& prefix = "d") {
  return bank_from_rows(c, r_tilde, row_partition, prefix);
}

namespace detail {

/// 1e-3 at (i, i mod n). A zero row of C_r zeroes the linearized information
/// of that row, so it would never leave zero.
inline Matrix default_c_r0(Index m, Index n) {
  Matrix c = Matrix::Zero(m, n);
  for (Index i = 0; i < m; ++i) c(i, i % n) = 1e-3;
  return c;
}

inline void check_design_spec(const DesignSpec& spec) {
  const Index n = spec.sys.n();
  const Index m = spec.total_rows();
  if (spec.base.state_dim() != n) throw DimensionError("design: base bank state dimension");
  if (spec.row_partition.empty() || m == 0) {
    throw ConfigError("design: at least one redundant sensor row is required");
  }
  for (Index r : spec.row_partition) {
    if (r <= 0) throw ConfigError("design: every redundant sensor needs at least one row");
  }
  if (spec.R_tilde.rows() != m || spec.R_tilde.cols() != m) {
    throw DimensionError("design: R~ must be " + std::to_string(m) + "x" + std::to_string(m));
  }
  if (linalg::min_eigenvalue(linalg::symmetrize(spec.R_tilde)) <= 0.0) {
    throw ValidationError("design: R~ must be positive definite");
  }
  if (!spec.sensor_norm_bounds.empty() &&
      spec.sensor_norm_bounds.size() != spec.row_partition.size()) {
    throw ConfigError("design: one norm bound per redundant sensor expected");
  }
  for (std::size_t s = 0; s < spec.row_partition.size(); ++s) {
    if (!(spec.bound_of(s) > 0.0)) throw ConfigError("design: norm bound U must be positive");
  }
  if (!(spec.epsilon > 0.0)) throw ConfigError("design: epsilon must be positive");
  if (spec.max_outer_iterations <= 0) throw ConfigError("design: max iterations must be positive");
  if (spec.C_r0 && (spec.C_r0->rows() != m || spec.C_r0->cols() != n)) {
    throw DimensionError("design: C_r0 must be " + std::to_string(m) + "x" + std::to_string(n));
  }
}

/// One subproblem of the outer loop.
struct Subproblem {
  sdp::Problem problem;
  sdp::Variable x;
  sdp::Variable c;
  sdp::Variable gamma;
  Vector objective;
};

inline Subproblem build_subproblem(const DesignSpec& spec, const Matrix& c_r, double delta) {
  const Index n = spec.sys.n();
  const Index m = spec.total_rows();
  Subproblem s;
  s.x = s.problem.add_variable("X", sdp::VariableShape::symmetric(n));
  s.c = s.problem.add_variable("C", sdp::VariableShape::rectangular(m, n));
  s.gamma = s.problem.add_variable("gamma", sdp::VariableShape::scalar());
  const DesignData data{spec.sys.A(), spec.sys.sqrt_Q(), spec.base.G(), c_r,
                        linalg::symmetrize(spec.R_tilde)};
  s.problem.add_lmi_block(build_f_lmi(s.x, s.c, data));
  s.problem.add_lmi_block(build_trace_lmi(s.gamma, s.x));
  Index first = 0;
  for (std::size_t k = 0; k < spec.row_partition.size(); ++k) {
    const Index rows = spec.row_partition[k];
    s.problem.add_lmi_block(
        build_norm_lmi(s.c, first, rows, spec.bound_of(k), "norm " + std::to_string(k + 1)));
    first += rows;
  }
  s.problem.add_lmi_block(build_strictness_lmi(s.x, delta));
  s.objective = sdp::Objective(s.problem).add(s.gamma, 1.0).vector();
  return s;
}

/// Largest violation of the blocks at x, clipped at zero.
inline double max_violation(const sdp::Problem& p, const Vector& x) {
  double v = 0.0;
  for (double margin : sdp::block_margins(p, x)) v = std::max(v, -margin);
  return v;
}

}  // namespace detail

inline DesignResult design_redundant_sensors(const DesignSpec& spec) {
  const auto started = std::chrono::steady_clock::now();
  detail::check_design_spec(spec);
  const Index n = spec.sys.n();
  const Index m = spec.total_rows();
  const double data_scale =
      std::max({linalg::inf_norm(spec.sys.A()), linalg::inf_norm(spec.sys.Q()),
                linalg::inf_norm(spec.base.G()), linalg::inf_norm(spec.R_tilde)});
  const double delta = 1e-9 * (1.0 + data_scale);
  const double warm_tol = 1e-7 * (1.0 + data_scale);

  DesignResult result;
  Matrix c_r = spec.C_r0.value_or(detail::default_c_r0(m, n));
  std::optional<Vector> previous;  // previous iterate in the previous layout
  double gamma_prev = 0.0;

  for (int j = 0; j < spec.max_outer_iterations; ++j) {
    detail::Subproblem sub = detail::build_subproblem(spec, c_r, delta);
    DesignIteration rec;
    if (previous) {
      rec.warm_start_violation = detail::max_violation(sub.problem, *previous);
      if (rec.warm_start_violation > warm_tol) {
        result.warnings.push_back("iteration " + std::to_string(j) +
                                  ": previous iterate violates the new subproblem by " +
                                  std::to_string(rec.warm_start_violation));
      }
    }
    const sdp::SdpSolution sol = sdp::solve(sub.problem, sub.objective, spec.solver);
    rec.solver_status = sol.status;
    rec.solver_iterations = sol.iterations;
    if (sol.status != sdp::Status::Optimal) {
      if (j == 0) {
        throw DesignInfeasible(
            std::string("design subproblem at iteration 0 is ") + sdp::to_string(sol.status) +
                ": the initial C_r0 is not compatible with the norm budget; increase the norm "
                "bound U or shrink C_r0",
            0);
      }
      result.history.push_back(rec);
      result.status = DesignStatus::NumericalFailure;
      result.warnings.push_back("iteration " + std::to_string(j) + ": SDP solver returned " +
                                sdp::to_string(sol.status));
      break;
    }
    const double gamma = sol.value(sub.gamma)(0, 0);
    rec.gamma = gamma;
    result.history.push_back(rec);
    result.gamma_trajectory.push_back(gamma);
    result.iterations = j + 1;
    result.C_star = sol.value(sub.c);
    result.X_star = linalg::symmetrize(sol.value(sub.x));
    result.gamma_star = gamma;
    if (j > 0 && gamma > gamma_prev + 1e-9) {
      result.status = DesignStatus::NumericalFailure;
      result.warnings.push_back("gamma increased at iteration " + std::to_string(j) + " by " +
                                std::to_string(gamma - gamma_prev));
      break;
    }
    if (j > 0 && std::abs(gamma - gamma_prev) < spec.epsilon) {
      result.status = DesignStatus::Converged;
      break;
    }
    gamma_prev = gamma;
    c_r = result.C_star;
    previous = sol.x;
    result.status = DesignStatus::MaxIterations;
  }

  // Post-validation on the augmented network.
  const Matrix r_tilde = linalg::symmetrize(spec.R_tilde);
  result.gram = result.C_star.transpose() * r_tilde.llt().solve(result.C_star);
  const SensorBank redundant = designed_bank(result.C_star, r_tilde, spec.row_partition);
  const DareSolution base = steady_state(spec.sys, spec.base);
  const DareSolution aug = steady_state(spec.sys, augment(spec.base, redundant));
  PostValidation& pv = result.post_validation;
  pv.dare_trace = aug.P.trace();
  pv.bound_gap = result.gamma_star - pv.dare_trace;
  const Matrix x_inv = linalg::symmetrize(result.X_star.inverse());
  pv.inverse_residual = linalg::inf_norm(x_inv - aug.P);
  pv.x_dare_residual = dare_residual(spec.sys, spec.base.G() + redundant.G(), x_inv);
  pv.gamma_trace_residual = std::abs(result.gamma_star - x_inv.trace());
  pv.base_trace = base.P.trace();
  pv.performance_bound = pv.base_trace - result.gamma_star;
  if (pv.bound_gap < -1e-6 * (1.0 + result.gamma_star)) {
    result.warnings.push_back("augmented DARE trace exceeds gamma*: bound not certified");
  }
  result.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

}  // namespace rsd

#endif  // RSD_DESIGN_HPP
