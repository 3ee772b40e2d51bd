#ifndef RSD_MODEL_HPP
#define RSD_MODEL_HPP

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rsd/errors.hpp"
#include "rsd/linalg.hpp"

namespace rsd {

/// Symmetric inputs carrying more asymmetry than this get a warning before
/// being symmetrized.
inline constexpr double kSymmetryWarning = 1e-9;

/// Process x_{k+1} = A x_k + w_k, w_k ~ N(0, Q).
///
/// Q is symmetrized on construction and must be positive semidefinite.
/// Invertibility of A and controllability of (A, sqrt(Q)) are *not* enforced
/// here; validate_system() reports them so callers can decide.
class LinearSystem {
 public:
  LinearSystem(Matrix a, Matrix q) : a_(std::move(a)) {
    linalg::require_square(a_, "A");
    linalg::require_square(q, "Q");
    if (q.rows() != a_.rows()) {
      throw DimensionError("Q is " + std::to_string(q.rows()) + "x" + std::to_string(q.cols()) +
                           " but A is " + std::to_string(a_.rows()) + "x" +
                           std::to_string(a_.cols()));
    }
    if (a_.rows() == 0) throw DimensionError("state dimension must be positive");
    const double qnorm = linalg::inf_norm(q);
    const double asym = linalg::symmetry_residual(q);
    if (asym > kSymmetryWarning) {
      warnings_.push_back("Q symmetry residual " + std::to_string(asym) + " (symmetrized)");
    }
    q_ = linalg::symmetrize(q);
    const double min_eig = linalg::min_eigenvalue(q_);
    if (min_eig < -1e-10 * (1.0 + qnorm)) {
      throw ValidationError("Q is not positive semidefinite (min eigenvalue " +
                            std::to_string(min_eig) + ")");
    }
    sqrt_q_ = linalg::sym_sqrt_psd(q_);
  }

  const Matrix& A() const { return a_; }
  const Matrix& Q() const { return q_; }
  /// Symmetric PSD square root of Q.
  const Matrix& sqrt_Q() const { return sqrt_q_; }
  Index n() const { return a_.rows(); }
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  Matrix a_;
  Matrix q_;
  Matrix sqrt_q_;
  std::vector<std::string> warnings_;
};

/// One sensor y = C x + v, v ~ N(0, R).
struct Sensor {
  Matrix C;
  Matrix R;
  std::string label;
};

/// Ordered collection of sensors with the stacked output matrix, the
/// block-diagonal noise covariance and the information matrix C^T R^-1 C
/// cached at construction.
class SensorBank {
 public:
  explicit SensorBank(Index state_dim) : n_(state_dim) { rebuild(); }

  SensorBank(std::vector<Sensor> sensors, Index state_dim)
      : sensors_(std::move(sensors)), n_(state_dim) {
    for (std::size_t i = 0; i < sensors_.size(); ++i) check_sensor(sensors_[i], i);
    rebuild();
  }

  const std::vector<Sensor>& sensors() const { return sensors_; }
  std::size_t size() const { return sensors_.size(); }
  bool empty() const { return sensors_.empty(); }
  Index state_dim() const { return n_; }
  Index output_dim() const { return c_.rows(); }

  const Matrix& C() const { return c_; }
  const Matrix& R() const { return r_; }
  const Matrix& G() const { return g_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  void check_sensor(Sensor& s, std::size_t index) {
    const std::string name =
        "sensor '" + (s.label.empty() ? "#" + std::to_string(index) : s.label) + "'";
    if (s.C.cols() != n_) {
      throw DimensionError(name + ": C has " + std::to_string(s.C.cols()) +
                           " columns, expected " + std::to_string(n_));
    }
    if (s.R.rows() != s.C.rows() || s.R.cols() != s.C.rows()) {
      throw DimensionError(name + ": R must be " + std::to_string(s.C.rows()) + "x" +
                           std::to_string(s.C.rows()));
    }
    if (s.C.rows() == 0) return;
    const double asym = linalg::symmetry_residual(s.R);
    if (asym > kSymmetryWarning) {
      warnings_.push_back(name + ": R symmetry residual " + std::to_string(asym) +
                          " (symmetrized)");
    }
    s.R = linalg::symmetrize(s.R);
    if (!(linalg::min_eigenvalue(s.R) > 0.0)) {
      throw ValidationError(name + ": R is not positive definite");
    }
  }

  void rebuild() {
    Index rows = 0;
    for (const auto& s : sensors_) rows += s.C.rows();
    c_ = Matrix::Zero(rows, n_);
    std::vector<Matrix> blocks;
    g_ = Matrix::Zero(n_, n_);
    Index offset = 0;
    for (const auto& s : sensors_) {
      c_.middleRows(offset, s.C.rows()) = s.C;
      blocks.push_back(s.R);
      offset += s.C.rows();
      if (s.C.rows() > 0) {
        Eigen::LLT<Matrix> llt(s.R);
        g_ += s.C.transpose() * llt.solve(s.C);
      }
    }
    r_ = linalg::block_diagonal(blocks);
    g_ = linalg::symmetrize(g_);
  }

  std::vector<Sensor> sensors_;
  Index n_;
  Matrix c_;
  Matrix r_;
  Matrix g_;
  std::vector<std::string> warnings_;
};

struct RankCheck {
  bool pass = false;
  int rank = 0;
};

struct ValidationReport {
  bool invertible = false;
  double condition_number = 0.0;  ///< 2-norm condition number of A
  RankCheck controllability;      ///< (A, sqrt(Q))
  std::optional<RankCheck> observability;  ///< (A, C), when a bank was supplied
  std::vector<std::string> warnings;

  bool ok() const {
    return invertible && controllability.pass && (!observability || observability->pass);
  }
};

/// Condition number above which A^-1 is flagged as unreliable.
inline constexpr double kConditionWarning = 1e8;

/// Rank of [M, A M, ..., A^{n-1} M].
inline int krylov_rank(const Matrix& a, const Matrix& m) {
  const Index n = a.rows();
  Matrix k(n, n * m.cols());
  Matrix power = m;
  for (Index i = 0; i < n; ++i) {
    k.middleCols(i * m.cols(), m.cols()) = power;
    power = a * power;
  }
  return linalg::numerical_rank(k);
}

inline RankCheck check_observability(const LinearSystem& sys, const SensorBank& bank) {
  if (bank.state_dim() != sys.n()) {
    throw DimensionError("sensor bank state dimension " + std::to_string(bank.state_dim()) +
                         " does not match system dimension " + std::to_string(sys.n()));
  }
  if (bank.output_dim() == 0) return {false, 0};
  // Observability of (A, C) is controllability of (A^T, C^T).
  const int rank = krylov_rank(sys.A().transpose(), bank.C().transpose());
  return {rank == sys.n(), rank};
}

inline ValidationReport validate_system(const LinearSystem& sys) {
  ValidationReport report;
  report.warnings = sys.warnings();
  const int rank_a = linalg::numerical_rank(sys.A());
  report.invertible = rank_a == sys.n();
  report.condition_number = linalg::condition_number(sys.A());
  if (report.invertible && report.condition_number > kConditionWarning) {
    report.warnings.push_back("A is ill-conditioned (cond " +
                              std::to_string(report.condition_number) + ")");
  }
  const int rank_c = krylov_rank(sys.A(), sys.sqrt_Q());
  report.controllability = {rank_c == sys.n(), rank_c};
  return report;
}

inline ValidationReport validate_system(const LinearSystem& sys, const SensorBank& bank) {
  ValidationReport report = validate_system(sys);
  report.observability = check_observability(sys, bank);
  report.warnings.insert(report.warnings.end(), bank.warnings().begin(), bank.warnings().end());
  return report;
}

/// Base sensors first, then the redundant ones; G = G0 + G1.
inline SensorBank augment(const SensorBank& base, const SensorBank& redundant) {
  if (base.state_dim() != redundant.state_dim()) {
    throw DimensionError("cannot augment banks with state dimensions " +
                         std::to_string(base.state_dim()) + " and " +
                         std::to_string(redundant.state_dim()));
  }
  std::vector<Sensor> all = base.sensors();
  all.insert(all.end(), redundant.sensors().begin(), redundant.sensors().end());
  return SensorBank(std::move(all), base.state_dim());
}

inline Matrix information_matrix(const SensorBank& bank) { return bank.G(); }

/// Splits a stacked output matrix into sensors according to row_partition,
/// taking the matching diagonal blocks of noise.
inline SensorBank bank_from_rows(const Matrix& c, const Matrix& noise,
                                 const std::vector<Index>& row_partition,
                                 const std::string& label_prefix) {
  std::vector<Sensor> sensors;
  Index offset = 0;
  for (std::size_t i = 0; i < row_partition.size(); ++i) {
    const Index rows = row_partition[i];
    if (offset + rows > c.rows()) throw DimensionError("row partition exceeds matrix rows");
    sensors.push_back({c.middleRows(offset, rows), noise.block(offset, offset, rows, rows),
                       label_prefix + std::to_string(i + 1)});
    offset += rows;
  }
  if (offset != c.rows()) throw DimensionError("row partition does not cover every row");
  return SensorBank(std::move(sensors), c.cols());
}

}  // namespace rsd

#endif  // RSD_MODEL_HPP
