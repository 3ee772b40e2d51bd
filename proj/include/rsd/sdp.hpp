#ifndef RSD_SDP_HPP
#define RSD_SDP_HPP

// Small dense semidefinite programs in LMI form:
//
//   minimize    c^T x
//   subject to  F0_b + sum_k x_k F_kb  >= 0   for every block b
//
// solved with an infeasible-start primal-dual interior-point method (HKM
// search direction, Mehrotra predictor-corrector). The dual problem is
//
//   maximize    -sum_b <F0_b, Z_b>
//   subject to  sum_b <F_kb, Z_b> = c_k,  Z_b >= 0.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SparseCore>

#include "rsd/errors.hpp"
#include "rsd/linalg.hpp"

namespace rsd::sdp {

using SparseMatrix = Eigen::SparseMatrix<double>;

enum class VariableKind { Symmetric, Rectangular, Scalar };

struct VariableShape {
  VariableKind kind = VariableKind::Scalar;
  Index rows = 1;
  Index cols = 1;

  static VariableShape symmetric(Index n) { return {VariableKind::Symmetric, n, n}; }
  static VariableShape rectangular(Index r, Index c) { return {VariableKind::Rectangular, r, c}; }
  static VariableShape scalar() { return {VariableKind::Scalar, 1, 1}; }

  Index storage_length() const {
    switch (kind) {
      case VariableKind::Symmetric: return rows * (rows + 1) / 2;
      case VariableKind::Rectangular: return rows * cols;
      case VariableKind::Scalar: return 1;
    }
    return 0;
  }
};

/// Handle to a decision variable: a contiguous range of coordinates in the
/// flattened decision vector.
struct Variable {
  std::size_t id = 0;
  std::string name;
  VariableShape shape;
  Index offset = 0;
  Index length = 0;
};

/// Entry (row, col) of the matrix variable touched by local coordinate k.
/// Symmetric variables are stored upper-triangle column by column with the
/// off-diagonal basis (e_i e_j^T + e_j e_i^T) / sqrt(2), so the coordinate
/// inner product equals the trace inner product.
inline std::pair<Index, Index> coordinate_entry(const VariableShape& shape, Index k) {
  switch (shape.kind) {
    case VariableKind::Symmetric: {
      Index j = 0;
      while ((j + 1) * (j + 2) / 2 <= k) ++j;
      return {k - j * (j + 1) / 2, j};
    }
    case VariableKind::Rectangular: return {k % shape.rows, k / shape.rows};
    case VariableKind::Scalar: return {0, 0};
  }
  return {0, 0};
}

/// Basis matrix of local coordinate k.
inline Matrix basis_matrix(const VariableShape& shape, Index k) {
  Matrix e = Matrix::Zero(shape.rows, shape.cols);
  const auto [i, j] = coordinate_entry(shape, k);
  if (shape.kind == VariableKind::Symmetric && i != j) {
    e(i, j) = e(j, i) = M_SQRT1_2;
  } else {
    e(i, j) = 1.0;
  }
  return e;
}

enum class Sense { PositiveSemidefinite, NegativeSemidefinite };

/// One affine matrix inequality  constant + sum_k x_k coefficient_k  (sense) 0.
struct LmiBlock {
  std::string name;
  Index size = 0;
  Sense sense = Sense::PositiveSemidefinite;
  Matrix constant;
  std::vector<std::pair<Index, SparseMatrix>> coefficients;  ///< sorted by coordinate

  Matrix evaluate(const Vector& x) const {
    Matrix m = constant;
    for (const auto& [k, f] : coefficients) m += x(k) * Matrix(f);
    return m;
  }
};

/// Assembles an LmiBlock from placed sub-blocks. Off-diagonal placements are
/// mirrored automatically.
class LmiBuilder {
 public:
  LmiBuilder(Index size, Sense sense, std::string name = {})
      : size_(size), sense_(sense), name_(std::move(name)), constant_(Matrix::Zero(size, size)) {}

  /// m at (row, col); m^T at (col, row) unless row == col.
  LmiBuilder& constant(Index row, Index col, const Matrix& m) {
    check_fits(row, col, m.rows(), m.cols());
    constant_.block(row, col, m.rows(), m.cols()) += m;
    if (row != col) constant_.block(col, row, m.cols(), m.rows()) += m.transpose();
    return *this;
  }

  /// left * V * right at (row, col), mirrored; row != col.
  LmiBuilder& term(Index row, Index col, const Matrix& left, const Variable& v, const Matrix& right) {
    if (row == col) throw DimensionError("LmiBuilder::term needs an off-diagonal placement");
    for (Index k = 0; k < v.length; ++k) {
      const Matrix t = left * basis_matrix(v.shape, k) * right;
      check_fits(row, col, t.rows(), t.cols());
      add_entries(v.offset + k, row, col, t);
      add_entries(v.offset + k, col, row, t.transpose());
    }
    return *this;
  }

  /// left * V * right + (left * V * right)^T on the diagonal at (at, at).
  LmiBuilder& symmetric_term(Index at, const Matrix& left, const Variable& v, const Matrix& right) {
    for (Index k = 0; k < v.length; ++k) {
      const Matrix t = left * basis_matrix(v.shape, k) * right;
      check_fits(at, at, t.rows(), t.cols());
      add_entries(v.offset + k, at, at, t + t.transpose());
    }
    return *this;
  }

  /// scale * V on the diagonal at (at, at) for a symmetric or scalar V.
  LmiBuilder& diagonal_term(Index at, double scale, const Variable& v) {
    if (v.shape.kind == VariableKind::Rectangular) {
      throw DimensionError("diagonal_term needs a symmetric or scalar variable");
    }
    for (Index k = 0; k < v.length; ++k) {
      const Matrix t = scale * basis_matrix(v.shape, k);
      check_fits(at, at, t.rows(), t.cols());
      add_entries(v.offset + k, at, at, t);
    }
    return *this;
  }

  LmiBlock build() const {
    LmiBlock block;
    block.name = name_;
    block.size = size_;
    block.sense = sense_;
    block.constant = constant_;
    for (const auto& [k, triplets] : entries_) {
      SparseMatrix f(size_, size_);
      f.setFromTriplets(triplets.begin(), triplets.end());
      f.prune(0.0);
      if (f.nonZeros() > 0) block.coefficients.emplace_back(k, std::move(f));
    }
    return block;
  }

 private:
  void check_fits(Index row, Index col, Index rows, Index cols) const {
    if (row < 0 || col < 0 || row + rows > size_ || col + cols > size_) {
      throw DimensionError("LMI sub-block at (" + std::to_string(row) + ", " +
                           std::to_string(col) + ") of size " + std::to_string(rows) + "x" +
                           std::to_string(cols) + " exceeds block size " + std::to_string(size_));
    }
  }

  void add_entries(Index coordinate, Index row, Index col, const Matrix& t) {
    auto& list = entries_[coordinate];
    for (Index i = 0; i < t.rows(); ++i)
      for (Index j = 0; j < t.cols(); ++j)
        if (t(i, j) != 0.0) list.emplace_back(row + i, col + j, t(i, j));
  }

  Index size_;
  Sense sense_;
  std::string name_;
  Matrix constant_;
  std::map<Index, std::vector<Eigen::Triplet<double>>> entries_;
};

class Problem {
 public:
  Variable add_variable(std::string name, VariableShape shape) {
    Variable v;
    v.id = variables_.size();
    v.name = std::move(name);
    v.shape = shape;
    v.offset = num_coordinates_;
    v.length = shape.storage_length();
    num_coordinates_ += v.length;
    variables_.push_back(v);
    return v;
  }

  /// Rejects blocks with asymmetric data or coordinates outside the problem.
  void add_lmi_block(LmiBlock block) {
    if (block.constant.rows() != block.size || block.constant.cols() != block.size) {
      throw DimensionError("LMI block '" + block.name + "': constant has wrong size");
    }
    const double scale = 1.0 + linalg::inf_norm(block.constant);
    if (linalg::symmetry_residual(block.constant) > 1e-12 * scale) {
      throw DimensionError("LMI block '" + block.name + "': constant term is not symmetric");
    }
    std::sort(block.coefficients.begin(), block.coefficients.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [k, f] : block.coefficients) {
      if (k < 0 || k >= num_coordinates_) {
        throw DimensionError("LMI block '" + block.name + "' references unknown coordinate " +
                             std::to_string(k));
      }
      if (f.rows() != block.size || f.cols() != block.size) {
        throw DimensionError("LMI block '" + block.name + "': coefficient has wrong size");
      }
      const SparseMatrix diff = f - SparseMatrix(f.transpose());
      const Matrix dense_f(f);
      if (linalg::inf_norm(Matrix(diff)) > 1e-12 * (1.0 + linalg::inf_norm(dense_f))) {
        throw DimensionError("LMI block '" + block.name + "': coefficient of coordinate " +
                             std::to_string(k) + " is not symmetric");
      }
    }
    blocks_.push_back(std::move(block));
  }

  Index num_coordinates() const { return num_coordinates_; }
  const std::vector<Variable>& variables() const { return variables_; }
  const std::vector<LmiBlock>& blocks() const { return blocks_; }

  /// Writes a matrix value into the coordinates of v.
  void set_value(Vector& x, const Variable& v, const Matrix& value) const {
    if (value.rows() != v.shape.rows || value.cols() != v.shape.cols) {
      throw DimensionError("value for '" + v.name + "' has the wrong shape");
    }
    if (x.size() != num_coordinates_) x.conservativeResize(num_coordinates_);
    for (Index k = 0; k < v.length; ++k) {
      const auto [i, j] = coordinate_entry(v.shape, k);
      const bool off = v.shape.kind == VariableKind::Symmetric && i != j;
      x(v.offset + k) = off ? M_SQRT2 * 0.5 * (value(i, j) + value(j, i)) : value(i, j);
    }
  }

  Matrix value(const Vector& x, const Variable& v) const {
    Matrix m = Matrix::Zero(v.shape.rows, v.shape.cols);
    for (Index k = 0; k < v.length; ++k) m += x(v.offset + k) * basis_matrix(v.shape, k);
    return m;
  }

  /// Sparse text dump: a comment header, then one line per nonzero of the
  /// upper triangle, "block row col coordinate value", where coordinate 0 is
  /// the constant term and k + 1 is decision coordinate k. Indices are
  /// zero-based for blocks/rows/cols. Negative-semidefinite blocks are
  /// written as declared (sense recorded in the header).
  void dump(std::ostream& os, const Vector& objective) const {
    os << "# rsd sdp dump v1\n";
    os << "# coordinates " << num_coordinates_ << "\n";
    for (const auto& v : variables_) {
      os << "# variable " << v.name << " offset " << v.offset << " length " << v.length << "\n";
    }
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      os << "# block " << b << " '" << blocks_[b].name << "' size " << blocks_[b].size << " "
         << (blocks_[b].sense == Sense::PositiveSemidefinite ? "psd" : "nsd") << "\n";
    }
    os.precision(17);
    os << "# objective";
    for (Index k = 0; k < objective.size(); ++k) os << " " << objective(k);
    os << "\n";
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      const LmiBlock& blk = blocks_[b];
      for (Index i = 0; i < blk.size; ++i)
        for (Index j = i; j < blk.size; ++j)
          if (blk.constant(i, j) != 0.0)
            os << b << " " << i << " " << j << " 0 " << blk.constant(i, j) << "\n";
      for (const auto& [k, f] : blk.coefficients) {
        for (int outer = 0; outer < f.outerSize(); ++outer)
          for (SparseMatrix::InnerIterator it(f, outer); it; ++it)
            if (it.row() <= it.col())
              os << b << " " << it.row() << " " << it.col() << " " << k + 1 << " " << it.value()
                 << "\n";
      }
    }
  }

 private:
  std::vector<Variable> variables_;
  std::vector<LmiBlock> blocks_;
  Index num_coordinates_ = 0;
};

/// Linear objective c^T x built from matrix weights: <W, V> for each term.
class Objective {
 public:
  explicit Objective(const Problem& problem) : c_(Vector::Zero(problem.num_coordinates())) {}

  Objective& add(const Variable& v, const Matrix& weight) {
    if (weight.rows() != v.shape.rows || weight.cols() != v.shape.cols) {
      throw DimensionError("objective weight for '" + v.name + "' has the wrong shape");
    }
    if (c_.size() < v.offset + v.length) c_.conservativeResize(v.offset + v.length);
    for (Index k = 0; k < v.length; ++k) {
      c_(v.offset + k) += (weight.array() * basis_matrix(v.shape, k).array()).sum();
    }
    return *this;
  }

  Objective& add(const Variable& scalar, double weight) {
    return add(scalar, Matrix::Constant(1, 1, weight));
  }

  const Vector& vector() const { return c_; }

 private:
  Vector c_;
};

enum class Status { Optimal, Infeasible, Unbounded, MaxIterations, NumericalFailure };

inline const char* to_string(Status s) {
  switch (s) {
    case Status::Optimal: return "optimal";
    case Status::Infeasible: return "infeasible";
    case Status::Unbounded: return "unbounded";
    case Status::MaxIterations: return "max_iterations";
    case Status::NumericalFailure: return "numerical_failure";
  }
  return "?";
}

struct SolverOptions {
  double target_tolerance = 1e-10;  ///< stop as soon as this accuracy is reached
  double accept_tolerance = 1e-8;   ///< accuracy required to report Optimal
  double infeasibility_ratio = 1e-8;
  int max_iterations = 150;
  double step_fraction = 0.95;
  std::ostream* log = nullptr;  ///< one line per iteration when set
};

struct SdpSolution {
  Status status = Status::NumericalFailure;
  Vector x;
  std::vector<Matrix> values;  ///< per variable, indexed by Variable::id
  std::vector<Matrix> dual;    ///< Z per block, in PSD orientation
  double objective = 0.0;
  double dual_objective = 0.0;
  double primal_infeasibility = 0.0;  ///< max_b |F_b(x) - S_b|_F / (1 + data scale)
  double dual_infeasibility = 0.0;   ///< |c - A*(Z)| / (1 + |c| + size of the terms of A*(Z))
  double relative_gap = 0.0;
  int iterations = 0;

  const Matrix& value(const Variable& v) const { return values.at(v.id); }
};

namespace detail {

struct Entry {
  Index row;
  Index col;
  double value;
};

/// A block in PSD orientation with coefficient entries as flat lists.
struct WorkBlock {
  Index size = 0;
  Matrix constant;
  std::vector<Index> coords;                // decision coordinates present
  std::vector<std::vector<Entry>> entries;  // full (both triangles) entries per coord
};

inline double trace_product(const std::vector<Entry>& f, const Matrix& m) {
  double s = 0.0;
  for (const Entry& e : f) s += e.value * m(e.col, e.row);
  return s;
}

/// Largest step t with X + t D >= 0 (infinity when unbounded).
inline double max_step(const Eigen::LLT<Matrix>& chol, const Matrix& d) {
  const Matrix& l = chol.matrixL();
  Matrix tmp = l.triangularView<Eigen::Lower>().solve(d);
  tmp = l.triangularView<Eigen::Lower>().solve(Matrix(tmp.transpose()));
  const double lmin = linalg::min_eigenvalue(tmp);
  return lmin >= 0.0 ? std::numeric_limits<double>::infinity() : -1.0 / lmin;
}

}  // namespace detail

/// Solves min c^T x subject to every block of the problem.
inline SdpSolution solve(const Problem& problem, const Vector& objective,
                         const SolverOptions& options = {}) {
  using detail::Entry;
  using detail::WorkBlock;
  const Index m = problem.num_coordinates();
  if (problem.blocks().empty()) throw DimensionError("SDP has no LMI blocks");
  Vector c = objective;
  if (c.size() > m) throw DimensionError("objective references unknown coordinates");
  if (c.size() < m) {
    const Index old = c.size();
    c.conservativeResize(m);
    c.tail(m - old).setZero();
  }

  // PSD-oriented working copy.
  std::vector<WorkBlock> blocks;
  double data_scale = 0.0;
  Index total_size = 0;
  std::vector<int> coverage(static_cast<std::size_t>(m), 0);
  for (const LmiBlock& blk : problem.blocks()) {
    const double sign = blk.sense == Sense::PositiveSemidefinite ? 1.0 : -1.0;
    WorkBlock w;
    w.size = blk.size;
    w.constant = sign * blk.constant;
    data_scale = std::max(data_scale, w.constant.cwiseAbs().maxCoeff());
    for (const auto& [k, f] : blk.coefficients) {
      std::vector<Entry> list;
      for (int outer = 0; outer < f.outerSize(); ++outer)
        for (SparseMatrix::InnerIterator it(f, outer); it; ++it)
          list.push_back({it.row(), it.col(), sign * it.value()});
      w.coords.push_back(k);
      w.entries.push_back(std::move(list));
      coverage[static_cast<std::size_t>(k)] += 1;
    }
    total_size += w.size;
    blocks.push_back(std::move(w));
  }
  for (Index k = 0; k < m; ++k) {
    if (coverage[static_cast<std::size_t>(k)] == 0) {
      throw DimensionError("decision coordinate " + std::to_string(k) +
                           " appears in no LMI block");
    }
  }
  const double primal_scale = 1.0 + data_scale;
  const double dual_scale = 1.0 + c.cwiseAbs().maxCoeff();

  // Initial point.
  const double xi_s = 10.0 * primal_scale;
  const double xi_z = 10.0 * dual_scale;
  Vector x = Vector::Zero(m);
  std::vector<Matrix> s_blk, z_blk;
  for (const WorkBlock& w : blocks) {
    s_blk.push_back(xi_s * Matrix::Identity(w.size, w.size));
    z_blk.push_back(xi_z * Matrix::Identity(w.size, w.size));
  }
  const std::size_t nb = blocks.size();

  auto primal_residual = [&](std::size_t b) {
    Matrix r = blocks[b].constant - s_blk[b];
    for (std::size_t i = 0; i < blocks[b].coords.size(); ++i) {
      const double xk = x(blocks[b].coords[i]);
      if (xk == 0.0) continue;
      for (const Entry& e : blocks[b].entries[i]) r(e.row, e.col) += xk * e.value;
    }
    return r;
  };
  auto adjoint = [&](const std::vector<Matrix>& z) {
    Vector out = Vector::Zero(m);
    for (std::size_t b = 0; b < nb; ++b)
      for (std::size_t i = 0; i < blocks[b].coords.size(); ++i)
        out(blocks[b].coords[i]) += detail::trace_product(blocks[b].entries[i], z[b]);
    return out;
  };

  SdpSolution sol;
  std::vector<Matrix> rp(nb);
  std::vector<Matrix> s_inv(nb);
  std::vector<Eigen::LLT<Matrix>> s_chol(nb), z_chol(nb);
  double best_measure = std::numeric_limits<double>::infinity();
  Vector best_x = x;
  std::vector<Matrix> best_z = z_blk;
  SdpSolution best_stats;

  auto record = [&](Status status, int iteration) {
    sol.status = status;
    sol.iterations = iteration;
    sol.x = x;
    sol.dual = z_blk;
  };

  bool done = false;
  for (int it = 0; it <= options.max_iterations && !done; ++it) {
    // Residuals and convergence measures.
    double rp_norm = 0.0;
    double mu_sum = 0.0;
    double dual_obj = 0.0;
    for (std::size_t b = 0; b < nb; ++b) {
      rp[b] = primal_residual(b);
      rp_norm = std::max(rp_norm, rp[b].norm());
      mu_sum += (s_blk[b].array() * z_blk[b].array()).sum();
      dual_obj -= (blocks[b].constant.array() * z_blk[b].array()).sum();
    }
    const Vector az = adjoint(z_blk);
    // Size of the terms that cancel in A*(Z): the rounding scale of rd.
    double dual_magnitude = 0.0;
    for (std::size_t b = 0; b < nb; ++b) {
      for (std::size_t i = 0; i < blocks[b].coords.size(); ++i) {
        double acc = 0.0;
        for (const Entry& e : blocks[b].entries[i]) acc += std::abs(e.value * z_blk[b](e.col, e.row));
        dual_magnitude = std::max(dual_magnitude, acc);
      }
    }
    const Vector rd = c - az;
    const double primal_obj = c.dot(x);
    const double mu = mu_sum / static_cast<double>(total_size);
    sol.objective = primal_obj;
    sol.dual_objective = dual_obj;
    sol.primal_infeasibility = rp_norm / primal_scale;
    sol.dual_infeasibility = rd.norm() / (dual_scale + dual_magnitude);
    sol.relative_gap = std::max(std::abs(primal_obj - dual_obj), std::abs(mu_sum)) /
                       (1.0 + std::abs(primal_obj) + std::abs(dual_obj));
    const double measure =
        std::max({sol.primal_infeasibility, sol.dual_infeasibility, sol.relative_gap});
    if (options.log) {
      *options.log << "sdp it " << it << " pobj " << primal_obj << " dobj " << dual_obj
                   << " pinf " << sol.primal_infeasibility << " dinf "
                   << sol.dual_infeasibility << " gap " << sol.relative_gap << " mu " << mu
                   << "\n";
    }
    if (measure < best_measure) {
      best_measure = measure;
      best_x = x;
      best_z = z_blk;
      best_stats = sol;
    }
    if (measure <= options.target_tolerance) {
      record(Status::Optimal, it);
      done = true;
      break;
    }
    // Farkas-type certificates.
    if (dual_obj > 0.0 && az.norm() <= options.infeasibility_ratio * dual_obj &&
        sol.primal_infeasibility > options.accept_tolerance) {
      record(Status::Infeasible, it);
      done = true;
      break;
    }
    if (-primal_obj > 1e10 * (1.0 + std::abs(dual_obj)) * dual_scale &&
        sol.primal_infeasibility <= options.accept_tolerance) {
      record(Status::Unbounded, it);
      done = true;
      break;
    }
    if (it == options.max_iterations) break;

    // Factorizations.
    bool failed = false;
    for (std::size_t b = 0; b < nb && !failed; ++b) {
      s_chol[b].compute(s_blk[b]);
      z_chol[b].compute(z_blk[b]);
      if (s_chol[b].info() != Eigen::Success || z_chol[b].info() != Eigen::Success) {
        failed = true;
        break;
      }
      s_inv[b] = s_chol[b].solve(Matrix::Identity(blocks[b].size, blocks[b].size));
      s_inv[b] = linalg::symmetrize(s_inv[b]);
    }
    if (failed) break;

    // Schur complement matrix M_kj = sum_b <F_k, S^-1 F_j Z>.
    Matrix schur = Matrix::Zero(m, m);
    for (std::size_t b = 0; b < nb; ++b) {
      const WorkBlock& w = blocks[b];
      const Matrix& si = s_inv[b];
      const Matrix& z = z_blk[b];
      const std::size_t nc = w.coords.size();
      std::size_t total_nnz = 0;
      for (const auto& e : w.entries) total_nnz += e.size();
      const double bs3 = std::pow(static_cast<double>(w.size), 3);
      for (std::size_t i = 0; i < nc; ++i) {
        const auto& fi = w.entries[i];
        if (static_cast<double>(fi.size()) * static_cast<double>(total_nnz) > bs3) {
          // Dense route: W = S^-1 F_i Z, then M_ij = <F_j, W^T>.
          Matrix fz = Matrix::Zero(w.size, w.size);
          for (const Entry& e : fi) fz.row(e.row) += e.value * z.row(e.col);
          const Matrix wmat = si * fz;
          for (std::size_t j = i; j < nc; ++j) {
            double acc = 0.0;
            for (const Entry& e : w.entries[j]) acc += e.value * wmat(e.col, e.row);
            schur(w.coords[i], w.coords[j]) += acc;
          }
        } else {
          // M_ij = sum_{(a,b) in F_i} sum_{(c,d) in F_j} f_ab f_cd S^-1(b,c) Z(d,a)
          for (std::size_t j = i; j < nc; ++j) {
            double acc = 0.0;
            for (const Entry& ei : fi)
              for (const Entry& ej : w.entries[j])
                acc += ei.value * ej.value * si(ei.col, ej.row) * z(ej.col, ei.row);
            schur(w.coords[i], w.coords[j]) += acc;
          }
        }
      }
    }
    schur = schur.selfadjointView<Eigen::Upper>();
    // Jacobi equilibration, then Cholesky (LDLT fallback) with refinement.
    Vector scale = schur.diagonal().cwiseAbs().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
    const Matrix scaled = scale.asDiagonal() * schur * scale.asDiagonal();
    Eigen::LLT<Matrix> schur_chol(scaled);
    Eigen::LDLT<Matrix> schur_ldlt;
    const bool use_llt = schur_chol.info() == Eigen::Success;
    if (!use_llt) schur_ldlt.compute(scaled);
    auto schur_solve = [&](const Vector& rhs) {
      auto once = [&](const Vector& r) {
        const Vector y = scale.cwiseProduct(r);
        const Vector z = use_llt ? Vector(schur_chol.solve(y)) : Vector(schur_ldlt.solve(y));
        return Vector(scale.cwiseProduct(z));
      };
      Vector sol = once(rhs);
      for (int k = 0; k < 2; ++k) sol += once(rhs - schur * sol);
      return sol;
    };

    auto direction = [&](double sigma_mu, const std::vector<Matrix>* corr_s,
                         const std::vector<Matrix>* corr_z, Vector& dx, std::vector<Matrix>& ds,
                         std::vector<Matrix>& dz) {
      std::vector<Matrix> h(nb);
      Vector rhs = -rd;
      for (std::size_t b = 0; b < nb; ++b) {
        h[b] = sigma_mu * s_inv[b] - z_blk[b] - s_inv[b] * rp[b] * z_blk[b];
        if (corr_s) h[b] -= s_inv[b] * (*corr_s)[b] * (*corr_z)[b];
        for (std::size_t i = 0; i < blocks[b].coords.size(); ++i)
          rhs(blocks[b].coords[i]) += detail::trace_product(blocks[b].entries[i], h[b]);
      }
      dx = schur_solve(rhs);
      for (std::size_t b = 0; b < nb; ++b) {
        ds[b] = rp[b];
        for (std::size_t i = 0; i < blocks[b].coords.size(); ++i) {
          const double d = dx(blocks[b].coords[i]);
          if (d == 0.0) continue;
          for (const Entry& e : blocks[b].entries[i]) ds[b](e.row, e.col) += d * e.value;
        }
        dz[b] = linalg::symmetrize(h[b] + s_inv[b] * (rp[b] - ds[b]) * z_blk[b]);
      }
    };
    auto step_lengths = [&](const std::vector<Matrix>& ds, const std::vector<Matrix>& dz) {
      double ap = std::numeric_limits<double>::infinity();
      double ad = std::numeric_limits<double>::infinity();
      for (std::size_t b = 0; b < nb; ++b) {
        ap = std::min(ap, detail::max_step(s_chol[b], ds[b]));
        ad = std::min(ad, detail::max_step(z_chol[b], dz[b]));
      }
      return std::pair{std::min(1.0, options.step_fraction * ap),
                       std::min(1.0, options.step_fraction * ad)};
    };

    // Predictor.
    Vector dx_a;
    std::vector<Matrix> ds_a(nb), dz_a(nb);
    direction(0.0, nullptr, nullptr, dx_a, ds_a, dz_a);
    const auto [ap_a, ad_a] = step_lengths(ds_a, dz_a);
    double mu_aff = 0.0;
    for (std::size_t b = 0; b < nb; ++b) {
      mu_aff += ((s_blk[b] + ap_a * ds_a[b]).array() * (z_blk[b] + ad_a * dz_a[b]).array()).sum();
    }
    mu_aff /= static_cast<double>(total_size);
    const double sigma = std::clamp(std::pow(std::max(mu_aff, 0.0) / mu, 3.0), 0.0, 1.0);

    // Corrector.
    Vector dx;
    std::vector<Matrix> ds(nb), dz(nb);
    direction(sigma * mu, &ds_a, &dz_a, dx, ds, dz);
    const auto [ap, ad] = step_lengths(ds, dz);
    if (!dx.allFinite() || (ap < 1e-12 && ad < 1e-12)) break;

    x += ap * dx;
    for (std::size_t b = 0; b < nb; ++b) {
      s_blk[b] = linalg::symmetrize(s_blk[b] + ap * ds[b]);
      z_blk[b] = linalg::symmetrize(z_blk[b] + ad * dz[b]);
    }
    sol.iterations = it + 1;
  }

  if (!done) {
    // Fall back to the most accurate iterate seen.
    const int iterations = sol.iterations;
    sol = best_stats;
    sol.x = best_x;
    sol.dual = best_z;
    sol.iterations = iterations;
    if (best_measure <= options.accept_tolerance) {
      sol.status = Status::Optimal;
    } else if (iterations >= options.max_iterations) {
      sol.status = Status::MaxIterations;
    } else {
      sol.status = Status::NumericalFailure;
    }
  }
  sol.objective = c.dot(sol.x);
  sol.values.clear();
  for (const Variable& v : problem.variables()) sol.values.push_back(problem.value(sol.x, v));
  return sol;
}

/// Smallest eigenvalue of each block at x, in PSD orientation.
inline std::vector<double> block_margins(const Problem& problem, const Vector& x) {
  std::vector<double> out;
  for (const LmiBlock& blk : problem.blocks()) {
    const double sign = blk.sense == Sense::PositiveSemidefinite ? 1.0 : -1.0;
    out.push_back(linalg::min_eigenvalue(sign * blk.evaluate(x)));
  }
  return out;
}

}  // namespace rsd::sdp

#endif  // RSD_SDP_HPP
