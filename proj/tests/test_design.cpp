#include "rsd/design.hpp"

#include <random>

#include <gtest/gtest.h>

#include "rsd/analysis.hpp"
#include "fixtures.hpp"

namespace rsd {
namespace {

using testing::example_base;
using testing::example_system;
using testing::mat;

DesignSpec example_spec() {
  DesignSpec spec{example_system(), example_base(), {1, 1}, Matrix::Identity(2, 2)};
  spec.norm_bound = 5.0;
  spec.C_r0 = mat({{3, 0}, {3, 3}});
  spec.epsilon = 1e-5;
  return spec;
}

/// The example design is shared by several tests.
const DesignResult& example_design() {
  static const DesignResult result = design_redundant_sensors(example_spec());
  return result;
}

struct FBlockFixture {
  sdp::Problem problem;
  sdp::Variable x;
  sdp::Variable c;
  sdp::LmiBlock block;

  explicit FBlockFixture(const Matrix& c_r) {
    x = problem.add_variable("X", sdp::VariableShape::symmetric(2));
    c = problem.add_variable("C", sdp::VariableShape::rectangular(c_r.rows(), 2));
    const LinearSystem sys = example_system();
    block = build_f_lmi(x, c, {sys.A(), sys.sqrt_Q(), example_base().G(), c_r,
                               Matrix::Identity(c_r.rows(), c_r.rows())});
  }

  Matrix at(const Matrix& xv, const Matrix& cv) const {
    Vector coords = Vector::Zero(problem.num_coordinates());
    problem.set_value(coords, x, xv);
    problem.set_value(coords, c, cv);
    return block.evaluate(coords);
  }
};

TEST(FLmi, SizeAndSense) {
  const FBlockFixture f(mat({{3, 0}, {3, 3}}));
  EXPECT_EQ(f.block.size, 3 * 2 + 2);
  EXPECT_EQ(f.block.sense, sdp::Sense::NegativeSemidefinite);
}

TEST(FLmi, ReducesToCompletedSquareAtReference) {
  const Matrix c_r = mat({{3, 0}, {3, 3}});
  const FBlockFixture f(c_r);
  const Matrix xv = mat({{2, 0.3}, {0.3, 1.5}});
  const Matrix m = f.at(xv, c_r);
  const Matrix omega = m.block(2, 2, 2, 2) + c_r.transpose() * c_r;
  const Matrix expected = -xv - example_base().G() - c_r.transpose() * c_r;
  EXPECT_LE(linalg::inf_norm(omega - expected), 1e-12);
}

TEST(FLmi, BoundaryFeasibleAtDareSolution) {
  const Matrix c_r = mat({{3, 0}, {3, 3}});
  const FBlockFixture f(c_r);
  const SensorBank red = testing::example_redundant_r2();
  const Matrix p = steady_state(example_system(), augment(example_base(), red)).P;
  const double top = linalg::max_eigenvalue(f.at(p.inverse(), c_r));
  EXPECT_LE(top, 1e-6);
  EXPECT_GE(top, -1e-6);
}

TEST(FLmi, TinyXWithoutSensorsIsIndefinite) {
  const FBlockFixture f(mat({{3, 0}, {3, 3}}));
  const Matrix m = f.at(1e-9 * Matrix::Identity(2, 2), Matrix::Zero(2, 2));
  EXPECT_GT(linalg::max_eigenvalue(m), 0.0);
  EXPECT_LT(linalg::min_eigenvalue(m), 0.0);
}

TEST(FLmi, MapIsAffine) {
  const FBlockFixture f(mat({{3, 0}, {3, 3}}));
  const Matrix x1 = mat({{2, 0.3}, {0.3, 1.5}}), x2 = mat({{0.5, -1}, {-1, 4}});
  const Matrix c1 = mat({{1, 2}, {3, 4}}), c2 = mat({{-2, 0.5}, {0, 1}});
  const double a = 0.3;
  const Matrix lhs = f.at(a * x1 + (1 - a) * x2, a * c1 + (1 - a) * c2);
  const Matrix rhs = a * f.at(x1, c1) + (1 - a) * f.at(x2, c2);
  EXPECT_LE(linalg::inf_norm(lhs - rhs), 1e-12);
}

TEST(FLmi, RejectsDimensionMismatch) {
  sdp::Problem p;
  const auto x = p.add_variable("X", sdp::VariableShape::symmetric(2));
  const auto c = p.add_variable("C", sdp::VariableShape::rectangular(2, 2));
  const LinearSystem sys = example_system();
  EXPECT_THROW(build_f_lmi(x, c, {sys.A(), sys.sqrt_Q(), example_base().G(), Matrix::Zero(3, 2),
                                  Matrix::Identity(3, 3)}),
               DimensionError);
}

double trace_block_min_eig(const Matrix& xv, double gamma) {
  sdp::Problem p;
  const auto x = p.add_variable("X", sdp::VariableShape::symmetric(xv.rows()));
  const auto g = p.add_variable("g", sdp::VariableShape::scalar());
  const sdp::LmiBlock blk = build_trace_lmi(g, x);
  Vector coords = Vector::Zero(p.num_coordinates());
  p.set_value(coords, x, xv);
  p.set_value(coords, g, mat({{gamma}}));
  return linalg::min_eigenvalue(blk.evaluate(coords));
}

TEST(TraceLmi, BoundaryAtInverseTrace) {
  EXPECT_NEAR(trace_block_min_eig(Matrix::Identity(2, 2), 2.0), 0.0, 1e-12);
}

TEST(TraceLmi, StrictlyFeasibleAboveInverseTrace) {
  EXPECT_GT(trace_block_min_eig(Matrix::Identity(2, 2), 3.0), 1e-3);
}

TEST(TraceLmi, InfeasibleBelowInverseTrace) {
  // tr(diag(2, 4)^-1) = 0.75
  EXPECT_LT(trace_block_min_eig(mat({{2, 0}, {0, 4}}), 0.7), 0.0);
}

double norm_block_min_eig(const Matrix& row, double bound) {
  sdp::Problem p;
  const auto c = p.add_variable("C", sdp::VariableShape::rectangular(1, row.cols()));
  const sdp::LmiBlock blk = build_norm_lmi(c, 0, 1, bound);
  Vector coords = Vector::Zero(p.num_coordinates());
  p.set_value(coords, c, row);
  return linalg::min_eigenvalue(blk.evaluate(coords));
}

TEST(NormLmi, InsideBound) { EXPECT_GT(norm_block_min_eig(mat({{3, 0}}), 5.0), 1.0); }

TEST(NormLmi, OnBound) { EXPECT_NEAR(norm_block_min_eig(mat({{3, 4}}), 5.0), 0.0, 1e-12); }

TEST(NormLmi, OutsideBound) { EXPECT_LT(norm_block_min_eig(mat({{4, 4}}), 5.0), -0.5); }

TEST(NormLmi, SelectsSensorRows) {
  sdp::Problem p;
  const auto c = p.add_variable("C", sdp::VariableShape::rectangular(3, 2));
  const sdp::LmiBlock blk = build_norm_lmi(c, 1, 2, 5.0);
  Vector coords = Vector::Zero(p.num_coordinates());
  // Row 0 is far outside the bound but not part of this sensor.
  p.set_value(coords, c, mat({{100, 100}, {3, 0}, {0, 4}}));
  EXPECT_NEAR(linalg::min_eigenvalue(blk.evaluate(coords)), 1.0, 1e-12);
  EXPECT_THROW(build_norm_lmi(c, 2, 2, 5.0), DimensionError);
}

TEST(DefaultInitialDesign, PerturbsEveryRow) {
  const Matrix c = detail::default_c_r0(5, 2);
  for (Index i = 0; i < 5; ++i) {
    EXPECT_EQ(c.row(i).cwiseAbs().maxCoeff(), 1e-3);
    EXPECT_EQ(c(i, i % 2), 1e-3);
  }
}

// ---------------------------------------------------------------------------
// Example design

TEST(ExampleDesign, ReachesReportedOptimum) {
  const DesignResult& r = example_design();
  EXPECT_EQ(r.status, DesignStatus::Converged);
  EXPECT_NEAR(r.gamma_star, 0.5572, 0.01);
  EXPECT_LE(r.iterations, 20);
}

TEST(ExampleDesign, RowsSaturateNormBound) {
  const DesignResult& r = example_design();
  ASSERT_EQ(r.C_star.rows(), 2);
  EXPECT_NEAR(r.C_star.row(0).norm(), 5.0, 1e-2);
  EXPECT_NEAR(r.C_star.row(1).norm(), 5.0, 1e-2);
}

TEST(ExampleDesign, TrajectoryIsMonotoneAndWarmStartsAreFeasible) {
  const DesignResult& r = example_design();
  for (std::size_t j = 1; j < r.gamma_trajectory.size(); ++j) {
    EXPECT_LE(r.gamma_trajectory[j], r.gamma_trajectory[j - 1] + 1e-9);
    EXPECT_LE(r.history[j].warm_start_violation, 1e-7);
  }
  EXPECT_GE(r.gamma_star, example_system().Q().trace() - 1e-9);
}

TEST(ExampleDesign, PostValidation) {
  const DesignResult& r = example_design();
  const PostValidation& pv = r.post_validation;
  EXPECT_LE(pv.dare_trace, r.gamma_star + 1e-4);
  const Matrix p = steady_state(example_system(),
                                augment(example_base(), designed_bank(r.C_star, Matrix::Identity(2, 2), {1, 1})))
                       .P;
  EXPECT_LE(pv.inverse_residual, 1e-4 * (1 + linalg::inf_norm(p)));
  // Fixed-point consistency of the converged X*.
  EXPECT_LE(pv.x_dare_residual, 1e-5 * (1 + linalg::inf_norm(p)));
  EXPECT_LE(pv.gamma_trace_residual, 1e-6);
  EXPECT_NEAR(pv.performance_bound, pv.base_trace - r.gamma_star, 1e-15);
  EXPECT_NEAR(pv.base_trace, 0.886772107932515, 1e-9);
}

TEST(ExampleDesign, BeatsBaseAndTheHandPickedNetwork) {
  const DesignResult& r = example_design();
  const SensorBank designed = designed_bank(r.C_star, Matrix::Identity(2, 2), {1, 1});
  EXPECT_GT(trace_gap(example_system(), example_base(), designed).gap, 0.0);
  const double tr_r2 =
      steady_state(example_system(), augment(example_base(), testing::example_redundant_r2()))
          .P.trace();
  EXPECT_LT(r.post_validation.dare_trace, tr_r2);
}

TEST(ExampleDesign, GramIsInvariantUnderRowRotation) {
  const DesignResult& r = example_design();
  const double t = 0.7;
  const Matrix rot = mat({{std::cos(t), -std::sin(t)}, {std::sin(t), std::cos(t)}});
  const SensorBank plain({{r.C_star, Matrix::Identity(2, 2), "d"}}, 2);
  const SensorBank rotated({{rot * r.C_star, Matrix::Identity(2, 2), "d"}}, 2);
  const Matrix p1 = steady_state(example_system(), augment(example_base(), plain)).P;
  const Matrix p2 = steady_state(example_system(), augment(example_base(), rotated)).P;
  EXPECT_LE(linalg::inf_norm(p1 - p2), 1e-9);
  EXPECT_LE(linalg::inf_norm(r.gram - r.C_star.transpose() * r.C_star), 1e-12);
}

TEST(Design, VanishingBudgetKeepsBasePerformance) {
  DesignSpec spec = example_spec();
  spec.norm_bound = 1e-6;
  spec.C_r0.reset();
  const DesignResult r = design_redundant_sensors(spec);
  EXPECT_EQ(r.status, DesignStatus::Converged);
  EXPECT_NEAR(r.gamma_star, 0.886772107932515, 1e-5);
}

TEST(Design, InitialDesignOutsideBudgetIsInfeasible) {
  DesignSpec spec = example_spec();
  spec.norm_bound = 1e-3;
  spec.C_r0 = mat({{30, 0}, {30, 30}});
  try {
    design_redundant_sensors(spec);
    FAIL() << "expected DesignInfeasible";
  } catch (const DesignInfeasible& e) {
    EXPECT_EQ(e.iteration(), 0);
    EXPECT_NE(std::string(e.what()).find("norm bound"), std::string::npos);
  }
}

TEST(Design, RejectsBadSpecs) {
  DesignSpec spec = example_spec();
  spec.R_tilde = Matrix::Identity(3, 3);
  EXPECT_THROW(design_redundant_sensors(spec), DimensionError);
  spec = example_spec();
  spec.norm_bound = 0.0;
  EXPECT_THROW(design_redundant_sensors(spec), ConfigError);
  spec = example_spec();
  spec.C_r0 = Matrix::Zero(3, 2);
  EXPECT_THROW(design_redundant_sensors(spec), DimensionError);
  spec = example_spec();
  spec.epsilon = 0.0;
  EXPECT_THROW(design_redundant_sensors(spec), ConfigError);
}

TEST(Design, PerSensorBounds) {
  DesignSpec spec = example_spec();
  spec.sensor_norm_bounds = {2.0, 4.0};
  const DesignResult r = design_redundant_sensors(spec);
  EXPECT_LE(r.C_star.row(0).norm(), 2.0 + 1e-6);
  EXPECT_LE(r.C_star.row(1).norm(), 4.0 + 1e-6);
}

TEST(Design, MultiRowSensorUsesSpectralNorm) {
  DesignSpec spec = example_spec();
  spec.row_partition = {2};
  spec.C_r0.reset();
  const DesignResult r = design_redundant_sensors(spec);
  const double sigma = Eigen::JacobiSVD<Matrix>(r.C_star).singularValues()(0);
  EXPECT_LE(sigma, 5.0 + 1e-6);
  EXPECT_LE(r.post_validation.dare_trace, r.gamma_star + 1e-4);
}

TEST(PerformanceBound, Cases) {
  const double base = 0.886772107932515;
  EXPECT_NEAR(performance_bound(example_system(), example_base(), 0.5572), base - 0.5572, 1e-9);
  EXPECT_NEAR(performance_bound(example_system(), example_base(), base), 0.0, 1e-9);
  EXPECT_LT(performance_bound(example_system(), example_base(), 1.0), 0.0);
}

// ---------------------------------------------------------------------------
// Properties over random systems

TEST(DesignProperties, MonotoneBoundedAndWarmFeasible) {
  const auto corpus = testing::random_corpus(30, 4242);
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.5, 3.5);
  for (const auto& c : corpus) {
    std::vector<Index> partition(1 + rng() % 3, 1);
    DesignSpec spec{c.sys, c.base, partition,
                    Matrix::Identity(static_cast<Index>(partition.size()),
                                     static_cast<Index>(partition.size()))};
    spec.norm_bound = u(rng);
    const DesignResult r = design_redundant_sensors(spec);
    EXPECT_NE(r.status, DesignStatus::NumericalFailure);
    for (std::size_t j = 1; j < r.gamma_trajectory.size(); ++j) {
      EXPECT_LE(r.gamma_trajectory[j], r.gamma_trajectory[j - 1] + 1e-9);
    }
    const double scale = 1 + std::max({linalg::inf_norm(c.sys.A()), linalg::inf_norm(c.sys.Q()),
                                       linalg::inf_norm(c.base.G())});
    for (const auto& h : r.history) EXPECT_LE(h.warm_start_violation, 1e-7 * scale);
    EXPECT_GE(r.gamma_star, c.sys.Q().trace() - 1e-9);
    for (Index i = 0; i < r.C_star.rows(); ++i) {
      EXPECT_LE(r.C_star.row(i).norm(), spec.norm_bound + 1e-6);
    }
    EXPECT_LE(r.post_validation.dare_trace, r.gamma_star + 1e-6 * (1 + r.gamma_star));
  }
}

}  // namespace
}  // namespace rsd
