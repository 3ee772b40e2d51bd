#ifndef RSD_TESTS_FIXTURES_HPP
#define RSD_TESTS_FIXTURES_HPP

// Shared data for the test suites: the four-sensor example network, its
// redundant variants, and a seeded corpus of random systems.

#include <cmath>
#include <random>
#include <vector>

#include "rsd/model.hpp"

namespace rsd::testing {

inline Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  const Index r = static_cast<Index>(rows.size());
  const Index c = static_cast<Index>(rows.begin()->size());
  Matrix m(r, c);
  Index i = 0;
  for (const auto& row : rows) {
    Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

inline Sensor scalar_sensor(double c1, double c2, const std::string& label) {
  return {mat({{c1, c2}}), Matrix::Identity(1, 1), label};
}

inline LinearSystem example_system() {
  Matrix a = Matrix::Zero(2, 2);
  a(0, 0) = 0.9;
  a(1, 1) = 1.1;
  return LinearSystem(a, Matrix::Identity(2, 2) / 4.0);
}

inline SensorBank example_base() {
  return SensorBank({scalar_sensor(1, 0, "s1"), scalar_sensor(0, 1, "s2"),
                     scalar_sensor(1, 1, "s3"), scalar_sensor(1, -1, "s4")},
                    2);
}

/// Two copies of [3, 0].
inline SensorBank example_redundant_r1() {
  return SensorBank({scalar_sensor(3, 0, "c1a"), scalar_sensor(3, 0, "c1b")}, 2);
}

/// [3, 0] and [3, 3].
inline SensorBank example_redundant_r2() {
  return SensorBank({scalar_sensor(3, 0, "c1"), scalar_sensor(3, 3, "c2")}, 2);
}

/// Positive root of g p^2 + (1 - a^2 - q g) p - q = 0, the scalar DARE.
inline double scalar_dare_root(double a, double q, double g) {
  const double b = 1.0 - a * a - q * g;
  return (-b + std::sqrt(b * b + 4.0 * g * q)) / (2.0 * g);
}

struct RandomCase {
  LinearSystem sys;
  SensorBank base;
  SensorBank redundant;
};

inline Matrix random_matrix(std::mt19937_64& rng, Index rows, Index cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
  return m;
}

inline Matrix random_spd(std::mt19937_64& rng, Index n, double floor) {
  const Matrix b = random_matrix(rng, n, n);
  return b * b.transpose() / static_cast<double>(n) + floor * Matrix::Identity(n, n);
}

/// Random observable system with n in [2, 6], A scaled to a spectral radius
/// in [0.5, 1.3] and |det A| > 1e-3, positive definite Q, a random observable
/// base bank and a nonzero redundant bank of 1..n rows.
inline RandomCase random_case(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> dim(2, 6);
  std::uniform_real_distribution<double> radius(0.5, 1.3);
  for (;;) {
    const Index n = dim(rng);
    Matrix a = random_matrix(rng, n, n);
    a *= radius(rng) / linalg::spectral_radius(a);
    if (std::abs(a.determinant()) <= 1e-3) continue;
    const Matrix q = random_spd(rng, n, 0.05) * 0.5;
    std::uniform_int_distribution<int> base_rows(1, static_cast<int>(n));
    std::vector<Sensor> base;
    const int nb = base_rows(rng);
    for (int i = 0; i < nb; ++i) {
      base.push_back({random_matrix(rng, 1, n), random_spd(rng, 1, 0.2), "b" + std::to_string(i)});
    }
    std::vector<Sensor> red;
    const int nr = base_rows(rng);
    for (int i = 0; i < nr; ++i) {
      red.push_back({random_matrix(rng, 1, n), random_spd(rng, 1, 0.2), "r" + std::to_string(i)});
    }
    LinearSystem sys(a, q);
    SensorBank base_bank(base, n);
    if (!check_observability(sys, base_bank).pass) continue;
    if (!validate_system(sys).ok()) continue;
    return {sys, base_bank, SensorBank(red, n)};
  }
}

inline std::vector<RandomCase> random_corpus(std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<RandomCase> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(random_case(rng));
  return out;
}

}  // namespace rsd::testing

#endif  // RSD_TESTS_FIXTURES_HPP
