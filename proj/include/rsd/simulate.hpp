#ifndef RSD_SIMULATE_HPP
#define RSD_SIMULATE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>

#include "rsd/errors.hpp"
#include "rsd/linalg.hpp"
#include "rsd/model.hpp"
#include "rsd/riccati.hpp"

namespace rsd {

/// Filter covariance norm beyond which a run is declared divergent.
inline constexpr double kBlowUpNorm = 1e12;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of the stream `stream` in trial `trial`. Stream 0 drives the process
/// noise, stream 1 + i drives sensor i.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t trial, std::uint64_t stream) {
  return splitmix64(splitmix64(splitmix64(seed) + trial) + stream);
}

/// Standard normal draws by the Marsaglia polar method on top of mt19937_64.
/// Both pieces are fully specified, so sequences are identical across
/// platforms and standard libraries.
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed) : engine_(seed) {}

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  Vector next(Index n) {
    Vector z(n);
    for (Index i = 0; i < n; ++i) z(i) = next();
    return z;
  }

 private:
  // 53 random bits mapped to [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

struct SimConfig {
  Index steps = 20000;
  int trials = 1;
  std::uint64_t seed = 0;
  std::optional<Vector> x0;  ///< zero when unset
  std::optional<Matrix> P0;  ///< Q when unset
  Index burn_in = 200;
  int bins = 50;
};

struct HistogramOptions {
  int bins = 50;
  double sigmas = 4.0;  ///< half-width of the automatic range in standard deviations
  std::optional<std::pair<double, double>> range;
};

/// Density-normalized bins. Samples outside the range land in the edge bins.
struct Histogram {
  std::vector<double> edges;  ///< bins + 1 entries
  std::vector<long long> counts;
  std::vector<double> density;
  long long total = 0;

  std::size_t bins() const { return counts.size(); }
};

inline Histogram histogram(const std::vector<double>& series, const HistogramOptions& opts = {}) {
  if (series.empty()) throw ConfigError("histogram of an empty series");
  if (opts.bins < 1) throw ConfigError("histogram needs at least one bin");
  double lo, hi;
  if (opts.range) {
    std::tie(lo, hi) = *opts.range;
    if (!(hi > lo)) throw ConfigError("histogram range must satisfy lo < hi");
  } else {
    double mean = 0.0;
    for (double s : series) mean += s;
    mean /= static_cast<double>(series.size());
    double var = 0.0;
    for (double s : series) var += (s - mean) * (s - mean);
    const double sd = std::sqrt(var / static_cast<double>(series.size()));
    const double half = opts.sigmas * sd;
    if (half > 0.0) {
      lo = mean - half;
      hi = mean + half;
    } else {
      lo = mean - 0.5;
      hi = mean + 0.5;
    }
  }
  Histogram h;
  const auto nb = static_cast<std::size_t>(opts.bins);
  const double width = (hi - lo) / static_cast<double>(nb);
  h.edges.resize(nb + 1);
  for (std::size_t i = 0; i <= nb; ++i) h.edges[i] = lo + width * static_cast<double>(i);
  h.edges[nb] = hi;
  h.counts.assign(nb, 0);
  for (double s : series) {
    const double pos = std::floor((s - lo) / width);
    const auto bin = static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(nb - 1)));
    ++h.counts[bin];
  }
  h.total = static_cast<long long>(series.size());
  h.density.resize(nb);
  for (std::size_t i = 0; i < nb; ++i) {
    h.density[i] = static_cast<double>(h.counts[i]) / (static_cast<double>(h.total) * width);
  }
  return h;
}

struct SimOutput {
  std::vector<Matrix> error_series;  ///< per trial, one retained step per row
  Matrix empirical_covariance;       ///< sample covariance of all retained errors
  double empirical_mse = 0.0;        ///< mean of |e_k|^2 over retained errors
  Matrix predicted_covariance;       ///< steady posteriori covariance
  Matrix predicted_priori;           ///< steady priori covariance
  Matrix final_filter_covariance;    ///< P_{k|k} at the last step of the last trial
  std::vector<Histogram> histograms;  ///< one per state element, pooled over trials
  Index retained_samples = 0;
  SimConfig config;
  std::string initialization;

  /// Pooled retained errors of one state element.
  std::vector<double> element(Index i) const {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(retained_samples));
    for (const Matrix& e : error_series) {
      for (Index k = 0; k < e.rows(); ++k) out.push_back(e(k, i));
    }
    return out;
  }

  Vector empirical_variances() const { return empirical_covariance.diagonal(); }
};

namespace detail {

inline void check_sim_config(const LinearSystem& sys, const SimConfig& cfg) {
  if (cfg.burn_in < 0) throw ConfigError("simulation burn_in must be nonnegative");
  if (cfg.steps <= cfg.burn_in) {
    throw ConfigError("simulation steps (" + std::to_string(cfg.steps) +
                      ") must exceed burn_in (" + std::to_string(cfg.burn_in) + ")");
  }
  if (cfg.trials < 1) throw ConfigError("simulation trials must be at least 1");
  if (cfg.bins < 1) throw ConfigError("simulation bins must be at least 1");
  if (cfg.x0 && cfg.x0->size() != sys.n()) {
    throw DimensionError("x0 has length " + std::to_string(cfg.x0->size()) + ", expected " +
                         std::to_string(sys.n()));
  }
  if (cfg.P0) {
    if (cfg.P0->rows() != sys.n() || cfg.P0->cols() != sys.n()) {
      throw DimensionError("P0 must be " + std::to_string(sys.n()) + "x" + std::to_string(sys.n()));
    }
    if (linalg::symmetry_residual(*cfg.P0) > 1e-9 * (1.0 + linalg::inf_norm(*cfg.P0)) ||
        linalg::min_eigenvalue(linalg::symmetrize(*cfg.P0)) <
            -1e-12 * (1.0 + linalg::inf_norm(*cfg.P0))) {
      throw ConfigError("P0 must be symmetric positive semidefinite");
    }
  }
}

inline void require_assumptions(const LinearSystem& sys, const SensorBank& bank) {
  const ValidationReport report = validate_system(sys, bank);
  if (!report.invertible) throw ValidationError("A is singular (assumption 1)");
  if (!report.controllability.pass) {
    throw ValidationError("(A, sqrt(Q)) is not controllable (assumption 2)");
  }
  if (!report.observability->pass) throw ValidationError("(A, C) is not observable (assumption 2)");
}

/// Lower Cholesky factor of each sensor covariance, stacked block-diagonally.
inline Matrix noise_factor(const SensorBank& bank) {
  const Index m = bank.output_dim();
  Matrix l = Matrix::Zero(m, m);
  Index at = 0;
  for (const Sensor& s : bank.sensors()) {
    const Index k = s.R.rows();
    l.block(at, at, k, k) = Eigen::LLT<Matrix>(s.R).matrixL().toDenseMatrix();
    at += k;
  }
  return l;
}

inline void check_blow_up(const Matrix& p, Index step) {
  const double norm = linalg::inf_norm(p);
  if (!std::isfinite(norm) || norm > kBlowUpNorm) {
    throw SolverError("filter covariance diverged at step " + std::to_string(step) +
                      " (norm " + std::to_string(norm) + "); the detectability assumption is violated");
  }
}

/// Measurement update. Returns the gain and overwrites p with P_{k|k}.
inline Matrix measurement_update(const SensorBank& bank, Matrix& p) {
  const Matrix& c = bank.C();
  const Matrix pct = p * c.transpose();
  const Matrix s = c * pct + bank.R();
  const Matrix k = Eigen::LDLT<Matrix>(s).solve(pct.transpose()).transpose();
  p = linalg::symmetrize(p - k * pct.transpose());
  return k;
}

}  // namespace detail

/// Posteriori covariances P_{k|k} for k = 0 .. steps-1, starting from the
/// priori covariance p0 at step 0.
inline std::vector<Matrix> filter_covariance_history(const LinearSystem& sys,
                                                     const SensorBank& bank, const Matrix& p0,
                                                     Index steps) {
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(steps));
  Matrix p = p0;
  for (Index k = 0; k < steps; ++k) {
    detail::measurement_update(bank, p);
    detail::check_blow_up(p, k);
    out.push_back(p);
    p = lyapunov_step(sys, p);
  }
  return out;
}

/// Simulates the true process and the time-varying filter. The filter starts
/// from the priori estimate 0 with priori covariance P0 at step 0; errors
/// x_hat_{k|k} - x_k are kept for k >= burn_in.
///
/// The truth and the estimate are not propagated separately: with an
/// unstable A both grow geometrically and their difference loses all
/// precision. The filter is linear, so the priori error
/// eps_k = x_hat_{k|k-1} - x_k obeys
///   e_k = eps_k + K_k (v_k - C eps_k),   eps_{k+1} = A e_k - w_k,
/// driven by the same noise draws, with eps_0 = -x0.
inline SimOutput run_kalman(const LinearSystem& sys, const SensorBank& bank,
                            const SimConfig& cfg) {
  detail::check_sim_config(sys, cfg);
  detail::require_assumptions(sys, bank);

  const Index n = sys.n();
  const Matrix& a = sys.A();
  const Matrix& c = bank.C();
  const Matrix noise_l = detail::noise_factor(bank);
  std::vector<Index> sensor_rows;
  for (const Sensor& s : bank.sensors()) sensor_rows.push_back(s.R.rows());

  SimOutput out;
  out.config = cfg;
  out.initialization = std::string("x_hat_0 = 0, P0 = ") + (cfg.P0 ? "supplied" : "Q") +
                       ", x0 = " + (cfg.x0 ? "supplied" : "0");
  const DareSolution dare = steady_state(sys, bank);
  out.predicted_covariance = dare.P_post;
  out.predicted_priori = dare.P;

  const Index retained = cfg.steps - cfg.burn_in;
  Matrix sum_outer = Matrix::Zero(n, n);
  Vector sum = Vector::Zero(n);

  for (int trial = 0; trial < cfg.trials; ++trial) {
    const auto t = static_cast<std::uint64_t>(trial);
    GaussianStream process(derive_seed(cfg.seed, t, 0));
    std::vector<GaussianStream> sensor_noise;
    for (std::size_t i = 0; i < sensor_rows.size(); ++i) {
      sensor_noise.emplace_back(derive_seed(cfg.seed, t, 1 + i));
    }

    Vector eps = cfg.x0 ? Vector(-*cfg.x0) : Vector(Vector::Zero(n));
    Matrix p = cfg.P0 ? linalg::symmetrize(*cfg.P0) : sys.Q();
    Matrix errors(retained, n);
    Vector z(c.rows());

    for (Index k = 0; k < cfg.steps; ++k) {
      Index at = 0;
      for (std::size_t i = 0; i < sensor_rows.size(); ++i) {
        z.segment(at, sensor_rows[i]) = sensor_noise[i].next(sensor_rows[i]);
        at += sensor_rows[i];
      }
      const Vector v = noise_l * z;

      const Matrix gain = detail::measurement_update(bank, p);
      detail::check_blow_up(p, k);
      const Vector e = eps + gain * (v - c * eps);

      if (k >= cfg.burn_in) {
        errors.row(k - cfg.burn_in) = e.transpose();
        sum += e;
        sum_outer.noalias() += e * e.transpose();
      }

      eps = a * e - sys.sqrt_Q() * process.next(n);
      if (k + 1 < cfg.steps) p = lyapunov_step(sys, p);
    }
    out.error_series.push_back(std::move(errors));
    out.final_filter_covariance = p;
  }

  const auto total = static_cast<double>(retained) * cfg.trials;
  out.retained_samples = retained * cfg.trials;
  const Vector mean = sum / total;
  out.empirical_mse = sum_outer.trace() / total;
  out.empirical_covariance =
      linalg::symmetrize((sum_outer - total * mean * mean.transpose()) / (total - 1.0));

  HistogramOptions hopts;
  hopts.bins = cfg.bins;
  for (Index i = 0; i < n; ++i) out.histograms.push_back(histogram(out.element(i), hopts));
  return out;
}

struct NetworkComparison {
  std::vector<SimOutput> outputs;
  /// variance_ratios[i](j): empirical variance of element j in network i
  /// divided by that in network 0.
  std::vector<Vector> variance_ratios;
};

/// Runs every network on the same seed. Sensor i of every bank draws from
/// the same noise stream, so shared leading sensors see identical noise.
inline NetworkComparison compare_networks(const LinearSystem& sys,
                                          const std::vector<SensorBank>& banks,
                                          const SimConfig& cfg) {
  if (banks.empty()) throw ConfigError("compare_networks needs at least one network");
  NetworkComparison cmp;
  for (const SensorBank& bank : banks) cmp.outputs.push_back(run_kalman(sys, bank, cfg));
  const Vector ref = cmp.outputs.front().empirical_variances();
  for (const SimOutput& o : cmp.outputs) {
    cmp.variance_ratios.push_back(o.empirical_variances().cwiseQuotient(ref));
  }
  return cmp;
}

}  // namespace rsd

#endif  // RSD_SIMULATE_HPP
