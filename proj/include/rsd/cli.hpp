#ifndef RSD_CLI_HPP
#define RSD_CLI_HPP

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "rsd/analysis.hpp"
#include "rsd/design.hpp"
#include "rsd/errors.hpp"
#include "rsd/io.hpp"
#include "rsd/model.hpp"
#include "rsd/riccati.hpp"
#include "rsd/simulate.hpp"

#ifndef RSD_VERSION
#define RSD_VERSION "0.0.0"
#endif

namespace rsd::cli {

using io::json;

enum ExitCode : int {
  kOk = 0,
  kConfigError = 1,
  kValidationFailure = 2,
  kSolverFailure = 3,
  kDesignInfeasible = 4,
};

enum class LogLevel { Quiet, Info, Debug };

/// "quiet"/"0", "info"/"1" (default) or "debug"/"2".
inline LogLevel parse_log_level(const char* value) {
  if (value == nullptr) return LogLevel::Info;
  const std::string v(value);
  if (v == "quiet" || v == "0" || v == "error") return LogLevel::Quiet;
  if (v == "debug" || v == "2" || v == "trace") return LogLevel::Debug;
  return LogLevel::Info;
}

struct Options {
  std::string command;
  std::string config_path;
  std::optional<std::string> out;
  std::optional<std::string> csv_dir;
  std::string method = "symplectic";
  std::optional<Index> steps;
  std::optional<int> trials;
  std::optional<std::uint64_t> seed;
  bool json_stdout = false;
  LogLevel log = LogLevel::Info;
};

namespace detail {

struct Context {
  const Options& opts;
  const io::Config& cfg;
  std::ostream& out;  ///< human-readable summary
  std::ostream& err;
  json& report;
};

inline void add_warnings(json& report, const std::vector<std::string>& warnings) {
  json& list = report["warnings"];
  for (const std::string& w : warnings) {
    if (std::find(list.begin(), list.end(), w) == list.end()) list.push_back(w);
  }
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream f(path, std::ios::binary);
  if (!f || !(f << text)) throw ConfigError("cannot write '" + path.string() + "'");
}

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) {
    for (std::size_t i = 0; i < header.size(); ++i) text_ += (i ? "," : "") + header[i];
    text_ += '\n';
  }
  void row(const std::vector<double>& values) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i) text_ += ',';
      text_ += io::format_double(values[i]);
    }
    text_ += '\n';
  }
  void save(const std::filesystem::path& path) const { write_text(path, text_); }

 private:
  std::string text_;
};

inline json dare_json(const LinearSystem& sys, const SensorBank& bank, const DareSolution& sol) {
  return {{"method", to_string(sol.method)},
          {"P", io::to_json(sol.P)},
          {"P_post", io::to_json(sol.P_post)},
          {"trace", sol.P.trace()},
          {"trace_post", sol.P_post.trace()},
          {"residual", dare_residual(sys, bank.G(), sol.P)},
          {"closed_loop_spectral_radius", linalg::spectral_radius(sol.A_closed)}};
}

inline json ordering_json(const OrderingVerdict& v) {
  return {{"ordering", to_string(v.ordering)},
          {"kernel_dimension", v.kernel_dimension},
          {"kernel_basis", io::to_json(v.kernel_basis)},
          {"eigenvalues", io::to_json(v.eigenvalues)},
          {"tolerance", v.tolerance}};
}

inline json inertia_json(const Inertia& i) {
  return {{"positive", i.positive}, {"zero", i.zero}, {"negative", i.negative}};
}

inline json complex_json(Complex z) { return json::array({z.real(), z.imag()}); }

inline json eigenpair_json(const CommonEigenpairReport& r) {
  json matches = json::array();
  for (const EigenpairMatch& m : r.matches) {
    matches.push_back({{"lambda_base", complex_json(m.lambda_base)},
                       {"lambda", complex_json(m.lambda)},
                       {"eigenvalue_distance", m.eigenvalue_distance},
                       {"angle", m.angle}});
  }
  return {{"common_eigenpair_found", r.found},
          {"inconclusive", r.inconclusive},
          {"matches", matches}};
}

inline std::vector<io::NamedBank> augmented_networks(const io::Config& cfg) {
  std::vector<io::NamedBank> out;
  for (const io::NamedBank& r : cfg.redundant) out.push_back({r.name, augment(cfg.base, r.bank)});
  return out;
}

// ---------------------------------------------------------------------------

inline int cmd_validate(Context& ctx) {
  const ValidationReport v = validate_system(ctx.cfg.system, ctx.cfg.base);
  json& r = ctx.report["validation"];
  r = {{"invertible", v.invertible},
       {"condition_number", v.condition_number},
       {"controllability", {{"pass", v.controllability.pass}, {"rank", v.controllability.rank}}},
       {"observability", {{"pass", v.observability->pass}, {"rank", v.observability->rank}}},
       {"ok", v.ok()}};
  add_warnings(ctx.report, v.warnings);
  std::vector<std::string> failures;
  if (!v.invertible) failures.push_back("Assumption 1 violated: A is singular");
  if (!v.controllability.pass) {
    failures.push_back("Assumption 2 violated: (A, sqrt(Q)) is not controllable (rank " +
                       std::to_string(v.controllability.rank) + ")");
  }
  if (!v.observability->pass) {
    failures.push_back("Assumption 2 violated: (A, C) is not collectively observable (rank " +
                       std::to_string(v.observability->rank) + ")");
  }
  r["failures"] = failures;
  const Index n = ctx.cfg.system.n();
  ctx.out << "state dimension " << n << ", " << ctx.cfg.base.size() << " base sensors\n"
          << "A invertible: " << (v.invertible ? "yes" : "no") << " (cond "
          << v.condition_number << ")\n"
          << "(A, sqrt(Q)) controllable: " << (v.controllability.pass ? "yes" : "no") << "\n"
          << "(A, C) observable: " << (v.observability->pass ? "yes" : "no") << "\n";
  for (const std::string& f : failures) ctx.err << "error: " << f << "\n";
  ctx.out << (v.ok() ? "PASS" : "FAIL") << "\n";
  return v.ok() ? kOk : kValidationFailure;
}

inline int cmd_dare(Context& ctx) {
  const std::string& method = ctx.opts.method;
  if (method != "fixed" && method != "symplectic" && method != "both") {
    throw ConfigError("--method must be fixed, symplectic or both");
  }
  std::vector<io::NamedBank> networks{{"base", ctx.cfg.base}};
  for (io::NamedBank& a : augmented_networks(ctx.cfg)) networks.push_back(std::move(a));
  const LinearSystem& sys = ctx.cfg.system;
  json list = json::array();
  for (const io::NamedBank& net : networks) {
    json entry = {{"name", net.name}};
    std::optional<DareSolution> fixed, symplectic;
    if (method != "symplectic") {
      fixed = solve_dare_fixed_point(sys, net.bank);
      entry["fixed_point"] = dare_json(sys, net.bank, *fixed);
    }
    if (method != "fixed") {
      symplectic = solve_dare_symplectic(sys, net.bank).solution;
      entry["symplectic"] = dare_json(sys, net.bank, *symplectic);
    }
    const DareSolution& shown = symplectic ? *symplectic : *fixed;
    ctx.out << net.name << ": tr(P) = " << io::format_double(shown.P.trace())
            << ", tr(P_post) = " << io::format_double(shown.P_post.trace()) << "\n";
    ctx.out << "  P = " << io::to_json(shown.P).dump() << "\n";
    if (fixed && symplectic) {
      const double d =
          linalg::inf_norm(fixed->P - symplectic->P) / (1.0 + linalg::inf_norm(symplectic->P));
      entry["discrepancy"] = d;
      ctx.out << "  fixed-point vs symplectic relative discrepancy " << d << "\n";
    }
    list.push_back(std::move(entry));
  }
  ctx.report["networks"] = list;
  return kOk;
}

inline int cmd_analyze(Context& ctx) {
  if (ctx.cfg.redundant.empty()) {
    throw ConfigError("redundant_sensors: missing; analyze needs at least one redundant network");
  }
  const LinearSystem& sys = ctx.cfg.system;
  json list = json::array();
  for (const io::NamedBank& net : ctx.cfg.redundant) {
    const EffectAnalysis e = analyze_effect(sys, ctx.cfg.base, net.bank);
    json entry = {{"name", net.name},
                  {"P_base", io::to_json(e.base.P)},
                  {"P_augmented", io::to_json(e.augmented.P)},
                  {"P_post_base", io::to_json(e.base.P_post)},
                  {"P_post_augmented", io::to_json(e.augmented.P_post)},
                  {"trace_gap",
                   {{"trace_base", e.gap.trace_base},
                    {"trace_augmented", e.gap.trace_augmented},
                    {"gap", e.gap.gap}}},
                  {"priori", ordering_json(e.priori)},
                  {"posteriori", ordering_json(e.posteriori)},
                  {"priori_inertia", inertia_json(e.priori_inertia)},
                  {"posteriori_inertia", inertia_json(e.posteriori_inertia)},
                  {"inertia_tolerance", e.inertia_tolerance},
                  {"strict_improvement_condition", eigenpair_json(e.spectral)},
                  {"left_eigen_condition", eigenpair_json(e.left_spectral)},
                  {"lyapunov_residual", e.lyapunov_residual},
                  {"anomaly", e.anomaly},
                  {"warnings", e.warnings}};
    list.push_back(std::move(entry));
    add_warnings(ctx.report, e.warnings);

    std::string verdict = to_string(e.priori.ordering);
    if (e.priori.ordering == Ordering::GreaterWithKernel) {
      verdict += ", kernel dim " + std::to_string(e.priori.kernel_dimension);
    }
    ctx.out << net.name << ": " << verdict << "\n"
            << "  tr(P_base) - tr(P) = " << io::format_double(e.gap.gap) << "\n"
            << "  common stable eigenpair of the closed loops: "
            << (e.spectral.inconclusive ? "inconclusive"
                                        : (e.spectral.found ? "found" : "none"))
            << "\n"
            << "  Lyapunov identity residual " << e.lyapunov_residual << "\n";
    if (e.anomaly) ctx.out << "  spectral test disagrees with the ordering verdict\n";
  }
  ctx.report["networks"] = list;
  return kOk;
}

inline int cmd_design(Context& ctx) {
  DesignSpec spec = io::to_design_spec(ctx.cfg);
  if (ctx.opts.log == LogLevel::Debug) spec.solver.log = &ctx.err;
  const DesignResult res = design_redundant_sensors(spec);
  json history = json::array();
  for (const DesignIteration& it : res.history) {
    history.push_back({{"gamma", it.gamma},
                       {"solver_iterations", it.solver_iterations},
                       {"solver_status", sdp::to_string(it.solver_status)},
                       {"warm_start_violation", it.warm_start_violation}});
  }
  Vector row_norms = res.C_star.rowwise().norm();
  const PostValidation& pv = res.post_validation;
  ctx.report["design"] = {
      {"status", to_string(res.status)},
      {"gamma_star", res.gamma_star},
      {"C_star", io::to_json(res.C_star)},
      {"row_norms", io::to_json(row_norms)},
      {"X_star", io::to_json(res.X_star)},
      {"gram", io::to_json(res.gram)},
      {"gamma_trajectory", res.gamma_trajectory},
      {"iterations", res.iterations},
      {"history", history},
      {"performance_bound", pv.performance_bound},
      {"post_validation",
       {{"dare_trace", pv.dare_trace},
        {"bound_gap", pv.bound_gap},
        {"inverse_residual", pv.inverse_residual},
        {"x_dare_residual", pv.x_dare_residual},
        {"gamma_trace_residual", pv.gamma_trace_residual},
        {"base_trace", pv.base_trace}}},
      {"design_wall_time_seconds", res.wall_time_seconds}};
  add_warnings(ctx.report, res.warnings);

  if (ctx.opts.csv_dir) {
    CsvWriter csv({"iter", "gamma"});
    for (std::size_t j = 0; j < res.gamma_trajectory.size(); ++j) {
      csv.row({static_cast<double>(j), res.gamma_trajectory[j]});
    }
    csv.save(std::filesystem::path(*ctx.opts.csv_dir) / "gamma_trajectory.csv");
  }

  ctx.out << "status " << to_string(res.status) << " after " << res.iterations
          << " iterations\n"
          << "gamma* = " << io::format_double(res.gamma_star) << "\n"
          << "tr(P_base) = " << io::format_double(pv.base_trace)
          << ", improvement bound tr(P_base) - gamma* = " << io::format_double(pv.performance_bound)
          << "\n"
          << "C* = " << io::to_json(res.C_star).dump() << "\n"
          << "augmented DARE trace at C* = " << io::format_double(pv.dare_trace) << "\n"
          << "design time " << res.wall_time_seconds << " s\n";
  return res.status == DesignStatus::NumericalFailure ? kSolverFailure : kOk;
}

inline void write_simulation_csv(const std::filesystem::path& dir, const SimOutput& o) {
  const Index n = o.empirical_covariance.rows();
  std::vector<std::string> header{"k"};
  for (Index i = 0; i < n; ++i) header.push_back("e_" + std::to_string(i + 1));
  CsvWriter traj(header);
  const Matrix& e = o.error_series.front();
  std::vector<double> row(static_cast<std::size_t>(n + 1));
  for (Index k = 0; k < e.rows(); ++k) {
    row[0] = static_cast<double>(k + o.config.burn_in);
    for (Index i = 0; i < n; ++i) row[static_cast<std::size_t>(i + 1)] = e(k, i);
    traj.row(row);
  }
  traj.save(dir / "trajectory.csv");
  for (Index i = 0; i < n; ++i) {
    const Histogram& h = o.histograms[static_cast<std::size_t>(i)];
    CsvWriter csv({"bin_left", "bin_right", "count", "density"});
    for (std::size_t b = 0; b < h.bins(); ++b) {
      csv.row({h.edges[b], h.edges[b + 1], static_cast<double>(h.counts[b]), h.density[b]});
    }
    csv.save(dir / ("histogram_" + std::to_string(i + 1) + ".csv"));
  }
}

inline int cmd_simulate(Context& ctx) {
  SimConfig sim = ctx.cfg.simulate;
  if (ctx.opts.steps) sim.steps = *ctx.opts.steps;
  if (ctx.opts.trials) sim.trials = *ctx.opts.trials;
  if (ctx.opts.seed) sim.seed = *ctx.opts.seed;

  std::vector<std::string> names{"base"};
  std::vector<SensorBank> banks{ctx.cfg.base};
  for (io::NamedBank& a : augmented_networks(ctx.cfg)) {
    names.push_back(a.name);
    banks.push_back(std::move(a.bank));
  }
  const NetworkComparison cmp = compare_networks(ctx.cfg.system, banks, sim);

  json list = json::array();
  for (std::size_t i = 0; i < banks.size(); ++i) {
    const SimOutput& o = cmp.outputs[i];
    list.push_back({{"name", names[i]},
                    {"predicted_covariance", io::to_json(o.predicted_covariance)},
                    {"predicted_priori", io::to_json(o.predicted_priori)},
                    {"empirical_covariance", io::to_json(o.empirical_covariance)},
                    {"empirical_mse", o.empirical_mse},
                    {"predicted_mse", o.predicted_covariance.trace()},
                    {"variance_ratio_vs_base", io::to_json(cmp.variance_ratios[i])},
                    {"retained_samples", o.retained_samples}});
    if (ctx.opts.csv_dir) {
      write_simulation_csv(std::filesystem::path(*ctx.opts.csv_dir) / names[i], o);
    }
    const Vector emp = o.empirical_variances();
    const Vector pred = o.predicted_covariance.diagonal();
    ctx.out << names[i] << ":";
    for (Index k = 0; k < emp.size(); ++k) {
      ctx.out << " var(e_" << k + 1 << ") = " << emp(k) << " (predicted " << pred(k) << ")";
    }
    if (i > 0) {
      ctx.out << "; ratio vs base";
      for (Index k = 0; k < emp.size(); ++k) ctx.out << " " << cmp.variance_ratios[i](k);
    }
    ctx.out << "\n";
  }
  ctx.report["simulation"] = {{"steps", sim.steps},
                              {"trials", sim.trials},
                              {"seed", sim.seed},
                              {"burn_in", sim.burn_in},
                              {"bins", sim.bins},
                              {"initialization", cmp.outputs.front().initialization},
                              {"networks", list}};
  return kOk;
}

inline int dispatch(Context& ctx) {
  const std::string& c = ctx.opts.command;
  if (c == "validate") return cmd_validate(ctx);
  if (c == "dare") return cmd_dare(ctx);
  if (c == "analyze") return cmd_analyze(ctx);
  if (c == "design") return cmd_design(ctx);
  if (c == "simulate") return cmd_simulate(ctx);
  throw ConfigError("unknown command '" + c + "'");
}

}  // namespace detail

struct Outcome {
  int exit_code = kOk;
  json report;
};

/// Runs one command. The summary goes to `out`, errors and warnings to
/// `err`; the JSON report is returned and, with --out, written to disk.
inline Outcome run(const Options& opts, std::ostream& out, std::ostream& err) {
  const auto started = std::chrono::steady_clock::now();
  Outcome result;
  json& report = result.report;
  report = {{"command", opts.command},
            {"version", RSD_VERSION},
            {"config", opts.config_path},
            {"warnings", json::array()}};
  std::ostringstream summary;
  std::ostream& human = opts.json_stdout ? static_cast<std::ostream&>(summary) : out;
  try {
    const io::Config cfg = io::load_config(opts.config_path);
    detail::add_warnings(report, cfg.warnings);
    detail::add_warnings(report, cfg.system.warnings());
    detail::Context ctx{opts, cfg, human, err, report};
    result.exit_code = detail::dispatch(ctx);
  } catch (const DesignInfeasible& e) {
    result.exit_code = kDesignInfeasible;
    report["error"] = e.what();
    report["infeasible_iteration"] = e.iteration();
    err << "error: design infeasible at iteration " << e.iteration() << ": " << e.what() << "\n";
  } catch (const ConfigError& e) {
    result.exit_code = kConfigError;
    report["error"] = e.what();
    err << "error: " << e.what() << "\n";
  } catch (const DimensionError& e) {
    result.exit_code = kConfigError;
    report["error"] = e.what();
    err << "error: " << e.what() << "\n";
  } catch (const ValidationError& e) {
    result.exit_code = kValidationFailure;
    report["error"] = e.what();
    err << "error: " << e.what() << "\n";
  } catch (const std::exception& e) {
    result.exit_code = kSolverFailure;
    report["error"] = e.what();
    err << "error: " << e.what() << "\n";
  }
  report["exit_code"] = result.exit_code;
  report["wall_time_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  if (opts.log != LogLevel::Quiet) {
    for (const auto& w : report["warnings"]) err << "warning: " << w.get<std::string>() << "\n";
  }
  const std::string text = report.dump(2) + "\n";
  if (opts.json_stdout) out << text;
  if (opts.out) {
    try {
      detail::write_text(*opts.out, text);
    } catch (const ConfigError& e) {
      err << "error: " << e.what() << "\n";
      if (result.exit_code == kOk) result.exit_code = kConfigError;
    }
  }
  return result;
}

}  // namespace rsd::cli

#endif  // RSD_CLI_HPP
