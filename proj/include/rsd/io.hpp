#ifndef RSD_IO_HPP
#define RSD_IO_HPP

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rsd/design.hpp"
#include "rsd/errors.hpp"
#include "rsd/linalg.hpp"
#include "rsd/model.hpp"
#include "rsd/simulate.hpp"

namespace rsd::io {

using json = nlohmann::json;

/// Shortest decimal text that reads back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline json to_json(const Matrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json to_json(const Vector& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline double number_from_json(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path + ": expected a number, got " + j.type_name());
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(path + ": number is not finite");
  return v;
}

/// A number is a 1x1 matrix and a flat array is a single row.
inline Matrix matrix_from_json(const json& j, const std::string& path) {
  if (j.is_number()) return Matrix::Constant(1, 1, number_from_json(j, path));
  if (!j.is_array() || j.empty()) {
    throw ConfigError(path + ": expected a nonempty array of rows");
  }
  if (!j.front().is_array()) {
    Matrix m(1, static_cast<Index>(j.size()));
    for (std::size_t k = 0; k < j.size(); ++k) {
      m(0, static_cast<Index>(k)) = number_from_json(j[k], path + "[" + std::to_string(k) + "]");
    }
    return m;
  }
  const std::size_t cols = j.front().size();
  if (cols == 0) throw ConfigError(path + "[0]: row is empty");
  Matrix m(static_cast<Index>(j.size()), static_cast<Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    const std::string row_path = path + "[" + std::to_string(r) + "]";
    if (!j[r].is_array()) throw ConfigError(row_path + ": expected an array of numbers");
    if (j[r].size() != cols) {
      throw ConfigError(row_path + ": row has " + std::to_string(j[r].size()) +
                        " entries, expected " + std::to_string(cols));
    }
    for (std::size_t c = 0; c < cols; ++c) {
      m(static_cast<Index>(r), static_cast<Index>(c)) =
          number_from_json(j[r][c], row_path + "[" + std::to_string(c) + "]");
    }
  }
  return m;
}

inline Vector vector_from_json(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) throw ConfigError(path + ": expected a nonempty array of numbers");
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) {
    v(static_cast<Index>(k)) = number_from_json(j[k], path + "[" + std::to_string(k) + "]");
  }
  return v;
}

struct NamedBank {
  std::string name;
  SensorBank bank;  ///< redundant sensors only
};

struct DesignConfig {
  std::vector<Index> row_partition;
  std::optional<Matrix> R;
  double norm_bound = 5.0;
  std::vector<double> sensor_norm_bounds;
  double epsilon = 1e-5;
  std::optional<Matrix> C_r0;
  int max_iters = 200;
};

struct Config {
  LinearSystem system;
  SensorBank base;
  std::vector<NamedBank> redundant;
  std::optional<DesignConfig> design;
  SimConfig simulate;
  std::vector<std::string> warnings;
};

namespace detail {

inline const json& require(const json& obj, const char* key, const std::string& path) {
  if (!obj.is_object()) throw ConfigError(path + ": expected an object");
  const auto it = obj.find(key);
  if (it == obj.end()) throw ConfigError(path + "." + key + ": missing");
  return *it;
}

inline const json* optional_field(const json& obj, const char* key) {
  const auto it = obj.find(key);
  return it == obj.end() || it->is_null() ? nullptr : &*it;
}

template <class T>
T integer_from_json(const json& j, const std::string& path, T min_value) {
  if (!j.is_number_integer()) throw ConfigError(path + ": expected an integer");
  if (j.is_number_unsigned()) {
    const auto u = j.get<std::uint64_t>();
    if constexpr (std::is_signed_v<T>) {
      if (u > static_cast<std::uint64_t>(std::numeric_limits<T>::max())) {
        throw ConfigError(path + ": integer out of range");
      }
    }
    const T v = static_cast<T>(u);
    if (v < min_value) throw ConfigError(path + ": must be at least " + std::to_string(min_value));
    return v;
  }
  const auto s = j.get<std::int64_t>();
  if (s < static_cast<std::int64_t>(min_value)) {
    throw ConfigError(path + ": must be at least " + std::to_string(min_value));
  }
  return static_cast<T>(s);
}

/// Rethrows shape errors from model constructors as path-qualified config
/// errors. Validation errors pass through unchanged.
template <class F>
auto with_path(const std::string& path, F&& f) {
  try {
    return f();
  } catch (const DimensionError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline Sensor sensor_from_json(const json& j, const std::string& path, Index n) {
  if (!j.is_object()) throw ConfigError(path + ": expected an object with C, R and label");
  Sensor s;
  s.C = matrix_from_json(require(j, "C", path), path + ".C");
  if (s.C.cols() != n) {
    throw ConfigError(path + ".C: has " + std::to_string(s.C.cols()) + " columns, expected " +
                      std::to_string(n));
  }
  if (const json* r = optional_field(j, "R")) {
    s.R = matrix_from_json(*r, path + ".R");
  } else {
    s.R = Matrix::Identity(s.C.rows(), s.C.rows());
  }
  if (const json* label = optional_field(j, "label")) {
    if (!label->is_string()) throw ConfigError(path + ".label: expected a string");
    s.label = label->get<std::string>();
  }
  return s;
}

inline SensorBank bank_from_json(const json& j, const std::string& path, Index n) {
  if (!j.is_array()) throw ConfigError(path + ": expected an array of sensors");
  std::vector<Sensor> sensors;
  for (std::size_t i = 0; i < j.size(); ++i) {
    sensors.push_back(sensor_from_json(j[i], path + "[" + std::to_string(i) + "]", n));
  }
  return with_path(path, [&] { return SensorBank(std::move(sensors), n); });
}

inline bool valid_network_name(const std::string& name) {
  if (name.empty() || name == "base") return false;
  for (char c : name) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '_' || c == '-';
    if (!ok) return false;
  }
  return true;
}

inline std::vector<NamedBank> redundant_from_json(const json& j, Index n) {
  const std::string path = "redundant_sensors";
  std::vector<NamedBank> out;
  if (j.is_array()) {
    out.push_back({"redundant", bank_from_json(j, path, n)});
  } else if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (!valid_network_name(it.key())) {
        throw ConfigError(path + "." + it.key() +
                          ": network names use letters, digits, '_' or '-' and may not be 'base'");
      }
      out.push_back({it.key(), bank_from_json(it.value(), path + "." + it.key(), n)});
    }
    if (out.empty()) throw ConfigError(path + ": no networks given");
  } else {
    throw ConfigError(path + ": expected an array of sensors or an object of named networks");
  }
  return out;
}

inline DesignConfig design_from_json(const json& j) {
  const std::string path = "design";
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
  DesignConfig d;
  const int count = integer_from_json<int>(require(j, "num_sensors", path), path + ".num_sensors", 1);
  if (const json* rows = optional_field(j, "rows_per_sensor")) {
    if (rows->is_array()) {
      if (rows->size() != static_cast<std::size_t>(count)) {
        throw ConfigError(path + ".rows_per_sensor: has " + std::to_string(rows->size()) +
                          " entries, expected num_sensors = " + std::to_string(count));
      }
      for (std::size_t i = 0; i < rows->size(); ++i) {
        d.row_partition.push_back(integer_from_json<Index>(
            (*rows)[i], path + ".rows_per_sensor[" + std::to_string(i) + "]", 1));
      }
    } else {
      d.row_partition.assign(static_cast<std::size_t>(count),
                             integer_from_json<Index>(*rows, path + ".rows_per_sensor", 1));
    }
  } else {
    d.row_partition.assign(static_cast<std::size_t>(count), 1);
  }
  if (const json* r = optional_field(j, "R")) d.R = matrix_from_json(*r, path + ".R");
  if (const json* u = optional_field(j, "norm_bound")) {
    if (u->is_array()) {
      if (u->size() != static_cast<std::size_t>(count)) {
        throw ConfigError(path + ".norm_bound: has " + std::to_string(u->size()) +
                          " entries, expected num_sensors = " + std::to_string(count));
      }
      for (std::size_t i = 0; i < u->size(); ++i) {
        d.sensor_norm_bounds.push_back(
            number_from_json((*u)[i], path + ".norm_bound[" + std::to_string(i) + "]"));
      }
    } else {
      d.norm_bound = number_from_json(*u, path + ".norm_bound");
    }
  }
  if (const json* e = optional_field(j, "epsilon")) d.epsilon = number_from_json(*e, path + ".epsilon");
  if (const json* c = optional_field(j, "C_r0")) d.C_r0 = matrix_from_json(*c, path + ".C_r0");
  if (const json* m = optional_field(j, "max_iters")) {
    d.max_iters = integer_from_json<int>(*m, path + ".max_iters", 1);
  }
  return d;
}

inline SimConfig simulate_from_json(const json& j, Index n) {
  const std::string path = "simulate";
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
  SimConfig s;
  if (const json* v = optional_field(j, "steps")) s.steps = integer_from_json<Index>(*v, path + ".steps", 1);
  if (const json* v = optional_field(j, "trials")) s.trials = integer_from_json<int>(*v, path + ".trials", 1);
  if (const json* v = optional_field(j, "seed")) s.seed = integer_from_json<std::uint64_t>(*v, path + ".seed", 0);
  if (const json* v = optional_field(j, "burn_in")) s.burn_in = integer_from_json<Index>(*v, path + ".burn_in", 0);
  if (const json* v = optional_field(j, "bins")) s.bins = integer_from_json<int>(*v, path + ".bins", 1);
  if (const json* v = optional_field(j, "x0")) {
    s.x0 = vector_from_json(*v, path + ".x0");
    if (s.x0->size() != n) throw ConfigError(path + ".x0: expected " + std::to_string(n) + " entries");
  }
  if (const json* v = optional_field(j, "P0")) s.P0 = matrix_from_json(*v, path + ".P0");
  return s;
}

inline std::pair<std::size_t, std::size_t> line_column(const std::string& text, std::size_t byte) {
  std::size_t line = 1, column = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return {line, column};
}

}  // namespace detail

inline Config config_from_json(const json& root) {
  if (!root.is_object()) throw ConfigError("config: top level must be an object");
  static const char* known[] = {"system", "base_sensors", "redundant_sensors", "design", "simulate"};
  std::vector<std::string> warnings;
  for (auto it = root.begin(); it != root.end(); ++it) {
    if (std::find(std::begin(known), std::end(known), it.key()) == std::end(known)) {
      warnings.push_back("config: unknown key '" + it.key() + "' ignored");
    }
  }
  const json& sys_j = detail::require(root, "system", "config");
  const Matrix a = matrix_from_json(detail::require(sys_j, "A", "system"), "system.A");
  const Matrix q = matrix_from_json(detail::require(sys_j, "Q", "system"), "system.Q");
  LinearSystem sys = detail::with_path("system", [&] { return LinearSystem(a, q); });
  const Index n = sys.n();

  SensorBank base =
      detail::bank_from_json(detail::require(root, "base_sensors", "config"), "base_sensors", n);
  std::vector<NamedBank> redundant;
  if (const json* r = detail::optional_field(root, "redundant_sensors")) {
    redundant = detail::redundant_from_json(*r, n);
  }
  std::optional<DesignConfig> design;
  if (const json* d = detail::optional_field(root, "design")) design = detail::design_from_json(*d);
  SimConfig sim;
  if (const json* s = detail::optional_field(root, "simulate")) sim = detail::simulate_from_json(*s, n);

  return Config{std::move(sys), std::move(base), std::move(redundant), std::move(design), sim,
                std::move(warnings)};
}

/// `source` names the input in error messages.
inline Config parse_config(const std::string& text, const std::string& source = "config") {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, column] = detail::line_column(text, e.byte);
    throw ConfigError(source + ":" + std::to_string(line) + ":" + std::to_string(column) +
                      ": malformed JSON (line " + std::to_string(line) + ", column " +
                      std::to_string(column) + ")");
  }
  return config_from_json(root);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Config load_config(const std::string& path) { return parse_config(read_file(path), path); }

/// Design inputs assembled from the config; R~ defaults to the identity.
inline DesignSpec to_design_spec(const Config& cfg) {
  if (!cfg.design) throw ConfigError("design: section missing");
  const DesignConfig& d = *cfg.design;
  Index m = 0;
  for (Index r : d.row_partition) m += r;
  DesignSpec spec{cfg.system, cfg.base};
  spec.row_partition = d.row_partition;
  spec.R_tilde = d.R ? *d.R : Matrix(Matrix::Identity(m, m));
  spec.norm_bound = d.norm_bound;
  spec.sensor_norm_bounds = d.sensor_norm_bounds;
  spec.C_r0 = d.C_r0;
  spec.epsilon = d.epsilon;
  spec.max_outer_iterations = d.max_iters;
  return spec;
}

}  // namespace rsd::io

#endif  // RSD_IO_HPP
