#pragma once

// Plain-text configuration: [section] headers and key = value lines, with
// vectors and matrices as row-major bracketed lists ([1, 2; 3, 4]). The same
// reader backs run-record files, which reuse the syntax.

#include <Eigen/Dense>
#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "noisylmi/errors.hpp"
#include "noisylmi/simkit.hpp"

namespace noisylmi::cli {

inline std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

/// Full-precision double formatting that round-trips through strtod.
inline std::string format_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

class KeyValueFile {
 public:
  struct Entry {
    std::string value;
    int line = 0;
  };

  static KeyValueFile parse(const std::string& text) {
    KeyValueFile out;
    std::istringstream stream(text);
    std::string line;
    std::string section;
    int line_number = 0;
    while (std::getline(stream, line)) {
      ++line_number;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      std::string t = trim(line);
      if (t.empty()) continue;
      if (t.front() == '[') {
        if (t.back() != ']') throw ParseError("unterminated section header", line_number);
        section = trim(t.substr(1, t.size() - 2));
        if (section.empty()) throw ParseError("empty section name", line_number);
        out.sections_.push_back(section);
        continue;
      }
      const auto eq = t.find('=');
      if (eq == std::string::npos) throw ParseError("expected key = value", line_number);
      std::string key = trim(t.substr(0, eq));
      std::string value = trim(t.substr(eq + 1));
      if (key.empty()) throw ParseError("empty key", line_number);
      const int first_line = line_number;
      // Bracketed values may continue over multiple lines until ']'.
      if (!value.empty() && value.front() == '[' && value.find(']') == std::string::npos) {
        std::string more;
        bool closed = false;
        while (std::getline(stream, more)) {
          ++line_number;
          const auto h2 = more.find('#');
          if (h2 != std::string::npos) more = more.substr(0, h2);
          value += " " + trim(more);
          if (value.find(']') != std::string::npos) {
            closed = true;
            break;
          }
        }
        if (!closed) throw ParseError("unterminated bracketed value", first_line);
      }
      const std::string full_key = section.empty() ? key : section + "." + key;
      if (out.entries_.count(full_key)) throw ParseError("duplicate key " + full_key, first_line);
      out.entries_[full_key] = Entry{value, first_line};
    }
    return out;
  }

  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  const std::vector<std::string>& sections() const { return sections_; }

  std::string get_string(const std::string& key) const { return require(key).value; }

  std::string get_string_or(const std::string& key, const std::string& fallback) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? fallback : it->second.value;
  }

  double get_double(const std::string& key) const {
    const Entry& e = require(key);
    return parse_double(e.value, e.line);
  }

  double get_double_or(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
  }

  long long get_int(const std::string& key) const {
    const Entry& e = require(key);
    try {
      std::size_t pos = 0;
      const long long v = std::stoll(e.value, &pos);
      if (pos != e.value.size()) throw std::invalid_argument("");
      return v;
    } catch (...) {
      throw ParseError("invalid integer for " + key + ": " + e.value, e.line);
    }
  }

  long long get_int_or(const std::string& key, long long fallback) const {
    return has(key) ? get_int(key) : fallback;
  }

  std::uint64_t get_seed_or(const std::string& key, std::uint64_t fallback) const {
    return has(key) ? static_cast<std::uint64_t>(get_int(key)) : fallback;
  }

  /// Matrix syntax: [r00, r01; r10, r11]; a single row yields a row vector.
  Eigen::MatrixXd get_matrix(const std::string& key) const {
    const Entry& e = require(key);
    std::string v = trim(e.value);
    if (v.size() < 2 || v.front() != '[' || v.back() != ']')
      throw ParseError("expected bracketed matrix for " + key, e.line);
    v = v.substr(1, v.size() - 2);
    std::vector<std::vector<double>> rows;
    std::istringstream row_stream(v);
    std::string row;
    while (std::getline(row_stream, row, ';')) {
      row = trim(row);
      std::vector<double> values;
      if (!row.empty()) {
        std::istringstream cell_stream(row);
        std::string cell;
        while (std::getline(cell_stream, cell, ',')) values.push_back(parse_double(trim(cell), e.line));
      }
      rows.push_back(std::move(values));
    }
    if (rows.empty() || rows.front().empty())
      throw ParseError("empty matrix for " + key, e.line);
    const std::size_t cols = rows.front().size();
    for (const auto& r : rows)
      if (r.size() != cols) throw ParseError("ragged matrix rows for " + key, e.line);
    Eigen::MatrixXd m(rows.size(), cols);
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < cols; ++j) m(i, j) = rows[i][j];
    return m;
  }

  Eigen::VectorXd get_vector(const std::string& key) const {
    Eigen::MatrixXd m = get_matrix(key);
    if (m.rows() != 1 && m.cols() != 1)
      throw ParseError("expected a vector for " + key, require(key).line);
    return m.rows() == 1 ? Eigen::VectorXd(m.transpose().col(0)) : Eigen::VectorXd(m.col(0));
  }

  int line_of(const std::string& key) const { return require(key).line; }

  /// Schema check: every present key with the given section prefix must be
  /// in the allowed set.
  void check_known_keys(const std::string& section, const std::set<std::string>& allowed) const {
    for (const auto& [key, entry] : entries_) {
      if (key.rfind(section + ".", 0) != 0) continue;
      const std::string leaf = key.substr(section.size() + 1);
      if (!allowed.count(leaf))
        throw ParseError("unknown key '" + leaf + "' in section [" + section + "]", entry.line);
    }
  }

 private:
  const Entry& require(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw InvalidInput("missing configuration key: " + key);
    return it->second;
  }

  static double parse_double(const std::string& s, int line) {
    try {
      std::size_t pos = 0;
      const double v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument("");
      return v;
    } catch (...) {
      throw ParseError("invalid number: " + s, line);
    }
  }

  std::map<std::string, Entry> entries_;
  std::vector<std::string> sections_;
};

inline std::string format_matrix(const Eigen::MatrixXd& m) {
  std::string out = "[";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (i) out += "; ";
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out += ", ";
      out += format_full(m(i, j));
    }
  }
  out += "]";
  return out;
}

inline std::string format_vector(const Eigen::VectorXd& v) {
  return format_matrix(v.transpose());
}

enum class PlantSource { Random, Eigenvalues, Explicit };
enum class BoundMode { Energy, Instantaneous, Both };

inline BoundMode bound_mode_from_string(const std::string& s) {
  if (s == "energy") return BoundMode::Energy;
  if (s == "instantaneous") return BoundMode::Instantaneous;
  if (s == "both") return BoundMode::Both;
  throw InvalidInput("unknown bound mode: " + s);
}

inline std::string to_string(BoundMode m) {
  switch (m) {
    case BoundMode::Energy: return "energy";
    case BoundMode::Instantaneous: return "instantaneous";
    case BoundMode::Both: return "both";
  }
  return "both";
}

struct PlantConfig {
  PlantSource source = PlantSource::Random;
  Eigen::Index n = 2;
  Eigen::Index m = 1;
  std::uint64_t seed = 1;
  double spectral_radius = 0.9;
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
};

struct ExperimentConfig {
  Eigen::Index horizon = 20;
  Eigen::VectorXd x0;  // empty means zeros
  double input_amplitude = 1.0;
  std::uint64_t seed = 1;
};

struct NoiseConfig {
  double e_x_bound = 0.0;
  double e_u_bound = 0.0;
  simkit::NoiseDistribution distribution = simkit::NoiseDistribution::UniformBall;
};

struct SolverConfig {
  double feas_tol = 1e-8;
  double margin = 1e-6;
  int max_iter = 2000;
};

struct VerifyConfig {
  Eigen::Index samples = 500;
  std::uint64_t seed = 1;
};

struct SweepConfig {
  std::vector<Eigen::Index> T_grid;
  std::vector<double> theta_grid;
  int trials = 5;
  bool redraw_plant = false;
  std::uint64_t seed = 1;
};

struct RunConfig {
  PlantConfig plant;
  ExperimentConfig experiment;
  NoiseConfig noise;
  BoundMode mode = BoundMode::Both;
  SolverConfig solver;
  VerifyConfig verify;
  std::string output_dir = "out";
  std::optional<SweepConfig> sweep;

  static RunConfig from_file_text(const std::string& text) {
    const KeyValueFile kv = KeyValueFile::parse(text);
    kv.check_known_keys("plant", {"source", "n", "m", "seed", "spectral_radius", "eigenvalues", "A", "B"});
    kv.check_known_keys("experiment", {"T", "x0", "input_amplitude", "seed"});
    kv.check_known_keys("noise", {"e_x_bound", "e_u_bound", "distribution"});
    kv.check_known_keys("bound", {"mode"});
    kv.check_known_keys("solver", {"feas_tol", "margin", "max_iter"});
    kv.check_known_keys("verify", {"samples", "seed"});
    kv.check_known_keys("output", {"dir"});
    kv.check_known_keys("sweep", {"T_grid", "theta_grid", "trials", "plant_policy", "seed"});

    RunConfig cfg;
    const std::string source = kv.get_string_or("plant.source", "random");
    if (source == "random")
      cfg.plant.source = PlantSource::Random;
    else if (source == "eigenvalues")
      cfg.plant.source = PlantSource::Eigenvalues;
    else if (source == "explicit")
      cfg.plant.source = PlantSource::Explicit;
    else
      throw InvalidInput("unknown plant source: " + source);

    switch (cfg.plant.source) {
      case PlantSource::Random:
        cfg.plant.n = kv.get_int("plant.n");
        cfg.plant.m = kv.get_int("plant.m");
        cfg.plant.spectral_radius = kv.get_double_or("plant.spectral_radius", 0.9);
        cfg.plant.seed = kv.get_seed_or("plant.seed", 1);
        break;
      case PlantSource::Eigenvalues:
        cfg.plant.eigenvalues = kv.get_vector("plant.eigenvalues");
        cfg.plant.n = cfg.plant.eigenvalues.size();
        cfg.plant.m = kv.get_int("plant.m");
        cfg.plant.seed = kv.get_seed_or("plant.seed", 1);
        break;
      case PlantSource::Explicit:
        cfg.plant.A = kv.get_matrix("plant.A");
        cfg.plant.B = kv.get_matrix("plant.B");
        cfg.plant.n = cfg.plant.A.rows();
        cfg.plant.m = cfg.plant.B.cols();
        if (cfg.plant.A.rows() != cfg.plant.A.cols() || cfg.plant.B.rows() != cfg.plant.A.rows())
          throw InvalidInput("explicit plant matrices have inconsistent dimensions");
        break;
    }
    if (cfg.plant.n < 1 || cfg.plant.m < 1) throw InvalidInput("plant dimensions must be positive");

    cfg.experiment.horizon = kv.get_int("experiment.T");
    if (cfg.experiment.horizon < 1) throw InvalidInput("experiment horizon must be >= 1");
    if (kv.has("experiment.x0")) {
      cfg.experiment.x0 = kv.get_vector("experiment.x0");
      if (cfg.experiment.x0.size() != cfg.plant.n)
        throw InvalidInput("x0 dimension does not match the plant");
    }
    cfg.experiment.input_amplitude = kv.get_double_or("experiment.input_amplitude", 1.0);
    cfg.experiment.seed = kv.get_seed_or("experiment.seed", 1);

    cfg.noise.e_x_bound = kv.get_double_or("noise.e_x_bound", 0.0);
    cfg.noise.e_u_bound = kv.get_double_or("noise.e_u_bound", 0.0);
    if (cfg.noise.e_x_bound < 0 || cfg.noise.e_u_bound < 0)
      throw InvalidInput("noise bounds must be nonnegative");
    cfg.noise.distribution =
        simkit::noise_distribution_from_string(kv.get_string_or("noise.distribution", "uniform-ball"));

    cfg.mode = bound_mode_from_string(kv.get_string_or("bound.mode", "both"));

    cfg.solver.feas_tol = kv.get_double_or("solver.feas_tol", 1e-8);
    cfg.solver.margin = kv.get_double_or("solver.margin", 1e-6);
    cfg.solver.max_iter = static_cast<int>(kv.get_int_or("solver.max_iter", 2000));

    cfg.verify.samples = kv.get_int_or("verify.samples", 500);
    cfg.verify.seed = kv.get_seed_or("verify.seed", 1);

    cfg.output_dir = kv.get_string_or("output.dir", "out");

    if (kv.has("sweep.T_grid") || kv.has("sweep.theta_grid")) {
      SweepConfig sweep;
      const Eigen::VectorXd ts = kv.get_vector("sweep.T_grid");
      const Eigen::VectorXd thetas = kv.get_vector("sweep.theta_grid");
      for (Eigen::Index i = 0; i < ts.size(); ++i) {
        if (ts(i) < 1) throw InvalidInput("sweep horizons must be >= 1");
        sweep.T_grid.push_back(static_cast<Eigen::Index>(ts(i)));
      }
      for (Eigen::Index i = 0; i < thetas.size(); ++i) {
        if (!(thetas(i) >= 0)) throw InvalidInput("sweep bounds must be nonnegative");
        sweep.theta_grid.push_back(thetas(i));
      }
      if (sweep.T_grid.empty() || sweep.theta_grid.empty())
        throw InvalidInput("sweep grids must be nonempty");
      sweep.trials = static_cast<int>(kv.get_int_or("sweep.trials", 5));
      if (sweep.trials < 1) throw InvalidInput("sweep trials must be >= 1");
      const std::string policy = kv.get_string_or("sweep.plant_policy", "fixed");
      if (policy == "fixed")
        sweep.redraw_plant = false;
      else if (policy == "redraw")
        sweep.redraw_plant = true;
      else
        throw InvalidInput("unknown sweep plant_policy: " + policy);
      sweep.seed = kv.get_seed_or("sweep.seed", 1);
      cfg.sweep = std::move(sweep);
    }
    return cfg;
  }

  /// Echo of the parsed configuration, reusable as an input file.
  std::string render() const {
    std::ostringstream os;
    os << "[plant]\n";
    switch (plant.source) {
      case PlantSource::Random:
        os << "source = random\n";
        os << "n = " << plant.n << "\n";
        os << "m = " << plant.m << "\n";
        os << "spectral_radius = " << format_full(plant.spectral_radius) << "\n";
        os << "seed = " << plant.seed << "\n";
        break;
      case PlantSource::Eigenvalues:
        os << "source = eigenvalues\n";
        os << "eigenvalues = " << format_vector(plant.eigenvalues) << "\n";
        os << "m = " << plant.m << "\n";
        os << "seed = " << plant.seed << "\n";
        break;
      case PlantSource::Explicit:
        os << "source = explicit\n";
        os << "A = " << format_matrix(plant.A) << "\n";
        os << "B = " << format_matrix(plant.B) << "\n";
        break;
    }
    os << "\n[experiment]\n";
    os << "T = " << experiment.horizon << "\n";
    if (experiment.x0.size() > 0) os << "x0 = " << format_vector(experiment.x0) << "\n";
    os << "input_amplitude = " << format_full(experiment.input_amplitude) << "\n";
    os << "seed = " << experiment.seed << "\n";
    os << "\n[noise]\n";
    os << "e_x_bound = " << format_full(noise.e_x_bound) << "\n";
    os << "e_u_bound = " << format_full(noise.e_u_bound) << "\n";
    os << "distribution = " << simkit::to_string(noise.distribution) << "\n";
    os << "\n[bound]\n";
    os << "mode = " << to_string(mode) << "\n";
    os << "\n[solver]\n";
    os << "feas_tol = " << format_full(solver.feas_tol) << "\n";
    os << "margin = " << format_full(solver.margin) << "\n";
    os << "max_iter = " << solver.max_iter << "\n";
    os << "\n[verify]\n";
    os << "samples = " << verify.samples << "\n";
    os << "seed = " << verify.seed << "\n";
    os << "\n[output]\n";
    os << "dir = " << output_dir << "\n";
    if (sweep) {
      os << "\n[sweep]\n";
      os << "T_grid = [";
      for (std::size_t i = 0; i < sweep->T_grid.size(); ++i)
        os << (i ? ", " : "") << sweep->T_grid[i];
      os << "]\n";
      os << "theta_grid = [";
      for (std::size_t i = 0; i < sweep->theta_grid.size(); ++i)
        os << (i ? ", " : "") << format_full(sweep->theta_grid[i]);
      os << "]\n";
      os << "trials = " << sweep->trials << "\n";
      os << "plant_policy = " << (sweep->redraw_plant ? "redraw" : "fixed") << "\n";
      os << "seed = " << sweep->seed << "\n";
    }
    return os.str();
  }
};

inline simkit::PlantModel<double> build_plant(const PlantConfig& cfg) {
  switch (cfg.source) {
    case PlantSource::Random:
      return simkit::random_plant<double>(cfg.n, cfg.m, cfg.spectral_radius, cfg.seed);
    case PlantSource::Eigenvalues:
      return simkit::plant_with_eigenvalues<double>(cfg.eigenvalues, cfg.m, cfg.seed);
    case PlantSource::Explicit:
      return {cfg.A, cfg.B};
  }
  throw InvalidInput("unreachable plant source");
}

}  // namespace noisylmi::cli
