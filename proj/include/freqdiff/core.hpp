// Core domain types and run configuration shared by every other header.
//
// Conventions used throughout the library:
//   * A series is an N x M real matrix: rows are time steps (or frequency
//     bins after a transform), columns are features.
//   * All floating-point work is double precision. Tolerances come in three
//     tiers: 1e-12 for algebraic identities, 1e-10 for transform round
//     trips, 1e-8 for SDE-adjacent checks.
//   * Matrices flatten column-major (Eigen default) wherever a series is
//     treated as a vector of dimension d = N * M.

#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace freqdiff {

using Mat = Eigen::MatrixXd;
using CMat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXd;
using Index = Eigen::Index;

namespace tol {
inline constexpr double algebra = 1e-12;    // exact identities (unitarity, mirror symmetry)
inline constexpr double transform = 1e-10;  // transform round trips, Parseval
inline constexpr double sde = 1e-8;         // pathwise SDE checks, loss equivalences
}  // namespace tol

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TrainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Domain { time, frequency };

inline std::string to_string(Domain d) {
  return d == Domain::time ? "time" : "frequency";
}

inline Domain domain_from_string(const std::string& s) {
  if (s == "time") return Domain::time;
  if (s == "frequency" || s == "freq") return Domain::frequency;
  throw ConfigError("unknown domain '" + s + "' (expected time|frequency)");
}

/// Real N x M series; rows index time steps, columns index features.
struct TimeSeries {
  Mat values;

  TimeSeries() = default;
  explicit TimeSeries(Mat v) : values(std::move(v)) {}

  Index n() const { return values.rows(); }
  Index m() const { return values.cols(); }
};

/// Complex N x M spectrum. Spectra built from real series satisfy the mirror
/// symmetry values(k, v) == conj(values((N - k) % N, v)).
struct SpectralSeries {
  CMat values;

  SpectralSeries() = default;
  explicit SpectralSeries(CMat v) : values(std::move(v)) {}

  Index n() const { return values.rows(); }
  Index m() const { return values.cols(); }
};

/// Unconstrained real chart coordinates of a mirror-symmetric spectrum.
/// Row layout along the frequency axis (h = floor(N/2)):
///   even N: Re x~_0 .. Re x~_h, Im x~_1 .. Im x~_{h-1}
///   odd  N: Re x~_0 .. Re x~_h, Im x~_1 .. Im x~_h
struct PhiVector {
  Mat values;

  PhiVector() = default;
  explicit PhiVector(Mat v) : values(std::move(v)) {}

  Index n() const { return values.rows(); }
  Index m() const { return values.cols(); }
};

inline void require_nonempty_finite(const Mat& v, const char* what) {
  if (v.rows() < 1 || v.cols() < 1)
    throw DataError(std::string(what) + ": N >= 1 and M >= 1 violated");
  if (!v.allFinite())
    throw DataError(std::string(what) + ": non-finite entry");
}

struct RunConfig {
  std::uint64_t seed = 0;
  Index n = 32;
  Index m = 1;
  double beta_min = 0.1;
  double beta_max = 20.0;
  int diffusion_steps = 1000;
  int epochs = 200;
  int batch_size = 64;
  int warmup_epochs = 20;
  double lr_max = 1e-3;
  double weight_decay = 0.01;
  std::vector<int> hidden_sizes = {256, 256, 256};
  int time_embed_features = 64;  // random Fourier features feeding the dense layer
  int time_embed_dim = 64;       // output width of the learnable dense layer
  double time_embed_scale = 16.0;
  int n_projections = 10000;
  Domain domain = Domain::time;
  double val_fraction = 0.1;
};

/// Returns cfg unchanged if every invariant holds, else throws ConfigError
/// naming the first violated constraint.
inline RunConfig validate_config(const RunConfig& cfg) {
  if (cfg.n < 1) throw ConfigError("N >= 1 violated");
  if (cfg.m < 1) throw ConfigError("M >= 1 violated");
  if (!(cfg.beta_min > 0)) throw ConfigError("beta_min > 0 violated");
  if (!(cfg.beta_max > 0)) throw ConfigError("beta_max > 0 violated");
  if (!(cfg.beta_min < cfg.beta_max)) throw ConfigError("beta_min < beta_max violated");
  if (cfg.diffusion_steps < 1) throw ConfigError("diffusion_steps >= 1 violated");
  if (cfg.epochs < 1) throw ConfigError("epochs >= 1 violated");
  if (cfg.batch_size < 1) throw ConfigError("batch_size >= 1 violated");
  if (cfg.warmup_epochs < 0) throw ConfigError("warmup_epochs >= 0 violated");
  if (!(cfg.lr_max > 0)) throw ConfigError("lr_max > 0 violated");
  if (cfg.weight_decay < 0) throw ConfigError("weight_decay >= 0 violated");
  if (cfg.hidden_sizes.empty()) throw ConfigError("hidden_sizes nonempty violated");
  for (int h : cfg.hidden_sizes)
    if (h < 1) throw ConfigError("hidden_sizes entries >= 1 violated");
  if (cfg.time_embed_features < 2 || cfg.time_embed_features % 2 != 0)
    throw ConfigError("time_embed_features even and >= 2 violated");
  if (cfg.time_embed_dim < 1) throw ConfigError("time_embed_dim >= 1 violated");
  if (cfg.n_projections < 1) throw ConfigError("n_projections >= 1 violated");
  if (!(cfg.val_fraction > 0 && cfg.val_fraction < 1))
    throw ConfigError("0 < val_fraction < 1 violated");
  return cfg;
}

// ---------------------------------------------------------------------------
// Configuration files: INI-style sections of key = value pairs. Every key is
// optional; defaults match RunConfig above.

class ConfigFile {
 public:
  ConfigFile() = default;

  static ConfigFile parse_string(const std::string& text) {
    ConfigFile cf;
    std::istringstream in(text);
    std::string line, section = "run";
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::string s = strip(line);
      if (s.empty() || s[0] == '#' || s[0] == ';') continue;
      if (s.front() == '[') {
        if (s.back() != ']')
          throw ConfigError("config line " + std::to_string(lineno) + ": unterminated section header");
        section = strip(s.substr(1, s.size() - 2));
        continue;
      }
      auto eq = s.find('=');
      if (eq == std::string::npos)
        throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
      std::string key = strip(s.substr(0, eq));
      std::string value = strip(s.substr(eq + 1));
      if (key.empty())
        throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
      cf.sections_[section][key] = value;
    }
    return cf;
  }

  static ConfigFile parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str());
  }

  bool has(const std::string& section, const std::string& key) const {
    auto s = sections_.find(section);
    return s != sections_.end() && s->second.count(key) > 0;
  }

  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const {
    auto s = sections_.find(section);
    if (s == sections_.end()) return fallback;
    auto k = s->second.find(key);
    return k == s->second.end() ? fallback : k->second;
  }

  double get_double(const std::string& section, const std::string& key, double fallback) const {
    if (!has(section, key)) return fallback;
    return parse_double(section, key, get_string(section, key, ""));
  }

  long long get_int(const std::string& section, const std::string& key, long long fallback) const {
    if (!has(section, key)) return fallback;
    const std::string v = get_string(section, key, "");
    try {
      std::size_t pos = 0;
      long long r = std::stoll(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return r;
    } catch (const std::exception&) {
      throw ConfigError("config key " + section + "." + key + ": '" + v + "' is not an integer");
    }
  }

  std::uint64_t get_u64(const std::string& section, const std::string& key,
                        std::uint64_t fallback) const {
    if (!has(section, key)) return fallback;
    const std::string v = get_string(section, key, "");
    try {
      std::size_t pos = 0;
      std::uint64_t r = std::stoull(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return r;
    } catch (const std::exception&) {
      throw ConfigError("config key " + section + "." + key + ": '" + v + "' is not an unsigned integer");
    }
  }

  bool get_bool(const std::string& section, const std::string& key, bool fallback) const {
    if (!has(section, key)) return fallback;
    const std::string v = get_string(section, key, "");
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config key " + section + "." + key + ": '" + v + "' is not a boolean");
  }

  std::vector<int> get_int_list(const std::string& section, const std::string& key,
                                std::vector<int> fallback) const {
    if (!has(section, key)) return fallback;
    std::vector<int> out;
    for (const std::string& tok : split_commas(get_string(section, key, ""))) {
      try {
        out.push_back(std::stoi(tok));
      } catch (const std::exception&) {
        throw ConfigError("config key " + section + "." + key + ": '" + tok + "' is not an integer");
      }
    }
    return out;
  }

  std::vector<double> get_double_list(const std::string& section, const std::string& key,
                                      std::vector<double> fallback) const {
    if (!has(section, key)) return fallback;
    std::vector<double> out;
    for (const std::string& tok : split_commas(get_string(section, key, "")))
      out.push_back(parse_double(section, key, tok));
    return out;
  }

  /// Canonical serialization: sorted sections and keys, used for hashing.
  std::string canonical() const {
    std::ostringstream out;
    for (const auto& [sec, kv] : sections_) {
      for (const auto& [k, v] : kv) out << sec << '.' << k << '=' << v << '\n';
    }
    return out.str();
  }

 private:
  static std::string strip(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  static std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::string tok;
    std::istringstream in(s);
    while (std::getline(in, tok, ',')) {
      tok = strip(tok);
      if (!tok.empty()) out.push_back(tok);
    }
    return out;
  }

  double parse_double(const std::string& section, const std::string& key,
                      const std::string& v) const {
    try {
      std::size_t pos = 0;
      double r = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return r;
    } catch (const std::exception&) {
      throw ConfigError("config key " + section + "." + key + ": '" + v + "' is not a number");
    }
  }

  std::map<std::string, std::map<std::string, std::string>> sections_;
};

inline RunConfig run_config_from(const ConfigFile& cf) {
  RunConfig cfg;
  cfg.seed = cf.get_u64("run", "seed", cfg.seed);
  cfg.n = static_cast<Index>(cf.get_int("run", "N", cfg.n));
  cfg.m = static_cast<Index>(cf.get_int("run", "M", cfg.m));
  cfg.beta_min = cf.get_double("run", "beta_min", cfg.beta_min);
  cfg.beta_max = cf.get_double("run", "beta_max", cfg.beta_max);
  cfg.diffusion_steps = static_cast<int>(cf.get_int("run", "diffusion_steps", cfg.diffusion_steps));
  cfg.epochs = static_cast<int>(cf.get_int("run", "epochs", cfg.epochs));
  cfg.batch_size = static_cast<int>(cf.get_int("run", "batch_size", cfg.batch_size));
  cfg.warmup_epochs = static_cast<int>(cf.get_int("run", "warmup_epochs", cfg.warmup_epochs));
  cfg.lr_max = cf.get_double("run", "lr_max", cfg.lr_max);
  cfg.weight_decay = cf.get_double("run", "weight_decay", cfg.weight_decay);
  cfg.hidden_sizes = cf.get_int_list("run", "hidden_sizes", cfg.hidden_sizes);
  cfg.time_embed_features =
      static_cast<int>(cf.get_int("run", "time_embed_features", cfg.time_embed_features));
  cfg.time_embed_dim = static_cast<int>(cf.get_int("run", "time_embed_dim", cfg.time_embed_dim));
  cfg.time_embed_scale = cf.get_double("run", "time_embed_scale", cfg.time_embed_scale);
  cfg.n_projections = static_cast<int>(cf.get_int("run", "n_projections", cfg.n_projections));
  cfg.domain = domain_from_string(cf.get_string("run", "domain", to_string(cfg.domain)));
  cfg.val_fraction = cf.get_double("run", "val_fraction", cfg.val_fraction);
  return validate_config(cfg);
}

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string config_hash(const ConfigFile& cf) {
  std::uint64_t h = fnv1a64(cf.canonical());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace freqdiff
