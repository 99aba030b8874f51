#pragma once

// Experiment configuration: a flat TOML-style key = value file (with optional
// [section] headers that prefix keys as "section.key") parsed into an
// ExperimentConfig. Validation happens before any work starts.

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "rhgr/anomaly/vae.hpp"
#include "rhgr/calib/calibration.hpp"
#include "rhgr/dsp/config.hpp"

namespace rhgr::io {

struct ExplainConfig {
  std::size_t n_samples = 256;    // expected-gradients samples per window
  std::size_t srv_per_class = 10; // nominal recordings per class for the SRV
};

struct ExperimentConfig {
  std::vector<std::string> stages{"simulate", "preprocess", "train",
                                  "calibrate", "detect", "explain", "report"};
  std::filesystem::path out_dir = "out";
  std::filesystem::path corpus_dir;  // empty -> corpus_root() resolution
  std::uint64_t seed = 1;
  std::size_t jobs = 1;

  // dataset composition
  std::size_t users = 2;                 // calibration users beyond the baseline
  std::size_t train_per_class = 20;      // baseline recordings per gesture class
  std::size_t user_per_class = 12;       // per-user recordings per gesture class
  std::size_t anomalies_per_kind = 6;    // fast/slow/wrist executions per user
  double train_ratio = 0.8, val_ratio = 0.1, forget_ratio = 0.1;

  // runtime-only prompt settings (not part of the config hash)
  std::filesystem::path answer_file;
  bool interactive = false;

  dsp::RadarConfig radar;
  model::TrainConfig train;
  calib::CalibrationConfig calibration;
  calib::SweepGrid sweep;
  std::size_t sweep_runs = 6;
  anomaly::VaeConfig vae;
  ExplainConfig explain;

  void validate() const {
    const double sum = train_ratio + val_ratio + forget_ratio;
    if (std::abs(sum - 1.0) > 1e-9)
      throw ConfigError("ExperimentConfig: split ratios sum to " +
                        std::to_string(sum) + ", expected 1");
    if (train_ratio <= 0.0 || val_ratio < 0.0 || forget_ratio < 0.0)
      throw ConfigError("ExperimentConfig: split ratios must be non-negative");
    if (stages.empty()) throw ConfigError("ExperimentConfig: no stages selected");
    static const std::vector<std::string> known{
        "simulate", "preprocess", "train", "calibrate", "detect", "explain",
        "report"};
    for (const auto& s : stages)
      if (std::find(known.begin(), known.end(), s) == known.end())
        throw ConfigError("ExperimentConfig: unknown stage '" + s + "'");
    if (train_per_class == 0 || user_per_class == 0)
      throw ConfigError("ExperimentConfig: per-class counts must be positive");
    calibration.validate();
    vae.validate();
  }
};

namespace detail {

inline std::string trim(std::string s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
    s.erase(s.begin());
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
    s.pop_back();
  return s;
}

inline std::string unquote(std::string s) {
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                        (s.front() == '\'' && s.back() == '\'')))
    return s.substr(1, s.size() - 2);
  return s;
}

inline std::vector<std::string> split_list(const std::string& v) {
  // accepts "a, b, c" or "[a, b, c]"
  std::string body = v;
  if (body.size() >= 2 && body.front() == '[' && body.back() == ']')
    body = body.substr(1, body.size() - 2);
  std::vector<std::string> out;
  std::stringstream ss(body);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = unquote(trim(item));
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace detail

// Parses a TOML-style file into a flat key -> raw-value map.
inline std::map<std::string, std::string> parse_kv_file(
    const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("parse_kv_file: cannot open " + path.string());
  std::map<std::string, std::string> kv;
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = detail::trim(line.substr(1, line.size() - 2));
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("parse_kv_file: line " + std::to_string(lineno) +
                        " is not key = value: '" + line + "'");
    std::string key = detail::trim(line.substr(0, eq));
    if (!section.empty()) key = section + "." + key;
    kv[key] = detail::unquote(detail::trim(line.substr(eq + 1)));
  }
  return kv;
}

inline ExperimentConfig config_from_map(const std::map<std::string, std::string>& kv) {
  ExperimentConfig cfg;
  std::set<std::string> unused;
  for (const auto& [k, v] : kv) unused.insert(k);

  auto raw = [&](const std::string& key) -> const std::string* {
    auto it = kv.find(key);
    if (it == kv.end()) return nullptr;
    unused.erase(key);
    return &it->second;
  };
  auto num = [&](const std::string& key, auto& target) {
    if (const std::string* v = raw(key)) {
      try {
        target = static_cast<std::remove_reference_t<decltype(target)>>(
            std::stod(*v));
      } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' has non-numeric value '" + *v +
                          "'");
      }
    }
  };
  auto str = [&](const std::string& key, auto& target) {
    if (const std::string* v = raw(key)) target = *v;
  };
  auto size_list = [&](const std::string& key, std::vector<std::size_t>& target) {
    if (const std::string* v = raw(key)) {
      target.clear();
      for (const auto& item : detail::split_list(*v))
        target.push_back(std::stoul(item));
    }
  };

  if (const std::string* v = raw("stages")) cfg.stages = detail::split_list(*v);
  if (const std::string* v = raw("out_dir")) cfg.out_dir = *v;
  if (const std::string* v = raw("corpus_dir")) cfg.corpus_dir = *v;
  num("seed", cfg.seed);
  num("jobs", cfg.jobs);
  num("users", cfg.users);
  num("train_per_class", cfg.train_per_class);
  num("user_per_class", cfg.user_per_class);
  num("anomalies_per_kind", cfg.anomalies_per_kind);
  num("train_ratio", cfg.train_ratio);
  num("val_ratio", cfg.val_ratio);
  num("forget_ratio", cfg.forget_ratio);

  num("train.epochs", cfg.train.epochs);
  num("train.batch_size", cfg.train.batch_size);
  num("train.lr", cfg.train.lr);

  str("calibration.method", cfg.calibration.method);
  num("calibration.n_train", cfg.calibration.n_train);
  num("calibration.n_user", cfg.calibration.n_user);
  num("calibration.epochs", cfg.calibration.epochs);
  num("calibration.lambda_ewc", cfg.calibration.lambda_ewc);
  num("calibration.lambda_si", cfg.calibration.lambda_si);
  num("calibration.lr", cfg.calibration.lr);
  num("calibration.si_lr", cfg.calibration.si_lr);

  if (const std::string* v = raw("sweep.methods"))
    cfg.sweep.methods = detail::split_list(*v);
  size_list("sweep.n_train", cfg.sweep.n_train_values);
  size_list("sweep.n_user", cfg.sweep.n_user_values);
  num("sweep.runs", cfg.sweep_runs);

  num("vae.epochs", cfg.vae.epochs);
  num("vae.batch_size", cfg.vae.batch_size);
  num("vae.patience", cfg.vae.patience);
  num("vae.lr", cfg.vae.lr);
  num("vae.dropout", cfg.vae.dropout);
  num("vae.latent_dim", cfg.vae.latent_dim);
  size_list("vae.enc_dims", cfg.vae.enc_dims);

  num("explain.n_samples", cfg.explain.n_samples);
  num("explain.srv_per_class", cfg.explain.srv_per_class);

  if (!unused.empty())
    throw ConfigError("config: unknown key '" + *unused.begin() + "'");
  cfg.validate();
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  return config_from_map(parse_kv_file(path));
}

// Stable content hash of the effective configuration, used for stage stamps.
// Stage selection is deliberately excluded so that running a subset of stages
// later still matches earlier stamps.
inline std::string config_hash(const ExperimentConfig& cfg) {
  std::ostringstream ss;
  ss.precision(17);
  ss << cfg.seed << ';' << cfg.users << ';' << cfg.train_per_class << ';'
     << cfg.user_per_class << ';' << cfg.anomalies_per_kind << ';'
     << cfg.train_ratio << ';' << cfg.val_ratio << ';' << cfg.forget_ratio << ';'
     << cfg.train.epochs << ';' << cfg.train.batch_size << ';' << cfg.train.lr
     << ';' << cfg.calibration.method << ';' << cfg.calibration.n_train << ';'
     << cfg.calibration.n_user << ';' << cfg.calibration.epochs << ';'
     << cfg.calibration.lambda_ewc << ';' << cfg.calibration.lambda_si << ';'
     << cfg.calibration.lr << ';' << cfg.calibration.si_lr << ';';
  for (const auto& m : cfg.sweep.methods) ss << m << ',';
  for (std::size_t n : cfg.sweep.n_train_values) ss << n << ',';
  for (std::size_t n : cfg.sweep.n_user_values) ss << n << ',';
  ss << cfg.sweep_runs << ';' << cfg.vae.epochs << ';' << cfg.vae.batch_size << ';'
     << cfg.vae.patience << ';' << cfg.vae.lr << ';' << cfg.vae.dropout << ';'
     << cfg.vae.latent_dim << ';';
  for (std::size_t d : cfg.vae.enc_dims) ss << d << ',';
  ss << cfg.explain.n_samples << ';' << cfg.explain.srv_per_class;
  const std::string s = ss.str();
  std::uint64_t h = 1469598103934665603ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace rhgr::io
