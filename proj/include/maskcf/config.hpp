#pragma once

// Flat key=value run configuration with # comments. Unknown keys are
// rejected; the resolved configuration prints back in the same format.

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <map>
#include <sstream>
#include <string>

#include "maskcf/errors.hpp"
#include "maskcf/tracker.hpp"

namespace maskcf {

struct CliConfig {
  TrackerConfig tracker = TrackerConfig::defaults({});
  std::string dataset;
  std::string seq;
  std::string out = "out";
  std::uint64_t seed = 1;
  int workers = 1;
};

using ConfigPairs = std::map<std::string, std::string>;

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size()) throw ConfigError(key + ": '" + v + "' is not a valid number");
  return out;
}

inline std::string format_double(double v) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

}  // namespace detail

inline const char* const kConfigKeys[] = {
    "variant", "mode", "lambda", "tau", "mu", "iters", "tau_max", "mu_max", "growth", "delta", "tolerance",
    "features", "cell", "search_scale", "learning_rate", "sample_capacity", "sample_rate", "reduced_channels",
    "inner_iterations", "inner_tolerance", "scales", "scale_step", "scale_penalty", "max_model_px",
    "dataset", "seq", "out", "seed", "workers"};

inline bool is_config_key(const std::string& k) {
  for (const char* c : kConfigKeys)
    if (k == c) return true;
  return false;
}

inline ConfigPairs parse_config(std::istream& in, const std::string& file) {
  ConfigPairs out;
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(file + ":" + std::to_string(n) + ": expected key=value");
    const std::string key = detail::trim(line.substr(0, eq));
    if (!is_config_key(key)) throw ConfigError(file + ":" + std::to_string(n) + ": unknown key '" + key + "'");
    out[key] = detail::trim(line.substr(eq + 1));
  }
  return out;
}

/// Builds the configuration: solver defaults follow the chosen mode, then
/// every given key overrides its field. All values are validated.
inline CliConfig resolve_config(const ConfigPairs& pairs) {
  using detail::parse_number;
  CliConfig c;
  for (const auto& [k, v] : pairs)
    if (!is_config_key(k)) throw ConfigError("unknown key '" + k + "'");
  auto get = [&](const char* k) -> const std::string* {
    const auto it = pairs.find(k);
    return it == pairs.end() ? nullptr : &it->second;
  };
  VariantSpec spec;
  try {
    if (auto v = get("variant")) spec.variant = parse_variant(*v);
    if (auto v = get("mode")) spec.mode = parse_mode(*v);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  TrackerConfig& t = c.tracker;
  t = TrackerConfig::defaults(spec);
  auto real = [&](const char* k, double& field) {
    if (auto v = get(k)) field = parse_number<double>(k, *v);
  };
  auto integer = [&](const char* k, int& field) {
    if (auto v = get(k)) field = parse_number<int>(k, *v);
  };
  real("lambda", t.solver.lambda);
  real("tau", t.solver.tau);
  real("mu", t.solver.mu);
  integer("iters", t.solver.iters);
  real("tau_max", t.solver.tau_max);
  real("mu_max", t.solver.mu_max);
  real("growth", t.solver.growth);
  real("delta", t.solver.delta);
  real("tolerance", t.solver.tolerance);
  if (auto v = get("features")) {
    if (*v == "hog") t.features.kind = FeatureKind::hog31;
    else if (*v == "gray") t.features.kind = FeatureKind::grayscale;
    else throw ConfigError("features: expected hog or gray, got '" + *v + "'");
  }
  integer("cell", t.features.cell);
  real("search_scale", t.features.search_scale);
  real("learning_rate", t.learning_rate);
  integer("sample_capacity", t.sample_capacity);
  real("sample_rate", t.sample_rate);
  integer("reduced_channels", t.reduced_channels);
  integer("inner_iterations", t.inner.max_iterations);
  real("inner_tolerance", t.inner.gradient_tolerance);
  integer("scales", t.scales);
  real("scale_step", t.scale_step);
  real("scale_penalty", t.scale_penalty);
  integer("max_model_px", t.max_model_px);
  if (auto v = get("dataset")) c.dataset = *v;
  if (auto v = get("seq")) c.seq = *v;
  if (auto v = get("out")) c.out = *v;
  if (auto v = get("seed")) c.seed = parse_number<std::uint64_t>("seed", *v);
  integer("workers", c.workers);
  try {
    t.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (t.inner.max_iterations < 1 || !(t.inner.gradient_tolerance >= 0.0))
    throw ConfigError("inner solver: need inner_iterations >= 1 and inner_tolerance >= 0");
  if (c.workers < 1) throw ConfigError("workers must be >= 1");
  return c;
}

/// Every key with its resolved value except the output directory, so runs
/// that differ only in where they write echo identical text. parse_config +
/// resolve_config on this text gives back the same configuration.
inline std::string format_config(const CliConfig& c) {
  using detail::format_double;
  const TrackerConfig& t = c.tracker;
  std::ostringstream o;
  o << "# effective configuration\n";
  o << "variant = " << to_string(t.spec.variant) << "\n";
  o << "mode = " << to_string(t.spec.mode) << "\n";
  o << "lambda = " << format_double(t.solver.lambda) << "\n";
  o << "tau = " << format_double(t.solver.tau) << "\n";
  o << "mu = " << format_double(t.solver.mu) << "\n";
  o << "iters = " << t.solver.iters << "\n";
  o << "tau_max = " << format_double(t.solver.tau_max) << "\n";
  o << "mu_max = " << format_double(t.solver.mu_max) << "\n";
  o << "growth = " << format_double(t.solver.growth) << "\n";
  o << "delta = " << format_double(t.solver.delta) << "\n";
  o << "tolerance = " << format_double(t.solver.tolerance) << "\n";
  o << "features = " << (t.features.kind == FeatureKind::hog31 ? "hog" : "gray") << "\n";
  o << "cell = " << t.features.cell << "\n";
  o << "search_scale = " << format_double(t.features.search_scale) << "\n";
  o << "learning_rate = " << format_double(t.learning_rate) << "\n";
  o << "sample_capacity = " << t.sample_capacity << "\n";
  o << "sample_rate = " << format_double(t.sample_rate) << "\n";
  o << "reduced_channels = " << t.reduced_channels << "\n";
  o << "inner_iterations = " << t.inner.max_iterations << "\n";
  o << "inner_tolerance = " << format_double(t.inner.gradient_tolerance) << "\n";
  o << "scales = " << t.scales << "\n";
  o << "scale_step = " << format_double(t.scale_step) << "\n";
  o << "scale_penalty = " << format_double(t.scale_penalty) << "\n";
  o << "max_model_px = " << t.max_model_px << "\n";
  if (!c.dataset.empty()) o << "dataset = " << c.dataset << "\n";
  if (!c.seq.empty()) o << "seq = " << c.seq << "\n";
  o << "seed = " << c.seed << "\n";
  o << "workers = " << c.workers << "\n";
  return o.str();
}

}  // namespace maskcf
