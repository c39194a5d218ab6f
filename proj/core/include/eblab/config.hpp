#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "eblab/estimators.hpp"
#include "eblab/models.hpp"

namespace eblab {

// Flat key/value configuration. Keys are dotted paths ("prior.kind").
// Text form: `key = value` lines, `[table]` headers, `#` comments; values are
// quoted strings, numbers, booleans, or one-line arrays of numbers/strings.
class Config {
 public:
  using Value = std::variant<bool, std::int64_t, double, std::string, std::vector<double>, std::vector<std::string>>;

  static Config parse(const std::string& text);
  static Config parse_json(const std::string& text);
  static Config load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, Value v) { values_[key] = std::move(v); }
  // Parses `raw` with the value grammar of the text form; bare words become strings.
  void set_from_text(const std::string& key, const std::string& raw);
  void erase(const std::string& key) { values_.erase(key); }

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_uint64(const std::string& key) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key) const;

  // Throws ConfigError naming the first key outside `allowed` (a trailing ".*" allows a subtree).
  void require_known(const std::set<std::string>& allowed) const;

  const std::map<std::string, Value>& values() const { return values_; }
  std::string to_json() const;  // nested object
  std::string to_text() const;

 private:
  std::map<std::string, Value> values_;
};

MixtureModel model_from_config(const Config& cfg, const std::string& key = "model");
// Reads `<prefix>.kind` and its parameters.
Prior prior_from_config(const Config& cfg, const std::string& prefix = "prior");
// Writes a prior back in the same schema (discrete priors as atoms/weights arrays).
void prior_to_config(const Prior& prior, Config& cfg, const std::string& prefix = "prior");
// The prior's table as a JSON object: {"kind": ..., parameters}.
std::string prior_to_json(const Prior& prior);

// `<prefix>.kind` plus `<prefix>.grid_points`, `.tol`, `.max_iter`; the oracle uses
// `<prefix>.prior.*` when present, else `fallback_prior`.
EstimatorSpec estimator_from_config(const Config& cfg, const std::optional<Prior>& fallback_prior = std::nullopt,
                                    const std::string& prefix = "estimator");

}  // namespace eblab
