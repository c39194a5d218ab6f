#include "eblab/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "eblab/errors.hpp"

namespace eblab {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool valid_key(const std::string& k) {
  if (k.empty() || k.front() == '.' || k.back() == '.') return false;
  for (char c : k)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) return false;
  return k.find("..") == std::string::npos;
}

// Position of an unquoted '#', or npos.
std::size_t comment_start(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (quoted && line[i] == '\\') {
      ++i;
    } else if (line[i] == '"') {
      quoted = !quoted;
    } else if (line[i] == '#' && !quoted) {
      return i;
    }
  }
  return std::string::npos;
}

std::optional<std::string> parse_quoted(const std::string& raw) {
  if (raw.size() < 2 || raw.front() != '"' || raw.back() != '"') return std::nullopt;
  std::string out;
  for (std::size_t i = 1; i + 1 < raw.size(); ++i) {
    char c = raw[i];
    if (c == '"') return std::nullopt;
    if (c == '\\') {
      if (i + 2 >= raw.size()) return std::nullopt;
      char e = raw[++i];
      switch (e) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        default: return std::nullopt;
      }
    } else {
      out += c;
    }
  }
  return out;
}

std::optional<std::int64_t> parse_int(const std::string& s) {
  std::int64_t v = 0;
  const char* b = s.data();
  if (!s.empty() && s[0] == '+') ++b;
  auto [p, ec] = std::from_chars(b, s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<double> parse_float(const std::string& s) {
  if (s.empty()) return std::nullopt;
  std::istringstream is(s);
  is.imbue(std::locale::classic());
  double v;
  is >> v;
  if (is.fail() || !is.eof() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::vector<std::string> split_array(const std::string& body) {
  std::vector<std::string> items;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < body.size(); ++i) {
    char c = body[i];
    if (quoted && c == '\\' && i + 1 < body.size()) {
      cur += c;
      cur += body[++i];
      continue;
    }
    if (c == '"') quoted = !quoted;
    if (c == ',' && !quoted) {
      items.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!trim(cur).empty()) items.push_back(trim(cur));
  return items;
}

Config::Value parse_value(const std::string& key, const std::string& raw, bool bare_strings) {
  if (raw.empty()) throw ConfigError(key, "missing value for key '" + key + "'");
  if (raw.front() == '"') {
    if (auto s = parse_quoted(raw)) return *s;
    throw ConfigError(key, "malformed string for key '" + key + "'");
  }
  if (raw.front() == '[') {
    if (raw.back() != ']') throw ConfigError(key, "unterminated array for key '" + key + "'");
    const auto items = split_array(raw.substr(1, raw.size() - 2));
    if (!items.empty() && items.front().front() == '"') {
      std::vector<std::string> out;
      for (const auto& it : items) {
        auto s = parse_quoted(it);
        if (!s) throw ConfigError(key, "mixed or malformed array for key '" + key + "'");
        out.push_back(*s);
      }
      return out;
    }
    std::vector<double> out;
    for (const auto& it : items) {
      auto v = parse_float(it);
      if (!v) throw ConfigError(key, "non-numeric array element '" + it + "' for key '" + key + "'");
      out.push_back(*v);
    }
    return out;
  }
  if (raw == "true") return true;
  if (raw == "false") return false;
  if (auto i = parse_int(raw)) return *i;
  if (auto d = parse_float(raw)) return *d;
  if (bare_strings) return raw;
  throw ConfigError(key, "invalid value '" + raw + "' for key '" + key + "'");
}

const char* type_name(const Config::Value& v) {
  switch (v.index()) {
    case 0: return "boolean";
    case 1: return "integer";
    case 2: return "number";
    case 3: return "string";
    case 4: return "number array";
    default: return "string array";
  }
}

[[noreturn]] void wrong_type(const std::string& key, const Config::Value& v, const char* want) {
  throw ConfigError(key, "key '" + key + "' must be " + want + ", got " + type_name(v));
}

void flatten_json(const nlohmann::json& j, const std::string& prefix, Config& cfg) {
  const std::string where = prefix.empty() ? "<root>" : prefix;
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
      if (!valid_key(key)) throw ConfigError(key, "invalid key '" + key + "'");
      flatten_json(it.value(), key, cfg);
    }
    return;
  }
  if (prefix.empty()) throw ConfigError(where, "JSON config must be an object");
  if (j.is_boolean()) {
    cfg.set(prefix, j.get<bool>());
  } else if (j.is_number_unsigned()) {
    const auto u = j.get<std::uint64_t>();
    if (u > static_cast<std::uint64_t>(INT64_MAX))
      cfg.set(prefix, std::to_string(u));
    else
      cfg.set(prefix, static_cast<std::int64_t>(u));
  } else if (j.is_number_integer()) {
    cfg.set(prefix, j.get<std::int64_t>());
  } else if (j.is_number_float()) {
    cfg.set(prefix, j.get<double>());
  } else if (j.is_string()) {
    cfg.set(prefix, j.get<std::string>());
  } else if (j.is_array()) {
    if (!j.empty() && j.front().is_string()) {
      std::vector<std::string> out;
      for (const auto& e : j) {
        if (!e.is_string()) throw ConfigError(prefix, "mixed array for key '" + prefix + "'");
        out.push_back(e.get<std::string>());
      }
      cfg.set(prefix, out);
    } else {
      std::vector<double> out;
      for (const auto& e : j) {
        if (!e.is_number()) throw ConfigError(prefix, "non-numeric array element for key '" + prefix + "'");
        out.push_back(e.get<double>());
      }
      cfg.set(prefix, out);
    }
  } else {
    throw ConfigError(prefix, "unsupported value for key '" + prefix + "'");
  }
}

nlohmann::ordered_json value_json(const Config::Value& v) {
  return std::visit([](const auto& x) { return nlohmann::ordered_json(x); }, v);
}

std::string value_text(const Config::Value& v) {
  struct {
    std::string operator()(bool b) const { return b ? "true" : "false"; }
    std::string operator()(std::int64_t i) const { return std::to_string(i); }
    std::string operator()(double d) const { return nlohmann::json(d).dump(); }
    std::string operator()(const std::string& s) const { return nlohmann::json(s).dump(); }
    std::string operator()(const std::vector<double>& a) const { return nlohmann::json(a).dump(); }
    std::string operator()(const std::vector<std::string>& a) const { return nlohmann::json(a).dump(); }
  } vis;
  return std::visit(vis, v);
}

}  // namespace

Config Config::parse(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line, table;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto c = comment_start(line); c != std::string::npos) line.resize(c);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        const std::string name = trim(line.substr(1));
        throw ConfigError(name.empty() ? "line " + std::to_string(lineno) : name,
                          "malformed table header on line " + std::to_string(lineno));
      }
      table = trim(line.substr(1, line.size() - 2));
      if (!valid_key(table)) throw ConfigError(table, "invalid table name '" + table + "'");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno), "expected 'key = value'");
    const std::string local = trim(line.substr(0, eq));
    const std::string key = table.empty() ? local : table + "." + local;
    if (!valid_key(local)) throw ConfigError(key, "invalid key '" + key + "'");
    if (cfg.has(key)) throw ConfigError(key, "duplicate key '" + key + "'");
    cfg.values_[key] = parse_value(key, trim(line.substr(eq + 1)), false);
  }
  return cfg;
}

Config Config::parse_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("<json>", std::string("malformed JSON: ") + e.what());
  }
  Config cfg;
  flatten_json(j, "", cfg);
  return cfg;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", "cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') return parse_json(text);
  return parse(text);
}

void Config::set_from_text(const std::string& key, const std::string& raw) {
  if (!valid_key(key)) throw ConfigError(key, "invalid key '" + key + "'");
  values_[key] = parse_value(key, trim(raw), true);
}

std::string Config::get_string(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(key, "missing required key '" + key + "'");
  if (auto s = std::get_if<std::string>(&it->second)) return *s;
  wrong_type(key, it->second, "a string");
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  return has(key) ? get_string(key) : fallback;
}

double Config::get_double(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(key, "missing required key '" + key + "'");
  if (auto d = std::get_if<double>(&it->second)) return *d;
  if (auto i = std::get_if<std::int64_t>(&it->second)) return static_cast<double>(*i);
  wrong_type(key, it->second, "a number");
}

double Config::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

std::int64_t Config::get_int(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(key, "missing required key '" + key + "'");
  if (auto i = std::get_if<std::int64_t>(&it->second)) return *i;
  if (auto d = std::get_if<double>(&it->second); d && *d == std::floor(*d) && std::abs(*d) < 9e15)
    return static_cast<std::int64_t>(*d);
  wrong_type(key, it->second, "an integer");
}

std::int64_t Config::get_int(const std::string& key, std::int64_t fallback) const {
  return has(key) ? get_int(key) : fallback;
}

std::uint64_t Config::get_uint64(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(key, "missing required key '" + key + "'");
  if (auto i = std::get_if<std::int64_t>(&it->second)) {
    if (*i < 0) throw ConfigError(key, "key '" + key + "' must be nonnegative");
    return static_cast<std::uint64_t>(*i);
  }
  if (auto s = std::get_if<std::string>(&it->second)) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s->data(), s->data() + s->size(), v);
    if (ec == std::errc() && p == s->data() + s->size() && !s->empty()) return v;
    throw ConfigError(key, "key '" + key + "' must be an unsigned 64-bit integer");
  }
  wrong_type(key, it->second, "an unsigned integer");
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (auto b = std::get_if<bool>(&it->second)) return *b;
  wrong_type(key, it->second, "a boolean");
}

std::vector<double> Config::get_doubles(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(key, "missing required key '" + key + "'");
  if (auto a = std::get_if<std::vector<double>>(&it->second)) return *a;
  if (auto d = std::get_if<double>(&it->second)) return {*d};
  if (auto i = std::get_if<std::int64_t>(&it->second)) return {static_cast<double>(*i)};
  wrong_type(key, it->second, "a number array");
}

void Config::require_known(const std::set<std::string>& allowed) const {
  for (const auto& [key, v] : values_) {
    bool ok = allowed.count(key) > 0;
    for (const auto& a : allowed) {
      if (ok) break;
      if (a.size() > 2 && a.compare(a.size() - 2, 2, ".*") == 0) {
        const std::string stem = a.substr(0, a.size() - 1);
        ok = key.compare(0, stem.size(), stem) == 0;
      }
    }
    if (!ok) throw ConfigError(key, "unknown key '" + key + "'");
  }
}

std::string Config::to_json() const {
  nlohmann::ordered_json root = nlohmann::ordered_json::object();
  for (const auto& [key, v] : values_) {
    nlohmann::ordered_json* node = &root;
    std::size_t start = 0;
    for (std::size_t dot; (dot = key.find('.', start)) != std::string::npos; start = dot + 1) {
      node = &(*node)[key.substr(start, dot - start)];
      if (!node->is_object()) *node = nlohmann::ordered_json::object();
    }
    (*node)[key.substr(start)] = value_json(v);
  }
  return root.dump(2);
}

std::string Config::to_text() const {
  std::map<std::string, std::vector<std::pair<std::string, std::string>>> tables;
  for (const auto& [key, v] : values_) {
    const auto dot = key.rfind('.');
    const std::string table = dot == std::string::npos ? "" : key.substr(0, dot);
    const std::string local = dot == std::string::npos ? key : key.substr(dot + 1);
    tables[table].emplace_back(local, value_text(v));
  }
  std::ostringstream out;
  bool first = true;
  for (const auto& [table, kv] : tables) {
    if (!table.empty()) out << (first ? "" : "\n") << "[" << table << "]\n";
    for (const auto& [k, v] : kv) out << k << " = " << v << "\n";
    first = false;
  }
  return out.str();
}

// ---------------------------------------------------------------- schema helpers

MixtureModel model_from_config(const Config& cfg, const std::string& key) {
  const std::string m = cfg.get_string(key);
  if (m == "gaussian") return MixtureModel::gaussian();
  if (m == "poisson") return MixtureModel::poisson();
  throw ConfigError(key, "unknown model '" + m + "' (expected gaussian or poisson)");
}

Prior prior_from_config(const Config& cfg, const std::string& prefix) {
  const std::string kk = prefix + ".kind";
  const std::string kind = cfg.get_string(kk);
  auto p = [&](const char* name) { return prefix + "." + name; };
  try {
    if (kind == "gaussian") return Prior::gaussian(cfg.get_double(p("mean"), 0.0), cfg.get_double(p("variance")));
    if (kind == "gamma") return Prior::gamma(cfg.get_double(p("shape")), cfg.get_double(p("rate")));
    if (kind == "exponential") return Prior::exponential(cfg.get_double(p("rate"), 1.0));
    if (kind == "uniform") return Prior::uniform(cfg.get_double(p("lo"), 0.0), cfg.get_double(p("hi")));
    if (kind == "point_mass") return Prior::point_mass(cfg.get_double(p("location")));
    if (kind == "discrete") {
      const auto at = cfg.get_doubles(p("atoms"));
      const auto w = cfg.has(p("weights")) ? cfg.get_doubles(p("weights")) : std::vector<double>(at.size(), 1.0 / at.size());
      if (at.size() != w.size()) throw ConfigError(p("weights"), "atoms and weights differ in length");
      std::vector<Atom> atoms;
      for (std::size_t i = 0; i < at.size(); ++i) atoms.push_back({at[i], w[i]});
      return Prior::discrete(std::move(atoms));
    }
  } catch (const InvalidArgument& e) {
    throw ConfigError(prefix, "invalid prior '" + prefix + "': " + e.what());
  }
  throw ConfigError(kk, "unknown prior kind '" + kind + "'");
}

void prior_to_config(const Prior& prior, Config& cfg, const std::string& prefix) {
  auto p = [&](const char* name) { return prefix + "." + name; };
  const auto& v = prior.variant();
  if (auto d = std::get_if<DiscretePrior>(&v)) {
    std::vector<double> at, w;
    for (const auto& a : d->atoms) {
      at.push_back(a.location);
      w.push_back(a.weight);
    }
    cfg.set(p("kind"), std::string("discrete"));
    cfg.set(p("atoms"), at);
    cfg.set(p("weights"), w);
  } else if (auto g = std::get_if<GaussianPrior>(&v)) {
    cfg.set(p("kind"), std::string("gaussian"));
    cfg.set(p("mean"), g->mean);
    cfg.set(p("variance"), g->variance);
  } else if (auto g = std::get_if<GammaPrior>(&v)) {
    cfg.set(p("kind"), std::string("gamma"));
    cfg.set(p("shape"), g->shape);
    cfg.set(p("rate"), g->rate);
  } else if (auto e = std::get_if<ExponentialPrior>(&v)) {
    cfg.set(p("kind"), std::string("exponential"));
    cfg.set(p("rate"), e->rate);
  } else if (auto u = std::get_if<UniformPrior>(&v)) {
    cfg.set(p("kind"), std::string("uniform"));
    cfg.set(p("lo"), u->lo);
    cfg.set(p("hi"), u->hi);
  } else {
    throw InvalidArgument("tilted priors have no config representation");
  }
}

std::string prior_to_json(const Prior& prior) {
  Config c;
  prior_to_config(prior, c, "prior");
  return nlohmann::json::parse(c.to_json())["prior"].dump();
}

EstimatorSpec estimator_from_config(const Config& cfg, const std::optional<Prior>& fallback_prior,
                                    const std::string& prefix) {
  EstimatorSpec spec;
  spec.kind = parse_estimator_kind(cfg.get_string(prefix + ".kind", "robbins"));
  spec.npmle.grid_points = static_cast<int>(cfg.get_int(prefix + ".grid_points", 400));
  spec.npmle.tol = cfg.get_double(prefix + ".tol", spec.npmle.tol);
  spec.npmle.max_iter = static_cast<int>(cfg.get_int(prefix + ".max_iter", spec.npmle.max_iter));
  if (spec.npmle.grid_points < 1) throw ConfigError(prefix + ".grid_points", "grid_points must be positive");
  if (spec.kind == EstimatorKind::BayesOracle) {
    if (cfg.has(prefix + ".prior.kind"))
      spec.prior = prior_from_config(cfg, prefix + ".prior");
    else if (fallback_prior)
      spec.prior = *fallback_prior;
    else
      throw ConfigError(prefix + ".prior", "the oracle estimator needs a prior");
  }
  return spec;
}

}  // namespace eblab
