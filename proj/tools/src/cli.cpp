#include "cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "eblab/config.hpp"
#include "eblab/errors.hpp"
#include "eblab/lowerbound.hpp"
#include "eblab/regret.hpp"

extern char** environ;

namespace eblab::cli {

namespace {

using json = nlohmann::ordered_json;

constexpr const char* kCommands[] = {"simulate-regret", "verify-orthogonality", "lowerbound-audit",
                                     "robbins-certificate", "scaling"};

struct Context {
  Config cfg;
  std::string command;
  std::uint64_t seed = 0;
  int threads = 0;
  std::filesystem::path out_dir;
  std::ostream* out = nullptr;
};

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class CsvWriter {
 public:
  CsvWriter(const Context& ctx, const std::string& kind, const std::vector<std::string>& columns) {
    json cfg = json::parse(ctx.cfg.to_json());
    s_ << "# eblab " << kind << " csv schema v" << kCsvSchemaVersion << "\n";
    s_ << "# config " << cfg.dump() << "\n";
    for (std::size_t i = 0; i < columns.size(); ++i) s_ << (i ? "," : "") << columns[i];
    s_ << "\n";
  }
  template <typename... T>
  void row(const T&... cells) {
    bool first = true;
    ((s_ << (first ? "" : ",") << cell(cells), first = false), ...);
    s_ << "\n";
  }
  std::string str() const { return s_.str(); }

 private:
  static std::string cell(double v) { return num(v); }
  static std::string cell(const std::string& v) { return v; }
  static std::string cell(const char* v) { return v; }
  template <typename I, typename = std::enable_if_t<std::is_integral_v<I>>>
  static std::string cell(I v) { return std::to_string(v); }
  std::ostringstream s_;
};

void write_file(const Context& ctx, const std::string& name, const std::string& content) {
  std::filesystem::create_directories(ctx.out_dir);
  const auto path = ctx.out_dir / name;
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << content;
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

json summary_header(const Context& ctx) {
  json j;
  j["schema"] = std::string("eblab/") + ctx.command + "/v" + kCsvSchemaVersion;
  j["command"] = ctx.command;
  j["seed"] = std::to_string(ctx.seed);
  j["config"] = json::parse(ctx.cfg.to_json());
  return j;
}

McOptions mc_options(const Context& ctx, RegretMode default_mode) {
  McOptions o;
  o.replicates = static_cast<int>(ctx.cfg.get_int("replicates", 200));
  if (o.replicates < 1) throw ConfigError("replicates", "replicates must be positive");
  o.seed = ctx.seed;
  o.threads = ctx.threads;
  const std::string mode = ctx.cfg.get_string("mode", default_mode == RegretMode::Direct ? "direct" : "variance-reduced");
  if (mode == "direct")
    o.mode = RegretMode::Direct;
  else if (mode == "variance-reduced")
    o.mode = RegretMode::VarianceReduced;
  else
    throw ConfigError("mode", "mode must be 'direct' or 'variance-reduced'");
  return o;
}

std::size_t size_key(const Config& cfg, const std::string& key) {
  const auto v = cfg.get_int(key);
  if (v < 1) throw ConfigError(key, "key '" + key + "' must be a positive integer");
  return static_cast<std::size_t>(v);
}

std::vector<std::size_t> n_grid(const Config& cfg) {
  std::vector<std::size_t> out;
  for (double v : cfg.get_doubles("n_grid")) {
    if (!(v >= 1.0) || v != std::floor(v)) throw ConfigError("n_grid", "n_grid entries must be positive integers");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

// ---------------------------------------------------------------- commands

int simulate_regret(Context& ctx) {
  ctx.cfg.require_known({"command", "seed", "threads", "output.dir", "model", "prior.*", "estimator.*", "n",
                         "replicates", "mode", "functional", "theta"});
  parse_estimator_kind(ctx.cfg.get_string("estimator.kind", "robbins"));
  const MixtureModel model = model_from_config(ctx.cfg);
  const std::string functional = ctx.cfg.get_string("functional", "total");
  McOptions opt = mc_options(ctx, RegretMode::Direct);
  RegretReport rep;
  std::string estimator_name;
  if (functional == "compound") {
    std::optional<ThetaSource> source;
    std::size_t n;
    if (ctx.cfg.has("theta")) {
      auto theta = ctx.cfg.get_doubles("theta");
      n = ctx.cfg.has("n") ? size_key(ctx.cfg, "n") : theta.size();
      if (n != theta.size()) throw ConfigError("n", "n differs from the length of theta");
      source = ThetaSource::fixed(std::move(theta));
    } else {
      source = ThetaSource::iid(prior_from_config(ctx.cfg));
      n = size_key(ctx.cfg, "n");
    }
    const EstimatorSpec est = estimator_from_config(ctx.cfg, std::nullopt);
    estimator_name = to_string(est.kind);
    rep = compound_regret_mc(model, *source, est, n, opt);
  } else {
    const Prior prior = prior_from_config(ctx.cfg);
    const EstimatorSpec est = estimator_from_config(ctx.cfg, prior);
    estimator_name = to_string(est.kind);
    const std::size_t n = size_key(ctx.cfg, "n");
    if (functional == "total")
      rep = total_regret_mc(model, prior, est, n, opt);
    else if (functional == "individual")
      rep = individual_regret_mc(model, prior, est, n, opt);
    else
      throw ConfigError("functional", "functional must be 'total', 'individual' or 'compound'");
  }

  CsvWriter csv(ctx, "regret", {"n", "functional", "mode", "estimator", "estimate", "std_error", "replicates", "seed"});
  csv.row(rep.n, to_string(rep.functional), to_string(rep.mode), estimator_name, rep.estimate, rep.std_error,
          rep.replicates, std::to_string(rep.seed));
  write_file(ctx, "regret.csv", csv.str());

  json j = summary_header(ctx);
  j["result"] = {{"n", rep.n},
                 {"functional", to_string(rep.functional)},
                 {"mode", to_string(rep.mode)},
                 {"estimator", estimator_name},
                 {"estimate", rep.estimate},
                 {"std_error", rep.std_error},
                 {"replicates", rep.replicates}};
  j["samples"] = rep.samples;
  write_file(ctx, "regret.json", j.dump(2) + "\n");
  *ctx.out << j["result"].dump() << "\n";
  return kOk;
}

int verify_orthogonality(Context& ctx) {
  ctx.cfg.require_known({"command", "seed", "threads", "output.dir", "model", "s", "alpha", "beta", "k_max",
                         "tolerance", "band_tolerance"});
  const MixtureModel model = model_from_config(ctx.cfg);
  const double tol = ctx.cfg.get_double("tolerance", 1e-7);
  const double band_tol = ctx.cfg.get_double("band_tolerance", 1e-9);
  GramOptions gopt;
  gopt.threads = ctx.threads;
  OrthogonalityReport rep;
  if (model.is_poisson()) {
    rep = poisson_orthogonality(ctx.cfg.get_double("alpha"), ctx.cfg.get_double("beta"),
                                static_cast<int>(ctx.cfg.get_int("k_max", 8)), gopt);
  } else {
    rep = gaussian_orthogonality(ctx.cfg.get_double("s", 1.0), static_cast<int>(ctx.cfg.get_int("k_max", 12)), gopt);
  }
  const bool pass = rep.max_k_deviation <= tol && rep.max_k1_deviation <= tol && rep.max_band_deviation <= band_tol;

  CsvWriter csv(ctx, "orthogonality", {"gram", "k", "j", "measured", "expected", "deviation"});
  for (const auto& e : rep.entries) csv.row(e.gram, e.k, e.j, e.measured, e.expected, e.deviation);
  write_file(ctx, "orthogonality.csv", csv.str());

  json j = summary_header(ctx);
  j["result"] = {{"max_k_deviation", rep.max_k_deviation},
                 {"max_k1_deviation", rep.max_k1_deviation},
                 {"max_band_deviation", rep.max_band_deviation},
                 {"tolerance", tol},
                 {"band_tolerance", band_tol},
                 {"pass", pass}};
  write_file(ctx, "orthogonality.json", j.dump(2) + "\n");
  *ctx.out << j["result"].dump() << "\n";
  return pass ? kOk : kAuditFailure;
}

int lowerbound_audit(Context& ctx) {
  ctx.cfg.require_known({"command", "seed", "threads", "output.dir", "model", "s", "alpha", "beta", "m", "n",
                         "variant", "pairs", "truncation_level"});
  const MixtureModel model = model_from_config(ctx.cfg);
  const int m = static_cast<int>(ctx.cfg.get_int("m"));
  if (m < 0) throw ConfigError("m", "m must be nonnegative");
  const double n = ctx.cfg.get_double("n");
  if (!(n >= 1.0)) throw ConfigError("n", "n must be at least 1");
  const std::string variant = ctx.cfg.get_string("variant", "regression");
  GramOptions gopt;
  gopt.threads = ctx.threads;
  AuditOptions aopt;
  aopt.pairs = static_cast<int>(ctx.cfg.get_int("pairs", 64));
  aopt.seed = ctx.seed;
  aopt.threads = ctx.threads;
  if (ctx.cfg.has("truncation_level")) aopt.truncation_level = ctx.cfg.get_double("truncation_level");

  std::optional<PerturbationFamily> family;
  if (variant == "regression") {
    family = model.is_poisson() ? poisson_family(ctx.cfg.get_double("alpha"), ctx.cfg.get_double("beta"), m, gopt)
                                : gaussian_family(ctx.cfg.get_double("s", 1.0), m, gopt);
  } else if (variant == "hellinger") {
    if (model.is_poisson()) {
      // Laguerre functions are not centered under the Gamma prior; center explicitly.
      auto base = poisson_density_family(ctx.cfg.get_double("alpha"), ctx.cfg.get_double("beta"),
                                         spread_indices(m), gopt);
      family = centered(base, gopt);
    } else {
      std::vector<int> odd;
      for (int i = 0; i < m; ++i) odd.push_back(2 * i + 1);
      family = gaussian_density_family(ctx.cfg.get_double("s", 1.0), odd, gopt);
    }
  } else {
    throw ConfigError("variant", "variant must be 'regression' or 'hellinger'");
  }
  const AssouadFamily af(*family, n, gopt);
  const AuditReport rep = variant == "regression" ? audit(af, n, aopt) : hellinger_audit(af, n, aopt);

  CsvWriter csv(ctx, "audit", {"name", "measured", "required", "relation", "pass"});
  for (const auto& e : rep.entries)
    csv.row(e.name, e.measured, e.required ? num(*e.required) : std::string(), e.relation, e.pass ? "true" : "false");
  write_file(ctx, "audit.csv", csv.str());

  json j = summary_header(ctx);
  j["family"] = family->label;
  j["all_pass"] = rep.all_pass();
  j["report"] = json::parse(rep.to_json());
  write_file(ctx, "audit.json", j.dump(2) + "\n");
  *ctx.out << json{{"all_pass", rep.all_pass()},
                   {"delta", af.delta()},
                   {"predicted_lower_bound_up_to_universal_constant",
                    rep.value("predicted_lower_bound_up_to_universal_constant")}}
                  .dump()
           << "\n";
  return rep.all_pass() ? kOk : kAuditFailure;
}

int certificate(Context& ctx) {
  ctx.cfg.require_known({"command", "seed", "threads", "output.dir", "prior.*", "n", "n_grid", "compare_mc",
                         "replicates", "mode"});
  const Prior prior = prior_from_config(ctx.cfg);
  std::vector<std::size_t> ns = ctx.cfg.has("n_grid") ? n_grid(ctx.cfg) : std::vector<std::size_t>{size_key(ctx.cfg, "n")};
  const bool compare = ctx.cfg.get_bool("compare_mc", false);
  const McOptions opt = mc_options(ctx, RegretMode::VarianceReduced);

  std::vector<std::string> cols{"n", "h", "y0", "I0", "sumI1", "sumI2", "tail", "constant", "total"};
  if (compare) cols.insert(cols.end(), {"mc_estimate", "mc_std_error", "dominates"});
  CsvWriter csv(ctx, "certificate", cols);
  json rows = json::array();
  bool all_dominate = true;
  for (std::size_t n : ns) {
    const Certificate c = robbins_certificate(prior, n);
    json r{{"n", n}, {"h", c.h}, {"y0", c.y0}, {"I0", c.I0}, {"sumI1", c.sumI1}, {"sumI2", c.sumI2},
           {"tail", c.tail}, {"constant", c.constant}, {"total", c.total},
           {"max_posterior_mean", c.max_posterior_mean}};
    if (compare) {
      McOptions o = opt;
      o.seed = split_seed(ctx.seed, n);
      const RegretReport mc = total_regret_mc(MixtureModel::poisson(), prior, EstimatorSpec::robbins(), n, o);
      const bool dom = c.total >= mc.estimate + 3.0 * mc.std_error;
      all_dominate = all_dominate && dom;
      csv.row(n, c.h, c.y0, c.I0, c.sumI1, c.sumI2, c.tail, c.constant, c.total, mc.estimate, mc.std_error,
              dom ? "true" : "false");
      r["mc_estimate"] = mc.estimate;
      r["mc_std_error"] = mc.std_error;
      r["dominates"] = dom;
    } else {
      csv.row(n, c.h, c.y0, c.I0, c.sumI1, c.sumI2, c.tail, c.constant, c.total);
    }
    rows.push_back(r);
  }
  write_file(ctx, "certificate.csv", csv.str());
  json j = summary_header(ctx);
  j["rows"] = rows;
  if (compare) j["all_dominate"] = all_dominate;
  write_file(ctx, "certificate.json", j.dump(2) + "\n");
  *ctx.out << rows.dump() << "\n";
  return all_dominate ? kOk : kAuditFailure;
}

int scaling(Context& ctx) {
  ctx.cfg.require_known({"command", "seed", "threads", "output.dir", "model", "prior.*", "estimator.*", "n_grid",
                         "replicates", "rate", "mode"});
  parse_estimator_kind(ctx.cfg.get_string("estimator.kind", "robbins"));
  const MixtureModel model = ctx.cfg.has("model") ? model_from_config(ctx.cfg) : MixtureModel::poisson();
  const Prior prior = prior_from_config(ctx.cfg);
  const EstimatorSpec est = estimator_from_config(ctx.cfg, prior);
  Rate rate;
  try {
    rate = parse_rate(ctx.cfg.get_string("rate", "log-over-loglog-squared"));
  } catch (const InvalidArgument& e) {
    throw ConfigError("rate", e.what());
  }
  const McOptions opt = mc_options(ctx, RegretMode::VarianceReduced);
  const auto rows = scaling_experiment(model, prior, est, n_grid(ctx.cfg), rate, opt);

  CsvWriter csv(ctx, "scaling", {"n", "regret", "std_error", "rate", "ratio", "seed"});
  json jr = json::array();
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& r : rows) {
    csv.row(r.n, r.regret, r.std_error, r.rate, r.ratio, std::to_string(r.seed));
    jr.push_back({{"n", r.n}, {"regret", r.regret}, {"std_error", r.std_error}, {"rate", r.rate}, {"ratio", r.ratio},
                  {"seed", std::to_string(r.seed)}});
    lo = std::min(lo, r.ratio);
    hi = std::max(hi, r.ratio);
  }
  write_file(ctx, "scaling.csv", csv.str());
  json j = summary_header(ctx);
  j["estimator"] = to_string(est.kind);
  j["rate"] = to_string(rate);
  j["rows"] = jr;
  j["ratio_spread"] = rows.empty() || lo <= 0.0 ? 0.0 : hi / lo;
  write_file(ctx, "scaling.json", j.dump(2) + "\n");
  *ctx.out << jr.dump() << "\n";
  return kOk;
}

// EBLAB_SET_PRIOR__HI=3 sets prior.hi = 3.
void apply_env_overrides(Config& cfg) {
  const std::string prefix = "EBLAB_SET_";
  for (char** e = environ; e && *e; ++e) {
    std::string entry(*e);
    if (entry.compare(0, prefix.size(), prefix) != 0) continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    std::string key = entry.substr(prefix.size(), eq - prefix.size());
    for (std::size_t p; (p = key.find("__")) != std::string::npos;) key.replace(p, 2, ".");
    for (char& c : key) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    cfg.set_from_text(key, entry.substr(eq + 1));
  }
}

void report_error(std::ostream& err, const char* kind, int code, const std::string& message,
                  const std::string& key = {}) {
  json j{{"error", kind}, {"exit_code", code}, {"message", message}};
  if (!key.empty()) j["key"] = key;
  err << j.dump() << "\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Empirical-Bayes regret simulation, certificates and lower-bound audits", "eblab"};
  std::string command, config_path, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  bool use_stdin = false;
  std::vector<std::string> sets;
  app.add_option("command", command, "simulate-regret | verify-orthogonality | lowerbound-audit | "
                                     "robbins-certificate | scaling");
  app.add_option("--config", config_path, "Config file (key = value with [tables], or JSON); '-' reads JSON from stdin")
      ->envname("EBLAB_CONFIG");
  app.add_flag("--stdin", use_stdin, "Read a JSON config from stdin");
  app.add_option("--seed", seed, "Master seed (required unless set in the config)")->envname("EBLAB_SEED");
  app.add_option("--out", out_dir, "Output directory for CSV and JSON artifacts")->envname("EBLAB_OUT");
  app.add_option("--threads", threads, "Worker threads; 0 means all hardware threads")->envname("EBLAB_THREADS");
  app.add_option("--set", sets, "Override a config key: key=value (repeatable)");

  std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    report_error(err, "usage", kUsage, e.what());
    return kUsage;
  }

  try {
    Context ctx;
    ctx.out = &out;
    if (use_stdin || config_path == "-") {
      std::stringstream ss;
      ss << in.rdbuf();
      ctx.cfg = Config::parse_json(ss.str());
    } else if (!config_path.empty()) {
      ctx.cfg = Config::load(config_path);
    }
    apply_env_overrides(ctx.cfg);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError(s, "--set expects key=value");
      ctx.cfg.set_from_text(s.substr(0, eq), s.substr(eq + 1));
    }

    if (!command.empty()) ctx.cfg.set("command", command);
    ctx.command = ctx.cfg.get_string("command");
    if (std::find(std::begin(kCommands), std::end(kCommands), ctx.command) == std::end(kCommands))
      throw ConfigError("command", "unknown command '" + ctx.command + "'");
    if (seed) ctx.cfg.set("seed", std::to_string(*seed));
    if (!ctx.cfg.has("seed")) throw ConfigError("seed", "a seed is required (--seed, EBLAB_SEED or 'seed' key)");
    ctx.seed = ctx.cfg.get_uint64("seed");
    ctx.cfg.set("seed", std::to_string(ctx.seed));
    if (threads) ctx.cfg.set("threads", static_cast<std::int64_t>(*threads));
    ctx.threads = static_cast<int>(ctx.cfg.get_int("threads", 0));
    if (ctx.threads < 0) throw ConfigError("threads", "threads must be nonnegative");
    if (!out_dir.empty()) ctx.cfg.set("output.dir", out_dir);
    ctx.out_dir = ctx.cfg.get_string("output.dir", ".");

    if (ctx.command == "simulate-regret") return simulate_regret(ctx);
    if (ctx.command == "verify-orthogonality") return verify_orthogonality(ctx);
    if (ctx.command == "lowerbound-audit") return lowerbound_audit(ctx);
    if (ctx.command == "robbins-certificate") return certificate(ctx);
    return scaling(ctx);
  } catch (const ConfigError& e) {
    report_error(err, "config", kConfigError, e.what(), e.key());
    return kConfigError;
  } catch (const UnknownEstimator& e) {
    report_error(err, "unknown-estimator", kUnknownEstimator, e.what(), "estimator.kind");
    return kUnknownEstimator;
  } catch (const NumericError& e) {
    report_error(err, "numeric", kNumericFailure, e.what());
    return kNumericFailure;
  } catch (const InvalidArgument& e) {
    report_error(err, "config", kConfigError, e.what());
    return kConfigError;
  } catch (const std::exception& e) {
    report_error(err, "internal", kUsage, e.what());
    return kUsage;
  }
}

int run(int argc, char** argv, std::istream& in, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args(argv, argv + argc);
  return run(args, in, out, err);
}

}  // namespace eblab::cli
