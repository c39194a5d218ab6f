#include "eblab/regret.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "eblab/errors.hpp"
#include "eblab/parallel.hpp"
#include "eblab/specfun.hpp"

namespace eblab {

namespace {

void summarize(RegretReport& r) {
  const double R = static_cast<double>(r.samples.size());
  long double s = 0.0L;
  for (double v : r.samples) s += v;
  const double mean = static_cast<double>(s / R);
  long double ss = 0.0L;
  for (double v : r.samples) ss += (v - mean) * (v - mean);
  r.estimate = mean;
  r.std_error = R > 1 ? std::sqrt(static_cast<double>(ss / (R - 1)) / R) : 0.0;
  r.replicates = static_cast<int>(R);
}

void check_options(std::size_t n, const McOptions& opt) {
  if (n < 1) throw InvalidArgument("sample size must be at least 1");
  if (opt.replicates < 1) throw InvalidArgument("at least one replicate is required");
}

// Bayes rule under the true prior, memoized per distinct count for the Poisson channel.
class OracleRule {
 public:
  OracleRule(const MixtureModel& model, const Prior& prior) : model_(model), prior_(prior) {}
  double operator()(double y) {
    if (!model_.is_poisson()) return bayes_estimate(model_, prior_, y);
    auto [it, fresh] = memo_.try_emplace(y, 0.0);
    if (fresh) it->second = bayes_estimate(model_, prior_, y);
    return it->second;
  }

 private:
  const MixtureModel& model_;
  const Prior& prior_;
  std::map<double, double> memo_;
};

std::vector<double> draw_observations(const MixtureModel& model, const std::vector<double>& theta, Rng& rng) {
  std::vector<double> y(theta.size());
  for (std::size_t j = 0; j < theta.size(); ++j) y[j] = model.draw(theta[j], rng);
  return y;
}

RegretReport make_report(RegretFunctional f, RegretMode mode, std::size_t n, const McOptions& opt) {
  RegretReport r;
  r.functional = f;
  r.mode = mode;
  r.n = n;
  r.seed = opt.seed;
  r.samples.assign(opt.replicates, 0.0);
  return r;
}

}  // namespace

std::string to_string(RegretFunctional f) {
  switch (f) {
    case RegretFunctional::TotalEB: return "total-eb";
    case RegretFunctional::IndividualEB: return "individual-eb";
    case RegretFunctional::CompoundSeparable: return "compound-separable";
    case RegretFunctional::CompoundPermInvProxy: return "compound-perminv-proxy";
  }
  return "unknown";
}

std::string to_string(RegretMode m) { return m == RegretMode::Direct ? "direct" : "variance-reduced"; }

RegretReport total_regret_mc(const MixtureModel& model, const Prior& prior, const EstimatorSpec& est, std::size_t n,
                             const McOptions& opt) {
  check_options(n, opt);
  validate_model_prior(model, prior);
  RegretReport rep = make_report(RegretFunctional::TotalEB, opt.mode, n, opt);
  const double risk = opt.mode == RegretMode::Direct ? mmse(model, prior) : 0.0;
  parallel_for(opt.replicates, opt.threads, [&](std::size_t r) {
    Rng rng = make_rng(split_seed(opt.seed, r));
    const std::vector<double> theta = sample_theta(prior, n, rng);
    const std::vector<double> y = draw_observations(model, theta, rng);
    const std::vector<double> est_v = estimate_total(est, model, y, theta);
    long double s = 0.0L;
    if (opt.mode == RegretMode::Direct) {
      for (std::size_t j = 0; j < n; ++j) s += (est_v[j] - theta[j]) * (est_v[j] - theta[j]);
      s -= static_cast<long double>(n) * risk;
    } else {
      OracleRule oracle(model, prior);
      for (std::size_t j = 0; j < n; ++j) {
        const double d = est_v[j] - oracle(y[j]);
        s += d * d;
      }
    }
    rep.samples[r] = static_cast<double>(s);
  });
  summarize(rep);
  return rep;
}

RegretReport individual_regret_mc(const MixtureModel& model, const Prior& prior, const EstimatorSpec& est,
                                  std::size_t n, const McOptions& opt) {
  check_options(n, opt);
  validate_model_prior(model, prior);
  RegretReport rep = make_report(RegretFunctional::IndividualEB, opt.mode, n, opt);
  const double risk = opt.mode == RegretMode::Direct ? mmse(model, prior) : 0.0;
  parallel_for(opt.replicates, opt.threads, [&](std::size_t r) {
    Rng rng = make_rng(split_seed(opt.seed, r));
    const std::vector<double> theta = sample_theta(prior, n, rng);
    const std::vector<double> y = draw_observations(model, theta, rng);
    std::span<const double> train(y.data(), n - 1);
    std::span<const double> train_theta(theta.data(), n - 1);
    const FittedEstimator e = FittedEstimator::fit(est, model, train, train_theta);
    const double pred = e.predict(y[n - 1]);
    if (opt.mode == RegretMode::Direct) {
      rep.samples[r] = (pred - theta[n - 1]) * (pred - theta[n - 1]) - risk;
    } else {
      const double d = pred - bayes_estimate(model, prior, y[n - 1]);
      rep.samples[r] = d * d;
    }
  });
  summarize(rep);
  return rep;
}

ThetaSource ThetaSource::fixed(std::vector<double> theta) {
  if (theta.empty()) throw InvalidArgument("fixed parameter vector is empty");
  ThetaSource s;
  s.theta_ = std::move(theta);
  return s;
}

ThetaSource ThetaSource::iid(Prior prior) {
  ThetaSource s;
  s.prior_ = std::move(prior);
  return s;
}

std::vector<double> ThetaSource::draw(std::size_t n, Rng& rng) const {
  if (prior_) return sample_theta(*prior_, n, rng);
  if (n != theta_.size()) throw InvalidArgument("fixed parameter vector has the wrong length");
  return theta_;
}

RegretReport compound_regret_mc(const MixtureModel& model, const ThetaSource& source, const EstimatorSpec& est,
                                std::size_t n, const McOptions& opt) {
  check_options(n, opt);
  if (opt.mode != RegretMode::Direct)
    throw InvalidArgument("compound regret has no variance-reduced form; use the direct mode");
  RegretReport rep = make_report(RegretFunctional::CompoundSeparable, RegretMode::Direct, n, opt);
  // A fixed parameter vector has one empirical distribution; compute its mmse once.
  std::optional<double> fixed_risk;
  if (source.is_fixed()) {
    Rng dummy = make_rng(0);
    const auto theta = source.draw(n, dummy);
    fixed_risk = mmse(model, empirical_distribution(theta));
  }
  parallel_for(opt.replicates, opt.threads, [&](std::size_t r) {
    Rng rng = make_rng(split_seed(opt.seed, r));
    const std::vector<double> theta = source.draw(n, rng);
    const std::vector<double> y = draw_observations(model, theta, rng);
    const std::vector<double> est_v = estimate_total(est, model, y, theta);
    const double risk = fixed_risk ? *fixed_risk : mmse(model, empirical_distribution(theta));
    long double s = 0.0L;
    for (std::size_t j = 0; j < n; ++j) s += (est_v[j] - theta[j]) * (est_v[j] - theta[j]);
    rep.samples[r] = static_cast<double>(s - static_cast<long double>(n) * risk);
  });
  summarize(rep);
  return rep;
}

PairedDifference paired_difference(const RegretReport& a, const RegretReport& b) {
  if (a.samples.size() != b.samples.size() || a.seed != b.seed)
    throw InvalidArgument("paired difference needs reports from the same seeds");
  RegretReport d;
  d.samples.resize(a.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) d.samples[i] = a.samples[i] - b.samples[i];
  summarize(d);
  return {d.estimate, d.std_error};
}

MeanEstimate expected_empirical_mmse(const MixtureModel& model, const Prior& prior, std::size_t n,
                                     const McOptions& opt) {
  check_options(n, opt);
  RegretReport rep = make_report(RegretFunctional::CompoundSeparable, RegretMode::Direct, n, opt);
  parallel_for(opt.replicates, opt.threads, [&](std::size_t r) {
    Rng rng = make_rng(split_seed(opt.seed, r));
    const std::vector<double> theta = sample_theta(prior, n, rng);
    rep.samples[r] = mmse(model, empirical_distribution(theta));
  });
  summarize(rep);
  return {rep.estimate, rep.std_error};
}

// ---------------------------------------------------------------- binomial moments

namespace {

// Sums g(k) * pmf(k) over k >= 1 for B ~ Bin(n, p), walking outward from the mode
// until the pmf is negligible.
template <typename G>
double binomial_sum(long n, double p, G&& g) {
  if (n < 1) throw InvalidArgument("binomial size must be at least 1");
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("probability must lie in [0, 1]");
  if (p == 0.0) return 0.0;
  if (p == 1.0) return g(n);
  const double lp = std::log(p), lq = std::log1p(-p);
  auto log_pmf = [&](long k) { return log_binomial(n, k) + k * lp + (n - k) * lq; };
  const long mode = std::clamp<long>(static_cast<long>(std::floor((n + 1) * p)), 1, n);
  const double lmode = log_pmf(mode);
  long double s = 0.0L;
  for (long k = mode; k <= n; ++k) {
    const double lw = log_pmf(k);
    s += g(k) * std::exp(lw);
    if (lw < lmode - 45.0) break;
  }
  for (long k = mode - 1; k >= 1; --k) {
    const double lw = log_pmf(k);
    s += g(k) * std::exp(lw);
    if (lw < lmode - 45.0) break;
  }
  return static_cast<double>(s);
}

}  // namespace

double v1(long n, double p) {
  return binomial_sum(n, p, [](long k) { return 1.0 / k; });
}

double v2(long n, double p) {
  const double np = n * p;
  return binomial_sum(n, p, [np](long k) { return (k - np) * (k - np) / k; });
}

// ---------------------------------------------------------------- Robbins certificate

namespace {

// log of h^y e^{-h} / y!, the largest Poisson pmf over theta in [0, h] once y >= h.
double log_poisson_envelope(double h, long y) {
  if (h == 0.0) return y == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
  return y * std::log(h) - h - log_factorial(y);
}

}  // namespace

long tail_cutoff(const PriorClass& cls, double n) {
  if (!(n >= 1.0)) throw InvalidArgument("sample size must be at least 1");
  const double target = -std::log(n);
  if (cls.kind == PriorClass::Kind::Compact) {
    if (!(cls.h >= 0.0) || !std::isfinite(cls.h)) throw InvalidArgument("support bound must be finite and >= 0");
    for (long y = static_cast<long>(std::ceil(2.0 * cls.h));; ++y)
      if (std::log(2.0) + log_poisson_envelope(cls.h, y) <= target) return y;
  }
  if (!(cls.a > 0.0) || !(cls.b > 0.0)) throw InvalidArgument("subexponential class needs a, b > 0");
  const double lb = std::log1p(cls.b);
  auto log_tail = [&](long y) { return std::log(cls.a) - y * lb + lb - std::log(cls.b); };
  long y = std::max(0L, static_cast<long>(std::floor((std::log(cls.a) + lb - std::log(cls.b) - target) / lb)) - 1);
  while (log_tail(y) > target) ++y;
  while (y > 0 && log_tail(y - 1) <= target) --y;
  return y;
}

Certificate robbins_certificate(const Prior& prior, std::size_t n) {
  if (n < 1) throw InvalidArgument("sample size must be at least 1");
  if (prior.lower_support() < 0.0) throw InvalidArgument("Poisson priors live on [0, inf)");
  const double h = prior.upper_support();
  if (!std::isfinite(h)) throw InvalidArgument("the Robbins certificate needs a compactly supported prior");
  const MixtureModel model = MixtureModel::poisson();
  Certificate c;
  c.h = h;
  c.n = n;
  c.y0 = tail_cutoff(PriorClass::compact(h), static_cast<double>(n));
  const double nn = static_cast<double>(n);
  const long N = static_cast<long>(n);
  if (2.0 * std::exp(log_poisson_envelope(h, c.y0)) > 1.0 / nn)
    throw NumericError("tail certification failure: envelope above 1/n at the cutoff");

  std::vector<double> f(c.y0 + 2);
  for (long y = 0; y <= c.y0 + 1; ++y) f[y] = mixture_density(model, prior, static_cast<double>(y));

  for (long y = 0; y <= c.y0; ++y)
    if (f[y] > 0.0) c.max_posterior_mean = std::max(c.max_posterior_mean, (y + 1.0) * f[y + 1] / f[y]);

  if (f[1] > 0.0 && f[0] > 0.0) {
    const double f0 = f[0], f1 = f[1];
    const double cc = f1 / ((1.0 - f0) * f0);
    c.I0 = nn * f1 / (1.0 - f0) * v1(N, f0) + cc * cc * v2(N, f0);
  }
  long double s1 = 0.0L, s2 = 0.0L;
  for (long y = 1; y <= c.y0; ++y) {
    if (f[y] <= 0.0 || f[y + 1] <= 0.0) continue;
    const double yp = y + 1.0;
    s1 += yp * yp * nn * f[y + 1] * v1(N, f[y]);
    const double ratio = yp * f[y + 1] / f[y];
    s2 += ratio * ratio * v2(N, f[y]);
  }
  c.sumI1 = static_cast<double>(s1);
  c.sumI2 = static_cast<double>(s2);

  // Beyond y0 the envelope satisfies n fbar(y) <= 1/2 and decays at least geometrically with ratio 1/2.
  long double tail = 0.0L;
  for (long y = c.y0 + 1;; ++y) {
    const double fb = std::exp(log_poisson_envelope(h, y));
    const double term = 2.0 * (y + 1.0) * h * nn * nn * fb * fb + 5.0 * h * h * nn * fb;
    tail += term;
    if (term == 0.0 || term < 1e-18 * static_cast<double>(tail)) {
      tail += term;  // geometric remainder
      break;
    }
  }
  c.tail = static_cast<double>(tail);
  c.total = c.constant * (c.I0 + c.sumI1 + c.sumI2) + c.tail;
  return c;
}

// ---------------------------------------------------------------- scaling

std::string to_string(Rate r) {
  switch (r) {
    case Rate::LogOverLogLogSquared: return "log-over-loglog-squared";
    case Rate::LogCubed: return "log-cubed";
    case Rate::LogSquared: return "log-squared";
  }
  return "unknown";
}

Rate parse_rate(const std::string& name) {
  if (name == "log-over-loglog-squared") return Rate::LogOverLogLogSquared;
  if (name == "log-cubed") return Rate::LogCubed;
  if (name == "log-squared") return Rate::LogSquared;
  throw InvalidArgument("unknown rate: " + name);
}

double rate_value(Rate r, double n) {
  if (!(n > std::exp(1.0))) throw InvalidArgument("rates are defined for n > e");
  const double l = std::log(n);
  switch (r) {
    case Rate::LogOverLogLogSquared: {
      const double q = l / std::log(l);
      return q * q;
    }
    case Rate::LogCubed: return l * l * l;
    case Rate::LogSquared: return l * l;
  }
  return 0.0;
}

std::vector<ScalingRow> scaling_experiment(const MixtureModel& model, const Prior& prior, const EstimatorSpec& est,
                                           const std::vector<std::size_t>& n_grid, Rate rate,
                                           const McOptions& opt) {
  if (!std::is_sorted(n_grid.begin(), n_grid.end()) ||
      std::adjacent_find(n_grid.begin(), n_grid.end()) != n_grid.end())
    throw InvalidArgument("n grid must be strictly increasing");
  std::vector<ScalingRow> rows;
  for (std::size_t n : n_grid) {
    McOptions o = opt;
    o.seed = split_seed(opt.seed, n);
    const RegretReport rep = total_regret_mc(model, prior, est, n, o);
    ScalingRow row;
    row.n = n;
    row.regret = rep.estimate;
    row.std_error = rep.std_error;
    row.rate = rate_value(rate, static_cast<double>(n));
    row.ratio = row.regret / row.rate;
    row.seed = o.seed;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace eblab
