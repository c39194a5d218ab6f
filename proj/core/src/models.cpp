#include "eblab/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "eblab/errors.hpp"
#include "eblab/specfun.hpp"

namespace eblab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void check_observation(const MixtureModel& model, double y) {
  if (!std::isfinite(y)) throw InvalidArgument("observation must be finite");
  if (model.is_poisson() && (y < 0.0 || y != std::floor(y)))
    throw InvalidArgument("Poisson observations must be nonnegative integers");
}

// Softmax-weighted average of g over nodes with log weights; nullopt-like NaN if all weights vanish.
double log_weighted_average(const std::vector<double>& nodes, const std::vector<double>& logw,
                            const std::function<double(double)>& g) {
  double m = -kInf;
  for (double l : logw) m = std::max(m, l);
  if (!std::isfinite(m)) throw DegenerateDensity("posterior weights vanish: mixture density is zero");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    double w = std::exp(logw[i] - m);
    if (w == 0.0) continue;
    num += w * g(nodes[i]);
    den += w;
  }
  return num / den;
}

double rule_log_mixture(const MixtureModel& model, const QuadratureRule& rule, double y) {
  std::vector<double> l(rule.size());
  for (std::size_t i = 0; i < rule.size(); ++i)
    l[i] = std::log(rule.weights[i]) + model.log_likelihood(rule.nodes[i], y);
  return log_sum_exp(l);
}

double rule_posterior(const MixtureModel& model, const QuadratureRule& rule, double y,
                      const std::function<double(double)>& g) {
  std::vector<double> l(rule.size());
  for (std::size_t i = 0; i < rule.size(); ++i)
    l[i] = std::log(rule.weights[i]) + model.log_likelihood(rule.nodes[i], y);
  return log_weighted_average(rule.nodes, l, g);
}

}  // namespace

// ---------------------------------------------------------------- channel

double MixtureModel::log_likelihood(double theta, double y) const {
  if (channel == Channel::GaussianLocation) return normal_log_pdf(y - theta);
  if (theta < 0.0) return -kInf;
  if (theta == 0.0) return y == 0.0 ? 0.0 : -kInf;
  return y * std::log(theta) - theta - log_factorial(y);
}

double MixtureModel::likelihood(double theta, double y) const { return std::exp(log_likelihood(theta, y)); }

double MixtureModel::draw(double theta, Rng& rng) const {
  if (channel == Channel::GaussianLocation) return theta + std::normal_distribution<double>(0.0, 1.0)(rng);
  if (theta <= 0.0) return 0.0;
  return static_cast<double>(std::poisson_distribution<long long>(theta)(rng));
}

std::string to_string(Channel channel) {
  return channel == Channel::Poisson ? "poisson" : "gaussian";
}

// ---------------------------------------------------------------- priors

Prior Prior::discrete(std::vector<Atom> atoms) {
  if (atoms.empty()) throw InvalidArgument("discrete prior needs at least one atom");
  long double total = 0.0L;
  for (const Atom& a : atoms) {
    if (!std::isfinite(a.location) || !(a.weight >= 0.0))
      throw InvalidArgument("discrete prior atoms need finite locations and nonnegative weights");
    total += a.weight;
  }
  if (std::abs(static_cast<double>(total) - 1.0) > 1e-12)
    throw InvalidArgument("discrete prior weights must sum to 1");
  std::sort(atoms.begin(), atoms.end(), [](const Atom& a, const Atom& b) { return a.location < b.location; });
  DiscretePrior d;
  for (const Atom& a : atoms) {
    if (a.weight == 0.0) continue;
    if (!d.atoms.empty() && d.atoms.back().location == a.location)
      d.atoms.back().weight += a.weight;
    else
      d.atoms.push_back({a.location, a.weight});
  }
  for (Atom& a : d.atoms) a.weight = static_cast<double>(a.weight / total);
  return Prior(std::move(d));
}

Prior Prior::point_mass(double location) { return discrete({{location, 1.0}}); }

Prior Prior::gaussian(double mean, double variance) {
  if (!std::isfinite(mean) || !(variance > 0.0)) throw InvalidArgument("Gaussian prior needs variance > 0");
  return Prior(GaussianPrior{mean, variance});
}

Prior Prior::gamma(double shape, double rate) {
  if (!(shape > 0.0) || !(rate > 0.0)) throw InvalidArgument("Gamma prior needs shape > 0 and rate > 0");
  return Prior(GammaPrior{shape, rate});
}

Prior Prior::exponential(double rate) {
  if (!(rate > 0.0)) throw InvalidArgument("Exponential prior needs rate > 0");
  return Prior(ExponentialPrior{rate});
}

Prior Prior::uniform(double lo, double hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi) || !(hi > lo)) throw InvalidArgument("Uniform prior needs lo < hi");
  return Prior(UniformPrior{lo, hi});
}

Prior Prior::tilted(const Prior& base, std::function<double(double)> r, double delta, double normalizer,
                    double ratio_bound) {
  if (!r) throw InvalidArgument("tilted prior needs a perturbation function");
  if (!std::isfinite(delta)) throw InvalidArgument("tilted prior needs a finite delta");
  if (normalizer == 0.0) normalizer = 1.0 + delta * base.expectation(r);
  if (!(normalizer > 0.0)) throw InvalidArgument("tilted prior normalizer must be positive");
  return Prior(TiltedPrior{std::make_shared<const Prior>(base), std::move(r), delta, normalizer, ratio_bound});
}

std::string Prior::kind_name() const {
  return std::visit(overloaded{[](const DiscretePrior&) { return "discrete"; },
                               [](const GaussianPrior&) { return "gaussian"; },
                               [](const GammaPrior&) { return "gamma"; },
                               [](const ExponentialPrior&) { return "exponential"; },
                               [](const UniformPrior&) { return "uniform"; },
                               [](const TiltedPrior&) { return "tilted"; }},
                    v_);
}

double Prior::lower_support() const {
  return std::visit(overloaded{[](const DiscretePrior& d) { return d.atoms.front().location; },
                               [](const GaussianPrior&) { return -kInf; },
                               [](const GammaPrior&) { return 0.0; },
                               [](const ExponentialPrior&) { return 0.0; },
                               [](const UniformPrior& u) { return u.lo; },
                               [](const TiltedPrior& t) { return t.base->lower_support(); }},
                    v_);
}

double Prior::upper_support() const {
  return std::visit(overloaded{[](const DiscretePrior& d) { return d.atoms.back().location; },
                               [](const GaussianPrior&) { return kInf; },
                               [](const GammaPrior&) { return kInf; },
                               [](const ExponentialPrior&) { return kInf; },
                               [](const UniformPrior& u) { return u.hi; },
                               [](const TiltedPrior& t) { return t.base->upper_support(); }},
                    v_);
}

QuadratureRule Prior::integration_rule(int order) const {
  return std::visit(
      overloaded{
          [](const DiscretePrior& d) {
            QuadratureRule r;
            r.domain = QuadratureDomain::TruncatedInterval;
            for (const Atom& a : d.atoms) {
              r.nodes.push_back(a.location);
              r.weights.push_back(a.weight);
            }
            return r;
          },
          [&](const GaussianPrior& g) {
            QuadratureRule r = *cached_gauss_hermite(order > 0 ? order : kDefaultHermiteOrder);
            double sd = std::sqrt(g.variance);
            for (double& x : r.nodes) x = g.mean + sd * x;
            return r;
          },
          [&](const GammaPrior& g) {
            QuadratureRule r = *cached_gauss_gamma(order > 0 ? order : kDefaultGammaOrder, g.shape);
            for (double& x : r.nodes) x /= g.rate;
            return r;
          },
          [&](const ExponentialPrior& e) {
            QuadratureRule r = *cached_gauss_gamma(order > 0 ? order : kDefaultGammaOrder, 1.0);
            for (double& x : r.nodes) x /= e.rate;
            return r;
          },
          [&](const UniformPrior& u) {
            QuadratureRule r = gauss_legendre(order > 0 ? order : 32, u.lo, u.hi, 16);
            for (double& w : r.weights) w /= (u.hi - u.lo);
            return r;
          },
          [&](const TiltedPrior& t) {
            QuadratureRule r = t.base->integration_rule(order);
            for (std::size_t i = 0; i < r.size(); ++i)
              r.weights[i] *= (1.0 + t.delta * t.perturbation(r.nodes[i])) / t.normalizer;
            return r;
          }},
      v_);
}

double Prior::expectation(const std::function<double(double)>& g, int order) const {
  return integration_rule(order).integrate(g);
}

double Prior::mean() const {
  return std::visit(overloaded{[](const GaussianPrior& g) { return g.mean; },
                               [](const GammaPrior& g) { return g.shape / g.rate; },
                               [](const ExponentialPrior& e) { return 1.0 / e.rate; },
                               [](const UniformPrior& u) { return 0.5 * (u.lo + u.hi); },
                               [this](const auto&) { return expectation([](double x) { return x; }); }},
                    v_);
}

double Prior::second_moment() const {
  return std::visit(
      overloaded{[](const GaussianPrior& g) { return g.variance + g.mean * g.mean; },
                 [](const GammaPrior& g) { return g.shape * (g.shape + 1.0) / (g.rate * g.rate); },
                 [](const ExponentialPrior& e) { return 2.0 / (e.rate * e.rate); },
                 [](const UniformPrior& u) { return (u.lo * u.lo + u.lo * u.hi + u.hi * u.hi) / 3.0; },
                 [this](const auto&) { return expectation([](double x) { return x * x; }); }},
      v_);
}

double Prior::variance() const {
  double m = mean();
  return std::max(0.0, second_moment() - m * m);
}

std::pair<double, double> Prior::effective_support(double tail) const {
  const double z = std::sqrt(2.0 * std::log(1.0 / tail)) + 1.0;
  auto gamma_upper = [tail](double shape, double rate) {
    double h = 2.0 * shape / rate + 1.0 / rate;
    while (gamma_tail_chernoff(shape, rate, h) > tail) h *= 1.5;
    return h;
  };
  return std::visit(
      overloaded{[](const DiscretePrior& d) { return std::make_pair(d.atoms.front().location, d.atoms.back().location); },
                 [&](const GaussianPrior& g) {
                   double sd = std::sqrt(g.variance);
                   return std::make_pair(g.mean - z * sd, g.mean + z * sd);
                 },
                 [&](const GammaPrior& g) { return std::make_pair(0.0, gamma_upper(g.shape, g.rate)); },
                 [&](const ExponentialPrior& e) { return std::make_pair(0.0, gamma_upper(1.0, e.rate)); },
                 [](const UniformPrior& u) { return std::make_pair(u.lo, u.hi); },
                 [&](const TiltedPrior& t) { return t.base->effective_support(tail); }},
      v_);
}

Prior mixture_of(const Prior& a, const Prior& b, double lambda) {
  const auto* da = a.as<DiscretePrior>();
  const auto* db = b.as<DiscretePrior>();
  if (!da || !db) throw InvalidArgument("mixture_of supports discrete priors only");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidArgument("mixture weight must lie in [0, 1]");
  std::vector<Atom> atoms;
  for (const Atom& x : da->atoms) atoms.push_back({x.location, lambda * x.weight});
  for (const Atom& x : db->atoms) atoms.push_back({x.location, (1.0 - lambda) * x.weight});
  double total = 0.0;
  for (const Atom& x : atoms) total += x.weight;
  for (Atom& x : atoms) x.weight /= total;
  return Prior::discrete(std::move(atoms));
}

void validate_model_prior(const MixtureModel& model, const Prior& prior) {
  if (model.is_poisson() && prior.lower_support() < 0.0)
    throw InvalidArgument("Poisson model requires a prior supported on [0, inf)");
}

// ---------------------------------------------------------------- densities

double log_mixture_density(const MixtureModel& model, const Prior& prior, double y) {
  validate_model_prior(model, prior);
  check_observation(model, y);
  if (const auto* d = prior.as<DiscretePrior>()) {
    std::vector<double> l;
    l.reserve(d->atoms.size());
    for (const Atom& a : d->atoms) l.push_back(std::log(a.weight) + model.log_likelihood(a.location, y));
    return log_sum_exp(l);
  }
  if (!model.is_poisson()) {
    if (const auto* g = prior.as<GaussianPrior>()) {
      double v = 1.0 + g->variance;
      return normal_log_pdf((y - g->mean) / std::sqrt(v)) - 0.5 * std::log(v);
    }
    if (const auto* u = prior.as<UniformPrior>()) {
      double mid = 0.5 * (u->lo + u->hi);
      double mass = y > mid ? normal_sf(y - u->hi) - normal_sf(y - u->lo)
                            : normal_cdf(y - u->lo) - normal_cdf(y - u->hi);
      if (mass > 1e-280) return std::log(mass / (u->hi - u->lo));
    }
  } else {
    auto neg_binomial = [y](double shape, double rate) {
      return log_gamma(y + shape) - log_gamma(shape) - log_factorial(y) + shape * std::log(rate / (1.0 + rate)) -
             y * std::log1p(rate);
    };
    if (const auto* g = prior.as<GammaPrior>()) return neg_binomial(g->shape, g->rate);
    if (const auto* e = prior.as<ExponentialPrior>()) return neg_binomial(1.0, e->rate);
    if (const auto* u = prior.as<UniformPrior>()) {
      double hi = log_regularized_gamma_p(y + 1.0, u->hi);
      double lo = u->lo > 0.0 ? log_regularized_gamma_p(y + 1.0, u->lo) : -kInf;
      return log_sub_exp(hi, lo) - std::log(u->hi - u->lo);
    }
  }
  return rule_log_mixture(model, prior.integration_rule(), y);
}

double mixture_density(const MixtureModel& model, const Prior& prior, double y) {
  return std::exp(log_mixture_density(model, prior, y));
}

double mixture_density_derivative(const MixtureModel& model, const Prior& prior, double y) {
  if (model.is_poisson()) throw InvalidArgument("density derivative is defined for the Gaussian channel");
  check_observation(model, y);
  if (const auto* g = prior.as<GaussianPrior>())
    return -(y - g->mean) / (1.0 + g->variance) * mixture_density(model, prior, y);
  if (const auto* u = prior.as<UniformPrior>())
    return (normal_pdf(y - u->lo) - normal_pdf(y - u->hi)) / (u->hi - u->lo);
  QuadratureRule rule = prior.integration_rule();
  return rule.integrate([&](double t) { return (t - y) * normal_pdf(y - t); });
}

double posterior_expectation(const MixtureModel& model, const Prior& prior, double y,
                             const std::function<double(double)>& g, int order) {
  validate_model_prior(model, prior);
  check_observation(model, y);
  if (const auto* d = prior.as<DiscretePrior>()) {
    std::vector<double> nodes, l;
    nodes.reserve(d->atoms.size());
    l.reserve(d->atoms.size());
    for (const Atom& a : d->atoms) {
      nodes.push_back(a.location);
      l.push_back(std::log(a.weight) + model.log_likelihood(a.location, y));
    }
    return log_weighted_average(nodes, l, g);
  }
  if (const auto* t = prior.as<TiltedPrior>()) {
    const auto& r = t->perturbation;
    const double delta = t->delta;
    double num = posterior_expectation(model, *t->base, y, [&](double x) { return g(x) * (1.0 + delta * r(x)); }, order);
    double den = posterior_expectation(model, *t->base, y, [&](double x) { return 1.0 + delta * r(x); }, order);
    return num / den;
  }
  if (!model.is_poisson()) {
    if (const auto* gp = prior.as<GaussianPrior>()) {
      double pv = gp->variance / (1.0 + gp->variance);
      double pm = (gp->mean + gp->variance * y) / (1.0 + gp->variance);
      double sd = std::sqrt(pv);
      auto rule = cached_gauss_hermite(order > 0 ? order : kDefaultHermiteOrder);
      return rule->integrate([&](double x) { return g(pm + sd * x); });
    }
    if (const auto* u = prior.as<UniformPrior>()) {
      QuadratureRule rule = gauss_legendre(order > 0 ? order : 32, u->lo, u->hi, 16);
      return rule_posterior(model, rule, y, g);
    }
  } else {
    auto gamma_posterior = [&](double shape, double rate) {
      auto rule = cached_gauss_gamma(order > 0 ? order : kDefaultGammaOrder, y + shape);
      double scale = 1.0 / (rate + 1.0);
      return rule->integrate([&](double x) { return g(x * scale); });
    };
    if (const auto* gp = prior.as<GammaPrior>()) return gamma_posterior(gp->shape, gp->rate);
    if (const auto* e = prior.as<ExponentialPrior>()) return gamma_posterior(1.0, e->rate);
    if (const auto* u = prior.as<UniformPrior>()) {
      QuadratureRule rule = gauss_legendre(order > 0 ? order : 32, u->lo, u->hi, 16);
      return rule_posterior(model, rule, y, g);
    }
  }
  return rule_posterior(model, prior.integration_rule(order), y, g);
}

double bayes_estimate(const MixtureModel& model, const Prior& prior, double y, BayesFlags* flags) {
  validate_model_prior(model, prior);
  check_observation(model, y);
  if (flags) flags->degenerate = false;
  auto identity = [](double x) { return x; };
  if (!model.is_poisson()) {
    if (const auto* g = prior.as<GaussianPrior>()) return (g->mean + g->variance * y) / (1.0 + g->variance);
    if (prior.as<UniformPrior>()) {
      double f = mixture_density(model, prior, y);
      if (f > 1e-250) return y + mixture_density_derivative(model, prior, y) / f;
    }
    return std::clamp(posterior_expectation(model, prior, y, identity), prior.lower_support(), prior.upper_support());
  }
  if (const auto* g = prior.as<GammaPrior>()) return (y + g->shape) / (1.0 + g->rate);
  if (const auto* e = prior.as<ExponentialPrior>()) return (y + 1.0) / (1.0 + e->rate);
  if (prior.as<TiltedPrior>()) return posterior_expectation(model, prior, y, identity);
  double l0 = log_mixture_density(model, prior, y);
  if (!std::isfinite(l0)) {
    if (flags) flags->degenerate = true;
    return 0.0;
  }
  double l1 = log_mixture_density(model, prior, y + 1.0);
  // A posterior mean lies in the convex hull of the support; clamp away rounding.
  return std::clamp((y + 1.0) * std::exp(l1 - l0), prior.lower_support(), prior.upper_support());
}

double mmse(const MixtureModel& model, const Prior& prior) {
  validate_model_prior(model, prior);
  if (const auto* d = prior.as<DiscretePrior>(); d && d->atoms.size() == 1) return 0.0;
  if (!model.is_poisson()) {
    if (const auto* g = prior.as<GaussianPrior>()) return g->variance / (1.0 + g->variance);
  } else {
    if (const auto* g = prior.as<GammaPrior>()) return g->shape / (g->rate * (1.0 + g->rate));
    if (const auto* e = prior.as<ExponentialPrior>()) return 1.0 / (e->rate * (1.0 + e->rate));
  }
  auto posterior_variance = [&](double y) {
    double m1 = posterior_expectation(model, prior, y, [](double x) { return x; });
    double m2 = posterior_expectation(model, prior, y, [](double x) { return x * x; });
    return std::max(0.0, m2 - m1 * m1);
  };
  if (model.is_poisson()) {
    const double mean = prior.mean();
    double mass = 0.0, total = 0.0;
    for (long y = 0; y < 10'000'000; ++y) {
      double f = mixture_density(model, prior, static_cast<double>(y));
      mass += f;
      if (f > 0.0) total += f * posterior_variance(static_cast<double>(y));
      if (y > mean && f * (1.0 + y) < 1e-18) break;
    }
    if (1.0 - mass > 1e-8) throw NumericError("mmse: y-cutoff leaves more than 1e-8 of the mixture mass");
    return total;
  }
  auto [lo, hi] = prior.effective_support(1e-16);
  lo -= 12.0;
  hi += 12.0;
  int panels = static_cast<int>(std::ceil((hi - lo) / 0.5));
  QuadratureRule rule = gauss_legendre(16, lo, hi, panels);
  double mass = 0.0, total = 0.0;
  for (std::size_t i = 0; i < rule.size(); ++i) {
    double f = mixture_density(model, prior, rule.nodes[i]);
    if (f <= 0.0) continue;
    mass += rule.weights[i] * f;
    total += rule.weights[i] * f * posterior_variance(rule.nodes[i]);
  }
  if (std::abs(1.0 - mass) > 1e-8) throw NumericError("mmse: y-range leaves more than 1e-8 of the mixture mass");
  return total;
}

// ---------------------------------------------------------------- sampling

std::vector<double> sample_theta(const Prior& prior, std::size_t n, Rng& rng) {
  std::vector<double> out(n);
  std::visit(
      overloaded{
          [&](const DiscretePrior& d) {
            std::vector<double> cum(d.atoms.size());
            double c = 0.0;
            for (std::size_t i = 0; i < d.atoms.size(); ++i) cum[i] = (c += d.atoms[i].weight);
            std::uniform_real_distribution<double> u(0.0, c);
            for (auto& x : out) {
              auto it = std::upper_bound(cum.begin(), cum.end(), u(rng));
              std::size_t k = std::min<std::size_t>(it - cum.begin(), d.atoms.size() - 1);
              x = d.atoms[k].location;
            }
          },
          [&](const GaussianPrior& g) {
            std::normal_distribution<double> dist(g.mean, std::sqrt(g.variance));
            for (auto& x : out) x = dist(rng);
          },
          [&](const GammaPrior& g) {
            std::gamma_distribution<double> dist(g.shape, 1.0 / g.rate);
            for (auto& x : out) x = dist(rng);
          },
          [&](const ExponentialPrior& e) {
            std::exponential_distribution<double> dist(e.rate);
            for (auto& x : out) x = dist(rng);
          },
          [&](const UniformPrior& u) {
            std::uniform_real_distribution<double> dist(u.lo, u.hi);
            for (auto& x : out) x = dist(rng);
          },
          [&](const TiltedPrior& t) {
            std::uniform_real_distribution<double> accept(0.0, 1.0);
            for (auto& x : out) {
              for (;;) {
                double cand = sample_theta(*t.base, 1, rng)[0];
                double ratio = (1.0 + t.delta * t.perturbation(cand)) / t.normalizer;
                if (ratio > t.ratio_bound * (1.0 + 1e-12))
                  throw NumericError("tilted prior density ratio exceeds its declared bound");
                if (accept(rng) * t.ratio_bound <= ratio) {
                  x = cand;
                  break;
                }
              }
            }
          }},
      prior.variant());
  return out;
}

Sample sample(const MixtureModel& model, const Prior& prior, std::size_t n, std::uint64_t seed) {
  validate_model_prior(model, prior);
  Rng rng = make_rng(seed);
  Sample s;
  s.theta = sample_theta(prior, n, rng);
  s.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) s.y[i] = model.draw(s.theta[i], rng);
  return s;
}

Prior empirical_distribution(std::span<const double> theta) {
  if (theta.empty()) throw InvalidArgument("empirical distribution of an empty vector");
  std::vector<double> v(theta.begin(), theta.end());
  std::sort(v.begin(), v.end());
  const double w = 1.0 / static_cast<double>(v.size());
  std::vector<Atom> atoms;
  for (std::size_t i = 0; i < v.size();) {
    std::size_t j = i;
    while (j < v.size() && v[j] == v[i]) ++j;
    atoms.push_back({v[i], static_cast<double>(j - i) * w});
    i = j;
  }
  double total = 0.0;
  for (const Atom& a : atoms) total += a.weight;
  for (Atom& a : atoms) a.weight /= total;
  return Prior::discrete(std::move(atoms));
}

double gamma_tail_chernoff(double shape, double rate, double h) {
  double t = h * rate / shape;
  if (!(t > 1.0)) throw InvalidArgument("Chernoff bound needs h above the Gamma mean");
  return std::exp(-shape * (t - 1.0 - std::log(t)));
}

}  // namespace eblab
