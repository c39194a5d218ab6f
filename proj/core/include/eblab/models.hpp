#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "eblab/quadrature.hpp"
#include "eblab/random.hpp"

namespace eblab {

enum class Channel { GaussianLocation, Poisson };

struct MixtureModel {
  Channel channel = Channel::GaussianLocation;

  static MixtureModel gaussian() { return {Channel::GaussianLocation}; }
  static MixtureModel poisson() { return {Channel::Poisson}; }

  bool is_poisson() const { return channel == Channel::Poisson; }
  // log f_theta(y): N(theta, 1) density or Poi(theta) pmf.
  double log_likelihood(double theta, double y) const;
  double likelihood(double theta, double y) const;
  double draw(double theta, Rng& rng) const;
};

std::string to_string(Channel channel);

struct Atom {
  double location;
  double weight;
};

class Prior;

struct DiscretePrior {
  std::vector<Atom> atoms;  // sorted by location, weights sum to 1
};
struct GaussianPrior {
  double mean;
  double variance;
};
struct GammaPrior {
  double shape;
  double rate;
};
struct ExponentialPrior {
  double rate;
};
struct UniformPrior {
  double lo;
  double hi;
};
// dG = (1 + delta r) / normalizer dG_base; ratio_bound caps (1 + delta r)/normalizer.
struct TiltedPrior {
  std::shared_ptr<const Prior> base;
  std::function<double(double)> perturbation;
  double delta;
  double normalizer;
  double ratio_bound;
};

class Prior {
 public:
  using Variant =
      std::variant<DiscretePrior, GaussianPrior, GammaPrior, ExponentialPrior, UniformPrior, TiltedPrior>;

  static Prior discrete(std::vector<Atom> atoms);
  static Prior point_mass(double location);
  static Prior gaussian(double mean, double variance);
  static Prior gamma(double shape, double rate);
  static Prior exponential(double rate);
  static Prior uniform(double lo, double hi);
  // normalizer defaults to 1 + delta * integral(r dG_base), computed by quadrature.
  static Prior tilted(const Prior& base, std::function<double(double)> r, double delta,
                      double normalizer = 0.0, double ratio_bound = 1.5);

  const Variant& variant() const { return v_; }
  template <typename T>
  const T* as() const {
    return std::get_if<T>(&v_);
  }
  std::string kind_name() const;

  double lower_support() const;
  double upper_support() const;  // +inf when unbounded
  bool nonnegative() const { return lower_support() >= 0.0; }

  // Nodes and weights approximating integrals against the prior.
  QuadratureRule integration_rule(int order = 0) const;
  double expectation(const std::function<double(double)>& g, int order = 0) const;
  double mean() const;
  double second_moment() const;
  double variance() const;
  // Interval carrying all but a negligible fraction of the mass.
  std::pair<double, double> effective_support(double tail = 1e-16) const;

 private:
  explicit Prior(Variant v) : v_(std::move(v)) {}
  Variant v_;
};

Prior mixture_of(const Prior& a, const Prior& b, double lambda);  // discrete priors only

// Diagnostics written by bayes_estimate when the continuity fallback is used.
struct BayesFlags {
  bool degenerate = false;
};

double mixture_density(const MixtureModel& model, const Prior& prior, double y);
double log_mixture_density(const MixtureModel& model, const Prior& prior, double y);
// d/dy f_G(y) for the Gaussian channel.
double mixture_density_derivative(const MixtureModel& model, const Prior& prior, double y);

// E_G[g(theta) | Y = y].
double posterior_expectation(const MixtureModel& model, const Prior& prior, double y,
                             const std::function<double(double)>& g, int order = 0);

double bayes_estimate(const MixtureModel& model, const Prior& prior, double y, BayesFlags* flags = nullptr);

double mmse(const MixtureModel& model, const Prior& prior);

struct Sample {
  std::vector<double> theta;
  std::vector<double> y;
};

std::vector<double> sample_theta(const Prior& prior, std::size_t n, Rng& rng);
Sample sample(const MixtureModel& model, const Prior& prior, std::size_t n, std::uint64_t seed);

Prior empirical_distribution(std::span<const double> theta);

// Chernoff bound on G0[theta > h] for G0 = Gamma(shape, rate), valid for h > shape/rate.
double gamma_tail_chernoff(double shape, double rate, double h);

void validate_model_prior(const MixtureModel& model, const Prior& prior);

}  // namespace eblab
