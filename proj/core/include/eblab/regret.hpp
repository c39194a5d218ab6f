#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eblab/estimators.hpp"
#include "eblab/models.hpp"

namespace eblab {

enum class RegretFunctional { TotalEB, IndividualEB, CompoundSeparable, CompoundPermInvProxy };
enum class RegretMode { Direct, VarianceReduced };

std::string to_string(RegretFunctional f);
std::string to_string(RegretMode m);

struct RegretReport {
  RegretFunctional functional = RegretFunctional::TotalEB;
  RegretMode mode = RegretMode::Direct;
  double estimate = 0.0;
  double std_error = 0.0;
  int replicates = 0;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::vector<double> samples;  // one value per replicate, in replicate order
};

struct McOptions {
  int replicates = 200;
  std::uint64_t seed = 0;
  int threads = 1;
  RegretMode mode = RegretMode::Direct;
};

// Direct: sum_j (est_j - theta_j)^2 - n mmse(G). Variance-reduced: sum_j (est_j - Bayes_G(Y_j))^2.
RegretReport total_regret_mc(const MixtureModel& model, const Prior& prior, const EstimatorSpec& est, std::size_t n,
                             const McOptions& opt = {});
// Train on n-1 draws, score the prediction at the n-th.
RegretReport individual_regret_mc(const MixtureModel& model, const Prior& prior, const EstimatorSpec& est,
                                  std::size_t n, const McOptions& opt = {});

// Parameter vectors for the compound setting: a fixed vector, or iid draws from a prior
// (drawn exactly as total_regret_mc draws them, so shared seeds give shared samples).
class ThetaSource {
 public:
  static ThetaSource fixed(std::vector<double> theta);
  static ThetaSource iid(Prior prior);
  std::vector<double> draw(std::size_t n, Rng& rng) const;
  bool is_fixed() const { return !prior_; }

 private:
  std::vector<double> theta_;
  std::optional<Prior> prior_;
};

// sum_j (est_j - theta_j)^2 - n mmse(G_theta) with G_theta the empirical distribution.
RegretReport compound_regret_mc(const MixtureModel& model, const ThetaSource& source, const EstimatorSpec& est,
                                std::size_t n, const McOptions& opt = {});

struct PairedDifference {
  double mean = 0.0;
  double std_error = 0.0;
};
// Replicate-wise a - b; both reports must come from the same seeds.
PairedDifference paired_difference(const RegretReport& a, const RegretReport& b);

struct MeanEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};
// Monte Carlo estimate of E[mmse(G_theta)] for theta iid from the prior.
MeanEstimate expected_empirical_mmse(const MixtureModel& model, const Prior& prior, std::size_t n,
                                     const McOptions& opt = {});

// E[1{B>0}/B] and E[1{B>0}(B - np)^2/B] for B ~ Bin(n, p).
double v1(long n, double p);
double v2(long n, double p);

struct Certificate {
  double h = 0.0;
  std::size_t n = 0;
  double I0 = 0.0;
  double sumI1 = 0.0;
  double sumI2 = 0.0;
  double tail = 0.0;       // rigorous bound on the y > y0 contribution
  long y0 = 0;
  double constant = 3.0;   // multiplies I0 + sumI1 + sumI2
  double max_posterior_mean = 0.0;  // max over y <= y0 of (y+1) f(y+1)/f(y)
  double total = 0.0;
};

// Upper bound on the total regret of the Robbins estimator for a Poisson mixture
// with prior supported on [0, h].
Certificate robbins_certificate(const Prior& prior, std::size_t n);

struct PriorClass {
  enum class Kind { Compact, Subexponential } kind = Kind::Compact;
  double h = 0.0;  // compact support [0, h]
  double a = 1.0;  // f(y) <= a (1+b)^{-y}
  double b = 1.0;

  static PriorClass compact(double h) { return {Kind::Compact, h, 1.0, 1.0}; }
  static PriorClass subexponential(double a, double b) { return {Kind::Subexponential, 0.0, a, b}; }
};

long tail_cutoff(const PriorClass& cls, double n);

enum class Rate { LogOverLogLogSquared, LogCubed, LogSquared };
std::string to_string(Rate r);
Rate parse_rate(const std::string& name);
double rate_value(Rate r, double n);

struct ScalingRow {
  std::size_t n = 0;
  double regret = 0.0;
  double std_error = 0.0;
  double rate = 0.0;
  double ratio = 0.0;
  std::uint64_t seed = 0;
};

// One total-regret estimate per n; the seed for each n is split from opt.seed.
std::vector<ScalingRow> scaling_experiment(const MixtureModel& model, const Prior& prior, const EstimatorSpec& est,
                                           const std::vector<std::size_t>& n_grid, Rate rate,
                                           const McOptions& opt = {});

}  // namespace eblab
