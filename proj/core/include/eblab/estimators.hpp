#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eblab/models.hpp"

namespace eblab {

enum class EstimatorKind { Robbins, RobbinsAddOne, Gmleb, BayesOracle, Identity, CompoundOracle };

std::string to_string(EstimatorKind kind);
// Accepts "robbins", "robbins-add-one", "gmleb", "oracle", "identity", "compound-oracle".
EstimatorKind parse_estimator_kind(const std::string& name);

// Empirical counts N(y) of nonnegative integer observations.
class CountTable {
 public:
  CountTable() = default;
  explicit CountTable(std::span<const double> y);

  std::size_t operator()(double y) const;
  std::size_t total() const { return total_; }
  std::size_t max_value() const { return counts_.empty() ? 0 : counts_.size() - 1; }

 private:
  std::vector<std::size_t> counts_;
  std::size_t total_ = 0;
};

// theta_j = (Y_j + 1) N(Y_j + 1) / N(Y_j) with N counting all of y.
std::vector<double> robbins_total(std::span<const double> y);
// (y + 1) N(y + 1) / (N(y) + 1) with N counting the training sample.
double robbins_predict(std::span<const double> train, double y);
double robbins_predict(const CountTable& train, double y);

struct NpmleOptions {
  std::vector<double> grid;  // empty: default grid from the data
  int grid_points = 400;
  double tol = 1e-4;  // stop once max_k D_k <= 1 + tol
  int max_iter = 5000;
};

struct NpmleResult {
  Prior prior = Prior::point_mass(0.0);
  std::vector<double> grid;
  std::vector<double> weights;
  std::vector<double> log_likelihood;  // one entry per iterate, starting from uniform weights
  double gradient_gap = 0.0;           // max_k D_k - 1 at the final weights
  int iterations = 0;
  bool converged = false;
};

// Poisson: [0, max Y + 3 sqrt(max Y + 1)]; Gaussian: [min Y - 1, max Y + 1].
std::vector<double> npmle_default_grid(const MixtureModel& model, std::span<const double> y, int points = 400);

// Fixed-grid EM for the mixing weights. Non-convergence is reported through
// `converged` and `gradient_gap`, not thrown.
NpmleResult npmle_fit(const MixtureModel& model, std::span<const double> y, const NpmleOptions& opt = {});
double npmle_log_likelihood(const MixtureModel& model, std::span<const double> y, const Prior& prior);

double gmleb_predict(const Prior& fitted, const MixtureModel& model, double y);

struct EstimatorSpec {
  EstimatorKind kind = EstimatorKind::Robbins;
  std::optional<Prior> prior;  // BayesOracle
  NpmleOptions npmle;          // Gmleb

  static EstimatorSpec robbins() { return {EstimatorKind::Robbins, std::nullopt, {}}; }
  static EstimatorSpec robbins_add_one() { return {EstimatorKind::RobbinsAddOne, std::nullopt, {}}; }
  static EstimatorSpec gmleb(NpmleOptions o = {}) { return {EstimatorKind::Gmleb, std::nullopt, std::move(o)}; }
  static EstimatorSpec oracle(Prior p) { return {EstimatorKind::BayesOracle, std::move(p), {}}; }
  static EstimatorSpec identity() { return {EstimatorKind::Identity, std::nullopt, {}}; }
  static EstimatorSpec compound_oracle() { return {EstimatorKind::CompoundOracle, std::nullopt, {}}; }
};

// An estimator trained on a sample and applied to fresh observations.
class FittedEstimator {
 public:
  // theta is consulted only by CompoundOracle, which uses the empirical
  // distribution of the true parameters.
  static FittedEstimator fit(const EstimatorSpec& spec, const MixtureModel& model, std::span<const double> train,
                             std::span<const double> theta = {});

  double predict(double y) const;
  EstimatorKind kind() const { return kind_; }
  std::size_t training_size() const { return training_size_; }
  const CountTable& counts() const { return counts_; }
  const Prior* fitted_prior() const { return prior_ ? &*prior_ : nullptr; }
  const NpmleResult* npmle() const { return npmle_ ? &*npmle_ : nullptr; }

 private:
  FittedEstimator(EstimatorKind k, MixtureModel m) : kind_(k), model_(m) {}
  EstimatorKind kind_;
  MixtureModel model_;
  std::size_t training_size_ = 0;
  CountTable counts_;
  std::optional<Prior> prior_;
  std::optional<NpmleResult> npmle_;
};

// Estimates of theta_1..theta_n from y_1..y_n using the whole sample.
std::vector<double> estimate_total(const EstimatorSpec& spec, const MixtureModel& model, std::span<const double> y,
                                   std::span<const double> theta = {});

}  // namespace eblab
