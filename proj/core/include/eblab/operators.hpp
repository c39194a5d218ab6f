#pragma once

#include <Eigen/Dense>
#include <functional>
#include <limits>
#include <vector>

#include "eblab/models.hpp"

namespace eblab {

// A bounded function r(theta) together with optional structure the operators
// can exploit: an analytic derivative and a closed-form posterior image
// y -> E_{G0}[r(theta) | Y = y] tied to one base prior.
struct TestFunction {
  std::function<double(double)> value;
  std::function<double(double)> derivative;
  std::function<double(double)> posterior_image;
  double sup_bound = std::numeric_limits<double>::infinity();

  TestFunction() = default;
  TestFunction(std::function<double(double)> f, double sup = std::numeric_limits<double>::infinity())
      : value(std::move(f)), sup_bound(sup) {}

  double operator()(double x) const { return value(x); }
  bool has_derivative() const { return static_cast<bool>(derivative); }
  bool has_image() const { return static_cast<bool>(posterior_image); }
};

TestFunction constant_function(double c);
TestFunction scaled(const TestFunction& r, double c);
TestFunction shifted(const TestFunction& r, double c);  // r + c
TestFunction combination(const std::vector<TestFunction>& fs, const std::vector<double>& coeffs);

// Base prior G0 with its mixture density f0. Gaussian-location channel with
// G0 = N(0, s), or Poisson channel with G0 = Gamma(alpha, beta).
class BasePriorContext {
 public:
  static BasePriorContext gaussian(double s);
  static BasePriorContext gamma(double alpha, double beta);
  static BasePriorContext from(const MixtureModel& model, const Prior& g0);

  const MixtureModel& model() const { return model_; }
  const Prior& prior() const { return prior_; }
  bool is_gaussian() const { return !model_.is_poisson(); }

  double s() const { return s_; }
  double eta() const { return eta_; }
  double alpha() const { return alpha_; }
  double beta() const { return beta_; }

  double f0(double y) const;
  double log_f0(double y) const;
  // (y+1) f0(y+1) / f0(y) = E_{G0}[theta | Y = y] for the Poisson channel.
  double shift_ratio(double y) const;
  // E_{G0}[theta | Y = y].
  double posterior_mean(double y) const;

  int hermite_order = kDefaultHermiteOrder;
  int gamma_order = kDefaultGammaOrder;

 private:
  BasePriorContext(MixtureModel m, Prior p) : model_(m), prior_(std::move(p)) {}
  MixtureModel model_;
  Prior prior_;
  double s_ = 0.0, eta_ = 0.0, alpha_ = 0.0, beta_ = 0.0;
};

enum class K1Path {
  Auto,            // shift difference when an image is known (Poisson), else derivative, else definition
  Definition,      // K(theta r) - K(theta) K(r)
  Derivative,      // eta^2 K(r') (Gaussian) or K(x r')/(1+beta) (Poisson)
  ShiftDifference  // ((y+1) f0(y+1)/f0(y)) (K r(y+1) - K r(y)), Poisson only
};

double apply_K(const BasePriorContext& ctx, const TestFunction& r, double y);
double apply_K1(const BasePriorContext& ctx, const TestFunction& r, double y, K1Path path = K1Path::Auto);

// Posterior density of theta at x given Y = y under G0.
double posterior_kernel(const BasePriorContext& ctx, double x, double y);
// Closed-form kernel of S = K*K acting on L2(dx).
double s_kernel(const BasePriorContext& ctx, double x, double x2);
// The same kernel from its definition: integral/sum over y of f0(y) K(x,y) K(x2,y).
double s_kernel_by_definition(const BasePriorContext& ctx, double x, double x2);
// Normalizing constant of the Poisson S-kernel: (1+beta) beta^alpha / Gamma(alpha).
double poisson_kernel_log_constant(double alpha, double beta);

struct GramOptions {
  double tail_tol = 1e-24;  // certified bound on the neglected part of every entry
  double min_width_sd = 12.0;
  int legendre_order = 20;
  int panels_per_sd = 4;
  long max_poisson_y = 200000;
  K1Path path = K1Path::Auto;
  int threads = 1;
};

// Nodes and L2(f0) weights over the observation space.
struct ObservationGrid {
  std::vector<double> y;
  std::vector<double> w;  // quadrature weight times f0(y)
  double tail_bound = 0.0;
};

ObservationGrid observation_grid(const BasePriorContext& ctx, double sup_bound, const GramOptions& opt = {});

struct GramMatrices {
  Eigen::MatrixXd K_gram;
  Eigen::MatrixXd K1_gram;
  std::size_t grid_size = 0;
  double tail_bound = 0.0;
};

GramMatrices gram(const BasePriorContext& ctx, const std::vector<TestFunction>& funcs, const GramOptions& opt = {});

// Evaluations of K r and K1 r on a grid; for the Poisson shift-difference path the
// grid is extended internally by one point.
struct OperatorImages {
  std::vector<std::vector<double>> K;
  std::vector<std::vector<double>> K1;
};
OperatorImages operator_images(const BasePriorContext& ctx, const std::vector<TestFunction>& funcs,
                               const std::vector<double>& ys, const GramOptions& opt = {});

// Mehler: sum_k mu^k He_k(u) He_k(v) / k!  versus its closed form.
double mehler_partial_sum(double mu, double u, double v, int terms);
double mehler_closed_form(double mu, double u, double v);
// Hardy-Hille: sum_n n!/Gamma(n+nu+1) L_n^nu(x) L_n^nu(y) z^n versus its Bessel closed form.
double hardy_hille_partial_sum(double nu, double x, double y, double z, int terms);
double hardy_hille_closed_form(double nu, double x, double y, double z);

}  // namespace eblab
