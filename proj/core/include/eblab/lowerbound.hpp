#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "eblab/operators.hpp"

namespace eblab {

struct GaussianConstants {
  double s, eta, rho, rho1, mu, lambda1, lambda2, alpha1, lambda0, lambda3;

  // log ||K psi_k||^2 = log(lambda0 mu^k).
  double log_k_norm2(int k) const;
  // log ||K1 psi_k||^2 = log(lambda3 (k mu^{k-1} + (k+1) mu^{k+1})).
  double log_k1_norm2(int k) const;
  // Closed-form (K1 psi_k, K1 psi_j); zero unless |k - j| in {0, 2}.
  double k1_gram_entry(int k, int j) const;
};

GaussianConstants gaussian_constants(double s);

struct PoissonConstants {
  double alpha, beta, nu, z, gamma1, gamma2, gamma3;
  double log_C;   // S-kernel constant (1+beta) beta^alpha / Gamma(alpha)
  double log_C2;  // C (1-z) ((1+beta) z)^{nu/2} gamma2^{-alpha-1}

  // b_k = (S Gamma_k, Gamma_k) = ||K Gamma_k||^2.
  double log_b(int k) const;
  double b(int k) const;
  // (S1 Gamma_k, Gamma_k) = ||K1 Gamma_k||^2.
  double log_s1_diag(int k) const;
  // Eigenvalue of S on Gamma_k when alpha = 1.
  double log_eigenvalue_alpha1(int k) const;
  // log of the certified bound sup_x |Gamma_k(x)|.
  double log_sup_bound(int k) const;
};

PoissonConstants poisson_constants(double alpha, double beta);

// Gamma_k(x) = exp(-gamma1 x) L_k^nu(gamma2 x) and its derivative.
double laguerre_function(const PoissonConstants& pc, int k, double x);
double laguerre_function_derivative(const PoissonConstants& pc, int k, double x);
// exp(log_scale) * E_{G0}[Gamma_k(theta) | Y = y] in closed form.
double laguerre_image(const PoissonConstants& pc, int k, double y, double log_scale = 0.0);

// c psi_k with analytic derivative; c = exp(log_scale).
TestFunction hermite_basis_function(const GaussianConstants& gc, int k, double log_scale = 0.0);
// c Gamma_k with analytic derivative and closed-form posterior image; c = exp(log_scale).
TestFunction laguerre_basis_function(const PoissonConstants& pc, int k, double log_scale = 0.0);

// Measured Gram entries of the unnormalized basis against their closed forms.
struct OrthogonalityEntry {
  std::string gram;  // "K", "K1", "S", "S1"
  int k = 0, j = 0;
  double measured = 0.0;
  double expected = 0.0;
  double deviation = 0.0;  // absolute for "K", scaled otherwise
};

struct OrthogonalityReport {
  std::vector<OrthogonalityEntry> entries;
  double max_k_deviation = 0.0;     // K Gram (Gaussian, absolute) or S Gram (Poisson, relative)
  double max_k1_deviation = 0.0;    // K1 Gram (Gaussian) or S1 diagonal (Poisson), relative
  double max_band_deviation = 0.0;  // Poisson: S1 entries with |k - j| >= 3, relative to the diagonal scale
};

// psi_0..psi_kmax: (K psi_k, K psi_j) against lambda0 mu^k 1{k=j} and the K1 Gram
// against its tridiagonal closed form.
OrthogonalityReport gaussian_orthogonality(double s, int k_max, const GramOptions& opt = {});
// Gamma_0..Gamma_kmax: S Gram against b_k 1{k=j}, S1 diagonal, and the S1 band structure.
OrthogonalityReport poisson_orthogonality(double alpha, double beta, int k_max, const GramOptions& opt = {});

// Constants of the contrast conditions for a Gram matrix G:
//   v'Gv >= tau |v|^2 over v in {0,+-1}^m,  v'Gv <= tau1^2 m over v in {0,1}^m,
//   v'Gv >= tau_ref |v|^2 - tau2 with tau_ref the mean diagonal.
struct ContrastConstants {
  double tau = 0.0;
  double tau1 = 0.0;
  double tau2 = 0.0;
  double tau_ref = 0.0;
  bool exhaustive = true;  // false when eigenvalue bounds replace enumeration
};

ContrastConstants contrast_constants(const Eigen::MatrixXd& g);

struct PerturbationFamily {
  BasePriorContext ctx;
  std::vector<TestFunction> r;
  std::vector<int> indices;
  double sup_bound = 0.0;  // certified upper bound on max_i sup |r_i|
  double gamma = 0.0;      // max_i ||K r_i||^2
  GramMatrices gram;
  ContrastConstants k1;    // from the K1 Gram
  ContrastConstants k;     // from the K Gram (density-estimation variant)
  std::string label;

  int m() const { return static_cast<int>(r.size()); }
};

PerturbationFamily make_family(const BasePriorContext& ctx, std::vector<TestFunction> funcs,
                               std::vector<int> indices, std::string label, const GramOptions& opt = {});

// Indices m + 3j, j = 1..m.
std::vector<int> spread_indices(int m);

// r_j = xi_i psi_i with xi_i = 1/||K1 psi_i||, i = m + 3j.
PerturbationFamily gaussian_family(double s, int m, const GramOptions& opt = {});
// r_k = Gamma_k / ||K1 Gamma_k||, k = m + 3j.
PerturbationFamily poisson_family(double alpha, double beta, int m, const GramOptions& opt = {});
// r_k = psi_k / ||K psi_k|| and r_k = Gamma_k / ||K Gamma_k|| for chosen indices.
PerturbationFamily gaussian_density_family(double s, const std::vector<int>& indices, const GramOptions& opt = {});
PerturbationFamily poisson_density_family(double alpha, double beta, const std::vector<int>& indices,
                                          const GramOptions& opt = {});
PerturbationFamily rescaled(const PerturbationFamily& f, double c, const GramOptions& opt = {});
// Replaces r_i by r_i - integral(r_i dG0).
PerturbationFamily centered(const PerturbationFamily& f, const GramOptions& opt = {});

// Grid over the parameter space covering G0's mass and the oscillation range of r.
std::vector<double> parameter_grid(const PerturbationFamily& f, int points);
double measured_sup(const PerturbationFamily& f, int points = 4000);

using Vertex = std::uint64_t;

class AssouadFamily {
 public:
  AssouadFamily(PerturbationFamily family, double n, const GramOptions& opt = {});

  const PerturbationFamily& family() const { return family_; }
  int m() const { return family_.m(); }
  double n() const { return n_; }
  double delta() const { return delta_; }

  // integral(r_u dG0) with r_u = sum_i u_i r_i.
  double mu(Vertex u) const;
  TestFunction perturbation(Vertex u) const;
  Prior prior(Vertex u) const;
  double density_ratio(Vertex u, double theta) const;
  std::pair<double, double> density_ratio_range(Vertex u, int points = 1000) const;
  // f_u(y) = f0(y) (1 + delta K r_u(y)) / (1 + delta mu_u).
  double mixture_density(Vertex u, double y) const;

  const ObservationGrid& grid() const { return grid_; }
  const OperatorImages& images() const { return images_; }
  const std::vector<double>& mu_components() const { return mu_; }

 private:
  PerturbationFamily family_;
  double n_;
  double delta_;
  ObservationGrid grid_;
  OperatorImages images_;
  std::vector<double> mu_;
};

double regression_gap(const AssouadFamily& af, Vertex u, Vertex v);
double chi_square(const AssouadFamily& af, Vertex u, Vertex v);              // chi^2(f_u || f_v)
double tensorized_chi_square(const AssouadFamily& af, Vertex u, Vertex v, double n);  // (1+chi^2)^n - 1
double hellinger_sq(const AssouadFamily& af, Vertex u, Vertex v);             // H^2(f_u, f_v)
double prior_hellinger_sq(const AssouadFamily& af, Vertex u, Vertex v);       // H^2(G_u, G_v)
int hamming(Vertex u, Vertex v);

std::vector<std::pair<Vertex, Vertex>> gray_code_pairs(int m, int count, std::uint64_t seed);
std::vector<std::pair<Vertex, Vertex>> random_pairs(int m, int count, std::uint64_t seed);

struct AuditEntry {
  std::string name;
  double measured = 0.0;
  std::optional<double> required;
  std::string relation;  // "<=", ">=", "info"
  bool pass = true;
};

struct AuditReport {
  std::vector<AuditEntry> entries;

  bool all_pass() const;
  const AuditEntry* find(const std::string& name) const;
  double value(const std::string& name) const;
  std::string to_json() const;
};

struct AuditOptions {
  int pairs = 64;
  std::uint64_t seed = 0;
  int threads = 1;
  int ratio_grid = 1000;
  double chi2_constant = 120.0;
  double centering_tol = 1e-9;
  std::optional<double> truncation_level;
};

AuditReport audit(const AssouadFamily& af, double n, const AuditOptions& opt = {});
AuditReport hellinger_audit(const AssouadFamily& af, double n, const AuditOptions& opt = {});

// 6 sqrt((M + a^4) n eps): regret lost by restricting priors to [-a, a].
double truncation_correction(double fourth_moment, double a, double n, double eps);
// 8 n sqrt(eps): Hellinger-risk analogue.
double truncation_correction_density(double n, double eps);

}  // namespace eblab
