#pragma once

#include <span>

namespace eblab {

inline constexpr double kPi = 3.14159265358979323846;
// Cramer's constant: |H_k(x)| <= kCramer * sqrt(k!) * exp(x^2/4).
inline constexpr double kCramer = 1.086435;

double log_gamma(double x);  // x > 0
double log_factorial(double n);
double log_binomial(double n, double k);  // log of Gamma(n+1)/(Gamma(k+1)Gamma(n-k+1))

double normal_pdf(double x);
double normal_log_pdf(double x);
double normal_cdf(double x);
double normal_sf(double x);  // 1 - cdf, accurate in the upper tail

double log_sum_exp(std::span<const double> v);
double log_add_exp(double a, double b);
double log_sub_exp(double a, double b);  // log(e^a - e^b), a >= b

// Probabilists' Hermite polynomial He_k(x): He_{k+1} = x He_k - k He_{k-1}.
// Physicists' H_k relate by H_k(x) = 2^{k/2} He_k(sqrt(2) x).
double hermite(int k, double x);

// He_k(x) / sqrt(k!) * exp(-x^2/4), evaluated with running rescaling so that
// neither the polynomial nor the Gaussian factor overflows or underflows early.
double hermite_normalized(int k, double x);

// psi_k(x) = sqrt(alpha1/k!) He_k(alpha1 x) sqrt(phi(alpha1 x)); orthonormal in L2(dx).
double hermite_psi(int k, double alpha1, double x);
double hermite_psi_derivative(int k, double alpha1, double x);

// Generalized Laguerre L_n^nu(x), nu > -1.
double laguerre(int n, double nu, double x);
// exp(-decay) * L_n^nu(x), safe when L_n^nu alone would overflow.
double laguerre_damped(int n, double nu, double x, double decay);

// exp(-x) I_nu(x) for x >= 0, nu > -1 (series) with an asymptotic branch for
// x >= 30 + nu^2.
double bessel_i_scaled(double nu, double x);
double log_bessel_i(double nu, double x);
double bessel_i_scaled_series(double nu, double x);
double bessel_i_scaled_asymptotic(double nu, double x);

// log of sum_{j>=0} t^{j+nu} / (j! Gamma(j+nu+1)) = log(t^{nu/2} I_nu(2 sqrt t)).
double log_bessel_power_series(double nu, double t);

// Regularized lower incomplete gamma P(a, x) and its logarithm.
double regularized_gamma_p(double a, double x);
double log_regularized_gamma_p(double a, double x);
double log_regularized_gamma_q(double a, double x);

}  // namespace eblab
