#include "eblab/specfun.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "eblab/errors.hpp"

namespace eblab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kBig = 1e200;
const double kLogBig = std::log(kBig);

}  // namespace

double log_gamma(double x) {
  if (!(x > 0.0)) throw InvalidArgument("log_gamma requires a positive argument");
#if defined(__GLIBC__)
  int sign = 0;
  return ::lgamma_r(x, &sign);
#else
  return std::lgamma(x);
#endif
}

double log_factorial(double n) { return log_gamma(n + 1.0); }

double log_binomial(double n, double k) {
  return log_gamma(n + 1.0) - log_gamma(k + 1.0) - log_gamma(n - k + 1.0);
}

double normal_pdf(double x) { return std::exp(normal_log_pdf(x)); }

double normal_log_pdf(double x) { return -0.5 * x * x - 0.5 * std::log(2.0 * kPi); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_sf(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

double log_sum_exp(std::span<const double> v) {
  double m = -kInf;
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

double log_add_exp(double a, double b) {
  if (a < b) std::swap(a, b);
  if (a == -kInf) return a;
  return a + std::log1p(std::exp(b - a));
}

double log_sub_exp(double a, double b) {
  if (b > a) throw InvalidArgument("log_sub_exp requires a >= b");
  if (b == -kInf) return a;
  return a + std::log1p(-std::exp(b - a));
}

double hermite(int k, double x) {
  if (k < 0) throw InvalidArgument("hermite order must be nonnegative");
  if (k == 0) return 1.0;
  double prev = 1.0, cur = x;
  for (int j = 1; j < k; ++j) {
    double next = x * cur - j * prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

double hermite_normalized(int k, double x) {
  if (k < 0) throw InvalidArgument("hermite order must be nonnegative");
  double log_scale = -0.25 * x * x;
  double prev = 1.0, cur = x;
  if (k == 0) return std::exp(log_scale);
  for (int j = 1; j < k; ++j) {
    double next = (x * cur - std::sqrt(static_cast<double>(j)) * prev) / std::sqrt(j + 1.0);
    prev = cur;
    cur = next;
    if (std::abs(cur) > kBig) {
      cur /= kBig;
      prev /= kBig;
      log_scale += kLogBig;
    }
  }
  if (cur == 0.0) return 0.0;
  double lv = std::log(std::abs(cur)) + log_scale;
  return std::copysign(std::exp(lv), cur);
}

double hermite_psi(int k, double alpha1, double x) {
  if (!(alpha1 > 0.0)) throw InvalidArgument("hermite_psi requires alpha1 > 0");
  return std::sqrt(alpha1) * std::pow(2.0 * kPi, -0.25) * hermite_normalized(k, alpha1 * x);
}

double hermite_psi_derivative(int k, double alpha1, double x) {
  double up = std::sqrt(k + 1.0) * hermite_psi(k + 1, alpha1, x);
  double down = k > 0 ? std::sqrt(static_cast<double>(k)) * hermite_psi(k - 1, alpha1, x) : 0.0;
  return 0.5 * alpha1 * (down - up);
}

double laguerre(int n, double nu, double x) { return laguerre_damped(n, nu, x, 0.0); }

double laguerre_damped(int n, double nu, double x, double decay) {
  if (n < 0) throw InvalidArgument("laguerre degree must be nonnegative");
  if (!(nu > -1.0)) throw InvalidArgument("laguerre requires nu > -1");
  double log_scale = -decay;
  double prev = 1.0, cur = 1.0 + nu - x;
  if (n == 0) return std::exp(log_scale);
  for (int j = 1; j < n; ++j) {
    double next = ((2.0 * j + 1.0 + nu - x) * cur - (j + nu) * prev) / (j + 1.0);
    prev = cur;
    cur = next;
    if (std::abs(cur) > kBig) {
      cur /= kBig;
      prev /= kBig;
      log_scale += kLogBig;
    }
  }
  if (cur == 0.0) return 0.0;
  return std::copysign(std::exp(std::log(std::abs(cur)) + log_scale), cur);
}

namespace {

// log of sum_j exp(l(j)) for a unimodal sequence, summed outward from its peak.
template <typename Term>
double log_unimodal_sum(Term&& l, long peak) {
  const double lp = l(peak);
  double s = 1.0;
  for (long j = peak + 1;; ++j) {
    double t = std::exp(l(j) - lp);
    s += t;
    if (t < 1e-18 * s) break;
  }
  for (long j = peak - 1; j >= 0; --j) {
    double t = std::exp(l(j) - lp);
    s += t;
    if (t < 1e-18 * s) break;
  }
  return lp + std::log(s);
}

double log_bessel_i_series(double nu, double x) {
  const double lx = std::log(0.5 * x);
  auto term = [&](long j) {
    return (nu + 2.0 * j) * lx - log_gamma(j + 1.0) - log_gamma(j + nu + 1.0);
  };
  double disc = std::sqrt(nu * nu + x * x);
  long peak = std::max(0L, static_cast<long>(std::floor(0.5 * (disc - nu - 2.0))) + 1);
  return log_unimodal_sum(term, peak);
}

}  // namespace

double bessel_i_scaled_series(double nu, double x) {
  if (!(nu > -1.0) || x < 0.0) throw InvalidArgument("bessel_i_scaled: need nu > -1, x >= 0");
  if (x == 0.0) return nu == 0.0 ? 1.0 : (nu > 0.0 ? 0.0 : kInf);
  return std::exp(log_bessel_i_series(nu, x) - x);
}

double bessel_i_scaled_asymptotic(double nu, double x) {
  if (!(x > 0.0)) throw InvalidArgument("asymptotic Bessel branch requires x > 0");
  const double mu = 4.0 * nu * nu;
  double sum = 1.0, term = 1.0, last = kInf;
  for (int k = 1; k < 200; ++k) {
    double odd = 2.0 * k - 1.0;
    double next = -term * (mu - odd * odd) / (8.0 * k * x);
    if (std::abs(next) >= last) break;
    last = std::abs(next);
    sum += next;
    term = next;
    if (std::abs(term) < 1e-17 * std::abs(sum)) break;
  }
  return sum / std::sqrt(2.0 * kPi * x);
}

double bessel_i_scaled(double nu, double x) {
  if (!(nu > -1.0) || x < 0.0) throw InvalidArgument("bessel_i_scaled: need nu > -1, x >= 0");
  if (x >= 30.0 + nu * nu) return bessel_i_scaled_asymptotic(nu, x);
  return bessel_i_scaled_series(nu, x);
}

double log_bessel_i(double nu, double x) {
  if (!(nu > -1.0) || x < 0.0) throw InvalidArgument("log_bessel_i: need nu > -1, x >= 0");
  if (x == 0.0) return nu == 0.0 ? 0.0 : (nu > 0.0 ? -kInf : kInf);
  if (x >= 30.0 + nu * nu) return std::log(bessel_i_scaled_asymptotic(nu, x)) + x;
  return log_bessel_i_series(nu, x);
}

double log_bessel_power_series(double nu, double t) {
  if (!(nu > -1.0) || t < 0.0) throw InvalidArgument("log_bessel_power_series: need nu > -1, t >= 0");
  if (t == 0.0) return nu == 0.0 ? 0.0 : (nu > 0.0 ? -kInf : kInf);
  return 0.5 * nu * std::log(t) + log_bessel_i(nu, 2.0 * std::sqrt(t));
}

namespace {

// Series for P(a, x); returns log P.
double log_gamma_p_series(double a, double x) {
  double ap = a, del = 1.0 / a, sum = del;
  for (int n = 0; n < 100000; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * 1e-17) break;
  }
  return std::log(sum) - x + a * std::log(x) - log_gamma(a);
}

// Continued fraction for Q(a, x) (modified Lentz); returns log Q.
double log_gamma_q_fraction(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i < 100000; ++i) {
    double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  return std::log(h) - x + a * std::log(x) - log_gamma(a);
}

}  // namespace

double log_regularized_gamma_p(double a, double x) {
  if (!(a > 0.0) || x < 0.0) throw InvalidArgument("incomplete gamma: need a > 0, x >= 0");
  if (x == 0.0) return -kInf;
  if (x < a + 1.0) return log_gamma_p_series(a, x);
  return std::log1p(-std::exp(log_gamma_q_fraction(a, x)));
}

double log_regularized_gamma_q(double a, double x) {
  if (!(a > 0.0) || x < 0.0) throw InvalidArgument("incomplete gamma: need a > 0, x >= 0");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return std::log1p(-std::exp(log_gamma_p_series(a, x)));
  return log_gamma_q_fraction(a, x);
}

double regularized_gamma_p(double a, double x) { return std::exp(log_regularized_gamma_p(a, x)); }

}  // namespace eblab
