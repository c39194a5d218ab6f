#include "eblab/lowerbound.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

#include "eblab/errors.hpp"
#include "eblab/specfun.hpp"

namespace eblab {

namespace {
// Slightly above Cramer's constant 1.0864348...
constexpr double kCramerCertified = 1.0865;
constexpr double kMaxLogScale = 700.0;
}  // namespace

// ---------------------------------------------------------------- Gaussian constants

GaussianConstants gaussian_constants(double s) {
  if (!(s > 0.0)) throw InvalidArgument("gaussian_constants needs s > 0");
  GaussianConstants c{};
  c.s = s;
  c.eta = std::sqrt(s / (1.0 + s));
  c.rho = s / (1.0 + s);
  c.rho1 = std::sqrt(1.0 - c.rho * c.rho);
  c.mu = c.rho / (1.0 + c.rho1);
  c.lambda1 = (1.0 + s) / (2.0 * kPi * s * std::sqrt(1.0 + 2.0 * s));
  c.lambda2 = (1.0 + s) * (1.0 + s) / (s * (1.0 + 2.0 * s));
  c.alpha1 = std::sqrt(2.0 * c.lambda2 * c.rho1);
  c.lambda0 = 1.0 / std::sqrt(2.0 * kPi * s * (1.0 + c.rho1));
  const double eta2 = c.eta * c.eta;
  c.lambda3 = c.lambda0 * c.alpha1 * c.alpha1 * eta2 * eta2 / 4.0;
  return c;
}

double GaussianConstants::log_k_norm2(int k) const { return std::log(lambda0) + k * std::log(mu); }

double GaussianConstants::log_k1_norm2(int k) const {
  if (k < 0) throw InvalidArgument("index must be nonnegative");
  const double lm = std::log(mu);
  if (k == 0) return std::log(lambda3) + lm;
  return std::log(lambda3) + (k - 1) * lm + std::log(k + (k + 1.0) * mu * mu);
}

double GaussianConstants::k1_gram_entry(int k, int j) const {
  if (k == j) return std::exp(log_k1_norm2(k));
  const int lo = std::min(k, j), hi = std::max(k, j);
  if (hi - lo != 2) return 0.0;
  // -lambda3 sqrt((lo+1)(lo+2)) mu^{lo+1}
  return -lambda3 * std::sqrt((lo + 1.0) * (lo + 2.0)) * std::pow(mu, lo + 1);
}

// ---------------------------------------------------------------- Poisson constants

PoissonConstants poisson_constants(double alpha, double beta) {
  if (!(alpha > 0.0) || !(beta > 0.0)) throw InvalidArgument("poisson_constants needs alpha, beta > 0");
  PoissonConstants c{};
  c.alpha = alpha;
  c.beta = beta;
  c.nu = alpha - 1.0;
  const double B = 1.0 + beta;
  const double d = std::sqrt(B) - std::sqrt(beta);
  c.z = d * d;
  c.gamma1 = std::sqrt(beta * B);
  c.gamma2 = 2.0 * c.gamma1;
  c.gamma3 = c.gamma1;
  c.log_C = poisson_kernel_log_constant(alpha, beta);
  c.log_C2 = c.log_C + std::log1p(-c.z) + 0.5 * c.nu * std::log(B * c.z) - (alpha + 1.0) * std::log(c.gamma2);
  return c;
}

double PoissonConstants::log_b(int k) const {
  if (k < 0) throw InvalidArgument("index must be nonnegative");
  return log_C2 + k * std::log(z) + log_gamma(k + alpha) - log_gamma(k + 1.0);
}

double PoissonConstants::b(int k) const { return std::exp(log_b(k)); }

double PoissonConstants::log_s1_diag(int k) const {
  const double B = 1.0 + beta;
  const double bracket = alpha * alpha + (k + 1.0) * (k + alpha) * z + (k + alpha - 1.0) * k / z;
  return log_b(k) - std::log(4.0 * B * B) + std::log(bracket);
}

double PoissonConstants::log_eigenvalue_alpha1(int k) const {
  if (alpha != 1.0) throw InvalidArgument("the Laguerre eigen-relation holds for alpha = 1");
  // a_k / (2 gamma1) with a_k = C z^k (1 - z).
  return log_C + k * std::log(z) + std::log1p(-z) - std::log(2.0 * gamma1);
}

double PoissonConstants::log_sup_bound(int k) const {
  if (nu >= 0.0) return log_binomial(k + nu, k);
  // -1 < nu < 0: |L_k^nu(x)| <= (2 - Gamma(k+nu+1)/(k! Gamma(nu+1))) e^{x/2}.
  return std::log(2.0 - std::exp(log_gamma(k + nu + 1.0) - log_gamma(k + 1.0) - log_gamma(nu + 1.0)));
}

double laguerre_function(const PoissonConstants& pc, int k, double x) {
  return laguerre_damped(k, pc.nu, pc.gamma2 * x, pc.gamma1 * x);
}

double laguerre_function_derivative(const PoissonConstants& pc, int k, double x) {
  double d = -pc.gamma1 * laguerre_function(pc, k, x);
  if (k > 0) d -= pc.gamma2 * laguerre_damped(k - 1, pc.nu + 1.0, pc.gamma2 * x, pc.gamma1 * x);
  return d;
}

double laguerre_image(const PoissonConstants& pc, int k, double y, double log_scale) {
  if (y < 0.0 || y != std::floor(y)) throw InvalidArgument("Poisson observations must be nonnegative integers");
  if (k < 0) throw InvalidArgument("index must be nonnegative");
  // E[Gamma_k | y] = (B/(B+gamma1))^{y+alpha} c_k, where sum_k c_k t^k = (1-t)^y (1-zt)^{-(y+alpha)}.
  // The c_k obey (k+1)c_{k+1} = ((1+z)k + (y+alpha)z - y) c_k - z(k-1+alpha) c_{k-1}. The explicit
  // alternating sum cancels catastrophically, so run the recurrence forward while c_k follows the
  // dominant solution and switch to a backward (Miller) sweep once it becomes the minimal one.
  const double B = 1.0 + pc.beta, z = pc.z, a = y + pc.alpha;
  const double lead = a * std::log(B / (B + pc.gamma1)) + log_scale;
  auto p = [&](double kk) { return ((1.0 + z) * kk + a * z - y) / (kk + 1.0); };
  auto q = [&](double kk) { return z * (kk - 1.0 + pc.alpha) / (kk + 1.0); };
  constexpr double kBig = 1e200;

  int ks = k;
  for (int kk = 1; kk < k; ++kk) {
    const double pk = p(kk);
    if (pk > 0.0 && pk * pk >= 4.0 * q(kk)) {
      ks = kk;
      break;
    }
  }
  double prev = 1.0, cur = a * z - y, log_acc = 0.0;
  if (k == 0) cur = 1.0;
  for (int kk = 1; kk < ks; ++kk) {
    const double next = p(kk) * cur - q(kk) * prev;
    prev = cur;
    cur = next;
    if (std::abs(cur) > kBig) {
      prev /= kBig;
      cur /= kBig;
      log_acc += std::log(kBig);
    }
  }
  double value = cur;  // c_ks
  if (ks < k) {
    const int top = k + 20 + static_cast<int>(std::ceil(45.0 / -std::log(z)));
    double hi = 0.0, mid = 1.0, at_k = 0.0, log_b = 0.0, log_k = 0.0;
    for (int kk = top; kk > ks; --kk) {
      if (kk == k) {
        at_k = mid;
        log_k = log_b;
      }
      // c_{kk-1} = (((1+z)kk + az - y) c_kk - (kk+1) c_{kk+1}) / (z (kk-1+alpha))
      const double lo = (((1.0 + z) * kk + a * z - y) * mid - (kk + 1.0) * hi) / (z * (kk - 1.0 + pc.alpha));
      hi = mid;
      mid = lo;
      if (std::abs(mid) > kBig) {
        hi /= kBig;
        mid /= kBig;
        log_b += std::log(kBig);
      }
    }
    // mid now holds c_ks in the backward normalization.
    if (at_k == 0.0) return 0.0;
    const double ratio = at_k / mid;
    const double log_abs = log_acc + std::log(std::abs(value)) + std::log(std::abs(ratio)) + (log_k - log_b);
    return std::copysign(std::exp(log_abs + lead), value * ratio);
  }
  if (value == 0.0) return 0.0;
  return std::copysign(std::exp(log_acc + std::log(std::abs(value)) + lead), value);
}

// ---------------------------------------------------------------- basis functions

TestFunction hermite_basis_function(const GaussianConstants& gc, int k, double log_scale) {
  if (log_scale > kMaxLogScale) throw NumericError("normalization failure: scale overflows");
  const double c = std::exp(log_scale);
  const double a1 = gc.alpha1;
  TestFunction f([=](double x) { return c * hermite_psi(k, a1, x); },
                 c * kCramerCertified * std::pow(2.0 * kPi, -0.25) * std::sqrt(a1));
  f.derivative = [=](double x) { return c * hermite_psi_derivative(k, a1, x); };
  return f;
}

TestFunction laguerre_basis_function(const PoissonConstants& pc, int k, double log_scale) {
  const double log_sup = pc.log_sup_bound(k) + log_scale;
  if (log_sup > kMaxLogScale) throw NumericError("normalization failure: scale overflows");
  const double c = std::exp(log_scale);
  TestFunction f([=](double x) { return c * laguerre_function(pc, k, x); }, std::exp(log_sup));
  f.derivative = [=](double x) { return c * laguerre_function_derivative(pc, k, x); };
  f.posterior_image = [=](double y) { return laguerre_image(pc, k, y, log_scale); };
  return f;
}

// ---------------------------------------------------------------- contrasts

ContrastConstants contrast_constants(const Eigen::MatrixXd& g) {
  ContrastConstants c;
  const int m = static_cast<int>(g.rows());
  if (m == 0) return c;
  c.tau_ref = g.diagonal().mean();
  if (m <= 8) {
    // Enumerate {0, +-1}^m; v and -v give the same form, so fix the sign of the first nonzero.
    int total = 1;
    for (int i = 0; i < m; ++i) total *= 3;
    c.tau = std::numeric_limits<double>::infinity();
    c.tau2 = 0.0;
    Eigen::VectorXd v(m);
    for (int code = 1; code < total; ++code) {
      int x = code, nnz = 0;
      for (int i = 0; i < m; ++i) {
        int digit = x % 3;
        x /= 3;
        v(i) = digit == 2 ? -1.0 : static_cast<double>(digit);
        nnz += digit != 0;
      }
      const double q = v.dot(g * v);
      c.tau = std::min(c.tau, q / nnz);
      c.tau2 = std::max(c.tau2, c.tau_ref * nnz - q);
    }
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g, Eigen::EigenvaluesOnly);
    const double lmin = es.eigenvalues().minCoeff();
    c.tau = lmin;
    c.tau2 = std::max(0.0, (c.tau_ref - lmin) * m);
    c.exhaustive = false;
  }
  if (m <= 16) {
    double best = 0.0;
    Eigen::VectorXd v(m);
    for (std::uint32_t mask = 1; mask < (1u << m); ++mask) {
      for (int i = 0; i < m; ++i) v(i) = (mask >> i) & 1u;
      best = std::max(best, v.dot(g * v));
    }
    c.tau1 = std::sqrt(best / m);
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g, Eigen::EigenvaluesOnly);
    c.tau1 = std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
    c.exhaustive = false;
  }
  return c;
}

// ---------------------------------------------------------------- families

std::vector<int> spread_indices(int m) {
  if (m < 0) throw InvalidArgument("family size must be nonnegative");
  std::vector<int> idx;
  for (int j = 1; j <= m; ++j) idx.push_back(m + 3 * j);
  return idx;
}

PerturbationFamily make_family(const BasePriorContext& ctx, std::vector<TestFunction> funcs,
                               std::vector<int> indices, std::string label, const GramOptions& opt) {
  PerturbationFamily f{ctx, std::move(funcs), std::move(indices), 0.0, 0.0, {}, {}, {}, std::move(label)};
  for (const auto& r : f.r) f.sup_bound = std::max(f.sup_bound, r.sup_bound);
  f.gram = gram(ctx, f.r, opt);
  f.gamma = f.r.empty() ? 0.0 : f.gram.K_gram.diagonal().maxCoeff();
  f.k1 = contrast_constants(f.gram.K1_gram);
  f.k = contrast_constants(f.gram.K_gram);
  return f;
}

PerturbationFamily gaussian_family(double s, int m, const GramOptions& opt) {
  if (m < 0) throw InvalidArgument("family size must be nonnegative");
  const GaussianConstants gc = gaussian_constants(s);
  std::vector<int> idx = spread_indices(m);
  std::vector<TestFunction> funcs;
  for (int i : idx) {
    const double l = gc.log_k1_norm2(i);
    if (!std::isfinite(l)) throw NumericError("normalization failure: (K1 psi_i, K1 psi_i) underflows");
    funcs.push_back(hermite_basis_function(gc, i, -0.5 * l));
  }
  return make_family(BasePriorContext::gaussian(s), std::move(funcs), std::move(idx), "gaussian-hermite", opt);
}

PerturbationFamily poisson_family(double alpha, double beta, int m, const GramOptions& opt) {
  if (m < 0) throw InvalidArgument("family size must be nonnegative");
  const PoissonConstants pc = poisson_constants(alpha, beta);
  std::vector<int> idx = spread_indices(m);
  std::vector<TestFunction> funcs;
  for (int k : idx) {
    const double l = pc.log_s1_diag(k);
    if (!std::isfinite(l)) throw NumericError("normalization failure: (S1 Gamma_k, Gamma_k) underflows");
    funcs.push_back(laguerre_basis_function(pc, k, -0.5 * l));
  }
  return make_family(BasePriorContext::gamma(alpha, beta), std::move(funcs), std::move(idx), "poisson-laguerre",
                     opt);
}

PerturbationFamily gaussian_density_family(double s, const std::vector<int>& indices, const GramOptions& opt) {
  const GaussianConstants gc = gaussian_constants(s);
  std::vector<TestFunction> funcs;
  for (int k : indices) funcs.push_back(hermite_basis_function(gc, k, -0.5 * gc.log_k_norm2(k)));
  return make_family(BasePriorContext::gaussian(s), std::move(funcs), indices, "gaussian-hermite-density", opt);
}

PerturbationFamily poisson_density_family(double alpha, double beta, const std::vector<int>& indices,
                                          const GramOptions& opt) {
  const PoissonConstants pc = poisson_constants(alpha, beta);
  std::vector<TestFunction> funcs;
  for (int k : indices) funcs.push_back(laguerre_basis_function(pc, k, -0.5 * pc.log_b(k)));
  return make_family(BasePriorContext::gamma(alpha, beta), std::move(funcs), indices, "poisson-laguerre-density",
                     opt);
}

PerturbationFamily rescaled(const PerturbationFamily& f, double c, const GramOptions& opt) {
  std::vector<TestFunction> funcs;
  for (const auto& r : f.r) funcs.push_back(scaled(r, c));
  return make_family(f.ctx, std::move(funcs), f.indices, f.label + "-rescaled", opt);
}

PerturbationFamily centered(const PerturbationFamily& f, const GramOptions& opt) {
  std::vector<TestFunction> funcs;
  for (const auto& r : f.r) {
    const double mean = f.ctx.prior().expectation(r.value);
    funcs.push_back(shifted(r, -mean));
  }
  return make_family(f.ctx, std::move(funcs), f.indices, f.label + "-centered", opt);
}

std::vector<double> parameter_grid(const PerturbationFamily& f, int points) {
  auto [lo, hi] = f.ctx.prior().effective_support(1e-16);
  int kmax = 0;
  for (int k : f.indices) kmax = std::max(kmax, k);
  if (f.ctx.is_gaussian()) {
    const double turning = 1.25 * std::sqrt(4.0 * kmax + 2.0) / gaussian_constants(f.ctx.s()).alpha1;
    lo = std::min(lo, -turning);
    hi = std::max(hi, turning);
  } else {
    const PoissonConstants pc = poisson_constants(f.ctx.alpha(), f.ctx.beta());
    hi = std::max(hi, 1.25 * (4.0 * kmax + 2.0 * pc.nu + 4.0) / pc.gamma2);
    lo = 0.0;
  }
  std::vector<double> g(points);
  for (int i = 0; i < points; ++i) g[i] = lo + (hi - lo) * i / (points - 1.0);
  return g;
}

double measured_sup(const PerturbationFamily& f, int points) {
  double best = 0.0;
  for (double x : parameter_grid(f, points))
    for (const auto& r : f.r) best = std::max(best, std::abs(r(x)));
  return best;
}

// ---------------------------------------------------------------- Assouad family

AssouadFamily::AssouadFamily(PerturbationFamily family, double n, const GramOptions& opt)
    : family_(std::move(family)), n_(n), delta_(0.0) {
  if (!(n >= 1.0)) throw InvalidArgument("sample size must be at least 1");
  const int m = family_.m();
  if (m > 64) throw InvalidArgument("hypercube dimension above 64 is not supported");
  if (m > 0) {
    const double ma = m * family_.sup_bound;
    delta_ = std::min(1.0 / std::max(std::sqrt(n * family_.gamma), ma), 1.0 / (16.0 * ma));
    if (!(delta_ > 0.0) || !std::isfinite(delta_)) throw InvalidArgument("Assouad construction needs delta > 0");
  }
  grid_ = observation_grid(family_.ctx, family_.sup_bound, opt);
  images_ = operator_images(family_.ctx, family_.r, grid_.y, opt);
  mu_.assign(m, 0.0);
  for (int i = 0; i < m; ++i)
    for (std::size_t p = 0; p < grid_.y.size(); ++p) mu_[i] += grid_.w[p] * images_.K[i][p];
}

double AssouadFamily::mu(Vertex u) const {
  double s = 0.0;
  for (int i = 0; i < m(); ++i)
    if ((u >> i) & 1u) s += mu_[i];
  return s;
}

TestFunction AssouadFamily::perturbation(Vertex u) const {
  std::vector<double> c(m());
  for (int i = 0; i < m(); ++i) c[i] = static_cast<double>((u >> i) & 1u);
  return combination(family_.r, c);
}

Prior AssouadFamily::prior(Vertex u) const {
  if (u == 0 || m() == 0) return family_.ctx.prior();
  TestFunction r = perturbation(u);
  return Prior::tilted(family_.ctx.prior(), r.value, delta_, 1.0 + delta_ * mu(u), 1.5);
}

double AssouadFamily::density_ratio(Vertex u, double theta) const {
  if (u == 0) return 1.0;
  double ru = 0.0;
  for (int i = 0; i < m(); ++i)
    if ((u >> i) & 1u) ru += family_.r[i](theta);
  return (1.0 + delta_ * ru) / (1.0 + delta_ * mu(u));
}

std::pair<double, double> AssouadFamily::density_ratio_range(Vertex u, int points) const {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double x : parameter_grid(family_, points)) {
    double r = density_ratio(u, x);
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  return {lo, hi};
}

double AssouadFamily::mixture_density(Vertex u, double y) const {
  double h = 0.0;
  for (int i = 0; i < m(); ++i)
    if ((u >> i) & 1u) h += apply_K(family_.ctx, family_.r[i], y);
  return family_.ctx.f0(y) * (1.0 + delta_ * h) / (1.0 + delta_ * mu(u));
}

}  // namespace eblab

namespace eblab {

OrthogonalityReport gaussian_orthogonality(double s, int k_max, const GramOptions& opt) {
  if (k_max < 0) throw InvalidArgument("k_max must be nonnegative");
  const GaussianConstants gc = gaussian_constants(s);
  std::vector<TestFunction> funcs;
  for (int k = 0; k <= k_max; ++k) funcs.push_back(hermite_basis_function(gc, k));
  const GramMatrices g = gram(BasePriorContext::gaussian(s), funcs, opt);
  OrthogonalityReport rep;
  for (int k = 0; k <= k_max; ++k) {
    for (int j = k; j <= k_max; ++j) {
      const double ek = k == j ? std::exp(gc.log_k_norm2(k)) : 0.0;
      const double dk = std::abs(g.K_gram(k, j) - ek);
      rep.entries.push_back({"K", k, j, g.K_gram(k, j), ek, dk});
      rep.max_k_deviation = std::max(rep.max_k_deviation, dk);

      const double e1 = gc.k1_gram_entry(k, j);
      const double scale = e1 != 0.0 ? std::abs(e1) : std::sqrt(gc.k1_gram_entry(k, k) * gc.k1_gram_entry(j, j));
      const double d1 = std::abs(g.K1_gram(k, j) - e1) / scale;
      rep.entries.push_back({"K1", k, j, g.K1_gram(k, j), e1, d1});
      rep.max_k1_deviation = std::max(rep.max_k1_deviation, d1);
    }
  }
  return rep;
}

OrthogonalityReport poisson_orthogonality(double alpha, double beta, int k_max, const GramOptions& opt) {
  if (k_max < 0) throw InvalidArgument("k_max must be nonnegative");
  const PoissonConstants pc = poisson_constants(alpha, beta);
  std::vector<TestFunction> funcs;
  for (int k = 0; k <= k_max; ++k) funcs.push_back(laguerre_basis_function(pc, k));
  const GramMatrices g = gram(BasePriorContext::gamma(alpha, beta), funcs, opt);
  OrthogonalityReport rep;
  for (int k = 0; k <= k_max; ++k) {
    for (int j = k; j <= k_max; ++j) {
      const double ek = k == j ? pc.b(k) : 0.0;
      const double ds = std::abs(g.K_gram(k, j) - ek) / std::sqrt(pc.b(k) * pc.b(j));
      rep.entries.push_back({"S", k, j, g.K_gram(k, j), ek, ds});
      rep.max_k_deviation = std::max(rep.max_k_deviation, ds);

      const double scale = std::exp(0.5 * (pc.log_s1_diag(k) + pc.log_s1_diag(j)));
      if (k == j) {
        const double e1 = std::exp(pc.log_s1_diag(k));
        const double d1 = std::abs(g.K1_gram(k, k) - e1) / e1;
        rep.entries.push_back({"S1", k, j, g.K1_gram(k, k), e1, d1});
        rep.max_k1_deviation = std::max(rep.max_k1_deviation, d1);
      } else if (j - k >= 3) {
        const double d = std::abs(g.K1_gram(k, j)) / scale;
        rep.entries.push_back({"S1", k, j, g.K1_gram(k, j), 0.0, d});
        rep.max_band_deviation = std::max(rep.max_band_deviation, d);
      }
    }
  }
  return rep;
}

}  // namespace eblab
