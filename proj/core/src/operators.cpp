#include "eblab/operators.hpp"

#include <algorithm>
#include <cmath>

#include "eblab/errors.hpp"
#include "eblab/parallel.hpp"
#include "eblab/specfun.hpp"

namespace eblab {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

// ---------------------------------------------------------------- test functions

TestFunction constant_function(double c) {
  TestFunction f([c](double) { return c; }, std::abs(c));
  f.derivative = [](double) { return 0.0; };
  f.posterior_image = [c](double) { return c; };
  return f;
}

TestFunction scaled(const TestFunction& r, double c) {
  TestFunction f([v = r.value, c](double x) { return c * v(x); }, std::abs(c) * r.sup_bound);
  if (r.derivative) f.derivative = [d = r.derivative, c](double x) { return c * d(x); };
  if (r.posterior_image) f.posterior_image = [k = r.posterior_image, c](double y) { return c * k(y); };
  return f;
}

TestFunction shifted(const TestFunction& r, double c) {
  TestFunction f([v = r.value, c](double x) { return v(x) + c; }, r.sup_bound + std::abs(c));
  f.derivative = r.derivative;
  if (r.posterior_image) f.posterior_image = [k = r.posterior_image, c](double y) { return k(y) + c; };
  return f;
}

TestFunction combination(const std::vector<TestFunction>& fs, const std::vector<double>& coeffs) {
  if (fs.size() != coeffs.size()) throw InvalidArgument("combination: size mismatch");
  std::vector<TestFunction> parts;
  std::vector<double> c;
  double sup = 0.0;
  bool deriv = true, image = true;
  for (std::size_t i = 0; i < fs.size(); ++i) {
    if (coeffs[i] == 0.0) continue;
    parts.push_back(fs[i]);
    c.push_back(coeffs[i]);
    sup += std::abs(coeffs[i]) * fs[i].sup_bound;
    deriv = deriv && fs[i].has_derivative();
    image = image && fs[i].has_image();
  }
  auto sum_of = [parts, c](auto member) {
    return [parts, c, member](double x) {
      double s = 0.0;
      for (std::size_t i = 0; i < parts.size(); ++i) s += c[i] * (parts[i].*member)(x);
      return s;
    };
  };
  TestFunction f(sum_of(&TestFunction::value), sup);
  if (deriv) f.derivative = sum_of(&TestFunction::derivative);
  if (image) f.posterior_image = sum_of(&TestFunction::posterior_image);
  return f;
}

// ---------------------------------------------------------------- base context

BasePriorContext BasePriorContext::gaussian(double s) {
  if (!(s > 0.0)) throw InvalidArgument("Gaussian base prior needs s > 0");
  BasePriorContext ctx(MixtureModel::gaussian(), Prior::gaussian(0.0, s));
  ctx.s_ = s;
  ctx.eta_ = std::sqrt(s / (1.0 + s));
  return ctx;
}

BasePriorContext BasePriorContext::gamma(double alpha, double beta) {
  if (!(alpha > 0.0) || !(beta > 0.0)) throw InvalidArgument("Gamma base prior needs alpha, beta > 0");
  BasePriorContext ctx(MixtureModel::poisson(), Prior::gamma(alpha, beta));
  ctx.alpha_ = alpha;
  ctx.beta_ = beta;
  return ctx;
}

BasePriorContext BasePriorContext::from(const MixtureModel& model, const Prior& g0) {
  if (!model.is_poisson()) {
    if (const auto* g = g0.as<GaussianPrior>(); g && g->mean == 0.0) return gaussian(g->variance);
    throw InvalidArgument("Gaussian-channel base prior must be N(0, s)");
  }
  if (const auto* g = g0.as<GammaPrior>()) return gamma(g->shape, g->rate);
  if (const auto* e = g0.as<ExponentialPrior>()) return gamma(1.0, e->rate);
  throw InvalidArgument("Poisson-channel base prior must be Gamma or Exponential");
}

double BasePriorContext::log_f0(double y) const { return log_mixture_density(model_, prior_, y); }

double BasePriorContext::f0(double y) const { return std::exp(log_f0(y)); }

double BasePriorContext::shift_ratio(double y) const {
  if (is_gaussian()) throw InvalidArgument("shift ratio is defined for the Poisson channel");
  return (y + alpha_) / (1.0 + beta_);
}

double BasePriorContext::posterior_mean(double y) const {
  return is_gaussian() ? eta_ * eta_ * y : (y + alpha_) / (1.0 + beta_);
}

// ---------------------------------------------------------------- K and K1

namespace {

template <typename Fn>
double posterior_integral(const BasePriorContext& ctx, double y, Fn&& g) {
  if (ctx.is_gaussian()) {
    auto rule = cached_gauss_hermite(ctx.hermite_order);
    const double eta = ctx.eta(), center = eta * eta * y;
    double s = 0.0;
    for (std::size_t i = 0; i < rule->size(); ++i) s += rule->weights[i] * g(center + eta * rule->nodes[i]);
    return s;
  }
  if (y < 0.0 || y != std::floor(y)) throw InvalidArgument("Poisson observations must be nonnegative integers");
  auto rule = cached_gauss_gamma(ctx.gamma_order, y + ctx.alpha());
  const double scale = 1.0 / (1.0 + ctx.beta());
  double s = 0.0;
  for (std::size_t i = 0; i < rule->size(); ++i) s += rule->weights[i] * g(rule->nodes[i] * scale);
  return s;
}

}  // namespace

double apply_K(const BasePriorContext& ctx, const TestFunction& r, double y) {
  if (r.posterior_image) return r.posterior_image(y);
  return posterior_integral(ctx, y, r.value);
}

double apply_K1(const BasePriorContext& ctx, const TestFunction& r, double y, K1Path path) {
  if (path == K1Path::Auto) {
    if (!ctx.is_gaussian() && r.has_image())
      path = K1Path::ShiftDifference;
    else if (r.has_derivative())
      path = K1Path::Derivative;
    else
      path = K1Path::Definition;
  }
  switch (path) {
    case K1Path::Definition: {
      double k_theta_r = posterior_integral(ctx, y, [&](double x) { return x * r.value(x); });
      double k_r = posterior_integral(ctx, y, r.value);
      return k_theta_r - ctx.posterior_mean(y) * k_r;
    }
    case K1Path::Derivative: {
      if (!r.has_derivative()) throw InvalidArgument("derivative path requires r'");
      if (ctx.is_gaussian()) return ctx.eta() * ctx.eta() * posterior_integral(ctx, y, r.derivative);
      return posterior_integral(ctx, y, [&](double x) { return x * r.derivative(x); }) / (1.0 + ctx.beta());
    }
    case K1Path::ShiftDifference: {
      if (ctx.is_gaussian()) throw InvalidArgument("shift-difference path is Poisson only");
      return ctx.shift_ratio(y) * (apply_K(ctx, r, y + 1.0) - apply_K(ctx, r, y));
    }
    case K1Path::Auto:
      break;
  }
  throw InvalidArgument("unknown K1 path");
}

// ---------------------------------------------------------------- kernels

double poisson_kernel_log_constant(double alpha, double beta) {
  return std::log1p(beta) + alpha * std::log(beta) - log_gamma(alpha);
}

double posterior_kernel(const BasePriorContext& ctx, double x, double y) {
  if (ctx.is_gaussian()) {
    const double eta = ctx.eta();
    return normal_pdf((x - eta * eta * y) / eta) / eta;
  }
  if (x < 0.0) return 0.0;
  const double shape = y + ctx.alpha(), rate = 1.0 + ctx.beta();
  if (x == 0.0) return shape == 1.0 ? rate : (shape > 1.0 ? 0.0 : kInf);
  return std::exp(shape * std::log(rate) + (shape - 1.0) * std::log(x) - rate * x - log_gamma(shape));
}

double s_kernel(const BasePriorContext& ctx, double x, double x2) {
  if (ctx.is_gaussian()) {
    const double s = ctx.s();
    const double rho = s / (1.0 + s);
    const double lambda1 = (1.0 + s) / (2.0 * kPi * s * std::sqrt(1.0 + 2.0 * s));
    const double lambda2 = (1.0 + s) * (1.0 + s) / (s * (1.0 + 2.0 * s));
    return lambda1 * std::exp(-0.5 * lambda2 * (x * x + x2 * x2 - 2.0 * rho * x * x2));
  }
  if (x < 0.0 || x2 < 0.0) throw InvalidArgument("Poisson S-kernel is defined on [0, inf)");
  const double a = ctx.alpha(), b = ctx.beta(), B = 1.0 + b;
  const double t = B * x * x2;
  double log_series = log_bessel_power_series(a - 1.0, t);
  return std::exp(poisson_kernel_log_constant(a, b) - B * (x + x2) + log_series);
}

double s_kernel_by_definition(const BasePriorContext& ctx, double x, double x2) {
  if (ctx.is_gaussian()) {
    const double sd = std::sqrt(1.0 + ctx.s());
    QuadratureRule rule = gauss_legendre(20, -16.0 * sd, 16.0 * sd, 128);
    double s = 0.0;
    for (std::size_t i = 0; i < rule.size(); ++i) {
      double y = rule.nodes[i];
      s += rule.weights[i] * ctx.f0(y) * posterior_kernel(ctx, x, y) * posterior_kernel(ctx, x2, y);
    }
    return s;
  }
  double s = 0.0;
  for (long y = 0; y < 1'000'000; ++y) {
    double term = ctx.f0(static_cast<double>(y)) * posterior_kernel(ctx, x, static_cast<double>(y)) *
                  posterior_kernel(ctx, x2, static_cast<double>(y));
    s += term;
    if (y > 10 && term < 1e-18 * s && ctx.posterior_mean(static_cast<double>(y)) > std::max(x, x2)) break;
  }
  return s;
}

// ---------------------------------------------------------------- grams

ObservationGrid observation_grid(const BasePriorContext& ctx, double sup_bound, const GramOptions& opt) {
  if (!std::isfinite(sup_bound)) throw NumericError("tail certification failure: unbounded test function");
  const double a2 = std::max(1.0, sup_bound * sup_bound);
  ObservationGrid grid;
  if (ctx.is_gaussian()) {
    const double sd = std::sqrt(1.0 + ctx.s());
    const double width = std::max(opt.min_width_sd, std::sqrt(2.0 * std::log(a2 / opt.tail_tol)));
    const double L = width * sd;
    const int panels = static_cast<int>(std::ceil(2.0 * width * opt.panels_per_sd));
    QuadratureRule rule = gauss_legendre(opt.legendre_order, -L, L, panels);
    grid.y = rule.nodes;
    grid.w.resize(rule.size());
    for (std::size_t i = 0; i < rule.size(); ++i) grid.w[i] = rule.weights[i] * ctx.f0(rule.nodes[i]);
    // |K r| <= a and |K1 r| <= eta a < a outside [-L, L].
    grid.tail_bound = a2 * 2.0 * normal_sf(width);
    return grid;
  }
  const double alpha = ctx.alpha(), B = 1.0 + ctx.beta();
  // Neglected mass of f0(y) a^2 (1 + Var(theta|y)); the ratio of consecutive terms is bounded by q.
  for (long y = 0; y <= opt.max_poisson_y; ++y) {
    const double yd = static_cast<double>(y);
    grid.y.push_back(yd);
    grid.w.push_back(ctx.f0(yd));
    const double next = yd + 1.0;
    const double q = (alpha >= 1.0 ? (next + alpha) / ((next + 1.0) * B) : 1.0 / B) * (1.0 + 1.0 / (B * B));
    if (q >= 1.0) continue;
    const double g = ctx.f0(next) * a2 * (1.0 + (next + alpha) / (B * B));
    const double tail = g / (1.0 - q);
    if (tail <= opt.tail_tol) {
      grid.tail_bound = tail;
      return grid;
    }
  }
  throw NumericError("tail certification failure: Poisson y-summation did not converge");
}

OperatorImages operator_images(const BasePriorContext& ctx, const std::vector<TestFunction>& funcs,
                               const std::vector<double>& ys, const GramOptions& opt) {
  OperatorImages img;
  img.K.assign(funcs.size(), std::vector<double>(ys.size()));
  img.K1.assign(funcs.size(), std::vector<double>(ys.size()));
  parallel_for(funcs.size(), opt.threads, [&](std::size_t i) {
    const TestFunction& r = funcs[i];
    K1Path path = opt.path;
    if (path == K1Path::Auto && !ctx.is_gaussian() && r.has_image()) path = K1Path::ShiftDifference;
    double k_next = 0.0;
    for (std::size_t p = 0; p < ys.size(); ++p) {
      const double y = ys[p];
      if (path == K1Path::ShiftDifference) {
        // Reuse K r(y+1) along consecutive integer grids.
        double k_here = (p > 0 && ys[p - 1] + 1.0 == y) ? k_next : apply_K(ctx, r, y);
        k_next = apply_K(ctx, r, y + 1.0);
        img.K[i][p] = k_here;
        img.K1[i][p] = ctx.shift_ratio(y) * (k_next - k_here);
      } else {
        img.K[i][p] = apply_K(ctx, r, y);
        img.K1[i][p] = apply_K1(ctx, r, y, path);
      }
    }
  });
  return img;
}

GramMatrices gram(const BasePriorContext& ctx, const std::vector<TestFunction>& funcs, const GramOptions& opt) {
  double sup = 0.0;
  for (const auto& f : funcs) sup = std::max(sup, f.sup_bound);
  ObservationGrid grid = observation_grid(ctx, sup, opt);
  OperatorImages img = operator_images(ctx, funcs, grid.y, opt);
  const std::size_t m = funcs.size();
  GramMatrices g;
  g.K_gram = Eigen::MatrixXd::Zero(m, m);
  g.K1_gram = Eigen::MatrixXd::Zero(m, m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i; j < m; ++j) {
      double a = 0.0, b = 0.0;
      for (std::size_t p = 0; p < grid.y.size(); ++p) {
        a += grid.w[p] * img.K[i][p] * img.K[j][p];
        b += grid.w[p] * img.K1[i][p] * img.K1[j][p];
      }
      g.K_gram(i, j) = g.K_gram(j, i) = a;
      g.K1_gram(i, j) = g.K1_gram(j, i) = b;
    }
  }
  g.grid_size = grid.y.size();
  g.tail_bound = grid.tail_bound;
  return g;
}

// ---------------------------------------------------------------- classical identities

double mehler_partial_sum(double mu, double u, double v, int terms) {
  double s = 0.0, p = 1.0;
  for (int k = 0; k < terms; ++k) {
    s += p * hermite_normalized(k, u) * hermite_normalized(k, v);
    p *= mu;
  }
  return s;
}

double mehler_closed_form(double mu, double u, double v) {
  const double d = 1.0 - mu * mu;
  return std::exp((2.0 * mu * u * v - mu * mu * (u * u + v * v)) / (2.0 * d) - 0.25 * (u * u + v * v)) /
         std::sqrt(d);
}

double hardy_hille_partial_sum(double nu, double x, double y, double z, int terms) {
  double s = 0.0;
  for (int n = 0; n < terms; ++n) {
    double c = std::exp(log_gamma(n + 1.0) - log_gamma(n + nu + 1.0));
    s += c * laguerre(n, nu, x) * laguerre(n, nu, y) * std::pow(z, n);
  }
  return s;
}

double hardy_hille_closed_form(double nu, double x, double y, double z) {
  if (!(std::abs(z) < 1.0)) throw InvalidArgument("Hardy-Hille needs |z| < 1");
  const double pre = std::exp(-(x + y) * z / (1.0 - z)) / (1.0 - z);
  const double p = x * y * z;
  if (p > 0.0) {
    const double w = 2.0 * std::sqrt(p) / (1.0 - z);
    return pre * std::exp(std::log(bessel_i_scaled(nu, w)) + w - 0.5 * nu * std::log(p));
  }
  // Entire series in t = xyz/(1-z)^2, valid for either sign of t.
  const double t = p / ((1.0 - z) * (1.0 - z));
  double s = 0.0, term = std::exp(-log_gamma(nu + 1.0));
  for (int j = 0; j < 400; ++j) {
    s += term;
    term *= t / ((j + 1.0) * (j + nu + 1.0));
    if (std::abs(term) < 1e-18 * std::abs(s)) break;
  }
  return pre * std::pow(1.0 - z, -nu) * s;
}

}  // namespace eblab
