#pragma once

#include <memory>
#include <vector>

namespace eblab {

enum class QuadratureDomain {
  RealLineGaussian,  // weight phi(x), total mass 1
  HalfLineGamma,     // Gamma(shape, rate) probability density
  TruncatedInterval  // Lebesgue measure on [lo, hi], composite Gauss-Legendre
};

struct QuadratureParams {
  double shape = 1.0;
  double rate = 1.0;
  double lo = -1.0;
  double hi = 1.0;
  int panels = 1;
};

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
  QuadratureDomain domain = QuadratureDomain::RealLineGaussian;
  int exact_degree = 0;  // per panel for composite rules

  std::size_t size() const { return nodes.size(); }

  template <typename Fn>
  double integrate(Fn&& f) const {
    double s = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) s += weights[i] * f(nodes[i]);
    return s;
  }
};

QuadratureRule quadrature(QuadratureDomain kind, int order, const QuadratureParams& params = {});

QuadratureRule gauss_hermite(int order);
QuadratureRule gauss_gamma(int order, double shape, double rate = 1.0);
QuadratureRule gauss_legendre(int order, double lo, double hi, int panels = 1);

// Thread-safe memoized standard rules (Hermite on phi, Gamma with rate 1,
// Legendre on [-1, 1]).
std::shared_ptr<const QuadratureRule> cached_gauss_hermite(int order);
std::shared_ptr<const QuadratureRule> cached_gauss_gamma(int order, double shape);
std::shared_ptr<const QuadratureRule> cached_gauss_legendre(int order);

inline constexpr int kDefaultHermiteOrder = 200;
inline constexpr int kDefaultGammaOrder = 128;

}  // namespace eblab
