#include "eblab/quadrature.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <utility>

#include "eblab/errors.hpp"
#include "eblab/specfun.hpp"

namespace eblab {

namespace {

// Jacobi-matrix coefficients for monic orthogonal polynomials:
// p_{k+1} = (x - a_k) p_k - b_k^2 p_{k-1}; off[k] = b_{k+1}.
struct Recurrence {
  std::vector<double> diag;  // a_0 .. a_n
  std::vector<double> off;   // b_1 .. b_n
  double mass = 1.0;         // total mass of the weight
};

// Evaluates the orthonormal p_n and p_n' at x and the Christoffel sum
// sum_{k<n} p_k(x)^2, with rescaling against overflow.
struct ChristoffelEval {
  double pn = 0.0, dpn = 0.0, log_sum = 0.0;
};

ChristoffelEval christoffel(const Recurrence& rc, int n, double x) {
  constexpr double big = 1e150;
  double p_prev = 0.0, p = 1.0 / std::sqrt(rc.mass);
  double d_prev = 0.0, d = 0.0;
  double sum = p * p;
  double log_scale = 0.0;  // true value = stored * exp(log_scale)
  for (int k = 0; k < n; ++k) {
    double bk = k > 0 ? rc.off[k - 1] : 0.0;
    double bnext = rc.off[k];
    double p_next = ((x - rc.diag[k]) * p - bk * p_prev) / bnext;
    double d_next = (p + (x - rc.diag[k]) * d - bk * d_prev) / bnext;
    p_prev = p;
    p = p_next;
    d_prev = d;
    d = d_next;
    if (k + 1 < n) sum += p * p;
    if (std::abs(p) > big || std::abs(d) > big) {
      p /= big;
      p_prev /= big;
      d /= big;
      d_prev /= big;
      sum /= big * big;
      log_scale += std::log(big);
    }
  }
  ChristoffelEval out;
  out.pn = p;
  out.dpn = d;
  out.log_sum = std::log(sum) + 2.0 * log_scale;
  return out;
}

QuadratureRule gauss_from_recurrence(const Recurrence& rc, int n, QuadratureDomain domain) {
  Eigen::VectorXd diag(n), sub(std::max(n - 1, 0));
  for (int k = 0; k < n; ++k) diag(k) = rc.diag[k];
  for (int k = 0; k + 1 < n; ++k) sub(k) = rc.off[k];
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericError("Golub-Welsch eigenvalue solve failed");
  Eigen::VectorXd ev = solver.eigenvalues();

  QuadratureRule rule;
  rule.domain = domain;
  rule.exact_degree = 2 * n - 1;
  rule.nodes.reserve(n);
  rule.weights.reserve(n);
  for (int i = 0; i < n; ++i) {
    double x = ev(i);
    double gap = std::numeric_limits<double>::infinity();
    if (i > 0) gap = std::min(gap, x - ev(i - 1));
    if (i + 1 < n) gap = std::min(gap, ev(i + 1) - x);
    // Newton polish on p_n; steps larger than a fraction of the node gap are rejected.
    for (int it = 0; it < 3; ++it) {
      ChristoffelEval ce = christoffel(rc, n, x);
      if (ce.dpn == 0.0) break;
      double step = ce.pn / ce.dpn;
      if (!std::isfinite(step) || std::abs(step) > 0.1 * gap) break;
      x -= step;
      if (std::abs(step) <= 1e-16 * std::max(1.0, std::abs(x))) break;
    }
    double w = std::exp(-christoffel(rc, n, x).log_sum);
    if (w > 0.0 && std::isfinite(w)) {
      rule.nodes.push_back(x);
      rule.weights.push_back(w);
    }
  }
  return rule;
}

Recurrence hermite_recurrence(int n) {
  Recurrence rc;
  rc.diag.assign(n + 1, 0.0);
  rc.off.resize(n + 1);
  for (int k = 0; k <= n; ++k) rc.off[k] = std::sqrt(k + 1.0);
  rc.mass = 1.0;
  return rc;
}

Recurrence gamma_recurrence(int n, double shape) {
  Recurrence rc;
  rc.diag.resize(n + 1);
  rc.off.resize(n + 1);
  for (int k = 0; k <= n; ++k) {
    rc.diag[k] = 2.0 * k + shape;
    rc.off[k] = std::sqrt((k + 1.0) * (k + shape));
  }
  rc.mass = 1.0;
  return rc;
}

Recurrence legendre_recurrence(int n) {
  Recurrence rc;
  rc.diag.assign(n + 1, 0.0);
  rc.off.resize(n + 1);
  for (int k = 0; k <= n; ++k) {
    double j = k + 1.0;
    rc.off[k] = j / std::sqrt(4.0 * j * j - 1.0);
  }
  rc.mass = 2.0;
  return rc;
}

void check_order(int order) {
  if (order < 2) throw InvalidArgument("quadrature order must be at least 2");
}

}  // namespace

QuadratureRule gauss_hermite(int order) {
  check_order(order);
  return gauss_from_recurrence(hermite_recurrence(order), order, QuadratureDomain::RealLineGaussian);
}

QuadratureRule gauss_gamma(int order, double shape, double rate) {
  check_order(order);
  if (!(shape > 0.0) || !(rate > 0.0)) throw InvalidArgument("gamma rule needs shape > 0 and rate > 0");
  QuadratureRule rule =
      gauss_from_recurrence(gamma_recurrence(order, shape), order, QuadratureDomain::HalfLineGamma);
  if (rate != 1.0)
    for (double& x : rule.nodes) x /= rate;
  return rule;
}

QuadratureRule gauss_legendre(int order, double lo, double hi, int panels) {
  check_order(order);
  if (!(hi > lo)) throw InvalidArgument("interval rule needs hi > lo");
  if (panels < 1) throw InvalidArgument("interval rule needs at least one panel");
  auto base = cached_gauss_legendre(order);
  QuadratureRule rule;
  rule.domain = QuadratureDomain::TruncatedInterval;
  rule.exact_degree = 2 * order - 1;
  rule.nodes.reserve(static_cast<std::size_t>(order) * panels);
  rule.weights.reserve(rule.nodes.capacity());
  const double width = (hi - lo) / panels;
  for (int p = 0; p < panels; ++p) {
    double a = lo + p * width;
    double half = 0.5 * width, mid = a + half;
    for (std::size_t i = 0; i < base->size(); ++i) {
      rule.nodes.push_back(mid + half * base->nodes[i]);
      rule.weights.push_back(half * base->weights[i]);
    }
  }
  return rule;
}

QuadratureRule quadrature(QuadratureDomain kind, int order, const QuadratureParams& params) {
  switch (kind) {
    case QuadratureDomain::RealLineGaussian:
      return gauss_hermite(order);
    case QuadratureDomain::HalfLineGamma:
      return gauss_gamma(order, params.shape, params.rate);
    case QuadratureDomain::TruncatedInterval:
      return gauss_legendre(order, params.lo, params.hi, params.panels);
  }
  throw InvalidArgument("unsupported quadrature kind");
}

namespace {

template <typename Key>
class RuleCache {
 public:
  template <typename Make>
  std::shared_ptr<const QuadratureRule> get(const Key& key, Make&& make) {
    {
      std::lock_guard lock(mutex_);
      auto it = rules_.find(key);
      if (it != rules_.end()) return it->second;
    }
    auto rule = std::make_shared<const QuadratureRule>(make());
    std::lock_guard lock(mutex_);
    if (rules_.size() > 4096) rules_.clear();
    return rules_.emplace(key, rule).first->second;
  }

 private:
  std::mutex mutex_;
  std::map<Key, std::shared_ptr<const QuadratureRule>> rules_;
};

}  // namespace

std::shared_ptr<const QuadratureRule> cached_gauss_hermite(int order) {
  static RuleCache<int> cache;
  return cache.get(order, [&] { return gauss_hermite(order); });
}

std::shared_ptr<const QuadratureRule> cached_gauss_gamma(int order, double shape) {
  static RuleCache<std::pair<int, double>> cache;
  return cache.get({order, shape}, [&] { return gauss_gamma(order, shape, 1.0); });
}

std::shared_ptr<const QuadratureRule> cached_gauss_legendre(int order) {
  static RuleCache<int> cache;
  return cache.get(order, [&] {
    check_order(order);
    return gauss_from_recurrence(legendre_recurrence(order), order, QuadratureDomain::TruncatedInterval);
  });
}

}  // namespace eblab
