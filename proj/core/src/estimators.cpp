#include "eblab/estimators.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>

#include "eblab/errors.hpp"

namespace eblab {

namespace {

std::size_t count_index(double y) {
  if (!(y >= 0.0) || y != std::floor(y)) throw InvalidArgument("count data must be nonnegative integers");
  return static_cast<std::size_t>(y);
}

}  // namespace

std::string to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::Robbins: return "robbins";
    case EstimatorKind::RobbinsAddOne: return "robbins-add-one";
    case EstimatorKind::Gmleb: return "gmleb";
    case EstimatorKind::BayesOracle: return "oracle";
    case EstimatorKind::Identity: return "identity";
    case EstimatorKind::CompoundOracle: return "compound-oracle";
  }
  return "unknown";
}

EstimatorKind parse_estimator_kind(const std::string& name) {
  static const std::map<std::string, EstimatorKind> table{
      {"robbins", EstimatorKind::Robbins},         {"robbins-add-one", EstimatorKind::RobbinsAddOne},
      {"gmleb", EstimatorKind::Gmleb},             {"npmle", EstimatorKind::Gmleb},
      {"oracle", EstimatorKind::BayesOracle},      {"bayes", EstimatorKind::BayesOracle},
      {"identity", EstimatorKind::Identity},       {"compound-oracle", EstimatorKind::CompoundOracle}};
  auto it = table.find(name);
  if (it == table.end()) throw UnknownEstimator(name);
  return it->second;
}

CountTable::CountTable(std::span<const double> y) {
  for (double v : y) {
    std::size_t i = count_index(v);
    if (i >= counts_.size()) counts_.resize(i + 1, 0);
    ++counts_[i];
  }
  total_ = y.size();
}

std::size_t CountTable::operator()(double y) const {
  std::size_t i = count_index(y);
  return i < counts_.size() ? counts_[i] : 0;
}

std::vector<double> robbins_total(std::span<const double> y) {
  CountTable n(y);
  std::vector<double> out(y.size());
  for (std::size_t j = 0; j < y.size(); ++j)
    out[j] = (y[j] + 1.0) * static_cast<double>(n(y[j] + 1.0)) / static_cast<double>(n(y[j]));
  return out;
}

double robbins_predict(const CountTable& train, double y) {
  return (y + 1.0) * static_cast<double>(train(y + 1.0)) / (static_cast<double>(train(y)) + 1.0);
}

double robbins_predict(std::span<const double> train, double y) { return robbins_predict(CountTable(train), y); }

// ---------------------------------------------------------------- NPMLE

std::vector<double> npmle_default_grid(const MixtureModel& model, std::span<const double> y, int points) {
  if (y.empty()) throw InvalidArgument("NPMLE needs at least one observation");
  if (points < 1) throw InvalidArgument("NPMLE grid needs at least one point");
  auto [mn, mx] = std::minmax_element(y.begin(), y.end());
  double lo, hi;
  if (model.is_poisson()) {
    lo = 0.0;
    hi = *mx + 3.0 * std::sqrt(*mx + 1.0);
  } else {
    lo = *mn - 1.0;
    hi = *mx + 1.0;
  }
  std::vector<double> g(points);
  if (points == 1) {
    g[0] = 0.5 * (lo + hi);
    return g;
  }
  for (int i = 0; i < points; ++i) g[i] = lo + (hi - lo) * i / (points - 1.0);
  return g;
}

NpmleResult npmle_fit(const MixtureModel& model, std::span<const double> y, const NpmleOptions& opt) {
  if (y.empty()) throw InvalidArgument("NPMLE needs at least one observation");
  NpmleResult res;
  res.grid = opt.grid.empty() ? npmle_default_grid(model, y, opt.grid_points) : opt.grid;
  const std::size_t K = res.grid.size();

  // Distinct observations with multiplicities.
  std::map<double, double> distinct;
  for (double v : y) distinct[v] += 1.0;
  const std::size_t J = distinct.size();
  std::vector<double> mult, shift;
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> L(J, K);
  std::size_t j = 0;
  for (auto [v, c] : distinct) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < K; ++k) {
      L(j, k) = model.log_likelihood(res.grid[k], v);
      mx = std::max(mx, L(j, k));
    }
    if (!std::isfinite(mx)) throw InvalidArgument("NPMLE grid assigns zero likelihood to an observation");
    for (std::size_t k = 0; k < K; ++k) L(j, k) = std::exp(L(j, k) - mx);
    mult.push_back(c);
    shift.push_back(mx);
    ++j;
  }

  const double n = static_cast<double>(y.size());
  const Eigen::Map<const Eigen::VectorXd> m(mult.data(), static_cast<Eigen::Index>(J));
  // Log-likelihood at w; d receives the gradient ratios D_k = (1/n) sum_j L_jk / f_j.
  // The likelihood is accumulated in extended precision so that EM's ascent is
  // visible well below double rounding of the total.
  Eigen::VectorXd f(static_cast<Eigen::Index>(J));
  auto evaluate = [&](const Eigen::VectorXd& w, Eigen::VectorXd& d) {
    long double ll = 0.0L;
    for (std::size_t r = 0; r < J; ++r) {
      long double fr = 0.0L;
      const double* row = L.row(static_cast<Eigen::Index>(r)).data();
      for (std::size_t k = 0; k < K; ++k) fr += static_cast<long double>(row[k]) * w[k];
      f[r] = static_cast<double>(fr);
      ll += mult[r] * (std::log(fr) + shift[r]);
    }
    d = L.transpose() * (m.array() / (n * f.array())).matrix();
    return ll;
  };
  auto em_step = [](const Eigen::VectorXd& w, const Eigen::VectorXd& d) {
    Eigen::VectorXd x = w.cwiseProduct(d);
    return Eigen::VectorXd(x / x.sum());
  };

  // EM with SQUAREM extrapolation; an extrapolated point is kept only if it does not
  // lower the likelihood, so the recorded trace stays monotone.
  Eigen::VectorXd w = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(K), 1.0 / K), d, d1, d2, d3;
  long double ll = evaluate(w, d);
  const double floor = 1e-12 / K;
  for (int it = 0;; ++it) {
    res.log_likelihood.push_back(static_cast<double>(ll));
    res.gradient_gap = d.maxCoeff() - 1.0;
    if (res.gradient_gap <= opt.tol) {
      res.converged = true;
      break;
    }
    if (it >= opt.max_iter) break;
    const Eigen::VectorXd w1 = em_step(w, d);
    evaluate(w1, d1);
    const Eigen::VectorXd w2 = em_step(w1, d1);
    const long double ll2 = evaluate(w2, d2);
    const Eigen::VectorXd r = w1 - w, v = w2 - w1 - r;
    bool accepted = false;
    if (v.norm() > 0.0) {
      const double alpha = std::min(-r.norm() / v.norm(), -1.0);
      Eigen::VectorXd wp = w - 2.0 * alpha * r + alpha * alpha * v;
      wp = wp.cwiseMax(floor);
      wp /= wp.sum();
      if (wp.allFinite()) {
        evaluate(wp, d3);
        Eigen::VectorXd w3 = em_step(wp, d3);
        const long double ll3 = evaluate(w3, d3);
        if (ll3 >= ll2 && ll3 >= ll) {
          w = std::move(w3);
          d = d3;
          ll = ll3;
          accepted = true;
        }
      }
    }
    if (!accepted) {
      // At working precision EM can no longer improve; stop rather than record a decrease.
      if (ll2 < ll) break;
      w = w2;
      d = d2;
      ll = ll2;
    }
    res.iterations = it + 1;
  }

  res.weights.assign(w.data(), w.data() + w.size());
  std::vector<Atom> atoms;
  for (std::size_t k = 0; k < K; ++k)
    if (w[k] > 1e-15) atoms.push_back({res.grid[k], w[k]});
  long double s = 0.0L;
  for (const auto& a : atoms) s += a.weight;
  for (auto& a : atoms) a.weight = static_cast<double>(a.weight / s);
  res.prior = Prior::discrete(std::move(atoms));
  return res;
}

double npmle_log_likelihood(const MixtureModel& model, std::span<const double> y, const Prior& prior) {
  long double ll = 0.0L;
  for (double v : y) ll += log_mixture_density(model, prior, v);
  return static_cast<double>(ll);
}

double gmleb_predict(const Prior& fitted, const MixtureModel& model, double y) {
  return bayes_estimate(model, fitted, y);
}

// ---------------------------------------------------------------- fitted estimators

FittedEstimator FittedEstimator::fit(const EstimatorSpec& spec, const MixtureModel& model,
                                     std::span<const double> train, std::span<const double> theta) {
  FittedEstimator e(spec.kind, model);
  e.training_size_ = train.size();
  switch (spec.kind) {
    case EstimatorKind::Robbins:
    case EstimatorKind::RobbinsAddOne:
      if (!model.is_poisson()) throw InvalidArgument("Robbins estimators need the Poisson channel");
      e.counts_ = CountTable(train);
      break;
    case EstimatorKind::Gmleb: {
      NpmleResult r = npmle_fit(model, train, spec.npmle);
      e.prior_ = r.prior;
      e.npmle_ = std::move(r);
      break;
    }
    case EstimatorKind::BayesOracle:
      if (!spec.prior) throw InvalidArgument("the oracle estimator needs a prior");
      validate_model_prior(model, *spec.prior);
      e.prior_ = *spec.prior;
      break;
    case EstimatorKind::CompoundOracle:
      if (theta.empty()) throw InvalidArgument("the compound oracle needs the true parameters");
      e.prior_ = empirical_distribution(theta);
      break;
    case EstimatorKind::Identity:
      break;
  }
  return e;
}

double FittedEstimator::predict(double y) const {
  switch (kind_) {
    case EstimatorKind::Robbins: {
      const std::size_t ny = counts_(y);
      return ny == 0 ? 0.0 : (y + 1.0) * static_cast<double>(counts_(y + 1.0)) / static_cast<double>(ny);
    }
    case EstimatorKind::RobbinsAddOne:
      return robbins_predict(counts_, y);
    case EstimatorKind::Identity:
      return y;
    default:
      return bayes_estimate(model_, *prior_, y);
  }
}

std::vector<double> estimate_total(const EstimatorSpec& spec, const MixtureModel& model, std::span<const double> y,
                                   std::span<const double> theta) {
  if (spec.kind == EstimatorKind::Robbins || spec.kind == EstimatorKind::RobbinsAddOne) {
    if (!model.is_poisson()) throw InvalidArgument("Robbins estimators need the Poisson channel");
    // The add-one rule trained on the other n-1 points coincides with the full-count rule.
    return robbins_total(y);
  }
  if (spec.kind == EstimatorKind::Identity) return {y.begin(), y.end()};
  const FittedEstimator e = FittedEstimator::fit(spec, model, y, theta);
  std::vector<double> out(y.size());
  if (model.is_poisson()) {
    std::map<double, double> memo;
    for (std::size_t j = 0; j < y.size(); ++j) {
      auto [it, fresh] = memo.try_emplace(y[j], 0.0);
      if (fresh) it->second = e.predict(y[j]);
      out[j] = it->second;
    }
  } else {
    for (std::size_t j = 0; j < y.size(); ++j) out[j] = e.predict(y[j]);
  }
  return out;
}

}  // namespace eblab
