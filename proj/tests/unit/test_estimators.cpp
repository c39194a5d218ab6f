#include <doctest.h>

#include <cmath>
#include <numeric>

#include "eblab/errors.hpp"
#include "eblab/estimators.hpp"
#include "eblab/random.hpp"

using namespace eblab;

namespace {

const MixtureModel kPois = MixtureModel::poisson();
const MixtureModel kGauss = MixtureModel::gaussian();

double total_sq_error(const std::vector<double>& est, const std::vector<double>& theta) {
  double s = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) s += (est[i] - theta[i]) * (est[i] - theta[i]);
  return s;
}

}  // namespace

TEST_SUITE("estimators") {
  TEST_CASE("estimator names") {
    for (auto k : {EstimatorKind::Robbins, EstimatorKind::RobbinsAddOne, EstimatorKind::Gmleb, EstimatorKind::BayesOracle,
                   EstimatorKind::Identity, EstimatorKind::CompoundOracle})
      CHECK(parse_estimator_kind(to_string(k)) == k);
    CHECK(parse_estimator_kind("npmle") == EstimatorKind::Gmleb);
    CHECK_THROWS_AS(parse_estimator_kind("james-stein"), UnknownEstimator);
  }

  TEST_CASE("count table") {
    const std::vector<double> y{0, 2, 2, 5};
    const CountTable t(y);
    CHECK(t.total() == 4);
    CHECK(t(2) == 2);
    CHECK(t(1) == 0);
    CHECK(t(100) == 0);
    CHECK(t.max_value() == 5);
    std::size_t sum = 0;
    for (int v = 0; v <= 5; ++v) sum += t(v);
    CHECK(sum == t.total());
    const std::vector<double> bad{1.5};
    CHECK_THROWS_AS(CountTable{bad}, InvalidArgument);
  }

  TEST_CASE("Robbins total examples") {
    const std::vector<double> y{1, 1, 2, 0};
    CHECK(robbins_total(y) == std::vector<double>{1.0, 1.0, 0.0, 2.0});
    const std::vector<double> same(7, 3.0);
    for (double t : robbins_total(same)) CHECK(t == 0.0);
  }

  TEST_CASE("Robbins total is bounded by (Y + 1) n") {
    const auto s = sample(kPois, Prior::uniform(0.0, 3.0), 500, 17);
    const auto est = robbins_total(s.y);
    for (std::size_t j = 0; j < est.size(); ++j) {
      CHECK(est[j] >= 0.0);
      CHECK(est[j] <= (s.y[j] + 1.0) * s.y.size());
    }
  }

  TEST_CASE("Robbins add-one prediction") {
    const std::vector<double> train{0, 0, 1};
    CHECK(robbins_predict(train, 0) == doctest::Approx(1.0 / 3.0));
    CHECK(robbins_predict(train, 7) == 0.0);
    CHECK(robbins_predict(train, 1) == 0.0);
  }

  TEST_CASE("leave-one-out add-one prediction reproduces the total estimate") {
    const auto s = sample(kPois, Prior::exponential(1.0), 300, 5);
    const auto total = robbins_total(s.y);
    for (std::size_t j = 0; j < s.y.size(); j += 7) {
      std::vector<double> rest(s.y);
      rest.erase(rest.begin() + static_cast<long>(j));
      CHECK(robbins_predict(rest, s.y[j]) == doctest::Approx(total[j]).epsilon(1e-15));
    }
  }

  TEST_CASE("Robbins beats the identity for n = 10^4") {
    const Prior g = Prior::uniform(0.0, 2.0);
    double robbins = 0.0, ident = 0.0;
    for (std::uint64_t r = 0; r < 5; ++r) {
      const auto s = sample(kPois, g, 10000, split_seed(77, r));
      robbins += total_sq_error(robbins_total(s.y), s.theta);
      ident += total_sq_error(estimate_total(EstimatorSpec::identity(), kPois, s.y), s.theta);
    }
    CHECK(robbins < ident);
    // Identity risk is E[theta] n.
    CHECK(ident / 5 == doctest::Approx(1e4).epsilon(0.05));
  }

  TEST_CASE("NPMLE default grid") {
    const std::vector<double> y{0, 3, 8};
    const auto g = npmle_default_grid(kPois, y, 10);
    REQUIRE(g.size() == 10);
    CHECK(g.front() == 0.0);
    CHECK(g.back() == doctest::Approx(8.0 + 3.0 * 3.0));
    const std::vector<double> z{-2.0, 1.5};
    const auto gg = npmle_default_grid(kGauss, z, 5);
    CHECK(gg.front() == -3.0);
    CHECK(gg.back() == 2.5);
  }

  TEST_CASE("NPMLE recovers a Poisson mean") {
    const auto s = sample(kPois, Prior::point_mass(2.0), 5000, 11);
    NpmleOptions opt;
    opt.grid_points = 201;
    opt.grid.resize(201);
    for (int i = 0; i < 201; ++i) opt.grid[i] = 0.05 * i;  // contains 2
    const NpmleResult r = npmle_fit(kPois, s.y, opt);
    CHECK(r.converged);
    CHECK(r.gradient_gap <= opt.tol);
    CHECK(std::abs(r.prior.mean() - 2.0) <= 0.1);
    double w = 0.0;
    for (double x : r.weights) w += x;
    CHECK(w == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t i = 1; i < r.log_likelihood.size(); ++i)
      CHECK(r.log_likelihood[i] >= r.log_likelihood[i - 1] - 1e-12);
    // Optimality over the grid: at least as good as the truth projected onto it.
    CHECK(r.log_likelihood.back() >= npmle_log_likelihood(kPois, s.y, Prior::point_mass(2.0)) - 1e-9);
  }

  TEST_CASE("NPMLE beats the projected truth on a continuous prior") {
    const auto s = sample(kPois, Prior::uniform(0.0, 2.0), 3000, 12);
    NpmleOptions opt;
    for (int i = 0; i <= 40; ++i) opt.grid.push_back(0.05 * i);
    const NpmleResult r = npmle_fit(kPois, s.y, opt);
    std::vector<Atom> atoms;
    for (double x : opt.grid) atoms.push_back({x, 1.0 / opt.grid.size()});
    CHECK(npmle_log_likelihood(kPois, s.y, r.prior) >= npmle_log_likelihood(kPois, s.y, Prior::discrete(atoms)));
    for (double x : r.grid) {
      CHECK(x >= 0.0);
      CHECK(x <= 2.0);
    }
  }

  TEST_CASE("NPMLE on one observation") {
    const std::vector<double> y{4.0};
    NpmleOptions opt;
    opt.grid = {4.0};
    const NpmleResult r = npmle_fit(kPois, y, opt);
    REQUIRE(r.prior.as<DiscretePrior>() != nullptr);
    CHECK(r.prior.as<DiscretePrior>()->atoms.size() == 1);
    CHECK(r.prior.mean() == 4.0);
  }

  TEST_CASE("NPMLE Gaussian fit separates two clusters") {
    const auto s = sample(kGauss, Prior::discrete({{-3.0, 0.5}, {3.0, 0.5}}), 800, 4);
    NpmleOptions opt;
    opt.grid_points = 200;
    const NpmleResult r = npmle_fit(kGauss, s.y, opt);
    INFO("iterations " << r.iterations << " gap " << r.gradient_gap);
    CHECK(r.converged);
    double left = 0.0;
    for (std::size_t i = 0; i < r.grid.size(); ++i)
      if (r.grid[i] < 0.0) left += r.weights[i];
    CHECK(left == doctest::Approx(0.5).epsilon(0.1));
    CHECK(std::abs(r.prior.mean()) <= 0.3);
  }

  TEST_CASE("NPMLE reports non-convergence") {
    const auto s = sample(kPois, Prior::uniform(0.0, 5.0), 1000, 2);
    NpmleOptions opt;
    opt.max_iter = 2;
    opt.tol = 1e-12;
    const NpmleResult r = npmle_fit(kPois, s.y, opt);
    CHECK_FALSE(r.converged);
    CHECK(r.gradient_gap > opt.tol);
    CHECK(r.iterations == 2);
  }

  TEST_CASE("GMLEB predictions") {
    const Prior two = Prior::discrete({{0.0, 0.5}, {5.0, 0.5}});
    for (int y : {0, 1, 3, 10}) {
      const double b = 0.5 * std::exp(-5.0 + y * std::log(5.0) - std::lgamma(y + 1.0));
      const double a = y == 0 ? 0.5 : 0.0;
      const double t = gmleb_predict(two, kPois, y);
      CHECK(t == doctest::Approx(5.0 * b / (a + b)).epsilon(1e-12));
      CHECK(t >= 0.0);
      CHECK(t <= 5.0);
    }
    const Prior g = Prior::gamma(2.0, 1.0);
    CHECK(gmleb_predict(g, kPois, 3) == bayes_estimate(kPois, g, 3));
  }

  TEST_CASE("GMLEB fitted on [0, h] stays in [0, h]") {
    const auto s = sample(kPois, Prior::uniform(0.0, 2.0), 2000, 8);
    NpmleOptions opt;
    for (int i = 0; i <= 50; ++i) opt.grid.push_back(2.0 * i / 50);
    const auto fitted = FittedEstimator::fit(EstimatorSpec::gmleb(opt), kPois, s.y);
    REQUIRE(fitted.fitted_prior() != nullptr);
    REQUIRE(fitted.npmle() != nullptr);
    for (int y = 0; y <= 40; ++y) {
      const double t = fitted.predict(y);
      CHECK(t >= 0.0);
      CHECK(t <= 2.0);
    }
  }

  TEST_CASE("fitted estimators") {
    const std::vector<double> train{0, 0, 1, 3};
    const auto rob = FittedEstimator::fit(EstimatorSpec::robbins(), kPois, train);
    CHECK(rob.training_size() == 4);
    CHECK(rob.predict(0) == doctest::Approx(0.5));
    CHECK(rob.predict(2) == 0.0);  // unseen
    const auto add = FittedEstimator::fit(EstimatorSpec::robbins_add_one(), kPois, train);
    CHECK(add.predict(0) == doctest::Approx(1.0 / 3.0));
    const auto id = FittedEstimator::fit(EstimatorSpec::identity(), kPois, train);
    CHECK(id.predict(7) == 7.0);
    const Prior g = Prior::gamma(2.0, 1.0);
    const auto orc = FittedEstimator::fit(EstimatorSpec::oracle(g), kPois, train);
    CHECK(orc.predict(3) == doctest::Approx(2.5));
    const std::vector<double> theta{0.5, 0.5, 1.5, 2.5};
    const auto comp = FittedEstimator::fit(EstimatorSpec::compound_oracle(), kPois, train, theta);
    CHECK(comp.predict(2) == doctest::Approx(bayes_estimate(kPois, empirical_distribution(theta), 2)));
    CHECK_THROWS_AS(FittedEstimator::fit(EstimatorSpec::robbins(), kGauss, train), InvalidArgument);
    CHECK_THROWS_AS(FittedEstimator::fit(EstimatorSpec::compound_oracle(), kPois, train), InvalidArgument);
    EstimatorSpec no_prior{EstimatorKind::BayesOracle, std::nullopt, {}};
    CHECK_THROWS_AS(FittedEstimator::fit(no_prior, kPois, train), InvalidArgument);
  }

  TEST_CASE("estimate_total dispatches per kind") {
    const auto s = sample(kPois, Prior::gamma(2.0, 1.0), 400, 3);
    CHECK(estimate_total(EstimatorSpec::robbins(), kPois, s.y) == robbins_total(s.y));
    CHECK(estimate_total(EstimatorSpec::identity(), kPois, s.y) == s.y);
    const auto orc = estimate_total(EstimatorSpec::oracle(Prior::gamma(2.0, 1.0)), kPois, s.y);
    for (std::size_t i = 0; i < s.y.size(); ++i) CHECK(orc[i] == doctest::Approx((s.y[i] + 2.0) / 2.0));
  }
}
