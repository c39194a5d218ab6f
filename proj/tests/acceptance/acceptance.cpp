// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "eblab/estimators.hpp"
#include "eblab/lowerbound.hpp"
#include "eblab/models.hpp"
#include "eblab/operators.hpp"
#include "eblab/regret.hpp"

using namespace eblab;

namespace {

const MixtureModel kGauss = MixtureModel::gaussian();
const MixtureModel kPois = MixtureModel::poisson();

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

int failures = 0;

void criterion(int id, const std::string& name, const std::function<void(Outcome&)>& body) {
  Outcome out;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(out);
  } catch (const std::exception& e) {
    out.pass = false;
    out.detail << " [exception: " << e.what() << "]";
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!out.pass) ++failures;
  std::printf("%s %2d %s (%.1f s)%s\n", out.pass ? "PASS" : "FAIL", id, name.c_str(), secs, out.detail.str().c_str());
  std::fflush(stdout);
}

double elapsed_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

TestFunction smooth(std::function<double(double)> f, std::function<double(double)> df, double sup) {
  TestFunction r(std::move(f), sup);
  r.derivative = std::move(df);
  return r;
}

std::vector<TestFunction> gaussian_test_functions() {
  return {
      smooth([](double x) { return std::sin(x); }, [](double x) { return std::cos(x); }, 1.0),
      smooth([](double x) { return std::cos(2.0 * x); }, [](double x) { return -2.0 * std::sin(2.0 * x); }, 1.0),
      smooth([](double x) { return std::exp(-0.5 * x * x); }, [](double x) { return -x * std::exp(-0.5 * x * x); },
             1.0),
      smooth([](double x) { return std::tanh(x); }, [](double x) { return 1.0 - std::tanh(x) * std::tanh(x); }, 1.0),
      smooth([](double x) { return 1.0 / (1.0 + x * x); },
             [](double x) { return -2.0 * x / ((1.0 + x * x) * (1.0 + x * x)); }, 1.0),
  };
}

std::vector<TestFunction> poisson_test_functions() {
  return {
      smooth([](double x) { return std::sin(x); }, [](double x) { return std::cos(x); }, 1.0),
      smooth([](double x) { return std::exp(-x); }, [](double x) { return -std::exp(-x); }, 1.0),
      smooth([](double x) { return 1.0 / (1.0 + x); }, [](double x) { return -1.0 / ((1.0 + x) * (1.0 + x)); }, 1.0),
      smooth([](double x) { return std::cos(0.5 * x); }, [](double x) { return -0.5 * std::sin(0.5 * x); }, 1.0),
      smooth([](double x) { return 1.0 / (1.0 + x * x); },
             [](double x) { return -2.0 * x / ((1.0 + x * x) * (1.0 + x * x)); }, 1.0),
  };
}

// Largest relative discrepancy between the defining and the derivative form of K1 r.
// The denominator is floored at 1e-12 of the largest |K1 r| seen, so isolated zeros of
// K1 r do not blow up the ratio.
double k1_path_error(const BasePriorContext& ctx, const TestFunction& r, const std::vector<double>& ys) {
  std::vector<double> a(ys.size()), b(ys.size());
  double scale = 0.0;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    a[i] = apply_K1(ctx, r, ys[i], K1Path::Definition);
    b[i] = apply_K1(ctx, r, ys[i], K1Path::Derivative);
    scale = std::max(scale, std::abs(b[i]));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < ys.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(std::abs(b[i]), 1e-12 * scale));
  return worst;
}

double joint_se(const RegretReport& a, const RegretReport& b) { return std::hypot(a.std_error, b.std_error); }

}  // namespace

int main() {
  std::cout.precision(6);

  criterion(1, "Gaussian Gram identities", [](Outcome& o) {
    const auto t0 = std::chrono::steady_clock::now();
    double k = 0.0, k1 = 0.0;
    for (double s : {0.25, 1.0}) {
      const OrthogonalityReport r = gaussian_orthogonality(s, 12);
      k = std::max(k, r.max_k_deviation);
      k1 = std::max(k1, r.max_k1_deviation);
    }
    const double secs = elapsed_since(t0);
    o.detail << ": K abs dev " << k << ", K1 rel dev " << k1;
    o.require(k <= 1e-7, "K deviation <= 1e-7");
    o.require(k1 <= 1e-7, "K1 deviation <= 1e-7");
    o.require(secs < 60.0, "runtime < 60 s");
  });

  criterion(2, "Poisson Gram identities", [](Outcome& o) {
    const auto t0 = std::chrono::steady_clock::now();
    double s = 0.0, s1 = 0.0, band = 0.0;
    for (auto [a, b] : {std::pair{1.0, 1.0}, std::pair{8.0, 4.0}}) {
      const OrthogonalityReport r = poisson_orthogonality(a, b, 8);
      s = std::max(s, r.max_k_deviation);
      s1 = std::max(s1, r.max_k1_deviation);
      band = std::max(band, r.max_band_deviation);
    }
    const double secs = elapsed_since(t0);
    o.detail << ": S rel dev " << s << ", S1 diag rel dev " << s1 << ", band " << band;
    o.require(s <= 1e-7, "S deviation <= 1e-7");
    o.require(s1 <= 1e-7, "S1 diagonal deviation <= 1e-7");
    o.require(band <= 1e-9, "S1 band <= 1e-9");
    o.require(secs < 60.0, "runtime < 60 s");
  });

  criterion(3, "K1 derivative identities", [](Outcome& o) {
    std::vector<double> gy, py;
    for (int i = 0; i < 20; ++i) {
      gy.push_back(-4.0 + 8.0 * i / 19.0);
      py.push_back(i);
    }
    double gw = 0.0, pw = 0.0;
    for (double s : {0.25, 1.0}) {
      const auto ctx = BasePriorContext::gaussian(s);
      for (const auto& r : gaussian_test_functions()) gw = std::max(gw, k1_path_error(ctx, r, gy));
    }
    for (auto [a, b] : {std::pair{2.0, 1.0}, std::pair{8.0, 4.0}}) {
      const auto ctx = BasePriorContext::gamma(a, b);
      for (const auto& r : poisson_test_functions()) pw = std::max(pw, k1_path_error(ctx, r, py));
    }
    o.detail << ": Gaussian rel err " << gw << ", Poisson rel err " << pw;
    o.require(gw <= 1e-6, "Gaussian K1 = eta^2 K(r')");
    o.require(pw <= 1e-6, "Poisson K1 = K(x r')/(1+beta)");
  });

  criterion(4, "Mehler and Hardy-Hille partial sums", [](Outcome& o) {
    double me = 0.0, he = 0.0;
    for (double mu : {-0.3, -0.15, 0.05, 0.15, 0.3})
      for (double u = -3.0; u <= 3.0; u += 1.0)
        for (double v = -3.0; v <= 3.0; v += 1.0) {
          const double c = mehler_closed_form(mu, u, v);
          me = std::max(me, std::abs(mehler_partial_sum(mu, u, v, 100) - c) / std::abs(c));
        }
    for (double nu : {0.0, 0.5, 2.0, 7.0})
      for (double z : {-0.2, -0.1, 0.05, 0.1, 0.2})
        for (double x : {0.1, 1.0, 3.0, 6.0})
          for (double y : {0.1, 1.0, 3.0, 6.0}) {
            const double c = hardy_hille_closed_form(nu, x, y, z);
            he = std::max(he, std::abs(hardy_hille_partial_sum(nu, x, y, z, 100) - c) / std::abs(c));
          }
    o.detail << ": Mehler rel err " << me << ", Hardy-Hille rel err " << he;
    o.require(me <= 1e-8, "Mehler rel err <= 1e-8");
    o.require(he <= 1e-8, "Hardy-Hille rel err <= 1e-8");
  });

  criterion(5, "Assouad audits", [](Outcome& o) {
    const auto t0 = std::chrono::steady_clock::now();
    struct Case {
      std::string label;
      PerturbationFamily family;
      double n;
    };
    std::vector<Case> cases;
    cases.push_back({"gaussian", gaussian_family(1.0, 6), 1e4});
    cases.push_back({"poisson", poisson_family(32.0, 64.0, 8), 1e6});
    for (auto& c : cases) {
      const AssouadFamily af(c.family, c.n);
      const AuditReport rep = audit(af, c.n);
      const double tau = rep.value("tau"), tau1 = rep.value("tau1"), tau2 = rep.value("tau2");
      const double lo = rep.value("density_ratio_min"), hi = rep.value("density_ratio_max");
      const double chi = rep.value("chi2_tensorized_max");
      o.detail << " " << c.label << ": tau " << tau << " tau1 " << tau1 << " tau2 " << tau2 << " ratio [" << lo
               << ", " << hi << "] chi2^n " << chi << ";";
      o.require(std::abs(tau - 1.0) <= 1e-6, c.label + " tau");
      o.require(std::abs(tau1 - 1.0) <= 1e-6, c.label + " tau1");
      o.require(tau2 <= 1e-6, c.label + " tau2");
      o.require(lo >= 0.5 && hi <= 1.5, c.label + " density ratios");
      o.require(std::isfinite(chi) && chi <= std::exp(1.0) - 1.0, c.label + " tensorized chi2");
      o.require(rep.all_pass(), c.label + " audit verdict");
    }
    o.require(elapsed_since(t0) < 300.0, "runtime < 5 min");
  });

  criterion(6, "Bayes oracle has zero regret", [](Outcome& o) {
    struct Case {
      std::string label;
      MixtureModel model;
      Prior prior;
      std::size_t n;
    };
    const std::vector<Case> cases = {
        {"poisson uniform[0,2]", kPois, Prior::uniform(0.0, 2.0), 1000},
        {"poisson gamma(2,1)", kPois, Prior::gamma(2.0, 1.0), 1000},
        {"poisson exp(1)", kPois, Prior::exponential(1.0), 1000},
        {"gaussian N(0,1)", kGauss, Prior::gaussian(0.0, 1.0), 1000},
        {"gaussian uniform[-2,2]", kGauss, Prior::uniform(-2.0, 2.0), 1000},
        {"gaussian two-point", kGauss, Prior::discrete({{-1.0, 0.3}, {2.0, 0.7}}), 1000},
    };
    McOptions opt;
    opt.replicates = 200;
    opt.mode = RegretMode::Direct;
    std::uint64_t seed = 600;
    for (const auto& c : cases) {
      opt.seed = seed++;
      const RegretReport r = total_regret_mc(c.model, c.prior, EstimatorSpec::oracle(c.prior), c.n, opt);
      const double z = r.estimate / r.std_error;
      o.detail << " " << c.label << " z=" << z << ";";
      o.require(std::abs(r.estimate) <= 3.0 * r.std_error, c.label);
    }
  });

  criterion(7, "Robbins certificate dominates Monte Carlo", [](Outcome& o) {
    const auto t0 = std::chrono::steady_clock::now();
    const Prior g = Prior::uniform(0.0, 2.0);
    McOptions opt;
    opt.replicates = 200;
    opt.seed = 700;
    for (std::size_t n : {std::size_t{1000}, std::size_t{10000}}) {
      const Certificate c = robbins_certificate(g, n);
      const RegretReport r = total_regret_mc(kPois, g, EstimatorSpec::robbins(), n, opt);
      const double upper = r.estimate + 3.0 * r.std_error;
      o.detail << " n=" << n << ": certificate " << c.total << " vs MC " << r.estimate << " + 3se = " << upper << ";";
      o.require(c.total >= upper, "n=" + std::to_string(n));
    }
    o.require(elapsed_since(t0) < 600.0, "runtime < 10 min");
  });

  criterion(8, "Robbins regret scaling", [](Outcome& o) {
    const std::vector<std::size_t> grid = {100, 1000, 10000, 100000};
    McOptions opt;
    opt.replicates = 200;
    opt.mode = RegretMode::VarianceReduced;
    struct Case {
      std::string label;
      Prior prior;
      Rate rate;
    };
    const std::vector<Case> cases = {{"uniform[0,2]", Prior::uniform(0.0, 2.0), Rate::LogOverLogLogSquared},
                                     {"exp(1)", Prior::exponential(1.0), Rate::LogCubed}};
    std::uint64_t seed = 800;
    for (const auto& c : cases) {
      opt.seed = seed++;
      const auto rows = scaling_experiment(kPois, c.prior, EstimatorSpec::robbins(), grid, c.rate, opt);
      double lo = INFINITY, hi = 0.0;
      o.detail << " " << c.label << " ratios";
      for (const auto& row : rows) {
        lo = std::min(lo, row.ratio);
        hi = std::max(hi, row.ratio);
        o.detail << " " << row.ratio;
      }
      o.detail << " (spread " << hi / lo << ");";
      o.require(lo > 0.0 && hi / lo < 3.0, c.label + " spread < 3");
    }
  });

  criterion(9, "binomial moment bounds", [](Outcome& o) {
    const auto t0 = std::chrono::steady_clock::now();
    double w1 = 0.0, w2 = 0.0;
    for (long n = 1; n <= 200; ++n)
      for (int i = 1; i <= 50; ++i) {
        const double p = i / 50.0, np = n * p;
        w1 = std::max(w1, v1(n, p) / std::min(np, 1.0 / np));
        w2 = std::max(w2, v2(n, p) / std::min(1.0, np));
      }
    o.detail << ": max v1/min(np,1/np) " << w1 << ", max v2/min(1,np) " << w2;
    o.require(w1 <= 2.0, "c1 = 2");
    o.require(w2 <= 2.0, "c2 = 2");
    o.require(elapsed_since(t0) < 30.0, "runtime < 30 s");
  });

  criterion(10, "regret reductions", [](Outcome& o) {
    const Prior g = Prior::uniform(0.0, 2.0);
    const std::size_t n = 200;
    McOptions opt;
    opt.mode = RegretMode::VarianceReduced;
    opt.replicates = 4000;
    opt.seed = 1000;
    const auto ind = individual_regret_mc(kPois, g, EstimatorSpec::robbins_add_one(), n, opt);
    opt.replicates = 400;
    opt.seed = 1001;
    const auto tot = total_regret_mc(kPois, g, EstimatorSpec::robbins(), n, opt);
    const double scaled = n * ind.estimate, scaled_se = n * ind.std_error;
    const double jse = std::hypot(scaled_se, tot.std_error);
    o.detail << " n*individual " << scaled << " vs total " << tot.estimate << " (joint se " << jse << ");";
    o.require(std::abs(scaled - tot.estimate) <= 3.0 * jse, "n * individual ~ total");

    McOptions d;
    d.replicates = 200;
    d.seed = 1002;
    const auto eb = total_regret_mc(kPois, g, EstimatorSpec::robbins(), 500, d);
    const auto comp = compound_regret_mc(kPois, ThetaSource::iid(g), EstimatorSpec::robbins(), 500, d);
    const PairedDifference diff = paired_difference(eb, comp);
    o.detail << " EB - compound " << diff.mean << " (se " << diff.std_error << ");";
    o.require(diff.mean <= 3.0 * diff.std_error, "EB <= compound (paired)");
    o.require(eb.estimate <= comp.estimate + 3.0 * joint_se(eb, comp), "EB <= compound");

    d.seed = 1003;
    const MeanEstimate e = expected_empirical_mmse(kPois, g, 50, d);
    const double m = mmse(kPois, g);
    o.detail << " E mmse(G_theta) " << e.mean << " (se " << e.std_error << ") vs mmse(G) " << m << ";";
    o.require(e.mean <= m + 3.0 * e.std_error, "E mmse(G_theta) <= mmse(G)");
  });

  criterion(11, "NPMLE", [](Outcome& o) {
    const Prior g = Prior::uniform(0.0, 2.0);
    const std::size_t n = 10000;
    const Sample s = sample(kPois, g, n, 1100);
    const NpmleResult fit = npmle_fit(kPois, s.y);
    double worst_drop = 0.0;
    for (std::size_t i = 1; i < fit.log_likelihood.size(); ++i)
      worst_drop = std::max(worst_drop, fit.log_likelihood[i - 1] - fit.log_likelihood[i]);
    o.detail << ": iterations " << fit.iterations << ", converged " << fit.converged << ", largest decrease "
             << worst_drop << ";";
    o.require(worst_drop <= 1e-12, "log-likelihood monotone to 1e-12");

    McOptions opt;
    opt.replicates = 20;
    opt.seed = 1101;
    const auto gm = total_regret_mc(kPois, g, EstimatorSpec::gmleb(), n, opt);
    const auto id = total_regret_mc(kPois, g, EstimatorSpec::identity(), n, opt);
    const PairedDifference diff = paired_difference(gm, id);
    o.detail << " GMLEB regret " << gm.estimate << " (se " << gm.std_error << "), identity " << id.estimate << " (se "
             << id.std_error << ");";
    o.require(diff.mean + 3.0 * diff.std_error < 0.0, "GMLEB beats identity");
  });

  std::printf("%s: %d criteria failed\n", failures == 0 ? "ALL PASS" : "SOME FAIL", failures);
  return failures == 0 ? 0 : 1;
}
