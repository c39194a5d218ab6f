#include <algorithm>
#include <bit>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include "eblab/errors.hpp"
#include "eblab/lowerbound.hpp"
#include "eblab/parallel.hpp"
#include "eblab/random.hpp"
#include "eblab/specfun.hpp"

namespace eblab {

namespace {

// Per-grid-point images of a vertex: h_u = K r_u and k1_u = K1 r_u.
struct VertexImages {
  std::vector<double> h, k1;
};

VertexImages vertex_images(const AssouadFamily& af, Vertex u) {
  const auto& img = af.images();
  const std::size_t np = af.grid().y.size();
  VertexImages out{std::vector<double>(np, 0.0), std::vector<double>(np, 0.0)};
  for (int i = 0; i < af.m(); ++i) {
    if (!((u >> i) & 1u)) continue;
    for (std::size_t p = 0; p < np; ++p) {
      out.h[p] += img.K[i][p];
      out.k1[p] += img.K1[i][p];
    }
  }
  return out;
}

void check_vertex(const AssouadFamily& af, Vertex u) {
  if (af.m() < 64 && (u >> af.m()) != 0) throw InvalidArgument("vertex index outside the hypercube");
}


}  // namespace

int hamming(Vertex u, Vertex v) { return std::popcount(u ^ v); }

double regression_gap(const AssouadFamily& af, Vertex u, Vertex v) {
  check_vertex(af, u);
  check_vertex(af, v);
  if (u == v) return 0.0;
  const double d = af.delta();
  const VertexImages a = vertex_images(af, u), b = vertex_images(af, v);
  const auto& w = af.grid().w;
  // T_u - K theta = delta K1 r_u / (1 + delta h_u); the difference is rearranged
  // so that the common K1 part cancels before rounding.
  double gap = 0.0;
  for (std::size_t p = 0; p < w.size(); ++p) {
    const double du = 1.0 + d * a.h[p], dv = 1.0 + d * b.h[p];
    const double diff = d * ((a.k1[p] - b.k1[p]) * dv + b.k1[p] * d * (b.h[p] - a.h[p])) / (du * dv);
    gap += w[p] * diff * diff;
  }
  return gap;
}

namespace {

// rho_u - rho_v and rho_v, where rho = f/f0.
template <typename Fn>
double ratio_sum(const AssouadFamily& af, Vertex u, Vertex v, Fn&& term) {
  const double d = af.delta();
  const double mu_u = af.mu(u), mu_v = af.mu(v);
  const VertexImages a = vertex_images(af, u), b = vertex_images(af, v);
  const auto& w = af.grid().w;
  const double nu = 1.0 + d * mu_u, nv = 1.0 + d * mu_v;
  double s = 0.0;
  for (std::size_t p = 0; p < w.size(); ++p) {
    const double ru = (1.0 + d * a.h[p]) / nu, rv = (1.0 + d * b.h[p]) / nv;
    // (1+d h_u)(1+d mu_v) - (1+d h_v)(1+d mu_u) expanded without the leading 1s.
    const double num = d * (a.h[p] - b.h[p]) + d * d * (a.h[p] * mu_v - b.h[p] * mu_u) + d * (mu_v - mu_u);
    s += w[p] * term(num / (nu * nv), ru, rv);
  }
  return s;
}

}  // namespace

double chi_square(const AssouadFamily& af, Vertex u, Vertex v) {
  check_vertex(af, u);
  check_vertex(af, v);
  if (u == v) return 0.0;
  return ratio_sum(af, u, v, [](double diff, double, double rv) { return diff * diff / rv; });
}

double tensorized_chi_square(const AssouadFamily& af, Vertex u, Vertex v, double n) {
  return std::expm1(n * std::log1p(chi_square(af, u, v)));
}

double hellinger_sq(const AssouadFamily& af, Vertex u, Vertex v) {
  check_vertex(af, u);
  check_vertex(af, v);
  if (u == v) return 0.0;
  return ratio_sum(af, u, v, [](double diff, double ru, double rv) {
    const double s = std::sqrt(ru) + std::sqrt(rv);
    return diff * diff / (s * s);
  });
}

double prior_hellinger_sq(const AssouadFamily& af, Vertex u, Vertex v) {
  check_vertex(af, u);
  check_vertex(af, v);
  if (u == v) return 0.0;
  const auto& ctx = af.family().ctx;
  const int order = ctx.is_gaussian() ? ctx.hermite_order : ctx.gamma_order;
  return ctx.prior().expectation(
      [&](double x) {
        const double ru = af.density_ratio(u, x), rv = af.density_ratio(v, x);
        const double s = std::sqrt(ru) + std::sqrt(rv);
        return (ru - rv) * (ru - rv) / (s * s);
      },
      order);
}

std::vector<std::pair<Vertex, Vertex>> gray_code_pairs(int m, int count, std::uint64_t seed) {
  std::vector<std::pair<Vertex, Vertex>> pairs;
  if (m <= 0 || count <= 0) return pairs;
  if (m > 64) throw InvalidArgument("hypercube dimension above 64 is not supported");
  Rng rng = make_rng(seed);
  std::vector<int> perm(m);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  const Vertex mask = m == 64 ? ~Vertex{0} : ((Vertex{1} << m) - 1);
  Vertex u = rng() & mask;
  // Walk the reflected Gray code under a random coordinate relabelling; step i flips
  // coordinate perm[ctz(i)], so consecutive vertices are Hamming neighbors.
  std::uint64_t step = rng() >> 1;
  for (int c = 0; c < count; ++c) {
    ++step;
    int bit = std::countr_zero(step) % m;
    Vertex v = u ^ (Vertex{1} << perm[bit]);
    pairs.emplace_back(u, v);
    u = v;
  }
  return pairs;
}

std::vector<std::pair<Vertex, Vertex>> random_pairs(int m, int count, std::uint64_t seed) {
  std::vector<std::pair<Vertex, Vertex>> pairs;
  if (m <= 0 || count <= 0) return pairs;
  if (m > 64) throw InvalidArgument("hypercube dimension above 64 is not supported");
  Rng rng = make_rng(seed);
  const Vertex mask = m == 64 ? ~Vertex{0} : ((Vertex{1} << m) - 1);
  for (int c = 0; c < count; ++c) pairs.emplace_back(rng() & mask, rng() & mask);
  return pairs;
}

// ---------------------------------------------------------------- report

bool AuditReport::all_pass() const {
  return std::all_of(entries.begin(), entries.end(), [](const AuditEntry& e) { return e.pass; });
}

const AuditEntry* AuditReport::find(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

double AuditReport::value(const std::string& name) const {
  const AuditEntry* e = find(name);
  if (!e) throw std::out_of_range("audit report has no entry '" + name + "'");
  return e->measured;
}

std::string AuditReport::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& e : entries) {
    nlohmann::ordered_json item;
    item["measured"] = e.measured;
    item["required"] = e.required ? nlohmann::ordered_json(*e.required) : nlohmann::ordered_json(nullptr);
    item["relation"] = e.relation;
    item["pass"] = e.pass;
    j[e.name] = item;
  }
  return j.dump(2);
}

namespace {

void info(AuditReport& r, const std::string& name, double value) {
  r.entries.push_back({name, value, std::nullopt, "info", true});
}

void at_most(AuditReport& r, const std::string& name, double value, double bound, double slack = 0.0) {
  r.entries.push_back({name, value, bound, "<=", std::isfinite(value) && value <= bound + slack});
}

void at_least(AuditReport& r, const std::string& name, double value, double bound, double slack = 0.0) {
  r.entries.push_back({name, value, bound, ">=", std::isfinite(value) && value >= bound - slack});
}

struct TruncationInputs {
  double fourth_moment, eps;
};

// G_u has density at most 3/2 against G0, so tail mass and fourth moment of
// every G_u are bounded by 3/2 times those of G0.
TruncationInputs truncation_inputs(const BasePriorContext& ctx, double a) {
  if (!(a > 0.0)) throw InvalidArgument("truncation level must be positive");
  if (ctx.is_gaussian()) {
    const double s = ctx.s();
    return {1.5 * 3.0 * s * s, 1.5 * 2.0 * normal_sf(a / std::sqrt(s))};
  }
  const double al = ctx.alpha(), be = ctx.beta();
  const double m4 = al * (al + 1.0) * (al + 2.0) * (al + 3.0) / std::pow(be, 4);
  return {1.5 * m4, 1.5 * gamma_tail_chernoff(al, be, a)};
}

std::vector<Vertex> probe_vertices(const AssouadFamily& af, const std::vector<std::pair<Vertex, Vertex>>& pairs) {
  std::set<Vertex> s;
  const int m = af.m();
  if (m > 0) s.insert(m == 64 ? ~Vertex{0} : ((Vertex{1} << m) - 1));
  for (auto [u, v] : pairs) {
    s.insert(u);
    s.insert(v);
  }
  return {s.begin(), s.end()};
}

void ratio_entries(AuditReport& r, const AssouadFamily& af, const std::vector<Vertex>& verts,
                   const AuditOptions& opt) {
  std::vector<std::pair<double, double>> ranges(verts.size());
  parallel_for(verts.size(), opt.threads,
               [&](std::size_t i) { ranges[i] = af.density_ratio_range(verts[i], opt.ratio_grid); });
  double lo = 1.0, hi = 1.0;
  for (auto [a, b] : ranges) {
    lo = std::min(lo, a);
    hi = std::max(hi, b);
  }
  at_least(r, "density_ratio_min", lo, 0.5);
  at_most(r, "density_ratio_max", hi, 1.5);
}

void common_entries(AuditReport& r, const AssouadFamily& af, double n, const ContrastConstants& cc) {
  const auto& f = af.family();
  const double delta = af.delta();
  info(r, "m", f.m());
  info(r, "n", n);
  info(r, "delta", delta);
  info(r, "sup_bound", f.sup_bound);
  info(r, "gamma", f.gamma);
  info(r, "grid_tail_bound", af.grid().tail_bound);
  r.entries.push_back({"tau", cc.tau, 0.0, ">", f.m() == 0 || cc.tau > 0.0});
  info(r, "tau1", cc.tau1);
  at_least(r, "tau2", cc.tau2, 0.0);
  info(r, "tau_ref", cc.tau_ref);
  info(r, "contrasts_exhaustive", cc.exhaustive ? 1.0 : 0.0);
  if (f.m() > 0) {
    at_most(r, "delta_m_a", delta * f.m() * f.sup_bound, 1.0 / 16.0, 1e-12);
    at_most(r, "n_delta2_gamma", n * delta * delta * f.gamma, 1.0, 1e-12);
  }
}

}  // namespace

AuditReport audit(const AssouadFamily& af, double n, const AuditOptions& opt) {
  if (!(n >= 1.0)) throw InvalidArgument("sample size must be at least 1");
  AuditReport rep;
  const auto& f = af.family();
  const ContrastConstants& cc = f.k1;
  const int m = f.m();
  const double delta = af.delta();
  common_entries(rep, af, n, cc);

  const auto neighbors = gray_code_pairs(m, opt.pairs, split_seed(opt.seed, 1));
  const auto spread = random_pairs(m, opt.pairs, split_seed(opt.seed, 2));
  std::vector<std::pair<Vertex, Vertex>> all = neighbors;
  all.insert(all.end(), spread.begin(), spread.end());

  if (m > 0) {
    ratio_entries(rep, af, probe_vertices(af, all), opt);

    std::vector<double> chi(neighbors.size());
    parallel_for(neighbors.size(), opt.threads,
                 [&](std::size_t i) { chi[i] = chi_square(af, neighbors[i].first, neighbors[i].second); });
    double chi_max = 0.0;
    for (double c : chi) chi_max = std::max(chi_max, c);
    at_most(rep, "chi2_neighbor_max", chi_max, delta * delta * f.gamma * opt.chi2_constant);
    at_most(rep, "chi2_tensorized_max", std::expm1(n * std::log1p(chi_max)), std::exp(1.0) - 1.0);

    // Gap lower bound eps d - eps1 holds for each valid (tau, tau2) pair; take the strongest.
    auto required_gap = [&](int d) {
      auto bound = [&](double tau, double tau2) {
        return 0.5 * tau * delta * delta * d - delta * delta * (m * cc.tau1 * cc.tau1 / 16.0 + 0.5 * tau2);
      };
      return std::max(bound(cc.tau, 0.0), bound(cc.tau_ref, cc.tau2));
    };
    std::vector<double> slack(all.size());
    parallel_for(all.size(), opt.threads, [&](std::size_t i) {
      auto [u, v] = all[i];
      const double gap = regression_gap(af, u, v);
      const double req = required_gap(hamming(u, v));
      const double scale = delta * delta;
      slack[i] = (gap - req) / scale;
    });
    double slack_min = std::numeric_limits<double>::infinity();
    for (double s : slack) slack_min = std::min(slack_min, s);
    // Relative to delta^2; rounding in the gap is far below 1e-9 of that scale.
    at_least(rep, "regression_gap_slack_min", slack_min, 0.0, 1e-9);
  }

  double predicted = 0.0;
  if (m > 0) {
    auto bound = [&](double tau, double tau2) { return delta * delta * (m * (4.0 * tau - cc.tau1 * cc.tau1) - tau2); };
    predicted = std::max(bound(cc.tau, 0.0), bound(cc.tau_ref, cc.tau2));
  }
  info(rep, "predicted_lower_bound_up_to_universal_constant", predicted);
  if (opt.truncation_level) {
    const auto t = truncation_inputs(f.ctx, *opt.truncation_level);
    const double corr = truncation_correction(t.fourth_moment, *opt.truncation_level, n, t.eps);
    info(rep, "truncation_level", *opt.truncation_level);
    info(rep, "truncation_correction", corr);
    info(rep, "predicted_minus_truncation", predicted - corr);
  }
  return rep;
}

AuditReport hellinger_audit(const AssouadFamily& af, double n, const AuditOptions& opt) {
  if (!(n >= 1.0)) throw InvalidArgument("sample size must be at least 1");
  AuditReport rep;
  const auto& f = af.family();
  const ContrastConstants& cc = f.k;
  const int m = f.m();
  const double delta = af.delta();
  common_entries(rep, af, n, cc);

  double centering = 0.0;
  for (double mu : af.mu_components()) centering = std::max(centering, std::abs(mu));
  at_most(rep, "centering_max", centering, opt.centering_tol);

  const auto neighbors = gray_code_pairs(m, opt.pairs, split_seed(opt.seed, 1));
  const auto spread = random_pairs(m, opt.pairs, split_seed(opt.seed, 2));
  std::vector<std::pair<Vertex, Vertex>> all = neighbors;
  all.insert(all.end(), spread.begin(), spread.end());

  if (m > 0) {
    ratio_entries(rep, af, probe_vertices(af, all), opt);
    std::vector<double> slack(all.size()), dp(all.size());
    parallel_for(all.size(), opt.threads, [&](std::size_t i) {
      auto [u, v] = all[i];
      const double h2 = hellinger_sq(af, u, v);
      const int d = hamming(u, v);
      const double req = std::max(cc.tau * d, cc.tau_ref * d - cc.tau2) * delta * delta / 6.0;
      slack[i] = (h2 - req) / (delta * delta);
      if (u == v) {
        dp[i] = 0.0;
      } else {
        const double g2 = prior_hellinger_sq(af, u, v);
        dp[i] = g2 > 0.0 ? std::sqrt(h2 / g2) : (h2 > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
      }
    });
    double slack_min = std::numeric_limits<double>::infinity(), dp_max = 0.0;
    for (std::size_t i = 0; i < all.size(); ++i) {
      slack_min = std::min(slack_min, slack[i]);
      dp_max = std::max(dp_max, dp[i]);
    }
    at_least(rep, "hellinger_slack_min", slack_min, 0.0, 1e-9);
    // H(f_u, f_v) <= H(G_u, G_v); the two sides use different quadratures.
    at_most(rep, "hellinger_data_processing_ratio_max", dp_max, 1.0, 1e-9);
  }

  double predicted = 0.0;
  if (m > 0) predicted = delta * delta * std::max(m * cc.tau, m * cc.tau_ref - cc.tau2);
  info(rep, "predicted_lower_bound_up_to_universal_constant", predicted);
  if (opt.truncation_level) {
    const auto t = truncation_inputs(f.ctx, *opt.truncation_level);
    const double corr = truncation_correction_density(n, t.eps);
    info(rep, "truncation_level", *opt.truncation_level);
    info(rep, "truncation_correction", corr);
    info(rep, "predicted_minus_truncation", predicted - corr);
  }
  return rep;
}

double truncation_correction(double fourth_moment, double a, double n, double eps) {
  if (fourth_moment < 0.0 || a < 0.0 || n < 0.0 || eps < 0.0)
    throw InvalidArgument("truncation correction needs nonnegative inputs");
  return 6.0 * std::sqrt((fourth_moment + std::pow(a, 4)) * n * eps);
}

double truncation_correction_density(double n, double eps) {
  if (n < 0.0 || eps < 0.0) throw InvalidArgument("truncation correction needs nonnegative inputs");
  return 8.0 * n * std::sqrt(eps);
}

}  // namespace eblab
