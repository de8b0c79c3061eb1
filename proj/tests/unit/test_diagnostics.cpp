#include "doctest.h"

#include <cmath>
#include <limits>

#include "oracles.hpp"
#include "tiny_checks.hpp"
#include "proxbridge/diagnostics.hpp"
#include "proxbridge/errors.hpp"
#include "proxbridge/parallel.hpp"
#include "proxbridge/rng.hpp"

using namespace proxbridge;

namespace {

ReplicationRecord record(std::size_t cell, std::size_t rep, Eigen::Index n, double j, double se) {
  ReplicationRecord r;
  r.cell = cell;
  r.rep = rep;
  r.n = n;
  r.J = j;
  r.se = se;
  r.ci_lo = j - 1.96 * se;
  r.ci_hi = j + 1.96 * se;
  return r;
}

double binom_cdf(int k, int n, double p) {
  double s = 0.0;
  for (int i = 0; i <= k; ++i) {
    s += std::exp(std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) + i * std::log(p) +
                  (n - i) * std::log1p(-p));
  }
  return s;
}

// Root of a monotone function on [0, 1] by bisection.
double bisect(const std::function<double(double)>& f) {
  double lo = 1e-15, hi = 1.0 - 1e-15;
  const bool rising = f(hi) > f(lo);
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if ((f(mid) > 0) == rising) hi = mid; else lo = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_SUITE("diagnostics") {

TEST_CASE("identity proxies have tau_1 equal to one") {
  const auto d = bundled_discrete("identity_proxies");
  for (auto bridge : {BridgeKind::kOutcome, BridgeKind::kAction}) {
    const auto map = saturated_map(d, bridge == BridgeKind::kOutcome ? ProxyRole::kW : ProxyRole::kZ);
    const auto t1 = ill_posedness_discrete(d, map, Tau::kOne, bridge);
    CHECK_FALSE(t1.infinite);
    CHECK(t1.value == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("nonunique model has infinite tau_2") {
  const auto d = bundled_discrete("nonunique_policy");
  CHECK(ill_posedness_discrete(d, saturated_map(d, ProxyRole::kW), Tau::kTwo, BridgeKind::kOutcome).infinite);
  CHECK(ill_posedness_discrete(d, saturated_map(d, ProxyRole::kZ), Tau::kTwo, BridgeKind::kAction).infinite);
}

TEST_CASE("sup ratio agrees with a random-direction search") {
  struct Case {
    DiscreteDGP d;
    Tau kind;
    BridgeKind bridge;
  };
  std::vector<Case> cases;
  const auto ub = bundled_discrete("unique_binary");
  const auto ta = bundled_discrete("three_action");
  const auto wide = random_discrete_dgp(4, 2, 3, 3, 2, 1);
  for (auto b : {BridgeKind::kOutcome, BridgeKind::kAction}) {
    cases.push_back({ub, Tau::kOne, b});
    cases.push_back({ub, Tau::kTwo, b});
    cases.push_back({ta, Tau::kOne, b});
    cases.push_back({wide, Tau::kOne, b});
  }
  std::uint64_t seed = 1;
  for (const auto& c : cases) {
    const auto map = saturated_map(c.d, c.bridge == BridgeKind::kOutcome ? ProxyRole::kW : ProxyRole::kZ);
    const auto lib = ill_posedness_discrete(c.d, map, c.kind, c.bridge);
    REQUIRE_FALSE(lib.infinite);
    const double search = oracle::random_direction_sup(c.d, c.kind, c.bridge, 100000, seed++);
    INFO(c.d.name << " tau" << (c.kind == Tau::kOne ? 1 : 2) << " library " << lib.value << " search " << search);
    CHECK(search <= lib.value * (1.0 + 1e-9));
    CHECK(search >= 0.99 * lib.value);
  }
}

TEST_CASE("tau_1 is between one and tau_2") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto d = random_discrete_dgp(seed, 2, 2 + int(seed % 2), 2 + int(seed % 3 == 0), 2, 2);
    for (auto b : {BridgeKind::kOutcome, BridgeKind::kAction}) {
      const auto map = saturated_map(d, b == BridgeKind::kOutcome ? ProxyRole::kW : ProxyRole::kZ);
      const auto t1 = ill_posedness_discrete(d, map, Tau::kOne, b);
      const auto t2 = ill_posedness_discrete(d, map, Tau::kTwo, b);
      REQUIRE_FALSE(t1.infinite);
      CHECK(t1.value >= 1.0 - 1e-9);
      CHECK((t2.infinite || t1.value <= t2.value * (1.0 + 1e-9)));
    }
  }
}

TEST_CASE("infinite tau_2 exactly when the observed null space is nontrivial") {
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    const int nw = 2 + int(seed % 2), nz = 2 + int(seed % 3 == 0);
    const auto d = random_discrete_dgp(seed, 2, nw, nz, 2, 1 + int(seed % 2));
    const oracle::Enumerator e(d);
    bool any_null = false;
    for (int x = 0; x < d.n_x; ++x) {
      for (int a = 0; a < d.n_a; ++a) {
        const MatrixXd pwz = e.w_given_z(x, a);
        const Eigen::FullPivLU<MatrixXd> lu(pwz);
        const auto dim = pwz.cols() - lu.rank();
        CHECK(observed_null_h(d, x, a).cols() == dim);
        any_null = any_null || dim > 0;
      }
    }
    const auto t2 = ill_posedness_discrete(d, saturated_map(d, ProxyRole::kW), Tau::kTwo, BridgeKind::kOutcome);
    INFO("seed " << seed << " |W| " << nw << " |Z| " << nz);
    CHECK(t2.infinite == any_null);
  }
}

TEST_CASE("generalized ratio edge cases") {
  IllPosednessForms f;
  f.num = (MatrixXd(2, 2) << 4, 0, 0, 1).finished();
  f.den = (MatrixXd(2, 2) << 1, 0, 0, 1).finished();
  CHECK(generalized_sup_ratio(f).value == doctest::Approx(2.0));
  f.den = (MatrixXd(2, 2) << 1, 0, 0, 0).finished();
  CHECK(generalized_sup_ratio(f).infinite);
  f.num = (MatrixXd(2, 2) << 4, 0, 0, 0).finished();
  const auto r = generalized_sup_ratio(f);
  CHECK_FALSE(r.infinite);
  CHECK(r.value == doctest::Approx(2.0));
  f.num.setZero();
  f.den.setZero();
  CHECK(generalized_sup_ratio(f).value == 0.0);
}

TEST_CASE("identification identities hold on every bundled discrete model") {
  for (const auto& name : bundled_discrete_names()) {
    const auto rep = check_identification_identities(bundled_discrete(name), 5, 3);
    INFO(name << " max violation " << rep.max_violation);
    CHECK(rep.pass);
    CHECK(rep.max_violation < 1e-9);
  }
}

TEST_CASE("rate slope from synthetic records") {
  const std::vector<Eigen::Index> sizes{100, 400, 1600, 6400};
  std::vector<ReplicationRecord> recs;
  for (std::size_t c = 0; c < sizes.size(); ++c) {
    const double e = 3.0 / std::sqrt(double(sizes[c]));
    recs.push_back(record(c, 0, sizes[c], 1.0 + e, 0.1));
    recs.push_back(record(c, 1, sizes[c], 1.0 - e, 0.1));
  }
  const auto rate = rate_report_from_records(recs, sizes, 1.0);
  CHECK(rate.slope_defined);
  CHECK(rate.slope == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(rate.inversions == 0);
  CHECK(rate.cells[0].bias == doctest::Approx(0.0));

  for (auto& r : recs) r.J = 1.0;
  const auto flat = rate_report_from_records(recs, sizes, 1.0);
  CHECK_FALSE(flat.slope_defined);
}

TEST_CASE("coverage fractions and Clopper-Pearson bounds") {
  std::vector<ReplicationRecord> recs;
  for (std::size_t r = 0; r < 100; ++r) recs.push_back(record(0, r, 50, r < 95 ? 0.0 : 10.0, 1.0));
  const auto cov = coverage_report_from_records(recs, {50}, 0.0);
  REQUIRE(cov.cells.size() == 1);
  const auto& c = cov.cells[0];
  CHECK(c.covered == 95);
  CHECK(c.total == 100);
  CHECK(c.fraction == doctest::Approx(0.95));
  const double lo = bisect([](double p) { return 1.0 - binom_cdf(94, 100, p) - 0.025; });
  const double hi = bisect([](double p) { return binom_cdf(95, 100, p) - 0.025; });
  CHECK(c.ci_lo == doctest::Approx(lo).epsilon(1e-6));
  CHECK(c.ci_hi == doctest::Approx(hi).epsilon(1e-6));
  CHECK_FALSE(c.degenerate);

  for (auto& r : recs) r.se = 0.0, r.ci_lo = r.ci_hi = r.J;
  CHECK(coverage_report_from_records(recs, {50}, 0.0).cells[0].degenerate);
}

TEST_CASE("replications are ordered and seed deterministic") {
  ReplicationStudy s;
  s.sizes = {10, 20, 30};
  s.replications = 7;
  s.master_seed = 99;
  s.run = [](Eigen::Index n, std::uint64_t seed) {
    Rng rng(seed);
    ReplicationOutput o;
    o.report.J = rng.normal() + double(n);
    o.report.se = 1.0;
    o.report.n = n;
    return o;
  };
  s.jobs = 1;
  const auto a = run_replications(s);
  s.jobs = 4;
  const auto b = run_replications(s);
  REQUIRE(a.size() == 21);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].cell == i / 7);
    CHECK(a[i].rep == i % 7);
    CHECK(a[i].n == s.sizes[i / 7]);
    CHECK(a[i].seed == replication_seed(99, i / 7, i % 7));
    CHECK(a[i].J == b[i].J);
  }
  const auto order = parallel_map(50, 4, [](std::size_t i) { return i * i; });
  for (std::size_t i = 0; i < 50; ++i) CHECK(order[i] == i * i);
}

TEST_CASE("projected MSE of the oracle nuisances is zero") {
  const auto d = bundled_discrete("three_action");
  const auto sets = oracle_discrete_bridge_sets(d);
  NuisanceConfig cfg;
  cfg.oracle_h = bridge_from_cells(BridgeKind::kOutcome, d, sets.h);
  cfg.oracle_q = bridge_from_cells(BridgeKind::kAction, d, sets.q);
  const auto curve = projected_mse_curve(d, cfg, {200, 400}, 2, 5);
  for (const auto& c : curve.cells) {
    CHECK(c.h_residual < 1e-12);
    CHECK(c.q_residual < 1e-12);
  }
}

TEST_CASE("projected MSE of saturated fits shrinks with n") {
  const auto d = bundled_discrete("unique_binary");
  NuisanceConfig cfg;
  cfg.h_sieve.hypothesis = saturated_map(d, ProxyRole::kW);
  cfg.h_sieve.critic = saturated_map(d, ProxyRole::kZ);
  cfg.q_sieve.hypothesis = saturated_map(d, ProxyRole::kZ);
  cfg.q_sieve.critic = saturated_map(d, ProxyRole::kW);
  const auto curve = projected_mse_curve(d, cfg, {500, 5000, 50000}, 3, 7);
  CHECK(curve.h_decreasing);
  CHECK(curve.q_decreasing);
}

}  // TEST_SUITE
