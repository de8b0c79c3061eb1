#include "doctest.h"

#include <cmath>

#include "oracles.hpp"
#include "proxbridge/errors.hpp"
#include "proxbridge/gace.hpp"
#include "proxbridge/rng.hpp"
#include "proxbridge/synthetic.hpp"

using namespace proxbridge;

namespace {

struct Oracles {
  BridgeFit h;
  BridgeFit q;
};

Oracles oracle_bridges(const DiscreteDGP& d) {
  const auto sets = oracle_discrete_bridge_sets(d);
  return {bridge_from_cells(BridgeKind::kOutcome, d, sets.h), bridge_from_cells(BridgeKind::kAction, d, sets.q)};
}

NuisanceConfig saturated_nuisances(const DiscreteDGP& d) {
  NuisanceConfig c;
  c.h_sieve.hypothesis = saturated_map(d, ProxyRole::kW);
  c.h_sieve.critic = saturated_map(d, ProxyRole::kZ);
  c.q_sieve.hypothesis = saturated_map(d, ProxyRole::kZ);
  c.q_sieve.critic = saturated_map(d, ProxyRole::kW);
  return c;
}

}  // namespace

TEST_SUITE("gace") {

TEST_CASE("zero action bridge gives a zero IPW estimate") {
  const auto d = bundled_discrete("unique_binary");
  const auto t = generate_discrete(d, 1000, 1);
  const auto r = estimate_ipw(BridgeFit::constant(BridgeKind::kAction, 0.0), t, d.contrast_spec());
  CHECK(r.J == 0.0);
  CHECK(r.se == 0.0);
  CHECK(r.descriptive);
}

TEST_CASE("oracle bridges give all three estimators within 4 se of J") {
  for (const std::string name : {"unique_binary", "three_action"}) {
    const auto d = bundled_discrete(name);
    const auto t = generate_discrete(d, 100000, 2);
    const auto c = d.contrast_spec();
    const auto o = oracle_bridges(d);
    const double j = oracle_discrete_J(d);
    for (const auto& r : {estimate_ipw(o.q, t, c), estimate_reg(o.h, t, c), estimate_dr(o.h, o.q, t, c)}) {
      INFO(name << " " << r.estimator << " J " << r.J << " se " << r.se << " truth " << j);
      CHECK(std::abs(r.J - j) <= 4.0 * r.se);
    }
  }
}

TEST_CASE("DR score is IPW plus REG minus the cross term") {
  const auto d = bundled_discrete("three_action");
  const auto t = generate_discrete(d, 3000, 3);
  const auto c = d.contrast_spec();
  const auto o = oracle_bridges(d);
  const VectorXd pi = pi_rows(c, t);
  const VectorXd cross = pi.cwiseProduct(o.q.eval_rows(t)).cwiseProduct(o.h.eval_rows(t));
  const VectorXd lhs = dr_scores(o.h, o.q, t, c);
  const VectorXd rhs = ipw_scores(o.q, t, c) + reg_scores(o.h, t, c) - cross;
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("DR reduces to IPW and REG") {
  const auto d = bundled_discrete("unique_binary");
  const auto t = generate_discrete(d, 2000, 4);
  const auto c = d.contrast_spec();
  const auto o = oracle_bridges(d);
  const auto zero_h = BridgeFit::constant(BridgeKind::kOutcome, 0.0);
  const auto zero_q = BridgeFit::constant(BridgeKind::kAction, 0.0);
  CHECK(estimate_dr(zero_h, o.q, t, c).J == doctest::Approx(estimate_ipw(o.q, t, c).J).epsilon(1e-14));
  CHECK(estimate_dr(o.h, zero_q, t, c).J == doctest::Approx(estimate_reg(o.h, t, c).J).epsilon(1e-14));
}

TEST_CASE("EIF variance of constant and two-point scores") {
  const auto s = ActionSupport::discrete({0.0, 1.0});
  VectorXd y(2), a(2);
  y << 0.3, -1.0;
  a << 0.0, 1.0;
  RowMatrix w(2, 1), z(2, 1), x(2, 0);
  w << 0.0, 1.0;
  z << 0.0, 0.0;
  const ObservationTable t(y, w, z, a, x, s);
  const auto c = ContrastSpec::policy_table(s, {}, {{0.5, 0.5}});
  const auto zero_q = BridgeFit::constant(BridgeKind::kAction, 0.0);
  CHECK(eif_variance(BridgeFit::constant(BridgeKind::kOutcome, 3.0), zero_q, 3.0, t, c) == 0.0);
  const FeatureMap lin = FeatureMap::polynomial(1, 1, 0, Arity{true, false, false});
  const BridgeFit h(BridgeKind::kOutcome, SieveDescriptor{lin, (VectorXd(2) << 0.0, 2.0).finished()});
  CHECK(eif_variance(h, zero_q, 1.0, t, c) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("normal intervals") {
  const VectorXd scores = (VectorXd(4) << 1, 2, 3, 4).finished();
  const auto r = report_from_scores("x", scores, 0.05, false);
  CHECK(r.J == doctest::Approx(2.5));
  CHECK(r.se == doctest::Approx(std::sqrt(1.25 / 4.0)).epsilon(1e-14));
  CHECK(normal_quantile_two_sided(0.05) == doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK(r.ci_hi - r.ci_lo == doctest::Approx(2.0 * normal_quantile_two_sided(0.05) * r.se).epsilon(1e-14));
  double prev = 1e300;
  for (double alpha : {0.01, 0.05, 0.1, 0.2}) {
    const auto ri = report_from_scores("x", scores, alpha, false);
    CHECK(ri.ci_hi - ri.ci_lo < prev);
    CHECK(ri.ci_lo < ri.J);
    CHECK(ri.ci_hi > ri.J);
    prev = ri.ci_hi - ri.ci_lo;
  }
}

TEST_CASE("cross-fitting is seed deterministic and matches the full-sample oracle") {
  const auto d = bundled_discrete("three_action");
  const auto t = generate_discrete(d, 4000, 5);
  const auto c = d.contrast_spec();
  const auto cfg = saturated_nuisances(d);
  const auto r1 = estimate_dr_crossfit(t, c, cfg, 5, 17);
  const auto r2 = estimate_dr_crossfit(t, c, cfg, 5, 17, 0.05, 2);
  CHECK(r1.J == r2.J);
  CHECK(r1.se == r2.se);
  CHECK(r1.folds.size() == 5);
  CHECK(std::abs(r1.J - oracle_discrete_J(d)) <= 5.0 * r1.se);

  auto with_oracles = cfg;
  const auto o = oracle_bridges(d);
  with_oracles.oracle_h = o.h;
  with_oracles.oracle_q = o.q;
  const auto ro = estimate_dr_crossfit(t, c, with_oracles, 4, 3);
  const auto full = estimate_dr(o.h, o.q, t, c);
  CHECK(std::abs(ro.J - full.J) < 1e-12);
  CHECK(std::abs(ro.se - full.se) < 1e-12);
}

TEST_CASE("fold layout") {
  const auto folds = crossfit_folds(103, 5, 9);
  REQUIRE(folds.size() == 5);
  std::vector<int> seen(103, 0);
  for (const auto& f : folds) {
    CHECK((f.size() == 20 || f.size() == 21));
    for (auto i : f) ++seen[i];
  }
  for (int s : seen) CHECK(s == 1);
  CHECK(crossfit_folds(103, 5, 9) == folds);
  CHECK(crossfit_folds(103, 5, 10) != folds);
}

TEST_CASE("cross-fitting configuration errors") {
  const auto d = bundled_discrete("unique_binary");
  const auto c = d.contrast_spec();
  const auto cfg = saturated_nuisances(d);
  CHECK_THROWS_AS(estimate_dr_crossfit(generate_discrete(d, 12, 1), c, cfg, 2, 1), ConfigError);
  CHECK_THROWS_AS(estimate_dr_crossfit(generate_discrete(d, 500, 1), c, cfg, 1, 1), ConfigError);
}

TEST_CASE("population DR is robust to one wrong nuisance") {
  const auto d = oracle::quarter_dgp();
  const oracle::Enumerator e(d);
  const auto sets = oracle_discrete_bridge_sets(d);
  const double j = e.j_reg();
  const CellFn h0 = sets.h_fn(), q0 = sets.q_fn();
  const CellFn bad_h = [](int w, int a, int x) { return 0.7 * w - a + 0.2 * x + 0.1; };
  const CellFn bad_q = [](int z, int a, int x) { return 1.5 + 0.3 * z * a - 0.4 * x; };
  CHECK(std::abs(e.dr(h0, bad_q) - j) < 1e-12);
  CHECK(std::abs(e.dr(bad_h, q0) - j) < 1e-12);
  CHECK(std::abs(e.dr(bad_h, bad_q) - j) > 1e-6);
}

TEST_CASE("population functionals ignore the bridge null space") {
  const auto d = bundled_discrete("nonunique_policy");
  const oracle::Enumerator e(d);
  const auto sets = oracle_discrete_bridge_sets(d);
  REQUIRE_FALSE(sets.h_unique());
  REQUIRE_FALSE(sets.q_unique());
  const double j = oracle_discrete_J(d);
  auto shifted = [](const Vec2<VectorXd>& base, const Vec2<MatrixXd>& null, double scale) {
    Vec2<VectorXd> out = base;
    for (size_t x = 0; x < out.size(); ++x)
      for (size_t a = 0; a < out[x].size(); ++a)
        if (null[x][a].cols() > 0) out[x][a] += scale * null[x][a].col(0);
    return out;
  };
  for (double scale : {-3.0, 0.5, 10.0}) {
    const BridgeFit h = bridge_from_cells(BridgeKind::kOutcome, d, shifted(sets.h, sets.h_null, scale));
    const BridgeFit q = bridge_from_cells(BridgeKind::kAction, d, shifted(sets.q, sets.q_null, scale));
    CHECK(std::abs(e.reg(cell_fn(h, d)) - j) < 1e-12);
    CHECK(std::abs(e.ipw(cell_fn(q, d)) - j) < 1e-12);
    CHECK(std::abs(e.dr(cell_fn(h, d), cell_fn(q, d)) - j) < 1e-12);
  }
}

}  // TEST_SUITE
