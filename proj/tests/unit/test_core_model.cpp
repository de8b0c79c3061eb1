#include "doctest.h"

#include <cmath>
#include <vector>

#include "proxbridge/core_model.hpp"
#include "proxbridge/errors.hpp"
#include "proxbridge/rng.hpp"

using namespace proxbridge;

namespace {

const std::vector<double> kW{0.3};
const std::vector<double> kX{-0.7};

BridgeFit sieve_h(const FeatureMap& phi, VectorXd coef) {
  return BridgeFit(BridgeKind::kOutcome, SieveDescriptor{phi, std::move(coef)});
}

FeatureMap action_poly(int degree) { return FeatureMap::polynomial(degree, 1, 1, Arity{false, true, false}); }

ObservationTable small_table(const ActionSupport& s, std::uint64_t seed, Eigen::Index n) {
  Rng rng(seed);
  VectorXd y(n), a(n);
  RowMatrix w(n, 1), z(n, 1), x(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    y(i) = rng.normal();
    w(i, 0) = rng.normal();
    z(i, 0) = rng.normal();
    x(i, 0) = rng.normal();
    a(i) = s.is_discrete() ? s.levels[rng.below(s.size())] : rng.uniform(s.lo, s.hi);
  }
  return ObservationTable(y, w, z, a, x, s);
}

}  // namespace

TEST_SUITE("core_model") {

TEST_CASE("T of h(a) = a under the ATE contrast is 1") {
  const auto s = ActionSupport::discrete({0.0, 1.0});
  const auto h = sieve_h(action_poly(1), (VectorXd(2) << 0.0, 1.0).finished());
  CHECK(t_apply(h, ContrastSpec::ate_binary(s), kW, kX) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("T of a constant under a probability contrast is the constant") {
  const auto s = ActionSupport::discrete({0.0, 1.0, 2.0});
  const auto c = ContrastSpec::policy_table(s, {}, {{0.1, 0.6, 0.3}});
  CHECK(t_apply(BridgeFit::constant(BridgeKind::kOutcome, 2.75), c, kW, kX) == doctest::Approx(2.75).epsilon(1e-14));
}

TEST_CASE("three actions with weights 0.2 0.3 0.5 and values 1 2 3 give 2.3") {
  const auto s = ActionSupport::discrete({0.0, 1.0, 2.0});
  const auto c = ContrastSpec::policy_table(s, {}, {{0.2, 0.3, 0.5}});
  const auto h = sieve_h(action_poly(1), (VectorXd(2) << 1.0, 1.0).finished());
  CHECK(std::abs(t_apply(h, c, kW, kX) - 2.3) < 1e-14);
}

TEST_CASE("discrete T equals the brute-force sum over actions") {
  const auto s = ActionSupport::discrete({-1.0, 0.5, 2.0});
  const auto c = ContrastSpec::policy_table(s, {{0.0}, {1.0}}, {{0.2, 0.5, 0.3}, {-1.0, 0.0, 2.0}});
  const FeatureMap phi = FeatureMap::polynomial(2, 1, 1);
  Rng rng(3);
  VectorXd coef(phi.dim());
  for (Eigen::Index k = 0; k < coef.size(); ++k) coef(k) = rng.normal();
  const auto h = sieve_h(phi, coef);
  for (double xv : {0.0, 1.0}) {
    const std::vector<double> x{xv};
    double brute = 0.0;
    for (int k = 0; k < 3; ++k) {
      const Action a{s.levels[static_cast<std::size_t>(k)], k};
      brute += c.pi(a, x) * h.eval({kW, a, x});
    }
    CHECK(t_apply(h, c, kW, x) == brute);
  }
}

TEST_CASE("T is linear in h") {
  const auto s = ActionSupport::continuous(-1.0, 1.0);
  ContrastSpec::Density dens;
  dens.kind = ContrastSpec::Density::Kind::kGaussian;
  dens.mean0 = 0.1;
  dens.slope = {0.4};
  dens.sd = 0.6;
  const auto c = ContrastSpec::gauss_legendre(s, 5, dens);
  const FeatureMap phi = FeatureMap::polynomial(3, 1, 1);
  Rng rng(11);
  VectorXd c1(phi.dim()), c2(phi.dim());
  for (Eigen::Index k = 0; k < phi.dim(); ++k) {
    c1(k) = rng.normal();
    c2(k) = rng.normal();
  }
  const double al = 1.7, be = -0.4;
  const double lhs = t_apply(sieve_h(phi, al * c1 + be * c2), c, kW, kX);
  const double rhs = al * t_apply(sieve_h(phi, c1), c, kW, kX) + be * t_apply(sieve_h(phi, c2), c, kW, kX);
  CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, std::abs(rhs)));
}

TEST_CASE("integration rule mismatch is a configuration error") {
  const auto disc = ActionSupport::discrete({0.0, 1.0});
  const auto cont = ActionSupport::continuous(0.0, 1.0);
  ContrastSpec::Density dens;
  const auto quad = ContrastSpec::gauss_legendre(cont, 3, dens);
  const auto h = BridgeFit::constant(BridgeKind::kOutcome, 1.0);
  CHECK_THROWS_AS(t_apply_rows(h, quad, small_table(disc, 1, 4)), ConfigError);
  CHECK_THROWS_AS(t_apply_rows(h, ContrastSpec::ate_binary(disc), small_table(cont, 1, 4)), ConfigError);
  const auto other = ActionSupport::discrete({0.0, 2.0});
  CHECK_THROWS_AS(pi_rows(ContrastSpec::ate_binary(disc), small_table(other, 2, 4)), ConfigError);
}

TEST_CASE("kernel T with a constant kernel and a probability contrast is 1") {
  const auto s = ActionSupport::discrete({0.0, 1.0, 2.0});
  const auto c = ContrastSpec::policy_table(s, {}, {{0.25, 0.25, 0.5}});
  const auto k = KernelSpec::product(BlockKernel::constant(), BlockKernel::constant(), BlockKernel::constant());
  const std::vector<double> w0{1.0}, x0{2.0};
  const PointView anchor{w0, Action{1.0, 1}, x0};
  CHECK(t_apply_kernel(k, c, anchor, kW, kX) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("kernel T with an action indicator and a uniform policy is 0.5") {
  const auto s = ActionSupport::discrete({0.0, 1.0});
  const auto c = ContrastSpec::policy_table(s, {}, {{0.5, 0.5}});
  const auto k = KernelSpec::product(BlockKernel::constant(), BlockKernel::indicator(), BlockKernel::constant());
  const std::vector<double> w0{1.0}, x0{2.0};
  CHECK(t_apply_kernel(k, c, {w0, Action{1.0, 1}, x0}, kW, kX) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("kernel T with RBF blocks and three nodes matches the weighted sum") {
  const auto s = ActionSupport::continuous(-2.0, 2.0);
  ContrastSpec::Density dens;
  dens.lo = -1.0;
  dens.hi = 1.5;
  const auto c = ContrastSpec::gauss_legendre(s, 3, dens);
  REQUIRE(c.nodes().size() == 3);
  const auto k = KernelSpec::product(BlockKernel::rbf(0.9), BlockKernel::rbf(0.6), BlockKernel::rbf(1.3));
  const std::vector<double> w0{0.4}, x0{-0.2};
  const PointView anchor{w0, Action{0.3, -1}, x0};
  double brute = 0.0;
  for (std::size_t q = 0; q < 3; ++q) {
    const double a = c.nodes()[q].value;
    const double kv = std::exp(-std::pow(0.4 - kW[0], 2) / (2 * 0.81)) * std::exp(-std::pow(0.3 - a, 2) / (2 * 0.36)) *
                      std::exp(-std::pow(-0.2 - kX[0], 2) / (2 * 1.69));
    brute += c.weights()[q] * (1.0 / 2.5) * kv;
  }
  CHECK(std::abs(t_apply_kernel(k, c, anchor, kW, kX) - brute) < 1e-14);
}

TEST_CASE("Gauss-Legendre weights integrate polynomials exactly") {
  const auto s = ActionSupport::continuous(0.0, 3.0);
  ContrastSpec::Density dens;
  dens.lo = 0.5;
  dens.hi = 2.5;
  const auto c = ContrastSpec::gauss_legendre(s, 3, dens);
  // Uniform density on [0.5, 2.5]: E[a^4] = (2.5^5 - 0.5^5) / (5 * 2).
  double m4 = 0.0;
  for (std::size_t q = 0; q < c.nodes().size(); ++q) {
    m4 += c.weights()[q] * c.pi(c.nodes()[q], kX) * std::pow(c.nodes()[q].value, 4);
  }
  CHECK(std::abs(m4 - (std::pow(2.5, 5) - std::pow(0.5, 5)) / 10.0) < 1e-12);
}

TEST_CASE("bridge serialization round-trips pointwise") {
  const auto s = ActionSupport::discrete({0.0, 1.0});
  Rng rng(5);
  const FeatureMap phi = FeatureMap::polynomial(2, 2, 1);
  VectorXd coef(phi.dim());
  for (Eigen::Index k = 0; k < coef.size(); ++k) coef(k) = rng.normal();
  FitDiagnostics diag;
  diag.method = "sieve";
  diag.strategy = 2;
  diag.objective = 0.125;
  diag.lambda = 1.0;
  diag.gamma = 1e-4;
  const BridgeFit sieve(BridgeKind::kAction, SieveDescriptor{phi, coef}, diag);

  KernelDescriptor kd;
  kd.kernel = KernelSpec::product(BlockKernel::rbf(0.7), BlockKernel::indicator(), BlockKernel::polynomial(2, 1.0));
  kd.anchor_proxy = RowMatrix(3, 2);
  kd.anchor_a = VectorXd(3);
  kd.anchor_x = RowMatrix(3, 1);
  kd.dual = VectorXd(3);
  for (int i = 0; i < 3; ++i) {
    kd.anchor_proxy(i, 0) = rng.normal();
    kd.anchor_proxy(i, 1) = rng.normal();
    kd.anchor_a(i) = i % 2;
    kd.anchor_a_index.push_back(i % 2);
    kd.anchor_x(i, 0) = rng.normal();
    kd.dual(i) = rng.normal();
  }
  const BridgeFit kern(BridgeKind::kOutcome, kd);

  for (const BridgeFit* f : {&sieve, &kern}) {
    const BridgeFit back = BridgeFit::from_json(nlohmann::json::parse(f->to_json().dump()));
    CHECK(back.kind() == f->kind());
    CHECK(back.diagnostics().method == f->diagnostics().method);
    CHECK(back.diagnostics().objective == f->diagnostics().objective);
    for (int g = 0; g < 50; ++g) {
      const std::vector<double> p{rng.uniform(-2, 2), rng.uniform(-2, 2)}, x{rng.uniform(-2, 2)};
      const int ai = static_cast<int>(rng.below(2));
      const PointView v{p, Action{double(ai), ai}, x};
      const double a = f->eval(v), b = back.eval(v);
      CHECK(std::isfinite(a));
      CHECK(std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(a)));
    }
  }
}

TEST_CASE("contrasts round-trip through JSON") {
  const auto s = ActionSupport::discrete({0.0, 1.0, 2.0});
  const auto c = ContrastSpec::policy_table(s, {{0.0}, {1.0}}, {{0.2, 0.3, 0.5}, {0.6, 0.2, 0.2}});
  const auto back = ContrastSpec::from_json(c.to_json(), s);
  for (int a = 0; a < 3; ++a) {
    for (double xv : {0.0, 1.0}) {
      const std::vector<double> x{xv};
      const Action act{double(a), a};
      CHECK(back.pi(act, x) == c.pi(act, x));
    }
  }
  const auto custom = ContrastSpec::custom(s, "mine", [](const Action&, std::span<const double>) { return 1.0; });
  CHECK_THROWS_AS(custom.to_json(), ConfigError);
}

TEST_CASE("tables validate actions and subset rows in order") {
  const auto s = ActionSupport::discrete({0.0, 1.0});
  VectorXd bad_a(2);
  bad_a << 0.0, 0.5;
  CHECK_THROWS_AS(ObservationTable(VectorXd::Zero(2), RowMatrix::Zero(2, 1), RowMatrix::Zero(2, 1), bad_a,
                                   RowMatrix::Zero(2, 0), s),
                  ValidationError);
  const auto t = small_table(s, 9, 6);
  const std::vector<std::size_t> idx{4, 1, 1};
  const auto sub = t.subset(idx);
  REQUIRE(sub.n() == 3);
  CHECK(sub.y()(0) == t.y()(4));
  CHECK(sub.w()(2, 0) == t.w()(1, 0));
  CHECK(sub.a_index()[0] == t.a_index()[4]);
  CHECK(t.hash() == small_table(s, 9, 6).hash());
  CHECK(t.hash() != small_table(s, 10, 6).hash());
}

}  // TEST_SUITE
