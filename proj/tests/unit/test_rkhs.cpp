#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "proxbridge/errors.hpp"
#include "proxbridge/io.hpp"
#include "proxbridge/rkhs.hpp"
#include "proxbridge/rng.hpp"
#include "proxbridge/sieve.hpp"
#include "proxbridge/synthetic.hpp"
#include "tiny_checks.hpp"

using namespace proxbridge;

namespace {

const VectorXd& coefficients(const BridgeFit& f) { return std::get<SieveDescriptor>(f.descriptor()).coefficients; }

RkhsConfig sieve_cfg(int strategy, FeatureMap features, double lambda = 0.0, double gamma = 0.0) {
  RkhsConfig c;
  c.strategy = strategy;
  c.lambda = lambda;
  c.gamma = gamma;
  c.features = std::move(features);
  return c;
}

// Distinct continuous proxies and covariate, binary action.
ObservationTable continuous_table(Eigen::Index n, std::uint64_t seed) {
  Rng rng(seed);
  VectorXd y(n), a(n);
  RowMatrix w(n, 1), z(n, 1), x(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    y(i) = rng.normal();
    w(i, 0) = rng.normal();
    z(i, 0) = rng.normal();
    x(i, 0) = rng.normal();
    a(i) = double(rng.below(2));
  }
  return ObservationTable(y, w, z, a, x, ActionSupport::discrete({0.0, 1.0}));
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("proxbridge_rkhs_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST_SUITE("rkhs") {

TEST_CASE("constant kernel gives all-ones Gram matrices") {
  const auto t = continuous_table(5, 1);
  const auto s = t.support();
  const auto k = KernelSpec::product(BlockKernel::constant(), BlockKernel::constant(), BlockKernel::constant());
  const auto policy = ContrastSpec::policy_table(s, {}, {{0.3, 0.7}});
  const auto g = build_gram_bundle(t, k, k, &policy);
  CHECK((g.dense_kz().array() - 1.0).abs().maxCoeff() < 1e-15);
  CHECK((g.dense_kw1().array() - 1.0).abs().maxCoeff() < 1e-15);
  CHECK((g.dense_kw2().array() - 1.0).abs().maxCoeff() < 1e-15);
  const auto ate = ContrastSpec::ate_binary(s);
  CHECK(build_gram_bundle(t, k, k, &ate).dense_kw2().cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("one-row table has a 1x1 Gram matrix") {
  const auto t = continuous_table(1, 2);
  const auto g = build_gram_bundle(t, KernelSpec::default_for(true), KernelSpec::default_for(true), nullptr);
  REQUIRE(g.dense_kz().rows() == 1);
  CHECK(g.dense_kz()(0, 0) == doctest::Approx(1.0));
  CHECK_THROWS_AS(g.dense_kw2(), ConfigError);
}

TEST_CASE("K_w2 matches the hand sum over actions") {
  const auto t = continuous_table(4, 3);
  const auto policy = ContrastSpec::policy_table(t.support(), {}, {{0.25, 0.75}});
  const double bw = 0.9, bx = 1.3;
  const auto k = KernelSpec::product(BlockKernel::rbf(bw), BlockKernel::indicator(), BlockKernel::rbf(bx));
  const MatrixXd kw2 = build_gram_bundle(t, k, k, &policy).dense_kw2();
  const double pol[2] = {0.25, 0.75};
  for (Eigen::Index i = 0; i < 4; ++i) {
    for (Eigen::Index j = 0; j < 4; ++j) {
      const double dw = t.w()(i, 0) - t.w()(j, 0), dx = t.x()(i, 0) - t.x()(j, 0);
      const double base = std::exp(-dw * dw / (2 * bw * bw)) * std::exp(-dx * dx / (2 * bx * bx));
      const double expect = pol[int(t.a()(i))] * base;
      CHECK(std::abs(kw2(i, j) - expect) < 1e-14);
    }
  }
}

TEST_CASE("identity critic Gram with a constant hypothesis gives the outcome mean") {
  const auto t = continuous_table(9, 4);
  const auto k = KernelSpec::joint(BlockKernel::indicator());
  const auto g = build_gram_bundle(t, k, k, nullptr);
  CHECK((g.dense_kz() - MatrixXd::Identity(9, 9)).cwiseAbs().maxCoeff() < 1e-15);
  const auto h = fit_h_kernel(t, g, sieve_cfg(1, FeatureMap::constant()));
  CHECK(std::abs(coefficients(h)(0) - t.y().mean()) < 1e-12);
}

TEST_CASE("oracle bridges have zero objective on a population table") {
  const auto d = oracle::quarter_dgp();
  const auto t = population_table(d, 1024);
  const auto c = d.contrast_spec();
  const auto sets = oracle_discrete_bridge_sets(d);
  const BridgeFit h = bridge_from_cells(BridgeKind::kOutcome, d, sets.h);
  const BridgeFit q = bridge_from_cells(BridgeKind::kAction, d, sets.q);
  const auto g = build_gram_bundle(t, KernelSpec::default_for(true), KernelSpec::default_for(true), &c);
  for (int strategy : {1, 2}) {
    const auto cfg = sieve_cfg(strategy, FeatureMap::constant(), strategy == 2 ? 1.0 : 0.0, strategy == 2 ? 0.01 : 0.0);
    const double zh = rkhs_objective_h(t, g, cfg, BridgeFit::constant(BridgeKind::kOutcome, 0.0));
    const double zq = rkhs_objective_q(t, g, cfg, c, BridgeFit::constant(BridgeKind::kAction, 0.0));
    CHECK(rkhs_objective_h(t, g, cfg, h) <= 1e-12 * std::max(1.0, zh));
    CHECK(std::abs(rkhs_objective_q(t, g, cfg, c, q)) <= 1e-10 * std::max(1.0, std::abs(zq)));
  }
}

TEST_CASE("fits and inner sups agree with the dual-maximization oracle") {
  for (std::uint64_t seed = 1; seed <= 12; ++seed) {
    for (const auto& r : oracle::run_tiny_checks(seed)) {
      INFO("seed " << seed << " " << r.label);
      CHECK(r.inner_rel <= 1e-6);
      CHECK(r.outer_rel <= 1e-6);
    }
  }
}

TEST_CASE("zero policy gives a zero action bridge") {
  const auto d = bundled_discrete("unique_binary");
  const auto t = generate_discrete(d, 500, 6);
  const auto zero = ContrastSpec::policy_table(t.support(), {}, {{0.0, 0.0}});
  const auto k = KernelSpec::default_for(true);
  const auto g = build_gram_bundle(t, k, k, &zero);
  RkhsConfig sv = sieve_cfg(2, saturated_map(d, ProxyRole::kZ), 1.0, 0.01);
  RkhsConfig kv = sv;
  kv.hypothesis = RkhsConfig::Hypothesis::kKernel;
  kv.kernel = k;
  kv.rho = -1.0;
  for (const auto& cfg : {sv, kv}) {
    const auto q = fit_q_kernel(t, g, cfg, zero);
    CHECK(q.eval_rows(t).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("identity K_w1 makes pi q equal the row sums of K_w2") {
  const auto t = continuous_table(7, 7);
  const auto policy = ContrastSpec::policy_table(t.support(), {}, {{0.4, 0.6}});
  const auto k = KernelSpec::joint(BlockKernel::indicator());
  const auto g = build_gram_bundle(t, k, k, &policy);
  const auto q = fit_q_kernel(t, g, sieve_cfg(1, FeatureMap::saturated_from_data(t, ProxyRole::kZ)), policy);
  const VectorXd s = pi_rows(policy, t).cwiseProduct(q.eval_rows(t));
  const VectorXd target = g.dense_kw2() * VectorXd::Ones(7);
  CHECK((s - target).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("saturated q with the default kernel critic has small projected residual") {
  const auto d = bundled_discrete("unique_binary");
  const auto t = generate_discrete(d, 20000, 31);
  const auto c = d.contrast_spec();
  const auto g = build_gram_bundle(t, KernelSpec::default_for(true), KernelSpec::default_for(true), &c);
  const auto q = fit_q_kernel(t, g, sieve_cfg(2, saturated_map(d, ProxyRole::kZ), 1.0, 1e-3), c);
  const double r = oracle_conditional_residual(d, q);
  MESSAGE("q residual " << r);
  CHECK(r <= 0.03);
}

TEST_CASE("matrix square root") {
  CHECK((matrix_sqrt_psd(MatrixXd::Identity(3, 3)) - MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-15);
  const MatrixXd r = matrix_sqrt_psd((MatrixXd(2, 2) << 4, 0, 0, 9).finished());
  CHECK((r - (MatrixXd(2, 2) << 2, 0, 0, 3).finished()).cwiseAbs().maxCoeff() < 1e-14);
  Rng rng(8);
  MatrixXd a(6, 6);
  for (Eigen::Index i = 0; i < 6; ++i)
    for (Eigen::Index j = 0; j < 6; ++j) a(i, j) = rng.normal();
  const MatrixXd k = a.transpose() * a;
  const MatrixXd s = matrix_sqrt_psd(k);
  CHECK((s * s - k).cwiseAbs().maxCoeff() <= 1e-9 * k.cwiseAbs().maxCoeff());
  CHECK_THROWS_AS(matrix_sqrt_psd((MatrixXd(2, 2) << 1, 2, 0, 1).finished()), NumericalError);
}

TEST_CASE("feature-map kernel reproduces the sieve estimator") {
  const auto d = bundled_discrete("three_action");
  const auto t = generate_discrete(d, 2000, 9);
  const auto c = d.contrast_spec();
  const auto hyp_w = FeatureMap::polynomial(1, 1, 1), hyp_z = FeatureMap::polynomial(1, 1, 1);
  const auto crit_z = saturated_map(d, ProxyRole::kZ), crit_w = saturated_map(d, ProxyRole::kW);
  const auto g = build_gram_bundle(t, KernelSpec::features(crit_z), KernelSpec::features(crit_w), &c);
  const double n = double(t.n());
  for (int strategy : {1, 2}) {
    const double lambda = strategy == 2 ? 1.0 : 0.0, gamma = strategy == 2 ? 0.01 : 0.0;
    SieveConfig sh;
    sh.hypothesis = hyp_w;
    sh.critic = crit_z;
    sh.lambda = lambda;
    sh.gamma = gamma;
    SieveConfig sq = sh;
    sq.hypothesis = hyp_z;
    sq.critic = crit_w;
    const VectorXd a_sh = coefficients(fit_h_sieve(t, sh));
    const VectorXd a_sq = coefficients(fit_q_sieve(t, sq, c));
    const VectorXd a_kh = coefficients(fit_h_kernel(t, g, sieve_cfg(strategy, hyp_w, lambda, gamma * n)));
    const VectorXd a_kq = coefficients(fit_q_kernel(t, g, sieve_cfg(strategy, hyp_z, lambda, gamma * n), c));
    CHECK((a_sh - a_kh).norm() <= 1e-8 * a_sh.norm());
    CHECK((a_sq - a_kq).norm() <= 1e-8 * a_sq.norm());
  }
}

TEST_CASE("wide RBF critic approaches the constant critic") {
  const auto t = continuous_table(60, 10);
  const auto policy = ContrastSpec::policy_table(t.support(), {}, {{0.2, 0.8}});
  const VectorXd pi = pi_rows(policy, t);
  const double h_target = t.y().mean();
  const double q_target = double(t.n()) / pi.sum();  // sum_k pi(a_k) = 1 per row
  double prev_h = 1e300, prev_q = 1e300;
  for (double bw : {10.0, 100.0, 1000.0}) {
    const auto k = KernelSpec::product(BlockKernel::rbf(bw), BlockKernel::rbf(bw), BlockKernel::rbf(bw));
    const auto g = build_gram_bundle(t, k, k, &policy);
    const double eh = std::abs(coefficients(fit_h_kernel(t, g, sieve_cfg(1, FeatureMap::constant())))(0) - h_target);
    const double eq =
        std::abs(coefficients(fit_q_kernel(t, g, sieve_cfg(1, FeatureMap::constant()), policy))(0) - q_target);
    CHECK(eh <= prev_h);
    CHECK(eq <= prev_q);
    prev_h = eh;
    prev_q = eq;
  }
  CHECK(prev_h <= 1e-4 * (1.0 + std::abs(h_target)));
  CHECK(prev_q <= 1e-4 * (1.0 + std::abs(q_target)));
}

TEST_CASE("Gram cache round trip") {
  const auto d = bundled_discrete("three_action");
  const auto t = generate_discrete(d, 800, 11);
  const auto c = d.contrast_spec();
  const auto k = KernelSpec::default_for(true);
  const auto dir = scratch_dir("cache");
  const auto g1 = build_gram_bundle_cached(t, k, k, &c, dir);
  const auto file = dir / ("gram_" + io::hex64(g1.key) + ".bin");
  REQUIRE(std::filesystem::exists(file));
  const auto g2 = build_gram_bundle_cached(t, k, k, &c, dir);
  CHECK(g1.key == g2.key);
  CHECK(g1.kz == g2.kz);
  CHECK(g1.kw1 == g2.kw1);
  CHECK(g1.kw2 == g2.kw2);
  CHECK(g1.kw3 == g2.kw3);
  CHECK(g1.psd());

  auto other = build_gram_bundle(generate_discrete(d, 800, 12), k, k, &c);
  CHECK(other.key != g1.key);
  CHECK_FALSE(load_gram_matrices(file, other));
  std::filesystem::remove_all(dir);
}

TEST_CASE("objective is convex in the hypothesis coefficients") {
  const auto inst = oracle::tiny_instance(5);
  const auto g = build_gram_bundle(inst.data, inst.kernel_z, inst.kernel_w, &inst.contrast);
  for (int strategy : {1, 2}) {
    const auto cfg = sieve_cfg(strategy, inst.hyp_w, strategy == 2 ? inst.lambda : 0.0, strategy == 2 ? inst.gamma : 0.0);
    const MatrixXd phi = inst.hyp_w.eval_rows(inst.data, ProxyRole::kW);
    const auto quad = oracle::interpolate_quadratic(
        [&](const VectorXd& al) { return rkhs_objective_h_values(g, cfg, inst.data.y() - phi * al); }, phi.cols());
    const Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (quad.H + quad.H.transpose()));
    CHECK(es.eigenvalues().minCoeff() >= -1e-10 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("indefinite critic Gram is rejected under strategy II") {
  const auto t = continuous_table(6, 13);
  auto g = build_gram_bundle(t, KernelSpec::default_for(true), KernelSpec::default_for(true), nullptr);
  g.kz = -g.kz;
  CHECK_THROWS_AS(rkhs_objective_h_values(g, sieve_cfg(2, FeatureMap::constant(), 1.0, 0.1), t.y()), NumericalError);
}

TEST_CASE("configuration errors") {
  const auto t = continuous_table(6, 14);
  const auto g = build_gram_bundle(t, KernelSpec::default_for(true), KernelSpec::default_for(true), nullptr);
  CHECK_THROWS_AS(fit_h_kernel(t, g, sieve_cfg(2, FeatureMap::constant(), 1.0, 0.0)), ConfigError);
  CHECK_THROWS_AS(fit_h_kernel(t, g, sieve_cfg(3, FeatureMap::constant())), ConfigError);
  CHECK_THROWS_AS(fit_h_kernel(t, g, sieve_cfg(1, FeatureMap::constant(), -1.0, 0.0)), ConfigError);
  RkhsConfig k = sieve_cfg(1, FeatureMap::constant());
  k.hypothesis = RkhsConfig::Hypothesis::kKernel;
  k.kernel = KernelSpec::default_for(true);
  k.rho = 0.0;
  CHECK_THROWS_AS(fit_h_kernel(t, g, k), ConfigError);
  k.kernel.reset();
  k.rho = 0.1;
  CHECK_THROWS_AS(fit_h_kernel(t, g, k), ConfigError);
  const auto policy = ContrastSpec::policy_table(t.support(), {}, {{0.5, 0.5}});
  CHECK_THROWS_AS(fit_q_kernel(t, g, sieve_cfg(1, FeatureMap::constant()), policy), ConfigError);
  CHECK_THROWS_AS(fit_h_kernel(continuous_table(5, 1), g, sieve_cfg(1, FeatureMap::constant())), ConfigError);
}

}  // TEST_SUITE
