#include "doctest.h"

#include <cstdlib>
#include <set>

#include "proxbridge/errors.hpp"
#include "proxbridge/linalg.hpp"
#include "proxbridge/parallel.hpp"
#include "proxbridge/rng.hpp"

using namespace proxbridge;
using Eigen::MatrixXd;

TEST_SUITE("infra") {

TEST_CASE("rng streams are reproducible and distinct") {
  Rng a(5), b(5), c(6);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    (void)c;
  }
  CHECK(Rng(5).uniform() != Rng(6).uniform());
  std::set<std::uint64_t> seeds;
  for (std::size_t cell = 0; cell < 10; ++cell)
    for (std::size_t rep = 0; rep < 100; ++rep) seeds.insert(replication_seed(1, cell, rep));
  CHECK(seeds.size() == 1000);
  CHECK(derive_seed(1, 2) == derive_seed(1, 2));
  CHECK(derive_seed(1, 2) != derive_seed(2, 1));
}

TEST_CASE("rng distributions") {
  Rng r(11);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    s += z;
    s2 += z * z;
  }
  CHECK(std::abs(s / n) < 4.0 / std::sqrt(double(n)));
  CHECK(std::abs(s2 / n - 1.0) < 4.0 * std::sqrt(2.0 / n));
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    CHECK((u >= 0.0 && u < 1.0));
    CHECK(r.below(7) < 7);
  }
  const std::vector<double> w{0.0, 1.0, 0.0};
  CHECK(r.categorical(w) == 1);
  auto p = r.permutation(50);
  std::sort(p.begin(), p.end());
  for (std::size_t i = 0; i < 50; ++i) CHECK(p[i] == i);
}

TEST_CASE("pseudoinverse, rank and null space") {
  const MatrixXd a = (MatrixXd(3, 2) << 1, 2, 2, 4, 3, 6).finished();
  CHECK(linalg::rank(a) == 1);
  const MatrixXd p = linalg::pinv(a);
  CHECK((a * p * a - a).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((p * a * p - p).cwiseAbs().maxCoeff() < 1e-12);
  const MatrixXd n = linalg::null_space(a);
  REQUIRE(n.cols() == 1);
  CHECK((a * n).norm() < 1e-12);
  CHECK(std::abs(n.norm() - 1.0) < 1e-12);
  CHECK(linalg::null_space(MatrixXd::Identity(3, 3)).cols() == 0);
  CHECK(linalg::is_psd(a.transpose() * a));
  CHECK_FALSE(linalg::is_psd((MatrixXd(2, 2) << 1, 0, 0, -1).finished()));
}

TEST_CASE("PSD solve falls back to jitter and then fails") {
  const MatrixXd a = (MatrixXd(2, 2) << 1, 1, 1, 1).finished();
  const MatrixXd b = (MatrixXd(2, 1) << 1, 1).finished();
  const MatrixXd x = linalg::solve_psd(a, b, 1e-8);
  CHECK((a * x - b).norm() < 1e-6);
  CHECK_THROWS_AS(linalg::solve_psd((MatrixXd(2, 2) << -1, 0, 0, -1).finished(), b, 1e-8), NumericalError);
}

TEST_CASE("job count resolution") {
  unsetenv("PROXBRIDGE_JOBS");
  CHECK(resolve_jobs(3) == 3);
  CHECK(resolve_jobs(0) == 1);
  setenv("PROXBRIDGE_JOBS", "2", 1);
  CHECK(resolve_jobs(7) == 2);
  setenv("PROXBRIDGE_JOBS", "junk", 1);
  CHECK(resolve_jobs(4) == 4);
  unsetenv("PROXBRIDGE_JOBS");
}

TEST_CASE("parallel map keeps order and rethrows the first failure") {
  const auto out = parallel_map(100, 3, [](std::size_t i) { return 2 * i; });
  for (std::size_t i = 0; i < 100; ++i) CHECK(out[i] == 2 * i);
  try {
    parallel_map(20, 4, [](std::size_t i) -> int {
      if (i == 5 || i == 15) throw ConfigError("bad " + std::to_string(i));
      return 0;
    });
    FAIL("expected an exception");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("bad 5") != std::string::npos);
  }
}

}  // TEST_SUITE
