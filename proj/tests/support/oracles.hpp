#pragma once

// Brute-force reference computations used by the unit and acceptance tests.
// Nothing here calls the estimator code paths it is compared against.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "proxbridge/core_model.hpp"
#include "proxbridge/kernel.hpp"
#include "proxbridge/synthetic.hpp"

namespace oracle {

using proxbridge::ContrastSpec;
using proxbridge::DiscreteDGP;
using proxbridge::FeatureMap;
using proxbridge::KernelSpec;
using proxbridge::ObservationTable;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// ------------------------------------------------------------ tiny instances

struct TinyInstance {
  ObservationTable data;
  ContrastSpec contrast;
  FeatureMap hyp_w = FeatureMap::constant();     // functions of (w, a, x)
  FeatureMap hyp_z = FeatureMap::constant();     // functions of (z, a, x)
  FeatureMap critic_z = FeatureMap::constant();  // functions of (z, a, x)
  FeatureMap critic_w = FeatureMap::constant();  // functions of (w, a, x)
  KernelSpec kernel_z;
  KernelSpec kernel_w;
  double lambda = 1.0;
  double gamma = 0.1;
};

/// n in [2, 8], scalar proxies and covariate, 2 or 3 actions, random policy
/// weights, feature maps of dimension 1 to 3 and product RBF kernels.
TinyInstance tiny_instance(std::uint64_t seed);

// ------------------------------------------------------------ critic sups

/// sup over critic coefficients b of the h game with critic phi:
///   strategy 1: (E_n[(h - Y) phi^T b])^2 subject to |b| <= 1
///   strategy 2: E_n[(h - Y) phi^T b] - lambda E_n[(phi^T b)^2] - gamma |b|^2
/// The maximizer is found from the first-order system and the objective is
/// then evaluated row by row.
double sieve_sup_h(const ObservationTable& data, const FeatureMap& phi, const VectorXd& h, int strategy,
                   double lambda, double gamma);
/// Same with moment pi q psi(W, A, X) - (T psi)(W, X).
double sieve_sup_q(const ObservationTable& data, const ContrastSpec& contrast, const FeatureMap& psi,
                   const VectorXd& q, int strategy, double lambda, double gamma);

/// Kernel critic f = sum_p c_p k(p, .) over the row points (h) or the row
/// points plus every (w_j, a_k, x_j) (q). Strategy 2 subtracts
/// lambda E_n[f^2] + (gamma / n) |f|_H^2.
double kernel_sup_h(const ObservationTable& data, const KernelSpec& k, const VectorXd& h, int strategy,
                    double lambda, double gamma);
double kernel_sup_q(const ObservationTable& data, const ContrastSpec& contrast, const KernelSpec& k,
                    const VectorXd& q, int strategy, double lambda, double gamma);

// ------------------------------------------------------------ outer minimization

/// Recovers the quadratic F(v) = v^T H v + b^T v + c from 1 + d + d(d+1)/2
/// evaluations and returns a minimizer (pseudoinverse of H).
struct Quadratic {
  MatrixXd H;
  VectorXd b;
  double c = 0.0;
  VectorXd argmin() const;
};
Quadratic interpolate_quadratic(const std::function<double(const VectorXd&)>& f, Eigen::Index dim);

// ------------------------------------------------------------ discrete enumeration

/// Full joint law over (x, u, a, z, w), enumerated cell by cell.
class Enumerator {
 public:
  explicit Enumerator(const DiscreteDGP& d);
  double p(int x, int u, int a, int z, int w) const;
  double pi(int a, int x) const;
  /// Sum over (x, u) of p(x) p(u|x) sum_a pi(a|x) E[Y | u, a, x].
  double j_reg() const;
  /// E[pi(A|X) Y / f(A|U,X)] summed over the full joint.
  double j_ipw() const;
  /// sqrt E[(E[Y - h | Z, A, X])^2].
  double residual_h(const proxbridge::CellFn& h) const;
  /// sqrt E[(pi(A|X) (E[q | W, A, X] - 1 / P(A | W, X)))^2].
  double residual_q(const proxbridge::CellFn& q) const;
  /// E[pi q (Y - h) + (T h)(W, X)].
  double dr(const proxbridge::CellFn& h, const proxbridge::CellFn& q) const;
  /// E[(T h)(W, X)] and E[pi q Y].
  double reg(const proxbridge::CellFn& h) const;
  double ipw(const proxbridge::CellFn& q) const;
  /// Marginal law of the action index.
  std::vector<double> action_marginal() const;
  /// P(W | Z, a, x) as |Z| x |W| and P(Z | W, a, x) as |W| x |Z|.
  MatrixXd w_given_z(int x, int a) const;
  MatrixXd z_given_w(int x, int a) const;
  /// E[(E[g(W, A, X) | U, A, X])^2], E[(E[g | Z, A, X])^2], E[g(W, A, X)^2]
  /// and the action-side analogues weighted by pi^2.
  double u_norm_h(const proxbridge::CellFn& g) const;
  double z_norm_h(const proxbridge::CellFn& g) const;
  double full_norm_h(const proxbridge::CellFn& g) const;
  double u_norm_q(const proxbridge::CellFn& g) const;
  double w_norm_q(const proxbridge::CellFn& g) const;
  double full_norm_q(const proxbridge::CellFn& g) const;

 private:
  DiscreteDGP d_;
};

/// Nonunique model (|W| = |Z| = 3 over |U| = 2) whose probabilities are
/// multiples of 1/4, so population_table works with totals divisible by 1024.
DiscreteDGP quarter_dgp();

/// Relative difference |a - b| / max(|a|, |b|, floor).
double rel_diff(double a, double b, double floor = 1e-300);

}  // namespace oracle
