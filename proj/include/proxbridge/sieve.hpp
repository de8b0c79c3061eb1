#pragma once

#include <nlohmann/json.hpp>

#include "proxbridge/core_model.hpp"

namespace proxbridge {

/// Linear hypothesis and critic classes.
///
/// For h: hypothesis psi~(w, a, x), critic phi(z, a, x).
/// For q: hypothesis phi~(z, a, x), critic psi(w, a, x).
/// lambda = 0 is strategy I (sup over the unit critic ball); lambda > 0 is
/// strategy II (stabilized critic with ridge gamma). rho adds a Tikhonov term
/// on the hypothesis coefficients. A negative gamma selects
/// 1e-4 * trace(E_n[critic critic^T]).
struct SieveConfig {
  FeatureMap hypothesis = FeatureMap::constant();
  FeatureMap critic = FeatureMap::constant();
  double lambda = 1.0;
  double gamma = -1.0;
  double rho = 0.0;

  int strategy() const { return lambda > 0.0 ? 2 : 1; }
  /// Throws ConfigError on negative lambda or rho, or lambda > 0 with gamma == 0.
  void validate() const;
  /// gamma, or the automatic value for the critic Gram `gram`.
  double effective_gamma(const MatrixXd& gram) const;
};

/// Empirical moments of the quadratic problem: the moment vector is
/// g(alpha) = B alpha - c, and `gram` = E_n[critic critic^T].
struct SieveMoments {
  MatrixXd B;
  VectorXd c;
  MatrixXd gram;
};
/// h: B = E_n[phi psi~^T], c = E_n[Y phi].
SieveMoments sieve_moments_h(const ObservationTable& data, const SieveConfig& cfg);
/// q: B = E_n[pi(A|X) psi phi~^T], c = E_n[T psi].
SieveMoments sieve_moments_q(const ObservationTable& data, const SieveConfig& cfg, const ContrastSpec& contrast);

/// Weight matrix of the inner sup: I (strategy I) or (gamma I + lambda gram)^-1.
/// Throws ConfigError when the stabilized matrix is singular.
MatrixXd sieve_weight(const SieveMoments& m, const SieveConfig& cfg);
/// Exact inner sup at coefficients alpha: g^T g or (1/4) g^T M g.
double sieve_objective(const SieveMoments& m, const SieveConfig& cfg, const VectorXd& alpha);
/// alpha = (B^T M B + rho I)^+ B^T M c.
VectorXd sieve_solve(const SieveMoments& m, const SieveConfig& cfg);

BridgeFit fit_h_sieve(const ObservationTable& data, const SieveConfig& cfg);
BridgeFit fit_q_sieve(const ObservationTable& data, const SieveConfig& cfg, const ContrastSpec& contrast);

double minimax_objective_h(const ObservationTable& data, const SieveConfig& cfg, const VectorXd& alpha);
double minimax_objective_q(const ObservationTable& data, const SieveConfig& cfg, const ContrastSpec& contrast,
                           const VectorXd& alpha);

}  // namespace proxbridge
