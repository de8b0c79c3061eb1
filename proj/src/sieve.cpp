#include "proxbridge/sieve.hpp"

#include <cmath>

#include "proxbridge/errors.hpp"
#include "proxbridge/linalg.hpp"

namespace proxbridge {

void SieveConfig::validate() const {
  if (!(lambda >= 0.0) || !(rho >= 0.0) || std::isnan(gamma)) {
    throw ConfigError("sieve hyperparameters lambda and rho must be >= 0");
  }
  if (lambda > 0.0 && gamma == 0.0) {
    throw ConfigError("strategy II (lambda > 0) needs gamma > 0 so that gamma I + lambda E_n[phi phi^T] is invertible");
  }
}

double SieveConfig::effective_gamma(const MatrixXd& gram) const {
  if (gamma >= 0.0) return gamma;
  const double tr = gram.trace();
  return tr > 0.0 ? 1e-4 * tr : 1e-4;
}

namespace {

void require_rows(const ObservationTable& data) {
  if (data.empty()) throw ValidationError("cannot fit a bridge on an empty table");
}

void require_finite(const MatrixXd& m, const char* what) {
  if (!m.allFinite()) throw NumericalError(std::string(what) + " produced non-finite feature values");
}

}  // namespace

SieveMoments sieve_moments_h(const ObservationTable& data, const SieveConfig& cfg) {
  require_rows(data);
  const MatrixXd psi = cfg.hypothesis.eval_rows(data, ProxyRole::kW);
  const MatrixXd phi = cfg.critic.eval_rows(data, ProxyRole::kZ);
  require_finite(psi, "hypothesis map");
  require_finite(phi, "critic map");
  const double inv_n = 1.0 / static_cast<double>(data.n());
  SieveMoments m;
  m.B = inv_n * (phi.transpose() * psi);
  m.c = inv_n * (phi.transpose() * data.y());
  m.gram = inv_n * (phi.transpose() * phi);
  return m;
}

SieveMoments sieve_moments_q(const ObservationTable& data, const SieveConfig& cfg, const ContrastSpec& contrast) {
  require_rows(data);
  contrast.check_compatible(data.support());
  const MatrixXd phi = cfg.hypothesis.eval_rows(data, ProxyRole::kZ);
  const MatrixXd psi = cfg.critic.eval_rows(data, ProxyRole::kW);
  const MatrixXd tpsi = t_apply_features_rows(cfg.critic, contrast, data);
  require_finite(phi, "hypothesis map");
  require_finite(psi, "critic map");
  const VectorXd pi = pi_rows(contrast, data);
  const double inv_n = 1.0 / static_cast<double>(data.n());
  SieveMoments m;
  m.B = inv_n * (psi.transpose() * pi.asDiagonal() * phi);
  m.c = inv_n * tpsi.colwise().sum().transpose();
  m.gram = inv_n * (psi.transpose() * psi);
  return m;
}

MatrixXd sieve_weight(const SieveMoments& m, const SieveConfig& cfg) {
  cfg.validate();
  const Eigen::Index d = m.gram.rows();
  if (cfg.strategy() == 1) return MatrixXd::Identity(d, d);
  const MatrixXd s = cfg.effective_gamma(m.gram) * MatrixXd::Identity(d, d) + cfg.lambda * m.gram;
  Eigen::LDLT<MatrixXd> ldlt(s);
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 0.0)) {
    throw ConfigError("stabilized critic matrix gamma I + lambda E_n[phi phi^T] is singular; use gamma > 0");
  }
  return ldlt.solve(MatrixXd::Identity(d, d));
}

double sieve_objective(const SieveMoments& m, const SieveConfig& cfg, const VectorXd& alpha) {
  if (alpha.size() != m.B.cols()) throw ValidationError("coefficient length does not match the hypothesis dimension");
  const VectorXd g = m.B * alpha - m.c;
  if (cfg.strategy() == 1) {
    cfg.validate();
    return g.squaredNorm();
  }
  return 0.25 * g.dot(sieve_weight(m, cfg) * g);
}

VectorXd sieve_solve(const SieveMoments& m, const SieveConfig& cfg) {
  const MatrixXd w = sieve_weight(m, cfg);
  const Eigen::Index d = m.B.cols();
  const MatrixXd lhs = m.B.transpose() * w * m.B + cfg.rho * MatrixXd::Identity(d, d);
  const VectorXd rhs = m.B.transpose() * w * m.c;
  return linalg::pinv(0.5 * (lhs + lhs.transpose())) * rhs;
}

namespace {

BridgeFit finish(BridgeKind kind, const SieveMoments& m, const SieveConfig& cfg, Eigen::Index n, const char* method) {
  VectorXd alpha = sieve_solve(m, cfg);
  FitDiagnostics d;
  d.method = method;
  d.strategy = cfg.strategy();
  d.objective = sieve_objective(m, cfg, alpha);
  d.lambda = cfg.lambda;
  d.gamma = cfg.strategy() == 2 ? cfg.effective_gamma(m.gram) : 0.0;
  d.rho = cfg.rho;
  d.n = n;
  return BridgeFit(kind, SieveDescriptor{cfg.hypothesis, std::move(alpha)}, d);
}

}  // namespace

BridgeFit fit_h_sieve(const ObservationTable& data, const SieveConfig& cfg) {
  cfg.validate();
  return finish(BridgeKind::kOutcome, sieve_moments_h(data, cfg), cfg, data.n(), "sieve");
}

BridgeFit fit_q_sieve(const ObservationTable& data, const SieveConfig& cfg, const ContrastSpec& contrast) {
  cfg.validate();
  return finish(BridgeKind::kAction, sieve_moments_q(data, cfg, contrast), cfg, data.n(), "sieve");
}

double minimax_objective_h(const ObservationTable& data, const SieveConfig& cfg, const VectorXd& alpha) {
  cfg.validate();
  return sieve_objective(sieve_moments_h(data, cfg), cfg, alpha);
}

double minimax_objective_q(const ObservationTable& data, const SieveConfig& cfg, const ContrastSpec& contrast,
                           const VectorXd& alpha) {
  cfg.validate();
  return sieve_objective(sieve_moments_q(data, cfg, contrast), cfg, alpha);
}

}  // namespace proxbridge
