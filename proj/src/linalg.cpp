#include "proxbridge/linalg.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "proxbridge/errors.hpp"

namespace proxbridge::linalg {

double RankTolerance::threshold(Eigen::Index rows, Eigen::Index cols, double sigma_max) const {
  if (rule == Rule::kMachine) {
    return static_cast<double>(std::max(rows, cols)) * std::numeric_limits<double>::epsilon() * sigma_max;
  }
  return rel * sigma_max;
}

MatrixXd pinv(const MatrixXd& a, RankTolerance tol) {
  if (a.size() == 0) return MatrixXd::Zero(a.cols(), a.rows());
  Eigen::BDCSVD<MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VectorXd& s = svd.singularValues();
  const double cut = tol.threshold(a.rows(), a.cols(), s.size() > 0 ? s(0) : 0.0);
  VectorXd inv = VectorXd::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > cut && s(i) > 0.0) inv(i) = 1.0 / s(i);
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

Eigen::Index rank(const MatrixXd& a, RankTolerance tol) {
  if (a.size() == 0) return 0;
  Eigen::BDCSVD<MatrixXd> svd(a);
  const VectorXd& s = svd.singularValues();
  const double cut = tol.threshold(a.rows(), a.cols(), s(0));
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > cut && s(i) > 0.0) ++r;
  }
  return r;
}

MatrixXd null_space(const MatrixXd& a, RankTolerance tol) {
  const Eigen::Index n = a.cols();
  if (a.rows() == 0) return MatrixXd::Identity(n, n);
  // Full V is needed to span the null space when rows < cols.
  Eigen::JacobiSVD<MatrixXd> svd(a, Eigen::ComputeFullV);
  const VectorXd& s = svd.singularValues();
  const double cut = tol.threshold(a.rows(), a.cols(), s.size() > 0 ? s(0) : 0.0);
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > cut && s(i) > 0.0) ++r;
  }
  return svd.matrixV().rightCols(n - r);
}

double asymmetry(const MatrixXd& a) {
  if (a.rows() != a.cols()) return std::numeric_limits<double>::infinity();
  if (a.size() == 0) return 0.0;
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  return (a - a.transpose()).cwiseAbs().maxCoeff() / scale;
}

ClippedEigen clipped_eigen(const MatrixXd& k, double sym_tol) {
  const double asym = asymmetry(k);
  if (asym > sym_tol) {
    throw NumericalError("matrix is not symmetric (relative asymmetry " + std::to_string(asym) + ")");
  }
  const MatrixXd sym = 0.5 * (k + k.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw NumericalError("symmetric eigendecomposition failed");
  ClippedEigen out;
  out.min_raw = es.eigenvalues().size() > 0 ? es.eigenvalues().minCoeff() : 0.0;
  out.values = es.eigenvalues().cwiseMax(0.0);
  out.vectors = es.eigenvectors();
  return out;
}

MatrixXd matrix_sqrt_psd(const MatrixXd& k, double sym_tol) {
  const ClippedEigen e = clipped_eigen(k, sym_tol);
  return e.vectors * e.values.cwiseSqrt().asDiagonal() * e.vectors.transpose();
}

bool is_psd(const MatrixXd& k, double tol) {
  if (k.size() == 0) return true;
  const MatrixXd sym = 0.5 * (k + k.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym, Eigen::EigenvaluesOnly);
  const VectorXd& ev = es.eigenvalues();
  const double norm = std::max(std::abs(ev.minCoeff()), std::abs(ev.maxCoeff()));
  return ev.minCoeff() >= -tol * std::max(norm, 1e-300);
}

namespace {

bool try_ldlt(const MatrixXd& a, const MatrixXd& b, MatrixXd& x) {
  Eigen::LDLT<MatrixXd> ldlt(a);
  if (ldlt.info() != Eigen::Success) return false;
  // Reject factorizations whose pivots collapsed to (numerical) zero.
  const VectorXd d = ldlt.vectorD();
  const double dmax = d.cwiseAbs().maxCoeff();
  if (!(dmax > 0.0)) return false;
  if (d.minCoeff() <= 1e-14 * dmax) return false;
  x = ldlt.solve(b);
  return x.allFinite();
}

}  // namespace

MatrixXd solve_psd(const MatrixXd& a, const MatrixXd& b, double base_jitter) {
  MatrixXd x;
  if (try_ldlt(a, b, x)) return x;
  double base = base_jitter;
  if (!(base > 0.0)) {
    const double tr = a.trace() / static_cast<double>(std::max<Eigen::Index>(a.rows(), 1));
    base = 1e-10 * std::max(tr, 1.0);
  }
  const MatrixXd eye = MatrixXd::Identity(a.rows(), a.cols());
  for (const double mult : {1.0, 10.0, 100.0}) {
    const double jitter = base * mult;
    spdlog::warn("LDLT failed; retrying with jitter {:.3e}", jitter);
    if (try_ldlt(a + jitter * eye, b, x)) return x;
  }
  throw NumericalError("symmetric solve failed after jitter escalation up to " + std::to_string(100.0 * base));
}

}  // namespace proxbridge::linalg
