#pragma once

#include <Eigen/Dense>

namespace proxbridge::linalg {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// How singular values are cut off when forming pseudoinverses or ranks.
struct RankTolerance {
  enum class Rule {
    /// sigma <= rel * sigma_max is zero.
    kRelative,
    /// sigma <= max(rows, cols) * eps * sigma_max is zero (LAPACK/NumPy default).
    kMachine,
  };
  Rule rule = Rule::kMachine;
  double rel = 1e-10;

  static RankTolerance relative(double r) { return {Rule::kRelative, r}; }
  static RankTolerance machine() { return {Rule::kMachine, 0.0}; }

  double threshold(Eigen::Index rows, Eigen::Index cols, double sigma_max) const;
};

/// Moore-Penrose pseudoinverse via SVD.
MatrixXd pinv(const MatrixXd& a, RankTolerance tol = RankTolerance::machine());

/// Numerical rank via SVD.
Eigen::Index rank(const MatrixXd& a, RankTolerance tol = RankTolerance::relative(1e-10));

/// Orthonormal basis (columns) of {v : a v = 0}. May have zero columns.
MatrixXd null_space(const MatrixXd& a, RankTolerance tol = RankTolerance::relative(1e-10));

/// Symmetric square root of a PSD matrix: eigendecompose, clip eigenvalues
/// below zero, take roots, recompose. Throws NumericalError when the input is
/// asymmetric beyond sym_tol * max(1, ||K||_max).
MatrixXd matrix_sqrt_psd(const MatrixXd& k, double sym_tol = 1e-10);

/// Eigen-decomposition of a symmetric matrix with eigenvalues clipped at zero.
struct ClippedEigen {
  VectorXd values;   // ascending, all >= 0
  MatrixXd vectors;  // columns
  double min_raw = 0.0;  // smallest eigenvalue before clipping
};
ClippedEigen clipped_eigen(const MatrixXd& k, double sym_tol = 1e-10);

/// True when every eigenvalue of the symmetrized matrix is >= -tol * ||K||_2.
bool is_psd(const MatrixXd& k, double tol = 1e-10);

/// Solves (A + jitter I) x = b for symmetric PSD A with an LDLT factorization.
/// Starts without jitter; on failure retries with jitter = base, 10 base,
/// 100 base, logging every escalation. Throws NumericalError when all fail.
MatrixXd solve_psd(const MatrixXd& a, const MatrixXd& b, double base_jitter);

/// Max |a_ij - a_ji| relative to max(1, max |a_ij|).
double asymmetry(const MatrixXd& a);

}  // namespace proxbridge::linalg
