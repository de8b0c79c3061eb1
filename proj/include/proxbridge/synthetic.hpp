#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "proxbridge/core_model.hpp"

namespace proxbridge {

template <class T>
using Vec2 = std::vector<std::vector<T>>;
template <class T>
using Vec3 = std::vector<Vec2<T>>;
template <class T>
using Vec4 = std::vector<Vec3<T>>;

/// Finite-support model X -> U -> A -> (Z, W, Y). Every variable is a level
/// index; W, Z and X are written to tables as the scalar level index and A as
/// `a_levels[a]`. Y = y_mean[x][a][u] + Uniform(-noise, noise), independent of
/// W and Z given (U, A, X).
struct DiscreteDGP {
  std::string name;
  int n_u = 0, n_w = 0, n_z = 0, n_a = 0, n_x = 0;
  std::vector<double> a_levels;  // empty means 0..n_a-1
  std::vector<double> p_x;       // [x]
  Vec2<double> p_u;              // [x][u]
  Vec3<double> f;                // [x][u][a]   f(a | u, x)
  Vec3<double> p_w;              // [x][u][w]   P(w | u, x)
  Vec4<double> p_z;              // [x][a][u][z] P(z | u, a, x)
  Vec3<double> y_mean;           // [x][a][u]
  double noise = 0.0;
  /// "ate_binary" or "policy_table"; the table is [x][a].
  std::string contrast_type = "policy_table";
  Vec2<double> contrast;

  /// Throws ValidationError naming the first violated invariant.
  void validate() const;
  ActionSupport support() const;
  double action_value(int a) const { return a_levels.empty() ? static_cast<double>(a) : a_levels[static_cast<std::size_t>(a)]; }
  ContrastSpec contrast_spec() const;
  double pi(int a, int x) const;

  nlohmann::json to_json() const;
  static DiscreteDGP from_json(const nlohmann::json& j);
};

/// Tables with every row drawn uniformly then normalized, f bounded below by
/// `min_prob`, outcome means uniform on [-1, 1] and a random policy contrast.
DiscreteDGP random_discrete_dgp(std::uint64_t seed, int n_u, int n_w, int n_z, int n_a, int n_x, double min_prob = 0.1);

/// Samples n rows. When `u_out` is given it receives the latent U of each row.
ObservationTable generate_discrete(const DiscreteDGP& dgp, Eigen::Index n, std::uint64_t seed,
                                   std::vector<int>* u_out = nullptr);

/// Noise-free table in which every (x, u, a, z, w) cell appears exactly
/// p * total times, so sample moments equal population moments. Throws
/// ConfigError when some p * total is not an integer.
ObservationTable population_table(const DiscreteDGP& dgp, Eigen::Index total);

/// Function of (proxy level, action index, x level).
using CellFn = std::function<double(int, int, int)>;
/// Adapts a fitted bridge to level indices (outcome bridges read W, action
/// bridges read Z).
CellFn cell_fn(const BridgeFit& f, const DiscreteDGP& dgp);

struct OracleJ {
  double reg = 0.0;  // sum over (x, u, a) of p(x) p(u|x) pi(a|x) E[Y | u, a, x]
  double ipw = 0.0;  // E[pi(A|X) Y / f(A|U,X)] by enumeration of the observed law
  double value() const { return reg; }
};
OracleJ oracle_discrete_j_both(const DiscreteDGP& dgp);
double oracle_discrete_J(const DiscreteDGP& dgp);

struct DiscreteBridgeSets {
  Vec2<VectorXd> h;       // [x][a] particular solution over W levels
  Vec2<MatrixXd> h_null;  // [x][a] null-space basis (columns)
  Vec2<VectorXd> q;       // [x][a] particular solution over Z levels
  Vec2<MatrixXd> q_null;
  double h_u_residual = 0.0;  // max |P(W|U,a,x)^T h - E[Y|U,a,x]|
  double q_u_residual = 0.0;  // max |P(Z|U,a,x)^T q - 1/f(a|U,x)|
  bool h_unique() const;
  bool q_unique() const;
  CellFn h_fn() const;
  CellFn q_fn() const;
};
/// Minimum-norm solutions per (a, x) cell with singular values below
/// 1e-10 sigma_max treated as zero. Throws RankError when a proxy matrix has
/// column rank below |U|.
DiscreteBridgeSets oracle_discrete_bridge_sets(const DiscreteDGP& dgp);

/// Saturated-sieve bridge whose coefficient on cell (proxy, a, x) is
/// values[x][a](proxy).
BridgeFit bridge_from_cells(BridgeKind kind, const DiscreteDGP& dgp, const Vec2<VectorXd>& values);
BridgeFit bridge_from_fn(BridgeKind kind, const DiscreteDGP& dgp, const CellFn& fn);
/// The saturated feature map used by bridge_from_cells.
FeatureMap saturated_map(const DiscreteDGP& dgp, ProxyRole role);

/// E[Y - h | Z, A, X] and E[pi (q - 1/f(A|W,X)) | W, A, X], indexed [x][a][level].
Vec3<double> conditional_moment_h(const DiscreteDGP& dgp, const CellFn& h);
Vec3<double> conditional_moment_q(const DiscreteDGP& dgp, const CellFn& q);
/// sqrt(E[(E[Y - h | Z,A,X])^2]) for outcome candidates and
/// sqrt(E[(pi (E[q | W,A,X] - 1/f(A|W,X)))^2]) for action candidates.
double oracle_conditional_residual(const DiscreteDGP& dgp, BridgeKind kind, const CellFn& candidate);
double oracle_conditional_residual(const DiscreteDGP& dgp, const BridgeFit& candidate);

/// Exact population functionals.
double population_reg(const DiscreteDGP& dgp, const CellFn& h);            // E[(T h)(W, X)]
double population_ipw(const DiscreteDGP& dgp, const CellFn& q);            // E[pi q Y]
double population_dr(const DiscreteDGP& dgp, const CellFn& h, const CellFn& q);
/// E[phi] for the U-observed scores (IPW, REG, DR) with the true f and k0.
struct UScoreMeans {
  double ipw = 0.0, reg = 0.0, dr = 0.0;
};
UScoreMeans population_u_scores(const DiscreteDGP& dgp);
/// U-observed DR score pi/f (y - k0) + sum_a pi k0 for each sampled row.
VectorXd u_dr_scores(const DiscreteDGP& dgp, const ObservationTable& table, const std::vector<int>& u);

struct CellRank {
  int a = 0, x = 0;
  Eigen::Index rank_w_u = 0;       // P(W | U, a, x), |W| x |U|
  Eigen::Index rank_z_u = 0;       // P(Z | U, a, x), |Z| x |U|
  Eigen::Index rank_w_z = 0;       // P(W | Z, a, x) from the joint law
  Eigen::Index rank_w_z_product = 0;  // rank of P(W|U,a,x) P(U|Z,a,x)
  double product_gap = 0.0;        // max |P(W|Z) - P(W|U) P(U|Z)|
};
struct CompletenessReport {
  std::vector<CellRank> cells;
  bool full_column_rank = true;       // every proxy matrix has rank |U|
  bool unique_h = true;               // null space of every P(W|U)^T is {0}
  bool unique_q = true;
  bool observed_completeness_possible = true;  // |Z| >= |W| = |U|
  std::string regime;                 // "unique bridges" | "nonunique bridges" | "bridge existence not guaranteed"
  nlohmann::json to_json() const;
};
CompletenessReport completeness_rank_check(const DiscreteDGP& dgp);

/// Linear structural model with U_j ~ Unif(u_lo, u_hi), X_j ~ Unif(x_lo, x_hi)
/// independent, Gaussian noise, and
///   W = alpha_w U + beta_w X + e_w
///   A ~ Unif(a_lo_u^T U + a_lo_x^T X + c_lo, a_hi_u^T U + a_hi_x^T X + c_hi)
///   Z = alpha_z U + beta_z X + gamma_z A + e_z
///   Y = alpha_y^T U + beta_y^T X + gamma_y A + omega_y^T W + e_y.
struct LinearSEMDGP {
  std::string name;
  int p_u = 1, p_w = 1, p_z = 1, d_x = 1;
  VectorXd alpha_y, beta_y, omega_y;
  double gamma_y = 0.0;
  MatrixXd alpha_z, beta_z;
  VectorXd gamma_z;
  MatrixXd alpha_w, beta_w;
  VectorXd a_lo_u, a_lo_x, a_hi_u, a_hi_x;
  double c_lo = 0.0, c_hi = 1.0;
  double var_y = 1.0, var_z = 1.0, var_w = 1.0;
  double u_lo = 0.0, u_hi = 1.0, x_lo = 0.0, x_hi = 1.0;

  void validate() const;
  /// Range covering every possible action.
  ActionSupport support() const;
  double a_lower(const VectorXd& u, const VectorXd& x) const;
  double a_upper(const VectorXd& u, const VectorXd& x) const;

  nlohmann::json to_json() const;
  static LinearSEMDGP from_json(const nlohmann::json& j);
};

ObservationTable generate_linear_sem(const LinearSEMDGP& dgp, Eigen::Index n, std::uint64_t seed,
                                     RowMatrix* u_out = nullptr);

struct LinearSEMBridges {
  VectorXd theta_w, theta_z;
  BridgeFit h;  // degree-1 polynomial in (W, A, X)
  BridgeFit q;  // degree-1 polynomial in (Z, A, X)
};
/// Minimum-norm theta plus null_w / null_z times the null-space basis of the
/// constraint (empty vectors select the minimum-norm member). Throws
/// RankError when the constraint system is inconsistent.
LinearSEMBridges oracle_linear_sem_bridges(const LinearSEMDGP& dgp, const VectorXd& null_w = {},
                                           const VectorXd& null_z = {});
/// Null-space dimensions of the theta constraints.
std::pair<Eigen::Index, Eigen::Index> linear_sem_free_dims(const LinearSEMDGP& dgp);

/// Monte-Carlo J from the U-observed REG form at n draws of (U, X).
struct MonteCarloJ {
  double value = 0.0;
  double se = 0.0;
  Eigen::Index n = 0;
  std::uint64_t seed = 0;
};
MonteCarloJ oracle_linear_sem_J(const LinearSEMDGP& dgp, const ContrastSpec& contrast, Eigen::Index n,
                                std::uint64_t seed);
/// E[Y | U, a, X] of the structural model.
double linear_sem_outcome_mean(const LinearSEMDGP& dgp, const VectorXd& u, double a, const VectorXd& x);

/// Bundled models: unique_binary, nonunique_policy, three_action,
/// identity_proxies (discrete) and linear_sem_basic, linear_sem_wide.
std::vector<std::string> bundled_discrete_names();
DiscreteDGP bundled_discrete(const std::string& name);
std::vector<std::string> bundled_linear_names();
LinearSEMDGP bundled_linear_sem(const std::string& name);
/// Contrast used with a bundled linear model: uniform policy density on a
/// sub-interval of the action range, integrated by a 3-node Gauss-Legendre rule.
ContrastSpec linear_sem_policy(const LinearSEMDGP& dgp);

}  // namespace proxbridge
