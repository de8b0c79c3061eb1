#pragma once

#include <nlohmann/json.hpp>

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "proxbridge/gace.hpp"
#include "proxbridge/synthetic.hpp"

namespace proxbridge {

// ---------------------------------------------------------------- replications

struct ReplicationOutput {
  EstimateReport report;
  double h_residual = 0.0;  // NaN when not measured
  double q_residual = 0.0;
};
/// Runs one replication at sample size n with the given seed.
using ReplicationFn = std::function<ReplicationOutput(Eigen::Index n, std::uint64_t seed)>;

struct ReplicationStudy {
  std::string dgp_ref;
  nlohmann::json estimator = nlohmann::json::object();
  std::vector<Eigen::Index> sizes;
  int replications = 1;
  std::uint64_t master_seed = 0;
  double oracle_J = 0.0;
  ReplicationFn run;
  int jobs = 1;

  void validate() const;
};

struct ReplicationRecord {
  std::size_t cell = 0;
  std::size_t rep = 0;
  Eigen::Index n = 0;
  std::uint64_t seed = 0;
  double J = 0.0;
  double se = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double h_residual = 0.0;
  double q_residual = 0.0;
};

/// Every (cell, rep) pair with seed replication_seed(master, cell, rep),
/// ordered by cell then rep regardless of scheduling.
std::vector<ReplicationRecord> run_replications(const ReplicationStudy& study);

struct RateCell {
  Eigen::Index n = 0;
  int replications = 0;
  double bias = 0.0;
  double rmse = 0.0;
  double mean_se = 0.0;
};
struct RateReport {
  std::vector<RateCell> cells;
  double slope = 0.0;
  double slope_se = 0.0;
  /// False when some RMSE is zero (log undefined).
  bool slope_defined = true;
  /// Number of adjacent pairs where RMSE increases with n.
  int inversions = 0;
  std::vector<ReplicationRecord> records;
  nlohmann::json to_json() const;
};
/// Least-squares slope of log RMSE against log n. Needs >= 3 sizes.
RateReport run_rate_study(const ReplicationStudy& study);
RateReport rate_report_from_records(const std::vector<ReplicationRecord>& records,
                                    const std::vector<Eigen::Index>& sizes, double oracle_J);

struct CoverageCell {
  Eigen::Index n = 0;
  int covered = 0;
  int total = 0;
  double fraction = 0.0;
  double ci_lo = 0.0;  // Clopper-Pearson 95%
  double ci_hi = 0.0;
  /// Every replication had se = 0.
  bool degenerate = false;
};
struct CoverageReport {
  std::vector<CoverageCell> cells;
  std::vector<ReplicationRecord> records;
  nlohmann::json to_json() const;
};
CoverageReport run_coverage_study(const ReplicationStudy& study);
CoverageReport coverage_report_from_records(const std::vector<ReplicationRecord>& records,
                                            const std::vector<Eigen::Index>& sizes, double oracle_J);

// ---------------------------------------------------------------- ill-posedness

enum class Tau { kOne, kTwo };
struct IllPosedness {
  double value = 0.0;
  bool infinite = false;
  nlohmann::json to_json() const;
};

/// Quadratic forms of the sup ratio over coefficient differences of a
/// finite-dimensional hypothesis: ratio(v) = v^T num v / v^T den v.
struct IllPosednessForms {
  MatrixXd num;
  MatrixXd den;
};
IllPosednessForms ill_posedness_forms(const DiscreteDGP& dgp, const FeatureMap& hypothesis, Tau kind,
                                      BridgeKind bridge);
/// sqrt of the largest generalized eigenvalue on the complement of null(den),
/// or the infinite flag when num is nonzero on null(den). 0/0 counts as 0.
IllPosedness generalized_sup_ratio(const IllPosednessForms& forms, double rel_tol = 1e-10);
IllPosedness ill_posedness_discrete(const DiscreteDGP& dgp, const FeatureMap& hypothesis, Tau kind,
                                    BridgeKind bridge);

// ---------------------------------------------------------------- identities

struct IdentityReport {
  std::map<std::string, double> violations;
  double max_violation = 0.0;
  bool pass = false;
  nlohmann::json to_json() const;
};
/// Enumerates the U-level and observed-level identities for the oracle
/// bridges, random members of the observed bridge sets and random h, q.
IdentityReport check_identification_identities(const DiscreteDGP& dgp, int trials, std::uint64_t seed,
                                               double tolerance = 1e-9);

/// Null-space bases (columns, over proxy levels) of the observed moment maps
/// in cell (x, a): P(W | Z, a, x) for h and pi P(Z | W, a, x) for q.
MatrixXd observed_null_h(const DiscreteDGP& dgp, int x, int a);
MatrixXd observed_null_q(const DiscreteDGP& dgp, int x, int a);

// ---------------------------------------------------------------- projected MSE

struct ProjectedMseCell {
  Eigen::Index n = 0;
  int replications = 0;
  double h_residual = 0.0;  // mean of sqrt projected MSE
  double q_residual = 0.0;
  double reg_abs_error = 0.0;
  double ipw_abs_error = 0.0;
  double dr_abs_error = 0.0;
};
struct ProjectedMseCurve {
  std::vector<ProjectedMseCell> cells;
  bool h_decreasing = false;
  bool q_decreasing = false;
  nlohmann::json to_json() const;
};
/// Fits the nuisances of `cfg` on fresh samples of each size and measures
/// the exact projected residuals. Seeds follow replication_seed(seed, cell, rep).
ProjectedMseCurve projected_mse_curve(const DiscreteDGP& dgp, const NuisanceConfig& cfg,
                                      const std::vector<Eigen::Index>& sizes, int replications, std::uint64_t seed,
                                      int jobs = 1);

}  // namespace proxbridge
