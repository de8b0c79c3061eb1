#pragma once

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <vector>

#include "proxbridge/core_model.hpp"
#include "proxbridge/rkhs.hpp"
#include "proxbridge/sieve.hpp"

namespace proxbridge {

struct FoldDiagnostics {
  int fold = 0;
  Eigen::Index n_train = 0;
  Eigen::Index n_eval = 0;
  double j_fold = 0.0;
  FitDiagnostics h;
  FitDiagnostics q;
};

struct EstimateReport {
  std::string estimator;
  double J = 0.0;
  double se = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double alpha = 0.05;  // CI level is 1 - alpha
  Eigen::Index n = 0;
  /// True for IPW and REG: the interval is sd / sqrt(n) based with no
  /// normality guarantee.
  bool descriptive = false;
  std::vector<FoldDiagnostics> folds;
  nlohmann::json config = nlohmann::json::object();

  nlohmann::json to_json() const;
};

/// Per-row scores.
VectorXd ipw_scores(const BridgeFit& q, const ObservationTable& data, const ContrastSpec& contrast);
VectorXd reg_scores(const BridgeFit& h, const ObservationTable& data, const ContrastSpec& contrast);
/// pi q (Y - h) + T h.
VectorXd dr_scores(const BridgeFit& h, const BridgeFit& q, const ObservationTable& data, const ContrastSpec& contrast);

/// Mean, se = sqrt(mean((s - mean)^2) / n) and the normal interval.
EstimateReport report_from_scores(std::string estimator, const VectorXd& scores, double alpha, bool descriptive);
/// z_{1 - alpha/2}.
double normal_quantile_two_sided(double alpha);

EstimateReport estimate_ipw(const BridgeFit& q, const ObservationTable& data, const ContrastSpec& contrast,
                            double alpha = 0.05);
EstimateReport estimate_reg(const BridgeFit& h, const ObservationTable& data, const ContrastSpec& contrast,
                            double alpha = 0.05);
EstimateReport estimate_dr(const BridgeFit& h, const BridgeFit& q, const ObservationTable& data,
                           const ContrastSpec& contrast, double alpha = 0.05);

/// E_n[(phi_DR,i - J)^2].
double eif_variance(const BridgeFit& h, const BridgeFit& q, double J, const ObservationTable& data,
                    const ContrastSpec& contrast);

/// How each fold fits its nuisances. A set oracle overrides the fitted side.
struct NuisanceConfig {
  enum class Family { kSieve, kRkhs };
  Family family = Family::kSieve;
  SieveConfig h_sieve;
  SieveConfig q_sieve;
  RkhsConfig h_rkhs;
  RkhsConfig q_rkhs;
  KernelSpec kernel_z = KernelSpec::default_for(true);
  KernelSpec kernel_w = KernelSpec::default_for(true);
  std::optional<BridgeFit> oracle_h;
  std::optional<BridgeFit> oracle_q;

  void validate() const;
  /// Smallest training size the fits accept.
  Eigen::Index min_fit_size() const;
  nlohmann::json to_json() const;
};

struct FittedNuisances {
  BridgeFit h;
  BridgeFit q;
};
FittedNuisances fit_nuisances(const ObservationTable& train, const ContrastSpec& contrast, const NuisanceConfig& cfg);

/// Seeded uniform shuffle split into `folds` contiguous blocks.
std::vector<std::vector<std::size_t>> crossfit_folds(Eigen::Index n, int folds, std::uint64_t seed);

/// Nuisances fit on the complement of each fold and scored on the fold; J is
/// the pooled mean and se comes from the pooled scores. Throws ConfigError for
/// folds < 2 or training sets below cfg.min_fit_size().
EstimateReport estimate_dr_crossfit(const ObservationTable& data, const ContrastSpec& contrast,
                                    const NuisanceConfig& cfg, int folds, std::uint64_t seed, double alpha = 0.05,
                                    int jobs = 1);

}  // namespace proxbridge
