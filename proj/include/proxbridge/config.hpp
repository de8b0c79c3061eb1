#pragma once

#include <nlohmann/json.hpp>

#include <optional>
#include <string>

#include "proxbridge/diagnostics.hpp"
#include "proxbridge/gace.hpp"
#include "proxbridge/synthetic.hpp"

namespace proxbridge::config {

/// A synthetic model: a bundled name, {"discrete": {...}} or {"linear": {...}}.
struct DgpRef {
  std::string name;
  std::optional<DiscreteDGP> discrete;
  std::optional<LinearSEMDGP> linear;

  ContrastSpec contrast() const;
  ObservationTable sample(Eigen::Index n, std::uint64_t seed) const;
  /// Exact for discrete models, Monte Carlo (2e6 draws) for linear ones.
  double oracle_J() const;
  FittedNuisances oracle_bridges() const;
  nlohmann::json to_json() const;
};
DgpRef parse_dgp(const nlohmann::json& j);

/// Checks an estimator block without touching data.
void validate_estimator(const nlohmann::json& est);
/// Builds the per-fold nuisance settings. Feature specs of type
/// "saturated_from_data" read their levels from `data`; "saturated_dgp" needs
/// `dgp`. With "oracle": true both bridges come from `dgp`.
NuisanceConfig build_nuisance(const nlohmann::json& est, const ObservationTable& data, const DgpRef* dgp);

struct RunSettings {
  int folds = 2;
  std::uint64_t seed = 0;
  double alpha = 0.05;
  int jobs = 1;
};
/// ipw, reg and dr fit the nuisances once on all of `data`; dr-crossfit fits
/// them per fold.
EstimateReport run_estimator(const nlohmann::json& est, const ObservationTable& data, const ContrastSpec& contrast,
                             const RunSettings& settings, const DgpRef* dgp);

enum class ConfigKind { kExperiment, kStudy, kSynthesize };
/// "study" key -> study, "data" key -> experiment, otherwise synthesize.
ConfigKind detect_kind(const nlohmann::json& j);
void validate_experiment(const nlohmann::json& j);
void validate_study(const nlohmann::json& j);
void validate_synthesize(const nlohmann::json& j);
void validate_any(const nlohmann::json& j);

/// Replication function sampling `dgp` and running `est`.
ReplicationFn replication_fn(const DgpRef& dgp, const nlohmann::json& est, const RunSettings& settings);

}  // namespace proxbridge::config
