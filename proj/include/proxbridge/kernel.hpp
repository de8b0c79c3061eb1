#pragma once

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <vector>

#include "proxbridge/features.hpp"
#include "proxbridge/types.hpp"

namespace proxbridge {

/// Kernel on one block of an evaluation point (the proxy vector, the action,
/// or the covariate vector).
struct BlockKernel {
  enum class Family { kConstant, kRbf, kIndicator, kPolynomial, kLinear };
  Family family = Family::kConstant;
  /// RBF: exp(-|u - v|^2 / (2 bandwidth^2)); bandwidth <= 0 means "resolve
  /// from data with the median heuristic".
  double bandwidth = 0.0;
  int degree = 2;
  double offset = 1.0;

  static BlockKernel constant() { return {}; }
  static BlockKernel rbf(double bandwidth = 0.0) { return {Family::kRbf, bandwidth, 2, 1.0}; }
  static BlockKernel indicator() { return {Family::kIndicator, 0.0, 2, 1.0}; }
  static BlockKernel polynomial(int degree, double offset) { return {Family::kPolynomial, 0.0, degree, offset}; }
  static BlockKernel linear() { return {Family::kLinear, 0.0, 1, 0.0}; }

  double eval(std::span<const double> u, std::span<const double> v) const;
  bool needs_bandwidth() const { return family == Family::kRbf && !(bandwidth > 0.0); }
  bool operator==(const BlockKernel&) const = default;
};

/// Positive semi-definite kernel on (proxy, action, x).
///
/// kProduct:  k = k_proxy(w, w') * k_action(a, a') * k_x(x, x').
/// kJoint:    one block kernel on the concatenated vector (proxy, a, x).
/// kFeatures: k = phi(u)^T phi(v) for a finite feature map.
class KernelSpec {
 public:
  enum class Mode { kProduct, kJoint, kFeatures };

  static KernelSpec product(BlockKernel proxy, BlockKernel action, BlockKernel x);
  static KernelSpec joint(BlockKernel k);
  static KernelSpec features(FeatureMap phi);
  /// RBF on proxy and x, exact-match indicator on a discrete action.
  static KernelSpec default_for(bool discrete_action);

  Mode mode() const { return mode_; }
  const BlockKernel& proxy_block() const { return proxy_; }
  const BlockKernel& action_block() const { return action_; }
  const BlockKernel& x_block() const { return x_; }
  const BlockKernel& joint_block() const { return proxy_; }
  const std::optional<FeatureMap>& feature_map() const { return phi_; }

  double eval(const PointView& u, const PointView& v) const;

  /// True when some RBF bandwidth still has to be chosen from data.
  bool needs_resolution() const;
  /// Copy with every automatic bandwidth replaced by the median nonzero
  /// pairwise distance of the block, computed on at most 2000 rows of `table`
  /// (the first rows of a fixed-seed permutation).
  KernelSpec resolved(const ObservationTable& table, ProxyRole role) const;

  nlohmann::json to_json() const;
  static KernelSpec from_json(const nlohmann::json& j);

 private:
  Mode mode_ = Mode::kProduct;
  BlockKernel proxy_;
  BlockKernel action_;
  BlockKernel x_;
  std::optional<FeatureMap> phi_;
};

}  // namespace proxbridge
