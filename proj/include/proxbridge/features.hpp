#pragma once

#include <nlohmann/json.hpp>

#include <memory>
#include <string>
#include <vector>

#include "proxbridge/types.hpp"

namespace proxbridge {

class ObservationTable;

/// Which of (proxy, action, x) a feature map or kernel reads.
struct Arity {
  bool proxy = true;
  bool action = true;
  bool x = true;
  bool operator==(const Arity&) const = default;
};

/// Finite basis phi(proxy, a, x) used for hypothesis and critic classes.
///
/// Builders:
///   constant    - the single feature 1.
///   saturated   - one-hot indicator of the joint level of the selected
///                 inputs (exactly one entry is 1 on the declared levels).
///   polynomial  - all monomials up to a total degree in the selected inputs.
///   spline      - tensor product of per-input B-spline bases.
///   combination - fixed linear combinations M^T base(v) of another map.
///
/// Immutable after construction; copies share state.
class FeatureMap {
 public:
  enum class Type { kConstant, kSaturated, kPolynomial, kSpline, kCombination };

  static FeatureMap constant();
  static FeatureMap saturated(std::vector<std::vector<double>> proxy_levels,
                              std::vector<double> action_levels,
                              std::vector<std::vector<double>> x_levels, Arity arity = {});
  /// Levels read off the (distinct) values present in `table`.
  static FeatureMap saturated_from_data(const ObservationTable& table, ProxyRole role, Arity arity = {});
  static FeatureMap polynomial(int degree, int proxy_dim, int x_dim, Arity arity = {});
  /// `breakpoints[k]` are the sorted knots (boundaries included) of the k-th
  /// selected scalar input, in (proxy..., action, x...) order.
  static FeatureMap spline(int degree, std::vector<std::vector<double>> breakpoints, Arity arity = {});
  static FeatureMap combination(const FeatureMap& base, MatrixXd coefficients);

  Type type() const;
  const std::string& name() const;
  const Arity& arity() const;
  Eigen::Index dim() const;

  void eval(const PointView& p, Eigen::Ref<VectorXd> out) const;
  VectorXd eval(const PointView& p) const;
  /// n x dim matrix of features of every row of `table` with the given proxy.
  MatrixXd eval_rows(const ObservationTable& table, ProxyRole role) const;

  nlohmann::json to_json() const;
  static FeatureMap from_json(const nlohmann::json& j);

  struct Impl;

 private:
  explicit FeatureMap(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<const Impl> impl_;
};

}  // namespace proxbridge
