#pragma once

#include <Eigen/Dense>

#include <span>
#include <string>
#include <vector>

namespace proxbridge {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class ActionKind { kDiscrete, kContinuous };

/// Declared support of the primary action. Discrete actions are stored as
/// canonical indices into `levels`; continuous actions as raw values.
struct ActionSupport {
  ActionKind kind = ActionKind::kDiscrete;
  std::vector<double> levels;  // discrete only, strictly increasing
  double lo = 0.0;             // continuous only
  double hi = 0.0;

  static ActionSupport discrete(std::vector<double> levels);
  static ActionSupport continuous(double lo, double hi);

  bool is_discrete() const { return kind == ActionKind::kDiscrete; }
  std::size_t size() const { return levels.size(); }
  /// Index of `value` in `levels`; throws ValidationError if absent.
  int index_of(double value) const;
  bool operator==(const ActionSupport& other) const = default;
};

/// A single action. `index` is the canonical level index for discrete
/// supports and -1 for continuous ones.
struct Action {
  double value = 0.0;
  int index = -1;
};

/// Non-owning view of one evaluation point (proxy, action, covariates).
/// The proxy is W for outcome-side functions and Z for action-side ones.
struct PointView {
  std::span<const double> proxy;
  Action action;
  std::span<const double> x;
};

/// Which negative control a function reads.
enum class ProxyRole { kW, kZ };

}  // namespace proxbridge
