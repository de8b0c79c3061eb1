#pragma once

#include <nlohmann/json.hpp>

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "proxbridge/features.hpp"
#include "proxbridge/kernel.hpp"
#include "proxbridge/types.hpp"

namespace proxbridge {

/// n i.i.d. records (Y, W, Z, A, X). Immutable after construction.
class ObservationTable {
 public:
  ObservationTable() = default;
  /// `a` holds raw action values; discrete values are validated against the
  /// support and stored as canonical indices.
  ObservationTable(VectorXd y, RowMatrix w, RowMatrix z, VectorXd a, RowMatrix x, ActionSupport support);
  static ObservationTable empty(Eigen::Index p_w, Eigen::Index p_z, Eigen::Index d_x, ActionSupport support);

  Eigen::Index n() const { return y_.size(); }
  Eigen::Index p_w() const { return w_.cols(); }
  Eigen::Index p_z() const { return z_.cols(); }
  Eigen::Index d_x() const { return x_.cols(); }
  bool empty() const { return n() == 0; }

  const VectorXd& y() const { return y_; }
  const RowMatrix& w() const { return w_; }
  const RowMatrix& z() const { return z_; }
  const RowMatrix& x() const { return x_; }
  /// Action values (for discrete supports, levels[index]).
  const VectorXd& a() const { return a_; }
  /// Canonical level indices; empty for continuous supports.
  const std::vector<int>& a_index() const { return a_index_; }
  const ActionSupport& support() const { return support_; }
  const RowMatrix& proxy(ProxyRole role) const { return role == ProxyRole::kW ? w_ : z_; }

  Action action(Eigen::Index i) const;
  std::span<const double> w_row(Eigen::Index i) const { return row_span(w_, i); }
  std::span<const double> z_row(Eigen::Index i) const { return row_span(z_, i); }
  std::span<const double> x_row(Eigen::Index i) const { return row_span(x_, i); }
  PointView point(Eigen::Index i, ProxyRole role) const;

  /// Rows `idx` in the given order.
  ObservationTable subset(std::span<const std::size_t> idx) const;

  /// FNV-1a digest of dims, support and every stored value.
  std::uint64_t hash() const;

 private:
  static std::span<const double> row_span(const RowMatrix& m, Eigen::Index i) {
    return {m.data() + i * m.cols(), static_cast<std::size_t>(m.cols())};
  }

  VectorXd y_;
  RowMatrix w_;
  RowMatrix z_;
  VectorXd a_;
  std::vector<int> a_index_;
  RowMatrix x_;
  ActionSupport support_;
};

/// The contrast pi(a | x) together with the base measure mu used by T.
class ContrastSpec {
 public:
  enum class Integration { kDiscrete, kQuadrature };
  using PiFn = std::function<double(const Action&, std::span<const double>)>;

  /// pi(a | x) = 2a - 1 on the support {0, 1}.
  static ContrastSpec ate_binary(const ActionSupport& support);
  /// pi(a | x) = table[r][a] where r is the row of `x_levels` equal to x.
  /// With a single row and empty `x_levels` the policy ignores x.
  static ContrastSpec policy_table(const ActionSupport& support, std::vector<std::vector<double>> x_levels,
                                   std::vector<std::vector<double>> table);
  /// Continuous actions: sum_k weights[k] pi(nodes[k] | x) h(., nodes[k], .).
  /// The density is uniform on [lo, hi] or normal(mean0 + slope^T x, sd).
  struct Density {
    enum class Kind { kUniform, kGaussian };
    Kind kind = Kind::kUniform;
    double lo = 0.0;
    double hi = 1.0;
    double mean0 = 0.0;
    std::vector<double> slope;
    double sd = 1.0;
  };
  static ContrastSpec quadrature(const ActionSupport& support, std::vector<double> nodes,
                                 std::vector<double> weights, Density density);
  /// Gauss-Legendre rule with `k` nodes on [density.lo, density.hi] for a
  /// uniform density and on the support range otherwise.
  static ContrastSpec gauss_legendre(const ActionSupport& support, int k, Density density);
  /// Arbitrary pi. Not serializable.
  static ContrastSpec custom(const ActionSupport& support, std::string name, PiFn pi,
                             std::vector<double> nodes = {}, std::vector<double> weights = {});

  const std::string& name() const { return name_; }
  Integration integration() const { return integration_; }
  const ActionSupport& support() const { return support_; }
  /// Integration nodes; discrete supports use every level with weight 1.
  const std::vector<Action>& nodes() const { return nodes_; }
  const std::vector<double>& weights() const { return weights_; }

  double pi(const Action& a, std::span<const double> x) const;

  /// Throws ConfigError when the integration rule does not match `support`.
  void check_compatible(const ActionSupport& support) const;

  nlohmann::json to_json() const;
  static ContrastSpec from_json(const nlohmann::json& j, const ActionSupport& support);

 private:
  std::string name_;
  Integration integration_ = Integration::kDiscrete;
  ActionSupport support_;
  std::vector<Action> nodes_;
  std::vector<double> weights_;
  PiFn pi_;
  nlohmann::json spec_;  // builder arguments, for serialization
};

enum class BridgeKind { kOutcome, kAction };

/// Linear combination of features: f(v) = coefficients^T phi(v).
struct SieveDescriptor {
  FeatureMap features;
  VectorXd coefficients;
};

/// Kernel expansion: f(v) = sum_i dual[i] k(anchor_i, v).
struct KernelDescriptor {
  KernelSpec kernel;
  RowMatrix anchor_proxy;
  VectorXd anchor_a;
  std::vector<int> anchor_a_index;
  RowMatrix anchor_x;
  VectorXd dual;
};

struct FitDiagnostics {
  std::string method;
  int strategy = 0;  // 1, 2, or 0 when not fitted by a minimax solve
  double objective = 0.0;
  double lambda = 0.0;
  double gamma = 0.0;
  double rho = 0.0;
  Eigen::Index n = 0;
};

/// A fitted outcome bridge h(w, a, x) or action bridge q(z, a, x).
class BridgeFit {
 public:
  using Descriptor = std::variant<SieveDescriptor, KernelDescriptor>;

  BridgeFit(BridgeKind kind, Descriptor descriptor, FitDiagnostics diagnostics = {});
  /// The constant function c.
  static BridgeFit constant(BridgeKind kind, double c);

  BridgeKind kind() const { return kind_; }
  ProxyRole role() const { return kind_ == BridgeKind::kOutcome ? ProxyRole::kW : ProxyRole::kZ; }
  const Descriptor& descriptor() const { return descriptor_; }
  const FitDiagnostics& diagnostics() const { return diagnostics_; }
  FitDiagnostics& diagnostics() { return diagnostics_; }

  double eval(const PointView& p) const;
  /// Evaluates at each row of `table` using the W (outcome) or Z (action) proxy.
  VectorXd eval_rows(const ObservationTable& table) const;

  nlohmann::json to_json() const;
  static BridgeFit from_json(const nlohmann::json& j);

 private:
  BridgeKind kind_;
  Descriptor descriptor_;
  FitDiagnostics diagnostics_;
};

/// (T h)(w, x) = sum_k omega_k pi(a_k | x) h(w, a_k, x).
double t_apply(const BridgeFit& h, const ContrastSpec& contrast, std::span<const double> w,
               std::span<const double> x);
/// (T h)(W_i, X_i) for every row.
VectorXd t_apply_rows(const BridgeFit& h, const ContrastSpec& contrast, const ObservationTable& table);
/// T applied to each coordinate of a feature map.
VectorXd t_apply_features(const FeatureMap& phi, const ContrastSpec& contrast, std::span<const double> w,
                          std::span<const double> x);
/// n x dim matrix of T phi at every row.
MatrixXd t_apply_features_rows(const FeatureMap& phi, const ContrastSpec& contrast, const ObservationTable& table);
/// sum_k omega_k pi(a_k | x') k(anchor, (w', a_k, x')).
double t_apply_kernel(const KernelSpec& kernel, const ContrastSpec& contrast, const PointView& anchor,
                      std::span<const double> w, std::span<const double> x);

/// pi(A_i | X_i) for every row.
VectorXd pi_rows(const ContrastSpec& contrast, const ObservationTable& table);

}  // namespace proxbridge
