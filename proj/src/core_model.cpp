#include "proxbridge/core_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "proxbridge/errors.hpp"
#include "proxbridge/hash.hpp"

namespace proxbridge {

using nlohmann::json;

// ---------------------------------------------------------------- support

ActionSupport ActionSupport::discrete(std::vector<double> levels) {
  if (levels.empty()) throw ValidationError("discrete action support must list at least one level");
  for (std::size_t i = 1; i < levels.size(); ++i) {
    if (!(levels[i] > levels[i - 1])) throw ValidationError("discrete action levels must be strictly increasing");
  }
  ActionSupport s;
  s.kind = ActionKind::kDiscrete;
  s.levels = std::move(levels);
  return s;
}

ActionSupport ActionSupport::continuous(double lo, double hi) {
  if (!(hi > lo)) throw ValidationError("continuous action range needs lo < hi");
  ActionSupport s;
  s.kind = ActionKind::kContinuous;
  s.lo = lo;
  s.hi = hi;
  return s;
}

int ActionSupport::index_of(double value) const {
  auto it = std::lower_bound(levels.begin(), levels.end(), value);
  if (it != levels.end() && *it == value) return static_cast<int>(it - levels.begin());
  throw ValidationError("action value " + std::to_string(value) + " is not in the declared support");
}

// ---------------------------------------------------------------- table

ObservationTable::ObservationTable(VectorXd y, RowMatrix w, RowMatrix z, VectorXd a, RowMatrix x,
                                   ActionSupport support)
    : y_(std::move(y)), w_(std::move(w)), z_(std::move(z)), a_(std::move(a)), x_(std::move(x)), support_(std::move(support)) {
  const Eigen::Index n = y_.size();
  if (w_.rows() != n || z_.rows() != n || a_.size() != n || x_.rows() != n) {
    throw ValidationError("observation columns have different row counts");
  }
  if (!y_.allFinite() || !w_.allFinite() || !z_.allFinite() || !a_.allFinite() || !x_.allFinite()) {
    throw ValidationError("observations must be finite");
  }
  if (support_.is_discrete()) {
    a_index_.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) a_index_[static_cast<std::size_t>(i)] = support_.index_of(a_(i));
  } else {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (a_(i) < support_.lo || a_(i) > support_.hi) {
        throw ValidationError("action value " + std::to_string(a_(i)) + " lies outside the declared range");
      }
    }
  }
}

ObservationTable ObservationTable::empty(Eigen::Index p_w, Eigen::Index p_z, Eigen::Index d_x, ActionSupport support) {
  return ObservationTable(VectorXd(0), RowMatrix(0, p_w), RowMatrix(0, p_z), VectorXd(0), RowMatrix(0, d_x),
                          std::move(support));
}

Action ObservationTable::action(Eigen::Index i) const {
  return {a_(i), a_index_.empty() ? -1 : a_index_[static_cast<std::size_t>(i)]};
}

PointView ObservationTable::point(Eigen::Index i, ProxyRole role) const {
  return {row_span(proxy(role), i), action(i), x_row(i)};
}

ObservationTable ObservationTable::subset(std::span<const std::size_t> idx) const {
  const auto m = static_cast<Eigen::Index>(idx.size());
  VectorXd y(m), a(m);
  RowMatrix w(m, p_w()), z(m, p_z()), x(m, d_x());
  for (Eigen::Index r = 0; r < m; ++r) {
    const auto i = static_cast<Eigen::Index>(idx[static_cast<std::size_t>(r)]);
    if (i >= n()) throw ValidationError("subset row index out of range");
    y(r) = y_(i);
    a(r) = a_(i);
    w.row(r) = w_.row(i);
    z.row(r) = z_.row(i);
    x.row(r) = x_.row(i);
  }
  return ObservationTable(std::move(y), std::move(w), std::move(z), std::move(a), std::move(x), support_);
}

std::uint64_t ObservationTable::hash() const {
  Fnv1a h;
  h.u64(static_cast<std::uint64_t>(n()));
  h.u64(static_cast<std::uint64_t>(p_w()));
  h.u64(static_cast<std::uint64_t>(p_z()));
  h.u64(static_cast<std::uint64_t>(d_x()));
  h.u64(support_.is_discrete() ? 0 : 1);
  h.f64s(support_.levels);
  h.f64(support_.lo);
  h.f64(support_.hi);
  h.f64s({y_.data(), static_cast<std::size_t>(y_.size())});
  h.f64s({w_.data(), static_cast<std::size_t>(w_.size())});
  h.f64s({z_.data(), static_cast<std::size_t>(z_.size())});
  h.f64s({a_.data(), static_cast<std::size_t>(a_.size())});
  h.f64s({x_.data(), static_cast<std::size_t>(x_.size())});
  return h.digest();
}

// ---------------------------------------------------------------- contrast

namespace {

std::vector<Action> discrete_nodes(const ActionSupport& s) {
  std::vector<Action> out;
  for (std::size_t k = 0; k < s.levels.size(); ++k) out.push_back({s.levels[k], static_cast<int>(k)});
  return out;
}

int resolve_index(const ActionSupport& s, const Action& a) {
  if (a.index >= 0) return a.index;
  return s.index_of(a.value);
}

bool same_row(std::span<const double> a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::abs(a[i] - b[i]) > 1e-9 * std::max(1.0, std::abs(b[i]))) return false;
  }
  return true;
}

json density_json(const ContrastSpec::Density& d) {
  if (d.kind == ContrastSpec::Density::Kind::kUniform) return {{"kind", "uniform"}, {"lo", d.lo}, {"hi", d.hi}};
  return {{"kind", "gaussian"}, {"mean0", d.mean0}, {"slope", d.slope}, {"sd", d.sd}};
}

ContrastSpec::Density density_from(const json& j) {
  ContrastSpec::Density d;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "uniform") {
    d.kind = ContrastSpec::Density::Kind::kUniform;
    d.lo = j.at("lo").get<double>();
    d.hi = j.at("hi").get<double>();
  } else if (kind == "gaussian") {
    d.kind = ContrastSpec::Density::Kind::kGaussian;
    d.mean0 = j.value("mean0", 0.0);
    d.slope = j.value("slope", std::vector<double>{});
    d.sd = j.at("sd").get<double>();
  } else {
    throw ValidationError("unknown density kind '" + kind + "'");
  }
  return d;
}

ContrastSpec::PiFn density_fn(const ContrastSpec::Density& d) {
  if (d.kind == ContrastSpec::Density::Kind::kUniform) {
    if (!(d.hi > d.lo)) throw ConfigError("uniform policy density needs lo < hi");
    const double lo = d.lo, hi = d.hi, v = 1.0 / (d.hi - d.lo);
    return [lo, hi, v](const Action& a, std::span<const double>) { return (a.value >= lo && a.value <= hi) ? v : 0.0; };
  }
  if (!(d.sd > 0.0)) throw ConfigError("gaussian policy density needs sd > 0");
  return [d](const Action& a, std::span<const double> x) {
    double m = d.mean0;
    for (std::size_t i = 0; i < d.slope.size() && i < x.size(); ++i) m += d.slope[i] * x[i];
    const double z = (a.value - m) / d.sd;
    return std::exp(-0.5 * z * z) / (d.sd * std::sqrt(2.0 * std::numbers::pi));
  };
}

}  // namespace

ContrastSpec ContrastSpec::ate_binary(const ActionSupport& support) {
  if (!support.is_discrete() || support.size() != 2) {
    throw ConfigError("ate_binary contrast requires a discrete support with exactly two levels");
  }
  ContrastSpec c;
  c.name_ = "ate_binary";
  c.integration_ = Integration::kDiscrete;
  c.support_ = support;
  c.nodes_ = discrete_nodes(support);
  c.weights_.assign(2, 1.0);
  c.pi_ = [support](const Action& a, std::span<const double>) {
    return resolve_index(support, a) == 1 ? 1.0 : -1.0;
  };
  c.spec_ = {{"type", "ate_binary"}};
  return c;
}

ContrastSpec ContrastSpec::policy_table(const ActionSupport& support, std::vector<std::vector<double>> x_levels,
                                        std::vector<std::vector<double>> table) {
  if (!support.is_discrete()) throw ConfigError("policy_table contrast requires a discrete action support");
  if (table.empty()) throw ConfigError("policy_table needs at least one row");
  if (x_levels.empty() && table.size() != 1) throw ConfigError("policy_table without x_levels must have one row");
  if (!x_levels.empty() && x_levels.size() != table.size()) {
    throw ConfigError("policy_table needs one row per x level");
  }
  for (const auto& row : table) {
    if (row.size() != support.size()) throw ConfigError("policy_table rows need one entry per action level");
    for (double v : row) {
      if (!std::isfinite(v)) throw ConfigError("policy_table entries must be finite");
    }
  }
  ContrastSpec c;
  c.name_ = "policy_table";
  c.integration_ = Integration::kDiscrete;
  c.support_ = support;
  c.nodes_ = discrete_nodes(support);
  c.weights_.assign(support.size(), 1.0);
  c.spec_ = {{"type", "policy_table"}, {"x_levels", x_levels}, {"table", table}};
  c.pi_ = [support, xl = std::move(x_levels), tb = std::move(table)](const Action& a, std::span<const double> x) {
    const auto k = static_cast<std::size_t>(resolve_index(support, a));
    if (xl.empty()) return tb[0][k];
    for (std::size_t r = 0; r < xl.size(); ++r) {
      if (same_row(x, xl[r])) return tb[r][k];
    }
    throw ValidationError("covariate value not listed in policy_table x_levels");
  };
  return c;
}

ContrastSpec ContrastSpec::quadrature(const ActionSupport& support, std::vector<double> nodes,
                                      std::vector<double> weights, Density density) {
  if (support.is_discrete()) throw ConfigError("quadrature contrast requires a continuous action support");
  if (nodes.empty() || nodes.size() != weights.size()) throw ConfigError("quadrature needs matching nonempty nodes and weights");
  for (double w : weights) {
    if (!(w > 0.0) || !std::isfinite(w)) throw ConfigError("quadrature weights must be positive and finite");
  }
  ContrastSpec c;
  c.name_ = "quadrature";
  c.integration_ = Integration::kQuadrature;
  c.support_ = support;
  for (double a : nodes) c.nodes_.push_back({a, -1});
  c.weights_ = weights;
  c.pi_ = density_fn(density);
  c.spec_ = {{"type", "quadrature"}, {"nodes", nodes}, {"weights", weights}, {"density", density_json(density)}};
  return c;
}

ContrastSpec ContrastSpec::gauss_legendre(const ActionSupport& support, int k, Density density) {
  if (k < 1) throw ConfigError("Gauss-Legendre rule needs at least one node");
  if (support.is_discrete()) throw ConfigError("quadrature contrast requires a continuous action support");
  // Golub-Welsch: eigenvalues of the symmetric Jacobi matrix are the nodes.
  MatrixXd jac = MatrixXd::Zero(k, k);
  for (int i = 1; i < k; ++i) {
    const double b = i / std::sqrt(4.0 * i * i - 1.0);
    jac(i, i - 1) = b;
    jac(i - 1, i) = b;
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(jac);
  // A uniform density is integrated over its own interval; anything else over the support.
  const bool uni = density.kind == Density::Kind::kUniform;
  const double lo = uni ? density.lo : support.lo;
  const double hi = uni ? density.hi : support.hi;
  const double half = 0.5 * (hi - lo);
  const double mid = 0.5 * (hi + lo);
  std::vector<double> nodes(static_cast<std::size_t>(k)), weights(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    nodes[static_cast<std::size_t>(i)] = mid + half * es.eigenvalues()(i);
    const double v0 = es.eigenvectors()(0, i);
    weights[static_cast<std::size_t>(i)] = 2.0 * v0 * v0 * half;
  }
  ContrastSpec c = quadrature(support, std::move(nodes), std::move(weights), density);
  c.spec_ = {{"type", "quadrature"}, {"gauss_legendre", k}, {"density", density_json(density)}};
  return c;
}

ContrastSpec ContrastSpec::custom(const ActionSupport& support, std::string name, PiFn pi, std::vector<double> nodes,
                                  std::vector<double> weights) {
  ContrastSpec c;
  c.name_ = std::move(name);
  c.support_ = support;
  c.pi_ = std::move(pi);
  if (support.is_discrete()) {
    c.integration_ = Integration::kDiscrete;
    c.nodes_ = discrete_nodes(support);
    c.weights_.assign(support.size(), 1.0);
  } else {
    if (nodes.empty() || nodes.size() != weights.size()) throw ConfigError("quadrature needs matching nonempty nodes and weights");
    for (double w : weights) {
      if (!(w > 0.0)) throw ConfigError("quadrature weights must be positive");
    }
    c.integration_ = Integration::kQuadrature;
    for (double a : nodes) c.nodes_.push_back({a, -1});
    c.weights_ = std::move(weights);
  }
  return c;
}

double ContrastSpec::pi(const Action& a, std::span<const double> x) const {
  const double v = pi_(a, x);
  if (!std::isfinite(v)) throw NumericalError("contrast evaluated to a non-finite value");
  return v;
}

void ContrastSpec::check_compatible(const ActionSupport& support) const {
  if (integration_ == Integration::kDiscrete) {
    if (!support.is_discrete()) throw ConfigError("discrete-sum contrast used with a continuous action");
    if (support.levels != support_.levels) throw ConfigError("contrast and data declare different action levels");
  } else {
    if (support.is_discrete()) throw ConfigError("quadrature contrast used with a discrete action");
  }
}

json ContrastSpec::to_json() const {
  if (spec_.is_null()) throw ConfigError("custom contrast '" + name_ + "' cannot be serialized");
  return spec_;
}

ContrastSpec ContrastSpec::from_json(const json& j, const ActionSupport& support) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "ate_binary") return ate_binary(support);
  if (type == "policy_table") {
    return policy_table(support, j.value("x_levels", std::vector<std::vector<double>>{}),
                        j.at("table").get<std::vector<std::vector<double>>>());
  }
  if (type == "quadrature") {
    const Density d = j.contains("density") ? density_from(j.at("density")) : Density{Density::Kind::kUniform, support.lo, support.hi, 0.0, {}, 1.0};
    if (j.contains("gauss_legendre")) return gauss_legendre(support, j.at("gauss_legendre").get<int>(), d);
    return quadrature(support, j.at("nodes").get<std::vector<double>>(), j.at("weights").get<std::vector<double>>(), d);
  }
  throw ValidationError("unknown contrast type '" + type + "' (expected ate_binary, policy_table or quadrature)");
}

// ---------------------------------------------------------------- bridge

BridgeFit::BridgeFit(BridgeKind kind, Descriptor descriptor, FitDiagnostics diagnostics)
    : kind_(kind), descriptor_(std::move(descriptor)), diagnostics_(std::move(diagnostics)) {
  if (const auto* s = std::get_if<SieveDescriptor>(&descriptor_)) {
    if (s->coefficients.size() != s->features.dim()) throw ValidationError("sieve coefficients do not match feature dimension");
  } else {
    const auto& k = std::get<KernelDescriptor>(descriptor_);
    const Eigen::Index m = k.dual.size();
    if (k.anchor_proxy.rows() != m || k.anchor_a.size() != m || k.anchor_x.rows() != m) {
      throw ValidationError("kernel anchors do not match dual coefficient count");
    }
  }
}

BridgeFit BridgeFit::constant(BridgeKind kind, double c) {
  FitDiagnostics d;
  d.method = "constant";
  return BridgeFit(kind, SieveDescriptor{FeatureMap::constant(), VectorXd::Constant(1, c)}, d);
}

double BridgeFit::eval(const PointView& p) const {
  if (const auto* s = std::get_if<SieveDescriptor>(&descriptor_)) {
    thread_local VectorXd phi;
    phi.resize(s->features.dim());
    s->features.eval(p, phi);
    return phi.dot(s->coefficients);
  }
  const auto& k = std::get<KernelDescriptor>(descriptor_);
  double acc = 0.0;
  const auto pp = static_cast<std::size_t>(k.anchor_proxy.cols());
  const auto px = static_cast<std::size_t>(k.anchor_x.cols());
  for (Eigen::Index i = 0; i < k.dual.size(); ++i) {
    if (k.dual(i) == 0.0) continue;
    const int idx = k.anchor_a_index.empty() ? -1 : k.anchor_a_index[static_cast<std::size_t>(i)];
    const PointView anchor{{k.anchor_proxy.data() + i * k.anchor_proxy.cols(), pp},
                           {k.anchor_a(i), idx},
                           {k.anchor_x.data() + i * k.anchor_x.cols(), px}};
    acc += k.dual(i) * k.kernel.eval(anchor, p);
  }
  return acc;
}

VectorXd BridgeFit::eval_rows(const ObservationTable& table) const {
  VectorXd out(table.n());
  for (Eigen::Index i = 0; i < table.n(); ++i) out(i) = eval(table.point(i, role()));
  return out;
}

namespace {

json rows_json(const RowMatrix& m) {
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows[static_cast<std::size_t>(r)].assign(m.row(r).data(), m.row(r).data() + m.cols());
  return json{{"cols", m.cols()}, {"rows", rows}};
}

RowMatrix rows_from(const json& j) {
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto rows = j.at("rows").get<std::vector<std::vector<double>>>();
  RowMatrix m(static_cast<Eigen::Index>(rows.size()), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (static_cast<Eigen::Index>(rows[r].size()) != cols) throw ValidationError("ragged matrix in bridge JSON");
    for (Eigen::Index c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), c) = rows[r][static_cast<std::size_t>(c)];
  }
  return m;
}

std::vector<double> vec(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

VectorXd vec_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

json BridgeFit::to_json() const {
  json j;
  j["kind"] = kind_ == BridgeKind::kOutcome ? "outcome" : "action";
  if (const auto* s = std::get_if<SieveDescriptor>(&descriptor_)) {
    j["class"] = {{"type", "sieve"}, {"features", s->features.to_json()}, {"coefficients", vec(s->coefficients)}};
  } else {
    const auto& k = std::get<KernelDescriptor>(descriptor_);
    j["class"] = {{"type", "rkhs"},
                  {"kernel", k.kernel.to_json()},
                  {"anchor_proxy", rows_json(k.anchor_proxy)},
                  {"anchor_a", vec(k.anchor_a)},
                  {"anchor_a_index", k.anchor_a_index},
                  {"anchor_x", rows_json(k.anchor_x)},
                  {"dual", vec(k.dual)}};
  }
  j["diagnostics"] = {{"method", diagnostics_.method},   {"strategy", diagnostics_.strategy},
                      {"objective", diagnostics_.objective}, {"lambda", diagnostics_.lambda},
                      {"gamma", diagnostics_.gamma},     {"rho", diagnostics_.rho},
                      {"n", diagnostics_.n}};
  return j;
}

BridgeFit BridgeFit::from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind != "outcome" && kind != "action") throw ValidationError("bridge kind must be outcome or action");
  const BridgeKind bk = kind == "outcome" ? BridgeKind::kOutcome : BridgeKind::kAction;
  FitDiagnostics d;
  if (j.contains("diagnostics")) {
    const auto& dj = j.at("diagnostics");
    d.method = dj.value("method", "");
    d.strategy = dj.value("strategy", 0);
    d.objective = dj.value("objective", 0.0);
    d.lambda = dj.value("lambda", 0.0);
    d.gamma = dj.value("gamma", 0.0);
    d.rho = dj.value("rho", 0.0);
    d.n = dj.value("n", Eigen::Index{0});
  }
  const auto& c = j.at("class");
  const std::string type = c.at("type").get<std::string>();
  if (type == "sieve") {
    return BridgeFit(bk, SieveDescriptor{FeatureMap::from_json(c.at("features")), vec_from(c.at("coefficients"))}, d);
  }
  if (type == "rkhs") {
    KernelDescriptor k{KernelSpec::from_json(c.at("kernel")),
                       rows_from(c.at("anchor_proxy")),
                       vec_from(c.at("anchor_a")),
                       c.value("anchor_a_index", std::vector<int>{}),
                       rows_from(c.at("anchor_x")),
                       vec_from(c.at("dual"))};
    return BridgeFit(bk, std::move(k), d);
  }
  throw ValidationError("unknown bridge class type '" + type + "'");
}

// ---------------------------------------------------------------- T operator

namespace {

void require_outcome(const BridgeFit& h) {
  if (h.kind() != BridgeKind::kOutcome) throw ConfigError("the T operator applies to outcome bridges");
}

}  // namespace

double t_apply(const BridgeFit& h, const ContrastSpec& contrast, std::span<const double> w, std::span<const double> x) {
  require_outcome(h);
  double acc = 0.0;
  const auto& nodes = contrast.nodes();
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const double p = contrast.pi(nodes[k], x);
    if (p == 0.0) continue;
    acc += contrast.weights()[k] * p * h.eval({w, nodes[k], x});
  }
  return acc;
}

VectorXd t_apply_rows(const BridgeFit& h, const ContrastSpec& contrast, const ObservationTable& table) {
  contrast.check_compatible(table.support());
  VectorXd out(table.n());
  for (Eigen::Index i = 0; i < table.n(); ++i) out(i) = t_apply(h, contrast, table.w_row(i), table.x_row(i));
  return out;
}

VectorXd t_apply_features(const FeatureMap& phi, const ContrastSpec& contrast, std::span<const double> w,
                          std::span<const double> x) {
  VectorXd acc = VectorXd::Zero(phi.dim());
  VectorXd tmp(phi.dim());
  const auto& nodes = contrast.nodes();
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const double p = contrast.pi(nodes[k], x);
    if (p == 0.0) continue;
    phi.eval({w, nodes[k], x}, tmp);
    acc += (contrast.weights()[k] * p) * tmp;
  }
  return acc;
}

MatrixXd t_apply_features_rows(const FeatureMap& phi, const ContrastSpec& contrast, const ObservationTable& table) {
  contrast.check_compatible(table.support());
  MatrixXd out(table.n(), phi.dim());
  for (Eigen::Index i = 0; i < table.n(); ++i) {
    out.row(i) = t_apply_features(phi, contrast, table.w_row(i), table.x_row(i)).transpose();
  }
  return out;
}

double t_apply_kernel(const KernelSpec& kernel, const ContrastSpec& contrast, const PointView& anchor,
                      std::span<const double> w, std::span<const double> x) {
  double acc = 0.0;
  const auto& nodes = contrast.nodes();
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const double p = contrast.pi(nodes[k], x);
    if (p == 0.0) continue;
    acc += contrast.weights()[k] * p * kernel.eval(anchor, {w, nodes[k], x});
  }
  return acc;
}

VectorXd pi_rows(const ContrastSpec& contrast, const ObservationTable& table) {
  contrast.check_compatible(table.support());
  VectorXd out(table.n());
  for (Eigen::Index i = 0; i < table.n(); ++i) out(i) = contrast.pi(table.action(i), table.x_row(i));
  return out;
}

}  // namespace proxbridge
