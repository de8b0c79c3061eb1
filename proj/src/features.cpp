#include "proxbridge/features.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "proxbridge/core_model.hpp"
#include "proxbridge/errors.hpp"

namespace proxbridge {

using nlohmann::json;

struct FeatureMap::Impl {
  Type type = Type::kConstant;
  std::string name;
  Arity arity;
  Eigen::Index dim = 1;
  // saturated
  std::vector<std::vector<double>> proxy_levels;
  std::vector<double> action_levels;
  std::vector<std::vector<double>> x_levels;
  // polynomial
  int degree = 0;
  int proxy_dim = 0;
  int x_dim = 0;
  std::vector<std::vector<int>> exponents;  // one row per monomial
  // spline
  int spline_degree = 0;
  std::vector<std::vector<double>> breakpoints;
  std::vector<std::vector<double>> knots;  // clamped knot vectors
  std::vector<int> basis_sizes;
  // combination
  std::shared_ptr<const FeatureMap> base;
  MatrixXd coefficients;
};

namespace {

std::size_t level_index(const std::vector<double>& levels, double v, const char* what) {
  auto it = std::lower_bound(levels.begin(), levels.end(), v);
  const double tol = 1e-9 * std::max(1.0, std::abs(v));
  if (it != levels.end() && std::abs(*it - v) <= tol) return static_cast<std::size_t>(it - levels.begin());
  if (it != levels.begin() && std::abs(*(it - 1) - v) <= tol) return static_cast<std::size_t>(it - 1 - levels.begin());
  throw ValidationError(std::string("value ") + std::to_string(v) + " is not a declared " + what + " level");
}

std::vector<double> sorted_unique(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

void collect_inputs(const PointView& p, const Arity& ar, std::vector<double>& out) {
  out.clear();
  if (ar.proxy) out.insert(out.end(), p.proxy.begin(), p.proxy.end());
  if (ar.action) out.push_back(p.action.value);
  if (ar.x) out.insert(out.end(), p.x.begin(), p.x.end());
}

void enumerate_exponents(int vars, int degree, std::vector<std::vector<int>>& out) {
  // Graded order: total degree 0, 1, ..., degree; lexicographic within a degree.
  std::vector<int> cur(static_cast<std::size_t>(vars), 0);
  for (int total = 0; total <= degree; ++total) {
    std::function<void(int, int)> rec = [&](int pos, int remaining) {
      if (pos == vars - 1) {
        cur[static_cast<std::size_t>(pos)] = remaining;
        out.push_back(cur);
        return;
      }
      for (int e = remaining; e >= 0; --e) {
        cur[static_cast<std::size_t>(pos)] = e;
        rec(pos + 1, remaining - e);
      }
    };
    if (vars == 0) {
      if (total == 0) out.emplace_back();
      continue;
    }
    rec(0, total);
  }
}

// Non-zero B-spline basis values at x (NURBS book A2.2). Returns first index.
int bspline_basis(const std::vector<double>& t, int p, int nbasis, double x, std::vector<double>& nvals) {
  const double lo = t[static_cast<std::size_t>(p)];
  const double hi = t[static_cast<std::size_t>(nbasis)];
  x = std::clamp(x, lo, hi);
  int span = p;
  if (x >= hi) {
    span = nbasis - 1;
  } else {
    while (span < nbasis - 1 && x >= t[static_cast<std::size_t>(span + 1)]) ++span;
  }
  nvals.assign(static_cast<std::size_t>(p + 1), 0.0);
  std::vector<double> left(static_cast<std::size_t>(p + 1)), right(static_cast<std::size_t>(p + 1));
  nvals[0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[static_cast<std::size_t>(j)] = x - t[static_cast<std::size_t>(span + 1 - j)];
    right[static_cast<std::size_t>(j)] = t[static_cast<std::size_t>(span + j)] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double denom = right[static_cast<std::size_t>(r + 1)] + left[static_cast<std::size_t>(j - r)];
      const double temp = denom != 0.0 ? nvals[static_cast<std::size_t>(r)] / denom : 0.0;
      nvals[static_cast<std::size_t>(r)] = saved + right[static_cast<std::size_t>(r + 1)] * temp;
      saved = left[static_cast<std::size_t>(j - r)] * temp;
    }
    nvals[static_cast<std::size_t>(j)] = saved;
  }
  return span - p;
}

json arity_json(const Arity& a) { return json{{"proxy", a.proxy}, {"action", a.action}, {"x", a.x}}; }

Arity arity_from(const json& j) {
  Arity a;
  if (j.contains("arity")) {
    const auto& ar = j.at("arity");
    a.proxy = ar.value("proxy", true);
    a.action = ar.value("action", true);
    a.x = ar.value("x", true);
  }
  return a;
}

}  // namespace

FeatureMap FeatureMap::constant() {
  auto impl = std::make_shared<Impl>();
  impl->type = Type::kConstant;
  impl->name = "constant";
  impl->arity = {false, false, false};
  impl->dim = 1;
  return FeatureMap(std::move(impl));
}

FeatureMap FeatureMap::saturated(std::vector<std::vector<double>> proxy_levels, std::vector<double> action_levels,
                                 std::vector<std::vector<double>> x_levels, Arity arity) {
  auto impl = std::make_shared<Impl>();
  impl->type = Type::kSaturated;
  impl->name = "saturated";
  impl->arity = arity;
  Eigen::Index d = 1;
  auto check = [&](std::vector<double>& lv, const char* what) {
    lv = sorted_unique(std::move(lv));
    if (lv.empty()) throw ConfigError(std::string("saturated features need at least one ") + what + " level");
    d *= static_cast<Eigen::Index>(lv.size());
  };
  if (arity.proxy) {
    for (auto& lv : proxy_levels) check(lv, "proxy");
    impl->proxy_levels = std::move(proxy_levels);
  }
  if (arity.action) {
    check(action_levels, "action");
    impl->action_levels = std::move(action_levels);
  }
  if (arity.x) {
    for (auto& lv : x_levels) check(lv, "x");
    impl->x_levels = std::move(x_levels);
  }
  impl->dim = d;
  return FeatureMap(std::move(impl));
}

FeatureMap FeatureMap::saturated_from_data(const ObservationTable& table, ProxyRole role, Arity arity) {
  const RowMatrix& proxy = table.proxy(role);
  std::vector<std::vector<double>> pl(static_cast<std::size_t>(proxy.cols()));
  for (Eigen::Index c = 0; c < proxy.cols(); ++c) {
    std::vector<double> col(static_cast<std::size_t>(proxy.rows()));
    for (Eigen::Index r = 0; r < proxy.rows(); ++r) col[static_cast<std::size_t>(r)] = proxy(r, c);
    pl[static_cast<std::size_t>(c)] = sorted_unique(std::move(col));
  }
  std::vector<std::vector<double>> xl(static_cast<std::size_t>(table.d_x()));
  for (Eigen::Index c = 0; c < table.d_x(); ++c) {
    std::vector<double> col(static_cast<std::size_t>(table.n()));
    for (Eigen::Index r = 0; r < table.n(); ++r) col[static_cast<std::size_t>(r)] = table.x()(r, c);
    xl[static_cast<std::size_t>(c)] = sorted_unique(std::move(col));
  }
  std::vector<double> al;
  if (table.support().is_discrete()) {
    al = table.support().levels;
  } else {
    al.assign(table.a().data(), table.a().data() + table.n());
  }
  return saturated(std::move(pl), std::move(al), std::move(xl), arity);
}

FeatureMap FeatureMap::polynomial(int degree, int proxy_dim, int x_dim, Arity arity) {
  if (degree < 0) throw ConfigError("polynomial degree must be >= 0");
  auto impl = std::make_shared<Impl>();
  impl->type = Type::kPolynomial;
  impl->name = "polynomial";
  impl->arity = arity;
  impl->degree = degree;
  impl->proxy_dim = proxy_dim;
  impl->x_dim = x_dim;
  const int vars = (arity.proxy ? proxy_dim : 0) + (arity.action ? 1 : 0) + (arity.x ? x_dim : 0);
  enumerate_exponents(vars, degree, impl->exponents);
  impl->dim = static_cast<Eigen::Index>(impl->exponents.size());
  return FeatureMap(std::move(impl));
}

FeatureMap FeatureMap::spline(int degree, std::vector<std::vector<double>> breakpoints, Arity arity) {
  if (degree < 0) throw ConfigError("spline degree must be >= 0");
  auto impl = std::make_shared<Impl>();
  impl->type = Type::kSpline;
  impl->name = "spline";
  impl->arity = arity;
  impl->spline_degree = degree;
  Eigen::Index d = 1;
  for (auto& bp : breakpoints) {
    bp = sorted_unique(std::move(bp));
    if (bp.size() < 2) throw ConfigError("spline breakpoints need at least two distinct values");
    std::vector<double> t;
    for (int k = 0; k < degree; ++k) t.push_back(bp.front());
    t.insert(t.end(), bp.begin(), bp.end());
    for (int k = 0; k < degree; ++k) t.push_back(bp.back());
    const int nb = static_cast<int>(bp.size()) - 1 + degree;
    impl->knots.push_back(std::move(t));
    impl->basis_sizes.push_back(nb);
    d *= nb;
  }
  impl->breakpoints = std::move(breakpoints);
  impl->dim = d;
  return FeatureMap(std::move(impl));
}

FeatureMap FeatureMap::combination(const FeatureMap& base, MatrixXd coefficients) {
  if (coefficients.rows() != base.dim()) {
    throw ConfigError("combination coefficients must have one row per base feature");
  }
  auto impl = std::make_shared<Impl>();
  impl->type = Type::kCombination;
  impl->name = "combination";
  impl->arity = base.arity();
  impl->base = std::make_shared<const FeatureMap>(base);
  impl->coefficients = std::move(coefficients);
  impl->dim = impl->coefficients.cols();
  return FeatureMap(std::move(impl));
}

FeatureMap::Type FeatureMap::type() const { return impl_->type; }
const std::string& FeatureMap::name() const { return impl_->name; }
const Arity& FeatureMap::arity() const { return impl_->arity; }
Eigen::Index FeatureMap::dim() const { return impl_->dim; }

void FeatureMap::eval(const PointView& p, Eigen::Ref<VectorXd> out) const {
  const Impl& m = *impl_;
  switch (m.type) {
    case Type::kConstant:
      out(0) = 1.0;
      return;
    case Type::kSaturated: {
      std::size_t idx = 0;
      if (m.arity.proxy) {
        if (p.proxy.size() != m.proxy_levels.size()) throw ValidationError("saturated features: proxy dimension mismatch");
        for (std::size_t k = 0; k < p.proxy.size(); ++k) {
          idx = idx * m.proxy_levels[k].size() + level_index(m.proxy_levels[k], p.proxy[k], "proxy");
        }
      }
      if (m.arity.action) {
        idx = idx * m.action_levels.size() + level_index(m.action_levels, p.action.value, "action");
      }
      if (m.arity.x) {
        if (p.x.size() != m.x_levels.size()) throw ValidationError("saturated features: x dimension mismatch");
        for (std::size_t k = 0; k < p.x.size(); ++k) {
          idx = idx * m.x_levels[k].size() + level_index(m.x_levels[k], p.x[k], "x");
        }
      }
      out.setZero();
      out(static_cast<Eigen::Index>(idx)) = 1.0;
      return;
    }
    case Type::kPolynomial: {
      thread_local std::vector<double> in;
      collect_inputs(p, m.arity, in);
      for (std::size_t f = 0; f < m.exponents.size(); ++f) {
        double v = 1.0;
        const auto& e = m.exponents[f];
        if (e.size() != in.size()) throw ValidationError("polynomial features: input dimension mismatch");
        for (std::size_t k = 0; k < in.size(); ++k) {
          for (int r = 0; r < e[k]; ++r) v *= in[k];
        }
        out(static_cast<Eigen::Index>(f)) = v;
      }
      return;
    }
    case Type::kSpline: {
      thread_local std::vector<double> in;
      collect_inputs(p, m.arity, in);
      if (in.size() != m.knots.size()) throw ValidationError("spline features: input dimension mismatch");
      // Tensor product built up one input at a time.
      VectorXd acc = VectorXd::Ones(1);
      std::vector<double> nv;
      for (std::size_t k = 0; k < in.size(); ++k) {
        const int nb = m.basis_sizes[k];
        VectorXd b = VectorXd::Zero(nb);
        const int first = bspline_basis(m.knots[k], m.spline_degree, nb, in[k], nv);
        for (std::size_t r = 0; r < nv.size(); ++r) b(first + static_cast<int>(r)) = nv[r];
        VectorXd next(acc.size() * nb);
        for (Eigen::Index i = 0; i < acc.size(); ++i) next.segment(i * nb, nb) = acc(i) * b;
        acc = std::move(next);
      }
      out = acc;
      return;
    }
    case Type::kCombination: {
      const VectorXd b = m.base->eval(p);
      out.noalias() = m.coefficients.transpose() * b;
      return;
    }
  }
}

VectorXd FeatureMap::eval(const PointView& p) const {
  VectorXd out(dim());
  eval(p, out);
  return out;
}

MatrixXd FeatureMap::eval_rows(const ObservationTable& table, ProxyRole role) const {
  MatrixXd out(table.n(), dim());
  VectorXd tmp(dim());
  for (Eigen::Index i = 0; i < table.n(); ++i) {
    eval(table.point(i, role), tmp);
    out.row(i) = tmp.transpose();
  }
  return out;
}

json FeatureMap::to_json() const {
  const Impl& m = *impl_;
  json j;
  switch (m.type) {
    case Type::kConstant:
      j = {{"type", "constant"}};
      break;
    case Type::kSaturated:
      j = {{"type", "saturated"},
           {"arity", arity_json(m.arity)},
           {"proxy_levels", m.proxy_levels},
           {"action_levels", m.action_levels},
           {"x_levels", m.x_levels}};
      break;
    case Type::kPolynomial:
      j = {{"type", "polynomial"},
           {"arity", arity_json(m.arity)},
           {"degree", m.degree},
           {"proxy_dim", m.proxy_dim},
           {"x_dim", m.x_dim}};
      break;
    case Type::kSpline:
      j = {{"type", "spline"}, {"arity", arity_json(m.arity)}, {"degree", m.spline_degree}, {"breakpoints", m.breakpoints}};
      break;
    case Type::kCombination: {
      std::vector<std::vector<double>> rows(static_cast<std::size_t>(m.coefficients.rows()));
      for (Eigen::Index r = 0; r < m.coefficients.rows(); ++r) {
        rows[static_cast<std::size_t>(r)].assign(m.coefficients.cols(), 0.0);
        for (Eigen::Index c = 0; c < m.coefficients.cols(); ++c) rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = m.coefficients(r, c);
      }
      j = {{"type", "combination"}, {"base", m.base->to_json()}, {"coefficients", rows}, {"dim", m.coefficients.cols()}};
      break;
    }
  }
  return j;
}

FeatureMap FeatureMap::from_json(const json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "constant") return constant();
  if (type == "saturated") {
    return saturated(j.at("proxy_levels").get<std::vector<std::vector<double>>>(),
                     j.at("action_levels").get<std::vector<double>>(),
                     j.at("x_levels").get<std::vector<std::vector<double>>>(), arity_from(j));
  }
  if (type == "polynomial") {
    return polynomial(j.at("degree").get<int>(), j.at("proxy_dim").get<int>(), j.at("x_dim").get<int>(), arity_from(j));
  }
  if (type == "spline") {
    return spline(j.at("degree").get<int>(), j.at("breakpoints").get<std::vector<std::vector<double>>>(), arity_from(j));
  }
  if (type == "combination") {
    const FeatureMap base = from_json(j.at("base"));
    const auto rows = j.at("coefficients").get<std::vector<std::vector<double>>>();
    const auto cols = j.at("dim").get<Eigen::Index>();
    MatrixXd c(static_cast<Eigen::Index>(rows.size()), cols);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (static_cast<Eigen::Index>(rows[r].size()) != cols) throw ValidationError("combination coefficients are ragged");
      for (Eigen::Index k = 0; k < cols; ++k) c(static_cast<Eigen::Index>(r), k) = rows[r][static_cast<std::size_t>(k)];
    }
    return combination(base, std::move(c));
  }
  throw ValidationError("unknown feature map type '" + type + "'");
}

}  // namespace proxbridge
