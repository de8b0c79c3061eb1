#include "proxbridge/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "proxbridge/errors.hpp"
#include "proxbridge/linalg.hpp"
#include "proxbridge/rng.hpp"

namespace proxbridge {

using nlohmann::json;

namespace {

constexpr double kSumTol = 1e-12;
const linalg::RankTolerance kBridgeTol = linalg::RankTolerance::relative(1e-10);

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

void check_row(const std::vector<double>& row, int expected, const std::string& what) {
  if (static_cast<int>(row.size()) != expected) {
    throw ValidationError(what + ": expected " + std::to_string(expected) + " entries, got " + std::to_string(row.size()));
  }
  double s = 0.0;
  for (double v : row) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError(what + ": probabilities must be finite and nonnegative");
    s += v;
  }
  if (std::abs(s - 1.0) > kSumTol) throw ValidationError(what + ": row sums to " + std::to_string(s) + ", not 1");
}

template <class T>
void check_size(const std::vector<T>& v, int expected, const std::string& what) {
  if (static_cast<int>(v.size()) != expected) {
    throw ValidationError(what + ": expected " + std::to_string(expected) + " entries, got " + std::to_string(v.size()));
  }
}

std::string cell(const char* table, int i, int j) {
  return std::string(table) + "[" + std::to_string(i) + "][" + std::to_string(j) + "]";
}

// P(W | U, x) as a |W| x |U| matrix.
MatrixXd w_given_u(const DiscreteDGP& d, int x) {
  MatrixXd m(d.n_w, d.n_u);
  for (int u = 0; u < d.n_u; ++u) {
    for (int w = 0; w < d.n_w; ++w) m(w, u) = d.p_w[sz(x)][sz(u)][sz(w)];
  }
  return m;
}

// P(Z | U, a, x) as a |Z| x |U| matrix.
MatrixXd z_given_u(const DiscreteDGP& d, int a, int x) {
  MatrixXd m(d.n_z, d.n_u);
  for (int u = 0; u < d.n_u; ++u) {
    for (int z = 0; z < d.n_z; ++z) m(z, u) = d.p_z[sz(x)][sz(a)][sz(u)][sz(z)];
  }
  return m;
}

}  // namespace

// ---------------------------------------------------------------- discrete DGP

void DiscreteDGP::validate() const {
  if (n_u < 1 || n_w < 1 || n_z < 1 || n_a < 1 || n_x < 1) throw ValidationError("all cardinalities must be >= 1");
  if (!a_levels.empty()) {
    check_size(a_levels, n_a, "a_levels");
    ActionSupport::discrete(a_levels);
  }
  check_row(p_x, n_x, "p_x");
  check_size(p_u, n_x, "p_u");
  check_size(f, n_x, "f");
  check_size(p_w, n_x, "p_w");
  check_size(p_z, n_x, "p_z");
  check_size(y_mean, n_x, "y_mean");
  for (int x = 0; x < n_x; ++x) {
    check_row(p_u[sz(x)], n_u, "p_u[" + std::to_string(x) + "]");
    check_size(f[sz(x)], n_u, "f[" + std::to_string(x) + "]");
    check_size(p_w[sz(x)], n_u, "p_w[" + std::to_string(x) + "]");
    for (int u = 0; u < n_u; ++u) {
      check_row(f[sz(x)][sz(u)], n_a, cell("f", x, u));
      for (double v : f[sz(x)][sz(u)]) {
        if (!(v > 0.0)) throw ValidationError(cell("f", x, u) + ": overlap requires f(a|u,x) > 0");
      }
      check_row(p_w[sz(x)][sz(u)], n_w, cell("p_w", x, u));
    }
    check_size(p_z[sz(x)], n_a, "p_z[" + std::to_string(x) + "]");
    check_size(y_mean[sz(x)], n_a, "y_mean[" + std::to_string(x) + "]");
    for (int a = 0; a < n_a; ++a) {
      check_size(p_z[sz(x)][sz(a)], n_u, cell("p_z", x, a));
      for (int u = 0; u < n_u; ++u) check_row(p_z[sz(x)][sz(a)][sz(u)], n_z, cell("p_z", x, a) + "[" + std::to_string(u) + "]");
      check_size(y_mean[sz(x)][sz(a)], n_u, cell("y_mean", x, a));
      for (double v : y_mean[sz(x)][sz(a)]) {
        if (!std::isfinite(v)) throw ValidationError("y_mean entries must be finite");
      }
    }
  }
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw ValidationError("noise half-width must be finite and >= 0");
  if (contrast_type == "ate_binary") {
    if (n_a != 2) throw ValidationError("ate_binary contrast needs exactly two actions");
  } else if (contrast_type == "policy_table") {
    check_size(contrast, n_x, "contrast");
    for (int x = 0; x < n_x; ++x) {
      check_size(contrast[sz(x)], n_a, "contrast[" + std::to_string(x) + "]");
      for (double v : contrast[sz(x)]) {
        if (!std::isfinite(v)) throw ValidationError("contrast entries must be finite");
      }
    }
  } else {
    throw ValidationError("contrast_type must be ate_binary or policy_table");
  }
}

ActionSupport DiscreteDGP::support() const {
  std::vector<double> lv(sz(n_a));
  for (int a = 0; a < n_a; ++a) lv[sz(a)] = action_value(a);
  return ActionSupport::discrete(std::move(lv));
}

double DiscreteDGP::pi(int a, int x) const {
  if (contrast_type == "ate_binary") return a == 1 ? 1.0 : -1.0;
  return contrast[sz(x)][sz(a)];
}

ContrastSpec DiscreteDGP::contrast_spec() const {
  const ActionSupport s = support();
  if (contrast_type == "ate_binary") return ContrastSpec::ate_binary(s);
  std::vector<std::vector<double>> xl;
  for (int x = 0; x < n_x; ++x) xl.push_back({static_cast<double>(x)});
  return ContrastSpec::policy_table(s, std::move(xl), contrast);
}

json DiscreteDGP::to_json() const {
  json j{{"type", "discrete"},  {"name", name},     {"n_u", n_u},     {"n_w", n_w},
         {"n_z", n_z},          {"n_a", n_a},       {"n_x", n_x},     {"p_x", p_x},
         {"p_u", p_u},          {"f", f},           {"p_w", p_w},     {"p_z", p_z},
         {"y_mean", y_mean},    {"noise", noise},   {"contrast_type", contrast_type}};
  if (!a_levels.empty()) j["a_levels"] = a_levels;
  if (contrast_type == "policy_table") j["contrast"] = contrast;
  return j;
}

DiscreteDGP DiscreteDGP::from_json(const json& j) {
  static const std::vector<std::string> allowed{"type", "name", "n_u", "n_w", "n_z", "n_a", "n_x", "a_levels", "p_x", "p_u",
                                                "f", "p_w", "p_z", "y_mean", "noise", "contrast_type", "contrast"};
  for (const auto& [k, v] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
      throw ValidationError("unknown key '" + k + "' in discrete dgp");
    }
  }
  DiscreteDGP d;
  try {
    d.name = j.value("name", "");
    d.n_u = j.at("n_u").get<int>();
    d.n_w = j.at("n_w").get<int>();
    d.n_z = j.at("n_z").get<int>();
    d.n_a = j.at("n_a").get<int>();
    d.n_x = j.at("n_x").get<int>();
    d.a_levels = j.value("a_levels", std::vector<double>{});
    d.p_x = j.at("p_x").get<std::vector<double>>();
    d.p_u = j.at("p_u").get<Vec2<double>>();
    d.f = j.at("f").get<Vec3<double>>();
    d.p_w = j.at("p_w").get<Vec3<double>>();
    d.p_z = j.at("p_z").get<Vec4<double>>();
    d.y_mean = j.at("y_mean").get<Vec3<double>>();
    d.noise = j.value("noise", 0.0);
    d.contrast_type = j.value("contrast_type", "policy_table");
    d.contrast = j.value("contrast", Vec2<double>{});
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed discrete dgp: ") + e.what());
  }
  d.validate();
  return d;
}

DiscreteDGP random_discrete_dgp(std::uint64_t seed, int n_u, int n_w, int n_z, int n_a, int n_x, double min_prob) {
  if (n_a * min_prob >= 1.0) throw ConfigError("min_prob too large for the number of actions");
  Rng rng(seed);
  auto simplex = [&](int k) {
    std::vector<double> v(sz(k));
    double s = 0.0;
    for (auto& e : v) {
      e = rng.uniform(0.05, 1.0);
      s += e;
    }
    for (auto& e : v) e /= s;
    return v;
  };
  DiscreteDGP d;
  d.name = "random";
  d.n_u = n_u;
  d.n_w = n_w;
  d.n_z = n_z;
  d.n_a = n_a;
  d.n_x = n_x;
  d.p_x = simplex(n_x);
  d.p_u.resize(sz(n_x));
  d.f.resize(sz(n_x));
  d.p_w.resize(sz(n_x));
  d.p_z.resize(sz(n_x));
  d.y_mean.resize(sz(n_x));
  d.contrast.resize(sz(n_x));
  for (int x = 0; x < n_x; ++x) {
    d.p_u[sz(x)] = simplex(n_u);
    for (int u = 0; u < n_u; ++u) {
      auto r = simplex(n_a);
      for (auto& e : r) e = min_prob + (1.0 - n_a * min_prob) * e;
      d.f[sz(x)].push_back(r);
      d.p_w[sz(x)].push_back(simplex(n_w));
    }
    d.p_z[sz(x)].resize(sz(n_a));
    d.y_mean[sz(x)].resize(sz(n_a));
    for (int a = 0; a < n_a; ++a) {
      for (int u = 0; u < n_u; ++u) {
        d.p_z[sz(x)][sz(a)].push_back(simplex(n_z));
        d.y_mean[sz(x)][sz(a)].push_back(rng.uniform(-1.0, 1.0));
      }
    }
    d.contrast[sz(x)] = simplex(n_a);
  }
  d.noise = 0.5;
  d.contrast_type = "policy_table";
  d.validate();
  return d;
}

ObservationTable generate_discrete(const DiscreteDGP& dgp, Eigen::Index n, std::uint64_t seed, std::vector<int>* u_out) {
  dgp.validate();
  if (n < 0) throw ConfigError("sample size must be >= 0");
  Rng rng(seed);
  VectorXd y(n), a(n);
  RowMatrix w(n, 1), z(n, 1), x(n, 1);
  if (u_out) u_out->assign(static_cast<std::size_t>(n), 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int xi = rng.categorical(dgp.p_x);
    const int ui = rng.categorical(dgp.p_u[sz(xi)]);
    const int ai = rng.categorical(dgp.f[sz(xi)][sz(ui)]);
    const int zi = rng.categorical(dgp.p_z[sz(xi)][sz(ai)][sz(ui)]);
    const int wi = rng.categorical(dgp.p_w[sz(xi)][sz(ui)]);
    const double eps = dgp.noise * (2.0 * rng.uniform() - 1.0);
    y(i) = dgp.y_mean[sz(xi)][sz(ai)][sz(ui)] + eps;
    a(i) = dgp.action_value(ai);
    w(i, 0) = wi;
    z(i, 0) = zi;
    x(i, 0) = xi;
    if (u_out) (*u_out)[static_cast<std::size_t>(i)] = ui;
  }
  return ObservationTable(std::move(y), std::move(w), std::move(z), std::move(a), std::move(x), dgp.support());
}

ObservationTable population_table(const DiscreteDGP& dgp, Eigen::Index total) {
  dgp.validate();
  if (total <= 0) throw ConfigError("population table size must be positive");
  std::vector<double> y, a, w, z, x;
  const double nt = static_cast<double>(total);
  for (int xi = 0; xi < dgp.n_x; ++xi) {
    for (int ui = 0; ui < dgp.n_u; ++ui) {
      for (int ai = 0; ai < dgp.n_a; ++ai) {
        for (int zi = 0; zi < dgp.n_z; ++zi) {
          for (int wi = 0; wi < dgp.n_w; ++wi) {
            const double p = dgp.p_x[sz(xi)] * dgp.p_u[sz(xi)][sz(ui)] * dgp.f[sz(xi)][sz(ui)][sz(ai)] *
                             dgp.p_z[sz(xi)][sz(ai)][sz(ui)][sz(zi)] * dgp.p_w[sz(xi)][sz(ui)][sz(wi)];
            const double m = std::round(p * nt);
            if (std::abs(p * nt - m) > 1e-9 * nt) {
              throw ConfigError("cell probability times " + std::to_string(total) + " is not an integer");
            }
            for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(m); ++k) {
              y.push_back(dgp.y_mean[sz(xi)][sz(ai)][sz(ui)]);
              a.push_back(dgp.action_value(ai));
              w.push_back(wi);
              z.push_back(zi);
              x.push_back(xi);
            }
          }
        }
      }
    }
  }
  const auto n = static_cast<Eigen::Index>(y.size());
  auto col = [n](const std::vector<double>& v) { return RowMatrix(Eigen::Map<const VectorXd>(v.data(), n)); };
  return ObservationTable(Eigen::Map<const VectorXd>(y.data(), n), col(w), col(z), Eigen::Map<const VectorXd>(a.data(), n),
                          col(x), dgp.support());
}

CellFn cell_fn(const BridgeFit& f, const DiscreteDGP& dgp) {
  std::vector<double> av(sz(dgp.n_a));
  for (int a = 0; a < dgp.n_a; ++a) av[sz(a)] = dgp.action_value(a);
  return [f, av](int p, int a, int x) {
    const double pv = p, xv = x;
    return f.eval({{&pv, 1}, {av[sz(a)], a}, {&xv, 1}});
  };
}

OracleJ oracle_discrete_j_both(const DiscreteDGP& d) {
  d.validate();
  OracleJ out;
  for (int x = 0; x < d.n_x; ++x) {
    for (int u = 0; u < d.n_u; ++u) {
      const double pxu = d.p_x[sz(x)] * d.p_u[sz(x)][sz(u)];
      for (int a = 0; a < d.n_a; ++a) {
        const double fy = d.f[sz(x)][sz(u)][sz(a)];
        const double ym = d.y_mean[sz(x)][sz(a)][sz(u)];
        out.reg += pxu * d.pi(a, x) * ym;
        out.ipw += pxu * fy * (d.pi(a, x) / fy) * ym;
      }
    }
  }
  return out;
}

double oracle_discrete_J(const DiscreteDGP& dgp) { return oracle_discrete_j_both(dgp).reg; }

bool DiscreteBridgeSets::h_unique() const {
  for (const auto& row : h_null) {
    for (const auto& m : row) {
      if (m.cols() > 0) return false;
    }
  }
  return true;
}

bool DiscreteBridgeSets::q_unique() const {
  for (const auto& row : q_null) {
    for (const auto& m : row) {
      if (m.cols() > 0) return false;
    }
  }
  return true;
}

CellFn DiscreteBridgeSets::h_fn() const {
  return [v = h](int p, int a, int x) { return v[sz(x)][sz(a)](p); };
}

CellFn DiscreteBridgeSets::q_fn() const {
  return [v = q](int p, int a, int x) { return v[sz(x)][sz(a)](p); };
}

DiscreteBridgeSets oracle_discrete_bridge_sets(const DiscreteDGP& d) {
  d.validate();
  DiscreteBridgeSets s;
  s.h.assign(sz(d.n_x), std::vector<VectorXd>(sz(d.n_a)));
  s.h_null.assign(sz(d.n_x), std::vector<MatrixXd>(sz(d.n_a)));
  s.q.assign(sz(d.n_x), std::vector<VectorXd>(sz(d.n_a)));
  s.q_null.assign(sz(d.n_x), std::vector<MatrixXd>(sz(d.n_a)));
  for (int x = 0; x < d.n_x; ++x) {
    const MatrixXd pw = w_given_u(d, x);
    if (linalg::rank(pw, kBridgeTol) < d.n_u) {
      throw RankError("bridge existence not guaranteed: P(W|U,a,x) has column rank below |U| at x=" + std::to_string(x));
    }
    const MatrixXd pwt = pw.transpose();
    const MatrixXd pwt_pinv = linalg::pinv(pwt, kBridgeTol);
    const MatrixXd nw = linalg::null_space(pwt, kBridgeTol);
    for (int a = 0; a < d.n_a; ++a) {
      VectorXd e(d.n_u);
      for (int u = 0; u < d.n_u; ++u) e(u) = d.y_mean[sz(x)][sz(a)][sz(u)];
      s.h[sz(x)][sz(a)] = pwt_pinv * e;
      s.h_null[sz(x)][sz(a)] = nw;
      s.h_u_residual = std::max(s.h_u_residual, (pwt * s.h[sz(x)][sz(a)] - e).cwiseAbs().maxCoeff());

      const MatrixXd pz = z_given_u(d, a, x);
      if (linalg::rank(pz, kBridgeTol) < d.n_u) {
        throw RankError("bridge existence not guaranteed: P(Z|U,a,x) has column rank below |U| at a=" + std::to_string(a) +
                        ", x=" + std::to_string(x));
      }
      const MatrixXd pzt = pz.transpose();
      VectorXd t(d.n_u);
      for (int u = 0; u < d.n_u; ++u) t(u) = 1.0 / d.f[sz(x)][sz(u)][sz(a)];
      s.q[sz(x)][sz(a)] = linalg::pinv(pzt, kBridgeTol) * t;
      s.q_null[sz(x)][sz(a)] = linalg::null_space(pzt, kBridgeTol);
      s.q_u_residual = std::max(s.q_u_residual, (pzt * s.q[sz(x)][sz(a)] - t).cwiseAbs().maxCoeff());
    }
  }
  return s;
}

FeatureMap saturated_map(const DiscreteDGP& d, ProxyRole role) {
  const int np = role == ProxyRole::kW ? d.n_w : d.n_z;
  std::vector<double> pl(sz(np)), al(sz(d.n_a)), xl(sz(d.n_x));
  for (int i = 0; i < np; ++i) pl[sz(i)] = i;
  for (int a = 0; a < d.n_a; ++a) al[sz(a)] = d.action_value(a);
  for (int x = 0; x < d.n_x; ++x) xl[sz(x)] = x;
  return FeatureMap::saturated({pl}, al, {xl});
}

BridgeFit bridge_from_fn(BridgeKind kind, const DiscreteDGP& d, const CellFn& fn) {
  const ProxyRole role = kind == BridgeKind::kOutcome ? ProxyRole::kW : ProxyRole::kZ;
  const int np = role == ProxyRole::kW ? d.n_w : d.n_z;
  const FeatureMap phi = saturated_map(d, role);
  VectorXd coef(phi.dim());
  // Mixed-radix order (proxy, action, x) of the saturated map.
  for (int p = 0; p < np; ++p) {
    for (int a = 0; a < d.n_a; ++a) {
      for (int x = 0; x < d.n_x; ++x) coef((p * d.n_a + a) * d.n_x + x) = fn(p, a, x);
    }
  }
  FitDiagnostics diag;
  diag.method = "oracle";
  return BridgeFit(kind, SieveDescriptor{phi, coef}, diag);
}

BridgeFit bridge_from_cells(BridgeKind kind, const DiscreteDGP& d, const Vec2<VectorXd>& values) {
  return bridge_from_fn(kind, d, [&values](int p, int a, int x) { return values[sz(x)][sz(a)](p); });
}

Vec3<double> conditional_moment_h(const DiscreteDGP& d, const CellFn& h) {
  Vec3<double> out(sz(d.n_x), Vec2<double>(sz(d.n_a), std::vector<double>(sz(d.n_z), 0.0)));
  for (int x = 0; x < d.n_x; ++x) {
    for (int a = 0; a < d.n_a; ++a) {
      // Residual r(u) = E[Y - h(W, a, x) | u, a, x].
      std::vector<double> r(sz(d.n_u));
      for (int u = 0; u < d.n_u; ++u) {
        double eh = 0.0;
        for (int w = 0; w < d.n_w; ++w) eh += d.p_w[sz(x)][sz(u)][sz(w)] * h(w, a, x);
        r[sz(u)] = d.y_mean[sz(x)][sz(a)][sz(u)] - eh;
      }
      for (int z = 0; z < d.n_z; ++z) {
        double num = 0.0, den = 0.0;
        for (int u = 0; u < d.n_u; ++u) {
          const double wt = d.p_u[sz(x)][sz(u)] * d.f[sz(x)][sz(u)][sz(a)] * d.p_z[sz(x)][sz(a)][sz(u)][sz(z)];
          num += wt * r[sz(u)];
          den += wt;
        }
        out[sz(x)][sz(a)][sz(z)] = den > 0.0 ? num / den : 0.0;
      }
    }
  }
  return out;
}

Vec3<double> conditional_moment_q(const DiscreteDGP& d, const CellFn& q) {
  Vec3<double> out(sz(d.n_x), Vec2<double>(sz(d.n_a), std::vector<double>(sz(d.n_w), 0.0)));
  for (int x = 0; x < d.n_x; ++x) {
    for (int a = 0; a < d.n_a; ++a) {
      std::vector<double> eq(sz(d.n_u));  // E[q(Z, a, x) | u, a, x]
      for (int u = 0; u < d.n_u; ++u) {
        double s = 0.0;
        for (int z = 0; z < d.n_z; ++z) s += d.p_z[sz(x)][sz(a)][sz(u)][sz(z)] * q(z, a, x);
        eq[sz(u)] = s;
      }
      for (int w = 0; w < d.n_w; ++w) {
        double num = 0.0, den = 0.0, pw = 0.0;
        for (int u = 0; u < d.n_u; ++u) {
          const double base = d.p_u[sz(x)][sz(u)] * d.p_w[sz(x)][sz(u)][sz(w)];
          const double wt = base * d.f[sz(x)][sz(u)][sz(a)];
          num += wt * eq[sz(u)];
          den += wt;
          pw += base;
        }
        if (den > 0.0) {
          const double f_aw = den / pw;  // f(a | w, x)
          out[sz(x)][sz(a)][sz(w)] = d.pi(a, x) * (num / den - 1.0 / f_aw);
        }
      }
    }
  }
  return out;
}

double oracle_conditional_residual(const DiscreteDGP& d, BridgeKind kind, const CellFn& c) {
  double acc = 0.0;
  if (kind == BridgeKind::kOutcome) {
    const auto m = conditional_moment_h(d, c);
    for (int x = 0; x < d.n_x; ++x) {
      for (int a = 0; a < d.n_a; ++a) {
        for (int z = 0; z < d.n_z; ++z) {
          double p = 0.0;
          for (int u = 0; u < d.n_u; ++u) {
            p += d.p_x[sz(x)] * d.p_u[sz(x)][sz(u)] * d.f[sz(x)][sz(u)][sz(a)] * d.p_z[sz(x)][sz(a)][sz(u)][sz(z)];
          }
          acc += p * m[sz(x)][sz(a)][sz(z)] * m[sz(x)][sz(a)][sz(z)];
        }
      }
    }
  } else {
    const auto m = conditional_moment_q(d, c);
    for (int x = 0; x < d.n_x; ++x) {
      for (int a = 0; a < d.n_a; ++a) {
        for (int w = 0; w < d.n_w; ++w) {
          double p = 0.0;
          for (int u = 0; u < d.n_u; ++u) {
            p += d.p_x[sz(x)] * d.p_u[sz(x)][sz(u)] * d.p_w[sz(x)][sz(u)][sz(w)] * d.f[sz(x)][sz(u)][sz(a)];
          }
          acc += p * m[sz(x)][sz(a)][sz(w)] * m[sz(x)][sz(a)][sz(w)];
        }
      }
    }
  }
  return std::sqrt(acc);
}

double oracle_conditional_residual(const DiscreteDGP& dgp, const BridgeFit& candidate) {
  return oracle_conditional_residual(dgp, candidate.kind(), cell_fn(candidate, dgp));
}

double population_reg(const DiscreteDGP& d, const CellFn& h) {
  double acc = 0.0;
  for (int x = 0; x < d.n_x; ++x) {
    for (int u = 0; u < d.n_u; ++u) {
      const double pxu = d.p_x[sz(x)] * d.p_u[sz(x)][sz(u)];
      for (int w = 0; w < d.n_w; ++w) {
        double th = 0.0;
        for (int a = 0; a < d.n_a; ++a) th += d.pi(a, x) * h(w, a, x);
        acc += pxu * d.p_w[sz(x)][sz(u)][sz(w)] * th;
      }
    }
  }
  return acc;
}

namespace {

// Sum over (x, u, a) of p(x) p(u|x) f(a|u,x) pi(a|x) * g(x, u, a).
template <class G>
double sum_xua(const DiscreteDGP& d, G&& g) {
  double acc = 0.0;
  for (int x = 0; x < d.n_x; ++x) {
    for (int u = 0; u < d.n_u; ++u) {
      for (int a = 0; a < d.n_a; ++a) {
        acc += d.p_x[sz(x)] * d.p_u[sz(x)][sz(u)] * d.f[sz(x)][sz(u)][sz(a)] * d.pi(a, x) * g(x, u, a);
      }
    }
  }
  return acc;
}

double e_q(const DiscreteDGP& d, const CellFn& q, int x, int u, int a) {
  double s = 0.0;
  for (int z = 0; z < d.n_z; ++z) s += d.p_z[sz(x)][sz(a)][sz(u)][sz(z)] * q(z, a, x);
  return s;
}

double e_h(const DiscreteDGP& d, const CellFn& h, int x, int u, int a) {
  double s = 0.0;
  for (int w = 0; w < d.n_w; ++w) s += d.p_w[sz(x)][sz(u)][sz(w)] * h(w, a, x);
  return s;
}

}  // namespace

double population_ipw(const DiscreteDGP& d, const CellFn& q) {
  return sum_xua(d, [&](int x, int u, int a) { return e_q(d, q, x, u, a) * d.y_mean[sz(x)][sz(a)][sz(u)]; });
}

double population_dr(const DiscreteDGP& d, const CellFn& h, const CellFn& q) {
  // W and Z are independent given (U, A, X), so E[q h | u, a, x] factorizes.
  const double qyh = sum_xua(d, [&](int x, int u, int a) {
    return e_q(d, q, x, u, a) * (d.y_mean[sz(x)][sz(a)][sz(u)] - e_h(d, h, x, u, a));
  });
  return qyh + population_reg(d, h);
}

UScoreMeans population_u_scores(const DiscreteDGP& d) {
  UScoreMeans out;
  for (int x = 0; x < d.n_x; ++x) {
    for (int u = 0; u < d.n_u; ++u) {
      const double pxu = d.p_x[sz(x)] * d.p_u[sz(x)][sz(u)];
      double reg = 0.0;
      for (int a = 0; a < d.n_a; ++a) reg += d.pi(a, x) * d.y_mean[sz(x)][sz(a)][sz(u)];
      out.reg += pxu * reg;
      for (int a = 0; a < d.n_a; ++a) {
        const double fa = d.f[sz(x)][sz(u)][sz(a)];
        const double k0 = d.y_mean[sz(x)][sz(a)][sz(u)];
        // The noise has mean zero, so E[Y | u, a, x] = k0.
        out.ipw += pxu * fa * d.pi(a, x) / fa * k0;
        out.dr += pxu * fa * (d.pi(a, x) / fa * (k0 - k0) + reg);
      }
    }
  }
  return out;
}

VectorXd u_dr_scores(const DiscreteDGP& d, const ObservationTable& t, const std::vector<int>& u) {
  if (static_cast<Eigen::Index>(u.size()) != t.n()) throw ValidationError("latent vector length differs from table");
  VectorXd out(t.n());
  for (Eigen::Index i = 0; i < t.n(); ++i) {
    const int x = static_cast<int>(t.x()(i, 0));
    const int a = t.a_index()[static_cast<std::size_t>(i)];
    const int ui = u[static_cast<std::size_t>(i)];
    double reg = 0.0;
    for (int b = 0; b < d.n_a; ++b) reg += d.pi(b, x) * d.y_mean[sz(x)][sz(b)][sz(ui)];
    const double k0 = d.y_mean[sz(x)][sz(a)][sz(ui)];
    out(i) = d.pi(a, x) / d.f[sz(x)][sz(ui)][sz(a)] * (t.y()(i) - k0) + reg;
  }
  return out;
}

json CompletenessReport::to_json() const {
  json cj = json::array();
  for (const auto& c : cells) {
    cj.push_back({{"a", c.a},
                  {"x", c.x},
                  {"rank_w_u", c.rank_w_u},
                  {"rank_z_u", c.rank_z_u},
                  {"rank_w_z", c.rank_w_z},
                  {"rank_w_z_product", c.rank_w_z_product},
                  {"product_gap", c.product_gap}});
  }
  return {{"cells", cj},
          {"full_column_rank", full_column_rank},
          {"unique_h", unique_h},
          {"unique_q", unique_q},
          {"observed_completeness_possible", observed_completeness_possible},
          {"regime", regime}};
}

CompletenessReport completeness_rank_check(const DiscreteDGP& d) {
  d.validate();
  CompletenessReport rep;
  rep.observed_completeness_possible = d.n_z >= d.n_w && d.n_w == d.n_u;
  for (int x = 0; x < d.n_x; ++x) {
    const MatrixXd pw = w_given_u(d, x);
    for (int a = 0; a < d.n_a; ++a) {
      const MatrixXd pz = z_given_u(d, a, x);
      // Joint of (W, Z) given (a, x), and P(U | Z, a, x).
      MatrixXd joint = MatrixXd::Zero(d.n_w, d.n_z);
      MatrixXd u_given_z = MatrixXd::Zero(d.n_u, d.n_z);
      for (int u = 0; u < d.n_u; ++u) {
        const double pu = d.p_u[sz(x)][sz(u)] * d.f[sz(x)][sz(u)][sz(a)];
        for (int z = 0; z < d.n_z; ++z) {
          u_given_z(u, z) = pu * pz(z, u);
          for (int w = 0; w < d.n_w; ++w) joint(w, z) += pu * pw(w, u) * pz(z, u);
        }
      }
      MatrixXd w_given_z = MatrixXd::Zero(d.n_w, d.n_z);
      for (int z = 0; z < d.n_z; ++z) {
        const double pzm = u_given_z.col(z).sum();
        if (pzm > 0.0) {
          u_given_z.col(z) /= pzm;
          w_given_z.col(z) = joint.col(z) / pzm;
        }
      }
      const MatrixXd product = pw * u_given_z;
      CellRank c;
      c.a = a;
      c.x = x;
      c.rank_w_u = linalg::rank(pw, kBridgeTol);
      c.rank_z_u = linalg::rank(pz, kBridgeTol);
      c.rank_w_z = linalg::rank(w_given_z, kBridgeTol);
      c.rank_w_z_product = linalg::rank(product, kBridgeTol);
      c.product_gap = (w_given_z - product).cwiseAbs().maxCoeff();
      if (c.rank_w_u < d.n_u || c.rank_z_u < d.n_u) rep.full_column_rank = false;
      if (!(d.n_w == d.n_u && c.rank_w_u == d.n_w)) rep.unique_h = false;
      if (!(d.n_z == d.n_u && c.rank_z_u == d.n_z)) rep.unique_q = false;
      if (c.rank_w_z < d.n_w) rep.observed_completeness_possible = false;
      rep.cells.push_back(c);
    }
  }
  if (!rep.full_column_rank) {
    rep.regime = "bridge existence not guaranteed";
  } else if (rep.unique_h && rep.unique_q) {
    rep.regime = "unique bridges";
  } else {
    rep.regime = "nonunique bridges";
  }
  return rep;
}

// ---------------------------------------------------------------- linear SEM

namespace {

void need(Eigen::Index got, Eigen::Index want, const char* what) {
  if (got != want) {
    throw ValidationError(std::string(what) + ": expected dimension " + std::to_string(want) + ", got " + std::to_string(got));
  }
}

std::vector<double> to_std(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

VectorXd from_std(const std::vector<double>& v) {
  return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Vec2<double> mat_std(const MatrixXd& m) {
  Vec2<double> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[static_cast<std::size_t>(r)].push_back(m(r, c));
  }
  return out;
}

MatrixXd mat_from(const Vec2<double>& v, Eigen::Index cols) {
  MatrixXd m(static_cast<Eigen::Index>(v.size()), cols);
  for (std::size_t r = 0; r < v.size(); ++r) {
    if (static_cast<Eigen::Index>(v[r].size()) != cols) throw ValidationError("ragged coefficient matrix");
    for (Eigen::Index c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), c) = v[r][static_cast<std::size_t>(c)];
  }
  return m;
}

// Every corner of the (U, X) box; the action bounds are affine so their
// extremes over the box are attained at corners.
template <class F>
void for_corners(const LinearSEMDGP& d, F&& fn) {
  const int k = d.p_u + d.d_x;
  for (long mask = 0; mask < (1L << k); ++mask) {
    VectorXd u(d.p_u), x(d.d_x);
    for (int i = 0; i < d.p_u; ++i) u(i) = (mask >> i) & 1 ? d.u_hi : d.u_lo;
    for (int i = 0; i < d.d_x; ++i) x(i) = (mask >> (d.p_u + i)) & 1 ? d.x_hi : d.x_lo;
    fn(u, x);
  }
}

}  // namespace

void LinearSEMDGP::validate() const {
  if (p_u < 1 || p_w < 1 || p_z < 1 || d_x < 0) throw ValidationError("linear SEM dimensions must be positive");
  need(alpha_y.size(), p_u, "alpha_y");
  need(beta_y.size(), d_x, "beta_y");
  need(omega_y.size(), p_w, "omega_y");
  need(alpha_z.rows(), p_z, "alpha_z rows");
  need(alpha_z.cols(), p_u, "alpha_z cols");
  need(beta_z.rows(), p_z, "beta_z rows");
  need(beta_z.cols(), d_x, "beta_z cols");
  need(gamma_z.size(), p_z, "gamma_z");
  need(alpha_w.rows(), p_w, "alpha_w rows");
  need(alpha_w.cols(), p_u, "alpha_w cols");
  need(beta_w.rows(), p_w, "beta_w rows");
  need(beta_w.cols(), d_x, "beta_w cols");
  need(a_lo_u.size(), p_u, "a_lo_u");
  need(a_hi_u.size(), p_u, "a_hi_u");
  need(a_lo_x.size(), d_x, "a_lo_x");
  need(a_hi_x.size(), d_x, "a_hi_x");
  if (!(var_y >= 0.0) || !(var_z >= 0.0) || !(var_w >= 0.0)) throw ValidationError("noise variances must be >= 0");
  if (!(u_hi >= u_lo) || !(x_hi >= x_lo)) throw ValidationError("(U, X) ranges need lo <= hi");
  if (linalg::rank(alpha_z, kBridgeTol) < p_u) throw ValidationError("alpha_z must have full column rank");
  if (linalg::rank(alpha_w, kBridgeTol) < p_u) throw ValidationError("alpha_w must have full column rank");
  for_corners(*this, [&](const VectorXd& u, const VectorXd& x) {
    if (!(a_upper(u, x) > a_lower(u, x))) {
      throw ValidationError("action upper bound must exceed the lower bound on the whole (U, X) support");
    }
  });
}

double LinearSEMDGP::a_lower(const VectorXd& u, const VectorXd& x) const { return a_lo_u.dot(u) + a_lo_x.dot(x) + c_lo; }
double LinearSEMDGP::a_upper(const VectorXd& u, const VectorXd& x) const { return a_hi_u.dot(u) + a_hi_x.dot(x) + c_hi; }

ActionSupport LinearSEMDGP::support() const {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for_corners(*this, [&](const VectorXd& u, const VectorXd& x) {
    lo = std::min(lo, a_lower(u, x));
    hi = std::max(hi, a_upper(u, x));
  });
  return ActionSupport::continuous(lo, hi);
}

json LinearSEMDGP::to_json() const {
  return {{"type", "linear_sem"},
          {"name", name},
          {"p_u", p_u},
          {"p_w", p_w},
          {"p_z", p_z},
          {"d_x", d_x},
          {"alpha_y", to_std(alpha_y)},
          {"beta_y", to_std(beta_y)},
          {"gamma_y", gamma_y},
          {"omega_y", to_std(omega_y)},
          {"alpha_z", mat_std(alpha_z)},
          {"beta_z", mat_std(beta_z)},
          {"gamma_z", to_std(gamma_z)},
          {"alpha_w", mat_std(alpha_w)},
          {"beta_w", mat_std(beta_w)},
          {"a_lo_u", to_std(a_lo_u)},
          {"a_lo_x", to_std(a_lo_x)},
          {"a_hi_u", to_std(a_hi_u)},
          {"a_hi_x", to_std(a_hi_x)},
          {"c_lo", c_lo},
          {"c_hi", c_hi},
          {"var_y", var_y},
          {"var_z", var_z},
          {"var_w", var_w},
          {"u_range", {u_lo, u_hi}},
          {"x_range", {x_lo, x_hi}}};
}

LinearSEMDGP LinearSEMDGP::from_json(const json& j) {
  static const std::vector<std::string> allowed{
      "type",   "name",   "p_u",    "p_w",    "p_z",    "d_x",    "alpha_y", "beta_y", "gamma_y",
      "omega_y", "alpha_z", "beta_z", "gamma_z", "alpha_w", "beta_w", "a_lo_u", "a_lo_x", "a_hi_u",
      "a_hi_x", "c_lo",   "c_hi",   "var_y",  "var_z",  "var_w",  "u_range", "x_range"};
  for (const auto& [k, v] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
      throw ValidationError("unknown key '" + k + "' in linear_sem dgp");
    }
  }
  LinearSEMDGP d;
  try {
    d.name = j.value("name", "");
    d.p_u = j.at("p_u").get<int>();
    d.p_w = j.at("p_w").get<int>();
    d.p_z = j.at("p_z").get<int>();
    d.d_x = j.at("d_x").get<int>();
    d.alpha_y = from_std(j.at("alpha_y").get<std::vector<double>>());
    d.beta_y = from_std(j.at("beta_y").get<std::vector<double>>());
    d.gamma_y = j.at("gamma_y").get<double>();
    d.omega_y = from_std(j.at("omega_y").get<std::vector<double>>());
    d.alpha_z = mat_from(j.at("alpha_z").get<Vec2<double>>(), d.p_u);
    d.beta_z = mat_from(j.at("beta_z").get<Vec2<double>>(), d.d_x);
    d.gamma_z = from_std(j.at("gamma_z").get<std::vector<double>>());
    d.alpha_w = mat_from(j.at("alpha_w").get<Vec2<double>>(), d.p_u);
    d.beta_w = mat_from(j.at("beta_w").get<Vec2<double>>(), d.d_x);
    d.a_lo_u = from_std(j.at("a_lo_u").get<std::vector<double>>());
    d.a_lo_x = from_std(j.at("a_lo_x").get<std::vector<double>>());
    d.a_hi_u = from_std(j.at("a_hi_u").get<std::vector<double>>());
    d.a_hi_x = from_std(j.at("a_hi_x").get<std::vector<double>>());
    d.c_lo = j.value("c_lo", 0.0);
    d.c_hi = j.value("c_hi", 1.0);
    d.var_y = j.value("var_y", 1.0);
    d.var_z = j.value("var_z", 1.0);
    d.var_w = j.value("var_w", 1.0);
    const auto ur = j.value("u_range", std::vector<double>{0.0, 1.0});
    const auto xr = j.value("x_range", std::vector<double>{0.0, 1.0});
    if (ur.size() != 2 || xr.size() != 2) throw ValidationError("u_range and x_range need two entries");
    d.u_lo = ur[0];
    d.u_hi = ur[1];
    d.x_lo = xr[0];
    d.x_hi = xr[1];
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed linear_sem dgp: ") + e.what());
  }
  d.validate();
  return d;
}

ObservationTable generate_linear_sem(const LinearSEMDGP& d, Eigen::Index n, std::uint64_t seed, RowMatrix* u_out) {
  d.validate();
  if (n < 0) throw ConfigError("sample size must be >= 0");
  Rng rng(seed);
  const ActionSupport support = d.support();
  VectorXd y(n), a(n);
  RowMatrix w(n, d.p_w), z(n, d.p_z), x(n, d.d_x);
  if (u_out) u_out->resize(n, d.p_u);
  const double sy = std::sqrt(d.var_y), sz_ = std::sqrt(d.var_z), sw = std::sqrt(d.var_w);
  VectorXd u(d.p_u), xi(d.d_x), wi(d.p_w), zi(d.p_z);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int k = 0; k < d.p_u; ++k) u(k) = rng.uniform(d.u_lo, d.u_hi);
    for (int k = 0; k < d.d_x; ++k) xi(k) = rng.uniform(d.x_lo, d.x_hi);
    wi = d.alpha_w * u + d.beta_w * xi;
    for (int k = 0; k < d.p_w; ++k) wi(k) += sw * rng.normal();
    const double ai = rng.uniform(d.a_lower(u, xi), d.a_upper(u, xi));
    zi = d.alpha_z * u + d.beta_z * xi + d.gamma_z * ai;
    for (int k = 0; k < d.p_z; ++k) zi(k) += sz_ * rng.normal();
    y(i) = d.alpha_y.dot(u) + d.beta_y.dot(xi) + d.gamma_y * ai + d.omega_y.dot(wi) + sy * rng.normal();
    a(i) = std::clamp(ai, support.lo, support.hi);
    w.row(i) = wi.transpose();
    z.row(i) = zi.transpose();
    x.row(i) = xi.transpose();
    if (u_out) u_out->row(i) = u.transpose();
  }
  return ObservationTable(std::move(y), std::move(w), std::move(z), std::move(a), std::move(x), support);
}

namespace {

VectorXd solve_theta(const MatrixXd& a, const VectorXd& target, const VectorXd& null_coef, const char* what) {
  const VectorXd theta0 = linalg::pinv(a, kBridgeTol) * target;
  const double scale = std::max(1.0, target.cwiseAbs().maxCoeff());
  if ((a * theta0 - target).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw RankError(std::string("inconsistent constraint system for ") + what);
  }
  if (null_coef.size() == 0) return theta0;
  const MatrixXd ns = linalg::null_space(a, kBridgeTol);
  if (null_coef.size() != ns.cols()) {
    throw ConfigError(std::string(what) + " has " + std::to_string(ns.cols()) + " free directions, got " +
                      std::to_string(null_coef.size()) + " coefficients");
  }
  return theta0 + ns * null_coef;
}

}  // namespace

std::pair<Eigen::Index, Eigen::Index> linear_sem_free_dims(const LinearSEMDGP& d) {
  return {linalg::null_space(d.alpha_w.transpose(), kBridgeTol).cols(),
          linalg::null_space(d.alpha_z.transpose(), kBridgeTol).cols()};
}

LinearSEMBridges oracle_linear_sem_bridges(const LinearSEMDGP& d, const VectorXd& null_w, const VectorXd& null_z) {
  d.validate();
  LinearSEMBridges out{VectorXd(), VectorXd(), BridgeFit::constant(BridgeKind::kOutcome, 0.0),
                       BridgeFit::constant(BridgeKind::kAction, 0.0)};
  out.theta_w = solve_theta(d.alpha_w.transpose(), d.alpha_y, null_w, "theta_W");
  out.theta_z = solve_theta(d.alpha_z.transpose(), d.a_hi_u - d.a_lo_u, null_z, "theta_Z");
  // Degree-1 polynomial features are ordered (1, proxy..., a, x...).
  VectorXd ch(1 + d.p_w + 1 + d.d_x);
  ch(0) = 0.0;
  ch.segment(1, d.p_w) = out.theta_w + d.omega_y;
  ch(1 + d.p_w) = d.gamma_y;
  ch.tail(d.d_x) = d.beta_y - d.beta_w.transpose() * out.theta_w;
  VectorXd cq(1 + d.p_z + 1 + d.d_x);
  cq(0) = d.c_hi - d.c_lo;
  cq.segment(1, d.p_z) = out.theta_z;
  cq(1 + d.p_z) = -out.theta_z.dot(d.gamma_z);
  cq.tail(d.d_x) = (d.a_hi_x - d.a_lo_x) - d.beta_z.transpose() * out.theta_z;
  FitDiagnostics diag;
  diag.method = "oracle";
  out.h = BridgeFit(BridgeKind::kOutcome, SieveDescriptor{FeatureMap::polynomial(1, d.p_w, d.d_x), ch}, diag);
  out.q = BridgeFit(BridgeKind::kAction, SieveDescriptor{FeatureMap::polynomial(1, d.p_z, d.d_x), cq}, diag);
  return out;
}

double linear_sem_outcome_mean(const LinearSEMDGP& d, const VectorXd& u, double a, const VectorXd& x) {
  return d.alpha_y.dot(u) + d.beta_y.dot(x) + d.gamma_y * a + d.omega_y.dot(d.alpha_w * u + d.beta_w * x);
}

MonteCarloJ oracle_linear_sem_J(const LinearSEMDGP& d, const ContrastSpec& contrast, Eigen::Index n, std::uint64_t seed) {
  d.validate();
  contrast.check_compatible(d.support());
  if (n < 2) throw ConfigError("Monte-Carlo J needs n >= 2");
  Rng rng(seed);
  VectorXd u(d.p_u), x(d.d_x);
  double mean = 0.0, m2 = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int k = 0; k < d.p_u; ++k) u(k) = rng.uniform(d.u_lo, d.u_hi);
    for (int k = 0; k < d.d_x; ++k) x(k) = rng.uniform(d.x_lo, d.x_hi);
    const std::span<const double> xs{x.data(), static_cast<std::size_t>(x.size())};
    double v = 0.0;
    for (std::size_t k = 0; k < contrast.nodes().size(); ++k) {
      const Action& node = contrast.nodes()[k];
      v += contrast.weights()[k] * contrast.pi(node, xs) * linear_sem_outcome_mean(d, u, node.value, x);
    }
    const double delta = v - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (v - mean);
  }
  MonteCarloJ out;
  out.value = mean;
  out.se = std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n));
  out.n = n;
  out.seed = seed;
  return out;
}

// ---------------------------------------------------------------- registry

std::vector<std::string> bundled_discrete_names() {
  return {"unique_binary", "nonunique_policy", "three_action", "identity_proxies"};
}

DiscreteDGP bundled_discrete(const std::string& name) {
  DiscreteDGP d;
  d.name = name;
  if (name == "unique_binary") {
    d.n_u = d.n_w = d.n_z = d.n_a = d.n_x = 2;
    d.p_x = {0.5, 0.5};
    d.p_u = {{0.6, 0.4}, {0.35, 0.65}};
    d.f = {{{0.7, 0.3}, {0.3, 0.7}}, {{0.6, 0.4}, {0.25, 0.75}}};
    d.p_w = {{{0.8, 0.2}, {0.25, 0.75}}, {{0.75, 0.25}, {0.2, 0.8}}};
    d.p_z = {{{{0.8, 0.2}, {0.3, 0.7}}, {{0.75, 0.25}, {0.2, 0.8}}},
             {{{0.7, 0.3}, {0.25, 0.75}}, {{0.8, 0.2}, {0.3, 0.7}}}};
    d.y_mean = {{{0.0, 1.0}, {1.0, 2.5}}, {{0.5, 1.5}, {1.2, 3.0}}};
    d.noise = 0.5;
    d.contrast_type = "ate_binary";
  } else if (name == "nonunique_policy") {
    d.n_u = 2;
    d.n_w = d.n_z = 3;
    d.n_a = 2;
    d.n_x = 1;
    d.p_x = {1.0};
    d.p_u = {{0.45, 0.55}};
    d.f = {{{0.65, 0.35}, {0.3, 0.7}}};
    d.p_w = {{{0.6, 0.3, 0.1}, {0.1, 0.3, 0.6}}};
    d.p_z = {{{{0.55, 0.3, 0.15}, {0.15, 0.3, 0.55}}, {{0.6, 0.25, 0.15}, {0.2, 0.25, 0.55}}}};
    d.y_mean = {{{0.2, 1.4}, {1.0, 2.6}}};
    d.noise = 0.5;
    d.contrast_type = "policy_table";
    d.contrast = {{0.3, 0.7}};
  } else if (name == "three_action") {
    d.n_u = d.n_w = d.n_z = d.n_a = 3;
    d.n_x = 2;
    d.p_x = {0.55, 0.45};
    d.p_u = {{0.3, 0.4, 0.3}, {0.4, 0.35, 0.25}};
    d.f = {{{0.5, 0.3, 0.2}, {0.25, 0.45, 0.3}, {0.2, 0.3, 0.5}},
           {{0.45, 0.35, 0.2}, {0.3, 0.4, 0.3}, {0.15, 0.35, 0.5}}};
    const double dw[2] = {0.7, 0.64};
    d.p_w.resize(2);
    d.p_z.resize(2);
    d.y_mean.resize(2);
    for (int x = 0; x < 2; ++x) {
      for (int u = 0; u < 3; ++u) {
        std::vector<double> row(3, 0.5 * (1.0 - dw[x]));
        row[sz(u)] = dw[x];
        d.p_w[sz(x)].push_back(row);
      }
      d.p_z[sz(x)].resize(3);
      d.y_mean[sz(x)].resize(3);
      for (int a = 0; a < 3; ++a) {
        const double dz = 0.6 + 0.05 * a - 0.04 * x;
        for (int u = 0; u < 3; ++u) {
          std::vector<double> row(3, 0.5 * (1.0 - dz));
          row[sz(u)] = dz;
          d.p_z[sz(x)][sz(a)].push_back(row);
          d.y_mean[sz(x)][sz(a)].push_back(0.5 * a + 0.8 * u + 0.3 * x + 0.1 * a * u);
        }
      }
    }
    d.noise = 0.5;
    d.contrast_type = "policy_table";
    d.contrast = {{0.2, 0.3, 0.5}, {0.5, 0.3, 0.2}};
  } else if (name == "identity_proxies") {
    d.n_u = d.n_w = d.n_z = d.n_a = 2;
    d.n_x = 1;
    d.p_x = {1.0};
    d.p_u = {{0.5, 0.5}};
    d.f = {{{0.6, 0.4}, {0.35, 0.65}}};
    d.p_w = {{{1.0, 0.0}, {0.0, 1.0}}};
    d.p_z = {{{{1.0, 0.0}, {0.0, 1.0}}, {{1.0, 0.0}, {0.0, 1.0}}}};
    d.y_mean = {{{0.0, 1.0}, {1.0, 2.0}}};
    d.noise = 0.3;
    d.contrast_type = "ate_binary";
  } else {
    throw ValidationError("unknown bundled discrete dgp '" + name + "'");
  }
  d.validate();
  return d;
}

std::vector<std::string> bundled_linear_names() { return {"linear_sem_basic", "linear_sem_wide"}; }

LinearSEMDGP bundled_linear_sem(const std::string& name) {
  LinearSEMDGP d;
  d.name = name;
  d.p_u = 1;
  d.d_x = 1;
  d.alpha_y = VectorXd::Constant(1, 1.5);
  d.beta_y = VectorXd::Constant(1, 0.5);
  d.gamma_y = 1.0;
  d.a_lo_u = VectorXd::Constant(1, -0.5);
  d.a_lo_x = VectorXd::Constant(1, 0.2);
  d.a_hi_u = VectorXd::Constant(1, 0.5);
  d.a_hi_x = VectorXd::Constant(1, 0.3);
  d.c_lo = -1.0;
  d.c_hi = 1.0;
  d.var_y = d.var_z = d.var_w = 0.25;
  if (name == "linear_sem_basic") {
    d.p_w = d.p_z = 1;
    d.omega_y = VectorXd::Constant(1, 0.3);
    d.alpha_w = MatrixXd::Constant(1, 1, 1.0);
    d.beta_w = MatrixXd::Constant(1, 1, 0.5);
    d.alpha_z = MatrixXd::Constant(1, 1, 0.8);
    d.beta_z = MatrixXd::Constant(1, 1, -0.3);
    d.gamma_z = VectorXd::Constant(1, 0.4);
  } else if (name == "linear_sem_wide") {
    d.p_w = d.p_z = 2;
    d.omega_y = (VectorXd(2) << 0.3, 0.1).finished();
    d.alpha_w = (MatrixXd(2, 1) << 1.0, 0.6).finished();
    d.beta_w = (MatrixXd(2, 1) << 0.5, -0.2).finished();
    d.alpha_z = (MatrixXd(2, 1) << 0.8, 0.5).finished();
    d.beta_z = (MatrixXd(2, 1) << -0.3, 0.1).finished();
    d.gamma_z = (VectorXd(2) << 0.4, -0.2).finished();
  } else {
    throw ValidationError("unknown bundled linear dgp '" + name + "'");
  }
  d.validate();
  return d;
}

ContrastSpec linear_sem_policy(const LinearSEMDGP& d) {
  ContrastSpec::Density dens;
  dens.kind = ContrastSpec::Density::Kind::kUniform;
  dens.lo = -0.5;
  dens.hi = 0.5;
  return ContrastSpec::gauss_legendre(d.support(), 3, dens);
}

}  // namespace proxbridge
