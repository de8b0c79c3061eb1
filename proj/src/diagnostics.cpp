#include "proxbridge/diagnostics.hpp"

#include <boost/math/distributions/binomial.hpp>

#include <cmath>
#include <limits>

#include "proxbridge/errors.hpp"
#include "proxbridge/linalg.hpp"
#include "proxbridge/parallel.hpp"
#include "proxbridge/rng.hpp"

namespace proxbridge {

namespace {

std::size_t sz(int i) { return static_cast<std::size_t>(i); }

double zero_scale(double j) { return 1e-12 * std::max(1.0, std::abs(j)); }

}  // namespace

// ---------------------------------------------------------------- replications

void ReplicationStudy::validate() const {
  if (replications < 1) throw ConfigError("replications must be >= 1");
  if (sizes.empty()) throw ConfigError("a study needs at least one sample size");
  for (auto n : sizes) {
    if (n < 1) throw ConfigError("study sample sizes must be positive");
  }
  if (!run) throw ConfigError("study has no replication function");
}

std::vector<ReplicationRecord> run_replications(const ReplicationStudy& study) {
  study.validate();
  const std::size_t reps = static_cast<std::size_t>(study.replications);
  const std::size_t total = study.sizes.size() * reps;
  return parallel_map(total, resolve_jobs(study.jobs), [&](std::size_t k) {
    ReplicationRecord r;
    r.cell = k / reps;
    r.rep = k % reps;
    r.n = study.sizes[r.cell];
    r.seed = replication_seed(study.master_seed, r.cell, r.rep);
    const ReplicationOutput o = study.run(r.n, r.seed);
    r.J = o.report.J;
    r.se = o.report.se;
    r.ci_lo = o.report.ci_lo;
    r.ci_hi = o.report.ci_hi;
    r.h_residual = o.h_residual;
    r.q_residual = o.q_residual;
    return r;
  });
}

nlohmann::json RateReport::to_json() const {
  nlohmann::json c = nlohmann::json::array();
  for (const auto& x : cells) {
    c.push_back({{"n", x.n}, {"replications", x.replications}, {"bias", x.bias}, {"rmse", x.rmse}, {"mean_se", x.mean_se}});
  }
  nlohmann::json j{{"cells", c}, {"slope_defined", slope_defined}, {"inversions", inversions}};
  if (slope_defined) {
    j["slope"] = slope;
    j["slope_se"] = slope_se;
  } else {
    j["slope"] = nullptr;
    j["slope_se"] = nullptr;
  }
  return j;
}

RateReport rate_report_from_records(const std::vector<ReplicationRecord>& records,
                                    const std::vector<Eigen::Index>& sizes, double oracle_J) {
  RateReport out;
  out.records = records;
  out.cells.resize(sizes.size());
  for (std::size_t c = 0; c < sizes.size(); ++c) out.cells[c].n = sizes[c];
  for (const auto& r : records) {
    auto& cell = out.cells.at(r.cell);
    const double e = r.J - oracle_J;
    cell.replications += 1;
    cell.bias += e;
    cell.rmse += e * e;
    cell.mean_se += r.se;
  }
  for (auto& cell : out.cells) {
    if (cell.replications == 0) continue;
    const double k = cell.replications;
    cell.bias /= k;
    cell.rmse = std::sqrt(cell.rmse / k);
    cell.mean_se /= k;
  }
  for (std::size_t c = 1; c < out.cells.size(); ++c) {
    if (out.cells[c].rmse > out.cells[c - 1].rmse) ++out.inversions;
  }
  const std::size_t k = out.cells.size();
  for (const auto& cell : out.cells) {
    if (!(cell.rmse > zero_scale(oracle_J))) out.slope_defined = false;
  }
  if (k < 3) out.slope_defined = false;
  if (!out.slope_defined) return out;
  VectorXd lx(static_cast<Eigen::Index>(k)), ly(static_cast<Eigen::Index>(k));
  for (std::size_t c = 0; c < k; ++c) {
    lx(static_cast<Eigen::Index>(c)) = std::log(static_cast<double>(out.cells[c].n));
    ly(static_cast<Eigen::Index>(c)) = std::log(out.cells[c].rmse);
  }
  const VectorXd dx = lx.array() - lx.mean();
  const VectorXd dy = ly.array() - ly.mean();
  const double sxx = dx.squaredNorm();
  if (!(sxx > 0.0)) {
    out.slope_defined = false;
    return out;
  }
  out.slope = dx.dot(dy) / sxx;
  const double ssr = (dy - out.slope * dx).squaredNorm();
  out.slope_se = std::sqrt(ssr / static_cast<double>(k - 2) / sxx);
  return out;
}

RateReport run_rate_study(const ReplicationStudy& study) {
  if (study.sizes.size() < 3) throw ConfigError("a rate study needs at least 3 sample sizes");
  return rate_report_from_records(run_replications(study), study.sizes, study.oracle_J);
}

nlohmann::json CoverageReport::to_json() const {
  nlohmann::json c = nlohmann::json::array();
  for (const auto& x : cells) {
    c.push_back({{"n", x.n},
                 {"covered", x.covered},
                 {"total", x.total},
                 {"coverage", x.fraction},
                 {"binomial_ci", {x.ci_lo, x.ci_hi}},
                 {"degenerate", x.degenerate}});
  }
  return {{"cells", c}};
}

CoverageReport coverage_report_from_records(const std::vector<ReplicationRecord>& records,
                                            const std::vector<Eigen::Index>& sizes, double oracle_J) {
  CoverageReport out;
  out.records = records;
  out.cells.resize(sizes.size());
  for (std::size_t c = 0; c < sizes.size(); ++c) {
    out.cells[c].n = sizes[c];
    out.cells[c].degenerate = true;
  }
  for (const auto& r : records) {
    auto& cell = out.cells.at(r.cell);
    cell.total += 1;
    if (r.se > 0.0) cell.degenerate = false;
    const bool hit = r.se > 0.0 ? (r.ci_lo <= oracle_J && oracle_J <= r.ci_hi)
                                : std::abs(r.J - oracle_J) <= zero_scale(oracle_J);
    if (hit) cell.covered += 1;
  }
  for (auto& cell : out.cells) {
    if (cell.total == 0) {
      cell.degenerate = false;
      continue;
    }
    cell.fraction = static_cast<double>(cell.covered) / cell.total;
    using boost::math::binomial_distribution;
    cell.ci_lo = binomial_distribution<>::find_lower_bound_on_p(cell.total, cell.covered, 0.025);
    cell.ci_hi = binomial_distribution<>::find_upper_bound_on_p(cell.total, cell.covered, 0.025);
  }
  return out;
}

CoverageReport run_coverage_study(const ReplicationStudy& study) {
  return coverage_report_from_records(run_replications(study), study.sizes, study.oracle_J);
}

// ---------------------------------------------------------------- joint law

namespace {

/// p(x, u, a, z, w) of a discrete model with helpers for the marginals used
/// below.
class JointLaw {
 public:
  explicit JointLaw(const DiscreteDGP& d) : d_(d) {
    d.validate();
    p_.assign(sz(d.n_x * d.n_u * d.n_a * d.n_z * d.n_w), 0.0);
    for (int x = 0; x < d.n_x; ++x)
      for (int u = 0; u < d.n_u; ++u)
        for (int a = 0; a < d.n_a; ++a)
          for (int z = 0; z < d.n_z; ++z)
            for (int w = 0; w < d.n_w; ++w)
              p_[idx(x, u, a, z, w)] = d.p_x[sz(x)] * d.p_u[sz(x)][sz(u)] * d.f[sz(x)][sz(u)][sz(a)] *
                                       d.p_z[sz(x)][sz(a)][sz(u)][sz(z)] * d.p_w[sz(x)][sz(u)][sz(w)];
  }

  double operator()(int x, int u, int a, int z, int w) const { return p_[idx(x, u, a, z, w)]; }

  double xua(int x, int u, int a) const {
    return d_.p_x[sz(x)] * d_.p_u[sz(x)][sz(u)] * d_.f[sz(x)][sz(u)][sz(a)];
  }
  double xaz(int x, int a, int z) const {
    double s = 0.0;
    for (int u = 0; u < d_.n_u; ++u)
      for (int w = 0; w < d_.n_w; ++w) s += (*this)(x, u, a, z, w);
    return s;
  }
  double xaw(int x, int a, int w) const {
    double s = 0.0;
    for (int u = 0; u < d_.n_u; ++u)
      for (int z = 0; z < d_.n_z; ++z) s += (*this)(x, u, a, z, w);
    return s;
  }
  double xazw(int x, int a, int z, int w) const {
    double s = 0.0;
    for (int u = 0; u < d_.n_u; ++u) s += (*this)(x, u, a, z, w);
    return s;
  }
  /// P(W | Z, a, x) as |Z| x |W| (rows of zero-probability z are zero).
  MatrixXd w_given_z(int x, int a) const {
    MatrixXd m = MatrixXd::Zero(d_.n_z, d_.n_w);
    for (int z = 0; z < d_.n_z; ++z) {
      const double pz = xaz(x, a, z);
      if (pz <= 0.0) continue;
      for (int w = 0; w < d_.n_w; ++w) m(z, w) = xazw(x, a, z, w) / pz;
    }
    return m;
  }
  /// P(Z | W, a, x) as |W| x |Z|.
  MatrixXd z_given_w(int x, int a) const {
    MatrixXd m = MatrixXd::Zero(d_.n_w, d_.n_z);
    for (int w = 0; w < d_.n_w; ++w) {
      const double pw = xaw(x, a, w);
      if (pw <= 0.0) continue;
      for (int z = 0; z < d_.n_z; ++z) m(w, z) = xazw(x, a, z, w) / pw;
    }
    return m;
  }

 private:
  std::size_t idx(int x, int u, int a, int z, int w) const {
    return (((sz(x) * sz(d_.n_u) + sz(u)) * sz(d_.n_a) + sz(a)) * sz(d_.n_z) + sz(z)) * sz(d_.n_w) + sz(w);
  }
  const DiscreteDGP& d_;
  std::vector<double> p_;
};

/// Features of every proxy level in cell (x, a): levels x dim.
MatrixXd cell_features(const DiscreteDGP& d, const FeatureMap& phi, int n_levels, int x, int a) {
  MatrixXd out(n_levels, phi.dim());
  const double xv = x;
  for (int p = 0; p < n_levels; ++p) {
    const double pv = p;
    out.row(p) = phi.eval({{&pv, 1}, {d.action_value(a), a}, {&xv, 1}}).transpose();
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------- ill-posedness

nlohmann::json IllPosedness::to_json() const {
  if (infinite) return {{"value", nullptr}, {"infinite", true}};
  return {{"value", value}, {"infinite", false}};
}

IllPosednessForms ill_posedness_forms(const DiscreteDGP& d, const FeatureMap& phi, Tau kind, BridgeKind bridge) {
  const JointLaw law(d);
  const Eigen::Index dim = phi.dim();
  IllPosednessForms f{MatrixXd::Zero(dim, dim), MatrixXd::Zero(dim, dim)};
  auto add = [](MatrixXd& m, double weight, const VectorXd& row) {
    if (weight > 0.0) m.noalias() += weight * row * row.transpose();
  };
  for (int x = 0; x < d.n_x; ++x) {
    for (int a = 0; a < d.n_a; ++a) {
      if (bridge == BridgeKind::kOutcome) {
        const MatrixXd feat = cell_features(d, phi, d.n_w, x, a);
        const MatrixXd pwz = law.w_given_z(x, a);
        for (int z = 0; z < d.n_z; ++z) add(f.den, law.xaz(x, a, z), feat.transpose() * pwz.row(z).transpose());
        if (kind == Tau::kOne) {
          for (int u = 0; u < d.n_u; ++u) {
            VectorXd pw(d.n_w);
            for (int w = 0; w < d.n_w; ++w) pw(w) = d.p_w[sz(x)][sz(u)][sz(w)];
            add(f.num, law.xua(x, u, a), feat.transpose() * pw);
          }
        } else {
          for (int w = 0; w < d.n_w; ++w) add(f.num, law.xaw(x, a, w), feat.row(w).transpose());
        }
      } else {
        const double pi = d.pi(a, x);
        const double pi2 = pi * pi;
        const MatrixXd feat = cell_features(d, phi, d.n_z, x, a);
        const MatrixXd pzw = law.z_given_w(x, a);
        for (int w = 0; w < d.n_w; ++w) add(f.den, pi2 * law.xaw(x, a, w), feat.transpose() * pzw.row(w).transpose());
        if (kind == Tau::kOne) {
          for (int u = 0; u < d.n_u; ++u) {
            VectorXd pz(d.n_z);
            for (int z = 0; z < d.n_z; ++z) pz(z) = d.p_z[sz(x)][sz(a)][sz(u)][sz(z)];
            add(f.num, pi2 * law.xua(x, u, a), feat.transpose() * pz);
          }
        } else {
          for (int z = 0; z < d.n_z; ++z) add(f.num, pi2 * law.xaz(x, a, z), feat.row(z).transpose());
        }
      }
    }
  }
  return f;
}

IllPosedness generalized_sup_ratio(const IllPosednessForms& forms, double rel_tol) {
  const MatrixXd den = 0.5 * (forms.den + forms.den.transpose());
  const MatrixXd num = 0.5 * (forms.num + forms.num.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(den);
  if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition of the projected norm failed");
  const VectorXd& ev = es.eigenvalues();
  const double top = ev.size() > 0 ? std::max(ev.maxCoeff(), 0.0) : 0.0;
  const double tol = rel_tol * top;
  std::vector<Eigen::Index> keep, drop;
  for (Eigen::Index i = 0; i < ev.size(); ++i) (ev(i) > tol && top > 0.0 ? keep : drop).push_back(i);
  const double num_scale = num.size() > 0 ? Eigen::SelfAdjointEigenSolver<MatrixXd>(num, Eigen::EigenvaluesOnly).eigenvalues().cwiseAbs().maxCoeff() : 0.0;
  IllPosedness out;
  if (!drop.empty() && num_scale > 0.0) {
    MatrixXd v0(den.rows(), static_cast<Eigen::Index>(drop.size()));
    for (std::size_t k = 0; k < drop.size(); ++k) v0.col(static_cast<Eigen::Index>(k)) = es.eigenvectors().col(drop[k]);
    const double leak = (v0.transpose() * num * v0).trace();
    if (leak > std::sqrt(rel_tol) * num_scale) {
      out.infinite = true;
      out.value = std::numeric_limits<double>::infinity();
      return out;
    }
  }
  if (keep.empty()) return out;
  MatrixXd vs(den.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) {
    vs.col(static_cast<Eigen::Index>(k)) = es.eigenvectors().col(keep[k]) / std::sqrt(ev(keep[k]));
  }
  const MatrixXd red = vs.transpose() * num * vs;
  const double lmax = Eigen::SelfAdjointEigenSolver<MatrixXd>(0.5 * (red + red.transpose()), Eigen::EigenvaluesOnly)
                          .eigenvalues()
                          .maxCoeff();
  out.value = std::sqrt(std::max(lmax, 0.0));
  return out;
}

IllPosedness ill_posedness_discrete(const DiscreteDGP& dgp, const FeatureMap& hypothesis, Tau kind,
                                    BridgeKind bridge) {
  return generalized_sup_ratio(ill_posedness_forms(dgp, hypothesis, kind, bridge));
}

// ---------------------------------------------------------------- identities

nlohmann::json IdentityReport::to_json() const {
  return {{"violations", violations}, {"max_violation", max_violation}, {"pass", pass}};
}

MatrixXd observed_null_h(const DiscreteDGP& d, int x, int a) {
  return linalg::null_space(JointLaw(d).w_given_z(x, a));
}

MatrixXd observed_null_q(const DiscreteDGP& d, int x, int a) {
  if (d.pi(a, x) == 0.0) return MatrixXd::Identity(d.n_z, d.n_z);
  return linalg::null_space(JointLaw(d).z_given_w(x, a));
}

namespace {

CellFn table_fn(const Vec2<VectorXd>& v) {
  return [v](int p, int a, int x) { return v[sz(x)][sz(a)](p); };
}

Vec2<VectorXd> random_cells(Rng& rng, const DiscreteDGP& d, int levels) {
  Vec2<VectorXd> out(sz(d.n_x), std::vector<VectorXd>(sz(d.n_a)));
  for (auto& row : out) {
    for (auto& v : row) {
      v.resize(levels);
      for (int i = 0; i < levels; ++i) v(i) = rng.normal();
    }
  }
  return out;
}

/// Adds a random combination of the columns of `null[x][a]`.
Vec2<VectorXd> perturb(Rng& rng, const Vec2<VectorXd>& base, const std::function<MatrixXd(int, int)>& null) {
  Vec2<VectorXd> out = base;
  for (std::size_t x = 0; x < out.size(); ++x) {
    for (std::size_t a = 0; a < out[x].size(); ++a) {
      const MatrixXd nb = null(static_cast<int>(x), static_cast<int>(a));
      for (Eigen::Index c = 0; c < nb.cols(); ++c) out[x][a] += rng.normal() * nb.col(c);
    }
  }
  return out;
}

double max_abs(const Vec3<double>& m) {
  double s = 0.0;
  for (const auto& a : m)
    for (const auto& b : a)
      for (double v : b) s = std::max(s, std::abs(v));
  return s;
}

}  // namespace

IdentityReport check_identification_identities(const DiscreteDGP& d, int trials, std::uint64_t seed,
                                               double tolerance) {
  if (trials < 0) throw ConfigError("trials must be >= 0");
  const JointLaw law(d);
  const double J = oracle_discrete_J(d);
  const DiscreteBridgeSets sets = oracle_discrete_bridge_sets(d);
  Rng rng(seed);
  IdentityReport rep;
  auto record = [&rep](const std::string& name, double v) {
    double& slot = rep.violations[name];
    slot = std::max(slot, std::abs(v));
  };

  const UScoreMeans us = population_u_scores(d);
  record("u_level_ipw", us.ipw - J);
  record("u_level_reg", us.reg - J);
  record("u_level_dr", us.dr - J);
  const OracleJ both = oracle_discrete_j_both(d);
  record("u_level_ipw", both.ipw - J);

  // Members of H_0 (oracle plus U-level null directions) and of the observed
  // sets (plus observed-level null directions).
  auto h_members = [&](bool observed) {
    Vec2<VectorXd> h = perturb(rng, sets.h, [&](int x, int a) { return sets.h_null[sz(x)][sz(a)]; });
    if (observed) h = perturb(rng, h, [&](int x, int a) { return observed_null_h(d, x, a); });
    return h;
  };
  auto q_members = [&](bool observed) {
    Vec2<VectorXd> q = perturb(rng, sets.q, [&](int x, int a) { return sets.q_null[sz(x)][sz(a)]; });
    if (observed) q = perturb(rng, q, [&](int x, int a) { return observed_null_q(d, x, a); });
    return q;
  };

  record("u_bridge_h", sets.h_u_residual);
  record("u_bridge_q", sets.q_u_residual);
  const int rounds = std::max(trials, 1);
  for (int t = 0; t < rounds; ++t) {
    const bool observed = t % 2 == 1;
    const Vec2<VectorXd> h0 = t == 0 ? sets.h : h_members(observed);
    const Vec2<VectorXd> q0 = t == 0 ? sets.q : q_members(observed);
    const CellFn h0f = table_fn(h0), q0f = table_fn(q0);
    record("observed_bridge_h", max_abs(conditional_moment_h(d, h0f)));
    record("observed_bridge_q", max_abs(conditional_moment_q(d, q0f)));
    record("identification_reg", population_reg(d, h0f) - J);
    record("identification_ipw", population_ipw(d, q0f) - J);
    record("identification_dr", population_dr(d, h0f, q0f) - J);

    // Bias identities for arbitrary h and q.
    const CellFn hr = table_fn(random_cells(rng, d, d.n_w));
    const CellFn qr = table_fn(random_cells(rng, d, d.n_z));
    const Vec3<double> mh = conditional_moment_h(d, hr);  // E[Y - h | Z, A, X]
    const Vec3<double> mq = conditional_moment_q(d, qr);  // E[pi (q - 1/f) | W, A, X]
    double reg_rhs = 0.0, ipw_rhs = 0.0;
    for (int x = 0; x < d.n_x; ++x) {
      for (int a = 0; a < d.n_a; ++a) {
        for (int z = 0; z < d.n_z; ++z) {
          reg_rhs -= law.xaz(x, a, z) * d.pi(a, x) * q0f(z, a, x) * mh[sz(x)][sz(a)][sz(z)];
        }
        for (int w = 0; w < d.n_w; ++w) ipw_rhs += law.xaw(x, a, w) * h0f(w, a, x) * mq[sz(x)][sz(a)][sz(w)];
      }
    }
    record("reg_bias_identity", (population_reg(d, hr) - J) - reg_rhs);
    record("ipw_bias_identity", (population_ipw(d, qr) - J) - ipw_rhs);
    // Double robustness with one side arbitrary.
    record("dr_oracle_h", population_dr(d, h0f, qr) - J);
    record("dr_oracle_q", population_dr(d, hr, q0f) - J);
  }
  for (const auto& [k, v] : rep.violations) rep.max_violation = std::max(rep.max_violation, v);
  rep.pass = rep.max_violation <= tolerance;
  return rep;
}

// ---------------------------------------------------------------- projected MSE

nlohmann::json ProjectedMseCurve::to_json() const {
  nlohmann::json c = nlohmann::json::array();
  for (const auto& x : cells) {
    c.push_back({{"n", x.n},
                 {"replications", x.replications},
                 {"h_residual", x.h_residual},
                 {"q_residual", x.q_residual},
                 {"reg_abs_error", x.reg_abs_error},
                 {"ipw_abs_error", x.ipw_abs_error},
                 {"dr_abs_error", x.dr_abs_error}});
  }
  return {{"cells", c}, {"h_decreasing", h_decreasing}, {"q_decreasing", q_decreasing}};
}

ProjectedMseCurve projected_mse_curve(const DiscreteDGP& dgp, const NuisanceConfig& cfg,
                                      const std::vector<Eigen::Index>& sizes, int replications, std::uint64_t seed,
                                      int jobs) {
  if (replications < 1) throw ConfigError("replications must be >= 1");
  const ContrastSpec contrast = dgp.contrast_spec();
  const double J = oracle_discrete_J(dgp);
  const auto reps = static_cast<std::size_t>(replications);
  struct One {
    double h, q, reg, ipw, dr;
  };
  const auto runs = parallel_map(sizes.size() * reps, resolve_jobs(jobs), [&](std::size_t k) {
    const std::size_t cell = k / reps, rep = k % reps;
    const ObservationTable data = generate_discrete(dgp, sizes[cell], replication_seed(seed, cell, rep));
    const FittedNuisances nu = fit_nuisances(data, contrast, cfg);
    return One{oracle_conditional_residual(dgp, nu.h), oracle_conditional_residual(dgp, nu.q),
               std::abs(estimate_reg(nu.h, data, contrast).J - J), std::abs(estimate_ipw(nu.q, data, contrast).J - J),
               std::abs(estimate_dr(nu.h, nu.q, data, contrast).J - J)};
  });
  ProjectedMseCurve out;
  out.cells.resize(sizes.size());
  for (std::size_t k = 0; k < runs.size(); ++k) {
    auto& c = out.cells[k / reps];
    c.h_residual += runs[k].h;
    c.q_residual += runs[k].q;
    c.reg_abs_error += runs[k].reg;
    c.ipw_abs_error += runs[k].ipw;
    c.dr_abs_error += runs[k].dr;
  }
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    auto& c = out.cells[i];
    c.n = sizes[i];
    c.replications = replications;
    const double r = replications;
    c.h_residual /= r;
    c.q_residual /= r;
    c.reg_abs_error /= r;
    c.ipw_abs_error /= r;
    c.dr_abs_error /= r;
  }
  out.h_decreasing = out.q_decreasing = sizes.size() >= 2;
  for (std::size_t i = 1; i < out.cells.size(); ++i) {
    if (!(out.cells[i].h_residual < out.cells[i - 1].h_residual)) out.h_decreasing = false;
    if (!(out.cells[i].q_residual < out.cells[i - 1].q_residual)) out.q_decreasing = false;
  }
  return out;
}

}  // namespace proxbridge
