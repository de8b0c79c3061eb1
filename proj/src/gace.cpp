#include "proxbridge/gace.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>

#include "proxbridge/errors.hpp"
#include "proxbridge/parallel.hpp"
#include "proxbridge/rng.hpp"

namespace proxbridge {

namespace {

void require_rows(const ObservationTable& data) {
  if (data.empty()) throw ValidationError("cannot estimate from an empty table");
}

void require_kind(const BridgeFit& f, BridgeKind kind) {
  if (f.kind() != kind) {
    throw ConfigError(kind == BridgeKind::kOutcome ? "expected an outcome bridge h" : "expected an action bridge q");
  }
}

nlohmann::json diag_json(const FitDiagnostics& d) {
  return {{"method", d.method}, {"strategy", d.strategy}, {"objective", d.objective}, {"lambda", d.lambda},
          {"gamma", d.gamma},   {"rho", d.rho},           {"n", d.n}};
}

}  // namespace

nlohmann::json EstimateReport::to_json() const {
  nlohmann::json folds_j = nlohmann::json::array();
  for (const auto& f : folds) {
    folds_j.push_back({{"fold", f.fold},
                       {"n_train", f.n_train},
                       {"n_eval", f.n_eval},
                       {"j_fold", f.j_fold},
                       {"h", diag_json(f.h)},
                       {"q", diag_json(f.q)}});
  }
  return {{"estimator", estimator}, {"J", J},   {"se", se},
          {"ci", {ci_lo, ci_hi}},   {"alpha", alpha}, {"level", 1.0 - alpha},
          {"n", n},                 {"descriptive", descriptive},
          {"folds", folds_j},       {"config", config}};
}

VectorXd ipw_scores(const BridgeFit& q, const ObservationTable& data, const ContrastSpec& contrast) {
  require_kind(q, BridgeKind::kAction);
  contrast.check_compatible(data.support());
  return pi_rows(contrast, data).cwiseProduct(q.eval_rows(data)).cwiseProduct(data.y());
}

VectorXd reg_scores(const BridgeFit& h, const ObservationTable& data, const ContrastSpec& contrast) {
  require_kind(h, BridgeKind::kOutcome);
  contrast.check_compatible(data.support());
  return t_apply_rows(h, contrast, data);
}

VectorXd dr_scores(const BridgeFit& h, const BridgeFit& q, const ObservationTable& data, const ContrastSpec& contrast) {
  require_kind(q, BridgeKind::kAction);
  const VectorXd th = reg_scores(h, data, contrast);
  const VectorXd pq = pi_rows(contrast, data).cwiseProduct(q.eval_rows(data));
  return pq.cwiseProduct(data.y() - h.eval_rows(data)) + th;
}

double normal_quantile_two_sided(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), 1.0 - alpha / 2.0);
}

EstimateReport report_from_scores(std::string estimator, const VectorXd& scores, double alpha, bool descriptive) {
  if (scores.size() == 0) throw ValidationError("cannot estimate from an empty table");
  const double z = normal_quantile_two_sided(alpha);
  EstimateReport r;
  r.estimator = std::move(estimator);
  r.n = scores.size();
  r.J = scores.mean();
  const double v = (scores.array() - r.J).square().mean();
  r.se = std::sqrt(v / static_cast<double>(r.n));
  r.ci_lo = r.J - z * r.se;
  r.ci_hi = r.J + z * r.se;
  r.alpha = alpha;
  r.descriptive = descriptive;
  return r;
}

EstimateReport estimate_ipw(const BridgeFit& q, const ObservationTable& data, const ContrastSpec& contrast,
                            double alpha) {
  require_rows(data);
  return report_from_scores("ipw", ipw_scores(q, data, contrast), alpha, true);
}

EstimateReport estimate_reg(const BridgeFit& h, const ObservationTable& data, const ContrastSpec& contrast,
                            double alpha) {
  require_rows(data);
  return report_from_scores("reg", reg_scores(h, data, contrast), alpha, true);
}

EstimateReport estimate_dr(const BridgeFit& h, const BridgeFit& q, const ObservationTable& data,
                           const ContrastSpec& contrast, double alpha) {
  require_rows(data);
  return report_from_scores("dr", dr_scores(h, q, data, contrast), alpha, false);
}

double eif_variance(const BridgeFit& h, const BridgeFit& q, double J, const ObservationTable& data,
                    const ContrastSpec& contrast) {
  require_rows(data);
  return (dr_scores(h, q, data, contrast).array() - J).square().mean();
}

// ---------------------------------------------------------------- cross-fit

void NuisanceConfig::validate() const {
  if (family == Family::kSieve) {
    if (!oracle_h) h_sieve.validate();
    if (!oracle_q) q_sieve.validate();
  } else {
    if (!oracle_h) h_rkhs.validate();
    if (!oracle_q) q_rkhs.validate();
  }
  if (oracle_h) require_kind(*oracle_h, BridgeKind::kOutcome);
  if (oracle_q) require_kind(*oracle_q, BridgeKind::kAction);
}

Eigen::Index NuisanceConfig::min_fit_size() const {
  Eigen::Index m = 1;
  if (family == Family::kSieve) {
    if (!oracle_h) m = std::max({m, h_sieve.hypothesis.dim(), h_sieve.critic.dim()});
    if (!oracle_q) m = std::max({m, q_sieve.hypothesis.dim(), q_sieve.critic.dim()});
  } else {
    auto need = [](const RkhsConfig& c) {
      return c.hypothesis == RkhsConfig::Hypothesis::kSieve ? std::max<Eigen::Index>(2, c.features.dim())
                                                            : Eigen::Index{2};
    };
    if (!oracle_h) m = std::max(m, need(h_rkhs));
    if (!oracle_q) m = std::max(m, need(q_rkhs));
  }
  return m;
}

nlohmann::json NuisanceConfig::to_json() const {
  nlohmann::json j;
  auto sieve_j = [](const SieveConfig& c) {
    return nlohmann::json{{"hypothesis", c.hypothesis.to_json()},
                          {"critic", c.critic.to_json()},
                          {"lambda", c.lambda},
                          {"gamma", c.gamma < 0.0 ? nlohmann::json("auto") : nlohmann::json(c.gamma)},
                          {"rho", c.rho}};
  };
  auto rkhs_j = [](const RkhsConfig& c) {
    nlohmann::json r{{"strategy", c.strategy}, {"lambda", c.lambda}, {"gamma", c.gamma}, {"rho", c.rho}};
    if (c.hypothesis == RkhsConfig::Hypothesis::kSieve) {
      r["hypothesis"] = {{"type", "features"}, {"features", c.features.to_json()}};
    } else {
      r["hypothesis"] = {{"type", "kernel"}, {"kernel", c.kernel->to_json()}};
    }
    return r;
  };
  if (family == Family::kSieve) {
    j["family"] = "sieve";
    if (!oracle_h) j["h"] = sieve_j(h_sieve);
    if (!oracle_q) j["q"] = sieve_j(q_sieve);
  } else {
    j["family"] = "rkhs";
    j["kernel_z"] = kernel_z.to_json();
    j["kernel_w"] = kernel_w.to_json();
    if (!oracle_h) j["h"] = rkhs_j(h_rkhs);
    if (!oracle_q) j["q"] = rkhs_j(q_rkhs);
  }
  if (oracle_h) j["h"] = {{"oracle", oracle_h->to_json()}};
  if (oracle_q) j["q"] = {{"oracle", oracle_q->to_json()}};
  return j;
}

FittedNuisances fit_nuisances(const ObservationTable& train, const ContrastSpec& contrast, const NuisanceConfig& cfg) {
  cfg.validate();
  if (cfg.family == NuisanceConfig::Family::kSieve) {
    return {cfg.oracle_h ? *cfg.oracle_h : fit_h_sieve(train, cfg.h_sieve),
            cfg.oracle_q ? *cfg.oracle_q : fit_q_sieve(train, cfg.q_sieve, contrast)};
  }
  if (cfg.oracle_h && cfg.oracle_q) return {*cfg.oracle_h, *cfg.oracle_q};
  const GramBundle g = build_gram_bundle(train, cfg.kernel_z, cfg.kernel_w, cfg.oracle_q ? nullptr : &contrast);
  return {cfg.oracle_h ? *cfg.oracle_h : fit_h_kernel(train, g, cfg.h_rkhs),
          cfg.oracle_q ? *cfg.oracle_q : fit_q_kernel(train, g, cfg.q_rkhs, contrast)};
}

std::vector<std::vector<std::size_t>> crossfit_folds(Eigen::Index n, int folds, std::uint64_t seed) {
  if (folds < 2) throw ConfigError("cross-fitting needs at least 2 folds");
  if (n < folds) throw ConfigError("cannot split " + std::to_string(n) + " rows into " + std::to_string(folds) + " folds");
  Rng rng(seed);
  const std::vector<std::size_t> perm = rng.permutation(static_cast<std::size_t>(n));
  const auto k = static_cast<std::size_t>(folds);
  const std::size_t base = perm.size() / k, extra = perm.size() % k;
  std::vector<std::vector<std::size_t>> out(k);
  std::size_t start = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t len = base + (f < extra ? 1 : 0);
    out[f].assign(perm.begin() + static_cast<std::ptrdiff_t>(start), perm.begin() + static_cast<std::ptrdiff_t>(start + len));
    std::sort(out[f].begin(), out[f].end());
    start += len;
  }
  return out;
}

EstimateReport estimate_dr_crossfit(const ObservationTable& data, const ContrastSpec& contrast,
                                    const NuisanceConfig& cfg, int folds, std::uint64_t seed, double alpha, int jobs) {
  require_rows(data);
  cfg.validate();
  contrast.check_compatible(data.support());
  const auto blocks = crossfit_folds(data.n(), folds, seed);
  const Eigen::Index need = cfg.min_fit_size();
  for (const auto& b : blocks) {
    const auto n_train = data.n() - static_cast<Eigen::Index>(b.size());
    if (n_train < need) {
      throw ConfigError("fold training size " + std::to_string(n_train) + " is below the " + std::to_string(need) +
                        " rows the nuisance feature dimensions require");
    }
  }
  struct FoldOut {
    VectorXd scores;
    FoldDiagnostics diag;
  };
  const auto outs = parallel_map(blocks.size(), jobs, [&](std::size_t f) {
    std::vector<char> in_fold(static_cast<std::size_t>(data.n()), 0);
    for (std::size_t i : blocks[f]) in_fold[i] = 1;
    std::vector<std::size_t> train_idx;
    train_idx.reserve(static_cast<std::size_t>(data.n()) - blocks[f].size());
    for (std::size_t i = 0; i < in_fold.size(); ++i) {
      if (!in_fold[i]) train_idx.push_back(i);
    }
    const ObservationTable train = data.subset(train_idx);
    const ObservationTable eval = data.subset(blocks[f]);
    const FittedNuisances nu = fit_nuisances(train, contrast, cfg);
    FoldOut o;
    o.scores = dr_scores(nu.h, nu.q, eval, contrast);
    o.diag.fold = static_cast<int>(f);
    o.diag.n_train = train.n();
    o.diag.n_eval = eval.n();
    o.diag.j_fold = o.scores.mean();
    o.diag.h = nu.h.diagnostics();
    o.diag.q = nu.q.diagnostics();
    return o;
  });
  VectorXd pooled(data.n());
  Eigen::Index at = 0;
  for (const auto& o : outs) {
    pooled.segment(at, o.scores.size()) = o.scores;
    at += o.scores.size();
  }
  EstimateReport r = report_from_scores("dr-crossfit", pooled, alpha, false);
  for (const auto& o : outs) r.folds.push_back(o.diag);
  r.config = {{"folds", folds}, {"seed", seed}, {"nuisance", cfg.to_json()}, {"contrast", contrast.name()}};
  return r;
}

}  // namespace proxbridge
