#include "proxbridge/config.hpp"

#include <cmath>
#include <limits>

#include "proxbridge/errors.hpp"
#include "proxbridge/io.hpp"
#include "proxbridge/rng.hpp"

namespace proxbridge::config {

using nlohmann::json;

// ---------------------------------------------------------------- models

DgpRef parse_dgp(const json& j) {
  DgpRef r;
  if (j.is_string()) {
    r.name = j.get<std::string>();
    for (const auto& n : bundled_discrete_names()) {
      if (n == r.name) r.discrete = bundled_discrete(n);
    }
    for (const auto& n : bundled_linear_names()) {
      if (n == r.name) r.linear = bundled_linear_sem(n);
    }
    if (!r.discrete && !r.linear) {
      std::string all;
      for (const auto& n : bundled_discrete_names()) all += (all.empty() ? "" : ", ") + n;
      for (const auto& n : bundled_linear_names()) all += ", " + n;
      throw ConfigError("unknown bundled model '" + r.name + "' (available: " + all + ")");
    }
    return r;
  }
  io::check_keys(j, {"discrete", "linear"}, "dgp");
  if (j.contains("discrete") == j.contains("linear")) {
    throw ConfigError("dgp must be a bundled name or an object with exactly one of 'discrete', 'linear'");
  }
  if (j.contains("discrete")) {
    r.discrete = DiscreteDGP::from_json(j.at("discrete"));
    r.name = r.discrete->name.empty() ? "custom_discrete" : r.discrete->name;
  } else {
    r.linear = LinearSEMDGP::from_json(j.at("linear"));
    r.name = r.linear->name.empty() ? "custom_linear" : r.linear->name;
  }
  return r;
}

ContrastSpec DgpRef::contrast() const { return discrete ? discrete->contrast_spec() : linear_sem_policy(*linear); }

ObservationTable DgpRef::sample(Eigen::Index n, std::uint64_t seed) const {
  return discrete ? generate_discrete(*discrete, n, seed) : generate_linear_sem(*linear, n, seed);
}

double DgpRef::oracle_J() const {
  if (discrete) return oracle_discrete_J(*discrete);
  return oracle_linear_sem_J(*linear, contrast(), 2'000'000, derive_seed(0x6f7261636c65ULL, 1)).value;
}

FittedNuisances DgpRef::oracle_bridges() const {
  if (discrete) {
    const DiscreteBridgeSets s = oracle_discrete_bridge_sets(*discrete);
    return {bridge_from_cells(BridgeKind::kOutcome, *discrete, s.h), bridge_from_cells(BridgeKind::kAction, *discrete, s.q)};
  }
  LinearSEMBridges b = oracle_linear_sem_bridges(*linear);
  return {std::move(b.h), std::move(b.q)};
}

json DgpRef::to_json() const {
  if (discrete) return {{"discrete", discrete->to_json()}};
  return {{"linear", linear->to_json()}};
}

// ---------------------------------------------------------------- estimators

namespace {

const char* const kTypes[] = {"ipw", "reg", "dr", "dr-crossfit"};

void validate_feature(const json& f, const std::string& where) {
  if (!f.is_object() || !f.contains("type")) throw ConfigError(where + " must be a feature map object with a 'type'");
  const std::string t = f.at("type").get<std::string>();
  if (t == "saturated_from_data" || t == "saturated_dgp") {
    io::check_keys(f, {"type"}, where);
    return;
  }
  try {
    (void)FeatureMap::from_json(f);
  } catch (const Error& e) {
    throw ConfigError(where + ": " + e.what());
  } catch (const json::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

FeatureMap resolve_feature(const json& f, ProxyRole role, const ObservationTable& data, const DgpRef* dgp) {
  const std::string t = f.at("type").get<std::string>();
  if (t == "saturated_from_data") return FeatureMap::saturated_from_data(data, role);
  if (t == "saturated_dgp") {
    if (!dgp || !dgp->discrete) throw ConfigError("feature type 'saturated_dgp' needs a discrete synthetic model");
    return saturated_map(*dgp->discrete, role);
  }
  return FeatureMap::from_json(f);
}

void validate_sieve_side(const json& s, const std::string& where) {
  io::check_keys(s, {"hypothesis", "critic", "strategy", "lambda", "gamma", "rho"}, where);
  validate_feature(io::require(s, "hypothesis", where), where + ".hypothesis");
  validate_feature(io::require(s, "critic", where), where + ".critic");
  const int strategy = s.value("strategy", 2);
  if (strategy != 1 && strategy != 2) throw ConfigError(where + ".strategy must be 1 or 2");
  if (strategy == 1 && s.value("lambda", 0.0) != 0.0) throw ConfigError(where + ": strategy 1 has no stabilizer; drop lambda");
  if (strategy == 2 && s.contains("lambda") && !(s.at("lambda").get<double>() > 0.0)) {
    throw ConfigError(where + ": strategy 2 needs lambda > 0");
  }
  if (s.contains("gamma") && !(s.at("gamma").get<double>() > 0.0)) throw ConfigError(where + ".gamma must be > 0");
  if (s.value("rho", 0.0) < 0.0) throw ConfigError(where + ".rho must be >= 0");
}

SieveConfig sieve_scalars(const json& s) {
  SieveConfig c;
  const int strategy = s.value("strategy", 2);
  c.lambda = strategy == 1 ? 0.0 : s.value("lambda", 1.0);
  c.gamma = s.value("gamma", -1.0);
  c.rho = s.value("rho", 0.0);
  return c;
}

void validate_kernel(const json& k, const std::string& where) {
  try {
    (void)KernelSpec::from_json(k);
  } catch (const Error& e) {
    throw ConfigError(where + ": " + e.what());
  } catch (const json::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

void validate_rkhs_side(const json& s, const std::string& where) {
  io::check_keys(s, {"strategy", "lambda", "gamma", "rho", "hypothesis"}, where);
  const json& h = io::require(s, "hypothesis", where);
  io::check_keys(h, {"type", "features", "kernel"}, where + ".hypothesis");
  const std::string t = io::require(h, "type", where + ".hypothesis").get<std::string>();
  RkhsConfig c;
  c.strategy = s.value("strategy", 1);
  c.lambda = s.value("lambda", 0.0);
  c.gamma = s.value("gamma", 0.0);
  c.rho = s.value("rho", 0.0);
  if (t == "features") {
    validate_feature(io::require(h, "features", where + ".hypothesis"), where + ".hypothesis.features");
  } else if (t == "kernel") {
    validate_kernel(io::require(h, "kernel", where + ".hypothesis"), where + ".hypothesis.kernel");
    c.hypothesis = RkhsConfig::Hypothesis::kKernel;
    c.kernel = KernelSpec::default_for(true);
  } else {
    throw ConfigError(where + ".hypothesis.type must be 'features' or 'kernel'");
  }
  c.validate();
}

RkhsConfig build_rkhs_side(const json& s, ProxyRole role, const ObservationTable& data, const DgpRef* dgp) {
  RkhsConfig c;
  c.strategy = s.value("strategy", 1);
  c.lambda = s.value("lambda", 0.0);
  c.gamma = s.value("gamma", 0.0);
  c.rho = s.value("rho", 0.0);
  const json& h = s.at("hypothesis");
  if (h.at("type") == "features") {
    c.features = resolve_feature(h.at("features"), role, data, dgp);
  } else {
    c.hypothesis = RkhsConfig::Hypothesis::kKernel;
    c.kernel = KernelSpec::from_json(h.at("kernel"));
  }
  return c;
}

SieveConfig build_sieve_side(const json& s, ProxyRole hyp_role, const ObservationTable& data, const DgpRef* dgp) {
  const ProxyRole critic_role = hyp_role == ProxyRole::kW ? ProxyRole::kZ : ProxyRole::kW;
  SieveConfig c = sieve_scalars(s);
  c.hypothesis = resolve_feature(s.at("hypothesis"), hyp_role, data, dgp);
  c.critic = resolve_feature(s.at("critic"), critic_role, data, dgp);
  return c;
}

}  // namespace

void validate_estimator(const json& est) {
  io::check_keys(est, {"type", "family", "oracle", "h", "q", "kernel_z", "kernel_w"}, "estimator");
  const std::string type = io::require(est, "type", "estimator").get<std::string>();
  bool known = false;
  for (const char* t : kTypes) known = known || type == t;
  if (!known) throw ConfigError("estimator.type must be one of ipw, reg, dr, dr-crossfit; got '" + type + "'");
  const bool oracle = est.value("oracle", false);
  if (oracle) return;
  const std::string family = est.value("family", "sieve");
  const bool need_h = type != "ipw", need_q = type != "reg";
  if (family == "sieve") {
    if (est.contains("kernel_z") || est.contains("kernel_w")) throw ConfigError("estimator: kernels only apply to family 'rkhs'");
    if (need_h) validate_sieve_side(io::require(est, "h", "estimator"), "estimator.h");
    if (need_q) validate_sieve_side(io::require(est, "q", "estimator"), "estimator.q");
  } else if (family == "rkhs") {
    if (est.contains("kernel_z")) validate_kernel(est.at("kernel_z"), "estimator.kernel_z");
    if (est.contains("kernel_w")) validate_kernel(est.at("kernel_w"), "estimator.kernel_w");
    if (need_h) validate_rkhs_side(io::require(est, "h", "estimator"), "estimator.h");
    if (need_q) validate_rkhs_side(io::require(est, "q", "estimator"), "estimator.q");
  } else {
    throw ConfigError("estimator.family must be 'sieve' or 'rkhs'; got '" + family + "'");
  }
}

NuisanceConfig build_nuisance(const json& est, const ObservationTable& data, const DgpRef* dgp) {
  validate_estimator(est);
  const std::string type = est.at("type").get<std::string>();
  NuisanceConfig cfg;
  if (est.value("oracle", false)) {
    if (!dgp) throw ConfigError("estimator.oracle needs synthetic data with a known model");
    FittedNuisances o = dgp->oracle_bridges();
    cfg.oracle_h = std::move(o.h);
    cfg.oracle_q = std::move(o.q);
    return cfg;
  }
  const bool discrete = data.support().is_discrete();
  // Sides an estimator never reads are pinned to constants.
  if (type == "ipw") cfg.oracle_h = BridgeFit::constant(BridgeKind::kOutcome, 0.0);
  if (type == "reg") cfg.oracle_q = BridgeFit::constant(BridgeKind::kAction, 0.0);
  if (est.value("family", "sieve") == "sieve") {
    cfg.family = NuisanceConfig::Family::kSieve;
    if (!cfg.oracle_h) cfg.h_sieve = build_sieve_side(est.at("h"), ProxyRole::kW, data, dgp);
    if (!cfg.oracle_q) cfg.q_sieve = build_sieve_side(est.at("q"), ProxyRole::kZ, data, dgp);
  } else {
    cfg.family = NuisanceConfig::Family::kRkhs;
    cfg.kernel_z = est.contains("kernel_z") ? KernelSpec::from_json(est.at("kernel_z")) : KernelSpec::default_for(discrete);
    cfg.kernel_w = est.contains("kernel_w") ? KernelSpec::from_json(est.at("kernel_w")) : KernelSpec::default_for(discrete);
    if (!cfg.oracle_h) cfg.h_rkhs = build_rkhs_side(est.at("h"), ProxyRole::kW, data, dgp);
    if (!cfg.oracle_q) cfg.q_rkhs = build_rkhs_side(est.at("q"), ProxyRole::kZ, data, dgp);
  }
  return cfg;
}

namespace {

struct RunResult {
  EstimateReport report;
  std::optional<FittedNuisances> nuisances;
};

RunResult run_detailed(const json& est, const ObservationTable& data, const ContrastSpec& contrast,
                       const RunSettings& s, const DgpRef* dgp) {
  const NuisanceConfig cfg = build_nuisance(est, data, dgp);
  const std::string type = est.at("type").get<std::string>();
  RunResult r;
  if (type == "dr-crossfit") {
    r.report = estimate_dr_crossfit(data, contrast, cfg, s.folds, s.seed, s.alpha, s.jobs);
  } else {
    FittedNuisances nu = fit_nuisances(data, contrast, cfg);
    if (type == "ipw") {
      r.report = estimate_ipw(nu.q, data, contrast, s.alpha);
    } else if (type == "reg") {
      r.report = estimate_reg(nu.h, data, contrast, s.alpha);
    } else {
      r.report = estimate_dr(nu.h, nu.q, data, contrast, s.alpha);
    }
    r.report.folds.push_back({0, data.n(), data.n(), r.report.J, nu.h.diagnostics(), nu.q.diagnostics()});
    r.nuisances = std::move(nu);
  }
  r.report.config = {{"estimator", est}, {"nuisance", cfg.to_json()}, {"contrast", contrast.name()}};
  if (type == "dr-crossfit") {
    r.report.config["folds"] = s.folds;
    r.report.config["seed"] = s.seed;
  }
  return r;
}

}  // namespace

EstimateReport run_estimator(const json& est, const ObservationTable& data, const ContrastSpec& contrast,
                             const RunSettings& settings, const DgpRef* dgp) {
  return run_detailed(est, data, contrast, settings, dgp).report;
}

ReplicationFn replication_fn(const DgpRef& dgp, const json& est, const RunSettings& settings) {
  validate_estimator(est);
  const ContrastSpec contrast = dgp.contrast();
  return [dgp, est, settings, contrast](Eigen::Index n, std::uint64_t seed) {
    const ObservationTable data = dgp.sample(n, seed);
    RunSettings s = settings;
    s.seed = derive_seed(seed, 0x666f6c64ULL);
    s.jobs = 1;
    RunResult r = run_detailed(est, data, contrast, s, &dgp);
    ReplicationOutput o;
    o.report = std::move(r.report);
    o.h_residual = o.q_residual = std::numeric_limits<double>::quiet_NaN();
    if (dgp.discrete && r.nuisances) {
      o.h_residual = oracle_conditional_residual(*dgp.discrete, r.nuisances->h);
      o.q_residual = oracle_conditional_residual(*dgp.discrete, r.nuisances->q);
    }
    return o;
  };
}

// ---------------------------------------------------------------- top-level configs

ConfigKind detect_kind(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  if (j.contains("study")) return ConfigKind::kStudy;
  if (j.contains("data")) return ConfigKind::kExperiment;
  return ConfigKind::kSynthesize;
}

namespace {

void validate_settings(const json& j, const std::string& where) {
  if (j.contains("folds") && j.at("folds").get<int>() < 2) throw ConfigError(where + ".folds must be >= 2");
  if (j.contains("alpha")) {
    const double a = j.at("alpha").get<double>();
    if (!(a > 0.0 && a < 1.0)) throw ConfigError(where + ".alpha must lie in (0, 1)");
  }
  if (j.contains("jobs") && j.at("jobs").get<int>() < 1) throw ConfigError(where + ".jobs must be >= 1");
  if (j.contains("seed")) (void)j.at("seed").get<std::uint64_t>();
}

}  // namespace

void validate_experiment(const json& j) {
  io::check_keys(j, {"data", "contrast", "estimator", "folds", "seed", "alpha", "jobs", "output"}, "config");
  const json& data = io::require(j, "data", "config");
  io::check_keys(data, {"csv", "sidecar", "synthetic"}, "config.data");
  if (data.contains("synthetic") == data.contains("csv")) {
    throw ConfigError("config.data needs exactly one of 'csv' or 'synthetic'");
  }
  if (data.contains("synthetic")) {
    const json& s = data.at("synthetic");
    io::check_keys(s, {"dgp", "n", "seed"}, "config.data.synthetic");
    (void)parse_dgp(io::require(s, "dgp", "config.data.synthetic"));
    if (io::require(s, "n", "config.data.synthetic").get<long long>() < 1) {
      throw ConfigError("config.data.synthetic.n must be >= 1");
    }
  } else if (!data.contains("sidecar") && data.at("csv").get<std::string>().empty()) {
    throw ConfigError("config.data.csv must be a path");
  }
  if (!data.contains("synthetic") && !j.contains("contrast")) {
    throw ConfigError("config: 'contrast' is required for CSV data");
  }
  if (j.contains("contrast")) {
    const std::string t = io::require(j.at("contrast"), "type", "config.contrast").get<std::string>();
    if (t != "ate_binary" && t != "policy_table" && t != "quadrature") {
      throw ConfigError("config.contrast.type must be ate_binary, policy_table or quadrature");
    }
  }
  validate_estimator(io::require(j, "estimator", "config"));
  validate_settings(j, "config");
}

void validate_study(const json& j) {
  io::check_keys(j, {"study", "dgp", "dgps", "estimator", "sizes", "replications", "seed", "folds", "alpha", "jobs",
                     "trials", "hypothesis", "bridge", "output_dir"},
                 "study");
  const std::string kind = j.at("study").get<std::string>();
  if (kind == "identities") {
    if (j.contains("dgps")) {
      for (const auto& d : j.at("dgps")) (void)parse_dgp(d);
    } else {
      (void)parse_dgp(io::require(j, "dgp", "study"));
    }
    if (j.value("trials", 1) < 0) throw ConfigError("study.trials must be >= 0");
    return;
  }
  const DgpRef dgp = parse_dgp(io::require(j, "dgp", "study"));
  if (kind == "ill_posedness") {
    if (!dgp.discrete) throw ConfigError("ill_posedness studies need a discrete model");
    if (j.contains("hypothesis")) validate_feature(j.at("hypothesis"), "study.hypothesis");
    const std::string b = j.value("bridge", "h");
    if (b != "h" && b != "q") throw ConfigError("study.bridge must be 'h' or 'q'");
    return;
  }
  if (kind != "rate" && kind != "coverage" && kind != "projected_mse") {
    throw ConfigError("study.study must be one of rate, coverage, projected_mse, identities, ill_posedness");
  }
  const auto sizes = io::require(j, "sizes", "study").get<std::vector<long long>>();
  if (sizes.empty()) throw ConfigError("study.sizes must not be empty");
  for (auto n : sizes) {
    if (n < 1) throw ConfigError("study.sizes must be positive");
  }
  if (kind == "rate" && sizes.size() < 3) throw ConfigError("a rate study needs at least 3 sizes");
  if (j.value("replications", 1) < 1) throw ConfigError("study.replications must be >= 1");
  validate_estimator(io::require(j, "estimator", "study"));
  if (kind == "projected_mse") {
    if (!dgp.discrete) throw ConfigError("projected_mse studies need a discrete model");
    if (j.at("estimator").at("type") == "dr-crossfit") {
      throw ConfigError("projected_mse fits full-sample bridges; use estimator.type ipw, reg or dr");
    }
  }
  validate_settings(j, "study");
}

void validate_synthesize(const json& j) {
  io::check_keys(j, {"dgp", "n", "seed", "output"}, "config");
  (void)parse_dgp(io::require(j, "dgp", "config"));
  if (io::require(j, "n", "config").get<long long>() < 0) throw ConfigError("config.n must be >= 0");
  (void)io::require(j, "output", "config").get<std::string>();
  validate_settings(j, "config");
}

void validate_any(const json& j) {
  try {
    switch (detect_kind(j)) {
      case ConfigKind::kExperiment:
        return validate_experiment(j);
      case ConfigKind::kStudy:
        return validate_study(j);
      case ConfigKind::kSynthesize:
        return validate_synthesize(j);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config has a value of the wrong type: ") + e.what());
  }
}

}  // namespace proxbridge::config
