// Command-line entry point: synthesize, estimate, study, validate-config.
#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>

#include "proxbridge/config.hpp"
#include "proxbridge/diagnostics.hpp"
#include "proxbridge/errors.hpp"
#include "proxbridge/io.hpp"
#include "proxbridge/parallel.hpp"
#include "proxbridge/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace proxbridge;

namespace {

json run_info(const json& cfg, std::uint64_t seed) {
  return {{"version", PROXBRIDGE_VERSION}, {"config_hash", io::config_hash(cfg)}, {"seed", seed}};
}

std::string num(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string brief(double v) {
  if (!std::isfinite(v)) return num(v);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// ---------------------------------------------------------------- synthesize

struct SynthArgs {
  std::string config, dgp, out;
  long long n = -1;
  std::optional<std::uint64_t> seed;
};

int cmd_synthesize(const SynthArgs& a) {
  json cfg = a.config.empty() ? json::object() : io::read_json(a.config);
  if (!a.dgp.empty()) cfg["dgp"] = a.dgp;
  if (a.n >= 0) cfg["n"] = a.n;
  if (a.seed) cfg["seed"] = *a.seed;
  if (!a.out.empty()) cfg["output"] = a.out;
  if (!cfg.contains("seed")) cfg["seed"] = 0;
  config::validate_synthesize(cfg);
  const config::DgpRef dgp = config::parse_dgp(cfg.at("dgp"));
  const auto seed = cfg.at("seed").get<std::uint64_t>();
  const fs::path csv = cfg.at("output").get<std::string>();
  const ObservationTable t = dgp.sample(cfg.at("n").get<Eigen::Index>(), seed);
  const fs::path sidecar = io::default_sidecar(csv);
  io::write_table(t, csv, sidecar);
  fs::path manifest = csv;
  manifest += ".manifest.json";
  json m = run_info(cfg, seed);
  m["dgp"] = dgp.name;
  m["dgp_hash"] = io::config_hash(dgp.to_json());
  m["n"] = t.n();
  m["data_hash"] = io::hex64(t.hash());
  m["files"] = {csv.string(), sidecar.string()};
  m["config"] = cfg;
  io::write_json(manifest, m);
  spdlog::info("wrote {} rows to {}", t.n(), csv.string());
  return 0;
}

// ---------------------------------------------------------------- estimate

struct EstimateArgs {
  std::string config, data, estimator, out;
  int folds = 0;
  std::optional<std::uint64_t> seed;
  bool summary = false;
  int jobs = 1;
};

int cmd_estimate(const EstimateArgs& a) {
  json cfg = io::read_json(a.config);
  if (!a.data.empty()) cfg["data"] = {{"csv", a.data}};
  if (!a.estimator.empty()) {
    if (!cfg.contains("estimator")) cfg["estimator"] = json::object();
    cfg["estimator"]["type"] = a.estimator;
  }
  if (a.folds > 0) cfg["folds"] = a.folds;
  if (a.seed) cfg["seed"] = *a.seed;
  if (!a.out.empty()) cfg["output"] = a.out;
  config::validate_experiment(cfg);
  if (!cfg.contains("output")) throw ConfigError("no output path: pass --out or set 'output'");

  config::RunSettings s;
  s.folds = cfg.value("folds", 2);
  s.seed = cfg.value("seed", std::uint64_t{0});
  s.alpha = cfg.value("alpha", 0.05);
  s.jobs = resolve_jobs(cfg.value("jobs", a.jobs));

  const json& dj = cfg.at("data");
  std::optional<config::DgpRef> dgp;
  ObservationTable data;
  if (dj.contains("synthetic")) {
    const json& sj = dj.at("synthetic");
    dgp = config::parse_dgp(sj.at("dgp"));
    data = dgp->sample(sj.at("n").get<Eigen::Index>(), sj.value("seed", s.seed));
  } else {
    const fs::path csv = dj.at("csv").get<std::string>();
    data = io::read_table(csv, dj.contains("sidecar") ? fs::path(dj.at("sidecar").get<std::string>()) : io::default_sidecar(csv));
  }
  const ContrastSpec contrast =
      cfg.contains("contrast") ? ContrastSpec::from_json(cfg.at("contrast"), data.support()) : dgp->contrast();

  const auto t0 = std::chrono::steady_clock::now();
  const EstimateReport r = config::run_estimator(cfg.at("estimator"), data, contrast, s, dgp ? &*dgp : nullptr);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  json out = r.to_json();
  out["run"] = run_info(cfg, s.seed);
  out["run"]["seconds"] = secs;
  out["data_hash"] = io::hex64(data.hash());
  if (dgp) out["oracle_J"] = dgp->oracle_J();
  io::write_json(cfg.at("output").get<std::string>(), out);
  if (a.summary) {
    std::cout << r.estimator << " J=" << brief(r.J) << " se=" << brief(r.se) << " ci=[" << brief(r.ci_lo) << ", "
              << brief(r.ci_hi) << "] n=" << r.n << (r.descriptive ? " (descriptive interval)" : "") << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------- study

struct StudyArgs {
  std::string config, out_dir;
  bool summary = false;
  int jobs = 1;
};

void write_records(const fs::path& path, const std::vector<ReplicationRecord>& recs) {
  std::string t = "cell,rep,n,seed,J,se,ci_lo,ci_hi,h_residual,q_residual\n";
  for (const auto& r : recs) {
    t += std::to_string(r.cell) + "," + std::to_string(r.rep) + "," + std::to_string(r.n) + "," + std::to_string(r.seed) +
         "," + num(r.J) + "," + num(r.se) + "," + num(r.ci_lo) + "," + num(r.ci_hi) + "," + num(r.h_residual) + "," +
         num(r.q_residual) + "\n";
  }
  io::write_text(path, t);
}

int cmd_study(const StudyArgs& a) {
  json cfg = io::read_json(a.config);
  if (!a.out_dir.empty()) cfg["output_dir"] = a.out_dir;
  config::validate_study(cfg);
  if (!cfg.contains("output_dir")) throw ConfigError("no output directory: pass --out-dir or set 'output_dir'");
  const fs::path dir = cfg.at("output_dir").get<std::string>();
  const std::string kind = cfg.at("study").get<std::string>();
  const auto seed = cfg.value("seed", std::uint64_t{0});
  const int jobs = resolve_jobs(cfg.value("jobs", a.jobs));
  json summary{{"study", kind}, {"run", run_info(cfg, seed)}};
  const auto t0 = std::chrono::steady_clock::now();
  std::string line;

  if (kind == "identities") {
    std::vector<json> refs = cfg.contains("dgps") ? cfg.at("dgps").get<std::vector<json>>() : std::vector<json>{cfg.at("dgp")};
    std::string csv = "dgp,check,violation\n";
    bool all = true;
    json per = json::object();
    for (std::size_t i = 0; i < refs.size(); ++i) {
      const auto dgp = config::parse_dgp(refs[i]);
      if (!dgp.discrete) throw ConfigError("identity checks need discrete models; '" + dgp.name + "' is linear");
      const IdentityReport rep = check_identification_identities(*dgp.discrete, cfg.value("trials", 10), derive_seed(seed, i));
      for (const auto& [k, v] : rep.violations) csv += dgp.name + "," + k + "," + num(v) + "\n";
      per[dgp.name] = rep.to_json();
      all = all && rep.pass;
    }
    io::write_text(dir / "cells.csv", csv);
    summary["results"] = per;
    summary["pass"] = all;
    line = std::string("identities ") + (all ? "pass" : "FAIL");
  } else if (kind == "ill_posedness") {
    const auto dgp = config::parse_dgp(cfg.at("dgp"));
    const BridgeKind bk = cfg.value("bridge", "h") == "h" ? BridgeKind::kOutcome : BridgeKind::kAction;
    const ProxyRole role = bk == BridgeKind::kOutcome ? ProxyRole::kW : ProxyRole::kZ;
    FeatureMap phi = saturated_map(*dgp.discrete, role);
    if (cfg.contains("hypothesis") && cfg.at("hypothesis").at("type") != "saturated_dgp") {
      phi = FeatureMap::from_json(cfg.at("hypothesis"));
    }
    const IllPosedness t1 = ill_posedness_discrete(*dgp.discrete, phi, Tau::kOne, bk);
    const IllPosedness t2 = ill_posedness_discrete(*dgp.discrete, phi, Tau::kTwo, bk);
    io::write_text(dir / "cells.csv", "measure,value,infinite\ntau1," + num(t1.value) + "," + (t1.infinite ? "1" : "0") +
                                          "\ntau2," + num(t2.value) + "," + (t2.infinite ? "1" : "0") + "\n");
    summary["tau1"] = t1.to_json();
    summary["tau2"] = t2.to_json();
    line = "tau1=" + (t1.infinite ? std::string("inf") : brief(t1.value)) +
           " tau2=" + (t2.infinite ? std::string("inf") : brief(t2.value));
  } else {
    const auto dgp = config::parse_dgp(cfg.at("dgp"));
    const auto sizes = cfg.at("sizes").get<std::vector<Eigen::Index>>();
    const int reps = cfg.value("replications", 1);
    config::RunSettings s;
    s.folds = cfg.value("folds", 2);
    s.alpha = cfg.value("alpha", 0.05);
    if (kind == "projected_mse") {
      const NuisanceConfig nc = config::build_nuisance(cfg.at("estimator"), dgp.sample(sizes.front(), seed), &dgp);
      const ProjectedMseCurve c = projected_mse_curve(*dgp.discrete, nc, sizes, reps, seed, jobs);
      std::string csv = "n,replications,h_residual,q_residual,reg_abs_error,ipw_abs_error,dr_abs_error\n";
      for (const auto& x : c.cells) {
        csv += std::to_string(x.n) + "," + std::to_string(x.replications) + "," + num(x.h_residual) + "," +
               num(x.q_residual) + "," + num(x.reg_abs_error) + "," + num(x.ipw_abs_error) + "," + num(x.dr_abs_error) + "\n";
      }
      io::write_text(dir / "cells.csv", csv);
      summary["results"] = c.to_json();
      line = std::string("projected_mse cells=") + std::to_string(c.cells.size());
    } else {
      ReplicationStudy st;
      st.dgp_ref = dgp.name;
      st.estimator = cfg.at("estimator");
      st.sizes = sizes;
      st.replications = reps;
      st.master_seed = seed;
      st.oracle_J = dgp.oracle_J();
      st.run = config::replication_fn(dgp, cfg.at("estimator"), s);
      st.jobs = jobs;
      const auto recs = run_replications(st);
      write_records(dir / "replications.csv", recs);
      summary["oracle_J"] = st.oracle_J;
      if (kind == "rate") {
        const RateReport rr = rate_report_from_records(recs, sizes, st.oracle_J);
        std::string csv = "n,replications,bias,rmse,mean_se\n";
        for (const auto& x : rr.cells) {
          csv += std::to_string(x.n) + "," + std::to_string(x.replications) + "," + num(x.bias) + "," + num(x.rmse) +
                 "," + num(x.mean_se) + "\n";
        }
        io::write_text(dir / "cells.csv", csv);
        summary["results"] = rr.to_json();
        line = rr.slope_defined ? "rate slope=" + brief(rr.slope) + " se=" + brief(rr.slope_se) : "rate slope undefined";
      } else {
        const CoverageReport cr = coverage_report_from_records(recs, sizes, st.oracle_J);
        std::string csv = "n,covered,total,coverage,ci_lo,ci_hi,degenerate\n";
        for (const auto& x : cr.cells) {
          csv += std::to_string(x.n) + "," + std::to_string(x.covered) + "," + std::to_string(x.total) + "," +
                 num(x.fraction) + "," + num(x.ci_lo) + "," + num(x.ci_hi) + "," + (x.degenerate ? "1" : "0") + "\n";
        }
        io::write_text(dir / "cells.csv", csv);
        summary["results"] = cr.to_json();
        line = "coverage";
        for (const auto& x : cr.cells) line += " n=" + std::to_string(x.n) + ":" + brief(x.fraction);
      }
    }
  }
  summary["run"]["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  io::write_json(dir / "summary.json", summary);
  if (a.summary) std::cout << line << "\n";
  return 0;
}

int exit_code(const Error& e) {
  const std::string k = e.kind();
  if (k == "config_error" || k == "validation_error") return 2;
  if (k == "io_error") return 4;
  return 3;
}

void emit_error(const char* kind, const std::string& msg) {
  std::cerr << json{{"error", {{"kind", kind}, {"message", msg}}}}.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_st("proxbridge"));
  CLI::App app{"Proximal causal effect estimation with minimax bridge functions"};
  app.require_subcommand(1);
  std::string log_level = "warn";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");
  app.set_version_flag("--version", PROXBRIDGE_VERSION);

  SynthArgs sa;
  auto* syn = app.add_subcommand("synthesize", "Sample a bundled or custom model to CSV");
  syn->add_option("--config", sa.config, "synthesize config JSON");
  syn->add_option("--dgp", sa.dgp, "bundled model name");
  syn->add_option("--n", sa.n, "rows");
  syn->add_option("--seed", sa.seed, "seed");
  syn->add_option("--out", sa.out, "CSV path (sidecar and manifest are written next to it)");

  EstimateArgs ea;
  auto* est = app.add_subcommand("estimate", "Estimate J from data");
  est->add_option("--config", ea.config, "experiment config JSON")->required();
  est->add_option("--data", ea.data, "CSV path (overrides config data)");
  est->add_option("--estimator", ea.estimator, "ipw, reg, dr or dr-crossfit")
      ->check(CLI::IsMember({"ipw", "reg", "dr", "dr-crossfit"}));
  est->add_option("--folds", ea.folds, "cross-fitting folds");
  est->add_option("--seed", ea.seed, "seed");
  est->add_option("--out", ea.out, "report JSON path");
  est->add_option("--jobs", ea.jobs, "worker threads (PROXBRIDGE_JOBS overrides)");
  est->add_flag("--print-summary", ea.summary, "one-line summary on stdout");

  StudyArgs st;
  auto* stu = app.add_subcommand("study", "Run a replication, identity or ill-posedness study");
  stu->add_option("--config", st.config, "study config JSON")->required();
  stu->add_option("--out-dir", st.out_dir, "output directory");
  stu->add_option("--jobs", st.jobs, "worker threads (PROXBRIDGE_JOBS overrides)");
  stu->add_flag("--print-summary", st.summary, "one-line summary on stdout");

  std::string vc_path;
  auto* val = app.add_subcommand("validate-config", "Check a config without running it");
  val->add_option("--config", vc_path, "config JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    emit_error("usage_error", e.what());
    return 64;
  }
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*syn) return cmd_synthesize(sa);
    if (*est) return cmd_estimate(ea);
    if (*stu) return cmd_study(st);
    if (*val) {
      config::validate_any(io::read_json(vc_path));
      return 0;
    }
  } catch (const Error& e) {
    emit_error(e.kind(), e.what());
    return exit_code(e);
  } catch (const json::exception& e) {
    emit_error("config_error", e.what());
    return 2;
  } catch (const std::exception& e) {
    emit_error("internal_error", e.what());
    return 1;
  }
  return 0;
}
