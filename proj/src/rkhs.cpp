#include "proxbridge/rkhs.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include "proxbridge/errors.hpp"
#include "proxbridge/hash.hpp"
#include "proxbridge/linalg.hpp"

namespace proxbridge {

namespace {

constexpr char kMagic[8] = {'P', 'B', 'G', 'R', 'A', 'M', '1', '\0'};
constexpr double kPsdTol = 1e-10;

std::span<const double> row_of(const RowMatrix& m, Eigen::Index r) {
  return {m.data() + r * m.cols(), static_cast<std::size_t>(m.cols())};
}

}  // namespace

// ---------------------------------------------------------------- cells

PointView CellIndex::point(Eigen::Index c) const {
  return {row_of(proxy, c), {a(c), a_index.empty() ? -1 : a_index[static_cast<std::size_t>(c)]}, row_of(x, c)};
}

VectorXd CellIndex::expand(const VectorXd& cell_values) const {
  VectorXd out(static_cast<Eigen::Index>(row_cell.size()));
  for (std::size_t i = 0; i < row_cell.size(); ++i) out(static_cast<Eigen::Index>(i)) = cell_values(row_cell[i]);
  return out;
}

VectorXd CellIndex::aggregate(const VectorXd& row_values) const {
  VectorXd out = VectorXd::Zero(size());
  for (std::size_t i = 0; i < row_cell.size(); ++i) out(row_cell[i]) += row_values(static_cast<Eigen::Index>(i));
  return out;
}

CellIndex index_cells(const ObservationTable& t, ProxyRole role, bool with_action) {
  const RowMatrix& prox = t.proxy(role);
  std::map<std::vector<double>, int> cells;
  std::vector<std::vector<double>> keys(static_cast<std::size_t>(t.n()));
  for (Eigen::Index i = 0; i < t.n(); ++i) {
    std::vector<double> k(prox.row(i).data(), prox.row(i).data() + prox.cols());
    if (with_action) k.push_back(t.a()(i));
    k.insert(k.end(), t.x().row(i).data(), t.x().row(i).data() + t.d_x());
    cells.emplace(k, 0);
    keys[static_cast<std::size_t>(i)] = std::move(k);
  }
  const auto m = static_cast<Eigen::Index>(cells.size());
  CellIndex out;
  out.proxy.resize(m, prox.cols());
  out.a = VectorXd::Zero(m);
  out.x.resize(m, t.d_x());
  out.counts = VectorXd::Zero(m);
  if (with_action && t.support().is_discrete()) out.a_index.assign(static_cast<std::size_t>(m), -1);
  int next = 0;
  for (auto& [k, idx] : cells) {
    idx = next++;
    Eigen::Index p = 0;
    for (Eigen::Index c = 0; c < prox.cols(); ++c) out.proxy(idx, c) = k[static_cast<std::size_t>(p++)];
    if (with_action) {
      out.a(idx) = k[static_cast<std::size_t>(p++)];
      if (!out.a_index.empty()) out.a_index[static_cast<std::size_t>(idx)] = t.support().index_of(out.a(idx));
    }
    for (Eigen::Index c = 0; c < t.d_x(); ++c) out.x(idx, c) = k[static_cast<std::size_t>(p++)];
  }
  out.row_cell.resize(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const int c = cells.at(keys[i]);
    out.row_cell[i] = c;
    out.counts(c) += 1.0;
  }
  return out;
}

// ---------------------------------------------------------------- bundle

namespace {

MatrixXd cell_gram(const KernelSpec& k, const CellIndex& c) {
  const Eigen::Index m = c.size();
  MatrixXd out(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double v = k.eval(c.point(i), c.point(j));
      out(i, j) = v;
      out(j, i) = v;
    }
  }
  return out;
}

MatrixXd dense_from(const MatrixXd& kc, const std::vector<int>& rows, const std::vector<int>& cols) {
  MatrixXd out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = kc(rows[i], cols[j]);
    }
  }
  return out;
}

bool psd_rel(const MatrixXd& k, double tol) {
  if (k.size() == 0) return true;
  if (linalg::asymmetry(k) > tol) return false;
  return linalg::is_psd(k, tol);
}

}  // namespace

MatrixXd GramBundle::dense_kz() const { return dense_from(kz, z_cells.row_cell, z_cells.row_cell); }
MatrixXd GramBundle::dense_kw1() const { return dense_from(kw1, w_cells.row_cell, w_cells.row_cell); }
MatrixXd GramBundle::dense_kw2() const {
  if (!has_contrast) throw ConfigError("gram bundle was built without a contrast");
  return dense_from(kw2, w_cells.row_cell, t_cells.row_cell);
}

bool GramBundle::psd(double tol) const {
  return psd_rel(kz, tol) && psd_rel(kw1, tol) && (!has_contrast || psd_rel(kw3, tol));
}

std::uint64_t gram_key(const ObservationTable& data, const KernelSpec& kz, const KernelSpec& kw, const ContrastSpec* contrast) {
  Fnv1a h;
  h.u64(data.hash());
  h.str(kz.to_json().dump());
  h.str(kw.to_json().dump());
  h.str(contrast ? contrast->to_json().dump() : std::string("none"));
  return h.digest();
}

namespace {

GramBundle bundle_skeleton(const ObservationTable& data, const KernelSpec& kernel_z, const KernelSpec& kernel_w,
                           const ContrastSpec* contrast) {
  if (data.empty()) throw ValidationError("cannot build Gram matrices from an empty table");
  if (contrast) contrast->check_compatible(data.support());
  GramBundle g;
  g.kernel_z = kernel_z.resolved(data, ProxyRole::kZ);
  g.kernel_w = kernel_w.resolved(data, ProxyRole::kW);
  g.n = data.n();
  g.z_cells = index_cells(data, ProxyRole::kZ, true);
  g.w_cells = index_cells(data, ProxyRole::kW, true);
  g.t_cells = index_cells(data, ProxyRole::kW, false);
  g.has_contrast = contrast != nullptr;
  return g;
}

void fill_matrices(GramBundle& g, const ContrastSpec* contrast) {
  g.kz = cell_gram(g.kernel_z, g.z_cells);
  g.kw1 = cell_gram(g.kernel_w, g.w_cells);
  if (!contrast) return;
  const Eigen::Index mw = g.w_cells.size(), mt = g.t_cells.size();
  g.kw2.resize(mw, mt);
  for (Eigen::Index i = 0; i < mw; ++i) {
    const PointView anchor = g.w_cells.point(i);
    for (Eigen::Index j = 0; j < mt; ++j) {
      g.kw2(i, j) = t_apply_kernel(g.kernel_w, *contrast, anchor, row_of(g.t_cells.proxy, j), row_of(g.t_cells.x, j));
    }
  }
  // <tau_i, tau_j>: T applied to both arguments.
  const auto& nodes = contrast->nodes();
  const auto& wts = contrast->weights();
  MatrixXd coef(mt, static_cast<Eigen::Index>(nodes.size()));
  for (Eigen::Index j = 0; j < mt; ++j) {
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      coef(j, static_cast<Eigen::Index>(k)) = wts[k] * contrast->pi(nodes[k], row_of(g.t_cells.x, j));
    }
  }
  g.kw3.resize(mt, mt);
  for (Eigen::Index i = 0; i < mt; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        const double ci = coef(i, static_cast<Eigen::Index>(k));
        if (ci == 0.0) continue;
        const PointView pi_{row_of(g.t_cells.proxy, i), nodes[k], row_of(g.t_cells.x, i)};
        for (std::size_t l = 0; l < nodes.size(); ++l) {
          const double cj = coef(j, static_cast<Eigen::Index>(l));
          if (cj == 0.0) continue;
          acc += ci * cj * g.kernel_w.eval(pi_, {row_of(g.t_cells.proxy, j), nodes[l], row_of(g.t_cells.x, j)});
        }
      }
      g.kw3(i, j) = acc;
      g.kw3(j, i) = acc;
    }
  }
}

}  // namespace

GramBundle build_gram_bundle(const ObservationTable& data, const KernelSpec& kernel_z, const KernelSpec& kernel_w,
                             const ContrastSpec* contrast) {
  GramBundle g = bundle_skeleton(data, kernel_z, kernel_w, contrast);
  fill_matrices(g, contrast);
  g.key = gram_key(data, g.kernel_z, g.kernel_w, contrast);
  return g;
}

GramBundle build_gram_bundle_cached(const ObservationTable& data, const KernelSpec& kernel_z,
                                    const KernelSpec& kernel_w, const ContrastSpec* contrast,
                                    const std::filesystem::path& cache_dir) {
  GramBundle g = bundle_skeleton(data, kernel_z, kernel_w, contrast);
  g.key = gram_key(data, g.kernel_z, g.kernel_w, contrast);
  char name[64];
  std::snprintf(name, sizeof name, "gram_%016llx.bin", static_cast<unsigned long long>(g.key));
  const auto path = cache_dir / name;
  if (load_gram_matrices(path, g)) {
    spdlog::debug("loaded Gram matrices from {}", path.string());
    return g;
  }
  fill_matrices(g, contrast);
  std::filesystem::create_directories(cache_dir);
  save_gram_matrices(g, path);
  return g;
}

namespace {

void write_matrix(std::ofstream& out, const MatrixXd& m) {
  const std::int64_t dims[2] = {m.rows(), m.cols()};
  out.write(reinterpret_cast<const char*>(dims), sizeof dims);
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size())));
}

bool read_matrix(std::ifstream& in, MatrixXd& m, Eigen::Index rows, Eigen::Index cols) {
  std::int64_t dims[2];
  if (!in.read(reinterpret_cast<char*>(dims), sizeof dims)) return false;
  if (dims[0] != rows || dims[1] != cols) return false;
  m.resize(rows, cols);
  return static_cast<bool>(
      in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(m.size()))));
}

}  // namespace

void save_gram_matrices(const GramBundle& g, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write Gram cache " + path.string());
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&g.key), sizeof g.key);
  const std::uint8_t hc = g.has_contrast ? 1 : 0;
  out.write(reinterpret_cast<const char*>(&hc), 1);
  write_matrix(out, g.kz);
  write_matrix(out, g.kw1);
  write_matrix(out, g.kw2);
  write_matrix(out, g.kw3);
  if (!out) throw IoError("failed writing Gram cache " + path.string());
}

bool load_gram_matrices(const std::filesystem::path& path, GramBundle& g) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  char magic[8];
  std::uint64_t key = 0;
  std::uint8_t hc = 0;
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) return false;
  if (!in.read(reinterpret_cast<char*>(&key), sizeof key) || key != g.key) return false;
  if (!in.read(reinterpret_cast<char*>(&hc), 1) || (hc != 0) != g.has_contrast) return false;
  const Eigen::Index mz = g.z_cells.size(), mw = g.w_cells.size();
  const Eigen::Index mt = g.has_contrast ? g.t_cells.size() : 0;
  GramBundle tmp = g;
  if (!read_matrix(in, tmp.kz, mz, mz) || !read_matrix(in, tmp.kw1, mw, mw)) return false;
  if (!read_matrix(in, tmp.kw2, g.has_contrast ? mw : 0, mt) || !read_matrix(in, tmp.kw3, mt, mt)) return false;
  g = std::move(tmp);
  return true;
}

// ---------------------------------------------------------------- objectives

void RkhsConfig::validate() const {
  if (strategy != 1 && strategy != 2) throw ConfigError("rkhs strategy must be 1 or 2");
  if (!(lambda >= 0.0) || !(gamma >= 0.0)) throw ConfigError("rkhs lambda and gamma must be >= 0");
  if (strategy == 2 && !(gamma > 0.0)) throw ConfigError("rkhs strategy II needs gamma > 0");
  if (hypothesis == Hypothesis::kKernel) {
    if (!kernel) throw ConfigError("kernel hypothesis needs a kernel");
    if (rho == 0.0) throw ConfigError("kernel hypothesis needs rho > 0 (or rho < 0 for the default)");
  } else if (!(rho >= 0.0)) {
    throw ConfigError("sieve hypothesis needs rho >= 0");
  }
}

namespace {

/// Objective of the critic sup written over cells:
///   factor * (t^T M t - 2 t^T u + c0)
/// where t aggregates the row-level critic weights over cells.
struct CriticForm {
  MatrixXd M;
  VectorXd u;
  double c0 = 0.0;
  double factor = 1.0;
};

linalg::ClippedEigen checked_eigen(const MatrixXd& b) {
  linalg::ClippedEigen e = linalg::clipped_eigen(b);
  const double scale = std::max(e.values.size() > 0 ? e.values.maxCoeff() : 0.0, 1e-300);
  if (e.min_raw < -kPsdTol * scale) {
    throw NumericalError("critic Gram matrix is indefinite: eigenvalue " + std::to_string(e.min_raw) +
                         " below tolerance " + std::to_string(-kPsdTol * scale));
  }
  return e;
}

CriticForm critic_form(const MatrixXd& kc, const VectorXd& counts, Eigen::Index n, const RkhsConfig& cfg,
                       const VectorXd* v = nullptr, double t3 = 0.0) {
  const double nn = static_cast<double>(n);
  CriticForm f;
  if (cfg.strategy == 1) {
    f.M = kc / (nn * nn);
    if (v) {
      f.u = *v / (nn * nn);
      f.c0 = t3 / (nn * nn);
    }
    return f;
  }
  // B = C^1/2 K C^1/2 with C = diag(counts); every quantity below is a
  // function of B's clipped eigendecomposition.
  const VectorXd d = counts.cwiseSqrt();
  const VectorXd dinv = d.cwiseInverse();
  const MatrixXd b = d.asDiagonal() * kc * d.asDiagonal();
  const linalg::ClippedEigen e = checked_eigen(0.5 * (b + b.transpose()));
  const VectorXd denom = (cfg.gamma + cfg.lambda * e.values.array()).matrix();
  const MatrixXd vd = dinv.asDiagonal() * e.vectors;  // C^-1/2 V
  // B^1/2 (gamma + lambda B)^-1 B^1/2 = V diag(b / (gamma + lambda b)) V^T.
  f.M = vd * (e.values.array() / denom.array()).matrix().asDiagonal() * vd.transpose() / nn;
  f.factor = 0.25;
  if (v) {
    const VectorXd dv = d.cwiseProduct(*v);
    const VectorXd proj = e.vectors.transpose() * dv;
    f.u = vd * (proj.array() / denom.array()).matrix() / nn;
    const double quad = (proj.array().square() / denom.array()).sum();
    f.c0 = (t3 - cfg.lambda * quad) / (nn * cfg.gamma);
  }
  return f;
}

CriticForm h_form(const GramBundle& g, const RkhsConfig& cfg) {
  return critic_form(g.kz, g.z_cells.counts, g.n, cfg);
}

CriticForm q_form(const GramBundle& g, const RkhsConfig& cfg) {
  if (!g.has_contrast) throw ConfigError("q estimation needs a Gram bundle built with a contrast");
  const VectorXd v = g.kw2 * g.t_cells.counts;
  const double t3 = g.t_cells.counts.dot(g.kw3 * g.t_cells.counts);
  return critic_form(g.kw1, g.w_cells.counts, g.n, cfg, &v, t3);
}

double eval_form(const CriticForm& f, const VectorXd& t) {
  double val = t.dot(f.M * t);
  if (f.u.size() > 0) val += -2.0 * t.dot(f.u) + f.c0;
  return f.factor * val;
}

void check_rows(const ObservationTable& data, const GramBundle& g) {
  if (data.n() != g.n) throw ConfigError("Gram bundle was built from a table with a different row count");
}

}  // namespace

double rkhs_objective_h_values(const GramBundle& g, const RkhsConfig& cfg, const VectorXd& psi) {
  if (psi.size() != g.n) throw ValidationError("residual vector length differs from the Gram bundle");
  return eval_form(h_form(g, cfg), g.z_cells.aggregate(psi));
}

double rkhs_objective_q_values(const GramBundle& g, const RkhsConfig& cfg, const VectorXd& s) {
  if (s.size() != g.n) throw ValidationError("weight vector length differs from the Gram bundle");
  return eval_form(q_form(g, cfg), g.w_cells.aggregate(s));
}

double rkhs_objective_h(const ObservationTable& data, const GramBundle& g, const RkhsConfig& cfg, const BridgeFit& h) {
  cfg.validate();
  check_rows(data, g);
  return rkhs_objective_h_values(g, cfg, data.y() - h.eval_rows(data));
}

double rkhs_objective_q(const ObservationTable& data, const GramBundle& g, const RkhsConfig& cfg,
                        const ContrastSpec& contrast, const BridgeFit& q) {
  cfg.validate();
  check_rows(data, g);
  return rkhs_objective_q_values(g, cfg, pi_rows(contrast, data).cwiseProduct(q.eval_rows(data)));
}

// ---------------------------------------------------------------- fitting

namespace {

MatrixXd aggregate_cols(const CellIndex& c, const MatrixXd& rows) {
  MatrixXd out = MatrixXd::Zero(c.size(), rows.cols());
  for (std::size_t i = 0; i < c.row_cell.size(); ++i) out.row(c.row_cell[i]) += rows.row(static_cast<Eigen::Index>(i));
  return out;
}

// Rows of the critic cells against columns of the hypothesis cells, with
// per-row weights (all ones when `w` is null).
MatrixXd contingency(const CellIndex& rows, const CellIndex& cols, const VectorXd* w) {
  MatrixXd g = MatrixXd::Zero(rows.size(), cols.size());
  for (std::size_t i = 0; i < rows.row_cell.size(); ++i) {
    g(rows.row_cell[i], cols.row_cell[i]) += w ? (*w)(static_cast<Eigen::Index>(i)) : 1.0;
  }
  return g;
}

double default_rho(const MatrixXd& kh, const VectorXd& counts, Eigen::Index n) {
  return 1e-3 * counts.dot(kh.diagonal()) / static_cast<double>(n);
}

KernelDescriptor kernel_descriptor(const KernelSpec& k, const CellIndex& c, VectorXd dual) {
  return {k, c.proxy, c.a, c.a_index, c.x, std::move(dual)};
}

// Minimizes (target - G Kh beta)^T M (target - G Kh beta) + rho beta^T Kh beta
// through the symmetric normal equations.
VectorXd kernel_normal_solve(const MatrixXd& g, const MatrixXd& kh, const MatrixXd& m, const VectorXd& target_rhs,
                             double rho, double jitter_base) {
  const MatrixXd gk = g * kh;
  MatrixXd lhs = gk.transpose() * m * gk + rho * kh;
  lhs = 0.5 * (lhs + lhs.transpose());
  const VectorXd rhs = kh * target_rhs;
  return linalg::solve_psd(lhs, rhs, jitter_base);
}

FitDiagnostics diagnostics(const RkhsConfig& cfg, double rho, Eigen::Index n, const char* method) {
  FitDiagnostics d;
  d.method = method;
  d.strategy = cfg.strategy;
  d.lambda = cfg.lambda;
  d.gamma = cfg.gamma;
  d.rho = rho;
  d.n = n;
  return d;
}

}  // namespace

BridgeFit fit_h_kernel(const ObservationTable& data, const GramBundle& g, const RkhsConfig& cfg) {
  cfg.validate();
  check_rows(data, g);
  const CriticForm f = h_form(g, cfg);
  const VectorXd s_y = g.z_cells.aggregate(data.y());
  if (cfg.hypothesis == RkhsConfig::Hypothesis::kSieve) {
    const MatrixXd hc = aggregate_cols(g.z_cells, cfg.features.eval_rows(data, ProxyRole::kW));
    const Eigen::Index d = hc.cols();
    MatrixXd lhs = hc.transpose() * f.M * hc + cfg.rho * MatrixXd::Identity(d, d);
    lhs = 0.5 * (lhs + lhs.transpose());
    VectorXd alpha = linalg::pinv(lhs) * (hc.transpose() * f.M * s_y);
    FitDiagnostics diag = diagnostics(cfg, cfg.rho, data.n(), "rkhs-critic/sieve");
    diag.objective = eval_form(f, s_y - hc * alpha);
    return BridgeFit(BridgeKind::kOutcome, SieveDescriptor{cfg.features, std::move(alpha)}, diag);
  }
  const KernelSpec kh_spec = cfg.kernel->resolved(data, ProxyRole::kW);
  const MatrixXd kh = cell_gram(kh_spec, g.w_cells);
  const double rho = cfg.rho > 0.0 ? cfg.rho : default_rho(kh, g.w_cells.counts, g.n);
  const MatrixXd gm = contingency(g.z_cells, g.w_cells, nullptr);
  VectorXd beta = kernel_normal_solve(gm, kh, f.M, gm.transpose() * f.M * s_y, rho, cfg.gamma);
  FitDiagnostics diag = diagnostics(cfg, rho, data.n(), "rkhs-critic/kernel");
  diag.objective = eval_form(f, s_y - gm * kh * beta);
  return BridgeFit(BridgeKind::kOutcome, kernel_descriptor(kh_spec, g.w_cells, std::move(beta)), diag);
}

BridgeFit fit_q_kernel(const ObservationTable& data, const GramBundle& g, const RkhsConfig& cfg,
                       const ContrastSpec& contrast) {
  cfg.validate();
  check_rows(data, g);
  const CriticForm f = q_form(g, cfg);
  const VectorXd pi = pi_rows(contrast, data);
  if (cfg.hypothesis == RkhsConfig::Hypothesis::kSieve) {
    const MatrixXd phi = cfg.features.eval_rows(data, ProxyRole::kZ);
    const MatrixXd gc = aggregate_cols(g.w_cells, pi.asDiagonal() * phi);
    const Eigen::Index d = gc.cols();
    MatrixXd lhs = gc.transpose() * f.M * gc + cfg.rho * MatrixXd::Identity(d, d);
    lhs = 0.5 * (lhs + lhs.transpose());
    VectorXd alpha = linalg::pinv(lhs) * (gc.transpose() * f.u);
    FitDiagnostics diag = diagnostics(cfg, cfg.rho, data.n(), "rkhs-critic/sieve");
    diag.objective = eval_form(f, gc * alpha);
    return BridgeFit(BridgeKind::kAction, SieveDescriptor{cfg.features, std::move(alpha)}, diag);
  }
  const KernelSpec kq_spec = cfg.kernel->resolved(data, ProxyRole::kZ);
  const MatrixXd kq = cell_gram(kq_spec, g.z_cells);
  const double rho = cfg.rho > 0.0 ? cfg.rho : default_rho(kq, g.z_cells.counts, g.n);
  const MatrixXd gp = contingency(g.w_cells, g.z_cells, &pi);
  VectorXd beta = kernel_normal_solve(gp, kq, f.M, gp.transpose() * f.u, rho, cfg.gamma);
  FitDiagnostics diag = diagnostics(cfg, rho, data.n(), "rkhs-critic/kernel");
  diag.objective = eval_form(f, gp * kq * beta);
  return BridgeFit(BridgeKind::kAction, kernel_descriptor(kq_spec, g.z_cells, std::move(beta)), diag);
}

MatrixXd matrix_sqrt_psd(const MatrixXd& k) { return linalg::matrix_sqrt_psd(k); }

}  // namespace proxbridge
