#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>

#include "proxbridge/core_model.hpp"
#include "proxbridge/kernel.hpp"

namespace proxbridge {

/// Distinct evaluation points of a table and the row -> cell map.
struct CellIndex {
  RowMatrix proxy;
  VectorXd a;
  std::vector<int> a_index;
  RowMatrix x;
  std::vector<int> row_cell;  // size n
  VectorXd counts;            // size m

  Eigen::Index size() const { return counts.size(); }
  PointView point(Eigen::Index c) const;
  /// Cell indicator E (n x m) times a cell vector, and its transpose.
  VectorXd expand(const VectorXd& cell_values) const;
  VectorXd aggregate(const VectorXd& row_values) const;
};

/// Distinct (proxy, a, x) triples; with `with_action` false the action is
/// ignored and cells are distinct (proxy, x) pairs.
CellIndex index_cells(const ObservationTable& table, ProxyRole role, bool with_action = true);

/// Gram matrices of the kernel critics, stored over distinct cells.
///
/// Row-level matrices are recovered as K = E Kc E^T:
///   K_z[i][j]  = k_z((Z_i,A_i,X_i), (Z_j,A_j,X_j))
///   K_w1[i][j] = k_w((W_i,A_i,X_i), (W_j,A_j,X_j))
///   K_w2[i][j] = sum_k omega_k pi(a_k|X_j) k_w((W_i,A_i,X_i), (W_j,a_k,X_j))
/// and K_w3[i][j] = <tau_i, tau_j> for the T-sections tau_j of k_w.
struct GramBundle {
  KernelSpec kernel_z;
  KernelSpec kernel_w;
  Eigen::Index n = 0;
  CellIndex z_cells;  // (z, a, x)
  CellIndex w_cells;  // (w, a, x)
  CellIndex t_cells;  // (w, x)
  MatrixXd kz;        // m_z x m_z
  MatrixXd kw1;       // m_w x m_w
  MatrixXd kw2;       // m_w x m_t
  MatrixXd kw3;       // m_t x m_t
  bool has_contrast = false;
  std::uint64_t key = 0;

  MatrixXd dense_kz() const;
  MatrixXd dense_kw1() const;
  MatrixXd dense_kw2() const;
  /// Smallest eigenvalue of the symmetrized cell matrices relative to their norm.
  bool psd(double tol = 1e-10) const;
};

/// Automatic RBF bandwidths are resolved from `data` before the matrices are
/// built. Without a contrast only kz and kw1 are filled.
GramBundle build_gram_bundle(const ObservationTable& data, const KernelSpec& kernel_z, const KernelSpec& kernel_w,
                             const ContrastSpec* contrast);
/// Same, reusing `<cache_dir>/gram_<key>.bin` when present and writing it otherwise.
GramBundle build_gram_bundle_cached(const ObservationTable& data, const KernelSpec& kernel_z,
                                    const KernelSpec& kernel_w, const ContrastSpec* contrast,
                                    const std::filesystem::path& cache_dir);
std::uint64_t gram_key(const ObservationTable& data, const KernelSpec& kernel_z, const KernelSpec& kernel_w,
                       const ContrastSpec* contrast);
/// Binary sidecar with the key and the four cell matrices.
void save_gram_matrices(const GramBundle& g, const std::filesystem::path& path);
/// Fills the matrices of `g` from `path` when the stored key and shapes match
/// `g`; returns false otherwise.
bool load_gram_matrices(const std::filesystem::path& path, GramBundle& g);

/// Kernel-critic estimator settings. Strategy I takes the sup over the unit
/// ball of the critic RKHS; strategy II subtracts lambda E_n[f^2] +
/// (gamma / n) |f|^2. The hypothesis is a finite feature map or a kernel
/// expansion over the training cells (rho > 0 required; rho < 0 selects the
/// default 1e-3 trace(K) / n).
struct RkhsConfig {
  int strategy = 1;
  double lambda = 0.0;
  double gamma = 0.0;
  double rho = 0.0;
  enum class Hypothesis { kSieve, kKernel };
  Hypothesis hypothesis = Hypothesis::kSieve;
  FeatureMap features = FeatureMap::constant();
  std::optional<KernelSpec> kernel;

  void validate() const;
};

/// Exact sup over the critic class for a given hypothesis function.
double rkhs_objective_h(const ObservationTable& data, const GramBundle& gram, const RkhsConfig& cfg,
                        const BridgeFit& h);
double rkhs_objective_q(const ObservationTable& data, const GramBundle& gram, const RkhsConfig& cfg,
                        const ContrastSpec& contrast, const BridgeFit& q);
/// The same values from row-level residuals: psi_i = Y_i - h_i for h and
/// s_i = pi(A_i|X_i) q_i for q.
double rkhs_objective_h_values(const GramBundle& gram, const RkhsConfig& cfg, const VectorXd& psi);
double rkhs_objective_q_values(const GramBundle& gram, const RkhsConfig& cfg, const VectorXd& s);

BridgeFit fit_h_kernel(const ObservationTable& data, const GramBundle& gram, const RkhsConfig& cfg);
BridgeFit fit_q_kernel(const ObservationTable& data, const GramBundle& gram, const RkhsConfig& cfg,
                       const ContrastSpec& contrast);

/// Symmetric square root with eigenvalues clipped at zero.
MatrixXd matrix_sqrt_psd(const MatrixXd& k);

}  // namespace proxbridge
