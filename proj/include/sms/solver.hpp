#pragma once

#include "sms/cubature.hpp"
#include "sms/pcg.hpp"

#include <optional>

namespace sms {

struct LagConfig {
  int window = 3;          // accepted step sizes in the moving average
  double threshold = 0.2;  // refresh when the average falls below
  int min_gap = 5;         // Newton iterations between refreshes
};

struct SolverConfig {
  double epsilon = 1e-3;   // Newton tolerance on |d_s| / (h |V|), m/s
  double pcg_tol = 1e-4;   // subspace PCG relative residual
  int n_refine_cg = -1;    // full-space CG iterations; -1 selects 20 or 40, 0 disables
  LagConfig lag;
  int max_newton = 100;
  double alpha_min = 1e-8;

  void validate() const;
};

/// True when the elastic part of the lagged Hessian should be rebuilt.
/// `steps` are the accepted step sizes of the current timestep.
bool hlag_policy(int iteration, std::span<const double> steps, int since_refresh, const LagConfig& cfg);

/// Average over partitions of the edge-hop radius from the centroid to the
/// farthest subdomain vertex, and the CG count it selects.
double mean_hop_radius(const SimMesh& mesh, const PartitionSet& parts);
int choose_refinement_iters(double mean_radius);
int choose_refinement_iters(const SimMesh& mesh, const PartitionSet& parts);

/// y = U^T H U q through lift, apply and restrict.
VecX sandwich_apply(const HandleBasis& U, const SparseMat& H, const VecX& q);

/// Inverses of the 6x6 diagonal blocks of U^T H U, one per handle.
std::vector<Eigen::Matrix<double, 6, 6>> block_jacobi(const HandleBasis& U, const SparseMat& H);

/// PCG on U^T H U q = rhs with the per-handle block-Jacobi preconditioner.
/// The tolerance is relative to max(|rhs|, reference_norm).
PcgResult subspace_pcg(const HandleBasis& U, const SparseMat& H, const VecX& rhs, double tol,
                       double reference_norm = 0.0);

struct SubspaceDirection {
  VecX d;
  PcgResult affine, sms;
};

/// Affine solve followed by the SMS correction of the remaining residual.
/// The SMS level measures its residual against max(|U_s^T r|, |U_s^T g|).
SubspaceDirection solve_subspace_direction(const SparseMat& H, const VecX& g, const HandleBasis& affine,
                                           const HandleBasis& sms, double tol);

/// Exactly `iterations` Jacobi-PCG steps on H d = r from zero (earlier exit
/// only on exact convergence). DOFs with mask 0 stay zero.
PcgResult fullspace_correction(const SparseMat& H, const VecX& r, int iterations, const std::vector<char>& dof_mask);

/// Jacobi-PCG to a relative tolerance on the masked system.
PcgResult jacobi_pcg(const SparseMat& H, const VecX& r, double tol, int max_iterations,
                     const std::vector<char>& dof_mask);

struct LineSearchResult {
  double alpha = 0.0;
  double alpha0 = 0.0;  // after the CCD and inversion filters
  VecX x;
  double energy = 0.0;
  bool accepted = false;
};

/// alpha0 = min(1, ccd, inversion); halve until the energy decreases.
LineSearchResult filtered_line_search(const IncrementalPotential& ip, const VecX& x, const VecX& d, double energy,
                                      double alpha_min);

/// Per-DOF mask: 0 on Dirichlet vertices.
std::vector<char> free_dof_mask(const SimMesh& mesh);

/// Energy and feasibility margins of the iterate accepted by a line search.
struct AcceptedIterate {
  double energy = 0.0;
  double min_distance = 0.0;  // to the colliders, +inf without any
  double min_area = 0.0;      // smallest signed element area
};

struct NewtonRecord {
  double energy = 0.0;
  double grad_norm = 0.0;
  double ds_norm = 0.0;
  double alpha = 0.0;
  int pcg_affine = 0;
  int pcg_sms = 0;
  int cg_refine = 0;
  bool hlag_refresh = false;
  bool fallback = false;  // direction replaced after a non-descent test
  std::optional<AcceptedIterate> accepted;
};

struct NewtonResult {
  VecX x;
  std::vector<NewtonRecord> records;
  bool converged = false;
  bool line_search_failed = false;
  int iterations() const { return static_cast<int>(records.size()); }
  int total_pcg() const;
};

/// Three-level inexact Newton solve of one timestep. `ip.begin_step` must
/// already hold the predictor. With `scheme` null the subspace levels use
/// the exactly integrated Hessian.
class MultilevelSolver {
 public:
  MultilevelSolver(const SubspaceBases& bases, const ElementSubset* scheme, SolverConfig cfg, int refine_iters);

  NewtonResult solve(const IncrementalPotential& ip, const VecX& x0, double h) const;

  int refine_iters() const { return refine_iters_; }

 private:
  const SubspaceBases& bases_;
  const ElementSubset* scheme_;
  SolverConfig cfg_;
  int refine_iters_;
};

}  // namespace sms
