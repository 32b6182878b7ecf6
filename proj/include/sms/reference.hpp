#pragma once

#include "sms/solver.hpp"

namespace sms {

enum class LinearMode { Direct, Iterative };

struct ReferenceConfig {
  double epsilon = 1e-4;       // on |d| / (h |V|), tighter than the multilevel solver
  LinearMode mode = LinearMode::Direct;
  double iterative_tol = 1e-10;  // Jacobi-PCG relative residual in iterative mode
  int max_newton = 200;
  double alpha_min = 1e-8;

  void validate() const;
};

struct ReferenceRecord {
  double energy = 0.0;
  double grad_norm = 0.0;
  double d_norm = 0.0;
  double alpha = 0.0;
  int cg_iterations = 0;
  bool cg_converged = true;
  std::optional<AcceptedIterate> accepted;
};

struct ReferenceResult {
  VecX x;
  std::vector<ReferenceRecord> records;
  bool converged = false;
  bool line_search_failed = false;
  int iterations() const { return static_cast<int>(records.size()); }
  int total_cg() const;
};

/// Full-space projected Newton with the exact PSD-projected Hessian.
ReferenceResult reference_solve(const IncrementalPotential& ip, const VecX& x0, double h, const ReferenceConfig& cfg);

struct ErrorReport {
  VecX per_vertex;  // |x_a - x_b| / bbox diagonal
  double max = 0.0;
  double mean = 0.0;
};

/// Per-vertex displacement difference relative to the bounding-box
/// diagonal.
ErrorReport displacement_error(const VecX& x_ours, const VecX& x_ref, double diagonal);

}  // namespace sms
