#pragma once

#include "sms/contact.hpp"
#include "sms/mesh.hpp"

#include <cmath>

namespace sms {

enum class Integrator { ImplicitEuler, BDF2 };

struct TimestepConfig {
  double h = 0.01;
  Integrator integrator = Integrator::ImplicitEuler;
  Vec2 gravity = Vec2::Zero();

  // Scaling of the potential terms in the incremental potential.
  double alpha() const { return integrator == Integrator::BDF2 ? 4.0 / 9.0 : 1.0; }
  void validate() const;
};

/// Positions and velocities of the current and previous step.
struct PredictorState {
  VecX x, x_prev;
  VecX v, v_prev;
  bool has_history = false;  // x_prev / v_prev valid (BDF2)
};

/// x~ for the configured integrator. BDF2 without history falls back to
/// implicit Euler.
VecX predictor(const PredictorState& state, const TimestepConfig& cfg);

/// New velocity from the minimizer x_new.
VecX velocity_update(const VecX& x_new, const PredictorState& state, const TimestepConfig& cfg);

/// Shifts history and stores (x_new, v_new).
PredictorState advance(const PredictorState& state, const VecX& x_new, const TimestepConfig& cfg);

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

/// Stable Neo-Hookean density
///   psi(F) = mu/2 (|F|^2 - 2) - mu (J - 1) + (lambda + mu)/2 (J - 1)^2,
/// which is zero with zero stress at rest and linearizes to the Lame
/// parameters. Returns +inf for J <= 0.
double snh_density(const Mat2& F, double mu, double lambda);

/// Per-triangle constant data: inverse rest edge matrix and dF/dx.
struct ElementKinematics {
  Eigen::Matrix<double, 4, 6> dFdx;  // vec(F) column-major
  Mat2 rest_inverse;
  double area = 0.0;
  double mu = 0.0, lambda = 0.0;
};

ElementKinematics element_kinematics(const SimMesh& mesh, const MaterialField& materials, int e);
Mat2 deformation_gradient(const ElementKinematics& k, const Vec2& x0, const Vec2& x1, const Vec2& x2);

/// Energy, gradient and Hessian of one element with unit volume weight.
/// Returns false when the element is inverted.
bool snh_element(const ElementKinematics& k, const Vec2& x0, const Vec2& x1, const Vec2& x2, double* energy,
                 Vec6* grad, Mat6* hess);

/// Symmetric eigenvalue clamp to nonnegative.
Mat6 project_psd(const Mat6& m);

/// Fixed sparsity for 2x2 vertex blocks of a set of elements plus every
/// vertex diagonal block. Values are written through precomputed slots.
struct HessianPattern {
  SparseMat matrix;                           // zeros with final structure
  std::vector<std::array<int, 36>> element_slots;  // parallel to the element list
  std::vector<std::array<int, 4>> diag_slots;      // per vertex, (0,0),(0,1),(1,0),(1,1)
};

HessianPattern build_pattern(const SimMesh& mesh, std::span<const int> elements);

/// Elements with weights that replace their rest area in the elastic sum.
struct ElementSubset {
  std::vector<int> elements;
  std::vector<double> weights;
  HessianPattern pattern;
};

ElementSubset make_subset(const SimMesh& mesh, std::vector<int> elements, std::vector<double> weights);

struct Want {
  bool value = true;
  bool gradient = false;
  bool hessian = false;
};

struct EnergyReport {
  double value = 0.0;
  VecX gradient;
  SparseMat hessian;
  double inertia = 0.0;   // K
  double elastic = 0.0;   // Psi (unscaled)
  double external = 0.0;  // gravity and dead loads (unscaled)
  double barrier = 0.0;   // B (unscaled)
  bool finite() const { return std::isfinite(value); }
};

/// E(x) = 1/2 |x - x~|_M^2 + alpha h^2 (Psi(x) + V(x) + B(x)) with V the
/// gravity and dead-load potential.
class IncrementalPotential {
 public:
  IncrementalPotential(const SimMesh& mesh, const MaterialField& materials, const DiscreteOperators& ops,
                       std::vector<Collider> colliders);

  void begin_step(const VecX& x_tilde, const TimestepConfig& cfg);

  /// Full evaluation; `elastic` restricts Psi to a weighted subset and the
  /// Hessian then uses the subset's pattern.
  EnergyReport evaluate(const VecX& x, Want want, bool psd = true, const ElementSubset* elastic = nullptr) const;

  double value(const VecX& x) const { return evaluate(x, {}).value; }
  VecX gradient(const VecX& x) const;

  /// alpha h^2 * elastic Hessian over all elements on the full pattern.
  SparseMat elastic_hessian(const VecX& x, bool psd) const;
  /// Adds inertia and barrier Hessians at x to a matrix on the full pattern.
  SparseMat with_inertia_and_barrier(const SparseMat& elastic_part, const VecX& x) const;

  const SimMesh& mesh() const { return mesh_; }
  const DiscreteOperators& ops() const { return ops_; }
  std::span<const Collider> colliders() const { return colliders_; }
  const VecX& mass_dofs() const { return mass_dofs_; }
  const VecX& x_tilde() const { return x_tilde_; }
  double alpha_h2() const { return alpha_h2_; }
  double elastic_energy(const VecX& x) const;
  const std::vector<ElementKinematics>& kinematics() const { return kin_; }
  const HessianPattern& full_pattern() const { return full_pattern_; }

  /// Dead loads per DOF (N), default zero.
  VecX external_force;
  Vec2 gravity = Vec2::Zero();

 private:
  void add_elastic(const VecX& x, const std::vector<int>& elements, const std::vector<double>* weights,
                   const HessianPattern* pattern, bool psd, bool grad, bool hess, double scale, double& psi,
                   VecX* g, SparseMat* H) const;
  void add_inertia_barrier_hessian(const VecX& x, const HessianPattern& pattern, SparseMat& H) const;

  SimMesh mesh_;
  DiscreteOperators ops_;
  std::vector<Collider> colliders_;
  std::vector<ElementKinematics> kin_;
  std::vector<int> all_elements_;
  VecX mass_dofs_;
  VecX x_tilde_;
  double alpha_h2_ = 0.0;
  HessianPattern full_pattern_;
};

}  // namespace sms
