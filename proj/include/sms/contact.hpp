#pragma once

#include "sms/mesh.hpp"

namespace sms {

/// Analytic obstacle with an IPC log-barrier. Distances are signed and
/// positive on the free side.
struct Collider {
  enum class Shape { HalfPlane, Sphere };
  Shape shape = Shape::HalfPlane;
  Vec2 normal = Vec2::UnitY();  // half-plane: {x : normal . x >= offset}
  double offset = 0.0;
  Vec2 center = Vec2::Zero();   // sphere: free side is outside the disk
  double radius = 0.0;
  double dhat = 1e-2;           // activation distance (m)
  double kappa = 1e4;           // barrier stiffness

  static Collider half_plane(Vec2 normal, double offset, double dhat, double kappa);
  static Collider sphere(Vec2 center, double radius, double dhat, double kappa);

  void validate() const;
  double distance(const Vec2& p) const;
  Vec2 distance_gradient(const Vec2& p) const;
};

/// Scalar IPC barrier b(d) = -kappa (d - dhat)^2 ln(d / dhat) for d < dhat and
/// its first two derivatives. Returns +inf value for d <= 0.
struct BarrierScalar {
  double value = 0.0, first = 0.0, second = 0.0;
};
BarrierScalar barrier(double d, double dhat, double kappa);

/// Barrier energy, gradient and PSD-clamped per-vertex 2x2 Hessian blocks
/// summed over every vertex/collider pair. `hess_blocks` (if non-null)
/// receives one 2x2 block per vertex.
double barrier_terms(const VecX& x, std::span<const Collider> colliders, VecX* grad,
                     std::vector<Mat2>* hess_blocks);

/// Largest step in [0, 1] along `dir` that keeps every vertex strictly on
/// the free side of every collider: min(1, 0.9 * first impact time).
double ccd_filter_step(const VecX& x, const VecX& dir, std::span<const Collider> colliders);

/// Largest step in [0, 1] keeping every triangle's orientation positive:
/// min(1, 0.9 * first root of det F(alpha)).
double inversion_filter_step(const VecX& x, const VecX& dir, const SimMesh& mesh);

/// Smallest positive root of a t^2 + b t + c (degree detected from the
/// coefficients), or +inf when none exists.
double smallest_positive_root(double a, double b, double c);

/// Minimum vertex-collider distance over a configuration (+inf without colliders).
double min_collider_distance(const VecX& x, std::span<const Collider> colliders);

/// Minimum signed element area over a configuration.
double min_element_area(const VecX& x, const SimMesh& mesh);

}  // namespace sms
