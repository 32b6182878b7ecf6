#pragma once

#include "sms/common.hpp"

#include <cmath>

namespace sms {

struct PcgResult {
  VecX x;
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
  bool negative_curvature = false;
};

/// Preconditioned CG from a zero initial guess. `apply(p, out)` computes
/// A p, `precondition(r, out)` computes M^-1 r. Stops when
/// |r| <= tol * max(|b|, reference_norm) or after max_iterations.
template <class Apply, class Precondition>
PcgResult pcg(Apply&& apply, Precondition&& precondition, const VecX& b, double tol, int max_iterations,
              double reference_norm = 0.0) {
  PcgResult res;
  res.x = VecX::Zero(b.size());
  const double bnorm = std::max(b.norm(), reference_norm);
  if (b.norm() == 0.0 || b.norm() <= tol * reference_norm) {
    res.relative_residual = bnorm > 0.0 ? b.norm() / bnorm : 0.0;
    res.converged = true;
    return res;
  }
  VecX r = b, z(b.size()), p, Ap(b.size());
  precondition(r, z);
  p = z;
  double rz = r.dot(z);
  while (res.iterations < max_iterations) {
    apply(p, Ap);
    const double pAp = p.dot(Ap);
    if (!(pAp > 0.0)) {
      res.negative_curvature = true;
      break;
    }
    const double a = rz / pAp;
    res.x += a * p;
    r -= a * Ap;
    ++res.iterations;
    res.relative_residual = r.norm() / bnorm;
    if (res.relative_residual <= tol) {
      res.converged = true;
      break;
    }
    precondition(r, z);
    const double rz_new = r.dot(z);
    p = z + (rz_new / rz) * p;
    rz = rz_new;
  }
  if (res.iterations == 0 && !res.converged) res.relative_residual = b.norm() / bnorm;
  return res;
}

}  // namespace sms
