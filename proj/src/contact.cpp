#include "sms/contact.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>

namespace sms {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSafety = 0.9;

Mat2 clamp_psd(const Mat2& m) {
  Eigen::SelfAdjointEigenSolver<Mat2> eig(m);
  Vec2 vals = eig.eigenvalues().cwiseMax(0.0);
  return eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
}

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }
}  // namespace

Collider Collider::half_plane(Vec2 normal, double offset, double dhat, double kappa) {
  Collider c;
  c.shape = Shape::HalfPlane;
  c.normal = normal.normalized();
  c.offset = offset;
  c.dhat = dhat;
  c.kappa = kappa;
  c.validate();
  return c;
}

Collider Collider::sphere(Vec2 center, double radius, double dhat, double kappa) {
  Collider c;
  c.shape = Shape::Sphere;
  c.center = center;
  c.radius = radius;
  c.dhat = dhat;
  c.kappa = kappa;
  c.validate();
  return c;
}

void Collider::validate() const {
  if (!(dhat > 0.0)) throw Error("contact", "barrier activation distance must be positive");
  if (!(kappa > 0.0)) throw Error("contact", "barrier stiffness must be positive");
  if (shape == Shape::HalfPlane && std::abs(normal.norm() - 1.0) > 1e-12)
    throw Error("contact", "half-plane normal must be unit length");
  if (shape == Shape::Sphere && !(radius >= 0.0)) throw Error("contact", "sphere radius must be nonnegative");
}

double Collider::distance(const Vec2& p) const {
  if (shape == Shape::HalfPlane) return normal.dot(p) - offset;
  return (p - center).norm() - radius;
}

Vec2 Collider::distance_gradient(const Vec2& p) const {
  if (shape == Shape::HalfPlane) return normal;
  Vec2 r = p - center;
  double len = r.norm();
  return len > 0 ? Vec2(r / len) : Vec2::UnitY();
}

BarrierScalar barrier(double d, double dhat, double kappa) {
  BarrierScalar b;
  if (d >= dhat) return b;
  if (d <= 0.0) {
    b.value = kInf;
    return b;
  }
  double diff = d - dhat;
  double logr = std::log(d / dhat);
  b.value = -kappa * diff * diff * logr;
  b.first = -kappa * (2.0 * diff * logr + diff * diff / d);
  b.second = -kappa * (2.0 * logr + 4.0 * diff / d - diff * diff / (d * d));
  return b;
}

double barrier_terms(const VecX& x, std::span<const Collider> colliders, VecX* grad,
                     std::vector<Mat2>* hess_blocks) {
  const int n = static_cast<int>(x.size()) / kDim;
  if (grad) grad->setZero(x.size());
  if (hess_blocks) hess_blocks->assign(n, Mat2::Zero());
  double total = 0.0;
  for (const auto& c : colliders) {
    for (int v = 0; v < n; ++v) {
      Vec2 p = vertex(x, v);
      double d = c.distance(p);
      if (d >= c.dhat) continue;
      BarrierScalar b = barrier(d, c.dhat, c.kappa);
      if (!std::isfinite(b.value)) return kInf;
      total += b.value;
      Vec2 nrm = c.distance_gradient(p);
      if (grad) grad->segment<2>(2 * v) += b.first * nrm;
      if (hess_blocks) {
        Mat2 h = b.second * nrm * nrm.transpose();
        if (c.shape == Collider::Shape::Sphere) {
          double rho = (p - c.center).norm();
          if (rho > 0) h += b.first / rho * (Mat2::Identity() - nrm * nrm.transpose());
        }
        (*hess_blocks)[v] += clamp_psd(h);
      }
    }
  }
  return total;
}

double smallest_positive_root(double a, double b, double c) {
  double best = kInf;
  auto consider = [&](double t) {
    if (t > 0.0 && t < best) best = t;
  };
  double scale = std::abs(b) + std::abs(c);
  if (std::abs(a) <= 1e-14 * scale || a == 0.0) {
    if (b != 0.0) consider(-c / b);
    return best;
  }
  double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) return best;
  double sq = std::sqrt(disc);
  double q = -0.5 * (b + (b >= 0 ? sq : -sq));
  if (q != 0.0) {
    consider(q / a);
    consider(c / q);
  } else {
    consider(-b / (2.0 * a));
  }
  return best;
}

double ccd_filter_step(const VecX& x, const VecX& dir, std::span<const Collider> colliders) {
  const int n = static_cast<int>(x.size()) / kDim;
  double impact = kInf;
  for (const auto& c : colliders) {
    for (int v = 0; v < n; ++v) {
      Vec2 p = vertex(x, v), d = vertex(dir, v);
      double dist = c.distance(p);
      if (dist <= 1e-14) return 0.0;
      double t = kInf;
      if (c.shape == Collider::Shape::HalfPlane) {
        double rate = c.normal.dot(d);
        if (rate < 0.0) t = dist / -rate;
      } else {
        Vec2 r = p - c.center;
        t = smallest_positive_root(d.squaredNorm(), 2.0 * r.dot(d), r.squaredNorm() - c.radius * c.radius);
      }
      impact = std::min(impact, t);
    }
  }
  return std::min(1.0, kSafety * impact);
}

double inversion_filter_step(const VecX& x, const VecX& dir, const SimMesh& mesh) {
  double root = kInf;
  for (const auto& t : mesh.elements) {
    Vec2 e1 = vertex(x, t[1]) - vertex(x, t[0]);
    Vec2 e2 = vertex(x, t[2]) - vertex(x, t[0]);
    Vec2 f1 = vertex(dir, t[1]) - vertex(dir, t[0]);
    Vec2 f2 = vertex(dir, t[2]) - vertex(dir, t[0]);
    double c0 = cross(e1, e2);
    if (c0 <= 0.0) return 0.0;
    double c1 = cross(f1, e2) + cross(e1, f2);
    double c2 = cross(f1, f2);
    root = std::min(root, smallest_positive_root(c2, c1, c0));
  }
  return std::min(1.0, kSafety * root);
}

double min_collider_distance(const VecX& x, std::span<const Collider> colliders) {
  double best = kInf;
  for (const auto& c : colliders)
    for (int v = 0; v < static_cast<int>(x.size()) / kDim; ++v) best = std::min(best, c.distance(vertex(x, v)));
  return best;
}

double min_element_area(const VecX& x, const SimMesh& mesh) {
  double best = kInf;
  for (const auto& t : mesh.elements)
    best = std::min(best, signed_area(vertex(x, t[0]), vertex(x, t[1]), vertex(x, t[2])));
  return best;
}

}  // namespace sms
