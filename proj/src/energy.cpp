#include "sms/energy.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <limits>
#include <numeric>

namespace sms {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

void TimestepConfig::validate() const {
  if (!(h > 0.0)) throw Error("config", "timestep must be positive");
}

VecX predictor(const PredictorState& s, const TimestepConfig& cfg) {
  if (cfg.integrator == Integrator::BDF2 && s.has_history)
    return (4.0 * s.x - s.x_prev) / 3.0 + (2.0 * cfg.h / 9.0) * (4.0 * s.v - s.v_prev);
  return s.x + cfg.h * s.v;
}

VecX velocity_update(const VecX& x_new, const PredictorState& s, const TimestepConfig& cfg) {
  if (cfg.integrator == Integrator::BDF2 && s.has_history) {
    VecX accel = 9.0 / (4.0 * cfg.h * cfg.h) * (x_new - predictor(s, cfg));
    return (4.0 * s.v - s.v_prev) / 3.0 + (2.0 * cfg.h / 3.0) * accel;
  }
  return (x_new - s.x) / cfg.h;
}

PredictorState advance(const PredictorState& s, const VecX& x_new, const TimestepConfig& cfg) {
  PredictorState next;
  next.v = velocity_update(x_new, s, cfg);
  next.x = x_new;
  next.x_prev = s.x;
  next.v_prev = s.v;
  next.has_history = true;
  return next;
}

double snh_density(const Mat2& F, double mu, double lambda) {
  double J = F.determinant();
  if (J <= 0.0) return kInf;
  double lam = lambda + mu;
  return 0.5 * mu * (F.squaredNorm() - 2.0) - mu * (J - 1.0) + 0.5 * lam * (J - 1.0) * (J - 1.0);
}

ElementKinematics element_kinematics(const SimMesh& mesh, const MaterialField& materials, int e) {
  const auto& t = mesh.elements[e];
  Mat2 dm;
  dm.col(0) = mesh.rest_vertex(t[1]) - mesh.rest_vertex(t[0]);
  dm.col(1) = mesh.rest_vertex(t[2]) - mesh.rest_vertex(t[0]);
  ElementKinematics k;
  k.rest_inverse = dm.inverse();
  k.area = 0.5 * dm.determinant();
  k.mu = materials[e].mu();
  k.lambda = materials[e].lambda();
  const Mat2& B = k.rest_inverse;
  k.dFdx.setZero();
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      int row = i + 2 * j;
      k.dFdx(row, 2 * 1 + i) = B(0, j);
      k.dFdx(row, 2 * 2 + i) = B(1, j);
      k.dFdx(row, 2 * 0 + i) = -B(0, j) - B(1, j);
    }
  return k;
}

Mat2 deformation_gradient(const ElementKinematics& k, const Vec2& x0, const Vec2& x1, const Vec2& x2) {
  Mat2 ds;
  ds.col(0) = x1 - x0;
  ds.col(1) = x2 - x0;
  return ds * k.rest_inverse;
}

bool snh_element(const ElementKinematics& k, const Vec2& x0, const Vec2& x1, const Vec2& x2, double* energy,
                 Vec6* grad, Mat6* hess) {
  Mat2 F = deformation_gradient(k, x0, x1, x2);
  double J = F.determinant();
  if (J <= 0.0) {
    if (energy) *energy = kInf;
    return false;
  }
  const double mu = k.mu, lam = k.lambda + k.mu;
  if (energy) *energy = snh_density(F, k.mu, k.lambda);
  Eigen::Vector4d vecF(F(0, 0), F(1, 0), F(0, 1), F(1, 1));
  Eigen::Vector4d dJ(F(1, 1), -F(0, 1), -F(1, 0), F(0, 0));
  double coef = lam * (J - 1.0) - mu;
  if (grad) {
    Eigen::Vector4d P = mu * vecF + coef * dJ;
    *grad = k.dFdx.transpose() * P;
  }
  if (hess) {
    Eigen::Matrix4d d2 = mu * Eigen::Matrix4d::Identity() + lam * dJ * dJ.transpose();
    d2(0, 3) += coef;
    d2(3, 0) += coef;
    d2(1, 2) -= coef;
    d2(2, 1) -= coef;
    *hess = k.dFdx.transpose() * d2 * k.dFdx;
  }
  return true;
}

Mat6 project_psd(const Mat6& m) {
  Eigen::SelfAdjointEigenSolver<Mat6> eig(m);
  if (eig.eigenvalues().minCoeff() >= 0.0) return m;
  Vec6 vals = eig.eigenvalues().cwiseMax(0.0);
  Mat6 out = eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

HessianPattern build_pattern(const SimMesh& mesh, std::span<const int> elements) {
  const int n = mesh.num_vertices();
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(elements.size() * 36 + 4 * n);
  for (int v = 0; v < n; ++v)
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) trips.emplace_back(2 * v + a, 2 * v + b, 0.0);
  for (int e : elements) {
    const auto& t = mesh.elements[e];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b) trips.emplace_back(2 * t[i] + a, 2 * t[j] + b, 0.0);
  }
  HessianPattern p;
  p.matrix.resize(2 * n, 2 * n);
  p.matrix.setFromTriplets(trips.begin(), trips.end());
  p.matrix.makeCompressed();

  const int* outer = p.matrix.outerIndexPtr();
  const int* inner = p.matrix.innerIndexPtr();
  auto slot = [&](int row, int col) {
    const int* begin = inner + outer[row];
    const int* end = inner + outer[row + 1];
    const int* it = std::lower_bound(begin, end, col);
    return static_cast<int>(it - inner);
  };
  p.diag_slots.resize(n);
  for (int v = 0; v < n; ++v)
    p.diag_slots[v] = {slot(2 * v, 2 * v), slot(2 * v, 2 * v + 1), slot(2 * v + 1, 2 * v),
                       slot(2 * v + 1, 2 * v + 1)};
  p.element_slots.resize(elements.size());
  for (size_t idx = 0; idx < elements.size(); ++idx) {
    const auto& t = mesh.elements[elements[idx]];
    for (int r = 0; r < 6; ++r)
      for (int c = 0; c < 6; ++c) p.element_slots[idx][r * 6 + c] = slot(2 * t[r / 2] + r % 2, 2 * t[c / 2] + c % 2);
  }
  return p;
}

ElementSubset make_subset(const SimMesh& mesh, std::vector<int> elements, std::vector<double> weights) {
  if (elements.size() != weights.size()) throw Error("energy", "subset weights do not match elements");
  ElementSubset s;
  s.pattern = build_pattern(mesh, elements);
  s.elements = std::move(elements);
  s.weights = std::move(weights);
  return s;
}

IncrementalPotential::IncrementalPotential(const SimMesh& mesh, const MaterialField& materials,
                                           const DiscreteOperators& ops, std::vector<Collider> colliders)
    : mesh_(mesh), ops_(ops), colliders_(std::move(colliders)) {
  const int m = mesh.num_elements();
  kin_.reserve(m);
  for (int e = 0; e < m; ++e) kin_.push_back(element_kinematics(mesh, materials, e));
  all_elements_.resize(m);
  std::iota(all_elements_.begin(), all_elements_.end(), 0);
  mass_dofs_.resize(2 * mesh.num_vertices());
  for (int v = 0; v < mesh.num_vertices(); ++v) mass_dofs_.segment<2>(2 * v).setConstant(ops.mass[v]);
  x_tilde_ = mesh.rest;
  external_force = VecX::Zero(mesh.rest.size());
  full_pattern_ = build_pattern(mesh, all_elements_);
  for (const auto& c : colliders_) c.validate();
}

void IncrementalPotential::begin_step(const VecX& x_tilde, const TimestepConfig& cfg) {
  cfg.validate();
  x_tilde_ = x_tilde;
  alpha_h2_ = cfg.alpha() * cfg.h * cfg.h;
  gravity = cfg.gravity;
}

void IncrementalPotential::add_elastic(const VecX& x, const std::vector<int>& elements,
                                       const std::vector<double>* weights, const HessianPattern* pattern, bool psd,
                                       bool grad, bool hess, double scale, double& psi, VecX* g,
                                       SparseMat* H) const {
  const int count = static_cast<int>(elements.size());
  std::vector<double> energies(count);
  std::vector<Vec6> grads(grad ? count : 0);
  std::vector<Mat6> hessians(hess ? count : 0);
  std::vector<char> ok(count, 1);
#pragma omp parallel for schedule(static)
  for (int idx = 0; idx < count; ++idx) {
    int e = elements[idx];
    const auto& t = mesh_.elements[e];
    double w = weights ? (*weights)[idx] : kin_[e].area;
    double en = 0.0;
    Vec6 ge;
    Mat6 he;
    if (!snh_element(kin_[e], vertex(x, t[0]), vertex(x, t[1]), vertex(x, t[2]), &en, grad ? &ge : nullptr,
                     hess ? &he : nullptr)) {
      ok[idx] = 0;
      continue;
    }
    energies[idx] = w * en;
    if (grad) grads[idx] = w * ge;
    if (hess) hessians[idx] = psd ? project_psd(w * he) : Mat6(w * he);
  }
  for (int idx = 0; idx < count; ++idx) {
    if (!ok[idx]) {
      psi = kInf;
      return;
    }
    psi += energies[idx];
  }
  if (grad)
    for (int idx = 0; idx < count; ++idx) {
      const auto& t = mesh_.elements[elements[idx]];
      for (int a = 0; a < 3; ++a) g->segment<2>(2 * t[a]) += scale * grads[idx].segment<2>(2 * a);
    }
  if (hess) {
    double* vals = H->valuePtr();
    for (int idx = 0; idx < count; ++idx) {
      const auto& slots = pattern->element_slots[idx];
      for (int k = 0; k < 36; ++k) vals[slots[k]] += scale * hessians[idx](k / 6, k % 6);
    }
  }
}

void IncrementalPotential::add_inertia_barrier_hessian(const VecX& x, const HessianPattern& pattern,
                                                       SparseMat& H) const {
  double* vals = H.valuePtr();
  std::vector<Mat2> blocks;
  barrier_terms(x, colliders_, nullptr, &blocks);
  for (int v = 0; v < mesh_.num_vertices(); ++v) {
    const auto& s = pattern.diag_slots[v];
    vals[s[0]] += ops_.mass[v] + alpha_h2_ * blocks[v](0, 0);
    vals[s[1]] += alpha_h2_ * blocks[v](0, 1);
    vals[s[2]] += alpha_h2_ * blocks[v](1, 0);
    vals[s[3]] += ops_.mass[v] + alpha_h2_ * blocks[v](1, 1);
  }
}

EnergyReport IncrementalPotential::evaluate(const VecX& x, Want want, bool psd, const ElementSubset* elastic) const {
  EnergyReport r;
  const int ndof = static_cast<int>(x.size());
  VecX dx = x - x_tilde_;
  r.inertia = 0.5 * dx.dot(mass_dofs_.cwiseProduct(dx));

  const HessianPattern& pattern = elastic ? elastic->pattern : full_pattern_;
  if (want.gradient) r.gradient = mass_dofs_.cwiseProduct(dx);
  if (want.hessian) {
    r.hessian = pattern.matrix;
    std::fill(r.hessian.valuePtr(), r.hessian.valuePtr() + r.hessian.nonZeros(), 0.0);
  }

  double psi = 0.0;
  add_elastic(x, elastic ? elastic->elements : all_elements_, elastic ? &elastic->weights : nullptr, &pattern, psd,
              want.gradient, want.hessian, alpha_h2_, psi, want.gradient ? &r.gradient : nullptr,
              want.hessian ? &r.hessian : nullptr);
  r.elastic = psi;

  VecX bgrad;
  r.barrier = barrier_terms(x, colliders_, want.gradient ? &bgrad : nullptr, nullptr);

  double ext = 0.0;
  for (int v = 0; v < ndof / kDim; ++v) ext -= ops_.mass[v] * gravity.dot(vertex(x, v));
  ext -= external_force.dot(x);
  r.external = ext;

  r.value = r.inertia + alpha_h2_ * (r.elastic + r.external + r.barrier);
  if (!std::isfinite(r.elastic) || !std::isfinite(r.barrier)) {
    r.value = kInf;
    r.gradient.resize(0);
    r.hessian.resize(0, 0);
    return r;
  }
  if (want.gradient) {
    r.gradient += alpha_h2_ * bgrad;
    for (int v = 0; v < ndof / kDim; ++v) r.gradient.segment<2>(2 * v) -= alpha_h2_ * ops_.mass[v] * gravity;
    r.gradient -= alpha_h2_ * external_force;
  }
  if (want.hessian) add_inertia_barrier_hessian(x, pattern, r.hessian);
  return r;
}

VecX IncrementalPotential::gradient(const VecX& x) const { return evaluate(x, {true, true, false}).gradient; }

double IncrementalPotential::elastic_energy(const VecX& x) const {
  double psi = 0.0;
  add_elastic(x, all_elements_, nullptr, nullptr, false, false, false, 1.0, psi, nullptr, nullptr);
  return psi;
}

SparseMat IncrementalPotential::elastic_hessian(const VecX& x, bool psd) const {
  SparseMat H = full_pattern_.matrix;
  std::fill(H.valuePtr(), H.valuePtr() + H.nonZeros(), 0.0);
  double psi = 0.0;
  add_elastic(x, all_elements_, nullptr, &full_pattern_, psd, false, true, alpha_h2_, psi, nullptr, &H);
  return H;
}

SparseMat IncrementalPotential::with_inertia_and_barrier(const SparseMat& elastic_part, const VecX& x) const {
  SparseMat H = elastic_part;
  add_inertia_barrier_hessian(x, full_pattern_, H);
  return H;
}

}  // namespace sms
