#include "sms/solver.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <numeric>

namespace sms {

void SolverConfig::validate() const {
  if (!(epsilon > 0.0)) throw Error("config", "Newton tolerance must be positive");
  if (!(pcg_tol > 0.0)) throw Error("config", "PCG tolerance must be positive");
  if (n_refine_cg < -1) throw Error("config", "refinement iterations must be -1, 0 or positive");
  if (lag.window < 1 || !(lag.threshold > 0.0) || lag.min_gap < 0) throw Error("config", "invalid Hessian lag settings");
  if (max_newton < 1) throw Error("config", "max_newton must be positive");
  if (!(alpha_min > 0.0)) throw Error("config", "alpha_min must be positive");
}

bool hlag_policy(int iteration, std::span<const double> steps, int since_refresh, const LagConfig& cfg) {
  if (iteration == 0) return true;
  if (since_refresh < cfg.min_gap || steps.empty()) return false;
  const size_t count = std::min(steps.size(), static_cast<size_t>(cfg.window));
  const double avg = std::accumulate(steps.end() - count, steps.end(), 0.0) / static_cast<double>(count);
  return avg < cfg.threshold;
}

double mean_hop_radius(const SimMesh& mesh, const PartitionSet& parts) {
  if (parts.count() == 0) return 0.0;
  const auto& topo = mesh.topology;
  std::vector<int> hops(mesh.num_vertices(), -1);
  double total = 0.0;
  for (int i = 0; i < parts.count(); ++i) {
    const auto& sub = parts.subdomain[i];
    std::vector<int> visited{parts.centroid_vertex[i]};
    hops[visited[0]] = 0;
    int radius = 0;
    for (size_t head = 0; head < visited.size(); ++head) {
      const int v = visited[head];
      for (int e : topo.elements_of(v)) {
        if (!std::binary_search(sub.begin(), sub.end(), e)) continue;
        for (int w : mesh.elements[e])
          if (hops[w] < 0) {
            hops[w] = hops[v] + 1;
            radius = std::max(radius, hops[w]);
            visited.push_back(w);
          }
      }
    }
    for (int v : visited) hops[v] = -1;
    total += radius;
  }
  return total / parts.count();
}

int choose_refinement_iters(double mean_radius) { return mean_radius <= 30.0 ? 20 : 40; }

int choose_refinement_iters(const SimMesh& mesh, const PartitionSet& parts) {
  return choose_refinement_iters(mean_hop_radius(mesh, parts));
}

VecX sandwich_apply(const HandleBasis& U, const SparseMat& H, const VecX& q) {
  VecX lifted = U.lift(q);
  VecX applied = H * lifted;
  return U.restrict_to(applied);
}

std::vector<Eigen::Matrix<double, 6, 6>> block_jacobi(const HandleBasis& U, const SparseMat& H) {
  using Mat6 = Eigen::Matrix<double, 6, 6>;
  const int m = U.num_handles();
  std::vector<Mat6> inv(m);
#pragma omp parallel for schedule(dynamic)
  for (int h = 0; h < m; ++h) {
    Mat6 B = Mat6::Zero();
    auto verts = U.support(h);
    auto phis = U.support_weights(h);
    for (size_t k = 0; k < verts.size(); ++k) {
      const int v = verts[k];
      const Eigen::Matrix<double, 2, 6> Gv = U.block(v, h, phis[k]);
      for (int a = 0; a < 2; ++a)
        for (SparseMat::InnerIterator it(H, 2 * v + a); it; ++it) {
          const int w = static_cast<int>(it.col()) / 2, b = static_cast<int>(it.col()) % 2;
          const double phi_w = U.weight(w, h);
          if (phi_w == 0.0) continue;
          B.noalias() += it.value() * Gv.row(a).transpose() * U.block(w, h, phi_w).row(b);
        }
    }
    Eigen::SelfAdjointEigenSolver<Mat6> eig(0.5 * (B + B.transpose()));
    const Vec6 lambda = eig.eigenvalues();
    const double cut = 1e-12 * std::max(lambda.cwiseAbs().maxCoeff(), 1e-300);
    Vec6 invl;
    for (int j = 0; j < 6; ++j) invl[j] = lambda[j] > cut ? 1.0 / lambda[j] : 0.0;
    inv[h] = eig.eigenvectors() * invl.asDiagonal() * eig.eigenvectors().transpose();
  }
  return inv;
}

PcgResult subspace_pcg(const HandleBasis& U, const SparseMat& H, const VecX& rhs, double tol, double reference_norm) {
  const auto inv = block_jacobi(U, H);
  auto apply = [&](const VecX& p, VecX& out) { out = sandwich_apply(U, H, p); };
  auto precondition = [&](const VecX& r, VecX& z) {
    z.resize(r.size());
    for (size_t h = 0; h < inv.size(); ++h) z.segment<6>(6 * h) = inv[h] * r.segment<6>(6 * h);
  };
  return pcg(apply, precondition, rhs, tol, std::max(10 * static_cast<int>(rhs.size()), 10), reference_norm);
}

SubspaceDirection solve_subspace_direction(const SparseMat& H, const VecX& g, const HandleBasis& affine,
                                           const HandleBasis& sms, double tol) {
  SubspaceDirection out;
  out.affine = subspace_pcg(affine, H, -affine.restrict_to(g), tol);
  out.d = affine.lift(out.affine.x);
  VecX r = -g - H * out.d;
  out.sms = subspace_pcg(sms, H, sms.restrict_to(r), tol, sms.restrict_to(g).norm());
  out.d += sms.lift(out.sms.x);
  return out;
}

namespace {

PcgResult masked_jacobi(const SparseMat& H, const VecX& r, double tol, int max_iterations,
                        const std::vector<char>& mask) {
  VecX inv_diag(H.rows());
  VecX diag = H.diagonal();
  for (Eigen::Index i = 0; i < H.rows(); ++i) inv_diag[i] = mask[i] && diag[i] > 0.0 ? 1.0 / diag[i] : 0.0;
  VecX rhs = r;
  for (Eigen::Index i = 0; i < rhs.size(); ++i)
    if (!mask[i]) rhs[i] = 0.0;
  auto apply = [&](const VecX& p, VecX& out) {
    out.noalias() = H * p;
    for (Eigen::Index i = 0; i < out.size(); ++i)
      if (!mask[i]) out[i] = 0.0;
  };
  auto precondition = [&](const VecX& res, VecX& z) { z = inv_diag.cwiseProduct(res); };
  return pcg(apply, precondition, rhs, tol, max_iterations);
}

}  // namespace

PcgResult fullspace_correction(const SparseMat& H, const VecX& r, int iterations, const std::vector<char>& dof_mask) {
  return masked_jacobi(H, r, 0.0, iterations, dof_mask);
}

PcgResult jacobi_pcg(const SparseMat& H, const VecX& r, double tol, int max_iterations,
                     const std::vector<char>& dof_mask) {
  return masked_jacobi(H, r, tol, max_iterations, dof_mask);
}

LineSearchResult filtered_line_search(const IncrementalPotential& ip, const VecX& x, const VecX& d, double energy,
                                      double alpha_min) {
  LineSearchResult res;
  res.alpha0 = std::min({1.0, ccd_filter_step(x, d, ip.colliders()), inversion_filter_step(x, d, ip.mesh())});
  for (double alpha = res.alpha0; alpha >= alpha_min; alpha *= 0.5) {
    VecX trial = x + alpha * d;
    const double e = ip.value(trial);
    if (e < energy) {
      res.alpha = alpha;
      res.x = std::move(trial);
      res.energy = e;
      res.accepted = true;
      return res;
    }
  }
  res.x = x;
  res.energy = energy;
  return res;
}

std::vector<char> free_dof_mask(const SimMesh& mesh) {
  std::vector<char> mask(kDim * mesh.num_vertices(), 1);
  for (int v : mesh.dbc_vertices)
    for (int a = 0; a < kDim; ++a) mask[kDim * v + a] = 0;
  return mask;
}

int NewtonResult::total_pcg() const {
  int total = 0;
  for (const auto& r : records) total += r.pcg_affine + r.pcg_sms + r.cg_refine;
  return total;
}

MultilevelSolver::MultilevelSolver(const SubspaceBases& bases, const ElementSubset* scheme, SolverConfig cfg,
                                   int refine_iters)
    : bases_(bases), scheme_(scheme), cfg_(cfg), refine_iters_(refine_iters) {
  cfg_.validate();
  if (refine_iters_ < 0) throw Error("config", "refinement iterations must be resolved before solving");
}

NewtonResult MultilevelSolver::solve(const IncrementalPotential& ip, const VecX& x0, double h) const {
  const SimMesh& mesh = ip.mesh();
  const auto mask = free_dof_mask(mesh);
  const double scale = h * mesh.num_vertices();
  NewtonResult out;
  out.x = x0;
  EnergyReport rep = ip.evaluate(out.x, {true, true, false});
  if (!rep.finite()) throw Error("solve", "initial configuration is infeasible");

  SparseMat lag_elastic;
  int since_refresh = 0;
  std::vector<double> steps;
  auto descent = [](const VecX& d, const VecX& g) { return d.dot(g) < 0.0; };

  for (int it = 0; it < cfg_.max_newton; ++it) {
    NewtonRecord rec;
    VecX g = rep.gradient;
    for (Eigen::Index i = 0; i < g.size(); ++i)
      if (!mask[i]) g[i] = 0.0;
    rec.energy = rep.value;
    rec.grad_norm = g.norm();

    SparseMat H = ip.evaluate(out.x, {false, false, true}, true, scheme_).hessian;
    auto sub = solve_subspace_direction(H, g, bases_.affine, bases_.sms, cfg_.pcg_tol);
    rec.pcg_affine = sub.affine.iterations;
    rec.pcg_sms = sub.sms.iterations;
    rec.ds_norm = sub.d.norm();
    VecX d = sub.d;

    if (refine_iters_ > 0) {
      auto refresh = [&] {
        lag_elastic = ip.elastic_hessian(out.x, true);
        since_refresh = 0;
        rec.hlag_refresh = true;
      };
      if (hlag_policy(it, steps, since_refresh, cfg_.lag)) refresh();
      VecX r = -g - H * sub.d;
      auto correct = [&] {
        SparseMat Hlag = ip.with_inertia_and_barrier(lag_elastic, out.x);
        auto df = fullspace_correction(Hlag, r, refine_iters_, mask);
        rec.cg_refine += df.iterations;
        return VecX(sub.d + df.x);
      };
      d = correct();
      if (rec.grad_norm > 0.0 && !descent(d, g)) {
        if (!rec.hlag_refresh) {
          refresh();
          d = correct();
        }
        if (!descent(d, g)) {
          d = sub.d;
          rec.fallback = true;
        }
      }
    }

    auto ls = filtered_line_search(ip, out.x, d, rep.value, cfg_.alpha_min);
    if (!ls.accepted) {
      out.records.push_back(rec);
      if (rec.ds_norm / scale < cfg_.epsilon)
        out.converged = true;
      else
        out.line_search_failed = true;
      break;
    }
    rec.alpha = ls.alpha;
    out.x = std::move(ls.x);
    rec.accepted = {ls.energy, min_collider_distance(out.x, ip.colliders()), min_element_area(out.x, ip.mesh())};
    steps.push_back(ls.alpha);
    ++since_refresh;
    rep = ip.evaluate(out.x, {true, true, false});
    out.records.push_back(rec);
    if (rec.ds_norm / scale < cfg_.epsilon) {
      out.converged = true;
      break;
    }
  }
  return out;
}

}  // namespace sms
