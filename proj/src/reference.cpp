#include "sms/reference.hpp"

#include <Eigen/SparseCholesky>

namespace sms {

void ReferenceConfig::validate() const {
  if (!(epsilon > 0.0)) throw Error("config", "reference tolerance must be positive");
  if (!(iterative_tol > 0.0)) throw Error("config", "reference CG tolerance must be positive");
  if (max_newton < 1) throw Error("config", "reference max_newton must be positive");
  if (!(alpha_min > 0.0)) throw Error("config", "alpha_min must be positive");
}

int ReferenceResult::total_cg() const {
  int total = 0;
  for (const auto& r : records) total += r.cg_iterations;
  return total;
}

namespace {

// Solves the free block of H d = -g; Dirichlet DOFs stay zero.
VecX direct_solve(const SparseMat& H, const VecX& g, const std::vector<char>& mask) {
  const Eigen::Index n = H.rows();
  std::vector<int> index(n, -1);
  int free = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    if (mask[i]) index[i] = free++;
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(H.nonZeros());
  for (Eigen::Index r = 0; r < n; ++r) {
    if (index[r] < 0) continue;
    for (SparseMat::InnerIterator it(H, r); it; ++it)
      if (index[it.col()] >= 0) trips.emplace_back(index[r], index[it.col()], it.value());
  }
  Eigen::SparseMatrix<double> Hf(free, free);
  Hf.setFromTriplets(trips.begin(), trips.end());
  VecX rhs(free);
  for (Eigen::Index i = 0; i < n; ++i)
    if (index[i] >= 0) rhs[index[i]] = -g[i];
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(Hf);
  if (ldlt.info() != Eigen::Success) throw Error("solve", "reference factorization failed");
  VecX df = ldlt.solve(rhs);
  VecX d = VecX::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i)
    if (index[i] >= 0) d[i] = df[index[i]];
  return d;
}

}  // namespace

ReferenceResult reference_solve(const IncrementalPotential& ip, const VecX& x0, double h, const ReferenceConfig& cfg) {
  cfg.validate();
  const SimMesh& mesh = ip.mesh();
  const auto mask = free_dof_mask(mesh);
  const double scale = h * mesh.num_vertices();
  ReferenceResult out;
  out.x = x0;
  EnergyReport rep = ip.evaluate(out.x, {true, true, true});
  if (!rep.finite()) throw Error("solve", "initial configuration is infeasible");

  for (int it = 0; it < cfg.max_newton; ++it) {
    ReferenceRecord rec;
    VecX g = rep.gradient;
    for (Eigen::Index i = 0; i < g.size(); ++i)
      if (!mask[i]) g[i] = 0.0;
    rec.energy = rep.value;
    rec.grad_norm = g.norm();
    VecX d;
    if (cfg.mode == LinearMode::Direct) {
      d = direct_solve(rep.hessian, g, mask);
    } else {
      auto cg = jacobi_pcg(rep.hessian, -g, cfg.iterative_tol, std::max(10 * static_cast<int>(g.size()), 10), mask);
      d = cg.x;
      rec.cg_iterations = cg.iterations;
      rec.cg_converged = cg.converged;
    }
    rec.d_norm = d.norm();
    auto ls = filtered_line_search(ip, out.x, d, rep.value, cfg.alpha_min);
    if (!ls.accepted) {
      out.records.push_back(rec);
      if (rec.d_norm / scale < cfg.epsilon)
        out.converged = true;
      else
        out.line_search_failed = true;
      break;
    }
    rec.alpha = ls.alpha;
    out.x = std::move(ls.x);
    rec.accepted = {ls.energy, min_collider_distance(out.x, ip.colliders()), min_element_area(out.x, ip.mesh())};
    rep = ip.evaluate(out.x, {true, true, true});
    out.records.push_back(rec);
    if (rec.d_norm / scale < cfg.epsilon) {
      out.converged = true;
      break;
    }
  }
  return out;
}

ErrorReport displacement_error(const VecX& x_ours, const VecX& x_ref, double diagonal) {
  if (x_ours.size() != x_ref.size()) throw Error("compare", "position vectors differ in size");
  if (!(diagonal > 0.0)) throw Error("compare", "bounding-box diagonal must be positive");
  ErrorReport rep;
  const Eigen::Index n = x_ours.size() / kDim;
  rep.per_vertex.resize(n);
  for (Eigen::Index v = 0; v < n; ++v)
    rep.per_vertex[v] = (x_ours.segment<2>(kDim * v) - x_ref.segment<2>(kDim * v)).norm() / diagonal;
  if (n > 0) {
    rep.max = rep.per_vertex.maxCoeff();
    rep.mean = rep.per_vertex.mean();
  }
  return rep;
}

}  // namespace sms
