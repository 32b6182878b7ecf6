#include "sms/partition.hpp"

#include <limits>

namespace sms {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
using ColSparse = Eigen::SparseMatrix<double>;
}  // namespace

HeatGeodesics::HeatGeodesics(const SimMesh& mesh, const DiscreteOperators& ops)
    : num_vertices_(mesh.num_vertices()), elements_(mesh.elements) {
  const int n = num_vertices_;
  const int m = mesh.num_elements();
  grads_.resize(m);
  areas_.resize(m);
  double edge_sum = 0.0;
  for (int e = 0; e < m; ++e) {
    const auto& t = mesh.elements[e];
    Vec2 a = mesh.rest_vertex(t[0]), b = mesh.rest_vertex(t[1]), c = mesh.rest_vertex(t[2]);
    grads_[e] = hat_gradients(a, b, c);
    areas_[e] = signed_area(a, b, c);
  }
  for (const auto& ed : mesh.topology.edges)
    edge_sum += (mesh.rest_vertex(ed[0]) - mesh.rest_vertex(ed[1])).norm();
  double mean_edge = edge_sum / static_cast<double>(mesh.topology.edges.size());
  t_ = mean_edge * mean_edge;

  ColSparse lap = ColSparse(ops.laplacian);
  ColSparse heat = t_ * lap;
  for (int v = 0; v < n; ++v) heat.coeffRef(v, v) += ops.vertex_area[v];
  heat_.compute(heat);
  if (heat_.info() != Eigen::Success) throw Error("geodesic", "heat system factorization failed");

  interior_index_.assign(n, -1);
  for (int v = 0; v < n; ++v)
    if (!mesh.topology.boundary_vertex[v]) interior_index_[v] = interior_count_++;
  if (interior_count_ > 0) {
    std::vector<Eigen::Triplet<double>> trips;
    for (int k = 0; k < heat.outerSize(); ++k)
      for (ColSparse::InnerIterator it(heat, k); it; ++it)
        if (interior_index_[it.row()] >= 0 && interior_index_[it.col()] >= 0)
          trips.emplace_back(interior_index_[it.row()], interior_index_[it.col()], it.value());
    ColSparse inner(interior_count_, interior_count_);
    inner.setFromTriplets(trips.begin(), trips.end());
    heat_dirichlet_.compute(inner);
    if (heat_dirichlet_.info() != Eigen::Success) throw Error("geodesic", "heat system factorization failed");
  }

  // One pinned vertex per connected component makes the Poisson problem definite.
  vertex_component_.assign(n, -1);
  for (int e = 0; e < m; ++e)
    for (int v : mesh.elements[e]) vertex_component_[v] = mesh.object_id[e];
  std::vector<char> pinned_component(mesh.num_objects(), 0);
  reduced_index_.assign(n, -1);
  int free = 0;
  for (int v = 0; v < n; ++v) {
    int c = vertex_component_[v];
    if (!pinned_component[c]) {
      pinned_component[c] = 1;
      continue;
    }
    reduced_index_[v] = free++;
  }
  std::vector<Eigen::Triplet<double>> trips;
  for (int r = 0; r < ops.laplacian.outerSize(); ++r) {
    if (reduced_index_[r] < 0) continue;
    for (SparseMat::InnerIterator it(ops.laplacian, r); it; ++it)
      if (reduced_index_[it.col()] >= 0) trips.emplace_back(reduced_index_[r], reduced_index_[it.col()], it.value());
  }
  ColSparse reduced(free, free);
  reduced.setFromTriplets(trips.begin(), trips.end());
  if (free > 0) {
    poisson_.compute(reduced);
    if (poisson_.info() != Eigen::Success) throw Error("geodesic", "Poisson system factorization failed");
  }
}

VecX HeatGeodesics::distance(std::span<const int> sources) const {
  const int n = num_vertices_;
  if (sources.empty()) throw Error("geodesic", "distance query needs at least one source");
  VecX delta = VecX::Zero(n);
  for (int s : sources) {
    if (s < 0 || s >= n) throw Error("geodesic", "source vertex out of range");
    delta[s] = 1.0;
  }
  VecX u = heat_.solve(delta);
  bool interior_sources = interior_count_ > 0;
  for (int s : sources) interior_sources = interior_sources && interior_index_[s] >= 0;
  if (interior_sources) {
    VecX inner_delta = VecX::Zero(interior_count_);
    for (int s : sources) inner_delta[interior_index_[s]] = 1.0;
    VecX ud = heat_dirichlet_.solve(inner_delta);
    for (int v = 0; v < n; ++v) u[v] = 0.5 * (u[v] + (interior_index_[v] >= 0 ? ud[interior_index_[v]] : 0.0));
  }

  VecX div = VecX::Zero(n);
  for (size_t e = 0; e < elements_.size(); ++e) {
    const auto& t = elements_[e];
    Vec2 grad = grads_[e].transpose() * Eigen::Vector3d(u[t[0]], u[t[1]], u[t[2]]);
    double len = grad.norm();
    if (!(len > 0.0) || !std::isfinite(len)) continue;
    Vec2 X = -grad / len;
    for (int k = 0; k < 3; ++k) div[t[k]] += areas_[e] * grads_[e].row(k).dot(X);
  }

  VecX rhs(poisson_.rows());
  for (int v = 0; v < n; ++v)
    if (reduced_index_[v] >= 0) rhs[reduced_index_[v]] = div[v];
  VecX sol = rhs.size() > 0 ? VecX(poisson_.solve(rhs)) : VecX();
  VecX phi(n);
  for (int v = 0; v < n; ++v) phi[v] = reduced_index_[v] >= 0 ? sol[reduced_index_[v]] : 0.0;

  const int components = vertex_component_.empty() ? 0 : *std::max_element(vertex_component_.begin(), vertex_component_.end()) + 1;
  std::vector<double> shift(components, kInf);
  for (int s : sources) shift[vertex_component_[s]] = std::min(shift[vertex_component_[s]], phi[s]);
  for (int v = 0; v < n; ++v) {
    double s = shift[vertex_component_[v]];
    phi[v] = std::isfinite(s) ? std::max(0.0, phi[v] - s) : kInf;
  }
  for (int s : sources) phi[s] = 0.0;
  return phi;
}

const VecX& HeatGeodesics::from(int source) {
  auto it = cache_.find(source);
  if (it != cache_.end()) return it->second;
  const int src[1] = {source};
  return cache_.emplace(source, distance(src)).first->second;
}

void HeatGeodesics::prefetch(std::span<const int> sources) {
  std::vector<int> missing;
  for (int s : sources)
    if (!cache_.count(s) && std::find(missing.begin(), missing.end(), s) == missing.end()) missing.push_back(s);
  std::vector<VecX> fields(missing.size());
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < static_cast<int>(missing.size()); ++i) {
    const int src[1] = {missing[i]};
    fields[i] = distance(src);
  }
  for (size_t i = 0; i < missing.size(); ++i) cache_.emplace(missing[i], std::move(fields[i]));
}

VecX heat_geodesics(const SimMesh& mesh, const DiscreteOperators& ops, std::span<const int> sources) {
  return HeatGeodesics(mesh, ops).distance(sources);
}

}  // namespace sms
