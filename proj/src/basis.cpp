#include "sms/basis.hpp"

#include <Eigen/SparseCholesky>

#include <fstream>
#include <map>
#include <set>

namespace sms {

namespace {

using ColSparse = Eigen::SparseMatrix<double>;

std::vector<int> vertices_of(const SimMesh& mesh, std::span<const int> elements) {
  std::vector<int> verts;
  verts.reserve(elements.size() * 3);
  for (int e : elements)
    for (int v : mesh.elements[e]) verts.push_back(v);
  std::sort(verts.begin(), verts.end());
  verts.erase(std::unique(verts.begin(), verts.end()), verts.end());
  return verts;
}

std::vector<double> bilaplacian_stiffness(const MaterialField& materials, bool material_blind) {
  if (material_blind) return std::vector<double>(materials.elements.size(), 1.0);
  return normalized_stiffness(materials.youngs());
}

}  // namespace

WeightField constrained_biharmonic(const SimMesh& mesh, std::span<const int> elements,
                                   std::span<const double> stiffness,
                                   const std::vector<std::pair<int, double>>& constraints) {
  WeightField out;
  out.vertices = vertices_of(mesh, elements);
  const int nl = static_cast<int>(out.vertices.size());
  std::unordered_map<int, int> local;
  for (int i = 0; i < nl; ++i) local[out.vertices[i]] = i;

  std::vector<Eigen::Triplet<double>> trips;
  VecX area = VecX::Zero(nl);
  for (int e : elements) {
    const auto& t = mesh.elements[e];
    Vec2 a = mesh.rest_vertex(t[0]), b = mesh.rest_vertex(t[1]), c = mesh.rest_vertex(t[2]);
    double ar = signed_area(a, b, c);
    auto g = hat_gradients(a, b, c);
    Eigen::Matrix3d ke = stiffness[e] * ar * g * g.transpose();
    for (int i = 0; i < 3; ++i) {
      area[local[t[i]]] += ar / 3.0;
      for (int j = 0; j < 3; ++j) trips.emplace_back(local[t[i]], local[t[j]], ke(i, j));
    }
  }
  ColSparse L(nl, nl);
  L.setFromTriplets(trips.begin(), trips.end());
  ColSparse K = L * area.cwiseInverse().asDiagonal() * L;

  VecX value = VecX::Zero(nl);
  std::vector<char> fixed(nl, 0);
  for (auto [v, u] : constraints) {
    auto it = local.find(v);
    if (it == local.end()) continue;
    fixed[it->second] = 1;
    value[it->second] = u;
  }
  std::vector<int> free_index(nl, -1);
  int nf = 0;
  for (int i = 0; i < nl; ++i)
    if (!fixed[i]) free_index[i] = nf++;
  if (nf == 0 || nf == nl) {
    // Nothing to solve, or nothing pinning the null space.
    if (nf == nl) value.setZero();
    out.values = value;
    return out;
  }

  std::vector<Eigen::Triplet<double>> kff;
  VecX rhs = VecX::Zero(nf);
  for (int k = 0; k < K.outerSize(); ++k)
    for (ColSparse::InnerIterator it(K, k); it; ++it) {
      int r = free_index[it.row()];
      if (r < 0) continue;
      int c = free_index[it.col()];
      if (c >= 0)
        kff.emplace_back(r, c, it.value());
      else
        rhs[r] -= it.value() * value[it.col()];
    }
  ColSparse Kff(nf, nf);
  Kff.setFromTriplets(kff.begin(), kff.end());
  Eigen::SimplicialLDLT<ColSparse> solver(Kff);
  if (solver.info() != Eigen::Success) throw Error("basis", "constrained bilaplacian factorization failed");
  VecX uf = solver.solve(rhs);
  if (!uf.allFinite()) throw Error("basis", "constrained bilaplacian solve produced non-finite values");
  for (int i = 0; i < nl; ++i)
    if (free_index[i] >= 0) value[i] = uf[free_index[i]];
  out.values = value;
  return out;
}

namespace {
WeightField clipped(WeightField w) {
  w.values = w.values.cwiseMax(0.0);
  return w;
}
}  // namespace

WeightField solve_handle_weight(const SimMesh& mesh, const PartitionSet& parts, int i,
                                std::span<const double> stiffness) {
  std::vector<std::pair<int, double>> constraints;
  for (int j : parts.neighbors[i]) constraints.push_back({parts.centroid_vertex[j], 0.0});
  for (int v : parts.internal_boundary[i]) constraints.push_back({v, 0.0});
  for (int v : mesh.dbc_vertices) constraints.push_back({v, 0.0});
  // Own centroid wins any overlap.
  std::erase_if(constraints, [&](const auto& c) { return c.first == parts.centroid_vertex[i]; });
  constraints.push_back({parts.centroid_vertex[i], 1.0});
  return clipped(constrained_biharmonic(mesh, parts.subdomain[i], stiffness, constraints));
}

WeightField build_dbc_weight(const SimMesh& mesh, const PartitionSet& parts, std::span<const double> stiffness) {
  if (mesh.dbc_vertices.empty()) return {};
  std::set<int> touching;
  for (int v : mesh.dbc_vertices)
    for (int e : mesh.topology.elements_of(v)) touching.insert(parts.assignment[e]);
  std::set<int> union_elements;
  for (int p : touching) union_elements.insert(parts.subdomain[p].begin(), parts.subdomain[p].end());
  std::vector<int> elements(union_elements.begin(), union_elements.end());

  std::vector<char> inside(mesh.num_elements(), 0);
  for (int e : elements) inside[e] = 1;
  std::vector<std::pair<int, double>> constraints;
  for (int v : vertices_of(mesh, elements)) {
    if (mesh.topology.boundary_vertex[v]) continue;
    for (int e : mesh.topology.elements_of(v))
      if (!inside[e]) {
        constraints.push_back({v, 0.0});
        break;
      }
  }
  for (int p : touching) constraints.push_back({parts.centroid_vertex[p], 0.0});
  std::set<int> dbc(mesh.dbc_vertices.begin(), mesh.dbc_vertices.end());
  std::erase_if(constraints, [&](const auto& c) { return dbc.count(c.first) > 0; });
  for (int v : mesh.dbc_vertices) constraints.push_back({v, 1.0});
  return clipped(constrained_biharmonic(mesh, elements, stiffness, constraints));
}

std::vector<std::vector<std::pair<int, double>>> pou_normalize(int num_vertices, const std::vector<WeightField>& weights,
                                                             const WeightField& dbc, VecX& dbc_out) {
  VecX total = VecX::Zero(num_vertices);
  VecX udbc = VecX::Zero(num_vertices);
  for (size_t k = 0; k < dbc.vertices.size(); ++k) udbc[dbc.vertices[k]] = dbc.values[k];
  for (const auto& w : weights)
    for (size_t k = 0; k < w.vertices.size(); ++k) total[w.vertices[k]] += w.values[k];
  total += udbc;
  for (int v = 0; v < num_vertices; ++v)
    if (!(total[v] > 0.0))
      throw Error("basis", "vertex " + std::to_string(v) + " has zero total weight; partition coverage hole");

  std::vector<std::vector<std::pair<int, double>>> per_vertex(num_vertices);
  for (size_t h = 0; h < weights.size(); ++h) {
    const auto& w = weights[h];
    for (size_t k = 0; k < w.vertices.size(); ++k)
      if (w.values[k] > 0.0) per_vertex[w.vertices[k]].push_back({static_cast<int>(h), w.values[k] / total[w.vertices[k]]});
  }
  dbc_out = udbc.cwiseQuotient(total);
  return per_vertex;
}

HandleBasis::HandleBasis(int num_vertices, std::vector<Vec2> origins,
                         const std::vector<std::vector<std::pair<int, double>>>& per_vertex, const VecX& rest)
    : origins_(std::move(origins)), rest_(rest) {
  vertex_offsets_.assign(num_vertices + 1, 0);
  for (int v = 0; v < num_vertices; ++v) vertex_offsets_[v + 1] = vertex_offsets_[v] + static_cast<int>(per_vertex[v].size());
  vertex_handles_.reserve(vertex_offsets_.back());
  vertex_weights_.reserve(vertex_offsets_.back());
  const int m = num_handles();
  std::vector<int> count(m + 1, 0);
  for (int v = 0; v < num_vertices; ++v) {
    auto entries = per_vertex[v];
    std::sort(entries.begin(), entries.end());
    for (auto [h, phi] : entries) {
      if (h < 0 || h >= m) throw Error("basis", "handle index out of range");
      vertex_handles_.push_back(h);
      vertex_weights_.push_back(phi);
      ++count[h + 1];
    }
  }
  handle_offsets_.assign(m + 1, 0);
  for (int h = 0; h < m; ++h) handle_offsets_[h + 1] = handle_offsets_[h] + count[h + 1];
  handle_vertices_.resize(handle_offsets_.back());
  handle_weights_.resize(handle_offsets_.back());
  std::vector<int> fill(handle_offsets_.begin(), handle_offsets_.end() - 1);
  for (int v = 0; v < num_vertices; ++v)
    for (int k = vertex_offsets_[v]; k < vertex_offsets_[v + 1]; ++k) {
      int slot = fill[vertex_handles_[k]]++;
      handle_vertices_[slot] = v;
      handle_weights_[slot] = vertex_weights_[k];
    }
}

std::span<const int> HandleBasis::handles_at(int v) const {
  return {vertex_handles_.data() + vertex_offsets_[v], vertex_handles_.data() + vertex_offsets_[v + 1]};
}
std::span<const double> HandleBasis::weights_at(int v) const {
  return {vertex_weights_.data() + vertex_offsets_[v], vertex_weights_.data() + vertex_offsets_[v + 1]};
}
std::span<const int> HandleBasis::support(int h) const {
  return {handle_vertices_.data() + handle_offsets_[h], handle_vertices_.data() + handle_offsets_[h + 1]};
}
std::span<const double> HandleBasis::support_weights(int h) const {
  return {handle_weights_.data() + handle_offsets_[h], handle_weights_.data() + handle_offsets_[h + 1]};
}

double HandleBasis::weight(int v, int h) const {
  auto hs = handles_at(v);
  auto it = std::lower_bound(hs.begin(), hs.end(), h);
  if (it == hs.end() || *it != h) return 0.0;
  return weights_at(v)[it - hs.begin()];
}

Eigen::Matrix<double, 2, 6> HandleBasis::block(int v, int h, double phi) const {
  Vec2 r = vertex(rest_, v) - origins_[h];
  Eigen::Matrix<double, 2, 6> b = Eigen::Matrix<double, 2, 6>::Zero();
  b(0, 0) = phi;
  b(0, 1) = phi * r.x();
  b(0, 2) = phi * r.y();
  b(1, 3) = phi;
  b(1, 4) = phi * r.x();
  b(1, 5) = phi * r.y();
  return b;
}

VecX HandleBasis::lift(const VecX& q) const {
  if (q.size() != dofs()) throw Error("basis", "coordinate vector has the wrong size");
  const int n = num_vertices();
  VecX w(2 * n);
#pragma omp parallel for
  for (int v = 0; v < n; ++v) {
    Vec2 out = Vec2::Zero();
    Vec2 x = vertex(rest_, v);
    for (int k = vertex_offsets_[v]; k < vertex_offsets_[v + 1]; ++k) {
      const int h = vertex_handles_[k];
      const double phi = vertex_weights_[k];
      Vec2 r = x - origins_[h];
      const double* a = q.data() + kHandleDofs * h;
      out.x() += phi * (a[0] + a[1] * r.x() + a[2] * r.y());
      out.y() += phi * (a[3] + a[4] * r.x() + a[5] * r.y());
    }
    w.segment<2>(2 * v) = out;
  }
  return w;
}

VecX HandleBasis::restrict_to(const VecX& y) const {
  if (y.size() != 2 * num_vertices()) throw Error("basis", "full-space vector has the wrong size");
  const int m = num_handles();
  VecX z(dofs());
#pragma omp parallel for
  for (int h = 0; h < m; ++h) {
    Vec6 acc = Vec6::Zero();
    for (int k = handle_offsets_[h]; k < handle_offsets_[h + 1]; ++k) {
      const int v = handle_vertices_[k];
      const double phi = handle_weights_[k];
      Vec2 r = vertex(rest_, v) - origins_[h];
      const double yx = phi * y[2 * v], yy = phi * y[2 * v + 1];
      acc += Vec6(yx, yx * r.x(), yx * r.y(), yy, yy * r.x(), yy * r.y());
    }
    z.segment<6>(kHandleDofs * h) = acc;
  }
  return z;
}

SparseMat HandleBasis::assemble() const {
  std::vector<Eigen::Triplet<double>> trips;
  for (int v = 0; v < num_vertices(); ++v) {
    auto hs = handles_at(v);
    auto ws = weights_at(v);
    for (size_t k = 0; k < hs.size(); ++k) {
      auto b = block(v, hs[k], ws[k]);
      for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 6; ++c)
          if (b(r, c) != 0.0) trips.emplace_back(2 * v + r, kHandleDofs * hs[k] + c, b(r, c));
    }
  }
  SparseMat U(2 * num_vertices(), dofs());
  U.setFromTriplets(trips.begin(), trips.end());
  return U;
}

Vec6 affine_coordinates(const Vec2& origin, const Mat2& L, const Vec2& t) {
  Vec2 c = L * origin + t;
  Vec6 q;
  q << c.x(), L(0, 0), L(0, 1), c.y(), L(1, 0), L(1, 1);
  return q;
}

SubspaceBases build_bases(const SimMesh& mesh, const MaterialField& materials, const DiscreteOperators& ops,
                          const PartitionSet& parts, const BasisOptions& options) {
  const int n = mesh.num_vertices();
  auto stiffness = bilaplacian_stiffness(materials, options.material_blind);
  SubspaceBases out;
  out.raw.resize(parts.count());
  std::vector<std::string> failures(parts.count());
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < parts.count(); ++i) {
    try {
      out.raw[i] = solve_handle_weight(mesh, parts, i, stiffness);
    } catch (const std::exception& e) {
      failures[i] = e.what();
    }
  }
  for (const auto& f : failures)
    if (!f.empty()) throw Error("basis", f);
  WeightField dbc = build_dbc_weight(mesh, parts, stiffness);

  auto per_vertex = pou_normalize(n, out.raw, dbc, out.dbc_weight);
  std::vector<Vec2> origins;
  for (int c : parts.centroid_vertex) origins.push_back(mesh.rest_vertex(c));
  out.sms = HandleBasis(n, std::move(origins), per_vertex, mesh.rest);

  // Affine level: one handle per object at its center of mass.
  const int objects = mesh.num_objects();
  std::vector<int> vertex_object(n, 0);
  for (int e = 0; e < mesh.num_elements(); ++e)
    for (int v : mesh.elements[e]) vertex_object[v] = mesh.object_id[e];
  std::vector<Vec2> com(objects, Vec2::Zero());
  std::vector<double> mass(objects, 0.0);
  for (int v = 0; v < n; ++v) {
    com[vertex_object[v]] += ops.mass[v] * mesh.rest_vertex(v);
    mass[vertex_object[v]] += ops.mass[v];
  }
  for (int o = 0; o < objects; ++o) com[o] /= mass[o];
  std::vector<std::vector<std::pair<int, double>>> affine(n);
  for (int v = 0; v < n; ++v) {
    double w = 1.0 - out.dbc_weight[v];
    if (w > 0.0) affine[v].push_back({vertex_object[v], w});
  }
  out.affine = HandleBasis(n, std::move(com), affine, mesh.rest);
  return out;
}

void write_weights(const std::filesystem::path& path, const SubspaceBases& bases) {
  std::ofstream out(path);
  if (!out) throw Error("output", "cannot write " + path.string());
  out.precision(17);
  out << "# vertex handle phi (handle -1 is the Dirichlet weight)\n";
  for (int v = 0; v < bases.sms.num_vertices(); ++v) {
    auto hs = bases.sms.handles_at(v);
    auto ws = bases.sms.weights_at(v);
    for (size_t k = 0; k < hs.size(); ++k) out << v << ' ' << hs[k] << ' ' << ws[k] << '\n';
    if (bases.dbc_weight[v] > 0.0) out << v << " -1 " << bases.dbc_weight[v] << '\n';
  }
}

}  // namespace sms
