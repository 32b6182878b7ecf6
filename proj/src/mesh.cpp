#include "sms/mesh.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <map>
#include <numeric>

namespace sms {

void Material::validate() const {
  if (!(youngs > 0.0)) throw Error("mesh", "Young's modulus must be positive");
  if (!(poisson >= 0.0 && poisson < 0.5)) throw Error("mesh", "Poisson ratio must lie in [0, 0.5)");
  if (!(density > 0.0)) throw Error("mesh", "density must be positive");
}

std::vector<double> MaterialField::youngs() const {
  std::vector<double> out(elements.size());
  for (size_t e = 0; e < elements.size(); ++e) out[e] = elements[e].youngs;
  return out;
}

double signed_area(const Vec2& a, const Vec2& b, const Vec2& c) {
  return 0.5 * ((b - a).x() * (c - a).y() - (b - a).y() * (c - a).x());
}

double SimMesh::rest_area(int e) const {
  const auto& t = elements[e];
  return signed_area(rest_vertex(t[0]), rest_vertex(t[1]), rest_vertex(t[2]));
}

int SimMesh::num_objects() const {
  return object_id.empty() ? 0 : *std::max_element(object_id.begin(), object_id.end()) + 1;
}

bool SimMesh::is_dbc(int v) const {
  return std::binary_search(dbc_vertices.begin(), dbc_vertices.end(), v);
}

std::vector<char> SimMesh::dbc_mask() const {
  std::vector<char> mask(num_vertices(), 0);
  for (int v : dbc_vertices) mask[v] = 1;
  return mask;
}

namespace {

int find_root(std::vector<int>& parent, int a) {
  while (parent[a] != a) {
    parent[a] = parent[parent[a]];
    a = parent[a];
  }
  return a;
}

}  // namespace

void finalize_mesh(SimMesh& mesh) {
  if (mesh.dim != kDim) throw Error("mesh", "only 2D triangle meshes are supported");
  const int n = mesh.num_vertices();
  const int m = mesh.num_elements();
  if (n == 0 || m == 0) throw Error("mesh", "empty mesh");
  if (static_cast<int>(mesh.material_id.size()) != m) mesh.material_id.assign(m, 0);

  for (int e = 0; e < m; ++e) {
    for (int k = 0; k < 3; ++k) {
      int v = mesh.elements[e][k];
      if (v < 0 || v >= n)
        throw Error("mesh", "element " + std::to_string(e) + " has out-of-range vertex index " +
                                std::to_string(v));
    }
    const auto& t = mesh.elements[e];
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2])
      throw Error("mesh", "element " + std::to_string(e) + " repeats a vertex");
    double area = mesh.rest_area(e);
    double scale = std::max({(mesh.rest_vertex(t[1]) - mesh.rest_vertex(t[0])).squaredNorm(),
                             (mesh.rest_vertex(t[2]) - mesh.rest_vertex(t[0])).squaredNorm(),
                             (mesh.rest_vertex(t[2]) - mesh.rest_vertex(t[1])).squaredNorm()});
    if (area <= 1e-12 * scale)
      throw Error("mesh", "element " + std::to_string(e) +
                              (area < 0 ? " is inverted at rest" : " is degenerate at rest"));
  }

  auto& topo = mesh.topology;
  topo = MeshTopology{};

  topo.vertex_element_offsets.assign(n + 1, 0);
  for (const auto& t : mesh.elements)
    for (int v : t) ++topo.vertex_element_offsets[v + 1];
  std::partial_sum(topo.vertex_element_offsets.begin(), topo.vertex_element_offsets.end(),
                   topo.vertex_element_offsets.begin());
  topo.vertex_elements.resize(topo.vertex_element_offsets.back());
  {
    std::vector<int> fill(topo.vertex_element_offsets.begin(), topo.vertex_element_offsets.end() - 1);
    for (int e = 0; e < m; ++e)
      for (int v : mesh.elements[e]) topo.vertex_elements[fill[v]++] = e;
  }

  for (int v = 0; v < n; ++v)
    if (topo.vertex_element_offsets[v] == topo.vertex_element_offsets[v + 1])
      throw Error("mesh", "vertex " + std::to_string(v) + " is not used by any element");

  // Edge -> (element, local opposite vertex).
  std::map<std::pair<int, int>, std::vector<std::pair<int, int>>> edge_map;
  for (int e = 0; e < m; ++e) {
    const auto& t = mesh.elements[e];
    for (int k = 0; k < 3; ++k) {
      int a = t[(k + 1) % 3], b = t[(k + 2) % 3];
      edge_map[{std::min(a, b), std::max(a, b)}].push_back({e, k});
    }
  }
  topo.element_neighbors.assign(m, {-1, -1, -1});
  topo.boundary_vertex.assign(n, 0);
  topo.edges.reserve(edge_map.size());
  for (const auto& [key, uses] : edge_map) {
    topo.edges.push_back({key.first, key.second});
    if (uses.size() > 2)
      throw Error("mesh", "non-manifold edge (" + std::to_string(key.first) + ", " +
                              std::to_string(key.second) + ")");
    if (uses.size() == 1) {
      topo.boundary_vertex[key.first] = 1;
      topo.boundary_vertex[key.second] = 1;
    } else {
      topo.element_neighbors[uses[0].first][uses[0].second] = uses[1].first;
      topo.element_neighbors[uses[1].first][uses[1].second] = uses[0].first;
    }
  }

  // Connected components over shared vertices.
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  for (const auto& t : mesh.elements) {
    int r0 = find_root(parent, t[0]);
    for (int k = 1; k < 3; ++k) {
      int rk = find_root(parent, t[k]);
      if (rk != r0) parent[rk] = r0;
    }
  }
  std::map<int, int> label_of_root;
  mesh.object_id.assign(m, 0);
  for (int e = 0; e < m; ++e) {
    int r = find_root(parent, mesh.elements[e][0]);
    auto it = label_of_root.try_emplace(r, static_cast<int>(label_of_root.size())).first;
    mesh.object_id[e] = it->second;
  }

  if (mesh.dbc_velocity.size() != mesh.dbc_vertices.size())
    mesh.dbc_velocity.assign(mesh.dbc_vertices.size(), Vec2::Zero());
  std::vector<size_t> order(mesh.dbc_vertices.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return mesh.dbc_vertices[a] < mesh.dbc_vertices[b]; });
  std::vector<int> sorted_v;
  std::vector<Vec2> sorted_vel;
  for (size_t i : order) {
    if (!sorted_v.empty() && sorted_v.back() == mesh.dbc_vertices[i]) continue;
    if (mesh.dbc_vertices[i] < 0 || mesh.dbc_vertices[i] >= n)
      throw Error("mesh", "Dirichlet vertex index out of range");
    sorted_v.push_back(mesh.dbc_vertices[i]);
    sorted_vel.push_back(mesh.dbc_velocity[i]);
  }
  mesh.dbc_vertices = std::move(sorted_v);
  mesh.dbc_velocity = std::move(sorted_vel);
}

Eigen::Matrix<double, 3, 2> hat_gradients(const Vec2& a, const Vec2& b, const Vec2& c) {
  Mat2 dm;
  dm.col(0) = b - a;
  dm.col(1) = c - a;
  Mat2 inv = dm.inverse();
  Eigen::Matrix<double, 3, 2> g;
  g.row(1) = inv.row(0);
  g.row(2) = inv.row(1);
  g.row(0) = -(g.row(1) + g.row(2));
  return g;
}

SparseMat weighted_laplacian(const SimMesh& mesh, std::span<const int> elements,
                             std::span<const double> weight_per_element) {
  const int n = mesh.num_vertices();
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(elements.size() * 9);
  for (int e : elements) {
    const auto& t = mesh.elements[e];
    Vec2 a = mesh.rest_vertex(t[0]), b = mesh.rest_vertex(t[1]), c = mesh.rest_vertex(t[2]);
    double area = signed_area(a, b, c);
    auto g = hat_gradients(a, b, c);
    Eigen::Matrix3d ke = weight_per_element[e] * area * g * g.transpose();
    // Exact zero row sums regardless of rounding in the hat gradients.
    for (int i = 0; i < 3; ++i) {
      double off = 0.0;
      for (int j = 0; j < 3; ++j)
        if (j != i) off += ke(i, j);
      ke(i, i) = -off;
    }
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) trips.emplace_back(t[i], t[j], ke(i, j));
  }
  SparseMat lap(n, n);
  lap.setFromTriplets(trips.begin(), trips.end());
  lap.makeCompressed();
  return lap;
}

DiscreteOperators build_operators(const SimMesh& mesh, const MaterialField& materials,
                                  std::optional<std::span<const double>> stiffness_override) {
  const int n = mesh.num_vertices();
  const int m = mesh.num_elements();
  if (static_cast<int>(materials.elements.size()) != m)
    throw Error("mesh", "material field size does not match element count");
  if (stiffness_override && static_cast<int>(stiffness_override->size()) != m)
    throw Error("mesh", "stiffness override size does not match element count");

  DiscreteOperators ops;
  ops.mass = VecX::Zero(n);
  ops.vertex_area = VecX::Zero(n);
  ops.volumes.resize(m);
  ops.stiffness.resize(m);
  for (int e = 0; e < m; ++e) {
    double area = mesh.rest_area(e);
    ops.volumes[e] = area;
    ops.stiffness[e] = stiffness_override ? (*stiffness_override)[e] : materials[e].youngs;
    for (int v : mesh.elements[e]) {
      ops.mass[v] += materials[e].density * area / 3.0;
      ops.vertex_area[v] += area / 3.0;
    }
  }
  std::vector<int> all(m);
  std::iota(all.begin(), all.end(), 0);
  ops.laplacian = weighted_laplacian(
      mesh, all, std::span<const double>(ops.stiffness.data(), static_cast<size_t>(m)));
  return ops;
}

std::vector<double> normalized_stiffness(std::span<const double> stiffness) {
  std::vector<double> sorted(stiffness.begin(), stiffness.end());
  if (sorted.empty()) return sorted;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  double median = sorted[sorted.size() / 2];
  std::vector<double> out(stiffness.begin(), stiffness.end());
  for (double& s : out) s /= median;
  return out;
}

double bbox_diagonal(const VecX& x) {
  const int n = static_cast<int>(x.size()) / kDim;
  if (n == 0) return 0.0;
  Vec2 lo = vertex(x, 0), hi = lo;
  for (int v = 1; v < n; ++v) {
    lo = lo.cwiseMin(vertex(x, v));
    hi = hi.cwiseMax(vertex(x, v));
  }
  return (hi - lo).norm();
}

}  // namespace sms
