#pragma once

#include "sms/common.hpp"

#include <optional>
#include <span>

namespace sms {

/// Isotropic material parameters for one element.
struct Material {
  double youngs = 1e6;   // Pa
  double poisson = 0.3;  // unitless, in [0, 0.5)
  double density = 1e3;  // kg / m^2 in 2D

  void validate() const;
  double mu() const { return youngs / (2.0 * (1.0 + poisson)); }
  // Plane strain.
  double lambda() const {
    return youngs * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
  }
};

/// Per-element materials.
struct MaterialField {
  std::vector<Material> elements;

  const Material& operator[](int e) const { return elements[e]; }
  std::vector<double> youngs() const;
};

/// Connectivity derived from the element list.
struct MeshTopology {
  // Neighbor across the edge opposite local vertex k, or -1 on the boundary.
  std::vector<std::array<int, 3>> element_neighbors;
  // CSR incidence vertex -> elements.
  std::vector<int> vertex_element_offsets;
  std::vector<int> vertex_elements;
  // Undirected edges (a < b).
  std::vector<std::array<int, 2>> edges;
  std::vector<char> boundary_vertex;

  std::span<const int> elements_of(int v) const {
    return {vertex_elements.data() + vertex_element_offsets[v],
            vertex_elements.data() + vertex_element_offsets[v + 1]};
  }
};

/// Simplicial triangle mesh in its rest configuration.
struct SimMesh {
  int dim = kDim;
  VecX rest;                           // 2n rest coordinates
  std::vector<Triangle> elements;
  std::vector<int> material_id;        // per element label
  std::vector<int> object_id;          // per element connected component
  std::vector<int> dbc_vertices;       // sorted
  std::vector<Vec2> dbc_velocity;      // prescribed linear motion, parallel to dbc_vertices
  MeshTopology topology;

  int num_vertices() const { return static_cast<int>(rest.size()) / kDim; }
  int num_elements() const { return static_cast<int>(elements.size()); }
  int num_objects() const;
  Vec2 rest_vertex(int v) const { return vertex(rest, v); }
  double rest_area(int e) const;
  bool is_dbc(int v) const;
  std::vector<char> dbc_mask() const;
};

/// Signed area of a triangle.
double signed_area(const Vec2& a, const Vec2& b, const Vec2& c);

/// Validates indices and rest orientation, labels connected components and
/// builds topology. Throws Error("mesh", ...) on bad input.
void finalize_mesh(SimMesh& mesh);

/// Lumped mass, stiffness-weighted Laplacian and rest measures.
struct DiscreteOperators {
  VecX mass;            // per vertex, rho * area / 3 summed
  VecX vertex_area;     // per vertex, area / 3 summed
  VecX volumes;         // per element rest area
  VecX stiffness;       // per element Laplacian weight actually used
  SparseMat laplacian;  // positive semidefinite, rows sum to zero
};

DiscreteOperators build_operators(const SimMesh& mesh, const MaterialField& materials,
                                  std::optional<std::span<const double>> stiffness_override = {});

/// Assembles the weighted P1 Laplacian of an element subset over all vertices.
SparseMat weighted_laplacian(const SimMesh& mesh, std::span<const int> elements,
                             std::span<const double> weight_per_element);

/// Young's modulus divided by its mesh-wide median.
std::vector<double> normalized_stiffness(std::span<const double> stiffness);

/// Axis-aligned bounding box diagonal of a position vector.
double bbox_diagonal(const VecX& x);

/// Gradients of the three P1 hat functions on a rest triangle (rows).
Eigen::Matrix<double, 3, 2> hat_gradients(const Vec2& a, const Vec2& b, const Vec2& c);

}  // namespace sms
