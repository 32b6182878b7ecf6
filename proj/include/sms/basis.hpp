#pragma once

#include "sms/partition.hpp"

namespace sms {

using Vec6 = Eigen::Matrix<double, 6, 1>;

/// Scalar field on a vertex subset (sorted), before normalization.
struct WeightField {
  std::vector<int> vertices;
  VecX values;  // clipped to >= 0

  bool empty() const { return vertices.empty(); }
};

/// Minimizes u^T K u on the vertices of `elements` subject to the given
/// Dirichlet values, with K = L A^-1 L assembled on that element set.
/// Returns values on the sorted vertex list of the subdomain (unclipped).
WeightField constrained_biharmonic(const SimMesh& mesh, std::span<const int> elements,
                                   std::span<const double> stiffness,
                                   const std::vector<std::pair<int, double>>& constraints);

/// Handle i: one at its centroid, zero at neighbor centroids, on the internal
/// boundary and at Dirichlet vertices of T_i; clipped to nonnegative.
WeightField solve_handle_weight(const SimMesh& mesh, const PartitionSet& parts, int i,
                                std::span<const double> stiffness);

/// One at Dirichlet vertices, zero at centroids of partitions touching them,
/// solved on the union of those partitions' subdomains. Empty without DBCs.
WeightField build_dbc_weight(const SimMesh& mesh, const PartitionSet& parts, std::span<const double> stiffness);

/// Handles blended by scalar weights: vertex-major CSR plus its transpose.
/// Handle coordinates are [ax0 ax1 ax2 ay0 ay1 ay2]; the displacement at v is
/// sum_i phi_i(v) * (a0 + a1 (x - ox_i) + a2 (y - oy_i)) per axis.
class HandleBasis {
 public:
  HandleBasis() = default;
  HandleBasis(int num_vertices, std::vector<Vec2> origins, const std::vector<std::vector<std::pair<int, double>>>& per_vertex,
              const VecX& rest);

  int num_handles() const { return static_cast<int>(origins_.size()); }
  int num_vertices() const { return static_cast<int>(vertex_offsets_.size()) - 1; }
  int dofs() const { return kHandleDofs * num_handles(); }
  const std::vector<Vec2>& origins() const { return origins_; }

  /// Displacement U q (length 2n).
  VecX lift(const VecX& q) const;
  /// U^T y (length 6m).
  VecX restrict_to(const VecX& y) const;

  /// Weights at a vertex as (handle, phi).
  std::span<const int> handles_at(int v) const;
  std::span<const double> weights_at(int v) const;
  /// Vertices in the support of a handle with their weights.
  std::span<const int> support(int h) const;
  std::span<const double> support_weights(int h) const;
  double weight(int v, int h) const;

  /// The 2 x 6 block of handle h at vertex v, for weight phi.
  Eigen::Matrix<double, 2, 6> block(int v, int h, double phi) const;

  /// Explicit sparse U (2n x 6m), for tests and small problems only.
  SparseMat assemble() const;

 private:
  std::vector<Vec2> origins_;
  VecX rest_;
  std::vector<int> vertex_offsets_, vertex_handles_;
  std::vector<double> vertex_weights_;
  std::vector<int> handle_offsets_, handle_vertices_;
  std::vector<double> handle_weights_;
};

/// Coordinates of one handle reproducing the displacement field L x + t.
Vec6 affine_coordinates(const Vec2& origin, const Mat2& L, const Vec2& t);

struct SubspaceBases {
  HandleBasis affine;  // one handle per object, weight 1 - phi_DBC
  HandleBasis sms;     // one handle per partition
  VecX dbc_weight;     // phi_DBC per vertex
  std::vector<WeightField> raw;  // clipped, unnormalized handle weights
};

/// phi_i(v) = u_i(v) / (sum_j u_j(v) + u_DBC(v)). Returns per-vertex
/// (handle, phi) lists and fills phi_DBC. Throws on a vertex with no weight.
std::vector<std::vector<std::pair<int, double>>> pou_normalize(int num_vertices, const std::vector<WeightField>& weights,
                                                             const WeightField& dbc, VecX& dbc_out);

struct BasisOptions {
  bool material_blind = false;  // uniform stiffness in the bilaplacian
};

SubspaceBases build_bases(const SimMesh& mesh, const MaterialField& materials, const DiscreteOperators& ops,
                          const PartitionSet& parts, const BasisOptions& options = {});

/// Sparse ASCII table "vertex handle phi", DBC weight as handle -1.
void write_weights(const std::filesystem::path& path, const SubspaceBases& bases);

}  // namespace sms
