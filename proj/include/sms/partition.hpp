#pragma once

#include "sms/mesh.hpp"

#include <Eigen/SparseCholesky>

#include <filesystem>
#include <memory>
#include <unordered_map>

namespace sms {

/// Heat-method distances on the stiffness-weighted Laplacian of `ops`.
/// Factorizations are built once; single-source fields are cached.
class HeatGeodesics {
 public:
  HeatGeodesics(const SimMesh& mesh, const DiscreteOperators& ops);

  /// Distance to the nearest source. Components without a source get +inf.
  VecX distance(std::span<const int> sources) const;

  /// Cached distance field from a single vertex.
  const VecX& from(int source);
  /// Fills the cache for several sources, in parallel.
  void prefetch(std::span<const int> sources);

  double diffusion_time() const { return t_; }

 private:
  int num_vertices_ = 0;
  std::vector<Triangle> elements_;
  std::vector<Eigen::Matrix<double, 3, 2>> grads_;
  std::vector<double> areas_;
  std::vector<int> vertex_component_;
  std::vector<int> reduced_index_;  // -1 for pinned vertices
  double t_ = 0.0;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> heat_;
  // Zero-boundary heat solve, averaged with the free one for accuracy near the boundary.
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> heat_dirichlet_;
  std::vector<int> interior_index_;
  int interior_count_ = 0;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> poisson_;
  std::unordered_map<int, VecX> cache_;
};

/// Stateless convenience wrapper.
VecX heat_geodesics(const SimMesh& mesh, const DiscreteOperators& ops, std::span<const int> sources);

/// Elements sharing a vertex with an element of another material label get
/// gamma times the smallest stiffness; all others keep theirs.
std::vector<double> jump_penalty_stiffness(const SimMesh& mesh, std::span<const double> stiffness, double gamma);

struct PartitionConfig {
  int k_init = 16;
  double jump_gamma = 0.25;
  int prune_interval = 10;
  double imbalance_ratio = 1.75;
  int n_prune = 5;
  int max_iterations = 100;
  int recenter_candidates = 24;
  std::uint64_t seed = 0;

  void validate() const;
};

struct PartitionSet {
  std::vector<int> assignment;               // per element
  std::vector<int> centroid_vertex;          // per partition
  std::vector<std::vector<int>> elements;    // per partition, sorted
  std::vector<std::vector<int>> neighbors;   // partitions sharing a vertex, sorted
  std::vector<std::vector<int>> subdomain;   // partition plus neighbors, sorted elements
  std::vector<std::vector<int>> internal_boundary;  // sorted vertices
  int iterations = 0;
  bool budget_exhausted = false;

  int count() const { return static_cast<int>(centroid_vertex.size()); }
  std::vector<int> subdomain_vertices(int i, const SimMesh& mesh) const;
};

/// Lloyd relaxation under the heat-geodesic metric of `ops` (which should
/// carry the penalized, normalized stiffness). Centroids are never DBC
/// vertices. The result has subdomains filled in.
PartitionSet partition_mesh(const SimMesh& mesh, const DiscreteOperators& ops, const PartitionConfig& cfg);

/// Recomputes neighbors, subdomains and internal boundaries from the
/// assignment and per-partition element lists.
void extract_subdomains(const SimMesh& mesh, PartitionSet& parts);

/// Operators for clustering: normalized stiffness with the jump penalty.
DiscreteOperators clustering_operators(const SimMesh& mesh, const MaterialField& materials, double gamma);

void write_partition(const std::filesystem::path& path, const PartitionSet& parts);

}  // namespace sms
