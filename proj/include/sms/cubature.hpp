#pragma once

#include "sms/basis.hpp"
#include "sms/energy.hpp"

namespace sms {

struct CubatureConfig {
  int degree = 2;
  bool spatial_monomials = true;  // add normalized x, y to the generators
  double tolerance = 1e-9;        // relative moment residual
  std::uint64_t seed = 0;

  void validate() const;
};

/// Moment-fitting system of one partition: rows are products of generator
/// functions (element averages), columns are candidate elements.
struct MomentSystem {
  std::vector<int> elements;
  std::vector<std::vector<int>> index_set;  // multi-indices into the generators, sorted
  int num_generators = 0;
  MatX A;
  VecX b;
  VecX volumes;  // rest areas of the candidates
};

/// Multi-indices with repetition of total degree <= p over g generators.
std::vector<std::vector<int>> product_index_set(int generators, int degree);

/// Generators are the nonzero normalized handle weights on the partition,
/// optionally followed by normalized barycenter coordinates.
MomentSystem build_moment_system(const SimMesh& mesh, const DiscreteOperators& ops, const HandleBasis& basis,
                                 std::span<const int> elements, const CubatureConfig& cfg);

struct NnlsResult {
  VecX w;
  double residual = 0.0;  // ||A w - b||
  int iterations = 0;
  bool converged = true;
};

/// Lawson-Hanson active set.
NnlsResult nnls_solve(const MatX& A, const VecX& b, int max_iterations = 0);

struct PartitionCubature {
  std::vector<int> elements;
  std::vector<double> weights;
  double relative_residual = 0.0;
  int rounds = 0;
  int constraints = 0;
};

/// Iterative sampling: NNLS on a growing candidate set, new candidates drawn
/// with probability proportional to (A_k . r)^2.
PartitionCubature fit_partition_cubature(const MomentSystem& system, const CubatureConfig& cfg, std::uint64_t seed);

struct CubatureScheme {
  std::vector<PartitionCubature> partitions;

  int num_points() const;
  /// Concatenated (element, weight) pairs as an elastic subset.
  ElementSubset subset(const SimMesh& mesh) const;
};

CubatureScheme fit_cubature(const SimMesh& mesh, const DiscreteOperators& ops, const HandleBasis& basis,
                            const PartitionSet& parts, const CubatureConfig& cfg);

/// Elastic Hessian from the scheme, plus exact inertia and barrier terms.
SparseMat cubature_hessian(const IncrementalPotential& ip, const VecX& x, const ElementSubset& scheme);

void write_cubature(const std::filesystem::path& path, const CubatureScheme& scheme);

}  // namespace sms
