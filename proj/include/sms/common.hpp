#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

namespace sms {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
using SparseMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Triangle = std::array<int, 3>;

// Spatial dimension of the simulated meshes.
inline constexpr int kDim = 2;
// Coordinates per affine handle: I_d (x) [1, x, y].
inline constexpr int kHandleDofs = kDim * (kDim + 1);

/// Base class for every error raised by the library. `phase` names the
/// pipeline stage (mesh, partition, basis, cubature, solve, ...).
class Error : public std::runtime_error {
 public:
  Error(std::string phase, const std::string& what)
      : std::runtime_error(phase + ": " + what), phase_(std::move(phase)), message_(what) {}
  const std::string& phase() const { return phase_; }
  const std::string& message() const { return message_; }

 private:
  std::string phase_;
  std::string message_;
};

inline Vec2 vertex(const VecX& x, int v) { return x.segment<2>(kDim * v); }
inline auto vertex(VecX& x, int v) { return x.segment<2>(kDim * v); }

}  // namespace sms
