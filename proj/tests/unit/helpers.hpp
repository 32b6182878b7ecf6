#pragma once

#include "sms/mesh_io.hpp"

#include <random>

namespace sms::testing {

inline MaterialAssignment uniform_material(double youngs = 1e6, double poisson = 0.3, double density = 1e3) {
  MaterialAssignment a;
  a.materials.push_back({0, Material{youngs, poisson, density}});
  return a;
}

inline MaterialAssignment two_materials(double soft, double stiff, MaterialRegion stiff_region,
                                        double poisson = 0.3, double density = 1e3) {
  MaterialAssignment a;
  a.materials.push_back({0, Material{soft, poisson, density}});
  a.materials.push_back({1, Material{stiff, poisson, density}});
  stiff_region.label = 1;
  a.regions.push_back(stiff_region);
  return a;
}

inline std::pair<SimMesh, MaterialField> unit_square(int n, const MaterialAssignment& a = uniform_material()) {
  return make_sim_mesh(meshgen::rectangle(Vec2::Zero(), Vec2(1, 1), n, n), a);
}

inline RawMesh unit_triangle() {
  RawMesh raw;
  raw.vertices = {Vec2(0, 0), Vec2(1, 0), Vec2(0, 1)};
  raw.triangles = {{0, 1, 2}};
  return raw;
}

inline VecX random_vector(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  VecX v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = u(rng);
  return v;
}

}  // namespace sms::testing
