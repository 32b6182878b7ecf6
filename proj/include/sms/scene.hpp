#pragma once

#include "sms/cubature.hpp"
#include "sms/energy.hpp"
#include "sms/mesh_io.hpp"
#include "sms/partition.hpp"
#include "sms/reference.hpp"
#include "sms/solver.hpp"

#include <filesystem>
#include <string>

namespace sms {

/// Mesh source of one object: a generator or a file.
struct MeshSource {
  std::string type = "rectangle";  // rectangle | disk | annulus | slit_square | h_shape | file
  Vec2 origin = Vec2::Zero();
  Vec2 size = Vec2(1, 1);
  std::array<int, 2> resolution{8, 8};
  double radius = 0.5;
  double inner_radius = 0.4;  // annulus
  int rings = 8;              // disk rings, annulus radial layers
  int segments = 64;          // annulus
  double slit_height = 0.5;
  std::filesystem::path path;
};

struct SceneObject {
  MeshSource mesh;
  Vec2 translate = Vec2::Zero();
  Vec2 velocity = Vec2::Zero();
  int label = 0;
};

/// Vertices whose rest position lies in the box follow x(t) = x_rest + v t.
struct DirichletBox {
  Vec2 lo, hi;
  Vec2 velocity = Vec2::Zero();
};

struct CubatureSettings {
  bool enabled = true;
  CubatureConfig config;
};

struct OutputSettings {
  std::filesystem::path dir = "out";
  bool frames = true;
};

struct SceneConfig {
  std::string name = "scene";
  std::vector<SceneObject> objects;
  std::vector<std::pair<int, Material>> materials{{0, Material{}}};
  std::vector<MaterialRegion> regions;
  std::optional<std::filesystem::path> label_file;
  TimestepConfig timestep;
  int steps = 1;
  std::vector<Collider> colliders;
  std::vector<DirichletBox> dirichlet;
  PartitionConfig partition;
  BasisOptions basis;
  CubatureSettings cubature;
  SolverConfig solver;
  ReferenceConfig reference;
  OutputSettings output;

  void validate() const;
  /// Replaces the partition and cubature seeds.
  void set_seed(std::uint64_t seed);
};

/// Parses a JSON scene. Relative mesh and label paths resolve against the
/// scene file's directory.
SceneConfig load_scene(const std::filesystem::path& path);
SceneConfig parse_scene(const std::string& json_text, const std::filesystem::path& base_dir = ".");

/// Assembled mesh, materials and initial velocities of a scene.
struct SceneMesh {
  SimMesh mesh;
  MaterialField materials;
  VecX velocity;
};

SceneMesh build_scene_mesh(const SceneConfig& scene);

}  // namespace sms
