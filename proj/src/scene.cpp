#include "sms/scene.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace sms {

using json = nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw Error("config", where + ": " + what);
}

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) fail(where, "expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items())
    if (!ok.count(key)) fail(where, "unknown key '" + key + "'");
}

template <class T>
T get(const json& j, const char* key, const std::string& where, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(where + "." + key, e.what());
  }
}

Vec2 get_vec2(const json& j, const char* key, const std::string& where, Vec2 fallback) {
  if (!j.contains(key)) return fallback;
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != 2 || !a[0].is_number() || !a[1].is_number())
    fail(where + "." + key, "expected a pair of numbers");
  return Vec2(a[0].get<double>(), a[1].get<double>());
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

MeshSource parse_mesh(const json& j, const std::string& where, const std::filesystem::path& base) {
  check_keys(j, where, {"type", "origin", "size", "resolution", "radius", "inner_radius", "rings", "segments",
                       "slit_height", "path"});
  MeshSource m;
  m.type = get<std::string>(j, "type", where, m.type);
  m.origin = get_vec2(j, "origin", where, m.origin);
  if (j.contains("size") && j.at("size").is_number()) {
    double s = j.at("size").get<double>();
    m.size = Vec2(s, s);
  } else {
    m.size = get_vec2(j, "size", where, m.size);
  }
  if (j.contains("resolution")) {
    const auto& r = j.at("resolution");
    if (r.is_number_integer()) {
      m.resolution = {r.get<int>(), r.get<int>()};
    } else if (r.is_array() && r.size() == 2 && r[0].is_number_integer() && r[1].is_number_integer()) {
      m.resolution = {r[0].get<int>(), r[1].get<int>()};
    } else {
      fail(where + ".resolution", "expected an integer or a pair of integers");
    }
  }
  m.radius = get<double>(j, "radius", where, m.radius);
  m.inner_radius = get<double>(j, "inner_radius", where, m.inner_radius);
  m.rings = get<int>(j, "rings", where, m.rings);
  m.segments = get<int>(j, "segments", where, m.segments);
  m.slit_height = get<double>(j, "slit_height", where, m.slit_height);
  if (j.contains("path")) m.path = resolve(base, get<std::string>(j, "path", where, ""));
  static const std::set<std::string> types{"rectangle", "disk", "annulus", "slit_square", "h_shape", "file"};
  if (!types.count(m.type)) fail(where + ".type", "unknown mesh type '" + m.type + "'");
  if (m.type == "file" && m.path.empty()) fail(where, "file meshes need a path");
  return m;
}

Collider parse_collider(const json& j, const std::string& where) {
  check_keys(j, where, {"type", "normal", "offset", "center", "radius", "dhat", "kappa"});
  const std::string type = get<std::string>(j, "type", where, "half_plane");
  const double dhat = get<double>(j, "dhat", where, 1e-2);
  const double kappa = get<double>(j, "kappa", where, 1e4);
  if (type == "half_plane") {
    Vec2 n = get_vec2(j, "normal", where, Vec2::UnitY());
    if (!(n.norm() > 0.0)) fail(where + ".normal", "must be nonzero");
    return Collider::half_plane(n.normalized(), get<double>(j, "offset", where, 0.0), dhat, kappa);
  }
  if (type == "sphere")
    return Collider::sphere(get_vec2(j, "center", where, Vec2::Zero()), get<double>(j, "radius", where, 0.0), dhat,
                            kappa);
  fail(where + ".type", "unknown collider type '" + type + "'");
}

}  // namespace

void SceneConfig::validate() const {
  if (objects.empty()) throw Error("config", "scene has no objects");
  if (steps < 0) throw Error("config", "step count must be nonnegative");
  try {
    timestep.validate();
    for (const auto& [label, m] : materials) m.validate();
    for (const auto& c : colliders) c.validate();
    partition.validate();
    cubature.config.validate();
    solver.validate();
    reference.validate();
  } catch (const Error& e) {
    throw Error("config", e.message());
  }
  for (const auto& o : objects) {
    const auto& m = o.mesh;
    if (m.type == "file") {
      if (!std::filesystem::exists(m.path)) throw Error("config", "mesh file not found: " + m.path.string());
    } else if (m.resolution[0] < 1 || m.resolution[1] < 1 || m.rings < 1) {
      throw Error("config", "mesh resolution must be positive");
    } else if (m.type == "annulus" && !(m.inner_radius > 0.0 && m.inner_radius < m.radius && m.segments >= 3)) {
      throw Error("config", "annulus needs 0 < inner_radius < radius and at least 3 segments");
    }
  }
  if (label_file && !std::filesystem::exists(*label_file))
    throw Error("config", "label file not found: " + label_file->string());
}

void SceneConfig::set_seed(std::uint64_t seed) {
  partition.seed = seed;
  cubature.config.seed = seed;
}

SceneConfig parse_scene(const std::string& text, const std::filesystem::path& base) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error("config", std::string("invalid JSON: ") + e.what());
  }
  check_keys(j, "scene", {"name", "objects", "materials", "regions", "label_file", "gravity", "integrator", "h", "steps",
                          "colliders", "dirichlet", "partition", "basis", "cubature", "solver", "reference", "output"});
  SceneConfig s;
  s.name = get<std::string>(j, "name", "scene", s.name);

  if (!j.contains("objects") || !j["objects"].is_array()) fail("scene", "'objects' must be an array");
  for (size_t i = 0; i < j["objects"].size(); ++i) {
    const auto& o = j["objects"][i];
    const std::string where = "objects[" + std::to_string(i) + "]";
    check_keys(o, where, {"mesh", "translate", "velocity", "label"});
    SceneObject obj;
    if (!o.contains("mesh")) fail(where, "missing 'mesh'");
    obj.mesh = parse_mesh(o["mesh"], where + ".mesh", base);
    obj.translate = get_vec2(o, "translate", where, obj.translate);
    obj.velocity = get_vec2(o, "velocity", where, obj.velocity);
    obj.label = get<int>(o, "label", where, obj.label);
    s.objects.push_back(obj);
  }

  if (j.contains("materials")) {
    s.materials.clear();
    for (size_t i = 0; i < j["materials"].size(); ++i) {
      const auto& m = j["materials"][i];
      const std::string where = "materials[" + std::to_string(i) + "]";
      check_keys(m, where, {"label", "youngs", "poisson", "density"});
      Material mat;
      mat.youngs = get<double>(m, "youngs", where, mat.youngs);
      mat.poisson = get<double>(m, "poisson", where, mat.poisson);
      mat.density = get<double>(m, "density", where, mat.density);
      s.materials.emplace_back(get<int>(m, "label", where, 0), mat);
    }
  }
  if (j.contains("regions"))
    for (size_t i = 0; i < j["regions"].size(); ++i) {
      const auto& r = j["regions"][i];
      const std::string where = "regions[" + std::to_string(i) + "]";
      check_keys(r, where, {"lo", "hi", "label"});
      s.regions.push_back({get_vec2(r, "lo", where, Vec2::Zero()), get_vec2(r, "hi", where, Vec2::Zero()),
                           get<int>(r, "label", where, 0)});
    }
  if (j.contains("label_file")) s.label_file = resolve(base, get<std::string>(j, "label_file", "scene", ""));

  s.timestep.gravity = get_vec2(j, "gravity", "scene", Vec2(0, -9.81));
  const std::string integrator = get<std::string>(j, "integrator", "scene", "implicit_euler");
  if (integrator == "implicit_euler")
    s.timestep.integrator = Integrator::ImplicitEuler;
  else if (integrator == "bdf2")
    s.timestep.integrator = Integrator::BDF2;
  else
    fail("scene.integrator", "expected implicit_euler or bdf2");
  s.timestep.h = get<double>(j, "h", "scene", s.timestep.h);
  s.steps = get<int>(j, "steps", "scene", s.steps);

  if (j.contains("colliders"))
    for (size_t i = 0; i < j["colliders"].size(); ++i)
      s.colliders.push_back(parse_collider(j["colliders"][i], "colliders[" + std::to_string(i) + "]"));
  if (j.contains("dirichlet"))
    for (size_t i = 0; i < j["dirichlet"].size(); ++i) {
      const auto& d = j["dirichlet"][i];
      const std::string where = "dirichlet[" + std::to_string(i) + "]";
      check_keys(d, where, {"lo", "hi", "velocity"});
      s.dirichlet.push_back({get_vec2(d, "lo", where, Vec2::Zero()), get_vec2(d, "hi", where, Vec2::Zero()),
                             get_vec2(d, "velocity", where, Vec2::Zero())});
    }

  if (j.contains("partition")) {
    const auto& p = j["partition"];
    check_keys(p, "partition", {"k_init", "gamma", "prune_interval", "imbalance_ratio", "n_prune", "max_iterations",
                                "recenter_candidates", "seed"});
    auto& c = s.partition;
    c.k_init = get<int>(p, "k_init", "partition", c.k_init);
    c.jump_gamma = get<double>(p, "gamma", "partition", c.jump_gamma);
    c.prune_interval = get<int>(p, "prune_interval", "partition", c.prune_interval);
    c.imbalance_ratio = get<double>(p, "imbalance_ratio", "partition", c.imbalance_ratio);
    c.n_prune = get<int>(p, "n_prune", "partition", c.n_prune);
    c.max_iterations = get<int>(p, "max_iterations", "partition", c.max_iterations);
    c.recenter_candidates = get<int>(p, "recenter_candidates", "partition", c.recenter_candidates);
    c.seed = get<std::uint64_t>(p, "seed", "partition", c.seed);
  }
  if (j.contains("basis")) {
    check_keys(j["basis"], "basis", {"material_blind"});
    s.basis.material_blind = get<bool>(j["basis"], "material_blind", "basis", false);
  }
  if (j.contains("cubature")) {
    const auto& c = j["cubature"];
    check_keys(c, "cubature", {"enabled", "degree", "spatial_monomials", "tolerance", "seed"});
    s.cubature.enabled = get<bool>(c, "enabled", "cubature", true);
    auto& k = s.cubature.config;
    k.degree = get<int>(c, "degree", "cubature", k.degree);
    k.spatial_monomials = get<bool>(c, "spatial_monomials", "cubature", k.spatial_monomials);
    k.tolerance = get<double>(c, "tolerance", "cubature", k.tolerance);
    k.seed = get<std::uint64_t>(c, "seed", "cubature", k.seed);
  }
  if (j.contains("solver")) {
    const auto& c = j["solver"];
    check_keys(c, "solver", {"epsilon", "pcg_tol", "refine_cg", "lag_window", "lag_threshold", "lag_min_gap",
                             "max_newton", "alpha_min"});
    auto& k = s.solver;
    k.epsilon = get<double>(c, "epsilon", "solver", k.epsilon);
    k.pcg_tol = get<double>(c, "pcg_tol", "solver", k.pcg_tol);
    if (c.contains("refine_cg")) {
      if (c["refine_cg"].is_string()) {
        if (c["refine_cg"].get<std::string>() != "auto") fail("solver.refine_cg", "expected \"auto\" or an integer");
        k.n_refine_cg = -1;
      } else {
        k.n_refine_cg = get<int>(c, "refine_cg", "solver", -1);
      }
    }
    k.lag.window = get<int>(c, "lag_window", "solver", k.lag.window);
    k.lag.threshold = get<double>(c, "lag_threshold", "solver", k.lag.threshold);
    k.lag.min_gap = get<int>(c, "lag_min_gap", "solver", k.lag.min_gap);
    k.max_newton = get<int>(c, "max_newton", "solver", k.max_newton);
    k.alpha_min = get<double>(c, "alpha_min", "solver", k.alpha_min);
  }
  if (j.contains("reference")) {
    const auto& c = j["reference"];
    check_keys(c, "reference", {"epsilon", "mode", "cg_tol", "max_newton"});
    auto& k = s.reference;
    k.epsilon = get<double>(c, "epsilon", "reference", s.solver.epsilon / 10.0);
    const std::string mode = get<std::string>(c, "mode", "reference", "direct");
    if (mode == "direct")
      k.mode = LinearMode::Direct;
    else if (mode == "iterative")
      k.mode = LinearMode::Iterative;
    else
      fail("reference.mode", "expected direct or iterative");
    k.iterative_tol = get<double>(c, "cg_tol", "reference", k.iterative_tol);
    k.max_newton = get<int>(c, "max_newton", "reference", k.max_newton);
  } else {
    s.reference.epsilon = s.solver.epsilon / 10.0;
  }
  if (j.contains("output")) {
    const auto& c = j["output"];
    check_keys(c, "output", {"dir", "frames"});
    if (c.contains("dir")) s.output.dir = get<std::string>(c, "dir", "output", "out");
    s.output.frames = get<bool>(c, "frames", "output", true);
  }
  s.validate();
  return s;
}

SceneConfig load_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("config", "cannot open scene file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scene(ss.str(), path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

namespace {

RawMesh generate(const MeshSource& m) {
  if (m.type == "rectangle") return meshgen::rectangle(m.origin, m.size, m.resolution[0], m.resolution[1]);
  if (m.type == "disk") return meshgen::disk(m.origin, m.radius, m.rings);
  if (m.type == "annulus") return meshgen::annulus(m.origin, m.radius, m.inner_radius, m.rings, m.segments);
  if (m.type == "slit_square") return meshgen::slit_square(m.origin, m.size.x(), m.resolution[0], m.slit_height);
  if (m.type == "h_shape") return meshgen::h_shape(m.origin, m.size.x(), m.resolution[0]);
  return read_mesh_file(m.path);
}

}  // namespace

SceneMesh build_scene_mesh(const SceneConfig& scene) {
  std::vector<RawMesh> parts;
  std::vector<int> labels;
  std::vector<Vec2> velocities;
  for (const auto& obj : scene.objects) {
    RawMesh raw = generate(obj.mesh);
    for (auto& p : raw.vertices) p += obj.translate;
    labels.insert(labels.end(), raw.triangles.size(), obj.label);
    velocities.insert(velocities.end(), raw.vertices.size(), obj.velocity);
    parts.push_back(std::move(raw));
  }
  RawMesh merged = merge(parts);
  MaterialAssignment assign;
  assign.base_labels = labels;
  assign.regions = scene.regions;
  assign.label_file = scene.label_file;
  assign.materials = scene.materials;
  auto [mesh, mats] = make_sim_mesh(merged, assign);

  for (const auto& box : scene.dirichlet)
    for (int v = 0; v < mesh.num_vertices(); ++v) {
      Vec2 p = mesh.rest_vertex(v);
      if ((p.array() >= box.lo.array()).all() && (p.array() <= box.hi.array()).all()) {
        mesh.dbc_vertices.push_back(v);
        mesh.dbc_velocity.push_back(box.velocity);
      }
    }
  if (!scene.dirichlet.empty()) finalize_mesh(mesh);

  SceneMesh out{std::move(mesh), std::move(mats), VecX()};
  out.velocity.resize(out.mesh.rest.size());
  for (size_t v = 0; v < velocities.size(); ++v) out.velocity.segment<2>(2 * v) = velocities[v];
  for (size_t k = 0; k < out.mesh.dbc_vertices.size(); ++k)
    out.velocity.segment<2>(2 * out.mesh.dbc_vertices[k]) = out.mesh.dbc_velocity[k];
  return out;
}

}  // namespace sms
