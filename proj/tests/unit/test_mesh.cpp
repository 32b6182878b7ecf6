#include <doctest.h>

#include "unit/helpers.hpp"

#include <filesystem>
#include <fstream>
#include <set>

using namespace sms;
using namespace sms::testing;

namespace {

std::filesystem::path temp_file(const std::string& name, const std::string& contents) {
  auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream(path) << contents;
  return path;
}

}  // namespace

TEST_CASE("unit right triangle loads with area one half") {
  auto [mesh, mats] = make_sim_mesh(unit_triangle(), uniform_material());
  CHECK(mesh.num_vertices() == 3);
  CHECK(mesh.num_elements() == 1);
  CHECK(mesh.rest_area(0) == doctest::Approx(0.5));
}

TEST_CASE("two-triangle square shares exactly one interior edge") {
  auto [mesh, mats] = unit_square(1);
  int shared = 0;
  for (const auto& nb : mesh.topology.element_neighbors)
    for (int k : nb) shared += k >= 0;
  CHECK(shared == 2);  // counted once from each side
  CHECK(mesh.topology.edges.size() == 5);
}

TEST_CASE("disjoint squares get two object labels") {
  auto raw = merge({meshgen::rectangle(Vec2(0, 0), Vec2(1, 1), 2, 2), meshgen::rectangle(Vec2(3, 0), Vec2(1, 1), 2, 2)});
  auto [mesh, mats] = make_sim_mesh(raw, uniform_material());
  std::set<int> ids(mesh.object_id.begin(), mesh.object_id.end());
  CHECK(ids.size() == 2);
  CHECK(mesh.num_objects() == 2);
}

TEST_CASE("invalid meshes are rejected") {
  RawMesh raw = unit_triangle();
  SUBCASE("inverted") {
    raw.triangles = {{0, 2, 1}};
    CHECK_THROWS_AS(make_sim_mesh(raw, uniform_material()), Error);
  }
  SUBCASE("degenerate") {
    raw.vertices[2] = Vec2(2, 0);
    CHECK_THROWS_AS(make_sim_mesh(raw, uniform_material()), Error);
  }
  SUBCASE("out of range") {
    raw.triangles = {{0, 1, 7}};
    CHECK_THROWS_AS(make_sim_mesh(raw, uniform_material()), Error);
  }
  SUBCASE("missing material label") {
    MaterialAssignment a;
    a.default_label = 3;
    a.materials.push_back({0, Material{}});
    CHECK_THROWS_AS(make_sim_mesh(raw, a), Error);
  }
}

TEST_CASE("material validation") {
  CHECK_THROWS_AS(make_sim_mesh(unit_triangle(), uniform_material(-1.0)), Error);
  CHECK_THROWS_AS(make_sim_mesh(unit_triangle(), uniform_material(1e6, 0.5)), Error);
  CHECK_THROWS_AS(make_sim_mesh(unit_triangle(), uniform_material(1e6, 0.3, 0.0)), Error);
}

TEST_CASE("OBJ and node/ele readers") {
  SUBCASE("obj planar") {
    auto p = temp_file("sms_tri.obj", "# tri\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1 2/2 3/3\n");
    auto raw = read_mesh_file(p);
    CHECK(raw.vertices.size() == 3);
    CHECK(raw.triangles[0] == Triangle{0, 1, 2});
  }
  SUBCASE("obj with z rejected") {
    auto p = temp_file("sms_tri3d.obj", "v 0 0 0\nv 1 0 1\nv 0 1 0\nf 1 2 3\n");
    CHECK_THROWS_AS(read_mesh_file(p), Error);
  }
  SUBCASE("node/ele one-based") {
    temp_file("sms_one.node", "4 2 0 0\n1 0 0\n2 1 0\n3 1 1\n4 0 1\n");
    auto p = temp_file("sms_one.ele", "2 3 0\n1 1 2 3\n2 1 3 4\n");
    auto raw = read_mesh_file(p);
    CHECK(raw.triangles[1] == Triangle{0, 2, 3});
  }
  SUBCASE("node/ele zero-based") {
    temp_file("sms_zero.node", "3 2 0 0\n0 0 0\n1 1 0\n2 0 1\n");
    auto p = temp_file("sms_zero.ele", "1 3 0\n0 0 1 2\n");
    auto raw = read_mesh_file(std::filesystem::path(p).replace_extension(".node"));
    CHECK(raw.triangles[0] == Triangle{0, 1, 2});
  }
  SUBCASE("garbage") {
    auto p = temp_file("sms_bad.obj", "v 0 zero 0\n");
    CHECK_THROWS_AS(read_mesh_file(p), Error);
  }
  SUBCASE("label file") {
    auto labels = temp_file("sms_labels.txt", "1\n");
    MaterialAssignment a = uniform_material();
    a.materials.push_back({1, Material{5e6, 0.3, 1e3}});
    a.label_file = labels;
    auto [mesh, mats] = make_sim_mesh(unit_triangle(), a);
    CHECK(mats[0].youngs == 5e6);
  }
}

TEST_CASE("lumped mass and Laplacian") {
  auto [mesh, mats] = make_sim_mesh(unit_triangle(), uniform_material(1e6, 0.3, 3.0));
  auto ops = build_operators(mesh, mats);
  for (int v = 0; v < 3; ++v) CHECK(ops.mass[v] == doctest::Approx(0.5));

  auto [sq, sqm] = unit_square(6, two_materials(1e5, 1e8, {Vec2(0, 0), Vec2(1, 0.5)}));
  auto sops = build_operators(sq, sqm);
  VecX ones = VecX::Ones(sq.num_vertices());
  double scale = 0.0;
  for (int k = 0; k < sops.laplacian.outerSize(); ++k)
    for (SparseMat::InnerIterator it(sops.laplacian, k); it; ++it) scale = std::max(scale, std::abs(it.value()));
  CHECK((sops.laplacian * ones).cwiseAbs().maxCoeff() <= 1e-12 * scale);
  CHECK((SparseMat(sops.laplacian.transpose()) - sops.laplacian).norm() <= 1e-12 * scale);

  double total = 0.0;
  for (int e = 0; e < sq.num_elements(); ++e) total += sqm[e].density * sq.rest_area(e);
  CHECK(sops.mass.sum() == doctest::Approx(total).epsilon(1e-12));
  CHECK(sops.mass.minCoeff() > 0.0);
}

TEST_CASE("doubling Young's modulus doubles the Laplacian only") {
  auto [mesh, mats] = unit_square(4);
  auto ops = build_operators(mesh, mats);
  MaterialField doubled = mats;
  for (auto& m : doubled.elements) m.youngs *= 2.0;
  auto ops2 = build_operators(mesh, doubled);
  CHECK((ops2.laplacian - 2.0 * ops.laplacian).norm() <= 1e-12 * ops.laplacian.norm());
  CHECK((ops2.mass - ops.mass).norm() == 0.0);
}

TEST_CASE("operators are permutation equivariant") {
  RawMesh raw = meshgen::rectangle(Vec2::Zero(), Vec2(1, 1), 1, 1);
  auto [mesh, mats] = make_sim_mesh(raw, uniform_material());
  auto ops = build_operators(mesh, mats);
  std::vector<int> perm{2, 0, 3, 1};  // old -> new
  RawMesh permuted = raw;
  for (size_t v = 0; v < raw.vertices.size(); ++v) permuted.vertices[perm[v]] = raw.vertices[v];
  for (auto& t : permuted.triangles)
    for (int& v : t) v = perm[v];
  auto [pm, pmats] = make_sim_mesh(permuted, uniform_material());
  auto pops = build_operators(pm, pmats);
  for (int a = 0; a < 4; ++a) {
    CHECK(pops.mass[perm[a]] == doctest::Approx(ops.mass[a]));
    for (int b = 0; b < 4; ++b)
      CHECK(pops.laplacian.coeff(perm[a], perm[b]) == doctest::Approx(ops.laplacian.coeff(a, b)));
  }
}

TEST_CASE("stiffness normalization by median") {
  std::vector<double> e{1e6, 2e6, 4e6};
  auto n = normalized_stiffness(e);
  CHECK(n[1] == 1.0);
  CHECK(n[0] == 0.5);
}

TEST_CASE("generators produce valid meshes") {
  auto [disk, dm] = make_sim_mesh(meshgen::disk(Vec2(0, 0), 1.0, 5), uniform_material());
  double area = 0;
  for (int e = 0; e < disk.num_elements(); ++e) area += disk.rest_area(e);
  CHECK(area == doctest::Approx(3.0 * std::sqrt(3.0) / 2.0 * 1.0).epsilon(0.2));
  auto [slit, sm] = make_sim_mesh(meshgen::slit_square(Vec2(0, 0), 1.0, 8, 0.5), uniform_material());
  CHECK(slit.num_vertices() == 81 + 4);
  CHECK(slit.num_objects() == 1);
  auto [h, hm] = make_sim_mesh(meshgen::h_shape(Vec2(0, 0), 1.0, 9), uniform_material());
  CHECK(h.num_elements() == 2 * (81 - 2 * 9));
}
