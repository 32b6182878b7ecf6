#pragma once

#include "sms/mesh.hpp"

#include <filesystem>

namespace sms {

/// Positions and triangles as read from disk or produced by a generator.
struct RawMesh {
  std::vector<Vec2> vertices;
  std::vector<Triangle> triangles;
};

/// Axis-aligned box region that assigns a material label.
struct MaterialRegion {
  Vec2 lo, hi;
  int label = 0;
};

/// How labels and materials are attached to elements. Boxes are tested in
/// order against element centroids; the last matching box wins. A label file
/// (one integer per element) overrides boxes when given.
struct MaterialAssignment {
  int default_label = 0;
  std::vector<int> base_labels;  // per element, replaces default_label when non-empty
  std::vector<MaterialRegion> regions;
  std::optional<std::filesystem::path> label_file;
  std::vector<std::pair<int, Material>> materials;  // label -> material
};

/// Reads OBJ (all z must be zero) or a Triangle .node/.ele pair (either
/// path may be given; the sibling is located by extension).
RawMesh read_mesh_file(const std::filesystem::path& path);

void write_obj(const std::filesystem::path& path, const VecX& x,
               std::span<const Triangle> triangles);

/// Concatenates raw meshes (each may be translated first).
RawMesh merge(const std::vector<RawMesh>& parts);

/// Builds a validated SimMesh with labels and materials.
std::pair<SimMesh, MaterialField> make_sim_mesh(const RawMesh& raw,
                                                const MaterialAssignment& assign);

std::pair<SimMesh, MaterialField> load_mesh(const std::filesystem::path& path,
                                            const MaterialAssignment& assign);

namespace meshgen {

/// Structured rectangle [x0,x0+w] x [y0,y0+h] split into nx*ny quads, each
/// cut along alternating diagonals.
RawMesh rectangle(Vec2 origin, Vec2 size, int nx, int ny);

/// Unit-style disk built from concentric rings.
RawMesh disk(Vec2 center, double radius, int rings);

/// Square with a zero-width vertical cut at x = origin.x + size/2 running from
/// the bottom edge up to height slit_height. Vertices on the cut are
/// duplicated so the two sides share no edge below the tip.
RawMesh slit_square(Vec2 origin, double size, int n, double slit_height);

/// 'H' shape: two vertical bars joined by a horizontal crossbar; built from
/// an n x n grid over the bounding square with cells removed.
RawMesh h_shape(Vec2 origin, double size, int n);

/// Ring between radii inner < outer: `layers` radial cells by `segments`
/// angular cells.
RawMesh annulus(Vec2 center, double outer, double inner, int layers, int segments);

}  // namespace meshgen

}  // namespace sms
