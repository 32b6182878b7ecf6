#include "sms/mesh_io.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>

namespace sms {

namespace {

std::string strip_comment(const std::string& line) {
  auto pos = line.find('#');
  return pos == std::string::npos ? line : line.substr(0, pos);
}

RawMesh read_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("mesh", "cannot open " + path.string());
  RawMesh raw;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(strip_comment(line));
    std::string tag;
    if (!(ss >> tag)) continue;
    if (tag == "v") {
      double x, y, z = 0.0;
      if (!(ss >> x >> y)) throw Error("mesh", path.string() + ":" + std::to_string(lineno) + ": bad vertex");
      ss >> z;
      if (z != 0.0) throw Error("mesh", path.string() + ": nonzero z coordinate; only planar meshes are supported");
      raw.vertices.emplace_back(x, y);
    } else if (tag == "f") {
      std::vector<int> ids;
      std::string tok;
      while (ss >> tok) {
        int id = std::stoi(tok.substr(0, tok.find('/')));
        ids.push_back(id < 0 ? static_cast<int>(raw.vertices.size()) + id : id - 1);
      }
      if (ids.size() != 3)
        throw Error("mesh", path.string() + ":" + std::to_string(lineno) + ": only triangle faces are supported");
      raw.triangles.push_back({ids[0], ids[1], ids[2]});
    }
  }
  return raw;
}

std::vector<std::vector<double>> read_numeric_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("mesh", "cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(strip_comment(line));
    std::vector<double> row;
    double v;
    while (ss >> v) row.push_back(v);
    if (ss.fail() && !ss.eof()) throw Error("mesh", path.string() + ": unparsable record '" + line + "'");
    if (!row.empty()) rows.push_back(std::move(row));
  }
  if (rows.empty()) throw Error("mesh", path.string() + ": empty file");
  return rows;
}

RawMesh read_node_ele(std::filesystem::path node_path, std::filesystem::path ele_path) {
  auto nodes = read_numeric_records(node_path);
  auto eles = read_numeric_records(ele_path);
  const int nv = static_cast<int>(nodes[0][0]);
  const int ne = static_cast<int>(eles[0][0]);
  if (nodes[0].size() > 1 && static_cast<int>(nodes[0][1]) != 2)
    throw Error("mesh", node_path.string() + ": only 2D node files are supported");
  if (static_cast<int>(nodes.size()) < nv + 1 || static_cast<int>(eles.size()) < ne + 1)
    throw Error("mesh", "node/ele record count is smaller than the header count");
  if (eles[0].size() > 1 && static_cast<int>(eles[0][1]) != 3)
    throw Error("mesh", ele_path.string() + ": only 3-node triangles are supported");
  const int base = static_cast<int>(nodes[1][0]);
  if (base != 0 && base != 1) throw Error("mesh", node_path.string() + ": first index must be 0 or 1");
  RawMesh raw;
  raw.vertices.resize(nv);
  for (int i = 0; i < nv; ++i) {
    const auto& r = nodes[i + 1];
    if (r.size() < 3) throw Error("mesh", node_path.string() + ": short node record");
    int id = static_cast<int>(r[0]) - base;
    if (id < 0 || id >= nv) throw Error("mesh", node_path.string() + ": node index out of range");
    raw.vertices[id] = Vec2(r[1], r[2]);
  }
  raw.triangles.resize(ne);
  for (int i = 0; i < ne; ++i) {
    const auto& r = eles[i + 1];
    if (r.size() < 4) throw Error("mesh", ele_path.string() + ": short element record");
    raw.triangles[i] = {static_cast<int>(r[1]) - base, static_cast<int>(r[2]) - base,
                        static_cast<int>(r[3]) - base};
  }
  return raw;
}

}  // namespace

RawMesh read_mesh_file(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  if (ext == ".obj") return read_obj(path);
  if (ext == ".node" || ext == ".ele") {
    auto stem = path;
    return read_node_ele(stem.replace_extension(".node"), std::filesystem::path(path).replace_extension(".ele"));
  }
  throw Error("mesh", "unsupported mesh format '" + ext + "' (expected .obj, .node or .ele)");
}

void write_obj(const std::filesystem::path& path, const VecX& x, std::span<const Triangle> triangles) {
  std::ofstream out(path);
  if (!out) throw Error("output", "cannot write " + path.string());
  out.precision(17);
  for (int v = 0; v < static_cast<int>(x.size()) / kDim; ++v)
    out << "v " << x[2 * v] << ' ' << x[2 * v + 1] << " 0\n";
  for (const auto& t : triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
}

RawMesh merge(const std::vector<RawMesh>& parts) {
  RawMesh out;
  for (const auto& p : parts) {
    int offset = static_cast<int>(out.vertices.size());
    out.vertices.insert(out.vertices.end(), p.vertices.begin(), p.vertices.end());
    for (auto t : p.triangles) out.triangles.push_back({t[0] + offset, t[1] + offset, t[2] + offset});
  }
  return out;
}

std::pair<SimMesh, MaterialField> make_sim_mesh(const RawMesh& raw, const MaterialAssignment& assign) {
  SimMesh mesh;
  mesh.rest.resize(kDim * static_cast<Eigen::Index>(raw.vertices.size()));
  for (size_t v = 0; v < raw.vertices.size(); ++v) mesh.rest.segment<2>(2 * v) = raw.vertices[v];
  mesh.elements = raw.triangles;
  const int m = static_cast<int>(raw.triangles.size());
  const int n = static_cast<int>(raw.vertices.size());
  mesh.material_id.assign(m, assign.default_label);
  if (!assign.base_labels.empty()) {
    if (static_cast<int>(assign.base_labels.size()) != m) throw Error("mesh", "base label count does not match elements");
    mesh.material_id = assign.base_labels;
  }
  for (int e = 0; e < m; ++e) {
    Vec2 c = Vec2::Zero();
    for (int v : raw.triangles[e]) {
      if (v < 0 || v >= n)
        throw Error("mesh", "element " + std::to_string(e) + " has out-of-range vertex index " + std::to_string(v));
      c += raw.vertices[v] / 3.0;
    }
    for (const auto& r : assign.regions)
      if ((c.array() >= r.lo.array()).all() && (c.array() <= r.hi.array()).all()) mesh.material_id[e] = r.label;
  }
  if (assign.label_file) {
    std::ifstream in(*assign.label_file);
    if (!in) throw Error("mesh", "cannot open label file " + assign.label_file->string());
    std::vector<int> labels;
    int l;
    while (in >> l) labels.push_back(l);
    if (static_cast<int>(labels.size()) != m)
      throw Error("mesh", "label file has " + std::to_string(labels.size()) + " entries for " + std::to_string(m) +
                              " elements");
    mesh.material_id = labels;
  }
  finalize_mesh(mesh);

  MaterialField field;
  field.elements.resize(m);
  for (int e = 0; e < m; ++e) {
    bool found = false;
    for (const auto& [label, mat] : assign.materials)
      if (label == mesh.material_id[e]) {
        field.elements[e] = mat;
        found = true;
      }
    if (!found) throw Error("mesh", "no material given for label " + std::to_string(mesh.material_id[e]));
    field.elements[e].validate();
  }
  return {std::move(mesh), std::move(field)};
}

std::pair<SimMesh, MaterialField> load_mesh(const std::filesystem::path& path, const MaterialAssignment& assign) {
  if (!std::filesystem::exists(path)) throw Error("mesh", "file not found: " + path.string());
  return make_sim_mesh(read_mesh_file(path), assign);
}

namespace meshgen {

namespace {

// Structured grid with a per-cell keep predicate. Unused vertices are dropped.
RawMesh grid(Vec2 origin, Vec2 size, int nx, int ny, const std::function<bool(int, int)>& keep) {
  std::vector<int> index((nx + 1) * (ny + 1), -1);
  RawMesh raw;
  auto vid = [&](int i, int j) {
    int& id = index[j * (nx + 1) + i];
    if (id < 0) {
      id = static_cast<int>(raw.vertices.size());
      raw.vertices.emplace_back(origin.x() + size.x() * i / nx, origin.y() + size.y() * j / ny);
    }
    return id;
  };
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      if (!keep(i, j)) continue;
      int a = vid(i, j), b = vid(i + 1, j), c = vid(i + 1, j + 1), d = vid(i, j + 1);
      if ((i + j) % 2 == 0) {
        raw.triangles.push_back({a, b, c});
        raw.triangles.push_back({a, c, d});
      } else {
        raw.triangles.push_back({a, b, d});
        raw.triangles.push_back({b, c, d});
      }
    }
  return raw;
}

}  // namespace

RawMesh rectangle(Vec2 origin, Vec2 size, int nx, int ny) {
  return grid(origin, size, nx, ny, [](int, int) { return true; });
}

RawMesh disk(Vec2 center, double radius, int rings) {
  RawMesh raw;
  raw.vertices.push_back(center);
  std::vector<std::vector<int>> ring_ids{{0}};
  std::vector<std::vector<double>> ring_angles{{0.0}};
  for (int r = 1; r <= rings; ++r) {
    int count = 6 * r;
    std::vector<int> ids;
    std::vector<double> angles;
    for (int k = 0; k < count; ++k) {
      double a = 2.0 * std::numbers::pi * k / count;
      ids.push_back(static_cast<int>(raw.vertices.size()));
      angles.push_back(a);
      raw.vertices.push_back(center + radius * r / rings * Vec2(std::cos(a), std::sin(a)));
    }
    ring_ids.push_back(ids);
    ring_angles.push_back(angles);
  }
  auto push_ccw = [&](int a, int b, int c) {
    if (signed_area(raw.vertices[a], raw.vertices[b], raw.vertices[c]) < 0) std::swap(b, c);
    raw.triangles.push_back({a, b, c});
  };
  for (int k = 0; k < 6; ++k) push_ccw(0, ring_ids[1][k], ring_ids[1][(k + 1) % 6]);
  for (int r = 2; r <= rings; ++r) {
    const auto& in = ring_ids[r - 1];
    const auto& out = ring_ids[r];
    const auto& ain = ring_angles[r - 1];
    const auto& aout = ring_angles[r];
    int ni = static_cast<int>(in.size()), no = static_cast<int>(out.size());
    int i = 0, j = 0;
    auto angle_in = [&](int idx) { return idx < ni ? ain[idx] : ain[idx - ni] + 2 * std::numbers::pi; };
    auto angle_out = [&](int idx) { return idx < no ? aout[idx] : aout[idx - no] + 2 * std::numbers::pi; };
    while (i < ni || j < no) {
      bool advance_out = j < no && (i >= ni || angle_out(j + 1) <= angle_in(i + 1));
      if (advance_out) {
        push_ccw(in[i % ni], out[j % no], out[(j + 1) % no]);
        ++j;
      } else {
        push_ccw(in[i % ni], out[j % no], in[(i + 1) % ni]);
        ++i;
      }
    }
  }
  return raw;
}

RawMesh slit_square(Vec2 origin, double size, int n, double slit_height) {
  if (n % 2 != 0) ++n;
  const int mid = n / 2;
  const int tip = std::clamp(static_cast<int>(std::lround(slit_height / size * n)), 0, n);
  RawMesh raw;
  std::vector<int> index((n + 1) * (n + 1), -1);
  std::vector<int> right_copy(n + 1, -1);
  auto pos = [&](int i, int j) { return Vec2(origin.x() + size * i / n, origin.y() + size * j / n); };
  auto vid = [&](int i, int j, bool right_side) {
    if (i == mid && j < tip && right_side) {
      if (right_copy[j] < 0) {
        right_copy[j] = static_cast<int>(raw.vertices.size());
        raw.vertices.push_back(pos(i, j));
      }
      return right_copy[j];
    }
    int& id = index[j * (n + 1) + i];
    if (id < 0) {
      id = static_cast<int>(raw.vertices.size());
      raw.vertices.push_back(pos(i, j));
    }
    return id;
  };
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      bool right = i >= mid;
      int a = vid(i, j, right), b = vid(i + 1, j, right), c = vid(i + 1, j + 1, right), d = vid(i, j + 1, right);
      if ((i + j) % 2 == 0) {
        raw.triangles.push_back({a, b, c});
        raw.triangles.push_back({a, c, d});
      } else {
        raw.triangles.push_back({a, b, d});
        raw.triangles.push_back({b, c, d});
      }
    }
  return raw;
}

RawMesh annulus(Vec2 center, double outer, double inner, int layers, int segments) {
  RawMesh raw;
  for (int r = 0; r <= layers; ++r) {
    const double radius = inner + (outer - inner) * r / layers;
    for (int k = 0; k < segments; ++k) {
      const double a = 2.0 * std::numbers::pi * k / segments;
      raw.vertices.push_back(center + radius * Vec2(std::cos(a), std::sin(a)));
    }
  }
  auto id = [&](int r, int k) { return r * segments + (k % segments); };
  for (int r = 0; r < layers; ++r)
    for (int k = 0; k < segments; ++k) {
      int a = id(r, k), b = id(r, k + 1), c = id(r + 1, k + 1), d = id(r + 1, k);
      if ((r + k) % 2 == 0) {
        raw.triangles.push_back({a, c, b});
        raw.triangles.push_back({a, d, c});
      } else {
        raw.triangles.push_back({a, d, b});
        raw.triangles.push_back({b, d, c});
      }
    }
  return raw;
}

RawMesh h_shape(Vec2 origin, double size, int n) {
  const int third = n / 3;
  return grid(origin, Vec2(size, size), n, n, [&](int i, int j) {
    bool bars = i < third || i >= n - third;
    bool crossbar = j >= third && j < n - third;
    return bars || crossbar;
  });
}

}  // namespace meshgen

}  // namespace sms
