#include "sms/partition.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>

namespace sms {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double element_distance(const VecX& d, const Triangle& t) { return (d[t[0]] + d[t[1]] + d[t[2]]) / 3.0; }

double median_of(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::nth_element(values.begin(), values.begin() + values.size() / 2, values.end());
  return values[values.size() / 2];
}

class Lloyd {
 public:
  Lloyd(const SimMesh& mesh, const DiscreteOperators& ops, const PartitionConfig& cfg)
      : mesh_(mesh), ops_(ops), cfg_(cfg), geo_(mesh, ops), dbc_(mesh.dbc_mask()), rng_(cfg.seed) {}

  PartitionSet run();

 private:
  void seed_centroids();
  bool assign();
  bool recenter();
  bool prune();
  std::vector<double> cluster_volumes() const;
  void enforce_connectivity();
  int best_center(const std::vector<int>& elements, const std::vector<char>& taken, int current);

  const SimMesh& mesh_;
  const DiscreteOperators& ops_;
  const PartitionConfig& cfg_;
  HeatGeodesics geo_;
  std::vector<char> dbc_;
  std::mt19937_64 rng_;
  std::vector<int> centroids_;
  std::vector<int> assignment_;
};

void Lloyd::seed_centroids() {
  const int n = mesh_.num_vertices();
  std::vector<int> eligible;
  for (int v = 0; v < n; ++v)
    if (!dbc_[v]) eligible.push_back(v);
  if (static_cast<int>(eligible.size()) < cfg_.k_init)
    throw Error("partition", "fewer non-Dirichlet vertices than requested clusters");

  std::uniform_int_distribution<size_t> first(0, eligible.size() - 1);
  centroids_.push_back(eligible[first(rng_)]);
  VecX nearest = geo_.from(centroids_.back());
  while (static_cast<int>(centroids_.size()) < cfg_.k_init) {
    // Unreached components are seeded before anything else.
    std::vector<int> unreached;
    std::vector<double> weight(eligible.size(), 0.0);
    for (size_t i = 0; i < eligible.size(); ++i) {
      double d = nearest[eligible[i]];
      if (!std::isfinite(d))
        unreached.push_back(eligible[i]);
      else
        weight[i] = d * d;
    }
    int pick;
    if (!unreached.empty()) {
      std::uniform_int_distribution<size_t> u(0, unreached.size() - 1);
      pick = unreached[u(rng_)];
    } else {
      double total = std::accumulate(weight.begin(), weight.end(), 0.0);
      if (!(total > 0.0)) throw Error("partition", "cannot seed distinct centroids");
      std::uniform_real_distribution<double> u(0.0, total);
      double r = u(rng_), acc = 0.0;
      size_t idx = 0;
      for (; idx < weight.size(); ++idx) {
        acc += weight[idx];
        if (acc > r) break;
      }
      while (idx >= weight.size() || weight[idx] == 0.0) --idx;
      pick = eligible[idx];
    }
    centroids_.push_back(pick);
    nearest = nearest.cwiseMin(geo_.from(pick));
  }
}

bool Lloyd::assign() {
  geo_.prefetch(centroids_);
  std::vector<const VecX*> fields;
  for (int c : centroids_) fields.push_back(&geo_.from(c));
  bool changed = false;
  const int m = mesh_.num_elements();
  std::vector<int> next(m, 0);
#pragma omp parallel for
  for (int e = 0; e < m; ++e) {
    double best = kInf;
    int arg = 0;
    for (size_t c = 0; c < fields.size(); ++c) {
      double d = element_distance(*fields[c], mesh_.elements[e]);
      if (d < best) {
        best = d;
        arg = static_cast<int>(c);
      }
    }
    next[e] = arg;
  }
  if (next != assignment_) changed = true;
  assignment_ = std::move(next);
  return changed;
}

std::vector<double> Lloyd::cluster_volumes() const {
  std::vector<double> vol(centroids_.size(), 0.0);
  for (int e = 0; e < mesh_.num_elements(); ++e) vol[assignment_[e]] += ops_.volumes[e];
  return vol;
}

int Lloyd::best_center(const std::vector<int>& elements, const std::vector<char>& taken, int current) {
  std::set<int> verts;
  for (int e : elements)
    for (int v : mesh_.elements[e]) verts.insert(v);
  std::vector<char> in_cluster(mesh_.num_elements(), 0);
  for (int e : elements) in_cluster[e] = 1;

  // Prefer vertices whose whole star lies in the cluster.
  std::vector<int> interior, any;
  for (int v : verts) {
    if (dbc_[v] || taken[v]) continue;
    any.push_back(v);
    bool inside = true;
    for (int e : mesh_.topology.elements_of(v)) inside = inside && in_cluster[e];
    if (inside) interior.push_back(v);
  }
  std::vector<int>& pool = interior.empty() ? any : interior;
  if (pool.empty()) return -1;

  const VecX& dc = geo_.from(current);
  std::stable_sort(pool.begin(), pool.end(), [&](int a, int b) { return dc[a] < dc[b]; });
  if (static_cast<int>(pool.size()) > cfg_.recenter_candidates) pool.resize(cfg_.recenter_candidates);
  geo_.prefetch(pool);

  int best_v = -1;
  double best = kInf;
  for (int v : pool) {
    const VecX& d = geo_.from(v);
    double cost = 0.0;
    for (int e : elements) cost += ops_.volumes[e] * element_distance(d, mesh_.elements[e]);
    if (cost < best || (cost == best && v < best_v)) {
      best = cost;
      best_v = v;
    }
  }
  return best_v;
}

bool Lloyd::recenter() {
  std::vector<std::vector<int>> members(centroids_.size());
  for (int e = 0; e < mesh_.num_elements(); ++e) members[assignment_[e]].push_back(e);
  std::vector<char> taken(mesh_.num_vertices(), 0);
  bool changed = false;
  std::vector<int> next;
  for (size_t c = 0; c < centroids_.size(); ++c) {
    if (members[c].empty()) {
      changed = true;
      continue;
    }
    int v = best_center(members[c], taken, centroids_[c]);
    if (v < 0) {
      changed = true;
      continue;
    }
    taken[v] = 1;
    changed = changed || v != centroids_[c];
    next.push_back(v);
  }
  centroids_ = std::move(next);
  return changed;
}

bool Lloyd::prune() {
  if (centroids_.size() <= 1) return false;
  auto vol = cluster_volumes();
  double threshold = median_of(vol) / cfg_.imbalance_ratio;
  std::vector<int> candidates;
  for (size_t c = 0; c < vol.size(); ++c)
    if (vol[c] < threshold) candidates.push_back(static_cast<int>(c));
  if (candidates.empty()) return false;
  std::stable_sort(candidates.begin(), candidates.end(), [&](int a, int b) { return vol[a] < vol[b]; });
  int n_delete = std::min<int>({cfg_.n_prune, static_cast<int>(candidates.size()),
                                static_cast<int>(centroids_.size()) - 1});
  std::vector<char> drop(centroids_.size(), 0);
  for (int i = 0; i < n_delete; ++i) drop[candidates[i]] = 1;
  std::vector<int> next;
  for (size_t c = 0; c < centroids_.size(); ++c)
    if (!drop[c]) next.push_back(centroids_[c]);
  centroids_ = std::move(next);
  return n_delete > 0;
}

void Lloyd::enforce_connectivity() {
  const int m = mesh_.num_elements();
  const auto& nbrs = mesh_.topology.element_neighbors;
  for (int pass = 0; pass < m; ++pass) {
    // Components of every cluster over shared edges.
    std::vector<int> comp(m, -1);
    std::vector<int> comp_cluster, comp_size;
    for (int e = 0; e < m; ++e) {
      if (comp[e] >= 0) continue;
      int id = static_cast<int>(comp_cluster.size());
      comp_cluster.push_back(assignment_[e]);
      comp_size.push_back(0);
      std::vector<int> stack{e};
      comp[e] = id;
      while (!stack.empty()) {
        int f = stack.back();
        stack.pop_back();
        ++comp_size[id];
        for (int g : nbrs[f])
          if (g >= 0 && comp[g] < 0 && assignment_[g] == assignment_[f]) {
            comp[g] = id;
            stack.push_back(g);
          }
      }
    }
    // Keep the component holding the centroid, else the largest.
    std::vector<int> keep(centroids_.size(), -1);
    for (size_t c = 0; c < centroids_.size(); ++c)
      for (int e : mesh_.topology.elements_of(centroids_[c]))
        if (assignment_[e] == static_cast<int>(c)) {
          keep[c] = comp[e];
          break;
        }
    for (size_t id = 0; id < comp_cluster.size(); ++id) {
      int c = comp_cluster[id];
      bool has_centroid = false;
      for (int e : mesh_.topology.elements_of(centroids_[c])) has_centroid |= assignment_[e] == c;
      if (!has_centroid && (keep[c] < 0 || comp_size[id] > comp_size[keep[c]])) keep[c] = static_cast<int>(id);
    }
    bool moved = false;
    for (size_t id = 0; id < comp_cluster.size(); ++id) {
      int c = comp_cluster[id];
      if (keep[c] == static_cast<int>(id)) continue;
      // Merge into the adjacent cluster sharing the most edges.
      std::map<int, int> shared;
      for (int e = 0; e < m; ++e) {
        if (comp[e] != static_cast<int>(id)) continue;
        for (int g : nbrs[e])
          if (g >= 0 && comp[g] != static_cast<int>(id)) ++shared[assignment_[g]];
      }
      int target = -1, most = 0;
      for (auto [cl, count] : shared)
        if (count > most) {
          most = count;
          target = cl;
        }
      if (target < 0) continue;  // isolated piece of its own object; handled below
      for (int e = 0; e < m; ++e)
        if (comp[e] == static_cast<int>(id)) assignment_[e] = target;
      moved = true;
      break;
    }
    if (!moved) {
      // Remaining stray components have no neighbor; they become clusters.
      bool added = false;
      for (size_t id = 0; id < comp_cluster.size(); ++id) {
        int c = comp_cluster[id];
        if (keep[c] == static_cast<int>(id)) continue;
        std::vector<int> members;
        for (int e = 0; e < m; ++e)
          if (comp[e] == static_cast<int>(id)) members.push_back(e);
        std::vector<char> taken(mesh_.num_vertices(), 0);
        for (int v : centroids_) taken[v] = 1;
        int start = mesh_.elements[members.front()][0];
        int v = best_center(members, taken, start);
        if (v < 0) throw Error("partition", "a disconnected region has no admissible centroid vertex");
        centroids_.push_back(v);
        for (int e : members) assignment_[e] = static_cast<int>(centroids_.size()) - 1;
        added = true;
        break;
      }
      if (!added) return;
    }
  }
}

PartitionSet Lloyd::run() {
  seed_centroids();
  PartitionSet out;
  int it = 0;
  bool converged = false;
  for (; it < cfg_.max_iterations; ++it) {
    bool changed = assign();
    bool pruned = false;
    if (it > 0 && it % cfg_.prune_interval == 0) {
      pruned = prune();
      if (pruned) assign();
    }
    bool moved = recenter();
    if (!changed && !moved && !pruned) {
      if (prune()) continue;
      converged = true;
      ++it;
      break;
    }
  }
  if (!converged) assign();
  enforce_connectivity();

  // Drop empty clusters and make sure each centroid lies in its partition.
  std::vector<std::vector<int>> members(centroids_.size());
  for (int e = 0; e < mesh_.num_elements(); ++e) members[assignment_[e]].push_back(e);
  std::vector<char> taken(mesh_.num_vertices(), 0);
  for (size_t c = 0; c < centroids_.size(); ++c) {
    if (members[c].empty()) continue;
    int v = centroids_[c];
    bool inside = false;
    for (int e : mesh_.topology.elements_of(v)) inside |= assignment_[e] == static_cast<int>(c);
    if (!inside || taken[v]) v = best_center(members[c], taken, mesh_.elements[members[c].front()][0]);
    if (v < 0) throw Error("partition", "partition without an admissible centroid vertex");
    taken[v] = 1;
    int id = static_cast<int>(out.centroid_vertex.size());
    out.centroid_vertex.push_back(v);
    out.elements.push_back(members[c]);
    for (int e : members[c]) assignment_[e] = id;
  }
  out.assignment = assignment_;
  out.iterations = it;
  out.budget_exhausted = !converged;
  extract_subdomains(mesh_, out);
  return out;
}

}  // namespace

void PartitionConfig::validate() const {
  if (k_init < 1) throw Error("config", "cluster count must be at least 1");
  if (!(jump_gamma > 0.0 && jump_gamma <= 1.0)) throw Error("config", "jump penalty factor must lie in (0, 1]");
  if (prune_interval < 1) throw Error("config", "prune interval must be at least 1");
  if (!(imbalance_ratio >= 1.0)) throw Error("config", "imbalance ratio must be at least 1");
  if (n_prune < 0) throw Error("config", "prune count must be nonnegative");
  if (max_iterations < 1) throw Error("config", "iteration budget must be at least 1");
  if (recenter_candidates < 1) throw Error("config", "recenter candidate count must be at least 1");
}

std::vector<double> jump_penalty_stiffness(const SimMesh& mesh, std::span<const double> stiffness, double gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw Error("partition", "jump penalty factor must lie in (0, 1]");
  std::vector<double> out(stiffness.begin(), stiffness.end());
  if (out.empty()) return out;
  double softest = *std::min_element(stiffness.begin(), stiffness.end());
  const int n = mesh.num_vertices();
  std::vector<char> interface(n, 0);
  for (int v = 0; v < n; ++v) {
    auto star = mesh.topology.elements_of(v);
    for (int e : star)
      if (mesh.material_id[e] != mesh.material_id[star.front()]) interface[v] = 1;
  }
  for (int e = 0; e < mesh.num_elements(); ++e)
    for (int v : mesh.elements[e])
      if (interface[v]) out[e] = gamma * softest;
  return out;
}

DiscreteOperators clustering_operators(const SimMesh& mesh, const MaterialField& materials, double gamma) {
  auto youngs = materials.youngs();
  auto penalized = jump_penalty_stiffness(mesh, youngs, gamma);
  auto normalized = normalized_stiffness(penalized);
  return build_operators(mesh, materials, std::span<const double>(normalized));
}

PartitionSet partition_mesh(const SimMesh& mesh, const DiscreteOperators& ops, const PartitionConfig& cfg) {
  cfg.validate();
  if (cfg.k_init > mesh.num_elements()) throw Error("partition", "more clusters requested than elements");
  Lloyd lloyd(mesh, ops, cfg);
  return lloyd.run();
}

void extract_subdomains(const SimMesh& mesh, PartitionSet& parts) {
  const int k = parts.count();
  // Partitions meeting only at a vertex count as neighbors; otherwise such a
  // vertex lies on the internal boundary of every subdomain containing it.
  std::vector<std::set<int>> adjacent(k);
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    auto star = mesh.topology.elements_of(v);
    for (int e : star)
      for (int f : star)
        if (parts.assignment[e] != parts.assignment[f]) adjacent[parts.assignment[e]].insert(parts.assignment[f]);
  }

  parts.neighbors.assign(k, {});
  parts.subdomain.assign(k, {});
  parts.internal_boundary.assign(k, {});
  std::vector<char> in_sub(mesh.num_elements(), 0);
  for (int i = 0; i < k; ++i) {
    parts.neighbors[i].assign(adjacent[i].begin(), adjacent[i].end());
    auto& sub = parts.subdomain[i];
    sub = parts.elements[i];
    for (int j : parts.neighbors[i]) sub.insert(sub.end(), parts.elements[j].begin(), parts.elements[j].end());
    std::sort(sub.begin(), sub.end());
    for (int e : sub) in_sub[e] = 1;
    std::set<int> boundary;
    for (int e : sub)
      for (int v : mesh.elements[e]) {
        if (mesh.topology.boundary_vertex[v]) continue;
        for (int f : mesh.topology.elements_of(v))
          if (!in_sub[f]) {
            boundary.insert(v);
            break;
          }
      }
    parts.internal_boundary[i].assign(boundary.begin(), boundary.end());
    for (int e : sub) in_sub[e] = 0;
  }
}

std::vector<int> PartitionSet::subdomain_vertices(int i, const SimMesh& mesh) const {
  std::set<int> verts;
  for (int e : subdomain[i])
    for (int v : mesh.elements[e]) verts.insert(v);
  return {verts.begin(), verts.end()};
}

void write_partition(const std::filesystem::path& path, const PartitionSet& parts) {
  std::ofstream out(path);
  if (!out) throw Error("output", "cannot write " + path.string());
  out << "# partition id per element\n";
  for (int p : parts.assignment) out << p << '\n';
}

}  // namespace sms
