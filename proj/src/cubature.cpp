#include "sms/cubature.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>

namespace sms {

void CubatureConfig::validate() const {
  if (degree < 1) throw Error("config", "cubature degree must be at least 1");
  if (!(tolerance > 0.0)) throw Error("config", "cubature tolerance must be positive");
}

std::vector<std::vector<int>> product_index_set(int generators, int degree) {
  std::vector<std::vector<int>> out{{}};
  std::vector<std::vector<int>> frontier{{}};
  for (int d = 1; d <= degree; ++d) {
    std::vector<std::vector<int>> next;
    for (const auto& alpha : frontier) {
      int start = alpha.empty() ? 0 : alpha.back();
      for (int g = start; g < generators; ++g) {
        auto beta = alpha;
        beta.push_back(g);
        next.push_back(std::move(beta));
      }
    }
    out.insert(out.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  return out;
}

MomentSystem build_moment_system(const SimMesh& mesh, const DiscreteOperators& ops, const HandleBasis& basis,
                                 std::span<const int> elements, const CubatureConfig& cfg) {
  cfg.validate();
  MomentSystem sys;
  sys.elements.assign(elements.begin(), elements.end());
  const int ne = static_cast<int>(elements.size());

  std::set<int> handles;
  Vec2 lo = Vec2::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
  for (int e : elements)
    for (int v : mesh.elements[e]) {
      for (int h : basis.handles_at(v)) handles.insert(h);
      lo = lo.cwiseMin(mesh.rest_vertex(v));
      hi = hi.cwiseMax(mesh.rest_vertex(v));
    }
  const int nh = static_cast<int>(handles.size());
  const int g = nh + (cfg.spatial_monomials ? 2 : 0);
  MatX gen(g, ne);
  int row = 0;
  for (int h : handles) {
    for (int k = 0; k < ne; ++k) {
      const auto& t = mesh.elements[elements[k]];
      gen(row, k) = (basis.weight(t[0], h) + basis.weight(t[1], h) + basis.weight(t[2], h)) / 3.0;
    }
    ++row;
  }
  if (cfg.spatial_monomials) {
    Vec2 center = 0.5 * (lo + hi);
    Vec2 half = (0.5 * (hi - lo)).cwiseMax(1e-300);
    for (int k = 0; k < ne; ++k) {
      const auto& t = mesh.elements[elements[k]];
      Vec2 c = (mesh.rest_vertex(t[0]) + mesh.rest_vertex(t[1]) + mesh.rest_vertex(t[2])) / 3.0;
      Vec2 s = (c - center).cwiseQuotient(half);
      gen(nh, k) = s.x();
      gen(nh + 1, k) = s.y();
    }
  }

  sys.num_generators = g;
  sys.index_set = product_index_set(g, cfg.degree);
  const int rows = static_cast<int>(sys.index_set.size());
  sys.A.setOnes(rows, ne);
  for (int r = 0; r < rows; ++r)
    for (int i : sys.index_set[r]) sys.A.row(r).array() *= gen.row(i).array();
  sys.volumes.resize(ne);
  for (int k = 0; k < ne; ++k) sys.volumes[k] = ops.volumes[elements[k]];
  sys.b = sys.A * sys.volumes;
  return sys;
}

NnlsResult nnls_solve(const MatX& A, const VecX& b, int max_iterations) {
  const int m = static_cast<int>(A.rows()), n = static_cast<int>(A.cols());
  if (b.size() != m) throw Error("cubature", "NNLS dimension mismatch");
  if (!A.allFinite() || !b.allFinite()) throw Error("cubature", "NNLS input is not finite");
  if (max_iterations <= 0) max_iterations = 3 * n + 10;

  NnlsResult res;
  res.w = VecX::Zero(n);
  std::vector<char> passive(n, 0);
  const double anorm = A.cwiseAbs().colwise().sum().maxCoeff();
  const double tol = 10.0 * std::numeric_limits<double>::epsilon() * std::max(m, n) * anorm * std::max(b.norm(), 1e-300);

  auto solve_passive = [&](VecX& s) {
    std::vector<int> idx;
    for (int j = 0; j < n; ++j)
      if (passive[j]) idx.push_back(j);
    MatX Ap(m, idx.size());
    for (size_t k = 0; k < idx.size(); ++k) Ap.col(k) = A.col(idx[k]);
    VecX sp = Ap.colPivHouseholderQr().solve(b);
    s.setZero(n);
    for (size_t k = 0; k < idx.size(); ++k) s[idx[k]] = sp[k];
  };

  int it = 0;
  VecX s(n);
  while (true) {
    VecX grad = A.transpose() * (b - A * res.w);
    int best = -1;
    double gmax = tol;
    for (int j = 0; j < n; ++j)
      if (!passive[j] && grad[j] > gmax) {
        gmax = grad[j];
        best = j;
      }
    if (best < 0) break;
    if (++it > max_iterations) {
      res.converged = false;
      break;
    }
    passive[best] = 1;
    while (true) {
      solve_passive(s);
      double smin = std::numeric_limits<double>::infinity();
      for (int j = 0; j < n; ++j)
        if (passive[j]) smin = std::min(smin, s[j]);
      if (smin > 0.0) {
        res.w = s;
        break;
      }
      double alpha = 1.0;
      int blocking = -1;
      for (int j = 0; j < n; ++j)
        if (passive[j] && s[j] <= 0.0) {
          double a = res.w[j] / (res.w[j] - s[j]);
          if (blocking < 0 || a < alpha) {
            alpha = a;
            blocking = j;
          }
        }
      res.w += alpha * (s - res.w);
      res.w[blocking] = 0.0;
      for (int j = 0; j < n; ++j)
        if (passive[j] && res.w[j] <= 0.0) {
          passive[j] = 0;
          res.w[j] = 0.0;
        }
      if (std::none_of(passive.begin(), passive.end(), [](char c) { return c != 0; })) break;
      if (++it > max_iterations) {
        res.converged = false;
        break;
      }
    }
    if (!res.converged) break;
  }
  res.w = res.w.cwiseMax(0.0);
  res.residual = (A * res.w - b).norm();
  res.iterations = it;
  return res;
}

namespace {

// Rows of the whitened system U_r^T A / sigma_r for the leading singular
// directions above cut * sigma_max.
MatX whitening(const Eigen::BDCSVD<MatX>& svd, double cut) {
  const VecX& sv = svd.singularValues();
  int r = 0;
  while (r < sv.size() && sv[r] > cut * sv[0]) ++r;
  return sv.head(r).cwiseInverse().asDiagonal() * svd.matrixU().leftCols(r).transpose();
}

}  // namespace

PartitionCubature fit_partition_cubature(const MomentSystem& sys, const CubatureConfig& cfg, std::uint64_t seed) {
  const int n = static_cast<int>(sys.A.cols());
  const int rows = static_cast<int>(sys.A.rows());
  const int n_init = std::min(n, std::max(rows, 10));
  const int n_add = std::max(rows / 2, 5);
  std::mt19937_64 rng(seed);
  PartitionCubature out;
  out.constraints = rows;
  if (n == 0) return out;
  const double bnorm = sys.b.norm();
  if (!(bnorm > 0.0)) throw Error("cubature", "moment targets vanish");

  Eigen::BDCSVD<MatX> svd(sys.A, Eigen::ComputeThinU);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> sampled(order.begin(), order.begin() + n_init);
  std::vector<char> in(n, 0);
  for (int k : sampled) in[k] = 1;

  auto relative = [&](const VecX& w) {
    VecX r = -sys.b;
    for (size_t k = 0; k < sampled.size(); ++k) r += w[k] * sys.A.col(sampled[k]);
    return r.norm() / bnorm;
  };

  VecX w;
  bool done = false;
  for (double cut : {1e-6, 1e-8, 1e-10, 1e-12, 1e-14, 0.0}) {
    const MatX P = whitening(svd, cut);
    const MatX At = P * sys.A;
    const VecX bt = P * sys.b;
    while (true) {
      ++out.rounds;
      MatX As(At.rows(), sampled.size());
      for (size_t k = 0; k < sampled.size(); ++k) As.col(k) = At.col(sampled[k]);
      w = nnls_solve(As, bt).w;
      out.relative_residual = relative(w);
      if (out.relative_residual <= cfg.tolerance) {
        done = true;
        break;
      }
      VecX r = As * w - bt;
      // Truncated system already fitted: only a finer cut can help.
      if (r.norm() <= 1e-3 * cfg.tolerance * bt.norm()) break;
      if (static_cast<int>(sampled.size()) == n) break;
      std::vector<int> pool;
      std::vector<double> score;
      for (int k = 0; k < n; ++k)
        if (!in[k]) {
          double c = At.col(k).dot(r);
          pool.push_back(k);
          score.push_back(c * c);
        }
      for (int draw = 0; draw < n_add && !pool.empty(); ++draw) {
        double total = std::accumulate(score.begin(), score.end(), 0.0);
        size_t pick = 0;
        if (total > 0.0) {
          std::uniform_real_distribution<double> u(0.0, total);
          double target = u(rng), acc = 0.0;
          for (; pick < score.size(); ++pick) {
            acc += score[pick];
            if (acc > target) break;
          }
          while (pick >= score.size() || score[pick] == 0.0) --pick;
        } else {
          std::uniform_int_distribution<size_t> u(0, pool.size() - 1);
          pick = u(rng);
        }
        sampled.push_back(pool[pick]);
        in[pool[pick]] = 1;
        pool.erase(pool.begin() + pick);
        score.erase(score.begin() + pick);
      }
    }
    if (done) break;
  }
  if (!done && static_cast<int>(sampled.size()) == n) {
    // Every element sampled: rest volumes integrate the moments exactly.
    for (size_t k = 0; k < sampled.size(); ++k) w[k] = sys.volumes[sampled[k]];
    out.relative_residual = relative(w);
  }

  for (size_t k = 0; k < sampled.size(); ++k)
    if (w[k] > 0.0) {
      out.elements.push_back(sys.elements[sampled[k]]);
      out.weights.push_back(w[k]);
    }
  return out;
}

int CubatureScheme::num_points() const {
  int total = 0;
  for (const auto& p : partitions) total += static_cast<int>(p.elements.size());
  return total;
}

ElementSubset CubatureScheme::subset(const SimMesh& mesh) const {
  std::vector<int> elements;
  std::vector<double> weights;
  for (const auto& p : partitions) {
    elements.insert(elements.end(), p.elements.begin(), p.elements.end());
    weights.insert(weights.end(), p.weights.begin(), p.weights.end());
  }
  return make_subset(mesh, std::move(elements), std::move(weights));
}

CubatureScheme fit_cubature(const SimMesh& mesh, const DiscreteOperators& ops, const HandleBasis& basis,
                            const PartitionSet& parts, const CubatureConfig& cfg) {
  cfg.validate();
  CubatureScheme scheme;
  scheme.partitions.resize(parts.count());
  std::vector<std::string> failures(parts.count());
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < parts.count(); ++i) {
    try {
      auto sys = build_moment_system(mesh, ops, basis, parts.elements[i], cfg);
      std::uint64_t seed = cfg.seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(i + 1);
      scheme.partitions[i] = fit_partition_cubature(sys, cfg, seed);
    } catch (const std::exception& e) {
      failures[i] = e.what();
    }
  }
  for (const auto& f : failures)
    if (!f.empty()) throw Error("cubature", f);
  return scheme;
}

SparseMat cubature_hessian(const IncrementalPotential& ip, const VecX& x, const ElementSubset& scheme) {
  auto r = ip.evaluate(x, {false, false, true}, true, &scheme);
  if (!r.finite()) throw Error("cubature", "Hessian requested at an infeasible configuration");
  return r.hessian;
}

void write_cubature(const std::filesystem::path& path, const CubatureScheme& scheme) {
  std::ofstream out(path);
  if (!out) throw Error("output", "cannot write " + path.string());
  out.precision(17);
  out << "partition,element,weight\n";
  for (size_t p = 0; p < scheme.partitions.size(); ++p)
    for (size_t k = 0; k < scheme.partitions[p].elements.size(); ++k)
      out << p << ',' << scheme.partitions[p].elements[k] << ',' << scheme.partitions[p].weights[k] << '\n';
}

}  // namespace sms
