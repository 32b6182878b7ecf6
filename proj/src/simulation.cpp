#include "sms/simulation.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>

namespace sms {

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

template <class F>
auto in_phase(const std::string& phase, F&& f) {
  try {
    return f();
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(phase, e.what());
  }
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("output", "cannot write " + path.string());
  return out;
}

int resolve_refine(const SolverConfig& cfg, int automatic) { return cfg.n_refine_cg < 0 ? automatic : cfg.n_refine_cg; }

}  // namespace

Precomputed precompute(const SceneConfig& scene) {
  scene.validate();
  Precomputed pre;
  pre.scene = in_phase("mesh", [&] { return build_scene_mesh(scene); });
  const SimMesh& mesh = pre.scene.mesh;
  pre.ops = in_phase("mesh", [&] { return build_operators(mesh, pre.scene.materials); });

  auto t0 = Clock::now();
  pre.parts = in_phase("partition", [&] {
    return partition_mesh(mesh, clustering_operators(mesh, pre.scene.materials, scene.partition.jump_gamma),
                          scene.partition);
  });
  pre.seconds_partition = since(t0);

  t0 = Clock::now();
  pre.bases = in_phase("basis", [&] { return build_bases(mesh, pre.scene.materials, pre.ops, pre.parts, scene.basis); });
  pre.seconds_basis = since(t0);

  t0 = Clock::now();
  if (scene.cubature.enabled) {
    pre.cubature = in_phase("cubature",
                            [&] { return fit_cubature(mesh, pre.ops, pre.bases.sms, pre.parts, scene.cubature.config); });
    pre.subset = pre.cubature->subset(mesh);
  }
  pre.seconds_cubature = since(t0);

  pre.hop_radius = mean_hop_radius(mesh, pre.parts);
  pre.refine_iters = choose_refinement_iters(pre.hop_radius);
  return pre;
}

void export_precompute(const std::filesystem::path& dir, const Precomputed& pre) {
  std::filesystem::create_directories(dir);
  write_partition(dir / "partition.txt", pre.parts);
  write_weights(dir / "weights.txt", pre.bases);
  if (pre.cubature) write_cubature(dir / "cubature.csv", *pre.cubature);
  write_obj(dir / "rest.obj", pre.mesh().rest, pre.mesh().elements);
}

Stepper::Stepper(const SceneConfig& scene, const Precomputed& pre)
    : scene_(scene),
      pre_(pre),
      ip_(pre.mesh(), pre.scene.materials, pre.ops, scene.colliders),
      solver_(pre.bases, pre.scheme(), scene.solver, resolve_refine(scene.solver, pre.refine_iters)) {
  state_.x = pre.mesh().rest;
  state_.x_prev = state_.x;
  state_.v = pre.scene.velocity;
  state_.v_prev = state_.v;
}

VecX Stepper::start_positions() const {
  VecX x = state_.x;
  const SimMesh& mesh = pre_.mesh();
  const double t = (step_ + 1) * scene_.timestep.h;
  for (size_t k = 0; k < mesh.dbc_vertices.size(); ++k) {
    const int v = mesh.dbc_vertices[k];
    vertex(x, v) = mesh.rest_vertex(v) + t * mesh.dbc_velocity[k];
  }
  return x;
}

const IncrementalPotential& Stepper::prepare() {
  ip_.begin_step(predictor(state_, scene_.timestep), scene_.timestep);
  return ip_;
}

NewtonResult Stepper::solve_multilevel() {
  prepare();
  return solver_.solve(ip_, start_positions(), scene_.timestep.h);
}

ReferenceResult Stepper::solve_reference(const ReferenceConfig& cfg) {
  prepare();
  return reference_solve(ip_, start_positions(), scene_.timestep.h, cfg);
}

void Stepper::accept(const VecX& x_new) {
  state_ = advance(state_, x_new, scene_.timestep);
  ++step_;
}

void check_feasible(const VecX& x, const IncrementalPotential& ip, int step) {
  if (!(min_collider_distance(x, ip.colliders()) > 0.0))
    throw Error("output", "step " + std::to_string(step) + " penetrates a collider");
  if (!(min_element_area(x, ip.mesh()) > 0.0))
    throw Error("output", "step " + std::to_string(step) + " has an inverted element");
}

SimulationResult run_simulation(const SceneConfig& scene, const Precomputed& pre, const RunOptions& options) {
  SimulationResult result;
  Stepper stepper(scene, pre);
  const auto& dir = scene.output.dir;
  const bool frames = options.write_output && scene.output.frames;
  if (options.write_output) std::filesystem::create_directories(dir);
  if (frames) std::filesystem::create_directories(dir / "frames");
  auto frame_path = [&](int i) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%04d.obj", i);
    return dir / "frames" / name;
  };
  if (frames) write_obj(frame_path(0), stepper.state().x, pre.mesh().elements);
  if (options.keep_states) result.states.push_back(stepper.state().x);

  for (int step = 0; step < scene.steps; ++step) {
    auto t0 = Clock::now();
    NewtonResult res;
    try {
      res = stepper.solve_multilevel();
    } catch (const Error& e) {
      throw Error(e.phase(), "step " + std::to_string(step + 1) + ": " + e.message());
    } catch (const std::exception& e) {
      throw Error("solve", "step " + std::to_string(step + 1) + ": " + e.what());
    }
    StepStats st;
    st.step = step + 1;
    st.seconds = since(t0);
    st.newton_iterations = res.iterations();
    st.converged = res.converged;
    st.line_search_failed = res.line_search_failed;
    for (const auto& r : res.records) {
      st.pcg_affine += r.pcg_affine;
      st.pcg_sms += r.pcg_sms;
      st.cg_refine += r.cg_refine;
      st.hlag_refreshes += r.hlag_refresh;
      st.fallbacks += r.fallback;
      if (r.alpha > 0.0) st.min_alpha = std::min(st.min_alpha, r.alpha);
    }
    const auto& ip = stepper.potential();
    st.energy_start = res.records.empty() ? 0.0 : res.records.front().energy;
    st.energy_end = ip.value(res.x);
    for (size_t i = 1; i < res.records.size(); ++i)
      if (!(res.records[i].energy < res.records[i - 1].energy)) st.monotone = false;
    if (!res.records.empty() && st.energy_end > res.records.back().energy) st.monotone = false;
    check_feasible(res.x, ip, st.step);
    st.min_distance = min_collider_distance(res.x, ip.colliders());
    st.min_area = min_element_area(res.x, pre.mesh());
    stepper.accept(res.x);
    if (frames) write_obj(frame_path(st.step), res.x, pre.mesh().elements);
    if (options.keep_states) result.states.push_back(res.x);
    result.steps.push_back(st);
    result.newton.push_back(std::move(res));
  }
  result.final_positions = stepper.state().x;
  result.final_velocity = stepper.state().v;

  if (options.write_output) {
    write_stats_csv(dir / "stats.csv", result.steps);
    write_timing_csv(dir / "timing.csv", result.steps, pre);
    auto out = open_out(dir / "newton.csv");
    out << "step,iteration,energy,grad_norm,ds_norm,alpha,pcg_affine,pcg_sms,cg_refine,hlag_refresh,fallback\n";
    for (size_t s = 0; s < result.newton.size(); ++s)
      for (size_t i = 0; i < result.newton[s].records.size(); ++i) {
        const auto& r = result.newton[s].records[i];
        out << s + 1 << ',' << i << ',' << fmt(r.energy) << ',' << fmt(r.grad_norm) << ',' << fmt(r.ds_norm) << ','
            << fmt(r.alpha) << ',' << r.pcg_affine << ',' << r.pcg_sms << ',' << r.cg_refine << ','
            << r.hlag_refresh << ',' << r.fallback << '\n';
      }
  }
  return result;
}

std::vector<CompareStep> compare_mode(const SceneConfig& scene, const Precomputed& pre, bool write_output) {
  std::vector<CompareStep> steps;
  Stepper stepper(scene, pre);
  for (int step = 0; step < scene.steps; ++step) {
    ReferenceResult ref;
    NewtonResult ours;
    try {
      ref = stepper.solve_reference(scene.reference);
      ours = stepper.solve_multilevel();
    } catch (const Error& e) {
      throw Error(e.phase(), "step " + std::to_string(step + 1) + ": " + e.message());
    } catch (const std::exception& e) {
      throw Error("solve", "step " + std::to_string(step + 1) + ": " + e.what());
    }
    check_feasible(ref.x, stepper.potential(), step + 1);
    check_feasible(ours.x, stepper.potential(), step + 1);
    auto err = displacement_error(ours.x, ref.x, bbox_diagonal(ref.x));
    CompareStep c;
    c.step = step + 1;
    c.max_error = err.max;
    c.mean_error = err.mean;
    c.ours_iterations = ours.iterations();
    c.ours_pcg = ours.total_pcg();
    c.ours_converged = ours.converged;
    c.ref_iterations = ref.iterations();
    c.ref_cg = ref.total_cg();
    c.ref_converged = ref.converged;
    steps.push_back(c);
    stepper.accept(ref.x);
  }
  if (write_output) {
    std::filesystem::create_directories(scene.output.dir);
    auto out = open_out(scene.output.dir / "compare.csv");
    out << "step,max_error,mean_error,ours_iterations,ours_pcg,ours_converged,ref_iterations,ref_cg,ref_converged\n";
    for (const auto& c : steps)
      out << c.step << ',' << fmt(c.max_error) << ',' << fmt(c.mean_error) << ',' << c.ours_iterations << ','
          << c.ours_pcg << ',' << c.ours_converged << ',' << c.ref_iterations << ',' << c.ref_cg << ','
          << c.ref_converged << '\n';
  }
  return steps;
}

void write_stats_csv(const std::filesystem::path& path, const std::vector<StepStats>& steps) {
  auto out = open_out(path);
  out << "step,newton_iterations,converged,line_search_failed,pcg_affine,pcg_sms,cg_refine,hlag_refreshes,fallbacks,"
         "min_alpha,energy_start,energy_end,monotone,min_distance,min_area\n";
  for (const auto& s : steps)
    out << s.step << ',' << s.newton_iterations << ',' << s.converged << ',' << s.line_search_failed << ','
        << s.pcg_affine << ',' << s.pcg_sms << ',' << s.cg_refine << ',' << s.hlag_refreshes << ',' << s.fallbacks
        << ',' << fmt(s.min_alpha) << ',' << fmt(s.energy_start) << ',' << fmt(s.energy_end) << ',' << s.monotone
        << ',' << fmt(s.min_distance) << ',' << fmt(s.min_area) << '\n';
}

void write_timing_csv(const std::filesystem::path& path, const std::vector<StepStats>& steps,
                      const Precomputed& pre) {
  auto out = open_out(path);
  out << "phase,step,seconds\n";
  out << "partition,0," << pre.seconds_partition << '\n';
  out << "basis,0," << pre.seconds_basis << '\n';
  out << "cubature,0," << pre.seconds_cubature << '\n';
  for (const auto& s : steps) out << "step," << s.step << ',' << s.seconds << '\n';
}

}  // namespace sms
