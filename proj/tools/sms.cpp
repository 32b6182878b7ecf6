#include "sms/simulation.hpp"

#include <CLI11.hpp>
#include <omp.h>

#include <cstdio>
#include <cstdlib>
#include <iostream>

using namespace sms;

namespace {

struct Options {
  std::string scene;
  int threads = 0;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

SceneConfig configure(const Options& opt) {
  SceneConfig scene = load_scene(opt.scene);
  if (opt.seed) scene.set_seed(*opt.seed);
  if (opt.out) scene.output.dir = *opt.out;
  return scene;
}

void report_precompute(const Precomputed& pre) {
  std::printf("mesh: %d vertices, %d elements, %d objects\n", pre.mesh().num_vertices(), pre.mesh().num_elements(),
              pre.mesh().num_objects());
  std::printf("partition: %d partitions in %d iterations%s\n", pre.parts.count(), pre.parts.iterations,
              pre.parts.budget_exhausted ? " (budget exhausted)" : "");
  if (pre.cubature) std::printf("cubature: %d points\n", pre.cubature->num_points());
  std::printf("refinement: mean hop radius %.1f, %d CG iterations\n", pre.hop_radius, pre.refine_iters);
}

int run(const Options& opt) {
  SceneConfig scene = configure(opt);
  Precomputed pre = precompute(scene);
  report_precompute(pre);
  auto result = run_simulation(scene, pre);
  int unconverged = 0;
  for (const auto& s : result.steps) unconverged += !s.converged;
  std::printf("run: %zu steps written to %s (%d unconverged)\n", result.steps.size(), scene.output.dir.c_str(),
              unconverged);
  return 0;
}

int compare(const Options& opt) {
  SceneConfig scene = configure(opt);
  Precomputed pre = precompute(scene);
  report_precompute(pre);
  auto steps = compare_mode(scene, pre);
  double worst = 0.0;
  for (const auto& c : steps) {
    std::printf("step %d: max %.3e mean %.3e (ours %d it / %d pcg, reference %d it)\n", c.step, c.max_error,
                c.mean_error, c.ours_iterations, c.ours_pcg, c.ref_iterations);
    worst = std::max(worst, c.max_error);
  }
  std::printf("compare: worst max relative error %.3e\n", worst);
  return 0;
}

int partition(const Options& opt) {
  SceneConfig scene = configure(opt);
  Precomputed pre = precompute(scene);
  report_precompute(pre);
  export_precompute(scene.output.dir, pre);
  std::printf("partition: exported to %s\n", scene.output.dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multilevel subspace elastodynamics"};
  app.require_subcommand(1);
  app.fallthrough();
  Options opt;
  int threads = 0;
  std::uint64_t seed = 0;
  std::string out;
  auto* threads_opt = app.add_option("--threads", threads, "Worker threads (overrides SMS_THREADS)")
                          ->check(CLI::PositiveNumber);
  auto* seed_opt = app.add_option("--seed", seed, "Seed for partitioning and cubature sampling");
  auto* out_opt = app.add_option("--out", out, "Output directory");

  auto* run_cmd = app.add_subcommand("run", "Simulate a scene and write frames and stats");
  auto* compare_cmd = app.add_subcommand("compare", "Compare against the full-space reference step by step");
  auto* partition_cmd = app.add_subcommand("partition", "Export partitions, weights and cubature");
  for (auto* cmd : {run_cmd, compare_cmd, partition_cmd})
    cmd->add_option("scene", opt.scene, "Scene JSON file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::fprintf(stderr, "error: config: %s\n", e.what());
    return 1;
  }

  if (*threads_opt) {
    opt.threads = threads;
  } else if (const char* env = std::getenv("SMS_THREADS")) {
    opt.threads = std::atoi(env);
    if (opt.threads < 1) {
      std::fprintf(stderr, "error: config: SMS_THREADS must be a positive integer\n");
      return 2;
    }
  }
  if (opt.threads > 0) omp_set_num_threads(opt.threads);
  if (*seed_opt) opt.seed = seed;
  if (*out_opt) opt.out = out;

  try {
    if (run_cmd->parsed()) return run(opt);
    if (compare_cmd->parsed()) return compare(opt);
    return partition(opt);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: internal: %s\n", e.what());
    return 1;
  }
}
