#pragma once

#include "sms/scene.hpp"

#include <optional>

namespace sms {

/// Everything built before the first timestep.
struct Precomputed {
  SceneMesh scene;
  DiscreteOperators ops;
  PartitionSet parts;
  SubspaceBases bases;
  std::optional<CubatureScheme> cubature;
  ElementSubset subset;  // cubature elements and weights; empty without cubature
  int refine_iters = 20;
  double hop_radius = 0.0;
  double seconds_partition = 0.0, seconds_basis = 0.0, seconds_cubature = 0.0;

  const SimMesh& mesh() const { return scene.mesh; }
  const ElementSubset* scheme() const { return cubature ? &subset : nullptr; }
};

Precomputed precompute(const SceneConfig& scene);

/// partition.txt, weights.txt and cubature.csv (when fitted) under `dir`.
void export_precompute(const std::filesystem::path& dir, const Precomputed& pre);

struct StepStats {
  int step = 0;
  int newton_iterations = 0;
  bool converged = false;
  bool line_search_failed = false;
  int pcg_affine = 0, pcg_sms = 0, cg_refine = 0;
  int hlag_refreshes = 0, fallbacks = 0;
  double min_alpha = 1.0;
  double energy_start = 0.0, energy_end = 0.0;
  bool monotone = true;
  double min_distance = 0.0, min_area = 0.0;
  double seconds = 0.0;  // wall time, kept out of the deterministic CSV
};

struct RunOptions {
  bool write_output = true;
  bool keep_states = false;  // positions after every step in the result
};

struct SimulationResult {
  std::vector<StepStats> steps;
  std::vector<NewtonResult> newton;
  std::vector<VecX> states;  // frame 0 first, when requested
  VecX final_positions;
  VecX final_velocity;
};

/// The timestep loop shared by run and compare: Dirichlet targets,
/// predictor, solve and state update.
class Stepper {
 public:
  Stepper(const SceneConfig& scene, const Precomputed& pre);

  const PredictorState& state() const { return state_; }
  void reset(const PredictorState& s, int step) {
    state_ = s;
    step_ = step;
  }
  int step() const { return step_; }

  /// Starting iterate of the next step: current positions with Dirichlet
  /// vertices moved to their prescribed targets.
  VecX start_positions() const;
  /// Loads the predictor of the next step into the potential.
  const IncrementalPotential& prepare();

  NewtonResult solve_multilevel();
  ReferenceResult solve_reference(const ReferenceConfig& cfg);
  void accept(const VecX& x_new);

  const IncrementalPotential& potential() const { return ip_; }

 private:
  const SceneConfig& scene_;
  const Precomputed& pre_;
  IncrementalPotential ip_;
  MultilevelSolver solver_;
  PredictorState state_;
  int step_ = 0;
};

/// Post-hoc feasibility of a configuration; throws Error("output", ...).
void check_feasible(const VecX& x, const IncrementalPotential& ip, int step);

SimulationResult run_simulation(const SceneConfig& scene, const Precomputed& pre, const RunOptions& options = {});

struct CompareStep {
  int step = 0;
  double max_error = 0.0, mean_error = 0.0;
  int ours_iterations = 0, ours_pcg = 0;
  int ref_iterations = 0, ref_cg = 0;
  bool ours_converged = false, ref_converged = false;
};

/// Each step restarts both solvers from the reference trajectory.
std::vector<CompareStep> compare_mode(const SceneConfig& scene, const Precomputed& pre, bool write_output = true);

void write_stats_csv(const std::filesystem::path& path, const std::vector<StepStats>& steps);
void write_timing_csv(const std::filesystem::path& path, const std::vector<StepStats>& steps,
                      const Precomputed& pre);

}  // namespace sms
