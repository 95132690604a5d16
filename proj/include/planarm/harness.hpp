#pragma once

#include <optional>
#include <string>
#include <vector>

#include "planarm/config.hpp"
#include "planarm/cost.hpp"
#include "planarm/ilqg.hpp"
#include "planarm/planner.hpp"
#include "planarm/policy.hpp"
#include "planarm/sim.hpp"

namespace planarm::harness {

// Everything a task scene file defines: geometry, arm, contact, noise,
// control and planning parameters.
struct SceneBundle {
  ArmModel arm;
  sim::SceneSpec scene;
  sim::ContactParams contact;
  ObservationNoise noise;
  sim::SimParams sim_params;
  plan::PlannerParams planner_params;
  int T = 100;
  int T_traj = 80;
  int T_final = 20;
  double kp = 50.0;
  double kd = 9.0;
  Vec exploration_std;
  double success_tolerance = 0.002;
  // Optional approach via: plan to goal+offset, then a straight task-space
  // ladder into the goal (assembly-style aligned final approach).
  Vec2 approach_offset = Vec2::Zero();

  Vec3 named_pose(const std::string& name) const;
};

SceneBundle load_scene(const std::string& path);
SceneBundle load_scene_config(const cfg::Config& config);

// Controllers over the observation interface of sim::rollout.
sim::Controller tvlg_controller(const ilqg::TvlgPolicy& policy,
                                bool exploration);
sim::Controller attention_controller(const nn::AttentionPolicyParams& params,
                                     const plan::ReferencePath& reference);

// Success: true task-position error stays under tolerance over the final
// T_final steps (strict inequality).
bool rollout_success(const sim::Rollout& rollout, const Vec3& goal, double tol,
                     int T_final);
double final_position_error(const sim::Rollout& rollout, const Vec3& goal);

// Pick the unwrapped representative of `heading` closest to `near`.
double heading_representative(double heading, double near);

// Reference as re-estimated in a frame offset by `shift`: task points move by
// the shift, joint points by the Jacobian-mapped equivalent. Models the
// per-episode scene-calibration error a plan-tracking execution inherits.
plan::ReferencePath shift_reference(const SceneBundle& bundle,
                                    const plan::ReferencePath& reference,
                                    const Vec2& shift);

struct PlannedTask {
  Vec start_config;
  plan::PlanPath path;
  plan::ReferencePath reference;
  Vec3 effective_goal;  // goal with the plan's unwrapped heading
};

// IK the start pose, plan to the scene goal, discretize. Throws NoPlanFound.
PlannedTask plan_task(const SceneBundle& bundle, const Vec3& start_pose,
                      uint64_t seed);
PlannedTask plan_task_to(const SceneBundle& bundle, const Vec3& start_pose,
                         const Vec3& goal_pose, uint64_t seed);

// Run one environment rollout of a linear-Gaussian policy and package it for
// the iLQG loop. cost_opt is evaluated on forward kinematics of the observed
// joints (what the system can measure); cost_true on the true states.
ilqg::EnvSample run_env_sample(const SceneBundle& bundle,
                               const cost::CostSpec& spec,
                               const JointState& init,
                               const ilqg::TvlgPolicy& policy,
                               bool exploration, uint64_t seed);

enum class InitKind { PdWarmStart, StationaryHold, RandomExploration };

struct SolveResult {
  ilqg::IlqgResult ilqg;
  cost::CostSpec spec;
  std::optional<PlannedTask> planned;
  JointState init_state;
};

// Full policy-search pipeline for one start pose: plan (reference cost only),
// build the cost, warm start, run the iLQG loop.
SolveResult solve_pose(const SceneBundle& bundle, const Vec3& start_pose,
                       cost::Kind kind, const ilqg::IlqgOptions& opts,
                       uint64_t seed,
                       InitKind init_kind = InitKind::PdWarmStart);

// Feasible start poses: uniform position in the scene region, orientation
// from the configured discrete set, kept only when motion planning succeeds.
std::pair<std::vector<Vec3>, std::vector<Vec3>> generate_pose_set(
    const SceneBundle& bundle, int n_train, int n_test, uint64_t seed);

struct EvalOutcome {
  std::vector<bool> successes;
  std::vector<double> errors;

  int count() const;
  double rate() const;
};

// One rollout per (pose, seed) with the controller the factory builds for
// each pose; success iff final task-position error < tolerance.
using ControllerFactory =
    std::function<std::optional<std::pair<sim::Controller, JointState>>(
        const Vec3& pose, uint64_t seed)>;
EvalOutcome evaluate_policy(const SceneBundle& bundle,
                            const ControllerFactory& factory,
                            const std::vector<Vec3>& poses, double tolerance,
                            const std::vector<uint64_t>& seeds,
                            bool observation_noise);

// Clone data from a trained linear-Gaussian controller: observation-noise
// rollouts without exploration, mean actions as targets.
nn::CloneDataset collect_clone_data(const SceneBundle& bundle,
                                    const SolveResult& solved, int n_rollouts,
                                    uint64_t seed);

nn::CloneDataset collect_aux_clone_data(const SceneBundle& bundle,
                                        int n_trajectories, uint64_t seed,
                                        const ilqg::IlqgOptions& opts,
                                        int rollouts_per_trajectory);

// CSV report with a pinned schema line.
struct Report {
  std::string name;
  int schema_version = 1;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::string csv() const;
};

struct ExperimentConfig {
  std::vector<std::string> scene_files;
  int eval_seeds = 5;
  ilqg::IlqgOptions ilqg;
  // policy / generalization settings
  std::string generalization_scene;
  int n_train = 10;
  int n_test = 20;
  int k = 5;
  std::vector<int> hidden{64, 64};
  int epochs = 200;
  int pretrain_epochs = 100;
  int batch_size = 64;
  int n_aux = 8;
  int clone_rollouts = 5;
  int aux_rollouts = 3;
  bool pretrain = true;
  bool pretrain_ab = false;
  uint64_t seed = 0;
  std::string out_dir;
  int jobs = 1;
};

ExperimentConfig load_experiment_config(const std::string& path);

struct FixedPoseReport {
  Report table1;          // success aggregates per (task, pose, method)
  Report table2;          // rollouts to first success + warm-start ablation
  Report cells;           // per-cell detail
  bool table1_pass = false;
  bool table2_pass = false;
  std::string summary;
};

FixedPoseReport run_fixed_pose_experiment(const ExperimentConfig& config);

struct GeneralizationReport {
  Report table3;   // split rates
  Report poses;    // per-pose detail
  bool pass = false;
  std::string summary;
};

GeneralizationReport run_generalization_experiment(const ExperimentConfig& config);

}  // namespace planarm::harness
