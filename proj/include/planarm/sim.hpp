#pragma once

#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "planarm/geometry.hpp"
#include "planarm/types.hpp"

namespace planarm::sim {

// Penalty contact with regularized Coulomb friction.
struct ContactParams {
  double normal_stiffness = 5e4;                 // N/m
  double normal_damping = 1e3;                   // N s/m
  double friction_coefficient = 0.8;
  double friction_regularization_velocity = 1e-3;  // m/s

  void validate() const;
};

struct SceneSpec {
  std::vector<geom::Polygon> static_polygons;
  geom::Polygon grasped_polygon;  // in end-effector frame
  TaskPose goal_pose;
  std::string task_name;
  double tolerance = 0.001;  // m, part clearance

  // Named start poses (easy/hard) and the pose-generation region, authored in
  // the scene file and used by the harness.
  std::map<std::string, Vec3> named_poses;
  double region_xmin = 0, region_xmax = 0, region_ymin = 0, region_ymax = 0;
  std::vector<double> region_orientations;

  void validate() const;
};

struct SimParams {
  double dt_control = 0.05;  // 20 Hz command rate
  int n_substeps = 50;       // 1 kHz physics
  double substep_dt() const { return dt_control / n_substeps; }
};

struct ContactForce {
  Vec2 point;
  Vec2 force;
};

// Forces of the penalty model for the grasped polygon at ee_pose against the
// static polygons. Pure evaluation of the force law; the integrator applies
// its own impulse limiting on top.
std::vector<ContactForce> contact_forces(const SceneSpec& scene,
                                         const ContactParams& params,
                                         const TaskPose& ee_pose);

// One physics substep (explicit midpoint). Torque is clamped to the model
// limits. Throws NumericalError if the result is non-finite.
JointState step(const ArmModel& model, const SceneSpec& scene,
                const ContactParams& params, const JointState& state,
                const Vec& torque, double dt);

// Noisy observation: Gaussian joint noise, task pose recomputed from the
// noisy joints, then the per-episode position bias added.
std::pair<JointState, TaskPose> observe(const ArmModel& model,
                                        const JointState& state,
                                        const ObservationNoise& noise,
                                        const Vec2& pose_bias,
                                        std::mt19937_64& rng);

struct Rollout {
  std::vector<JointState> states;        // T+1, true
  std::vector<TaskPose> task_poses;      // T+1, true
  std::vector<JointState> observed_states;  // T+1
  std::vector<TaskPose> observed_poses;     // T+1
  std::vector<Vec> actions;              // T, applied (clamped) torques
  std::vector<double> costs;             // T, filled when a cost fn is given
  Vec2 pose_bias = Vec2::Zero();
  bool deep_penetration = false;         // diagnostic: depth > 10x tolerance

  int horizon() const { return static_cast<int>(actions.size()); }
  void check_consistent() const;
};

// Controller maps (observed joints, observed pose, step, rng) -> torque.
using Controller =
    std::function<Vec(const JointState&, const TaskPose&, int, std::mt19937_64&)>;

// Optional per-step cost hook: (true pose after step, action, step) -> cost.
using StepCostFn = std::function<double(const TaskPose&, const Vec&, int)>;

Rollout rollout(const ArmModel& model, const SceneSpec& scene,
                const ContactParams& params, const Controller& controller,
                const JointState& init, int T, const SimParams& sim,
                const ObservationNoise& noise, uint64_t seed,
                const StepCostFn& cost_fn = nullptr);

}  // namespace planarm::sim
