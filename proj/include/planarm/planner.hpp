#pragma once

#include <random>
#include <vector>

#include "planarm/sim.hpp"
#include "planarm/types.hpp"

namespace planarm::plan {

struct PlannerParams {
  double steer_step = 0.05;      // rad, local extension step
  double cc_resolution = 0.005;  // rad, collision-check resolution
  double clearance_margin = 0.0; // m, required separation
  int shortcut_attempts = 100;
  int max_iters = 50000;
  Vec lower_bounds;  // per-joint sampling bounds; defaults to [-pi, pi]
  Vec upper_bounds;

  static PlannerParams defaults(int n_links);
};

struct PlanPath {
  std::vector<Vec> waypoints;           // joint configurations
  std::vector<double> parameterization; // arc-length fractions in [0, 1]

  // Arc-length interpolation at fraction s in [0, 1].
  Vec interpolate(double s) const;
};

struct ReferencePath {
  std::vector<Vec3> task_points;  // length T_traj + T_final, (x, y, heading)
  std::vector<Vec> joint_points;  // same length, same interpolation
  int T_traj = 0;
  int T_final = 0;

  int length() const { return static_cast<int>(task_points.size()); }
};

// True iff the arm capsules and the grasped polygon at f_FK(q) keep at least
// clearance_margin separation from every static polygon.
bool collision_free(const ArmModel& model, const Vec& angles,
                    const sim::SceneSpec& scene, double clearance_margin);

bool segment_collision_free(const ArmModel& model, const Vec& from,
                            const Vec& to, const sim::SceneSpec& scene,
                            const PlannerParams& params);

// Closed-form planar 3-dof IK for (x, y, heading); up to two elbow branches,
// angles normalized to (-pi, pi].
std::vector<Vec> ik_solutions(const ArmModel& model, const Vec3& target);

// Collision-free IK branches for a task-space goal.
std::vector<Vec> goal_configurations(const ArmModel& model, const Vec3& goal,
                                     const sim::SceneSpec& scene,
                                     double clearance_margin);

// Bidirectional RRT with shortcut smoothing. Throws NoPlanFound after
// max_iters without a connection.
PlanPath rrt_connect(const ArmModel& model, const sim::SceneSpec& scene,
                     const Vec& start, const std::vector<Vec>& goal_configs,
                     std::mt19937_64& rng, const PlannerParams& params);

// Reference points per the two-case discretization: the first T_traj task
// points sit on f_FK of the path at parameters t/T_traj, the last T_final
// points equal the goal exactly.
ReferencePath discretize_reference(const ArmModel& model, const PlanPath& path,
                                   int T_traj, int T_final, const Vec3& goal);

}  // namespace planarm::plan
