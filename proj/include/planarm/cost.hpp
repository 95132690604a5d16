#pragma once

#include <optional>

#include "planarm/planner.hpp"
#include "planarm/sim.hpp"
#include "planarm/types.hpp"

namespace planarm::cost {

enum class Kind { GoalOnly, Reference };

// Per-step loss d^2 + log(alpha + d^2) + action_penalty * |u|^2, where d is
// the weighted task-space distance to the step target (the goal, or the
// reference point for the step).
struct CostSpec {
  Kind kind = Kind::GoalOnly;
  double alpha = 1e-5;
  Vec3 weights = Vec3(1.0, 1.0, 0.1);  // x, y, heading scale
  double action_penalty = 1e-5;
  Vec3 goal = Vec3::Zero();
  std::optional<plan::ReferencePath> reference;

  void validate(int horizon) const;
  // Target for the state reached after action step t (0-based).
  Vec3 target(int t) const;
};

// State-only part of the loss at pose x against target.
double pose_loss(const CostSpec& spec, const Vec3& pose, const Vec3& target);

// Cost attributed to action step t: `pose` is the task pose reached after the
// action. t in 0..T-1.
double step_cost(const CostSpec& spec, const TaskPose& pose, const Vec& action,
                 int t);

double trajectory_cost(const CostSpec& spec, const sim::Rollout& rollout);

// Local quadratic model around a joint-space trajectory. State layout
// (angles, velocities); state terms have length T+1 (t = 0 term is zero),
// action terms length T.
struct CostExpansion {
  std::vector<double> base_state;  // loss value at the nominal state
  std::vector<Vec> grad_state;     // d loss / d state
  std::vector<Mat> hess_state;     // PSD after eigenvalue clamping
  std::vector<double> base_action;
  std::vector<Vec> grad_action;
  std::vector<Mat> hess_action;
};

// Gauss-Newton expansion through forward kinematics; Hessians eigenvalue-
// clamped at 1e-6.
CostExpansion quadratize(const CostSpec& spec, const ArmModel& model,
                         const std::vector<JointState>& states,
                         const std::vector<Vec>& actions);

CostExpansion quadratize(const CostSpec& spec, const ArmModel& model,
                         const sim::Rollout& rollout, bool use_observed = true);

}  // namespace planarm::cost
