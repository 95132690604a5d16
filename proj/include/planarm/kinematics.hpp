#pragma once

#include "planarm/types.hpp"

namespace planarm::kin {

// End-effector pose and twist from joint state (planar chain: heading is the
// sum of joint angles, velocities go through the Jacobian).
TaskPose forward_kinematics(const ArmModel& model, const JointState& state);

// Task Jacobian, 3 x n_links. Rows: (x, y, heading); the heading row is all
// ones.
Mat jacobian(const ArmModel& model, const Vec& angles);

struct DynamicsTerms {
  Mat mass_matrix;  // symmetric positive definite
  Vec bias;         // Coriolis/centrifugal + gravity + viscous damping
};

// Lagrangian terms of the chain so that M(q) qdd = u + J^T f_ext - bias.
DynamicsTerms dynamics_terms(const ArmModel& model, const JointState& state);

// Kinetic + gravitational potential energy (potential measured from base
// height); used by the passive-swing drift checks.
double total_energy(const ArmModel& model, const JointState& state);

// Diagonal gain scaling proportional to the inertia of the distal chain seen
// by each joint (straight configuration), normalized so max entry = 1.
Vec moment_gains(const ArmModel& model);

}  // namespace planarm::kin
