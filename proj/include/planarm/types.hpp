#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace planarm {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& msg) : Error(msg) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& msg) : Error(msg) {}
};

class NoPlanFound : public Error {
 public:
  explicit NoPlanFound(const std::string& msg) : Error(msg) {}
};

class SingularRegression : public Error {
 public:
  explicit SingularRegression(const std::string& msg) : Error(msg) {}
};

// Planar N-link revolute arm. Gravity acts in-plane along -y; task scenes
// are top-down and set it to zero.
struct ArmModel {
  int n_links = 0;
  Vec link_lengths;    // m
  Vec link_masses;     // kg
  Vec link_inertias;   // kg m^2 about link CoM
  Vec armature;        // kg m^2 reflected rotor inertia per joint
  Vec joint_damping;   // N m s / rad
  Vec torque_limits;   // N m
  double gravity = 0.0;      // m/s^2, along -y
  double link_radius = 0.02; // m, capsule radius for collision checking

  void validate() const;
};

// Joint angles are kept unwrapped: no modular reduction anywhere.
struct JointState {
  Vec angles;
  Vec velocities;

  JointState() = default;
  JointState(Vec a, Vec v) : angles(std::move(a)), velocities(std::move(v)) {}
  static JointState zero(int n) { return {Vec::Zero(n), Vec::Zero(n)}; }
  Vec concat() const;  // [angles; velocities]
};

struct TaskPose {
  Vec2 position = Vec2::Zero();
  double heading = 0.0;
  Vec2 linear_velocity = Vec2::Zero();
  double angular_velocity = 0.0;

  Vec3 pose3() const { return Vec3(position.x(), position.y(), heading); }
  Vec3 velocity3() const {
    return Vec3(linear_velocity.x(), linear_velocity.y(), angular_velocity);
  }
};

// Additive zero-mean Gaussian on joints; the task-pose observation carries an
// additional constant bias drawn once per episode (calibration offset analog).
struct ObservationNoise {
  double angle_std = 0.0;      // rad
  double velocity_std = 0.0;   // rad/s
  double pose_bias_std = 0.0;  // m, per-episode constant position bias

  static ObservationNoise none() { return {}; }
  static ObservationNoise defaults() { return {0.002, 0.01, 0.002}; }
};

ArmModel default_arm();

}  // namespace planarm
