#include <doctest.h>

#include <numbers>

#include "oracles.hpp"
#include "planarm/kinematics.hpp"
#include "planarm/sim.hpp"

using namespace planarm;
constexpr double kPi = std::numbers::pi;

namespace {

// Floor at y <= 0 plus a grasped unit box centered on the end effector.
sim::SceneSpec floor_scene() {
  sim::SceneSpec s;
  s.task_name = "floor";
  s.tolerance = 0.001;
  geom::Polygon floor;
  floor.vertices = {Vec2(-5, -1), Vec2(5, -1), Vec2(5, 0), Vec2(-5, 0)};
  s.static_polygons.push_back(floor);
  geom::Polygon grasped;
  grasped.vertices = {Vec2(-0.05, -0.05), Vec2(0.05, -0.05), Vec2(0.05, 0.05),
                      Vec2(-0.05, 0.05)};
  s.grasped_polygon = grasped;
  s.goal_pose.position = Vec2(1.0, 0.5);
  return s;
}

sim::SceneSpec empty_scene() {
  sim::SceneSpec s = floor_scene();
  s.static_polygons.clear();
  return s;
}

ArmModel one_link() {
  ArmModel m;
  m.n_links = 2;  // validate() needs >= 2; make the second link negligible
  m.link_lengths = (Vec(2) << 1.0, 1e-3).finished();
  m.link_masses = (Vec(2) << 1.0, 1e-9).finished();
  m.link_inertias = (Vec(2) << 1.0 / 12.0, 1e-12).finished();
  m.armature = Vec::Zero(2);
  m.joint_damping = Vec::Zero(2);
  m.torque_limits = (Vec(2) << 100.0, 100.0).finished();
  m.gravity = 0.0;
  return m;
}

TaskPose pose_at(const Vec2& p, double heading, const Vec2& v = Vec2::Zero(),
                 double w = 0.0) {
  TaskPose out;
  out.position = p;
  out.heading = heading;
  out.linear_velocity = v;
  out.angular_velocity = w;
  return out;
}

}  // namespace

TEST_SUITE("sim") {

TEST_CASE("no overlap gives no contact forces") {
  const auto scene = floor_scene();
  sim::ContactParams params;
  const auto forces = sim::contact_forces(scene, params, pose_at(Vec2(0, 1), 0));
  CHECK(forces.empty());
}

TEST_CASE("resting penetration gives the spring force") {
  const auto scene = floor_scene();
  sim::ContactParams params;
  const double depth = 2e-4;
  // Box bottom at -depth: two bottom vertices penetrate the floor.
  const auto forces =
      sim::contact_forces(scene, params, pose_at(Vec2(0, 0.05 - depth), 0));
  REQUIRE(forces.size() == 2);
  Vec2 total = Vec2::Zero();
  for (const auto& f : forces) {
    CHECK(f.force.y() > 0.0);           // pushes the box out
    CHECK(f.force.x() == doctest::Approx(0.0));  // no tangential at rest
    total += f.force;
  }
  CHECK(total.y() ==
        doctest::Approx(2 * params.normal_stiffness * depth).epsilon(1e-9));
}

TEST_CASE("tangential force saturates at mu * normal for fast sliding") {
  const auto scene = floor_scene();
  sim::ContactParams params;
  const double depth = 1e-4;
  const double speed = 5.0 * params.friction_regularization_velocity;
  const auto forces = sim::contact_forces(
      scene, params, pose_at(Vec2(0, 0.05 - depth), 0, Vec2(speed, 0)));
  REQUIRE(forces.size() == 2);
  for (const auto& f : forces) {
    const double fn = f.force.y();
    const double ft = std::abs(f.force.x());
    CHECK(fn > 0.0);
    CHECK(ft / (params.friction_coefficient * fn) ==
          doctest::Approx(1.0).epsilon(0.01));
    CHECK(f.force.x() < 0.0);  // opposes sliding
  }
}

TEST_CASE("normal force magnitudes never negative") {
  const auto scene = floor_scene();
  sim::ContactParams params;
  auto rng = oracles::test_rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const auto forces = sim::contact_forces(
        scene, params,
        pose_at(Vec2(oracles::runif(rng, -0.2, 0.2),
                     oracles::runif(rng, 0.0, 0.08)),
                oracles::runif(rng, -0.5, 0.5),
                Vec2(oracles::runif(rng, -0.3, 0.3),
                     oracles::runif(rng, -0.3, 0.3)),
                oracles::runif(rng, -1, 1)));
    for (const auto& f : forces) {
      // Decompose back along the outward (upward-ish) normal.
      CHECK(std::isfinite(f.force.x()));
      CHECK(std::isfinite(f.force.y()));
    }
  }
}

TEST_CASE("equilibrium state is a fixed point") {
  const auto m = one_link();
  const auto scene = empty_scene();
  sim::ContactParams params;
  const JointState s0 = JointState::zero(2);
  const auto s1 = sim::step(m, scene, params, s0, Vec::Zero(2), 1e-3);
  CHECK(s1.angles.cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  CHECK(s1.velocities.cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("constant torque on a frictionless link matches the closed form") {
  const auto m = one_link();
  const auto scene = empty_scene();
  sim::ContactParams params;
  JointState s = JointState::zero(2);
  const double u = 0.5;
  const double I_total = 1.0 / 12.0 + 1.0 * 0.25;  // link inertia about pivot
  Vec torque(2);
  torque << u, 0.0;
  const double dt = 1e-3;
  for (int i = 0; i < 1000; ++i) s = sim::step(m, scene, params, s, torque, dt);
  CHECK(s.velocities[0] == doctest::Approx(u / I_total * 1.0).epsilon(1e-3));
}

TEST_CASE("step is deterministic") {
  const auto m = default_arm();
  const auto scene = floor_scene();
  sim::ContactParams params;
  JointState s = JointState::zero(3);
  s.angles << 0.3, 0.2, -0.1;
  s.velocities << 0.5, -0.2, 0.1;
  Vec torque(3);
  torque << 1.0, -0.5, 0.2;
  const auto a = sim::step(m, scene, params, s, torque, 1e-3);
  const auto b = sim::step(m, scene, params, s, torque, 1e-3);
  CHECK(a.angles == b.angles);
  CHECK(a.velocities == b.velocities);
}

TEST_CASE("passive swing energy drift under 0.1% per second") {
  auto m = default_arm();
  m.gravity = 9.81;
  m.joint_damping = Vec::Zero(3);
  const auto scene = empty_scene();
  sim::ContactParams params;
  JointState s = JointState::zero(3);
  s.angles << 0.4, -0.3, 0.2;
  const double e0 = kin::total_energy(m, s);
  const double dt = 1e-3;
  for (int i = 0; i < 1000; ++i)
    s = sim::step(m, scene, params, s, Vec::Zero(3), dt);
  const double e1 = kin::total_energy(m, s);
  CHECK(std::abs(e1 - e0) / std::abs(e0) < 1e-3);
}

TEST_CASE("zero-noise zero-torque rollout at equilibrium stays put") {
  const auto m = one_link();
  const auto scene = empty_scene();
  sim::ContactParams params;
  sim::SimParams sp;
  const auto controller = [](const JointState&, const TaskPose&, int,
                             std::mt19937_64&) { return Vec::Zero(2); };
  const auto roll = sim::rollout(m, scene, params, controller,
                                 JointState::zero(2), 10, sp,
                                 ObservationNoise::none(), 42);
  for (const auto& st : roll.states)
    CHECK(st.angles.cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("rollouts with the same seed are identical") {
  const auto m = default_arm();
  const auto scene = floor_scene();
  sim::ContactParams params;
  sim::SimParams sp;
  sp.n_substeps = 10;
  const auto controller = [](const JointState& obs, const TaskPose&, int,
                             std::mt19937_64& rng) {
    Vec u = -0.3 * obs.velocities - 0.1 * obs.angles;
    u[0] += std::normal_distribution<double>(0.0, 0.2)(rng);
    return u;
  };
  JointState init = JointState::zero(3);
  init.angles << 0.5, 0.4, -0.2;
  const auto a = sim::rollout(m, scene, params, controller, init, 20, sp,
                              ObservationNoise::defaults(), 123);
  const auto b = sim::rollout(m, scene, params, controller, init, 20, sp,
                              ObservationNoise::defaults(), 123);
  for (int t = 0; t <= 20; ++t) {
    CHECK(a.states[t].angles == b.states[t].angles);
    CHECK(a.observed_states[t].angles == b.observed_states[t].angles);
  }
  CHECK(a.pose_bias == b.pose_bias);
}

TEST_CASE("observation noise statistics and per-episode bias") {
  const auto m = default_arm();
  JointState s = JointState::zero(3);
  s.angles << 0.3, -0.2, 0.5;
  auto rng = oracles::test_rng(99);
  ObservationNoise noise;
  noise.angle_std = 0.01;

  double sum = 0.0, sum2 = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto [obs, pose] = sim::observe(m, s, noise, Vec2::Zero(), rng);
    const double d = obs.angles[0] - s.angles[0];
    sum += d;
    sum2 += d * d;
  }
  const double std_hat = std::sqrt(sum2 / n - (sum / n) * (sum / n));
  CHECK(std_hat == doctest::Approx(0.01).epsilon(0.05));

  // Zero noise: observation equals state.
  const auto [obs0, pose0] =
      sim::observe(m, s, ObservationNoise::none(), Vec2::Zero(), rng);
  CHECK(obs0.angles == s.angles);

  // Constant bias shifts the pose observation only.
  const Vec2 bias(0.002, -0.001);
  const auto [obs1, pose1] =
      sim::observe(m, s, ObservationNoise::none(), bias, rng);
  const auto truth = kin::forward_kinematics(m, s);
  CHECK((pose1.position - truth.position - bias).norm() < 1e-15);
}

TEST_CASE("bias constant across steps within an episode") {
  const auto m = default_arm();
  const auto scene = empty_scene();
  sim::ContactParams params;
  sim::SimParams sp;
  sp.n_substeps = 5;
  ObservationNoise noise;
  noise.pose_bias_std = 0.002;
  const auto controller = [](const JointState&, const TaskPose&, int,
                             std::mt19937_64&) { return Vec::Zero(3); };
  JointState init = JointState::zero(3);
  init.angles << 0.3, 0.3, 0.3;
  const auto roll =
      sim::rollout(m, scene, params, controller, init, 10, sp, noise, 7);
  for (int t = 0; t <= 10; ++t) {
    const auto truth = kin::forward_kinematics(m, roll.observed_states[t]);
    const Vec2 shift = roll.observed_poses[t].position - truth.position;
    CHECK((shift - roll.pose_bias).norm() < 1e-14);
  }
}

}  // TEST_SUITE
