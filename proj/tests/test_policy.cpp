#include <doctest.h>

#include "oracles.hpp"
#include "planarm/policy.hpp"
#include "planarm/rng.hpp"

using namespace planarm;

namespace {

plan::ReferencePath line_reference(int T, const Vec3& from, const Vec3& to) {
  plan::ReferencePath ref;
  ref.T_traj = T - 2;
  ref.T_final = 2;
  for (int t = 1; t <= T; ++t) {
    const double s = std::min(1.0, static_cast<double>(t) / ref.T_traj);
    ref.task_points.push_back(from + s * (to - from));
    ref.joint_points.push_back(Vec::Zero(3));
  }
  return ref;
}

TaskPose make_pose(const Vec3& p, const Vec3& v = Vec3::Zero()) {
  TaskPose out;
  out.position = p.head<2>();
  out.heading = p.z();
  out.linear_velocity = v.head<2>();
  out.angular_velocity = v.z();
  return out;
}

nn::CloneDataset random_dataset(const nn::AttentionPolicyParams& teacher,
                                int n_samples, int T, uint64_t seed,
                                bool targets_from_teacher) {
  auto rng = make_rng(seed);
  nn::CloneDataset data;
  data.references.push_back(
      line_reference(T, Vec3(0, 0, 0), Vec3(0.5, 0.3, 0.2)));
  for (int i = 0; i < n_samples; ++i) {
    nn::CloneSample s;
    s.observed.angles = Vec(3);
    s.observed.velocities = Vec(3);
    for (int j = 0; j < 3; ++j) {
      s.observed.angles[j] = uniform(rng, -1, 1);
      s.observed.velocities[j] = uniform(rng, -1, 1);
    }
    Vec3 p, v;
    for (int j = 0; j < 3; ++j) {
      p[j] = uniform(rng, -0.5, 0.5);
      v[j] = uniform(rng, -0.5, 0.5);
    }
    s.observed_pose = make_pose(p, v);
    s.t = 1 + static_cast<int>(uniform(rng, 0, T - 1));
    s.reference_index = 0;
    if (targets_from_teacher) {
      s.target_action = nn::attention_forward(teacher, s.observed,
                                              s.observed_pose,
                                              data.references[0], s.t)
                            .action;
    } else {
      s.target_action = Vec(3);
      for (int j = 0; j < 3; ++j) s.target_action[j] = uniform(rng, -1, 1);
    }
    data.samples.push_back(std::move(s));
  }
  return data;
}

}  // namespace

TEST_SUITE("policy") {

TEST_CASE("window indices clip at the reference boundaries") {
  auto rng = make_rng(1);
  const auto params = nn::make_attention_policy(3, 5, {8}, rng);
  const int T = 100;
  plan::ReferencePath ref = line_reference(T, Vec3(0, 0, 0), Vec3(1, 1, 1));
  // Make the first points distinctive so clipping is observable: weights must
  // treat s_{-5..0} identically at t=1 (all clip to index 1).
  const auto out = nn::attention_forward(params, JointState::zero(3),
                                         make_pose(Vec3(0, 0, 0)), ref, 1);
  CHECK(out.weights.size() == 11);
  CHECK(out.weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
  for (int i = 0; i < 11; ++i) {
    CHECK(out.weights[i] > 0.0);
    CHECK(out.weights[i] < 1.0);
  }
  CHECK_THROWS_AS(nn::attention_forward(params, JointState::zero(3),
                                        make_pose(Vec3(0, 0, 0)), ref, 0),
                  Error);
  CHECK_THROWS_AS(nn::attention_forward(params, JointState::zero(3),
                                        make_pose(Vec3(0, 0, 0)), ref, T + 1),
                  Error);
}

TEST_CASE("all directions zero when the pose sits on every window point") {
  auto rng = make_rng(2);
  const auto params = nn::make_attention_policy(3, 2, {8}, rng);
  plan::ReferencePath ref;
  ref.T_traj = 8;
  ref.T_final = 2;
  const Vec3 point(0.4, 0.2, -0.3);
  for (int t = 0; t < 10; ++t) {
    ref.task_points.push_back(point);
    ref.joint_points.push_back(Vec::Zero(3));
  }
  JointState obs = JointState::zero(3);
  obs.angles << 0.5, -0.5, 0.25;
  const auto out = nn::attention_forward(params, obs, make_pose(point), ref, 5);

  // Attended direction is zero regardless of the weights; the action depends
  // only on the state inputs, and with another weight draw it is identical.
  auto rng2 = make_rng(3);
  auto params2 = params;
  // Perturb only the attention MLP; action must not change.
  for (auto& W : params2.attention.W)
    for (int r = 0; r < W.rows(); ++r)
      for (int c = 0; c < W.cols(); ++c) W(r, c) += uniform(rng2, -0.1, 0.1);
  const auto out2 = nn::attention_forward(params2, obs, make_pose(point), ref, 5);
  CHECK((out.action - out2.action).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("translation of pose and reference together leaves the action unchanged") {
  auto rng = make_rng(4);
  const auto params = nn::make_attention_policy(3, 5, {16, 16}, rng);
  const int T = 40;
  // Exact binary fractions keep the shifted subtractions exact, so the
  // invariance holds bitwise rather than to rounding error.
  auto frac = [](int num) { return static_cast<double>(num) / 1024.0; };
  plan::ReferencePath ref;
  ref.T_traj = T - 5;
  ref.T_final = 5;
  for (int t = 1; t <= T; ++t) {
    ref.task_points.push_back(Vec3(frac(10 * t), frac(-7 * t), frac(3 * t)));
    ref.joint_points.push_back(Vec::Zero(3));
  }
  JointState obs = JointState::zero(3);
  obs.angles << 0.3, 0.2, 0.1;
  obs.velocities << -0.1, 0.2, 0.0;
  const Vec3 pose(frac(205), frac(102), frac(154));
  const Vec3 vel(0.05, -0.02, 0.1);

  const auto base =
      nn::attention_forward(params, obs, make_pose(pose, vel), ref, 17);

  // Translate positions only; heading and all other inputs stay fixed.
  const Vec3 offset(frac(379), frac(-215), 0.0);
  plan::ReferencePath shifted = ref;
  for (auto& p : shifted.task_points) p += offset;
  const auto moved = nn::attention_forward(
      params, obs, make_pose(pose + offset, vel), shifted, 17);

  CHECK(base.action == moved.action);  // bitwise
  CHECK(base.weights == moved.weights);
}

TEST_CASE("attended direction is a convex combination") {
  auto rng = make_rng(6);
  const auto params = nn::make_attention_policy(3, 5, {16}, rng);
  const int T = 30;
  plan::ReferencePath ref = line_reference(T, Vec3(0, 0, 0), Vec3(1, 0.5, 0.3));
  const Vec3 pose(0.3, 0.3, 0.0);
  const auto out = nn::attention_forward(params, JointState::zero(3),
                                         make_pose(pose), ref, 10);
  double max_norm = 0.0;
  Vec3 attended = Vec3::Zero();
  for (int i = -5; i <= 5; ++i) {
    const int idx = std::clamp(10 + i, 1, T);
    const Vec3 d = ref.task_points[idx - 1] - pose;
    max_norm = std::max(max_norm, d.norm());
    attended += out.weights[i + 5] * d;
  }
  CHECK(attended.norm() <= max_norm + 1e-12);
}

TEST_CASE("analytic gradients match finite differences over 50 draws") {
  const int T = 20;
  for (uint64_t draw = 0; draw < 50; ++draw) {
    auto rng = make_rng(100 + draw);
    auto params = nn::make_attention_policy(3, 2, {6, 5}, rng);
    const auto data = random_dataset(params, 3, T, 200 + draw, false);
    std::vector<int> batch{0, 1, 2};

    const auto analytic = nn::attention_gradients(params, data, batch);
    const Vec packed = nn::pack_params(params);
    Vec fd(packed.size());
    const double h = 1e-6;
    auto loss_at = [&](const Vec& p) {
      auto probe = params;
      nn::unpack_params(p, probe);
      double loss = 0.0;
      for (const int idx : batch) {
        const auto& s = data.samples[idx];
        const Vec a = nn::attention_forward(probe, s.observed, s.observed_pose,
                                            data.references[0], s.t)
                          .action;
        loss += (a - s.target_action).squaredNorm() / batch.size();
      }
      return loss;
    };
    for (int i = 0; i < packed.size(); ++i) {
      Vec hi = packed, lo = packed;
      hi[i] += h;
      lo[i] -= h;
      fd[i] = (loss_at(hi) - loss_at(lo)) / (2 * h);
    }
    const double rel = (analytic.grad - fd).norm() /
                       std::max(1e-8, fd.norm());
    CHECK(rel < 1e-5);
  }
}

TEST_CASE("targets equal to outputs give zero loss and zero gradients") {
  auto rng = make_rng(8);
  const auto params = nn::make_attention_policy(3, 2, {8}, rng);
  const auto data = random_dataset(params, 4, 20, 9, true);
  std::vector<int> batch{0, 1, 2, 3};
  const auto g = nn::attention_gradients(params, data, batch);
  CHECK(g.loss < 1e-24);
  CHECK(g.grad.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("duplicating every sample leaves the mean gradient unchanged") {
  auto rng = make_rng(10);
  const auto params = nn::make_attention_policy(3, 2, {8}, rng);
  auto data = random_dataset(params, 3, 20, 11, false);
  const std::vector<int> batch{0, 1, 2};
  const auto g1 = nn::attention_gradients(params, data, batch);
  const std::vector<int> doubled{0, 1, 2, 0, 1, 2};
  const auto g2 = nn::attention_gradients(params, data, doubled);
  CHECK((g1.grad - g2.grad).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(g1.loss == doctest::Approx(g2.loss).epsilon(1e-12));
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  Vec p(4);
  p << 1.0, -2.0, 3.0, 0.5;
  auto state = nn::AdamState::zero(4);
  const Vec updated = nn::adam_step(p, Vec::Zero(4), state, 1);
  CHECK(updated == p);
}

TEST_CASE("adam first step approximates -lr * sign(g)") {
  Vec p = Vec::Zero(3);
  Vec g(3);
  g << 0.5, -2.0, 1e3;
  auto state = nn::AdamState::zero(3);
  const Vec updated = nn::adam_step(p, g, state, 1);
  for (int i = 0; i < 3; ++i)
    CHECK(updated[i] ==
          doctest::Approx(-1e-3 * (g[i] > 0 ? 1.0 : -1.0)).epsilon(1e-6));
}

TEST_CASE("adam minimizes a convex quadratic") {
  Vec p(4);
  p << 0.05, -0.08, 0.03, 0.06;
  auto state = nn::AdamState::zero(4);
  std::vector<double> losses;
  for (int step = 1; step <= 200; ++step) {
    const Vec g = 2.0 * p;
    losses.push_back(p.squaredNorm());
    p = nn::adam_step(p, g, state, step);
  }
  for (size_t i = 10; i < losses.size(); ++i) CHECK(losses[i] < losses[i - 1]);
  CHECK(p.squaredNorm() < 1e-4);
}

TEST_CASE("behavioral cloning imitates a teacher network") {
  auto rng = make_rng(21);
  const auto teacher = nn::make_attention_policy(3, 2, {8}, rng);
  const auto data = random_dataset(teacher, 256, 20, 22, true);
  auto rng2 = make_rng(23);
  auto student = nn::make_attention_policy(3, 2, {8}, rng2);
  const auto trained = nn::behavioral_clone(data, student, 300, 32, 24);
  CHECK(trained.epoch_losses.back() < 1e-3);
}

TEST_CASE("single repeated sample is memorized") {
  auto rng = make_rng(31);
  auto params = nn::make_attention_policy(3, 2, {8}, rng);
  auto data = random_dataset(params, 1, 20, 32, false);
  const auto trained = nn::behavioral_clone(data, params, 400, 1, 33);
  CHECK(trained.epoch_losses.back() < 1e-6);
}

TEST_CASE("cloning is deterministic per seed") {
  auto rng = make_rng(41);
  const auto teacher = nn::make_attention_policy(3, 2, {8}, rng);
  const auto data = random_dataset(teacher, 64, 20, 42, true);
  auto rng2 = make_rng(43);
  const auto init = nn::make_attention_policy(3, 2, {8}, rng2);
  const auto a = nn::behavioral_clone(data, init, 20, 16, 44);
  const auto b = nn::behavioral_clone(data, init, 20, 16, 44);
  CHECK(a.epoch_losses == b.epoch_losses);
  CHECK(nn::pack_params(a.params) == nn::pack_params(b.params));
}

TEST_CASE("pack/unpack round-trip") {
  auto rng = make_rng(51);
  const auto params = nn::make_attention_policy(3, 5, {64, 64}, rng);
  const Vec packed = nn::pack_params(params);
  auto copy = params;
  nn::unpack_params(packed, copy);
  CHECK(nn::pack_params(copy) == packed);
}

}  // TEST_SUITE
