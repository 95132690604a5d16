#include <doctest.h>

#include "oracles.hpp"
#include "planarm/ilqg.hpp"
#include "planarm/kinematics.hpp"
#include "planarm/rng.hpp"

using namespace planarm;

namespace {

// Random stable linear system for the Riccati and solve tests.
struct LinearSystem {
  Mat A, B;
  Vec c;
  int nx, nu;

  static LinearSystem random(int nx, int nu, uint64_t seed) {
    auto rng = oracles::test_rng(seed);
    LinearSystem sys;
    sys.nx = nx;
    sys.nu = nu;
    sys.A = Mat(nx, nx);
    sys.B = Mat(nx, nu);
    for (int i = 0; i < nx; ++i)
      for (int j = 0; j < nx; ++j) sys.A(i, j) = oracles::runif(rng, -1, 1);
    // Scale to spectral radius ~0.95 for stability.
    const double radius =
        sys.A.eigenvalues().cwiseAbs().maxCoeff();
    sys.A *= 0.95 / radius;
    for (int i = 0; i < nx; ++i)
      for (int j = 0; j < nu; ++j) sys.B(i, j) = oracles::runif(rng, -1, 1);
    sys.c = Vec::Zero(nx);
    return sys;
  }

  ilqg::TvlgDynamics dynamics(int T) const {
    ilqg::TvlgDynamics dyn;
    dyn.A.assign(T, A);
    dyn.B.assign(T, B);
    dyn.c.assign(T, c);
    dyn.process_noise.assign(T, Mat::Zero(nx, nx));
    return dyn;
  }
};

ilqg::StageCost quadratic_cost(const Mat& Q, const Mat& R, const Mat& Qf, int T) {
  ilqg::StageCost stage;
  stage.Cxx.assign(T + 1, 2.0 * Q);
  stage.Cxx[T] = 2.0 * Qf;
  stage.cx.assign(T + 1, Vec::Zero(Q.rows()));
  stage.Cuu.assign(T, 2.0 * R);
  stage.cu.assign(T, Vec::Zero(R.rows()));
  stage.c0.assign(T + 1, 0.0);
  return stage;
}

}  // namespace

TEST_SUITE("ilqg") {

TEST_CASE("backward pass equals the independent Riccati recursion") {
  const int T = 50, nx = 6, nu = 3;
  const auto sys = LinearSystem::random(nx, nu, 51);
  const Mat Q = Mat::Identity(nx, nx);
  const Mat R = 0.1 * Mat::Identity(nu, nu);
  const Mat Qf = 5.0 * Mat::Identity(nx, nx);

  const auto result = ilqg::backward_pass(sys.dynamics(T),
                                          quadratic_cost(Q, R, Qf, T), 0.0,
                                          nullptr, Vec::Zero(nx));
  const auto K_ref = oracles::riccati_gains(sys.A, sys.B, Q, R, Qf, T);
  for (int t = 0; t < T; ++t)
    CHECK((result.policy.K[t] + K_ref[t]).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("zero cost gives zero gains and offsets") {
  const int T = 10, nx = 4, nu = 2;
  const auto sys = LinearSystem::random(nx, nu, 7);
  ilqg::StageCost stage;
  stage.Cxx.assign(T + 1, Mat::Zero(nx, nx));
  stage.cx.assign(T + 1, Vec::Zero(nx));
  stage.Cuu.assign(T, 1e-9 * Mat::Identity(nu, nu));  // keep Q_uu invertible
  stage.cu.assign(T, Vec::Zero(nu));
  stage.c0.assign(T + 1, 0.0);
  const auto result = ilqg::backward_pass(sys.dynamics(T), stage, 0.0, nullptr,
                                          Vec::Zero(nx));
  for (int t = 0; t < T; ++t) {
    CHECK(result.policy.K[t].cwiseAbs().maxCoeff() < 1e-9);
    CHECK(result.policy.k[t].cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("huge KL penalty pins the policy to the previous one") {
  const int T = 20, nx = 4, nu = 2;
  const auto sys = LinearSystem::random(nx, nu, 13);
  const Mat Q = Mat::Identity(nx, nx);
  const Mat R = 0.1 * Mat::Identity(nu, nu);

  auto rng = oracles::test_rng(5);
  ilqg::TvlgPolicy prev;
  for (int t = 0; t < T; ++t) {
    Mat K(nu, nx);
    for (int i = 0; i < nu; ++i)
      for (int j = 0; j < nx; ++j) K(i, j) = oracles::runif(rng, -0.3, 0.3);
    Vec k(nu);
    for (int i = 0; i < nu; ++i) k[i] = oracles::runif(rng, -0.5, 0.5);
    prev.K.push_back(K);
    prev.k.push_back(k);
    prev.Sigma.push_back(0.01 * Mat::Identity(nu, nu));
  }

  const auto result = ilqg::backward_pass(
      sys.dynamics(T), quadratic_cost(Q, R, Q, T), 1e6, &prev, Vec::Zero(nx));
  double max_dev = 0.0;
  for (int t = 0; t < T; ++t) {
    max_dev = std::max(max_dev,
                       (result.policy.K[t] - prev.K[t]).cwiseAbs().maxCoeff());
    max_dev = std::max(max_dev,
                       (result.policy.k[t] - prev.k[t]).cwiseAbs().maxCoeff());
  }
  CHECK(max_dev < 1e-3);
}

TEST_CASE("pd warm start: zero error gives zero torque, 0.1 rad gives 5 Nm") {
  const auto model = default_arm();
  plan::ReferencePath ref;
  ref.T_traj = 4;
  ref.T_final = 2;
  Vec q(3);
  q << 0.2, 0.3, -0.1;
  for (int t = 0; t < 6; ++t) {
    ref.joint_points.push_back(q);
    ref.task_points.push_back(Vec3::Zero());
  }
  const Vec expl = Vec::Constant(3, 0.1);
  const auto pi = ilqg::pd_warm_start(ref, model, 50.0, 9.0, 0.05, expl);

  Vec state(6);
  state << q, Vec::Zero(3);
  CHECK(pi.mean(state, 2).cwiseAbs().maxCoeff() < 1e-12);

  // Unit inertia scaling on joint 0 (G normalizes to 1 there).
  Vec state_err = state;
  state_err[0] += 0.1;
  const Vec u = pi.mean(state_err, 2);
  CHECK(std::abs(u[0]) == doctest::Approx(5.0).epsilon(1e-9));
  CHECK(u[0] < 0.0);  // restoring torque
}

TEST_CASE("pd warm start tracks a free-space reference within 5 mm") {
  // Regression bound shared with the sim module; recorded from a tuned run.
  auto bundle_model = default_arm();
  sim::SceneSpec scene;
  scene.task_name = "free";
  scene.tolerance = 0.01;
  geom::Polygon tiny;
  tiny.vertices = {Vec2(0.01, -0.005), Vec2(0.02, -0.005), Vec2(0.02, 0.005),
                   Vec2(0.01, 0.005)};
  scene.grasped_polygon = tiny;
  scene.goal_pose.position = Vec2(0.6, 0.4);

  Vec q0(3), q1(3);
  q0 << 0.1, 0.4, 0.2;
  q1 << 0.6, -0.3, 0.5;
  plan::PlanPath path;
  path.waypoints = {q0, q1};
  path.parameterization = {0.0, 1.0};
  const Vec3 goal =
      kin::forward_kinematics(bundle_model, {q1, Vec::Zero(3)}).pose3();
  const auto ref = plan::discretize_reference(bundle_model, path, 80, 20, goal);
  const auto pi = ilqg::pd_warm_start(ref, bundle_model, 50.0, 9.0, 0.05,
                                      Vec::Zero(3));

  sim::ContactParams params;
  sim::SimParams sp;
  const auto controller = [&](const JointState& obs, const TaskPose&, int t,
                              std::mt19937_64&) {
    return pi.mean(obs.concat(), t);
  };
  const auto roll =
      sim::rollout(bundle_model, scene, params, controller,
                   {q0, Vec::Zero(3)}, 100, sp, ObservationNoise::defaults(), 3);
  const double err =
      (roll.task_poses.back().position - Vec2(goal.head<2>())).norm();
  CHECK(err < 0.005);
}

TEST_CASE("fit_dynamics recovers a known linear system") {
  const int T = 6, nx = 4, nu = 2;
  const auto sys = LinearSystem::random(nx, nu, 77);
  auto rng = oracles::test_rng(9);

  std::vector<ilqg::TrajSample> samples;
  for (int i = 0; i < 16; ++i) {
    ilqg::TrajSample s;
    s.states.resize(T + 1, nx);
    s.actions.resize(T, nu);
    Vec x(nx);
    for (int j = 0; j < nx; ++j) x[j] = oracles::runif(rng, -1, 1);
    for (int t = 0; t < T; ++t) {
      Vec u(nu);
      for (int j = 0; j < nu; ++j) u[j] = oracles::runif(rng, -1, 1);
      s.states.row(t) = x.transpose();
      s.actions.row(t) = u.transpose();
      x = sys.A * x + sys.B * u;
    }
    s.states.row(T) = x.transpose();
    samples.push_back(std::move(s));
  }
  const auto dyn = ilqg::fit_dynamics(samples, nullptr, 0.0, 1e-10);
  for (int t = 0; t < T; ++t) {
    CHECK((dyn.A[t] - sys.A).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((dyn.B[t] - sys.B).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(dyn.c[t].cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("duplicated rollouts are rejected as singular") {
  const int T = 3, nx = 2, nu = 1;
  ilqg::TrajSample s;
  s.states = Mat::Ones(T + 1, nx);
  s.actions = Mat::Ones(T, nu);
  std::vector<ilqg::TrajSample> samples(6, s);
  CHECK_THROWS_AS(ilqg::fit_dynamics(samples, nullptr, 1.0), SingularRegression);
}

TEST_CASE("held-out one-step error within 2x of the true system noise") {
  const int T = 8, nx = 3, nu = 2;
  const auto sys = LinearSystem::random(nx, nu, 101);
  auto rng = oracles::test_rng(55);
  const double noise_std = 0.01;

  auto make_sample = [&]() {
    ilqg::TrajSample s;
    s.states.resize(T + 1, nx);
    s.actions.resize(T, nu);
    Vec x(nx);
    for (int j = 0; j < nx; ++j) x[j] = oracles::runif(rng, -1, 1);
    for (int t = 0; t < T; ++t) {
      Vec u(nu);
      for (int j = 0; j < nu; ++j) u[j] = oracles::runif(rng, -1, 1);
      s.states.row(t) = x.transpose();
      s.actions.row(t) = u.transpose();
      x = sys.A * x + sys.B * u;
      for (int j = 0; j < nx; ++j)
        x[j] += std::normal_distribution<double>(0, noise_std)(rng);
    }
    s.states.row(T) = x.transpose();
    return s;
  };

  std::vector<ilqg::TrajSample> train;
  for (int i = 0; i < 20; ++i) train.push_back(make_sample());
  const auto held_out = make_sample();
  const auto dyn = ilqg::fit_dynamics(train, nullptr, 0.0, 1e-8);

  double fitted_sse = 0.0, true_sse = 0.0;
  for (int t = 0; t < T; ++t) {
    const Vec x = held_out.states.row(t).transpose();
    const Vec u = held_out.actions.row(t).transpose();
    const Vec y = held_out.states.row(t + 1).transpose();
    fitted_sse += (dyn.A[t] * x + dyn.B[t] * u + dyn.c[t] - y).squaredNorm();
    true_sse += (sys.A * x + sys.B * u - y).squaredNorm();
  }
  CHECK(fitted_sse <= 4.0 * true_sse);  // 2x error => 4x squared error
}

TEST_CASE("ilqg_solve reaches the Riccati optimum on a linear system") {
  const int T = 30, nx = 4, nu = 2;
  const auto sys = LinearSystem::random(nx, nu, 200);
  const Mat Q = Mat::Identity(nx, nx);
  const Mat R = 0.1 * Mat::Identity(nu, nu);
  Vec x0(nx);
  x0 << 1.0, -0.5, 0.8, -0.2;

  auto simulate = [&](const ilqg::TvlgPolicy& pi, bool exploration,
                      uint64_t seed) {
    auto rng = make_rng(seed);
    ilqg::EnvSample out;
    out.traj.states.resize(T + 1, nx);
    out.traj.actions.resize(T, nu);
    Vec x = x0;
    double cost = 0.0;
    for (int t = 0; t < T; ++t) {
      out.traj.states.row(t) = x.transpose();
      Vec u = exploration ? pi.sample(x, t, rng) : pi.mean(x, t);
      out.traj.actions.row(t) = u.transpose();
      cost += x.dot(Q * x) + u.dot(R * u);
      x = sys.A * x + sys.B * u;
    }
    out.traj.states.row(T) = x.transpose();
    cost += x.dot(Q * x);
    out.cost_opt = out.cost_true = cost;
    return out;
  };
  auto quad = [&](const ilqg::TrajSample&) {
    return quadratic_cost(Q, R, Q, T);
  };
  auto cost_eval = [&](const ilqg::TrajSample& traj) {
    double total = 0.0;
    for (int t = 0; t < T; ++t) {
      const Vec x = traj.states.row(t).transpose();
      const Vec u = traj.actions.row(t).transpose();
      total += x.dot(Q * x) + u.dot(R * u);
    }
    const Vec xT = traj.states.row(T).transpose();
    return total + xT.dot(Q * xT);
  };

  // Optimal cost from the Riccati oracle.
  const auto K_ref = oracles::riccati_gains(sys.A, sys.B, Q, R, Q, T);
  double optimal = 0.0;
  {
    Vec x = x0;
    for (int t = 0; t < T; ++t) {
      const Vec u = -K_ref[t] * x;
      optimal += x.dot(Q * x) + u.dot(R * u);
      x = sys.A * x + sys.B * u;
    }
    optimal += x.dot(Q * x);
  }

  ilqg::IlqgOptions opts;
  opts.n_rollouts_per_iter = 12;
  opts.max_iters = 2;
  opts.kl_penalty_init = 0.0;
  const auto init = ilqg::random_exploration_policy(T, nx, nu,
                                                    Vec::Constant(nu, 0.5));
  const auto result = ilqg::ilqg_solve(simulate, quad, cost_eval, init, opts, 31);
  CHECK(result.final_cost <= optimal * 1.01);
}

TEST_CASE("tvlg sampling is deterministic per rng stream") {
  const int T = 3, nx = 2, nu = 2;
  auto pi = ilqg::random_exploration_policy(T, nx, nu, Vec::Constant(nu, 1.0));
  auto r1 = make_rng(5), r2 = make_rng(5);
  const Vec s = Vec::Zero(nx);
  CHECK(pi.sample(s, 0, r1) == pi.sample(s, 0, r2));
}

}  // TEST_SUITE
