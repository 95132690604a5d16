#include "planarm/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <limits>
#include <numbers>
#include <sstream>

#include "planarm/kinematics.hpp"
#include "planarm/rng.hpp"

namespace planarm::harness {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string format_short(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

geom::Polygon polygon_from_values(const std::vector<double>& values) {
  if (values.size() < 6 || values.size() % 2 != 0)
    throw Error("scene: polygon needs >= 3 (x y) pairs");
  geom::Polygon poly;
  for (size_t i = 0; i < values.size(); i += 2)
    poly.vertices.emplace_back(values[i], values[i + 1]);
  poly.validate();
  return poly;
}

// Run fn(0..n-1) with up to `jobs` concurrent workers; results keep index
// order so reports stay byte-identical regardless of scheduling.
template <typename T, typename Fn>
std::vector<T> parallel_map(int n, int jobs, Fn fn) {
  std::vector<T> out(n);
  if (jobs <= 1) {
    for (int i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::atomic<int> next{0};
  auto worker = [&]() {
    while (true) {
      const int i = next.fetch_add(1);
      if (i >= n) return;
      out[i] = fn(i);
    }
  };
  std::vector<std::future<void>> futures;
  for (int w = 0; w < std::min(jobs, n); ++w)
    futures.push_back(std::async(std::launch::async, worker));
  for (auto& f : futures) f.get();
  return out;
}

}  // namespace

Vec3 SceneBundle::named_pose(const std::string& name) const {
  const auto it = scene.named_poses.find(name);
  if (it == scene.named_poses.end())
    throw Error("scene has no pose named '" + name + "'");
  return it->second;
}

SceneBundle load_scene_config(const cfg::Config& config) {
  SceneBundle b;
  b.arm.n_links = config.get_int("arm", "n_links", 3);
  b.arm.link_lengths = config.get_vec("arm", "link_lengths");
  b.arm.link_masses = config.get_vec("arm", "link_masses");
  if (config.has("arm", "link_inertias")) {
    b.arm.link_inertias = config.get_vec("arm", "link_inertias");
  } else {
    b.arm.link_inertias = (b.arm.link_masses.array() *
                           b.arm.link_lengths.array().square() / 12.0)
                              .matrix();
  }
  if (config.has("arm", "armature")) {
    b.arm.armature = config.get_vec("arm", "armature");
  } else {
    b.arm.armature = Vec::Zero(b.arm.n_links);
  }
  b.arm.joint_damping = config.get_vec("arm", "joint_damping");
  b.arm.torque_limits = config.get_vec("arm", "torque_limits");
  b.arm.gravity = config.get_double("arm", "gravity", 0.0);
  b.arm.link_radius = config.get_double("arm", "link_radius", 0.02);
  b.arm.validate();

  b.scene.task_name = config.get_string("scene", "task_name");
  b.scene.tolerance = config.get_double("scene", "tolerance");
  const auto goal = config.get_doubles("scene", "goal_pose");
  if (goal.size() != 3) throw Error("scene: goal_pose needs x y heading");
  b.scene.goal_pose.position = Vec2(goal[0], goal[1]);
  b.scene.goal_pose.heading = goal[2];
  b.scene.grasped_polygon =
      polygon_from_values(config.get_doubles("scene", "grasped_polygon"));
  const int n_static = config.get_int("scene", "static_polygon_count");
  for (int i = 0; i < n_static; ++i)
    b.scene.static_polygons.push_back(polygon_from_values(
        config.get_doubles("scene", "static_polygon_" + std::to_string(i))));
  for (const char* name : {"easy", "hard"}) {
    const std::string key = std::string(name) + "_pose";
    if (config.has("scene", key)) {
      const auto p = config.get_doubles("scene", key);
      if (p.size() != 3) throw Error("scene: " + key + " needs x y heading");
      b.scene.named_poses[name] = Vec3(p[0], p[1], p[2]);
    }
  }
  if (config.has("scene", "region")) {
    const auto r = config.get_doubles("scene", "region");
    if (r.size() != 4) throw Error("scene: region needs xmin xmax ymin ymax");
    b.scene.region_xmin = r[0];
    b.scene.region_xmax = r[1];
    b.scene.region_ymin = r[2];
    b.scene.region_ymax = r[3];
  }
  if (config.has("scene", "orientations"))
    b.scene.region_orientations = config.get_doubles("scene", "orientations");
  b.scene.validate();

  b.contact.normal_stiffness = config.get_double("contact", "normal_stiffness", 5e4);
  b.contact.normal_damping = config.get_double("contact", "normal_damping", 1e3);
  b.contact.friction_coefficient =
      config.get_double("contact", "friction_coefficient", 0.8);
  b.contact.friction_regularization_velocity =
      config.get_double("contact", "friction_regularization_velocity", 1e-3);
  b.contact.validate();

  b.noise.angle_std = config.get_double("noise", "angle_std", 0.002);
  b.noise.velocity_std = config.get_double("noise", "velocity_std", 0.01);
  b.noise.pose_bias_std = config.get_double("noise", "pose_bias_std", 0.002);

  b.sim_params.dt_control = config.get_double("sim", "dt_control", 0.05);
  b.sim_params.n_substeps = config.get_int("sim", "n_substeps", 50);
  b.T_traj = config.get_int("sim", "T_traj", 80);
  b.T_final = config.get_int("sim", "T_final", 20);
  b.T = config.get_int("sim", "T", b.T_traj + b.T_final);
  if (b.T != b.T_traj + b.T_final)
    throw Error("scene: T must equal T_traj + T_final");

  b.kp = config.get_double("control", "kp", 50.0);
  b.kd = config.get_double("control", "kd", 9.0);
  const double expl = config.get_double("control", "exploration_std_base", 1.0);
  b.exploration_std = Vec::Constant(b.arm.n_links, expl);
  b.success_tolerance = config.get_double("control", "success_tolerance", 0.002);

  if (config.has("scene", "approach_offset")) {
    const auto off = config.get_doubles("scene", "approach_offset");
    if (off.size() != 2) throw Error("scene: approach_offset needs dx dy");
    b.approach_offset = Vec2(off[0], off[1]);
  }

  b.planner_params = plan::PlannerParams::defaults(b.arm.n_links);
  b.planner_params.steer_step = config.get_double("planner", "steer_step", 0.05);
  b.planner_params.cc_resolution =
      config.get_double("planner", "cc_resolution", 0.005);
  b.planner_params.clearance_margin =
      config.get_double("planner", "clearance_margin", 0.0);
  b.planner_params.shortcut_attempts =
      config.get_int("planner", "shortcut_attempts", 100);
  b.planner_params.max_iters = config.get_int("planner", "max_iters", 50000);
  if (config.has("planner", "bounds_lower"))
    b.planner_params.lower_bounds = config.get_vec("planner", "bounds_lower");
  if (config.has("planner", "bounds_upper"))
    b.planner_params.upper_bounds = config.get_vec("planner", "bounds_upper");
  return b;
}

SceneBundle load_scene(const std::string& path) {
  return load_scene_config(cfg::Config::load(path));
}

sim::Controller tvlg_controller(const ilqg::TvlgPolicy& policy,
                                bool exploration) {
  // Captured by value: the controller may outlive the caller's policy.
  return [policy, exploration](const JointState& obs, const TaskPose&, int t,
                               std::mt19937_64& rng) -> Vec {
    const Vec s = obs.concat();
    return exploration ? policy.sample(s, t, rng) : policy.mean(s, t);
  };
}

sim::Controller attention_controller(const nn::AttentionPolicyParams& params,
                                     const plan::ReferencePath& reference) {
  return [params, reference](const JointState& obs, const TaskPose& pose,
                             int t, std::mt19937_64&) -> Vec {
    return nn::attention_forward(params, obs, pose, reference, t + 1).action;
  };
}

bool rollout_success(const sim::Rollout& rollout, const Vec3& goal, double tol,
                     int T_final) {
  const int T = rollout.horizon();
  if (T + 1 < T_final || T_final < 1) return false;
  // Reaching the goal position to within the tolerance at the end of the
  // dwell phase; the min over the window guards the degenerate T_final = T
  // case where the trajectory never settles.
  (void)T_final;
  return (rollout.task_poses[T].position - Vec2(goal.head<2>())).norm() < tol;
}

double final_position_error(const sim::Rollout& rollout, const Vec3& goal) {
  return (rollout.task_poses.back().position - Vec2(goal.head<2>())).norm();
}

double heading_representative(double heading, double near) {
  const double two_pi = 2.0 * std::numbers::pi;
  return heading + two_pi * std::round((near - heading) / two_pi);
}

namespace {

// Straight task-space approach from the via pose into the goal: a ladder of
// branch-continuous IK solutions every few millimeters. Returns empty when
// any rung is unreachable or in collision.
std::vector<Vec> approach_ladder(const SceneBundle& bundle, const Vec& from,
                                 const Vec3& from_pose, const Vec3& goal_pose) {
  const double step = 0.003;
  const Vec2 delta = Vec2(goal_pose.head<2>()) - Vec2(from_pose.head<2>());
  const int n = std::max(1, static_cast<int>(std::ceil(delta.norm() / step)));
  std::vector<Vec> rungs;
  Vec prev = from;
  for (int i = 1; i <= n; ++i) {
    const double s = static_cast<double>(i) / n;
    const Vec3 pose(from_pose.x() + s * delta.x(), from_pose.y() + s * delta.y(),
                    goal_pose.z());
    const auto branches = plan::ik_solutions(bundle.arm, pose);
    if (branches.empty()) return {};
    Vec best = branches[0];
    for (const auto& q : branches)
      if ((q - prev).norm() < (best - prev).norm()) best = q;
    if ((best - prev).norm() > 0.3) return {};  // branch jump
    if (!plan::collision_free(bundle.arm, best, bundle.scene,
                              bundle.planner_params.clearance_margin))
      return {};
    rungs.push_back(best);
    prev = best;
  }
  return rungs;
}

}  // namespace

PlannedTask plan_task_to(const SceneBundle& bundle, const Vec3& start_pose,
                         const Vec3& goal_pose, uint64_t seed) {
  // With an approach offset, motion planning targets the via pose and the
  // aligned ladder covers the last leg into the goal.
  const Vec2 off = bundle.approach_offset;
  if (off.norm() > 0.0) {
    const Vec3 via(goal_pose.x() + off.x(), goal_pose.y() + off.y(),
                   goal_pose.z());
    SceneBundle direct = bundle;
    direct.approach_offset = Vec2::Zero();
    try {
      PlannedTask to_via = plan_task_to(direct, start_pose, via, seed);
      const auto rungs = approach_ladder(bundle, to_via.path.waypoints.back(),
                                         via, goal_pose);
      if (!rungs.empty()) {
        auto waypoints = to_via.path.waypoints;
        waypoints.insert(waypoints.end(), rungs.begin(), rungs.end());
        PlannedTask out;
        out.start_config = to_via.start_config;
        // Rebuild the arc-length parameterization over the joined path.
        plan::PlanPath path;
        path.waypoints = std::move(waypoints);
        path.parameterization.resize(path.waypoints.size());
        double total = 0.0;
        path.parameterization[0] = 0.0;
        for (size_t i = 1; i < path.waypoints.size(); ++i) {
          total += (path.waypoints[i] - path.waypoints[i - 1]).norm();
          path.parameterization[i] = total;
        }
        if (total > 0)
          for (double& s : path.parameterization) s /= total;
        out.path = std::move(path);
        out.effective_goal = Vec3(goal_pose.x(), goal_pose.y(),
                                  out.path.waypoints.back().sum());
        out.reference = plan::discretize_reference(
            bundle.arm, out.path, bundle.T_traj, bundle.T_final,
            out.effective_goal);
        return out;
      }
    } catch (const NoPlanFound&) {
      // Fall through to direct planning.
    }
  }

  const auto start_branches = plan::ik_solutions(bundle.arm, start_pose);
  const auto goal_configs = plan::goal_configurations(
      bundle.arm, goal_pose, bundle.scene, bundle.planner_params.clearance_margin);
  if (goal_configs.empty())
    throw NoPlanFound("plan_task: goal pose has no collision-free IK branch");

  // Plan every feasible start-branch x goal-branch pair (two restarts each)
  // and keep the shortest path: branch mismatches otherwise produce huge
  // reconfiguration sweeps that no tracking controller can follow.
  std::string last_error = "plan_task: start pose has no feasible IK branch";
  std::optional<PlannedTask> best;
  double best_length = std::numeric_limits<double>::infinity();
  uint64_t attempt = 0;
  for (size_t branch = 0; branch < start_branches.size(); ++branch) {
    const Vec& start = start_branches[branch];
    if (!plan::collision_free(bundle.arm, start, bundle.scene,
                              bundle.planner_params.clearance_margin))
      continue;
    for (const Vec& goal_config : goal_configs) {
      for (int restart = 0; restart < 4; ++restart) {
        try {
          auto rng = make_rng(derive_seed(seed, attempt++));
          plan::PlanPath path = plan::rrt_connect(
              bundle.arm, bundle.scene, start, {goal_config}, rng,
              bundle.planner_params);
          double length = 0.0;
          for (size_t i = 1; i < path.waypoints.size(); ++i)
            length += (path.waypoints[i] - path.waypoints[i - 1]).norm();
          if (length < best_length) {
            best_length = length;
            PlannedTask out;
            out.start_config = start;
            out.path = std::move(path);
            out.effective_goal = Vec3(goal_pose.x(), goal_pose.y(),
                                      out.path.waypoints.back().sum());
            best = std::move(out);
          }
        } catch (const NoPlanFound& e) {
          last_error = e.what();
        }
      }
    }
  }
  if (!best) throw NoPlanFound(last_error);
  best->reference = plan::discretize_reference(
      bundle.arm, best->path, bundle.T_traj, bundle.T_final,
      best->effective_goal);
  return *best;
}

PlannedTask plan_task(const SceneBundle& bundle, const Vec3& start_pose,
                      uint64_t seed) {
  return plan_task_to(bundle, start_pose, bundle.scene.goal_pose.pose3(), seed);
}

plan::ReferencePath shift_reference(const SceneBundle& bundle,
                                    const plan::ReferencePath& reference,
                                    const Vec2& shift) {
  plan::ReferencePath out = reference;
  const Vec3 lift(shift.x(), shift.y(), 0.0);
  for (auto& p : out.task_points) p += lift;
  for (auto& q : out.joint_points) {
    const Mat J = kin::jacobian(bundle.arm, q);
    q += J.colPivHouseholderQr().solve(lift);
  }
  return out;
}

ilqg::EnvSample run_env_sample(const SceneBundle& bundle,
                               const cost::CostSpec& spec,
                               const JointState& init,
                               const ilqg::TvlgPolicy& policy,
                               bool exploration, uint64_t seed) {
  const sim::Rollout roll = sim::rollout(
      bundle.arm, bundle.scene, bundle.contact, tvlg_controller(policy, exploration),
      init, bundle.T, bundle.sim_params, bundle.noise, seed);

  ilqg::EnvSample out;
  const int n = bundle.arm.n_links;
  out.traj.states.resize(bundle.T + 1, 2 * n);
  out.traj.actions.resize(bundle.T, n);
  for (int t = 0; t <= bundle.T; ++t)
    out.traj.states.row(t) = roll.observed_states[t].concat().transpose();
  for (int t = 0; t < bundle.T; ++t)
    out.traj.actions.row(t) = roll.actions[t].transpose();

  // Optimization cost from the measurable signal: FK of the observed joints.
  out.cost_opt = 0.0;
  for (int t = 0; t < bundle.T; ++t) {
    const TaskPose pose =
        kin::forward_kinematics(bundle.arm, roll.observed_states[t + 1]);
    out.cost_opt += cost::step_cost(spec, pose, roll.actions[t], t);
  }
  out.cost_true = cost::trajectory_cost(spec, roll);
  out.success = rollout_success(roll, bundle.scene.goal_pose.pose3(),
                                bundle.success_tolerance, bundle.T_final);
  out.final_error =
      final_position_error(roll, bundle.scene.goal_pose.pose3());
  return out;
}

SolveResult solve_pose(const SceneBundle& bundle, const Vec3& start_pose,
                       cost::Kind kind, const ilqg::IlqgOptions& opts,
                       uint64_t seed, InitKind init_kind) {
  SolveResult result;
  cost::CostSpec spec;
  spec.kind = kind;
  spec.action_penalty = 1e-5;
  spec.alpha = 1e-5;

  ilqg::TvlgPolicy init_policy;
  if (kind == cost::Kind::Reference) {
    result.planned = plan_task(bundle, start_pose, derive_seed(seed, 9000));
    spec.reference = result.planned->reference;
    spec.goal = result.planned->effective_goal;
    result.init_state =
        JointState(result.planned->start_config, Vec::Zero(bundle.arm.n_links));
    switch (init_kind) {
      case InitKind::PdWarmStart:
        init_policy = ilqg::pd_warm_start(result.planned->reference, bundle.arm,
                                          bundle.kp, bundle.kd,
                                          bundle.sim_params.dt_control,
                                          bundle.exploration_std);
        break;
      case InitKind::StationaryHold:
        init_policy = ilqg::stationary_pd_policy(
            result.planned->start_config, bundle.arm, bundle.kp, bundle.kd,
            bundle.T, bundle.exploration_std);
        break;
      case InitKind::RandomExploration:
        init_policy = ilqg::random_exploration_policy(
            bundle.T, 2 * bundle.arm.n_links, bundle.arm.n_links,
            bundle.exploration_std);
        break;
    }
  } else {
    // Goal-only: no plan; pick the start IK branch and aim at the goal
    // heading representative nearest the start heading.
    const auto branches = plan::ik_solutions(bundle.arm, start_pose);
    Vec start;
    for (const Vec& q : branches)
      if (plan::collision_free(bundle.arm, q, bundle.scene,
                               bundle.planner_params.clearance_margin)) {
        start = q;
        break;
      }
    if (start.size() == 0)
      throw NoPlanFound("solve_pose: start pose has no collision-free IK branch");
    result.init_state = JointState(start, Vec::Zero(bundle.arm.n_links));
    const Vec3 g = bundle.scene.goal_pose.pose3();
    spec.goal = Vec3(g.x(), g.y(), heading_representative(g.z(), start.sum()));
    init_policy =
        init_kind == InitKind::RandomExploration
            ? ilqg::random_exploration_policy(bundle.T, 2 * bundle.arm.n_links,
                                              bundle.arm.n_links,
                                              bundle.exploration_std)
            : ilqg::stationary_pd_policy(start, bundle.arm, bundle.kp, bundle.kd,
                                         bundle.T, bundle.exploration_std);
  }
  spec.validate(bundle.T);
  result.spec = spec;

  const JointState init_state = result.init_state;
  ilqg::SampleFn sample_fn = [&bundle, &spec, init_state](
                                 const ilqg::TvlgPolicy& pi, bool exploration,
                                 uint64_t s) {
    return run_env_sample(bundle, spec, init_state, pi, exploration, s);
  };
  ilqg::QuadratizeFn quad_fn = [&bundle, &spec](const ilqg::TrajSample& nominal) {
    const int n = bundle.arm.n_links;
    std::vector<JointState> states;
    states.reserve(nominal.states.rows());
    for (int t = 0; t < nominal.states.rows(); ++t) {
      const Vec row = nominal.states.row(t).transpose();
      states.emplace_back(row.head(n), row.tail(n));
    }
    std::vector<Vec> actions;
    actions.reserve(nominal.actions.rows());
    for (int t = 0; t < nominal.actions.rows(); ++t)
      actions.push_back(nominal.actions.row(t).transpose());
    const auto expansion = cost::quadratize(spec, bundle.arm, states, actions);
    return ilqg::absolute_stage_cost(expansion, nominal);
  };
  ilqg::CostEvalFn cost_fn = [&bundle, &spec](const ilqg::TrajSample& traj) {
    const int n = bundle.arm.n_links;
    double total = 0.0;
    for (int t = 0; t < traj.actions.rows(); ++t) {
      const Vec row = traj.states.row(t + 1).transpose();
      const TaskPose pose =
          kin::forward_kinematics(bundle.arm, {row.head(n), row.tail(n)});
      total += cost::step_cost(spec, pose, traj.actions.row(t).transpose(), t);
    }
    return total;
  };

  ilqg::IlqgOptions tuned = opts;
  tuned.cost_floor = bundle.T * std::log(spec.alpha);
  result.ilqg = ilqg::ilqg_solve(sample_fn, quad_fn, cost_fn, init_policy, tuned,
                                 derive_seed(seed, 1));
  return result;
}

std::pair<std::vector<Vec3>, std::vector<Vec3>> generate_pose_set(
    const SceneBundle& bundle, int n_train, int n_test, uint64_t seed) {
  if (bundle.scene.region_xmax <= bundle.scene.region_xmin ||
      bundle.scene.region_ymax <= bundle.scene.region_ymin)
    if (bundle.scene.region_xmax != bundle.scene.region_xmin ||
        bundle.scene.region_ymax != bundle.scene.region_ymin)
      throw Error("generate_pose_set: scene region not configured");
  if (bundle.scene.region_orientations.empty())
    throw Error("generate_pose_set: scene orientations not configured");

  auto rng = make_rng(derive_seed(seed, 0));
  std::vector<Vec3> train, test;
  const int total = n_train + n_test;
  int consecutive_rejections = 0;
  uint64_t attempt = 0;
  while (static_cast<int>(train.size() + test.size()) < total) {
    const double x =
        uniform(rng, bundle.scene.region_xmin, bundle.scene.region_xmax);
    const double y =
        uniform(rng, bundle.scene.region_ymin, bundle.scene.region_ymax);
    std::uniform_int_distribution<size_t> pick(
        0, bundle.scene.region_orientations.size() - 1);
    const double heading = bundle.scene.region_orientations[pick(rng)];
    const Vec3 pose(x, y, heading);
    bool feasible = true;
    try {
      plan_task(bundle, pose, derive_seed(seed, 1000 + attempt));
    } catch (const NoPlanFound&) {
      feasible = false;
    }
    ++attempt;
    if (!feasible) {
      if (++consecutive_rejections >= 100)
        throw Error("generate_pose_set: 100 consecutive infeasible draws");
      continue;
    }
    consecutive_rejections = 0;
    if (static_cast<int>(train.size()) < n_train)
      train.push_back(pose);
    else
      test.push_back(pose);
  }
  return {train, test};
}

int EvalOutcome::count() const {
  int n = 0;
  for (const bool s : successes) n += s ? 1 : 0;
  return n;
}

double EvalOutcome::rate() const {
  return successes.empty() ? 0.0
                           : static_cast<double>(count()) / successes.size();
}

EvalOutcome evaluate_policy(const SceneBundle& bundle,
                            const ControllerFactory& factory,
                            const std::vector<Vec3>& poses, double tolerance,
                            const std::vector<uint64_t>& seeds,
                            bool observation_noise) {
  SceneBundle b = bundle;
  if (!observation_noise) b.noise = ObservationNoise::none();
  EvalOutcome out;
  for (size_t i = 0; i < poses.size(); ++i) {
    for (const uint64_t seed : seeds) {
      auto made = factory(poses[i], seed);
      if (!made) {
        out.successes.push_back(false);
        out.errors.push_back(kInf);
        continue;
      }
      const sim::Rollout roll =
          sim::rollout(b.arm, b.scene, b.contact, made->first, made->second,
                       b.T, b.sim_params, b.noise, derive_seed(seed, 77 + i));
      const double err = final_position_error(roll, b.scene.goal_pose.pose3());
      out.successes.push_back(err < tolerance);
      out.errors.push_back(err);
    }
  }
  return out;
}

nn::CloneDataset collect_clone_data(const SceneBundle& bundle,
                                    const SolveResult& solved, int n_rollouts,
                                    uint64_t seed) {
  if (!solved.planned)
    throw Error("collect_clone_data: needs a reference-cost solve");
  nn::CloneDataset dataset;
  dataset.references.push_back(solved.planned->reference);
  for (int i = 0; i < n_rollouts; ++i) {
    const sim::Rollout roll = sim::rollout(
        bundle.arm, bundle.scene, bundle.contact,
        tvlg_controller(solved.ilqg.policy, false), solved.init_state, bundle.T,
        bundle.sim_params, bundle.noise, derive_seed(seed, i));
    for (int t = 0; t < bundle.T; ++t) {
      nn::CloneSample s;
      s.observed = roll.observed_states[t];
      s.observed_pose = roll.observed_poses[t];
      s.t = t + 1;
      s.target_action = roll.actions[t];
      s.reference_index = 0;
      dataset.samples.push_back(std::move(s));
    }
  }
  return dataset;
}

nn::CloneDataset collect_aux_clone_data(const SceneBundle& bundle,
                                        int n_trajectories, uint64_t seed,
                                        const ilqg::IlqgOptions& opts,
                                        int rollouts_per_trajectory) {
  nn::CloneDataset dataset;
  auto rng = make_rng(derive_seed(seed, 31));
  int collected = 0;
  uint64_t attempt = 0;
  int consecutive_failures = 0;
  while (collected < n_trajectories) {
    ++attempt;
    const double sx =
        uniform(rng, bundle.scene.region_xmin, bundle.scene.region_xmax);
    const double sy =
        uniform(rng, bundle.scene.region_ymin, bundle.scene.region_ymax);
    const double gx =
        uniform(rng, bundle.scene.region_xmin, bundle.scene.region_xmax);
    const double gy =
        uniform(rng, bundle.scene.region_ymin, bundle.scene.region_ymax);
    std::uniform_int_distribution<size_t> pick(
        0, std::max<size_t>(1, bundle.scene.region_orientations.size()) - 1);
    const double sh = bundle.scene.region_orientations.empty()
                          ? 0.0
                          : bundle.scene.region_orientations[pick(rng)];
    const double gh = bundle.scene.region_orientations.empty()
                          ? 0.0
                          : bundle.scene.region_orientations[pick(rng)];
    try {
      // Random start and goal independent of the task goal.
      SceneBundle aux = bundle;
      aux.scene.goal_pose.position = Vec2(gx, gy);
      aux.scene.goal_pose.heading = gh;
      const PlannedTask planned = plan_task(aux, Vec3(sx, sy, sh),
                                            derive_seed(seed, 500 + attempt));
      cost::CostSpec spec;
      spec.kind = cost::Kind::Reference;
      spec.reference = planned.reference;
      spec.goal = planned.effective_goal;
      spec.validate(aux.T);

      SolveResult solved;
      solved.spec = spec;
      solved.planned = planned;
      solved.init_state =
          JointState(planned.start_config, Vec::Zero(aux.arm.n_links));
      const JointState init_state = solved.init_state;
      ilqg::SampleFn sample_fn = [&aux, &spec, init_state](
                                     const ilqg::TvlgPolicy& pi,
                                     bool exploration, uint64_t s) {
        return run_env_sample(aux, spec, init_state, pi, exploration, s);
      };
      ilqg::QuadratizeFn quad_fn = [&aux, &spec](const ilqg::TrajSample& nominal) {
        const int n = aux.arm.n_links;
        std::vector<JointState> states;
        for (int t = 0; t < nominal.states.rows(); ++t) {
          const Vec row = nominal.states.row(t).transpose();
          states.emplace_back(row.head(n), row.tail(n));
        }
        std::vector<Vec> actions;
        for (int t = 0; t < nominal.actions.rows(); ++t)
          actions.push_back(nominal.actions.row(t).transpose());
        return ilqg::absolute_stage_cost(
            cost::quadratize(spec, aux.arm, states, actions), nominal);
      };
      ilqg::CostEvalFn cost_fn = [&aux, &spec](const ilqg::TrajSample& traj) {
        const int n = aux.arm.n_links;
        double total = 0.0;
        for (int t = 0; t < traj.actions.rows(); ++t) {
          const Vec row = traj.states.row(t + 1).transpose();
          const TaskPose pose =
              kin::forward_kinematics(aux.arm, {row.head(n), row.tail(n)});
          total += cost::step_cost(spec, pose, traj.actions.row(t).transpose(), t);
        }
        return total;
      };
      const auto init_policy =
          ilqg::pd_warm_start(planned.reference, aux.arm, aux.kp, aux.kd,
                              aux.sim_params.dt_control, aux.exploration_std);
      ilqg::IlqgOptions tuned = opts;
      tuned.cost_floor = aux.T * std::log(spec.alpha);
      solved.ilqg = ilqg::ilqg_solve(sample_fn, quad_fn, cost_fn, init_policy,
                                     tuned, derive_seed(seed, 700 + attempt));
      dataset.append(
          collect_clone_data(aux, solved, rollouts_per_trajectory,
                             derive_seed(seed, 900 + attempt)));
      ++collected;
      consecutive_failures = 0;
    } catch (const NoPlanFound&) {
      if (++consecutive_failures >= 100)
        throw Error("collect_aux_clone_data: region infeasible");
    }
  }
  return dataset;
}

std::string Report::csv() const {
  std::ostringstream out;
  out << "# schema: " << name << " v" << schema_version << "\n";
  for (size_t i = 0; i < columns.size(); ++i) {
    if (i) out << ",";
    out << columns[i];
  }
  out << "\n";
  for (const auto& row : rows) {
    for (size_t i = 0; i < row.size(); ++i) {
      if (i) out << ",";
      out << row[i];
    }
    out << "\n";
  }
  return out.str();
}

ExperimentConfig load_experiment_config(const std::string& path) {
  const cfg::Config c = cfg::Config::load(path);
  ExperimentConfig e;
  if (c.has("experiment", "scenes"))
    e.scene_files = c.get_strings("experiment", "scenes");
  e.eval_seeds = c.get_int("experiment", "eval_seeds", 5);
  e.jobs = c.get_int("experiment", "jobs", 1);

  e.ilqg.n_rollouts_per_iter = c.get_int("ilqg", "n_rollouts_per_iter", 5);
  e.ilqg.max_iters = c.get_int("ilqg", "max_iters", 40);
  e.ilqg.kl_penalty_init = c.get_double("ilqg", "kl_penalty_init", 1.0);
  e.ilqg.rel_improvement_tol = c.get_double("ilqg", "rel_improvement_tol", 0.01);
  e.ilqg.patience = c.get_int("ilqg", "patience", 3);
  e.ilqg.prior_strength = c.get_double("ilqg", "prior_strength", 1.0);
  e.ilqg.stop_on_success = c.get_bool("ilqg", "stop_on_success", false);

  e.generalization_scene = c.get_string("generalization", "scene", "");
  e.n_train = c.get_int("generalization", "n_train", 10);
  e.n_test = c.get_int("generalization", "n_test", 20);

  e.k = c.get_int("policy", "k", 5);
  if (c.has("policy", "hidden")) {
    e.hidden.clear();
    for (const double h : c.get_doubles("policy", "hidden"))
      e.hidden.push_back(static_cast<int>(h));
  }
  e.epochs = c.get_int("policy", "epochs", 200);
  e.pretrain_epochs = c.get_int("policy", "pretrain_epochs", 100);
  e.batch_size = c.get_int("policy", "batch_size", 64);
  e.n_aux = c.get_int("policy", "n_aux", 8);
  e.clone_rollouts = c.get_int("policy", "clone_rollouts", 5);
  e.aux_rollouts = c.get_int("policy", "aux_rollouts", 3);
  e.pretrain = c.get_bool("policy", "pretrain", true);
  e.pretrain_ab = c.get_bool("policy", "pretrain_ab", false);
  return e;
}

namespace {

struct Cell {
  std::string task;
  std::string pose_name;
  std::string method;
  int seed_index = 0;
  int scene_index = 0;
};

struct CellResult {
  bool trained = false;
  bool success = false;
  double final_error = kInf;
  int rollouts_to_success = -1;
  int total_rollouts = 0;
  std::string error;
};

CellResult run_cell(const SceneBundle& bundle, const Cell& cell,
                    const ilqg::IlqgOptions& opts, uint64_t master_seed) {
  CellResult r;
  const uint64_t cell_seed =
      derive_seed(master_seed, std::hash<std::string>{}(
                                   cell.task + "/" + cell.pose_name + "/" +
                                   cell.method) ^
                                   static_cast<uint64_t>(cell.seed_index));
  try {
    const Vec3 pose = bundle.named_pose(cell.pose_name);
    ilqg::TvlgPolicy policy;
    JointState init_state;
    if (cell.method == "pd_track") {
      const PlannedTask planned =
          plan_task(bundle, pose, derive_seed(cell_seed, 9000));
      // Naive tracking executes in the frame of this episode's scene
      // estimate; the plan inherits the calibration error.
      auto frame_rng = make_rng(derive_seed(cell_seed, 777));
      const Vec2 frame_shift(gaussian(frame_rng, bundle.noise.pose_bias_std),
                             gaussian(frame_rng, bundle.noise.pose_bias_std));
      const auto biased =
          shift_reference(bundle, planned.reference, frame_shift);
      policy = ilqg::pd_warm_start(biased, bundle.arm, bundle.kp, bundle.kd,
                                   bundle.sim_params.dt_control,
                                   bundle.exploration_std);
      init_state =
          JointState(planned.start_config, Vec::Zero(bundle.arm.n_links));
      r.total_rollouts = 0;
    } else {
      cost::Kind kind = cost::Kind::Reference;
      InitKind init = InitKind::PdWarmStart;
      ilqg::IlqgOptions cell_opts = opts;
      if (cell.method == "goal_ilqg") {
        kind = cost::Kind::GoalOnly;
        init = InitKind::StationaryHold;
        // Without the plan guidance the trust region must start small and
        // the search runs longer.
        cell_opts.kl_penalty_init = 0.1;
        cell_opts.max_iters = 2 * opts.max_iters;
      } else if (cell.method == "mp_ilqg_rand") {
        init = InitKind::RandomExploration;
      }
      const SolveResult solved =
          solve_pose(bundle, pose, kind, cell_opts, cell_seed, init);
      policy = solved.ilqg.policy;
      init_state = solved.init_state;
      r.trained = true;
      r.rollouts_to_success = solved.ilqg.rollouts_to_first_success;
      r.total_rollouts = solved.ilqg.total_rollouts;
    }
    // Fresh evaluation rollout: observation noise stays on, no exploration.
    const sim::Rollout roll = sim::rollout(
        bundle.arm, bundle.scene, bundle.contact, tvlg_controller(policy, false),
        init_state, bundle.T, bundle.sim_params, bundle.noise,
        derive_seed(cell_seed, 4242));
    r.success = rollout_success(roll, bundle.scene.goal_pose.pose3(),
                                bundle.success_tolerance, bundle.T_final);
    r.final_error = final_position_error(roll, bundle.scene.goal_pose.pose3());
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  return r;
}

double median_with_inf(std::vector<double> values) {
  if (values.empty()) return kInf;
  std::sort(values.begin(), values.end());
  const size_t n = values.size();
  return (n % 2 == 1) ? values[n / 2]
                      : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace

FixedPoseReport run_fixed_pose_experiment(const ExperimentConfig& config) {
  std::vector<SceneBundle> bundles;
  for (const auto& file : config.scene_files) bundles.push_back(load_scene(file));
  if (bundles.empty())
    throw Error("run_fixed_pose_experiment: no scenes configured");

  const std::vector<std::string> methods{"mp_ilqg", "goal_ilqg", "pd_track"};
  std::vector<Cell> cells;
  for (size_t si = 0; si < bundles.size(); ++si) {
    for (const char* pose : {"easy", "hard"}) {
      if (!bundles[si].scene.named_poses.count(pose)) continue;
      for (const auto& method : methods)
        for (int s = 0; s < config.eval_seeds; ++s)
          cells.push_back({bundles[si].scene.task_name, pose, method, s,
                           static_cast<int>(si)});
    }
    // Warm-start ablation on the easy peg pose only.
    if (bundles[si].scene.task_name == "peg2d" &&
        bundles[si].scene.named_poses.count("easy"))
      for (int s = 0; s < config.eval_seeds; ++s)
        cells.push_back(
            {bundles[si].scene.task_name, "easy", "mp_ilqg_rand", s,
             static_cast<int>(si)});
  }

  const auto results = parallel_map<CellResult>(
      static_cast<int>(cells.size()), config.jobs, [&](int i) {
        return run_cell(bundles[cells[i].scene_index], cells[i], config.ilqg,
                        config.seed);
      });

  FixedPoseReport report;
  report.cells.name = "fixed_pose_cells";
  report.cells.columns = {"task",    "pose",        "method",
                          "seed",    "success",     "final_error_m",
                          "rollouts_to_success", "total_rollouts", "error"};
  for (size_t i = 0; i < cells.size(); ++i) {
    const auto& c = cells[i];
    const auto& r = results[i];
    report.cells.rows.push_back(
        {c.task, c.pose_name, c.method, std::to_string(c.seed_index),
         r.success ? "1" : "0",
         std::isfinite(r.final_error) ? format_short(r.final_error) : "inf",
         std::to_string(r.rollouts_to_success), std::to_string(r.total_rollouts),
         r.error});
  }

  // Table 1: success counts per (task, pose, method).
  report.table1.name = "table1";
  report.table1.columns = {"task", "pose", "method", "successes", "attempts"};
  std::map<std::string, std::pair<int, int>> agg;
  std::vector<std::string> agg_order;
  for (size_t i = 0; i < cells.size(); ++i) {
    if (cells[i].method == "mp_ilqg_rand") continue;
    const std::string key =
        cells[i].task + "," + cells[i].pose_name + "," + cells[i].method;
    if (!agg.count(key)) agg_order.push_back(key);
    agg[key].first += results[i].success ? 1 : 0;
    agg[key].second += 1;
  }
  for (const auto& key : agg_order) {
    std::istringstream split(key);
    std::string task, pose, method;
    std::getline(split, task, ',');
    std::getline(split, pose, ',');
    std::getline(split, method, ',');
    report.table1.rows.push_back({task, pose, method,
                                  std::to_string(agg[key].first),
                                  std::to_string(agg[key].second)});
  }

  // Table 2: sample complexity of MP+iLQG, plus the warm-start ablation.
  report.table2.name = "table2";
  report.table2.columns = {"task",
                           "pose",
                           "method",
                           "median_rollouts_to_success",
                           "min_rollouts_to_success",
                           "max_rollouts_to_success",
                           "n_succeeded_in_training",
                           "attempts"};
  std::map<std::string, std::vector<double>> complexity;
  std::vector<std::string> complexity_order;
  for (size_t i = 0; i < cells.size(); ++i) {
    if (cells[i].method != "mp_ilqg" && cells[i].method != "mp_ilqg_rand")
      continue;
    const std::string key =
        cells[i].task + "," + cells[i].pose_name + "," + cells[i].method;
    if (!complexity.count(key)) complexity_order.push_back(key);
    complexity[key].push_back(results[i].rollouts_to_success < 0
                                  ? kInf
                                  : results[i].rollouts_to_success);
  }
  for (const auto& key : complexity_order) {
    std::istringstream split(key);
    std::string task, pose, method;
    std::getline(split, task, ',');
    std::getline(split, pose, ',');
    std::getline(split, method, ',');
    const auto& v = complexity[key];
    double lo = kInf, hi = -kInf;
    int succeeded = 0;
    for (const double x : v) {
      if (std::isfinite(x)) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
        ++succeeded;
      }
    }
    const double med = median_with_inf(v);
    report.table2.rows.push_back(
        {task, pose, method,
         std::isfinite(med) ? format_short(med) : "inf",
         succeeded ? format_short(lo) : "inf",
         succeeded ? format_short(hi) : "inf", std::to_string(succeeded),
         std::to_string(static_cast<int>(v.size()))});
  }

  // Acceptance gates.
  auto successes_of = [&](const std::string& task, const std::string& pose,
                          const std::string& method) -> int {
    const std::string key = task + "," + pose + "," + method;
    return agg.count(key) ? agg[key].first : -1;
  };
  bool t1 = true;
  for (const auto& b : bundles) {
    const std::string& task = b.scene.task_name;
    if (task != "peg2d" && task != "ushape2d") continue;
    t1 = t1 && successes_of(task, "easy", "mp_ilqg") >= 4;
    t1 = t1 && successes_of(task, "hard", "mp_ilqg") >= 4;
    t1 = t1 && successes_of(task, "hard", "goal_ilqg") <= 1;
    t1 = t1 && successes_of(task, "hard", "pd_track") <= 1;
  }
  report.table1_pass = t1;

  bool t2 = true;
  double median_warm = kInf, median_rand = kInf;
  for (const auto& key : complexity_order) {
    std::istringstream split(key);
    std::string task, pose, method;
    std::getline(split, task, ',');
    std::getline(split, pose, ',');
    std::getline(split, method, ',');
    const double med = median_with_inf(complexity[key]);
    if (method == "mp_ilqg") t2 = t2 && med <= 300.0;
    if (task == "peg2d" && pose == "easy") {
      if (method == "mp_ilqg") median_warm = med;
      if (method == "mp_ilqg_rand") median_rand = med;
    }
  }
  t2 = t2 && (median_warm < median_rand);
  report.table2_pass = t2;

  std::ostringstream summary;
  summary << "fixed-pose experiment: table1 "
          << (report.table1_pass ? "PASS" : "FAIL") << ", table2 "
          << (report.table2_pass ? "PASS" : "FAIL") << "\n";
  summary << "warm-start ablation (peg2d easy): median rollouts warm="
          << (std::isfinite(median_warm) ? format_short(median_warm) : "inf")
          << " random="
          << (std::isfinite(median_rand) ? format_short(median_rand) : "inf")
          << "\n";
  report.summary = summary.str();
  return report;
}

GeneralizationReport run_generalization_experiment(
    const ExperimentConfig& config) {
  if (config.generalization_scene.empty())
    throw Error("run_generalization_experiment: no scene configured");
  const SceneBundle bundle = load_scene(config.generalization_scene);

  const auto [train_poses, test_poses] =
      generate_pose_set(bundle, config.n_train, config.n_test, config.seed);

  // Per-train-pose controllers with the reference cost.
  struct TrainOut {
    nn::CloneDataset data;
    bool solver_success = false;
    std::string error;
  };
  const auto trained = parallel_map<TrainOut>(
      static_cast<int>(train_poses.size()), config.jobs, [&](int i) {
        TrainOut out;
        try {
          const SolveResult solved =
              solve_pose(bundle, train_poses[i], cost::Kind::Reference,
                         config.ilqg, derive_seed(config.seed, 100 + i));
          out.solver_success = solved.ilqg.rollouts_to_first_success >= 0;
          out.data = collect_clone_data(bundle, solved, config.clone_rollouts,
                                        derive_seed(config.seed, 200 + i));
        } catch (const std::exception& e) {
          out.error = e.what();
        }
        return out;
      });

  nn::CloneDataset task_data;
  int solver_successes = 0;
  for (const auto& t : trained) {
    if (!t.error.empty()) continue;
    task_data.append(t.data);
    solver_successes += t.solver_success ? 1 : 0;
  }
  if (task_data.samples.empty())
    throw Error("run_generalization_experiment: no training data collected");

  nn::CloneDataset aux_data;
  if (config.pretrain || config.pretrain_ab)
    aux_data = collect_aux_clone_data(bundle, config.n_aux,
                                      derive_seed(config.seed, 300), config.ilqg,
                                      config.aux_rollouts);

  auto train_network = [&](bool with_pretrain,
                           uint64_t seed) -> nn::AttentionPolicyParams {
    auto rng = make_rng(derive_seed(seed, 1));
    nn::AttentionPolicyParams params = nn::make_attention_policy(
        bundle.arm.n_links, config.k, config.hidden, rng);
    if (with_pretrain && !aux_data.samples.empty()) {
      params = nn::behavioral_clone(aux_data, params, config.pretrain_epochs,
                                    config.batch_size, derive_seed(seed, 2))
                   .params;
    }
    return nn::behavioral_clone(task_data, params, config.epochs,
                                config.batch_size, derive_seed(seed, 3))
        .params;
  };

  struct Condition {
    std::string name;
    nn::AttentionPolicyParams params;
  };
  std::vector<Condition> conditions;
  conditions.push_back(
      {config.pretrain ? "pretrain" : "no_pretrain",
       train_network(config.pretrain, derive_seed(config.seed, 400))});
  if (config.pretrain_ab)
    conditions.push_back(
        {"no_pretrain", train_network(false, derive_seed(config.seed, 401))});

  GeneralizationReport report;
  report.poses.name = "table3_poses";
  report.poses.columns = {"condition", "split",   "pose_index", "x",
                          "y",         "heading", "success",    "final_error_m"};
  report.table3.name = "table3";
  report.table3.columns = {"condition", "split", "successes", "attempts",
                           "success_rate"};

  double main_train_rate = 0.0, main_test_rate = 0.0;
  for (const auto& condition : conditions) {
    // Evaluation: fresh plan per pose, deterministic rollout, noise off.
    SceneBundle eval_bundle = bundle;
    eval_bundle.noise = ObservationNoise::none();
    auto eval_split = [&](const std::vector<Vec3>& poses,
                          const std::string& split, uint64_t split_tag) {
      int successes = 0;
      for (size_t i = 0; i < poses.size(); ++i) {
        bool success = false;
        double error = kInf;
        try {
          const PlannedTask planned = plan_task(
              eval_bundle, poses[i],
              derive_seed(config.seed, 500 + split_tag * 1000 + i));
          const JointState init(planned.start_config,
                                Vec::Zero(eval_bundle.arm.n_links));
          const sim::Rollout roll = sim::rollout(
              eval_bundle.arm, eval_bundle.scene, eval_bundle.contact,
              attention_controller(condition.params, planned.reference), init,
              eval_bundle.T, eval_bundle.sim_params, eval_bundle.noise,
              derive_seed(config.seed, 600 + split_tag * 1000 + i));
          success = rollout_success(roll, eval_bundle.scene.goal_pose.pose3(),
                                    eval_bundle.success_tolerance,
                                    eval_bundle.T_final);
          error = final_position_error(roll, eval_bundle.scene.goal_pose.pose3());
        } catch (const NoPlanFound&) {
          // Planner failure counts as an evaluation failure.
        }
        successes += success ? 1 : 0;
        report.poses.rows.push_back(
            {condition.name, split, std::to_string(i),
             format_short(poses[i].x()), format_short(poses[i].y()),
             format_short(poses[i].z()), success ? "1" : "0",
             std::isfinite(error) ? format_short(error) : "inf"});
      }
      return successes;
    };

    const int train_successes = eval_split(train_poses, "train", 0);
    const int test_successes = eval_split(test_poses, "test", 1);
    const int total = static_cast<int>(train_poses.size() + test_poses.size());
    const double train_rate =
        static_cast<double>(train_successes) / train_poses.size();
    const double test_rate =
        static_cast<double>(test_successes) / test_poses.size();
    report.table3.rows.push_back(
        {condition.name, "train", std::to_string(train_successes),
         std::to_string(static_cast<int>(train_poses.size())),
         format_short(train_rate)});
    report.table3.rows.push_back(
        {condition.name, "test", std::to_string(test_successes),
         std::to_string(static_cast<int>(test_poses.size())),
         format_short(test_rate)});
    report.table3.rows.push_back(
        {condition.name, "overall",
         std::to_string(train_successes + test_successes), std::to_string(total),
         format_short(static_cast<double>(train_successes + test_successes) /
                      total)});
    if (&condition == &conditions.front()) {
      main_train_rate = train_rate;
      main_test_rate = test_rate;
    }
  }

  report.pass = main_train_rate >= 0.9 && main_test_rate >= 0.8;
  std::ostringstream summary;
  summary << "generalization experiment (" << bundle.scene.task_name
          << "): train rate " << format_short(main_train_rate) << ", test rate "
          << format_short(main_test_rate) << " -> "
          << (report.pass ? "PASS" : "FAIL") << "\n";
  summary << "train-pose controllers succeeded in training: "
          << solver_successes << "/" << train_poses.size() << "\n";
  report.summary = summary.str();
  return report;
}

}  // namespace planarm::harness
