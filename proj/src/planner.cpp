#include "planarm/planner.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "planarm/kinematics.hpp"
#include "planarm/rng.hpp"

namespace planarm::plan {

namespace {

constexpr double kPi = std::numbers::pi;

double normalize_angle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a <= 0.0) a += 2.0 * kPi;
  return a - kPi;
}

}  // namespace

PlannerParams PlannerParams::defaults(int n_links) {
  PlannerParams p;
  p.lower_bounds = Vec::Constant(n_links, -kPi);
  p.upper_bounds = Vec::Constant(n_links, kPi);
  return p;
}

Vec PlanPath::interpolate(double s) const {
  if (waypoints.empty()) throw Error("PlanPath: empty path");
  if (waypoints.size() == 1) return waypoints.front();
  s = std::clamp(s, 0.0, 1.0);
  // parameterization is monotone; find the segment containing s.
  size_t hi = 1;
  while (hi + 1 < parameterization.size() && parameterization[hi] < s) ++hi;
  const double s0 = parameterization[hi - 1];
  const double s1 = parameterization[hi];
  const double w = (s1 > s0) ? (s - s0) / (s1 - s0) : 0.0;
  return waypoints[hi - 1] + w * (waypoints[hi] - waypoints[hi - 1]);
}

bool collision_free(const ArmModel& model, const Vec& angles,
                    const sim::SceneSpec& scene, double clearance_margin) {
  if (angles.size() != model.n_links)
    throw DimensionError("collision_free: angle dimension mismatch");
  // Link segments.
  std::vector<std::pair<Vec2, Vec2>> links;
  Vec2 p = Vec2::Zero();
  double c = 0.0;
  for (int i = 0; i < model.n_links; ++i) {
    c += angles[i];
    const Vec2 q = p + model.link_lengths[i] * Vec2(std::cos(c), std::sin(c));
    links.emplace_back(p, q);
    p = q;
  }
  const geom::Polygon grasped = geom::transformed(scene.grasped_polygon, p, c);
  for (const auto& obstacle : scene.static_polygons) {
    if (geom::distance(grasped, obstacle) < clearance_margin) return false;
    for (const auto& [a, b] : links) {
      if (geom::segment_polygon_distance(a, b, obstacle) <
          model.link_radius + clearance_margin)
        return false;
    }
  }
  return true;
}

bool segment_collision_free(const ArmModel& model, const Vec& from,
                            const Vec& to, const sim::SceneSpec& scene,
                            const PlannerParams& params) {
  const double dist = (to - from).norm();
  const int steps = std::max(1, static_cast<int>(std::ceil(dist / params.cc_resolution)));
  for (int i = 0; i <= steps; ++i) {
    const double w = static_cast<double>(i) / steps;
    if (!collision_free(model, from + w * (to - from), scene,
                        params.clearance_margin))
      return false;
  }
  return true;
}

std::vector<Vec> ik_solutions(const ArmModel& model, const Vec3& target) {
  if (model.n_links != 3)
    throw Error("ik_solutions: closed-form IK implemented for 3 links");
  const double l1 = model.link_lengths[0];
  const double l2 = model.link_lengths[1];
  const double l3 = model.link_lengths[2];
  // Wrist point: subtract the last link along the goal heading.
  const Vec2 wrist(target.x() - l3 * std::cos(target.z()),
                   target.y() - l3 * std::sin(target.z()));
  const double r2 = wrist.squaredNorm();
  const double cos_elbow = (r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
  std::vector<Vec> out;
  if (cos_elbow < -1.0 || cos_elbow > 1.0) return out;  // unreachable
  const double elbow = std::acos(std::clamp(cos_elbow, -1.0, 1.0));
  for (const double q2 : {elbow, -elbow}) {
    const double q1 = std::atan2(wrist.y(), wrist.x()) -
                      std::atan2(l2 * std::sin(q2), l1 + l2 * std::cos(q2));
    const double q3 = target.z() - q1 - q2;
    Vec q(3);
    q << normalize_angle(q1), normalize_angle(q2), normalize_angle(q3);
    out.push_back(q);
    if (q2 == -q2) break;  // straight arm: both branches coincide
  }
  return out;
}

std::vector<Vec> goal_configurations(const ArmModel& model, const Vec3& goal,
                                     const sim::SceneSpec& scene,
                                     double clearance_margin) {
  std::vector<Vec> out;
  for (const Vec& q : ik_solutions(model, goal))
    if (collision_free(model, q, scene, clearance_margin)) out.push_back(q);
  return out;
}

namespace {

struct Tree {
  std::vector<Vec> nodes;
  std::vector<int> parents;

  int nearest(const Vec& q) const {
    int best = 0;
    double best_d = (nodes[0] - q).squaredNorm();
    for (size_t i = 1; i < nodes.size(); ++i) {
      const double d = (nodes[i] - q).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(i);
      }
    }
    return best;
  }

  int add(const Vec& q, int parent) {
    nodes.push_back(q);
    parents.push_back(parent);
    return static_cast<int>(nodes.size()) - 1;
  }

  std::vector<Vec> path_to_root(int idx) const {
    std::vector<Vec> out;
    for (int i = idx; i >= 0; i = parents[i]) out.push_back(nodes[i]);
    return out;
  }
};

enum class ExtendResult { Trapped, Advanced, Reached };

ExtendResult extend(Tree& tree, const Vec& target, const ArmModel& model,
                    const sim::SceneSpec& scene, const PlannerParams& params,
                    int& new_index) {
  const int near = tree.nearest(target);
  const Vec& q_near = tree.nodes[near];
  const double dist = (target - q_near).norm();
  if (dist < 1e-12) {
    new_index = near;
    return ExtendResult::Reached;
  }
  const bool reaches = dist <= params.steer_step;
  const Vec q_new =
      reaches ? target : Vec(q_near + (params.steer_step / dist) * (target - q_near));
  if (!segment_collision_free(model, q_near, q_new, scene, params))
    return ExtendResult::Trapped;
  new_index = tree.add(q_new, near);
  return reaches ? ExtendResult::Reached : ExtendResult::Advanced;
}

ExtendResult connect(Tree& tree, const Vec& target, const ArmModel& model,
                     const sim::SceneSpec& scene, const PlannerParams& params,
                     int& new_index) {
  ExtendResult r = ExtendResult::Advanced;
  while (r == ExtendResult::Advanced)
    r = extend(tree, target, model, scene, params, new_index);
  return r;
}

std::vector<Vec> shortcut(std::vector<Vec> waypoints, const ArmModel& model,
                          const sim::SceneSpec& scene,
                          const PlannerParams& params, std::mt19937_64& rng) {
  for (int attempt = 0; attempt < params.shortcut_attempts; ++attempt) {
    if (waypoints.size() < 3) break;
    std::uniform_int_distribution<size_t> pick(0, waypoints.size() - 1);
    size_t i = pick(rng), j = pick(rng);
    if (i > j) std::swap(i, j);
    if (j <= i + 1) continue;
    if (segment_collision_free(model, waypoints[i], waypoints[j], scene, params))
      waypoints.erase(waypoints.begin() + i + 1, waypoints.begin() + j);
  }
  return waypoints;
}

PlanPath finalize(std::vector<Vec> waypoints) {
  PlanPath path;
  path.waypoints = std::move(waypoints);
  path.parameterization.resize(path.waypoints.size());
  double total = 0.0;
  path.parameterization[0] = 0.0;
  for (size_t i = 1; i < path.waypoints.size(); ++i) {
    total += (path.waypoints[i] - path.waypoints[i - 1]).norm();
    path.parameterization[i] = total;
  }
  if (total > 0.0)
    for (double& s : path.parameterization) s /= total;
  else
    for (size_t i = 0; i < path.parameterization.size(); ++i)
      path.parameterization[i] =
          path.parameterization.size() > 1
              ? static_cast<double>(i) / (path.parameterization.size() - 1)
              : 0.0;
  return path;
}

}  // namespace

PlanPath rrt_connect(const ArmModel& model, const sim::SceneSpec& scene,
                     const Vec& start, const std::vector<Vec>& goal_configs,
                     std::mt19937_64& rng, const PlannerParams& params) {
  if (goal_configs.empty())
    throw NoPlanFound("rrt_connect: no collision-free goal configuration");
  if (!collision_free(model, start, scene, params.clearance_margin))
    throw NoPlanFound("rrt_connect: start configuration in collision");

  // Direct hit: start equals (or connects trivially to) a goal config.
  for (const Vec& g : goal_configs) {
    if ((g - start).norm() < 1e-12) return finalize({start});
  }

  Tree start_tree, goal_tree;
  start_tree.add(start, -1);
  for (const Vec& g : goal_configs) goal_tree.add(g, -1);

  Tree* ta = &start_tree;
  Tree* tb = &goal_tree;
  bool a_is_start = true;
  const int n = model.n_links;

  for (int iter = 0; iter < params.max_iters; ++iter) {
    Vec q_rand(n);
    for (int i = 0; i < n; ++i)
      q_rand[i] = uniform(rng, params.lower_bounds[i], params.upper_bounds[i]);

    int idx_a = -1;
    if (extend(*ta, q_rand, model, scene, params, idx_a) !=
        ExtendResult::Trapped) {
      int idx_b = -1;
      if (connect(*tb, ta->nodes[idx_a], model, scene, params, idx_b) ==
          ExtendResult::Reached) {
        auto from_start = (a_is_start ? ta : tb)->path_to_root(a_is_start ? idx_a : idx_b);
        auto from_goal = (a_is_start ? tb : ta)->path_to_root(a_is_start ? idx_b : idx_a);
        std::reverse(from_start.begin(), from_start.end());
        // Drop the duplicated connection node.
        if (!from_goal.empty() && !from_start.empty() &&
            (from_goal.front() - from_start.back()).norm() < 1e-12)
          from_goal.erase(from_goal.begin());
        from_start.insert(from_start.end(), from_goal.begin(), from_goal.end());
        return finalize(shortcut(std::move(from_start), model, scene, params, rng));
      }
    }
    std::swap(ta, tb);
    a_is_start = !a_is_start;
  }
  throw NoPlanFound("rrt_connect: no plan within max_iters");
}

ReferencePath discretize_reference(const ArmModel& model, const PlanPath& path,
                                   int T_traj, int T_final, const Vec3& goal) {
  if (T_traj < 1 || T_final < 1)
    throw Error("discretize_reference: T_traj and T_final must be >= 1");
  ReferencePath ref;
  ref.T_traj = T_traj;
  ref.T_final = T_final;
  const int T = T_traj + T_final;
  ref.task_points.reserve(T);
  ref.joint_points.reserve(T);
  for (int t = 1; t <= T; ++t) {
    if (t <= T_traj) {
      const Vec q = path.interpolate(static_cast<double>(t) / T_traj);
      ref.joint_points.push_back(q);
      ref.task_points.push_back(
          kin::forward_kinematics(model, {q, Vec::Zero(model.n_links)}).pose3());
    } else {
      ref.joint_points.push_back(path.waypoints.back());
      ref.task_points.push_back(goal);
    }
  }
  return ref;
}

}  // namespace planarm::plan
