#include "planarm/cost.hpp"

#include <cmath>

#include "planarm/kinematics.hpp"

namespace planarm::cost {

void CostSpec::validate(int horizon) const {
  if (alpha <= 0) throw Error("CostSpec: alpha must be positive");
  if ((weights.array() <= 0).any())
    throw Error("CostSpec: weights must be positive");
  if ((kind == Kind::Reference) != reference.has_value())
    throw Error("CostSpec: reference present iff kind is reference");
  if (reference && reference->length() != horizon)
    throw DimensionError("CostSpec: reference length must equal horizon");
}

Vec3 CostSpec::target(int t) const {
  if (kind == Kind::GoalOnly) return goal;
  return reference->task_points.at(t);
}

double pose_loss(const CostSpec& spec, const Vec3& pose, const Vec3& target) {
  const Vec3 e = (pose - target).cwiseProduct(spec.weights);
  const double d2 = e.squaredNorm();
  return d2 + std::log(spec.alpha + d2);
}

double step_cost(const CostSpec& spec, const TaskPose& pose, const Vec& action,
                 int t) {
  return pose_loss(spec, pose.pose3(), spec.target(t)) +
         spec.action_penalty * action.squaredNorm();
}

double trajectory_cost(const CostSpec& spec, const sim::Rollout& rollout) {
  double total = 0.0;
  for (int t = 0; t < rollout.horizon(); ++t)
    total += step_cost(spec, rollout.task_poses[t + 1], rollout.actions[t], t);
  return total;
}

namespace {

Mat clamp_psd(const Mat& sym, double min_eig) {
  Eigen::SelfAdjointEigenSolver<Mat> es(sym);
  Vec vals = es.eigenvalues().cwiseMax(min_eig);
  return es.eigenvectors() * vals.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

CostExpansion quadratize(const CostSpec& spec, const ArmModel& model,
                         const std::vector<JointState>& states,
                         const std::vector<Vec>& actions) {
  const int T = static_cast<int>(actions.size());
  if (static_cast<int>(states.size()) != T + 1)
    throw DimensionError("quadratize: need T+1 states for T actions");
  const int n = model.n_links;
  const int nx = 2 * n;

  CostExpansion out;
  out.base_state.resize(T + 1);
  out.grad_state.resize(T + 1);
  out.hess_state.resize(T + 1);
  out.base_action.resize(T);
  out.grad_action.resize(T);
  out.hess_action.resize(T);

  for (int t = 0; t <= T; ++t) {
    if (t == 0) {
      // The initial state is fixed; its loss is a constant with no influence
      // on the optimization.
      out.base_state[0] = 0.0;
      out.grad_state[0] = Vec::Zero(nx);
      out.hess_state[0] = Mat::Zero(nx, nx);
      continue;
    }
    const Vec3 target = spec.target(t - 1);
    const Vec3 pose = kin::forward_kinematics(model, states[t]).pose3();
    const Vec3 e = (pose - target).cwiseProduct(spec.weights);
    const double d2 = e.squaredNorm();
    const double outer = 1.0 + 1.0 / (spec.alpha + d2);

    // Chain rule through f_FK; the loss only touches the angle block.
    const Mat J = kin::jacobian(model, states[t].angles);
    const Mat WJ = spec.weights.asDiagonal() * J;  // 3 x n
    const Vec3 gx = 2.0 * outer * e;               // d loss / d weighted err
    const Mat Hx = 2.0 * outer * Mat::Identity(3, 3) -
                   (4.0 / ((spec.alpha + d2) * (spec.alpha + d2))) * e * e.transpose();

    Vec grad = Vec::Zero(nx);
    grad.head(n) = WJ.transpose() * gx;
    Mat hess = Mat::Zero(nx, nx);
    hess.topLeftCorner(n, n) = WJ.transpose() * Hx * WJ;  // Gauss-Newton

    out.base_state[t] = d2 + std::log(spec.alpha + d2);
    out.grad_state[t] = grad;
    out.hess_state[t] = clamp_psd(hess, 1e-6);
  }

  for (int t = 0; t < T; ++t) {
    out.base_action[t] = spec.action_penalty * actions[t].squaredNorm();
    out.grad_action[t] = 2.0 * spec.action_penalty * actions[t];
    out.hess_action[t] =
        2.0 * spec.action_penalty * Mat::Identity(actions[t].size(), actions[t].size());
  }
  return out;
}

CostExpansion quadratize(const CostSpec& spec, const ArmModel& model,
                         const sim::Rollout& rollout, bool use_observed) {
  return quadratize(spec, model,
                    use_observed ? rollout.observed_states : rollout.states,
                    rollout.actions);
}

}  // namespace planarm::cost
