#include "planarm/ilqg.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "planarm/kinematics.hpp"
#include "planarm/rng.hpp"

namespace planarm::ilqg {

Vec TvlgPolicy::sample(const Vec& state, int t, std::mt19937_64& rng) const {
  Vec u = mean(state, t);
  Eigen::LLT<Mat> llt(Sigma[t]);
  if (llt.info() == Eigen::Success) {
    Vec z(u.size());
    for (int i = 0; i < z.size(); ++i) z[i] = gaussian(rng, 1.0);
    u += llt.matrixL() * z;
  }
  return u;
}

void TvlgPolicy::check() const {
  if (K.size() != k.size() || K.size() != Sigma.size())
    throw DimensionError("TvlgPolicy: inconsistent lengths");
  for (size_t t = 0; t < K.size(); ++t) {
    if (!K[t].allFinite() || !k[t].allFinite() || !Sigma[t].allFinite())
      throw NumericalError("TvlgPolicy: non-finite parameters");
    if ((Sigma[t] - Sigma[t].transpose()).cwiseAbs().maxCoeff() > 1e-9)
      throw Error("TvlgPolicy: Sigma must be symmetric");
  }
}

StageCost absolute_stage_cost(const cost::CostExpansion& expansion,
                              const TrajSample& nominal) {
  const int T = static_cast<int>(expansion.base_action.size());
  StageCost out;
  out.Cxx.resize(T + 1);
  out.cx.resize(T + 1);
  out.c0.resize(T + 1);
  out.Cuu.resize(T);
  out.cu.resize(T);
  for (int t = 0; t <= T; ++t) {
    const Vec s = nominal.states.row(t).transpose();
    const Mat& H = expansion.hess_state[t];
    const Vec& g = expansion.grad_state[t];
    out.Cxx[t] = H;
    out.cx[t] = g - H * s;
    out.c0[t] = expansion.base_state[t] - g.dot(s) + 0.5 * s.dot(H * s);
  }
  for (int t = 0; t < T; ++t) {
    const Vec u = nominal.actions.row(t).transpose();
    const Mat& H = expansion.hess_action[t];
    const Vec& g = expansion.grad_action[t];
    out.Cuu[t] = H;
    out.cu[t] = g - H * u;
    out.c0[t] += expansion.base_action[t] - g.dot(u) + 0.5 * u.dot(H * u);
  }
  return out;
}

TvlgPolicy pd_warm_start(const plan::ReferencePath& reference,
                         const ArmModel& model, double kp, double kd,
                         double dt_control, const Vec& exploration_std) {
  if (kp <= 0 || kd <= 0) throw Error("pd_warm_start: gains must be positive");
  const int T = reference.length();
  const int n = model.n_links;
  const Vec G = kin::moment_gains(model);
  TvlgPolicy pi;
  pi.K.reserve(T);
  Mat K(n, 2 * n);
  K << -kp * Mat::Identity(n, n), -kd * Mat::Identity(n, n);
  K = G.asDiagonal() * K;
  const Mat Sigma =
      exploration_std.array().square().matrix().asDiagonal().toDenseMatrix();
  for (int t = 0; t < T; ++t) {
    const Vec& target = reference.joint_points[t];
    Vec target_vel = Vec::Zero(n);
    if (t + 1 < T)
      target_vel = (reference.joint_points[t + 1] - target) / dt_control;
    pi.K.push_back(K);
    pi.k.push_back(G.asDiagonal() * (kp * target + kd * target_vel));
    pi.Sigma.push_back(Sigma);
  }
  return pi;
}

TvlgPolicy stationary_pd_policy(const Vec& hold_angles, const ArmModel& model,
                                double kp, double kd, int T,
                                const Vec& exploration_std) {
  const int n = model.n_links;
  const Vec G = kin::moment_gains(model);
  Mat K(n, 2 * n);
  K << -kp * Mat::Identity(n, n), -kd * Mat::Identity(n, n);
  K = G.asDiagonal() * K;
  const Vec k = G.asDiagonal() * (kp * hold_angles);
  const Mat Sigma =
      exploration_std.array().square().matrix().asDiagonal().toDenseMatrix();
  TvlgPolicy pi;
  pi.K.assign(T, K);
  pi.k.assign(T, k);
  pi.Sigma.assign(T, Sigma);
  return pi;
}

TvlgPolicy random_exploration_policy(int T, int state_dim, int action_dim,
                                     const Vec& exploration_std) {
  TvlgPolicy pi;
  pi.K.assign(T, Mat::Zero(action_dim, state_dim));
  pi.k.assign(T, Vec::Zero(action_dim));
  pi.Sigma.assign(
      T, exploration_std.array().square().matrix().asDiagonal().toDenseMatrix());
  return pi;
}

TvlgDynamics fit_dynamics(const std::vector<TrajSample>& samples,
                          const TvlgDynamics* prior, double prior_strength,
                          double ridge) {
  if (samples.size() < 5)
    throw Error("fit_dynamics: need at least 5 rollouts");
  const int T = static_cast<int>(samples[0].actions.rows());
  const int nx = static_cast<int>(samples[0].states.cols());
  const int nu = static_cast<int>(samples[0].actions.cols());
  for (const auto& s : samples)
    if (s.actions.rows() != T || s.states.rows() != T + 1 ||
        s.states.cols() != nx || s.actions.cols() != nu)
      throw DimensionError("fit_dynamics: inconsistent sample dimensions");

  const int nz = nx + nu + 1;
  const int ns = static_cast<int>(samples.size());
  TvlgDynamics dyn;
  dyn.A.resize(T);
  dyn.B.resize(T);
  dyn.c.resize(T);
  dyn.process_noise.resize(T);

  for (int t = 0; t < T; ++t) {
    Mat Z(ns, nz);
    Mat Y(ns, nx);
    for (int i = 0; i < ns; ++i) {
      Z.row(i).head(nx) = samples[i].states.row(t);
      Z.row(i).segment(nx, nu) = samples[i].actions.row(t);
      Z(i, nz - 1) = 1.0;
      Y.row(i) = samples[i].states.row(t + 1);
    }
    // Excitation check: duplicated rollouts leave a rank-0 centered design.
    bool distinct = false;
    for (int i = 1; i < ns && !distinct; ++i)
      distinct = (Z.row(i) - Z.row(0)).cwiseAbs().maxCoeff() > 1e-12;
    if (!distinct)
      throw SingularRegression(
          "fit_dynamics: samples identical at step " + std::to_string(t) +
          "; increase the exploration covariance");

    Mat theta_prior = Mat::Zero(nz, nx);  // [A'; B'; c']
    double lambda_prior = 0.0;
    if (prior && prior_strength > 0.0) {
      theta_prior.topRows(nx) = prior->A[t].transpose();
      theta_prior.middleRows(nx, nu) = prior->B[t].transpose();
      theta_prior.bottomRows(1) = prior->c[t].transpose();
      lambda_prior = prior_strength;
    }
    const Mat lhs = Z.transpose() * Z +
                    (ridge + lambda_prior) * Mat::Identity(nz, nz);
    const Mat rhs = Z.transpose() * Y + lambda_prior * theta_prior;
    const Mat theta = lhs.ldlt().solve(rhs);

    dyn.A[t] = theta.topRows(nx).transpose();
    dyn.B[t] = theta.middleRows(nx, nu).transpose();
    dyn.c[t] = theta.bottomRows(1).transpose();
    const Mat resid = Y - Z * theta;
    dyn.process_noise[t] = resid.transpose() * resid / ns;
    if (!dyn.A[t].allFinite() || !dyn.B[t].allFinite() || !dyn.c[t].allFinite())
      throw SingularRegression(
          "fit_dynamics: regression produced non-finite parameters; increase "
          "the exploration covariance");
  }
  return dyn;
}

BackwardResult backward_pass(const TvlgDynamics& dynamics,
                             const StageCost& stage, double kl_penalty,
                             const TvlgPolicy* prev_policy, const Vec& s0) {
  const int T = dynamics.horizon();
  const int nu = static_cast<int>(dynamics.B[0].cols());
  if (kl_penalty < 0) throw Error("backward_pass: kl_penalty must be >= 0");
  if (kl_penalty > 0 && prev_policy == nullptr)
    throw Error("backward_pass: KL penalty requires a previous policy");

  double lm = 0.0;
  constexpr double kLmInit = 1e-8;
  constexpr double kLmMax = 1e10;

  while (true) {
    TvlgPolicy pi;
    pi.K.resize(T);
    pi.k.resize(T);
    pi.Sigma.resize(T);

    Mat V2 = stage.Cxx[T];
    Vec v1 = stage.cx[T];
    double v0 = stage.c0[T];
    bool failed = false;

    for (int t = T - 1; t >= 0 && !failed; --t) {
      const Mat& A = dynamics.A[t];
      const Mat& B = dynamics.B[t];
      const Vec& c = dynamics.c[t];

      Mat Qss = stage.Cxx[t] + A.transpose() * V2 * A;
      Mat Qsu = A.transpose() * V2 * B;
      Mat Quu = stage.Cuu[t] + B.transpose() * V2 * B;
      Vec qs = stage.cx[t] + A.transpose() * (v1 + V2 * c);
      Vec qu = stage.cu[t] + B.transpose() * (v1 + V2 * c);
      double q0 = stage.c0[t] + v0 + v1.dot(c) + 0.5 * c.dot(V2 * c);
      if (!stage.Cus.empty()) {
        Qsu += stage.Cus[t].transpose();
      }

      // Soft-KL penalty: kl_penalty * 1/2 (u - Khat s - khat)' SigmaHat^-1 (.)
      if (kl_penalty > 0.0) {
        const Mat& Khat = prev_policy->K[t];
        const Vec& khat = prev_policy->k[t];
        const Mat P =
            kl_penalty *
            prev_policy->Sigma[t].ldlt().solve(Mat::Identity(nu, nu));
        Quu += P;
        Qss += Khat.transpose() * P * Khat;
        Qsu += -Khat.transpose() * P;
        qs += Khat.transpose() * P * khat;
        qu += -P * khat;
        q0 += 0.5 * khat.dot(P * khat);
      }

      const Mat Quu_reg = Quu + lm * Mat::Identity(nu, nu);
      Eigen::LLT<Mat> llt(Quu_reg);
      if (llt.info() != Eigen::Success) {
        failed = true;
        break;
      }
      const Mat K = -llt.solve(Qsu.transpose());
      const Vec k = -llt.solve(qu);
      pi.K[t] = K;
      pi.k[t] = k;
      pi.Sigma[t] = llt.solve(Mat::Identity(nu, nu));
      pi.Sigma[t] = 0.5 * (pi.Sigma[t] + pi.Sigma[t].transpose());

      // Value update with the unregularized Quu (exact on LQ problems).
      V2 = Qss + Qsu * K + K.transpose() * Qsu.transpose() +
           K.transpose() * Quu * K;
      V2 = 0.5 * (V2 + V2.transpose());
      v1 = qs + Qsu * k + K.transpose() * qu + K.transpose() * (Quu * k);
      v0 = q0 + k.dot(qu) + 0.5 * k.dot(Quu * k);
      if (!V2.allFinite() || !v1.allFinite() || !std::isfinite(v0)) failed = true;
    }

    if (!failed) {
      BackwardResult out;
      out.policy = std::move(pi);
      out.predicted_cost = 0.5 * s0.dot(V2 * s0) + v1.dot(s0) + v0;
      out.lm_regularization = lm;
      return out;
    }
    lm = (lm == 0.0) ? kLmInit : lm * 10.0;
    if (lm > kLmMax)
      throw NumericalError(
          "backward_pass: Q_uu not positive definite at maximum "
          "Levenberg-Marquardt regularization");
  }
}

IlqgResult ilqg_solve(const SampleFn& sample_fn, const QuadratizeFn& quad_fn,
                      const CostEvalFn& cost_fn, const TvlgPolicy& init_policy,
                      const IlqgOptions& opts, uint64_t seed) {
  (void)cost_fn;  // reserved for model-space diagnostics
  IlqgResult result;
  TvlgPolicy policy = init_policy;
  double kl = opts.kl_penalty_init;
  uint64_t stream = 0;

  auto track = [&](const EnvSample& s) {
    ++result.total_rollouts;
    if (s.success && result.rollouts_to_first_success < 0)
      result.rollouts_to_first_success = result.total_rollouts;
  };

  double best_cost = std::numeric_limits<double>::infinity();
  double prev_cost = std::numeric_limits<double>::quiet_NaN();
  double current_cost = std::numeric_limits<double>::quiet_NaN();
  int low_improvement_streak = 0;

  std::vector<TrajSample> prev_samples;
  TvlgDynamics dyn;
  bool have_dyn = false;

  for (int iter = 0; iter < opts.max_iters; ++iter) {
    // The per-step regression sees state+action+1 unknowns; the first batch
    // draws at least that many samples so the fit starts identified.
    int batch = opts.n_rollouts_per_iter;
    if (iter == 0 && !init_policy.K.empty())
      batch = std::max(batch,
                       init_policy.state_dim() + init_policy.action_dim() + 2);
    std::vector<TrajSample> samples;
    double sample_cost_sum = 0.0;
    for (int i = 0; i < batch; ++i) {
      EnvSample s = sample_fn(policy, true, derive_seed(seed, stream++));
      track(s);
      sample_cost_sum += s.cost_opt;
      samples.push_back(std::move(s.traj));
    }

    std::vector<TrajSample> data = samples;
    data.insert(data.end(), prev_samples.begin(), prev_samples.end());
    dyn = fit_dynamics(data, have_dyn ? &dyn : nullptr, opts.prior_strength,
                       opts.ridge);
    have_dyn = true;

    // Current policy and candidates run with the same pair of noise streams:
    // the paired comparison cancels most observation-noise jitter, and two
    // independent draws stop single-seed luck from steering the accepts.
    const uint64_t eval_seed_a = derive_seed(seed, stream++);
    const uint64_t eval_seed_b = derive_seed(seed, stream++);
    EnvSample cur = sample_fn(policy, false, eval_seed_a);
    track(cur);
    EnvSample cur_b = sample_fn(policy, false, eval_seed_b);
    track(cur_b);
    const double cur_pair_cost = cur.cost_opt + cur_b.cost_opt;

    // One backward pass per sample batch: open-loop rollouts of the fitted
    // time-varying model diverge over the full horizon (tiny per-step fit
    // errors compound), so candidates are judged on the real system via the
    // paired evaluations, never on long model rollouts.
    const Vec s0 = cur.traj.states.row(0).transpose();
    const BackwardResult bw =
        backward_pass(dyn, quad_fn(cur.traj), kl, &policy, s0);

    // Backtracking line search: the fitted linear model ignores torque
    // limits and contact, so the full step can underperform where a damped
    // interpolation toward the previous policy still improves.
    bool accept = false;
    double ratio = 0.0;
    TvlgPolicy accepted_policy;
    EnvSample cand;
    bool adopted_success_pair = cur.success && cur_b.success;
    double adopted_pair_cost = cur_pair_cost;
    for (const double alpha : {1.0, 0.5}) {
      TvlgPolicy trial = bw.policy;
      if (alpha < 1.0) {
        for (int t = 0; t < trial.horizon(); ++t) {
          trial.K[t] = alpha * bw.policy.K[t] + (1.0 - alpha) * policy.K[t];
          trial.k[t] = alpha * bw.policy.k[t] + (1.0 - alpha) * policy.k[t];
        }
      }
      EnvSample trial_a = sample_fn(trial, false, eval_seed_a);
      track(trial_a);
      EnvSample trial_b = sample_fn(trial, false, eval_seed_b);
      track(trial_b);
      if (trial_a.cost_opt + trial_b.cost_opt <= cur_pair_cost) {
        accept = true;
        adopted_success_pair = trial_a.success && trial_b.success;
        adopted_pair_cost = trial_a.cost_opt + trial_b.cost_opt;
        accepted_policy = std::move(trial);
        cand = std::move(trial_a);
        const double actual = 0.5 * (cur_pair_cost - adopted_pair_cost);
        const double expected = alpha * (cur.cost_opt - bw.predicted_cost);
        ratio = (expected > 1e-12) ? actual / expected : 1.0;
        break;
      }
    }

    if (opts.verbose) {
      std::fprintf(stderr,
                   "[ilqg] it=%d cur=%.3f pred=%.3f cand=%.3f accept=%d kl=%.3g lm=%.2g\n",
                   iter, cur.cost_opt, bw.predicted_cost,
                   accept ? cand.cost_opt : std::numeric_limits<double>::quiet_NaN(),
                   accept ? 1 : 0, kl, bw.lm_regularization);
    }
    const EnvSample& adopted = accept ? cand : cur;
    if (accept) {
      policy = std::move(accepted_policy);
      if (ratio > 0.25) kl = std::max(opts.kl_penalty_min, kl * 0.5);
    } else {
      // Distinguish the two rejection modes: when even the penalized model
      // predicts no gain, the KL penalty is strangling the step and must
      // shrink; when the model promised a gain that reality refused, the
      // trust region must shrink.
      const double gap = std::max(1e-12, std::abs(cur.cost_opt - opts.cost_floor));
      const double expected_full = cur.cost_opt - bw.predicted_cost;
      if (expected_full < 1e-3 * gap)
        kl = std::max(opts.kl_penalty_min, kl * 0.5);
      else
        kl = std::min(opts.kl_penalty_max, kl * 2.0);
    }
    current_cost = adopted.cost_opt;

    IterationStats st;
    st.iter = iter;
    st.rollouts_cum = result.total_rollouts;
    st.mean_sample_cost = sample_cost_sum / batch;
    st.eval_cost = adopted.cost_opt;
    st.eval_cost_true = adopted.cost_true;
    st.kl_penalty = kl;
    st.success = adopted.success;
    st.accepted = accept;
    result.iterations.push_back(st);

    // Keep the best policy seen; late iterations can drift.
    if (0.5 * adopted_pair_cost < best_cost) {
      result.policy = policy;
      result.final_cost = current_cost;
    }
    best_cost = std::min(best_cost, 0.5 * adopted_pair_cost);
    if (current_cost > opts.divergence_factor * std::abs(best_cost) &&
        current_cost > best_cost) {
      result.diverged = true;
      std::ostringstream msg;
      msg << "ilqg_solve diverged at iteration " << iter << ": cost "
          << current_cost << " vs best " << best_cost;
      result.divergence_message = msg.str();
      break;
    }

    if (std::isfinite(prev_cost)) {
      const double gap = std::max(1e-12, std::abs(prev_cost - opts.cost_floor));
      const double rel = std::abs(prev_cost - current_cost) / gap;
      low_improvement_streak =
          (rel < opts.rel_improvement_tol) ? low_improvement_streak + 1 : 0;
    }
    prev_cost = current_cost;
    if (low_improvement_streak >= opts.patience) break;
    // Stopping at success mirrors training-until-completion protocols; the
    // pair requirement avoids stopping on a lucky draw.
    if (opts.stop_on_success && adopted_success_pair) {
      result.policy = policy;
      result.final_cost = current_cost;
      break;
    }

    prev_samples = std::move(samples);
  }

  if (result.policy.K.empty()) {
    result.policy = policy;
    result.final_cost = current_cost;
  }
  return result;
}

}  // namespace planarm::ilqg
