#pragma once

#include <functional>
#include <random>
#include <vector>

#include "planarm/cost.hpp"
#include "planarm/planner.hpp"
#include "planarm/types.hpp"

namespace planarm::ilqg {

// Time-varying linear-Gaussian policy u ~ N(K_t s + k_t, Sigma_t) over the
// state layout (angles, velocities).
struct TvlgPolicy {
  std::vector<Mat> K;
  std::vector<Vec> k;
  std::vector<Mat> Sigma;

  int horizon() const { return static_cast<int>(K.size()); }
  int state_dim() const { return K.empty() ? 0 : static_cast<int>(K[0].cols()); }
  int action_dim() const { return K.empty() ? 0 : static_cast<int>(K[0].rows()); }
  Vec mean(const Vec& state, int t) const { return K[t] * state + k[t]; }
  Vec sample(const Vec& state, int t, std::mt19937_64& rng) const;
  void check() const;
};

struct TvlgDynamics {
  std::vector<Mat> A;
  std::vector<Mat> B;
  std::vector<Vec> c;
  std::vector<Mat> process_noise;

  int horizon() const { return static_cast<int>(A.size()); }
};

// One trajectory in generic state/action coordinates; rows are time steps.
struct TrajSample {
  Mat states;   // (T+1) x nx
  Mat actions;  // T x nu
};

// Stage cost in absolute coordinates:
//   l_t(s, u) = 1/2 s'Cxx s + cx's + 1/2 u'Cuu u + cu'u + u'Cus s + c0.
// State terms have length T+1 (terminal included), action terms length T.
struct StageCost {
  std::vector<Mat> Cxx;
  std::vector<Vec> cx;
  std::vector<Mat> Cuu;
  std::vector<Vec> cu;
  std::vector<Mat> Cus;      // optional cross terms; empty means zero
  std::vector<double> c0;    // constants, length T+1 (state) folded with action
};

// Convert a local expansion around a nominal trajectory into absolute stage
// quadratics.
StageCost absolute_stage_cost(const cost::CostExpansion& expansion,
                              const TrajSample& nominal);

// PD controller tracking the reference joint path, expressed as a linear
// policy: u = -G [Kp (phi - phi*_t) + Kd (phid - phid*_t)]. G is diagonal,
// proportional to distal-chain inertia, max entry 1.
TvlgPolicy pd_warm_start(const plan::ReferencePath& reference,
                         const ArmModel& model, double kp, double kd,
                         double dt_control, const Vec& exploration_std);

// Hold a fixed configuration; the uninformed baseline initialization.
TvlgPolicy stationary_pd_policy(const Vec& hold_angles, const ArmModel& model,
                                double kp, double kd, int T,
                                const Vec& exploration_std);

// Zero-mean random-exploration initialization (for warm-start ablations).
TvlgPolicy random_exploration_policy(int T, int state_dim, int action_dim,
                                     const Vec& exploration_std);

// Per-step ridge regression of next state on (state, action, 1) across the
// samples, blended with the previous fit. Throws SingularRegression when the
// samples carry no excitation (e.g. duplicated rollouts).
TvlgDynamics fit_dynamics(const std::vector<TrajSample>& samples,
                          const TvlgDynamics* prior, double prior_strength,
                          double ridge = 1e-6);

struct BackwardResult {
  TvlgPolicy policy;
  double predicted_cost = 0.0;   // quadratic-model cost of the new policy
  double lm_regularization = 0.0;
};

// LQG Riccati recursion on cost + kl_penalty * KL(new || prev), the usual
// soft-KL dual form. Sigma_t is the inverse action-value Hessian. Q_uu not
// positive definite triggers Levenberg-Marquardt regularization, growing
// until a cap.
BackwardResult backward_pass(const TvlgDynamics& dynamics,
                             const StageCost& stage, double kl_penalty,
                             const TvlgPolicy* prev_policy, const Vec& s0);

// Environment interface: run one rollout under the policy. cost_opt drives
// optimization decisions; cost_true / success / final_error are ground-truth
// metrics for reporting.
struct EnvSample {
  TrajSample traj;
  double cost_opt = 0.0;
  double cost_true = 0.0;
  bool success = false;
  double final_error = 0.0;
};

using SampleFn =
    std::function<EnvSample(const TvlgPolicy&, bool exploration, uint64_t seed)>;
using QuadratizeFn = std::function<StageCost(const TrajSample& nominal)>;
// True stage-cost evaluation of a (model-space) trajectory; pure function of
// states and actions, no simulator involved.
using CostEvalFn = std::function<double(const TrajSample&)>;

struct IlqgOptions {
  int n_rollouts_per_iter = 5;
  int max_iters = 40;
  double kl_penalty_init = 1.0;
  double kl_penalty_min = 1e-6;
  double kl_penalty_max = 1e10;
  double rel_improvement_tol = 0.01;  // convergence threshold
  int patience = 3;                   // consecutive low-improvement iterations
  // Analytic lower bound of the cost; convergence measures improvement
  // relative to the remaining gap above it.
  double cost_floor = 0.0;
  double accept_tolerance = 0.01;     // accepted steps may not worsen by >1%
  double divergence_factor = 10.0;
  double prior_strength = 1.0;
  double ridge = 1e-6;
  bool stop_on_success = false;
  bool verbose = false;  // per-iteration diagnostics on stderr
  int inner_iterations = 25;  // backward/forward passes on the fitted model
  double inner_tol = 1e-4;
};

struct IterationStats {
  int iter = 0;
  int rollouts_cum = 0;
  double mean_sample_cost = 0.0;  // mean optimization cost of the noisy samples
  double eval_cost = 0.0;         // optimization cost of the policy-mean rollout
  double eval_cost_true = 0.0;
  double kl_penalty = 0.0;
  bool success = false;
  bool accepted = false;
};

struct IlqgResult {
  TvlgPolicy policy;
  std::vector<IterationStats> iterations;
  int total_rollouts = 0;
  int rollouts_to_first_success = -1;  // -1: never succeeded
  double final_cost = 0.0;
  bool diverged = false;
  std::string divergence_message;
};

// Model-based policy search loop: sample, fit time-varying linear dynamics,
// quadratize the cost, run the backward pass, accept/reject against the
// quadratic model's expected improvement while adapting the KL penalty.
IlqgResult ilqg_solve(const SampleFn& sample_fn, const QuadratizeFn& quad_fn,
                      const CostEvalFn& cost_fn, const TvlgPolicy& init_policy,
                      const IlqgOptions& opts, uint64_t seed);

}  // namespace planarm::ilqg
