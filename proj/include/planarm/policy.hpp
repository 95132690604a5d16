#pragma once

#include <random>
#include <vector>

#include "planarm/ilqg.hpp"
#include "planarm/planner.hpp"
#include "planarm/types.hpp"

namespace planarm::harness {
struct SceneBundle;
}

namespace planarm::nn {

// Fully connected net, tanh hidden activations, linear output.
struct Mlp {
  std::vector<Mat> W;
  std::vector<Vec> b;

  int layers() const { return static_cast<int>(W.size()); }
  int input_dim() const { return static_cast<int>(W.front().cols()); }
  int output_dim() const { return static_cast<int>(W.back().rows()); }
};

Mlp make_mlp(const std::vector<int>& sizes, std::mt19937_64& rng);

// Soft-attention trajectory-tracking policy: a window of 2k+1 reference
// points is centered on the current task pose; an MLP over the centered
// directions (and the task velocity) produces softmax attention weights; the
// attended direction feeds the action MLP together with the state.
struct AttentionPolicyParams {
  Mlp attention;  // input: 3(2k+1) directions + 3 velocity; output: 2k+1 logits
  Mlp action;     // input: angles, velocities, pose, velocity, attended dir
  int k = 5;

  void check(int n_links) const;
};

AttentionPolicyParams make_attention_policy(int n_links, int k,
                                            const std::vector<int>& hidden,
                                            std::mt19937_64& rng);

struct AttentionOutput {
  Vec action;
  Vec weights;  // 2k+1 softmax weights, sum to 1
};

// t is the 1-based current timestep; window indices are clip(t+i, 1, T).
AttentionOutput attention_forward(const AttentionPolicyParams& params,
                                  const JointState& observed,
                                  const TaskPose& observed_pose,
                                  const plan::ReferencePath& reference, int t);

struct CloneSample {
  JointState observed;
  TaskPose observed_pose;
  int t = 1;          // 1-based timestep
  Vec target_action;
  int reference_index = 0;
};

struct CloneDataset {
  std::vector<plan::ReferencePath> references;
  std::vector<CloneSample> samples;

  size_t size() const { return samples.size(); }
  void append(const CloneDataset& other);
};

// Parameter packing (attention layers then action layers, row-major) for the
// optimizer and the gradient checks.
Vec pack_params(const AttentionPolicyParams& params);
void unpack_params(const Vec& packed, AttentionPolicyParams& params);

struct GradientResult {
  Vec grad;     // packed, same layout as pack_params
  double loss;  // mean squared action error over the batch
};

// Exact analytic gradient of mean |action - target|^2 over the given sample
// indices.
GradientResult attention_gradients(const AttentionPolicyParams& params,
                                   const CloneDataset& dataset,
                                   const std::vector<int>& batch_indices);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  Vec m;
  Vec v;

  static AdamState zero(int dim) { return {Vec::Zero(dim), Vec::Zero(dim)}; }
};

// Standard Adam update with bias correction; step_index is 1-based.
Vec adam_step(const Vec& params, const Vec& grad, AdamState& state,
              int step_index, const AdamConfig& config = {});

struct TrainResult {
  AttentionPolicyParams params;
  std::vector<double> epoch_losses;
};

// Shuffled mini-batch behavioral cloning with Adam; deterministic per seed.
TrainResult behavioral_clone(const CloneDataset& dataset,
                             AttentionPolicyParams params, int epochs,
                             int batch_size, uint64_t seed,
                             const AdamConfig& config = {});

// Aux pre-training data: random feasible starts and goals, reference-cost
// iLQG per pair, observations and controller mean actions recorded from
// rollouts of the final policy.
CloneDataset generate_aux_pretraining_data(const harness::SceneBundle& bundle,
                                           int n_trajectories, uint64_t seed,
                                           const ilqg::IlqgOptions& opts,
                                           int rollouts_per_trajectory = 3);

}  // namespace planarm::nn
