#include "planarm/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "planarm/harness.hpp"
#include "planarm/rng.hpp"

namespace planarm::nn {

Mlp make_mlp(const std::vector<int>& sizes, std::mt19937_64& rng) {
  if (sizes.size() < 2) throw Error("make_mlp: need at least input and output");
  Mlp net;
  for (size_t l = 0; l + 1 < sizes.size(); ++l) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(sizes[l]));
    Mat W(sizes[l + 1], sizes[l]);
    for (int r = 0; r < W.rows(); ++r)
      for (int c = 0; c < W.cols(); ++c) W(r, c) = uniform(rng, -scale, scale);
    net.W.push_back(std::move(W));
    net.b.push_back(Vec::Zero(sizes[l + 1]));
  }
  return net;
}

namespace {

// Forward pass caching post-activation values; activations[0] is the input.
std::vector<Vec> mlp_forward(const Mlp& net, const Vec& input) {
  std::vector<Vec> acts;
  acts.reserve(net.layers() + 1);
  acts.push_back(input);
  for (int l = 0; l < net.layers(); ++l) {
    Vec z = net.W[l] * acts.back() + net.b[l];
    if (l + 1 < net.layers()) z = z.array().tanh();
    acts.push_back(std::move(z));
  }
  return acts;
}

struct MlpGrads {
  std::vector<Mat> W;
  std::vector<Vec> b;

  static MlpGrads zero(const Mlp& net) {
    MlpGrads g;
    for (int l = 0; l < net.layers(); ++l) {
      g.W.push_back(Mat::Zero(net.W[l].rows(), net.W[l].cols()));
      g.b.push_back(Vec::Zero(net.b[l].size()));
    }
    return g;
  }
};

// Backprop d_output through the cached activations; accumulates parameter
// gradients and returns the gradient w.r.t. the input.
Vec mlp_backward(const Mlp& net, const std::vector<Vec>& acts,
                 const Vec& d_output, MlpGrads& grads) {
  Vec delta = d_output;
  for (int l = net.layers() - 1; l >= 0; --l) {
    if (l + 1 < net.layers()) {
      // acts[l+1] holds tanh values for hidden layers.
      delta = delta.cwiseProduct(
          (1.0 - acts[l + 1].array().square()).matrix());
    }
    grads.W[l] += delta * acts[l].transpose();
    grads.b[l] += delta;
    delta = net.W[l].transpose() * delta;
  }
  return delta;
}

Vec softmax(const Vec& logits) {
  const Vec shifted = (logits.array() - logits.maxCoeff()).exp();
  return shifted / shifted.sum();
}

struct AttentionTrace {
  std::vector<Vec3> directions;  // 2k+1
  std::vector<Vec> attn_acts;
  std::vector<Vec> action_acts;
  Vec weights;
  Vec action;
};

AttentionTrace forward_traced(const AttentionPolicyParams& params,
                              const JointState& observed,
                              const TaskPose& observed_pose,
                              const plan::ReferencePath& reference, int t) {
  const int T = reference.length();
  if (t < 1 || t > T)
    throw Error("attention_forward: t must satisfy 1 <= t <= T");
  const int k = params.k;
  const int window = 2 * k + 1;
  const Vec3 pose = observed_pose.pose3();

  AttentionTrace trace;
  trace.directions.reserve(window);
  Vec attn_in(3 * window + 3);
  for (int i = -k; i <= k; ++i) {
    const int idx = std::clamp(t + i, 1, T);
    const Vec3 d = reference.task_points[idx - 1] - pose;
    attn_in.segment<3>(3 * (i + k)) = d;
    trace.directions.push_back(d);
  }
  attn_in.tail<3>() = observed_pose.velocity3();

  trace.attn_acts = mlp_forward(params.attention, attn_in);
  trace.weights = softmax(trace.attn_acts.back());

  Vec3 attended = Vec3::Zero();
  for (int j = 0; j < window; ++j)
    attended += trace.weights[j] * trace.directions[j];

  // Raw position never reaches the action MLP: position information flows
  // only through the centered directions, keeping the policy invariant to
  // common translations of pose and reference. Heading is translation-safe.
  const int n = static_cast<int>(observed.angles.size());
  Vec action_in(2 * n + 7);
  action_in.head(n) = observed.angles;
  action_in.segment(n, n) = observed.velocities;
  action_in[2 * n] = observed_pose.heading;
  action_in.segment<3>(2 * n + 1) = observed_pose.velocity3();
  action_in.tail<3>() = attended;

  trace.action_acts = mlp_forward(params.action, action_in);
  trace.action = trace.action_acts.back();
  return trace;
}

int param_count(const Mlp& net) {
  int n = 0;
  for (int l = 0; l < net.layers(); ++l)
    n += static_cast<int>(net.W[l].size() + net.b[l].size());
  return n;
}

}  // namespace

void AttentionPolicyParams::check(int n_links) const {
  if (k < 1) throw Error("AttentionPolicyParams: k must be >= 1");
  const int window = 2 * k + 1;
  if (attention.input_dim() != 3 * window + 3 ||
      attention.output_dim() != window)
    throw DimensionError("AttentionPolicyParams: attention MLP dimensions");
  if (action.input_dim() != 2 * n_links + 7 || action.output_dim() != n_links)
    throw DimensionError("AttentionPolicyParams: action MLP dimensions");
}

AttentionPolicyParams make_attention_policy(int n_links, int k,
                                            const std::vector<int>& hidden,
                                            std::mt19937_64& rng) {
  const int window = 2 * k + 1;
  std::vector<int> attn_sizes{3 * window + 3};
  attn_sizes.insert(attn_sizes.end(), hidden.begin(), hidden.end());
  attn_sizes.push_back(window);
  std::vector<int> act_sizes{2 * n_links + 7};
  act_sizes.insert(act_sizes.end(), hidden.begin(), hidden.end());
  act_sizes.push_back(n_links);

  AttentionPolicyParams params;
  params.k = k;
  params.attention = make_mlp(attn_sizes, rng);
  params.action = make_mlp(act_sizes, rng);
  return params;
}

AttentionOutput attention_forward(const AttentionPolicyParams& params,
                                  const JointState& observed,
                                  const TaskPose& observed_pose,
                                  const plan::ReferencePath& reference, int t) {
  const AttentionTrace trace =
      forward_traced(params, observed, observed_pose, reference, t);
  return {trace.action, trace.weights};
}

void CloneDataset::append(const CloneDataset& other) {
  const int offset = static_cast<int>(references.size());
  references.insert(references.end(), other.references.begin(),
                    other.references.end());
  for (CloneSample s : other.samples) {
    s.reference_index += offset;
    samples.push_back(std::move(s));
  }
}

Vec pack_params(const AttentionPolicyParams& params) {
  Vec out(param_count(params.attention) + param_count(params.action));
  int at = 0;
  for (const Mlp* net : {&params.attention, &params.action}) {
    for (int l = 0; l < net->layers(); ++l) {
      for (int r = 0; r < net->W[l].rows(); ++r)
        for (int c = 0; c < net->W[l].cols(); ++c) out[at++] = net->W[l](r, c);
      for (int i = 0; i < net->b[l].size(); ++i) out[at++] = net->b[l][i];
    }
  }
  return out;
}

void unpack_params(const Vec& packed, AttentionPolicyParams& params) {
  int at = 0;
  for (Mlp* net : {&params.attention, &params.action}) {
    for (int l = 0; l < net->layers(); ++l) {
      for (int r = 0; r < net->W[l].rows(); ++r)
        for (int c = 0; c < net->W[l].cols(); ++c) net->W[l](r, c) = packed[at++];
      for (int i = 0; i < net->b[l].size(); ++i) net->b[l][i] = packed[at++];
    }
  }
  if (at != packed.size())
    throw DimensionError("unpack_params: size mismatch");
}

GradientResult attention_gradients(const AttentionPolicyParams& params,
                                   const CloneDataset& dataset,
                                   const std::vector<int>& batch_indices) {
  if (batch_indices.empty())
    throw Error("attention_gradients: empty batch");
  MlpGrads attn_grads = MlpGrads::zero(params.attention);
  MlpGrads action_grads = MlpGrads::zero(params.action);
  const int window = 2 * params.k + 1;
  const double inv_batch = 1.0 / static_cast<double>(batch_indices.size());
  double loss = 0.0;

  for (const int idx : batch_indices) {
    const CloneSample& s = dataset.samples.at(idx);
    const plan::ReferencePath& ref = dataset.references.at(s.reference_index);
    const AttentionTrace trace =
        forward_traced(params, s.observed, s.observed_pose, ref, s.t);

    const Vec err = trace.action - s.target_action;
    loss += err.squaredNorm() * inv_batch;
    const Vec d_action = 2.0 * inv_batch * err;

    // Action MLP; its input gradient feeds the attended direction.
    const Vec d_action_in =
        mlp_backward(params.action, trace.action_acts, d_action, action_grads);
    const Vec3 d_attended = d_action_in.tail<3>();

    // Weighted sum: dL/dw_j = d_attended . d_j.
    Vec d_weights(window);
    for (int j = 0; j < window; ++j)
      d_weights[j] = d_attended.dot(trace.directions[j]);

    // Softmax backward: dz = w o (dw - w.dw).
    const double mix = trace.weights.dot(d_weights);
    const Vec d_logits =
        trace.weights.cwiseProduct(d_weights - Vec::Constant(window, mix));

    mlp_backward(params.attention, trace.attn_acts, d_logits, attn_grads);
  }

  GradientResult out;
  out.loss = loss;
  out.grad.resize(pack_params(params).size());
  int at = 0;
  for (const MlpGrads* g : {&attn_grads, &action_grads}) {
    for (size_t l = 0; l < g->W.size(); ++l) {
      for (int r = 0; r < g->W[l].rows(); ++r)
        for (int c = 0; c < g->W[l].cols(); ++c) out.grad[at++] = g->W[l](r, c);
      for (int i = 0; i < g->b[l].size(); ++i) out.grad[at++] = g->b[l][i];
    }
  }
  return out;
}

Vec adam_step(const Vec& params, const Vec& grad, AdamState& state,
              int step_index, const AdamConfig& config) {
  if (params.size() != grad.size() || state.m.size() != params.size() ||
      state.v.size() != params.size())
    throw DimensionError("adam_step: dimension mismatch");
  state.m = config.beta1 * state.m + (1.0 - config.beta1) * grad;
  state.v = config.beta2 * state.v.array().matrix() +
            (1.0 - config.beta2) * grad.array().square().matrix();
  const double bc1 = 1.0 - std::pow(config.beta1, step_index);
  const double bc2 = 1.0 - std::pow(config.beta2, step_index);
  const Vec m_hat = state.m / bc1;
  const Vec v_hat = state.v / bc2;
  return params - config.learning_rate *
                      (m_hat.array() / (v_hat.array().sqrt() + config.epsilon))
                          .matrix();
}

TrainResult behavioral_clone(const CloneDataset& dataset,
                             AttentionPolicyParams params, int epochs,
                             int batch_size, uint64_t seed,
                             const AdamConfig& config) {
  if (dataset.samples.empty())
    throw Error("behavioral_clone: empty dataset");
  auto rng = make_rng(seed);
  Vec packed = pack_params(params);
  AdamState adam = AdamState::zero(static_cast<int>(packed.size()));
  int step = 0;

  std::vector<int> order(dataset.samples.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult out;
  out.epoch_losses.reserve(epochs);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    int counted = 0;
    for (size_t at = 0; at < order.size(); at += batch_size) {
      const size_t end = std::min(order.size(), at + batch_size);
      const std::vector<int> batch(order.begin() + at, order.begin() + end);
      const GradientResult g = attention_gradients(params, dataset, batch);
      packed = adam_step(packed, g.grad, adam, ++step, config);
      unpack_params(packed, params);
      epoch_loss += g.loss * static_cast<double>(batch.size());
      counted += static_cast<int>(batch.size());
    }
    out.epoch_losses.push_back(epoch_loss / counted);
  }
  out.params = std::move(params);
  return out;
}

CloneDataset generate_aux_pretraining_data(const harness::SceneBundle& bundle,
                                           int n_trajectories, uint64_t seed,
                                           const ilqg::IlqgOptions& opts,
                                           int rollouts_per_trajectory) {
  return harness::collect_aux_clone_data(bundle, n_trajectories, seed, opts,
                                         rollouts_per_trajectory);
}

}  // namespace planarm::nn
