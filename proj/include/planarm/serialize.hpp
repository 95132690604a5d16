#pragma once

#include <string>

#include "planarm/ilqg.hpp"
#include "planarm/planner.hpp"
#include "planarm/policy.hpp"
#include "planarm/sim.hpp"

namespace planarm::ser {

// Rollout as JSON lines, one record per timestep with fixed field order:
// t, angles, velocities, pose, pose_vel, action, cost.
std::string rollout_jsonl(const sim::Rollout& rollout);

// Reference path as JSON lines: a header record with T_traj/T_final, then one
// record per point: t (1-based), task, joint.
std::string reference_jsonl(const plan::ReferencePath& ref);
plan::ReferencePath parse_reference_jsonl(const std::string& text);

// Clone dataset as JSON lines: reference records then sample records.
std::string clone_dataset_jsonl(const nn::CloneDataset& dataset);
nn::CloneDataset parse_clone_dataset_jsonl(const std::string& text);

// Time-varying linear-Gaussian policy checkpoint: text format, per-step
// matrices row-major at full decimal precision.
std::string tvlg_text(const ilqg::TvlgPolicy& policy);
ilqg::TvlgPolicy parse_tvlg_text(const std::string& text);

// Attention policy checkpoint: layer shapes plus full-precision values.
std::string attention_text(const nn::AttentionPolicyParams& params);
nn::AttentionPolicyParams parse_attention_text(const std::string& text);

void write_file(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

std::string format_double(double v);  // round-trip %.17g

}  // namespace planarm::ser
