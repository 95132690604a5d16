// Command-line frontend: planning, policy search, cloning, evaluation, and
// the three table experiments.

#include <chrono>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "planarm/harness.hpp"
#include "planarm/kinematics.hpp"
#include "planarm/rng.hpp"
#include "planarm/serialize.hpp"

namespace fs = std::filesystem;
using namespace planarm;

namespace {

void ensure_dir(const std::string& out) {
  fs::create_directories(out);
}

Vec3 parse_pose_arg(const harness::SceneBundle& bundle, const std::string& arg) {
  if (arg == "easy" || arg == "hard") return bundle.named_pose(arg);
  std::istringstream in(arg);
  double x, y, h;
  if (!(in >> x >> y >> h))
    throw Error("pose must be 'easy', 'hard', or 'x y heading'");
  return Vec3(x, y, h);
}

std::string stats_csv(const ilqg::IlqgResult& result) {
  harness::Report r;
  r.name = "ilqg_stats";
  r.columns = {"iter",       "rollouts_cum", "mean_cost", "eval_cost",
               "kl_penalty", "success",      "accepted"};
  for (const auto& it : result.iterations) {
    char mean_cost[32], eval_cost[32], kl[32];
    std::snprintf(mean_cost, sizeof mean_cost, "%.6g", it.mean_sample_cost);
    std::snprintf(eval_cost, sizeof eval_cost, "%.6g", it.eval_cost);
    std::snprintf(kl, sizeof kl, "%.6g", it.kl_penalty);
    r.rows.push_back({std::to_string(it.iter), std::to_string(it.rollouts_cum),
                      mean_cost, eval_cost, kl, it.success ? "1" : "0",
                      it.accepted ? "1" : "0"});
  }
  return r.csv();
}

int cmd_plan(const std::string& config, uint64_t seed, const std::string& out,
             const std::string& pose_arg) {
  const auto bundle = harness::load_scene(config);
  const Vec3 pose = parse_pose_arg(bundle, pose_arg);
  const auto planned = harness::plan_task(bundle, pose, seed);
  ensure_dir(out);

  std::ostringstream plan_lines;
  for (size_t i = 0; i < planned.path.waypoints.size(); ++i) {
    plan_lines << "{\"i\":" << i << ",\"s\":"
               << ser::format_double(planned.path.parameterization[i])
               << ",\"q\":[";
    for (int j = 0; j < planned.path.waypoints[i].size(); ++j) {
      if (j) plan_lines << ",";
      plan_lines << ser::format_double(planned.path.waypoints[i][j]);
    }
    plan_lines << "]}\n";
  }
  ser::write_file(out + "/plan.jsonl", plan_lines.str());
  ser::write_file(out + "/reference.jsonl", ser::reference_jsonl(planned.reference));
  std::cout << "plan: " << planned.path.waypoints.size() << " waypoints, "
            << planned.reference.length() << " reference points -> " << out
            << std::endl;
  return 0;
}

int cmd_ilqg(const std::string& config, uint64_t seed, const std::string& out,
             const std::string& scene_file, const std::string& pose_arg,
             const std::string& cost_kind) {
  const auto exp = harness::load_experiment_config(config);
  const std::string scene =
      scene_file.empty() ? (exp.scene_files.empty() ? exp.generalization_scene
                                                    : exp.scene_files.front())
                         : scene_file;
  const auto bundle = harness::load_scene(scene);
  const Vec3 pose = parse_pose_arg(bundle, pose_arg);
  const cost::Kind kind =
      (cost_kind == "goal") ? cost::Kind::GoalOnly : cost::Kind::Reference;

  const auto solved = harness::solve_pose(bundle, pose, kind, exp.ilqg, seed);
  ensure_dir(out);
  ser::write_file(out + "/policy.txt", ser::tvlg_text(solved.ilqg.policy));
  ser::write_file(out + "/stats.csv", stats_csv(solved.ilqg));
  if (solved.planned)
    ser::write_file(out + "/reference.jsonl",
                    ser::reference_jsonl(solved.planned->reference));

  const auto roll = sim::rollout(
      bundle.arm, bundle.scene, bundle.contact,
      harness::tvlg_controller(solved.ilqg.policy, false), solved.init_state,
      bundle.T, bundle.sim_params, bundle.noise, derive_seed(seed, 4242));
  ser::write_file(out + "/rollout.jsonl", ser::rollout_jsonl(roll));
  const bool success =
      harness::rollout_success(roll, bundle.scene.goal_pose.pose3(),
                               bundle.success_tolerance, bundle.T_final);
  std::cout << "ilqg: rollouts " << solved.ilqg.total_rollouts
            << ", first success at "
            << solved.ilqg.rollouts_to_first_success << ", eval success "
            << (success ? "yes" : "no") << " -> " << out << std::endl;
  return 0;
}

int cmd_pretrain(const std::string& config, uint64_t seed,
                 const std::string& out) {
  const auto exp = harness::load_experiment_config(config);
  const auto bundle = harness::load_scene(exp.generalization_scene);
  const auto aux = harness::collect_aux_clone_data(bundle, exp.n_aux, seed,
                                                   exp.ilqg, exp.aux_rollouts);
  ensure_dir(out);
  ser::write_file(out + "/aux_data.jsonl", ser::clone_dataset_jsonl(aux));

  auto rng = make_rng(derive_seed(seed, 1));
  auto params =
      nn::make_attention_policy(bundle.arm.n_links, exp.k, exp.hidden, rng);
  const auto trained = nn::behavioral_clone(aux, params, exp.pretrain_epochs,
                                            exp.batch_size, derive_seed(seed, 2));
  ser::write_file(out + "/pretrained.txt", ser::attention_text(trained.params));

  harness::Report losses;
  losses.name = "clone_losses";
  losses.columns = {"epoch", "loss"};
  for (size_t i = 0; i < trained.epoch_losses.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", trained.epoch_losses[i]);
    losses.rows.push_back({std::to_string(i), buf});
  }
  ser::write_file(out + "/pretrain_losses.csv", losses.csv());
  std::cout << "pretrain: " << aux.samples.size() << " samples, final loss "
            << trained.epoch_losses.back() << " -> " << out << std::endl;
  return 0;
}

int cmd_clone(const std::string& config, uint64_t seed, const std::string& out,
              const std::string& data_file, const std::string& init_checkpoint) {
  const auto exp = harness::load_experiment_config(config);
  const auto bundle = harness::load_scene(exp.generalization_scene);
  const auto dataset =
      ser::parse_clone_dataset_jsonl(ser::read_file(data_file));

  nn::AttentionPolicyParams params;
  if (!init_checkpoint.empty()) {
    params = ser::parse_attention_text(ser::read_file(init_checkpoint));
  } else {
    auto rng = make_rng(derive_seed(seed, 1));
    params = nn::make_attention_policy(bundle.arm.n_links, exp.k, exp.hidden, rng);
  }
  const auto trained = nn::behavioral_clone(dataset, params, exp.epochs,
                                            exp.batch_size, derive_seed(seed, 3));
  ensure_dir(out);
  ser::write_file(out + "/policy.txt", ser::attention_text(trained.params));

  harness::Report losses;
  losses.name = "clone_losses";
  losses.columns = {"epoch", "loss"};
  for (size_t i = 0; i < trained.epoch_losses.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", trained.epoch_losses[i]);
    losses.rows.push_back({std::to_string(i), buf});
  }
  ser::write_file(out + "/clone_losses.csv", losses.csv());
  std::cout << "clone: " << dataset.samples.size() << " samples, final loss "
            << trained.epoch_losses.back() << " -> " << out << std::endl;
  return 0;
}

int cmd_eval(const std::string& config, uint64_t seed, const std::string& out,
             const std::string& scene_file, const std::string& policy_file,
             const std::string& pose_arg, bool noise_on) {
  const auto bundle = harness::load_scene(
      scene_file.empty() ? config : scene_file);
  const Vec3 pose = parse_pose_arg(bundle, pose_arg);

  const std::string text = ser::read_file(policy_file);
  harness::ControllerFactory factory;
  ilqg::TvlgPolicy tvlg;
  nn::AttentionPolicyParams attention;
  std::shared_ptr<plan::ReferencePath> reference;
  if (text.rfind("tvlg", 0) == 0) {
    tvlg = ser::parse_tvlg_text(text);
    factory = [&](const Vec3& p, uint64_t s)
        -> std::optional<std::pair<sim::Controller, JointState>> {
      try {
        const auto planned = harness::plan_task(bundle, p, s);
        return std::make_pair(harness::tvlg_controller(tvlg, false),
                              JointState(planned.start_config,
                                         Vec::Zero(bundle.arm.n_links)));
      } catch (const NoPlanFound&) {
        return std::nullopt;
      }
    };
  } else {
    attention = ser::parse_attention_text(text);
    factory = [&](const Vec3& p, uint64_t s)
        -> std::optional<std::pair<sim::Controller, JointState>> {
      try {
        const auto planned = harness::plan_task(bundle, p, s);
        reference = std::make_shared<plan::ReferencePath>(planned.reference);
        return std::make_pair(
            harness::attention_controller(attention, *reference),
            JointState(planned.start_config, Vec::Zero(bundle.arm.n_links)));
      } catch (const NoPlanFound&) {
        return std::nullopt;
      }
    };
  }

  const auto outcome = harness::evaluate_policy(
      bundle, factory, {pose}, bundle.success_tolerance, {seed}, noise_on);
  ensure_dir(out);
  harness::Report r;
  r.name = "eval";
  r.columns = {"pose_x", "pose_y", "pose_heading", "success", "final_error_m"};
  char ex[32], ey[32], eh[32], err[32];
  std::snprintf(ex, sizeof ex, "%.6g", pose.x());
  std::snprintf(ey, sizeof ey, "%.6g", pose.y());
  std::snprintf(eh, sizeof eh, "%.6g", pose.z());
  std::snprintf(err, sizeof err, "%.6g", outcome.errors[0]);
  r.rows.push_back({ex, ey, eh, outcome.successes[0] ? "1" : "0", err});
  ser::write_file(out + "/eval.csv", r.csv());
  std::cout << "eval: success " << (outcome.successes[0] ? "yes" : "no")
            << ", final error " << outcome.errors[0] << " m -> " << out
            << std::endl;
  return 0;
}

int cmd_table12(const std::string& config, uint64_t seed,
                const std::string& out, bool check, bool table2_focus,
                int jobs) {
  auto exp = harness::load_experiment_config(config);
  exp.seed = seed;
  if (jobs > 0) exp.jobs = jobs;
  const auto start = std::chrono::steady_clock::now();
  const auto report = harness::run_fixed_pose_experiment(exp);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  ensure_dir(out);
  ser::write_file(out + "/table1.csv", report.table1.csv());
  ser::write_file(out + "/table2.csv", report.table2.csv());
  ser::write_file(out + "/cells.csv", report.cells.csv());
  std::ostringstream summary;
  summary << report.summary << "wall_clock_s: " << secs << "\n";
  ser::write_file(out + "/summary.txt", summary.str());
  std::cout << report.summary;
  if (check) return (table2_focus ? report.table2_pass : report.table1_pass) ? 0 : 1;
  return 0;
}

int cmd_table3(const std::string& config, uint64_t seed, const std::string& out,
               bool check, int jobs) {
  auto exp = harness::load_experiment_config(config);
  exp.seed = seed;
  if (jobs > 0) exp.jobs = jobs;
  const auto start = std::chrono::steady_clock::now();
  const auto report = harness::run_generalization_experiment(exp);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  ensure_dir(out);
  ser::write_file(out + "/table3.csv", report.table3.csv());
  ser::write_file(out + "/table3_poses.csv", report.poses.csv());
  std::ostringstream summary;
  summary << report.summary << "wall_clock_s: " << secs << "\n";
  ser::write_file(out + "/summary.txt", summary.str());
  std::cout << report.summary;
  if (check) return report.pass ? 0 : 1;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"planar arm assembly: planning, policy search, and imitation"};
  app.require_subcommand(1);

  std::string config, out = "out", pose = "easy", scene, policy_file, data_file,
              init_checkpoint, cost_kind = "reference";
  uint64_t seed = 0;
  bool check = false, noise_on = true;
  int jobs = 0;

  auto add_common = [&](CLI::App* cmd, bool needs_config = true) {
    auto* opt = cmd->add_option("--config", config, "config file");
    if (needs_config) opt->required();
    cmd->add_option("--seed", seed, "master seed");
    cmd->add_option("--out", out, "output directory");
  };

  auto* plan_cmd = app.add_subcommand("plan", "motion plan + reference");
  add_common(plan_cmd);
  plan_cmd->add_option("--pose", pose, "easy | hard | 'x y heading'");

  auto* ilqg_cmd = app.add_subcommand("ilqg", "policy search for one pose");
  add_common(ilqg_cmd);
  ilqg_cmd->add_option("--scene", scene, "scene file (else from config)");
  ilqg_cmd->add_option("--pose", pose, "easy | hard | 'x y heading'");
  ilqg_cmd->add_option("--cost", cost_kind, "reference | goal");

  auto* pretrain_cmd = app.add_subcommand("pretrain", "aux data + pre-training");
  add_common(pretrain_cmd);

  auto* clone_cmd = app.add_subcommand("clone", "behavioral cloning");
  add_common(clone_cmd);
  clone_cmd->add_option("--data", data_file, "clone dataset (jsonl)")->required();
  clone_cmd->add_option("--init", init_checkpoint, "initial checkpoint");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a policy checkpoint");
  add_common(eval_cmd);
  eval_cmd->add_option("--scene", scene, "scene file (else --config)");
  eval_cmd->add_option("--policy", policy_file, "policy checkpoint")->required();
  eval_cmd->add_option("--pose", pose, "easy | hard | 'x y heading'");
  eval_cmd->add_flag("--noise,!--no-noise", noise_on, "observation noise");

  auto* t1 = app.add_subcommand("table1", "fixed-pose success rates");
  add_common(t1);
  t1->add_flag("--check", check, "exit nonzero if thresholds missed");
  t1->add_option("--jobs", jobs, "parallel cells");

  auto* t2 = app.add_subcommand("table2", "sample complexity + warm start");
  add_common(t2);
  t2->add_flag("--check", check, "exit nonzero if thresholds missed");
  t2->add_option("--jobs", jobs, "parallel cells");

  auto* t3 = app.add_subcommand("table3", "generalization experiment");
  add_common(t3);
  t3->add_flag("--check", check, "exit nonzero if thresholds missed");
  t3->add_option("--jobs", jobs, "parallel cells");

  CLI11_PARSE(app, argc, argv);

  try {
    if (plan_cmd->parsed()) return cmd_plan(config, seed, out, pose);
    if (ilqg_cmd->parsed())
      return cmd_ilqg(config, seed, out, scene, pose, cost_kind);
    if (pretrain_cmd->parsed()) return cmd_pretrain(config, seed, out);
    if (clone_cmd->parsed())
      return cmd_clone(config, seed, out, data_file, init_checkpoint);
    if (eval_cmd->parsed())
      return cmd_eval(config, seed, out, scene, policy_file, pose, noise_on);
    if (t1->parsed()) return cmd_table12(config, seed, out, check, false, jobs);
    if (t2->parsed()) return cmd_table12(config, seed, out, check, true, jobs);
    if (t3->parsed()) return cmd_table3(config, seed, out, check, jobs);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  }
  return 0;
}
