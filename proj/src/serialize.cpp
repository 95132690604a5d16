#include "planarm/serialize.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace planarm::ser {

using ordered_json = nlohmann::ordered_json;

namespace {

ordered_json vec_json(const Vec& v) {
  ordered_json a = ordered_json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

ordered_json vec3_json(const Vec3& v) {
  return ordered_json::array({v.x(), v.y(), v.z()});
}

Vec json_vec(const ordered_json& a) {
  Vec v(a.size());
  for (size_t i = 0; i < a.size(); ++i) v[i] = a[i].get<double>();
  return v;
}

Vec3 json_vec3(const ordered_json& a) {
  return Vec3(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string rollout_jsonl(const sim::Rollout& rollout) {
  std::ostringstream out;
  const int T = rollout.horizon();
  for (int t = 0; t <= T; ++t) {
    ordered_json rec;
    rec["t"] = t;
    rec["angles"] = vec_json(rollout.states[t].angles);
    rec["velocities"] = vec_json(rollout.states[t].velocities);
    rec["pose"] = vec3_json(rollout.task_poses[t].pose3());
    rec["pose_vel"] = vec3_json(rollout.task_poses[t].velocity3());
    rec["action"] = (t < T) ? vec_json(rollout.actions[t]) : ordered_json(nullptr);
    rec["cost"] = (t < T) ? ordered_json(rollout.costs[t]) : ordered_json(nullptr);
    out << rec.dump() << "\n";
  }
  return out.str();
}

std::string reference_jsonl(const plan::ReferencePath& ref) {
  std::ostringstream out;
  ordered_json header;
  header["T_traj"] = ref.T_traj;
  header["T_final"] = ref.T_final;
  out << header.dump() << "\n";
  for (int t = 0; t < ref.length(); ++t) {
    ordered_json rec;
    rec["t"] = t + 1;
    rec["task"] = vec3_json(ref.task_points[t]);
    rec["joint"] = vec_json(ref.joint_points[t]);
    out << rec.dump() << "\n";
  }
  return out.str();
}

plan::ReferencePath parse_reference_jsonl(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  plan::ReferencePath ref;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const ordered_json rec = ordered_json::parse(line);
    if (!have_header) {
      ref.T_traj = rec.at("T_traj").get<int>();
      ref.T_final = rec.at("T_final").get<int>();
      have_header = true;
      continue;
    }
    ref.task_points.push_back(json_vec3(rec.at("task")));
    ref.joint_points.push_back(json_vec(rec.at("joint")));
  }
  if (!have_header || ref.length() != ref.T_traj + ref.T_final)
    throw Error("parse_reference_jsonl: malformed reference file");
  return ref;
}

std::string clone_dataset_jsonl(const nn::CloneDataset& dataset) {
  std::ostringstream out;
  for (size_t i = 0; i < dataset.references.size(); ++i) {
    const auto& ref = dataset.references[i];
    ordered_json rec;
    rec["type"] = "reference";
    rec["id"] = i;
    rec["T_traj"] = ref.T_traj;
    rec["T_final"] = ref.T_final;
    ordered_json task = ordered_json::array();
    ordered_json joint = ordered_json::array();
    for (int t = 0; t < ref.length(); ++t) {
      task.push_back(vec3_json(ref.task_points[t]));
      joint.push_back(vec_json(ref.joint_points[t]));
    }
    rec["task"] = task;
    rec["joint"] = joint;
    out << rec.dump() << "\n";
  }
  for (const auto& s : dataset.samples) {
    ordered_json rec;
    rec["type"] = "sample";
    rec["ref"] = s.reference_index;
    rec["t"] = s.t;
    rec["angles"] = vec_json(s.observed.angles);
    rec["velocities"] = vec_json(s.observed.velocities);
    rec["pose"] = vec3_json(s.observed_pose.pose3());
    rec["pose_vel"] = vec3_json(s.observed_pose.velocity3());
    rec["action"] = vec_json(s.target_action);
    out << rec.dump() << "\n";
  }
  return out.str();
}

nn::CloneDataset parse_clone_dataset_jsonl(const std::string& text) {
  nn::CloneDataset dataset;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const ordered_json rec = ordered_json::parse(line);
    const std::string type = rec.at("type").get<std::string>();
    if (type == "reference") {
      plan::ReferencePath ref;
      ref.T_traj = rec.at("T_traj").get<int>();
      ref.T_final = rec.at("T_final").get<int>();
      for (const auto& p : rec.at("task")) ref.task_points.push_back(json_vec3(p));
      for (const auto& p : rec.at("joint")) ref.joint_points.push_back(json_vec(p));
      dataset.references.push_back(std::move(ref));
    } else if (type == "sample") {
      nn::CloneSample s;
      s.reference_index = rec.at("ref").get<int>();
      s.t = rec.at("t").get<int>();
      s.observed.angles = json_vec(rec.at("angles"));
      s.observed.velocities = json_vec(rec.at("velocities"));
      const Vec3 pose = json_vec3(rec.at("pose"));
      const Vec3 vel = json_vec3(rec.at("pose_vel"));
      s.observed_pose.position = pose.head<2>();
      s.observed_pose.heading = pose.z();
      s.observed_pose.linear_velocity = vel.head<2>();
      s.observed_pose.angular_velocity = vel.z();
      s.target_action = json_vec(rec.at("action"));
      dataset.samples.push_back(std::move(s));
    } else {
      throw Error("parse_clone_dataset_jsonl: unknown record type " + type);
    }
  }
  return dataset;
}

namespace {

void write_matrix(std::ostringstream& out, const Mat& m) {
  for (int r = 0; r < m.rows(); ++r) {
    for (int c = 0; c < m.cols(); ++c) {
      if (c) out << " ";
      out << format_double(m(r, c));
    }
    out << "\n";
  }
}

Mat read_matrix(std::istringstream& in, int rows, int cols) {
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      if (!(in >> m(r, c))) throw Error("checkpoint: truncated matrix");
  return m;
}

}  // namespace

std::string tvlg_text(const ilqg::TvlgPolicy& policy) {
  std::ostringstream out;
  out << "tvlg 1\n";
  out << "T " << policy.horizon() << " state_dim " << policy.state_dim()
      << " action_dim " << policy.action_dim() << "\n";
  for (int t = 0; t < policy.horizon(); ++t) {
    out << "step " << t << "\n";
    out << "K\n";
    write_matrix(out, policy.K[t]);
    out << "k\n";
    write_matrix(out, policy.k[t].transpose());
    out << "Sigma\n";
    write_matrix(out, policy.Sigma[t]);
  }
  return out.str();
}

ilqg::TvlgPolicy parse_tvlg_text(const std::string& text) {
  std::istringstream in(text);
  std::string tag;
  int version = 0;
  in >> tag >> version;
  if (tag != "tvlg" || version != 1)
    throw Error("parse_tvlg_text: not a tvlg-1 checkpoint");
  int T = 0, nx = 0, nu = 0;
  std::string key;
  in >> key >> T >> key >> nx >> key >> nu;
  ilqg::TvlgPolicy policy;
  for (int t = 0; t < T; ++t) {
    int step = -1;
    in >> key >> step;
    if (key != "step" || step != t) throw Error("parse_tvlg_text: bad step header");
    in >> key;  // K
    policy.K.push_back(read_matrix(in, nu, nx));
    in >> key;  // k
    policy.k.push_back(read_matrix(in, 1, nu).transpose());
    in >> key;  // Sigma
    policy.Sigma.push_back(read_matrix(in, nu, nu));
  }
  policy.check();
  return policy;
}

std::string attention_text(const nn::AttentionPolicyParams& params) {
  std::ostringstream out;
  out << "attention_policy 1\n";
  out << "k " << params.k << "\n";
  for (const auto* net : {&params.attention, &params.action}) {
    out << (net == &params.attention ? "attention_mlp" : "action_mlp")
        << " layers " << net->layers() << "\n";
    for (int l = 0; l < net->layers(); ++l) {
      out << "layer " << l << " rows " << net->W[l].rows() << " cols "
          << net->W[l].cols() << "\n";
      out << "W\n";
      write_matrix(out, net->W[l]);
      out << "b\n";
      write_matrix(out, net->b[l].transpose());
    }
  }
  return out.str();
}

nn::AttentionPolicyParams parse_attention_text(const std::string& text) {
  std::istringstream in(text);
  std::string tag;
  int version = 0;
  in >> tag >> version;
  if (tag != "attention_policy" || version != 1)
    throw Error("parse_attention_text: not an attention_policy-1 checkpoint");
  nn::AttentionPolicyParams params;
  std::string key;
  in >> key >> params.k;
  for (auto* net : {&params.attention, &params.action}) {
    int layers = 0;
    in >> key >> key >> layers;  // name, "layers", n
    for (int l = 0; l < layers; ++l) {
      int idx = 0, rows = 0, cols = 0;
      in >> key >> idx >> key >> rows >> key >> cols;
      in >> key;  // W
      net->W.push_back(read_matrix(in, rows, cols));
      in >> key;  // b
      net->b.push_back(read_matrix(in, 1, rows).transpose());
    }
  }
  return params;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("write_file: cannot open " + path);
  out << content;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("read_file: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace planarm::ser
