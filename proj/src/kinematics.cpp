#include "planarm/kinematics.hpp"

#include <cmath>

namespace planarm {

void ArmModel::validate() const {
  if (n_links < 2) throw Error("ArmModel: n_links must be >= 2");
  auto check_len = [&](const Vec& v, const char* name) {
    if (v.size() != n_links)
      throw DimensionError(std::string("ArmModel: ") + name + " size mismatch");
  };
  check_len(link_lengths, "link_lengths");
  check_len(link_masses, "link_masses");
  check_len(link_inertias, "link_inertias");
  check_len(armature, "armature");
  check_len(joint_damping, "joint_damping");
  check_len(torque_limits, "torque_limits");
  if ((armature.array() < 0).any())
    throw Error("ArmModel: armature must be nonnegative");
  if ((link_lengths.array() <= 0).any() || (link_masses.array() <= 0).any() ||
      (link_inertias.array() <= 0).any())
    throw Error("ArmModel: lengths, masses, inertias must be positive");
  if ((torque_limits.array() <= 0).any())
    throw Error("ArmModel: torque limits must be positive");
  if (link_radius <= 0) throw Error("ArmModel: link_radius must be positive");
}

Vec JointState::concat() const {
  Vec out(angles.size() + velocities.size());
  out << angles, velocities;
  return out;
}

ArmModel default_arm() {
  ArmModel m;
  m.n_links = 3;
  m.link_lengths = (Vec(3) << 0.5, 0.4, 0.3).finished();
  m.link_masses = (Vec(3) << 2.0, 1.5, 1.0).finished();
  m.link_inertias =
      (m.link_masses.array() * m.link_lengths.array().square() / 12.0).matrix();
  m.armature = (Vec(3) << 0.5, 0.2, 0.05).finished();
  m.joint_damping = (Vec(3) << 1.0, 0.5, 0.15).finished();
  m.torque_limits = (Vec(3) << 25.0, 15.0, 8.0).finished();
  m.gravity = 0.0;
  m.link_radius = 0.02;
  return m;
}

namespace kin {

namespace {

void check_state(const ArmModel& model, const JointState& state) {
  if (state.angles.size() != model.n_links ||
      state.velocities.size() != model.n_links)
    throw DimensionError("joint state dimension does not match arm model");
}

// alpha(i, j): lever of joint-frame angle j on link i's CoM position.
double lever(const ArmModel& m, int i, int j) {
  if (j < i) return m.link_lengths[j];
  if (j == i) return 0.5 * m.link_lengths[i];
  return 0.0;
}

}  // namespace

TaskPose forward_kinematics(const ArmModel& model, const JointState& state) {
  check_state(model, state);
  const int n = model.n_links;
  TaskPose out;
  double c = 0.0, cd = 0.0;
  for (int i = 0; i < n; ++i) {
    c += state.angles[i];
    cd += state.velocities[i];
    const double l = model.link_lengths[i];
    out.position += l * Vec2(std::cos(c), std::sin(c));
    out.linear_velocity += l * cd * Vec2(-std::sin(c), std::cos(c));
  }
  out.heading = c;
  out.angular_velocity = cd;
  return out;
}

Mat jacobian(const ArmModel& model, const Vec& angles) {
  if (angles.size() != model.n_links)
    throw DimensionError("jacobian: angle dimension mismatch");
  const int n = model.n_links;
  Vec cum(n);
  double c = 0.0;
  for (int i = 0; i < n; ++i) {
    c += angles[i];
    cum[i] = c;
  }
  Mat J = Mat::Zero(3, n);
  // Column k accumulates the tangents of all links at or beyond joint k.
  for (int k = 0; k < n; ++k) {
    for (int i = k; i < n; ++i) {
      const double l = model.link_lengths[i];
      J(0, k) += -l * std::sin(cum[i]);
      J(1, k) += l * std::cos(cum[i]);
    }
    J(2, k) = 1.0;
  }
  return J;
}

DynamicsTerms dynamics_terms(const ArmModel& model, const JointState& state) {
  check_state(model, state);
  const int n = model.n_links;

  // Work in absolute link angles c = L q (L = lower-triangular ones): the
  // kinetic energy is 1/2 cdot^T H(c) cdot with
  //   H_jk = beta_jk cos(c_j - c_k) + delta_jk I_j,
  //   beta_jk = sum_{i >= max(j,k)} m_i lever(i,j) lever(i,k).
  Vec cum(n), cumd(n);
  double c = 0.0, cd = 0.0;
  for (int i = 0; i < n; ++i) {
    c += state.angles[i];
    cd += state.velocities[i];
    cum[i] = c;
    cumd[i] = cd;
  }

  Mat beta = Mat::Zero(n, n);
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k)
      for (int i = std::max(j, k); i < n; ++i)
        beta(j, k) += model.link_masses[i] * lever(model, i, j) * lever(model, i, k);

  Mat H(n, n);
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k)
      H(j, k) = beta(j, k) * std::cos(cum[j] - cum[k]) +
                (j == k ? model.link_inertias[j] : 0.0);

  // Coriolis/centrifugal in absolute coordinates:
  //   cor_j = sum_k beta_jk sin(c_j - c_k) cdot_k^2
  Vec cor = Vec::Zero(n);
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k)
      cor[j] += beta(j, k) * std::sin(cum[j] - cum[k]) * cumd[k] * cumd[k];

  // Gravity: V = g sum_j gamma_j sin(c_j), gamma_j = l_j sum_{i>j} m_i + a_j m_j.
  Vec grav = Vec::Zero(n);
  if (model.gravity != 0.0) {
    for (int j = 0; j < n; ++j) {
      double gamma = 0.5 * model.link_lengths[j] * model.link_masses[j];
      for (int i = j + 1; i < n; ++i)
        gamma += model.link_lengths[j] * model.link_masses[i];
      grav[j] = model.gravity * gamma * std::cos(cum[j]);
    }
  }

  // Map back to joint coordinates: M = L^T H L, bias = L^T (cor + grav) + D qd.
  Mat Ltri = Mat::Zero(n, n);
  for (int r = 0; r < n; ++r)
    for (int cc = 0; cc <= r; ++cc) Ltri(r, cc) = 1.0;

  DynamicsTerms out;
  out.mass_matrix = Ltri.transpose() * H * Ltri;
  out.mass_matrix += model.armature.asDiagonal();
  out.mass_matrix = 0.5 * (out.mass_matrix + out.mass_matrix.transpose());
  out.bias = Ltri.transpose() * (cor + grav) +
             (model.joint_damping.array() * state.velocities.array()).matrix();
  return out;
}

double total_energy(const ArmModel& model, const JointState& state) {
  check_state(model, state);
  const int n = model.n_links;
  Vec cum(n), cumd(n);
  double c = 0.0, cd = 0.0;
  for (int i = 0; i < n; ++i) {
    c += state.angles[i];
    cd += state.velocities[i];
    cum[i] = c;
    cumd[i] = cd;
  }
  double kinetic = 0.0;
  double potential = 0.0;
  double base_y = 0.0;
  for (int i = 0; i < n; ++i) {
    // CoM velocity of link i.
    Vec2 v = Vec2::Zero();
    for (int j = 0; j < i; ++j)
      v += model.link_lengths[j] * cumd[j] *
           Vec2(-std::sin(cum[j]), std::cos(cum[j]));
    v += 0.5 * model.link_lengths[i] * cumd[i] *
         Vec2(-std::sin(cum[i]), std::cos(cum[i]));
    kinetic += 0.5 * model.link_masses[i] * v.squaredNorm() +
               0.5 * model.link_inertias[i] * cumd[i] * cumd[i] +
               0.5 * model.armature[i] * state.velocities[i] * state.velocities[i];
    const double y_com = base_y + 0.5 * model.link_lengths[i] * std::sin(cum[i]);
    potential += model.gravity * model.link_masses[i] * y_com;
    base_y += model.link_lengths[i] * std::sin(cum[i]);
  }
  return kinetic + potential;
}

Vec moment_gains(const ArmModel& model) {
  const int n = model.n_links;
  Vec g(n);
  for (int j = 0; j < n; ++j) {
    double inertia = 0.0;
    double arm = 0.0;  // distance from joint j to CoM of link i, straight pose
    for (int i = j; i < n; ++i) {
      const double d = arm + 0.5 * model.link_lengths[i];
      inertia += model.link_inertias[i] + model.link_masses[i] * d * d;
      arm += model.link_lengths[i];
    }
    g[j] = inertia + model.armature[j];
  }
  return g / g.maxCoeff();
}

}  // namespace kin
}  // namespace planarm
