#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>

namespace slim {

using Vec3 = Eigen::Vector3d;

// Planar tabletop with one point end-effector and one cube. Distances are in
// meters, angles in radians, velocities in meters per step. The table surface
// is the plane z = 0 and the table is centered at the origin.
struct EnvConfig {
  double table_half_extent = 0.30;
  double init_area_half = 0.12;
  double cube_side = 0.05;
  Vec3 ee_home{0.0, 0.0, 0.20};
  double ee_home_yaw = 0.0;
  double max_step_translation = 0.02;
  double max_step_yaw = 0.1;
  double grasp_radius = 0.03;
  double z_max = 0.5;
  double ee_vel_max = 0.04;
  int episode_len = 200;

  // Throws std::invalid_argument when an invariant does not hold.
  void validate() const;

  double rest_height() const { return 0.5 * cube_side; }
};

struct State {
  Vec3 ee_pos = Vec3::Zero();
  double ee_yaw = 0.0;
  bool gripper_closed = false;
  Vec3 obj_pos = Vec3::Zero();
  double obj_yaw = 0.0;
  Vec3 ee_vel = Vec3::Zero();
  Vec3 obj_vel = Vec3::Zero();
  bool grasped = false;
  int t = 0;

  bool operator==(const State&) const = default;
};

struct Action {
  // dx, dy, dz, dyaw in [-1, 1] before scaling by the per-step limits.
  Eigen::Vector4d delta = Eigen::Vector4d::Zero();
  bool gripper = false;  // true = close
};

inline constexpr int kObsDim = 18;
using Observation = Eigen::Matrix<double, kObsDim, 1>;

// Wraps an angle to [-pi, pi).
double wrap_angle(double a);

State reset(std::uint64_t seed, const EnvConfig& cfg);

// Advances one step. Throws std::logic_error when s.t == cfg.episode_len.
State step(const State& s, const Action& a, const EnvConfig& cfg);

bool is_safe(const State& s, const EnvConfig& cfg);

// ee_pos(3), sin/cos ee_yaw(2), gripper(1), obj_pos(3), sin/cos obj_yaw(2),
// ee_vel(3), obj_vel(3), grasped(1).
Observation observe(const State& s);

// Inclusive bounds of the end-effector workspace box.
Vec3 workspace_lo(const EnvConfig& cfg);
Vec3 workspace_hi(const EnvConfig& cfg);

}  // namespace slim
