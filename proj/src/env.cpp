#include "slim/env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace slim {

void EnvConfig::validate() const {
  if (!(table_half_extent > 0 && init_area_half > 0 && cube_side > 0 &&
        max_step_translation > 0 && max_step_yaw > 0 && grasp_radius > 0 &&
        z_max > 0 && ee_vel_max > 0 && episode_len > 0))
    throw std::invalid_argument("env: all extents must be positive");
  if (grasp_radius >= cube_side)
    throw std::invalid_argument("env: grasp_radius must be smaller than cube_side");
  if (init_area_half >= table_half_extent)
    throw std::invalid_argument("env: init area must lie inside the table");
  if (ee_vel_max < max_step_translation)
    throw std::invalid_argument("env: ee_vel_max must be >= max_step_translation");
  const Vec3 lo = workspace_lo(*this), hi = workspace_hi(*this);
  if ((ee_home.array() < lo.array()).any() || (ee_home.array() > hi.array()).any())
    throw std::invalid_argument("env: ee_home outside the workspace");
}

double wrap_angle(double a) {
  if (a >= -std::numbers::pi && a < std::numbers::pi) return a;
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(a + std::numbers::pi, two_pi);
  if (w < 0) w += two_pi;
  return w - std::numbers::pi;
}

Vec3 workspace_lo(const EnvConfig& cfg) {
  return {-cfg.table_half_extent, -cfg.table_half_extent, 0.0};
}

Vec3 workspace_hi(const EnvConfig& cfg) {
  return {cfg.table_half_extent, cfg.table_half_extent, cfg.z_max};
}

State reset(std::uint64_t seed, const EnvConfig& cfg) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pos(-cfg.init_area_half, cfg.init_area_half);
  std::uniform_real_distribution<double> yaw(-std::numbers::pi, std::numbers::pi);
  State s;
  s.ee_pos = cfg.ee_home;
  s.ee_yaw = cfg.ee_home_yaw;
  s.obj_pos.x() = pos(rng);
  s.obj_pos.y() = pos(rng);
  s.obj_pos.z() = cfg.rest_height();
  s.obj_yaw = yaw(rng);
  return s;
}

namespace {

// Resolves contact between the end-effector and a free cube. An end-effector
// that enters from above is stopped on the top face; one that enters from the
// side pushes the cube out along the shallowest horizontal face normal.
void resolve_contact(const Vec3& prev_ee, Vec3& ee, Vec3& obj, double obj_yaw,
                     const EnvConfig& cfg) {
  const double h = cfg.rest_height();
  const double top = obj.z() + h;
  if (ee.z() >= top || ee.z() <= obj.z() - h) return;

  const double c = std::cos(obj_yaw), sn = std::sin(obj_yaw);
  const double dx = ee.x() - obj.x(), dy = ee.y() - obj.y();
  const double lx = c * dx + sn * dy;
  const double ly = -sn * dx + c * dy;
  if (std::abs(lx) >= h || std::abs(ly) >= h) return;

  if (prev_ee.z() >= top) {
    ee.z() = top;
    return;
  }
  // Cube moves away from the end-effector along the local axis of least depth.
  double px = 0.0, py = 0.0;
  const double depth_x = h - std::abs(lx);
  const double depth_y = h - std::abs(ly);
  if (depth_x <= depth_y)
    px = lx > 0 ? -depth_x : depth_x;
  else
    py = ly > 0 ? -depth_y : depth_y;
  obj.x() += c * px - sn * py;
  obj.y() += sn * px + c * py;
}

}  // namespace

State step(const State& s, const Action& a, const EnvConfig& cfg) {
  if (s.t >= cfg.episode_len) throw std::logic_error("env: step called on a terminal state");

  State n = s;
  const Vec3 lo = workspace_lo(cfg), hi = workspace_hi(cfg);
  const double rest = cfg.rest_height();

  // Gripper first: closing attaches, opening releases.
  n.gripper_closed = a.gripper;
  if (s.grasped && !a.gripper) {
    n.grasped = false;
  } else if (!s.grasped && a.gripper &&
             (s.ee_pos - s.obj_pos).norm() <= cfg.grasp_radius) {
    n.grasped = true;
  }

  Vec3 delta = a.delta.head<3>().cwiseMax(-1.0).cwiseMin(1.0) * cfg.max_step_translation;
  const double dyaw = std::clamp(a.delta[3], -1.0, 1.0) * cfg.max_step_yaw;

  Vec3 target = (s.ee_pos + delta).cwiseMax(lo).cwiseMin(hi);
  n.ee_yaw = wrap_angle(s.ee_yaw + dyaw);

  if (n.grasped) {
    const Vec3 offset = s.obj_pos - s.ee_pos;
    // Keep the carried cube above the table.
    target.z() = std::max(target.z(), rest - offset.z());
    target = target.cwiseMin(hi);
    n.ee_pos = target;
    n.obj_pos = target + offset;
    n.obj_yaw = wrap_angle(s.obj_yaw + dyaw);
  } else {
    n.ee_pos = target;
    n.obj_pos.z() = rest;
    resolve_contact(s.ee_pos, n.ee_pos, n.obj_pos, n.obj_yaw, cfg);
  }

  n.ee_vel = n.ee_pos - s.ee_pos;
  n.obj_vel = n.obj_pos - s.obj_pos;
  n.t = s.t + 1;
  return n;
}

bool is_safe(const State& s, const EnvConfig& cfg) {
  const Vec3 lo = workspace_lo(cfg), hi = workspace_hi(cfg);
  if ((s.ee_pos.array() < lo.array()).any() || (s.ee_pos.array() > hi.array()).any())
    return false;
  if (s.ee_vel.norm() > cfg.ee_vel_max) return false;
  if (s.ee_pos.z() < 0.0) return false;
  if (std::abs(s.obj_pos.x()) > cfg.table_half_extent ||
      std::abs(s.obj_pos.y()) > cfg.table_half_extent)
    return false;
  return true;
}

Observation observe(const State& s) {
  Observation o;
  o << s.ee_pos, std::sin(s.ee_yaw), std::cos(s.ee_yaw), s.gripper_closed ? 1.0 : 0.0,
      s.obj_pos, std::sin(s.obj_yaw), std::cos(s.obj_yaw), s.ee_vel, s.obj_vel,
      s.grasped ? 1.0 : 0.0;
  return o;
}

}  // namespace slim
