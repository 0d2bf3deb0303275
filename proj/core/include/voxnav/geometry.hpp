#pragma once

#include <Eigen/Dense>
#include <cmath>

namespace voxnav {

using Vec3 = Eigen::Vector3d;
using Vec3i = Eigen::Vector3i;

// Rigid transform taking camera/body-frame points to world frame.
struct Pose {
  Vec3 position = Vec3::Zero();
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();

  Vec3 apply(const Vec3& p) const { return rotation * p + position; }

  // Frame composition: (a * b).apply(p) == a.apply(b.apply(p)).
  Pose operator*(const Pose& o) const {
    return {rotation * o.position + position, rotation * o.rotation};
  }

  static Pose identity() { return {}; }

  // Body frame: x forward, y left, z up; yaw about world z.
  static Pose from_xyz_yaw(const Vec3& position, double yaw) {
    Pose p;
    p.position = position;
    p.rotation = Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix();
    return p;
  }
};

// Axis-aligned world-space box, closed on both ends.
struct Aabb {
  Vec3 lower = Vec3::Zero();
  Vec3 upper = Vec3::Zero();

  bool contains(const Vec3& p) const {
    return (p.array() >= lower.array()).all() && (p.array() <= upper.array()).all();
  }
  bool intersects(const Aabb& o) const {
    return (lower.array() <= o.upper.array()).all() &&
           (o.lower.array() <= upper.array()).all();
  }
  Aabb intersection(const Aabb& o) const {
    return {lower.cwiseMax(o.lower), upper.cwiseMin(o.upper)};
  }
  Vec3 center() const { return 0.5 * (lower + upper); }
};

// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
  double r = std::fmod(a + M_PI, 2.0 * M_PI);
  if (r <= 0.0) r += 2.0 * M_PI;
  return r - M_PI;
}

}  // namespace voxnav
