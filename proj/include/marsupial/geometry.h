// Copyright 2026 The Marsupial Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MARSUPIAL_GEOMETRY_H_
#define MARSUPIAL_GEOMETRY_H_

#include <cmath>
#include <numbers>

#include <Eigen/Core>

namespace marsupial {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kGravity = 9.81;

// Wraps an angle into [-pi, pi).
inline double wrap_angle(double a) {
  double w = std::fmod(a + kPi, 2.0 * kPi);
  if (w < 0.0) w += 2.0 * kPi;
  double r = w - kPi;
  return r >= kPi ? -kPi : r;
}

inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

inline bool all_finite(const Vec3& v) {
  return std::isfinite(v.x()) && std::isfinite(v.y()) && std::isfinite(v.z());
}

struct Pose {
  Vec3 position = Vec3::Zero();
  double yaw = 0.0;
  // Upright vs flipped; meaningful for the ground vehicle only.
  bool up_flag = true;
};

// Rotation of a body-frame horizontal offset into the world frame.
inline Vec3 rotate_yaw(const Vec3& v, double yaw) {
  const double c = std::cos(yaw), s = std::sin(yaw);
  return {c * v.x() - s * v.y(), s * v.x() + c * v.y(), v.z()};
}

}  // namespace marsupial

#endif  // MARSUPIAL_GEOMETRY_H_
