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

#include "marsupial/control.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "marsupial/perception.h"

namespace marsupial {

namespace {

// Knot span index k with knots[k] <= t < knots[k + 1], clamped so the last
// parameter value falls in the final non-empty span.
int find_span(const std::vector<double>& knots, int degree, int n_ctrl, double t) {
  if (t >= knots[n_ctrl]) return n_ctrl - 1;
  auto it = std::upper_bound(knots.begin() + degree, knots.begin() + n_ctrl + 1, t);
  return static_cast<int>(it - knots.begin()) - 1;
}

Vec3 de_boor(const std::vector<Vec3>& ctrl, const std::vector<double>& knots, int degree,
             double t) {
  const int n = static_cast<int>(ctrl.size());
  const int k = find_span(knots, degree, n, t);
  std::vector<Vec3> d(degree + 1);
  for (int j = 0; j <= degree; ++j) d[j] = ctrl[j + k - degree];
  for (int r = 1; r <= degree; ++r) {
    for (int j = degree; j >= r; --j) {
      const double lo = knots[j + k - degree];
      const double hi = knots[j + 1 + k - r];
      const double a = hi > lo ? (t - lo) / (hi - lo) : 0.0;
      d[j] = (1.0 - a) * d[j - 1] + a * d[j];
    }
  }
  return d[degree];
}

}  // namespace

PidGains default_winch_gains() {
  PidGains g;
  g.kp = 2.0;
  g.ki = 0.5;
  g.kd = 0.0;
  g.i_min = -0.2;
  g.i_max = 0.2;
  g.out_min = -0.5;
  g.out_max = 0.5;
  return g;
}

PidGains default_tracking_gains() {
  PidGains g;
  g.kp = 1.2;
  g.ki = 0.0;
  g.kd = 0.1;
  g.i_min = -1.0;
  g.i_max = 1.0;
  g.out_min = -2.0;
  g.out_max = 2.0;
  return g;
}

BSpline bspline_from_waypoints(const std::vector<Vec3>& waypoints, int degree, double duration,
                               std::vector<std::string>* warnings) {
  if (waypoints.size() < 2) throw std::invalid_argument("spline needs at least 2 waypoints");
  if (degree < 1) throw std::invalid_argument("spline degree must be >= 1");
  if (!(duration > 0.0)) throw std::invalid_argument("spline duration must be > 0");
  const int n = static_cast<int>(waypoints.size());
  if (n < degree + 1) {
    if (warnings) warnings->push_back("spline degree lowered to " + std::to_string(n - 1));
    degree = n - 1;
  }
  BSpline s;
  s.degree = degree;
  s.control_points = waypoints;
  s.duration = duration;
  s.knots.assign(n + degree + 1, 0.0);
  const int segments = n - degree;
  for (int j = 0; j <= segments; ++j)
    s.knots[degree + j] = duration * static_cast<double>(j) / segments;
  for (int j = n; j < n + degree + 1; ++j) s.knots[j] = duration;
  return s;
}

SplineSample bspline_eval(const BSpline& s, double t, std::vector<std::string>* warnings) {
  if (t < 0.0 || t > s.duration) {
    if (warnings) warnings->push_back("spline parameter clamped into domain");
    t = std::clamp(t, 0.0, s.duration);
  }
  SplineSample out;
  out.position = de_boor(s.control_points, s.knots, s.degree, t);

  // Derivative spline: degree p-1 over the inner knots.
  const int n = static_cast<int>(s.control_points.size());
  const int p = s.degree;
  std::vector<Vec3> q(n - 1);
  for (int i = 0; i < n - 1; ++i) {
    const double span = s.knots[i + p + 1] - s.knots[i + 1];
    q[i] = span > 0.0 ? Vec3(p * (s.control_points[i + 1] - s.control_points[i]) / span)
                      : Vec3::Zero();
  }
  const std::vector<double> inner(s.knots.begin() + 1, s.knots.end() - 1);
  out.velocity = de_boor(q, inner, p - 1, t);
  return out;
}

PidStepResult pid_step(const PidState& state, const PidGains& g, double error, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("pid_step requires dt > 0");
  PidStepResult r;
  if (!std::isfinite(error)) {
    r.state = state;
    r.error_flagged = true;
    return r;
  }
  r.state = state;
  r.state.integral = std::clamp(state.integral + error * dt, g.i_min, g.i_max);
  const double derivative = state.initialized ? (error - state.prev_error) / dt : 0.0;
  r.state.prev_error = error;
  r.state.initialized = true;
  r.output = std::clamp(g.kp * error + g.ki * r.state.integral + g.kd * derivative,
                        g.out_min, g.out_max);
  return r;
}

VelocityCommand track_trajectory(const UavState& uav, const BSpline& spline, double t,
                                 const std::array<PidGains, 3>& gains,
                                 std::array<PidState, 3>& states, double dt) {
  const SplineSample ref = bspline_eval(spline, t);
  const Vec3 error = ref.position - uav.pose.position;
  VelocityCommand cmd;
  cmd.linear = ref.velocity;
  for (int axis = 0; axis < 3; ++axis) {
    const PidStepResult r = pid_step(states[axis], gains[axis], error[axis], dt);
    states[axis] = r.state;
    cmd.linear[axis] += r.output;
  }
  const double speed = cmd.linear.norm();
  if (speed > uav.max_speed) cmd.linear *= uav.max_speed / speed;
  return cmd;
}

WinchCommand winch_rate_controller(double target_rate, double measured_rate,
                                   const PidState& state, const PidGains& gains, double dt,
                                   double actuator_limit) {
  WinchCommand cmd;
  const PidStepResult r = pid_step(state, gains, target_rate - measured_rate, dt);
  cmd.state = r.state;
  cmd.error_flagged = r.error_flagged;
  cmd.correction = r.output;
  const double base = std::isfinite(target_rate) ? target_rate : 0.0;
  cmd.actuator = std::clamp(base + r.output, -actuator_limit, actuator_limit);
  return cmd;
}

ArmCommand compute_arm_angles(const PointCloud& patch, const UgvState& ugv,
                              const ArmParams& params, std::vector<std::string>* warnings) {
  ArmCommand cmd;
  cmd.restricted = ugv.carrying_payload;
  cmd.front_angle = params.default_angle;
  cmd.rear_angle = params.default_angle;
  if (patch.empty()) {
    if (warnings) warnings->push_back("compute_arm_angles: empty terrain patch");
    return cmd;
  }
  double peak = 0.0;
  for (const Vec3& p : patch.points) {
    if (p.x() > 0.0 && p.x() <= params.lookahead && std::abs(p.y()) <= params.half_width)
      peak = std::max(peak, p.z());
  }
  double slope = 0.0;
  try {
    const Plane plane = fit_plane(patch);
    slope = std::atan2(-plane.normal.x(), plane.normal.z());
  } catch (const DegenerateInputError&) {
    if (warnings) warnings->push_back("compute_arm_angles: degenerate patch, slope taken as 0");
  }
  cmd.front_angle = params.default_angle + std::atan2(peak, params.lookahead) + slope;
  if (slope < -params.descent_tolerance) cmd.rear_angle = params.default_angle - slope;
  if (cmd.restricted) {
    cmd.front_angle = std::clamp(cmd.front_angle, 0.0, kPi / 2.0);
    cmd.rear_angle = std::clamp(cmd.rear_angle, 0.0, kPi / 2.0);
  } else {
    cmd.front_angle = wrap_angle(cmd.front_angle);
    cmd.rear_angle = wrap_angle(cmd.rear_angle);
  }
  return cmd;
}

VelocityCommand servo_alignment(const Vec2& target_px, const CameraIntrinsics& in,
                                double altitude, double gain, double camera_yaw) {
  if (!(altitude > 0.0)) throw std::invalid_argument("servo_alignment requires altitude > 0");
  const Vec3 cam(gain * altitude * (target_px.x() - in.cx) / in.fx,
                 gain * altitude * (target_px.y() - in.cy) / in.fy, 0.0);
  VelocityCommand cmd;
  cmd.linear = camera_rotation(camera_yaw) * cam;
  cmd.linear.z() = 0.0;
  return cmd;
}

}  // namespace marsupial
