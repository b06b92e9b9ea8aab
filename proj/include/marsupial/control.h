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

#ifndef MARSUPIAL_CONTROL_H_
#define MARSUPIAL_CONTROL_H_

#include <array>
#include <string>
#include <vector>

#include "marsupial/geometry.h"
#include "marsupial/sensors.h"
#include "marsupial/world.h"

namespace marsupial {

// Clamped B-spline over t in [0, duration].
struct BSpline {
  int degree = 3;
  std::vector<Vec3> control_points;
  std::vector<double> knots;
  double duration = 1.0;
};

struct SplineSample {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
};

/// Gains and limits of a discrete PID loop. The integral accumulates
/// error * dt and is clamped to [i_min, i_max]; the output is clamped to
/// [out_min, out_max].
struct PidGains {
  double kp = 0.0;
  double ki = 0.0;
  double kd = 0.0;
  double i_min = -1.0;
  double i_max = 1.0;
  double out_min = -1.0;
  double out_max = 1.0;
};

struct PidState {
  double integral = 0.0;
  double prev_error = 0.0;
  bool initialized = false;
};

struct PidStepResult {
  double output = 0.0;
  PidState state;
  bool error_flagged = false;
};

struct ArmCommand {
  double front_angle = 0.0;
  double rear_angle = 0.0;
  bool restricted = false;
};

struct VelocityCommand {
  Vec3 linear = Vec3::Zero();
  double yaw_rate = 0.0;
};

struct ArmParams {
  double lookahead = 0.1;
  double default_angle = 0.0;
  double descent_tolerance = deg2rad(3.0);
  double half_width = 0.165;
};

// Default loops, tuned to the desk-scale plant.
PidGains default_winch_gains();
PidGains default_tracking_gains();

// Waypoints become the control points of a clamped uniform spline. With
// fewer than degree + 1 waypoints the degree drops to count - 1.
BSpline bspline_from_waypoints(const std::vector<Vec3>& waypoints, int degree, double duration,
                               std::vector<std::string>* warnings = nullptr);

// de Boor evaluation; t outside [0, duration] is clamped with a warning.
SplineSample bspline_eval(const BSpline& spline, double t,
                          std::vector<std::string>* warnings = nullptr);

PidStepResult pid_step(const PidState& state, const PidGains& gains, double error, double dt);

// Feedforward spline velocity plus per-axis PID on position error, clamped
// to the UAV speed limit. `states` carries the three loops between calls.
VelocityCommand track_trajectory(const UavState& uav, const BSpline& spline, double t,
                                 const std::array<PidGains, 3>& gains,
                                 std::array<PidState, 3>& states, double dt);

struct WinchCommand {
  double correction = 0.0;  // PID output on the rate error
  double actuator = 0.0;    // target + correction, clamped to the motor limit
  PidState state;
  bool error_flagged = false;
};

WinchCommand winch_rate_controller(double target_rate, double measured_rate,
                                   const PidState& state, const PidGains& gains, double dt,
                                   double actuator_limit);

// Terrain-adaptive arm angles from a patch expressed in the vehicle frame
// (x forward, z up, origin at the chassis bottom-center).
ArmCommand compute_arm_angles(const PointCloud& terrain_patch, const UgvState& ugv,
                              const ArmParams& params = {},
                              std::vector<std::string>* warnings = nullptr);

// Image-space alignment: drives the target pixel toward the principal point.
VelocityCommand servo_alignment(const Vec2& target_px, const CameraIntrinsics& intrinsics,
                                double altitude, double gain, double camera_yaw = 0.0);

}  // namespace marsupial

#endif  // MARSUPIAL_CONTROL_H_
