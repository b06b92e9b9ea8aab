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

#include <cmath>
#include <limits>
#include <memory>
#include <random>

#include <gtest/gtest.h>

#include "marsupial/control.h"
#include "oracles.h"

namespace marsupial {
namespace {

// ---- B-spline ---------------------------------------------------------------

TEST(BSplineFromWaypoints, TwoPointsIsLinear) {
  std::vector<std::string> warnings;
  const BSpline s = bspline_from_waypoints({Vec3(0, 0, 0), Vec3(2, 0, 0)}, 3, 2.0, &warnings);
  EXPECT_EQ(s.degree, 1);
  EXPECT_FALSE(warnings.empty());
  EXPECT_EQ(s.knots.size(), s.control_points.size() + s.degree + 1);
  const SplineSample mid = bspline_eval(s, 1.0);
  EXPECT_NEAR((mid.position - Vec3(1, 0, 0)).norm(), 0.0, 1e-12);
  EXPECT_NEAR((mid.velocity - Vec3(1, 0, 0)).norm(), 0.0, 1e-12);
  for (double t = 0.0; t <= 2.0; t += 0.125) {
    const Vec3 p = bspline_eval(s, t).position;
    EXPECT_NEAR(p.y(), 0.0, 1e-12);
    EXPECT_NEAR(p.x(), t, 1e-12);
  }
}

TEST(BSplineFromWaypoints, RejectsBadInput) {
  EXPECT_THROW(bspline_from_waypoints({Vec3::Zero()}, 3, 1.0), std::invalid_argument);
  EXPECT_THROW(bspline_from_waypoints({Vec3::Zero(), Vec3::Ones()}, 0, 1.0),
               std::invalid_argument);
  EXPECT_THROW(bspline_from_waypoints({Vec3::Zero(), Vec3::Ones()}, 1, 0.0),
               std::invalid_argument);
}

TEST(BSplineFromWaypoints, KnotVectorIsClamped) {
  const BSpline s = bspline_from_waypoints(
      {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(1, 1, 0), Vec3(0, 1, 0), Vec3(0, 2, 1)}, 3, 4.0);
  ASSERT_EQ(s.knots.size(), 9u);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(s.knots[static_cast<size_t>(i)], 0.0);
  for (int i = 5; i < 9; ++i) EXPECT_EQ(s.knots[static_cast<size_t>(i)], 4.0);
  EXPECT_TRUE(std::is_sorted(s.knots.begin(), s.knots.end()));
}

TEST(BSplineEval, CollinearControlPointsStayOnLine) {
  const Vec3 a(1, -1, 2), dir = Vec3(0.3, 0.5, -0.2).normalized();
  std::vector<Vec3> cps;
  for (double k : {0.0, 0.4, 1.7, 1.1, 2.5, 3.0}) cps.push_back(a + k * dir);
  const BSpline s = bspline_from_waypoints(cps, 3, 3.0);
  for (int i = 0; i <= 300; ++i) {
    const Vec3 p = bspline_eval(s, 3.0 * i / 300.0).position;
    EXPECT_LT((p - a).cross(dir).norm(), 1e-12);
  }
}

TEST(BSplineEval, EndpointsAndClampWarning) {
  const std::vector<Vec3> cps = {Vec3(0, 0, 1), Vec3(1, 2, 1), Vec3(3, 1, 2), Vec3(4, 4, 0)};
  const BSpline s = bspline_from_waypoints(cps, 3, 2.5);
  EXPECT_LT((bspline_eval(s, 0.0).position - cps.front()).norm(), 1e-9);
  EXPECT_LT((bspline_eval(s, 2.5).position - cps.back()).norm(), 1e-9);
  std::vector<std::string> warnings;
  const SplineSample past = bspline_eval(s, 3.0, &warnings);
  EXPECT_FALSE(warnings.empty());
  EXPECT_LT((past.position - cps.back()).norm(), 1e-9);
  warnings.clear();
  bspline_eval(s, 1.0, &warnings);
  EXPECT_TRUE(warnings.empty());
}

TEST(BSplineEval, MatchesBasisOracle) {
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Vec3> cps;
    const int n = 4 + trial % 6;
    for (int i = 0; i < n; ++i) cps.push_back(Vec3(u(rng), u(rng), u(rng)));
    const int degree = 1 + trial % 3;
    const BSpline s = bspline_from_waypoints(cps, degree, 1.0 + trial % 4);
    for (int k = 0; k <= 40; ++k) {
      const double frac = k / 40.0;
      const std::vector<double> basis =
          oracle::bspline_basis(s.knots, s.degree, s.knots.back() * frac);
      Vec3 expected = Vec3::Zero();
      for (int i = 0; i < n; ++i) expected += basis[static_cast<size_t>(i)] * cps[static_cast<size_t>(i)];
      EXPECT_LT((bspline_eval(s, s.duration * frac).position - expected).norm(), 1e-9);
    }
  }
}

TEST(BSplineEval, VelocityMatchesFiniteDifference) {
  std::mt19937_64 rng(62);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<Vec3> cps;
  for (int i = 0; i < 7; ++i) cps.push_back(Vec3(u(rng), u(rng), u(rng)));
  const BSpline s = bspline_from_waypoints(cps, 3, 5.0);
  const double h = 1e-5;
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double t = h + (s.duration - 2 * h) * i / 999.0;
    const Vec3 fd = (bspline_eval(s, t + h).position - bspline_eval(s, t - h).position) / (2 * h);
    worst = std::max(worst, (fd - bspline_eval(s, t).velocity).norm());
  }
  EXPECT_LT(worst, 1e-6);
}

// ---- PID --------------------------------------------------------------------

PidGains wide(double kp, double ki, double kd) {
  PidGains g;
  g.kp = kp;
  g.ki = ki;
  g.kd = kd;
  g.i_min = -1e9;
  g.i_max = 1e9;
  g.out_min = -1e9;
  g.out_max = 1e9;
  return g;
}

TEST(PidStep, Examples) {
  EXPECT_DOUBLE_EQ(pid_step({}, wide(2, 0, 0), 0.5, 0.01).output, 1.0);
  EXPECT_DOUBLE_EQ(pid_step({}, wide(2, 1, 1), 0.0, 0.01).output, 0.0);
}

TEST(PidStep, FirstStepHasNoDerivativeKick) {
  const PidStepResult r = pid_step({}, wide(0, 0, 5), 1.0, 0.01);
  EXPECT_DOUBLE_EQ(r.output, 0.0);
  EXPECT_TRUE(r.state.initialized);
  const PidStepResult r2 = pid_step(r.state, wide(0, 0, 5), 1.5, 0.01);
  EXPECT_NEAR(r2.output, 5 * 0.5 / 0.01, 1e-9);
}

TEST(PidStep, IntegralAndOutputClamped) {
  PidGains g;
  g.kp = 0.0;
  g.ki = 10.0;
  g.i_min = -0.3;
  g.i_max = 0.3;
  g.out_min = -2.0;
  g.out_max = 2.0;
  PidState s;
  for (int i = 0; i < 500; ++i) {
    const PidStepResult r = pid_step(s, g, 5.0, 0.01);
    s = r.state;
    EXPECT_LE(s.integral, g.i_max);
    EXPECT_LE(r.output, g.out_max);
  }
  EXPECT_DOUBLE_EQ(s.integral, 0.3);
  // Unwinds as soon as the error changes sign.
  const PidStepResult back = pid_step(s, g, -5.0, 0.01);
  EXPECT_LT(back.state.integral, 0.3);
}

TEST(PidStep, NonFiniteErrorIsFlagged) {
  PidState s;
  s.integral = 0.1;
  s.prev_error = 0.2;
  s.initialized = true;
  const PidStepResult r = pid_step(s, wide(1, 1, 1), std::numeric_limits<double>::quiet_NaN(), 0.01);
  EXPECT_TRUE(r.error_flagged);
  EXPECT_EQ(r.output, 0.0);
  EXPECT_EQ(r.state.integral, 0.1);
  EXPECT_EQ(r.state.prev_error, 0.2);
}

TEST(PidStep, RejectsNonPositiveDt) {
  EXPECT_THROW(pid_step({}, wide(1, 0, 0), 1.0, 0.0), std::invalid_argument);
}

TEST(PidStep, LinearWhileUnsaturated) {
  std::mt19937_64 rng(71);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const PidGains g = wide(1.3, 0.7, 0.05);
  PidState a, b;
  for (int i = 0; i < 200; ++i) {
    const double e = u(rng);
    const PidStepResult ra = pid_step(a, g, e, 0.01);
    const PidStepResult rb = pid_step(b, g, 3.0 * e, 0.01);
    EXPECT_NEAR(rb.output, 3.0 * ra.output, 1e-9);
    a = ra.state;
    b = rb.state;
  }
}

TEST(PidProperties, BoundsHoldUnderRandomInput) {
  std::mt19937_64 rng(72);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  const PidGains g = default_winch_gains();
  PidState s;
  for (int i = 0; i < 5000; ++i) {
    const PidStepResult r = pid_step(s, g, u(rng), 0.01);
    s = r.state;
    ASSERT_GE(s.integral, g.i_min);
    ASSERT_LE(s.integral, g.i_max);
    ASSERT_GE(r.output, g.out_min);
    ASSERT_LE(r.output, g.out_max);
  }
}

// ---- Winch ------------------------------------------------------------------

TEST(WinchRateController, Examples) {
  const WinchCommand zero = winch_rate_controller(0.2, 0.2, {}, wide(1, 0, 0), 0.01, 0.5);
  EXPECT_DOUBLE_EQ(zero.correction, 0.0);
  EXPECT_DOUBLE_EQ(zero.actuator, 0.2);
  const WinchCommand p = winch_rate_controller(0.2, 0.0, {}, wide(1, 0, 0), 0.01, 0.5);
  EXPECT_DOUBLE_EQ(p.correction, 0.2);
  EXPECT_DOUBLE_EQ(p.actuator, 0.4);
  const WinchCommand sat = winch_rate_controller(0.45, 0.0, {}, wide(1, 0, 0), 0.01, 0.5);
  EXPECT_DOUBLE_EQ(sat.actuator, 0.5);
}

TEST(WinchRateController, HoldsDescentRateInWorld) {
  UavState uav;
  uav.pose.position = Vec3(0, 0, 6.0);
  WinchState winch;
  winch.deployed_length = 0.5;
  WorldState w = make_world(std::make_shared<Terrain>(Terrain::flat({-5, -5}, 10, 10, 0.1)), uav,
                            winch, TetherHeadState{}, UgvState{});
  const double target = 0.2, dt = w.dt;
  const PidGains g = default_winch_gains();
  PidState state;
  double prev_len = length_from_encoder(read_encoder(w.winch));
  std::vector<WorldEvent> events;
  std::vector<double> lengths;
  for (int i = 0; i < 1500; ++i) {
    const double len = length_from_encoder(read_encoder(w.winch));
    const WinchCommand cmd =
        winch_rate_controller(target, (len - prev_len) / dt, state, g, dt, w.winch.max_rate);
    state = cmd.state;
    prev_len = len;
    WorldCommands c;
    c.winch_rate = cmd.actuator;
    ASSERT_TRUE(step_world_inplace(w, c, events));
    lengths.push_back(w.winch.deployed_length);
  }
  // After a 1 s transient, every 0.5 s window pays out at 0.2 m/s +/- 10%.
  for (size_t i = 100; i + 50 < lengths.size(); i += 50) {
    const double rate = (lengths[i + 50] - lengths[i]) / (50 * dt);
    EXPECT_NEAR(rate, target, 0.1 * target) << "window at step " << i;
  }
}

// ---- Trajectory tracking ------------------------------------------------------

std::array<PidGains, 3> tracking_gains() {
  const PidGains g = default_tracking_gains();
  return {g, g, g};
}

std::array<PidGains, 3> proportional(double kp) {
  PidGains g = wide(kp, 0, 0);
  return {g, g, g};
}

TEST(TrackTrajectory, OnSplineGivesFeedforward) {
  const BSpline s = bspline_from_waypoints({Vec3(0, 0, 1), Vec3(0.5, 0.5, 1), Vec3(1, 0, 1.5),
                                            Vec3(1.5, 1, 1)},
                                           3, 4.0);
  const SplineSample ref = bspline_eval(s, 1.3);
  UavState uav;
  uav.pose.position = ref.position;
  uav.velocity = ref.velocity;
  std::array<PidState, 3> states{};
  const VelocityCommand cmd = track_trajectory(uav, s, 1.3, tracking_gains(), states, 0.01);
  EXPECT_LT((cmd.linear - ref.velocity).norm(), 1e-12);
}

TEST(TrackTrajectory, ProportionalCorrection) {
  const BSpline s = bspline_from_waypoints({Vec3(0, 0, 1), Vec3(0, 2, 1)}, 1, 2.0);
  UavState uav;
  uav.pose.position = bspline_eval(s, 0.5).position + Vec3(0.1, 0, 0);
  std::array<PidState, 3> states{};
  const VelocityCommand cmd = track_trajectory(uav, s, 0.5, proportional(1.0), states, 0.01);
  EXPECT_NEAR(cmd.linear.x(), -0.1, 1e-12);
  EXPECT_NEAR(cmd.linear.y(), 1.0, 1e-12);
  EXPECT_NEAR(cmd.linear.z(), 0.0, 1e-12);
}

TEST(TrackTrajectory, ClampedToMaxSpeed) {
  const BSpline s = bspline_from_waypoints({Vec3(0, 0, 1), Vec3(0, 2, 1)}, 1, 2.0);
  UavState uav;
  uav.pose.position = Vec3(10, 0, 1);
  uav.max_speed = 1.5;
  std::array<PidState, 3> states{};
  const VelocityCommand cmd = track_trajectory(uav, s, 0.5, proportional(1.0), states, 0.01);
  EXPECT_NEAR(cmd.linear.norm(), 1.5, 1e-12);
}

TEST(TrackTrajectory, ClosedLoopConvergesFromOffset) {
  const BSpline s = bspline_from_waypoints(
      {Vec3(0, 0, 2), Vec3(0.6, 0.2, 2), Vec3(1.2, 1.0, 2.2), Vec3(1.8, 1.2, 2.0),
       Vec3(2.4, 0.6, 1.8), Vec3(3.0, 0.0, 2.0)},
      3, 8.0);
  UavState uav;
  uav.pose.position = bspline_eval(s, 0.0).position + Vec3(0.3, -0.4, 0.0);  // 0.5 m off
  const double dt = 0.01;
  std::array<PidState, 3> states{};
  double worst_late = 0.0;
  for (int i = 0; i <= 800; ++i) {
    const double t = i * dt;
    const VelocityCommand cmd = track_trajectory(uav, s, t, tracking_gains(), states, dt);
    ASSERT_LE(cmd.linear.norm(), uav.max_speed + 1e-12);
    if (t >= 3.0)
      worst_late = std::max(worst_late, (uav.pose.position - bspline_eval(s, t).position).norm());
    uav.velocity = cmd.linear;
    uav.pose.position += cmd.linear * dt;
  }
  EXPECT_LT(worst_late, 0.05);
}

// ---- Arms -------------------------------------------------------------------

// Level patch in the vehicle frame, mirrored about x = 0 so bumps placed at
// +x and -x leave the fitted slope at exactly zero.
PointCloud level_patch() {
  PointCloud c;
  for (int i = -6; i <= 6; ++i)
    for (int j = -4; j <= 4; ++j) c.points.push_back(Vec3(0.05 * i, 0.04 * j, 0.0));
  return c;
}

TEST(ComputeArmAngles, FlatPatchGivesDefaults) {
  ArmParams p;
  p.default_angle = 0.3;
  const ArmCommand cmd = compute_arm_angles(level_patch(), UgvState{}, p);
  EXPECT_NEAR(cmd.front_angle, 0.3, 1e-12);
  EXPECT_NEAR(cmd.rear_angle, 0.3, 1e-12);
  EXPECT_FALSE(cmd.restricted);
}

TEST(ComputeArmAngles, PeakAheadRaisesFrontArm) {
  PointCloud c = level_patch();
  c.points.push_back(Vec3(0.05, 0.0, 0.04));
  c.points.push_back(Vec3(-0.05, 0.0, 0.04));
  const ArmCommand cmd = compute_arm_angles(c, UgvState{});
  EXPECT_NEAR(rad2deg(cmd.front_angle), rad2deg(std::atan2(0.04, 0.1)), 1e-9);
  EXPECT_NEAR(rad2deg(cmd.front_angle), 21.8014, 1e-4);
  EXPECT_NEAR(cmd.rear_angle, 0.0, 1e-12);
}

TEST(ComputeArmAngles, RestrictedModeClamps) {
  PointCloud c = level_patch();
  c.points.push_back(Vec3(0.05, 0.0, 0.04));
  c.points.push_back(Vec3(-0.05, 0.0, 0.04));
  ArmParams p;
  p.default_angle = deg2rad(120.0) - std::atan2(0.04, 0.1);  // computes 120 deg
  UgvState ugv;
  EXPECT_NEAR(rad2deg(compute_arm_angles(c, ugv, p).front_angle), 120.0, 1e-9);
  ugv.carrying_payload = true;
  const ArmCommand cmd = compute_arm_angles(c, ugv, p);
  EXPECT_TRUE(cmd.restricted);
  EXPECT_NEAR(cmd.front_angle, kPi / 2, 1e-12);
}

TEST(ComputeArmAngles, DescendingSlopeMovesRearArm) {
  PointCloud c;
  const double slope = deg2rad(-10.0);
  for (int i = -6; i <= 6; ++i)
    for (int j = -4; j <= 4; ++j)
      c.points.push_back(Vec3(0.05 * i, 0.04 * j, std::tan(slope) * 0.05 * i));
  const ArmCommand cmd = compute_arm_angles(c, UgvState{});
  EXPECT_NEAR(cmd.rear_angle, -slope, 1e-9);
}

TEST(ComputeArmAngles, EmptyPatchWarns) {
  std::vector<std::string> warnings;
  ArmParams p;
  p.default_angle = 0.2;
  const ArmCommand cmd = compute_arm_angles(PointCloud{}, UgvState{}, p, &warnings);
  EXPECT_EQ(cmd.front_angle, 0.2);
  EXPECT_EQ(cmd.rear_angle, 0.2);
  EXPECT_FALSE(warnings.empty());
}

TEST(ComputeArmAngles, RangeProperty) {
  std::mt19937_64 rng(81);
  std::uniform_real_distribution<double> u(-0.3, 0.3), h(-0.2, 0.2), a(-4.0, 4.0), coin(0, 1);
  for (int trial = 0; trial < 300; ++trial) {
    PointCloud c;
    const double sx = h(rng), sy = h(rng);
    for (int i = 0; i < 40; ++i) {
      const double x = u(rng), y = u(rng);
      c.points.push_back(Vec3(x, y, sx * x + sy * y + 0.3 * h(rng) * coin(rng)));
    }
    UgvState ugv;
    ugv.carrying_payload = coin(rng) < 0.5;
    ArmParams p;
    p.default_angle = a(rng);
    const ArmCommand cmd = compute_arm_angles(c, ugv, p);
    for (double ang : {cmd.front_angle, cmd.rear_angle}) {
      if (cmd.restricted) {
        EXPECT_GE(ang, 0.0);
        EXPECT_LE(ang, kPi / 2);
      } else {
        EXPECT_GE(ang, -kPi);
        EXPECT_LT(ang, kPi);
      }
    }
  }
}

// ---- Servo ------------------------------------------------------------------

TEST(ServoAlignment, AlignedGivesZero) {
  const CameraIntrinsics cam;
  const VelocityCommand cmd = servo_alignment(Vec2(cam.cx, cam.cy), cam, 3.0, 1.0);
  EXPECT_EQ(cmd.linear, Vec3::Zero());
}

TEST(ServoAlignment, LinearImageToGround) {
  const CameraIntrinsics cam;
  const VelocityCommand cmd = servo_alignment(Vec2(cam.cx + cam.fx * 0.1, cam.cy), cam, 2.0, 1.0);
  EXPECT_NEAR(cmd.linear.x(), 0.2, 1e-12);
  EXPECT_NEAR(cmd.linear.y(), 0.0, 1e-12);
  EXPECT_EQ(cmd.linear.z(), 0.0);
}

TEST(ServoAlignment, CommandPointsAtTarget) {
  // Project a ground point, then check the command moves toward it.
  std::mt19937_64 rng(91);
  std::uniform_real_distribution<double> u(-1.0, 1.0), yaw(-kPi, kPi);
  const CameraIntrinsics cam;
  for (int i = 0; i < 200; ++i) {
    Pose pose;
    pose.position = Vec3(u(rng), u(rng), 3.0);
    pose.yaw = yaw(rng);
    const Vec3 target(pose.position.x() + 0.5 * u(rng), pose.position.y() + 0.5 * u(rng), 0.0);
    const Vec3 px = project_world_point(cam, pose, target);
    const VelocityCommand cmd = servo_alignment(px.head<2>(), cam, 3.0, 1.0, pose.yaw);
    const Vec3 offset = target - pose.position;
    EXPECT_NEAR(cmd.linear.x(), offset.x(), 1e-9);
    EXPECT_NEAR(cmd.linear.y(), offset.y(), 1e-9);
  }
}

TEST(ServoAlignment, ErrorShrinksMonotonically) {
  const CameraIntrinsics cam;
  Pose pose;
  pose.position = Vec3(-0.8, 0.6, 4.0);
  const Vec3 target = Vec3::Zero();
  double prev = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 150; ++i) {
    const Vec3 px = project_world_point(cam, pose, target);
    const double err = (px.head<2>() - Vec2(cam.cx, cam.cy)).norm();
    EXPECT_LE(err, prev);
    prev = err;
    const VelocityCommand cmd = servo_alignment(px.head<2>(), cam, pose.position.z(), 0.5);
    pose.position += cmd.linear * 0.1;
  }
  EXPECT_LT(prev, 1.0);
}

TEST(ServoAlignment, RejectsNonPositiveAltitude) {
  EXPECT_THROW(servo_alignment(Vec2::Zero(), CameraIntrinsics{}, 0.0, 1.0), std::invalid_argument);
}

}  // namespace
}  // namespace marsupial
