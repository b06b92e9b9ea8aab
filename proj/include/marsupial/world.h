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

// Fixed-timestep plant: heightfield terrain, kinematic UAV, single-actuator
// winch with a suspended electro-permanent-magnet head, and the tracked
// ground vehicle it carries.

#ifndef MARSUPIAL_WORLD_H_
#define MARSUPIAL_WORLD_H_

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "marsupial/geometry.h"

namespace marsupial {

// Elevation grid. Sample (r, c) sits at origin + (c, r) * cell_size.
struct Terrain {
  Vec2 origin = Vec2::Zero();
  double cell_size = 0.1;
  int rows = 0;
  int cols = 0;
  std::vector<double> heights;  // row-major, rows * cols

  double x_max() const { return origin.x() + (cols - 1) * cell_size; }
  double y_max() const { return origin.y() + (rows - 1) * cell_size; }
  double at(int r, int c) const { return heights[static_cast<size_t>(r) * cols + c]; }
  bool contains(double x, double y) const {
    return x >= origin.x() && x <= x_max() && y >= origin.y() && y <= y_max();
  }
  double min_height() const;
  double max_height() const;

  // Throws std::invalid_argument naming the violated invariant.
  void validate() const;

  static Terrain flat(Vec2 origin, double width, double depth, double cell_size,
                      double height = 0.0);
  // z = height + slope.x * (x - origin.x) + slope.y * (y - origin.y)
  static Terrain ramp(Vec2 origin, double width, double depth, double cell_size,
                      Vec2 slope, double height = 0.0);
  // Smooth pseudo-random bumps: a sum of seeded sinusoids.
  static Terrain procedural(Vec2 origin, double width, double depth,
                            double cell_size, uint64_t seed, double amplitude,
                            double wavelength);
};

// Bilinear elevation. Throws std::domain_error outside the grid.
double terrain_height_at(const Terrain& terrain, double x, double y);
// Same, with (x, y) clamped into the grid first.
double terrain_height_clamped(const Terrain& terrain, double x, double y);

// Static axis-aligned structure, e.g. the building housing a hidden space.
struct Box {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();
};

struct UavState {
  Pose pose;
  Vec3 velocity = Vec3::Zero();
  double max_speed = 2.0;
  double payload_capacity = 6.0;  // kg
};

// One motor drives both the spool and the level-wind guider, so a single
// rate describes the whole module.
struct WinchState {
  double deployed_length = 0.2;
  double max_length = 10.0;
  double rate = 0.0;  // m/s, positive pays out
  double drum_radius = 0.02;
  int encoder_cpr = 4096;
  Vec3 anchor_offset{0.35, 0.0, -0.1};  // body frame
  double motor_time_constant = 0.2;
  double max_rate = 0.5;
  double stowed_length = 0.2;
  bool taut = false;  // retraction held against a wedged ground vehicle
};

struct TetherHeadState {
  Vec3 position = Vec3::Zero();  // sphere center, at the tether end
  Vec2 swing = Vec2::Zero();     // angles from vertical about y and x
  Vec2 swing_rate = Vec2::Zero();
  bool epm_on = true;
  bool attached = true;
  double capture_radius = 0.03;
  double radius = 0.03;
  bool resting = false;  // slack on a surface
};

struct Footprint {
  double length_mm = 330.0;
  double width_mm = 330.0;
  double height_mm = 100.0;
};

struct UgvState {
  Pose pose;  // position is the bottom-center of the chassis
  double track_left = 0.0;
  double track_right = 0.0;
  double arm_front = 0.0;
  double arm_rear = 0.0;
  double mass = 3.68;
  bool carrying_payload = false;
  double payload_mass = 0.0;
  Footprint footprint;
  Footprint footprint_extended{490.0, 330.0, 100.0};
  double track_width = 0.3;
  bool grounded = false;

  double height() const { return footprint.height_mm * 1e-3; }
  Vec3 attach_point() const { return pose.position + Vec3(0.0, 0.0, height()); }
};

struct WorldParams {
  double contact_tolerance = 1e-6;
  double flip_swing_threshold = deg2rad(45.0);
  double min_pendulum_length = 0.05;
  // White angular-acceleration noise on the head swing, rad/s^2/sqrt(Hz).
  double swing_noise = 0.0;
  bool force_flip_on_touchdown = false;
  double self_right_duration = 2.0;
};

struct WorldState {
  double time = 0.0;
  double dt = 0.01;
  uint64_t step_count = 0;
  std::shared_ptr<const Terrain> terrain;
  std::vector<Box> structures;
  UavState uav;
  WinchState winch;
  TetherHeadState head;
  UgvState ugv;
  WorldParams params;
  // Release commands the magnet will ignore before it starts obeying.
  int epm_release_faults = 0;
  uint64_t rng_seed = 0;
  std::mt19937_64 rng;
};

struct WorldCommands {
  Vec3 uav_velocity = Vec3::Zero();
  double uav_yaw_rate = 0.0;
  double winch_rate = 0.0;
  double track_left = 0.0;
  double track_right = 0.0;
  double arm_rate_front = 0.0;
  double arm_rate_rear = 0.0;
  std::optional<bool> epm;
};

enum class WorldEventKind {
  kCommandRejected,
  kAttach,
  kDetach,
  kEpmReleaseIgnored,
  kTouchdown,
  kLiftoff,
  kDrop,
  kWinchWarning,
  kSelfRighted,
};

std::string to_string(WorldEventKind kind);

struct WorldEvent {
  WorldEventKind kind;
  std::string detail;
};

struct WorldUpdate {
  WorldState state;
  std::vector<WorldEvent> events;
  bool rejected = false;
};

class SelfRightError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Builds a world with the vehicle hanging straight below the anchor.
WorldState make_world(std::shared_ptr<const Terrain> terrain, UavState uav,
                      WinchState winch, TetherHeadState head, UgvState ugv,
                      WorldParams params = {}, double dt = 0.01,
                      uint64_t seed = 0);

Vec3 anchor_world(const WorldState& world);

WorldUpdate step_world(const WorldState& world, const WorldCommands& commands);
// In-place variant; returns false if the commands were rejected.
bool step_world_inplace(WorldState& world, const WorldCommands& commands,
                        std::vector<WorldEvent>& events);

WorldUpdate command_epm(const WorldState& world, bool on);
void command_epm_inplace(WorldState& world, bool on,
                         std::vector<WorldEvent>& events);

// Scripted arm sweep that restores the upright orientation. Throws
// SelfRightError when carrying a payload or when not on the ground.
WorldUpdate ugv_self_right(const WorldState& world);

// Number of world steps the self-righting maneuver takes.
int self_right_steps(const WorldState& world);

}  // namespace marsupial

#endif  // MARSUPIAL_WORLD_H_
