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

// Scenario configuration: JSON schema, parsing and validation.

#ifndef MARSUPIAL_SCENARIO_H_
#define MARSUPIAL_SCENARIO_H_

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "marsupial/control.h"
#include "marsupial/mission.h"
#include "marsupial/perception.h"
#include "marsupial/sensors.h"
#include "marsupial/world.h"

namespace marsupial {

struct TerrainSpec {
  std::string kind = "flat";  // flat | ramp | heightfield | procedural
  Vec2 origin{-5.0, -5.0};
  double width = 10.0;
  double depth = 10.0;
  double cell_size = 0.1;
  double height = 0.0;
  Vec2 slope = Vec2::Zero();       // ramp
  std::string heightfield_file;   // heightfield
  uint64_t seed = 0;              // procedural
  double amplitude = 0.1;
  double wavelength = 3.0;
};

struct MassBudget {
  double tether_module = 0.8;
  double head = 0.15;
  double ugv = 3.68;
  double payload = 0.0;

  double total() const { return tether_module + head + ugv + payload; }
};

struct CameraBlackout {
  std::string phase = "LowerTether";  // starts this long after entering `phase`
  double delay = 1.0;
  double duration = 1.0;
};

struct FaultSpec {
  int epm_stuck_releases = 0;
  std::optional<CameraBlackout> camera_blackout;
  double swing_noise = 0.0;
  bool force_flip = false;
};

struct PerceptionParams {
  int normal_k = 8;
  double slope_threshold_deg = 15.0;
  ZoneParams zone;
  double dbscan_eps = 0.05;
  int dbscan_min_pts = 5;
  double voxel_size = 0.05;
  double fusion_alpha = 0.7;
  double aoi_radius = 0.4;
  SelectionWeights weights;
  double ground_band = 0.04;
  double rate_hz = 10.0;
  double map_rate_hz = 1.0;
  double depth_noise = 0.0;
  double self_filter_radius = 1.0;
};

struct ControlParams {
  PidGains winch = default_winch_gains();
  PidGains tracking = default_tracking_gains();
  int spline_degree = 3;
  ArmParams arms;
  double servo_gain = 0.6;
  double ugv_speed = 0.3;
  double waypoint_tolerance = 0.05;
  double altitude_gain = 1.0;
};

struct ScenarioConfig {
  std::string name = "scenario";
  uint64_t seed = 0;
  double duration_limit = 300.0;
  double dt = 0.01;

  TerrainSpec terrain;
  std::vector<Box> obstacles;
  Vec3 entry_point = Vec3::Zero();

  Pose uav_start;
  double uav_max_speed = 2.0;
  double payload_capacity = 6.0;
  MassBudget masses;

  Footprint footprint;
  Footprint footprint_extended{490.0, 330.0, 100.0};
  bool stow_arms = true;
  double attachment_area_mm = 350.0;

  WinchState winch;
  double head_radius = 0.03;
  double capture_radius = 0.03;
  CameraIntrinsics camera;

  PerceptionParams perception;
  ControlParams control;
  MissionConfig mission;
  FaultSpec faults;

  // Start the mission at AlignForRetrieval with the vehicle already on the
  // ground at `retrieval_ugv_xy` and the tether stowed.
  bool start_at_retrieval = false;
  Vec2 retrieval_ugv_xy = Vec2::Zero();
};

struct ConfigViolation {
  std::string field;
  std::string message;
};

class ConfigParseError : public std::runtime_error {
 public:
  ConfigParseError(const std::string& what, int line, std::string field)
      : std::runtime_error(what), line_(line), field_(std::move(field)) {}
  int line() const { return line_; }  // 0 when unknown
  const std::string& field() const { return field_; }

 private:
  int line_;
  std::string field_;
};

// Throws ConfigParseError. Unknown keys are rejected so typos surface.
ScenarioConfig parse_config(const std::string& text);
ScenarioConfig parse_config_json(const nlohmann::json& j);
// Throws std::runtime_error if the file cannot be read, ConfigParseError if
// it cannot be parsed. Relative heightfield paths resolve against the file.
ScenarioConfig load_config(const std::string& path);

nlohmann::ordered_json config_to_json(const ScenarioConfig& config);

// Every violated invariant, in a fixed order; empty means valid.
std::vector<ConfigViolation> validate_config(const ScenarioConfig& config);

// Heightfield text format: "rows cols cell_size origin_x origin_y" then
// rows * cols heights, row-major.
Terrain load_heightfield(const std::string& path);
Terrain build_terrain(const TerrainSpec& spec);

}  // namespace marsupial

#endif  // MARSUPIAL_SCENARIO_H_
