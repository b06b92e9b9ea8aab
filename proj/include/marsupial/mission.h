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

// Deployment and retrieval sequencing as a pure transition function.
//
// Nominal detached-mode order:
//   Idle -> ScanAndMap -> SelectZone -> PositionOverZone -> LowerTether ->
//   VerifyTouchdown -> Detach -> GroundOps -> ReturnAndSignal ->
//   AlignForRetrieval -> Reattach -> Retract -> Done
// Attached mode skips Detach and Reattach. A failed touchdown or
// detachment check goes back to LowerTether with attempt_count + 1, and to
// Aborted once max_attempts is used up. Any phase may abort.

#ifndef MARSUPIAL_MISSION_H_
#define MARSUPIAL_MISSION_H_

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "marsupial/geometry.h"
#include "marsupial/perception.h"

namespace marsupial {

enum class Phase {
  kIdle,
  kScanAndMap,
  kSelectZone,
  kPositionOverZone,
  kLowerTether,
  kVerifyTouchdown,
  kDetach,
  kGroundOps,
  kReturnAndSignal,
  kAlignForRetrieval,
  kReattach,
  kRetract,
  kDone,
  kAborted,
};

// Names are part of the log schema.
std::string to_string(Phase phase);
std::optional<Phase> phase_from_string(const std::string& name);
bool is_legal_transition(Phase from, Phase to);
bool is_terminal(Phase phase);

enum class DeploymentMode { kAttached, kDetached };
enum class TouchdownRule { kGroundPlane, kSeparation, kBoth };

std::string to_string(DeploymentMode mode);
std::string to_string(TouchdownRule rule);

struct MissionConfig {
  DeploymentMode mode = DeploymentMode::kDetached;
  double d_min = 0.05;  // hard clearance limit for releasing the vehicle
  double touchdown_threshold = 0.05;
  double detach_verify_threshold = 0.05;  // minimum head-vehicle separation
  int max_attempts = 3;
  double descent_rate = 0.2;
  double approach_rate = 0.05;
  double approach_height = 0.3;
  double retract_rate = 0.2;
  double slack_length = 0.1;
  double reattempt_lift = 0.3;
  int verify_window = 10;
  double stationary_speed = 0.01;
  double release_delay = 0.2;
  TouchdownRule touchdown_rule = TouchdownRule::kBoth;
  std::vector<Vec2> ground_ops_waypoints;

  Vec2 scan_target = Vec2::Zero();
  double scan_altitude = 5.0;
  double scan_dwell = 1.0;
  double deploy_altitude = 4.0;
  double settle_time = 1.5;
  double retrieval_altitude = 4.0;
  double align_tolerance_px = 5.0;
  int align_frames = 5;
  double reattach_slack = 0.15;
  int max_reattach_tries = 5;
  double stowed_length = 0.2;
  double phase_timeout = 120.0;

  // Vehicle geometry the sequencing needs.
  double ugv_height = 0.1;
  double head_radius = 0.03;
};

enum class DeploymentOutcome { kSuccess, kFailure, kUndecided };
std::string to_string(DeploymentOutcome outcome);

struct DeploymentVerdict {
  DeploymentOutcome outcome = DeploymentOutcome::kUndecided;
  double clearance = 0.0;
  std::vector<double> separation_series;
  bool ugv_stationary = false;
};

enum class Termination { kNone, kSuccess, kFailure, kAborted };

struct EventLogEntry {
  double time = 0.0;
  Phase phase = Phase::kIdle;
  std::string kind;
  nlohmann::ordered_json payload = nlohmann::ordered_json::object();
};

struct MissionState {
  Phase phase = Phase::kIdle;
  double entered_at = 0.0;
  int attempt_count = 0;
  int lower_entries = 0;
  Termination termination = Termination::kNone;
  std::string abort_reason;
  bool map_paused = false;
  std::optional<DeploymentZone> zone;
  std::optional<DeploymentVerdict> touchdown_verdict;
  std::optional<DeploymentVerdict> detach_verdict;

  // Per-phase scratch, reset on every phase entry.
  double arrived_at = -1.0;
  bool lifting = false;
  double verify_entry_length = 0.0;
  bool slack_paid = false;
  bool released = false;
  double released_at = 0.0;
  std::vector<double> separation_series;
  std::vector<double> ugv_speeds;
  int aligned_frames = 0;
  int reattach_tries = 0;
  bool backing_off = false;
  double back_off_target = 0.0;
};

struct MissionObservations {
  double tether_length = 0.0;
  Vec3 anchor = Vec3::Zero();
  std::optional<TrackEstimate> head;
  std::optional<TrackEstimate> ugv;  // chassis bottom-center
  std::optional<double> separation;  // head to vehicle attachment point
  double ugv_speed = 0.0;
  bool uav_at_goal = false;
  std::optional<ZoneSearchResult> zone_search;
  bool head_attached = false;  // magnet reports a latched vehicle
  bool ugv_route_done = false;
  bool ugv_upright = true;
  std::optional<double> pixel_error;
  bool detach_requested = false;
  size_t map_voxels = 0;
};

enum class UavMode { kHold, kFlyTo, kServo };
enum class UgvMode { kIdle, kFollowRoute, kSelfRight };

struct MissionCommands {
  UavMode uav_mode = UavMode::kHold;
  Vec2 anchor_goal = Vec2::Zero();  // where the tether anchor should be
  double uav_altitude = 0.0;
  double winch_rate = 0.0;
  std::optional<bool> epm;
  UgvMode ugv_mode = UgvMode::kIdle;
  bool map_paused = false;
  bool request_zone_search = false;
};

struct MissionStepResult {
  MissionState state;
  MissionCommands commands;
  std::vector<EventLogEntry> events;
};

// True iff the vehicle estimate lies within `threshold` of the ground plane
// (signed distance). Throws DegenerateInputError on a malformed plane.
bool verify_touchdown(const TrackEstimate& ugv_estimate, const Plane& ground, double threshold);

// Separation-growth rule over the trailing `window` samples.
DeploymentVerdict verify_detachment(const std::vector<double>& separation_series,
                                    bool ugv_stationary, double min_sep, int window = 10);

MissionStepResult mission_step(const MissionState& state, const MissionConfig& config,
                               const MissionObservations& obs, double now);

}  // namespace marsupial

#endif  // MARSUPIAL_MISSION_H_
