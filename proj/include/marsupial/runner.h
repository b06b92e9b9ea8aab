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

// End-to-end mission loop: sense, perceive, mission_step, control,
// step_world. Perception and the mission run at perception.rate_hz; the
// flight, winch and track controllers run every world step.

#ifndef MARSUPIAL_RUNNER_H_
#define MARSUPIAL_RUNNER_H_

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "marsupial/event_log.h"
#include "marsupial/mission.h"
#include "marsupial/scenario.h"
#include "marsupial/world.h"

namespace marsupial {

enum class RunOutcome { kSuccess, kFailure, kAborted, kTimeout };
std::string to_string(RunOutcome outcome);

// Process exit code for an outcome: 0 success, 1 anything else.
int exit_code_for(RunOutcome outcome);

struct RunReport {
  std::string scenario;
  uint64_t seed = 0;
  RunOutcome outcome = RunOutcome::kTimeout;
  Phase final_phase = Phase::kIdle;
  std::string abort_reason;
  double sim_time = 0.0;
  double wall_time = 0.0;  // not serialized
  int attempts = 0;
  std::vector<std::pair<std::string, double>> phase_durations;  // first-entry order
  double peak_tracking_error = 0.0;
  std::optional<DeploymentVerdict> touchdown_verdict;
  std::optional<DeploymentVerdict> detach_verdict;
  std::string log_path;
  std::vector<std::string> trajectory_paths;
  EventLog log;
};

// Per-step view for instrumentation; valid only during the callback.
struct StepProbe {
  const WorldState& world;
  const MissionState& mission;
  const std::optional<TrackEstimate>& head_estimate;
  const std::optional<TrackEstimate>& ugv_estimate;  // attachment point
  bool camera_blank;
};

struct RunOptions {
  std::optional<uint64_t> seed;  // overrides config.seed
  std::string out_dir;           // empty: keep everything in memory
  std::function<void(const StepProbe&)> on_step;
};

// Throws std::invalid_argument if the config does not validate.
RunReport run_scenario(const ScenarioConfig& config, const RunOptions& options = {});

nlohmann::ordered_json report_to_json(const RunReport& report);

}  // namespace marsupial

#endif  // MARSUPIAL_RUNNER_H_
