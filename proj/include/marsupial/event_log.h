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

// JSON Lines event log and CSV trajectory files.
//
// Log line 1 is a header object {"schema": "marsupial.events", "version": 1,
// ...}; every later line is {"t": s, "phase": name, "kind": tag,
// "payload": {...}}.

#ifndef MARSUPIAL_EVENT_LOG_H_
#define MARSUPIAL_EVENT_LOG_H_

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "marsupial/mission.h"

namespace marsupial {

inline constexpr const char* kEventLogSchema = "marsupial.events";
inline constexpr int kEventLogVersion = 1;

struct EventLogHeader {
  std::string scenario;
  uint64_t seed = 0;
  double dt = 0.01;
};

struct EventLog {
  EventLogHeader header;
  std::vector<EventLogEntry> entries;
};

std::string event_log_header_line(const EventLogHeader& header);
std::string event_to_line(const EventLogEntry& entry);
std::string serialize_event_log(const EventLog& log);

// Throws std::runtime_error on I/O failure or a malformed line.
void write_event_log(const std::string& path, const EventLog& log);
EventLog read_event_log(const std::string& path);

struct TrajectorySample {
  double time = 0.0;
  Vec3 position = Vec3::Zero();
  double yaw = 0.0;
};

// Header `time,x,y,z,yaw`.
void write_trajectory_csv(const std::string& path, const std::vector<TrajectorySample>& rows);

}  // namespace marsupial

#endif  // MARSUPIAL_EVENT_LOG_H_
