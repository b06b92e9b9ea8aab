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

#include "marsupial/event_log.h"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace marsupial {

std::string event_log_header_line(const EventLogHeader& h) {
  nlohmann::ordered_json j;
  j["schema"] = kEventLogSchema;
  j["version"] = kEventLogVersion;
  j["scenario"] = h.scenario;
  j["seed"] = h.seed;
  j["dt"] = h.dt;
  return j.dump();
}

std::string event_to_line(const EventLogEntry& e) {
  nlohmann::ordered_json j;
  j["t"] = e.time;
  j["phase"] = to_string(e.phase);
  j["kind"] = e.kind;
  j["payload"] = e.payload;
  return j.dump();
}

std::string serialize_event_log(const EventLog& log) {
  std::string out = event_log_header_line(log.header);
  out += '\n';
  for (const EventLogEntry& e : log.entries) {
    out += event_to_line(e);
    out += '\n';
  }
  return out;
}

void write_event_log(const std::string& path, const EventLog& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << serialize_event_log(log);
  if (!out) throw std::runtime_error("write failed: " + path);
}

EventLog read_event_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  EventLog log;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    nlohmann::ordered_json j;
    try {
      j = nlohmann::ordered_json::parse(line);
      if (n == 1) {
        if (j.value("schema", "") != kEventLogSchema)
          throw std::runtime_error("not a marsupial event log");
        log.header.scenario = j.value("scenario", "");
        log.header.seed = j.value("seed", uint64_t{0});
        log.header.dt = j.value("dt", 0.01);
        continue;
      }
      EventLogEntry e;
      e.time = j.at("t").get<double>();
      const auto phase = phase_from_string(j.at("phase").get<std::string>());
      if (!phase) throw std::runtime_error("unknown phase");
      e.phase = *phase;
      e.kind = j.at("kind").get<std::string>();
      e.payload = j.at("payload");
      log.entries.push_back(std::move(e));
    } catch (const std::exception& ex) {
      throw std::runtime_error(path + ":" + std::to_string(n) + ": " + ex.what());
    }
  }
  return log;
}

void write_trajectory_csv(const std::string& path, const std::vector<TrajectorySample>& rows) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("cannot write " + path);
  std::fputs("time,x,y,z,yaw\n", f);
  for (const TrajectorySample& r : rows) {
    std::fprintf(f, "%.3f,%.6f,%.6f,%.6f,%.6f\n", r.time, r.position.x(), r.position.y(),
                 r.position.z(), r.yaw);
  }
  const bool ok = std::fclose(f) == 0;
  if (!ok) throw std::runtime_error("write failed: " + path);
}

}  // namespace marsupial
