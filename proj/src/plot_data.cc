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

#include "marsupial/plot_data.h"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "marsupial/event_log.h"

namespace marsupial {

namespace {

namespace fs = std::filesystem;

bool in_clearance_window(Phase p) {
  return p == Phase::kLowerTether || p == Phase::kVerifyTouchdown || p == Phase::kDetach;
}

// Telemetry key for each series.
const char* telemetry_key(const std::string& series) {
  if (series == "clearance") return "clearance_est";
  if (series == "separation") return "separation";
  if (series == "tracking_error") return "tracking_error";
  if (series == "tether_length") return "tether_length";
  if (series == "head_error") return "head_error";
  return nullptr;
}

}  // namespace

const std::vector<std::string>& plot_series_names() {
  static const std::vector<std::string> names{"clearance", "separation", "tracking_error",
                                              "tether_length", "head_error"};
  return names;
}

PlotDataResult emit_plot_data(const std::string& report_path,
                              const std::vector<std::string>& series,
                              const std::string& out_dir) {
  PlotDataResult result;
  EventLog log;
  try {
    std::ifstream in(report_path);
    if (!in) throw std::runtime_error("cannot read " + report_path);
    const nlohmann::json report = nlohmann::json::parse(in);
    const std::string log_name = report.at("log").get<std::string>();
    if (log_name.empty()) throw std::runtime_error("report has no event log");
    log = read_event_log((fs::path(report_path).parent_path() / log_name).string());
  } catch (const std::exception& e) {
    result.warnings.push_back(e.what());
    result.exit_code = 3;
    return result;
  }
  if (log.entries.empty()) {
    result.warnings.push_back("event log is empty");
    result.exit_code = 1;
    return result;
  }

  const fs::path dir = out_dir.empty() ? fs::path(report_path).parent_path() : fs::path(out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  for (const std::string& name : series) {
    const char* key = telemetry_key(name);
    if (!key) {
      result.warnings.push_back("unknown series '" + name + "'");
      continue;
    }
    std::vector<std::pair<double, double>> rows;
    for (const EventLogEntry& e : log.entries) {
      if (e.kind != "telemetry") continue;
      if (name == "clearance" && !in_clearance_window(e.phase)) continue;
      auto it = e.payload.find(key);
      if (it == e.payload.end() || !it->is_number()) continue;
      rows.emplace_back(e.time, it->get<double>());
    }
    if (rows.empty()) {
      result.warnings.push_back("series '" + name + "' has no samples");
      continue;
    }
    const std::string path = (dir / (name + ".csv")).string();
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) {
      result.warnings.push_back("cannot write " + path);
      continue;
    }
    std::fprintf(f, "time,%s\n", name.c_str());
    for (const auto& [t, v] : rows) std::fprintf(f, "%.3f,%.9g\n", t, v);
    std::fclose(f);
    result.files.push_back(path);
  }
  result.exit_code = result.files.empty() ? 1 : 0;
  return result;
}

}  // namespace marsupial
