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

// Two-column `time,<series>` CSV files projected from a run's event log.

#ifndef MARSUPIAL_PLOT_DATA_H_
#define MARSUPIAL_PLOT_DATA_H_

#include <string>
#include <vector>

namespace marsupial {

// clearance, separation, tracking_error, tether_length, head_error
const std::vector<std::string>& plot_series_names();

struct PlotDataResult {
  std::vector<std::string> files;
  std::vector<std::string> warnings;
  int exit_code = 0;  // 0 if any series was written, 1 if none, 3 on I/O error
};

// `report_path` is a report.json written by run_scenario; files go to
// `out_dir`, or next to the report when empty.
PlotDataResult emit_plot_data(const std::string& report_path,
                              const std::vector<std::string>& series,
                              const std::string& out_dir = "");

}  // namespace marsupial

#endif  // MARSUPIAL_PLOT_DATA_H_
