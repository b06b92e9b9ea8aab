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

// marsupial: validate, run and batch deployment scenarios; project logs
// into plot data; run the zone/cluster pipeline on a saved cloud.
//
// Exit codes: 0 success, 1 mission failure or abort, 2 invalid config,
// 3 I/O error.

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "marsupial/perception.h"
#include "marsupial/plot_data.h"
#include "marsupial/runner.h"
#include "marsupial/scenario.h"

namespace fs = std::filesystem;
using namespace marsupial;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitInvalid = 2;
constexpr int kExitIo = 3;

std::string default_out_dir() {
  const char* env = std::getenv("MARSUPIAL_OUT_DIR");
  return env && *env ? env : "marsupial_out";
}

// Loads and validates; on failure prints diagnostics and returns the exit code.
int load_valid(const std::string& path, ScenarioConfig& config) {
  try {
    config = load_config(path);
  } catch (const ConfigParseError& e) {
    std::cerr << path << ": " << e.what() << '\n';
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return kExitIo;
  }
  const std::vector<ConfigViolation> violations = validate_config(config);
  for (const ConfigViolation& v : violations)
    std::cerr << path << ": " << v.field << ": " << v.message << '\n';
  return violations.empty() ? kExitOk : kExitInvalid;
}

int cmd_validate(const std::string& path) {
  ScenarioConfig config;
  const int rc = load_valid(path, config);
  if (rc == kExitOk) std::cout << path << ": valid\n";
  return rc;
}

int cmd_run(const std::string& path, std::optional<uint64_t> seed, const std::string& out) {
  ScenarioConfig config;
  if (int rc = load_valid(path, config); rc != kExitOk) return rc;
  RunOptions opt;
  opt.seed = seed;
  opt.out_dir = out;
  RunReport report;
  try {
    report = run_scenario(config, opt);
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << '\n';
    return kExitIo;
  }
  std::cout << config.name << ": " << to_string(report.outcome) << " (final phase "
            << to_string(report.final_phase) << ", sim " << report.sim_time << " s)";
  if (!report.abort_reason.empty()) std::cout << " reason: " << report.abort_reason;
  std::cout << "\n  output: " << out << '\n';
  return exit_code_for(report.outcome);
}

int cmd_batch(const std::string& dir, int jobs, const std::string& out) {
  if (!fs::is_directory(dir)) {
    std::cerr << "not a directory: " << dir << '\n';
    return kExitIo;
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".json")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) {
    std::cerr << "no .json configs in " << dir << '\n';
    return kExitIo;
  }

  std::vector<int> codes(files.size(), kExitOk);
  std::vector<std::string> lines(files.size());
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (size_t i = next++; i < files.size(); i = next++) {
      ScenarioConfig config;
      const std::string path = files[i].string();
      if (int rc = load_valid(path, config); rc != kExitOk) {
        codes[i] = rc;
        lines[i] = path + ": invalid";
        continue;
      }
      RunOptions opt;
      opt.seed = config.seed + i;
      opt.out_dir = (fs::path(out) / files[i].stem()).string();
      try {
        const RunReport r = run_scenario(config, opt);
        codes[i] = exit_code_for(r.outcome);
        lines[i] = files[i].stem().string() + ": " + to_string(r.outcome) + " (" +
                   to_string(r.final_phase) + ")";
      } catch (const std::exception& e) {
        codes[i] = kExitIo;
        lines[i] = files[i].stem().string() + ": error: " + e.what();
      }
    }
  };
  const int n = std::clamp(jobs, 1, static_cast<int>(files.size()));
  std::vector<std::thread> pool;
  for (int k = 0; k < n; ++k) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();

  for (const std::string& l : lines) std::cout << l << '\n';
  int rc = kExitOk;
  for (int c : codes) {
    if (c == kExitIo) return kExitIo;
    if (c == kExitInvalid) rc = kExitInvalid;
    else if (c != kExitOk && rc == kExitOk) rc = kExitFailure;
  }
  return rc;
}

int cmd_plot(const std::string& report, const std::vector<std::string>& series,
             const std::string& out) {
  const PlotDataResult r = emit_plot_data(report, series, out);
  for (const std::string& w : r.warnings) std::cerr << "warning: " << w << '\n';
  for (const std::string& f : r.files) std::cout << f << '\n';
  return r.exit_code;
}

int cmd_perceive(const std::string& path, const std::vector<double>& entry, int k,
                 double slope_deg, double eps, int min_pts) {
  PointCloud cloud;
  try {
    cloud = load_cloud_xyz(path);
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return kExitIo;
  }
  nlohmann::ordered_json out;
  out["points"] = cloud.size();
  try {
    const NormalCloud normals = estimate_normals(cloud, k);
    const NavigabilityMask mask = segment_navigable(normals, deg2rad(slope_deg));
    const ZoneSearchResult zone =
        find_deployment_zone(cloud, mask, Vec3(entry[0], entry[1], entry[2]));
    if (zone.zone) {
      const DeploymentZone& z = *zone.zone;
      out["zone"] = {{"center", {z.center.x(), z.center.y(), z.center.z()}},
                     {"normal", {z.plane.normal.x(), z.plane.normal.y(), z.plane.normal.z()}},
                     {"distance_to_entry", z.distance_to_entry},
                     {"score", z.score}};
    } else {
      out["zone"] = nullptr;
    }
    const DbscanResult db = dbscan(cloud, eps, min_pts);
    nlohmann::ordered_json clusters = nlohmann::ordered_json::array();
    for (const Cluster& c : db.clusters)
      clusters.push_back({{"size", c.member_indices.size()},
                          {"centroid", {c.centroid.x(), c.centroid.y(), c.centroid.z()}}});
    out["clusters"] = clusters;
    out["noise"] = db.noise.size();
  } catch (const std::exception& e) {
    std::cerr << "perception failed: " << e.what() << '\n';
    return kExitFailure;
  }
  std::cout << out.dump(2) << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tethered UAV/UGV deployment simulator"};
  app.require_subcommand(1);

  std::string config_path, out_dir = default_out_dir(), dir, report;
  uint64_t seed = 0;
  int jobs = 1;
  std::vector<std::string> series;

  CLI::App* validate = app.add_subcommand("validate", "Check a scenario config");
  validate->add_option("config", config_path, "Scenario JSON")->required();

  CLI::App* run = app.add_subcommand("run", "Run one scenario");
  run->add_option("config", config_path, "Scenario JSON")->required();
  CLI::Option* seed_opt = run->add_option("--seed", seed, "Override the config seed");
  run->add_option("--out", out_dir, "Output directory (default $MARSUPIAL_OUT_DIR)");

  CLI::App* batch = app.add_subcommand("batch", "Run every *.json config in a directory");
  batch->add_option("config-dir", dir, "Directory of scenario configs")->required();
  batch->add_option("--jobs", jobs, "Parallel scenarios")->check(CLI::PositiveNumber);
  batch->add_option("--out", out_dir, "Output directory (default $MARSUPIAL_OUT_DIR)");

  CLI::App* plot = app.add_subcommand("plot-data", "Write time series from a run");
  plot->add_option("report", report, "report.json from a run")->required();
  plot->add_option("--series", series, "clearance separation tracking_error tether_length "
                                        "head_error")
      ->required();
  std::string plot_out;
  plot->add_option("--out", plot_out, "Directory for the CSV files (default: next to report)");

  CLI::App* perceive = app.add_subcommand("perceive", "Zone search and clustering on an x y z cloud");
  std::string cloud_path;
  std::vector<double> entry{0.0, 0.0, 0.0};
  int k = 8, min_pts = 5;
  double slope = 15.0, eps = 0.05;
  perceive->add_option("cloud", cloud_path, "Cloud file (x y z per line)")->required();
  perceive->add_option("--entry", entry, "Entry point x y z")->expected(3);
  perceive->add_option("--k", k, "Normal neighbourhood size");
  perceive->add_option("--slope-deg", slope, "Navigability slope threshold");
  perceive->add_option("--eps", eps, "DBSCAN radius");
  perceive->add_option("--min-pts", min_pts, "DBSCAN density threshold");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitInvalid;
  }

  if (*validate) return cmd_validate(config_path);
  if (*run) {
    std::optional<uint64_t> s;
    if (seed_opt->count()) s = seed;
    return cmd_run(config_path, s, out_dir);
  }
  if (*batch) return cmd_batch(dir, jobs, out_dir);
  if (*plot) return cmd_plot(report, series, plot_out);
  if (*perceive) return cmd_perceive(cloud_path, entry, k, slope, eps, min_pts);
  return kExitInvalid;
}
