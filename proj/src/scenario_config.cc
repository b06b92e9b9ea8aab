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

#include "marsupial/scenario.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace marsupial {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

// 1-based line of the first occurrence of "key" in the source text.
int line_of(const std::string* text, const std::string& key) {
  if (!text) return 0;
  const size_t pos = text->find("\"" + key + "\"");
  if (pos == std::string::npos) return 0;
  return 1 + static_cast<int>(std::count(text->begin(), text->begin() + pos, '\n'));
}

void read_value(const json& j, double& v) {
  if (!j.is_number()) throw std::invalid_argument("expected a number");
  v = j.get<double>();
}
void read_value(const json& j, int& v) {
  if (!j.is_number_integer()) throw std::invalid_argument("expected an integer");
  v = j.get<int>();
}
void read_value(const json& j, uint64_t& v) {
  if (!j.is_number_unsigned()) throw std::invalid_argument("expected a non-negative integer");
  v = j.get<uint64_t>();
}
void read_value(const json& j, bool& v) {
  if (!j.is_boolean()) throw std::invalid_argument("expected true or false");
  v = j.get<bool>();
}
void read_value(const json& j, std::string& v) {
  if (!j.is_string()) throw std::invalid_argument("expected a string");
  v = j.get<std::string>();
}
template <int N>
void read_value(const json& j, Eigen::Matrix<double, N, 1>& v) {
  if (!j.is_array() || j.size() != N)
    throw std::invalid_argument("expected an array of " + std::to_string(N) + " numbers");
  for (int i = 0; i < N; ++i) read_value(j[i], v[i]);
}
void read_value(const json& j, std::vector<Vec2>& v) {
  if (!j.is_array()) throw std::invalid_argument("expected an array of [x, y] points");
  v.clear();
  for (const json& e : j) {
    Vec2 p;
    read_value(e, p);
    v.push_back(p);
  }
}
void read_value(const json& j, std::vector<Box>& v) {
  if (!j.is_array()) throw std::invalid_argument("expected an array of boxes");
  v.clear();
  for (const json& e : j) {
    if (!e.is_object() || !e.contains("min") || !e.contains("max") || e.size() != 2)
      throw std::invalid_argument("box needs exactly \"min\" and \"max\"");
    Box b;
    read_value(e["min"], b.min);
    read_value(e["max"], b.max);
    v.push_back(b);
  }
}
void read_value(const json& j, DeploymentMode& v) {
  std::string s;
  read_value(j, s);
  if (s == "attached") v = DeploymentMode::kAttached;
  else if (s == "detached") v = DeploymentMode::kDetached;
  else throw std::invalid_argument("expected \"attached\" or \"detached\"");
}
void read_value(const json& j, TouchdownRule& v) {
  std::string s;
  read_value(j, s);
  if (s == "ground_plane") v = TouchdownRule::kGroundPlane;
  else if (s == "separation") v = TouchdownRule::kSeparation;
  else if (s == "both") v = TouchdownRule::kBoth;
  else throw std::invalid_argument("expected \"ground_plane\", \"separation\" or \"both\"");
}

ojson write_value(double v) { return v; }
ojson write_value(int v) { return v; }
ojson write_value(uint64_t v) { return v; }
ojson write_value(bool v) { return v; }
ojson write_value(const std::string& v) { return v; }
template <int N>
ojson write_value(const Eigen::Matrix<double, N, 1>& v) {
  ojson a = ojson::array();
  for (int i = 0; i < N; ++i) a.push_back(v[i]);
  return a;
}
ojson write_value(const std::vector<Vec2>& v) {
  ojson a = ojson::array();
  for (const Vec2& p : v) a.push_back(write_value(p));
  return a;
}
ojson write_value(const std::vector<Box>& v) {
  ojson a = ojson::array();
  for (const Box& b : v) a.push_back({{"min", write_value(b.min)}, {"max", write_value(b.max)}});
  return a;
}
ojson write_value(DeploymentMode v) { return to_string(v); }
ojson write_value(TouchdownRule v) { return to_string(v); }

class Reader {
 public:
  Reader(const json& j, std::string path, const std::string* text)
      : j_(j), path_(std::move(path)), text_(text) {}

  template <class T>
  void field(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      read_value(*it, out);
    } catch (const std::exception& e) {
      fail(key, e.what());
    }
  }

  template <class F>
  void object(const char* key, F&& body) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    if (!it->is_object()) fail(key, "expected an object");
    Reader sub(*it, path_ + key + ".", text_);
    body(sub);
    sub.finish();
  }

  template <class T, class F>
  void optional_object(const char* key, std::optional<T>& out, F&& body) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return;
    if (!it->is_object()) fail(key, "expected an object or null");
    out.emplace();
    Reader sub(*it, path_ + key + ".", text_);
    body(sub, *out);
    sub.finish();
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) fail(it.key(), "unknown field");
  }

 private:
  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    const int line = line_of(text_, key);
    std::string what = path_ + key + ": " + msg;
    if (line > 0) what = "line " + std::to_string(line) + ": " + what;
    throw ConfigParseError(what, line, path_ + key);
  }

  const json& j_;
  std::string path_;
  const std::string* text_;
  std::set<std::string> seen_;
};

class Writer {
 public:
  explicit Writer(ojson& j) : j_(j) {}

  template <class T>
  void field(const char* key, const T& v) {
    j_[key] = write_value(v);
  }

  template <class F>
  void object(const char* key, F&& body) {
    ojson sub = ojson::object();
    Writer w(sub);
    body(w);
    j_[key] = std::move(sub);
  }

  template <class T, class F>
  void optional_object(const char* key, const std::optional<T>& v, F&& body) {
    if (!v) {
      j_[key] = nullptr;
      return;
    }
    ojson sub = ojson::object();
    Writer w(sub);
    T copy = *v;
    body(w, copy);
    j_[key] = std::move(sub);
  }

 private:
  ojson& j_;
};

template <class V>
void visit_gains(V& v, PidGains& g) {
  v.field("kp", g.kp);
  v.field("ki", g.ki);
  v.field("kd", g.kd);
  v.field("i_min", g.i_min);
  v.field("i_max", g.i_max);
  v.field("out_min", g.out_min);
  v.field("out_max", g.out_max);
}

template <class V>
void visit_footprint(V& v, Footprint& f) {
  v.field("length_mm", f.length_mm);
  v.field("width_mm", f.width_mm);
  v.field("height_mm", f.height_mm);
}

template <class V>
void visit(V& v, ScenarioConfig& c) {
  v.field("name", c.name);
  v.field("seed", c.seed);
  v.field("duration_limit", c.duration_limit);
  v.field("dt", c.dt);
  v.object("terrain", [&](V& t) {
    TerrainSpec& s = c.terrain;
    t.field("kind", s.kind);
    t.field("origin", s.origin);
    t.field("width", s.width);
    t.field("depth", s.depth);
    t.field("cell_size", s.cell_size);
    t.field("height", s.height);
    t.field("slope", s.slope);
    t.field("heightfield_file", s.heightfield_file);
    t.field("seed", s.seed);
    t.field("amplitude", s.amplitude);
    t.field("wavelength", s.wavelength);
  });
  v.field("obstacles", c.obstacles);
  v.field("entry_point", c.entry_point);
  v.object("uav", [&](V& u) {
    u.field("position", c.uav_start.position);
    u.field("yaw", c.uav_start.yaw);
    u.field("max_speed", c.uav_max_speed);
    u.field("payload_capacity", c.payload_capacity);
  });
  v.object("masses", [&](V& m) {
    m.field("tether_module", c.masses.tether_module);
    m.field("head", c.masses.head);
    m.field("ugv", c.masses.ugv);
    m.field("payload", c.masses.payload);
  });
  v.object("ugv", [&](V& u) {
    u.object("footprint", [&](V& f) { visit_footprint(f, c.footprint); });
    u.object("footprint_extended", [&](V& f) { visit_footprint(f, c.footprint_extended); });
    u.field("stow_arms", c.stow_arms);
    u.field("attachment_area_mm", c.attachment_area_mm);
  });
  v.object("winch", [&](V& w) {
    w.field("initial_length", c.winch.deployed_length);
    w.field("max_length", c.winch.max_length);
    w.field("stowed_length", c.winch.stowed_length);
    w.field("drum_radius", c.winch.drum_radius);
    w.field("encoder_cpr", c.winch.encoder_cpr);
    w.field("anchor_offset", c.winch.anchor_offset);
    w.field("motor_time_constant", c.winch.motor_time_constant);
    w.field("max_rate", c.winch.max_rate);
  });
  v.object("head", [&](V& h) {
    h.field("radius", c.head_radius);
    h.field("capture_radius", c.capture_radius);
  });
  v.object("camera", [&](V& k) {
    k.field("width", c.camera.width);
    k.field("height", c.camera.height);
    k.field("fx", c.camera.fx);
    k.field("fy", c.camera.fy);
    k.field("cx", c.camera.cx);
    k.field("cy", c.camera.cy);
    k.field("max_range", c.camera.max_range);
  });
  v.object("perception", [&](V& p) {
    PerceptionParams& q = c.perception;
    p.field("normal_k", q.normal_k);
    p.field("slope_threshold_deg", q.slope_threshold_deg);
    p.field("zone_patch_radius", q.zone.min_patch_radius);
    p.field("zone_w_dist", q.zone.w_dist);
    p.field("zone_w_flatness", q.zone.w_flatness);
    p.field("zone_min_navigable_fraction", q.zone.min_navigable_fraction);
    p.field("dbscan_eps", q.dbscan_eps);
    p.field("dbscan_min_pts", q.dbscan_min_pts);
    p.field("voxel_size", q.voxel_size);
    p.field("fusion_alpha", q.fusion_alpha);
    p.field("aoi_radius", q.aoi_radius);
    p.field("w_center", q.weights.w_center);
    p.field("w_range", q.weights.w_range);
    p.field("ground_band", q.ground_band);
    p.field("rate_hz", q.rate_hz);
    p.field("map_rate_hz", q.map_rate_hz);
    p.field("depth_noise", q.depth_noise);
    p.field("self_filter_radius", q.self_filter_radius);
  });
  v.object("control", [&](V& k) {
    k.object("winch_gains", [&](V& g) { visit_gains(g, c.control.winch); });
    k.object("tracking_gains", [&](V& g) { visit_gains(g, c.control.tracking); });
    k.field("spline_degree", c.control.spline_degree);
    k.field("arm_lookahead", c.control.arms.lookahead);
    k.field("arm_default_angle", c.control.arms.default_angle);
    k.field("servo_gain", c.control.servo_gain);
    k.field("ugv_speed", c.control.ugv_speed);
    k.field("waypoint_tolerance", c.control.waypoint_tolerance);
    k.field("altitude_gain", c.control.altitude_gain);
  });
  v.object("mission", [&](V& m) {
    MissionConfig& q = c.mission;
    m.field("mode", q.mode);
    m.field("d_min", q.d_min);
    m.field("touchdown_threshold", q.touchdown_threshold);
    m.field("detach_verify_threshold", q.detach_verify_threshold);
    m.field("max_attempts", q.max_attempts);
    m.field("descent_rate", q.descent_rate);
    m.field("approach_rate", q.approach_rate);
    m.field("approach_height", q.approach_height);
    m.field("retract_rate", q.retract_rate);
    m.field("slack_length", q.slack_length);
    m.field("reattempt_lift", q.reattempt_lift);
    m.field("verify_window", q.verify_window);
    m.field("stationary_speed", q.stationary_speed);
    m.field("release_delay", q.release_delay);
    m.field("touchdown_rule", q.touchdown_rule);
    m.field("ground_ops_waypoints", q.ground_ops_waypoints);
    m.field("scan_altitude", q.scan_altitude);
    m.field("scan_dwell", q.scan_dwell);
    m.field("deploy_altitude", q.deploy_altitude);
    m.field("settle_time", q.settle_time);
    m.field("retrieval_altitude", q.retrieval_altitude);
    m.field("align_tolerance_px", q.align_tolerance_px);
    m.field("align_frames", q.align_frames);
    m.field("reattach_slack", q.reattach_slack);
    m.field("max_reattach_tries", q.max_reattach_tries);
    m.field("phase_timeout", q.phase_timeout);
  });
  v.object("faults", [&](V& f) {
    f.field("epm_stuck_releases", c.faults.epm_stuck_releases);
    f.optional_object("camera_blackout", c.faults.camera_blackout, [&](V& b, CameraBlackout& o) {
      b.field("phase", o.phase);
      b.field("delay", o.delay);
      b.field("duration", o.duration);
    });
    f.field("swing_noise", c.faults.swing_noise);
    f.field("force_flip", c.faults.force_flip);
  });
  v.field("start_at_retrieval", c.start_at_retrieval);
  v.field("retrieval_ugv_xy", c.retrieval_ugv_xy);
}

class Checker {
 public:
  void require(bool ok, const std::string& field, const std::string& message) {
    if (!ok) out.push_back({field, message});
  }
  void positive(double v, const std::string& field) {
    require(std::isfinite(v) && v > 0.0, field, "must be > 0");
  }
  void non_negative(double v, const std::string& field) {
    require(std::isfinite(v) && v >= 0.0, field, "must be >= 0");
  }
  void finite(const Vec3& v, const std::string& field) {
    require(all_finite(v), field, "must be finite");
  }
  void gains(const PidGains& g, const std::string& field) {
    require(std::isfinite(g.kp) && std::isfinite(g.ki) && std::isfinite(g.kd), field,
            "gains must be finite");
    require(g.i_min <= g.i_max, field + ".i_min", "must be <= i_max");
    require(g.out_min <= g.out_max, field + ".out_min", "must be <= out_max");
  }
  void footprint(const Footprint& f, const std::string& field) {
    positive(f.length_mm, field + ".length_mm");
    positive(f.width_mm, field + ".width_mm");
    positive(f.height_mm, field + ".height_mm");
  }

  std::vector<ConfigViolation> out;
};

}  // namespace

ScenarioConfig parse_config_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigParseError("config root must be an object", 0, "");
  ScenarioConfig c;
  Reader r(j, "", nullptr);
  visit(r, c);
  r.finish();
  return c;
}

ScenarioConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    const size_t pos = std::min<size_t>(e.byte, text.size());
    const int line =
        1 + static_cast<int>(std::count(text.begin(), text.begin() + pos, '\n'));
    throw ConfigParseError("line " + std::to_string(line) + ": malformed JSON", line, "");
  }
  if (!j.is_object()) throw ConfigParseError("line 1: config root must be an object", 1, "");
  ScenarioConfig c;
  Reader r(j, "", &text);
  visit(r, c);
  r.finish();
  return c;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  ScenarioConfig c = parse_config(ss.str());
  std::filesystem::path hf = c.terrain.heightfield_file;
  if (!hf.empty() && hf.is_relative())
    c.terrain.heightfield_file = (std::filesystem::path(path).parent_path() / hf).string();
  return c;
}

nlohmann::ordered_json config_to_json(const ScenarioConfig& config) {
  ojson j = ojson::object();
  ScenarioConfig copy = config;
  Writer w(j);
  visit(w, copy);
  return j;
}

std::vector<ConfigViolation> validate_config(const ScenarioConfig& c) {
  Checker k;

  k.positive(c.duration_limit, "duration_limit");
  k.positive(c.dt, "dt");

  const TerrainSpec& t = c.terrain;
  k.require(t.kind == "flat" || t.kind == "ramp" || t.kind == "heightfield" ||
                t.kind == "procedural",
            "terrain.kind", "must be flat, ramp, heightfield or procedural");
  k.positive(t.cell_size, "terrain.cell_size");
  if (t.kind != "heightfield") {
    const bool grid_ok = t.cell_size > 0.0 && t.width >= t.cell_size && t.depth >= t.cell_size;
    k.require(grid_ok, "terrain.width", "terrain needs at least 2 x 2 samples");
    k.require(std::isfinite(t.height) && all_finite(Vec3(t.slope.x(), t.slope.y(), 0.0)),
              "terrain.height", "heights must be finite");
    k.require(std::isfinite(t.origin.x()) && std::isfinite(t.origin.y()), "terrain.origin",
              "must be finite");
  } else {
    try {
      load_heightfield(t.heightfield_file);
    } catch (const std::exception& e) {
      k.require(false, "terrain.heightfield_file", e.what());
    }
  }
  if (t.kind == "procedural") {
    k.non_negative(t.amplitude, "terrain.amplitude");
    k.positive(t.wavelength, "terrain.wavelength");
  }
  for (size_t i = 0; i < c.obstacles.size(); ++i) {
    const Box& b = c.obstacles[i];
    const std::string f = "obstacles[" + std::to_string(i) + "]";
    k.require(all_finite(b.min) && all_finite(b.max) && (b.min.array() < b.max.array()).all(),
              f, "box needs finite min < max on every axis");
  }
  k.finite(c.entry_point, "entry_point");

  k.finite(c.uav_start.position, "uav.position");
  k.require(std::isfinite(c.uav_start.yaw) && c.uav_start.yaw >= -kPi && c.uav_start.yaw < kPi,
            "uav.yaw", "must be in [-pi, pi)");
  k.positive(c.uav_max_speed, "uav.max_speed");
  k.positive(c.payload_capacity, "uav.payload_capacity");

  k.positive(c.masses.tether_module, "masses.tether_module");
  k.positive(c.masses.head, "masses.head");
  k.positive(c.masses.ugv, "masses.ugv");
  k.require(std::isfinite(c.masses.payload) && c.masses.payload >= 0.0 &&
                c.masses.payload <= 3.5,
            "masses.payload", "must be in [0, 3.5] kg");
  const double total = c.masses.total();
  if (std::isfinite(total) && std::isfinite(c.payload_capacity) && total > c.payload_capacity) {
    std::ostringstream msg;
    msg << "mass budget exceeded: suspended mass " << total << " kg > payload capacity "
        << c.payload_capacity << " kg";
    k.require(false, "masses", msg.str());
  }

  k.footprint(c.footprint, "ugv.footprint");
  k.footprint(c.footprint_extended, "ugv.footprint_extended");
  k.positive(c.attachment_area_mm, "ugv.attachment_area_mm");
  const Footprint& stowed = c.stow_arms ? c.footprint : c.footprint_extended;
  const std::string fp_field = c.stow_arms ? "ugv.footprint" : "ugv.footprint_extended";
  if (stowed.length_mm > c.attachment_area_mm || stowed.width_mm > c.attachment_area_mm) {
    std::ostringstream msg;
    msg << "footprint " << stowed.length_mm << " x " << stowed.width_mm
        << " mm exceeds the " << c.attachment_area_mm << " mm attachment area"
        << (c.stow_arms ? "" : " (arms not stowed)");
    k.require(false, fp_field, msg.str());
  }

  const WinchState& w = c.winch;
  k.positive(w.max_length, "winch.max_length");
  k.require(w.deployed_length >= 0.0 && w.deployed_length <= w.max_length,
            "winch.initial_length", "must be in [0, max_length]");
  k.require(w.stowed_length >= 0.0 && w.stowed_length <= w.max_length,
            "winch.stowed_length", "must be in [0, max_length]");
  k.positive(w.drum_radius, "winch.drum_radius");
  k.require(w.encoder_cpr > 0, "winch.encoder_cpr", "must be > 0");
  k.finite(w.anchor_offset, "winch.anchor_offset");
  k.positive(w.motor_time_constant, "winch.motor_time_constant");
  k.positive(w.max_rate, "winch.max_rate");

  k.positive(c.head_radius, "head.radius");
  k.positive(c.capture_radius, "head.capture_radius");

  const CameraIntrinsics& cam = c.camera;
  k.require(cam.width > 0, "camera.width", "must be > 0");
  k.require(cam.height > 0, "camera.height", "must be > 0");
  k.positive(cam.fx, "camera.fx");
  k.positive(cam.fy, "camera.fy");
  k.require(cam.cx >= 0.0 && cam.cx < cam.width, "camera.cx", "must be in [0, width)");
  k.require(cam.cy >= 0.0 && cam.cy < cam.height, "camera.cy", "must be in [0, height)");
  k.positive(cam.max_range, "camera.max_range");

  const PerceptionParams& p = c.perception;
  k.require(p.normal_k >= 3, "perception.normal_k", "must be >= 3");
  k.require(p.slope_threshold_deg > 0.0 && p.slope_threshold_deg < 90.0,
            "perception.slope_threshold_deg", "must be in (0, 90)");
  k.positive(p.zone.min_patch_radius, "perception.zone_patch_radius");
  k.non_negative(p.zone.w_dist, "perception.zone_w_dist");
  k.non_negative(p.zone.w_flatness, "perception.zone_w_flatness");
  k.require(p.zone.min_navigable_fraction > 0.0 && p.zone.min_navigable_fraction <= 1.0,
            "perception.zone_min_navigable_fraction", "must be in (0, 1]");
  k.positive(p.dbscan_eps, "perception.dbscan_eps");
  k.require(p.dbscan_min_pts >= 1, "perception.dbscan_min_pts", "must be >= 1");
  k.positive(p.voxel_size, "perception.voxel_size");
  k.require(p.fusion_alpha >= 0.0 && p.fusion_alpha <= 1.0, "perception.fusion_alpha",
            "must be in [0, 1]");
  k.positive(p.aoi_radius, "perception.aoi_radius");
  k.non_negative(p.weights.w_center, "perception.w_center");
  k.non_negative(p.weights.w_range, "perception.w_range");
  k.require(p.weights.w_center + p.weights.w_range > 0.0, "perception.w_center",
            "selection weights must not both be zero");
  k.positive(p.ground_band, "perception.ground_band");
  k.positive(p.rate_hz, "perception.rate_hz");
  k.positive(p.map_rate_hz, "perception.map_rate_hz");
  k.non_negative(p.depth_noise, "perception.depth_noise");
  k.non_negative(p.self_filter_radius, "perception.self_filter_radius");

  const ControlParams& ctl = c.control;
  k.gains(ctl.winch, "control.winch_gains");
  k.gains(ctl.tracking, "control.tracking_gains");
  k.require(ctl.spline_degree >= 1, "control.spline_degree", "must be >= 1");
  k.positive(ctl.arms.lookahead, "control.arm_lookahead");
  k.require(std::isfinite(ctl.arms.default_angle), "control.arm_default_angle",
            "must be finite");
  k.positive(ctl.servo_gain, "control.servo_gain");
  k.positive(ctl.ugv_speed, "control.ugv_speed");
  k.positive(ctl.waypoint_tolerance, "control.waypoint_tolerance");
  k.positive(ctl.altitude_gain, "control.altitude_gain");

  const MissionConfig& m = c.mission;
  k.positive(m.d_min, "mission.d_min");
  k.positive(m.touchdown_threshold, "mission.touchdown_threshold");
  k.positive(m.detach_verify_threshold, "mission.detach_verify_threshold");
  k.require(m.max_attempts >= 1, "mission.max_attempts", "must be >= 1");
  k.positive(m.descent_rate, "mission.descent_rate");
  k.positive(m.approach_rate, "mission.approach_rate");
  k.non_negative(m.approach_height, "mission.approach_height");
  k.positive(m.retract_rate, "mission.retract_rate");
  k.non_negative(m.slack_length, "mission.slack_length");
  k.positive(m.reattempt_lift, "mission.reattempt_lift");
  k.require(m.verify_window >= 2, "mission.verify_window", "must be >= 2");
  k.positive(m.stationary_speed, "mission.stationary_speed");
  k.non_negative(m.release_delay, "mission.release_delay");
  for (size_t i = 0; i < m.ground_ops_waypoints.size(); ++i) {
    const Vec2& q = m.ground_ops_waypoints[i];
    k.require(std::isfinite(q.x()) && std::isfinite(q.y()),
              "mission.ground_ops_waypoints[" + std::to_string(i) + "]", "must be finite");
  }
  k.positive(m.scan_altitude, "mission.scan_altitude");
  k.non_negative(m.scan_dwell, "mission.scan_dwell");
  k.positive(m.deploy_altitude, "mission.deploy_altitude");
  k.non_negative(m.settle_time, "mission.settle_time");
  k.positive(m.retrieval_altitude, "mission.retrieval_altitude");
  k.positive(m.align_tolerance_px, "mission.align_tolerance_px");
  k.require(m.align_frames >= 1, "mission.align_frames", "must be >= 1");
  k.non_negative(m.reattach_slack, "mission.reattach_slack");
  k.require(m.max_reattach_tries >= 0, "mission.max_reattach_tries", "must be >= 0");
  k.positive(m.phase_timeout, "mission.phase_timeout");
  k.require(m.deploy_altitude < c.camera.max_range, "mission.deploy_altitude",
            "must be below camera.max_range");

  k.require(c.faults.epm_stuck_releases >= 0, "faults.epm_stuck_releases", "must be >= 0");
  k.non_negative(c.faults.swing_noise, "faults.swing_noise");
  if (c.faults.camera_blackout) {
    const CameraBlackout& b = *c.faults.camera_blackout;
    k.require(phase_from_string(b.phase).has_value(), "faults.camera_blackout.phase",
              "unknown phase name");
    k.non_negative(b.delay, "faults.camera_blackout.delay");
    k.non_negative(b.duration, "faults.camera_blackout.duration");
  }
  return k.out;
}

Terrain load_heightfield(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read heightfield " + path);
  Terrain t;
  double ox = 0.0, oy = 0.0;
  if (!(in >> t.rows >> t.cols >> t.cell_size >> ox >> oy))
    throw std::runtime_error("heightfield " + path + ": bad header");
  if (t.rows < 2 || t.cols < 2 || t.rows > 100000 || t.cols > 100000)
    throw std::runtime_error("heightfield " + path + ": needs rows, cols >= 2");
  t.origin = Vec2(ox, oy);
  t.heights.resize(static_cast<size_t>(t.rows) * t.cols);
  for (double& h : t.heights)
    if (!(in >> h)) throw std::runtime_error("heightfield " + path + ": too few heights");
  t.validate();
  return t;
}

Terrain build_terrain(const TerrainSpec& s) {
  Terrain t;
  if (s.kind == "flat") {
    t = Terrain::flat(s.origin, s.width, s.depth, s.cell_size, s.height);
  } else if (s.kind == "ramp") {
    t = Terrain::ramp(s.origin, s.width, s.depth, s.cell_size, s.slope, s.height);
  } else if (s.kind == "procedural") {
    t = Terrain::procedural(s.origin, s.width, s.depth, s.cell_size, s.seed, s.amplitude,
                            s.wavelength);
    for (double& h : t.heights) h += s.height;
  } else if (s.kind == "heightfield") {
    t = load_heightfield(s.heightfield_file);
  } else {
    throw std::invalid_argument("unknown terrain kind " + s.kind);
  }
  t.validate();
  return t;
}

}  // namespace marsupial
