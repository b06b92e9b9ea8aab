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

#include "marsupial/runner.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include "marsupial/control.h"
#include "marsupial/perception.h"
#include "marsupial/sensors.h"

namespace marsupial {

namespace {

using ojson = nlohmann::ordered_json;

constexpr double kGoalTolerance = 0.05;
constexpr double kGoalSpeed = 0.1;
constexpr double kHoldGain = 1.0;
// Extra radius around the predicted head used to split its points off.
constexpr double kHeadGate = 0.015;
// Vehicle exclusion radius when building the map.
constexpr double kUgvMaskRadius = 0.4;
// Tracking clouds are thinned to this spacing before clustering.
constexpr double kTrackVoxel = 0.02;
// Vision above the encoder prediction by more than this means the tether is
// slack (vehicle resting on the ground) and the encoder depth is not usable.
constexpr double kSlackGate = 0.15;
// Baseline for the vision speed estimate, seconds.
constexpr double kSpeedWindow = 1.0;

ojson nullable(const std::optional<double>& v) {
  return v ? ojson(*v) : ojson(nullptr);
}

ojson vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

// First point per voxel, in input order.
PointCloud voxel_downsample(const PointCloud& in, double voxel) {
  PointCloud out;
  std::unordered_set<uint64_t> seen;
  seen.reserve(in.size());
  constexpr uint64_t kMask = (1ull << 21) - 1;
  for (const Vec3& p : in.points) {
    const auto c = [&](double v) {
      return static_cast<uint64_t>(static_cast<int64_t>(std::floor(v / voxel))) & kMask;
    };
    if (seen.insert(c(p.x()) | (c(p.y()) << 21) | (c(p.z()) << 42)).second)
      out.points.push_back(p);
  }
  return out;
}

// Highest mapped surface per 2-D cell; used to strip the known background
// from tracking frames.
class SurfaceIndex {
 public:
  explicit SurfaceIndex(double cell) : cell_(cell) {}

  void rebuild(const std::vector<Vec3>& points) {
    top_.clear();
    for (const Vec3& p : points) {
      auto [it, fresh] = top_.try_emplace(key(p.x(), p.y()), p.z());
      if (!fresh) it->second = std::max(it->second, p.z());
    }
  }

  bool empty() const { return top_.empty(); }

  // Highest surface in the 3 x 3 cell neighbourhood, if any was mapped.
  std::optional<double> surface(const Vec3& p) const {
    const int64_t cx = cell_index(p.x()), cy = cell_index(p.y());
    std::optional<double> best;
    for (int64_t dx = -1; dx <= 1; ++dx) {
      for (int64_t dy = -1; dy <= 1; ++dy) {
        auto it = top_.find(pack(cx + dx, cy + dy));
        if (it != top_.end()) best = std::max(best.value_or(it->second), it->second);
      }
    }
    return best;
  }

 private:
  int64_t cell_index(double v) const { return static_cast<int64_t>(std::floor(v / cell_)); }
  static uint64_t pack(int64_t x, int64_t y) {
    return (static_cast<uint64_t>(x) << 32) ^ (static_cast<uint64_t>(y) & 0xffffffffULL);
  }
  uint64_t key(double x, double y) const { return pack(cell_index(x), cell_index(y)); }

  double cell_;
  std::unordered_map<uint64_t, double> top_;
};

struct Flight {
  bool active = false;
  BSpline spline;
  double t0 = 0.0;
  Vec3 goal = Vec3::Zero();
  std::array<PidState, 3> pid{};
};

class Runner {
 public:
  Runner(const ScenarioConfig& config, const RunOptions& options);
  RunReport run();

 private:
  void tick();
  void perceive(double now, double encoder_len, const Vec3& anchor, bool blank);
  void map_frame(const PointCloud& cloud, const Vec3& anchor, double encoder_len);
  void run_zone_search();
  void control_step(WorldCommands& cmd);
  void step_uav(WorldCommands& cmd);
  void step_ugv(WorldCommands& cmd);
  void propagate_estimates(double encoder_len);
  void log(const std::string& kind, ojson payload);
  void log_world_events(const std::vector<WorldEvent>& events);
  void sample_trajectories();
  bool camera_blank(double now) const;
  bool tracking_phase() const;
  void finish(RunReport& report);

  ScenarioConfig cfg_;
  RunOptions opt_;
  uint64_t seed_;
  MissionConfig mcfg_;
  WorldState world_;
  AccumulatedMap map_;
  SurfaceIndex surface_;
  bool surface_stale_ = true;
  MissionState ms_;
  MissionCommands mc_;
  EventLog log_;

  int perception_every_ = 10;
  int map_every_ = 100;
  uint64_t ticks_ = 0;

  // Estimator state.
  std::optional<TrackEstimate> head_est_;
  std::optional<TrackEstimate> ugv_est_;  // attachment point
  double head_est_len_ = 0.0;             // encoder length at the last update
  double ugv_est_len_ = 0.0;
  bool ugv_est_follows_tether_ = true;
  bool tether_slack_ = false;
  std::deque<std::pair<double, Vec3>> ugv_vision_history_;
  double ugv_speed_ = 0.0;
  std::optional<double> pixel_error_;
  Vec3 servo_velocity_ = Vec3::Zero();
  bool epm_commanded_on_ = true;
  std::optional<ZoneSearchResult> zone_result_;

  // Controllers.
  Flight flight_;
  UavMode last_uav_mode_ = UavMode::kHold;
  Vec3 hold_position_ = Vec3::Zero();
  double tracking_error_ = 0.0;
  double peak_tracking_error_ = 0.0;
  PidState winch_pid_;
  std::optional<bool> pending_epm_;
  size_t waypoint_ = 0;
  ArmCommand arm_target_;

  std::optional<double> blackout_start_;

  std::vector<TrajectorySample> uav_traj_, ugv_traj_, head_traj_;
};

Runner::Runner(const ScenarioConfig& config, const RunOptions& options)
    : cfg_(config),
      opt_(options),
      seed_(options.seed.value_or(config.seed)),
      map_(config.perception.voxel_size),
      surface_(config.perception.voxel_size) {
  auto terrain = std::make_shared<const Terrain>(build_terrain(cfg_.terrain));

  UavState uav;
  uav.pose = cfg_.uav_start;
  uav.max_speed = cfg_.uav_max_speed;
  uav.payload_capacity = cfg_.payload_capacity;

  TetherHeadState head;
  head.radius = cfg_.head_radius;
  head.capture_radius = cfg_.capture_radius;
  head.attached = !cfg_.start_at_retrieval;
  head.epm_on = true;

  UgvState ugv;
  ugv.mass = cfg_.masses.ugv;
  ugv.payload_mass = cfg_.masses.payload;
  ugv.carrying_payload = cfg_.masses.payload > 0.0;
  ugv.footprint = cfg_.footprint;
  ugv.footprint_extended = cfg_.footprint_extended;

  WinchState winch = cfg_.winch;
  if (cfg_.start_at_retrieval) {
    winch.deployed_length = winch.stowed_length;
    ugv.pose.position = Vec3(cfg_.retrieval_ugv_xy.x(), cfg_.retrieval_ugv_xy.y(), 0.0);
  }

  WorldParams params;
  params.swing_noise = cfg_.faults.swing_noise;
  params.force_flip_on_touchdown = cfg_.faults.force_flip;

  world_ = make_world(std::move(terrain), uav, winch, head, ugv, params, cfg_.dt, seed_);
  world_.structures = cfg_.obstacles;
  world_.epm_release_faults = cfg_.faults.epm_stuck_releases;

  mcfg_ = cfg_.mission;
  mcfg_.scan_target = cfg_.entry_point.head<2>();
  mcfg_.stowed_length = cfg_.winch.stowed_length;
  mcfg_.ugv_height = world_.ugv.height();
  mcfg_.head_radius = cfg_.head_radius;

  perception_every_ =
      std::max(1, static_cast<int>(std::lround(1.0 / (cfg_.perception.rate_hz * cfg_.dt))));
  map_every_ =
      std::max(1, static_cast<int>(std::lround(1.0 / (cfg_.perception.map_rate_hz * cfg_.dt))));

  log_.header.scenario = cfg_.name;
  log_.header.seed = seed_;
  log_.header.dt = cfg_.dt;

  hold_position_ = world_.uav.pose.position;
  if (cfg_.start_at_retrieval) {
    // Retrieval harness: the map is inherited from the deployment, and the
    // vehicle has just reported its position.
    epm_commanded_on_ = true;
    const PointCloud frame =
        depth_to_cloud(render_depth(world_, cfg_.camera, {}), Frame::kWorld);
    map_frame(frame, anchor_world(world_), world_.winch.deployed_length);
    ms_.phase = Phase::kAlignForRetrieval;
    ms_.entered_at = 0.0;
    TrackEstimate reported;
    reported.position = world_.ugv.attach_point();
    reported.horizontal_source = HorizontalSource::kHoldLast;
    ugv_est_ = reported;
    ugv_est_follows_tether_ = false;
    log("harness_start", {{"phase", to_string(ms_.phase)},
                          {"ugv", vec_json(world_.ugv.pose.position)}});
  }
}

void Runner::log(const std::string& kind, ojson payload) {
  EventLogEntry e;
  e.time = world_.time;
  e.phase = ms_.phase;
  e.kind = kind;
  e.payload = std::move(payload);
  log_.entries.push_back(std::move(e));
}

void Runner::log_world_events(const std::vector<WorldEvent>& events) {
  for (const WorldEvent& ev : events) {
    ojson p;
    p["detail"] = ev.detail;
    if (ev.kind == WorldEventKind::kDetach) {
      const Vec3& u = world_.ugv.pose.position;
      p["clearance_true"] = u.z() - terrain_height_clamped(*world_.terrain, u.x(), u.y());
    }
    log("world_" + to_string(ev.kind), std::move(p));
  }
}

bool Runner::camera_blank(double now) const {
  if (!cfg_.faults.camera_blackout || !blackout_start_) return false;
  return now >= *blackout_start_ && now < *blackout_start_ + cfg_.faults.camera_blackout->duration;
}

bool Runner::tracking_phase() const {
  switch (ms_.phase) {
    case Phase::kLowerTether:
    case Phase::kVerifyTouchdown:
    case Phase::kDetach:
    case Phase::kGroundOps:
    case Phase::kReturnAndSignal:
    case Phase::kAlignForRetrieval:
    case Phase::kReattach:
      return true;
    default:
      return false;
  }
}

void Runner::map_frame(const PointCloud& cloud, const Vec3& anchor, double encoder_len) {
  if (map_.paused()) return;
  const double r_self = cfg_.perception.self_filter_radius;
  const Vec3 head_pred = anchor - Vec3(0.0, 0.0, encoder_len);
  const Vec3 ugv = world_.ugv.pose.position;  // reported by the vehicle
  const double ugv_top = ugv.z() + world_.ugv.height() + 2.0 * cfg_.head_radius + 0.05;
  PointCloud kept;
  kept.points.reserve(cloud.size());
  for (const Vec3& p : cloud.points) {
    if ((p - anchor).norm() < r_self) continue;
    if ((p - head_pred).norm() < 4.0 * cfg_.head_radius) continue;
    if ((p - ugv).head<2>().norm() < kUgvMaskRadius && p.z() < ugv_top) continue;
    kept.points.push_back(p);
  }
  const size_t before = map_.voxel_count();
  accumulate_map_inplace(map_, kept);
  if (map_.voxel_count() != before) surface_stale_ = true;
}

void Runner::run_zone_search() {
  const PointCloud cloud = map_.to_cloud();
  const PerceptionParams& p = cfg_.perception;
  ZoneSearchResult result;
  if (cloud.size() < static_cast<size_t>(p.normal_k)) {
    result.reason = ZoneFailure::kEmptyCloud;
  } else {
    const NormalCloud normals = estimate_normals(cloud, p.normal_k, 4.0 * p.voxel_size);
    const NavigabilityMask mask = segment_navigable(normals, deg2rad(p.slope_threshold_deg));
    result = find_deployment_zone(cloud, mask, cfg_.entry_point, p.zone);
  }
  zone_result_ = result;
}

void Runner::perceive(double now, double encoder_len, const Vec3& anchor, bool blank) {
  const PerceptionParams& pp = cfg_.perception;
  const double r_h = cfg_.head_radius;
  const Vec3 head_pred = anchor - Vec3(0.0, 0.0, encoder_len);
  const bool latched = epm_commanded_on_ && world_.head.attached;

  const bool want_map = !ms_.map_paused && !blank &&
                        (ms_.phase == Phase::kScanAndMap ||
                         ticks_ % std::max(1, map_every_ / perception_every_) == 0);
  const bool want_track = tracking_phase() && !blank;

  const bool hanging = latched && !tether_slack_;
  Vec3 ugv_pred = hanging ? Vec3(head_pred - Vec3(0.0, 0.0, r_h))
                          : (ugv_est_ ? ugv_est_->position : world_.ugv.attach_point());
  const Vec3 head_track = latched && !hanging && ugv_est_
                             ? Vec3(ugv_est_->position + Vec3(0.0, 0.0, r_h))
                             : head_pred;

  PointCloud frame;
  bool full_frame = false;
  RenderOptions ro;
  ro.noise_sigma = pp.depth_noise;
  ro.noise_seed = seed_ * 1000003ULL + world_.step_count;
  if (want_map) {
    frame = depth_to_cloud(render_depth(world_, cfg_.camera, ro), Frame::kWorld);
    full_frame = true;
    map_frame(frame, anchor, encoder_len);
  }

  const Cluster* ugv_cluster = nullptr;
  const Cluster* head_cluster = nullptr;
  DbscanResult ugv_db, head_db;
  std::optional<Vec3> ugv_vision;
  if (want_track) {
    if (!full_frame) {
      const CameraIntrinsics& in = cfg_.camera;
      int u0 = in.width, v0 = in.height, u1 = 0, v1 = 0;
      bool any = false;
      std::vector<Vec3> targets{ugv_pred};
      if (latched) targets.push_back(head_track);
      for (const Vec3& q : targets) {
        const Vec3 px = project_world_point(in, world_.uav.pose, q);
        if (!(px.z() > 0.05)) continue;
        const double margin = std::max(8.0, (pp.aoi_radius + 0.1) * in.fx / px.z());
        u0 = std::min(u0, static_cast<int>(std::floor(px.x() - margin)));
        v0 = std::min(v0, static_cast<int>(std::floor(px.y() - margin)));
        u1 = std::max(u1, static_cast<int>(std::ceil(px.x() + margin)) + 1);
        v1 = std::max(v1, static_cast<int>(std::ceil(px.y() + margin)) + 1);
        any = true;
      }
      if (any) {
        ro.roi = std::array<int, 4>{u0, v0, u1, v1};
        frame = depth_to_cloud(render_depth(world_, cfg_.camera, ro), Frame::kWorld);
      }
    }
    if (surface_stale_) {
      surface_.rebuild(map_.points());
      surface_stale_ = false;
    }
    // Foreground near the tether and the predicted vehicle position.
    const double crop = pp.aoi_radius + 0.5;
    PointCloud head_pts, rest;
    for (const Vec3& p : frame.points) {
      const std::optional<double> ground = surface_.surface(p);
      if (ground && p.z() <= *ground + pp.ground_band) continue;
      if ((p - ugv_pred).head<2>().norm() > crop && (p - head_track).head<2>().norm() > crop)
        continue;
      if ((p - head_track).norm() <= r_h + kHeadGate) {
        head_pts.points.push_back(p);
      } else {
        rest.points.push_back(p);
      }
    }
    head_pts = voxel_downsample(head_pts, kTrackVoxel);
    rest = voxel_downsample(rest, kTrackVoxel);
    ugv_db = dbscan(rest, pp.dbscan_eps, pp.dbscan_min_pts);
    AreaOfInterest aoi;
    aoi.origin = Vec3(ugv_pred.x(), ugv_pred.y(), anchor.z());
    aoi.radius = pp.aoi_radius;
    if (auto idx = select_target_cluster(ugv_db.clusters, aoi, pp.weights)) {
      ugv_cluster = &ugv_db.clusters[*idx];
      ugv_vision = ugv_cluster->centroid;
    }
    if (latched) {
      head_db = dbscan(head_pts, pp.dbscan_eps, std::min(pp.dbscan_min_pts, 3));
      AreaOfInterest head_aoi;
      head_aoi.origin = Vec3(anchor.x(), anchor.y(), anchor.z());
      head_aoi.radius = pp.aoi_radius;
      if (auto idx = select_target_cluster(head_db.clusters, head_aoi, pp.weights))
        head_cluster = &head_db.clusters[*idx];
    }
  }

  if (latched && ugv_cluster)
    tether_slack_ = ugv_cluster->centroid.z() - (head_pred.z() - r_h) > kSlackGate;
  else if (!latched)
    tether_slack_ = false;
  const bool slack = latched && tether_slack_;

  // Head: fused while latched; encoder-only once released. With a slack
  // tether only vision is trusted.
  if (slack) {
    if (head_cluster) {
      head_est_ = fuse_head_estimate(head_cluster, encoder_len, anchor, head_est_, now, 1.0);
    } else if (ugv_est_) {
      TrackEstimate e = *ugv_est_;
      e.position.z() += r_h;
      e.timestamp = now;
      head_est_ = e;
    }
  } else if (latched) {
    head_est_ = fuse_head_estimate(head_cluster, encoder_len, anchor, head_est_, now,
                                   pp.fusion_alpha);
  } else {
    head_est_ = fuse_head_estimate(nullptr, encoder_len, anchor, std::nullopt, now);
  }
  head_est_len_ = encoder_len;

  // Vehicle attachment point.
  if (slack) {
    if (ugv_cluster) {
      ugv_est_ = fuse_head_estimate(ugv_cluster, encoder_len + r_h, anchor, ugv_est_, now, 1.0);
    } else if (ugv_est_) {
      ugv_est_->horizontal_source = HorizontalSource::kHoldLast;
    }
    ugv_est_follows_tether_ = false;
  } else if (latched) {
    ugv_est_ = fuse_head_estimate(ugv_cluster, encoder_len + r_h, anchor, ugv_est_, now,
                                  pp.fusion_alpha);
    ugv_est_follows_tether_ = true;
    ugv_est_len_ = encoder_len;
  } else if (ugv_vision) {
    TrackEstimate e;
    e.position = *ugv_vision;
    e.timestamp = now;
    ugv_est_ = e;
    ugv_est_follows_tether_ = false;
  } else if (ugv_est_) {
    ugv_est_->horizontal_source = HorizontalSource::kHoldLast;
    ugv_est_follows_tether_ = false;
  }

  if (ugv_vision) {
    // Displacement over about one second; frame-to-frame centroid jitter
    // would otherwise dominate at low speeds.
    auto& h = ugv_vision_history_;
    h.emplace_back(now, *ugv_vision);
    while (h.size() > 2 && now - h[1].first >= kSpeedWindow) h.pop_front();
    if (h.size() >= 2 && now > h.front().first)
      ugv_speed_ = (h.back().second - h.front().second).norm() / (now - h.front().first);
  } else {
    ugv_vision_history_.clear();
  }

  // Image-space alignment error for retrieval.
  pixel_error_.reset();
  servo_velocity_ = Vec3::Zero();
  if (ugv_vision && ugv_est_) {
    const Vec3 target = ugv_est_->position;
    const Vec3 below_anchor(anchor.x(), anchor.y(), target.z());
    const Vec3 seen = project_world_point(cfg_.camera, world_.uav.pose, target);
    const Vec3 want = project_world_point(cfg_.camera, world_.uav.pose, below_anchor);
    const Vec2 err(seen.x() - want.x(), seen.y() - want.y());
    pixel_error_ = err.norm();
    const double altitude = world_.uav.pose.position.z() - target.z();
    if (altitude > 0.0) {
      const Vec2 px(cfg_.camera.cx + err.x(), cfg_.camera.cy + err.y());
      servo_velocity_ = servo_alignment(px, cfg_.camera, altitude, cfg_.control.servo_gain,
                                        world_.uav.pose.yaw)
                            .linear;
    }
  }
}

void Runner::propagate_estimates(double encoder_len) {
  // Encoder prediction between perception frames.
  if (head_est_ && !(tether_slack_ && epm_commanded_on_)) {
    head_est_->position.z() -= encoder_len - head_est_len_;
  }
  head_est_len_ = encoder_len;
  if (ugv_est_ && ugv_est_follows_tether_) {
    ugv_est_->position.z() -= encoder_len - ugv_est_len_;
    ugv_est_len_ = encoder_len;
  }
}

void Runner::tick() {
  const double now = world_.time;
  const double encoder_len = length_from_encoder(read_encoder(world_.winch));
  const Vec3 anchor = anchor_world(world_);
  const bool blank = camera_blank(now);

  perceive(now, encoder_len, anchor, blank);
  if (mc_.request_zone_search && !zone_result_) run_zone_search();

  MissionObservations obs;
  obs.tether_length = encoder_len;
  obs.anchor = anchor;
  obs.head = head_est_;
  if (ugv_est_) {
    TrackEstimate bottom = *ugv_est_;
    bottom.position.z() -= world_.ugv.height();
    obs.ugv = bottom;
  }
  if (head_est_ && ugv_est_) obs.separation = (head_est_->position - ugv_est_->position).norm();
  obs.ugv_speed = ugv_speed_;
  obs.uav_at_goal = flight_.active &&
                    now - flight_.t0 >= flight_.spline.duration &&
                    (world_.uav.pose.position - flight_.goal).norm() < kGoalTolerance &&
                    world_.uav.velocity.norm() < kGoalSpeed;
  obs.zone_search = zone_result_;
  obs.head_attached = world_.head.attached;
  obs.ugv_route_done = waypoint_ >= mcfg_.ground_ops_waypoints.size();
  obs.ugv_upright = world_.ugv.pose.up_flag;
  obs.pixel_error = pixel_error_;
  obs.map_voxels = map_.voxel_count();

  const Phase before = ms_.phase;
  MissionStepResult step = mission_step(ms_, mcfg_, obs, now);
  ms_ = std::move(step.state);
  mc_ = step.commands;
  for (EventLogEntry& e : step.events) log_.entries.push_back(std::move(e));
  map_.set_paused(mc_.map_paused);
  if (mc_.epm) {
    pending_epm_ = mc_.epm;
    epm_commanded_on_ = *mc_.epm;
  }
  if (ms_.phase != before) {
    if (ms_.phase == Phase::kGroundOps) waypoint_ = 0;
    if (cfg_.faults.camera_blackout && !blackout_start_ &&
        to_string(ms_.phase) == cfg_.faults.camera_blackout->phase) {
      blackout_start_ = now + cfg_.faults.camera_blackout->delay;
    }
  }
  if (ms_.phase == Phase::kGroundOps && world_.ugv.grounded) {
    // Terrain patch under the vehicle, in its own frame.
    PointCloud patch;
    const Pose& pose = world_.ugv.pose;
    for (double x = -0.2; x <= 0.2001; x += 0.04) {
      for (double y = -0.16; y <= 0.1601; y += 0.04) {
        const Vec3 w = pose.position + rotate_yaw(Vec3(x, y, 0.0), pose.yaw);
        const double h = terrain_height_clamped(*world_.terrain, w.x(), w.y());
        patch.points.emplace_back(x, y, h - pose.position.z());
      }
    }
    UgvState ugv = world_.ugv;
    arm_target_ = compute_arm_angles(patch, ugv, cfg_.control.arms);
  }

  // Telemetry.
  ojson t;
  t["tether_length"] = encoder_len;
  std::optional<double> clearance_est;
  if (obs.ugv && ms_.zone) clearance_est = ms_.zone->plane.signed_distance(obs.ugv->position);
  t["clearance_est"] = nullable(clearance_est);
  const Vec3& u = world_.ugv.pose.position;
  t["clearance_true"] = u.z() - terrain_height_clamped(*world_.terrain, u.x(), u.y());
  t["separation"] = nullable(obs.separation);
  t["tracking_error"] = tracking_error_;
  std::optional<double> head_err;
  if (head_est_) head_err = (head_est_->position - world_.head.position).norm();
  t["head_error"] = nullable(head_err);
  t["map_voxels"] = map_.voxel_count();
  t["camera_blank"] = blank;
  log("telemetry", std::move(t));

  sample_trajectories();
  ++ticks_;
}

void Runner::sample_trajectories() {
  const double now = world_.time;
  uav_traj_.push_back({now, world_.uav.pose.position, world_.uav.pose.yaw});
  ugv_traj_.push_back({now, world_.ugv.pose.position, world_.ugv.pose.yaw});
  head_traj_.push_back({now, world_.head.position, 0.0});
}

void Runner::step_uav(WorldCommands& cmd) {
  UavState& uav = world_.uav;
  const UavMode mode = mc_.uav_mode;
  tracking_error_ = 0.0;
  if (mode == UavMode::kFlyTo) {
    const Vec3 offset = rotate_yaw(world_.winch.anchor_offset, uav.pose.yaw);
    const Vec3 goal(mc_.anchor_goal.x() - offset.x(), mc_.anchor_goal.y() - offset.y(),
                    mc_.uav_altitude);
    if (!flight_.active || (goal - flight_.goal).norm() > 0.01) {
      const Vec3 a = uav.pose.position;
      const double dist = (goal - a).norm();
      const double duration = std::max(2.0, 2.0 * dist / uav.max_speed);
      const std::vector<Vec3> ctrl{a, a, a + (goal - a) / 3.0, a + 2.0 * (goal - a) / 3.0,
                                   goal, goal};
      flight_.spline = bspline_from_waypoints(ctrl, cfg_.control.spline_degree, duration);
      flight_.t0 = world_.time;
      flight_.goal = goal;
      flight_.pid = {};
      flight_.active = true;
    }
    const std::array<PidGains, 3> gains{cfg_.control.tracking, cfg_.control.tracking,
                                        cfg_.control.tracking};
    const double t = std::min(world_.time - flight_.t0, flight_.spline.duration);
    const VelocityCommand v =
        track_trajectory(uav, flight_.spline, t, gains, flight_.pid, world_.dt);
    cmd.uav_velocity = v.linear;
    tracking_error_ = (bspline_eval(flight_.spline, t).position - uav.pose.position).norm();
    peak_tracking_error_ = std::max(peak_tracking_error_, tracking_error_);
  } else if (mode == UavMode::kServo) {
    flight_.active = false;
    cmd.uav_velocity = servo_velocity_;
    cmd.uav_velocity.z() = cfg_.control.altitude_gain * (mc_.uav_altitude - uav.pose.position.z());
  } else {
    flight_.active = false;
    if (last_uav_mode_ != UavMode::kHold) hold_position_ = uav.pose.position;
    cmd.uav_velocity = kHoldGain * (hold_position_ - uav.pose.position);
  }
  last_uav_mode_ = mode;
}

void Runner::step_ugv(WorldCommands& cmd) {
  UgvState& ugv = world_.ugv;
  const double rate_limit = 1.0;
  cmd.arm_rate_front = std::clamp(2.0 * (arm_target_.front_angle - ugv.arm_front), -rate_limit,
                                  rate_limit);
  cmd.arm_rate_rear =
      std::clamp(2.0 * (arm_target_.rear_angle - ugv.arm_rear), -rate_limit, rate_limit);
  if (mc_.ugv_mode != UgvMode::kFollowRoute || !ugv.grounded || !ugv.pose.up_flag) return;
  const auto& route = mcfg_.ground_ops_waypoints;
  while (waypoint_ < route.size() &&
         (route[waypoint_] - ugv.pose.position.head<2>()).norm() < cfg_.control.waypoint_tolerance)
    ++waypoint_;
  if (waypoint_ >= route.size()) return;
  const Vec2 d = route[waypoint_] - ugv.pose.position.head<2>();
  const double err = wrap_angle(std::atan2(d.y(), d.x()) - ugv.pose.yaw);
  const double v = cfg_.control.ugv_speed * std::max(0.0, std::cos(err)) *
                   std::min(1.0, d.norm() / 0.2 + 0.2);
  const double w = std::clamp(2.0 * err, -1.5, 1.5);
  cmd.track_left = v - 0.5 * w * ugv.track_width;
  cmd.track_right = v + 0.5 * w * ugv.track_width;
}

void Runner::control_step(WorldCommands& cmd) {
  step_uav(cmd);

  const double len = world_.winch.deployed_length;
  double target = mc_.winch_rate;
  if (target > 0.0 && len >= world_.winch.max_length - 0.01) target = 0.0;
  if (target < 0.0 && len <= world_.winch.stowed_length) target = 0.0;
  const WinchCommand wc = winch_rate_controller(target, world_.winch.rate, winch_pid_,
                                                cfg_.control.winch, world_.dt,
                                                world_.winch.max_rate);
  winch_pid_ = wc.state;
  // The correction may brake but never reverses the drum against the target.
  cmd.winch_rate = target > 0.0 ? std::max(wc.actuator, 0.0) : std::min(wc.actuator, 0.0);
  if (target == 0.0) cmd.winch_rate = 0.0;

  if (pending_epm_) {
    cmd.epm = pending_epm_;
    pending_epm_.reset();
  }
  step_ugv(cmd);
}

void Runner::finish(RunReport& r) {
  r.scenario = cfg_.name;
  r.seed = seed_;
  r.final_phase = ms_.phase;
  r.abort_reason = ms_.abort_reason;
  r.sim_time = world_.time;
  r.attempts = ms_.attempt_count;
  r.peak_tracking_error = peak_tracking_error_;
  r.touchdown_verdict = ms_.touchdown_verdict;
  r.detach_verdict = ms_.detach_verdict;
  if (ms_.phase == Phase::kDone) {
    r.outcome = RunOutcome::kSuccess;
  } else if (ms_.phase == Phase::kAborted) {
    r.outcome = ms_.termination == Termination::kFailure ? RunOutcome::kFailure
                                                         : RunOutcome::kAborted;
  } else {
    r.outcome = RunOutcome::kTimeout;
  }

  // Time spent per phase, from the phase-entry events.
  std::vector<std::pair<std::string, double>> durations;
  std::optional<std::pair<std::string, double>> open;
  auto close = [&](double t) {
    if (!open) return;
    auto it = std::find_if(durations.begin(), durations.end(),
                           [&](const auto& d) { return d.first == open->first; });
    if (it == durations.end()) {
      durations.emplace_back(open->first, 0.0);
      it = durations.end() - 1;
    }
    it->second += t - open->second;
  };
  if (cfg_.start_at_retrieval) open = std::make_pair(to_string(Phase::kAlignForRetrieval), 0.0);
  else open = std::make_pair(to_string(Phase::kIdle), 0.0);
  for (const EventLogEntry& e : log_.entries) {
    if (e.kind != "phase_enter") continue;
    close(e.time);
    open = std::make_pair(e.payload["to"].get<std::string>(), e.time);
  }
  close(world_.time);
  r.phase_durations = std::move(durations);
  r.log = std::move(log_);
}

RunReport Runner::run() {
  const auto wall0 = std::chrono::steady_clock::now();
  RunReport report;
  std::vector<WorldEvent> events;
  try {
    while (world_.time < cfg_.duration_limit - 0.5 * cfg_.dt) {
      if (world_.step_count % perception_every_ == 0) {
        tick();
        if (is_terminal(ms_.phase)) break;
      }
      WorldCommands cmd;
      control_step(cmd);
      if (mc_.ugv_mode == UgvMode::kSelfRight && !world_.ugv.pose.up_flag &&
          world_.ugv.grounded) {
        try {
          WorldUpdate up = ugv_self_right(world_);
          world_ = std::move(up.state);
          log_world_events(up.events);
        } catch (const SelfRightError& e) {
          log("self_right_failed", {{"reason", e.what()}});
        }
      }
      events.clear();
      step_world_inplace(world_, cmd, events);
      log_world_events(events);
      propagate_estimates(length_from_encoder(read_encoder(world_.winch)));
      if (opt_.on_step) {
        const StepProbe probe{world_, ms_, head_est_, ugv_est_,
                              camera_blank(world_.time)};
        opt_.on_step(probe);
      }
    }
    if (!is_terminal(ms_.phase)) {
      log("timeout", {{"limit", cfg_.duration_limit}});
    }
  } catch (const std::exception& e) {
    log("runtime_error", {{"reason", e.what()}});
    if (!is_terminal(ms_.phase)) {
      ms_.abort_reason = e.what();
      ms_.termination = Termination::kAborted;
      ms_.phase = Phase::kAborted;
    }
  }
  finish(report);
  report.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();

  if (!opt_.out_dir.empty()) {
    namespace fs = std::filesystem;
    const fs::path dir(opt_.out_dir);
    fs::create_directories(dir);
    report.log_path = (dir / "events.jsonl").string();
    write_event_log(report.log_path, report.log);
    const std::pair<const char*, const std::vector<TrajectorySample>*> trajs[] = {
        {"uav.csv", &uav_traj_}, {"ugv.csv", &ugv_traj_}, {"head.csv", &head_traj_}};
    for (const auto& [name, rows] : trajs) {
      const std::string path = (dir / name).string();
      write_trajectory_csv(path, *rows);
      report.trajectory_paths.push_back(path);
    }
    std::ofstream out(dir / "report.json");
    if (!out) throw std::runtime_error("cannot write " + (dir / "report.json").string());
    out << report_to_json(report).dump(2) << '\n';
  }
  return report;
}

ojson verdict_json(const std::optional<DeploymentVerdict>& v) {
  if (!v) return nullptr;
  ojson j;
  j["outcome"] = to_string(v->outcome);
  j["clearance"] = v->clearance;
  j["separation_series"] = v->separation_series;
  j["ugv_stationary"] = v->ugv_stationary;
  return j;
}

}  // namespace

std::string to_string(RunOutcome outcome) {
  switch (outcome) {
    case RunOutcome::kSuccess: return "success";
    case RunOutcome::kFailure: return "failure";
    case RunOutcome::kAborted: return "aborted";
    case RunOutcome::kTimeout: return "timeout";
  }
  return "aborted";
}

int exit_code_for(RunOutcome outcome) { return outcome == RunOutcome::kSuccess ? 0 : 1; }

RunReport run_scenario(const ScenarioConfig& config, const RunOptions& options) {
  const std::vector<ConfigViolation> violations = validate_config(config);
  if (!violations.empty()) {
    std::string msg = "invalid config:";
    for (const ConfigViolation& v : violations) msg += " " + v.field + ": " + v.message + ";";
    throw std::invalid_argument(msg);
  }
  Runner runner(config, options);
  return runner.run();
}

nlohmann::ordered_json report_to_json(const RunReport& r) {
  ojson j;
  j["scenario"] = r.scenario;
  j["seed"] = r.seed;
  j["outcome"] = to_string(r.outcome);
  j["final_phase"] = to_string(r.final_phase);
  j["abort_reason"] = r.abort_reason;
  j["sim_time"] = r.sim_time;
  j["attempts"] = r.attempts;
  ojson d = ojson::object();
  for (const auto& [name, secs] : r.phase_durations) d[name] = secs;
  j["phase_durations"] = d;
  j["peak_tracking_error"] = r.peak_tracking_error;
  j["touchdown_verdict"] = verdict_json(r.touchdown_verdict);
  j["detach_verdict"] = verdict_json(r.detach_verdict);
  // Paths relative to the report so an output directory can be moved.
  namespace fs = std::filesystem;
  j["log"] = r.log_path.empty() ? "" : fs::path(r.log_path).filename().string();
  ojson traj = ojson::array();
  for (const std::string& p : r.trajectory_paths) traj.push_back(fs::path(p).filename().string());
  j["trajectories"] = traj;
  return j;
}

}  // namespace marsupial
