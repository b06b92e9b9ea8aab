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

#include "marsupial/mission.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace marsupial {

namespace {

constexpr std::array<std::pair<Phase, const char*>, 14> kPhaseNames{{
    {Phase::kIdle, "Idle"},
    {Phase::kScanAndMap, "ScanAndMap"},
    {Phase::kSelectZone, "SelectZone"},
    {Phase::kPositionOverZone, "PositionOverZone"},
    {Phase::kLowerTether, "LowerTether"},
    {Phase::kVerifyTouchdown, "VerifyTouchdown"},
    {Phase::kDetach, "Detach"},
    {Phase::kGroundOps, "GroundOps"},
    {Phase::kReturnAndSignal, "ReturnAndSignal"},
    {Phase::kAlignForRetrieval, "AlignForRetrieval"},
    {Phase::kReattach, "Reattach"},
    {Phase::kRetract, "Retract"},
    {Phase::kDone, "Done"},
    {Phase::kAborted, "Aborted"},
}};

// Length tolerance for "reached the stowed length".
constexpr double kLengthTol = 0.01;

bool uses_ground_plane(TouchdownRule r) { return r != TouchdownRule::kSeparation; }
bool uses_separation(TouchdownRule r) { return r != TouchdownRule::kGroundPlane; }

nlohmann::ordered_json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

class Stepper {
 public:
  Stepper(const MissionState& s, const MissionConfig& c, const MissionObservations& o,
          double now)
      : cfg_(c), obs_(o), now_(now) {
    out_.state = s;
    out_.commands.map_paused = s.map_paused;
  }

  MissionStepResult run();

 private:
  MissionState& st() { return out_.state; }
  MissionCommands& cmd() { return out_.commands; }

  void emit(const std::string& kind, nlohmann::ordered_json payload = nlohmann::ordered_json::object()) {
    EventLogEntry e;
    e.time = now_;
    e.phase = st().phase;
    e.kind = kind;
    e.payload = std::move(payload);
    out_.events.push_back(std::move(e));
  }

  void enter(Phase next) {
    MissionState& s = st();
    const Phase from = s.phase;
    s.phase = next;
    s.entered_at = now_;
    s.arrived_at = -1.0;
    s.slack_paid = false;
    s.released = false;
    s.separation_series.clear();
    s.ugv_speeds.clear();
    s.aligned_frames = 0;
    s.backing_off = false;
    if (next == Phase::kLowerTether) {
      ++s.lower_entries;
      s.attempt_count = s.lower_entries;
      s.map_paused = true;
    }
    if (next == Phase::kGroundOps) s.map_paused = false;
    if (next == Phase::kReattach) s.reattach_tries = 0;
    if (next == Phase::kVerifyTouchdown) s.verify_entry_length = obs_.tether_length;
    cmd().map_paused = s.map_paused;
    nlohmann::ordered_json p;
    p["from"] = to_string(from);
    p["to"] = to_string(next);
    p["attempt"] = s.attempt_count;
    p["map_voxels"] = obs_.map_voxels;
    emit("phase_enter", std::move(p));
  }

  void abort(const std::string& reason, Termination t = Termination::kAborted) {
    st().abort_reason = reason;
    st().termination = t;
    emit("abort", {{"reason", reason}});
    enter(Phase::kAborted);
    hold();
  }

  void hold() {
    cmd().uav_mode = UavMode::kHold;
    cmd().winch_rate = 0.0;
    cmd().ugv_mode = UgvMode::kIdle;
  }

  // Failed verification: go around again or give up.
  void reattempt(const std::string& why) {
    if (st().attempt_count >= cfg_.max_attempts) {
      abort("max_attempts_exceeded", Termination::kFailure);
      return;
    }
    emit("reattempt", {{"reason", why}, {"attempt", st().attempt_count + 1}});
    enter(Phase::kLowerTether);
    st().lifting = true;
  }

  std::optional<double> clearance() const {
    if (!obs_.ugv || !out_.state.zone) return std::nullopt;
    return out_.state.zone->plane.signed_distance(obs_.ugv->position);
  }

  bool stowed() const { return obs_.tether_length <= cfg_.stowed_length + kLengthTol; }
  double retract_to_stow() const { return stowed() ? 0.0 : -cfg_.retract_rate; }

  void fly_to(const Vec2& xy, double altitude) {
    cmd().uav_mode = UavMode::kFlyTo;
    cmd().anchor_goal = xy;
    cmd().uav_altitude = altitude;
  }

  void fly_over_zone() {
    const Vec3& c = st().zone->center;
    fly_to(c.head<2>(), c.z() + cfg_.deploy_altitude);
  }

  // Returns true once the UAV has sat at its goal for `dwell` seconds.
  bool dwelled(double dwell) {
    if (!obs_.uav_at_goal) {
      st().arrived_at = -1.0;
      return false;
    }
    if (st().arrived_at < 0.0) st().arrived_at = now_;
    return now_ - st().arrived_at >= dwell;
  }

  void refuse_detach(double c) {
    emit("detach_refused", {{"clearance", c}, {"d_min", cfg_.d_min}});
  }

  bool observations_valid() const {
    if (!std::isfinite(obs_.tether_length) || !all_finite(obs_.anchor)) return false;
    if (obs_.head && !all_finite(obs_.head->position)) return false;
    if (obs_.ugv && !all_finite(obs_.ugv->position)) return false;
    if (obs_.separation && !std::isfinite(*obs_.separation)) return false;
    if (!std::isfinite(obs_.ugv_speed)) return false;
    if (obs_.pixel_error && !std::isfinite(*obs_.pixel_error)) return false;
    return true;
  }

  void idle() { enter(Phase::kScanAndMap); }
  void scan();
  void select_zone();
  void position();
  void lower();
  void verify();
  void detach();
  void ground_ops();
  void return_and_signal();
  void align();
  void reattach();
  void retract();

  const MissionConfig& cfg_;
  const MissionObservations& obs_;
  double now_;
  MissionStepResult out_;
};

void Stepper::scan() {
  fly_to(cfg_.scan_target, cfg_.scan_altitude);
  if (dwelled(cfg_.scan_dwell)) enter(Phase::kSelectZone);
}

void Stepper::select_zone() {
  hold();
  cmd().request_zone_search = true;
  if (!obs_.zone_search) return;
  if (!obs_.zone_search->zone) {
    const char* reason =
        obs_.zone_search->reason == ZoneFailure::kEmptyCloud ? "empty_cloud" : "no_candidate";
    emit("zone_search_failed", {{"reason", reason}});
    abort("no_deployment_zone", Termination::kFailure);
    return;
  }
  st().zone = obs_.zone_search->zone;
  const DeploymentZone& z = *st().zone;
  nlohmann::ordered_json p;
  p["center"] = vec_json(z.center);
  p["normal"] = vec_json(z.plane.normal);
  p["score"] = z.score;
  p["distance_to_entry"] = z.distance_to_entry;
  emit("zone_selected", std::move(p));
  enter(Phase::kPositionOverZone);
}

void Stepper::position() {
  fly_over_zone();
  if (dwelled(cfg_.settle_time)) enter(Phase::kLowerTether);
}

void Stepper::lower() {
  fly_over_zone();
  const std::optional<double> c = clearance();
  if (!c) {
    abort("missing_ugv_estimate");
    return;
  }
  if (obs_.detach_requested && *c > cfg_.d_min) refuse_detach(*c);
  // Nothing to lift if the vehicle is not on the head.
  if (st().lifting && !obs_.head_attached) st().lifting = false;
  if (st().lifting) {
    cmd().winch_rate = -cfg_.retract_rate;
    if (*c >= cfg_.reattempt_lift || stowed()) st().lifting = false;
    return;
  }
  if (*c <= cfg_.d_min) {
    enter(Phase::kVerifyTouchdown);
    cmd().winch_rate = 0.0;
    return;
  }
  cmd().winch_rate = *c > cfg_.approach_height ? cfg_.descent_rate : cfg_.approach_rate;
}

void Stepper::verify() {
  fly_over_zone();
  const std::optional<double> c = clearance();
  if (!c) {
    abort("missing_ugv_estimate");
    return;
  }
  if (!st().slack_paid) {
    if (obs_.tether_length < st().verify_entry_length + cfg_.slack_length) {
      cmd().winch_rate = cfg_.approach_rate;
      return;
    }
    st().slack_paid = true;
  }
  cmd().winch_rate = 0.0;

  DeploymentVerdict v;
  v.clearance = *c;
  v.ugv_stationary = obs_.ugv_speed < cfg_.stationary_speed;
  const bool on_ground = !uses_ground_plane(cfg_.touchdown_rule) ||
                         verify_touchdown(*obs_.ugv, st().zone->plane, cfg_.touchdown_threshold);
  v.outcome = on_ground ? DeploymentOutcome::kSuccess : DeploymentOutcome::kFailure;
  st().touchdown_verdict = v;
  emit("touchdown_verdict", {{"outcome", to_string(v.outcome)}, {"clearance", *c}});
  if (!on_ground) {
    reattempt("touchdown_failed");
    return;
  }
  if (cfg_.mode == DeploymentMode::kAttached) {
    enter(Phase::kGroundOps);
    return;
  }
  if (*c > cfg_.d_min) {
    // Hard clearance limit: never release above d_min.
    refuse_detach(*c);
    reattempt("clearance_above_d_min");
    return;
  }
  enter(Phase::kDetach);
}

void Stepper::detach() {
  fly_over_zone();
  MissionState& s = st();
  if (!s.released) {
    const std::optional<double> c = clearance();
    if (!c || *c > cfg_.d_min) {
      refuse_detach(c.value_or(std::nan("")));
      reattempt("clearance_above_d_min");
      return;
    }
    s.released = true;
    s.released_at = now_;
    cmd().epm = false;
    emit("detach", {{"clearance", *c}, {"d_min", cfg_.d_min}});
    return;
  }
  if (now_ - s.released_at < cfg_.release_delay) return;
  if (obs_.tether_length > s.verify_entry_length + kLengthTol) {
    cmd().winch_rate = -cfg_.retract_rate;
    return;
  }
  if (!uses_separation(cfg_.touchdown_rule)) {
    enter(Phase::kGroundOps);
    return;
  }
  cmd().winch_rate = stowed() ? 0.0 : -cfg_.approach_rate;
  if (!obs_.separation) {
    abort("missing_separation_estimate");
    return;
  }
  s.separation_series.push_back(*obs_.separation);
  s.ugv_speeds.push_back(obs_.ugv_speed);
  const size_t w = static_cast<size_t>(cfg_.verify_window);
  const size_t first = s.ugv_speeds.size() > w ? s.ugv_speeds.size() - w : 0;
  const bool stationary = std::all_of(s.ugv_speeds.begin() + first, s.ugv_speeds.end(),
                                      [&](double v) { return v < cfg_.stationary_speed; });
  DeploymentVerdict v = verify_detachment(s.separation_series, stationary,
                                          cfg_.detach_verify_threshold, cfg_.verify_window);
  if (v.outcome == DeploymentOutcome::kUndecided) return;
  s.detach_verdict = v;
  emit("detach_verdict", {{"outcome", to_string(v.outcome)},
                          {"separation_series", v.separation_series},
                          {"ugv_stationary", v.ugv_stationary}});
  if (v.outcome == DeploymentOutcome::kSuccess) {
    enter(Phase::kGroundOps);
  } else {
    // The vehicle is still hanging on the head: latch it again and retry.
    cmd().epm = true;
    reattempt("detachment_failed");
  }
}

void Stepper::ground_ops() {
  if (st().zone) fly_over_zone();
  if (cfg_.mode == DeploymentMode::kDetached) {
    cmd().winch_rate = retract_to_stow();
  } else if (obs_.ugv) {
    const Vec3 attach = obs_.ugv->position + Vec3(0.0, 0.0, cfg_.ugv_height);
    const double want = 1.2 * (obs_.anchor - attach).norm();
    cmd().winch_rate =
        std::clamp(want - obs_.tether_length, -cfg_.retract_rate, cfg_.descent_rate);
  }
  if (!obs_.ugv_upright) {
    cmd().ugv_mode = UgvMode::kSelfRight;
    return;
  }
  cmd().ugv_mode = UgvMode::kFollowRoute;
  if (obs_.ugv_route_done) {
    cmd().ugv_mode = UgvMode::kIdle;
    enter(Phase::kReturnAndSignal);
    emit("retrieval_request");
  }
}

void Stepper::return_and_signal() {
  if (st().zone) fly_over_zone();
  if (cfg_.mode == DeploymentMode::kAttached) {
    enter(Phase::kAlignForRetrieval);
    return;
  }
  cmd().winch_rate = retract_to_stow();
  if (stowed()) enter(Phase::kAlignForRetrieval);
}

void Stepper::align() {
  if (cfg_.mode == DeploymentMode::kDetached) cmd().winch_rate = retract_to_stow();
  if (!obs_.ugv) {
    abort("missing_ugv_estimate");
    return;
  }
  const Vec3& g = obs_.ugv->position;
  const double altitude = g.z() + cfg_.retrieval_altitude;
  if (!obs_.pixel_error) {
    fly_to(g.head<2>(), altitude);
    st().aligned_frames = 0;
    return;
  }
  cmd().uav_mode = UavMode::kServo;
  cmd().anchor_goal = g.head<2>();
  cmd().uav_altitude = altitude;
  if (*obs_.pixel_error < cfg_.align_tolerance_px) {
    ++st().aligned_frames;
  } else {
    st().aligned_frames = 0;
  }
  if (st().aligned_frames >= cfg_.align_frames) {
    emit("aligned", {{"pixel_error", *obs_.pixel_error}});
    enter(cfg_.mode == DeploymentMode::kDetached ? Phase::kReattach : Phase::kRetract);
  }
}

void Stepper::reattach() {
  cmd().epm = true;
  if (!obs_.ugv) {
    abort("missing_ugv_estimate");
    return;
  }
  const Vec3 attach = obs_.ugv->position + Vec3(0.0, 0.0, cfg_.ugv_height);
  cmd().uav_mode = obs_.pixel_error ? UavMode::kServo : UavMode::kFlyTo;
  cmd().anchor_goal = attach.head<2>();
  cmd().uav_altitude = obs_.ugv->position.z() + cfg_.retrieval_altitude;
  if (obs_.head_attached) {
    emit("reattach", {{"tries", st().reattach_tries}});
    enter(Phase::kRetract);
    cmd().winch_rate = -cfg_.retract_rate;
    return;
  }
  // Tether length at which the head sphere would sit on the attach point.
  const double contact_len = obs_.anchor.z() - attach.z() - cfg_.head_radius;
  MissionState& s = st();
  if (s.backing_off) {
    cmd().winch_rate = -cfg_.retract_rate;
    if (obs_.tether_length <= s.back_off_target) s.backing_off = false;
    return;
  }
  if (obs_.tether_length > contact_len + cfg_.reattach_slack) {
    ++s.reattach_tries;
    if (s.reattach_tries > cfg_.max_reattach_tries) {
      abort("reattach_failed", Termination::kFailure);
      return;
    }
    emit("reattach_retry", {{"try", s.reattach_tries}});
    s.backing_off = true;
    s.back_off_target = contact_len - cfg_.reattempt_lift;
    cmd().winch_rate = -cfg_.retract_rate;
    return;
  }
  const double gap = contact_len - obs_.tether_length;
  cmd().winch_rate = gap > cfg_.approach_height ? cfg_.descent_rate : cfg_.approach_rate;
}

void Stepper::retract() {
  cmd().winch_rate = retract_to_stow();
  if (stowed()) {
    st().termination = Termination::kSuccess;
    enter(Phase::kDone);
    hold();
  }
}

MissionStepResult Stepper::run() {
  const Phase phase = st().phase;
  if (is_terminal(phase)) {
    hold();
    return std::move(out_);
  }
  if (!observations_valid()) {
    abort("invalid_observation");
    return std::move(out_);
  }
  if (phase != Phase::kIdle && now_ - st().entered_at > cfg_.phase_timeout) {
    abort("phase_timeout", Termination::kFailure);
    return std::move(out_);
  }
  if (obs_.detach_requested && phase != Phase::kLowerTether) {
    const std::optional<double> c = clearance();
    if (!c || *c > cfg_.d_min) refuse_detach(c.value_or(std::nan("")));
  }
  if (phase >= Phase::kPositionOverZone && phase <= Phase::kDetach && !st().zone) {
    abort("missing_zone");
    return std::move(out_);
  }
  switch (phase) {
    case Phase::kIdle: idle(); break;
    case Phase::kScanAndMap: scan(); break;
    case Phase::kSelectZone: select_zone(); break;
    case Phase::kPositionOverZone: position(); break;
    case Phase::kLowerTether: lower(); break;
    case Phase::kVerifyTouchdown: verify(); break;
    case Phase::kDetach: detach(); break;
    case Phase::kGroundOps: ground_ops(); break;
    case Phase::kReturnAndSignal: return_and_signal(); break;
    case Phase::kAlignForRetrieval: align(); break;
    case Phase::kReattach: reattach(); break;
    case Phase::kRetract: retract(); break;
    case Phase::kDone:
    case Phase::kAborted: break;
  }
  return std::move(out_);
}

}  // namespace

std::string to_string(Phase phase) {
  for (const auto& [p, name] : kPhaseNames)
    if (p == phase) return name;
  return "Unknown";
}

std::optional<Phase> phase_from_string(const std::string& name) {
  for (const auto& [p, n] : kPhaseNames)
    if (name == n) return p;
  return std::nullopt;
}

bool is_terminal(Phase phase) { return phase == Phase::kDone || phase == Phase::kAborted; }

bool is_legal_transition(Phase from, Phase to) {
  if (is_terminal(from)) return false;
  if (to == Phase::kAborted) return true;
  switch (from) {
    case Phase::kIdle: return to == Phase::kScanAndMap;
    case Phase::kScanAndMap: return to == Phase::kSelectZone;
    case Phase::kSelectZone: return to == Phase::kPositionOverZone;
    case Phase::kPositionOverZone: return to == Phase::kLowerTether;
    case Phase::kLowerTether: return to == Phase::kVerifyTouchdown;
    case Phase::kVerifyTouchdown:
      return to == Phase::kDetach || to == Phase::kGroundOps || to == Phase::kLowerTether;
    case Phase::kDetach: return to == Phase::kGroundOps || to == Phase::kLowerTether;
    case Phase::kGroundOps: return to == Phase::kReturnAndSignal;
    case Phase::kReturnAndSignal: return to == Phase::kAlignForRetrieval;
    case Phase::kAlignForRetrieval: return to == Phase::kReattach || to == Phase::kRetract;
    case Phase::kReattach: return to == Phase::kRetract;
    case Phase::kRetract: return to == Phase::kDone;
    default: return false;
  }
}

std::string to_string(DeploymentMode mode) {
  return mode == DeploymentMode::kAttached ? "attached" : "detached";
}

std::string to_string(TouchdownRule rule) {
  switch (rule) {
    case TouchdownRule::kGroundPlane: return "ground_plane";
    case TouchdownRule::kSeparation: return "separation";
    case TouchdownRule::kBoth: return "both";
  }
  return "both";
}

std::string to_string(DeploymentOutcome outcome) {
  switch (outcome) {
    case DeploymentOutcome::kSuccess: return "success";
    case DeploymentOutcome::kFailure: return "failure";
    case DeploymentOutcome::kUndecided: return "undecided";
  }
  return "undecided";
}

bool verify_touchdown(const TrackEstimate& ugv_estimate, const Plane& ground, double threshold) {
  if (!(threshold > 0.0)) throw std::invalid_argument("verify_touchdown: threshold must be > 0");
  if (!all_finite(ground.normal) || !std::isfinite(ground.offset) ||
      std::abs(ground.normal.norm() - 1.0) > 1e-6) {
    throw DegenerateInputError("verify_touchdown: degenerate ground plane");
  }
  return ground.signed_distance(ugv_estimate.position) <= threshold;
}

DeploymentVerdict verify_detachment(const std::vector<double>& series, bool ugv_stationary,
                                    double min_sep, int window) {
  if (window < 1) throw std::invalid_argument("verify_detachment: window must be >= 1");
  DeploymentVerdict v;
  v.ugv_stationary = ugv_stationary;
  const size_t w = static_cast<size_t>(window);
  if (series.size() < w) {
    v.separation_series = series;
    return v;
  }
  v.separation_series.assign(series.end() - static_cast<std::ptrdiff_t>(w), series.end());
  bool increasing = true;
  for (size_t i = 1; i < v.separation_series.size(); ++i)
    increasing = increasing && v.separation_series[i] > v.separation_series[i - 1];
  const bool ok = ugv_stationary && increasing && v.separation_series.back() > min_sep;
  v.outcome = ok ? DeploymentOutcome::kSuccess : DeploymentOutcome::kFailure;
  return v;
}

MissionStepResult mission_step(const MissionState& state, const MissionConfig& config,
                               const MissionObservations& obs, double now) {
  return Stepper(state, config, obs, now).run();
}

}  // namespace marsupial
