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

#include "marsupial/world.h"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace marsupial {

namespace {

int cells_for(double extent, double cell_size) {
  return static_cast<int>(std::lround(extent / cell_size)) + 1;
}

double clampd(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

bool finite_commands(const WorldCommands& c) {
  return all_finite(c.uav_velocity) && std::isfinite(c.uav_yaw_rate) &&
         std::isfinite(c.winch_rate) && std::isfinite(c.track_left) &&
         std::isfinite(c.track_right) && std::isfinite(c.arm_rate_front) &&
         std::isfinite(c.arm_rate_rear);
}

// Critically damped oscillator, advanced exactly over dt.
void propagate_swing(double& theta, double& rate, double omega, double dt) {
  const double decay = std::exp(-omega * dt);
  const double c = rate + omega * theta;
  const double next_theta = (theta + c * dt) * decay;
  const double next_rate = (rate - omega * c * dt) * decay;
  theta = next_theta;
  rate = next_rate;
}

Vec3 pendulum_direction(const Vec2& swing) {
  const double sx = std::sin(swing.x()), sy = std::sin(swing.y());
  const double zz = std::max(0.0, 1.0 - sx * sx - sy * sy);
  return {sx, sy, -std::sqrt(zz)};
}

// Inverse of pendulum_direction for a head found at `head` (slack allowed).
Vec2 swing_from_geometry(const Vec3& anchor, const Vec3& head, double length) {
  const double l = std::max((head - anchor).norm(), std::max(length, 1e-9));
  const double sx = clampd((head.x() - anchor.x()) / l, -0.99, 0.99);
  const double sy = clampd((head.y() - anchor.y()) / l, -0.99, 0.99);
  return {std::asin(sx), std::asin(sy)};
}

bool over_footprint(const UgvState& ugv, const Vec3& p) {
  const Vec3 local = rotate_yaw(p - ugv.pose.position, -ugv.pose.yaw);
  return std::abs(local.x()) <= 0.5e-3 * ugv.footprint.length_mm &&
         std::abs(local.y()) <= 0.5e-3 * ugv.footprint.width_mm;
}

// A grounded vehicle is wedged when a structure sits on top of its chassis,
// so lifting it by the tether would drive it into the structure.
bool ugv_wedged(const WorldState& w) {
  constexpr double kGap = 0.01;
  const UgvState& ugv = w.ugv;
  const double half = 0.5e-3 * std::hypot(ugv.footprint.length_mm, ugv.footprint.width_mm);
  const double top = ugv.attach_point().z();
  for (const Box& b : w.structures) {
    if (b.min.z() < top - kGap || b.min.z() > top + kGap) continue;
    if (ugv.pose.position.x() + half < b.min.x() || ugv.pose.position.x() - half > b.max.x()) continue;
    if (ugv.pose.position.y() + half < b.min.y() || ugv.pose.position.y() - half > b.max.y()) continue;
    return true;
  }
  return false;
}

void drive_ugv(WorldState& w, const WorldCommands& cmd) {
  UgvState& ugv = w.ugv;
  ugv.track_left = cmd.track_left;
  ugv.track_right = cmd.track_right;
  const double v = 0.5 * (cmd.track_left + cmd.track_right);
  const double omega = (cmd.track_right - cmd.track_left) / ugv.track_width;
  ugv.pose.yaw = wrap_angle(ugv.pose.yaw + omega * w.dt);
  const Terrain& t = *w.terrain;
  const double margin = 0.5e-3 * ugv.footprint.length_mm;
  double x = ugv.pose.position.x() + v * std::cos(ugv.pose.yaw) * w.dt;
  double y = ugv.pose.position.y() + v * std::sin(ugv.pose.yaw) * w.dt;
  x = clampd(x, t.origin.x() + margin, t.x_max() - margin);
  y = clampd(y, t.origin.y() + margin, t.y_max() - margin);
  ugv.pose.position = {x, y, terrain_height_clamped(t, x, y)};
}

void release_head(WorldState& w, std::vector<WorldEvent>& events) {
  const Vec3 anchor = anchor_world(w);
  w.head.epm_on = false;
  w.head.attached = false;
  w.head.swing = swing_from_geometry(anchor, w.head.position, w.winch.deployed_length);
  w.head.swing_rate = Vec2::Zero();
  std::ostringstream detail;
  detail << "clearance=" << (w.ugv.pose.position.z() -
                             terrain_height_clamped(*w.terrain, w.ugv.pose.position.x(),
                                                    w.ugv.pose.position.y()));
  events.push_back({WorldEventKind::kDetach, detail.str()});
  if (!w.ugv.grounded) {
    const Vec3 p = w.ugv.pose.position;
    const double ground = terrain_height_clamped(*w.terrain, p.x(), p.y());
    const double fall = p.z() - ground;
    w.ugv.pose.position.z() = ground;
    w.ugv.grounded = true;
    if (fall > 0.3) w.ugv.pose.up_flag = false;
    std::ostringstream d;
    d << "fall=" << fall;
    events.push_back({WorldEventKind::kDrop, d.str()});
  }
}

void try_capture(WorldState& w, std::vector<WorldEvent>& events) {
  if (!w.head.epm_on || w.head.attached || !w.ugv.grounded) return;
  const Vec3 contact = w.head.position - Vec3(0.0, 0.0, w.head.radius);
  const double d = (contact - w.ugv.attach_point()).norm();
  if (d <= w.head.capture_radius) {
    w.head.attached = true;
    w.head.position = w.ugv.attach_point() + Vec3(0.0, 0.0, w.head.radius);
    w.head.swing = Vec2::Zero();
    w.head.swing_rate = Vec2::Zero();
    w.head.resting = true;
    std::ostringstream detail;
    detail << "distance=" << d;
    events.push_back({WorldEventKind::kAttach, detail.str()});
  }
}

}  // namespace

double Terrain::min_height() const {
  return heights.empty() ? 0.0 : *std::min_element(heights.begin(), heights.end());
}

double Terrain::max_height() const {
  return heights.empty() ? 0.0 : *std::max_element(heights.begin(), heights.end());
}

void Terrain::validate() const {
  if (!(cell_size > 0.0)) throw std::invalid_argument("terrain.cell_size must be > 0");
  if (rows < 2 || cols < 2) throw std::invalid_argument("terrain needs rows >= 2 and cols >= 2");
  if (heights.size() != static_cast<size_t>(rows) * cols)
    throw std::invalid_argument("terrain.heights size does not match rows * cols");
  for (double h : heights)
    if (!std::isfinite(h)) throw std::invalid_argument("terrain.heights must be finite");
}

Terrain Terrain::flat(Vec2 origin, double width, double depth, double cell_size,
                      double height) {
  return ramp(origin, width, depth, cell_size, Vec2::Zero(), height);
}

Terrain Terrain::ramp(Vec2 origin, double width, double depth, double cell_size,
                      Vec2 slope, double height) {
  Terrain t;
  t.origin = origin;
  t.cell_size = cell_size;
  t.cols = cells_for(width, cell_size);
  t.rows = cells_for(depth, cell_size);
  t.heights.resize(static_cast<size_t>(t.rows) * t.cols);
  for (int r = 0; r < t.rows; ++r)
    for (int c = 0; c < t.cols; ++c)
      t.heights[static_cast<size_t>(r) * t.cols + c] =
          height + slope.x() * c * cell_size + slope.y() * r * cell_size;
  return t;
}

Terrain Terrain::procedural(Vec2 origin, double width, double depth,
                            double cell_size, uint64_t seed, double amplitude,
                            double wavelength) {
  Terrain t = flat(origin, width, depth, cell_size);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * kPi);
  constexpr int kWaves = 4;
  constexpr double kScale[kWaves] = {1.0, 0.7, 1.3, 0.5};
  double dir[kWaves][2], phase[kWaves];
  for (int k = 0; k < kWaves; ++k) {
    const double a = angle(rng);
    dir[k][0] = std::cos(a);
    dir[k][1] = std::sin(a);
    phase[k] = angle(rng);
  }
  for (int r = 0; r < t.rows; ++r) {
    for (int c = 0; c < t.cols; ++c) {
      const double x = c * cell_size, y = r * cell_size;
      double h = 0.0;
      for (int k = 0; k < kWaves; ++k) {
        const double kw = 2.0 * kPi / (wavelength * kScale[k]);
        h += std::sin(kw * (dir[k][0] * x + dir[k][1] * y) + phase[k]);
      }
      t.heights[static_cast<size_t>(r) * t.cols + c] = amplitude * h / kWaves;
    }
  }
  return t;
}

double terrain_height_at(const Terrain& terrain, double x, double y) {
  if (!terrain.contains(x, y)) {
    std::ostringstream msg;
    msg << "terrain query (" << x << ", " << y << ") outside grid ["
        << terrain.origin.x() << ", " << terrain.x_max() << "] x ["
        << terrain.origin.y() << ", " << terrain.y_max() << "]";
    throw std::domain_error(msg.str());
  }
  const double fx = (x - terrain.origin.x()) / terrain.cell_size;
  const double fy = (y - terrain.origin.y()) / terrain.cell_size;
  const int c0 = std::min(static_cast<int>(fx), terrain.cols - 2);
  const int r0 = std::min(static_cast<int>(fy), terrain.rows - 2);
  const double tx = fx - c0, ty = fy - r0;
  const double h00 = terrain.at(r0, c0), h01 = terrain.at(r0, c0 + 1);
  const double h10 = terrain.at(r0 + 1, c0), h11 = terrain.at(r0 + 1, c0 + 1);
  return (1 - ty) * ((1 - tx) * h00 + tx * h01) + ty * ((1 - tx) * h10 + tx * h11);
}

double terrain_height_clamped(const Terrain& terrain, double x, double y) {
  return terrain_height_at(terrain, clampd(x, terrain.origin.x(), terrain.x_max()),
                           clampd(y, terrain.origin.y(), terrain.y_max()));
}

std::string to_string(WorldEventKind kind) {
  switch (kind) {
    case WorldEventKind::kCommandRejected: return "command_rejected";
    case WorldEventKind::kAttach: return "attach";
    case WorldEventKind::kDetach: return "detach";
    case WorldEventKind::kEpmReleaseIgnored: return "epm_release_ignored";
    case WorldEventKind::kTouchdown: return "touchdown";
    case WorldEventKind::kLiftoff: return "liftoff";
    case WorldEventKind::kDrop: return "drop";
    case WorldEventKind::kWinchWarning: return "winch_warning";
    case WorldEventKind::kSelfRighted: return "self_righted";
  }
  return "unknown";
}

Vec3 anchor_world(const WorldState& world) {
  return world.uav.pose.position + rotate_yaw(world.winch.anchor_offset, world.uav.pose.yaw);
}

WorldState make_world(std::shared_ptr<const Terrain> terrain, UavState uav,
                      WinchState winch, TetherHeadState head, UgvState ugv,
                      WorldParams params, double dt, uint64_t seed) {
  if (!terrain) throw std::invalid_argument("world requires a terrain");
  terrain->validate();
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be > 0");
  WorldState w;
  w.dt = dt;
  w.terrain = std::move(terrain);
  w.uav = uav;
  w.winch = winch;
  w.head = head;
  w.ugv = ugv;
  w.params = params;
  w.rng_seed = seed;
  w.rng.seed(seed);
  const Vec3 anchor = anchor_world(w);
  w.head.swing = Vec2::Zero();
  w.head.swing_rate = Vec2::Zero();
  w.head.position = anchor - Vec3(0.0, 0.0, w.winch.deployed_length);
  if (w.head.attached) {
    w.head.epm_on = true;
    w.ugv.grounded = false;
    w.ugv.pose.position = w.head.position - Vec3(0.0, 0.0, w.head.radius + w.ugv.height());
  } else {
    w.ugv.grounded = true;
    const Vec3 p = w.ugv.pose.position;
    w.ugv.pose.position.z() = terrain_height_clamped(*w.terrain, p.x(), p.y());
  }
  return w;
}

bool step_world_inplace(WorldState& w, const WorldCommands& cmd,
                        std::vector<WorldEvent>& events) {
  if (!finite_commands(cmd)) {
    events.push_back({WorldEventKind::kCommandRejected, "non-finite command"});
    return false;
  }
  const double dt = w.dt;

  // UAV: kinematic velocity integration with a speed clamp.
  Vec3 v = cmd.uav_velocity;
  const double speed = v.norm();
  if (speed > w.uav.max_speed) v *= w.uav.max_speed / speed;
  const Vec3 dv = v - w.uav.velocity;
  w.uav.velocity = v;
  w.uav.pose.position += v * dt;
  w.uav.pose.yaw = wrap_angle(w.uav.pose.yaw + cmd.uav_yaw_rate * dt);

  if (cmd.epm) command_epm_inplace(w, *cmd.epm, events);

  // Winch: first-order motor response, length clamped to the drum.
  const double rate_cmd = std::clamp(cmd.winch_rate, -w.winch.max_rate, w.winch.max_rate);
  if (rate_cmd > 0.0 && !w.head.attached && !w.head.epm_on &&
      w.winch.deployed_length > w.winch.stowed_length) {
    events.push_back({WorldEventKind::kWinchWarning, "payout commanded with a free head"});
  }
  const double alpha = 1.0 - std::exp(-dt / w.winch.motor_time_constant);
  w.winch.rate += (rate_cmd - w.winch.rate) * alpha;
  w.winch.deployed_length += w.winch.rate * dt;
  if (w.winch.deployed_length <= 0.0) {
    w.winch.deployed_length = 0.0;
    w.winch.rate = std::max(0.0, w.winch.rate);
  } else if (w.winch.deployed_length >= w.winch.max_length) {
    w.winch.deployed_length = w.winch.max_length;
    w.winch.rate = std::min(0.0, w.winch.rate);
  }

  // Arms.
  if (w.ugv.grounded || w.head.attached) {
    w.ugv.arm_front = wrap_angle(w.ugv.arm_front + cmd.arm_rate_front * dt);
    w.ugv.arm_rear = wrap_angle(w.ugv.arm_rear + cmd.arm_rate_rear * dt);
  }

  const Vec3 anchor = anchor_world(w);
  const double length = w.winch.deployed_length;
  TetherHeadState& head = w.head;
  UgvState& ugv = w.ugv;

  bool pendulum = true;
  if (head.attached && ugv.grounded) {
    drive_ugv(w, cmd);
    const Vec3 rest = ugv.attach_point() + Vec3(0.0, 0.0, head.radius);
    const double reach = (rest - anchor).norm();
    const bool lifting = reach > length + w.params.contact_tolerance;
    if (lifting && ugv_wedged(w)) {
      // Hold the tether at the taut length instead of lifting.
      w.winch.deployed_length = reach;
      w.winch.rate = 0.0;
      if (!w.winch.taut) {
        events.push_back({WorldEventKind::kWinchWarning, "tether taut: ground vehicle wedged"});
      }
      w.winch.taut = true;
      head.position = rest;
      head.swing = Vec2::Zero();
      head.swing_rate = Vec2::Zero();
      head.resting = true;
      pendulum = false;
    } else if (lifting) {
      w.winch.taut = false;
      ugv.grounded = false;
      head.swing = swing_from_geometry(anchor, rest, length);
      head.swing_rate = Vec2::Zero();
      head.resting = false;
      events.push_back({WorldEventKind::kLiftoff, ""});
    } else {
      w.winch.taut = false;
      head.position = rest;
      head.swing = Vec2::Zero();
      head.swing_rate = Vec2::Zero();
      head.resting = true;
      pendulum = false;
    }
  } else if (ugv.grounded) {
    drive_ugv(w, cmd);
  }

  if (pendulum) {
    const double l_eff = std::max(length, w.params.min_pendulum_length);
    const double omega = std::sqrt(kGravity / l_eff);
    head.swing_rate.x() -= dv.x() / l_eff;
    head.swing_rate.y() -= dv.y() / l_eff;
    if (w.params.swing_noise > 0.0) {
      std::normal_distribution<double> n(0.0, w.params.swing_noise * std::sqrt(dt));
      head.swing_rate.x() += n(w.rng);
      head.swing_rate.y() += n(w.rng);
    }
    propagate_swing(head.swing.x(), head.swing_rate.x(), omega, dt);
    propagate_swing(head.swing.y(), head.swing_rate.y(), omega, dt);
    constexpr double kSwingLimit = kPi / 2.0 - 1e-3;
    for (int i = 0; i < 2; ++i) {
      if (std::abs(head.swing[i]) > kSwingLimit) {
        head.swing[i] = std::copysign(kSwingLimit, head.swing[i]);
        head.swing_rate[i] = 0.0;
      }
    }
    const Vec3 free_pos = anchor + length * pendulum_direction(head.swing);

    if (head.attached) {
      const Vec3 bottom = free_pos - Vec3(0.0, 0.0, head.radius + ugv.height());
      const double ground = terrain_height_clamped(*w.terrain, bottom.x(), bottom.y());
      if (bottom.z() <= ground + w.params.contact_tolerance) {
        ugv.grounded = true;
        ugv.pose.position = {bottom.x(), bottom.y(), ground};
        ugv.pose.up_flag = !w.params.force_flip_on_touchdown &&
                           head.swing.norm() <= w.params.flip_swing_threshold;
        head.swing = Vec2::Zero();
        head.swing_rate = Vec2::Zero();
        head.position = ugv.attach_point() + Vec3(0.0, 0.0, head.radius);
        head.resting = true;
        events.push_back({WorldEventKind::kTouchdown,
                          ugv.pose.up_flag ? "upright" : "flipped"});
      } else {
        ugv.pose.position = bottom;
        head.position = free_pos;
        head.resting = false;
      }
    } else {
      head.position = free_pos;
      double floor = terrain_height_clamped(*w.terrain, free_pos.x(), free_pos.y()) +
                     head.radius;
      if (ugv.grounded && over_footprint(ugv, free_pos))
        floor = std::max(floor, ugv.attach_point().z() + head.radius);
      head.resting = head.position.z() < floor;
      if (head.resting) head.position.z() = floor;
      try_capture(w, events);
    }
  }

  w.time = static_cast<double>(w.step_count + 1) * dt;
  ++w.step_count;
  return true;
}

WorldUpdate step_world(const WorldState& world, const WorldCommands& commands) {
  WorldUpdate out{world, {}, false};
  if (!step_world_inplace(out.state, commands, out.events)) {
    out.state = world;
    out.rejected = true;
  }
  return out;
}

void command_epm_inplace(WorldState& w, bool on, std::vector<WorldEvent>& events) {
  if (!on) {
    if (w.head.attached) {
      if (w.epm_release_faults > 0) {
        --w.epm_release_faults;
        events.push_back({WorldEventKind::kEpmReleaseIgnored, "magnet did not release"});
        return;
      }
      release_head(w, events);
    } else {
      w.head.epm_on = false;
    }
    return;
  }
  w.head.epm_on = true;
  try_capture(w, events);
}

WorldUpdate command_epm(const WorldState& world, bool on) {
  WorldUpdate out{world, {}, false};
  command_epm_inplace(out.state, on, out.events);
  return out;
}

int self_right_steps(const WorldState& world) {
  return std::max(2, static_cast<int>(std::lround(world.params.self_right_duration / world.dt)));
}

WorldUpdate ugv_self_right(const WorldState& world) {
  if (world.ugv.carrying_payload)
    throw SelfRightError("self-righting refused: payload blocks the arm sweep");
  if (!world.ugv.grounded) throw SelfRightError("self-righting requires a grounded vehicle");
  WorldUpdate out{world, {}, false};
  if (world.ugv.pose.up_flag) return out;

  // Sweep both arms half a turn under the chassis and back.
  const int steps = self_right_steps(world);
  const int half = steps / 2;
  const double sweep_rate = kPi / (half * world.dt);
  WorldCommands cmd;
  cmd.winch_rate = 0.0;
  for (int i = 0; i < steps; ++i) {
    const double sign = i < half ? 1.0 : -1.0;
    cmd.arm_rate_front = sign * sweep_rate;
    cmd.arm_rate_rear = -sign * sweep_rate;
    step_world_inplace(out.state, cmd, out.events);
    if (i == half - 1) out.state.ugv.pose.up_flag = true;
  }
  out.state.ugv.arm_front = 0.0;
  out.state.ugv.arm_rear = 0.0;
  out.events.push_back({WorldEventKind::kSelfRighted, ""});
  return out;
}

}  // namespace marsupial
