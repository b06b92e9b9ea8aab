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

#include "marsupial/sensors.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace marsupial {

namespace {

constexpr double kNoHit = std::numeric_limits<double>::infinity();

// Oriented box given by center, yaw and half extents.
struct OrientedBox {
  Vec3 center;
  double yaw = 0.0;
  Vec3 half;
};

double intersect_box(const Vec3& origin, const Vec3& dir, const OrientedBox& box) {
  const Vec3 o = rotate_yaw(origin - box.center, -box.yaw);
  const Vec3 d = rotate_yaw(dir, -box.yaw);
  double t_near = -kNoHit, t_far = kNoHit;
  for (int i = 0; i < 3; ++i) {
    if (std::abs(d[i]) < 1e-15) {
      if (o[i] < -box.half[i] || o[i] > box.half[i]) return kNoHit;
      continue;
    }
    double t0 = (-box.half[i] - o[i]) / d[i];
    double t1 = (box.half[i] - o[i]) / d[i];
    if (t0 > t1) std::swap(t0, t1);
    t_near = std::max(t_near, t0);
    t_far = std::min(t_far, t1);
    if (t_near > t_far) return kNoHit;
  }
  if (t_far < 0.0) return kNoHit;
  return t_near >= 0.0 ? t_near : kNoHit;
}

double intersect_sphere(const Vec3& origin, const Vec3& dir, const Vec3& center,
                        double radius) {
  const Vec3 oc = origin - center;
  const double a = dir.squaredNorm();
  const double b = 2.0 * dir.dot(oc);
  const double c = oc.squaredNorm() - radius * radius;
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) return kNoHit;
  const double sq = std::sqrt(disc);
  const double t0 = (-b - sq) / (2.0 * a);
  if (t0 >= 0.0) return t0;
  return kNoHit;
}

// The ray's depth parameter equals the drop below the camera, so the search
// only covers the slab between the lowest and highest terrain samples.
double intersect_terrain(const Terrain& terrain, double hmin, double hmax,
                         const Vec3& origin, const Vec3& dir, double t_limit) {
  const double t_lo = std::max(origin.z() - hmax, 0.0);
  const double t_hi = std::min(origin.z() - hmin, t_limit);
  if (t_lo > t_hi) return kNoHit;
  auto gap = [&](double t, bool& inside) {
    const double x = origin.x() + t * dir.x(), y = origin.y() + t * dir.y();
    inside = terrain.contains(x, y);
    return inside ? origin.z() - t - terrain_height_at(terrain, x, y) : 1.0;
  };
  bool inside = false;
  if (hmax - hmin < 1e-12) {
    const double t = origin.z() - hmax;
    gap(t, inside);
    return inside && t >= 0.0 ? t : kNoHit;
  }
  const double horiz = std::hypot(dir.x(), dir.y());
  double step = 0.5 * terrain.cell_size / std::max(horiz, 1e-9);
  step = std::min(step, std::max(t_hi - t_lo, 1e-9));
  double prev = t_lo;
  double g_prev = gap(prev, inside);
  if (inside && g_prev <= 0.0) return prev;
  bool prev_inside = inside;
  for (double t = t_lo + step;; t += step) {
    const bool last = t >= t_hi;
    if (last) t = t_hi;
    const double g = gap(t, inside);
    if (inside && g <= 0.0) {
      // Illinois regula falsi; bisect when the bracket leaves the grid.
      double a = prev, b = t, ga = g_prev, gb = g;
      bool a_inside = prev_inside;
      int side = 0;
      for (int i = 0; i < 64 && b - a > 1e-12; ++i) {
        double m = 0.5 * (a + b);
        if (a_inside && ga > gb) m = std::clamp(a + (b - a) * ga / (ga - gb), a, b);
        bool in_m = false;
        const double gm = gap(m, in_m);
        if (in_m && gm <= 0.0) {
          b = m;
          gb = gm;
          if (side == 1) ga *= 0.5;
          side = 1;
          if (gm > -1e-12) break;
        } else {
          a = m;
          ga = gm;
          a_inside = in_m;
          if (side == -1) gb *= 0.5;
          side = -1;
        }
      }
      return b;
    }
    g_prev = g;
    prev_inside = inside;
    if (last) break;
    prev = t;
  }
  return kNoHit;
}

}  // namespace

void CameraIntrinsics::validate() const {
  if (width <= 0 || height <= 0) throw std::invalid_argument("camera width/height must be > 0");
  if (!(fx > 0.0) || !(fy > 0.0)) throw std::invalid_argument("camera fx/fy must be > 0");
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height))
    throw std::invalid_argument("camera principal point must lie inside the image");
  if (!(max_range > 0.0)) throw std::invalid_argument("camera max_range must be > 0");
}

Eigen::Matrix3d camera_rotation(double yaw) {
  const double c = std::cos(yaw), s = std::sin(yaw);
  Eigen::Matrix3d r;
  r << c, s, 0.0,
       s, -c, 0.0,
       0.0, 0.0, -1.0;
  return r;
}

DepthImage render_depth(const WorldState& world, const CameraIntrinsics& in,
                        const RenderOptions& options) {
  DepthImage image;
  image.intrinsics = in;
  image.camera_pose = world.uav.pose;
  image.depths.assign(static_cast<size_t>(in.width) * in.height,
                      std::numeric_limits<double>::quiet_NaN());
  if (options.blank) return image;

  const Vec3 origin = world.uav.pose.position;
  const Eigen::Matrix3d rot = camera_rotation(world.uav.pose.yaw);
  const Terrain& terrain = *world.terrain;
  const double hmin = terrain.min_height(), hmax = terrain.max_height();

  std::vector<OrientedBox> boxes;
  boxes.reserve(world.structures.size() + 1);
  for (const Box& b : world.structures)
    boxes.push_back({0.5 * (b.min + b.max), 0.0, 0.5 * (b.max - b.min)});
  const UgvState& ugv = world.ugv;
  const Vec3 ugv_half(0.5e-3 * ugv.footprint.length_mm, 0.5e-3 * ugv.footprint.width_mm,
                      0.5 * ugv.height());
  boxes.push_back({ugv.pose.position + Vec3(0.0, 0.0, ugv_half.z()), ugv.pose.yaw, ugv_half});

  int u0 = 0, v0 = 0, u1 = in.width, v1 = in.height;
  if (options.roi) {
    u0 = std::clamp((*options.roi)[0], 0, in.width);
    v0 = std::clamp((*options.roi)[1], 0, in.height);
    u1 = std::clamp((*options.roi)[2], 0, in.width);
    v1 = std::clamp((*options.roi)[3], 0, in.height);
  }

  std::mt19937_64 rng(options.noise_seed);
  std::normal_distribution<double> noise(0.0, options.noise_sigma > 0.0 ? options.noise_sigma : 1.0);

  for (int v = v0; v < v1; ++v) {
    for (int u = u0; u < u1; ++u) {
      const Vec3 dir = rot * Vec3((u - in.cx) / in.fx, (v - in.cy) / in.fy, 1.0);
      double t = intersect_terrain(terrain, hmin, hmax, origin, dir, in.max_range);
      for (const OrientedBox& b : boxes) t = std::min(t, intersect_box(origin, dir, b));
      t = std::min(t, intersect_sphere(origin, dir, world.head.position, world.head.radius));
      if (!(t <= in.max_range)) continue;
      if (options.noise_sigma > 0.0) {
        t += noise(rng);
        if (!(t > 0.0 && t <= in.max_range)) continue;
      }
      image.depths[static_cast<size_t>(v) * in.width + u] = t;
    }
  }
  return image;
}

PointCloud depth_to_cloud(const DepthImage& image, Frame target_frame) {
  const CameraIntrinsics& in = image.intrinsics;
  PointCloud cloud;
  cloud.frame = target_frame;
  const Eigen::Matrix3d rot = camera_rotation(image.camera_pose.yaw);
  for (int v = 0; v < in.height; ++v) {
    for (int u = 0; u < in.width; ++u) {
      const double d = image.at(u, v);
      if (!std::isfinite(d)) continue;
      Vec3 p((u - in.cx) * d / in.fx, (v - in.cy) * d / in.fy, d);
      if (target_frame == Frame::kWorld) p = image.camera_pose.position + rot * p;
      cloud.points.push_back(p);
      cloud.organized_index.push_back(v * in.width + u);
    }
  }
  return cloud;
}

Vec3 project_camera_point(const CameraIntrinsics& in, const Vec3& p) {
  return {in.cx + in.fx * p.x() / p.z(), in.cy + in.fy * p.y() / p.z(), p.z()};
}

Vec3 project_world_point(const CameraIntrinsics& in, const Pose& camera_pose, const Vec3& p) {
  const Vec3 local = camera_rotation(camera_pose.yaw).transpose() * (p - camera_pose.position);
  return project_camera_point(in, local);
}

EncoderReading read_encoder(const WinchState& winch) {
  EncoderReading r;
  r.cpr = winch.encoder_cpr;
  r.drum_radius = winch.drum_radius;
  r.ticks = std::llround(winch.deployed_length / (2.0 * kPi * winch.drum_radius) *
                         winch.encoder_cpr);
  return r;
}

double length_from_encoder(const EncoderReading& reading) {
  return static_cast<double>(reading.ticks) / reading.cpr * 2.0 * kPi * reading.drum_radius;
}

double encoder_tick_length(const WinchState& winch) {
  return 2.0 * kPi * winch.drum_radius / winch.encoder_cpr;
}

void write_cloud_xyz(std::ostream& out, const PointCloud& cloud) {
  const auto old = out.precision(17);
  for (const Vec3& p : cloud.points) out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
  out.precision(old);
}

PointCloud read_cloud_xyz(std::istream& in) {
  PointCloud cloud;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    Vec3 p;
    std::string extra;
    if (!(ls >> p.x() >> p.y() >> p.z()) || (ls >> extra) || !all_finite(p)) {
      throw std::runtime_error("cloud line " + std::to_string(line_no) +
                               ": expected three finite numbers");
    }
    cloud.points.push_back(p);
  }
  return cloud;
}

void save_cloud_xyz(const std::string& path, const PointCloud& cloud) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_cloud_xyz(out, cloud);
}

PointCloud load_cloud_xyz(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return read_cloud_xyz(in);
}

}  // namespace marsupial
