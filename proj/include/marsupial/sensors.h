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

#ifndef MARSUPIAL_SENSORS_H_
#define MARSUPIAL_SENSORS_H_

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "marsupial/geometry.h"
#include "marsupial/world.h"

namespace marsupial {

struct CameraIntrinsics {
  int width = 320;
  int height = 240;
  double fx = 240.0;
  double fy = 240.0;
  double cx = 160.0;
  double cy = 120.0;
  double max_range = 10.0;

  void validate() const;  // throws std::invalid_argument
};

// Downward camera: image x is world +x, image y is world -y and the optical
// axis is world -z, all rotated by the camera yaw.
struct DepthImage {
  CameraIntrinsics intrinsics;
  Pose camera_pose;
  std::vector<double> depths;  // row-major; NaN is a no-return

  double at(int u, int v) const { return depths[static_cast<size_t>(v) * intrinsics.width + u]; }
};

enum class Frame { kCamera, kWorld };

struct PointCloud {
  std::vector<Vec3> points;
  Frame frame = Frame::kWorld;
  // Pixel index (v * width + u) per point, when the cloud came from an image.
  std::vector<int> organized_index;

  size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

struct EncoderReading {
  int64_t ticks = 0;
  int cpr = 4096;
  double drum_radius = 0.02;
};

struct RenderOptions {
  double noise_sigma = 0.0;
  uint64_t noise_seed = 0;
  // Pixel window to trace; pixels outside are no-returns. Empty = full frame.
  std::optional<std::array<int, 4>> roi;  // u0, v0, u1, v1 (exclusive)
  bool blank = false;  // simulates a fully occluded camera
};

// Camera-to-world rotation for a downward camera with the given yaw.
Eigen::Matrix3d camera_rotation(double yaw);

DepthImage render_depth(const WorldState& world, const CameraIntrinsics& intrinsics,
                        const RenderOptions& options = {});

PointCloud depth_to_cloud(const DepthImage& image, Frame target_frame);

// Forward pinhole projection of a camera-frame point: (u, v, depth).
Vec3 project_camera_point(const CameraIntrinsics& intrinsics, const Vec3& p);
// World point to (u, v, depth) for a camera at `camera_pose`.
Vec3 project_world_point(const CameraIntrinsics& intrinsics, const Pose& camera_pose,
                         const Vec3& p);

EncoderReading read_encoder(const WinchState& winch);
double length_from_encoder(const EncoderReading& reading);
// Tether length represented by one encoder tick.
double encoder_tick_length(const WinchState& winch);

// Whitespace-delimited "x y z" text, one point per line.
void write_cloud_xyz(std::ostream& out, const PointCloud& cloud);
PointCloud read_cloud_xyz(std::istream& in);  // throws std::runtime_error with the line
void save_cloud_xyz(const std::string& path, const PointCloud& cloud);
PointCloud load_cloud_xyz(const std::string& path);

}  // namespace marsupial

#endif  // MARSUPIAL_SENSORS_H_
