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

// Geometry pipeline run on the downward camera: normals, navigability,
// plane fitting, deployment-zone search, DBSCAN clustering, target
// selection, encoder-fused head tracking and the pausable map.

#ifndef MARSUPIAL_PERCEPTION_H_
#define MARSUPIAL_PERCEPTION_H_

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "marsupial/geometry.h"
#include "marsupial/sensors.h"

namespace marsupial {

class DegenerateInputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct NormalCloud {
  std::vector<Vec3> normals;  // upward-oriented unit vectors
  std::vector<bool> valid;
};

// normal . p = offset
struct Plane {
  Vec3 normal = Vec3::UnitZ();
  double offset = 0.0;
  double rms_residual = 0.0;
  int inlier_count = 0;

  double signed_distance(const Vec3& p) const { return normal.dot(p) - offset; }
};

struct NavigabilityMask {
  std::vector<bool> navigable;
  double slope_threshold = 0.0;
};

struct Cluster {
  std::vector<int> member_indices;  // ascending
  std::vector<bool> is_core;        // parallel to member_indices
  Vec3 centroid = Vec3::Zero();
};

struct DbscanResult {
  std::vector<Cluster> clusters;
  std::vector<int> noise;  // ascending
};

struct DeploymentZone {
  Vec3 center = Vec3::Zero();
  Plane plane;
  double distance_to_entry = 0.0;
  double score = 0.0;
  int point_index = -1;
};

enum class ZoneFailure { kNone, kEmptyCloud, kNoCandidate };

struct ZoneSearchResult {
  std::optional<DeploymentZone> zone;
  ZoneFailure reason = ZoneFailure::kNone;
};

struct ZoneParams {
  double min_patch_radius = 0.25;
  double w_dist = 1.0;
  double w_flatness = 10.0;
  double min_navigable_fraction = 0.9;
};

enum class VerticalSource { kVision, kEncoder };
enum class HorizontalSource { kVision, kHoldLast };

std::string to_string(VerticalSource s);
std::string to_string(HorizontalSource s);

struct TrackEstimate {
  Vec3 position = Vec3::Zero();
  VerticalSource vertical_source = VerticalSource::kVision;
  HorizontalSource horizontal_source = HorizontalSource::kVision;
  double timestamp = 0.0;
};

// Region around a viewing ray in which a target may be selected.
struct AreaOfInterest {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = -Vec3::UnitZ();
  double radius = 0.4;
};

struct SelectionWeights {
  double w_center = 1.0;
  double w_range = 0.1;
};

enum class PlaneFitMethod { kLeastSquares, kRansac };

struct RansacParams {
  int iterations = 200;
  double inlier_tol = 0.02;
  uint64_t seed = 1;
};

// Voxel map with at most one representative point per voxel.
class AccumulatedMap {
 public:
  explicit AccumulatedMap(double voxel_size = 0.05);

  double voxel_size() const { return voxel_size_; }
  bool paused() const { return paused_; }
  void set_paused(bool paused) { paused_ = paused; }
  size_t voxel_count() const { return points_.size(); }
  // Representatives in insertion order.
  const std::vector<Vec3>& points() const { return points_; }
  PointCloud to_cloud() const;

  // Returns true if the point occupied a new voxel.
  bool insert(const Vec3& p);

 private:
  struct KeyHash {
    size_t operator()(const std::array<int64_t, 3>& k) const;
  };
  double voxel_size_;
  bool paused_ = false;
  std::unordered_map<std::array<int64_t, 3>, size_t, KeyHash> index_;
  std::vector<Vec3> points_;
};

// Covariance of the k nearest neighbours; points with fewer than k
// neighbours inside `search_radius` are invalid.
NormalCloud estimate_normals(const PointCloud& cloud, int k,
                             double search_radius = std::numeric_limits<double>::infinity(),
                             std::vector<std::string>* warnings = nullptr);

NavigabilityMask segment_navigable(const NormalCloud& normals, double slope_threshold);

Plane fit_plane(const PointCloud& points, PlaneFitMethod method = PlaneFitMethod::kLeastSquares,
                const RansacParams& ransac = {});
// Least-squares plane through a subset of a point list.
Plane fit_plane_indices(const std::vector<Vec3>& points, const std::vector<int>& indices);

ZoneSearchResult find_deployment_zone(const PointCloud& cloud, const NavigabilityMask& mask,
                                      const Vec3& entry_point, const ZoneParams& params = {});

DbscanResult dbscan(const PointCloud& points, double eps, int min_pts);

// Index into `clusters` of the selected cluster, or nullopt (occlusion).
std::optional<size_t> select_target_cluster(const std::vector<Cluster>& clusters,
                                            const AreaOfInterest& aoi,
                                            const SelectionWeights& weights);

// alpha weights the vision height against the encoder height.
TrackEstimate fuse_head_estimate(const Cluster* selected, double encoder_len,
                                 const Vec3& anchor_world,
                                 const std::optional<TrackEstimate>& prev, double now,
                                 double alpha = 0.7);

AccumulatedMap accumulate_map(AccumulatedMap map, const PointCloud& cloud);
// Single-owner variant of accumulate_map.
void accumulate_map_inplace(AccumulatedMap& map, const PointCloud& cloud);

}  // namespace marsupial

#endif  // MARSUPIAL_PERCEPTION_H_
