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

#include "marsupial/perception.h"

#include <algorithm>
#include <cmath>
#include <deque>
#include <random>
#include <utility>

#include <Eigen/Eigenvalues>

#include "spatial_grid.h"

namespace marsupial {

namespace {

// Eigen decomposition of the scatter matrix of the selected points.
struct Scatter {
  Vec3 centroid = Vec3::Zero();
  Eigen::Vector3d eigenvalues = Eigen::Vector3d::Zero();  // ascending
  Eigen::Matrix3d eigenvectors = Eigen::Matrix3d::Identity();
};

template <typename IndexFn>
Scatter scatter_of(size_t n, IndexFn&& point) {
  Scatter s;
  for (size_t i = 0; i < n; ++i) s.centroid += point(i);
  s.centroid /= static_cast<double>(n);
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (size_t i = 0; i < n; ++i) {
    const Vec3 d = point(i) - s.centroid;
    cov.noalias() += d * d.transpose();
  }
  cov /= static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
  s.eigenvalues = solver.eigenvalues();
  s.eigenvectors = solver.eigenvectors();
  return s;
}

Vec3 orient_up(Vec3 n) {
  n.normalize();
  if (n.z() < 0.0) return -n;
  if (n.z() == 0.0) {
    if (n.x() < 0.0 || (n.x() == 0.0 && n.y() < 0.0)) return -n;
  }
  return n;
}

template <typename IndexFn>
Plane plane_from(size_t n, IndexFn&& point) {
  if (n < 3) throw DegenerateInputError("plane fit needs at least 3 points");
  const Scatter s = scatter_of(n, point);
  const double scale = std::max(s.eigenvalues(2), 0.0);
  if (scale <= 0.0 || s.eigenvalues(1) <= 1e-12 * scale)
    throw DegenerateInputError("plane fit input is collinear or coincident");
  Plane plane;
  plane.normal = orient_up(s.eigenvectors.col(0));
  plane.offset = plane.normal.dot(s.centroid);
  double ss = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double d = plane.signed_distance(point(i));
    ss += d * d;
  }
  plane.rms_residual = std::sqrt(ss / static_cast<double>(n));
  plane.inlier_count = static_cast<int>(n);
  return plane;
}

}  // namespace

std::string to_string(VerticalSource s) {
  return s == VerticalSource::kVision ? "vision" : "encoder";
}

std::string to_string(HorizontalSource s) {
  return s == HorizontalSource::kVision ? "vision" : "hold_last";
}

AccumulatedMap::AccumulatedMap(double voxel_size) : voxel_size_(voxel_size) {
  if (!(voxel_size > 0.0)) throw std::invalid_argument("voxel_size must be > 0");
}

size_t AccumulatedMap::KeyHash::operator()(const std::array<int64_t, 3>& k) const {
  uint64_t h = 1469598103934665603ull;
  for (int64_t v : k) {
    h ^= static_cast<uint64_t>(v);
    h *= 1099511628211ull;
  }
  return static_cast<size_t>(h);
}

bool AccumulatedMap::insert(const Vec3& p) {
  const std::array<int64_t, 3> key{static_cast<int64_t>(std::floor(p.x() / voxel_size_)),
                                   static_cast<int64_t>(std::floor(p.y() / voxel_size_)),
                                   static_cast<int64_t>(std::floor(p.z() / voxel_size_))};
  auto [it, inserted] = index_.try_emplace(key, points_.size());
  if (inserted) points_.push_back(p);
  return inserted;
}

PointCloud AccumulatedMap::to_cloud() const {
  PointCloud cloud;
  cloud.frame = Frame::kWorld;
  cloud.points = points_;
  return cloud;
}

NormalCloud estimate_normals(const PointCloud& cloud, int k, double search_radius,
                             std::vector<std::string>* warnings) {
  if (k < 3) throw std::invalid_argument("estimate_normals needs k >= 3");
  const size_t n = cloud.size();
  NormalCloud out;
  out.normals.assign(n, Vec3::Zero());
  out.valid.assign(n, false);
  if (n < static_cast<size_t>(k)) {
    if (warnings) warnings->push_back("estimate_normals: cloud smaller than k");
    return out;
  }

  const bool bounded = std::isfinite(search_radius);
  std::optional<SpatialGrid> grid;
  if (bounded) grid.emplace(cloud.points, search_radius);

  std::vector<int> candidates;
  std::vector<std::pair<double, int>> ranked;
  for (size_t i = 0; i < n; ++i) {
    const Vec3& p = cloud.points[i];
    if (bounded) {
      grid->radius_search(p, search_radius, candidates);
    } else {
      candidates.resize(n);
      for (size_t j = 0; j < n; ++j) candidates[j] = static_cast<int>(j);
    }
    if (candidates.size() < static_cast<size_t>(k)) continue;
    ranked.clear();
    for (int j : candidates) ranked.emplace_back((cloud.points[j] - p).squaredNorm(), j);
    std::partial_sort(ranked.begin(), ranked.begin() + k, ranked.end());
    const Scatter s = scatter_of(static_cast<size_t>(k), [&](size_t m) -> const Vec3& {
      return cloud.points[ranked[m].second];
    });
    const Vec3 normal = s.eigenvectors.col(0);
    if (!all_finite(normal) || normal.norm() < 0.5) continue;
    out.normals[i] = orient_up(normal);
    out.valid[i] = true;
  }
  return out;
}

NavigabilityMask segment_navigable(const NormalCloud& normals, double slope_threshold) {
  if (!(slope_threshold > 0.0 && slope_threshold < kPi / 2.0))
    throw std::invalid_argument("slope_threshold must lie in (0, pi/2)");
  NavigabilityMask mask;
  mask.slope_threshold = slope_threshold;
  mask.navigable.assign(normals.normals.size(), false);
  const double min_cos = std::cos(slope_threshold);
  for (size_t i = 0; i < normals.normals.size(); ++i) {
    if (!normals.valid[i]) continue;
    // angle <= threshold  <=>  cos(angle) >= cos(threshold)
    mask.navigable[i] = std::clamp(normals.normals[i].z(), -1.0, 1.0) >= min_cos;
  }
  return mask;
}

Plane fit_plane_indices(const std::vector<Vec3>& points, const std::vector<int>& indices) {
  return plane_from(indices.size(), [&](size_t i) -> const Vec3& { return points[indices[i]]; });
}

Plane fit_plane(const PointCloud& cloud, PlaneFitMethod method, const RansacParams& ransac) {
  const std::vector<Vec3>& pts = cloud.points;
  if (method == PlaneFitMethod::kLeastSquares)
    return plane_from(pts.size(), [&](size_t i) -> const Vec3& { return pts[i]; });

  if (pts.size() < 3) throw DegenerateInputError("plane fit needs at least 3 points");
  std::mt19937_64 rng(ransac.seed);
  std::uniform_int_distribution<size_t> pick(0, pts.size() - 1);
  int best_count = -1;
  Vec3 best_normal = Vec3::UnitZ();
  Vec3 best_point = Vec3::Zero();
  for (int it = 0; it < ransac.iterations; ++it) {
    const size_t a = pick(rng), b = pick(rng), c = pick(rng);
    if (a == b || b == c || a == c) continue;
    Vec3 n = (pts[b] - pts[a]).cross(pts[c] - pts[a]);
    const double len = n.norm();
    if (len < 1e-12) continue;
    n /= len;
    int count = 0;
    for (const Vec3& p : pts)
      if (std::abs(n.dot(p - pts[a])) <= ransac.inlier_tol) ++count;
    if (count > best_count) {
      best_count = count;
      best_normal = n;
      best_point = pts[a];
    }
  }
  if (best_count < 3) throw DegenerateInputError("RANSAC found no non-degenerate sample");
  std::vector<int> inliers;
  for (int i = 0; i < static_cast<int>(pts.size()); ++i)
    if (std::abs(best_normal.dot(pts[i] - best_point)) <= ransac.inlier_tol) inliers.push_back(i);
  return fit_plane_indices(pts, inliers);
}

ZoneSearchResult find_deployment_zone(const PointCloud& cloud, const NavigabilityMask& mask,
                                      const Vec3& entry, const ZoneParams& params) {
  if (mask.navigable.size() != cloud.size())
    throw std::invalid_argument("navigability mask does not match cloud");
  ZoneSearchResult result;
  if (cloud.empty()) {
    result.reason = ZoneFailure::kEmptyCloud;
    return result;
  }
  const SpatialGrid grid(cloud.points, params.min_patch_radius);
  std::vector<int> patch;
  for (size_t i = 0; i < cloud.size(); ++i) {
    if (!mask.navigable[i]) continue;
    const Vec3& p = cloud.points[i];
    const double dist = (p - entry).norm();
    // The distance term alone already loses to the incumbent.
    if (result.zone && params.w_dist * dist >= result.zone->score) continue;
    grid.radius_search(p, params.min_patch_radius, patch);
    size_t nav = 0;
    for (int j : patch) nav += mask.navigable[j] ? 1 : 0;
    if (static_cast<double>(nav) < params.min_navigable_fraction * patch.size()) continue;
    Plane local;
    try {
      local = fit_plane_indices(cloud.points, patch);
    } catch (const DegenerateInputError&) {
      continue;
    }
    const double score = params.w_dist * dist + params.w_flatness * local.rms_residual;
    if (!result.zone || score < result.zone->score) {
      DeploymentZone z;
      z.plane = local;
      z.center = p - local.signed_distance(p) * local.normal;
      z.distance_to_entry = (z.center - entry).norm();
      z.score = score;
      z.point_index = static_cast<int>(i);
      result.zone = z;
    }
  }
  if (!result.zone) result.reason = ZoneFailure::kNoCandidate;
  return result;
}

DbscanResult dbscan(const PointCloud& cloud, double eps, int min_pts) {
  if (!(eps > 0.0)) throw std::invalid_argument("dbscan eps must be > 0");
  if (min_pts < 1) throw std::invalid_argument("dbscan min_pts must be >= 1");
  const int n = static_cast<int>(cloud.size());
  DbscanResult result;
  if (n == 0) return result;

  const SpatialGrid grid(cloud.points, eps);
  std::vector<std::vector<int>> neighbors(n);
  std::vector<bool> core(n, false);
  for (int i = 0; i < n; ++i) {
    grid.radius_search(cloud.points[i], eps, neighbors[i]);
    core[i] = static_cast<int>(neighbors[i].size()) >= min_pts;
  }

  std::vector<int> label(n, -1);
  int next = 0;
  std::deque<int> frontier;
  for (int i = 0; i < n; ++i) {
    if (!core[i] || label[i] >= 0) continue;
    const int c = next++;
    label[i] = c;
    frontier.push_back(i);
    while (!frontier.empty()) {
      const int p = frontier.front();
      frontier.pop_front();
      for (int q : neighbors[p]) {
        if (label[q] >= 0) continue;
        label[q] = c;
        if (core[q]) frontier.push_back(q);
      }
    }
  }

  result.clusters.resize(next);
  for (int i = 0; i < n; ++i) {
    if (label[i] < 0) {
      result.noise.push_back(i);
      continue;
    }
    Cluster& c = result.clusters[label[i]];
    c.member_indices.push_back(i);
    c.is_core.push_back(core[i]);
    c.centroid += cloud.points[i];
  }
  for (Cluster& c : result.clusters) c.centroid /= static_cast<double>(c.member_indices.size());
  return result;
}

std::optional<size_t> select_target_cluster(const std::vector<Cluster>& clusters,
                                            const AreaOfInterest& aoi,
                                            const SelectionWeights& w) {
  if (w.w_center < 0.0 || w.w_range < 0.0 || (w.w_center == 0.0 && w.w_range == 0.0))
    throw std::invalid_argument("selection weights must be >= 0 and not both zero");
  const Vec3 dir = aoi.direction.normalized();
  std::optional<size_t> best;
  double best_score = 0.0;
  for (size_t i = 0; i < clusters.size(); ++i) {
    const Vec3 rel = clusters[i].centroid - aoi.origin;
    const double along = rel.dot(dir);
    if (along < 0.0) continue;
    const double perp = (rel - along * dir).norm();
    if (perp > aoi.radius) continue;
    const double score = w.w_center * perp + w.w_range * along;
    if (!best || score < best_score) {
      best = i;
      best_score = score;
    }
  }
  return best;
}

TrackEstimate fuse_head_estimate(const Cluster* selected, double encoder_len,
                                 const Vec3& anchor, const std::optional<TrackEstimate>& prev,
                                 double now, double alpha) {
  if (!(encoder_len >= 0.0)) throw std::invalid_argument("encoder length must be >= 0");
  TrackEstimate est;
  est.timestamp = now;
  const double encoder_z = anchor.z() - encoder_len;
  if (selected) {
    est.position = {selected->centroid.x(), selected->centroid.y(),
                    alpha * selected->centroid.z() + (1.0 - alpha) * encoder_z};
    est.vertical_source = VerticalSource::kVision;
    est.horizontal_source = HorizontalSource::kVision;
    return est;
  }
  const Vec3 xy = prev ? prev->position : anchor;
  est.position = {xy.x(), xy.y(), encoder_z};
  est.vertical_source = VerticalSource::kEncoder;
  est.horizontal_source = HorizontalSource::kHoldLast;
  return est;
}

void accumulate_map_inplace(AccumulatedMap& map, const PointCloud& cloud) {
  if (map.paused()) return;
  for (const Vec3& p : cloud.points) map.insert(p);
}

AccumulatedMap accumulate_map(AccumulatedMap map, const PointCloud& cloud) {
  accumulate_map_inplace(map, cloud);
  return map;
}

}  // namespace marsupial
