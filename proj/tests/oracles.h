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

// Slow, obviously-correct reference implementations used to check the
// library, plus shared scenario fixtures. Nothing here calls the code it
// is meant to check.

#ifndef MARSUPIAL_TESTS_ORACLES_H_
#define MARSUPIAL_TESTS_ORACLES_H_

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "marsupial/geometry.h"
#include "marsupial/perception.h"
#include "marsupial/scenario.h"

namespace oracle {

using marsupial::Vec3;

// ---- DBSCAN -------------------------------------------------------------

// All-pairs neighbourhoods and flood fill over core points. Returns the core
// components as sorted index lists, sorted by first element.
inline std::vector<std::vector<int>> core_partition(const std::vector<Vec3>& pts, double eps,
                                                    int min_pts) {
  const int n = static_cast<int>(pts.size());
  std::vector<bool> core(n, false);
  for (int i = 0; i < n; ++i) {
    int count = 0;
    for (int j = 0; j < n; ++j)
      if ((pts[i] - pts[j]).norm() <= eps) ++count;
    core[i] = count >= min_pts;
  }
  std::vector<int> comp(n, -1);
  std::vector<std::vector<int>> out;
  for (int s = 0; s < n; ++s) {
    if (!core[s] || comp[s] >= 0) continue;
    std::vector<int> stack{s}, members;
    comp[s] = static_cast<int>(out.size());
    while (!stack.empty()) {
      const int i = stack.back();
      stack.pop_back();
      members.push_back(i);
      for (int j = 0; j < n; ++j) {
        if (!core[j] || comp[j] >= 0 || (pts[i] - pts[j]).norm() > eps) continue;
        comp[j] = comp[s];
        stack.push_back(j);
      }
    }
    std::sort(members.begin(), members.end());
    out.push_back(members);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Core members of each library cluster, in the same canonical form.
inline std::vector<std::vector<int>> core_partition(const marsupial::DbscanResult& r) {
  std::vector<std::vector<int>> out;
  for (const marsupial::Cluster& c : r.clusters) {
    std::vector<int> members;
    for (size_t k = 0; k < c.member_indices.size(); ++k)
      if (c.is_core[k]) members.push_back(c.member_indices[k]);
    std::sort(members.begin(), members.end());
    if (!members.empty()) out.push_back(members);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---- Planes -------------------------------------------------------------

struct RefPlane {
  Vec3 normal = Vec3::UnitZ();  // upward
  double offset = 0.0;
  double rms = 0.0;
};

// Total least squares via SVD of the centred point matrix.
inline RefPlane svd_plane(const std::vector<Vec3>& pts) {
  Vec3 mean = Vec3::Zero();
  for (const Vec3& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Eigen::MatrixXd a(pts.size(), 3);
  for (size_t i = 0; i < pts.size(); ++i) a.row(static_cast<Eigen::Index>(i)) = pts[i] - mean;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinV);
  Vec3 n = svd.matrixV().col(2);
  if (n.z() < 0.0) n = -n;
  RefPlane out;
  out.normal = n.normalized();
  out.offset = out.normal.dot(mean);
  double ss = 0.0;
  for (const Vec3& p : pts) ss += std::pow(out.normal.dot(p) - out.offset, 2);
  out.rms = std::sqrt(ss / static_cast<double>(pts.size()));
  return out;
}

inline double sum_sq_distance(const std::vector<Vec3>& pts, const Vec3& normal, double offset) {
  const Vec3 n = normal.normalized();
  double ss = 0.0;
  for (const Vec3& p : pts) ss += std::pow(n.dot(p) - offset, 2);
  return ss;
}

// ---- Deployment zone ------------------------------------------------------

struct RefZone {
  int index = -1;
  double score = std::numeric_limits<double>::infinity();
};

// Scores every navigable point with a brute-force neighbourhood and an SVD
// plane; ties keep the lower index.
inline std::optional<RefZone> exhaustive_zone(const std::vector<Vec3>& pts,
                                              const std::vector<bool>& navigable,
                                              const Vec3& entry,
                                              const marsupial::ZoneParams& params) {
  std::optional<RefZone> best;
  for (size_t i = 0; i < pts.size(); ++i) {
    if (!navigable[i]) continue;
    std::vector<Vec3> patch;
    size_t nav = 0;
    for (size_t j = 0; j < pts.size(); ++j) {
      if ((pts[j] - pts[i]).norm() > params.min_patch_radius) continue;
      patch.push_back(pts[j]);
      if (navigable[j]) ++nav;
    }
    if (static_cast<double>(nav) < params.min_navigable_fraction * patch.size()) continue;
    if (patch.size() < 3) continue;
    const RefPlane plane = svd_plane(patch);
    const double score =
        params.w_dist * (pts[i] - entry).norm() + params.w_flatness * plane.rms;
    if (!best || score < best->score) best = RefZone{static_cast<int>(i), score};
  }
  return best;
}

// ---- B-splines ----------------------------------------------------------

// Cox-de Boor basis values N_{i,p}(u) for every control point. The right end
// of the domain is folded onto the last non-empty span.
inline std::vector<double> bspline_basis(const std::vector<double>& knots, int p, double u) {
  const int m = static_cast<int>(knots.size()) - 1;
  const int n = m - p;  // number of control points
  std::vector<double> basis(m, 0.0);
  const double u_end = knots[m - p];
  int span = -1;
  for (int i = 0; i < m; ++i) {
    if (knots[i] < knots[i + 1] && ((u >= knots[i] && u < knots[i + 1]) ||
                                    (u == u_end && knots[i + 1] == u_end))) {
      span = i;
    }
  }
  if (span >= 0) basis[span] = 1.0;
  for (int k = 1; k <= p; ++k) {
    std::vector<double> next(m - k, 0.0);
    for (int i = 0; i < m - k; ++i) {
      double v = 0.0;
      const double d1 = knots[i + k] - knots[i];
      const double d2 = knots[i + k + 1] - knots[i + 1];
      if (d1 > 0.0) v += (u - knots[i]) / d1 * basis[i];
      if (d2 > 0.0) v += (knots[i + k + 1] - u) / d2 * basis[i + 1];
      next[i] = v;
    }
    basis = next;
  }
  basis.resize(n);
  return basis;
}

// ---- Pendulum -------------------------------------------------------------

// Critically damped small-angle pendulum: theta(t) = (a + b t) e^{-w t}.
inline double critically_damped_angle(double theta0, double rate0, double omega, double t) {
  return (theta0 + (rate0 + omega * theta0) * t) * std::exp(-omega * t);
}

// ---- Scenario fixtures ----------------------------------------------------

inline std::string source_path(const std::string& rel) {
  return std::string(MARSUPIAL_SOURCE_DIR) + "/" + rel;
}

inline marsupial::ScenarioConfig nominal_config() {
  return marsupial::load_config(source_path("scenarios/nominal_detached.json"));
}

// Randomised but valid mission: terrain, entry geometry, start pose, mode,
// touchdown rule and fault mix all vary with `index`.
inline marsupial::ScenarioConfig fuzz_config(int index) {
  using namespace marsupial;
  std::mt19937_64 rng(0x5eed0000ULL + static_cast<uint64_t>(index));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };

  ScenarioConfig c = nominal_config();
  c.name = "fuzz_" + std::to_string(index);
  c.seed = 1000 + static_cast<uint64_t>(index);
  const double kind = u01(rng);
  if (kind < 0.4) {
    c.terrain.kind = "flat";
  } else if (kind < 0.7) {
    c.terrain.kind = "ramp";
    c.terrain.slope = Vec2(uni(-0.08, 0.08), uni(-0.08, 0.08));
    c.terrain.height = 0.4;
  } else {
    c.terrain.kind = "procedural";
    c.terrain.seed = static_cast<uint64_t>(index) + 17;
    c.terrain.amplitude = uni(0.02, 0.12);
    c.terrain.wavelength = uni(2.5, 5.0);
  }
  const Terrain t = build_terrain(c.terrain);

  // Building with its face toward the origin; entry just outside the face.
  const double face = uni(1.2, 1.8);
  const double half = uni(0.6, 1.2);
  const double ground = terrain_height_clamped(t, face, 0.0);
  c.obstacles = {Box{Vec3(face, -half, t.min_height()), Vec3(face + 1.5, half, ground + 1.0)}};
  c.entry_point = Vec3(face - 0.05, uni(-0.5 * half, 0.5 * half), ground);
  c.uav_start.position =
      Vec3(uni(-3.0, -1.0), uni(-3.0, 3.0), terrain_height_clamped(t, -2.0, 0.0) + 1.0);
  c.mission.mode = u01(rng) < 0.3 ? DeploymentMode::kAttached : DeploymentMode::kDetached;
  const double rule = u01(rng);
  c.mission.touchdown_rule = rule < 0.6   ? TouchdownRule::kBoth
                             : rule < 0.8 ? TouchdownRule::kGroundPlane
                                          : TouchdownRule::kSeparation;
  c.mission.ground_ops_waypoints.clear();
  const int legs = 1 + static_cast<int>(u01(rng) * 2.0);
  for (int k = 0; k < legs; ++k)
    c.mission.ground_ops_waypoints.push_back(Vec2(uni(0.0, 0.8), uni(-1.0, 1.0)));
  if (u01(rng) < 0.25) c.faults.epm_stuck_releases = 1;
  if (u01(rng) < 0.25) c.faults.camera_blackout = CameraBlackout{"LowerTether", uni(0.5, 8.0), 1.0};
  if (u01(rng) < 0.5) c.faults.swing_noise = uni(0.0, 0.02);
  if (u01(rng) < 0.15) c.faults.force_flip = true;
  if (u01(rng) < 0.3) c.perception.depth_noise = uni(0.0, 0.005);
  c.duration_limit = 400.0;
  return c;
}

}  // namespace oracle

#endif  // MARSUPIAL_TESTS_ORACLES_H_
