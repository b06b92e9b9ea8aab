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

#include "spatial_grid.h"

#include <algorithm>
#include <cmath>

namespace marsupial {

SpatialGrid::SpatialGrid(const std::vector<Vec3>& points, double cell_size)
    : points_(points), cell_size_(cell_size) {
  cells_.reserve(points.size());
  for (int i = 0; i < static_cast<int>(points.size()); ++i) {
    const Vec3& p = points[i];
    cells_[key(coord(p.x()), coord(p.y()), coord(p.z()))].push_back(i);
  }
}

int64_t SpatialGrid::coord(double v) const {
  return static_cast<int64_t>(std::floor(v / cell_size_));
}

uint64_t SpatialGrid::key(int64_t x, int64_t y, int64_t z) {
  // 21 bits per axis.
  constexpr uint64_t kMask = (1ull << 21) - 1;
  return (static_cast<uint64_t>(x) & kMask) | ((static_cast<uint64_t>(y) & kMask) << 21) |
         ((static_cast<uint64_t>(z) & kMask) << 42);
}

void SpatialGrid::radius_search(const Vec3& q, double radius, std::vector<int>& out) const {
  out.clear();
  const double r2 = radius * radius;
  const int64_t x0 = coord(q.x() - radius), x1 = coord(q.x() + radius);
  const int64_t y0 = coord(q.y() - radius), y1 = coord(q.y() + radius);
  const int64_t z0 = coord(q.z() - radius), z1 = coord(q.z() + radius);
  for (int64_t x = x0; x <= x1; ++x) {
    for (int64_t y = y0; y <= y1; ++y) {
      for (int64_t z = z0; z <= z1; ++z) {
        auto it = cells_.find(key(x, y, z));
        if (it == cells_.end()) continue;
        for (int i : it->second)
          if ((points_[i] - q).squaredNorm() <= r2) out.push_back(i);
      }
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
}

}  // namespace marsupial
