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

#ifndef MARSUPIAL_SRC_SPATIAL_GRID_H_
#define MARSUPIAL_SRC_SPATIAL_GRID_H_

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "marsupial/geometry.h"

namespace marsupial {

// Uniform hash grid for fixed-radius neighbour queries. Purely an
// accelerator: results match an all-pairs scan.
class SpatialGrid {
 public:
  SpatialGrid(const std::vector<Vec3>& points, double cell_size);

  // Indices with |p_i - query| <= radius, in ascending order.
  void radius_search(const Vec3& query, double radius, std::vector<int>& out) const;

 private:
  int64_t coord(double v) const;
  static uint64_t key(int64_t x, int64_t y, int64_t z);

  const std::vector<Vec3>& points_;
  double cell_size_;
  std::unordered_map<uint64_t, std::vector<int>> cells_;
};

}  // namespace marsupial

#endif  // MARSUPIAL_SRC_SPATIAL_GRID_H_
