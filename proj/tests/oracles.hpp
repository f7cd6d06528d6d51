// Copyright 2026 The GACNN Authors
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

// Direct, unoptimized reference computations used as test oracles.

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "gacnn/geometry.hpp"

namespace gacnn::oracle {

inline double dist2(const Point3& a, const Point3& b) {
  double s = 0;
  for (int i = 0; i < 3; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

/// All-pairs sort by (distance, index), self excluded.
inline std::vector<std::size_t> brute_knn(std::span<const Point3> pts, std::size_t k) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    std::vector<std::size_t> order;
    for (std::size_t j = 0; j < pts.size(); ++j)
      if (j != i) order.push_back(j);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return dist2(pts[i], pts[a]) < dist2(pts[i], pts[b]);
    });
    out.insert(out.end(), order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return out;
}

/// min over selected s of |q - s|
inline double distance_to_set(std::span<const Point3> pts, std::size_t q,
                              std::span<const std::size_t> selected) {
  double best = INFINITY;
  for (auto s : selected) best = std::min(best, std::sqrt(dist2(pts[q], pts[s])));
  return best;
}

/// Gaussian KDE by direct summation over the neighbor rows `nbrs`.
inline std::vector<double> kde(std::span<const Point3> pts, std::span<const std::size_t> nbrs,
                               std::size_t k, double h) {
  const double pi = std::acos(-1.0);
  std::vector<double> out(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    double s = 0;
    for (std::size_t q = 0; q < k; ++q) {
      const Point3& p = pts[nbrs[i * k + q]];
      const double ux = (pts[i][0] - p[0]) / h;
      const double uy = (pts[i][1] - p[1]) / h;
      const double uz = (pts[i][2] - p[2]) / h;
      s += std::exp(-0.5 * (ux * ux + uy * uy + uz * uz));
    }
    out[i] = s / (double(k) * h * std::pow(2 * pi, 1.5));
  }
  return out;
}

}  // namespace gacnn::oracle
