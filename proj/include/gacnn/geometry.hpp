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

// Spatial kernels over point clouds: exact KNN graphs, farthest-point
// sampling, Gaussian kernel density, inverse-distance interpolation and
// cuboid tiling. Everything here is deterministic; distance ties are always
// broken by ascending point index.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gacnn/error.hpp"

namespace gacnn {

using Point3 = std::array<double, 3>;

inline double squared_distance(const Point3& a, const Point3& b) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  const double dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

struct PointCloud {
  std::vector<Point3> coords;
  std::size_t feature_count = 0;
  std::vector<double> features;  // row-major, size() x feature_count
  std::optional<std::vector<int>> labels;

  std::size_t size() const noexcept { return coords.size(); }

  std::span<const double> feature_row(std::size_t i) const {
    return std::span<const double>(features).subspan(i * feature_count, feature_count);
  }

  /// Rows `indices` in order (repeats allowed).
  PointCloud subset(std::span<const std::size_t> indices) const {
    PointCloud out;
    out.feature_count = feature_count;
    out.coords.reserve(indices.size());
    out.features.reserve(indices.size() * feature_count);
    if (labels) out.labels.emplace().reserve(indices.size());
    for (auto i : indices) {
      out.coords.push_back(coords.at(i));
      auto row = feature_row(i);
      out.features.insert(out.features.end(), row.begin(), row.end());
      if (labels) out.labels->push_back((*labels)[i]);
    }
    return out;
  }

  void validate() const {
    if (coords.empty()) throw DataError("geometry", "point cloud is empty");
    for (std::size_t i = 0; i < coords.size(); ++i) {
      for (double v : coords[i]) {
        if (!std::isfinite(v)) {
          throw DataError("geometry", "non-finite coordinate at point " + std::to_string(i));
        }
      }
    }
    if (features.size() != coords.size() * feature_count) {
      throw DataError("geometry", "feature table has " + std::to_string(features.size()) +
                                      " values, expected " +
                                      std::to_string(coords.size() * feature_count));
    }
    if (labels && labels->size() != coords.size()) {
      throw DataError("geometry", "label count " + std::to_string(labels->size()) +
                                      " != point count " + std::to_string(coords.size()));
    }
  }
};

/// Row i lists the k nearest points to point i (self excluded), nearest first.
struct KnnGraph {
  std::size_t k = 0;
  std::vector<std::size_t> indices;  // size() x k

  std::size_t size() const noexcept { return k == 0 ? 0 : indices.size() / k; }
  std::span<const std::size_t> row(std::size_t i) const {
    return std::span<const std::size_t>(indices).subspan(i * k, k);
  }
};

struct DensityField {
  std::vector<double> values;
  double bandwidth = 0.0;
};

namespace detail {

/// The k nearest of `points` to `query` ordered by (distance, index), skipping
/// index `skip` when given.
inline void k_nearest(std::span<const Point3> points, const Point3& query, std::size_t k,
                      std::optional<std::size_t> skip,
                      std::vector<std::pair<double, std::size_t>>& scratch,
                      std::size_t* out) {
  scratch.clear();
  for (std::size_t j = 0; j < points.size(); ++j) {
    if (skip && *skip == j) continue;
    scratch.emplace_back(squared_distance(query, points[j]), j);
  }
  auto nth = scratch.begin() + static_cast<std::ptrdiff_t>(k);
  if (nth != scratch.end()) std::nth_element(scratch.begin(), nth, scratch.end());
  std::sort(scratch.begin(), nth);
  for (std::size_t q = 0; q < k; ++q) out[q] = scratch[q].second;
}

}  // namespace detail

inline KnnGraph knn_graph(std::span<const Point3> coords, std::size_t k) {
  if (k == 0 || k >= coords.size()) {
    throw ParameterError("geometry", "knn_graph needs 0 < K < N, got K=" + std::to_string(k) +
                                         " N=" + std::to_string(coords.size()));
  }
  KnnGraph graph;
  graph.k = k;
  graph.indices.resize(coords.size() * k);
  std::vector<std::pair<double, std::size_t>> scratch;
  scratch.reserve(coords.size());
  for (std::size_t i = 0; i < coords.size(); ++i) {
    detail::k_nearest(coords, coords[i], k, i, scratch, graph.indices.data() + i * k);
  }
  return graph;
}

inline KnnGraph knn_graph(const PointCloud& cloud, std::size_t k) {
  return knn_graph(cloud.coords, k);
}

/// Greedy farthest-first traversal starting at `seed_index`.
inline std::vector<std::size_t> farthest_point_sample(std::span<const Point3> coords,
                                                      std::size_t m,
                                                      std::size_t seed_index = 0) {
  const std::size_t n = coords.size();
  if (m > n) {
    throw ParameterError("geometry", "cannot sample " + std::to_string(m) + " of " +
                                         std::to_string(n) + " points");
  }
  if (m == 0) return {};
  if (seed_index >= n) {
    throw ParameterError("geometry", "FPS seed index " + std::to_string(seed_index) +
                                         " out of range for " + std::to_string(n) + " points");
  }
  std::vector<std::size_t> selected;
  selected.reserve(m);
  std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
  std::vector<char> taken(n, 0);
  std::size_t current = seed_index;
  for (std::size_t t = 0; t < m; ++t) {
    selected.push_back(current);
    taken[current] = 1;
    if (t + 1 == m) break;
    std::size_t best = n;
    double best_d2 = -1.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (taken[j]) continue;
      min_d2[j] = std::min(min_d2[j], squared_distance(coords[j], coords[current]));
      if (min_d2[j] > best_d2) {
        best_d2 = min_d2[j];
        best = j;
      }
    }
    current = best;
  }
  return selected;
}

inline std::vector<std::size_t> farthest_point_sample(const PointCloud& cloud, std::size_t m,
                                                      std::size_t seed_index = 0) {
  return farthest_point_sample(cloud.coords, m, seed_index);
}

/// Mean distance from each point to its farthest (K-th) graph neighbor.
inline double default_bandwidth(std::span<const Point3> coords, const KnnGraph& graph) {
  double total = 0.0;
  for (std::size_t i = 0; i < graph.size(); ++i) {
    total += std::sqrt(squared_distance(coords[i], coords[graph.row(i).back()]));
  }
  const double h = graph.size() ? total / double(graph.size()) : 0.0;
  // Fully coincident neighborhoods give h = 0; fall back to unit scale.
  return h > 0.0 ? h : 1.0;
}

/// Gaussian KDE over each point's KNN neighborhood with n = K and d = 3:
///   f(p_i) = 1 / (K h (2 pi)^{3/2}) * sum_j exp(-|p_i - p_ij|^2 / (2 h^2))
inline DensityField kde_density(std::span<const Point3> coords, const KnnGraph& graph,
                                double bandwidth) {
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) {
    throw ParameterError("geometry", "KDE bandwidth must be positive, got " +
                                         std::to_string(bandwidth));
  }
  if (graph.size() != coords.size()) {
    throw ContractError("geometry", "KNN graph has " + std::to_string(graph.size()) +
                                        " rows for " + std::to_string(coords.size()) +
                                        " points");
  }
  const double norm =
      1.0 / (double(graph.k) * bandwidth * std::pow(2.0 * std::numbers::pi, 1.5));
  const double inv_2h2 = 1.0 / (2.0 * bandwidth * bandwidth);
  DensityField field;
  field.bandwidth = bandwidth;
  field.values.resize(coords.size());
  for (std::size_t i = 0; i < coords.size(); ++i) {
    double total = 0.0;
    for (auto j : graph.row(i)) total += std::exp(-squared_distance(coords[i], coords[j]) * inv_2h2);
    // an isolated point can underflow to 0; keep the field strictly positive
    field.values[i] = std::max(norm * total, std::numeric_limits<double>::min());
  }
  return field;
}

inline DensityField kde_density(const PointCloud& cloud, const KnnGraph& graph,
                                double bandwidth) {
  return kde_density(cloud.coords, graph, bandwidth);
}

/// Interpolation stencil: for each destination, its k nearest sources and
/// normalized inverse-distance weights.
struct IdwStencil {
  std::size_t k = 0;
  std::vector<std::size_t> indices;  // dst x k
  std::vector<double> weights;       // dst x k, rows sum to 1
};

inline IdwStencil idw_stencil(std::span<const Point3> src, std::span<const Point3> dst,
                              std::size_t k, double power) {
  if (k == 0 || k > src.size()) {
    throw ParameterError("geometry", "IDW needs 0 < k <= M, got k=" + std::to_string(k) +
                                         " M=" + std::to_string(src.size()));
  }
  IdwStencil st;
  st.k = k;
  st.indices.resize(dst.size() * k);
  st.weights.resize(dst.size() * k);
  std::vector<std::pair<double, std::size_t>> scratch;
  scratch.reserve(src.size());
  for (std::size_t n = 0; n < dst.size(); ++n) {
    std::size_t* idx = st.indices.data() + n * k;
    detail::k_nearest(src, dst[n], k, std::nullopt, scratch, idx);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double d = std::sqrt(squared_distance(dst[n], src[idx[j]]));
      const double w = 1.0 / (std::pow(d, power) + 1e-8);
      st.weights[n * k + j] = w;
      total += w;
    }
    for (std::size_t j = 0; j < k; ++j) st.weights[n * k + j] /= total;
  }
  return st;
}

/// Features (src.size() x channels) carried onto `dst` by inverse-distance
/// weighting over the k nearest sources, w = 1 / (d^power + 1e-8).
inline std::vector<double> idw_interpolate(std::span<const Point3> src,
                                           std::span<const double> src_feats,
                                           std::size_t channels,
                                           std::span<const Point3> dst, std::size_t k = 3,
                                           double power = 2.0) {
  if (src_feats.size() != src.size() * channels) {
    throw DimensionError("geometry", "IDW source features have " +
                                         std::to_string(src_feats.size()) + " values for " +
                                         std::to_string(src.size()) + "x" +
                                         std::to_string(channels));
  }
  const IdwStencil st = idw_stencil(src, dst, k, power);
  std::vector<double> out(dst.size() * channels, 0.0);
  for (std::size_t n = 0; n < dst.size(); ++n) {
    for (std::size_t j = 0; j < k; ++j) {
      const double w = st.weights[n * k + j];
      const double* f = src_feats.data() + st.indices[n * k + j] * channels;
      for (std::size_t c = 0; c < channels; ++c) out[n * channels + c] += w * f[c];
    }
  }
  return out;
}

struct Tile {
  PointCloud cloud;
  std::vector<std::size_t> source_indices;  // ascending rows of the input cloud
};

/// Partitions the cloud into an axis-aligned cuboid grid anchored at its
/// minimum corner. Groups of fewer than `min_points` points are folded into
/// the horizontally face-adjacent group with the most points, smallest first,
/// until no small group has a neighbor left.
inline std::vector<Tile> tile_scene(const PointCloud& cloud, double tile_x, double tile_y,
                                    double tile_z, std::size_t min_points) {
  if (cloud.size() == 0) throw ParameterError("geometry", "cannot tile an empty cloud");
  if (!(tile_x > 0.0 && tile_y > 0.0 && tile_z > 0.0)) {
    throw ParameterError("geometry", "tile dimensions must be positive");
  }
  const std::array<double, 3> size{tile_x, tile_y, tile_z};
  Point3 lo = cloud.coords[0], hi = cloud.coords[0];
  for (const auto& p : cloud.coords)
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
  std::array<long, 3> cells{};
  for (int a = 0; a < 3; ++a)
    cells[a] = std::max(1L, static_cast<long>(std::ceil((hi[a] - lo[a]) / size[a])));

  using Cell = std::array<long, 3>;
  auto cell_of = [&](const Point3& p) {
    Cell c{};
    for (int a = 0; a < 3; ++a)
      c[a] = std::clamp(static_cast<long>(std::floor((p[a] - lo[a]) / size[a])), 0L,
                        cells[a] - 1);
    return c;
  };
  auto cell_key = [&](const Cell& c) { return c[0] + cells[0] * (c[1] + cells[1] * c[2]); };

  // Occupied cells in key order; each starts as its own group.
  std::map<long, std::vector<std::size_t>> members;
  std::map<long, Cell> cell_at;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Cell c = cell_of(cloud.coords[i]);
    members[cell_key(c)].push_back(i);
    cell_at[cell_key(c)] = c;
  }
  std::map<long, long> group_of;  // cell key -> group id (lowest member key)
  std::map<long, std::vector<long>> group_cells;
  for (const auto& [key, pts] : members) {
    group_of[key] = key;
    group_cells[key] = {key};
  }
  auto group_size = [&](long g) {
    std::size_t n = 0;
    for (long key : group_cells[g]) n += members[key].size();
    return n;
  };

  std::vector<long> stuck;  // small groups with no neighbor
  while (true) {
    long small = -1;
    std::size_t small_n = 0;
    for (const auto& [g, keys] : group_cells) {
      if (std::find(stuck.begin(), stuck.end(), g) != stuck.end()) continue;
      const std::size_t n = group_size(g);
      if (n < min_points && (small < 0 || n < small_n)) {
        small = g;
        small_n = n;
      }
    }
    if (small < 0) break;

    long target = -1;
    std::size_t target_n = 0;
    for (long key : group_cells[small]) {
      const Cell c = cell_at[key];
      const Cell around[4] = {{c[0] - 1, c[1], c[2]},
                              {c[0] + 1, c[1], c[2]},
                              {c[0], c[1] - 1, c[2]},
                              {c[0], c[1] + 1, c[2]}};
      for (const Cell& nb : around) {
        if (nb[0] < 0 || nb[1] < 0 || nb[0] >= cells[0] || nb[1] >= cells[1]) continue;
        auto it = group_of.find(cell_key(nb));
        if (it == group_of.end() || it->second == small) continue;
        const std::size_t n = group_size(it->second);
        if (target < 0 || n > target_n || (n == target_n && it->second < target)) {
          target = it->second;
          target_n = n;
        }
      }
    }
    if (target < 0) {
      stuck.push_back(small);
      continue;
    }
    const long keep = std::min(small, target);
    const long gone = std::max(small, target);
    for (long key : group_cells[gone]) {
      group_of[key] = keep;
      group_cells[keep].push_back(key);
    }
    group_cells.erase(gone);
    stuck.erase(std::remove(stuck.begin(), stuck.end(), gone), stuck.end());
  }

  std::vector<Tile> tiles;
  for (const auto& [g, keys] : group_cells) {
    Tile tile;
    for (long key : keys) {
      const auto& pts = members[key];
      tile.source_indices.insert(tile.source_indices.end(), pts.begin(), pts.end());
    }
    std::sort(tile.source_indices.begin(), tile.source_indices.end());
    tile.cloud = cloud.subset(tile.source_indices);
    tiles.push_back(std::move(tile));
  }
  return tiles;
}

}  // namespace gacnn
