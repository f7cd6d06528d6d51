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

// Seeded toy scene: a ground plane (label 0), a vertical wall (label 1) and a
// spherical tree canopy (label 2). Intensity is drawn from the same
// distribution for every class, so only geometry separates them.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "gacnn/data_io.hpp"

namespace gacnn {

struct SyntheticSceneOptions {
  std::size_t points = 4096;
  double extent = 20.0;         // ground is [-extent/2, extent/2]^2
  double wall_height = 6.0;
  double canopy_radius = 3.0;
  double canopy_center_z = 7.0;
  double noise = 0.05;
  std::uint64_t seed = 0;
};

inline std::vector<PointRecord> synthetic_scene_records(const SyntheticSceneOptions& opt = {}) {
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> jitter(0.0, opt.noise);
  const double half = 0.5 * opt.extent;
  const std::size_t n_wall = opt.points / 4;
  const std::size_t n_canopy = opt.points * 3 / 10;
  const std::size_t n_ground = opt.points - n_wall - n_canopy;

  std::vector<PointRecord> out;
  out.reserve(opt.points);
  auto emit = [&](double x, double y, double z, int label) {
    PointRecord r;
    r.x = x + jitter(rng);
    r.y = y + jitter(rng);
    r.z = z + jitter(rng);
    r.intensity = unit(rng);
    r.label = label;
    out.push_back(r);
  };
  for (std::size_t i = 0; i < n_ground; ++i)
    emit(-half + opt.extent * unit(rng), -half + opt.extent * unit(rng), 0.0, 0);
  for (std::size_t i = 0; i < n_wall; ++i)
    emit(0.3 * half, -0.8 * half + 1.6 * half * unit(rng), opt.wall_height * unit(rng), 1);
  for (std::size_t i = 0; i < n_canopy; ++i) {
    // uniform direction, radius biased toward the shell like a real crown
    const double u = 2.0 * unit(rng) - 1.0;
    const double phi = 2.0 * 3.14159265358979323846 * unit(rng);
    const double s = std::sqrt(1.0 - u * u);
    const double r = opt.canopy_radius * std::cbrt(0.3 + 0.7 * unit(rng));
    emit(-0.5 * half + r * s * std::cos(phi), -0.3 * half + r * s * std::sin(phi),
         opt.canopy_center_z + r * u, 2);
  }
  return out;
}

inline PointCloud synthetic_scene(const SyntheticSceneOptions& opt = {},
                                  const DataConfig& data = {}) {
  const auto records = synthetic_scene_records(opt);
  return build_cloud(records, data);
}

}  // namespace gacnn
