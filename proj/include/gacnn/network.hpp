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

// Encoder-decoder point classifier built from GAC modules.
//
// Encoder stage t samples the previous level with FPS, carries the sampled
// rows' features along, and runs a GAC module on the sampled set with a KNN
// graph and KDE density rebuilt from that level's coordinates. Decoder
// stages run coarsest to finest: IDW-interpolate onto the next finer level,
// concatenate that level's encoder features, and apply a GAC module without
// global attention. A per-point affine head produces class logits.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gacnn/attention.hpp"
#include "gacnn/error.hpp"
#include "gacnn/geometry.hpp"
#include "gacnn/tensor.hpp"

namespace gacnn {

struct GacnnConfig {
  std::vector<std::size_t> sample_sizes{1024, 512, 64, 16};
  std::vector<std::array<std::size_t, 3>> encoder_dims{
      {32, 32, 64}, {64, 64, 128}, {128, 128, 256}, {256, 256, 512}};
  /// (C2, C3) per decoder, coarsest first. The decoder's edge/density hidden
  /// width C1 equals its C2.
  std::vector<std::array<std::size_t, 2>> decoder_dims{
      {512, 512}, {256, 256}, {256, 128}, {128, 128}};
  std::size_t k_encoder = 32;
  std::size_t k_decoder = 16;
  std::size_t num_classes = 9;
  std::size_t input_feature_count = 2;
  AttentionFlags flags;  // encoder flags; decoders never use global attention
  std::size_t idw_k = 3;
  double idw_power = 2.0;
  double kde_bandwidth = 0.0;  // <= 0 selects the per-level default
  std::size_t fps_seed = 0;

  std::size_t levels() const { return sample_sizes.size(); }

  /// Small configuration used for finite-difference and trainability tests.
  static GacnnConfig micro(std::size_t num_classes, std::size_t input_features) {
    GacnnConfig c;
    c.sample_sizes = {16, 8, 4, 2};
    c.encoder_dims = {{4, 4, 8}, {8, 8, 8}, {8, 8, 8}, {8, 8, 8}};
    c.decoder_dims = {{8, 8}, {8, 8}, {8, 8}, {8, 8}};
    c.k_encoder = 4;
    c.k_decoder = 4;
    c.num_classes = num_classes;
    c.input_feature_count = input_features;
    return c;
  }

  void validate() const {
    auto fail = [](const std::string& what) { throw ConfigError("network", what); };
    if (sample_sizes.empty()) fail("at least one level is required");
    if (encoder_dims.size() != sample_sizes.size() || decoder_dims.size() != sample_sizes.size())
      fail("sample_sizes, encoder_dims and decoder_dims must have equal length");
    for (std::size_t t = 0; t < sample_sizes.size(); ++t) {
      if (sample_sizes[t] < 2) fail("sample sizes must be >= 2");
      if (t > 0 && sample_sizes[t] >= sample_sizes[t - 1])
        fail("sample_sizes must be strictly decreasing");
      for (auto d : encoder_dims[t])
        if (d == 0) fail("encoder widths must be positive");
      for (auto d : decoder_dims[t])
        if (d == 0) fail("decoder widths must be positive");
    }
    if (k_encoder == 0 || k_decoder == 0) fail("neighbor counts must be positive");
    if (num_classes < 2) fail("num_classes must be >= 2");
    if (idw_k == 0) fail("idw_k must be positive");
    if (!(idw_power > 0.0)) fail("idw_power must be positive");
  }

  /// Feature width carried by encoder level t (level 0 is the raw input).
  std::size_t level_width(std::size_t t) const {
    return t == 0 ? input_feature_count : encoder_dims[t - 1][2];
  }

  GacDims encoder_module_dims(std::size_t t) const {
    return {level_width(t), encoder_dims[t][0], encoder_dims[t][1], encoder_dims[t][2]};
  }

  GacDims decoder_module_dims(std::size_t d) const {
    const std::size_t coarse = d == 0 ? encoder_dims.back()[2] : decoder_dims[d - 1][1];
    const std::size_t skip = level_width(levels() - 1 - d);
    return {coarse + skip, decoder_dims[d][0], decoder_dims[d][0], decoder_dims[d][1]};
  }

  AttentionFlags decoder_flags() const { return {false, flags.use_edge, flags.use_density}; }
};

template <class T>
struct GacnnModel {
  GacnnConfig config;
  std::vector<GacModuleParams<T>> encoders;
  std::vector<GacModuleParams<T>> decoders;
  Dense<T> head;

  template <class F>
  void for_each_parameter(F&& visit) {
    for (std::size_t t = 0; t < encoders.size(); ++t)
      encoders[t].for_each_parameter("encoder" + std::to_string(t) + ".", visit);
    for (std::size_t d = 0; d < decoders.size(); ++d)
      decoders[d].for_each_parameter("decoder" + std::to_string(d) + ".", visit);
    visit(std::string("head.weight"), head.weight);
    visit(std::string("head.bias"), head.bias);
  }

  std::vector<Tensor<T>*> parameters() {
    std::vector<Tensor<T>*> out;
    for_each_parameter([&](const std::string&, Tensor<T>& t) { out.push_back(&t); });
    return out;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for_each_parameter([&](const std::string&, Tensor<T>& t) { n += t.size(); });
    return n;
  }
};

template <class T>
GacnnModel<T> make_model(const GacnnConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  GacnnModel<T> model;
  model.config = config;
  for (std::size_t t = 0; t < config.levels(); ++t)
    model.encoders.push_back(make_gac_params<T>(config.encoder_module_dims(t), config.flags, rng));
  for (std::size_t d = 0; d < config.levels(); ++d)
    model.decoders.push_back(
        make_gac_params<T>(config.decoder_module_dims(d), config.decoder_flags(), rng));
  model.head = make_dense<T>(config.decoder_dims.back()[1], config.num_classes, rng);
  return model;
}

/// Converts a cloud's feature table to a [N, C] tensor.
template <class T>
Tensor<T> features_tensor(const PointCloud& cloud) {
  return Tensor<T>({cloud.size(), cloud.feature_count},
                   std::vector<T>(cloud.features.begin(), cloud.features.end()));
}

template <class T>
struct Level {
  std::vector<Point3> coords;
  Tensor<T> features;
};

namespace detail {

/// KNN with K capped at N - 1 for levels smaller than the configured K.
inline KnnGraph level_graph(std::span<const Point3> coords, std::size_t k) {
  return knn_graph(coords, std::min(k, coords.size() - 1));
}

inline DensityField level_density(std::span<const Point3> coords, const KnnGraph& graph,
                                  double bandwidth) {
  return kde_density(coords, graph,
                     bandwidth > 0.0 ? bandwidth : default_bandwidth(coords, graph));
}

}  // namespace detail

/// Returns levels 0..L; level 0 is the input. Optional `traces` receives one
/// GacTrace per encoder stage.
template <class T>
std::vector<Level<T>> encode(const GacnnModel<T>& model, std::span<const Point3> coords,
                             const Tensor<T>& features,
                             std::vector<GacTrace<T>>* traces = nullptr) {
  const GacnnConfig& cfg = model.config;
  std::vector<Level<T>> levels;
  levels.push_back({std::vector<Point3>(coords.begin(), coords.end()), features});
  if (traces) traces->assign(cfg.levels(), {});
  for (std::size_t t = 0; t < cfg.levels(); ++t) {
    const Level<T>& prev = levels.back();
    const std::size_t m = cfg.sample_sizes[t];
    if (prev.coords.size() < m) {
      throw ParameterError("network", "encoder level " + std::to_string(t + 1) + " samples " +
                                          std::to_string(m) + " points but only " +
                                          std::to_string(prev.coords.size()) + " are available");
    }
    const auto idx = farthest_point_sample(prev.coords, m, std::min(cfg.fps_seed, prev.coords.size() - 1));
    Level<T> next;
    next.coords.reserve(m);
    for (auto i : idx) next.coords.push_back(prev.coords[i]);
    const auto sampled = gather_rows(prev.features, std::span<const std::size_t>(idx), Shape{m});
    const auto graph = detail::level_graph(next.coords, cfg.k_encoder);
    const auto density = detail::level_density(next.coords, graph, cfg.kde_bandwidth);
    next.features = gac_forward(model.encoders[t], next.coords, sampled, graph, density,
                                traces ? &(*traces)[t] : nullptr);
    levels.push_back(std::move(next));
  }
  return levels;
}

/// Per-point features [N0, decoder_dims.back()[1]] for the level-0 points.
template <class T>
Tensor<T> decode(const GacnnModel<T>& model, const std::vector<Level<T>>& levels) {
  const GacnnConfig& cfg = model.config;
  if (levels.size() != cfg.levels() + 1) {
    throw ContractError("network", "decode expects " + std::to_string(cfg.levels() + 1) +
                                       " levels, got " + std::to_string(levels.size()));
  }
  Tensor<T> current = levels.back().features;
  for (std::size_t d = 0; d < cfg.levels(); ++d) {
    const Level<T>& coarse = levels[cfg.levels() - d];
    const Level<T>& fine = levels[cfg.levels() - 1 - d];
    if (current.dim(0) != coarse.coords.size()) {
      throw ContractError("network", "decoder " + std::to_string(d) + " level mismatch");
    }
    const std::size_t k = std::min(cfg.idw_k, coarse.coords.size());
    const auto stencil = idw_stencil(coarse.coords, fine.coords, k, cfg.idw_power);
    const std::vector<T> weights(stencil.weights.begin(), stencil.weights.end());
    const auto interpolated = weighted_gather_rows(
        current, std::span<const std::size_t>(stencil.indices), std::span<const T>(weights), k);
    const auto input = concat_last(interpolated, fine.features);
    const auto graph = detail::level_graph(fine.coords, cfg.k_decoder);
    const auto density = detail::level_density(fine.coords, graph, cfg.kde_bandwidth);
    current = gac_forward(model.decoders[d], fine.coords, input, graph, density);
  }
  return current;
}

/// Class logits [N, num_classes].
template <class T>
Tensor<T> forward_logits(const GacnnModel<T>& model, std::span<const Point3> coords,
                         const Tensor<T>& features) {
  return apply(model.head, decode(model, encode(model, coords, features)), Activation::none);
}

/// Re-expresses coordinates relative to the block: x and y about the center
/// of the bounding box, z above the block minimum.
inline std::vector<Point3> center_block(std::span<const Point3> coords) {
  Point3 lo = coords[0], hi = coords[0];
  for (const auto& p : coords)
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
  const Point3 origin{0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]), lo[2]};
  std::vector<Point3> out(coords.size());
  for (std::size_t i = 0; i < coords.size(); ++i)
    for (int a = 0; a < 3; ++a) out[i][a] = coords[i][a] - origin[a];
  return out;
}

struct Prediction {
  std::size_t num_classes = 0;
  std::vector<double> probabilities;  // N x num_classes
  std::vector<int> labels;
};

/// Row-wise argmax, lowest index on ties.
template <class T>
std::vector<int> argmax_rows(const Tensor<T>& scores) {
  const std::size_t c = scores.dim(1);
  std::vector<int> out(scores.dim(0));
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (scores[i * c + j] > scores[i * c + best]) best = j;
    out[i] = static_cast<int>(best);
  }
  return out;
}

/// Classifies one block. Blocks smaller than the first sampling width are
/// padded by resampling with replacement; padded rows are dropped again.
template <class T>
Prediction predict(const GacnnModel<T>& model, const PointCloud& cloud) {
  const GacnnConfig& cfg = model.config;
  cloud.validate();
  if (cloud.feature_count != cfg.input_feature_count) {
    throw ConfigError("network", "cloud has " + std::to_string(cloud.feature_count) +
                                     " feature columns, model expects " +
                                     std::to_string(cfg.input_feature_count));
  }
  const std::size_t n = cloud.size();
  const PointCloud* input = &cloud;
  PointCloud padded;
  if (n < cfg.sample_sizes[0]) {
    std::vector<std::size_t> rows(n);
    for (std::size_t i = 0; i < n; ++i) rows[i] = i;
    std::mt19937_64 rng(0x5eed + n);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    while (rows.size() < cfg.sample_sizes[0]) rows.push_back(pick(rng));
    padded = cloud.subset(rows);
    input = &padded;
  }
  const auto coords = center_block(input->coords);
  const auto probs = softmax_last(forward_logits(model, coords, features_tensor<T>(*input)));
  Prediction out;
  out.num_classes = cfg.num_classes;
  out.probabilities.assign(probs.data().begin(),
                           probs.data().begin() + static_cast<std::ptrdiff_t>(n * cfg.num_classes));
  const auto labels = argmax_rows(probs);
  out.labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n));
  return out;
}

}  // namespace gacnn
