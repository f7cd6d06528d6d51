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

// Edge, density and global attention, and the graph attention convolution
// (GAC) module that combines them.
//
// Shapes used throughout: N points, K neighbors per point, C input feature
// channels, and module widths (C1, C2, C3).

#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gacnn/error.hpp"
#include "gacnn/geometry.hpp"
#include "gacnn/tensor.hpp"

namespace gacnn {

/// One affine layer: weight [in, out], bias [out].
template <class T>
struct Dense {
  Tensor<T> weight;
  Tensor<T> bias;

  std::size_t in() const { return weight.dim(0); }
  std::size_t out() const { return weight.dim(1); }
};

/// Uniform in +-sqrt(6 / (fan_in + fan_out)), zero bias.
template <class T>
Dense<T> make_dense(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / double(in + out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<T> w(in * out);
  for (auto& v : w) v = T(dist(rng));
  return {Tensor<T>({in, out}, std::move(w), true), Tensor<T>::zeros({out}, true)};
}

template <class T>
Tensor<T> apply(const Dense<T>& layer, const Tensor<T>& x, Activation act) {
  return affine(x, layer.weight, layer.bias, act);
}

template <class T>
struct EdgeAttentionParams {
  Dense<T> layer1;  // 3 -> C1
  Dense<T> layer2;  // C1 -> C2
};

template <class T>
struct DensityAttentionParams {
  Dense<T> layer1;  // 1 -> C1
  Dense<T> layer2;  // C1 -> 1
};

template <class T>
struct GlobalAttentionParams {
  Dense<T> layer;  // 3 -> C1
};

struct AttentionFlags {
  bool use_global = true;
  bool use_edge = true;
  bool use_density = true;

  bool operator==(const AttentionFlags&) const = default;
};

struct GacDims {
  std::size_t in_features = 0;  // C
  std::size_t c1 = 0;
  std::size_t c2 = 0;
  std::size_t c3 = 0;

  bool operator==(const GacDims&) const = default;
};

template <class T>
struct GacModuleParams {
  GacDims dims;
  AttentionFlags flags;
  EdgeAttentionParams<T> edge;
  DensityAttentionParams<T> density;
  std::optional<GlobalAttentionParams<T>> global;
  std::optional<Dense<T>> neighbor_mlp;  // (3+C) -> C1, present with global
  Dense<T> fuse_mlp;                     // (3+C[+C1]) -> C2
  Dense<T> out_mlp;                      // C2 -> C3

  /// Visits (name, tensor) for every learnable tensor in a fixed order.
  template <class F>
  void for_each_parameter(const std::string& prefix, F&& visit) {
    auto dense = [&](const std::string& name, Dense<T>& d) {
      visit(prefix + name + ".weight", d.weight);
      visit(prefix + name + ".bias", d.bias);
    };
    dense("edge.layer1", edge.layer1);
    dense("edge.layer2", edge.layer2);
    dense("density.layer1", density.layer1);
    dense("density.layer2", density.layer2);
    if (global) dense("global.layer", global->layer);
    if (neighbor_mlp) dense("neighbor_mlp", *neighbor_mlp);
    dense("fuse_mlp", fuse_mlp);
    dense("out_mlp", out_mlp);
  }

  /// Throws ConfigError when flags and layer shapes disagree.
  void validate() const {
    auto fail = [](const std::string& what) { throw ConfigError("attention", what); };
    auto check = [&](const Dense<T>& d, std::size_t in, std::size_t out, const char* name) {
      if (!d.weight.defined() || d.in() != in || d.out() != out || d.bias.size() != out) {
        fail(std::string(name) + " expected " + std::to_string(in) + "->" +
             std::to_string(out));
      }
    };
    const std::size_t c = dims.in_features;
    check(edge.layer1, 3, dims.c1, "edge.layer1");
    check(edge.layer2, dims.c1, dims.c2, "edge.layer2");
    check(density.layer1, 1, dims.c1, "density.layer1");
    check(density.layer2, dims.c1, 1, "density.layer2");
    if (flags.use_global != global.has_value() || flags.use_global != neighbor_mlp.has_value()) {
      fail("use_global flag disagrees with the presence of global parameters");
    }
    if (global) {
      check(global->layer, 3, dims.c1, "global.layer");
      check(*neighbor_mlp, 3 + c, dims.c1, "neighbor_mlp");
    }
    check(fuse_mlp, 3 + c + (flags.use_global ? dims.c1 : 0), dims.c2, "fuse_mlp");
    check(out_mlp, dims.c2, dims.c3, "out_mlp");
  }
};

template <class T>
GacModuleParams<T> make_gac_params(const GacDims& dims, const AttentionFlags& flags,
                                   std::mt19937_64& rng) {
  if (dims.c1 == 0 || dims.c2 == 0 || dims.c3 == 0) {
    throw ConfigError("attention", "GAC widths must be positive");
  }
  GacModuleParams<T> p;
  p.dims = dims;
  p.flags = flags;
  const std::size_t c = dims.in_features;
  p.edge = {make_dense<T>(3, dims.c1, rng), make_dense<T>(dims.c1, dims.c2, rng)};
  p.density = {make_dense<T>(1, dims.c1, rng), make_dense<T>(dims.c1, 1, rng)};
  if (flags.use_global) {
    p.global = GlobalAttentionParams<T>{make_dense<T>(3, dims.c1, rng)};
    p.neighbor_mlp = make_dense<T>(3 + c, dims.c1, rng);
  }
  p.fuse_mlp = make_dense<T>(3 + c + (flags.use_global ? dims.c1 : 0), dims.c2, rng);
  p.out_mlp = make_dense<T>(dims.c2, dims.c3, rng);
  return p;
}

template <class T>
Tensor<T> coords_tensor(std::span<const Point3> coords) {
  std::vector<T> data(coords.size() * 3);
  for (std::size_t i = 0; i < coords.size(); ++i)
    for (int a = 0; a < 3; ++a) data[i * 3 + a] = T(coords[i][a]);
  return Tensor<T>({coords.size(), 3}, std::move(data));
}

/// e_ij = p_i - p_ij, shape [N, K, 3].
template <class T>
Tensor<T> edge_features(std::span<const Point3> coords, const KnnGraph& graph) {
  const std::size_t n = graph.size();
  const std::size_t k = graph.k;
  if (n != coords.size()) {
    throw ContractError("attention", "graph has " + std::to_string(n) + " rows for " +
                                         std::to_string(coords.size()) + " points");
  }
  std::vector<T> out(n * k * 3);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = graph.row(i);
    for (std::size_t q = 0; q < k; ++q) {
      if (row[q] >= n) {
        throw ContractError("attention", "neighbor index " + std::to_string(row[q]) +
                                             " out of range at point " + std::to_string(i));
      }
      for (int a = 0; a < 3; ++a)
        out[(i * k + q) * 3 + a] = T(coords[i][a] - coords[row[q]][a]);
    }
  }
  return Tensor<T>({n, k, 3}, std::move(out));
}

/// Edge attention weights [N, K, C2]: a two-layer MLP per edge (ReLU hidden,
/// linear logits) followed by a softmax over the K neighbors per channel.
template <class T>
Tensor<T> edge_attention(const EdgeAttentionParams<T>& params, const Tensor<T>& edges) {
  if (edges.rank() != 3 || edges.dim(2) != 3) {
    throw DimensionError("attention", "edge features must be [N,K,3], got " +
                                          to_string(edges.shape()));
  }
  const auto hidden = apply(params.layer1, edges, Activation::relu);
  const auto logits = apply(params.layer2, hidden, Activation::none);
  return softmax(logits, 1);
}

/// Inverse neighbor densities normalized by each row's maximum, [N x K] in (0, 1].
inline std::vector<double> normalized_inverse_density(const DensityField& density,
                                                      const KnnGraph& graph) {
  const std::size_t n = graph.size();
  const std::size_t k = graph.k;
  if (density.values.size() != n) {
    throw ContractError("attention", "density field has " +
                                         std::to_string(density.values.size()) +
                                         " values for " + std::to_string(n) + " points");
  }
  std::vector<double> out(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = graph.row(i);
    double mx = 0.0;
    for (std::size_t q = 0; q < k; ++q) {
      const double f = density.values.at(row[q]);
      if (!(f > 0.0)) {
        throw ContractError("attention", "non-positive density at point " +
                                             std::to_string(row[q]));
      }
      out[i * k + q] = 1.0 / f;
      mx = std::max(mx, out[i * k + q]);
    }
    for (std::size_t q = 0; q < k; ++q) out[i * k + q] /= mx;
  }
  return out;
}

/// Density attention weights [N, K, 1].
template <class T>
Tensor<T> density_attention(const DensityAttentionParams<T>& params,
                            const DensityField& density, const KnnGraph& graph) {
  const auto norm = normalized_inverse_density(density, graph);
  const Tensor<T> input({graph.size(), graph.k, 1}, std::vector<T>(norm.begin(), norm.end()));
  const auto hidden = apply(params.layer1, input, Activation::relu);
  return apply(params.layer2, hidden, Activation::none);
}

/// Signed pairwise differences D[i,j] = p_i - p_j, softmax-normalized over j
/// separately for each coordinate component. Shape [N, N, 3].
template <class T>
Tensor<T> global_normalized_distance(std::span<const Point3> coords) {
  const std::size_t n = coords.size();
  if (n == 0) throw DimensionError("attention", "global attention on an empty point set");
  std::vector<T> diff(n * n * 3);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (int a = 0; a < 3; ++a) diff[(i * n + j) * 3 + a] = T(coords[i][a] - coords[j][a]);
  return softmax(Tensor<T>({n, n, 3}, std::move(diff)), 1);
}

/// Global attention weights [N, N, C1]: one affine layer over the normalized
/// pairwise differences.
template <class T>
Tensor<T> global_attention(const GlobalAttentionParams<T>& params,
                           std::span<const Point3> coords) {
  return apply(params.layer, global_normalized_distance<T>(coords), Activation::none);
}

/// Intermediate maps of one gac_forward call, for inspection.
template <class T>
struct GacTrace {
  Tensor<T> global_attention;   // [N, N, C1]
  Tensor<T> global_features;    // F_g [N, K, C1]
  Tensor<T> edge_attention;     // [N, K, C2]
  Tensor<T> density_attention;  // [N, K, 1]
  Tensor<T> output;             // F_out [N, C3]
};

/// The graph attention convolution module. `features` is [N, C] (C may be 0);
/// the result is [N, C3].
template <class T>
Tensor<T> gac_forward(const GacModuleParams<T>& params, std::span<const Point3> coords,
                      const Tensor<T>& features, const KnnGraph& graph,
                      const DensityField& density, GacTrace<T>* trace = nullptr) {
  params.validate();
  const std::size_t n = coords.size();
  const std::size_t k = graph.k;
  if (features.rank() != 2 || features.dim(0) != n ||
      features.dim(1) != params.dims.in_features) {
    throw ConfigError("attention", "features " + to_string(features.shape()) +
                                       " do not match " + std::to_string(n) + " points x " +
                                       std::to_string(params.dims.in_features) + " channels");
  }
  if (graph.size() != n) {
    throw ConfigError("attention", "KNN graph has " + std::to_string(graph.size()) +
                                       " rows for " + std::to_string(n) + " points");
  }
  if (params.flags.use_density && density.values.size() != n) {
    throw ConfigError("attention", "density attention enabled without a density field");
  }

  // (1) neighbor sets G = gather(coords || features) : [N, K, 3+C]
  const auto points = concat_last(coords_tensor<T>(coords), features);
  const auto neighbors = gather_rows(points, std::span<const std::size_t>(graph.indices),
                                     Shape{n, k});

  // (2) global context F_g[i,k,c] = sum_j G[i,j,c] * M[j,k,c]
  Tensor<T> fused_in = neighbors;
  if (params.flags.use_global) {
    const auto mapped = apply(*params.neighbor_mlp, neighbors, Activation::relu);
    const auto weights = global_attention(*params.global, coords);
    const auto context = channel_contract(weights, mapped);
    fused_in = concat_last(neighbors, context);
    if (trace) {
      trace->global_attention = weights;
      trace->global_features = context;
    }
  }

  // (3)-(5) shared MLP, then edge and density reweighting
  auto features2 = apply(params.fuse_mlp, fused_in, Activation::relu);
  if (params.flags.use_edge) {
    const auto attn = edge_attention(params.edge, edge_features<T>(coords, graph));
    features2 = mul(attn, features2);
    if (trace) trace->edge_attention = attn;
  }
  if (params.flags.use_density) {
    const auto attn = density_attention(params.density, density, graph);
    features2 = mul(features2, attn);
    if (trace) trace->density_attention = attn;
  }

  // (6) per-neighbor MLP, max-pooled over K
  auto out = max_axis(apply(params.out_mlp, features2, Activation::relu), 1);
  if (trace) trace->output = out;
  return out;
}

}  // namespace gacnn
