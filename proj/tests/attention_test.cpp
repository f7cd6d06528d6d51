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

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "test_util.hpp"

namespace gacnn {
namespace {

using testing::Projection;
using testing::as_span;
using testing::offset_biases;
using testing::random_points;
using testing::random_tensor;

template <class T>
Dense<T> constant_dense(std::size_t in, std::size_t out, T w, T b) {
  return {Tensor<T>::full({in, out}, w, true), Tensor<T>::full({out}, b, true)};
}

template <class T>
Dense<T> identity_dense(std::size_t n) {
  std::vector<T> w(n * n, T(0));
  for (std::size_t i = 0; i < n; ++i) w[i * n + i] = T(1);
  return {Tensor<T>({n, n}, w, true), Tensor<T>::zeros({n}, true)};
}

KnnGraph manual_graph(std::size_t k, std::vector<std::size_t> indices) {
  KnnGraph g;
  g.k = k;
  g.indices = std::move(indices);
  return g;
}

TEST(EdgeFeatures, ComponentwiseDifference) {
  const std::vector<Point3> pts{{1, 2, 3}, {0, 2, 3}};
  const auto e = edge_features<double>(pts, manual_graph(1, {1, 0}));
  EXPECT_EQ(e.shape(), (Shape{2, 1, 3}));
  EXPECT_EQ(e.at({0, 0, 0}), 1.0);
  EXPECT_EQ(e.at({0, 0, 1}), 0.0);
  EXPECT_EQ(e.at({0, 0, 2}), 0.0);
  EXPECT_EQ(e.at({1, 0, 0}), -1.0);
}

TEST(EdgeFeatures, DuplicateCoordinatesGiveZeroVector) {
  const std::vector<Point3> pts{{4, 4, 4}, {4, 4, 4}, {9, 9, 9}};
  const auto e = edge_features<double>(pts, knn_graph(std::span<const Point3>(pts), 1));
  for (std::size_t a = 0; a < 3; ++a) EXPECT_EQ(e.at({0, 0, a}), 0.0);
}

TEST(EdgeFeatures, CollinearFixture) {
  const std::vector<Point3> pts{{0, 0, 0}, {1, 0, 0}, {3, 0, 0}};
  const auto e = edge_features<double>(pts, knn_graph(std::span<const Point3>(pts), 2));
  // rows [1,2], [0,2], [1,0]
  const double expect_x[3][2] = {{-1, -3}, {1, -2}, {2, 3}};
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t q = 0; q < 2; ++q) {
      EXPECT_EQ(e.at({i, q, 0}), expect_x[i][q]);
      EXPECT_EQ(e.at({i, q, 1}), 0.0);
    }
}

TEST(EdgeFeatures, BadIndexIsContractError) {
  const std::vector<Point3> pts{{0, 0, 0}, {1, 0, 0}};
  EXPECT_THROW(edge_features<float>(pts, manual_graph(1, {1, 2})), ContractError);
}

TEST(EdgeAttention, ZeroParametersAreUniform) {
  const EdgeAttentionParams<float> p{constant_dense<float>(3, 4, 0, 0),
                                     constant_dense<float>(4, 5, 0, 0)};
  std::mt19937_64 rng(1);
  const auto a = edge_attention(p, random_tensor<float>({6, 4, 3}, rng, -1, 1, false));
  for (auto v : a.data()) EXPECT_FLOAT_EQ(v, 0.25f);
}

TEST(EdgeAttention, SingleNeighborIsOne) {
  std::mt19937_64 rng(2);
  const EdgeAttentionParams<float> p{make_dense<float>(3, 4, rng), make_dense<float>(4, 2, rng)};
  const auto a = edge_attention(p, random_tensor<float>({5, 1, 3}, rng, -1, 1, false));
  for (auto v : a.data()) EXPECT_EQ(v, 1.0f);
}

TEST(EdgeAttention, IdentityParamsMatchHandSoftmax) {
  const EdgeAttentionParams<double> p{identity_dense<double>(3), identity_dense<double>(3)};
  // one point, two edges: relu((1,-2,0.5)) and relu((0,3,-1))
  const Tensor<double> edges({1, 2, 3}, {1, -2, 0.5, 0, 3, -1});
  const auto a = edge_attention(p, edges);
  const double l0[3] = {1, 0, 0.5};
  const double l1[3] = {0, 3, 0};
  for (std::size_t c = 0; c < 3; ++c) {
    const double z = std::exp(l0[c]) + std::exp(l1[c]);
    EXPECT_NEAR(a.at({0, 0, c}), std::exp(l0[c]) / z, 1e-15);
    EXPECT_NEAR(a.at({0, 1, c}), std::exp(l1[c]) / z, 1e-15);
  }
}

TEST(EdgeAttention, SumsToOneOverNeighbors) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const EdgeAttentionParams<float> p{make_dense<float>(3, 8, rng),
                                       make_dense<float>(8, 6, rng)};
    const auto a = edge_attention(p, random_tensor<float>({9, 7, 3}, rng, -20, 20, false));
    for (std::size_t i = 0; i < 9; ++i)
      for (std::size_t c = 0; c < 6; ++c) {
        double s = 0;
        for (std::size_t q = 0; q < 7; ++q) s += a.at({i, q, c});
        EXPECT_NEAR(s, 1.0, 1e-6);
      }
  }
}

TEST(EdgeAttention, WrongEdgeShapeIsDimensionError) {
  std::mt19937_64 rng(4);
  const EdgeAttentionParams<float> p{make_dense<float>(3, 2, rng), make_dense<float>(2, 2, rng)};
  EXPECT_THROW(edge_attention(p, Tensor<float>::zeros({2, 2, 2})), DimensionError);
}

TEST(DensityAttention, NormalizedInverseDensityExample) {
  DensityField d;
  d.values = {1.0, 0.2, 0.4};
  const auto norm = normalized_inverse_density(d, manual_graph(2, {1, 2, 0, 2, 0, 1}));
  EXPECT_DOUBLE_EQ(norm[0], 1.0);
  EXPECT_DOUBLE_EQ(norm[1], 0.5);
}

TEST(DensityAttention, UniformDensityNormalizesToOne) {
  DensityField d;
  d.values.assign(4, 0.3);
  const auto norm = normalized_inverse_density(d, manual_graph(3, {1, 2, 3, 0, 2, 3, 0, 1, 3,
                                                                   0, 1, 2}));
  for (double v : norm) EXPECT_EQ(v, 1.0);
}

TEST(DensityAttention, RangeAndExactRowMaximum) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto pts = random_points(40, rng);
    const auto g = knn_graph(std::span<const Point3>(pts), 6);
    const auto d = kde_density(std::span<const Point3>(pts), g, 0.3);
    const auto norm = normalized_inverse_density(d, g);
    for (std::size_t i = 0; i < 40; ++i) {
      double mx = 0;
      for (std::size_t q = 0; q < 6; ++q) {
        const double v = norm[i * 6 + q];
        EXPECT_GT(v, 0.0);
        EXPECT_LE(v, 1.0);
        mx = std::max(mx, v);
      }
      EXPECT_EQ(mx, 1.0);
    }
  }
}

TEST(DensityAttention, ZeroWeightsGiveBias) {
  const DensityAttentionParams<float> p{constant_dense<float>(1, 4, 0, 0),
                                        constant_dense<float>(4, 1, 0, 0.7f)};
  DensityField d;
  d.values = {0.1, 0.5, 0.9};
  const auto a = density_attention(p, d, manual_graph(2, {1, 2, 0, 2, 0, 1}));
  EXPECT_EQ(a.shape(), (Shape{3, 2, 1}));
  for (auto v : a.data()) EXPECT_FLOAT_EQ(v, 0.7f);
}

TEST(DensityAttention, NonPositiveDensityIsContractError) {
  DensityField d;
  d.values = {0.1, 0.0};
  EXPECT_THROW(normalized_inverse_density(d, manual_graph(1, {1, 0})), ContractError);
}

TEST(GlobalAttention, TwoPointExample) {
  const std::vector<Point3> pts{{0, 0, 0}, {1, 2, 3}};
  const auto g = global_normalized_distance<double>(pts);
  // row 0 component a sees differences (0, -a_1): softmax = 1/(1+e^-d), e^-d/(1+e^-d)
  const double d[3] = {1, 2, 3};
  for (std::size_t a = 0; a < 3; ++a) {
    const double self0 = 1.0 / (1.0 + std::exp(-d[a]));
    EXPECT_NEAR(g.at({0, 0, a}), self0, 1e-15);
    EXPECT_NEAR(g.at({0, 1, a}), 1.0 - self0, 1e-15);
    // row 1 sees (+d, 0)
    const double self1 = 1.0 / (1.0 + std::exp(d[a]));
    EXPECT_NEAR(g.at({1, 1, a}), self1, 1e-15);
    EXPECT_NEAR(g.at({1, 0, a}), 1.0 - self1, 1e-15);
  }
}

TEST(GlobalAttention, SinglePointIsAffineOfOnes) {
  std::mt19937_64 rng(6);
  const GlobalAttentionParams<double> p{make_dense<double>(3, 4, rng)};
  const std::vector<Point3> pts{{5, -1, 2}};
  const auto a = global_attention(p, pts);
  ASSERT_EQ(a.shape(), (Shape{1, 1, 4}));
  for (std::size_t c = 0; c < 4; ++c) {
    double s = p.layer.bias[c];
    for (std::size_t r = 0; r < 3; ++r) s += p.layer.weight[r * 4 + c];
    EXPECT_NEAR(a.at({0, 0, c}), s, 1e-15);
  }
}

TEST(GlobalAttention, NormalizationSumsToOnePerComponent) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const auto pts = random_points(30, rng, 50.0);
    const auto g = global_normalized_distance<float>(pts);
    for (std::size_t i = 0; i < 30; ++i)
      for (std::size_t a = 0; a < 3; ++a) {
        double s = 0;
        for (std::size_t j = 0; j < 30; ++j) s += g.at({i, j, a});
        EXPECT_NEAR(s, 1.0, 1e-6);
      }
  }
}

template <class T = double>
struct GacFixtureT {
  std::vector<Point3> pts;
  Tensor<T> feats;
  KnnGraph graph;
  DensityField density;

  GacFixtureT(std::size_t n, std::size_t k, std::size_t c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    pts = random_points(n, rng);
    feats = random_tensor<T>({n, c}, rng, -1, 1, false);
    graph = knn_graph(std::span<const Point3>(pts), k);
    density = kde_density(std::span<const Point3>(pts), graph,
                          default_bandwidth(pts, graph));
  }
};
using GacFixture = GacFixtureT<>;

TEST(GacForward, ShapeContract) {
  std::mt19937_64 rng(8);
  const GacFixture fx(32, 8, 2, 9);
  const auto p = make_gac_params<double>({2, 4, 8, 16}, {}, rng);
  const auto out = gac_forward(p, fx.pts, fx.feats, fx.graph, fx.density);
  EXPECT_EQ(out.shape(), (Shape{32, 16}));
}

TEST(GacForward, DegeneratePipelineIsFuseOfSingleNeighbor) {
  std::mt19937_64 rng(10);
  const GacFixture fx(6, 1, 2, 11);
  auto p = make_gac_params<double>({2, 3, 4, 4}, {false, false, false}, rng);
  p.out_mlp = identity_dense<double>(4);
  const auto out = gac_forward(p, fx.pts, fx.feats, fx.graph, fx.density);
  for (std::size_t i = 0; i < 6; ++i) {
    const std::size_t j = fx.graph.row(i)[0];
    std::vector<double> row{fx.pts[j][0], fx.pts[j][1], fx.pts[j][2], fx.feats.at({j, 0}),
                            fx.feats.at({j, 1})};
    for (std::size_t c = 0; c < 4; ++c) {
      double s = p.fuse_mlp.bias[c];
      for (std::size_t r = 0; r < 5; ++r) s += row[r] * p.fuse_mlp.weight[r * 4 + c];
      EXPECT_NEAR(out.at({i, c}), std::max(s, 0.0), 1e-12);
    }
  }
}

TEST(GacForward, UniformEdgeWeightsScaleByOneOverK) {
  std::mt19937_64 rng(12);
  const GacFixture fx(20, 5, 2, 13);
  auto off = make_gac_params<double>({2, 4, 6, 6}, {false, false, false}, rng);
  off.out_mlp = identity_dense<double>(6);
  auto on = off;
  on.flags.use_edge = true;
  on.edge = {constant_dense<double>(3, 4, 0, 0), constant_dense<double>(4, 6, 0, 0)};
  const auto a = gac_forward(off, fx.pts, fx.feats, fx.graph, fx.density);
  const auto b = gac_forward(on, fx.pts, fx.feats, fx.graph, fx.density);
  for (std::size_t e = 0; e < a.size(); ++e) EXPECT_NEAR(b[e], a[e] / 5.0, 1e-12);
}

TEST(GacForward, NeutralDensityAttentionEqualsFlagOff) {
  std::mt19937_64 rng(14);
  const GacFixture fx(24, 6, 3, 15);
  auto on = make_gac_params<double>({3, 4, 8, 8}, {true, true, true}, rng);
  on.density = {constant_dense<double>(1, 4, 0, 0), constant_dense<double>(4, 1, 0, 1)};
  auto off = on;
  off.flags.use_density = false;
  const auto a = gac_forward(on, fx.pts, fx.feats, fx.graph, fx.density);
  const auto b = gac_forward(off, fx.pts, fx.feats, fx.graph, fx.density);
  for (std::size_t e = 0; e < a.size(); ++e) EXPECT_EQ(a[e], b[e]);
}

TEST(GacForward, ZeroGlobalContextEqualsFlagOff) {
  std::mt19937_64 rng(16);
  const GacFixture fx(24, 6, 2, 17);
  auto on = make_gac_params<double>({2, 4, 8, 8}, {true, true, true}, rng);
  // zero mapping M makes the global context F_g identically zero
  on.neighbor_mlp = constant_dense<double>(5, 4, 0, 0);
  auto off = on;
  off.flags.use_global = false;
  off.global.reset();
  off.neighbor_mlp.reset();
  // keep only the fuse_mlp rows that see the neighbor set itself
  std::vector<double> w(on.fuse_mlp.weight.data().begin(),
                        on.fuse_mlp.weight.data().begin() + 5 * 8);
  off.fuse_mlp.weight = Tensor<double>({5, 8}, w, true);
  const auto a = gac_forward(on, fx.pts, fx.feats, fx.graph, fx.density);
  const auto b = gac_forward(off, fx.pts, fx.feats, fx.graph, fx.density);
  for (std::size_t e = 0; e < a.size(); ++e) EXPECT_NEAR(a[e], b[e], 1e-14);
}

TEST(GacForward, GradientsMatchFiniteDifferencesForAllFlags) {
  for (int mask = 0; mask < 8; ++mask) {
    std::mt19937_64 rng(100 + mask);
    const GacFixtureT<long double> fx(12, 4, 2, 200 + mask);
    const AttentionFlags flags{bool(mask & 1), bool(mask & 2), bool(mask & 4)};
    auto p = make_gac_params<long double>({2, 3, 4, 5}, flags, rng);
    std::vector<Tensor<long double>*> params;
    p.for_each_parameter("", [&](const std::string&, Tensor<long double>& t) { params.push_back(&t); });
    offset_biases(params, rng);
    Projection<long double> proj(300 + mask);
    const auto r = grad_check_detailed<long double>(
        [&] { return proj(gac_forward(p, fx.pts, fx.feats, fx.graph, fx.density)); },
        as_span(params), 1e-6);
    EXPECT_LT(r.max_relative_error, 1e-4)
        << "flags " << mask << " param " << r.worst_param << " entry " << r.worst_entry
        << " analytic " << r.worst_analytic << " numeric " << r.worst_numeric;
  }
}

TEST(GacForward, PermutationEquivariant) {
  std::mt19937_64 rng(18);
  const GacFixture fx(30, 6, 2, 19);
  const auto p = make_gac_params<double>({2, 4, 6, 7}, {true, true, true}, rng);
  std::vector<std::size_t> perm(30);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<Point3> pts2(30);
  std::vector<double> f2(60);
  for (std::size_t i = 0; i < 30; ++i) {
    pts2[i] = fx.pts[perm[i]];
    f2[2 * i] = fx.feats.at({perm[i], 0});
    f2[2 * i + 1] = fx.feats.at({perm[i], 1});
  }
  const auto g2 = knn_graph(std::span<const Point3>(pts2), 6);
  const auto d2 = kde_density(std::span<const Point3>(pts2), g2, fx.density.bandwidth);
  const auto a = gac_forward(p, fx.pts, fx.feats, fx.graph, fx.density);
  const auto b = gac_forward(p, pts2, Tensor<double>({30, 2}, f2), g2, d2);
  for (std::size_t i = 0; i < 30; ++i)
    for (std::size_t c = 0; c < 7; ++c) EXPECT_NEAR(b.at({i, c}), a.at({perm[i], c}), 1e-12);
}

TEST(GacForward, FlagParameterMismatchIsConfigError) {
  std::mt19937_64 rng(20);
  const GacFixture fx(10, 3, 2, 21);
  auto p = make_gac_params<double>({2, 3, 4, 5}, {false, true, true}, rng);
  p.flags.use_global = true;
  EXPECT_THROW(gac_forward(p, fx.pts, fx.feats, fx.graph, fx.density), ConfigError);
  auto q = make_gac_params<double>({2, 3, 4, 5}, {}, rng);
  EXPECT_THROW(gac_forward(q, fx.pts, Tensor<double>::zeros({10, 3}), fx.graph, fx.density),
               ConfigError);
}

TEST(GacParams, ParameterNamesAndFuseWidth) {
  std::mt19937_64 rng(22);
  auto with = make_gac_params<float>({2, 4, 8, 16}, {true, true, true}, rng);
  auto without = make_gac_params<float>({2, 4, 8, 16}, {false, true, true}, rng);
  EXPECT_EQ(with.fuse_mlp.in(), 3u + 2u + 4u);
  EXPECT_EQ(without.fuse_mlp.in(), 3u + 2u);
  std::vector<std::string> names;
  with.for_each_parameter("m.", [&](const std::string& n, Tensor<float>&) { names.push_back(n); });
  EXPECT_EQ(names.front(), "m.edge.layer1.weight");
  EXPECT_EQ(names.back(), "m.out_mlp.bias");
  EXPECT_EQ(names.size(), 16u);
}

}  // namespace
}  // namespace gacnn
