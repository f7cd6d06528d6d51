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

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gacnn/error.hpp"
#include "gacnn/geometry.hpp"
#include "gacnn/network.hpp"
#include "gacnn/tensor.hpp"

namespace gacnn {

struct TrainConfig {
  double base_lr = 0.01;
  std::size_t lr_halving_interval = 3000;
  std::size_t batch_size = 8;
  std::size_t points_per_block = 8192;
  double drop_fraction = 0.125;
  std::size_t epochs = 1;
  std::size_t steps_per_epoch = 0;  // 0: ceil(tiles / batch_size)
  std::uint64_t rng_seed = 0;
  std::vector<double> class_weights;  // empty: unweighted
  std::size_t checkpoint_interval = 0;

  void validate() const {
    auto fail = [](const std::string& what) { throw ConfigError("training", what); };
    if (!(base_lr > 0.0)) fail("base_lr must be positive");
    if (lr_halving_interval == 0) fail("lr_halving_interval must be positive");
    if (batch_size == 0) fail("batch_size must be positive");
    if (points_per_block == 0) fail("points_per_block must be positive");
    if (!(drop_fraction >= 0.0 && drop_fraction < 1.0)) fail("drop_fraction must be in [0, 1)");
    for (double w : class_weights)
      if (!(w > 0.0)) fail("class weights must be positive");
  }
};

/// base_lr / 2^floor(step / lr_halving_interval)
inline double lr_at(std::size_t step, const TrainConfig& config) {
  return config.base_lr / std::exp2(double(step / config.lr_halving_interval));
}

/// Mean over points of w[label] * -log softmax(logits)[label]. Logits are
/// [N, C]; `class_weights` may be empty.
template <class T>
Tensor<T> cross_entropy_loss(const Tensor<T>& logits, std::span<const int> labels,
                             std::span<const double> class_weights = {}) {
  using A = accum_t<T>;
  if (logits.rank() != 2 || logits.dim(0) != labels.size() || labels.empty()) {
    throw DimensionError("training", "logits " + to_string(logits.shape()) + " for " +
                                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t n = logits.dim(0);
  const std::size_t c = logits.dim(1);
  if (!class_weights.empty() && class_weights.size() != c) {
    throw ConfigError("training", "class_weights has " + std::to_string(class_weights.size()) +
                                      " entries for " + std::to_string(c) + " classes");
  }
  std::vector<A> prob(n * c);
  std::vector<A> weight(n, A(1));
  A total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
      throw DataError("training", "label " + std::to_string(labels[i]) + " at point " +
                                      std::to_string(i) + " outside [0, " +
                                      std::to_string(c) + ")");
    }
    const T* row = logits.raw() + i * c;
    const A mx = A(*std::max_element(row, row + c));
    A z = 0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(A(row[j]) - mx);
    for (std::size_t j = 0; j < c; ++j) prob[i * c + j] = std::exp(A(row[j]) - mx) / z;
    if (!class_weights.empty()) weight[i] = A(class_weights[labels[i]]);
    total += weight[i] * (std::log(z) + mx - A(row[labels[i]]));
  }
  std::vector<int> lab(labels.begin(), labels.end());
  return record_op<T>(Shape{}, {T(total / A(n))}, {logits},
                      [prob = std::move(prob), weight = std::move(weight),
                       lab = std::move(lab), n, c](std::span<const T>, std::span<const T> gy,
                                                   std::span<const std::span<T>> gin) {
                        const A g = A(gy[0]) / A(n);
                        for (std::size_t i = 0; i < n; ++i)
                          for (std::size_t j = 0; j < c; ++j) {
                            const A onehot = j == static_cast<std::size_t>(lab[i]) ? A(1) : A(0);
                            gin[0][i * c + j] += T(g * weight[i] * (prob[i * c + j] - onehot));
                          }
                      });
}

template <class T>
struct NamedParameter {
  std::string name;
  Tensor<T>* tensor;
};

template <class T>
std::vector<NamedParameter<T>> named_parameters(GacnnModel<T>& model) {
  std::vector<NamedParameter<T>> out;
  model.for_each_parameter(
      [&](const std::string& name, Tensor<T>& t) { out.push_back({name, &t}); });
  return out;
}

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// One bias-corrected Adam update; replaces each parameter tensor.
template <class T>
void adam_step(AdamState& state, std::span<const NamedParameter<T>> params,
               std::span<const Tensor<T>> grads, double lr) {
  if (grads.size() != params.size()) {
    throw DimensionError("training", std::to_string(grads.size()) + " gradients for " +
                                         std::to_string(params.size()) + " parameters");
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.tensor->size(), 0.0);
      state.v.emplace_back(p.tensor->size(), 0.0);
    }
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (grads[p].size() != params[p].tensor->size() || state.m[p].size() != grads[p].size()) {
      throw DimensionError("training", "gradient shape mismatch for " + params[p].name);
    }
    for (auto g : grads[p].data())
      if (!std::isfinite(double(g)))
        throw TrainingError("training", "non-finite gradient in parameter " + params[p].name);
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, double(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, double(state.step));
  for (std::size_t p = 0; p < params.size(); ++p) {
    const Tensor<T>& param = *params[p].tensor;
    std::vector<T> values(param.data().begin(), param.data().end());
    auto& m = state.m[p];
    auto& v = state.v[p];
    for (std::size_t e = 0; e < values.size(); ++e) {
      const double g = double(grads[p][e]);
      m[e] = state.beta1 * m[e] + (1.0 - state.beta1) * g;
      v[e] = state.beta2 * v[e] + (1.0 - state.beta2) * g * g;
      const double mhat = m[e] / c1;
      const double vhat = v[e] / c2;
      values[e] = T(double(values[e]) - lr * mhat / (std::sqrt(vhat) + state.epsilon));
    }
    *params[p].tensor = Tensor<T>(param.shape(), std::move(values), true);
  }
}

/// Uniformly draws points_per_block rows (with replacement only when the tile
/// is smaller), then drops floor(drop_fraction * points_per_block) of them.
inline PointCloud sample_training_block(const PointCloud& tile, const TrainConfig& config,
                                        std::mt19937_64& rng) {
  if (tile.size() == 0) throw ParameterError("training", "cannot sample an empty tile");
  const std::size_t want = config.points_per_block;
  std::vector<std::size_t> rows;
  rows.reserve(want);
  if (tile.size() >= want) {
    std::vector<std::size_t> all(tile.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    for (std::size_t i = 0; i < want; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, all.size() - 1);
      std::swap(all[i], all[pick(rng)]);
    }
    rows.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(want));
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, tile.size() - 1);
    for (std::size_t i = 0; i < want; ++i) rows.push_back(pick(rng));
  }
  const auto drop = static_cast<std::size_t>(std::floor(config.drop_fraction * double(want)));
  for (std::size_t i = 0; i < drop; ++i) {
    std::uniform_int_distribution<std::size_t> pick(0, rows.size() - 1);
    const std::size_t victim = pick(rng);
    rows[victim] = rows.back();
    rows.pop_back();
  }
  return tile.subset(rows);
}

template <class T>
struct BatchResult {
  double loss = 0.0;
  std::vector<Tensor<T>> grads;  // mean over the batch, one per parameter
};

/// Mean loss and mean parameter gradients over `blocks`, one forward and
/// backward per block.
template <class T>
BatchResult<T> batch_gradients(GacnnModel<T>& model, std::span<const PointCloud> blocks,
                               std::span<const double> class_weights = {}) {
  auto params = named_parameters(model);
  std::vector<std::vector<accum_t<T>>> acc(params.size());
  for (std::size_t p = 0; p < params.size(); ++p) acc[p].assign(params[p].tensor->size(), 0);
  double loss_total = 0.0;
  for (const auto& block : blocks) {
    if (!block.labels) throw DataError("training", "training block has no labels");
    const auto coords = center_block(block.coords);
    Tape<T> tape;
    Tensor<T> loss;
    {
      TapeScope<T> scope(tape);
      loss = cross_entropy_loss(forward_logits(model, coords, features_tensor<T>(block)),
                                std::span<const int>(*block.labels), class_weights);
    }
    const auto grads = backward(tape, loss);
    loss_total += double(loss.item());
    for (std::size_t p = 0; p < params.size(); ++p) {
      const auto g = grads.of(*params[p].tensor);
      for (std::size_t e = 0; e < g.size(); ++e) acc[p][e] += g[e];
    }
  }
  BatchResult<T> out;
  const double scale = 1.0 / double(blocks.size());
  out.loss = loss_total * scale;
  for (std::size_t p = 0; p < params.size(); ++p) {
    std::vector<T> g(acc[p].size());
    for (std::size_t e = 0; e < g.size(); ++e) g[e] = T(acc[p][e] * scale);
    out.grads.emplace_back(params[p].tensor->shape(), std::move(g));
  }
  return out;
}

struct StepRecord {
  std::size_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
};

inline std::ostream& operator<<(std::ostream& os, const StepRecord& r) {
  return os << "step=" << r.step << " lr=" << r.lr << " loss=" << r.loss;
}

struct TrainLog {
  std::vector<StepRecord> steps;
};

inline std::size_t total_steps(const TrainConfig& config, std::size_t tile_count) {
  const std::size_t per_epoch = config.steps_per_epoch
                                    ? config.steps_per_epoch
                                    : (tile_count + config.batch_size - 1) / config.batch_size;
  return config.epochs * per_epoch;
}

/// Trains `model` in place. Each step draws batch_size blocks from randomly
/// chosen tiles with an RNG seeded from (rng_seed, step), averages their
/// gradients and applies one Adam update at lr_at(step).
template <class T>
TrainLog train(GacnnModel<T>& model, std::span<const PointCloud> tiles,
               const TrainConfig& config,
               const std::function<void(const StepRecord&, GacnnModel<T>&)>& on_step = {}) {
  config.validate();
  if (tiles.empty()) throw ParameterError("training", "no training tiles");
  for (const auto& tile : tiles) {
    if (!tile.labels) throw DataError("training", "training tile has no labels");
    if (tile.feature_count != model.config.input_feature_count) {
      throw ConfigError("training", "tile has " + std::to_string(tile.feature_count) +
                                        " feature columns, model expects " +
                                        std::to_string(model.config.input_feature_count));
    }
  }
  auto params = named_parameters(model);
  AdamState adam;
  TrainLog log;
  const std::size_t steps = total_steps(config, tiles.size());
  for (std::size_t step = 0; step < steps; ++step) {
    std::seed_seq seq{static_cast<std::uint32_t>(config.rng_seed),
                      static_cast<std::uint32_t>(config.rng_seed >> 32),
                      static_cast<std::uint32_t>(step)};
    std::mt19937_64 rng(seq);
    std::uniform_int_distribution<std::size_t> pick_tile(0, tiles.size() - 1);
    std::vector<PointCloud> blocks;
    for (std::size_t b = 0; b < config.batch_size; ++b)
      blocks.push_back(sample_training_block(tiles[pick_tile(rng)], config, rng));

    const auto batch = batch_gradients(model, std::span<const PointCloud>(blocks),
                                       std::span<const double>(config.class_weights));
    if (!std::isfinite(batch.loss)) {
      throw TrainingError("training", "loss diverged at step " + std::to_string(step));
    }
    const double lr = lr_at(step, config);
    adam_step(adam, std::span<const NamedParameter<T>>(params),
              std::span<const Tensor<T>>(batch.grads), lr);
    log.steps.push_back({step, lr, batch.loss});
    if (on_step) on_step(log.steps.back(), model);
  }
  return log;
}

}  // namespace gacnn
