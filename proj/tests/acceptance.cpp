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

// Release acceptance run. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>

#include "oracles.hpp"
#include "test_util.hpp"

namespace gacnn {
namespace {

using testing::random_points;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const std::string& name, double budget_s,
               const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (secs > budget_s) {
    o.pass = false;
    o.detail += "; over time budget";
  }
  if (!o.pass) ++failures;
  std::cout << (o.pass ? "PASS" : "FAIL") << " [" << id << "] " << name << ": " << o.detail
            << " (" << std::fixed << std::setprecision(2) << secs << " s / " << budget_s
            << " s)" << std::defaultfloat << std::endl;
}

std::string num(double v, int digits = 3) {
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

Outcome published_f1() {
  const double precision[9] = {0.746, 0.860, 0.919, 0.860, 0.544, 0.951, 0.648, 0.378, 0.776};
  const double recall[9] = {0.775, 0.780, 0.942, 0.709, 0.290, 0.912, 0.540, 0.611, 0.802};
  const double published[9] = {0.760, 0.818, 0.930, 0.777, 0.378, 0.931, 0.589, 0.467, 0.789};
  int matched = 0;
  std::string bad;
  for (int c = 0; c < 9; ++c) {
    const double f1 = std::round(f1_score(precision[c], recall[c]) * 1000.0) / 1000.0;
    if (std::abs(f1 - published[c]) < 1e-9) {
      ++matched;
    } else {
      bad += " " + isprs_class_names()[c];
    }
  }
  return {matched == 9, std::to_string(matched) + "/9 F1 values match to 3 d.p." + bad};
}

Outcome kde_oracle() {
  std::mt19937_64 rng(2024);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 255;
    const auto pts = random_points(n, rng, 4.0);
    const std::size_t k = 1 + rng() % std::min<std::size_t>(n - 1, 32);
    const double h = 0.05 + 3.0 * double(rng() % 10000) / 10000.0;
    const auto g = knn_graph(std::span<const Point3>(pts), k);
    const auto d = kde_density(std::span<const Point3>(pts), g, h);
    const auto ref = oracle::kde(pts, g.indices, k, h);
    for (std::size_t i = 0; i < n; ++i)
      worst = std::max(worst, std::abs(d.values[i] - ref[i]) / std::abs(ref[i]));
  }
  return {worst <= 1e-9, "100 clouds, max relative error " + num(worst)};
}

Outcome knn_fps_oracle() {
  std::mt19937_64 rng(7);
  std::size_t knn_mismatch = 0, fps_violations = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 2 + rng() % 255;
    const auto pts = random_points(n, rng, 5.0);
    const std::size_t k = 1 + rng() % std::min<std::size_t>(n - 1, 40);
    const auto g = knn_graph(std::span<const Point3>(pts), k);
    if (g.indices != oracle::brute_knn(pts, k)) ++knn_mismatch;
  }
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 1 + rng() % 64;
    const auto pts = random_points(n, rng, 5.0);
    const std::size_t m = 1 + rng() % n;
    const std::size_t seed = rng() % n;
    const auto sel = farthest_point_sample(std::span<const Point3>(pts), m, seed);
    if (sel.size() != m || sel[0] != seed) {
      ++fps_violations;
      continue;
    }
    for (std::size_t t = 1; t < m; ++t) {
      const std::span<const std::size_t> prefix(sel.data(), t);
      const double chosen = oracle::distance_to_set(pts, sel[t], prefix);
      for (std::size_t q = 0; q < n; ++q)
        if (oracle::distance_to_set(pts, q, prefix) > chosen) ++fps_violations;
    }
  }
  return {knn_mismatch == 0 && fps_violations == 0,
          "60 KNN clouds, " + std::to_string(knn_mismatch) + " mismatches; 60 FPS runs, " +
              std::to_string(fps_violations) + " farthest-first violations"};
}

Outcome gradient_suite() {
  double worst = 0;
  std::string where;
  for (int mask = 0; mask < 8; ++mask) {
    auto cfg = GacnnConfig::micro(3, 2);
    cfg.flags = {bool(mask & 1), bool(mask & 2), bool(mask & 4)};
    auto model = make_model<long double>(cfg, 100 + mask);
    std::mt19937_64 rng(200 + mask);
    auto params = model.parameters();
    testing::offset_biases(params, rng);
    const auto pts = random_points(32, rng);
    const auto feats = testing::random_tensor<long double>({32, 2}, rng, 0, 1, false);
    testing::Projection<long double> proj(300 + mask);
    const auto r = grad_check_detailed<long double>(
        [&] { return proj(forward_logits(model, pts, feats)); }, testing::as_span(params),
        1e-6);
    if (r.max_relative_error > worst) {
      worst = r.max_relative_error;
      where = " (flags g/e/d=" + std::to_string(mask & 1) + std::to_string((mask >> 1) & 1) +
              std::to_string((mask >> 2) & 1) + ")";
    }
  }
  return {worst <= 1e-3, "8 flag combinations, max relative error " + num(worst) + where};
}

Outcome normalization_invariants() {
  std::mt19937_64 rng(11);
  double worst_sum = 0;
  std::size_t density_violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng() % 39;
    const std::size_t k = 1 + rng() % (n - 1);
    const auto pts = random_points(n, rng, 1.0 + double(rng() % 50));
    const auto g = knn_graph(std::span<const Point3>(pts), k);
    switch (trial % 3) {
      case 0: {
        const std::size_t c2 = 1 + rng() % 8;
        const EdgeAttentionParams<float> p{make_dense<float>(3, 8, rng),
                                           make_dense<float>(8, c2, rng)};
        const auto a = edge_attention(p, edge_features<float>(pts, g));
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t c = 0; c < c2; ++c) {
            double s = 0;
            for (std::size_t q = 0; q < k; ++q) s += a[(i * k + q) * c2 + c];
            worst_sum = std::max(worst_sum, std::abs(s - 1.0));
          }
        break;
      }
      case 1: {
        const auto a = global_normalized_distance<float>(pts);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t ax = 0; ax < 3; ++ax) {
            double s = 0;
            for (std::size_t j = 0; j < n; ++j) s += a[(i * n + j) * 3 + ax];
            worst_sum = std::max(worst_sum, std::abs(s - 1.0));
          }
        break;
      }
      default: {
        const double h = 0.05 + double(rng() % 1000) / 500.0;
        const auto d = kde_density(std::span<const Point3>(pts), g, h);
        const auto norm = normalized_inverse_density(d, g);
        for (std::size_t i = 0; i < n; ++i) {
          double mx = 0;
          for (std::size_t q = 0; q < k; ++q) {
            const double v = norm[i * k + q];
            if (!(v > 0.0 && v <= 1.0)) ++density_violations;
            mx = std::max(mx, v);
          }
          if (mx != 1.0) ++density_violations;
        }
      }
    }
  }
  return {worst_sum <= 1e-6 && density_violations == 0,
          "1000 instances, max |sum - 1| = " + num(worst_sum) + ", " +
              std::to_string(density_violations) + " density range/max violations"};
}

Outcome shape_contract() {
  const auto model = make_model<float>(GacnnConfig{}, 1);
  std::mt19937_64 rng(5);
  const auto coords = random_points(8192, rng, 15.0);
  const auto feats = testing::random_tensor<float>({8192, 2}, rng, 0, 1, false);
  const auto levels = encode(model, coords, feats);
  const Shape expect[4] = {{1024, 64}, {512, 128}, {64, 256}, {16, 512}};
  std::string got;
  bool ok = levels.size() == 5;
  for (std::size_t t = 1; t < levels.size(); ++t) {
    got += to_string(levels[t].features.shape()) + " ";
    if (t <= 4 && levels[t].features.shape() != expect[t - 1]) ok = false;
  }
  const auto out = decode(model, levels);
  got += "-> " + to_string(out.shape());
  ok = ok && out.shape() == (Shape{8192, 128});
  return {ok, got};
}

Outcome lr_schedule() {
  const TrainConfig c;
  const double a = lr_at(0, c), b = lr_at(3000, c), d = lr_at(6000, c);
  const bool ok = a == 0.01 && b == 0.005 && d == 0.0025;
  return {ok, "lr(0)=" + num(a) + " lr(3000)=" + num(b) + " lr(6000)=" + num(d)};
}

double training_oa(const GacnnModel<float>& model, const PointCloud& scene, std::size_t block) {
  std::vector<std::size_t> perm(scene.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(99);
  std::shuffle(perm.begin(), perm.end(), rng);
  const std::size_t chunks = (scene.size() + block - 1) / block;
  ConfusionMatrix cm(3);
  for (std::size_t c = 0; c < chunks; ++c) {
    std::vector<std::size_t> rows;
    for (std::size_t i = c; i < perm.size(); i += chunks) rows.push_back(perm[i]);
    const auto part = scene.subset(rows);
    cm.accumulate(*part.labels, predict(model, part).labels);
  }
  return compute_metrics(cm).overall_accuracy;
}

Outcome trainability() {
  const auto scene = synthetic_scene();  // 4096 points, 3 classes
  const std::vector<PointCloud> tiles{scene};
  TrainConfig tc;
  tc.points_per_block = 512;
  tc.batch_size = 4;
  tc.steps_per_epoch = 500;
  tc.rng_seed = 1;
  const std::size_t eval_block = tc.points_per_block * 7 / 8;
  double tail[2] = {0, 0};
  double best_oa = 0, final_oa = 0;
  std::size_t reached_at = 0;
  for (int variant = 0; variant < 2; ++variant) {
    auto cfg = GacnnConfig::micro(3, 2);
    if (variant == 1) cfg.flags = {false, false, false};
    auto model = make_model<float>(cfg, 1);
    const auto log = train<float>(
        model, std::span<const PointCloud>(tiles), tc,
        [&](const StepRecord& r, GacnnModel<float>& m) {
          if (variant != 0 || (r.step + 1) % 100 != 0) return;
          const double oa = training_oa(m, scene, eval_block);
          if (oa >= 0.95 && reached_at == 0) reached_at = r.step + 1;
          best_oa = std::max(best_oa, oa);
          final_oa = oa;
        });
    for (std::size_t s = 450; s < 500; ++s) tail[variant] += log.steps[s].loss / 50.0;
  }
  const bool ok = reached_at > 0 && tail[0] <= tail[1];
  return {ok, "full-flag training OA " + num(final_oa) + " after 500 steps (>= 0.95 by step " +
                  std::to_string(reached_at) + "); final loss full " + num(tail[0]) +
                  " vs all-off " + num(tail[1])};
}

Outcome determinism() {
  SyntheticSceneOptions opt;
  opt.points = 1500;
  opt.seed = 21;
  const std::vector<PointCloud> tiles{synthetic_scene(opt)};
  RunConfig cfg;
  cfg.model = GacnnConfig::micro(3, 2);
  cfg.train.points_per_block = 256;
  cfg.train.batch_size = 2;
  cfg.train.steps_per_epoch = 25;
  cfg.train.rng_seed = 5;
  cfg.init_seed = 3;
  cfg.finalize();
  std::string bytes[2];
  for (auto& b : bytes) {
    auto model = make_model<float>(cfg.model, cfg.init_seed);
    train<float>(model, std::span<const PointCloud>(tiles), cfg.train);
    b = encode_checkpoint(model, cfg);
  }
  const bool identical = bytes[0] == bytes[1];

  const auto dir = std::filesystem::temp_directory_path() / "gacnn_acceptance";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "model.ckpt").string();
  auto original = decode_checkpoint(bytes[0]);
  save_checkpoint(original.model, original.config, path);
  auto loaded = load_checkpoint(path);
  std::filesystem::remove_all(dir);
  auto a = original.model.parameters();
  auto b = loaded.model.parameters();
  bool bitwise = a.size() == b.size();
  for (std::size_t p = 0; bitwise && p < a.size(); ++p)
    bitwise = a[p]->shape() == b[p]->shape() &&
              std::memcmp(a[p]->raw(), b[p]->raw(), a[p]->size() * sizeof(float)) == 0;
  bitwise = bitwise && encode_checkpoint(loaded.model, loaded.config) == bytes[0];
  return {identical && bitwise,
          std::string("two runs ") + (identical ? "byte-identical" : "DIFFER") + " (" +
              std::to_string(bytes[0].size()) + " bytes); save/load round trip " +
              (bitwise ? "bitwise exact" : "NOT exact")};
}

Outcome augmentation() {
  SyntheticSceneOptions opt;
  opt.points = 12000;
  const auto tile = synthetic_scene(opt);
  const TrainConfig defaults;
  std::mt19937_64 rng(1);
  const auto n = sample_training_block(tile, defaults, rng).size();
  return {n == 7168, std::to_string(n) + " points per block"};
}

}  // namespace
}  // namespace gacnn

int main() {
  using namespace gacnn;
  criterion(1, "metric reproduction", 1, published_f1);
  criterion(2, "KDE oracle", 5, kde_oracle);
  criterion(3, "KNN/FPS oracles", 10, knn_fps_oracle);
  criterion(4, "gradient suite", 120, gradient_suite);
  criterion(5, "normalization invariants", 10, normalization_invariants);
  criterion(6, "shape contract", 30, shape_contract);
  criterion(7, "learning-rate schedule", 1, lr_schedule);
  criterion(8, "trainability", 900, trainability);
  criterion(9, "determinism and persistence", 300, determinism);
  criterion(10, "augmentation contract", 1, augmentation);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
