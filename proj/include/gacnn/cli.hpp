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

// Command-line front end. Requires CLI11 on the include path.

#pragma once

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "gacnn/config.hpp"
#include "gacnn/data_io.hpp"
#include "gacnn/evaluation.hpp"
#include "gacnn/geometry.hpp"
#include "gacnn/network.hpp"
#include "gacnn/training.hpp"

namespace gacnn {

namespace cli_detail {

inline std::vector<std::string> point_files(const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError("cli", "not a directory: " + dir);
  std::vector<std::string> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto ext = entry.path().extension().string();
    if (entry.is_regular_file() && (ext == ".txt" || ext == ".pts" || ext == ".xyz"))
      out.push_back(entry.path().string());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw DataError("cli", "no .txt/.pts/.xyz point files in " + dir);
  return out;
}

inline std::vector<PointCloud> training_tiles(const std::vector<std::string>& files,
                                              const DataConfig& data, std::ostream& log) {
  std::vector<PointCloud> tiles;
  for (const auto& file : files) {
    const auto cloud = load_point_file(file, true, data);
    auto scene_tiles =
        tile_scene(cloud, data.tile_x, data.tile_y, data.tile_z, data.min_tile_points);
    log << "file=" << file << " points=" << cloud.size() << " tiles=" << scene_tiles.size()
        << '\n';
    for (auto& t : scene_tiles) tiles.push_back(std::move(t.cloud));
  }
  return tiles;
}

struct TilePredictions {
  std::vector<int> labels;
  std::vector<double> probabilities;
};

/// Tile-wise batch-of-one prediction reassembled in input order.
inline TilePredictions predict_scene(const GacnnModel<float>& model, const PointCloud& cloud,
                                     const DataConfig& data) {
  const std::size_t c = model.config.num_classes;
  TilePredictions out;
  out.labels.assign(cloud.size(), -1);
  out.probabilities.assign(cloud.size() * c, 0.0);
  const auto tiles = tile_scene(cloud, data.tile_x, data.tile_y, data.tile_z, data.min_tile_points);
  for (const auto& tile : tiles) {
    const auto pred = predict(model, tile.cloud);
    for (std::size_t i = 0; i < tile.source_indices.size(); ++i) {
      const std::size_t row = tile.source_indices[i];
      out.labels[row] = pred.labels[i];
      std::copy_n(pred.probabilities.begin() + static_cast<std::ptrdiff_t>(i * c), c,
                  out.probabilities.begin() + static_cast<std::ptrdiff_t>(row * c));
    }
  }
  return out;
}

inline void write_rows(const std::string& path, const std::vector<std::string>& header,
                       const std::function<void(std::ostream&)>& body) {
  std::ofstream out(path);
  if (!out) throw IoError("cli", "cannot write " + path);
  out << "#";
  for (const auto& h : header) out << ' ' << h;
  out << '\n' << std::setprecision(8);
  body(out);
  if (!out) throw IoError("cli", "write failed for " + path);
}

}  // namespace cli_detail

struct TrainOptions {
  std::string data_dir;
  std::string config_path;
  std::string out_path;
  std::vector<std::string> overrides;
  bool no_global = false;
  bool no_edge = false;
  bool no_density = false;
};

inline RunConfig resolve_train_config(const TrainOptions& opt) {
  RunConfig config;
  if (!opt.config_path.empty()) config = load_run_config(opt.config_path);
  for (const auto& kv : opt.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("cli", "--set expects key=value, got " + kv);
    set_config_value(config, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (opt.no_global) config.model.flags.use_global = false;
  if (opt.no_edge) config.model.flags.use_edge = false;
  if (opt.no_density) config.model.flags.use_density = false;
  config.finalize();
  return config;
}

inline void run_train(const TrainOptions& opt, std::ostream& out) {
  const RunConfig config = resolve_train_config(opt);
  const auto tiles = cli_detail::training_tiles(cli_detail::point_files(opt.data_dir),
                                                config.data, out);
  for (const auto& tile : tiles) {
    for (int label : *tile.labels) {
      if (static_cast<std::size_t>(label) >= config.model.num_classes) {
        throw DataError("cli", "label " + std::to_string(label) + " outside [0, " +
                                   std::to_string(config.model.num_classes) + ")");
      }
    }
  }
  auto model = make_model<float>(config.model, config.init_seed);
  out << "parameters=" << model.parameter_count() << " tiles=" << tiles.size()
      << " steps=" << total_steps(config.train, tiles.size()) << '\n';
  train<float>(model, std::span<const PointCloud>(tiles), config.train,
               [&](const StepRecord& r, GacnnModel<float>& m) {
                 out << r << '\n';
                 const std::size_t every = config.train.checkpoint_interval;
                 if (every && (r.step + 1) % every == 0) {
                   save_checkpoint(m, config, opt.out_path);
                   out << "checkpoint=" << opt.out_path << " step=" << r.step << '\n';
                 }
               });
  save_checkpoint(model, config, opt.out_path);
  out << "checkpoint=" << opt.out_path << '\n';
}

struct PredictOptions {
  std::string checkpoint;
  std::string input;
  std::string out_path;
  bool probabilities = false;
};

inline void run_predict(const PredictOptions& opt, std::ostream& out) {
  const auto ck = load_checkpoint(opt.checkpoint);
  const bool labelled = detect_labels(opt.input);
  const auto cloud = load_point_file(opt.input, labelled, ck.config.data);
  const auto pred = cli_detail::predict_scene(ck.model, cloud, ck.config.data);
  write_predictions(opt.out_path, cloud, pred.labels,
                    opt.probabilities ? std::span<const double>(pred.probabilities)
                                      : std::span<const double>(),
                    ck.model.config.num_classes);
  out << "points=" << cloud.size() << " predictions=" << opt.out_path << '\n';
}

struct EvaluateOptions {
  std::string predictions;
  std::string truth;
  std::size_t num_classes = 0;           // 0: max label + 1
  std::vector<std::string> class_names;  // empty: ISPRS names for 9 classes
  int truth_column = 0;                  // 1-based; 0: 7 for 7-field lines, else 4
};

inline void run_evaluate(const EvaluateOptions& opt, std::ostream& out) {
  auto open = [](const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cli", "cannot open " + path);
    return in;
  };
  std::size_t truth_col = opt.truth_column > 0 ? std::size_t(opt.truth_column - 1) : 3;
  if (opt.truth_column <= 0) {
    auto in = open(opt.truth);
    std::string line;
    while (std::getline(in, line)) {
      if (io_detail::is_blank_or_comment(line)) continue;
      if (io_detail::fields(line).size() == 7) truth_col = 6;
      break;
    }
  }
  auto pred_in = open(opt.predictions);
  auto truth_in = open(opt.truth);
  const auto pred = read_label_column(pred_in, 3, opt.predictions);
  const auto truth = read_label_column(truth_in, truth_col, opt.truth);
  if (pred.size() != truth.size()) {
    throw DataError("cli", opt.predictions + " has " + std::to_string(pred.size()) +
                               " points, " + opt.truth + " has " +
                               std::to_string(truth.size()));
  }
  std::size_t classes = opt.num_classes;
  if (classes == 0) {
    int top = 0;
    for (int v : pred) top = std::max(top, v);
    for (int v : truth) top = std::max(top, v);
    classes = std::size_t(top) + 1;
  }
  ConfusionMatrix cm(classes);
  cm.accumulate(truth, pred);
  std::vector<std::string> names = opt.class_names;
  if (names.empty() && classes == isprs_class_names().size()) names = isprs_class_names();
  if (!names.empty() && names.size() != classes) {
    throw ConfigError("cli", std::to_string(names.size()) + " class names for " +
                                 std::to_string(classes) + " classes");
  }
  write_metrics_report(out, compute_metrics(cm), names);
}

struct InspectOptions {
  std::string checkpoint;
  std::string input;
  std::size_t level = 1;
  std::string out_dir;
  bool full_global = false;
};

/// Runs the encoder once over the whole input and dumps the attention maps
/// of encoder level `level` (1-based) as text tables, one row per point.
inline void run_inspect(const InspectOptions& opt, std::ostream& out) {
  const auto ck = load_checkpoint(opt.checkpoint);
  const auto& cfg = ck.model.config;
  if (opt.level < 1 || opt.level > cfg.levels()) {
    throw ParameterError("cli", "--level must be in [1, " + std::to_string(cfg.levels()) + "]");
  }
  const bool labelled = detect_labels(opt.input);
  PointCloud cloud = load_point_file(opt.input, labelled, ck.config.data);
  if (cloud.size() < cfg.sample_sizes[0]) {
    std::vector<std::size_t> rows(cloud.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    std::mt19937_64 rng(0x5eed + cloud.size());
    std::uniform_int_distribution<std::size_t> pick(0, cloud.size() - 1);
    while (rows.size() < cfg.sample_sizes[0]) rows.push_back(pick(rng));
    cloud = cloud.subset(rows);
  }
  const auto centered = center_block(cloud.coords);
  const Point3 origin{cloud.coords[0][0] - centered[0][0], cloud.coords[0][1] - centered[0][1],
                      cloud.coords[0][2] - centered[0][2]};
  std::vector<GacTrace<float>> traces;
  const auto levels = encode(ck.model, centered, features_tensor<float>(cloud), &traces);
  const auto& level = levels[opt.level];
  const auto& trace = traces[opt.level - 1];
  const std::size_t n = level.coords.size();

  std::filesystem::create_directories(opt.out_dir);
  const auto dir = std::filesystem::path(opt.out_dir);
  auto row_prefix = [&](std::ostream& os, std::size_t i) {
    const auto& p = level.coords[i];
    os << i << ' ' << std::fixed << std::setprecision(6) << p[0] + origin[0] << ' '
       << p[1] + origin[1] << ' ' << p[2] + origin[2] << std::defaultfloat
       << std::setprecision(8);
  };
  auto dump = [&](const std::string& name, const Tensor<float>& t, const std::string& layout) {
    if (!t.defined()) return;
    const std::size_t per = t.size() / n;
    cli_detail::write_rows((dir / name).string(), {"index", "x", "y", "z", layout},
                           [&](std::ostream& os) {
                             for (std::size_t i = 0; i < n; ++i) {
                               row_prefix(os, i);
                               for (std::size_t e = 0; e < per; ++e) os << ' ' << t[i * per + e];
                               os << '\n';
                             }
                           });
    out << "wrote=" << (dir / name).string() << " rows=" << n << " values_per_row=" << per
        << '\n';
  };
  dump("edge_attention.txt", trace.edge_attention, "K*C2 (neighbor-major)");
  dump("density_attention.txt", trace.density_attention, "K");
  dump("output_features.txt", trace.output, "C3");
  if (trace.global_attention.defined()) {
    if (opt.full_global) {
      dump("global_attention.txt", trace.global_attention, "N*C1 (point-major)");
    } else {
      const std::size_t c1 = trace.global_attention.dim(2);
      std::vector<float> mean(n * n, 0.0f);
      for (std::size_t q = 0; q < n * n; ++q) {
        double s = 0.0;
        for (std::size_t c = 0; c < c1; ++c) s += trace.global_attention[q * c1 + c];
        mean[q] = float(s / double(c1));
      }
      dump("global_attention.txt", Tensor<float>({n, n}, std::move(mean)),
           "N (mean over C1 channels)");
    }
  }
}

inline constexpr const char* kUsage =
    "usage: gacnn <command> [options]\n"
    "commands:\n"
    "  train <data-dir> [--config FILE] --out CKPT [--no-global] [--no-edge-attn]\n"
    "        [--no-density-attn] [--set section.key=value ...]\n"
    "  predict <ckpt> <file> --out PRED [--probabilities]\n"
    "  evaluate <pred> <truth> [--num-classes N] [--class-names a,b,...] [--truth-column N]\n"
    "  inspect-attention <ckpt> <file> --level N --out DIR [--full-global]\n";

/// Entry point; returns the process exit status.
inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  CLI::App app{"Graph attention convolution network for airborne LiDAR point clouds", "gacnn"};
  app.require_subcommand(1);

  TrainOptions train_opt;
  auto* train_cmd = app.add_subcommand("train", "train a model from labelled point files");
  train_cmd->add_option("data-dir", train_opt.data_dir, "directory of labelled point files")
      ->required();
  train_cmd->add_option("--config", train_opt.config_path, "run configuration file");
  train_cmd->add_option("--out", train_opt.out_path, "checkpoint path")->required();
  train_cmd->add_option("--set", train_opt.overrides, "override section.key=value");
  train_cmd->add_flag("--no-global", train_opt.no_global, "disable global attention");
  train_cmd->add_flag("--no-edge-attn", train_opt.no_edge, "disable edge attention");
  train_cmd->add_flag("--no-density-attn", train_opt.no_density, "disable density attention");

  PredictOptions predict_opt;
  auto* predict_cmd = app.add_subcommand("predict", "classify a point file");
  predict_cmd->add_option("checkpoint", predict_opt.checkpoint)->required();
  predict_cmd->add_option("file", predict_opt.input)->required();
  predict_cmd->add_option("--out", predict_opt.out_path, "prediction file")->required();
  predict_cmd->add_flag("--probabilities", predict_opt.probabilities,
                        "append per-class probabilities");

  EvaluateOptions eval_opt;
  std::string class_names;
  auto* eval_cmd = app.add_subcommand("evaluate", "score predictions against ground truth");
  eval_cmd->add_option("predictions", eval_opt.predictions)->required();
  eval_cmd->add_option("truth", eval_opt.truth)->required();
  eval_cmd->add_option("--num-classes", eval_opt.num_classes);
  eval_cmd->add_option("--class-names", class_names, "comma-separated");
  eval_cmd->add_option("--truth-column", eval_opt.truth_column, "1-based label column");

  InspectOptions inspect_opt;
  auto* inspect_cmd = app.add_subcommand("inspect-attention", "dump attention maps");
  inspect_cmd->add_option("checkpoint", inspect_opt.checkpoint)->required();
  inspect_cmd->add_option("file", inspect_opt.input)->required();
  inspect_cmd->add_option("--level", inspect_opt.level, "encoder level, 1-based")->required();
  inspect_cmd->add_option("--out", inspect_opt.out_dir, "output directory")->required();
  inspect_cmd->add_flag("--full-global", inspect_opt.full_global,
                        "write every global attention channel");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: cli: " << e.what() << '\n' << kUsage;
    return 2;
  }

  try {
    if (*train_cmd) run_train(train_opt, out);
    if (*predict_cmd) run_predict(predict_opt, out);
    if (*eval_cmd) {
      if (!class_names.empty()) eval_opt.class_names = config_detail::split(class_names, ',');
      run_evaluate(eval_opt, out);
    }
    if (*inspect_cmd) run_inspect(inspect_opt, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace gacnn
