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

// Run configuration: `key = value` lines grouped under [model], [train] and
// [data] sections. `#` starts a comment. Unknown sections or keys are
// rejected, and every value is validated when the file is loaded.
//
//     [model]
//     num_classes = 9
//     encoder_dims = 32/32/64, 64/64/128, 128/128/256, 256/256/512
//     use_global = false
//
//     [data]
//     feature_columns = intensity, height_above_ground

#pragma once

#include <array>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "gacnn/error.hpp"
#include "gacnn/evaluation.hpp"
#include "gacnn/network.hpp"
#include "gacnn/training.hpp"

namespace gacnn {

enum class FeatureColumn { intensity, height_above_ground, return_number, num_returns };

inline std::string to_string(FeatureColumn c) {
  switch (c) {
    case FeatureColumn::intensity: return "intensity";
    case FeatureColumn::height_above_ground: return "height_above_ground";
    case FeatureColumn::return_number: return "return_number";
    case FeatureColumn::num_returns: return "num_returns";
  }
  return "?";
}

struct DataConfig {
  std::vector<FeatureColumn> feature_columns{FeatureColumn::intensity,
                                             FeatureColumn::height_above_ground};
  double hag_cell_size = 2.0;
  double tile_x = 30.0;
  double tile_y = 30.0;
  double tile_z = 40.0;
  std::size_t min_tile_points = 1024;
  std::vector<std::string> class_names = isprs_class_names();

  void validate() const {
    auto fail = [](const std::string& what) { throw ConfigError("data_io", what); };
    if (!(hag_cell_size > 0.0)) fail("hag_cell_size must be positive");
    if (!(tile_x > 0.0 && tile_y > 0.0 && tile_z > 0.0)) fail("tile sizes must be positive");
    for (std::size_t i = 1; i < feature_columns.size(); ++i) {
      if (feature_columns[i] <= feature_columns[i - 1]) {
        fail("feature columns must be distinct and ordered as intensity, height_above_ground, "
             "return_number, num_returns");
      }
    }
  }
};

struct RunConfig {
  GacnnConfig model;
  TrainConfig train;
  DataConfig data;
  std::uint64_t init_seed = 0;

  /// Cross-section checks; also fixes the model's input width to the number
  /// of feature columns.
  void finalize() {
    model.input_feature_count = data.feature_columns.size();
    model.validate();
    train.validate();
    data.validate();
    if (!train.class_weights.empty() && train.class_weights.size() != model.num_classes) {
      throw ConfigError("config", "class_weights has " +
                                      std::to_string(train.class_weights.size()) +
                                      " entries for " + std::to_string(model.num_classes) +
                                      " classes");
    }
  }
};

namespace config_detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep)) out.push_back(trim(item));
  return out;
}

[[noreturn]] inline void bad_value(const std::string& key, const std::string& value,
                                   const char* expected) {
  throw ConfigError("config", "invalid value '" + value + "' for " + key + " (expected " +
                                  expected + ")");
}

inline std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "non-negative integer");
  return out;
}

inline double to_double(const std::string& key, const std::string& v) {
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "number");
  return out;
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "true/false");
}

inline std::string fmt(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

template <class T, class F>
std::string join(const std::vector<T>& items, F&& each, const char* sep = ", ") {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += each(items[i]);
  }
  return out;
}

template <std::size_t N>
std::vector<std::array<std::size_t, N>> to_tuples(const std::string& key, const std::string& v) {
  std::vector<std::array<std::size_t, N>> out;
  for (const auto& item : split(v, ',')) {
    const auto parts = split(item, '/');
    if (parts.size() != N) bad_value(key, v, N == 3 ? "list of a/b/c" : "list of a/b");
    std::array<std::size_t, N> t{};
    for (std::size_t i = 0; i < N; ++i) t[i] = to_size(key, parts[i]);
    out.push_back(t);
  }
  return out;
}

template <std::size_t N>
std::string tuples_text(const std::vector<std::array<std::size_t, N>>& v) {
  return join(v, [](const auto& t) {
    std::string s;
    for (std::size_t i = 0; i < N; ++i) s += (i ? "/" : "") + std::to_string(t[i]);
    return s;
  });
}

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

inline const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = [] {
    std::vector<std::pair<std::string, Field>> f;
    auto size_field = [&](const std::string& key, auto member) {
      f.push_back({key, {[key, member](RunConfig& c, const std::string& v) {
                           member(c) = to_size(key, v);
                         },
                         [member](const RunConfig& c) {
                           return std::to_string(member(const_cast<RunConfig&>(c)));
                         }}});
    };
    auto double_field = [&](const std::string& key, auto member) {
      f.push_back({key, {[key, member](RunConfig& c, const std::string& v) {
                           member(c) = to_double(key, v);
                         },
                         [member](const RunConfig& c) {
                           return fmt(member(const_cast<RunConfig&>(c)));
                         }}});
    };
    auto bool_field = [&](const std::string& key, auto member) {
      f.push_back({key, {[key, member](RunConfig& c, const std::string& v) {
                           member(c) = to_bool(key, v);
                         },
                         [member](const RunConfig& c) {
                           return std::string(member(const_cast<RunConfig&>(c)) ? "true"
                                                                                 : "false");
                         }}});
    };

    size_field("model.num_classes", [](RunConfig& c) -> auto& { return c.model.num_classes; });
    f.push_back({"model.sample_sizes",
                 {[](RunConfig& c, const std::string& v) {
                    c.model.sample_sizes.clear();
                    for (const auto& s : split(v, ','))
                      c.model.sample_sizes.push_back(to_size("model.sample_sizes", s));
                  },
                  [](const RunConfig& c) {
                    return join(c.model.sample_sizes,
                                [](std::size_t s) { return std::to_string(s); });
                  }}});
    f.push_back({"model.encoder_dims",
                 {[](RunConfig& c, const std::string& v) {
                    c.model.encoder_dims = to_tuples<3>("model.encoder_dims", v);
                  },
                  [](const RunConfig& c) { return tuples_text(c.model.encoder_dims); }}});
    f.push_back({"model.decoder_dims",
                 {[](RunConfig& c, const std::string& v) {
                    c.model.decoder_dims = to_tuples<2>("model.decoder_dims", v);
                  },
                  [](const RunConfig& c) { return tuples_text(c.model.decoder_dims); }}});
    size_field("model.k_encoder", [](RunConfig& c) -> auto& { return c.model.k_encoder; });
    size_field("model.k_decoder", [](RunConfig& c) -> auto& { return c.model.k_decoder; });
    bool_field("model.use_global", [](RunConfig& c) -> auto& { return c.model.flags.use_global; });
    bool_field("model.use_edge", [](RunConfig& c) -> auto& { return c.model.flags.use_edge; });
    bool_field("model.use_density",
               [](RunConfig& c) -> auto& { return c.model.flags.use_density; });
    size_field("model.idw_k", [](RunConfig& c) -> auto& { return c.model.idw_k; });
    double_field("model.idw_power", [](RunConfig& c) -> auto& { return c.model.idw_power; });
    double_field("model.kde_bandwidth",
                 [](RunConfig& c) -> auto& { return c.model.kde_bandwidth; });
    size_field("model.fps_seed", [](RunConfig& c) -> auto& { return c.model.fps_seed; });
    f.push_back({"model.init_seed",
                 {[](RunConfig& c, const std::string& v) {
                    c.init_seed = to_size("model.init_seed", v);
                  },
                  [](const RunConfig& c) { return std::to_string(c.init_seed); }}});

    double_field("train.base_lr", [](RunConfig& c) -> auto& { return c.train.base_lr; });
    size_field("train.lr_halving_interval",
               [](RunConfig& c) -> auto& { return c.train.lr_halving_interval; });
    size_field("train.batch_size", [](RunConfig& c) -> auto& { return c.train.batch_size; });
    size_field("train.points_per_block",
               [](RunConfig& c) -> auto& { return c.train.points_per_block; });
    double_field("train.drop_fraction",
                 [](RunConfig& c) -> auto& { return c.train.drop_fraction; });
    size_field("train.epochs", [](RunConfig& c) -> auto& { return c.train.epochs; });
    size_field("train.steps_per_epoch",
               [](RunConfig& c) -> auto& { return c.train.steps_per_epoch; });
    f.push_back({"train.rng_seed",
                 {[](RunConfig& c, const std::string& v) {
                    c.train.rng_seed = to_size("train.rng_seed", v);
                  },
                  [](const RunConfig& c) { return std::to_string(c.train.rng_seed); }}});
    f.push_back({"train.class_weights",
                 {[](RunConfig& c, const std::string& v) {
                    c.train.class_weights.clear();
                    for (const auto& s : split(v, ','))
                      c.train.class_weights.push_back(to_double("train.class_weights", s));
                  },
                  [](const RunConfig& c) { return join(c.train.class_weights, fmt); }}});
    size_field("train.checkpoint_interval",
               [](RunConfig& c) -> auto& { return c.train.checkpoint_interval; });

    f.push_back({"data.feature_columns",
                 {[](RunConfig& c, const std::string& v) {
                    c.data.feature_columns.clear();
                    for (const auto& s : split(v, ',')) {
                      bool found = false;
                      for (auto col : {FeatureColumn::intensity, FeatureColumn::height_above_ground,
                                       FeatureColumn::return_number, FeatureColumn::num_returns}) {
                        if (s == to_string(col)) {
                          c.data.feature_columns.push_back(col);
                          found = true;
                        }
                      }
                      if (!found)
                        bad_value("data.feature_columns", s,
                                  "intensity, height_above_ground, return_number, num_returns");
                    }
                  },
                  [](const RunConfig& c) {
                    return join(c.data.feature_columns,
                                [](FeatureColumn col) { return to_string(col); });
                  }}});
    double_field("data.hag_cell_size", [](RunConfig& c) -> auto& { return c.data.hag_cell_size; });
    double_field("data.tile_x", [](RunConfig& c) -> auto& { return c.data.tile_x; });
    double_field("data.tile_y", [](RunConfig& c) -> auto& { return c.data.tile_y; });
    double_field("data.tile_z", [](RunConfig& c) -> auto& { return c.data.tile_z; });
    size_field("data.min_tile_points", [](RunConfig& c) -> auto& { return c.data.min_tile_points; });
    f.push_back({"data.class_names",
                 {[](RunConfig& c, const std::string& v) { c.data.class_names = split(v, ','); },
                  [](const RunConfig& c) {
                    return join(c.data.class_names, [](const std::string& s) { return s; });
                  }}});
    return f;
  }();
  return table;
}

inline const Field* find_field(const std::string& key) {
  for (const auto& [name, field] : fields())
    if (name == key) return &field;
  return nullptr;
}

}  // namespace config_detail

/// Sets one `section.key` value; throws ConfigError on unknown keys.
inline void set_config_value(RunConfig& config, const std::string& dotted_key,
                             const std::string& value) {
  const auto* field = config_detail::find_field(dotted_key);
  if (!field) throw ConfigError("config", "unknown key '" + dotted_key + "'");
  field->set(config, config_detail::trim(value));
}

/// Applies a config text on top of `base` (defaults when omitted) and validates.
inline RunConfig parse_run_config(std::istream& in, RunConfig base = {}) {
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const std::string text = config_detail::trim(line.substr(0, hash));
    if (text.empty()) continue;
    if (text.front() == '[') {
      if (text.back() != ']')
        throw ConfigError("config", "line " + std::to_string(line_no) + ": malformed section");
      section = config_detail::trim(text.substr(1, text.size() - 2));
      if (section != "model" && section != "train" && section != "data")
        throw ConfigError("config", "line " + std::to_string(line_no) + ": unknown section [" +
                                        section + "]");
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config", "line " + std::to_string(line_no) + ": expected key = value");
    if (section.empty())
      throw ConfigError("config", "line " + std::to_string(line_no) + ": key outside a section");
    const std::string key = section + "." + config_detail::trim(text.substr(0, eq));
    try {
      set_config_value(base, key, text.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("config", "line " + std::to_string(line_no) + ": " +
                                      std::string(e.what()).substr(8));
    }
  }
  base.finalize();
  return base;
}

inline RunConfig parse_run_config(const std::string& text, RunConfig base = {}) {
  std::istringstream in(text);
  return parse_run_config(in, std::move(base));
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config", "cannot open config file " + path);
  return parse_run_config(in);
}

/// Full snapshot in the same text format; parse_run_config(serialize(c)) == c.
inline std::string serialize_run_config(const RunConfig& config) {
  std::string out;
  std::string section;
  for (const auto& [key, field] : config_detail::fields()) {
    const std::string sec = key.substr(0, key.find('.'));
    if (sec != section) {
      out += (section.empty() ? "[" : "\n[") + sec + "]\n";
      section = sec;
    }
    out += key.substr(key.find('.') + 1) + " = " + field.get(config) + "\n";
  }
  return out;
}

}  // namespace gacnn
