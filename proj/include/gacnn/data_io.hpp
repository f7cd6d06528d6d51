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

// Point files hold one point per line:
//
//     x y z intensity return_number num_returns [label]
//
// Checkpoints are a little-endian binary container:
//
//     "GACNNCKP"  u32 version  u32 len + config text  u32 parameter count
//     per parameter: u32 len + name, u32 rank, u32 dims[rank], f32 values

#pragma once

#include <algorithm>
#include <array>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "gacnn/config.hpp"
#include "gacnn/error.hpp"
#include "gacnn/geometry.hpp"
#include "gacnn/network.hpp"

namespace gacnn {

struct PointRecord {
  double x = 0, y = 0, z = 0;
  double intensity = 0;
  int return_number = 1;
  int num_returns = 1;
  std::optional<int> label;
};

namespace io_detail {

inline bool parse_number(std::string_view s, double& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

inline bool parse_int(std::string_view s, int& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

inline std::vector<std::string_view> fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t b = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > b) out.push_back(line.substr(b, i - b));
  }
  return out;
}

inline bool is_blank_or_comment(std::string_view line) {
  for (char c : line) {
    if (c == '#') return true;
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

}  // namespace io_detail

/// Reads point records; throws ParseError with the line number on malformed input.
inline std::vector<PointRecord> parse_point_records(std::istream& in, bool has_labels) {
  const std::size_t expected = has_labels ? 7 : 6;
  std::vector<PointRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (io_detail::is_blank_or_comment(line)) continue;
    const auto f = io_detail::fields(line);
    const auto where = "line " + std::to_string(line_no) + ": ";
    if (f.size() != expected) {
      throw ParseError("data_io", where + "expected " + std::to_string(expected) +
                                      " fields, found " + std::to_string(f.size()));
    }
    PointRecord r;
    double* reals[4] = {&r.x, &r.y, &r.z, &r.intensity};
    for (std::size_t k = 0; k < 4; ++k) {
      if (!io_detail::parse_number(f[k], *reals[k]) || !std::isfinite(*reals[k])) {
        throw ParseError("data_io", where + "field " + std::to_string(k + 1) + " '" +
                                        std::string(f[k]) + "' is not a finite number");
      }
    }
    int* ints[2] = {&r.return_number, &r.num_returns};
    for (std::size_t k = 0; k < 2; ++k) {
      if (!io_detail::parse_int(f[4 + k], *ints[k])) {
        throw ParseError("data_io", where + "field " + std::to_string(k + 5) + " '" +
                                        std::string(f[4 + k]) + "' is not an integer");
      }
    }
    if (r.return_number < 1 || r.return_number > r.num_returns) {
      throw ParseError("data_io", where + "return number " + std::to_string(r.return_number) +
                                      " outside [1, " + std::to_string(r.num_returns) + "]");
    }
    if (has_labels) {
      int label = 0;
      if (!io_detail::parse_int(f[6], label) || label < 0) {
        throw ParseError("data_io", where + "label '" + std::string(f[6]) +
                                        "' is not a non-negative integer");
      }
      r.label = label;
    }
    out.push_back(r);
  }
  if (out.empty()) throw ParseError("data_io", "no points");
  return out;
}

/// z minus the lowest z in the point's horizontal grid cell. The grid is
/// anchored at the scene's minimum x/y.
inline std::vector<double> compute_height_above_ground(std::span<const Point3> coords,
                                                       double cell_size = 2.0) {
  if (!(cell_size > 0.0)) throw ParameterError("data_io", "cell_size must be positive");
  if (coords.empty()) return {};
  double min_x = coords[0][0], min_y = coords[0][1];
  for (const auto& p : coords) {
    min_x = std::min(min_x, p[0]);
    min_y = std::min(min_y, p[1]);
  }
  auto cell_of = [&](const Point3& p) {
    return std::pair<std::int64_t, std::int64_t>{
        static_cast<std::int64_t>(std::floor((p[0] - min_x) / cell_size)),
        static_cast<std::int64_t>(std::floor((p[1] - min_y) / cell_size))};
  };
  std::map<std::pair<std::int64_t, std::int64_t>, double> ground;
  for (const auto& p : coords) {
    auto [it, inserted] = ground.emplace(cell_of(p), p[2]);
    if (!inserted) it->second = std::min(it->second, p[2]);
  }
  std::vector<double> out(coords.size());
  for (std::size_t i = 0; i < coords.size(); ++i) out[i] = coords[i][2] - ground[cell_of(coords[i])];
  return out;
}

inline std::vector<double> compute_height_above_ground(const PointCloud& cloud,
                                                       double cell_size = 2.0) {
  return compute_height_above_ground(cloud.coords, cell_size);
}

/// Assembles the feature table in `data.feature_columns` order.
inline PointCloud build_cloud(std::span<const PointRecord> records, const DataConfig& data = {}) {
  PointCloud cloud;
  cloud.feature_count = data.feature_columns.size();
  cloud.coords.reserve(records.size());
  const bool labelled = !records.empty() && records[0].label.has_value();
  if (labelled) cloud.labels.emplace().reserve(records.size());
  for (const auto& r : records) {
    cloud.coords.push_back({r.x, r.y, r.z});
    if (labelled) cloud.labels->push_back(r.label.value_or(0));
  }
  std::vector<double> hag;
  for (auto c : data.feature_columns)
    if (c == FeatureColumn::height_above_ground)
      hag = compute_height_above_ground(cloud.coords, data.hag_cell_size);
  cloud.features.reserve(records.size() * cloud.feature_count);
  for (std::size_t i = 0; i < records.size(); ++i) {
    for (auto c : data.feature_columns) {
      switch (c) {
        case FeatureColumn::intensity: cloud.features.push_back(records[i].intensity); break;
        case FeatureColumn::height_above_ground: cloud.features.push_back(hag[i]); break;
        case FeatureColumn::return_number: cloud.features.push_back(records[i].return_number); break;
        case FeatureColumn::num_returns: cloud.features.push_back(records[i].num_returns); break;
      }
    }
  }
  return cloud;
}

inline PointCloud parse_point_file(std::istream& in, bool has_labels,
                                   const DataConfig& data = {}) {
  const auto records = parse_point_records(in, has_labels);
  return build_cloud(records, data);
}

/// Reports whether the first data line carries a label column.
inline bool detect_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("data_io", "cannot open " + path + ": " + std::strerror(errno));
  std::string line;
  while (std::getline(in, line)) {
    if (io_detail::is_blank_or_comment(line)) continue;
    return io_detail::fields(line).size() == 7;
  }
  throw ParseError("data_io", path + ": no points");
}

inline PointCloud load_point_file(const std::string& path, bool has_labels,
                                  const DataConfig& data = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("data_io", "cannot open " + path + ": " + std::strerror(errno));
  try {
    return parse_point_file(in, has_labels, data);
  } catch (const ParseError& e) {
    throw ParseError("data_io", path + ": " + std::string(e.what()).substr(9));
  }
}

/// `x y z label [correct] [p_0 .. p_{C-1}]` per point, in input order.
/// The correct flag is written when the cloud carries ground-truth labels.
inline void write_predictions(std::ostream& os, const PointCloud& cloud,
                              std::span<const int> labels,
                              std::span<const double> probabilities = {},
                              std::size_t num_classes = 0) {
  if (labels.size() != cloud.size()) {
    throw DataError("data_io", "label count " + std::to_string(labels.size()) +
                                   " != point count " + std::to_string(cloud.size()));
  }
  if (!probabilities.empty() && probabilities.size() != cloud.size() * num_classes) {
    throw DataError("data_io", "probability table does not match point and class counts");
  }
  const auto flags = os.flags();
  const auto precision = os.precision();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.coords[i];
    os << std::fixed << std::setprecision(6) << p[0] << ' ' << p[1] << ' ' << p[2] << ' '
       << labels[i];
    if (cloud.labels) os << ' ' << ((*cloud.labels)[i] == labels[i] ? 1 : 0);
    if (!probabilities.empty()) {
      os << std::setprecision(8);
      for (std::size_t c = 0; c < num_classes; ++c) os << ' ' << probabilities[i * num_classes + c];
    }
    os << '\n';
  }
  os.flags(flags);
  os.precision(precision);
}

inline void write_predictions(const std::string& path, const PointCloud& cloud,
                              std::span<const int> labels,
                              std::span<const double> probabilities = {},
                              std::size_t num_classes = 0) {
  std::ofstream out(path);
  if (!out) throw IoError("data_io", "cannot write " + path + ": " + std::strerror(errno));
  write_predictions(out, cloud, labels, probabilities, num_classes);
  out.flush();
  if (!out) throw IoError("data_io", "write failed for " + path + ": " + std::strerror(errno));
}

/// Reads the label column of a prediction file (or any point file: column 4
/// of predictions, column 7 of labelled point files).
inline std::vector<int> read_label_column(std::istream& in, std::size_t column,
                                          const std::string& source = "input") {
  std::vector<int> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (io_detail::is_blank_or_comment(line)) continue;
    const auto f = io_detail::fields(line);
    int label = 0;
    if (f.size() <= column || !io_detail::parse_int(f[column], label)) {
      throw ParseError("data_io", source + " line " + std::to_string(line_no) +
                                      ": missing integer label in column " +
                                      std::to_string(column + 1));
    }
    out.push_back(label);
  }
  if (out.empty()) throw ParseError("data_io", source + ": no points");
  return out;
}

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'G', 'A', 'C', 'N', 'N', 'C', 'K', 'P'};

namespace io_detail {

inline void put_u32(std::string& buf, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) buf.push_back(static_cast<char>((v >> (8 * b)) & 0xffu));
}

inline void put_f32(std::string& buf, float v) {
  std::uint32_t bits = 0;
  std::memcpy(&bits, &v, sizeof bits);
  put_u32(buf, bits);
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  bool has(std::size_t n) const { return bytes_.size() - pos_ >= n; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  std::uint32_t u32(const std::string& what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b)
      v |= std::uint32_t(static_cast<unsigned char>(bytes_[pos_ + b])) << (8 * b);
    pos_ += 4;
    return v;
  }

  float f32(const std::string& what) {
    const std::uint32_t bits = u32(what);
    float v = 0;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }

  std::string text(std::size_t n, const std::string& what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n, const std::string& what) const {
    if (!has(n)) throw CorruptionError("data_io", "checkpoint truncated while reading " + what);
  }

  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace io_detail

struct Checkpoint {
  RunConfig config;
  GacnnModel<float> model;
};

inline std::string encode_checkpoint(GacnnModel<float>& model, const RunConfig& config) {
  RunConfig snapshot = config;
  snapshot.model = model.config;
  const std::string text = serialize_run_config(snapshot);
  std::string buf(kCheckpointMagic, sizeof kCheckpointMagic);
  io_detail::put_u32(buf, kCheckpointVersion);
  io_detail::put_u32(buf, static_cast<std::uint32_t>(text.size()));
  buf += text;
  std::uint32_t count = 0;
  model.for_each_parameter([&](const std::string&, Tensor<float>&) { ++count; });
  io_detail::put_u32(buf, count);
  model.for_each_parameter([&](const std::string& name, Tensor<float>& t) {
    io_detail::put_u32(buf, static_cast<std::uint32_t>(name.size()));
    buf += name;
    io_detail::put_u32(buf, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) io_detail::put_u32(buf, static_cast<std::uint32_t>(d));
    for (float v : t.data()) io_detail::put_f32(buf, v);
  });
  return buf;
}

inline Checkpoint decode_checkpoint(std::string bytes) {
  if (bytes.size() < sizeof kCheckpointMagic) {
    throw CorruptionError("data_io", "checkpoint truncated while reading magic");
  }
  if (std::memcmp(bytes.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
    throw FormatError("data_io", "not a checkpoint (bad magic)");
  }
  io_detail::Reader in(bytes.substr(sizeof kCheckpointMagic));
  const std::uint32_t version = in.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError("data_io", "unsupported checkpoint version " + std::to_string(version) +
                                     " (this build reads version " +
                                     std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint32_t text_len = in.u32("config length");
  const std::string text = in.text(text_len, "config");
  Checkpoint ck;
  try {
    ck.config = parse_run_config(text);
  } catch (const ConfigError& e) {
    throw CorruptionError("data_io", std::string("embedded config invalid: ") + e.what());
  }
  ck.model = make_model<float>(ck.config.model, 0);
  std::uint32_t expected_count = 0;
  ck.model.for_each_parameter([&](const std::string&, Tensor<float>&) { ++expected_count; });
  const std::uint32_t count = in.u32("parameter count");
  if (count != expected_count) {
    throw CorruptionError("data_io", "checkpoint has " + std::to_string(count) +
                                         " parameters, config implies " +
                                         std::to_string(expected_count));
  }
  ck.model.for_each_parameter([&](const std::string& name, Tensor<float>& t) {
    const std::uint32_t len = in.u32("name of " + name);
    const std::string stored = in.text(len, "name of " + name);
    if (stored != name) {
      throw CorruptionError("data_io", "expected parameter " + name + ", found " + stored);
    }
    const std::uint32_t rank = in.u32("rank of " + name);
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(in.u32("shape of " + name));
    if (shape != t.shape()) {
      throw CorruptionError("data_io", "parameter " + name + " has shape " + to_string(shape) +
                                           ", config implies " + to_string(t.shape()));
    }
    std::vector<float> values(t.size());
    for (auto& v : values) v = in.f32("values of " + name);
    t = Tensor<float>(shape, std::move(values), true);
  });
  if (in.remaining() != 0) {
    throw CorruptionError("data_io", std::to_string(in.remaining()) +
                                         " trailing bytes after last parameter");
  }
  return ck;
}

/// Writes to `<path>.tmp` and renames over `path`.
inline void save_checkpoint(GacnnModel<float>& model, const RunConfig& config,
                            const std::string& path) {
  const std::string bytes = encode_checkpoint(model, config);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("data_io", "cannot write " + tmp + ": " + std::strerror(errno));
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("data_io", "write failed for " + tmp + ": " + std::strerror(errno));
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("data_io", "cannot rename " + tmp + " to " + path + ": " + ec.message());
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("data_io", "cannot open " + path + ": " + std::strerror(errno));
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

}  // namespace gacnn
