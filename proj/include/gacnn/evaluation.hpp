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

#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "gacnn/error.hpp"

namespace gacnn {

/// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes)
      : n_(num_classes), counts_(num_classes * num_classes, 0) {
    if (num_classes == 0) throw ParameterError("evaluation", "num_classes must be positive");
  }

  void accumulate(std::span<const int> truth, std::span<const int> pred) {
    if (truth.size() != pred.size()) {
      throw DataError("evaluation", "truth has " + std::to_string(truth.size()) +
                                        " labels, prediction " + std::to_string(pred.size()));
    }
    for (std::size_t i = 0; i < truth.size(); ++i) {
      check(truth[i], i, "truth");
      check(pred[i], i, "prediction");
    }
    for (std::size_t i = 0; i < truth.size(); ++i)
      ++counts_[static_cast<std::size_t>(truth[i]) * n_ + static_cast<std::size_t>(pred[i])];
  }

  ConfusionMatrix& merge(const ConfusionMatrix& other) {
    if (other.n_ != n_) throw ParameterError("evaluation", "class count mismatch in merge");
    for (std::size_t k = 0; k < counts_.size(); ++k) counts_[k] += other.counts_[k];
    return *this;
  }

  std::uint64_t count(std::size_t truth, std::size_t pred) const {
    return counts_.at(truth * n_ + pred);
  }
  std::size_t num_classes() const noexcept { return n_; }
  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto c : counts_) t += c;
    return t;
  }

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  void check(int label, std::size_t i, const char* which) const {
    if (label < 0 || static_cast<std::size_t>(label) >= n_) {
      throw DataError("evaluation", std::string(which) + " label " + std::to_string(label) +
                                        " at index " + std::to_string(i) + " outside [0, " +
                                        std::to_string(n_) + ")");
    }
  }

  std::size_t n_;
  std::vector<std::uint64_t> counts_;
};

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool undefined = false;  // a zero denominator was replaced by 0
};

struct Metrics {
  std::vector<ClassMetrics> per_class;
  double overall_accuracy = 0.0;
  double average_f1 = 0.0;
};

/// Harmonic mean of precision and recall; 0 when both are 0.
inline double f1_score(double precision, double recall) {
  const double s = precision + recall;
  return s > 0.0 ? 2.0 * precision * recall / s : 0.0;
}

inline Metrics compute_metrics(const ConfusionMatrix& cm) {
  const std::uint64_t total = cm.total();
  if (total == 0) throw ParameterError("evaluation", "confusion matrix is empty");
  const std::size_t n = cm.num_classes();
  Metrics m;
  std::uint64_t trace = 0;
  double f1_sum = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    std::uint64_t predicted = 0, actual = 0;
    for (std::size_t o = 0; o < n; ++o) {
      predicted += cm.count(o, c);
      actual += cm.count(c, o);
    }
    const std::uint64_t tp = cm.count(c, c);
    trace += tp;
    ClassMetrics cls;
    cls.undefined = predicted == 0 || actual == 0;
    cls.precision = predicted ? double(tp) / double(predicted) : 0.0;
    cls.recall = actual ? double(tp) / double(actual) : 0.0;
    cls.f1 = f1_score(cls.precision, cls.recall);
    if (cls.precision + cls.recall == 0.0) cls.undefined = true;
    f1_sum += cls.f1;
    m.per_class.push_back(cls);
  }
  m.overall_accuracy = double(trace) / double(total);
  m.average_f1 = f1_sum / double(n);
  return m;
}

/// Canonical ordering of the nine ISPRS 3D labeling categories.
inline const std::vector<std::string>& isprs_class_names() {
  static const std::vector<std::string> names{"power",       "low_veg", "imp_surf",
                                              "car",         "fence_hedge", "roof",
                                              "facade",      "shrub",   "tree"};
  return names;
}

/// One `class=<name> precision=<r> recall=<r> f1=<r>` line per class, with a
/// trailing `undefined=1` on classes that hit a zero denominator, then
/// `oa=<r> avg_f1=<r>`.
inline void write_metrics_report(std::ostream& os, const Metrics& metrics,
                                 std::span<const std::string> class_names = {}) {
  const auto flags = os.flags();
  const auto precision = os.precision();
  os << std::fixed << std::setprecision(6);
  for (std::size_t c = 0; c < metrics.per_class.size(); ++c) {
    const auto& cls = metrics.per_class[c];
    os << "class=" << (c < class_names.size() ? class_names[c] : std::to_string(c))
       << " precision=" << cls.precision << " recall=" << cls.recall << " f1=" << cls.f1;
    if (cls.undefined) os << " undefined=1";
    os << '\n';
  }
  os << "oa=" << metrics.overall_accuracy << " avg_f1=" << metrics.average_f1 << '\n';
  os.flags(flags);
  os.precision(precision);
}

}  // namespace gacnn
