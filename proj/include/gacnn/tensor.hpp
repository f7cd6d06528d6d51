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

// Dense row-major tensors with tape-based reverse-mode differentiation.
//
// Tensors are immutable handles to shared storage. Every op checks whether
// a Tape is active on the calling thread (see TapeScope) and whether any of
// its inputs requires a gradient; only then is a record pushed. With no
// active tape the same ops run as plain inference.
//
//     Tape<float> tape;
//     Tensor<float> loss;
//     {
//       TapeScope<float> scope(tape);
//       loss = sum(affine(x, w, b, Activation::relu));
//     }
//     auto grads = backward(tape, loss);
//     Tensor<float> dw = grads.of(w);

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gacnn/error.hpp"

namespace gacnn {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

/// Accumulator type for reductions: float data sums in double.
template <class T>
using accum_t = std::conditional_t<(sizeof(T) < sizeof(double)), double, T>;

template <class T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  bool requires_grad = false;
};

template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false) {
    if (numel(shape) != data.size()) {
      throw DimensionError("tensor_engine",
                           "shape " + to_string(shape) + " holds " +
                               std::to_string(numel(shape)) + " values, got " +
                               std::to_string(data.size()));
    }
    node_ = std::make_shared<const TensorNode<T>>(
        TensorNode<T>{std::move(shape), std::move(data), requires_grad});
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const auto n = numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
  }

  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    const auto n = numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
  }

  static Tensor scalar(T value, bool requires_grad = false) {
    return Tensor(Shape{}, std::vector<T>{value}, requires_grad);
  }

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->data.size(); }
  std::span<const T> data() const { return node_->data; }
  const T* raw() const { return node_->data.data(); }
  T operator[](std::size_t flat) const { return node_->data[flat]; }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  T item() const {
    if (size() != 1) {
      throw ContractError("tensor_engine",
                          "item() on non-scalar shape " + to_string(shape()));
    }
    return node_->data[0];
  }

  /// Multi-index element access (tests and inspection).
  T at(std::initializer_list<std::size_t> index) const {
    if (index.size() != rank()) {
      throw DimensionError("tensor_engine", "index rank mismatch for shape " +
                                                to_string(shape()));
    }
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (auto i : index) {
      if (i >= dim(axis)) {
        throw ContractError("tensor_engine", "index out of range for shape " +
                                                 to_string(shape()));
      }
      flat = flat * dim(axis) + i;
      ++axis;
    }
    return node_->data[flat];
  }

  /// Copy of the values with no gradient tracking.
  Tensor detached() const { return Tensor(shape(), node_->data, false); }

  /// Copy of the values flagged as a trainable leaf.
  Tensor as_parameter() const { return Tensor(shape(), node_->data, true); }

  const TensorNode<T>* id() const noexcept { return node_.get(); }
  const std::shared_ptr<const TensorNode<T>>& node() const noexcept { return node_; }

 private:
  std::shared_ptr<const TensorNode<T>> node_;
};

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

template <class T>
class Tape {
 public:
  using NodePtr = std::shared_ptr<const TensorNode<T>>;
  /// (output value, output gradient, input gradients). Input gradient spans
  /// are empty for inputs that do not require a gradient.
  using BackwardFn = std::function<void(std::span<const T>, std::span<const T>,
                                        std::span<const std::span<T>>)>;

  struct Record {
    std::vector<NodePtr> inputs;
    NodePtr output;
    BackwardFn backward;
  };

  void push(Record record) { records_.push_back(std::move(record)); }
  const std::vector<Record>& records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }
  void clear() noexcept { records_.clear(); }

 private:
  std::vector<Record> records_;
};

namespace detail {
template <class T>
Tape<T>*& active_tape() {
  thread_local Tape<T>* tape = nullptr;
  return tape;
}
}  // namespace detail

/// Makes `tape` the recording target on this thread for the scope's lifetime.
template <class T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& tape) : previous_(detail::active_tape<T>()) {
    detail::active_tape<T>() = &tape;
  }
  ~TapeScope() { detail::active_tape<T>() = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* previous_;
};

/// Creates an op result, recording it on the active tape when any input
/// requires a gradient. This is the extension point for custom ops.
template <class T>
Tensor<T> record_op(Shape shape, std::vector<T> data,
                    std::vector<Tensor<T>> inputs,
                    typename Tape<T>::BackwardFn backward) {
  Tape<T>* tape = detail::active_tape<T>();
  const bool track =
      tape != nullptr &&
      std::any_of(inputs.begin(), inputs.end(),
                  [](const Tensor<T>& t) { return t.requires_grad(); });
  Tensor<T> out(std::move(shape), std::move(data), track);
  if (track) {
    typename Tape<T>::Record rec;
    rec.inputs.reserve(inputs.size());
    for (auto& in : inputs) rec.inputs.push_back(in.node());
    rec.output = out.node();
    rec.backward = std::move(backward);
    tape->push(std::move(rec));
  }
  return out;
}

template <class T>
class Gradients {
 public:
  using Map = std::unordered_map<const TensorNode<T>*, std::vector<T>>;

  Gradients() = default;
  explicit Gradients(Map grads) : grads_(std::move(grads)) {}

  /// d(loss)/d(param); zeros when `param` was not reached from the loss.
  Tensor<T> of(const Tensor<T>& param) const {
    auto it = grads_.find(param.id());
    if (it == grads_.end()) return Tensor<T>::zeros(param.shape());
    return Tensor<T>(param.shape(), it->second);
  }

  bool reached(const Tensor<T>& param) const {
    return grads_.count(param.id()) != 0;
  }

 private:
  Map grads_;
};

/// Replays `tape` in reverse from the scalar `loss`.
template <class T>
Gradients<T> backward(const Tape<T>& tape, const Tensor<T>& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("tensor_engine",
                        "backward needs a scalar loss, got shape " +
                            (loss.defined() ? to_string(loss.shape())
                                            : std::string("<undefined>")));
  }
  typename Gradients<T>::Map grads;
  if (!loss.requires_grad()) return Gradients<T>(std::move(grads));
  grads[loss.id()] = std::vector<T>{T(1)};

  const auto& records = tape.records();
  std::vector<std::span<T>> gin;
  for (auto rec = records.rbegin(); rec != records.rend(); ++rec) {
    auto out_it = grads.find(rec->output.get());
    if (out_it == grads.end()) continue;
    // unordered_map keeps element references stable across insertion.
    std::vector<T> gout = std::move(out_it->second);
    grads.erase(out_it);
    gin.clear();
    for (const auto& in : rec->inputs) {
      if (!in->requires_grad) {
        gin.emplace_back();
        continue;
      }
      auto& g = grads[in.get()];
      if (g.size() != in->data.size()) g.assign(in->data.size(), T(0));
      gin.emplace_back(g);
    }
    rec->backward(rec->output->data, gout, gin);
  }
  return Gradients<T>(std::move(grads));
}

// ---------------------------------------------------------------------------
// Ops
// ---------------------------------------------------------------------------

enum class Activation { none, relu };

namespace detail {

inline void require(bool cond, const std::string& what) {
  if (!cond) throw DimensionError("tensor_engine", what);
}

/// Views `shape` as [outer, shape[axis], inner].
inline std::array<std::size_t, 3> split_axis(const Shape& shape, std::size_t axis) {
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  return {outer, shape[axis], inner};
}

}  // namespace detail

/// out[..., j] = act(sum_i in[..., i] * weight[i, j] + bias[j])
template <class T>
Tensor<T> affine(const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias, Activation activation) {
  using A = accum_t<T>;
  detail::require(weight.rank() == 2 && bias.rank() == 1 &&
                      bias.dim(0) == weight.dim(1) && input.rank() >= 1 &&
                      input.shape().back() == weight.dim(0),
                  "affine: input " + to_string(input.shape()) + " vs weight " +
                      to_string(weight.shape()) + " / bias " +
                      to_string(bias.shape()));
  const std::size_t cin = weight.dim(0);
  const std::size_t cout = weight.dim(1);
  const std::size_t rows = cin == 0 ? input.size() : input.size() / cin;
  Shape out_shape = input.shape();
  out_shape.back() = cout;

  std::vector<T> out(rows * cout);
  std::vector<A> acc(cout);
  const T* x = input.raw();
  const T* w = weight.raw();
  const T* b = bias.raw();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < cout; ++j) acc[j] = A(b[j]);
    const T* xr = x + r * cin;
    for (std::size_t i = 0; i < cin; ++i) {
      const A xi = A(xr[i]);
      if (xi == A(0)) continue;
      const T* wi = w + i * cout;
      for (std::size_t j = 0; j < cout; ++j) acc[j] += xi * A(wi[j]);
    }
    T* o = out.data() + r * cout;
    if (activation == Activation::relu) {
      for (std::size_t j = 0; j < cout; ++j) o[j] = acc[j] > A(0) ? T(acc[j]) : T(0);
    } else {
      for (std::size_t j = 0; j < cout; ++j) o[j] = T(acc[j]);
    }
  }

  return record_op<T>(
      std::move(out_shape), std::move(out), {input, weight, bias},
      [input, weight, rows, cin, cout, activation](
          std::span<const T> y, std::span<const T> gy,
          std::span<const std::span<T>> gin) {
        std::vector<T> g(gy.begin(), gy.end());
        if (activation == Activation::relu) {
          for (std::size_t k = 0; k < g.size(); ++k)
            if (!(y[k] > T(0))) g[k] = T(0);
        }
        const T* x = input.raw();
        const T* w = weight.raw();
        if (!gin[0].empty()) {
          for (std::size_t r = 0; r < rows; ++r) {
            const T* gr = g.data() + r * cout;
            T* dx = gin[0].data() + r * cin;
            for (std::size_t i = 0; i < cin; ++i) {
              const T* wi = w + i * cout;
              A s = 0;
              for (std::size_t j = 0; j < cout; ++j) s += A(gr[j]) * A(wi[j]);
              dx[i] += T(s);
            }
          }
        }
        if (!gin[1].empty()) {
          std::vector<A> dw(cin * cout, A(0));
          for (std::size_t r = 0; r < rows; ++r) {
            const T* gr = g.data() + r * cout;
            const T* xr = x + r * cin;
            for (std::size_t i = 0; i < cin; ++i) {
              const A xi = A(xr[i]);
              if (xi == A(0)) continue;
              A* dwi = dw.data() + i * cout;
              for (std::size_t j = 0; j < cout; ++j) dwi[j] += xi * A(gr[j]);
            }
          }
          for (std::size_t k = 0; k < dw.size(); ++k) gin[1][k] += T(dw[k]);
        }
        if (!gin[2].empty()) {
          std::vector<A> db(cout, A(0));
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < cout; ++j) db[j] += A(g[r * cout + j]);
          for (std::size_t j = 0; j < cout; ++j) gin[2][j] += T(db[j]);
        }
      });
}

template <class T>
Tensor<T> relu(const Tensor<T>& input) {
  std::vector<T> out(input.size());
  for (std::size_t k = 0; k < out.size(); ++k)
    out[k] = input[k] > T(0) ? input[k] : T(0);
  return record_op<T>(input.shape(), std::move(out), {input},
                      [](std::span<const T> y, std::span<const T> gy,
                         std::span<const std::span<T>> gin) {
                        for (std::size_t k = 0; k < gy.size(); ++k)
                          if (y[k] > T(0)) gin[0][k] += gy[k];
                      });
}

/// Softmax along `axis`, max-subtracted.
template <class T>
Tensor<T> softmax(const Tensor<T>& input, std::size_t axis) {
  using A = accum_t<T>;
  detail::require(axis < input.rank() && input.dim(axis) >= 1,
                  "softmax: invalid axis " + std::to_string(axis) + " for " +
                      to_string(input.shape()));
  const auto [outer, m, inner] = detail::split_axis(input.shape(), axis);
  std::vector<T> out(input.size());
  const T* x = input.raw();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * m * inner + in;
      T mx = x[base];
      for (std::size_t j = 1; j < m; ++j) mx = std::max(mx, x[base + j * inner]);
      A total = 0;
      for (std::size_t j = 0; j < m; ++j) total += std::exp(A(x[base + j * inner]) - A(mx));
      for (std::size_t j = 0; j < m; ++j)
        out[base + j * inner] = T(std::exp(A(x[base + j * inner]) - A(mx)) / total);
    }
  }
  return record_op<T>(
      input.shape(), std::move(out), {input},
      [outer = outer, m = m, inner = inner](std::span<const T> y,
                                            std::span<const T> gy,
                                            std::span<const std::span<T>> gin) {
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * m * inner + in;
            A dot = 0;
            for (std::size_t j = 0; j < m; ++j)
              dot += A(gy[base + j * inner]) * A(y[base + j * inner]);
            for (std::size_t j = 0; j < m; ++j) {
              const std::size_t k = base + j * inner;
              gin[0][k] += T(A(y[k]) * (A(gy[k]) - dot));
            }
          }
        }
      });
}

template <class T>
Tensor<T> softmax_last(const Tensor<T>& input) {
  detail::require(input.rank() >= 1, "softmax_last: rank-0 input");
  return softmax(input, input.rank() - 1);
}

/// Element-wise product. `b` either matches `a` or has a trailing axis of 1
/// that broadcasts across a's last axis.
template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  const bool same = a.shape() == b.shape();
  bool bcast = false;
  if (!same && a.rank() == b.rank() && a.rank() >= 1 && b.shape().back() == 1) {
    bcast = std::equal(a.shape().begin(), a.shape().end() - 1, b.shape().begin());
  }
  detail::require(same || bcast, "mul: " + to_string(a.shape()) + " vs " +
                                     to_string(b.shape()));
  const std::size_t c = same ? 1 : a.shape().back();
  std::vector<T> out(a.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = a[k] * b[k / c];
  return record_op<T>(a.shape(), std::move(out), {a, b},
                      [a, b, c](std::span<const T>, std::span<const T> gy,
                                std::span<const std::span<T>> gin) {
                        if (!gin[0].empty())
                          for (std::size_t k = 0; k < gy.size(); ++k)
                            gin[0][k] += gy[k] * b[k / c];
                        if (!gin[1].empty())
                          for (std::size_t k = 0; k < gy.size(); ++k)
                            gin[1][k / c] += gy[k] * a[k];
                      });
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.shape() == b.shape(),
                  "add: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  std::vector<T> out(a.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = a[k] + b[k];
  return record_op<T>(a.shape(), std::move(out), {a, b},
                      [](std::span<const T>, std::span<const T> gy,
                         std::span<const std::span<T>> gin) {
                        for (auto& g : gin)
                          if (!g.empty())
                            for (std::size_t k = 0; k < gy.size(); ++k) g[k] += gy[k];
                      });
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> out(x.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = x[k] * factor;
  return record_op<T>(x.shape(), std::move(out), {x},
                      [factor](std::span<const T>, std::span<const T> gy,
                               std::span<const std::span<T>> gin) {
                        for (std::size_t k = 0; k < gy.size(); ++k)
                          gin[0][k] += gy[k] * factor;
                      });
}

/// Concatenates along the last axis; leading axes must agree.
template <class T>
Tensor<T> concat_last(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.rank() >= 1 && a.rank() == b.rank() &&
                      std::equal(a.shape().begin(), a.shape().end() - 1,
                                 b.shape().begin()),
                  "concat_last: " + to_string(a.shape()) + " vs " +
                      to_string(b.shape()));
  const std::size_t ca = a.shape().back();
  const std::size_t cb = b.shape().back();
  const std::size_t rows = numel(Shape(a.shape().begin(), a.shape().end() - 1));
  Shape shape = a.shape();
  shape.back() = ca + cb;
  std::vector<T> out(rows * (ca + cb));
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.raw() + r * ca, ca, out.data() + r * (ca + cb));
    std::copy_n(b.raw() + r * cb, cb, out.data() + r * (ca + cb) + ca);
  }
  return record_op<T>(std::move(shape), std::move(out), {a, b},
                      [rows, ca, cb](std::span<const T>, std::span<const T> gy,
                                     std::span<const std::span<T>> gin) {
                        for (std::size_t r = 0; r < rows; ++r) {
                          const T* g = gy.data() + r * (ca + cb);
                          if (!gin[0].empty())
                            for (std::size_t i = 0; i < ca; ++i) gin[0][r * ca + i] += g[i];
                          if (!gin[1].empty())
                            for (std::size_t i = 0; i < cb; ++i) gin[1][r * cb + i] += g[ca + i];
                        }
                      });
}

/// Columns [begin, end) of the last axis.
template <class T>
Tensor<T> slice_last(const Tensor<T>& x, std::size_t begin, std::size_t end) {
  detail::require(x.rank() >= 1 && begin <= end && end <= x.shape().back(),
                  "slice_last: [" + std::to_string(begin) + "," +
                      std::to_string(end) + ") of " + to_string(x.shape()));
  const std::size_t c = x.shape().back();
  const std::size_t w = end - begin;
  const std::size_t rows = c == 0 ? 0 : x.size() / c;
  Shape shape = x.shape();
  shape.back() = w;
  std::vector<T> out(rows * w);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(x.raw() + r * c + begin, w, out.data() + r * w);
  return record_op<T>(std::move(shape), std::move(out), {x},
                      [rows, c, w, begin](std::span<const T>, std::span<const T> gy,
                                          std::span<const std::span<T>> gin) {
                        for (std::size_t r = 0; r < rows; ++r)
                          for (std::size_t i = 0; i < w; ++i)
                            gin[0][r * c + begin + i] += gy[r * w + i];
                      });
}

/// out[index..., :] = x[indices[index...], :] where x has shape [N, rest...]
/// and the result has shape index_shape ++ rest.
template <class T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const std::size_t> indices,
                      const Shape& index_shape) {
  detail::require(x.rank() >= 1 && numel(index_shape) == indices.size(),
                  "gather_rows: x " + to_string(x.shape()) + ", index shape " +
                      to_string(index_shape) + " for " +
                      std::to_string(indices.size()) + " indices");
  const std::size_t n = x.dim(0);
  const std::size_t d = n == 0 ? 0 : x.size() / n;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= n) {
      throw ContractError("tensor_engine", "gather_rows: index " +
                                               std::to_string(indices[k]) +
                                               " out of range for " +
                                               std::to_string(n) + " rows");
    }
  }
  Shape shape = index_shape;
  shape.insert(shape.end(), x.shape().begin() + 1, x.shape().end());
  std::vector<T> out(indices.size() * d);
  for (std::size_t k = 0; k < indices.size(); ++k)
    std::copy_n(x.raw() + indices[k] * d, d, out.data() + k * d);
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return record_op<T>(std::move(shape), std::move(out), {x},
                      [idx = std::move(idx), d](std::span<const T>,
                                                std::span<const T> gy,
                                                std::span<const std::span<T>> gin) {
                        for (std::size_t k = 0; k < idx.size(); ++k)
                          for (std::size_t i = 0; i < d; ++i)
                            gin[0][idx[k] * d + i] += gy[k * d + i];
                      });
}

/// Inverse of gather_rows: row k of x (shape [M, rest...]) is added into
/// output row indices[k]; the result has shape [rows, rest...].
template <class T>
Tensor<T> scatter_add_rows(const Tensor<T>& x, std::span<const std::size_t> indices,
                           std::size_t rows) {
  detail::require(x.rank() >= 1 && x.dim(0) == indices.size(),
                  "scatter_add_rows: x " + to_string(x.shape()) + " with " +
                      std::to_string(indices.size()) + " indices");
  const std::size_t d = indices.empty() ? 0 : x.size() / indices.size();
  for (auto i : indices) {
    if (i >= rows) {
      throw ContractError("tensor_engine", "scatter_add_rows: index " +
                                               std::to_string(i) + " >= " +
                                               std::to_string(rows));
    }
  }
  Shape shape = x.shape();
  shape[0] = rows;
  std::vector<T> out(rows * d, T(0));
  for (std::size_t k = 0; k < indices.size(); ++k)
    for (std::size_t i = 0; i < d; ++i) out[indices[k] * d + i] += x[k * d + i];
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return record_op<T>(std::move(shape), std::move(out), {x},
                      [idx = std::move(idx), d](std::span<const T>,
                                                std::span<const T> gy,
                                                std::span<const std::span<T>> gin) {
                        for (std::size_t k = 0; k < idx.size(); ++k)
                          for (std::size_t i = 0; i < d; ++i)
                            gin[0][k * d + i] += gy[idx[k] * d + i];
                      });
}

/// out[r, :] = sum_j weights[r*k + j] * x[indices[r*k + j], :] for x of shape
/// [M, C]; the result has shape [R, C] with R = indices.size() / k.
template <class T>
Tensor<T> weighted_gather_rows(const Tensor<T>& x,
                               std::span<const std::size_t> indices,
                               std::span<const T> weights, std::size_t k) {
  detail::require(x.rank() == 2 && k > 0 && indices.size() == weights.size() &&
                      indices.size() % k == 0,
                  "weighted_gather_rows: x " + to_string(x.shape()) + ", k " +
                      std::to_string(k));
  using A = accum_t<T>;
  const std::size_t m = x.dim(0);
  const std::size_t c = x.dim(1);
  const std::size_t rows = indices.size() / k;
  for (auto i : indices) {
    if (i >= m) {
      throw ContractError("tensor_engine", "weighted_gather_rows: index " +
                                               std::to_string(i) + " >= " +
                                               std::to_string(m));
    }
  }
  std::vector<T> out(rows * c);
  std::vector<A> acc(c);
  for (std::size_t r = 0; r < rows; ++r) {
    std::fill(acc.begin(), acc.end(), A(0));
    for (std::size_t j = 0; j < k; ++j) {
      const A w = A(weights[r * k + j]);
      const T* xr = x.raw() + indices[r * k + j] * c;
      for (std::size_t i = 0; i < c; ++i) acc[i] += w * A(xr[i]);
    }
    for (std::size_t i = 0; i < c; ++i) out[r * c + i] = T(acc[i]);
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  std::vector<T> wts(weights.begin(), weights.end());
  return record_op<T>(
      Shape{rows, c}, std::move(out), {x},
      [idx = std::move(idx), wts = std::move(wts), k, c, rows](
          std::span<const T>, std::span<const T> gy,
          std::span<const std::span<T>> gin) {
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < k; ++j) {
            const T w = wts[r * k + j];
            T* dx = gin[0].data() + idx[r * k + j] * c;
            for (std::size_t i = 0; i < c; ++i) dx[i] += w * gy[r * c + i];
          }
      });
}

/// Max over `axis` (axis removed from the shape). Gradient flows to the first
/// maximal element on ties.
template <class T>
Tensor<T> max_axis(const Tensor<T>& x, std::size_t axis) {
  detail::require(axis < x.rank() && x.dim(axis) >= 1,
                  "max_axis: invalid axis " + std::to_string(axis) + " for " +
                      to_string(x.shape()));
  const auto [outer, m, inner] = detail::split_axis(x.shape(), axis);
  Shape shape = x.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<T> out(outer * inner);
  std::vector<std::size_t> arg(outer * inner);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      std::size_t best = o * m * inner + in;
      for (std::size_t j = 1; j < m; ++j) {
        const std::size_t k = o * m * inner + j * inner + in;
        if (x[k] > x[best]) best = k;
      }
      out[o * inner + in] = x[best];
      arg[o * inner + in] = best;
    }
  }
  return record_op<T>(std::move(shape), std::move(out), {x},
                      [arg = std::move(arg)](std::span<const T>, std::span<const T> gy,
                                             std::span<const std::span<T>> gin) {
                        for (std::size_t k = 0; k < arg.size(); ++k) gin[0][arg[k]] += gy[k];
                      });
}

/// Per-channel matrix product: out[i,k,c] = sum_j a[i,j,c] * b[j,k,c] for
/// a of shape [N, M, C] and b of shape [M, K, C].
template <class T>
Tensor<T> channel_contract(const Tensor<T>& a, const Tensor<T>& b) {
  using A = accum_t<T>;
  detail::require(a.rank() == 3 && b.rank() == 3 && a.dim(1) == b.dim(0) &&
                      a.dim(2) == b.dim(2),
                  "channel_contract: " + to_string(a.shape()) + " vs " +
                      to_string(b.shape()));
  const std::size_t n = a.dim(0), m = a.dim(1), c = a.dim(2), kk = b.dim(1);
  std::vector<T> out(n * kk * c);
  std::vector<A> acc(kk * c);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(acc.begin(), acc.end(), A(0));
    for (std::size_t j = 0; j < m; ++j) {
      const T* arow = a.raw() + (i * m + j) * c;
      const T* brow = b.raw() + j * kk * c;
      for (std::size_t k = 0; k < kk; ++k) {
        A* dst = acc.data() + k * c;
        const T* src = brow + k * c;
        for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += A(arow[ch]) * A(src[ch]);
      }
    }
    for (std::size_t q = 0; q < kk * c; ++q) out[i * kk * c + q] = T(acc[q]);
  }
  return record_op<T>(
      Shape{n, kk, c}, std::move(out), {a, b},
      [a, b, n, m, c, kk](std::span<const T>, std::span<const T> gy,
                          std::span<const std::span<T>> gin) {
        if (!gin[0].empty()) {
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) {
              T* da = gin[0].data() + (i * m + j) * c;
              for (std::size_t k = 0; k < kk; ++k) {
                const T* g = gy.data() + (i * kk + k) * c;
                const T* bv = b.raw() + (j * kk + k) * c;
                for (std::size_t ch = 0; ch < c; ++ch) da[ch] += g[ch] * bv[ch];
              }
            }
        }
        if (!gin[1].empty()) {
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) {
              const T* av = a.raw() + (i * m + j) * c;
              for (std::size_t k = 0; k < kk; ++k) {
                const T* g = gy.data() + (i * kk + k) * c;
                T* db = gin[1].data() + (j * kk + k) * c;
                for (std::size_t ch = 0; ch < c; ++ch) db[ch] += av[ch] * g[ch];
              }
            }
        }
      });
}

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  accum_t<T> total = 0;
  for (auto v : x.data()) total += v;
  return record_op<T>(Shape{}, {T(total)}, {x},
                      [](std::span<const T>, std::span<const T> gy,
                         std::span<const std::span<T>> gin) {
                        for (auto& g : gin[0]) g += gy[0];
                      });
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
  detail::require(x.size() > 0, "mean: empty tensor");
  return scale(sum(x), T(1) / T(x.size()));
}

// ---------------------------------------------------------------------------
// Finite-difference checking
// ---------------------------------------------------------------------------

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_entry = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares backward() against central differences for every entry of every
/// parameter. `forward` must read the current values through `params`.
template <class T>
GradCheckResult grad_check_detailed(const std::function<Tensor<T>()>& forward,
                                    std::span<Tensor<T>* const> params,
                                    double step) {
  Tape<T> tape;
  Tensor<T> loss;
  {
    TapeScope<T> scope(tape);
    loss = forward();
  }
  const Gradients<T> grads = backward(tape, loss);
  tape.clear();

  GradCheckResult result;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor<T>& param = *params[p];
    const Tensor<T> original = param;
    const Tensor<T> analytic = grads.of(original);
    std::vector<T> values(original.data().begin(), original.data().end());
    for (std::size_t e = 0; e < values.size(); ++e) {
      const T base = values[e];
      const T up = T(double(base) + step);
      const T down = T(double(base) - step);
      values[e] = up;
      param = Tensor<T>(original.shape(), values, true);
      const long double f_up = forward().item();
      values[e] = down;
      param = Tensor<T>(original.shape(), values, true);
      const long double f_down = forward().item();
      values[e] = base;
      param = original;

      const double numeric =
          double((f_up - f_down) / ((long double)(up) - (long double)(down)));
      const double a = double(analytic[e]);
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double err = std::abs(a - numeric) / denom;
      if (err > result.max_relative_error) {
        result = {err, p, e, a, numeric};
      }
    }
  }
  return result;
}

template <class T>
double grad_check(const std::function<Tensor<T>()>& forward,
                  std::span<Tensor<T>* const> params, double step) {
  return grad_check_detailed(forward, params, step).max_relative_error;
}

}  // namespace gacnn
