// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "auxadapt/error.hpp"

namespace auxadapt {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

/// Dense row-major tensor. 4-D tensors use (batch, channel, height, width).
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)) {
    check_dims();
    data_.assign(shape_size(shape_), fill);
  }

  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_dims();
    if (data_.size() != shape_size(shape_)) {
      fail(Error::Kind::shape, "tensor data length " + std::to_string(data_.size()) +
                                   " does not match shape " + shape_string(shape_));
    }
  }

  static Tensor nchw(std::size_t n, std::size_t c, std::size_t h, std::size_t w, T fill = T{0}) {
    return Tensor(Shape{n, c, h, w}, fill);
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
    return Tensor<U>(shape_, std::move(out));
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  void check_dims() const {
    for (auto d : shape_) {
      if (d == 0) fail(Error::Kind::shape, "tensor dimensions must be positive, got " + shape_string(shape_));
    }
  }

  Shape shape_;
  std::vector<T> data_;
};

/// Row-major H x W map of per-pixel values: segmentation maps, masks,
/// confidence maps.
template <typename V>
struct Grid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<V> values;

  Grid() = default;
  Grid(std::size_t h, std::size_t w, V fill = V{}) : height(h), width(w), values(h * w, fill) {}

  std::size_t size() const noexcept { return values.size(); }
  V& operator()(std::size_t y, std::size_t x) { return values[y * width + x]; }
  const V& operator()(std::size_t y, std::size_t x) const { return values[y * width + x]; }
  V& operator[](std::size_t i) { return values[i]; }
  const V& operator[](std::size_t i) const { return values[i]; }

  bool same_dims(std::size_t h, std::size_t w) const noexcept { return height == h && width == w; }
  template <typename U>
  bool same_dims(const Grid<U>& o) const noexcept {
    return height == o.height && width == o.width;
  }

  friend bool operator==(const Grid& a, const Grid& b) = default;
};

/// Class ids are 1-based: channel k of a logit tensor is class k + 1.
using SegMap = Grid<int>;
using Mask = Grid<std::uint8_t>;
using ScoreMap = Grid<double>;

inline std::size_t count_true(const Mask& m) {
  return static_cast<std::size_t>(std::count_if(m.values.begin(), m.values.end(), [](auto v) { return v != 0; }));
}

/// Requires a (1, C, H, W) tensor, naming `what` in the diagnostic.
template <typename T>
void require_single_image(const Tensor<T>& t, const char* what) {
  if (t.rank() != 4 || t.dim(0) != 1) {
    fail(Error::Kind::shape, std::string(what) + ": expected shape (1,C,H,W), got " + shape_string(t.shape()));
  }
}

}  // namespace auxadapt
