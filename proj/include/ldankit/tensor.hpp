#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "ldankit/errors.hpp"

namespace ldankit::nn {

// Dense row-major tensor. float for training compute, double for the
// gradient-check harness (the graph code is shared via the template).
template <class T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(numel_of(shape)), T(0));
  }

  static int64_t numel_of(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  // sum(x * 0) is zero iff every element is finite.
  bool all_finite() const {
    T acc = T(0);
    for (const T v : data) acc += v * T(0);
    return acc == T(0);
  }
};

template <class T>
Tensor<T> zeros_like(const Tensor<T>& t) {
  return Tensor<T>(t.shape);
}

template <class T, class U>
Tensor<U> cast_tensor(const Tensor<T>& t) {
  Tensor<U> out(t.shape);
  for (size_t i = 0; i < t.data.size(); ++i) out.data[i] = static_cast<U>(t.data[i]);
  return out;
}

}  // namespace ldankit::nn
