#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "joytts/common.hpp"
#include "joytts/rng.hpp"

namespace joytts {

// Dense row-major tensor. float for training/inference, double for
// gradient checking; the scalar type is the template parameter everywhere.
template <typename T>
struct Tensor {
  std::vector<int> dims;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> d) : dims(std::move(d)) {
    data.assign(numel_of(dims), T(0));
  }
  Tensor(std::vector<int> d, std::vector<T> values) : dims(std::move(d)), data(std::move(values)) {
    require_shape(data.size() == numel_of(dims), "tensor: dims do not match data length");
  }

  static size_t numel_of(const std::vector<int>& d) {
    size_t n = 1;
    for (int x : d) {
      require_shape(x > 0, "tensor: dims must be positive");
      n *= static_cast<size_t>(x);
    }
    return n;
  }

  static Tensor zeros(std::vector<int> d) { return Tensor(std::move(d)); }

  static Tensor full(std::vector<int> d, T v) {
    Tensor t(std::move(d));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }

  static Tensor randn(std::vector<int> d, Rng& rng, double stddev) {
    Tensor t(std::move(d));
    for (auto& x : t.data) x = static_cast<T>(rng.normal(0.0, stddev));
    return t;
  }

  size_t numel() const { return data.size(); }
  int rank() const { return static_cast<int>(dims.size()); }

  int rows() const {
    require_shape(rank() == 2, "tensor: rows() needs rank 2");
    return dims[0];
  }
  int cols() const {
    require_shape(rank() == 2, "tensor: cols() needs rank 2");
    return dims[1];
  }

  T& at(int i, int j) { return data[static_cast<size_t>(i) * dims[1] + j]; }
  const T& at(int i, int j) const { return data[static_cast<size_t>(i) * dims[1] + j]; }

  std::span<T> row(int i) {
    return std::span<T>(data.data() + static_cast<size_t>(i) * dims[1], dims[1]);
  }
  std::span<const T> row(int i) const {
    return std::span<const T>(data.data() + static_cast<size_t>(i) * dims[1], dims[1]);
  }

  bool same_shape(const Tensor& o) const { return dims == o.dims; }

  bool all_finite() const {
    for (const T& v : data) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }
};

inline std::string shape_str(const std::vector<int>& dims) {
  std::string s = "[";
  for (size_t i = 0; i < dims.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(dims[i]);
  }
  return s + "]";
}

}  // namespace joytts
