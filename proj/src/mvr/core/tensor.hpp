#pragma once

#include <cstddef>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvr/core/rng.hpp"

namespace mvr {

inline std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << "]";
  return os.str();
}

inline size_t shape_numel(const std::vector<int>& shape) {
  size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("negative dimension in shape " + shape_str(shape));
    n *= static_cast<size_t>(d);
  }
  return n;
}

// Dense row-major tensor. The scalar type is a construction-time choice:
// double for gradient-check builds, float for training builds.
template <class T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;
  bool requires_grad = false;
  std::vector<T> grad;  // empty unless allocated; same length as data when present

  Tensor() = default;
  Tensor(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != data.size())
      throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                  " does not match shape " + shape_str(shape));
  }

  static Tensor zeros(std::vector<int> s) {
    Tensor t;
    t.shape = std::move(s);
    t.data.assign(shape_numel(t.shape), T(0));
    return t;
  }

  static Tensor full(std::vector<int> s, T v) {
    Tensor t = zeros(std::move(s));
    for (auto& x : t.data) x = v;
    return t;
  }

  static Tensor randn(std::vector<int> s, Rng& rng, T stddev = T(1)) {
    Tensor t = zeros(std::move(s));
    for (auto& x : t.data) x = static_cast<T>(rng.normal()) * stddev;
    return t;
  }

  size_t numel() const { return data.size(); }
  int rows() const { return shape.size() == 2 ? shape[0] : throw_rank2(); }
  int cols() const { return shape.size() == 2 ? shape[1] : throw_rank2(); }

  T& at(int r, int c) { return data[static_cast<size_t>(r) * shape[1] + c]; }
  const T& at(int r, int c) const { return data[static_cast<size_t>(r) * shape[1] + c]; }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
  void zero_grad() { grad.assign(data.size(), T(0)); }

 private:
  [[noreturn]] int throw_rank2() const {
    throw std::logic_error("expected rank-2 tensor, got shape " + shape_str(shape));
  }
};

}  // namespace mvr
