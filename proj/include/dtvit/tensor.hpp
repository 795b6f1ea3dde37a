#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dtvit/common.hpp"

namespace dtvit {

inline int64_t shape_numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t e : shape) n *= e;
  return n;
}

inline std::string shape_str(const std::vector<int64_t>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// Dense row-major tensor. S is float or double.
template <typename S>
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<S> data;

  Tensor() = default;
  Tensor(std::vector<int64_t> sh, std::vector<S> d) : shape(std::move(sh)), data(std::move(d)) {
    check(shape_numel(shape) == static_cast<int64_t>(data.size()),
          "tensor: shape does not match data length");
    for (int64_t e : shape) check(e > 0, "tensor: extents must be positive");
  }

  static Tensor zeros(std::vector<int64_t> sh) {
    Tensor t;
    t.shape = std::move(sh);
    t.data.assign(static_cast<size_t>(shape_numel(t.shape)), S(0));
    return t;
  }

  static Tensor full(std::vector<int64_t> sh, S v) {
    Tensor t = zeros(std::move(sh));
    for (S& x : t.data) x = v;
    return t;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int64_t ndim() const { return static_cast<int64_t>(shape.size()); }

  // 2-D accessors
  int64_t rows() const { return shape.size() == 2 ? shape[0] : (shape.size() == 1 ? 1 : -1); }
  int64_t cols() const { return shape.size() == 2 ? shape[1] : (shape.size() == 1 ? shape[0] : -1); }
  S& at(int64_t i, int64_t j) { return data[static_cast<size_t>(i * shape[1] + j)]; }
  const S& at(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * shape[1] + j)]; }
};

}  // namespace dtvit
