#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "deeplle/check.hpp"

namespace deeplle {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t e : s) {
    DLLE_CHECK(e > 0, "tensor extents must be positive, got ", e);
    n *= e;
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  out += ")";
  return out;
}

// Dense row-major n-d array. Plain values only; graph attachment happens
// through Tape vars, so a Tensor on its own is always detached.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)), values_(shape_numel(shape_), T(0)) {}

  Tensor(Shape shape, T fill) : shape_(std::move(shape)), values_(shape_numel(shape_), fill) {}

  Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), values_(std::move(values)) {
    DLLE_CHECK(static_cast<int64_t>(values_.size()) == shape_numel(shape_),
               "value count ", values_.size(), " does not match shape ", shape_str(shape_));
  }

  static Tensor scalar(T v) { return Tensor({1}, std::vector<T>{v}); }

  const Shape& shape() const { return shape_; }
  int64_t dim(size_t i) const { return shape_.at(i); }
  size_t rank() const { return shape_.size(); }
  int64_t numel() const { return static_cast<int64_t>(values_.size()); }
  bool empty() const { return values_.empty(); }

  T* data() { return values_.data(); }
  const T* data() const { return values_.data(); }
  std::vector<T>& values() { return values_; }
  const std::vector<T>& values() const { return values_; }

  T& at(int64_t i) { return values_[static_cast<size_t>(i)]; }
  const T& at(int64_t i) const { return values_[static_cast<size_t>(i)]; }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(values_.size());
    for (size_t i = 0; i < values_.size(); ++i) out[i] = static_cast<U>(values_[i]);
    return Tensor<U>(shape_, std::move(out));
  }

  Tensor reshaped(Shape new_shape) const {
    DLLE_CHECK(shape_numel(new_shape) == numel(), "reshape ", shape_str(shape_), " -> ",
               shape_str(new_shape), " changes element count");
    return Tensor(std::move(new_shape), values_);
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

 private:
  Shape shape_;
  std::vector<T> values_;
};

}  // namespace deeplle
