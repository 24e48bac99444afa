#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <new>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tempodet/errors.hpp"

namespace tempodet::numkit {

using Shape = std::vector<int>;

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

inline std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int e : shape) {
    if (e <= 0) throw ShapeError("tensor extents must be positive, got " + shape_string(shape));
    n *= static_cast<std::size_t>(e);
  }
  return n;
}

// 64-byte aligned so vectorized kernels see the same alignment on every run.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }
  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

/// Dense row-major n-dimensional array.
///
/// The element count always equals the product of the extents; every extent is
/// strictly positive. Element type is a template parameter so the same network
/// code runs in float for training and in double for gradient checks.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0))
      : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

  Tensor(Shape shape, const std::vector<T>& data) : shape_(std::move(shape)), data_(data.begin(), data.end()) {
    if (shape_numel(shape_) != data_.size()) {
      throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                       shape_string(shape_));
    }
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T(0)); }
  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_, T(0)); }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const {
    if (axis < 0) axis += rank();
    if (axis < 0 || axis >= rank()) throw ShapeError("axis out of range for " + shape_string(shape_));
    return shape_[static_cast<std::size_t>(axis)];
  }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() & { return data_; }
  std::span<const T> values() const& { return data_; }
  // A span into a temporary would dangle.
  std::span<const T> values() const&& = delete;
  AlignedVector<T>& storage() { return data_; }
  const AlignedVector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // NCHW element access; no bounds checking beyond debug asserts.
  T& at(int n, int c, int h, int w) { return data_[offset(n, c, h, w)]; }
  const T& at(int n, int c, int h, int w) const { return data_[offset(n, c, h, w)]; }

  std::size_t offset(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  void reshape(Shape shape) {
    if (shape_numel(shape) != data_.size()) {
      throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    shape_ = std::move(shape);
  }

  Tensor reshaped(Shape shape) const {
    Tensor out = *this;
    out.reshape(std::move(shape));
    return out;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  Tensor& operator+=(const Tensor& other) {
    require_same_shape(other, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
  }

  Tensor& operator*=(T s) {
    for (auto& v : data_) v *= s;
    return *this;
  }

  void require_same_shape(const Tensor& other, const char* what) const {
    if (shape_ != other.shape_) {
      throw ShapeError(std::string(what) + ": shape mismatch " + shape_string(shape_) + " vs " +
                       shape_string(other.shape_));
    }
  }

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  AlignedVector<T> data_;
};

/// A learned tensor together with its accumulated gradient.
template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Param() = default;
  Param(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)), grad(Tensor<T>::zeros_like(value)) {}

  void zero_grad() { grad.fill(T(0)); }
  std::size_t size() const { return value.size(); }
};

template <typename T>
void require_rank(const Tensor<T>& t, int rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + " tensor, got " +
                     shape_string(t.shape()));
  }
}

}  // namespace tempodet::numkit
