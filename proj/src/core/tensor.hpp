#pragma once

#include <cstdint>
#include <cstring>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "common/error.hpp"

namespace sologan {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

// Dense row-major tensor with value semantics. All layout is NCHW where it
// matters; scalars are rank-0 tensors with one element. Tensor(shape) zero
// fills; uninit(shape) skips the fill for buffers that are fully overwritten.
template <typename T>
class Tensor {
  static_assert(std::is_trivially_copyable_v<T>);

 public:
  Tensor() = default;

  explicit Tensor(Shape shape, T fill_value = T(0)) : shape_(std::move(shape)) {
    validate_dims();
    size_ = shape_numel(shape_);
    data_.reset(new T[static_cast<size_t>(size_)]);
    fill(fill_value);
  }

  static Tensor uninit(Shape shape) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.validate_dims();
    t.size_ = shape_numel(t.shape_);
    t.data_.reset(new T[static_cast<size_t>(t.size_)]);
    return t;
  }

  static Tensor from_data(Shape shape, std::vector<T> data) {
    Tensor t = uninit(std::move(shape));
    require(t.size_ == static_cast<int64_t>(data.size()), ErrorCode::shape_mismatch,
            "tensor data size does not match shape " + shape_str(t.shape_));
    std::memcpy(t.data_.get(), data.data(), data.size() * sizeof(T));
    return t;
  }

  static Tensor scalar(T v) { return from_data({}, {v}); }

  Tensor(const Tensor& other) : shape_(other.shape_), size_(other.size_) {
    if (other.data_) {
      data_.reset(new T[static_cast<size_t>(size_)]);
      std::memcpy(data_.get(), other.data_.get(), static_cast<size_t>(size_) * sizeof(T));
    }
  }
  Tensor& operator=(const Tensor& other) {
    if (this == &other) return *this;
    shape_ = other.shape_;
    size_ = other.size_;
    if (other.data_) {
      data_.reset(new T[static_cast<size_t>(size_)]);
      std::memcpy(data_.get(), other.data_.get(), static_cast<size_t>(size_) * sizeof(T));
    } else {
      data_.reset();
    }
    return *this;
  }
  Tensor(Tensor&&) noexcept = default;
  Tensor& operator=(Tensor&&) noexcept = default;

  const Shape& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t numel() const { return size_; }
  bool empty() const { return data_ == nullptr; }

  T* data() { return data_.get(); }
  const T* data() const { return data_.get(); }

  T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  T item() const {
    require(size_ == 1, ErrorCode::shape_mismatch, "item() on non-scalar tensor");
    return data_[0];
  }

  Tensor reshaped(Shape shape) const {
    require(shape_numel(shape) == size_, ErrorCode::shape_mismatch,
            "reshape " + shape_str(shape_) + " -> " + shape_str(shape) + " changes element count");
    Tensor t = *this;
    t.shape_ = std::move(shape);
    return t;
  }

  void fill(T v) {
    if (v == T(0)) {
      std::memset(data_.get(), 0, static_cast<size_t>(size_) * sizeof(T));
    } else {
      for (int64_t i = 0; i < size_; ++i) data_[static_cast<size_t>(i)] = v;
    }
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out = Tensor<U>::uninit(shape_);
    for (int64_t i = 0; i < size_; ++i) out[i] = static_cast<U>(data_[static_cast<size_t>(i)]);
    return out;
  }

 private:
  void validate_dims() const {
    for (int64_t d : shape_)
      require(d >= 0, ErrorCode::shape_mismatch, "negative tensor dimension");
  }

  Shape shape_;
  int64_t size_ = 0;
  std::unique_ptr<T[]> data_;
};

template <typename T>
Tensor<T> zeros_like(const Tensor<T>& t) {
  return Tensor<T>(t.shape());
}

}  // namespace sologan
