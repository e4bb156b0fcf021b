#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mgr {

/// Dimensions of a rank-4 tensor in (batch, channel, height, width) order.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }

  friend bool operator==(const Shape&, const Shape&) = default;

  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

/// Dense row-major (n,c,h,w) tensor. Value semantics; copying copies data.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0)) : shape_(shape) {
    if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
      throw std::invalid_argument("Tensor: negative dimension in " +
                                  shape.str());
    }
    data_.assign(shape.numel(), fill);
  }

  Tensor(Shape shape, std::vector<T> data)
      : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.numel()) {
      throw std::invalid_argument("Tensor: data length " +
                                  std::to_string(data_.size()) +
                                  " does not match shape " + shape_.str());
    }
  }

  static Tensor zeros_like(const Tensor& other) {
    return Tensor(other.shape());
  }

  const Shape& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  std::size_t index(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) *
               shape_.w +
           x;
  }
  T& at(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
  const T& at(int n, int c, int y, int x) const {
    return data_[index(n, c, y, x)];
  }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  /// Pointer to the contiguous h*w plane of sample n, channel c.
  T* plane(int n, int c) { return data_.data() + index(n, c, 0, 0); }
  const T* plane(int n, int c) const {
    return data_.data() + index(n, c, 0, 0);
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  double sum() const {
    double s = 0.0;
    for (T v : data_) s += static_cast<double>(v);
    return s;
  }

  double max_abs() const {
    double m = 0.0;
    for (T v : data_) m = std::max(m, std::abs(static_cast<double>(v)));
    return m;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](T v) { return std::isfinite(v); });
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(),
                   [](T v) { return static_cast<U>(v); });
    return Tensor<U>(shape_, std::move(out));
  }

  Tensor reshaped(Shape s) const {
    if (s.numel() != shape_.numel()) {
      throw std::invalid_argument("Tensor::reshaped: " + shape_.str() +
                                  " -> " + s.str());
    }
    return Tensor(s, data_);
  }

 private:
  Shape shape_{};
  std::vector<T> data_;
};

/// Throws when any element is NaN or Inf. `what` names the offending value.
template <typename T>
void require_finite(const Tensor<T>& t, const std::string& what) {
  if (!t.all_finite()) {
    throw std::runtime_error("non-finite values detected in " + what);
  }
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b,
                        const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                a.shape().str() + " vs " + b.shape().str());
  }
}

/// A learnable tensor with its gradient buffer.
template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Param() = default;
  Param(std::string n, Tensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad.fill(T(0)); }
};

}  // namespace mgr
