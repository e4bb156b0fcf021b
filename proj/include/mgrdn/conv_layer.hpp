#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mgrdn/ops.hpp"

namespace mgr {

/// Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)); draws c_out*c_in*k*k
/// values from `rng` in row-major order.
template <typename T>
Tensor<T> glorot_uniform(int c_out, int c_in, int k, Rng& rng);

/// Stride-1 "same" convolution with bias, caching its input for backward.
template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string& name, int c_in, int c_out, int k, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x, bool keep_cache);
  /// Accumulates parameter gradients; returns the input gradient (empty when
  /// `want_input_grad` is false). Throws std::logic_error without a cache.
  Tensor<T> backward(const Tensor<T>& grad_out, bool want_input_grad = true);

  void append_params(std::vector<Param<T>*>& out);
  bool has_cache() const { return cache_.has_value(); }
  void clear_cache() { cache_.reset(); }

  int c_in() const { return weight.value.c(); }
  int c_out() const { return weight.value.n(); }
  int kernel() const { return weight.value.h(); }

  Param<T> weight;
  Param<T> bias;

 private:
  std::optional<Tensor<T>> cache_;
};

}  // namespace mgr
