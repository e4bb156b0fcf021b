#pragma once

#include <string_view>

#include "mgrdn/ops.hpp"

namespace mgr {

enum class NoiseKind { gauss_fixed, gauss_range };

std::string_view to_string(NoiseKind kind);
NoiseKind parse_noise_kind(std::string_view name);

/// Gaussian noise levels on the 0-255 scale.
struct NoiseSpec {
  NoiseKind kind = NoiseKind::gauss_fixed;
  double sigma = 25.0;
  double sigma_lo = 5.0;
  double sigma_hi = 50.0;

  void validate() const;
};

/// y = x + n with n ~ N(0, (sigma/255)^2) per element. gauss_range draws one
/// sigma per image. The result is not clipped.
template <typename T>
Tensor<T> corrupt(const Tensor<T>& x, const NoiseSpec& spec, Rng& rng);

}  // namespace mgr
