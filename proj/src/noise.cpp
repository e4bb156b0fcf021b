#include "mgrdn/noise.hpp"

#include <stdexcept>
#include <string>

namespace mgr {

std::string_view to_string(NoiseKind kind) {
  return kind == NoiseKind::gauss_fixed ? "gauss_fixed" : "gauss_range";
}

NoiseKind parse_noise_kind(std::string_view name) {
  if (name == "gauss_fixed") return NoiseKind::gauss_fixed;
  if (name == "gauss_range") return NoiseKind::gauss_range;
  throw std::invalid_argument("unknown noise kind '" + std::string(name) +
                              "' (expected gauss_fixed|gauss_range)");
}

void NoiseSpec::validate() const {
  if (kind == NoiseKind::gauss_fixed && !(sigma > 0.0)) {
    throw std::invalid_argument("NoiseSpec: sigma must be > 0");
  }
  if (kind == NoiseKind::gauss_range && !(sigma_lo > 0.0 && sigma_lo <= sigma_hi)) {
    throw std::invalid_argument("NoiseSpec: need 0 < sigma_lo <= sigma_hi");
  }
}

template <typename T>
Tensor<T> corrupt(const Tensor<T>& x, const NoiseSpec& spec, Rng& rng) {
  spec.validate();
  Tensor<T> y = x;
  const std::size_t per_image = static_cast<std::size_t>(x.c()) * x.shape().plane();
  for (int n = 0; n < x.n(); ++n) {
    const double sigma = spec.kind == NoiseKind::gauss_fixed
                             ? spec.sigma
                             : rng.uniform(spec.sigma_lo, spec.sigma_hi);
    const double s = sigma / 255.0;
    T* p = y.data() + n * per_image;
    for (std::size_t i = 0; i < per_image; ++i) p[i] += static_cast<T>(s * rng.normal());
  }
  return y;
}

template Tensor<float> corrupt(const Tensor<float>&, const NoiseSpec&, Rng&);
template Tensor<double> corrupt(const Tensor<double>&, const NoiseSpec&, Rng&);

}  // namespace mgr
