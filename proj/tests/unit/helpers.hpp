#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>

#include "mgrdn/rng.hpp"
#include "mgrdn/tensor.hpp"

namespace testing {

template <typename T>
mgr::Tensor<T> random_tensor(const mgr::Shape& s, mgr::Rng& rng, double lo = -1.0,
                             double hi = 1.0) {
  mgr::Tensor<T> t(s);
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

template <typename T>
mgr::Tensor<T> random_binary(const mgr::Shape& s, mgr::Rng& rng, double p_one) {
  mgr::Tensor<T> t(s);
  for (auto& v : t.values()) v = rng.bernoulli(p_one) ? T(1) : T(0);
  return t;
}

/// Central difference of `loss` w.r.t. values[i].
inline double central_difference(std::span<double> values, std::size_t i,
                                 const std::function<double()>& loss,
                                 double eps = 1e-5) {
  const double saved = values[i];
  values[i] = saved + eps;
  const double up = loss();
  values[i] = saved - eps;
  const double down = loss();
  values[i] = saved;
  return (up - down) / (2.0 * eps);
}

/// |a-b| / max(|a|, |b|), with both-tiny pairs compared absolutely.
inline double rel_error(double a, double b, double floor = 1e-7) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Weighted sum used to reduce a tensor to a scalar for gradient checks.
inline double dot(const mgr::Tensor<double>& a, const mgr::Tensor<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Largest relative error between `analytic` and central differences over
/// every entry of `values`.
inline double max_fd_error(std::span<double> values, std::span<const double> analytic,
                           const std::function<double()>& loss, double eps = 1e-5) {
  double worst = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    worst = std::max(worst, rel_error(analytic[i], central_difference(values, i, loss, eps)));
  }
  return worst;
}

}  // namespace testing
