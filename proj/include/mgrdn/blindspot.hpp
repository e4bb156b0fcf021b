#pragma once

#include <string_view>

#include "mgrdn/ops.hpp"

namespace mgr {

enum class MaskKind { bernoulli_s2s, neighbor_n2v, drop_inpaint };

std::string_view to_string(MaskKind kind);
MaskKind parse_mask_kind(std::string_view name);

struct MaskScheme {
  MaskKind kind = MaskKind::bernoulli_s2s;
  /// Drop probability (Bernoulli) or drop ratio (inpainting).
  double rate = 0.7;
  /// Pixels replaced per image; 0 selects ceil(0.015 * h * w).
  int n2v_count = 0;
  /// Neighborhood radius for replacement.
  int n2v_window = 2;

  void validate() const;
  int count_for(int h, int w) const;
};

/// A manipulated input, its guide mask (n,1,h,w) with 1 at untouched pixels,
/// and the regression target.
template <typename T>
struct BlindSpotSample {
  Tensor<T> manipulated;
  Tensor<T> guide_mask;
  Tensor<T> target;
};

/// Drops each spatial position (all channels together) with probability
/// `rate`; dropped pixels become 0.
template <typename T>
BlindSpotSample<T> sample_bernoulli(const Tensor<T>& y, double rate, Rng& rng);

/// Replaces `count` distinct positions per image with the value of a random
/// in-bounds neighbor within `window`, never the pixel itself.
template <typename T>
BlindSpotSample<T> sample_neighbor_replace(const Tensor<T>& y, int count,
                                           int window, Rng& rng);

/// Corrupts a clean image by dropping a `ratio` fraction of pixels. The
/// target is the clean image.
template <typename T>
BlindSpotSample<T> sample_drop_inpaint(const Tensor<T>& x_clean, double ratio,
                                       Rng& rng);

template <typename T>
BlindSpotSample<T> draw_sample(const Tensor<T>& y, const MaskScheme& scheme,
                               Rng& rng);

template <typename T>
struct LossResult {
  double loss = 0.0;
  Tensor<T> grad;  // d loss / d prediction
  std::size_t manipulated = 0;  // spatial positions contributing
};

/// Mean squared error over manipulated entries:
///   sum (1-M)(pred-y)^2 / max(1, c * #{M == 0})
/// `guide_mask` is (n,1,h,w) and binary. The gradient is exactly zero where
/// M == 1. An all-ones mask gives loss 0 and logs a warning.
template <typename T>
LossResult<T> masked_mse(const Tensor<T>& prediction, const Tensor<T>& target,
                         const Tensor<T>& guide_mask);

}  // namespace mgr
