#pragma once

#include <string>

#include "mgrdn/tensor.hpp"

namespace mgr {

enum class ImageFormat { png8, pgm };

/// Pixels as a (1,c,h,w) tensor in [0,1], c in {1,3}.
struct ImageFile {
  Tensor<float> pixels;
  ImageFormat format = ImageFormat::png8;
};

/// Reads 8-bit PNG (gray or RGB; alpha is dropped) or binary PGM (P5,
/// maxval 255). Values map to v/255.
ImageFile load_image(const std::string& path);

/// Writes by extension (.png or .pgm) after clamping to [0,1] and rounding
/// v*255. `image` must be (1,c,h,w); PGM requires c == 1.
void save_image(const Tensor<float>& image, const std::string& path);

/// Luma (BT.601) of a (1,3,h,w) image; 1-channel input is returned as is.
Tensor<float> to_gray(const Tensor<float>& image);

/// Top-left aligned crop of a (n,c,h,w) tensor.
Tensor<float> crop(const Tensor<float>& image, int top, int left, int h, int w);

}  // namespace mgr
