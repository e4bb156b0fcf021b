#pragma once

#include <string>
#include <vector>

#include "mgrdn/tensor.hpp"

namespace mgr {

inline constexpr double kPsnrCap = 100.0;

/// 10 log10(1 / MSE) over all elements, peak 1.0; capped at 100 dB.
double psnr(const Tensor<float>& a, const Tensor<float>& b);

/// Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
/// K2 = 0.03 and dynamic range 1, averaged over valid window positions and
/// then over channels and images.
double ssim(const Tensor<float>& a, const Tensor<float>& b);

/// Normalized 11x11 Gaussian window, row-major.
std::vector<double> ssim_window();

struct ImageQuality {
  std::string image_id;
  double psnr_db = 0.0;
  double ssim = 0.0;
};

struct QualityReport {
  std::vector<ImageQuality> images;

  void add(std::string id, const Tensor<float>& estimate, const Tensor<float>& reference);
  double mean_psnr() const;
  double mean_ssim() const;
  /// image_id,psnr,ssim rows followed by a "mean" row.
  void write_csv(const std::string& path) const;
};

}  // namespace mgr
