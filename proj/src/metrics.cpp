#include "mgrdn/metrics.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <stdexcept>

namespace mgr {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::vector<double> gaussian_1d() {
  std::vector<double> g(kWindow);
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    g[i] = std::exp(-d * d / (2 * kSigma * kSigma));
    sum += g[i];
  }
  for (double& v : g) v /= sum;
  return g;
}

// Valid-region separable filtering of an h x w plane.
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w,
                                 const std::vector<double>& g) {
  const int oh = h - kWindow + 1, ow = w - kWindow + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += g[k] * src[static_cast<std::size_t>(y) * w + x + k];
      rows[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += g[k] * rows[static_cast<std::size_t>(y + k) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  return out;
}

double ssim_plane(const float* a, const float* b, int h, int w, const std::vector<double>& g) {
  const std::size_t n = static_cast<std::size_t>(h) * w;
  std::vector<double> va(n), vb(n), aa(n), bb(n), ab(n);
  for (std::size_t i = 0; i < n; ++i) {
    va[i] = a[i];
    vb[i] = b[i];
    aa[i] = va[i] * va[i];
    bb[i] = vb[i] * vb[i];
    ab[i] = va[i] * vb[i];
  }
  const auto mu_a = filter_valid(va, h, w, g);
  const auto mu_b = filter_valid(vb, h, w, g);
  const auto e_aa = filter_valid(aa, h, w, g);
  const auto e_bb = filter_valid(bb, h, w, g);
  const auto e_ab = filter_valid(ab, h, w, g);
  double sum = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double var_a = e_aa[i] - mu_a[i] * mu_a[i];
    const double var_b = e_bb[i] - mu_b[i] * mu_b[i];
    const double cov = e_ab[i] - mu_a[i] * mu_b[i];
    const double num = (2 * mu_a[i] * mu_b[i] + kC1) * (2 * cov + kC2);
    const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + kC1) * (var_a + var_b + kC2);
    sum += num / den;
  }
  return sum / static_cast<double>(mu_a.size());
}

}  // namespace

double psnr(const Tensor<float>& a, const Tensor<float>& b) {
  require_same_shape(a, b, "psnr");
  if (a.empty()) throw std::invalid_argument("psnr: empty images");
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

std::vector<double> ssim_window() {
  const auto g = gaussian_1d();
  std::vector<double> w(kWindow * kWindow);
  for (int i = 0; i < kWindow; ++i)
    for (int j = 0; j < kWindow; ++j) w[i * kWindow + j] = g[i] * g[j];
  return w;
}

double ssim(const Tensor<float>& a, const Tensor<float>& b) {
  require_same_shape(a, b, "ssim");
  if (a.h() < kWindow || a.w() < kWindow) {
    throw std::invalid_argument("ssim: images must be at least 11x11, got " + a.shape().str());
  }
  const auto g = gaussian_1d();
  double sum = 0.0;
  for (int n = 0; n < a.n(); ++n)
    for (int c = 0; c < a.c(); ++c) sum += ssim_plane(a.plane(n, c), b.plane(n, c), a.h(), a.w(), g);
  return sum / (static_cast<double>(a.n()) * a.c());
}

void QualityReport::add(std::string id, const Tensor<float>& estimate, const Tensor<float>& reference) {
  images.push_back({std::move(id), psnr(estimate, reference), ssim(estimate, reference)});
}

double QualityReport::mean_psnr() const {
  double s = 0.0;
  for (const auto& q : images) s += q.psnr_db;
  return images.empty() ? 0.0 : s / images.size();
}

double QualityReport::mean_ssim() const {
  double s = 0.0;
  for (const auto& q : images) s += q.ssim;
  return images.empty() ? 0.0 : s / images.size();
}

void QualityReport::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "image_id,psnr,ssim\n" << std::fixed;
  for (const auto& q : images) {
    out << q.image_id << ',' << std::setprecision(4) << q.psnr_db << ',' << std::setprecision(6) << q.ssim
        << '\n';
  }
  out << "mean," << std::setprecision(4) << mean_psnr() << ',' << std::setprecision(6) << mean_ssim() << '\n';
}

}  // namespace mgr
