#include "mgrdn/blindspot.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace mgr {

std::string_view to_string(MaskKind kind) {
  switch (kind) {
    case MaskKind::bernoulli_s2s: return "bernoulli_s2s";
    case MaskKind::neighbor_n2v: return "neighbor_n2v";
    case MaskKind::drop_inpaint: return "drop_inpaint";
  }
  return "unknown";
}

MaskKind parse_mask_kind(std::string_view name) {
  for (MaskKind k : {MaskKind::bernoulli_s2s, MaskKind::neighbor_n2v, MaskKind::drop_inpaint}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown mask scheme '" + std::string(name) +
                              "' (expected bernoulli_s2s|neighbor_n2v|drop_inpaint)");
}

void MaskScheme::validate() const {
  if (!(rate > 0.0 && rate < 1.0)) {
    throw std::invalid_argument("MaskScheme: rate must lie in (0,1), got " + std::to_string(rate));
  }
  if (n2v_window < 1) throw std::invalid_argument("MaskScheme: n2v_window must be >= 1");
  if (n2v_count < 0) throw std::invalid_argument("MaskScheme: n2v_count must be >= 0");
}

int MaskScheme::count_for(int h, int w) const {
  if (n2v_count > 0) return n2v_count;
  return static_cast<int>(std::ceil(0.015 * h * w));
}

namespace {

void check_rate(double rate, const char* what) {
  if (!(rate > 0.0 && rate < 1.0)) {
    throw std::invalid_argument(std::string(what) + ": rate must lie in (0,1), got " +
                                std::to_string(rate));
  }
}

template <typename T>
BlindSpotSample<T> drop_pixels(const Tensor<T>& y, double rate, Rng& rng) {
  const Shape& s = y.shape();
  BlindSpotSample<T> out{y, Tensor<T>(Shape{s.n, 1, s.h, s.w}, T(1)), y};
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    T* mask = out.guide_mask.plane(n, 0);
    for (std::size_t i = 0; i < plane; ++i) {
      if (!rng.bernoulli(rate)) continue;
      mask[i] = T(0);
      for (int c = 0; c < s.c; ++c) out.manipulated.plane(n, c)[i] = T(0);
    }
  }
  return out;
}

}  // namespace

template <typename T>
BlindSpotSample<T> sample_bernoulli(const Tensor<T>& y, double rate, Rng& rng) {
  check_rate(rate, "sample_bernoulli");
  return drop_pixels(y, rate, rng);
}

template <typename T>
BlindSpotSample<T> sample_neighbor_replace(const Tensor<T>& y, int count, int window, Rng& rng) {
  const Shape& s = y.shape();
  const std::size_t plane = s.plane();
  if (count < 0 || static_cast<std::size_t>(count) >= plane) {
    throw std::invalid_argument("sample_neighbor_replace: count " + std::to_string(count) +
                                " must be below h*w = " + std::to_string(plane));
  }
  if (window < 1) throw std::invalid_argument("sample_neighbor_replace: window must be >= 1");
  if (s.h * s.w < 2) throw std::invalid_argument("sample_neighbor_replace: image needs 2+ pixels");

  BlindSpotSample<T> out{y, Tensor<T>(Shape{s.n, 1, s.h, s.w}, T(1)), y};
  std::vector<std::uint32_t> order(plane);
  for (int n = 0; n < s.n; ++n) {
    std::iota(order.begin(), order.end(), 0u);
    // partial Fisher-Yates: the first `count` entries are a uniform subset
    for (int i = 0; i < count; ++i) {
      const std::size_t j = i + rng.index(plane - i);
      std::swap(order[i], order[j]);
    }
    for (int i = 0; i < count; ++i) {
      const int py = static_cast<int>(order[i] / s.w);
      const int px = static_cast<int>(order[i] % s.w);
      const int y0 = std::max(0, py - window), y1 = std::min(s.h - 1, py + window);
      const int x0 = std::max(0, px - window), x1 = std::min(s.w - 1, px + window);
      const std::uint64_t cells = static_cast<std::uint64_t>(y1 - y0 + 1) * (x1 - x0 + 1);
      // uniform over the clipped window minus the centre
      std::uint64_t pick = rng.index(cells - 1);
      const std::uint64_t self = static_cast<std::uint64_t>(py - y0) * (x1 - x0 + 1) + (px - x0);
      if (pick >= self) ++pick;
      const int ny = y0 + static_cast<int>(pick / (x1 - x0 + 1));
      const int nx = x0 + static_cast<int>(pick % (x1 - x0 + 1));
      for (int c = 0; c < s.c; ++c) out.manipulated.at(n, c, py, px) = y.at(n, c, ny, nx);
      out.guide_mask.at(n, 0, py, px) = T(0);
    }
  }
  return out;
}

template <typename T>
BlindSpotSample<T> sample_drop_inpaint(const Tensor<T>& x_clean, double ratio, Rng& rng) {
  check_rate(ratio, "sample_drop_inpaint");
  return drop_pixels(x_clean, ratio, rng);
}

template <typename T>
BlindSpotSample<T> draw_sample(const Tensor<T>& y, const MaskScheme& scheme, Rng& rng) {
  switch (scheme.kind) {
    case MaskKind::bernoulli_s2s: return sample_bernoulli(y, scheme.rate, rng);
    case MaskKind::neighbor_n2v:
      return sample_neighbor_replace(y, scheme.count_for(y.h(), y.w()), scheme.n2v_window, rng);
    case MaskKind::drop_inpaint: return sample_drop_inpaint(y, scheme.rate, rng);
  }
  throw std::invalid_argument("draw_sample: bad scheme");
}

template <typename T>
LossResult<T> masked_mse(const Tensor<T>& prediction, const Tensor<T>& target,
                         const Tensor<T>& guide_mask) {
  require_same_shape(prediction, target, "masked_mse");
  const Shape& s = prediction.shape();
  if (guide_mask.shape() != Shape{s.n, 1, s.h, s.w}) {
    throw std::invalid_argument("masked_mse: guide mask must be " + Shape{s.n, 1, s.h, s.w}.str() +
                                ", got " + guide_mask.shape().str());
  }
  LossResult<T> r;
  r.grad = Tensor<T>(s);
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    const T* m = guide_mask.plane(n, 0);
    for (std::size_t i = 0; i < plane; ++i) {
      if (m[i] != T(0) && m[i] != T(1)) throw std::invalid_argument("masked_mse: guide mask is not binary");
      r.manipulated += m[i] == T(0);
    }
  }
  if (r.manipulated == 0) {
    spdlog::warn("masked_mse: guide mask has no manipulated pixels; loss is 0 and carries no signal");
    return r;
  }
  const double denom = static_cast<double>(s.c) * static_cast<double>(r.manipulated);
  const T scale = static_cast<T>(2.0 / denom);
  double acc = 0.0;
  for (int n = 0; n < s.n; ++n) {
    const T* m = guide_mask.plane(n, 0);
    for (int c = 0; c < s.c; ++c) {
      const T* p = prediction.plane(n, c);
      const T* t = target.plane(n, c);
      T* g = r.grad.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) {
        if (m[i] != T(0)) continue;  // untouched: gradient stays +0.0
        const T d = p[i] - t[i];
        acc += static_cast<double>(d) * static_cast<double>(d);
        g[i] = scale * d;
      }
    }
  }
  r.loss = acc / denom;
  return r;
}

#define MGR_INSTANTIATE_BLINDSPOT(T)                                                   \
  template BlindSpotSample<T> sample_bernoulli(const Tensor<T>&, double, Rng&);        \
  template BlindSpotSample<T> sample_neighbor_replace(const Tensor<T>&, int, int, Rng&); \
  template BlindSpotSample<T> sample_drop_inpaint(const Tensor<T>&, double, Rng&);     \
  template BlindSpotSample<T> draw_sample(const Tensor<T>&, const MaskScheme&, Rng&);  \
  template LossResult<T> masked_mse(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);

MGR_INSTANTIATE_BLINDSPOT(float)
MGR_INSTANTIATE_BLINDSPOT(double)

#undef MGR_INSTANTIATE_BLINDSPOT

}  // namespace mgr
