#include "mgrdn/mask_conv.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mgr {

namespace {

template <typename T>
void check_masked_input(const MaskedFeature<T>& x, int c_in, int c_mask,
                        const char* layer) {
  const Shape& f = x.feature.shape();
  const Shape& m = x.mask.shape();
  if (f.c != c_in) {
    throw std::invalid_argument(std::string(layer) + ": expected " +
                                std::to_string(c_in) + " feature channels, got " +
                                f.str());
  }
  if (m.n != f.n || m.h != f.h || m.w != f.w) {
    throw std::invalid_argument(std::string(layer) + ": mask " + m.str() +
                                " does not match feature " + f.str());
  }
  if (m.c != c_mask) {
    throw std::invalid_argument(std::string(layer) + ": expected " +
                                std::to_string(c_mask) + " mask channels, got " +
                                m.str());
  }
}

template <typename T>
Tensor<T> ones_mask(const Shape& like) {
  return Tensor<T>(Shape{like.n, 1, like.h, like.w}, T(1));
}

/// Number of in-bounds taps of a k x k window centred at each position.
template <typename T>
std::vector<T> window_counts(int h, int w, int k) {
  const int r = k / 2;
  std::vector<T> counts(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    const int ny = std::min(h - 1, y + r) - std::max(0, y - r) + 1;
    for (int x = 0; x < w; ++x) {
      const int nx = std::min(w - 1, x + r) - std::max(0, x - r) + 1;
      counts[static_cast<std::size_t>(y) * w + x] = static_cast<T>(ny * nx);
    }
  }
  return counts;
}

}  // namespace

std::string_view to_string(ConvKind kind) {
  switch (kind) {
    case ConvKind::vanilla: return "vanilla";
    case ConvKind::pconv: return "pconv";
    case ConvKind::lbam: return "lbam";
    case ConvKind::gated: return "gated";
    case ConvKind::mgr: return "mgr";
  }
  return "unknown";
}

ConvKind parse_conv_kind(std::string_view name) {
  for (ConvKind k : {ConvKind::vanilla, ConvKind::pconv, ConvKind::lbam,
                     ConvKind::gated, ConvKind::mgr}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown conv kind '" + std::string(name) +
                              "' (expected vanilla|pconv|lbam|gated|mgr)");
}

// ---------------------------------------------------------------------------
// Vanilla

template <typename T>
VanillaConv<T>::VanillaConv(const std::string& name, int c_in, int c_mask,
                            int c_out, int k, Rng& rng)
    : conv(name, c_in, c_out, k, rng), c_mask_(c_mask) {}

template <typename T>
MaskedFeature<T> VanillaConv<T>::forward(const MaskedFeature<T>& x,
                                         bool keep_cache) {
  check_masked_input(x, conv.c_in(), c_mask_, "VanillaConv");
  return {conv.forward(x.feature, keep_cache), x.mask};
}

template <typename T>
MaskedFeature<T> VanillaConv<T>::backward(const Tensor<T>& grad_feature,
                                          const Tensor<T>&) {
  return {conv.backward(grad_feature), Tensor<T>()};
}

template <typename T>
void VanillaConv<T>::append_params(std::vector<Param<T>*>& out) {
  conv.append_params(out);
}

// ---------------------------------------------------------------------------
// Partial convolution

template <typename T>
PartialConv<T>::PartialConv(const std::string& name, int c_in, int c_mask,
                            int c_out, int k, Rng& rng)
    : conv(name, c_in, c_out, k, rng),
      c_mask_(c_mask),
      ones_kernel_(Shape{c_out, c_mask, k, k}, T(1)) {
  if (c_mask != 1 && c_mask != c_in) {
    throw std::invalid_argument("PartialConv: mask must have 1 or c_in channels");
  }
}

template <typename T>
MaskedFeature<T> PartialConv<T>::forward(const MaskedFeature<T>& x,
                                         bool keep_cache) {
  const int c_in = conv.c_in();
  check_masked_input(x, c_in, c_mask_, "PartialConv");
  Tensor<T> mask_in = (c_mask_ == c_in) ? x.mask : repeat_channels(x.mask, c_in);
  Tensor<T> masked = mul(x.feature, mask_in);

  // Reference procedure: biased conv of X*M, window mask sum via a ones
  // kernel, then ratio/clamp/bias handling as separate elementwise steps.
  Tensor<T> out = conv.forward(masked, keep_cache);
  Tensor<T> window_sum = conv2d_forward<T>(x.mask, ones_kernel_, {});

  const Shape& s = out.shape();
  const std::size_t plane = s.plane();
  const std::size_t total = out.size();
  const auto counts = window_counts<T>(s.h, s.w, conv.kernel());
  const T mask_channels = static_cast<T>(c_mask_);
  const T eps = static_cast<T>(kEps);
  const T* b = conv.bias.value.data();

  Tensor<T> ratio(s);
  Tensor<T> update(s);
  for (std::size_t i = 0; i < total; ++i) ratio[i] = window_sum[i] + eps;
  for (std::size_t i = 0; i < total; ++i) {
    ratio[i] = mask_channels * counts[i % plane] / ratio[i];
  }
  for (std::size_t i = 0; i < total; ++i) {
    update[i] = std::clamp(window_sum[i], T(0), T(1));
  }
  for (std::size_t i = 0; i < total; ++i) ratio[i] *= update[i];
  for (std::size_t i = 0; i < total; ++i) out[i] -= b[(i / plane) % s.c];
  for (std::size_t i = 0; i < total; ++i) out[i] *= ratio[i];
  for (std::size_t i = 0; i < total; ++i) out[i] += b[(i / plane) % s.c];
  for (std::size_t i = 0; i < total; ++i) out[i] *= update[i];
  detail::count_elementwise(8 * total);

  if (keep_cache) {
    mask_in_ = std::move(mask_in);
    ratio_ = ratio;
    update_ = update;
    cached_ = true;
  } else {
    clear_cache();
  }
  return {std::move(out), std::move(update)};
}

template <typename T>
MaskedFeature<T> PartialConv<T>::backward(const Tensor<T>& grad_feature,
                                          const Tensor<T>&) {
  if (!cached_) throw std::logic_error("PartialConv::backward: no cached forward");
  require_same_shape(grad_feature, ratio_, "PartialConv::backward");
  // out = conv_nobias(X*M) * ratio + b * update
  Tensor<T> scaled(grad_feature.shape());
  for (std::size_t i = 0; i < scaled.size(); ++i) {
    scaled[i] = grad_feature[i] * ratio_[i];
  }
  std::vector<T> bias_before(conv.bias.grad.values().begin(),
                             conv.bias.grad.values().end());
  Tensor<T> grad_masked = conv.backward(scaled);
  // The conv routed sum(scaled) into the bias; the bias actually sees `update`.
  const Shape& s = grad_feature.shape();
  const std::size_t plane = s.plane();
  for (int o = 0; o < s.c; ++o) {
    T acc = T(0);
    for (int n = 0; n < s.n; ++n) {
      const T* g = grad_feature.plane(n, o);
      const T* u = update_.plane(n, o);
      for (std::size_t i = 0; i < plane; ++i) acc += g[i] * u[i];
    }
    conv.bias.grad[o] = bias_before[o] + acc;
  }
  Tensor<T> grad_in = mul_backward(grad_masked, grad_masked, mask_in_).first;
  clear_cache();
  return {std::move(grad_in), Tensor<T>()};
}

template <typename T>
void PartialConv<T>::append_params(std::vector<Param<T>*>& out) {
  conv.append_params(out);
}

template <typename T>
void PartialConv<T>::clear_cache() {
  conv.clear_cache();
  mask_in_ = Tensor<T>();
  ratio_ = Tensor<T>();
  update_ = Tensor<T>();
  cached_ = false;
}

// ---------------------------------------------------------------------------
// Asymmetric Gaussian activation

template <typename T>
AsymmetricGaussian<T>::AsymmetricGaussian(const std::string& prefix, int channels)
    : a(prefix + ".a", Tensor<T>(Shape{channels, 1, 1, 1}, T(1.1))),
      mu(prefix + ".mu", Tensor<T>(Shape{channels, 1, 1, 1}, T(2.0))),
      gamma_l(prefix + ".gamma_l", Tensor<T>(Shape{channels, 1, 1, 1}, T(1.0))),
      gamma_r(prefix + ".gamma_r", Tensor<T>(Shape{channels, 1, 1, 1}, T(1.0))) {}

template <typename T>
Tensor<T> AsymmetricGaussian<T>::forward(const Tensor<T>& x) const {
  const Shape& s = x.shape();
  if (s.c != a.value.n()) {
    throw std::invalid_argument("AsymmetricGaussian: channel mismatch");
  }
  Tensor<T> out(s);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const T av = a.value[c], m = mu.value[c];
      const T gl = gamma_l.value[c], gr = gamma_r.value[c];
      const T* src = x.plane(n, c);
      T* dst = out.plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) {
        const T d = src[i] - m;
        dst[i] = src[i] < m ? av * std::exp(-gl * d * d)
                            : T(1) + (av - T(1)) * std::exp(-gr * d * d);
      }
    }
  }
  detail::count_elementwise(out.size());
  return out;
}

template <typename T>
Tensor<T> AsymmetricGaussian<T>::backward(const Tensor<T>& grad,
                                          const Tensor<T>& x) {
  require_same_shape(grad, x, "AsymmetricGaussian::backward");
  const Shape& s = x.shape();
  Tensor<T> gx(s);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const T av = a.value[c], m = mu.value[c];
      const T gl = gamma_l.value[c], gr = gamma_r.value[c];
      const T* src = x.plane(n, c);
      const T* g = grad.plane(n, c);
      T* dst = gx.plane(n, c);
      T ga = 0, gm = 0, ggl = 0, ggr = 0;
      for (std::size_t i = 0; i < s.plane(); ++i) {
        const T d = src[i] - m;
        if (src[i] < m) {
          const T e = std::exp(-gl * d * d);
          const T dy_dx = av * e * (T(-2) * gl * d);
          dst[i] = g[i] * dy_dx;
          ga += g[i] * e;
          gm -= g[i] * dy_dx;
          ggl += g[i] * av * e * (-d * d);
        } else {
          const T e = std::exp(-gr * d * d);
          const T dy_dx = (av - T(1)) * e * (T(-2) * gr * d);
          dst[i] = g[i] * dy_dx;
          ga += g[i] * e;
          gm -= g[i] * dy_dx;
          ggr += g[i] * (av - T(1)) * e * (-d * d);
        }
      }
      a.grad[c] += ga;
      mu.grad[c] += gm;
      gamma_l.grad[c] += ggl;
      gamma_r.grad[c] += ggr;
    }
  }
  return gx;
}

template <typename T>
void AsymmetricGaussian<T>::append_params(std::vector<Param<T>*>& out) {
  out.push_back(&a);
  out.push_back(&mu);
  out.push_back(&gamma_l);
  out.push_back(&gamma_r);
}

template <typename T>
void AsymmetricGaussian<T>::constrain() {
  const T floor = static_cast<T>(kMinGaussianWidth);
  for (auto& v : gamma_l.value.values()) v = std::max(v, floor);
  for (auto& v : gamma_r.value.values()) v = std::max(v, floor);
}

// ---------------------------------------------------------------------------
// LBAM

template <typename T>
LbamConv<T>::LbamConv(const std::string& name, int c_in, int c_mask, int c_out,
                      int k, Rng& rng)
    : mask_conv(name + ".mask", c_mask, c_out, k, rng),
      image_conv(name + ".image", c_in, c_out, k, rng),
      output_conv(name + ".out", c_out, c_out, k, rng),
      gate(name + ".gate", c_out),
      update(name + ".update", c_out) {}

template <typename T>
MaskedFeature<T> LbamConv<T>::forward(const MaskedFeature<T>& x, bool keep_cache) {
  check_masked_input(x, image_conv.c_in(), mask_conv.c_in(), "LbamConv");
  Tensor<T> mask_pre = mask_conv.forward(x.mask, keep_cache);
  Tensor<T> image_pre = image_conv.forward(x.feature, keep_cache);
  Tensor<T> g = gate.forward(mask_pre);
  Tensor<T> gated = mul(image_pre, g);
  Tensor<T> out = output_conv.forward(gated, keep_cache);
  Tensor<T> new_mask = update.forward(mask_pre);
  if (keep_cache) {
    mask_pre_ = std::move(mask_pre);
    image_pre_ = std::move(image_pre);
    gate_ = std::move(g);
    cached_ = true;
  } else {
    clear_cache();
  }
  return {std::move(out), std::move(new_mask)};
}

template <typename T>
MaskedFeature<T> LbamConv<T>::backward(const Tensor<T>& grad_feature,
                                       const Tensor<T>& grad_mask) {
  if (!cached_) throw std::logic_error("LbamConv::backward: no cached forward");
  Tensor<T> grad_gated = output_conv.backward(grad_feature);
  auto [grad_image_pre, grad_gate] = mul_backward(grad_gated, image_pre_, gate_);
  Tensor<T> grad_mask_pre = gate.backward(grad_gate, mask_pre_);
  if (!grad_mask.empty()) accumulate(grad_mask_pre, update.backward(grad_mask, mask_pre_));
  Tensor<T> grad_in = image_conv.backward(grad_image_pre);
  Tensor<T> grad_mask_in = mask_conv.backward(grad_mask_pre, this->propagate_mask_grad);
  clear_cache();
  return {std::move(grad_in), std::move(grad_mask_in)};
}

template <typename T>
void LbamConv<T>::append_params(std::vector<Param<T>*>& out) {
  mask_conv.append_params(out);
  image_conv.append_params(out);
  output_conv.append_params(out);
  gate.append_params(out);
  update.append_params(out);
}

template <typename T>
void LbamConv<T>::clear_cache() {
  mask_conv.clear_cache();
  image_conv.clear_cache();
  output_conv.clear_cache();
  mask_pre_ = Tensor<T>();
  image_pre_ = Tensor<T>();
  gate_ = Tensor<T>();
  cached_ = false;
}

template <typename T>
void LbamConv<T>::constrain() {
  gate.constrain();
  update.constrain();
}

// ---------------------------------------------------------------------------
// Gated convolution

template <typename T>
GatedConv<T>::GatedConv(const std::string& name, int c_in, int c_mask, int c_out,
                        int k, Rng& rng, bool fuse_mask)
    : feature_conv(name + ".feature", c_in + (fuse_mask ? c_mask : 0), c_out, k, rng),
      gate_conv(name + ".gate", c_in + (fuse_mask ? c_mask : 0), c_out, k, rng),
      fuse_mask_(fuse_mask),
      c_in_(c_in) {}

template <typename T>
MaskedFeature<T> GatedConv<T>::forward(const MaskedFeature<T>& x, bool keep_cache) {
  const int c_mask = fuse_mask_ ? feature_conv.c_in() - c_in_ : x.mask.c();
  check_masked_input(x, c_in_, c_mask, "GatedConv");
  const Tensor<T> input = fuse_mask_ ? concat_channels(x.feature, x.mask) : x.feature;
  Tensor<T> pre = feature_conv.forward(input, keep_cache);
  Tensor<T> gate_pre = gate_conv.forward(input, keep_cache);
  Tensor<T> activated = leaky_relu(pre, static_cast<T>(kLeakySlope));
  Tensor<T> g = sigmoid(gate_pre);
  Tensor<T> out = mul(activated, g);
  if (keep_cache) {
    feature_pre_ = std::move(pre);
    activated_ = std::move(activated);
    gate_ = std::move(g);
    cached_ = true;
  } else {
    clear_cache();
  }
  return {std::move(out), ones_mask<T>(x.feature.shape())};
}

template <typename T>
MaskedFeature<T> GatedConv<T>::backward(const Tensor<T>& grad_feature,
                                        const Tensor<T>&) {
  if (!cached_) throw std::logic_error("GatedConv::backward: no cached forward");
  auto [grad_act, grad_gate] = mul_backward(grad_feature, activated_, gate_);
  Tensor<T> grad_pre = leaky_relu_backward(grad_act, feature_pre_, static_cast<T>(kLeakySlope));
  Tensor<T> grad_gate_pre = sigmoid_backward(grad_gate, gate_);
  Tensor<T> grad_in = feature_conv.backward(grad_pre);
  accumulate(grad_in, gate_conv.backward(grad_gate_pre));
  clear_cache();
  if (fuse_mask_) grad_in = split_channels(grad_in, c_in_).first;
  return {std::move(grad_in), Tensor<T>()};
}

template <typename T>
void GatedConv<T>::append_params(std::vector<Param<T>*>& out) {
  feature_conv.append_params(out);
  gate_conv.append_params(out);
}

template <typename T>
void GatedConv<T>::clear_cache() {
  feature_conv.clear_cache();
  gate_conv.clear_cache();
  feature_pre_ = Tensor<T>();
  activated_ = Tensor<T>();
  gate_ = Tensor<T>();
  cached_ = false;
}

// ---------------------------------------------------------------------------
// MGRConv

template <typename T>
MgrConv<T>::MgrConv(const std::string& name, int c_in, int c_mask, int c_out,
                    int k, Rng& rng)
    : image_conv(name + ".image", c_in, c_out, k, rng),
      mask_conv(name + ".mask", c_mask, c_out, k, rng) {}

template <typename T>
MaskedFeature<T> MgrConv<T>::forward(const MaskedFeature<T>& x, bool keep_cache) {
  check_masked_input(x, image_conv.c_in(), mask_conv.c_in(), "MgrConv");
  Tensor<T> image_pre = image_conv.forward(x.feature, keep_cache);
  Tensor<T> mask_pre = mask_conv.forward(x.mask, keep_cache);
  Tensor<T> activated = leaky_relu(image_pre, static_cast<T>(kLeakySlope));
  Tensor<T> g = sigmoid(mask_pre);
  Tensor<T> out = add(image_pre, mul(activated, g));
  Tensor<T> new_mask = pow_alpha(relu(mask_pre), static_cast<T>(kMaskUpdateExponent));
  if (keep_cache) {
    image_pre_ = std::move(image_pre);
    mask_pre_ = std::move(mask_pre);
    activated_ = std::move(activated);
    gate_ = std::move(g);
    cached_ = true;
  } else {
    clear_cache();
  }
  return {std::move(out), std::move(new_mask)};
}

template <typename T>
MaskedFeature<T> MgrConv<T>::backward(const Tensor<T>& grad_feature,
                                      const Tensor<T>& grad_mask) {
  if (!cached_) throw std::logic_error("MgrConv::backward: no cached forward");
  const T slope = static_cast<T>(kLeakySlope);
  auto [grad_act, grad_gate] = mul_backward(grad_feature, activated_, gate_);
  Tensor<T> grad_image_pre = grad_feature;
  accumulate(grad_image_pre, leaky_relu_backward(grad_act, image_pre_, slope));
  Tensor<T> grad_mask_pre = sigmoid_backward(grad_gate, gate_);
  if (!grad_mask.empty()) {
    Tensor<T> rectified = relu(mask_pre_);
    Tensor<T> grad_rect = pow_alpha_backward(
        grad_mask, rectified, static_cast<T>(kMaskUpdateExponent));
    accumulate(grad_mask_pre, relu_backward(grad_rect, mask_pre_));
  }
  Tensor<T> grad_in = image_conv.backward(grad_image_pre);
  Tensor<T> grad_mask_in = mask_conv.backward(grad_mask_pre, this->propagate_mask_grad);
  clear_cache();
  return {std::move(grad_in), std::move(grad_mask_in)};
}

template <typename T>
void MgrConv<T>::append_params(std::vector<Param<T>*>& out) {
  image_conv.append_params(out);
  mask_conv.append_params(out);
}

template <typename T>
void MgrConv<T>::clear_cache() {
  image_conv.clear_cache();
  mask_conv.clear_cache();
  image_pre_ = Tensor<T>();
  mask_pre_ = Tensor<T>();
  activated_ = Tensor<T>();
  gate_ = Tensor<T>();
  cached_ = false;
}

// ---------------------------------------------------------------------------

template <typename T>
std::unique_ptr<MaskConv<T>> make_mask_conv(ConvKind kind, const std::string& name,
                                            int c_in, int c_mask, int c_out, int k,
                                            Rng& rng, bool fuse_mask) {
  switch (kind) {
    case ConvKind::vanilla:
      return std::make_unique<VanillaConv<T>>(name, c_in, c_mask, c_out, k, rng);
    case ConvKind::pconv:
      return std::make_unique<PartialConv<T>>(name, c_in, c_mask, c_out, k, rng);
    case ConvKind::lbam:
      return std::make_unique<LbamConv<T>>(name, c_in, c_mask, c_out, k, rng);
    case ConvKind::gated:
      return std::make_unique<GatedConv<T>>(name, c_in, c_mask, c_out, k, rng, fuse_mask);
    case ConvKind::mgr:
      return std::make_unique<MgrConv<T>>(name, c_in, c_mask, c_out, k, rng);
  }
  throw std::invalid_argument("make_mask_conv: bad kind");
}

LayerCost layer_cost(ConvKind kind, int c_in, int c_out, int k, int h, int w,
                     int c_mask, bool fuse_mask) {
  if (c_mask < 0) c_mask = c_in;
  const std::uint64_t px = static_cast<std::uint64_t>(h) * w;
  const std::uint64_t taps = static_cast<std::uint64_t>(k) * k;
  const std::uint64_t out_elems = static_cast<std::uint64_t>(c_out) * px;
  auto conv = [&](int ci, int co) {
    return static_cast<std::uint64_t>(ci) * co * taps * px;
  };
  LayerCost cost;
  switch (kind) {
    case ConvKind::vanilla:
      cost.macs = conv(c_in, c_out);
      break;
    case ConvKind::pconv:
      // X*M, biased conv, ones-kernel mask conv, then eps-add, ratio,
      // clamp, ratio*update, -bias, *ratio, +bias, *update.
      cost.macs = conv(c_in, c_out) + conv(c_mask, c_out);
      cost.elementwise = static_cast<std::uint64_t>(c_in) * px + 8 * out_elems;
      break;
    case ConvKind::lbam:
      // W_M, W_I, W; gate activation, I^c * g, mask-update activation.
      cost.macs = conv(c_mask, c_out) + conv(c_in, c_out) + conv(c_out, c_out);
      cost.elementwise = 3 * out_elems;
      break;
    case ConvKind::gated: {
      const int ci = c_in + (fuse_mask ? c_mask : 0);
      // Two filter banks; leaky, sigmoid, product.
      cost.macs = 2 * conv(ci, c_out);
      cost.elementwise = 3 * out_elems;
      break;
    }
    case ConvKind::mgr:
      // W_I, W_M; leaky, sigmoid, product, residual sum, relu, power.
      cost.macs = conv(c_in, c_out) + conv(c_mask, c_out);
      cost.elementwise = 6 * out_elems;
      break;
  }
  return cost;
}

#define MGR_INSTANTIATE_MASK_CONV(T)                                               \
  template class VanillaConv<T>;                                                   \
  template class PartialConv<T>;                                                   \
  template struct AsymmetricGaussian<T>;                                           \
  template class LbamConv<T>;                                                      \
  template class GatedConv<T>;                                                     \
  template class MgrConv<T>;                                                       \
  template std::unique_ptr<MaskConv<T>> make_mask_conv<T>(                         \
      ConvKind, const std::string&, int, int, int, int, Rng&, bool);

MGR_INSTANTIATE_MASK_CONV(float)
MGR_INSTANTIATE_MASK_CONV(double)

#undef MGR_INSTANTIATE_MASK_CONV

}  // namespace mgr
