#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "mgrdn/conv_layer.hpp"

namespace mgr {

enum class ConvKind { vanilla, pconv, lbam, gated, mgr };

std::string_view to_string(ConvKind kind);
/// Accepts "vanilla", "pconv", "lbam", "gated", "mgr".
ConvKind parse_conv_kind(std::string_view name);

/// A feature map travelling with its mask. The mask has 1 channel at the
/// network input and the producing layer's channel count afterwards.
template <typename T>
struct MaskedFeature {
  Tensor<T> feature;
  Tensor<T> mask;
};

/// Slope of the leaky-ReLU used as the feature activation inside the gated
/// layers and between linear layers of the network.
inline constexpr double kLeakySlope = 0.1;
/// Exponent of the residual layer's mask update (ReLU(.))^alpha.
inline constexpr double kMaskUpdateExponent = 0.8;
/// Lower bound for the attention-map widths.
inline constexpr double kMinGaussianWidth = 1e-4;

/// Common interface of the mask-aware convolutions.
template <typename T>
class MaskConv {
 public:
  virtual ~MaskConv() = default;

  virtual ConvKind kind() const = 0;
  virtual MaskedFeature<T> forward(const MaskedFeature<T>& x,
                                   bool keep_cache) = 0;
  /// `grad_mask` may be empty when the output mask feeds nothing. Returns the
  /// gradients w.r.t. the input feature and input mask; the mask gradient is
  /// empty unless the layer routes one and `propagate_mask_grad` is set.
  virtual MaskedFeature<T> backward(const Tensor<T>& grad_feature,
                                    const Tensor<T>& grad_mask) = 0;
  virtual void append_params(std::vector<Param<T>*>& out) = 0;
  virtual void clear_cache() = 0;
  /// Projection applied after each optimizer step.
  virtual void constrain() {}

  virtual int mask_channels_out() const = 0;
  /// True when the layer's output feature is affine in its input and the
  /// network should follow it with an activation.
  virtual bool linear_output() const = 0;

  bool propagate_mask_grad = true;
};

/// Builds a layer. `c_mask` is the channel count of the incoming mask.
/// `fuse_mask` only affects the gated layer: the mask is concatenated to the
/// input channels (first encoder layer).
template <typename T>
std::unique_ptr<MaskConv<T>> make_mask_conv(ConvKind kind,
                                            const std::string& name, int c_in,
                                            int c_mask, int c_out, int k,
                                            Rng& rng, bool fuse_mask = false);

// Concrete layers. Exposed so tests can reach their parameters directly.

template <typename T>
class VanillaConv final : public MaskConv<T> {
 public:
  VanillaConv(const std::string& name, int c_in, int c_mask, int c_out, int k,
              Rng& rng);
  ConvKind kind() const override { return ConvKind::vanilla; }
  MaskedFeature<T> forward(const MaskedFeature<T>& x, bool keep_cache) override;
  MaskedFeature<T> backward(const Tensor<T>& grad_feature,
                            const Tensor<T>& grad_mask) override;
  void append_params(std::vector<Param<T>*>& out) override;
  void clear_cache() override { conv.clear_cache(); }
  int mask_channels_out() const override { return c_mask_; }
  bool linear_output() const override { return true; }

  Conv2d<T> conv;

 private:
  int c_mask_;
};

/// Partial convolution in the reference formulation: convolve X*M, rescale by
/// the in-bounds window size over the window mask sum, binarize the mask.
/// The mask update runs as a ones-kernel convolution over all mask channels,
/// so the updated mask has c_out identical channels.
template <typename T>
class PartialConv final : public MaskConv<T> {
 public:
  PartialConv(const std::string& name, int c_in, int c_mask, int c_out, int k,
              Rng& rng);
  ConvKind kind() const override { return ConvKind::pconv; }
  MaskedFeature<T> forward(const MaskedFeature<T>& x, bool keep_cache) override;
  MaskedFeature<T> backward(const Tensor<T>& grad_feature,
                            const Tensor<T>& grad_mask) override;
  void append_params(std::vector<Param<T>*>& out) override;
  void clear_cache() override;
  int mask_channels_out() const override { return conv.c_out(); }
  bool linear_output() const override { return true; }

  static constexpr double kEps = 1e-8;

  Conv2d<T> conv;

 private:
  int c_mask_;
  Tensor<T> ones_kernel_;
  Tensor<T> mask_in_;  // input mask expanded to c_in channels
  Tensor<T> ratio_;    // renormalization ratio, already zero where invalid
  Tensor<T> update_;   // binary updated mask
  bool cached_ = false;
};

/// Per-channel parameters of the asymmetric Gaussian activation.
template <typename T>
struct AsymmetricGaussian {
  Param<T> a, mu, gamma_l, gamma_r;

  AsymmetricGaussian() = default;
  AsymmetricGaussian(const std::string& prefix, int channels);

  Tensor<T> forward(const Tensor<T>& x) const;
  /// Accumulates parameter gradients and returns d/dx.
  Tensor<T> backward(const Tensor<T>& grad, const Tensor<T>& x);
  void append_params(std::vector<Param<T>*>& out);
  void constrain();
};

/// Learnable attention maps (forward layer): gated feature = I^c * g_A(M^c),
/// output = conv(W, gated), mask update = a second asymmetric Gaussian.
template <typename T>
class LbamConv final : public MaskConv<T> {
 public:
  LbamConv(const std::string& name, int c_in, int c_mask, int c_out, int k,
           Rng& rng);
  ConvKind kind() const override { return ConvKind::lbam; }
  MaskedFeature<T> forward(const MaskedFeature<T>& x, bool keep_cache) override;
  MaskedFeature<T> backward(const Tensor<T>& grad_feature,
                            const Tensor<T>& grad_mask) override;
  void append_params(std::vector<Param<T>*>& out) override;
  void clear_cache() override;
  void constrain() override;
  int mask_channels_out() const override { return image_conv.c_out(); }
  bool linear_output() const override { return true; }

  Conv2d<T> mask_conv;
  Conv2d<T> image_conv;
  Conv2d<T> output_conv;
  AsymmetricGaussian<T> gate;
  AsymmetricGaussian<T> update;

 private:
  Tensor<T> mask_pre_;   // M^c
  Tensor<T> image_pre_;  // I^c
  Tensor<T> gate_;       // g_A(M^c)
  bool cached_ = false;
};

/// Gated convolution: leaky(conv_f(x)) * sigmoid(conv_g(x)). The output mask
/// is a single all-ones channel.
template <typename T>
class GatedConv final : public MaskConv<T> {
 public:
  GatedConv(const std::string& name, int c_in, int c_mask, int c_out, int k,
            Rng& rng, bool fuse_mask);
  ConvKind kind() const override { return ConvKind::gated; }
  MaskedFeature<T> forward(const MaskedFeature<T>& x, bool keep_cache) override;
  MaskedFeature<T> backward(const Tensor<T>& grad_feature,
                            const Tensor<T>& grad_mask) override;
  void append_params(std::vector<Param<T>*>& out) override;
  void clear_cache() override;
  int mask_channels_out() const override { return 1; }
  bool linear_output() const override { return false; }

  Conv2d<T> feature_conv;
  Conv2d<T> gate_conv;

 private:
  bool fuse_mask_;
  int c_in_;
  Tensor<T> feature_pre_;
  Tensor<T> activated_;
  Tensor<T> gate_;
  bool cached_ = false;
};

/// Mask guided residual convolution:
///   I' = I^c + leaky(I^c) * sigmoid(M^c),  M' = relu(M^c)^0.8
/// with I^c = conv(W_I, I), M^c = conv(W_M, M). M' is not clamped above.
template <typename T>
class MgrConv final : public MaskConv<T> {
 public:
  MgrConv(const std::string& name, int c_in, int c_mask, int c_out, int k,
          Rng& rng);
  ConvKind kind() const override { return ConvKind::mgr; }
  MaskedFeature<T> forward(const MaskedFeature<T>& x, bool keep_cache) override;
  MaskedFeature<T> backward(const Tensor<T>& grad_feature,
                            const Tensor<T>& grad_mask) override;
  void append_params(std::vector<Param<T>*>& out) override;
  void clear_cache() override;
  int mask_channels_out() const override { return image_conv.c_out(); }
  bool linear_output() const override { return false; }

  Conv2d<T> image_conv;
  Conv2d<T> mask_conv;

 private:
  Tensor<T> image_pre_;
  Tensor<T> mask_pre_;
  Tensor<T> activated_;
  Tensor<T> gate_;
  bool cached_ = false;
};

// ---------------------------------------------------------------------------
// Cost model.

struct LayerCost {
  std::uint64_t macs = 0;
  std::uint64_t elementwise = 0;
  std::uint64_t total() const { return macs + elementwise; }
};

/// Forward-pass operation count of one layer on an h x w input: convolution
/// multiply-accumulates plus one per output element for every elementwise
/// step the layer executes (matches OpCountScope). `c_mask` < 0 means the
/// mask has c_in channels.
LayerCost layer_cost(ConvKind kind, int c_in, int c_out, int k, int h, int w,
                     int c_mask = -1, bool fuse_mask = false);

}  // namespace mgr
