#pragma once

#include <memory>
#include <string>
#include <vector>

#include "mgrdn/mask_conv.hpp"

namespace mgr {

struct NetConfig {
  int in_channels = 3;
  int depth = 4;
  int enc_channels = 48;
  int dec_channels = 96;
  ConvKind conv_kind = ConvKind::mgr;
  double decoder_dropout = 0.0;
  int kernel = 3;
  int head_channels_1 = 64;
  int head_channels_2 = 32;

  /// Throws std::invalid_argument naming the first violated constraint.
  void validate() const;
  /// Multiple that input height and width must be divisible by.
  int size_multiple() const { return 1 << depth; }
};

/// One row of the per-layer cost table.
struct CostRow {
  std::string name;
  std::string op;
  int c_in = 0;
  int c_out = 0;
  int k = 0;
  int h = 0;
  int w = 0;
  LayerCost cost;
};

/// U-Net with a mask-aware encoder and a plain decoder.
///
///   encoder  depth x [mask-conv, mask-conv, maxpool2]   (features and masks pooled)
///   bottleneck         mask-conv                         (output mask unused)
///   decoder  depth x [upsample2, concat skip, conv, conv] (+ dropout after each conv)
///   head     conv3 -> h1, conv3 -> h2, conv1 -> in_channels (linear)
///
/// Leaky-ReLU(0.1) follows every decoder and head conv except the last, and
/// every encoder layer whose output is linear.
template <typename T>
class Network {
 public:
  Network(const NetConfig& config, Rng& rng);

  const NetConfig& config() const { return config_; }

  /// Returns the prediction for `input` (feature (n,c,h,w), mask (n,1,h,w)).
  /// `training` enables decoder dropout; caches are kept when `keep_cache`.
  Tensor<T> forward(const MaskedFeature<T>& input, bool training, Rng& rng,
                    bool keep_cache);
  Tensor<T> forward(const MaskedFeature<T>& input, bool training, Rng& rng) {
    return forward(input, training, rng, training);
  }

  /// Accumulates parameter gradients for the cached forward and clears the
  /// cache. Throws std::logic_error without one.
  void backward(const Tensor<T>& grad_out);

  std::vector<Param<T>*> params();
  std::size_t param_count() const;
  void zero_grad();
  /// Parameter projections applied after each optimizer step.
  void constrain();
  void clear_cache();
  bool has_cache() const { return cached_; }

  /// Mask entering the bottleneck on the last forward pass.
  const Tensor<T>& encoder_mask() const { return encoder_mask_; }

  /// Forward cost per layer for an h x w input at batch 1.
  std::vector<CostRow> cost_table(int h, int w) const;

  MaskConv<T>& encoder_layer(std::size_t i) { return *encoder_[i].conv; }
  std::size_t encoder_layer_count() const { return encoder_.size(); }

 private:
  struct EncoderLayer {
    std::unique_ptr<MaskConv<T>> conv;
    bool activate = false;
    int c_in = 0, c_mask = 0, c_out = 0;
    bool fuse = false;
    Tensor<T> pre;
  };
  struct PlainLayer {
    Conv2d<T> conv;
    bool activate = true;
    bool dropout = false;
    Tensor<T> pre;
    Tensor<T> drop_mask;
  };

  MaskedFeature<T> encoder_step(EncoderLayer& l, const MaskedFeature<T>& x,
                                bool keep);
  MaskedFeature<T> encoder_back(EncoderLayer& l, Tensor<T> grad_feature,
                                const Tensor<T>& grad_mask);
  Tensor<T> plain_step(PlainLayer& l, const Tensor<T>& x, bool training,
                       Rng& rng, bool keep);
  Tensor<T> plain_back(PlainLayer& l, Tensor<T> grad);

  NetConfig config_;
  std::vector<EncoderLayer> encoder_;  // 2*depth + bottleneck
  std::vector<PlainLayer> decoder_;    // 2*depth
  std::vector<PlainLayer> head_;       // 3

  bool cached_ = false;
  std::vector<Tensor<T>> skips_;
  std::vector<std::vector<std::uint32_t>> pool_feature_idx_;
  std::vector<std::vector<std::uint32_t>> pool_mask_idx_;
  std::vector<Shape> pool_feature_shape_;
  std::vector<Shape> pool_mask_shape_;
  std::vector<int> upsampled_channels_;
  Tensor<T> encoder_mask_;
};

/// Parameter count implied by a config without building the network.
std::size_t param_count(const NetConfig& config);

}  // namespace mgr
