#include "mgrdn/unet.hpp"

#include <stdexcept>

namespace mgr {

void NetConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("NetConfig: " + msg); };
  if (in_channels != 1 && in_channels != 3) fail("in_channels must be 1 or 3");
  if (depth < 1) fail("depth must be >= 1");
  if (depth > 12) fail("depth must be <= 12");
  if (enc_channels < 1 || dec_channels < 1) fail("channel counts must be positive");
  if (head_channels_1 < 1 || head_channels_2 < 1) fail("head channel counts must be positive");
  if (kernel < 1 || kernel % 2 == 0) fail("kernel must be odd");
  if (!(decoder_dropout >= 0.0 && decoder_dropout < 1.0)) fail("decoder_dropout must lie in [0,1)");
}

template <typename T>
Network<T>::Network(const NetConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  const int k = config_.kernel;
  const int enc = config_.enc_channels;
  const int dec = config_.dec_channels;

  int c_in = config_.in_channels;
  int c_mask = 1;
  auto add_encoder = [&](const std::string& name, int c_out, bool fuse) {
    EncoderLayer l;
    l.conv = make_mask_conv<T>(config_.conv_kind, name, c_in, c_mask, c_out, k, rng, fuse);
    l.activate = l.conv->linear_output();
    l.c_in = c_in;
    l.c_mask = c_mask;
    l.c_out = c_out;
    l.fuse = fuse;
    c_in = c_out;
    c_mask = l.conv->mask_channels_out();
    encoder_.push_back(std::move(l));
  };
  for (int level = 0; level < config_.depth; ++level) {
    const std::string p = "enc" + std::to_string(level);
    add_encoder(p + "a", enc, level == 0);
    add_encoder(p + "b", enc, false);
  }
  add_encoder("bottleneck", enc, false);
  // The input mask is data, not a learnable quantity.
  encoder_.front().conv->propagate_mask_grad = false;

  auto plain = [&](const std::string& name, int ci, int co, int kk, bool act, bool drop) {
    PlainLayer l;
    l.conv = Conv2d<T>(name, ci, co, kk, rng);
    l.activate = act;
    l.dropout = drop;
    return l;
  };
  const bool drop = config_.decoder_dropout > 0.0;
  int c_up = enc;
  for (int level = config_.depth - 1; level >= 0; --level) {
    const std::string p = "dec" + std::to_string(level);
    decoder_.push_back(plain(p + "a", c_up + enc, dec, k, true, drop));
    decoder_.push_back(plain(p + "b", dec, dec, k, true, drop));
    c_up = dec;
  }
  head_.push_back(plain("head0", dec, config_.head_channels_1, 3, true, drop));
  head_.push_back(plain("head1", config_.head_channels_1, config_.head_channels_2, 3, true, drop));
  head_.push_back(plain("head2", config_.head_channels_2, config_.in_channels, 1, false, false));
}

template <typename T>
MaskedFeature<T> Network<T>::encoder_step(EncoderLayer& l, const MaskedFeature<T>& x, bool keep) {
  MaskedFeature<T> out = l.conv->forward(x, keep);
  if (l.activate) {
    Tensor<T> act = leaky_relu(out.feature, static_cast<T>(kLeakySlope));
    if (keep) l.pre = std::move(out.feature);
    out.feature = std::move(act);
  }
  return out;
}

template <typename T>
MaskedFeature<T> Network<T>::encoder_back(EncoderLayer& l, Tensor<T> grad_feature,
                                          const Tensor<T>& grad_mask) {
  if (l.activate) {
    grad_feature = leaky_relu_backward(grad_feature, l.pre, static_cast<T>(kLeakySlope));
    l.pre = Tensor<T>();
  }
  return l.conv->backward(grad_feature, grad_mask);
}

template <typename T>
Tensor<T> Network<T>::plain_step(PlainLayer& l, const Tensor<T>& x, bool training, Rng& rng,
                                 bool keep) {
  Tensor<T> y = l.conv.forward(x, keep);
  if (!l.activate) return y;
  Tensor<T> act = leaky_relu(y, static_cast<T>(kLeakySlope));
  if (keep) l.pre = std::move(y);
  if (!l.dropout) return act;
  auto d = dropout(act, config_.decoder_dropout, rng, training);
  if (keep) l.drop_mask = std::move(d.mask);
  return std::move(d.output);
}

template <typename T>
Tensor<T> Network<T>::plain_back(PlainLayer& l, Tensor<T> grad) {
  if (l.activate) {
    if (l.dropout) grad = dropout_backward(grad, l.drop_mask);
    grad = leaky_relu_backward(grad, l.pre, static_cast<T>(kLeakySlope));
    l.pre = Tensor<T>();
    l.drop_mask = Tensor<T>();
  }
  return l.conv.backward(grad);
}

template <typename T>
Tensor<T> Network<T>::forward(const MaskedFeature<T>& input, bool training, Rng& rng,
                              bool keep_cache) {
  const Shape& s = input.feature.shape();
  const int m = config_.size_multiple();
  if (s.c != config_.in_channels) {
    throw std::invalid_argument("Network::forward: expected " + std::to_string(config_.in_channels) +
                                " channels, got " + s.str());
  }
  if (s.h % m != 0 || s.w % m != 0) {
    const int ph = (m - s.h % m) % m;
    const int pw = (m - s.w % m) % m;
    throw std::invalid_argument("Network::forward: input " + std::to_string(s.h) + "x" +
                                std::to_string(s.w) + " is not divisible by " + std::to_string(m) +
                                " (depth " + std::to_string(config_.depth) + "); pad by " +
                                std::to_string(ph) + " rows and " + std::to_string(pw) + " columns");
  }
  if (input.mask.shape() != Shape{s.n, 1, s.h, s.w}) {
    throw std::invalid_argument("Network::forward: mask must be " + Shape{s.n, 1, s.h, s.w}.str() +
                                ", got " + input.mask.shape().str());
  }
  clear_cache();
  const int depth = config_.depth;
  skips_.assign(depth, Tensor<T>());
  pool_feature_idx_.assign(depth, {});
  pool_mask_idx_.assign(depth, {});
  pool_feature_shape_.assign(depth, Shape{});
  pool_mask_shape_.assign(depth, Shape{});
  upsampled_channels_.assign(depth, 0);

  MaskedFeature<T> cur = input;
  for (int level = 0; level < depth; ++level) {
    cur = encoder_step(encoder_[2 * level], cur, keep_cache);
    cur = encoder_step(encoder_[2 * level + 1], cur, keep_cache);
    auto pf = maxpool2(cur.feature);
    auto pm = maxpool2(cur.mask);
    if (keep_cache) {
      pool_feature_idx_[level] = std::move(pf.argmax);
      pool_mask_idx_[level] = std::move(pm.argmax);
      pool_feature_shape_[level] = cur.feature.shape();
      pool_mask_shape_[level] = cur.mask.shape();
    }
    skips_[level] = std::move(cur.feature);
    cur = {std::move(pf.output), std::move(pm.output)};
  }
  encoder_mask_ = cur.mask;
  Tensor<T> f = encoder_step(encoder_.back(), cur, keep_cache).feature;

  std::size_t d = 0;
  for (int level = depth - 1; level >= 0; --level) {
    Tensor<T> up = upsample_nearest2(f);
    upsampled_channels_[level] = up.c();
    f = concat_channels(up, skips_[level]);
    f = plain_step(decoder_[d], f, training, rng, keep_cache);
    f = plain_step(decoder_[d + 1], f, training, rng, keep_cache);
    d += 2;
  }
  for (auto& h : head_) f = plain_step(h, f, training, rng, keep_cache);

  if (keep_cache) {
    cached_ = true;
  } else {
    skips_.clear();
  }
  return f;
}

template <typename T>
void Network<T>::backward(const Tensor<T>& grad_out) {
  if (!cached_) throw std::logic_error("Network::backward: no cached forward");
  const int depth = config_.depth;
  Tensor<T> g = grad_out;
  for (auto it = head_.rbegin(); it != head_.rend(); ++it) g = plain_back(*it, std::move(g));

  std::vector<Tensor<T>> skip_grads(depth);
  std::size_t d = decoder_.size();
  for (int level = 0; level < depth; ++level) {
    g = plain_back(decoder_[d - 1], std::move(g));
    g = plain_back(decoder_[d - 2], std::move(g));
    d -= 2;
    auto [g_up, g_skip] = split_channels(g, upsampled_channels_[level]);
    skip_grads[level] = std::move(g_skip);
    g = upsample_nearest2_backward(g_up);
  }

  MaskedFeature<T> grads = encoder_back(encoder_.back(), std::move(g), Tensor<T>());
  for (int level = depth - 1; level >= 0; --level) {
    Tensor<T> gf = maxpool2_backward(grads.feature, pool_feature_idx_[level], pool_feature_shape_[level]);
    accumulate(gf, skip_grads[level]);
    Tensor<T> gm;
    if (!grads.mask.empty()) {
      gm = maxpool2_backward(grads.mask, pool_mask_idx_[level], pool_mask_shape_[level]);
    }
    grads = encoder_back(encoder_[2 * level + 1], std::move(gf), gm);
    grads = encoder_back(encoder_[2 * level], std::move(grads.feature), grads.mask);
  }
  clear_cache();
}

template <typename T>
std::vector<Param<T>*> Network<T>::params() {
  std::vector<Param<T>*> out;
  for (auto& l : encoder_) l.conv->append_params(out);
  for (auto& l : decoder_) l.conv.append_params(out);
  for (auto& l : head_) l.conv.append_params(out);
  return out;
}

template <typename T>
std::size_t Network<T>::param_count() const {
  std::size_t n = 0;
  for (auto* p : const_cast<Network*>(this)->params()) n += p->value.size();
  return n;
}

template <typename T>
void Network<T>::zero_grad() {
  for (auto* p : params()) p->zero_grad();
}

template <typename T>
void Network<T>::constrain() {
  for (auto& l : encoder_) l.conv->constrain();
}

template <typename T>
void Network<T>::clear_cache() {
  for (auto& l : encoder_) {
    l.conv->clear_cache();
    l.pre = Tensor<T>();
  }
  for (auto* group : {&decoder_, &head_}) {
    for (auto& l : *group) {
      l.conv.clear_cache();
      l.pre = Tensor<T>();
      l.drop_mask = Tensor<T>();
    }
  }
  skips_.clear();
  cached_ = false;
}

template <typename T>
std::vector<CostRow> Network<T>::cost_table(int h, int w) const {
  std::vector<CostRow> rows;
  const int depth = config_.depth;
  auto elementwise = [](std::uint64_t n) { LayerCost c; c.elementwise = n; return c; };
  auto px = [](int a, int b) { return static_cast<std::uint64_t>(a) * b; };

  auto encoder_row = [&](const EncoderLayer& l, const std::string& name, int hh, int ww) {
    CostRow r{name, std::string(to_string(config_.conv_kind)), l.c_in, l.c_out, config_.kernel, hh, ww,
              layer_cost(config_.conv_kind, l.c_in, l.c_out, config_.kernel, hh, ww, l.c_mask, l.fuse)};
    if (l.activate) r.cost.elementwise += l.c_out * px(hh, ww);
    rows.push_back(r);
  };
  auto plain_row = [&](const PlainLayer& l, const std::string& name, int hh, int ww) {
    const int k = l.conv.kernel();
    CostRow r{name, "conv", l.conv.c_in(), l.conv.c_out(), k, hh, ww,
              layer_cost(ConvKind::vanilla, l.conv.c_in(), l.conv.c_out(), k, hh, ww)};
    if (l.activate) r.cost.elementwise += l.conv.c_out() * px(hh, ww);
    rows.push_back(r);
  };

  int hh = h, ww = w;
  for (int level = 0; level < depth; ++level) {
    const std::string p = "enc" + std::to_string(level);
    encoder_row(encoder_[2 * level], p + "a", hh, ww);
    encoder_row(encoder_[2 * level + 1], p + "b", hh, ww);
    hh /= 2;
    ww /= 2;
    const int mask_c = encoder_[2 * level + 1].conv->mask_channels_out();
    rows.push_back({p + ".pool", "maxpool2", config_.enc_channels + mask_c, config_.enc_channels + mask_c, 2, hh,
                    ww, elementwise((config_.enc_channels + mask_c) * px(hh, ww))});
  }
  encoder_row(encoder_.back(), "bottleneck", hh, ww);
  std::size_t d = 0;
  for (int level = depth - 1; level >= 0; --level) {
    const std::string p = "dec" + std::to_string(level);
    const int c_up = decoder_[d].conv.c_in() - config_.enc_channels;
    hh *= 2;
    ww *= 2;
    rows.push_back({p + ".up", "upsample2", c_up, c_up, 2, hh, ww, elementwise(c_up * px(hh, ww))});
    plain_row(decoder_[d], p + "a", hh, ww);
    plain_row(decoder_[d + 1], p + "b", hh, ww);
    d += 2;
  }
  for (std::size_t i = 0; i < head_.size(); ++i) plain_row(head_[i], "head" + std::to_string(i), hh, ww);
  return rows;
}

std::size_t param_count(const NetConfig& config) {
  Rng rng(0);
  return Network<float>(config, rng).param_count();
}

template class Network<float>;
template class Network<double>;

}  // namespace mgr
