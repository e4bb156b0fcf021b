#include "mgrdn/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

namespace mgr {

namespace {

thread_local OpCountScope* g_active_scope = nullptr;
thread_local OpTally* g_active_tally = nullptr;

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
std::vector<T>& scratch() {
  thread_local std::vector<T> buffer;
  return buffer;
}

int resolve_padding(int k, int padding) { return padding < 0 ? k / 2 : padding; }

template <typename T>
void im2col(const T* img, int c, int h, int w, int k, int stride, int pad,
            int ho, int wo, T* col) {
  const std::size_t plane_out = static_cast<std::size_t>(ho) * wo;
  for (int ci = 0; ci < c; ++ci) {
    const T* src = img + static_cast<std::size_t>(ci) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* dst = col + static_cast<std::size_t>((ci * k + ky) * k + kx) * plane_out;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          T* drow = dst + static_cast<std::size_t>(oy) * wo;
          if (iy < 0 || iy >= h) {
            std::fill(drow, drow + wo, T(0));
            continue;
          }
          const T* srow = src + static_cast<std::size_t>(iy) * w;
          if (stride == 1) {
            const int shift = kx - pad;  // ix = ox + shift
            const int lo = std::clamp(-shift, 0, wo);
            const int hi = std::clamp(w - shift, lo, wo);
            std::fill(drow, drow + lo, T(0));
            std::copy(srow + lo + shift, srow + hi + shift, drow + lo);
            std::fill(drow + hi, drow + wo, T(0));
          } else {
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * stride - pad + kx;
              drow[ox] = (ix >= 0 && ix < w) ? srow[ix] : T(0);
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, int c, int h, int w, int k, int stride, int pad,
            int ho, int wo, T* img) {
  const std::size_t plane_out = static_cast<std::size_t>(ho) * wo;
  for (int ci = 0; ci < c; ++ci) {
    T* dst = img + static_cast<std::size_t>(ci) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* src = col + static_cast<std::size_t>((ci * k + ky) * k + kx) * plane_out;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          const T* srow = src + static_cast<std::size_t>(oy) * wo;
          T* drow = dst + static_cast<std::size_t>(iy) * w;
          if (stride == 1) {
            const int shift = kx - pad;
            const int lo = std::clamp(-shift, 0, wo);
            const int hi = std::clamp(w - shift, lo, wo);
            for (int ox = lo; ox < hi; ++ox) drow[ox + shift] += srow[ox];
          } else {
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * stride - pad + kx;
              if (ix >= 0 && ix < w) drow[ix] += srow[ox];
            }
          }
        }
      }
    }
  }
}

void check_conv_shapes(const Shape& in, const Shape& wt, int stride) {
  if (wt.h != wt.w || wt.h % 2 == 0) {
    throw std::invalid_argument("conv2d: kernel must be square with odd size, got " +
                                wt.str());
  }
  if (in.c != wt.c) {
    throw std::invalid_argument("conv2d: input has " + std::to_string(in.c) +
                                " channels but weights expect " +
                                std::to_string(wt.c));
  }
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
}

template <typename T, typename F>
Tensor<T> map_unary(const Tensor<T>& a, F f) {
  Tensor<T> out(a.shape());
  const T* src = a.data();
  T* dst = out.data();
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) dst[i] = f(src[i]);
  detail::count_elementwise(n);
  return out;
}

template <typename T, typename F>
Tensor<T> map_binary(const Tensor<T>& a, const Tensor<T>& b, const char* op,
                     F f) {
  require_same_shape(a, b, op);
  Tensor<T> out(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* dst = out.data();
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) dst[i] = f(pa[i], pb[i]);
  return out;
}

}  // namespace

OpCountScope::OpCountScope() : previous_(g_active_scope) {
  g_active_scope = this;
  g_active_tally = &tally_;
}

OpCountScope::~OpCountScope() {
  g_active_scope = previous_;
  g_active_tally = previous_ ? &previous_->tally_ : nullptr;
}

namespace detail {
void count_macs(std::uint64_t n) {
  if (g_active_tally) g_active_tally->macs += n;
}
void count_elementwise(std::uint64_t n) {
  if (g_active_tally) g_active_tally->elementwise += n;
}
}  // namespace detail

int conv_output_size(int in, int k, int stride, int padding) {
  return (in + 2 * padding - k) / stride + 1;
}

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weights,
                         std::span<const T> bias, int stride, int padding) {
  const Shape& in = input.shape();
  const Shape& wt = weights.shape();
  check_conv_shapes(in, wt, stride);
  const int k = wt.h;
  const int pad = resolve_padding(k, padding);
  const int co = wt.n;
  if (!bias.empty() && static_cast<int>(bias.size()) != co) {
    throw std::invalid_argument("conv2d: bias length does not match c_out");
  }
  const int ho = conv_output_size(in.h, k, stride, pad);
  const int wo = conv_output_size(in.w, k, stride, pad);
  if (ho <= 0 || wo <= 0) {
    throw std::invalid_argument("conv2d: empty output for input " + in.str());
  }
  Tensor<T> out(Shape{in.n, co, ho, wo});
  const int rows = in.c * k * k;
  const std::size_t cols = static_cast<std::size_t>(ho) * wo;
  const bool direct = (k == 1 && stride == 1 && pad == 0);
  auto& col = scratch<T>();
  if (!direct) col.resize(static_cast<std::size_t>(rows) * cols);

  Eigen::Map<const RowMat<T>> wmat(weights.data(), co, rows);
  for (int n = 0; n < in.n; ++n) {
    const T* src = input.plane(n, 0);
    if (!direct) {
      im2col(src, in.c, in.h, in.w, k, stride, pad, ho, wo, col.data());
      src = col.data();
    }
    Eigen::Map<const RowMat<T>> cmat(src, rows, static_cast<Eigen::Index>(cols));
    Eigen::Map<RowMat<T>> omat(out.plane(n, 0), co, static_cast<Eigen::Index>(cols));
    omat.noalias() = wmat * cmat;
    if (!bias.empty()) {
      for (int o = 0; o < co; ++o) omat.row(o).array() += bias[o];
    }
  }
  detail::count_macs(static_cast<std::uint64_t>(in.n) * co * rows * cols);
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& grad_out, const Tensor<T>& input,
                             const Tensor<T>& weights, int stride, int padding,
                             bool want_input_grad) {
  const Shape& in = input.shape();
  const Shape& wt = weights.shape();
  check_conv_shapes(in, wt, stride);
  const int k = wt.h;
  const int pad = resolve_padding(k, padding);
  const int co = wt.n;
  const int ho = conv_output_size(in.h, k, stride, pad);
  const int wo = conv_output_size(in.w, k, stride, pad);
  if (grad_out.shape() != Shape{in.n, co, ho, wo}) {
    throw std::invalid_argument("conv2d_backward: grad shape " +
                                grad_out.shape().str() +
                                " inconsistent with forward output");
  }
  const int rows = in.c * k * k;
  const std::size_t cols = static_cast<std::size_t>(ho) * wo;
  const bool direct = (k == 1 && stride == 1 && pad == 0);

  ConvGrads<T> g;
  g.weights = Tensor<T>(wt);
  g.bias.assign(co, T(0));
  if (want_input_grad) g.input = Tensor<T>(in);

  auto& col = scratch<T>();
  std::vector<T> gcol;
  if (!direct) col.resize(static_cast<std::size_t>(rows) * cols);
  if (want_input_grad && !direct) gcol.resize(static_cast<std::size_t>(rows) * cols);

  Eigen::Map<const RowMat<T>> wmat(weights.data(), co, rows);
  Eigen::Map<RowMat<T>> gw(g.weights.data(), co, rows);
  for (int n = 0; n < in.n; ++n) {
    Eigen::Map<const RowMat<T>> gmat(grad_out.plane(n, 0), co,
                                     static_cast<Eigen::Index>(cols));
    const T* src = input.plane(n, 0);
    if (!direct) {
      im2col(input.plane(n, 0), in.c, in.h, in.w, k, stride, pad, ho, wo,
             col.data());
      src = col.data();
    }
    Eigen::Map<const RowMat<T>> cmat(src, rows, static_cast<Eigen::Index>(cols));
    gw.noalias() += gmat * cmat.transpose();
    // plain loop: Eigen's vectorized sum depends on the pointer's alignment,
    // which would make training runs differ bitwise
    for (int o = 0; o < co; ++o) {
      const T* row = grad_out.plane(n, 0) + static_cast<std::size_t>(o) * cols;
      T acc = 0;
      for (std::size_t i = 0; i < cols; ++i) acc += row[i];
      g.bias[o] += acc;
    }
    if (want_input_grad) {
      if (direct) {
        Eigen::Map<RowMat<T>> gin(g.input.plane(n, 0), rows,
                                  static_cast<Eigen::Index>(cols));
        gin.noalias() = wmat.transpose() * gmat;
      } else {
        Eigen::Map<RowMat<T>> gc(gcol.data(), rows, static_cast<Eigen::Index>(cols));
        gc.noalias() = wmat.transpose() * gmat;
        col2im(gcol.data(), in.c, in.h, in.w, k, stride, pad, ho, wo,
               g.input.plane(n, 0));
      }
    }
  }
  return g;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  auto out = map_binary(a, b, "add", [](T x, T y) { return x + y; });
  detail::count_elementwise(out.size());
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  auto out = map_binary(a, b, "mul", [](T x, T y) { return x * y; });
  detail::count_elementwise(out.size());
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  return map_unary(a, [s](T x) { return x * s; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return map_unary(a, [](T x) {
    // Split by sign so exp never overflows.
    if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  return map_unary(a, [](T x) { return x > T(0) ? x : T(0); });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope) {
  return map_unary(a, [slope](T x) { return x > T(0) ? x : slope * x; });
}

template <typename T>
Tensor<T> pow_alpha(const Tensor<T>& a, T alpha) {
  for (T v : a.values()) {
    if (v < T(0)) {
      throw std::domain_error("pow_alpha: negative input " + std::to_string(v) +
                              " (apply relu first)");
    }
  }
  return map_unary(a, [alpha](T x) { return x > T(0) ? std::pow(x, alpha) : T(0); });
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> mul_backward(const Tensor<T>& grad,
                                             const Tensor<T>& a,
                                             const Tensor<T>& b) {
  require_same_shape(grad, a, "mul_backward");
  auto ga = map_binary(grad, b, "mul_backward", [](T g, T y) { return g * y; });
  auto gb = map_binary(grad, a, "mul_backward", [](T g, T x) { return g * x; });
  return {std::move(ga), std::move(gb)};
}

template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& grad, const Tensor<T>& out) {
  return map_binary(grad, out, "sigmoid_backward",
                    [](T g, T y) { return g * y * (T(1) - y); });
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& grad, const Tensor<T>& input) {
  return map_binary(grad, input, "relu_backward",
                    [](T g, T x) { return x > T(0) ? g : T(0); });
}

template <typename T>
Tensor<T> leaky_relu_backward(const Tensor<T>& grad, const Tensor<T>& input,
                              T slope) {
  return map_binary(grad, input, "leaky_relu_backward",
                    [slope](T g, T x) { return x > T(0) ? g : slope * g; });
}

template <typename T>
Tensor<T> pow_alpha_backward(const Tensor<T>& grad, const Tensor<T>& input,
                             T alpha) {
  return map_binary(grad, input, "pow_alpha_backward", [alpha](T g, T x) {
    return x > T(0) ? g * alpha * std::pow(x, alpha - T(1)) : T(0);
  });
}

template <typename T>
void accumulate(Tensor<T>& a, const Tensor<T>& b) {
  if (a.empty() && !b.empty()) {
    a = b;
    return;
  }
  require_same_shape(a, b, "accumulate");
  T* pa = a.data();
  const T* pb = b.data();
  for (std::size_t i = 0; i < a.size(); ++i) pa[i] += pb[i];
}

template <typename T>
Tensor<T> repeat_channels(const Tensor<T>& single, int channels) {
  if (single.c() != 1) {
    throw std::invalid_argument("repeat_channels: expected 1 channel, got " +
                                single.shape().str());
  }
  const Shape& s = single.shape();
  Tensor<T> out(Shape{s.n, channels, s.h, s.w});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < channels; ++c) {
      std::copy(single.plane(n, 0), single.plane(n, 0) + s.plane(),
                out.plane(n, c));
    }
  }
  return out;
}

template <typename T>
Tensor<T> sum_channels(const Tensor<T>& t) {
  const Shape& s = t.shape();
  Tensor<T> out(Shape{s.n, 1, s.h, s.w});
  for (int n = 0; n < s.n; ++n) {
    T* dst = out.plane(n, 0);
    for (int c = 0; c < s.c; ++c) {
      const T* src = t.plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) dst[i] += src[i];
    }
  }
  return out;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw std::invalid_argument("concat_channels: " + sa.str() + " vs " + sb.str());
  }
  Tensor<T> out(Shape{sa.n, sa.c + sb.c, sa.h, sa.w});
  const std::size_t na = static_cast<std::size_t>(sa.c) * sa.plane();
  const std::size_t nb = static_cast<std::size_t>(sb.c) * sb.plane();
  for (int n = 0; n < sa.n; ++n) {
    std::copy(a.plane(n, 0), a.plane(n, 0) + na, out.plane(n, 0));
    std::copy(b.plane(n, 0), b.plane(n, 0) + nb, out.plane(n, sa.c));
  }
  return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& t,
                                               int first_channels) {
  const Shape& s = t.shape();
  if (first_channels < 0 || first_channels > s.c) {
    throw std::invalid_argument("split_channels: bad split point");
  }
  Tensor<T> a(Shape{s.n, first_channels, s.h, s.w});
  Tensor<T> b(Shape{s.n, s.c - first_channels, s.h, s.w});
  const std::size_t na = static_cast<std::size_t>(first_channels) * s.plane();
  const std::size_t nb = static_cast<std::size_t>(s.c - first_channels) * s.plane();
  for (int n = 0; n < s.n; ++n) {
    std::copy(t.plane(n, 0), t.plane(n, 0) + na, a.plane(n, 0));
    std::copy(t.plane(n, first_channels), t.plane(n, first_channels) + nb,
              b.plane(n, 0));
  }
  return {std::move(a), std::move(b)};
}

template <typename T>
Tensor<T> slice_batch(const Tensor<T>& t, int begin, int count) {
  const Shape& s = t.shape();
  if (begin < 0 || count < 0 || begin + count > s.n) {
    throw std::invalid_argument("slice_batch: range out of bounds");
  }
  const std::size_t per = static_cast<std::size_t>(s.c) * s.plane();
  std::vector<T> data(t.data() + begin * per, t.data() + (begin + count) * per);
  return Tensor<T>(Shape{count, s.c, s.h, s.w}, std::move(data));
}

template <typename T>
PoolResult<T> maxpool2(const Tensor<T>& input) {
  const Shape& s = input.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) {
    throw std::invalid_argument("maxpool2: spatial dims must be even, got " + s.str());
  }
  PoolResult<T> r;
  r.output = Tensor<T>(Shape{s.n, s.c, s.h / 2, s.w / 2});
  r.argmax.resize(r.output.size());
  std::size_t o = 0;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int y = 0; y < s.h; y += 2) {
        for (int x = 0; x < s.w; x += 2) {
          const std::size_t cand[4] = {input.index(n, c, y, x),
                                       input.index(n, c, y, x + 1),
                                       input.index(n, c, y + 1, x),
                                       input.index(n, c, y + 1, x + 1)};
          std::size_t best = cand[0];
          for (int i = 1; i < 4; ++i) {
            if (input[cand[i]] > input[best]) best = cand[i];
          }
          r.output[o] = input[best];
          r.argmax[o] = static_cast<std::uint32_t>(best);
          ++o;
        }
      }
    }
  }
  detail::count_elementwise(r.output.size());
  return r;
}

template <typename T>
Tensor<T> maxpool2_backward(const Tensor<T>& grad,
                            const std::vector<std::uint32_t>& argmax,
                            const Shape& input_shape) {
  if (argmax.size() != grad.size()) {
    throw std::invalid_argument("maxpool2_backward: index/grad size mismatch");
  }
  Tensor<T> out(input_shape);
  for (std::size_t i = 0; i < grad.size(); ++i) out[argmax[i]] += grad[i];
  return out;
}

template <typename T>
Tensor<T> upsample_nearest2(const Tensor<T>& input) {
  const Shape& s = input.shape();
  Tensor<T> out(Shape{s.n, s.c, s.h * 2, s.w * 2});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const T* src = input.plane(n, c);
      T* dst = out.plane(n, c);
      const int wo = s.w * 2;
      for (int y = 0; y < s.h; ++y) {
        T* row0 = dst + static_cast<std::size_t>(2 * y) * wo;
        for (int x = 0; x < s.w; ++x) {
          const T v = src[static_cast<std::size_t>(y) * s.w + x];
          row0[2 * x] = v;
          row0[2 * x + 1] = v;
        }
        std::copy(row0, row0 + wo, row0 + wo);
      }
    }
  }
  detail::count_elementwise(out.size());
  return out;
}

template <typename T>
Tensor<T> upsample_nearest2_backward(const Tensor<T>& grad) {
  const Shape& s = grad.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) {
    throw std::invalid_argument("upsample_nearest2_backward: odd grad dims");
  }
  Tensor<T> out(Shape{s.n, s.c, s.h / 2, s.w / 2});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int y = 0; y < s.h; ++y) {
        for (int x = 0; x < s.w; ++x) {
          out.at(n, c, y / 2, x / 2) += grad.at(n, c, y, x);
        }
      }
    }
  }
  return out;
}

template <typename T>
DropoutResult<T> dropout(const Tensor<T>& input, double rate, Rng& rng,
                         bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw std::invalid_argument("dropout: rate must lie in [0,1), got " +
                                std::to_string(rate));
  }
  DropoutResult<T> r;
  if (!training || rate == 0.0) {
    r.output = input;
    return r;
  }
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  r.mask = Tensor<T>(input.shape());
  r.output = Tensor<T>(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    const T m = rng.uniform() < rate ? T(0) : keep_scale;
    r.mask[i] = m;
    r.output[i] = input[i] * m;
  }
  detail::count_elementwise(input.size());
  return r;
}

template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& grad, const Tensor<T>& mask) {
  if (mask.empty()) return grad;
  return map_binary(grad, mask, "dropout_backward", [](T g, T m) { return g * m; });
}

template <typename T>
Tensor<T> gaussian(Rng& rng, const Shape& shape) {
  Tensor<T> out(shape);
  for (auto& v : out.values()) v = static_cast<T>(rng.normal());
  return out;
}

#define MGR_INSTANTIATE_OPS(T)                                                  \
  template Tensor<T> conv2d_forward(const Tensor<T>&, const Tensor<T>&,         \
                                    std::span<const T>, int, int);              \
  template ConvGrads<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&,     \
                                        const Tensor<T>&, int, int, bool);      \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> scale(const Tensor<T>&, T);                                \
  template Tensor<T> sigmoid(const Tensor<T>&);                                 \
  template Tensor<T> relu(const Tensor<T>&);                                    \
  template Tensor<T> leaky_relu(const Tensor<T>&, T);                           \
  template Tensor<T> pow_alpha(const Tensor<T>&, T);                            \
  template std::pair<Tensor<T>, Tensor<T>> mul_backward(                        \
      const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                    \
  template Tensor<T> sigmoid_backward(const Tensor<T>&, const Tensor<T>&);      \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);         \
  template Tensor<T> leaky_relu_backward(const Tensor<T>&, const Tensor<T>&, T);\
  template Tensor<T> pow_alpha_backward(const Tensor<T>&, const Tensor<T>&, T); \
  template void accumulate(Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> repeat_channels(const Tensor<T>&, int);                    \
  template Tensor<T> sum_channels(const Tensor<T>&);                            \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);       \
  template std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>&, int);\
  template Tensor<T> slice_batch(const Tensor<T>&, int, int);                   \
  template PoolResult<T> maxpool2(const Tensor<T>&);                            \
  template Tensor<T> maxpool2_backward(                                         \
      const Tensor<T>&, const std::vector<std::uint32_t>&, const Shape&);       \
  template Tensor<T> upsample_nearest2(const Tensor<T>&);                       \
  template Tensor<T> upsample_nearest2_backward(const Tensor<T>&);              \
  template DropoutResult<T> dropout(const Tensor<T>&, double, Rng&, bool);      \
  template Tensor<T> dropout_backward(const Tensor<T>&, const Tensor<T>&);      \
  template Tensor<T> gaussian(Rng&, const Shape&);

MGR_INSTANTIATE_OPS(float)
MGR_INSTANTIATE_OPS(double)

#undef MGR_INSTANTIATE_OPS

}  // namespace mgr
