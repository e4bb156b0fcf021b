#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "mgrdn/rng.hpp"
#include "mgrdn/tensor.hpp"

namespace mgr {

// ---------------------------------------------------------------------------
// Forward-pass operation tally.
//
// Every forward op below reports its work to the innermost live
// OpCountScope on the calling thread: convolutions as multiply-accumulates,
// everything else as one operation per output element. Backward ops are not
// counted. Layer cost formulas are checked against this tally in tests.

struct OpTally {
  std::uint64_t macs = 0;
  std::uint64_t elementwise = 0;
  std::uint64_t total() const { return macs + elementwise; }
};

class OpCountScope {
 public:
  OpCountScope();
  ~OpCountScope();
  OpCountScope(const OpCountScope&) = delete;
  OpCountScope& operator=(const OpCountScope&) = delete;

  const OpTally& tally() const { return tally_; }

 private:
  OpTally tally_;
  OpCountScope* previous_;
};

namespace detail {
void count_macs(std::uint64_t n);
void count_elementwise(std::uint64_t n);
}  // namespace detail

// ---------------------------------------------------------------------------
// Convolution. Zero padding; padding < 0 selects k/2 ("same" at stride 1).

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weights,
                         std::span<const T> bias, int stride = 1,
                         int padding = -1);

template <typename T>
struct ConvGrads {
  Tensor<T> input;    // empty when not requested
  Tensor<T> weights;
  std::vector<T> bias;
};

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& grad_out,
                             const Tensor<T>& input, const Tensor<T>& weights,
                             int stride = 1, int padding = -1,
                             bool want_input_grad = true);

int conv_output_size(int in, int k, int stride, int padding);

// ---------------------------------------------------------------------------
// Elementwise ops. Binary ops require identical shapes.

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T s);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& a);
template <typename T> Tensor<T> relu(const Tensor<T>& a);
template <typename T> Tensor<T> leaky_relu(const Tensor<T>& a, T slope);
/// x^alpha for x >= 0; throws std::domain_error on negative input.
template <typename T> Tensor<T> pow_alpha(const Tensor<T>& a, T alpha);

/// Returns (d/da, d/db) of a*b.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> mul_backward(const Tensor<T>& grad,
                                             const Tensor<T>& a,
                                             const Tensor<T>& b);
/// `out` is the forward result sigmoid(a).
template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& grad, const Tensor<T>& out);
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& grad, const Tensor<T>& input);
template <typename T>
Tensor<T> leaky_relu_backward(const Tensor<T>& grad, const Tensor<T>& input,
                              T slope);
/// Gradient at exactly 0 is 0.
template <typename T>
Tensor<T> pow_alpha_backward(const Tensor<T>& grad, const Tensor<T>& input,
                             T alpha);

/// Adds `b` into `a` in place (gradient accumulation; not counted).
template <typename T> void accumulate(Tensor<T>& a, const Tensor<T>& b);

// ---------------------------------------------------------------------------
// Channel plumbing.

/// Repeats a single-channel tensor `channels` times along c.
template <typename T>
Tensor<T> repeat_channels(const Tensor<T>& single, int channels);
/// Sums over channels into a single-channel tensor.
template <typename T> Tensor<T> sum_channels(const Tensor<T>& t);
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);
/// Splits along c after the first `first_channels` channels.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& t,
                                               int first_channels);
/// Batch slice [begin, begin+count).
template <typename T>
Tensor<T> slice_batch(const Tensor<T>& t, int begin, int count);

// ---------------------------------------------------------------------------
// Pooling and resampling.

template <typename T>
struct PoolResult {
  Tensor<T> output;
  std::vector<std::uint32_t> argmax;  // flat input index per output element
};

/// 2x2 non-overlapping max pool; ties go to the first element in scan order.
template <typename T> PoolResult<T> maxpool2(const Tensor<T>& input);
template <typename T>
Tensor<T> maxpool2_backward(const Tensor<T>& grad,
                            const std::vector<std::uint32_t>& argmax,
                            const Shape& input_shape);

template <typename T> Tensor<T> upsample_nearest2(const Tensor<T>& input);
template <typename T>
Tensor<T> upsample_nearest2_backward(const Tensor<T>& grad);

// ---------------------------------------------------------------------------
// Stochastic ops.

template <typename T>
struct DropoutResult {
  Tensor<T> output;
  Tensor<T> mask;  // 0 or 1/(1-rate); empty when the op was the identity
};

template <typename T>
DropoutResult<T> dropout(const Tensor<T>& input, double rate, Rng& rng,
                         bool training);
template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& grad, const Tensor<T>& mask);

/// i.i.d. standard normal samples.
template <typename T> Tensor<T> gaussian(Rng& rng, const Shape& shape);

}  // namespace mgr
