#include "mgrdn/conv_layer.hpp"

#include <cmath>
#include <stdexcept>

namespace mgr {

template <typename T>
Tensor<T> glorot_uniform(int c_out, int c_in, int k, Rng& rng) {
  const double fan_in = static_cast<double>(c_in) * k * k;
  const double fan_out = static_cast<double>(c_out) * k * k;
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor<T> w(Shape{c_out, c_in, k, k});
  for (auto& v : w.values()) v = static_cast<T>(rng.uniform(-limit, limit));
  return w;
}

template <typename T>
Conv2d<T>::Conv2d(const std::string& name, int c_in, int c_out, int k, Rng& rng)
    : weight(name + ".weight", glorot_uniform<T>(c_out, c_in, k, rng)),
      bias(name + ".bias", Tensor<T>(Shape{c_out, 1, 1, 1})) {}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x, bool keep_cache) {
  auto out = conv2d_forward<T>(x, weight.value, bias.value.values());
  if (keep_cache) {
    cache_ = x;
  } else {
    cache_.reset();
  }
  return out;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& grad_out, bool want_input_grad) {
  if (!cache_) {
    throw std::logic_error("Conv2d::backward(" + weight.name +
                           "): no cached forward input");
  }
  auto g = conv2d_backward<T>(grad_out, *cache_, weight.value, 1, -1,
                              want_input_grad);
  accumulate(weight.grad, g.weights);
  for (std::size_t i = 0; i < g.bias.size(); ++i) bias.grad[i] += g.bias[i];
  cache_.reset();
  return std::move(g.input);
}

template <typename T>
void Conv2d<T>::append_params(std::vector<Param<T>*>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

template Tensor<float> glorot_uniform<float>(int, int, int, Rng&);
template Tensor<double> glorot_uniform<double>(int, int, int, Rng&);
template class Conv2d<float>;
template class Conv2d<double>;

}  // namespace mgr
