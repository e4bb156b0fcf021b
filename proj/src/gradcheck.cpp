#include "mgrdn/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>

namespace mgr {

namespace {

// Objective value together with the sum of its terms' magnitudes, which
// bounds the rounding error of evaluating it.
struct Objective {
  double value = 0.0;
  double magnitude = 0.0;
};

void accumulate(Objective& o, const Tensor<double>& a, const Tensor<double>& b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    o.value += a[i] * b[i];
    o.magnitude += std::abs(a[i] * b[i]);
  }
}

// Relative error of one entry. The part of |a - fd| that the difference
// quotient cannot resolve (rounding of the two objective values, divided by
// 2 eps) is discounted; without this, gradients near 1e-9 would be judged
// on rounding noise alone.
double entry_error(double analytic, const Objective& up, const Objective& down, double eps) {
  constexpr double kUlpsPerTerm = 1.0;
  const double fd = (up.value - down.value) / (2.0 * eps);
  const double noise =
      kUlpsPerTerm * std::numeric_limits<double>::epsilon() * (up.magnitude + down.magnitude) / (2.0 * eps);
  const double excess = std::max(0.0, std::abs(analytic - fd) - noise);
  return excess / std::max({std::abs(analytic), std::abs(fd), 1e-7});
}

double fd_error(std::span<double> values, std::span<const double> analytic,
                const std::function<Objective()>& loss, double eps) {
  double worst = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + eps;
    const Objective up = loss();
    values[i] = saved - eps;
    const Objective down = loss();
    values[i] = saved;
    worst = std::max(worst, entry_error(analytic[i], up, down, eps));
  }
  return worst;
}

Tensor<double> uniform(const Shape& s, Rng& rng, double lo, double hi) {
  Tensor<double> t(s);
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

Tensor<double> binary(const Shape& s, Rng& rng, double p_one) {
  Tensor<double> t(s);
  for (auto& v : t.values()) v = rng.bernoulli(p_one) ? 1.0 : 0.0;
  return t;
}

double min_abs(const Tensor<double>& t) {
  double m = std::numeric_limits<double>::infinity();
  for (double v : t.values()) m = std::min(m, std::abs(v));
  return m;
}

Tensor<double> pre_activation(const Conv2d<double>& c, const Tensor<double>& x) {
  return conv2d_forward<double>(x, c.weight.value, c.bias.value.values());
}

// Distance of kinked pre-activations from their kinks, each scaled by the
// margin it needs: leaky/ReLU kinks only must not be crossed, while the
// mask power x^0.8 also needs room for its curvature near 0.
double kink_clearance(MaskConv<double>& layer, const MaskedFeature<double>& x, double margin) {
  constexpr double kPowerFactor = 10.0;
  if (auto* m = dynamic_cast<MgrConv<double>*>(&layer)) {
    return std::min(min_abs(pre_activation(m->image_conv, x.feature)) / margin,
                    min_abs(pre_activation(m->mask_conv, x.mask)) / (kPowerFactor * margin));
  }
  if (auto* g = dynamic_cast<GatedConv<double>*>(&layer)) {
    const bool fused = g->feature_conv.c_in() > x.feature.c();
    return min_abs(pre_activation(g->feature_conv, fused ? concat_channels(x.feature, x.mask) : x.feature)) /
           margin;
  }
  return std::numeric_limits<double>::infinity();
}

std::vector<Param<double>*> params_of(MaskConv<double>& layer) {
  std::vector<Param<double>*> ps;
  layer.append_params(ps);
  return ps;
}

}  // namespace

double GradcheckCase::worst() const { return std::max({params, feature, mask}); }

double GradcheckReport::worst() const {
  double w = 0.0;
  for (const auto& c : cases) w = std::max(w, c.worst());
  return w;
}

GradcheckReport run_gradcheck(const GradcheckOptions& opt) {
  if (opt.configs < 1) throw std::invalid_argument("gradcheck: configs must be >= 1");
  const auto t0 = std::chrono::steady_clock::now();
  GradcheckReport report;
  report.tolerance = opt.tolerance;
  Rng rng(opt.seed);
  const int kernels[] = {1, 3, 5};
  for (int cfg = 0; cfg < opt.configs; ++cfg) {
    const int n = 1 + static_cast<int>(rng.index(2));
    const int c_in = 1 + static_cast<int>(rng.index(4));
    const int c_out = 1 + static_cast<int>(rng.index(4));
    const int k = kernels[rng.index(3)];
    const int h = 3 + static_cast<int>(rng.index(5));
    const int w = 3 + static_cast<int>(rng.index(5));
    const bool first = rng.bernoulli(0.5);

    for (ConvKind kind : {ConvKind::vanilla, ConvKind::pconv, ConvKind::lbam, ConvKind::gated, ConvKind::mgr}) {
      // inside a network the incoming mask has the previous layer's width
      const int c_mask = first || kind == ConvKind::gated ? 1 : c_in;
      GradcheckCase rec;
      rec.kind = kind;
      rec.config = cfg;
      rec.shape = "n" + std::to_string(n) + " c_in" + std::to_string(c_in) + " c_mask" + std::to_string(c_mask) +
                  " c_out" + std::to_string(c_out) + " k" + std::to_string(k) + " " + std::to_string(h) + "x" +
                  std::to_string(w) + (first ? " first" : "");

      std::unique_ptr<MaskConv<double>> layer;
      MaskedFeature<double> x;
      for (;;) {
        layer = make_mask_conv<double>(kind, "l", c_in, c_mask, c_out, k, rng, first);
        // nonzero biases so the check does not rest on the zero init
        for (auto* p : params_of(*layer)) {
          if (p->name.ends_with(".bias")) {
            for (auto& b : p->value.values()) b = rng.uniform(-0.2, 0.2);
          }
        }
        x.feature = uniform(Shape{n, c_in, h, w}, rng, -1.0, 1.0);
        if (kind == ConvKind::pconv && !first) {
          x.mask = repeat_channels(binary(Shape{n, 1, h, w}, rng, 0.6), c_mask);
        } else if (first) {
          x.mask = binary(Shape{n, 1, h, w}, rng, 0.6);
        } else {
          x.mask = uniform(Shape{n, c_mask, h, w}, rng, 0.0, 1.5);
        }
        if (kink_clearance(*layer, x, opt.kink_margin) >= 1.0) break;
        if (++rec.redraws > 1000) throw std::runtime_error("gradcheck: could not draw a kink-free input for " + std::string(to_string(kind)) + " " + rec.shape);
      }

      const bool smooth_mask = kind == ConvKind::mgr || kind == ConvKind::lbam;
      const bool check_mask_input = smooth_mask && !first;
      auto probe = layer->forward(x, false);
      const auto rf = uniform(probe.feature.shape(), rng, -1.0, 1.0);
      const auto rm = uniform(probe.mask.shape(), rng, -1.0, 1.0);
      auto loss = [&] {
        auto out = layer->forward(x, false);
        Objective o;
        accumulate(o, out.feature, rf);
        if (smooth_mask) accumulate(o, out.mask, rm);
        return o;
      };
      for (auto* p : params_of(*layer)) p->zero_grad();
      layer->forward(x, true);
      auto grads = layer->backward(rf, smooth_mask ? rm : Tensor<double>());
      for (auto* p : params_of(*layer)) {
        rec.params = std::max(rec.params, fd_error(p->value.values(), p->grad.values(), loss, opt.eps));
      }
      rec.feature = fd_error(x.feature.values(), grads.feature.values(), loss, opt.eps);
      if (check_mask_input) {
        if (grads.mask.empty()) throw std::logic_error("gradcheck: layer returned no mask gradient");
        rec.mask = fd_error(x.mask.values(), grads.mask.values(), loss, opt.eps);
      }
      report.cases.push_back(std::move(rec));
    }
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace mgr
