#include <cmath>
#include <string>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "mgrdn/blindspot.hpp"
#include "mgrdn/unet.hpp"

using mgr::ConvKind;
using mgr::MaskedFeature;
using mgr::NetConfig;
using mgr::Network;
using mgr::Rng;
using mgr::Shape;
using mgr::Tensor;
using testing::random_binary;
using testing::random_tensor;

namespace {

NetConfig small_config(ConvKind kind) {
  NetConfig c;
  c.in_channels = 1;
  c.depth = 2;
  c.enc_channels = 8;
  c.dec_channels = 16;
  c.head_channels_1 = 8;
  c.head_channels_2 = 8;
  c.conv_kind = kind;
  return c;
}

constexpr ConvKind kAllKinds[] = {ConvKind::vanilla, ConvKind::pconv, ConvKind::lbam, ConvKind::gated,
                                  ConvKind::mgr};

template <typename T>
MaskedFeature<T> ones_mask_input(const Tensor<T>& x) {
  return {x, Tensor<T>(Shape{x.n(), 1, x.h(), x.w()}, T(1))};
}

}  // namespace

TEST_CASE("parameter counts for the reference configurations") {
  // Counted independently from the layer definitions.
  NetConfig big;
  big.depth = 4;
  big.enc_channels = 48;
  big.dec_channels = 96;
  big.in_channels = 3;
  const std::pair<ConvKind, std::size_t> big_counts[] = {
      {ConvKind::mgr, 1197027},   {ConvKind::pconv, 1030275},   {ConvKind::lbam, 1387539},
      {ConvKind::gated, 1198755}, {ConvKind::vanilla, 1030275},
  };
  for (auto [kind, n] : big_counts) {
    CAPTURE(mgr::to_string(kind));
    big.conv_kind = kind;
    CHECK(mgr::param_count(big) == n);
  }
  const std::pair<ConvKind, std::size_t> small_counts[] = {
      {ConvKind::mgr, 17017},   {ConvKind::pconv, 14601},   {ConvKind::lbam, 20257},
      {ConvKind::gated, 17161}, {ConvKind::vanilla, 14601},
  };
  for (auto [kind, n] : small_counts) {
    CAPTURE(mgr::to_string(kind));
    Rng rng(1);
    Network<float> net(small_config(kind), rng);
    CHECK(net.param_count() == n);
    std::size_t total = 0;
    for (auto* p : net.params()) total += p->value.size();
    CHECK(total == n);
  }
}

TEST_CASE("config validation") {
  NetConfig c = small_config(ConvKind::mgr);
  CHECK_NOTHROW(c.validate());
  c.depth = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = small_config(ConvKind::mgr);
  c.decoder_dropout = 1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = small_config(ConvKind::mgr);
  c.kernel = 2;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = small_config(ConvKind::mgr);
  c.enc_channels = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("same seed builds the same network") {
  for (ConvKind kind : kAllKinds) {
    Rng a(99), b(99), c(100);
    Network<float> na(small_config(kind), a), nb(small_config(kind), b), nc(small_config(kind), c);
    auto pa = na.params(), pb = nb.params(), pc = nc.params();
    REQUIRE(pa.size() == pb.size());
    bool all_equal = true, any_diff = false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
      CHECK(pa[i]->name == pb[i]->name);
      for (std::size_t k = 0; k < pa[i]->value.size(); ++k) {
        all_equal &= pa[i]->value[k] == pb[i]->value[k];
        any_diff |= pa[i]->value[k] != pc[i]->value[k];
      }
    }
    CHECK(all_equal);
    CHECK(any_diff);
  }
}

TEST_CASE("parameter names are unique and structured") {
  Rng rng(2);
  Network<float> net(small_config(ConvKind::mgr), rng);
  std::set<std::string> names;
  for (auto* p : net.params()) CHECK(names.insert(p->name).second);
  CHECK(names.count("enc0a.image.weight"));
  CHECK(names.count("enc0a.mask.weight"));
  CHECK(names.count("bottleneck.image.bias"));
  CHECK(names.count("dec1b.weight"));
  CHECK(names.count("head2.bias"));
}

TEST_CASE("forward shapes and input checks") {
  for (ConvKind kind : kAllKinds) {
    CAPTURE(mgr::to_string(kind));
    Rng rng(3);
    Network<float> net(small_config(kind), rng);
    auto x = random_tensor<float>(Shape{2, 1, 12, 8}, rng, 0.0, 1.0);
    auto out = net.forward(ones_mask_input(x), false, rng);
    CHECK(out.shape() == x.shape());
    CHECK(out.all_finite());
    CHECK(net.encoder_mask().shape() == Shape{2, net.encoder_layer(3).mask_channels_out(), 3, 2});
  }
  Rng rng(4);
  Network<float> net(small_config(ConvKind::mgr), rng);
  auto bad = random_tensor<float>(Shape{1, 1, 10, 8}, rng);
  try {
    net.forward(ones_mask_input(bad), false, rng);
    FAIL("expected a throw");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("pad by 2 rows and 0 columns") != std::string::npos);
  }
  auto three = random_tensor<float>(Shape{1, 3, 8, 8}, rng);
  CHECK_THROWS_AS(net.forward(ones_mask_input(three), false, rng), std::invalid_argument);
  auto x = random_tensor<float>(Shape{1, 1, 8, 8}, rng);
  MaskedFeature<float> wrong_mask{x, Tensor<float>(Shape{1, 2, 8, 8}, 1.0f)};
  CHECK_THROWS_AS(net.forward(wrong_mask, false, rng), std::invalid_argument);
  CHECK_THROWS_AS(net.backward(x), std::logic_error);
}

TEST_CASE("vanilla and partial conv networks agree under a full mask") {
  Rng ra(5), rb(5), rd(6);
  Network<double> vanilla(small_config(ConvKind::vanilla), ra);
  Network<double> pconv(small_config(ConvKind::pconv), rb);
  auto x = random_tensor<double>(Shape{1, 1, 16, 12}, rd, 0.0, 1.0);
  Rng r1(0), r2(0);
  auto a = vanilla.forward(ones_mask_input(x), false, r1);
  auto b = pconv.forward(ones_mask_input(x), false, r2);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  CHECK(worst < 1e-10);
}

TEST_CASE("evaluation is deterministic and dropout varies in training mode") {
  NetConfig cfg = small_config(ConvKind::mgr);
  cfg.decoder_dropout = 0.5;
  Rng init(7);
  Network<float> net(cfg, init);
  auto x = random_tensor<float>(Shape{1, 1, 8, 8}, init, 0.0, 1.0);
  Rng r1(1), r2(2);
  auto e1 = net.forward(ones_mask_input(x), false, r1);
  auto e2 = net.forward(ones_mask_input(x), false, r2);
  CHECK(e1.values().size() == e2.values().size());
  CHECK(std::equal(e1.values().begin(), e1.values().end(), e2.values().begin()));

  Rng t1(1), t2(2), t3(1);
  auto d1 = net.forward(ones_mask_input(x), true, t1, false);
  auto d2 = net.forward(ones_mask_input(x), true, t2, false);
  auto d3 = net.forward(ones_mask_input(x), true, t3, false);
  CHECK_FALSE(std::equal(d1.values().begin(), d1.values().end(), d2.values().begin()));
  CHECK(std::equal(d1.values().begin(), d1.values().end(), d3.values().begin()));
  CHECK_FALSE(net.has_cache());
}

TEST_CASE("batch items are independent in evaluation") {
  Rng init(8);
  Network<double> net(small_config(ConvKind::lbam), init);
  auto a = random_tensor<double>(Shape{1, 1, 8, 8}, init, 0.0, 1.0);
  auto b = random_tensor<double>(Shape{1, 1, 8, 8}, init, 0.0, 1.0);
  Tensor<double> ab(Shape{2, 1, 8, 8});
  std::copy(a.values().begin(), a.values().end(), ab.data());
  std::copy(b.values().begin(), b.values().end(), ab.data() + a.size());
  Rng r(0);
  auto oa = net.forward(ones_mask_input(a), false, r);
  auto ob = net.forward(ones_mask_input(b), false, r);
  auto oab = net.forward(ones_mask_input(ab), false, r);
  double worst = 0.0;
  for (std::size_t i = 0; i < oa.size(); ++i) {
    worst = std::max(worst, std::abs(oa[i] - oab[i]));
    worst = std::max(worst, std::abs(ob[i] - oab[oa.size() + i]));
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("masked loss gradients reach every parameter correctly") {
  for (ConvKind kind : kAllKinds) {
    CAPTURE(mgr::to_string(kind));
    Rng rng(11);
    Network<double> net(small_config(kind), rng);
    // A fresh LBAM stack attenuates its signal so strongly that, with zero
    // biases, downstream pre-activations sit within 1e-5 of the leaky kink.
    for (auto* p : net.params()) {
      if (p->name.ends_with(".bias")) {
        for (auto& v : p->value.values()) v = rng.uniform(-0.5, 0.5);
      }
    }
    auto x = random_tensor<double>(Shape{1, 1, 8, 8}, rng, 0.0, 1.0);
    auto y = random_tensor<double>(Shape{1, 1, 8, 8}, rng, 0.0, 1.0);
    auto m = random_binary<double>(Shape{1, 1, 8, 8}, rng, 0.7);
    MaskedFeature<double> in{x, m};
    Rng fwd(0);
    auto loss = [&] {
      return mgr::masked_mse(net.forward(in, false, fwd, false), y, m).loss;
    };
    net.zero_grad();
    auto g = mgr::masked_mse(net.forward(in, false, fwd, true), y, m);
    net.backward(g.grad);
    CHECK_FALSE(net.has_cache());

    auto params = net.params();
    Rng pick(12);
    for (int trial = 0; trial < 10; ++trial) {
      auto* p = params[pick.index(params.size())];
      const std::size_t i = pick.index(p->value.size());
      CAPTURE(p->name);
      const double fd = testing::central_difference(p->value.values(), i, loss);
      CHECK(testing::rel_error(p->grad[i], fd, 1e-6) < 1e-4);
    }
  }
}

TEST_CASE("zero_grad clears and backward accumulates") {
  Rng rng(14);
  Network<double> net(small_config(ConvKind::mgr), rng);
  auto x = random_tensor<double>(Shape{1, 1, 8, 8}, rng, 0.0, 1.0);
  auto in = ones_mask_input(x);
  Rng fwd(0);
  auto run = [&] {
    auto out = net.forward(in, false, fwd, true);
    net.backward(Tensor<double>(out.shape(), 1.0));
  };
  net.zero_grad();
  run();
  std::vector<double> once;
  for (auto* p : net.params()) once.insert(once.end(), p->grad.values().begin(), p->grad.values().end());
  run();
  std::size_t k = 0;
  double worst = 0.0;
  for (auto* p : net.params())
    for (double g : p->grad.values()) worst = std::max(worst, std::abs(g - 2.0 * once[k++]));
  CHECK(worst < 1e-9);
  net.zero_grad();
  for (auto* p : net.params())
    for (double g : p->grad.values()) CHECK(g == 0.0);
}

TEST_CASE("encoder mask shrinks holes through the network") {
  Rng rng(15);
  Network<float> net(small_config(ConvKind::pconv), rng);
  auto x = random_tensor<float>(Shape{1, 1, 16, 16}, rng, 0.0, 1.0);
  Tensor<float> mask(Shape{1, 1, 16, 16}, 1.0f);
  for (int y = 6; y < 10; ++y)
    for (int xx = 6; xx < 10; ++xx) mask.at(0, 0, y, xx) = 0.0f;
  net.forward({x, mask}, false, rng);
  for (float v : net.encoder_mask().values()) CHECK(v == 1.0f);
}

TEST_CASE("cost table matches the measured tally") {
  for (ConvKind kind : kAllKinds) {
    CAPTURE(mgr::to_string(kind));
    Rng rng(16);
    Network<float> net(small_config(kind), rng);
    auto x = random_tensor<float>(Shape{1, 1, 16, 12}, rng, 0.0, 1.0);
    auto table = net.cost_table(16, 12);
    std::uint64_t macs = 0, elementwise = 0;
    for (const auto& row : table) {
      macs += row.cost.macs;
      elementwise += row.cost.elementwise;
    }
    mgr::OpCountScope scope;
    net.forward(ones_mask_input(x), false, rng);
    CHECK(scope.tally().macs == macs);
    CHECK(scope.tally().elementwise == elementwise);
  }
}
