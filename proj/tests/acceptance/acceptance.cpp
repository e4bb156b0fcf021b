// Acceptance runner: one line per criterion, "PASS" or "FAIL", then details.
//
//   acceptance              run everything
//   acceptance --only NAME  run one criterion
//   acceptance --list       print the criterion names

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "CLI11.hpp"
#include "mgrdn/blindspot.hpp"
#include "mgrdn/config.hpp"
#include "mgrdn/gradcheck.hpp"
#include "mgrdn/image_io.hpp"
#include "mgrdn/mask_conv.hpp"
#include "mgrdn/metrics.hpp"
#include "mgrdn/noise.hpp"
#include "mgrdn/ops.hpp"
#include "mgrdn/trainer.hpp"

namespace fs = std::filesystem;
using namespace mgr;

namespace {

const fs::path kData = MGRDN_TEST_DATA;
const fs::path kConfigs = MGRDN_CONFIG_DIR;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<fs::path> images_in(const fs::path& dir, const std::string& prefix) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().filename().string().starts_with(prefix)) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

Tensor<float> load(const fs::path& p) { return load_image(p.string()).pixels; }

TrainConfig desk(const std::string& name) { return load_train_config((kConfigs / name).string()); }

NoiseSpec sigma25() {
  NoiseSpec s;
  s.sigma = 25.0;
  return s;
}

// ---------------------------------------------------------------------------

Outcome gradient_suite() {
  GradcheckOptions opt;
  opt.configs = 20;
  const auto r = run_gradcheck(opt);
  bool all_kinds = true;
  for (ConvKind k : {ConvKind::vanilla, ConvKind::pconv, ConvKind::lbam, ConvKind::gated, ConvKind::mgr}) {
    all_kinds &= std::count_if(r.cases.begin(), r.cases.end(), [k](const auto& c) { return c.kind == k; }) >= 20;
  }
  const bool pass = r.passed() && all_kinds && r.seconds < 120.0;
  return {pass, fmt("worst rel. error %.2e (< 1e-5) over %zu layer checks, 20 configs x 5 kinds, %.1f s (< 120 s)",
                    r.worst(), r.cases.size(), r.seconds)};
}

Outcome algebraic_identities() {
  Rng rng(1);
  bool pass = true;
  std::ostringstream d;

  // partial conv with an all-ones mask is the plain conv with the same weights
  double pconv_err = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    Rng wa(100 + trial), wb(100 + trial);
    const int c_in = 1 + trial, c_out = 2 + trial;
    VanillaConv<float> plain("v", c_in, 1, c_out, 3, wa);
    PartialConv<float> partial("p", c_in, 1, c_out, 3, wb);
    for (auto& b : plain.conv.bias.value.values()) b = static_cast<float>(rng.uniform(-0.5, 0.5));
    partial.conv.bias.value = plain.conv.bias.value;
    Tensor<float> x(Shape{2, c_in, 9, 11});
    for (auto& v : x.values()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    const MaskedFeature<float> in{x, Tensor<float>(Shape{2, 1, 9, 11}, 1.0f)};
    const auto a = plain.forward(in, false).feature;
    const auto b = partial.forward(in, false).feature;
    for (std::size_t i = 0; i < a.size(); ++i) pconv_err = std::max(pconv_err, double(std::abs(a[i] - b[i])));
  }
  pass &= pconv_err < 1e-6;
  d << fmt("pconv(ones) vs conv max |diff| %.1e (< 1e-6); ", pconv_err);

  // MGR with saturated negative mask logits returns the image branch
  double mgr_err = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    MgrConv<float> layer("m", 3, 1, 4, 3, rng);
    layer.mask_conv.weight.value.fill(0.0f);
    layer.mask_conv.bias.value.fill(-30.0f);
    Tensor<float> x(Shape{1, 3, 8, 8});
    for (auto& v : x.values()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    const MaskedFeature<float> in{x, Tensor<float>(Shape{1, 1, 8, 8}, 1.0f)};
    const auto ic = conv2d_forward<float>(x, layer.image_conv.weight.value, layer.image_conv.bias.value.values());
    const auto out = layer.forward(in, false).feature;
    for (std::size_t i = 0; i < ic.size(); ++i) mgr_err = std::max(mgr_err, double(std::abs(out[i] - ic[i])));
  }
  pass &= mgr_err < 1e-6;
  d << fmt("mgr(saturated) vs I^c max |diff| %.1e (< 1e-6); ", mgr_err);

  // mask update spot values through the layer: logits held constant by the bias
  MgrConv<double> layer("b", 1, 1, 1, 3, rng);
  layer.mask_conv.weight.value.fill(0.0);
  const MaskedFeature<double> in{Tensor<double>(Shape{1, 1, 4, 4}, 0.5), Tensor<double>(Shape{1, 1, 4, 4}, 1.0)};
  auto beta = [&](double logit) {
    layer.mask_conv.bias.value.fill(logit);
    return layer.forward(in, false).mask[0];
  };
  const double b1 = beta(1.0), bneg = beta(-0.7), bhalf = beta(0.5);
  const bool spots = b1 == 1.0 && bneg == 0.0 && std::abs(bhalf - 0.5743) < 5e-5;
  pass &= spots;
  d << fmt("beta(1)=%.6g beta(-0.7)=%.6g beta(0.5)=%.6g (0.5743)", b1, bneg, bhalf);
  return {pass, d.str()};
}

Outcome loss_locality() {
  Rng rng(2);
  const Tensor<float> y = load(kData / "s2s" / "cameraman.pgm");
  int samples = 0;
  std::size_t untouched = 0, nonzero_bits = 0, touched_nonzero = 0;
  for (MaskKind kind : {MaskKind::bernoulli_s2s, MaskKind::neighbor_n2v, MaskKind::drop_inpaint}) {
    for (int i = 0; i < 4 && samples < 10; ++i, ++samples) {
      MaskScheme scheme;
      scheme.kind = kind;
      scheme.rate = 0.3 + 0.2 * i;
      const auto s = draw_sample(y, scheme, rng);
      Tensor<float> pred(y.shape());
      for (auto& v : pred.values()) v = static_cast<float>(rng.uniform(0.0, 1.0));
      const auto l = masked_mse(pred, s.target, s.guide_mask);
      for (std::size_t p = 0; p < l.grad.size(); ++p) {
        const float g = l.grad[p];
        if (s.guide_mask[p % s.guide_mask.size()] == 1.0f) {
          ++untouched;
          std::uint32_t bits;
          std::memcpy(&bits, &g, sizeof bits);
          nonzero_bits += bits != 0;
        } else {
          touched_nonzero += g != 0.0f;
        }
      }
    }
  }
  const bool pass = samples == 10 && nonzero_bits == 0 && touched_nonzero > 0;
  return {pass, fmt("%d samples (bernoulli, n2v, drop): %zu of %zu untouched gradient entries not bitwise +0; "
                    "%zu manipulated entries carry gradient",
                    samples, nonzero_bits, untouched, touched_nonzero)};
}

Outcome noise_anchor() {
  std::vector<fs::path> paths = images_in(kData / "n2v", "");
  for (const auto& p : images_in(kData / "s2s", "")) paths.push_back(p);
  paths.push_back(kData / "set12_08.pgm");
  const NoiseSpec spec = sigma25();
  const Rng base(3);
  double lo = 1e9, hi = -1e9, sum = 0.0;
  int inside = 0;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const Tensor<float> x = load(paths[i]);
    Rng rng = base.fork(i);
    const double p = psnr(corrupt(x, spec, rng), x);
    lo = std::min(lo, p);
    hi = std::max(hi, p);
    sum += p;
    inside += std::abs(p - 20.17) <= 0.3;
  }
  const int n = static_cast<int>(paths.size());
  const bool pass = n >= 5 && inside == n;
  return {pass, fmt("%d images, PSNR %.3f..%.3f dB (mean %.3f), %d within 20.17 +- 0.3", n, lo, hi, sum / n, inside)};
}

Outcome inpainting_anchor() {
  const Tensor<float> x = load(kData / "set12_08.pgm");
  Rng rng(4);
  const auto s = sample_drop_inpaint(x, 0.5, rng);
  const double p = psnr(s.manipulated, x);
  const double ssim_v = ssim(s.manipulated, x);
  return {std::abs(p - 8.69) <= 0.5, fmt("Set12-08 (512x512), 50%% dropped: PSNR %.2f dB (8.69 +- 0.5), SSIM %.4f",
                                          p, ssim_v)};
}

Outcome s2s_smoke() {
  const auto t0 = std::chrono::steady_clock::now();
  const TrainConfig cfg = desk("desk_s2s.json");
  std::ostringstream d;
  int improved = 0;
  int index = 0;
  for (const auto& p : images_in(kData / "s2s", "")) {
    const Tensor<float> x = load(p);
    Rng noise_rng = Rng(5).fork(index++);
    const Tensor<float> y = corrupt(x, sigma25(), noise_rng);
    TrainingSession session(cfg);
    session.train_single(y, nullptr, cfg.steps);
    Rng rng(6);
    const Tensor<float> out = infer_averaged(session.network(), y, 20, rng);
    const double before = psnr(y, x), after = psnr(out, x);
    improved += after >= before + 3.0;
    d << fmt("%s %dx%d: %.2f -> %.2f dB (%+.2f); ", p.stem().c_str(), x.h(), x.w(), before, after, after - before);
  }
  const double secs = seconds_since(t0);
  d << fmt("%d/2 improved by >= 3 dB; %d steps, 20 passes; %.0f s (< 900 s)", improved, cfg.steps, secs);
  return {improved == 2 && secs < 900.0, d.str()};
}

Outcome n2v_smoke() {
  const auto t0 = std::chrono::steady_clock::now();
  const TrainConfig cfg = desk("desk_n2v.json");
  const NoiseSpec spec = sigma25();
  Rng noise_rng(7);
  std::vector<Tensor<float>> train;
  for (const auto& p : images_in(kData / "n2v", "train_")) train.push_back(corrupt(load(p), spec, noise_rng));
  TrainingSession session(cfg);
  session.train_dataset(train, cfg.steps);
  std::ostringstream d;
  double gain = 0.0;
  int held = 0;
  for (const auto& p : images_in(kData / "n2v", "heldout_")) {
    const Tensor<float> x = load(p);
    const Tensor<float> y = corrupt(x, spec, noise_rng);
    Rng rng(8);
    const Tensor<float> out = infer_averaged(session.network(), y, cfg.eval_passes, rng);
    const double before = psnr(y, x), after = psnr(out, x);
    gain += after - before;
    ++held;
    d << fmt("%s: %.2f -> %.2f dB; ", p.stem().c_str(), before, after);
  }
  gain /= held;
  const double secs = seconds_since(t0);
  d << fmt("%zu training images %dx%d, %d iterations; mean held-out gain %+.2f dB (>= 3); %.0f s (< 1200 s)",
           train.size(), train.front().h(), train.front().w(), cfg.steps, gain, secs);
  return {train.size() == 10 && gain >= 3.0 && secs < 1200.0, d.str()};
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Outcome convergence_comparison() {
  const Tensor<float> full = load(kData / "set12_08.pgm");
  const Tensor<float> x = crop(full, 224, 224, 64, 64);
  std::ostringstream d;
  int wins = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    Rng drop_rng = Rng(seed).fork(~std::uint64_t{2});
    const auto corrupted = sample_drop_inpaint(x, 0.5, drop_rng);
    double med[2];
    for (int k = 0; k < 2; ++k) {
      TrainConfig cfg = desk("desk_inpaint.json");
      cfg.seed = seed;
      cfg.net.conv_kind = k == 0 ? ConvKind::mgr : ConvKind::pconv;
      TrainingSession session(cfg);
      session.train_single(corrupted.manipulated, &corrupted.guide_mask, cfg.steps);
      std::vector<double> tail;
      for (const auto& row : session.log()) {
        if (row.step > cfg.steps - 100) tail.push_back(row.loss);
      }
      med[k] = median(tail);
    }
    wins += med[0] <= med[1];
    d << fmt("seed %llu: mgr %.5f, pconv %.5f; ", static_cast<unsigned long long>(seed), med[0], med[1]);
  }
  d << fmt("mgr <= pconv on %d/3 seeds (>= 2); 64x64 crop, 50%% dropped, 2000 steps, median of last 100 losses", wins);
  return {wins >= 2, d.str()};
}

Outcome flop_ordering() {
  std::ostringstream d;
  bool pass = true;
  struct Case {
    int c_in, c_out, h, w;
  };
  for (const Case& c : {Case{16, 16, 64, 64}, Case{48, 48, 128, 128}, Case{48, 96, 64, 64}, Case{96, 96, 32, 32}}) {
    std::map<ConvKind, std::uint64_t> measured;
    for (ConvKind kind : {ConvKind::gated, ConvKind::mgr, ConvKind::pconv, ConvKind::lbam}) {
      Rng rng(9);
      const int c_mask = kind == ConvKind::gated ? 1 : c.c_in;
      auto layer = make_mask_conv<float>(kind, "l", c.c_in, c_mask, c.c_out, 3, rng, false);
      Tensor<float> feat(Shape{1, c.c_in, c.h, c.w}, 0.5f);
      Tensor<float> mask(Shape{1, c_mask, c.h, c.w}, 1.0f);
      OpCountScope scope;
      layer->forward({feat, mask}, false);
      measured[kind] = scope.tally().total();
    }
    const bool ok = measured[ConvKind::gated] < measured[ConvKind::mgr] &&
                    measured[ConvKind::mgr] < measured[ConvKind::pconv] &&
                    measured[ConvKind::pconv] < measured[ConvKind::lbam];
    pass &= ok;
    d << fmt("%dx%d %d->%d: gated %.4g < mgr %.4g < pconv %.4g < lbam %.4g GOPs %s; ", c.h, c.w, c.c_in, c.c_out,
             measured[ConvKind::gated] / 1e9, measured[ConvKind::mgr] / 1e9, measured[ConvKind::pconv] / 1e9,
             measured[ConvKind::lbam] / 1e9, ok ? "ok" : "VIOLATED");
  }
  return {pass, d.str() + "counted on executed forward passes"};
}

// step, loss and lr columns; wall_ms is a timing, not a result
std::vector<std::string> result_columns(const fs::path& csv) {
  std::ifstream in(csv);
  std::vector<std::string> rows;
  for (std::string line; std::getline(in, line);) rows.push_back(line.substr(0, line.rfind(',')));
  return rows;
}

Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / ("mgrdn_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const TrainConfig cfg = desk("desk_s2s.json");
  Rng noise_rng(10);
  const Tensor<float> x = load(kData / "s2s" / "cameraman.pgm");
  const Tensor<float> y = corrupt(x, sigma25(), noise_rng);

  std::vector<std::vector<std::string>> csvs;
  std::vector<std::vector<float>> finals;
  for (int run = 0; run < 2; ++run) {
    TrainingSession session(cfg);
    session.train_single(y, nullptr, cfg.steps);
    const fs::path csv = dir / ("loss_" + std::to_string(run) + ".csv");
    write_log_csv(csv.string(), session.log());
    csvs.push_back(result_columns(csv));
    std::vector<float> flat;
    for (auto* p : session.network().params()) flat.insert(flat.end(), p->value.values().begin(), p->value.values().end());
    finals.push_back(std::move(flat));
  }
  const bool same_csv = csvs[0] == csvs[1] && csvs[0].size() == static_cast<std::size_t>(cfg.steps) + 1;
  const bool same_params = finals[0] == finals[1];

  // bifurcation: 10 steps, checkpoint, 10 more in a fresh session == 20 straight
  TrainConfig short_cfg = cfg;
  short_cfg.steps = 20;
  TrainingSession straight(short_cfg);
  straight.train_single(y, nullptr, 20);
  TrainingSession first(short_cfg);
  first.train_single(y, nullptr, 10);
  const fs::path ckpt = dir / "half.mgrd";
  first.save(ckpt.string());
  TrainingSession resumed(short_cfg, load_checkpoint(ckpt.string()));
  resumed.train_single(y, nullptr, 20);
  bool same_resume = resumed.current_step() == 20;
  const auto a = straight.network().params();
  const auto b = resumed.network().params();
  for (std::size_t i = 0; i < a.size(); ++i) same_resume &= std::ranges::equal(a[i]->value.values(), b[i]->value.values());
  for (std::size_t i = 0; i < resumed.log().size(); ++i) {
    same_resume &= resumed.log()[i].loss == straight.log()[10 + i].loss;
  }
  fs::remove_all(dir);
  return {same_csv && same_params && same_resume,
          fmt("two %d-step runs: loss CSVs (step,loss,lr) %s, final params %s; resume after 10 of 20 steps: "
              "params and losses %s",
              cfg.steps, same_csv ? "identical" : "DIFFER", same_params ? "identical" : "DIFFER",
              same_resume ? "bitwise identical" : "DIFFER")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {"gradient_suite", gradient_suite},
      {"algebraic_identities", algebraic_identities},
      {"loss_locality", loss_locality},
      {"noise_anchor", noise_anchor},
      {"inpainting_anchor", inpainting_anchor},
      {"s2s_smoke", s2s_smoke},
      {"n2v_smoke", n2v_smoke},
      {"convergence_comparison", convergence_comparison},
      {"flop_ordering", flop_ordering},
      {"determinism", determinism},
  };

  CLI::App app{"Acceptance criteria"};
  std::vector<std::string> only;
  bool list = false;
  app.add_option("--only", only, "Run only these criteria");
  app.add_flag("--list", list, "List criterion names");
  CLI11_PARSE(app, argc, argv);
  if (list) {
    for (const auto& c : criteria) std::printf("%s\n", c.name.c_str());
    return 0;
  }
  for (const auto& name : only) {
    if (std::none_of(criteria.begin(), criteria.end(), [&](const auto& c) { return c.name == name; })) {
      std::fprintf(stderr, "unknown criterion '%s'\n", name.c_str());
      return 2;
    }
  }
  spdlog::set_level(spdlog::level::warn);

  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.name) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %-22s %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", c.name.c_str(), o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
