// mgrdn: command-line front end for training, denoising, inpainting and
// the gradient and cost reports.

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mgrdn/config.hpp"
#include "mgrdn/gradcheck.hpp"
#include "mgrdn/image_io.hpp"
#include "mgrdn/manifest.hpp"
#include "mgrdn/metrics.hpp"
#include "mgrdn/noise.hpp"
#include "mgrdn/trainer.hpp"

namespace fs = std::filesystem;
using namespace mgr;

namespace {

struct Common {
  std::string out;
  bool suffix = false;
  std::uint64_t seed = 0;
  bool seed_given = false;
};

struct Run {
  fs::path dir;
  RunManifest manifest;

  fs::path output(const std::string& name) {
    manifest.outputs.push_back(name);
    return dir / name;
  }
};

Run open_run(const std::string& command, const Common& common, const std::vector<std::string>& argv) {
  Run run;
  const fs::path wanted = common.out.empty() ? fs::path("runs") / command : fs::path(common.out);
  run.dir = create_run_dir(wanted, common.suffix ? ExistingRunDir::suffix : ExistingRunDir::fail);
  run.manifest.command = command;
  run.manifest.argv = argv;
  spdlog::info("run directory {}", run.dir.string());
  return run;
}

bool is_image(const fs::path& p) {
  const auto ext = p.extension().string();
  return ext == ".png" || ext == ".pgm";
}

// A file stands for itself; a directory for its images in name order.
std::vector<fs::path> image_paths(const std::vector<std::string>& args) {
  std::vector<fs::path> out;
  for (const auto& a : args) {
    if (fs::is_directory(a)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(a)) {
        if (e.is_regular_file() && is_image(e.path())) found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      out.emplace_back(a);
    }
  }
  if (out.empty()) throw std::runtime_error("no input images");
  return out;
}

Tensor<float> load_pixels(const fs::path& p, RunManifest& m) {
  m.add_input(p);
  return load_image(p.string()).pixels;
}

TrainConfig resolve_config(TrainScheme scheme, const std::string& config_path, bool full_scale,
                           std::optional<int> steps, const Common& common, int channels, RunManifest& m) {
  TrainConfig cfg = TrainConfig::defaults(scheme, full_scale);
  cfg.net.in_channels = channels;
  if (!config_path.empty()) {
    m.add_input(config_path);
    std::ifstream in(config_path);
    if (!in) throw std::runtime_error("cannot read " + config_path);
    Json j = Json::parse(in);
    if (j.contains("scheme") && j["scheme"] != std::string(to_string(scheme))) {
      throw std::invalid_argument("config scheme " + j["scheme"].dump() + " does not match the command");
    }
    j.erase("scheme");
    overlay(j, cfg);
  }
  if (steps) cfg.steps = *steps;
  if (common.seed_given) cfg.seed = common.seed;
  if (cfg.net.in_channels != channels) {
    throw std::invalid_argument("config in_channels " + std::to_string(cfg.net.in_channels) + " but images have " +
                                std::to_string(channels) + " channels");
  }
  cfg.validate();
  m.config = to_json(cfg);
  m.seed = cfg.seed;
  return cfg;
}

void train_with_log(TrainingSession& session, Run& run, const std::function<void()>& body) {
  session.checkpoint_path = (run.dir / "checkpoint.mgrd").string();
  const int every = std::max(1, session.config().steps / 20);
  session.on_step = [every, total = session.config().steps](int step, double loss) {
    if ((step + 1) % every == 0 || step + 1 == total) spdlog::info("step {}/{} loss {:.6f}", step + 1, total, loss);
  };
  body();
  session.save(run.output("checkpoint.mgrd").string());
  write_log_csv(run.output("loss.csv").string(), session.log());
  if (!session.log().empty()) run.manifest.metrics["final_loss"] = session.log().back().loss;
}

// ---------------------------------------------------------------------------

int synth_noise(const Common& common, const std::vector<std::string>& argv, const std::string& clean_dir,
                const NoiseSpec& spec) {
  spec.validate();
  Run run = open_run("synth-noise", common, argv);
  run.manifest.seed = common.seed;
  run.manifest.config = to_json(spec);
  const Rng base(common.seed);
  const auto paths = image_paths({clean_dir});
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const Tensor<float> clean = load_pixels(paths[i], run.manifest);
    Rng rng = base.fork(i);
    const Tensor<float> noisy = corrupt(clean, spec, rng);
    // 8-bit files clamp; the PSNR reported is for what was written
    const auto out = run.output(paths[i].filename().string());
    save_image(noisy, out.string());
    run.manifest.metrics[paths[i].filename().string()] = psnr(load_image(out.string()).pixels, clean);
  }
  run.manifest.write(run.dir);
  return 0;
}

int train_single_cmd(const Common& common, const std::vector<std::string>& argv, const std::string& image,
                     const std::string& config, bool full_scale, std::optional<int> steps,
                     const std::string& clean) {
  Run run = open_run("train-single", common, argv);
  const Tensor<float> y = load_pixels(image, run.manifest);
  const TrainConfig cfg =
      resolve_config(TrainScheme::s2s_single, config, full_scale, steps, common, y.c(), run.manifest);
  TrainingSession session(cfg);
  train_with_log(session, run, [&] { session.train_single(y, nullptr, cfg.steps); });
  Rng rng = Rng(cfg.seed).fork(~std::uint64_t{1});
  const Tensor<float> out = infer_averaged(session.network(), y, cfg.eval_passes, rng);
  save_image(out, run.output("denoised.png").string());
  if (!clean.empty()) {
    const Tensor<float> ref = load_pixels(clean, run.manifest);
    QualityReport report;
    report.add("noisy", y, ref);
    report.add("denoised", out, ref);
    report.write_csv(run.output("quality.csv").string());
    run.manifest.metrics["psnr_noisy"] = report.images[0].psnr_db;
    run.manifest.metrics["psnr_denoised"] = report.images[1].psnr_db;
    spdlog::info("PSNR noisy {:.2f} dB, denoised {:.2f} dB", report.images[0].psnr_db, report.images[1].psnr_db);
  }
  run.manifest.write(run.dir);
  return 0;
}

int train_dataset_cmd(const Common& common, const std::vector<std::string>& argv, const std::string& images,
                      const std::string& config, bool full_scale, std::optional<int> steps) {
  Run run = open_run("train-dataset", common, argv);
  std::vector<Tensor<float>> data;
  for (const auto& p : image_paths({images})) data.push_back(load_pixels(p, run.manifest));
  const TrainConfig cfg =
      resolve_config(TrainScheme::n2v_dataset, config, full_scale, steps, common, data.front().c(), run.manifest);
  TrainingSession session(cfg);
  train_with_log(session, run, [&] { session.train_dataset(data, cfg.steps); });
  run.manifest.write(run.dir);
  return 0;
}

int denoise_cmd(const Common& common, const std::vector<std::string>& argv, const std::string& checkpoint,
                const std::vector<std::string>& inputs, std::optional<int> passes,
                const std::vector<std::string>& clean) {
  Run run = open_run("denoise", common, argv);
  run.manifest.add_input(checkpoint);
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  TrainingSession session(ckpt.config, ckpt);
  const int n_passes = passes.value_or(ckpt.config.eval_passes);
  const std::uint64_t seed = common.seed_given ? common.seed : ckpt.config.seed;
  run.manifest.config = to_json(ckpt.config);
  run.manifest.config["passes"] = n_passes;
  run.manifest.seed = seed;

  const auto paths = image_paths(inputs);
  std::vector<fs::path> refs;
  if (!clean.empty()) {
    refs = image_paths(clean);
    if (refs.size() != paths.size()) {
      throw std::invalid_argument(std::to_string(paths.size()) + " inputs but " + std::to_string(refs.size()) +
                                  " clean references");
    }
  }
  QualityReport report;
  const Rng base(seed);
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const Tensor<float> y = load_pixels(paths[i], run.manifest);
    Rng rng = base.fork(i);
    const Tensor<float> out = infer_averaged(session.network(), y, n_passes, rng);
    save_image(out, run.output(paths[i].filename().string()).string());
    if (!refs.empty()) report.add(paths[i].filename().string(), out, load_pixels(refs[i], run.manifest));
  }
  if (!refs.empty()) {
    report.write_csv(run.output("quality.csv").string());
    run.manifest.metrics["mean_psnr"] = report.mean_psnr();
    run.manifest.metrics["mean_ssim"] = report.mean_ssim();
    spdlog::info("mean PSNR {:.2f} dB, SSIM {:.4f}", report.mean_psnr(), report.mean_ssim());
  }
  run.manifest.write(run.dir);
  return 0;
}

int inpaint_cmd(const Common& common, const std::vector<std::string>& argv, const std::string& image,
                double drop_ratio, const std::string& config, bool full_scale, std::optional<int> steps) {
  Run run = open_run("inpaint", common, argv);
  const Tensor<float> clean = load_pixels(image, run.manifest);
  const TrainConfig cfg =
      resolve_config(TrainScheme::inpaint_single, config, full_scale, steps, common, clean.c(), run.manifest);
  run.manifest.config["drop_ratio"] = drop_ratio;

  Rng drop_rng = Rng(cfg.seed).fork(~std::uint64_t{2});
  const auto corrupted = sample_drop_inpaint(clean, drop_ratio, drop_rng);
  const Tensor<float>& known = corrupted.guide_mask;
  save_image(corrupted.manipulated, run.output("corrupted.png").string());

  TrainingSession session(cfg);
  train_with_log(session, run, [&] { session.train_single(corrupted.manipulated, &known, cfg.steps); });
  Rng rng = Rng(cfg.seed).fork(~std::uint64_t{1});
  const Tensor<float> pred = infer_averaged(session.network(), corrupted.manipulated, cfg.eval_passes, rng, &known);
  // known pixels are kept as observed
  Tensor<float> result = pred;
  const std::size_t plane = known.size();
  for (std::size_t c = 0; c < static_cast<std::size_t>(clean.c()); ++c)
    for (std::size_t i = 0; i < plane; ++i) {
      if (known[i] != 0.0f) result[c * plane + i] = corrupted.manipulated[c * plane + i];
    }
  save_image(result, run.output("inpainted.png").string());

  QualityReport report;
  report.add("corrupted", corrupted.manipulated, clean);
  report.add("inpainted", result, clean);
  report.write_csv(run.output("quality.csv").string());
  for (const auto& q : report.images) {
    run.manifest.metrics["psnr_" + q.image_id] = q.psnr_db;
    run.manifest.metrics["ssim_" + q.image_id] = q.ssim;
  }
  std::printf("corrupted PSNR %.2f dB SSIM %.4f\ninpainted PSNR %.2f dB SSIM %.4f\n", report.images[0].psnr_db,
              report.images[0].ssim, report.images[1].psnr_db, report.images[1].ssim);
  run.manifest.write(run.dir);
  return 0;
}

int eval_cmd(const Common& common, const std::vector<std::string>& argv, const std::vector<std::string>& estimates,
             const std::vector<std::string>& references) {
  Run run = open_run("eval", common, argv);
  const auto est = image_paths(estimates);
  const auto ref = image_paths(references);
  if (est.size() != ref.size()) {
    throw std::invalid_argument(std::to_string(est.size()) + " estimates but " + std::to_string(ref.size()) +
                                " references");
  }
  QualityReport report;
  for (std::size_t i = 0; i < est.size(); ++i) {
    report.add(est[i].filename().string(), load_pixels(est[i], run.manifest), load_pixels(ref[i], run.manifest));
  }
  report.write_csv(run.output("quality.csv").string());
  for (const auto& q : report.images) std::printf("%s,%.4f,%.6f\n", q.image_id.c_str(), q.psnr_db, q.ssim);
  run.manifest.metrics["mean_psnr"] = report.mean_psnr();
  run.manifest.metrics["mean_ssim"] = report.mean_ssim();
  run.manifest.write(run.dir);
  return 0;
}

int gradcheck_cmd(const Common& common, const std::vector<std::string>& argv, int configs) {
  Run run = open_run("gradcheck", common, argv);
  GradcheckOptions opt;
  opt.configs = configs;
  opt.seed = common.seed;
  run.manifest.seed = opt.seed;
  run.manifest.config = {{"configs", opt.configs}, {"eps", opt.eps}, {"tolerance", opt.tolerance}};
  const GradcheckReport report = run_gradcheck(opt);
  std::ofstream csv(run.output("gradcheck.csv"));
  csv << "config,kind,shape,params,feature,mask\n";
  for (const auto& c : report.cases) {
    const bool ok = c.worst() < report.tolerance;
    std::printf("%-4s cfg %2d %-8s %-40s worst %.3g\n", ok ? "ok" : "FAIL", c.config,
                std::string(to_string(c.kind)).c_str(), c.shape.c_str(), c.worst());
    csv << c.config << ',' << to_string(c.kind) << ',' << c.shape << ',' << c.params << ',' << c.feature << ','
        << c.mask << '\n';
  }
  std::printf("%s: worst relative error %.3g (tolerance %.0e) over %zu layer checks in %.1f s\n",
              report.passed() ? "PASS" : "FAIL", report.worst(), report.tolerance, report.cases.size(),
              report.seconds);
  run.manifest.metrics = {{"worst", report.worst()}, {"seconds", report.seconds}, {"passed", report.passed()}};
  run.manifest.write(run.dir);
  return report.passed() ? 0 : 1;
}

int flops_cmd(const Common& common, const std::vector<std::string>& argv, const std::string& config, NetConfig net,
              int h, int w) {
  Run run = open_run("flops", common, argv);
  if (!config.empty()) {
    run.manifest.add_input(config);
    std::ifstream in(config);
    if (!in) throw std::runtime_error("cannot read " + config);
    overlay(Json::parse(in), net);
  }
  net.validate();
  run.manifest.config = to_json(net);
  run.manifest.config["height"] = h;
  run.manifest.config["width"] = w;
  Rng rng(common.seed);
  Network<float> model(net, rng);
  std::ofstream csv(run.output("flops.csv"));
  csv << "layer,op,c_in,c_out,k,h,w,macs,elementwise,total\n";
  std::printf("%-10s %-8s %5s %5s %2s %5s %5s %14s %12s %14s\n", "layer", "op", "c_in", "c_out", "k", "h", "w", "macs",
              "elementwise", "total");
  std::uint64_t macs = 0, elem = 0;
  for (const auto& r : model.cost_table(h, w)) {
    std::printf("%-10s %-8s %5d %5d %2d %5d %5d %14llu %12llu %14llu\n", r.name.c_str(), r.op.c_str(), r.c_in,
                r.c_out, r.k, r.h, r.w, static_cast<unsigned long long>(r.cost.macs),
                static_cast<unsigned long long>(r.cost.elementwise), static_cast<unsigned long long>(r.cost.total()));
    csv << r.name << ',' << r.op << ',' << r.c_in << ',' << r.c_out << ',' << r.k << ',' << r.h << ',' << r.w << ','
        << r.cost.macs << ',' << r.cost.elementwise << ',' << r.cost.total() << '\n';
    macs += r.cost.macs;
    elem += r.cost.elementwise;
  }
  std::printf("%-10s %-8s %5s %5s %2s %5s %5s %14llu %12llu %14llu\n", "total", "", "", "", "", "", "",
              static_cast<unsigned long long>(macs), static_cast<unsigned long long>(elem),
              static_cast<unsigned long long>(macs + elem));
  std::printf("params %zu\n", model.param_count());
  run.manifest.metrics = {{"macs", macs}, {"elementwise", elem}, {"params", model.param_count()}};
  run.manifest.write(run.dir);
  return 0;
}

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("--out", common.out, "Run directory (default runs/<command>)");
  cmd->add_flag("--suffix", common.suffix, "If the run directory exists, use <dir>-1, <dir>-2, ... instead of failing");
  cmd->add_option("--seed", common.seed, "Random seed")->each([&common](const std::string&) {
    common.seed_given = true;
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mask-guided residual convolution denoising and inpainting"};
  app.require_subcommand(1);
  app.fallthrough();
  std::vector<std::string> args(argv, argv + argc);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Only log warnings and errors");

  Common common;
  std::string config, image, clean, clean_dir, images, checkpoint;
  std::vector<std::string> inputs, references, estimates, clean_refs;
  bool full_scale = false;
  std::optional<int> steps, passes;
  NoiseSpec noise;
  std::string noise_kind = "gauss_fixed";
  double drop_ratio = 0.5;
  int configs = 20;
  int height = 256, width = 256;
  NetConfig net;
  std::string conv_kind = "mgr";

  auto* synth = app.add_subcommand("synth-noise", "Corrupt a directory of clean images with Gaussian noise");
  add_common(synth, common);
  synth->add_option("--clean", clean_dir, "Directory of clean images")->required()->check(CLI::ExistingDirectory);
  synth->add_option("--noise", noise_kind, "gauss_fixed or gauss_range")->check(CLI::IsMember({"gauss_fixed", "gauss_range"}));
  synth->add_option("--sigma", noise.sigma, "Noise level on the 0-255 scale");
  synth->add_option("--sigma-lo", noise.sigma_lo, "Lower noise level for gauss_range");
  synth->add_option("--sigma-hi", noise.sigma_hi, "Upper noise level for gauss_range");

  auto add_training = [&](CLI::App* cmd) {
    add_common(cmd, common);
    cmd->add_option("--config", config, "TrainConfig JSON")->check(CLI::ExistingFile);
    cmd->add_flag("--full-scale", full_scale, "Start from full-scale defaults instead of desk-scale ones");
    cmd->add_option("--steps", steps, "Override the number of training steps")->check(CLI::NonNegativeNumber);
  };

  auto* tsingle = app.add_subcommand("train-single", "Self-supervised training on one noisy image");
  add_training(tsingle);
  tsingle->add_option("--image", image, "Noisy image")->required()->check(CLI::ExistingFile);
  tsingle->add_option("--clean", clean, "Clean reference for PSNR/SSIM")->check(CLI::ExistingFile);

  auto* tdata = app.add_subcommand("train-dataset", "Blind-spot training on a directory of noisy images");
  add_training(tdata);
  tdata->add_option("--images", images, "Directory of training images")->required()->check(CLI::ExistingDirectory);

  auto* den = app.add_subcommand("denoise", "Denoise images with a trained checkpoint");
  add_common(den, common);
  den->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  den->add_option("--input", inputs, "Noisy images or directories")->required()->check(CLI::ExistingPath);
  den->add_option("--passes", passes, "Averaged inference passes (default from the checkpoint config)")
      ->check(CLI::PositiveNumber);
  den->add_option("--clean", clean_refs, "Clean references, in input order")->check(CLI::ExistingPath);

  auto* inp = app.add_subcommand("inpaint", "Drop pixels from a clean image and restore them");
  add_training(inp);
  inp->add_option("--image", image, "Clean image")->required()->check(CLI::ExistingFile);
  inp->add_option("--drop-ratio", drop_ratio, "Fraction of pixels dropped")->check(CLI::Range(0.0, 1.0));

  auto* ev = app.add_subcommand("eval", "PSNR/SSIM of estimates against references");
  add_common(ev, common);
  ev->add_option("--estimate", estimates, "Estimated images or directories")->required()->check(CLI::ExistingPath);
  ev->add_option("--reference", references, "Reference images or directories")->required()->check(CLI::ExistingPath);

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient check of every layer kind (64-bit)");
  add_common(gc, common);
  gc->add_option("--configs", configs, "Random configurations")->check(CLI::PositiveNumber);

  auto* fl = app.add_subcommand("flops", "Per-layer forward operation counts for a network config");
  add_common(fl, common);
  fl->add_option("--config", config, "NetConfig JSON")->check(CLI::ExistingFile);
  fl->add_option("--kind", conv_kind, "Encoder conv kind")
      ->check(CLI::IsMember({"vanilla", "pconv", "lbam", "gated", "mgr"}));
  fl->add_option("--in-channels", net.in_channels);
  fl->add_option("--depth", net.depth);
  fl->add_option("--enc-channels", net.enc_channels);
  fl->add_option("--dec-channels", net.dec_channels);
  fl->add_option("--height", height)->check(CLI::PositiveNumber);
  fl->add_option("--width", width)->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  if (quiet) spdlog::set_level(spdlog::level::warn);

  try {
    if (*synth) {
      noise.kind = parse_noise_kind(noise_kind);
      return synth_noise(common, args, clean_dir, noise);
    }
    if (*tsingle) return train_single_cmd(common, args, image, config, full_scale, steps, clean);
    if (*tdata) return train_dataset_cmd(common, args, images, config, full_scale, steps);
    if (*den) return denoise_cmd(common, args, checkpoint, inputs, passes, clean_refs);
    if (*inp) return inpaint_cmd(common, args, image, drop_ratio, config, full_scale, steps);
    if (*ev) return eval_cmd(common, args, estimates, references);
    if (*gc) return gradcheck_cmd(common, args, configs);
    if (*fl) {
      net.conv_kind = parse_conv_kind(conv_kind);
      return flops_cmd(common, args, config, net, height, width);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
