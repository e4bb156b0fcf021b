#include "mgrdn/trainer.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "mgrdn/config.hpp"
#include "mgrdn/image_io.hpp"

namespace mgr {

std::string_view to_string(TrainScheme scheme) {
  switch (scheme) {
    case TrainScheme::s2s_single: return "s2s_single";
    case TrainScheme::n2v_dataset: return "n2v_dataset";
    case TrainScheme::inpaint_single: return "inpaint_single";
  }
  return "unknown";
}

TrainScheme parse_train_scheme(std::string_view name) {
  for (TrainScheme s : {TrainScheme::s2s_single, TrainScheme::n2v_dataset, TrainScheme::inpaint_single}) {
    if (to_string(s) == name) return s;
  }
  throw std::invalid_argument("unknown training scheme '" + std::string(name) +
                              "' (expected s2s_single|n2v_dataset|inpaint_single)");
}

TrainConfig TrainConfig::defaults(TrainScheme scheme, bool full_scale) {
  TrainConfig c;
  c.scheme = scheme;
  if (scheme == TrainScheme::n2v_dataset) {
    c.steps = full_scale ? 500000 : 2000;
    c.lr = 3e-4;
    c.batch = 4;
    c.crop = full_scale ? 256 : 64;
    c.mask.kind = MaskKind::neighbor_n2v;
    c.net.decoder_dropout = 0.0;
    c.eval_passes = 1;
  } else {
    c.steps = full_scale ? 150000 : 2000;
    c.lr = 1e-4;
    c.batch = 1;
    c.crop = 0;
    c.mask.kind = MaskKind::bernoulli_s2s;
    c.mask.rate = 0.7;
    c.net.decoder_dropout = 0.7;
    c.eval_passes = 100;
  }
  c.log_every = full_scale ? 100 : 1;
  return c;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("TrainConfig: " + m); };
  net.validate();
  mask.validate();
  noise.validate();
  if (steps < 0) fail("steps must be >= 0");
  if (!(lr > 0.0) || !std::isfinite(lr)) fail("lr must be > 0");
  if (batch < 1) fail("batch must be >= 1");
  if (crop < 0) fail("crop must be >= 0");
  if (crop % net.size_multiple() != 0) {
    fail("crop " + std::to_string(crop) + " must be divisible by 2^depth = " + std::to_string(net.size_multiple()));
  }
  if (eval_passes < 1) fail("eval_passes must be >= 1");
  if (checkpoint_every < 0) fail("checkpoint_every must be >= 0");
  if (log_every < 1) fail("log_every must be >= 1");
}

double learning_rate(const TrainConfig& cfg, int step) {
  if (cfg.scheme != TrainScheme::n2v_dataset || cfg.steps <= 0) return cfg.lr;
  const double t = static_cast<double>(step) / static_cast<double>(cfg.steps);
  return cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

// ---------------------------------------------------------------------------

void adam_step(const std::vector<Param<float>*>& params, AdamState& state, double lr) {
  for (const auto* p : params) {
    if (!p->grad.all_finite()) {
      spdlog::error("adam_step: non-finite gradient in {}; step aborted", p->name);
      throw std::runtime_error("non-finite gradient in " + p->name);
    }
  }
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.emplace_back(p->value.shape());
      state.v.emplace_back(p->value.shape());
    }
  }
  if (state.m.size() != params.size()) throw std::logic_error("adam_step: parameter list changed");
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  const float b1 = static_cast<float>(state.beta1), b2 = static_cast<float>(state.beta2);
  const float step_size = static_cast<float>(lr / bc1);
  const float inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
  const float eps = static_cast<float>(state.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param<float>& p = *params[i];
    float* m = state.m[i].data();
    float* v = state.v[i].data();
    float* w = p.value.data();
    const float* g = p.grad.data();
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      m[k] = b1 * m[k] + (1.0f - b1) * g[k];
      v[k] = b2 * v[k] + (1.0f - b2) * g[k] * g[k];
      w[k] -= step_size * m[k] / (std::sqrt(v[k]) * inv_sqrt_bc2 + eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Checkpoint file

namespace {

constexpr char kMagic[4] = {'M', 'G', 'R', 'D'};

template <typename U>
void put(std::string& buf, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) buf.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
}

void put_f32(std::string& buf, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put(buf, bits);
}

void put_entry(std::string& buf, const std::string& name, const Tensor<float>& t) {
  if (name.size() > 0xffff) throw std::invalid_argument("checkpoint entry name too long");
  put(buf, static_cast<std::uint16_t>(name.size()));
  buf += name;
  put(buf, static_cast<std::uint8_t>(4));
  for (int d : {t.n(), t.c(), t.h(), t.w()}) put(buf, static_cast<std::uint32_t>(d));
  for (float f : t.values()) put_f32(buf, f);
}

Tensor<float> u64_entry(std::uint64_t v) {
  Tensor<float> t(Shape{1, 1, 1, 4});
  for (int i = 0; i < 4; ++i) t[i] = static_cast<float>((v >> (16 * i)) & 0xffff);
  return t;
}

std::uint64_t u64_from(const Tensor<float>& t, const std::string& name) {
  if (t.size() != 4) throw std::runtime_error("checkpoint: malformed " + name);
  std::uint64_t v = 0;
  for (int i = 0; i < 4; ++i) {
    const float f = t[i];
    if (!(f >= 0.0f && f <= 65535.0f) || f != std::floor(f)) throw std::runtime_error("checkpoint: malformed " + name);
    v |= static_cast<std::uint64_t>(f) << (16 * i);
  }
  return v;
}

Tensor<float> text_entry(const std::string& s) {
  Tensor<float> t(Shape{1, 1, 1, static_cast<int>(s.size())});
  for (std::size_t i = 0; i < s.size(); ++i) t[i] = static_cast<float>(static_cast<unsigned char>(s[i]));
  return t;
}

std::string text_from(const Tensor<float>& t) {
  std::string s(t.size(), '\0');
  for (std::size_t i = 0; i < t.size(); ++i) s[i] = static_cast<char>(static_cast<unsigned char>(t[i]));
  return s;
}

class Reader {
 public:
  Reader(const std::string& data, const std::string& path) : d_(data), path_(path) {}
  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(d_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return static_cast<U>(v);
  }
  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s = d_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == d_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (d_.size() - pos_ < n) {
      throw std::runtime_error("checkpoint " + path_ + " is truncated (while reading " + what + ")");
    }
  }
  const std::string& d_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::string& path, Network<float>& net, const AdamState& adam, const TrainConfig& cfg) {
  std::vector<std::pair<std::string, const Tensor<float>*>> items;
  const auto params = net.params();
  for (const auto* p : params) items.emplace_back(p->name, &p->value);
  const bool has_moments = !adam.m.empty();
  if (has_moments) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      items.emplace_back("adam.m." + params[i]->name, &adam.m[i]);
      items.emplace_back("adam.v." + params[i]->name, &adam.v[i]);
    }
  }
  const Tensor<float> step = u64_entry(static_cast<std::uint64_t>(adam.step));
  const Tensor<float> seed = u64_entry(cfg.seed);
  const Tensor<float> config = text_entry(to_json(cfg).dump());
  items.emplace_back("meta.step", &step);
  items.emplace_back("meta.seed", &seed);
  items.emplace_back("meta.config", &config);

  std::string buf(kMagic, 4);
  put(buf, kCheckpointVersion);
  put(buf, static_cast<std::uint32_t>(items.size()));
  for (const auto& [name, t] : items) put_entry(buf, name, *t);

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("failed writing checkpoint " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw std::runtime_error("cannot move checkpoint into " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(data, path);
  if (r.bytes(4, "magic") != std::string(kMagic, 4)) throw std::runtime_error("checkpoint " + path + ": bad magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint " + path + ": unsupported format version " + std::to_string(version) +
                             " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const auto count = r.get<std::uint32_t>("entry count");
  Checkpoint ck;
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto len = r.get<std::uint16_t>("name length");
    std::string name = r.bytes(len, "name");
    const auto rank = r.get<std::uint8_t>("rank");
    if (rank > 4) throw std::runtime_error("checkpoint " + path + ": entry " + name + " has rank > 4");
    int dims[4] = {1, 1, 1, 1};
    for (int i = 0; i < rank; ++i) {
      const auto d = r.get<std::uint32_t>("dims");
      if (d > (1u << 30)) throw std::runtime_error("checkpoint " + path + ": implausible dimension in " + name);
      dims[4 - rank + i] = static_cast<int>(d);
    }
    const Shape s{dims[0], dims[1], dims[2], dims[3]};
    const std::string raw = r.bytes(s.numel() * 4, "values");
    std::vector<float> values(s.numel());
    for (std::size_t i = 0; i < values.size(); ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(raw[i * 4 + b])) << (8 * b);
      std::memcpy(&values[i], &bits, 4);
    }
    if (!ck.entries.emplace(name, Tensor<float>(s, std::move(values))).second) {
      throw std::runtime_error("checkpoint " + path + ": duplicate entry " + name);
    }
  }
  if (!r.done()) throw std::runtime_error("checkpoint " + path + ": trailing bytes after last entry");
  for (const char* key : {"meta.step", "meta.seed", "meta.config"}) {
    if (!ck.entries.count(key)) throw std::runtime_error("checkpoint " + path + ": missing " + key);
  }
  ck.step = static_cast<std::int64_t>(u64_from(ck.entries.at("meta.step"), "meta.step"));
  try {
    ck.config = train_config_from_json(Json::parse(text_from(ck.entries.at("meta.config"))));
  } catch (const std::exception& e) {
    throw std::runtime_error("checkpoint " + path + ": bad config: " + e.what());
  }
  if (u64_from(ck.entries.at("meta.seed"), "meta.seed") != ck.config.seed) {
    throw std::runtime_error("checkpoint " + path + ": seed does not match config");
  }
  return ck;
}

void restore(const Checkpoint& ck, Network<float>& net, AdamState* adam) {
  const auto params = net.params();
  auto find = [&](const std::string& name, const Shape& shape) -> const Tensor<float>& {
    auto it = ck.entries.find(name);
    if (it == ck.entries.end()) throw std::runtime_error("checkpoint is missing " + name);
    if (it->second.shape() != shape) {
      throw std::runtime_error("checkpoint entry " + name + " has shape " + it->second.shape().str() + ", expected " +
                               shape.str());
    }
    return it->second;
  };
  // Validate everything before writing anything.
  const bool moments = adam && ck.entries.count("adam.m." + params.front()->name);
  for (const auto* p : params) {
    find(p->name, p->value.shape());
    if (moments) {
      find("adam.m." + p->name, p->value.shape());
      find("adam.v." + p->name, p->value.shape());
    }
  }
  for (auto* p : params) p->value = find(p->name, p->value.shape());
  if (adam) {
    adam->m.clear();
    adam->v.clear();
    adam->step = ck.step;
    if (moments) {
      for (const auto* p : params) {
        adam->m.push_back(find("adam.m." + p->name, p->value.shape()));
        adam->v.push_back(find("adam.v." + p->name, p->value.shape()));
      }
    }
  }
}

// ---------------------------------------------------------------------------

void write_log_csv(const std::string& path, const std::vector<LogRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "step,loss,lr,wall_ms\n";
  char line[160];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%d,%.9g,%.9g,%.3f\n", r.step, r.loss, r.lr, r.wall_ms);
    out << line;
  }
}

namespace {

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

Tensor<float> stack(const std::vector<Tensor<float>>& items) {
  const Shape s = items.front().shape();
  Tensor<float> out(Shape{static_cast<int>(items.size()) * s.n, s.c, s.h, s.w});
  std::size_t off = 0;
  for (const auto& t : items) {
    if (t.c() != s.c || t.h() != s.h || t.w() != s.w) throw std::invalid_argument("stack: shape mismatch");
    std::copy(t.values().begin(), t.values().end(), out.data() + off);
    off += t.size();
  }
  return out;
}

}  // namespace

Tensor<float> reflect_pad(const Tensor<float>& x, int multiple, Padding* applied) {
  Padding p;
  p.bottom = (multiple - x.h() % multiple) % multiple;
  p.right = (multiple - x.w() % multiple) % multiple;
  if (applied) *applied = p;
  if (p.bottom == 0 && p.right == 0) return x;
  const int h = x.h() + p.bottom, w = x.w() + p.right;
  Tensor<float> out(Shape{x.n(), x.c(), h, w});
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) out.at(n, c, y, xx) = x.at(n, c, reflect_index(y, x.h()), reflect_index(xx, x.w()));
  return out;
}

TrainingSession::TrainingSession(const TrainConfig& cfg)
    : cfg_((cfg.validate(), cfg)), init_rng_(Rng(cfg.seed).fork(~0ULL)), net_(cfg.net, init_rng_) {}

TrainingSession::TrainingSession(const TrainConfig& cfg, const Checkpoint& resume) : TrainingSession(cfg) {
  restore(resume, net_, &adam_);
  step_ = static_cast<int>(resume.step);
}

void TrainingSession::finish_step(double loss, double wall_ms) {
  ++step_;
  if (on_step) on_step(step_, loss);
  if (step_ % cfg_.log_every == 0) log_.push_back({step_, loss, learning_rate(cfg_, step_ - 1), wall_ms});
  if (cfg_.checkpoint_every > 0 && step_ % cfg_.checkpoint_every == 0 && !checkpoint_path.empty()) {
    save(checkpoint_path);
  }
}

double TrainingSession::step(const MaskedFeature<float>& input, const Tensor<float>& target,
                             const Tensor<float>& loss_mask, Rng& rng) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto params = net_.params();
  net_.zero_grad();
  const Tensor<float> prediction = net_.forward(input, true, rng);
  const auto loss = masked_mse(prediction, target, loss_mask);
  auto diverged = [&](const std::string& why) {
    net_.clear_cache();
    if (!checkpoint_path.empty()) {
      save(checkpoint_path);
      spdlog::error("step {}: {}; last finite state saved to {}", step_ + 1, why, checkpoint_path);
    }
    throw std::runtime_error("training diverged at step " + std::to_string(step_ + 1) + ": " + why);
  };
  if (!std::isfinite(loss.loss)) diverged("non-finite loss");
  if (on_loss_grad) on_loss_grad(step_, loss.grad, loss_mask);
  net_.backward(loss.grad);
  try {
    adam_step(params, adam_, learning_rate(cfg_, step_));
  } catch (const std::runtime_error& e) {
    diverged(e.what());
  }
  net_.constrain();
  for (const auto* p : params) require_finite(p->value, p->name);
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  finish_step(loss.loss, ms);
  return loss.loss;
}

void TrainingSession::train_single(const Tensor<float>& y, const Tensor<float>* known_mask, int until_step) {
  if (y.n() != 1) throw std::invalid_argument("train_single: expected one image, got " + y.shape().str());
  const int m = cfg_.net.size_multiple();
  Padding pad;
  const Tensor<float> yp = reflect_pad(y, m, &pad);
  if (pad.bottom || pad.right) {
    spdlog::info("train_single: reflection-padded {}x{} by {} rows, {} columns", y.h(), y.w(), pad.bottom, pad.right);
  }
  Tensor<float> known;
  if (known_mask) {
    if (known_mask->shape() != Shape{1, 1, y.h(), y.w()}) throw std::invalid_argument("train_single: bad known mask");
    known = reflect_pad(*known_mask, m, nullptr);
  }
  const int end = std::min(until_step, cfg_.steps);
  while (step_ < end) {
    Rng rng = Rng(cfg_.seed).fork(static_cast<std::uint64_t>(step_));
    std::vector<Tensor<float>> inputs, masks, guides;
    for (int b = 0; b < cfg_.batch; ++b) {
      auto s = draw_sample(yp, cfg_.mask, rng);
      Tensor<float> guide = s.guide_mask;
      Tensor<float> in_mask = s.guide_mask;
      if (known_mask) {
        // visible: kept by both masks; supervised: known pixels hidden this step
        for (std::size_t i = 0; i < guide.size(); ++i) {
          in_mask[i] = s.guide_mask[i] * known[i];
          guide[i] = 1.0f - (1.0f - s.guide_mask[i]) * known[i];
        }
      }
      inputs.push_back(std::move(s.manipulated));
      masks.push_back(std::move(in_mask));
      guides.push_back(std::move(guide));
    }
    Tensor<float> target = stack(std::vector<Tensor<float>>(cfg_.batch, yp));
    step({stack(inputs), stack(masks)}, target, stack(guides), rng);
  }
}

void TrainingSession::train_dataset(const std::vector<Tensor<float>>& images, int until_step) {
  if (images.empty()) throw std::invalid_argument("train_dataset: no images");
  const int m = cfg_.net.size_multiple();
  for (const auto& im : images) {
    if (im.n() != 1 || im.c() != cfg_.net.in_channels) {
      throw std::invalid_argument("train_dataset: image " + im.shape().str() + " does not match in_channels");
    }
    if (cfg_.crop > 0 && (im.h() < cfg_.crop || im.w() < cfg_.crop)) {
      throw std::invalid_argument("train_dataset: image " + im.shape().str() + " is smaller than crop " +
                                  std::to_string(cfg_.crop));
    }
    if (cfg_.crop == 0 && (im.h() != images.front().h() || im.w() != images.front().w())) {
      throw std::invalid_argument("train_dataset: crop 0 needs equally sized images");
    }
  }
  const int end = std::min(until_step, cfg_.steps);
  while (step_ < end) {
    Rng rng = Rng(cfg_.seed).fork(static_cast<std::uint64_t>(step_));
    std::vector<Tensor<float>> patches;
    for (int b = 0; b < cfg_.batch; ++b) {
      const auto& im = images[rng.index(images.size())];
      Tensor<float> patch;
      if (cfg_.crop > 0) {
        const int top = static_cast<int>(rng.index(im.h() - cfg_.crop + 1));
        const int left = static_cast<int>(rng.index(im.w() - cfg_.crop + 1));
        patch = crop(im, top, left, cfg_.crop, cfg_.crop);
      } else {
        patch = reflect_pad(im, m, nullptr);
      }
      if (cfg_.add_noise) patch = corrupt(patch, cfg_.noise, rng);
      patches.push_back(std::move(patch));
    }
    const Tensor<float> batch = stack(patches);
    auto s = draw_sample(batch, cfg_.mask, rng);
    step({s.manipulated, s.guide_mask}, s.target, s.guide_mask, rng);
  }
}

Network<float> train_single(const Tensor<float>& y, const TrainConfig& cfg) {
  TrainingSession session(cfg);
  session.train_single(y, nullptr, cfg.steps);
  return std::move(session.network());
}

Network<float> train_dataset(const std::vector<Tensor<float>>& images, const TrainConfig& cfg) {
  TrainingSession session(cfg);
  session.train_dataset(images, cfg.steps);
  return std::move(session.network());
}

Tensor<float> infer_averaged(Network<float>& net, const Tensor<float>& y, int passes, Rng& rng,
                             const Tensor<float>* known_mask) {
  if (passes < 1) throw std::invalid_argument("infer_averaged: passes must be >= 1");
  Padding pad;
  const int m = net.config().size_multiple();
  const Tensor<float> yp = reflect_pad(y, m, &pad);
  Tensor<float> mask(Shape{yp.n(), 1, yp.h(), yp.w()}, 1.0f);
  if (known_mask) {
    if (known_mask->shape() != Shape{y.n(), 1, y.h(), y.w()}) {
      throw std::invalid_argument("infer_averaged: known mask " + known_mask->shape().str() + " does not match " +
                                  y.shape().str());
    }
    mask = reflect_pad(*known_mask, m, nullptr);
  }
  const MaskedFeature<float> input{yp, mask};
  std::vector<double> acc(yp.size(), 0.0);
  for (int p = 0; p < passes; ++p) {
    Rng pass_rng = rng.fork(static_cast<std::uint64_t>(p));
    const Tensor<float> out = net.forward(input, true, pass_rng, false);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += out[i];
  }
  Tensor<float> mean(yp.shape());
  for (std::size_t i = 0; i < acc.size(); ++i) {
    mean[i] = std::clamp(static_cast<float>(acc[i] / passes), 0.0f, 1.0f);
  }
  if (pad.bottom == 0 && pad.right == 0) return mean;
  Tensor<float> out(y.shape());
  for (int n = 0; n < y.n(); ++n)
    for (int c = 0; c < y.c(); ++c)
      for (int r = 0; r < y.h(); ++r)
        for (int x = 0; x < y.w(); ++x) out.at(n, c, r, x) = mean.at(n, c, r, x);
  return out;
}

}  // namespace mgr
