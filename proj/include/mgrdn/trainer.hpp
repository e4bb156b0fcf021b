#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mgrdn/blindspot.hpp"
#include "mgrdn/noise.hpp"
#include "mgrdn/unet.hpp"

namespace mgr {

enum class TrainScheme { s2s_single, n2v_dataset, inpaint_single };

std::string_view to_string(TrainScheme scheme);
TrainScheme parse_train_scheme(std::string_view name);

struct TrainConfig {
  TrainScheme scheme = TrainScheme::s2s_single;
  int steps = 2000;
  double lr = 1e-4;
  int batch = 1;
  int crop = 0;  // 0: full image
  std::uint64_t seed = 0;
  MaskScheme mask;
  NetConfig net;
  int eval_passes = 100;
  int checkpoint_every = 0;  // 0: never
  int log_every = 1;
  /// Dataset training only: corrupt each crop with `noise` (otherwise the
  /// images are taken as already noisy).
  bool add_noise = false;
  NoiseSpec noise;

  /// Desk-scale or full-scale defaults for a scheme.
  static TrainConfig defaults(TrainScheme scheme, bool full_scale = false);
  void validate() const;
};

/// Learning rate at `step` (0-based): constant for single-image schemes,
/// cosine decay to 0 over `steps` for the dataset scheme.
double learning_rate(const TrainConfig& cfg, int step);

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::vector<Tensor<float>> m;
  std::vector<Tensor<float>> v;
};

/// One Adam update with bias correction. Throws std::runtime_error before
/// touching any parameter if a gradient is non-finite.
void adam_step(const std::vector<Param<float>*>& params, AdamState& state, double lr);

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  TrainConfig config;
  std::int64_t step = 0;
  std::map<std::string, Tensor<float>> entries;
};

/// Writes params, Adam moments, the step counter, the seed and the config.
void save_checkpoint(const std::string& path, Network<float>& net, const AdamState& adam,
                     const TrainConfig& cfg);
/// Parses and validates the whole file before returning. Throws
/// std::runtime_error on bad magic, version, truncation or trailing bytes.
Checkpoint load_checkpoint(const std::string& path);
/// Copies checkpoint params (and moments when `adam` is non-null) into place.
/// Throws on any missing name or shape mismatch, leaving targets untouched.
void restore(const Checkpoint& ckpt, Network<float>& net, AdamState* adam);

// ---------------------------------------------------------------------------
// Training

struct LogRow {
  int step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double wall_ms = 0.0;
};

void write_log_csv(const std::string& path, const std::vector<LogRow>& rows);

struct Padding {
  int bottom = 0;
  int right = 0;
};

/// Reflection-pads bottom/right so h and w become multiples of `multiple`.
Tensor<float> reflect_pad(const Tensor<float>& x, int multiple, Padding* applied);

/// A network, its optimizer state and its step counter.
class TrainingSession {
 public:
  explicit TrainingSession(const TrainConfig& cfg);
  TrainingSession(const TrainConfig& cfg, const Checkpoint& resume);

  /// Runs steps until `until_step` (exclusive, capped at cfg.steps).
  /// `on_step` sees every step's loss.
  void train_single(const Tensor<float>& y, const Tensor<float>* known_mask, int until_step);
  void train_dataset(const std::vector<Tensor<float>>& images, int until_step);

  /// Single step on a prepared batch; returns the loss.
  double step(const MaskedFeature<float>& input, const Tensor<float>& target,
              const Tensor<float>& loss_mask, Rng& rng);

  void save(const std::string& path) { save_checkpoint(path, net_, adam_, cfg_); }

  Network<float>& network() { return net_; }
  const TrainConfig& config() const { return cfg_; }
  const AdamState& adam() const { return adam_; }
  int current_step() const { return step_; }
  const std::vector<LogRow>& log() const { return log_; }

  /// Where to write the last finite state if a step diverges; also used for
  /// periodic checkpoints.
  std::string checkpoint_path;
  std::function<void(int step, double loss)> on_step;
  /// Test hook: sees the loss gradient w.r.t. the prediction each step.
  std::function<void(int step, const Tensor<float>& grad, const Tensor<float>& loss_mask)> on_loss_grad;

 private:
  void finish_step(double loss, double wall_ms);

  TrainConfig cfg_;
  Rng init_rng_;
  Network<float> net_;
  AdamState adam_;
  int step_ = 0;
  std::vector<LogRow> log_;
};

/// Convenience wrappers.
Network<float> train_single(const Tensor<float>& y, const TrainConfig& cfg);
Network<float> train_dataset(const std::vector<Tensor<float>>& images, const TrainConfig& cfg);

/// Mean of `passes` forward passes with decoder dropout active, clamped to
/// [0,1]. Pads to the network's size multiple. The input mask is all ones
/// unless `known_mask` (n,1,h,w) marks the valid pixels, as for inpainting.
Tensor<float> infer_averaged(Network<float>& net, const Tensor<float>& y, int passes, Rng& rng,
                             const Tensor<float>* known_mask = nullptr);

}  // namespace mgr
