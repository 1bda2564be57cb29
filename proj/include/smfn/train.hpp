#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "smfn/data.hpp"
#include "smfn/model.hpp"

namespace smfn {

// ---------------------------------------------------------------------------
// Adam

template <typename T>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t t = 0;
  std::map<std::string, Tensor<T>> m;
  std::map<std::string, Tensor<T>> v;

  /// Zero moments shaped like `params`.
  static AdamState init(const std::map<std::string, Tensor<T>>& params, double beta1 = 0.9, double beta2 = 0.999,
                        double eps = 1e-8);

  /// "adam/t", "adam/m/<name>", "adam/v/<name>".
  std::map<std::string, Tensor<float>> to_tensors() const;
  static AdamState from_tensors(const std::map<std::string, Tensor<float>>& tensors,
                                const std::map<std::string, Tensor<T>>& params, double beta1, double beta2,
                                double eps);
};

/// One bias-corrected Adam update of every parameter. Parameters without an
/// entry in `grads` see a zero gradient.
template <typename T>
void adam_step(std::map<std::string, Tensor<T>>& params, const std::map<std::string, Tensor<T>>& grads,
               AdamState<T>& state, double lr);

/// Same, reading each parameter's own gradient buffer.
template <typename T>
void adam_step(std::map<std::string, Tensor<T>>& params, AdamState<T>& state, double lr);

// ---------------------------------------------------------------------------
// Configuration

struct TrainConfig {
  SmfnConfig model;
  double initial_lr = 1e-4;
  std::size_t lr_halving_period_epochs = 20;
  std::size_t epochs = 60;
  std::size_t steps_per_epoch = 200;
  std::size_t max_steps = 0;  // 0: epochs * steps_per_epoch
  std::size_t batch_size = 16;
  std::size_t patch = 32;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 200;  // steps; 0 keeps only the final checkpoint
  bool patch_latitude = true;          // weight patch rows by their true latitude
  bool augment = true;
  bool full_frame = false;   // samples whole LR frames instead of patches
  bool fixed_batch = false;  // draws one batch and reuses it every step
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  std::size_t total_steps() const { return max_steps ? max_steps : epochs * steps_per_epoch; }
  void validate() const;

  /// Model keys followed by training keys, in a fixed order.
  std::vector<std::pair<std::string, std::string>> entries() const;
  bool set(const std::string& key, const std::string& value);

  /// Flat `key = value` text; `#` starts a comment.
  std::string serialize() const;
  static TrainConfig parse(const std::string& text);
  static TrainConfig load(const std::string& path);
};

/// initial_lr * 0.5^floor(epoch / period).
double lr_schedule(std::size_t epoch, const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Training

/// Samples stacked along the batch axis.
struct TrainBatch {
  std::vector<Tensor<float>> frames;  // 2N+1 tensors (B, 1, p, p)
  Tensor<float> hr;                   // (B, 1, s p, s p)
  Tensor<float> lr_target;            // target LR frame (B, 1, p, p)
  Tensor<float> hr_weights;           // (B, 1, s p, 1)
  Tensor<float> lr_weights;           // (B, 1, p, 1)
};

TrainBatch assemble_batch(const std::vector<PatchSample>& samples, bool patch_latitude);

/// One training batch as train() draws it: random patches, or whole frames
/// when cfg.full_frame is set.
std::vector<PatchSample> draw_training_batch(const TrainConfig& cfg, const Dataset& data, std::mt19937_64& rng);

struct StepLog {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss_primary = 0.0;
  double loss_dual = 0.0;
  double loss_total = 0.0;
};

/// Forward pass and losses for one batch; gradients flow into `params` when
/// `backward` is set.
StepLog batch_loss(SmfnParams<float>& params, const TrainBatch& batch, bool backward);

struct TrainResult {
  SmfnParams<float> params;
  AdamState<float> optimizer;
  std::vector<StepLog> log;
};

class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(std::size_t step, const std::string& what) : std::runtime_error(what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

inline constexpr const char* kTrainLogHeader = "step,epoch,lr,loss_primary,loss_dual,loss_total";

/// Runs the full schedule. With a non-empty `out_dir`, writes train_log.csv,
/// config.txt, checkpoint.bin at the configured cadence and final.bin.
/// Throws TrainingAborted on a non-finite loss; earlier checkpoints are kept.
TrainResult train(const TrainConfig& cfg, const Dataset& data, const std::string& out_dir);

// ---------------------------------------------------------------------------
// Evaluation

struct FrameMetrics {
  double ws_psnr = 0.0;
  double ws_ssim = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
};

/// All four metrics of 8-bit planes (0..255 scale).
FrameMetrics frame_metrics(const Plane& sr, const Plane& gt);

struct FrameReport {
  std::size_t frame = 0;
  FrameMetrics model;
  FrameMetrics bicubic;
};

struct ClipReport {
  std::string name;
  std::vector<FrameReport> frames;
  FrameMetrics model_average;
  FrameMetrics bicubic_average;
};

struct EvalReport {
  std::vector<ClipReport> clips;
  FrameMetrics model_average;  // over every evaluated frame
  FrameMetrics bicubic_average;
  std::size_t frame_count = 0;
};

struct EvalOptions {
  bool tiled = false;
  std::size_t tile = 64;  // LR pixels
  std::size_t overlap = 8;
  std::string split = "test";
};

/// Super-resolves the middle frame of a 2N+1 window of LR planes (any
/// consistent scale); returns an unrounded plane in the same units.
Plane super_resolve(SmfnParams<float>& params, const std::vector<Plane>& window);
/// Tiled variant; overlapping HR pixels are averaged.
Plane super_resolve_tiled(SmfnParams<float>& params, const std::vector<Plane>& window, std::size_t tile,
                          std::size_t overlap);

/// Bicubic upsampling baseline rounded to 8 bits (inputs in [0, 1]).
Plane bicubic_baseline(const Plane& lr, std::size_t scale);

EvalReport evaluate(const SmfnParams<float>& params, const Dataset& data, const EvalOptions& opt = {});
std::string report_json(const EvalReport& report);
void write_report(const EvalReport& report, const std::string& path);

/// Reads the PNG frames of `clip_dir` in name order and writes SR Y frames
/// under the same names to `out_dir`. RGB inputs additionally produce
/// `out_dir/rgb/` with bicubic chroma when `rgb`. Returns the frame count.
std::size_t infer(const SmfnParams<float>& params, const std::string& clip_dir, const std::string& out_dir,
                  bool rgb = false);

}  // namespace smfn
