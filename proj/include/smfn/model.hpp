#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "smfn/nn_ops.hpp"

namespace smfn {

/// Network hyperparameters. Defaults are the full-size configuration.
struct SmfnConfig {
  std::size_t scale = 4;
  std::size_t temporal_radius = 1;  // 2N + 1 input frames
  std::size_t channels = 64;
  std::size_t num_residual_blocks = 3;
  std::size_t num_rdb = 5;
  std::size_t rdb_layers = 5;
  std::size_t rdb_growth = 32;
  std::size_t single_frame_depth = 32;
  double lambda_dual = 0.1;
  std::size_t input_channels = 1;  // Y plane
  std::size_t ca_reduction = 16;
  std::size_t align_layers = 1;

  // Ablation switches; every module is on in the full model.
  bool use_attention = true;
  bool use_alignment = true;
  bool use_dual = true;
  bool use_fusion = true;
  bool use_single_frame = true;

  std::size_t num_frames() const { return 2 * temporal_radius + 1; }

  /// Throws ValidationError on any violated invariant.
  void validate() const;

  /// Named key/value view, used by the checkpoint and config files.
  std::vector<std::pair<std::string, std::string>> entries() const;
  /// Applies one entry; returns false for an unknown key.
  bool set(const std::string& key, const std::string& value);

  /// C = 8, one RDB, single-frame depth 5; for tests and desk-scale runs.
  static SmfnConfig tiny();

  bool operator==(const SmfnConfig&) const = default;
};

/// Every learnable tensor of the network keyed by a unique dotted name whose
/// first component names the sub-network ("single", "extract", "align",
/// "recon", "attention", "fusion", "dual").
template <typename T>
struct SmfnParams {
  SmfnConfig config;
  std::map<std::string, Tensor<T>> tensors;

  Tensor<T>& at(const std::string& name);
  const Tensor<T>& at(const std::string& name) const;
  void zero_grad();

  template <typename U>
  SmfnParams<U> cast() const {
    SmfnParams<U> out;
    out.config = config;
    for (const auto& [name, t] : tensors) out.tensors.emplace(name, t.template cast<U>());
    return out;
  }
};

/// Shapes and initial values are a deterministic function of (config, seed).
/// Conv kernels use fan-in (Kaiming) scaling, biases and the offset predictor
/// start at zero, and the layer(s) emitting the final residual start at zero
/// so a fresh model reproduces bilinear upsampling.
template <typename T>
SmfnParams<T> init_params(const SmfnConfig& config, std::uint64_t seed);

/// Element counts per sub-network plus "total".
template <typename T>
std::map<std::string, std::size_t> param_count(const SmfnParams<T>& params);

/// Sets the final convolution of the reconstruction, single-frame and fusion
/// paths to zero.
template <typename T>
void zero_residual_outputs(SmfnParams<T>& params);

template <typename T>
struct SmfnOutputs {
  Var<T> sr;        // I_t^SR
  Var<T> single;    // I_single^SR (invalid when disabled)
  Var<T> residual;  // I_res^SR
  Var<T> fused;     // I_fus^SR
  Var<T> upsampled; // bilinear(I_t^LR)
};

/// Binds one SmfnParams to one tape and evaluates the sub-networks on it.
/// Parameters are bound lazily and at most once per graph.
template <typename T>
class SmfnGraph {
 public:
  SmfnGraph(Tape<T>& tape, SmfnParams<T>& params);

  Tape<T>& tape() { return tape_; }
  const SmfnConfig& config() const { return params_.config; }

  Var<T> single_frame_branch(const Var<T>& target_lr);
  std::vector<Var<T>> extract_features(const std::vector<Var<T>>& frames);
  /// Offsets from concat(target, neighbour), then deformable conv of the
  /// neighbour features.
  Var<T> align_features(const Var<T>& target, const Var<T>& neighbour);
  Var<T> offset_field(const Var<T>& target, const Var<T>& neighbour, std::size_t layer = 0);
  Var<T> reconstruct(const std::vector<Var<T>>& aligned);
  Var<T> fuse(const Var<T>& residual, const Var<T>* single);
  /// `frames` holds 2N+1 tensors (B, 1, h, w); the target is the middle one.
  SmfnOutputs<T> forward(const std::vector<Var<T>>& frames);
  /// Training-only LR projection of an SR image.
  Var<T> dual_forward(const Var<T>& sr);

  Var<T> param(const std::string& name);
  BoundConv<T> conv(const std::string& prefix, ConvGeometry geo);

 private:
  Tape<T>& tape_;
  SmfnParams<T>& params_;
  std::map<std::string, Var<T>> bound_;
};

// Free-function spellings of the graph methods.
template <typename T>
Var<T> smfn_forward(SmfnGraph<T>& g, const std::vector<Var<T>>& frames) { return g.forward(frames).sr; }
template <typename T>
Var<T> dual_forward(SmfnGraph<T>& g, const Var<T>& sr) { return g.dual_forward(sr); }

/// Number of convolution layers in the single-frame branch of a parameter set.
template <typename T>
std::size_t single_frame_conv_count(const SmfnParams<T>& params);

// ---------------------------------------------------------------------------
// Checkpoint: "SMFN", u32 version, config entries, u64 tensor count, framed
// fp32 tensors; optimizer tensors follow under the "adam/" prefix.

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  SmfnParams<float> params;
  std::map<std::string, Tensor<float>> optimizer;  // names carry the "adam/" prefix
};

void save_checkpoint(const std::string& path, const SmfnParams<float>& params,
                     const std::map<std::string, Tensor<float>>& optimizer = {});
Checkpoint load_checkpoint(const std::string& path);

}  // namespace smfn
