#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "smfn/image_io.hpp"
#include "smfn/loss_metrics.hpp"

namespace smfn {

// ---------------------------------------------------------------------------
// Colour

struct YCbCr {
  Plane y, cb, cr;
};

/// BT.601 studio-swing luma of 8-bit RGB; result clamped to [16, 235].
double rgb_to_luma(double r, double g, double b);

/// Y in [16, 235], Cb/Cr in [16, 240].
YCbCr rgb_to_ycbcr(const Image8& rgb);
/// Real-valued RGB planes (0..255 scale) to YCbCr.
YCbCr rgb_to_ycbcr(const Plane& r, const Plane& g, const Plane& b);
Image8 ycbcr_to_rgb(const YCbCr& ycc);

// ---------------------------------------------------------------------------
// Degradation

struct CropWindow {
  std::size_t x = 0, y = 0, width = 0, height = 0;
  bool operator==(const CropWindow&) const = default;
};

struct DegradedClip {
  std::vector<Plane> gt;
  std::vector<Plane> lr;
  std::optional<CropWindow> crop;  // set when the source had to be cropped
};

/// Largest centred window whose extents are divisible by `multiple`.
CropWindow divisible_crop(std::size_t width, std::size_t height, std::size_t multiple);

/// GT = bicubic(source, 1/scale_gt); LR = bicubic(quantised GT, 1/scale_lr).
/// Sources not divisible by scale_gt * scale_lr are centre-cropped first.
DegradedClip degrade_clip(const std::vector<Plane>& source, std::size_t scale_gt = 2, std::size_t scale_lr = 4);

// ---------------------------------------------------------------------------
// Manifest

inline constexpr int kManifestVersion = 1;

struct ClipEntry {
  std::string name;
  std::string split = "train";  // train | test
  std::size_t frame_count = 0;
  std::size_t hr_width = 0, hr_height = 0;
  std::size_t lr_width = 0, lr_height = 0;
  std::size_t scale = 4;
  std::vector<std::string> hr_frames;  // relative to the dataset root
  std::vector<std::string> lr_frames;
  std::optional<CropWindow> source_crop;

  bool operator==(const ClipEntry&) const = default;
};

struct ClipManifest {
  int format_version = kManifestVersion;
  std::vector<ClipEntry> clips;

  bool operator==(const ClipManifest&) const = default;
};

/// Validates every invariant; `root` is the directory against which frame
/// paths are resolved (empty skips the file-existence check).
void validate_manifest(const ClipManifest& m, const std::string& root);
void write_manifest(const ClipManifest& m, const std::string& path);
/// Loads and validates; frame paths resolve against the manifest's directory.
ClipManifest load_manifest(const std::string& path);

// ---------------------------------------------------------------------------
// Frames in memory

/// Y frames of every clip, scaled to [0, 1].
struct Dataset {
  ClipManifest manifest;
  std::string root;
  std::vector<std::vector<Plane>> hr;  // [clip][frame]
  std::vector<std::vector<Plane>> lr;

  static Dataset load(const std::string& root);
  std::vector<std::size_t> clips_in_split(const std::string& split) const;
};

/// Frame indices t - N .. t + N with edge replication.
std::vector<std::size_t> temporal_window(std::size_t t, std::size_t radius, std::size_t frame_count);

// ---------------------------------------------------------------------------
// Patch sampling

struct Augmentation {
  bool hflip = false;   // longitude reflection
  bool rot180 = false;  // 180 degree rotation
  bool operator==(const Augmentation&) const = default;
};

struct PatchSample {
  Tensor<float> lr;  // (2N+1, 1, p, p)
  Tensor<float> hr;  // (1, 1, s p, s p)
  std::size_t clip = 0, frame = 0;
  std::size_t lr_x = 0, lr_y = 0;  // crop origin before augmentation
  std::size_t hr_row_origin = 0;   // global row of the patch's top edge, after augmentation
  std::size_t frame_height = 0;    // HR frame rows
  std::size_t scale = 4;
  Augmentation aug;
};

/// Applies `aug` to the patch content and updates hr_row_origin. Each
/// component is an involution.
void apply_augmentation(PatchSample& s, const Augmentation& aug);

struct SamplerOptions {
  std::size_t batch_size = 16;
  std::size_t patch = 32;
  std::size_t temporal_radius = 1;
  bool augment = true;
  std::string split = "train";
};

std::vector<PatchSample> sample_patch_batch(const Dataset& data, const SamplerOptions& opt, std::mt19937_64& rng);

/// Extracts one un-augmented sample at an LR origin.
PatchSample extract_patch(const Dataset& data, std::size_t clip, std::size_t frame, std::size_t lr_x,
                          std::size_t lr_y, std::size_t patch_h, std::size_t patch_w, std::size_t temporal_radius);

/// Row weights for the HR patch: the real latitude band when
/// `patch_latitude`, otherwise the patch treated as a full frame.
std::vector<double> patch_row_weights(const PatchSample& s, bool patch_latitude);
/// Same for the LR target rows (dual loss).
std::vector<double> patch_lr_row_weights(const PatchSample& s, bool patch_latitude);

// ---------------------------------------------------------------------------
// Synthetic ERP clips

struct SyntheticScene {
  struct Wave {
    double kx, ky, phase, speed, amplitude;
    double color[3];
  };
  struct Blob {
    double cx, cy, sigma, vx, vy, amplitude;
    double color[3];
  };
  std::vector<Wave> waves;
  std::vector<Blob> blobs;
  double base[3];
  double gradient[3];
};

inline constexpr int kSceneWaves = 6;
inline constexpr int kSceneBlobs = 12;
inline constexpr double kSceneMinFrequency = 0.05;  // cycles per LR pixel
inline constexpr double kSceneMaxFrequency = 0.35;

/// Random scene for a `width`-wide 2:1 source degraded by `total_scale`;
/// textures span up to 0.3 cycles per LR pixel.
SyntheticScene make_scene(std::mt19937_64& rng, std::size_t width, std::size_t total_scale);

/// RGB planes (0..255 scale) of frame `t`; periodic in longitude.
std::vector<Plane> render_scene(const SyntheticScene& scene, double t, std::size_t width, std::size_t height);

struct SampleDatasetOptions {
  std::size_t clips = 2;
  std::size_t frames = 8;
  std::size_t hr_width = 256;  // GT extents; sources are rendered at 2x
  std::size_t hr_height = 128;
  std::uint64_t seed = 0;
  std::size_t test_clips = 0;  // trailing clips tagged "test"
};

ClipManifest make_sample_dataset(const std::string& out_dir, const SampleDatasetOptions& opt);

/// Ingests PNG frame sequences: each sub-directory of `source_dir` is a clip
/// (or `source_dir` itself when it holds PNGs directly).
ClipManifest prepare_from_source(const std::string& source_dir, const std::string& out_dir, std::size_t test_clips);

}  // namespace smfn
