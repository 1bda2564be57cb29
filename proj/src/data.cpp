#include "smfn/data.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace smfn {

// ---------------------------------------------------------------------------
// Colour

namespace {

// Rows: Y, Cb, Cr; columns act on R', G', B' in [0, 1].
const Eigen::Matrix3d& bt601() {
  static const Eigen::Matrix3d m = (Eigen::Matrix3d() << 65.481, 128.553, 24.966,  //
                                    -37.797, -74.203, 112.0,                       //
                                    112.0, -93.786, -18.214)
                                       .finished();
  return m;
}
const Eigen::Vector3d kYccOffset(16.0, 128.0, 128.0);

}  // namespace

double rgb_to_luma(double r, double g, double b) {
  const double y = 16.0 + (65.481 * r + 128.553 * g + 24.966 * b) / 255.0;
  return std::clamp(y, 16.0, 235.0);
}

YCbCr rgb_to_ycbcr(const Plane& r, const Plane& g, const Plane& b) {
  YCbCr out{Plane(r.rows(), r.cols()), Plane(r.rows(), r.cols()), Plane(r.rows(), r.cols())};
  const auto& m = bt601();
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    const Eigen::Vector3d rgb(r.data()[i] / 255.0, g.data()[i] / 255.0, b.data()[i] / 255.0);
    const Eigen::Vector3d ycc = kYccOffset + m * rgb;
    out.y.data()[i] = std::clamp(ycc[0], 16.0, 235.0);
    out.cb.data()[i] = std::clamp(ycc[1], 16.0, 240.0);
    out.cr.data()[i] = std::clamp(ycc[2], 16.0, 240.0);
  }
  return out;
}

YCbCr rgb_to_ycbcr(const Image8& rgb) {
  if (rgb.channels != 3) throw ValidationError("rgb_to_ycbcr: expected an RGB image");
  Plane r(rgb.height, rgb.width), g(rgb.height, rgb.width), b(rgb.height, rgb.width);
  for (std::size_t i = 0; i < rgb.width * rgb.height; ++i) {
    r.data()[i] = rgb.pixels[3 * i];
    g.data()[i] = rgb.pixels[3 * i + 1];
    b.data()[i] = rgb.pixels[3 * i + 2];
  }
  return rgb_to_ycbcr(r, g, b);
}

Image8 ycbcr_to_rgb(const YCbCr& ycc) {
  static const Eigen::Matrix3d inv = bt601().inverse();
  Image8 img;
  img.width = static_cast<std::size_t>(ycc.y.cols());
  img.height = static_cast<std::size_t>(ycc.y.rows());
  img.channels = 3;
  img.pixels.resize(img.width * img.height * 3);
  for (Eigen::Index i = 0; i < ycc.y.size(); ++i) {
    const Eigen::Vector3d v(ycc.y.data()[i], ycc.cb.data()[i], ycc.cr.data()[i]);
    const Eigen::Vector3d rgb = 255.0 * (inv * (v - kYccOffset));
    for (int c = 0; c < 3; ++c)
      img.pixels[3 * static_cast<std::size_t>(i) + c] = static_cast<std::uint8_t>(std::clamp(std::round(rgb[c]), 0.0, 255.0));
  }
  return img;
}

// ---------------------------------------------------------------------------
// Degradation

CropWindow divisible_crop(std::size_t width, std::size_t height, std::size_t multiple) {
  CropWindow c;
  c.width = width / multiple * multiple;
  c.height = height / multiple * multiple;
  if (c.width == 0 || c.height == 0)
    throw ValidationError("source " + std::to_string(width) + "x" + std::to_string(height) +
                          " is smaller than the degradation factor " + std::to_string(multiple));
  c.x = (width - c.width) / 2;
  c.y = (height - c.height) / 2;
  return c;
}

DegradedClip degrade_clip(const std::vector<Plane>& source, std::size_t scale_gt, std::size_t scale_lr) {
  DegradedClip out;
  if (source.empty()) return out;
  const std::size_t total = scale_gt * scale_lr;
  const auto W = static_cast<std::size_t>(source.front().cols());
  const auto H = static_cast<std::size_t>(source.front().rows());
  const CropWindow crop = divisible_crop(W, H, total);
  if (crop.width != W || crop.height != H) out.crop = crop;
  for (const Plane& frame : source) {
    if (static_cast<std::size_t>(frame.cols()) != W || static_cast<std::size_t>(frame.rows()) != H)
      throw ValidationError("degrade_clip: frames differ in extent");
    const Plane src = frame.block(crop.y, crop.x, crop.height, crop.width);
    Plane gt = quantize_8bit(bicubic_resize(src, crop.height / scale_gt, crop.width / scale_gt));
    Plane lr = quantize_8bit(bicubic_resize(gt, crop.height / total, crop.width / total));
    out.gt.push_back(std::move(gt));
    out.lr.push_back(std::move(lr));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifest

namespace {

std::string frame_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%04zu.png", i);
  return buf;
}

json crop_json(const CropWindow& c) { return {{"x", c.x}, {"y", c.y}, {"width", c.width}, {"height", c.height}}; }

}  // namespace

void validate_manifest(const ClipManifest& m, const std::string& root) {
  if (m.format_version != kManifestVersion)
    throw ValidationError("manifest: unsupported format version " + std::to_string(m.format_version));
  for (const auto& c : m.clips) {
    auto fail = [&](const std::string& msg) { throw ValidationError("manifest clip '" + c.name + "': " + msg); };
    if (c.name.empty()) throw ValidationError("manifest: clip with empty name");
    if (c.split != "train" && c.split != "test") fail("split must be train or test, got '" + c.split + "'");
    if (c.scale < 1) fail("scale must be >= 1");
    if (c.lr_width == 0 || c.lr_height == 0) fail("LR extents must be positive");
    if (c.hr_width != c.scale * c.lr_width || c.hr_height != c.scale * c.lr_height)
      fail("HR extents " + std::to_string(c.hr_width) + "x" + std::to_string(c.hr_height) + " are not " +
           std::to_string(c.scale) + "x the LR extents " + std::to_string(c.lr_width) + "x" +
           std::to_string(c.lr_height));
    if (c.frame_count < 1) fail("frame count must be >= 1");
    if (c.hr_frames.size() != c.frame_count || c.lr_frames.size() != c.frame_count)
      fail("frame lists do not match frame_count " + std::to_string(c.frame_count));
    if (!root.empty()) {
      for (const auto* list : {&c.hr_frames, &c.lr_frames})
        for (const auto& p : *list)
          if (!fs::exists(fs::path(root) / p)) fail("missing frame file " + p);
    }
  }
}

void write_manifest(const ClipManifest& m, const std::string& path) {
  json clips = json::array();
  for (const auto& c : m.clips) {
    json j = {{"name", c.name},         {"split", c.split},         {"frame_count", c.frame_count},
              {"hr_width", c.hr_width}, {"hr_height", c.hr_height}, {"lr_width", c.lr_width},
              {"lr_height", c.lr_height}, {"scale", c.scale},       {"hr_frames", c.hr_frames},
              {"lr_frames", c.lr_frames}};
    if (c.source_crop) j["source_crop"] = crop_json(*c.source_crop);
    clips.push_back(std::move(j));
  }
  json doc = {{"format_version", m.format_version}, {"clips", std::move(clips)}};
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write manifest " + path);
  os << doc.dump(2) << '\n';
}

ClipManifest load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open manifest " + path);
  ClipManifest m;
  try {
    const json doc = json::parse(is);
    m.format_version = doc.at("format_version").get<int>();
    if (m.format_version != kManifestVersion)
      throw ValidationError("manifest " + path + ": unsupported format version " + std::to_string(m.format_version));
    for (const auto& j : doc.at("clips")) {
      ClipEntry c;
      c.name = j.at("name").get<std::string>();
      c.split = j.at("split").get<std::string>();
      c.frame_count = j.at("frame_count").get<std::size_t>();
      c.hr_width = j.at("hr_width").get<std::size_t>();
      c.hr_height = j.at("hr_height").get<std::size_t>();
      c.lr_width = j.at("lr_width").get<std::size_t>();
      c.lr_height = j.at("lr_height").get<std::size_t>();
      c.scale = j.at("scale").get<std::size_t>();
      c.hr_frames = j.at("hr_frames").get<std::vector<std::string>>();
      c.lr_frames = j.at("lr_frames").get<std::vector<std::string>>();
      if (j.contains("source_crop")) {
        const auto& k = j.at("source_crop");
        c.source_crop = CropWindow{k.at("x").get<std::size_t>(), k.at("y").get<std::size_t>(),
                                   k.at("width").get<std::size_t>(), k.at("height").get<std::size_t>()};
      }
      m.clips.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    throw ValidationError("manifest " + path + ": " + e.what());
  }
  validate_manifest(m, fs::path(path).parent_path().string());
  return m;
}

// ---------------------------------------------------------------------------
// Dataset

Dataset Dataset::load(const std::string& root) {
  Dataset d;
  d.root = root;
  d.manifest = load_manifest((fs::path(root) / "manifest.json").string());
  for (const auto& c : d.manifest.clips) {
    auto read_all = [&](const std::vector<std::string>& files, std::size_t w, std::size_t h) {
      std::vector<Plane> planes;
      for (const auto& f : files) {
        Image8 img = read_png((fs::path(root) / f).string());
        if (img.channels != 1) throw ValidationError("frame " + f + " is not a single-channel Y image");
        if (img.width != w || img.height != h)
          throw ValidationError("frame " + f + " has extents " + std::to_string(img.width) + "x" +
                                std::to_string(img.height) + ", manifest says " + std::to_string(w) + "x" +
                                std::to_string(h));
        planes.push_back(gray_to_plane(img) / 255.0);
      }
      return planes;
    };
    d.hr.push_back(read_all(c.hr_frames, c.hr_width, c.hr_height));
    d.lr.push_back(read_all(c.lr_frames, c.lr_width, c.lr_height));
  }
  return d;
}

std::vector<std::size_t> Dataset::clips_in_split(const std::string& split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < manifest.clips.size(); ++i)
    if (split == "all" || manifest.clips[i].split == split) out.push_back(i);
  return out;
}

std::vector<std::size_t> temporal_window(std::size_t t, std::size_t radius, std::size_t frame_count) {
  std::vector<std::size_t> idx;
  for (std::size_t k = 0; k <= 2 * radius; ++k) {
    const auto j = static_cast<std::ptrdiff_t>(t + k) - static_cast<std::ptrdiff_t>(radius);
    idx.push_back(static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(j, 0, static_cast<std::ptrdiff_t>(frame_count) - 1)));
  }
  return idx;
}

// ---------------------------------------------------------------------------
// Patches

namespace {

// Reverses columns (and rows when `rows`) of each (h, w) plane of a 4-d tensor.
void flip_planes(Tensor<float>& t, bool rows, bool cols) {
  const std::size_t planes = t.dim(0) * t.dim(1), H = t.dim(2), W = t.dim(3);
  for (std::size_t p = 0; p < planes; ++p) {
    Eigen::Map<Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(t.data().data() + p * H * W, H, W);
    if (rows && cols) m = m.reverse().eval();
    else if (rows) m = m.colwise().reverse().eval();
    else if (cols) m = m.rowwise().reverse().eval();
  }
}

}  // namespace

void apply_augmentation(PatchSample& s, const Augmentation& aug) {
  if (aug.hflip) {
    flip_planes(s.lr, false, true);
    flip_planes(s.hr, false, true);
    s.aug.hflip = !s.aug.hflip;
  }
  if (aug.rot180) {
    flip_planes(s.lr, true, true);
    flip_planes(s.hr, true, true);
    s.hr_row_origin = s.frame_height - s.hr_row_origin - s.hr.dim(2);
    s.aug.rot180 = !s.aug.rot180;
  }
}

PatchSample extract_patch(const Dataset& data, std::size_t clip, std::size_t frame, std::size_t lr_x,
                          std::size_t lr_y, std::size_t patch_h, std::size_t patch_w, std::size_t temporal_radius) {
  const ClipEntry& c = data.manifest.clips.at(clip);
  if (lr_y + patch_h > c.lr_height || lr_x + patch_w > c.lr_width)
    throw ValidationError("patch " + std::to_string(patch_w) + "x" + std::to_string(patch_h) + " at (" +
                          std::to_string(lr_x) + "," + std::to_string(lr_y) + ") exceeds LR frame of clip " + c.name);
  const std::size_t s = c.scale;
  PatchSample out;
  out.clip = clip;
  out.frame = frame;
  out.lr_x = lr_x;
  out.lr_y = lr_y;
  out.scale = s;
  out.frame_height = c.hr_height;
  out.hr_row_origin = s * lr_y;
  const auto window = temporal_window(frame, temporal_radius, c.frame_count);
  out.lr = Tensor<float>(Shape{window.size(), 1, patch_h, patch_w});
  for (std::size_t k = 0; k < window.size(); ++k) {
    const Plane& src = data.lr[clip][window[k]];
    for (std::size_t y = 0; y < patch_h; ++y)
      for (std::size_t x = 0; x < patch_w; ++x) out.lr.at(k, 0, y, x) = static_cast<float>(src(lr_y + y, lr_x + x));
  }
  out.hr = Tensor<float>(Shape{1, 1, s * patch_h, s * patch_w});
  const Plane& hr = data.hr[clip][frame];
  for (std::size_t y = 0; y < s * patch_h; ++y)
    for (std::size_t x = 0; x < s * patch_w; ++x) out.hr.at(0, 0, y, x) = static_cast<float>(hr(s * lr_y + y, s * lr_x + x));
  return out;
}

std::vector<PatchSample> sample_patch_batch(const Dataset& data, const SamplerOptions& opt, std::mt19937_64& rng) {
  const auto clips = data.clips_in_split(opt.split);
  if (clips.empty()) throw ValidationError("no clips in split '" + opt.split + "'");
  for (std::size_t ci : clips) {
    const auto& c = data.manifest.clips[ci];
    if (opt.patch == 0 || opt.patch * c.scale > c.hr_height || opt.patch * c.scale > c.hr_width)
      throw ValidationError("patch " + std::to_string(opt.patch) + " (x" + std::to_string(c.scale) +
                            ") does not fit the frames of clip " + c.name);
  }
  auto uniform = [&rng](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
  std::vector<PatchSample> batch;
  batch.reserve(opt.batch_size);
  for (std::size_t i = 0; i < opt.batch_size; ++i) {
    const std::size_t clip = clips[uniform(clips.size())];
    const auto& c = data.manifest.clips[clip];
    const std::size_t frame = uniform(c.frame_count);
    const std::size_t y = uniform(c.lr_height - opt.patch + 1);
    const std::size_t x = uniform(c.lr_width - opt.patch + 1);
    PatchSample s = extract_patch(data, clip, frame, x, y, opt.patch, opt.patch, opt.temporal_radius);
    if (opt.augment) {
      Augmentation aug;
      aug.hflip = uniform(2) == 1;
      aug.rot180 = uniform(2) == 1;
      apply_augmentation(s, aug);
    }
    batch.push_back(std::move(s));
  }
  return batch;
}

std::vector<double> patch_row_weights(const PatchSample& s, bool patch_latitude) {
  const std::size_t rows = s.hr.dim(2);
  if (!patch_latitude) return latitude_weights(rows, s.hr.dim(3)).w;
  return latitude_weights(s.frame_height, s.hr.dim(3)).rows(s.hr_row_origin, rows);
}

std::vector<double> patch_lr_row_weights(const PatchSample& s, bool patch_latitude) {
  const std::size_t rows = s.lr.dim(2);
  if (!patch_latitude) return latitude_weights(rows, s.lr.dim(3)).w;
  return latitude_weights(s.frame_height / s.scale, s.lr.dim(3)).rows(s.hr_row_origin / s.scale, rows);
}

// ---------------------------------------------------------------------------
// Synthetic clips

SyntheticScene make_scene(std::mt19937_64& rng, std::size_t width, std::size_t total_scale) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto uni = [&](double a, double b) { return a + (b - a) * u01(rng); };
  const double ts = static_cast<double>(total_scale);
  const double lr_width = static_cast<double>(width) / ts, lr_height = lr_width / 2.0;

  SyntheticScene s;
  for (double& b : s.base) b = uni(100.0, 140.0);
  for (double& g : s.gradient) g = uni(-40.0, 40.0);
  for (int i = 0; i < kSceneWaves; ++i) {
    // Frequency in cycles per LR pixel; whole cycles around the longitude.
    const double f = uni(kSceneMinFrequency, kSceneMaxFrequency);
    const double theta = uni(0.0, std::numbers::pi);
    SyntheticScene::Wave w;
    w.kx = std::round(f * std::cos(theta) * lr_width);
    w.ky = f * std::sin(theta) * lr_height;
    w.phase = uni(0.0, 2.0 * std::numbers::pi);
    w.speed = uni(-2.0, 2.0) * ts / 4.0;
    w.amplitude = uni(15.0, 30.0);
    for (double& c : w.color) c = uni(0.5, 1.0);
    s.waves.push_back(w);
  }
  for (int i = 0; i < kSceneBlobs; ++i) {
    SyntheticScene::Blob b;
    b.cx = uni(0.0, static_cast<double>(width));
    b.cy = uni(0.15, 0.85) * static_cast<double>(width) / 2.0;
    b.sigma = uni(0.6, 2.5) * ts;
    b.vx = uni(-1.5, 1.5) * ts / 4.0;
    b.vy = uni(-0.5, 0.5) * ts / 4.0;
    b.amplitude = uni(-50.0, 50.0);
    for (double& c : b.color) c = uni(0.5, 1.0);
    s.blobs.push_back(b);
  }
  return s;
}

std::vector<Plane> render_scene(const SyntheticScene& scene, double t, std::size_t width, std::size_t height) {
  const double W = static_cast<double>(width), H = static_cast<double>(height);
  std::vector<Plane> rgb(3, Plane(height, width));
  for (std::size_t y = 0; y < height; ++y) {
    const double v = (static_cast<double>(y) + 0.5) / H;
    for (std::size_t x = 0; x < width; ++x) {
      const double px = static_cast<double>(x) + 0.5;
      double val[3];
      for (int c = 0; c < 3; ++c) val[c] = scene.base[c] + scene.gradient[c] * (v - 0.5);
      for (const auto& w : scene.waves) {
        const double u = (px - w.speed * t) / W;
        const double s = w.amplitude * std::sin(2.0 * std::numbers::pi * (w.kx * u + w.ky * v) + w.phase);
        for (int c = 0; c < 3; ++c) val[c] += w.color[c] * s;
      }
      for (const auto& b : scene.blobs) {
        const double cx = std::fmod(std::fmod(b.cx + b.vx * t, W) + W, W);
        double dx = std::abs(px - cx);
        dx = std::min(dx, W - dx);
        const double dy = (static_cast<double>(y) + 0.5) - (b.cy + b.vy * t);
        const double g = b.amplitude * std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
        for (int c = 0; c < 3; ++c) val[c] += b.color[c] * g;
      }
      for (int c = 0; c < 3; ++c) rgb[c](y, x) = std::clamp(val[c], 0.0, 255.0);
    }
  }
  return rgb;
}

namespace {

void write_frames(const fs::path& dir, const std::vector<Plane>& frames, std::vector<std::string>& rel,
                  const std::string& rel_prefix) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    write_png((dir / frame_name(i)).string(), plane_to_gray(frames[i]));
    rel.push_back(rel_prefix + "/" + frame_name(i));
  }
}

void write_rgb_frames(const fs::path& dir, const std::vector<std::vector<Plane>>& ycc_frames) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < ycc_frames.size(); ++i) {
    const auto& f = ycc_frames[i];
    write_png((dir / frame_name(i)).string(), ycbcr_to_rgb(YCbCr{f[0], f[1], f[2]}));
  }
}

// Degrades Y for training plus the colour planes kept for display.
ClipEntry write_clip(const fs::path& root, const std::string& name, const std::vector<YCbCr>& source,
                     const std::string& split) {
  std::vector<Plane> y, cb, cr;
  for (const auto& f : source) {
    y.push_back(f.y);
    cb.push_back(f.cb);
    cr.push_back(f.cr);
  }
  DegradedClip dy = degrade_clip(y);
  DegradedClip dcb = degrade_clip(cb);
  DegradedClip dcr = degrade_clip(cr);

  ClipEntry e;
  e.name = name;
  e.split = split;
  e.frame_count = source.size();
  e.scale = 4;
  e.hr_width = static_cast<std::size_t>(dy.gt.front().cols());
  e.hr_height = static_cast<std::size_t>(dy.gt.front().rows());
  e.lr_width = static_cast<std::size_t>(dy.lr.front().cols());
  e.lr_height = static_cast<std::size_t>(dy.lr.front().rows());
  e.source_crop = dy.crop;
  write_frames(root / name / "hr", dy.gt, e.hr_frames, name + "/hr");
  write_frames(root / name / "lr", dy.lr, e.lr_frames, name + "/lr");
  std::vector<std::vector<Plane>> hr_rgb, lr_rgb;
  for (std::size_t i = 0; i < source.size(); ++i) {
    hr_rgb.push_back({dy.gt[i], dcb.gt[i], dcr.gt[i]});
    lr_rgb.push_back({dy.lr[i], dcb.lr[i], dcr.lr[i]});
  }
  write_rgb_frames(root / name / "hr_rgb", hr_rgb);
  write_rgb_frames(root / name / "lr_rgb", lr_rgb);
  return e;
}

}  // namespace

ClipManifest make_sample_dataset(const std::string& out_dir, const SampleDatasetOptions& opt) {
  if (opt.hr_width % 8 != 0 || opt.hr_height % 8 != 0)
    throw ValidationError("sample dataset extents " + std::to_string(opt.hr_width) + "x" +
                          std::to_string(opt.hr_height) + " must be divisible by 8");
  if (opt.frames < 1) throw ValidationError("sample dataset needs at least one frame per clip");
  if (opt.test_clips > opt.clips) throw ValidationError("more test clips than clips");
  const fs::path root(out_dir);
  fs::create_directories(root);
  std::mt19937_64 rng(opt.seed);
  const std::size_t sw = 2 * opt.hr_width, sh = 2 * opt.hr_height;

  ClipManifest m;
  for (std::size_t c = 0; c < opt.clips; ++c) {
    const SyntheticScene scene = make_scene(rng, sw, 8);
    std::vector<YCbCr> frames;
    for (std::size_t t = 0; t < opt.frames; ++t) {
      const auto rgb = render_scene(scene, static_cast<double>(t), sw, sh);
      frames.push_back(rgb_to_ycbcr(rgb[0], rgb[1], rgb[2]));
    }
    char name[32];
    std::snprintf(name, sizeof(name), "clip_%03zu", c);
    const std::string split = c + opt.test_clips >= opt.clips ? "test" : "train";
    m.clips.push_back(write_clip(root, name, frames, split));
  }
  write_manifest(m, (root / "manifest.json").string());
  return m;
}

ClipManifest prepare_from_source(const std::string& source_dir, const std::string& out_dir, std::size_t test_clips) {
  const fs::path src(source_dir);
  if (!fs::is_directory(src)) throw ValidationError("source directory " + source_dir + " does not exist");
  auto pngs_in = [](const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    return files;
  };
  std::vector<std::pair<std::string, std::vector<fs::path>>> clips;
  if (auto direct = pngs_in(src); !direct.empty()) {
    clips.emplace_back(src.filename().string(), std::move(direct));
  } else {
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(src))
      if (e.is_directory()) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& d : dirs)
      if (auto files = pngs_in(d); !files.empty()) clips.emplace_back(d.filename().string(), std::move(files));
  }
  if (clips.empty()) throw ValidationError("no PNG frames found under " + source_dir);
  if (test_clips > clips.size()) throw ValidationError("more test clips than clips");

  const fs::path root(out_dir);
  fs::create_directories(root);
  ClipManifest m;
  for (std::size_t c = 0; c < clips.size(); ++c) {
    std::vector<YCbCr> frames;
    for (const auto& f : clips[c].second) {
      Image8 img = read_png(f.string());
      if (img.channels == 1) {
        Plane y = gray_to_plane(img);
        frames.push_back(YCbCr{y, Plane::Constant(y.rows(), y.cols(), 128.0), Plane::Constant(y.rows(), y.cols(), 128.0)});
      } else {
        frames.push_back(rgb_to_ycbcr(img));
      }
      if (frames.back().y.rows() != frames.front().y.rows() || frames.back().y.cols() != frames.front().y.cols())
        throw ValidationError("frame " + f.string() + " differs in extent from the rest of clip " + clips[c].first);
    }
    const std::string split = c + test_clips >= clips.size() ? "test" : "train";
    m.clips.push_back(write_clip(root, clips[c].first, frames, split));
  }
  write_manifest(m, (root / "manifest.json").string());
  return m;
}

}  // namespace smfn
