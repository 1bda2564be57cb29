#include <algorithm>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "smfn/train.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace smfn {

FrameMetrics frame_metrics(const Plane& sr, const Plane& gt) {
  const auto lw = latitude_weights(static_cast<std::size_t>(gt.rows()), static_cast<std::size_t>(gt.cols()));
  return {ws_psnr(sr, gt, lw), ws_ssim(sr, gt, lw), psnr(sr, gt), ssim(sr, gt)};
}

Plane super_resolve(SmfnParams<float>& params, const std::vector<Plane>& window) {
  if (window.size() != params.config.num_frames())
    throw ValidationError("super_resolve: expected " + std::to_string(params.config.num_frames()) + " frames, got " +
                          std::to_string(window.size()));
  Tape<float> tape;
  SmfnGraph<float> graph(tape, params);
  std::vector<Var<float>> frames;
  for (const Plane& p : window) {
    if (p.rows() != window.front().rows() || p.cols() != window.front().cols())
      throw ValidationError("super_resolve: window frames differ in extent");
    frames.push_back(tape.constant(plane_tensor<float>(p)));
  }
  return tensor_plane(graph.forward(frames).sr.value());
}

Plane super_resolve_tiled(SmfnParams<float>& params, const std::vector<Plane>& window, std::size_t tile,
                          std::size_t overlap) {
  if (tile == 0 || overlap >= tile) throw ValidationError("super_resolve_tiled: need tile > overlap");
  const auto h = static_cast<std::size_t>(window.front().rows()), w = static_cast<std::size_t>(window.front().cols());
  const std::size_t s = params.config.scale;
  auto origins = [&](std::size_t extent) {
    const std::size_t t = std::min(tile, extent);
    std::vector<std::size_t> o;
    for (std::size_t x = 0;; x += t - std::min(overlap, t - 1)) {
      if (x + t >= extent) {
        o.push_back(extent - t);
        break;
      }
      o.push_back(x);
    }
    return std::make_pair(o, t);
  };
  const auto [ys, th] = origins(h);
  const auto [xs, tw] = origins(w);
  Plane acc = Plane::Zero(h * s, w * s), count = Plane::Zero(h * s, w * s);
  for (std::size_t y0 : ys)
    for (std::size_t x0 : xs) {
      std::vector<Plane> crop;
      for (const Plane& p : window) crop.push_back(p.block(y0, x0, th, tw));
      const Plane sr = super_resolve(params, crop);
      acc.block(y0 * s, x0 * s, th * s, tw * s) += sr;
      count.block(y0 * s, x0 * s, th * s, tw * s) += 1.0;
    }
  return acc / count;
}

Plane bicubic_baseline(const Plane& lr, std::size_t scale) {
  return quantize_8bit(bicubic_resize(Plane(lr * 255.0), lr.rows() * scale, lr.cols() * scale));
}

namespace {

void accumulate(FrameMetrics& acc, const FrameMetrics& m) {
  acc.ws_psnr += m.ws_psnr;
  acc.ws_ssim += m.ws_ssim;
  acc.psnr += m.psnr;
  acc.ssim += m.ssim;
}

FrameMetrics divided(FrameMetrics m, std::size_t n) {
  if (n == 0) return m;
  const double d = static_cast<double>(n);
  return {m.ws_psnr / d, m.ws_ssim / d, m.psnr / d, m.ssim / d};
}

ordered_json metrics_json(const FrameMetrics& m) {
  return {{"ws_psnr", m.ws_psnr}, {"ws_ssim", m.ws_ssim}, {"psnr", m.psnr}, {"ssim", m.ssim}};
}

}  // namespace

EvalReport evaluate(const SmfnParams<float>& params_in, const Dataset& data, const EvalOptions& opt) {
  SmfnParams<float> params = params_in;
  const auto clips = data.clips_in_split(opt.split);
  if (clips.empty()) throw ValidationError("no clips in split '" + opt.split + "' to evaluate");
  const std::size_t s = params.config.scale;
  for (std::size_t ci : clips) {
    const ClipEntry& c = data.manifest.clips[ci];
    if (c.scale != s || c.hr_width != s * c.lr_width || c.hr_height != s * c.lr_height)
      throw ValidationError("clip " + c.name + " has scale " + std::to_string(c.scale) + ", checkpoint has " +
                            std::to_string(s));
  }

  EvalReport report;
  FrameMetrics model_total, bicubic_total;
  for (std::size_t ci : clips) {
    const ClipEntry& c = data.manifest.clips[ci];
    ClipReport clip;
    clip.name = c.name;
    FrameMetrics model_sum, bicubic_sum;
    for (std::size_t t = 0; t < c.frame_count; ++t) {
      std::vector<Plane> window;
      for (std::size_t j : temporal_window(t, params.config.temporal_radius, c.frame_count))
        window.push_back(data.lr[ci][j]);
      const Plane raw = opt.tiled ? super_resolve_tiled(params, window, opt.tile, opt.overlap)
                                  : super_resolve(params, window);
      const Plane sr = quantize_8bit(raw * 255.0);
      const Plane gt = quantize_8bit(data.hr[ci][t] * 255.0);
      FrameReport fr;
      fr.frame = t;
      fr.model = frame_metrics(sr, gt);
      fr.bicubic = frame_metrics(bicubic_baseline(data.lr[ci][t], s), gt);
      accumulate(model_sum, fr.model);
      accumulate(bicubic_sum, fr.bicubic);
      accumulate(model_total, fr.model);
      accumulate(bicubic_total, fr.bicubic);
      clip.frames.push_back(fr);
    }
    clip.model_average = divided(model_sum, clip.frames.size());
    clip.bicubic_average = divided(bicubic_sum, clip.frames.size());
    report.frame_count += clip.frames.size();
    report.clips.push_back(std::move(clip));
  }
  report.model_average = divided(model_total, report.frame_count);
  report.bicubic_average = divided(bicubic_total, report.frame_count);
  return report;
}

std::string report_json(const EvalReport& report) {
  ordered_json clips = ordered_json::array();
  for (const auto& c : report.clips) {
    ordered_json frames = ordered_json::array();
    for (const auto& f : c.frames)
      frames.push_back({{"frame", f.frame}, {"model", metrics_json(f.model)}, {"bicubic", metrics_json(f.bicubic)}});
    clips.push_back({{"name", c.name},
                     {"frame_count", c.frames.size()},
                     {"average", {{"model", metrics_json(c.model_average)}, {"bicubic", metrics_json(c.bicubic_average)}}},
                     {"frames", std::move(frames)}});
  }
  ordered_json doc = {
      {"frame_count", report.frame_count},
      {"average", {{"model", metrics_json(report.model_average)}, {"bicubic", metrics_json(report.bicubic_average)}}},
      {"clips", std::move(clips)}};
  return doc.dump(2) + "\n";
}

void write_report(const EvalReport& report, const std::string& path) {
  if (const auto dir = fs::path(path).parent_path(); !dir.empty()) fs::create_directories(dir);
  std::ofstream os(path, std::ios::trunc | std::ios::binary);
  if (!os) throw std::runtime_error("cannot write report " + path);
  os << report_json(report);
}

std::size_t infer(const SmfnParams<float>& params_in, const std::string& clip_dir, const std::string& out_dir,
                  bool rgb) {
  SmfnParams<float> params = params_in;
  if (!fs::is_directory(clip_dir)) throw ValidationError("clip directory " + clip_dir + " does not exist");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(clip_dir))
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ValidationError("no PNG frames in " + clip_dir);

  std::vector<YCbCr> frames;
  bool color = false;
  for (const auto& f : files) {
    Image8 img = read_png(f.string());
    if (img.channels == 3) {
      color = true;
      frames.push_back(rgb_to_ycbcr(img));
    } else {
      const Plane y = gray_to_plane(img);
      frames.push_back({y, Plane::Constant(y.rows(), y.cols(), 128.0), Plane::Constant(y.rows(), y.cols(), 128.0)});
    }
    if (frames.back().y.rows() != frames.front().y.rows() || frames.back().y.cols() != frames.front().y.cols())
      throw ValidationError("frame " + f.string() + " differs in extent from " + files.front().string());
  }

  const fs::path out(out_dir);
  fs::create_directories(out);
  if (rgb && color) fs::create_directories(out / "rgb");
  for (std::size_t t = 0; t < frames.size(); ++t) {
    std::vector<Plane> window;
    for (std::size_t j : temporal_window(t, params.config.temporal_radius, frames.size()))
      window.push_back(frames[j].y / 255.0);
    const Plane y = quantize_8bit(super_resolve(params, window) * 255.0);
    const std::string name = files[t].filename().string();
    write_png((out / name).string(), plane_to_gray(y));
    if (rgb && color) {
      const auto H = static_cast<std::size_t>(y.rows()), W = static_cast<std::size_t>(y.cols());
      YCbCr up{y, bicubic_resize(frames[t].cb, H, W), bicubic_resize(frames[t].cr, H, W)};
      write_png((out / "rgb" / name).string(), ycbcr_to_rgb(up));
    }
  }
  return frames.size();
}

}  // namespace smfn
