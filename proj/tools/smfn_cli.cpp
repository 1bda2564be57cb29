// smfn: prepare / train / eval / infer.
// Exit codes: 0 success, 1 validation error, 2 runtime abort.

#include <cstdio>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "smfn/train.hpp"

namespace {

bool parse_size(const std::string& text, std::size_t& w, std::size_t& h) {
  const auto x = text.find_first_of("xX");
  if (x == std::string::npos) return false;
  try {
    std::size_t used = 0;
    w = std::stoul(text.substr(0, x), &used);
    if (used != x) return false;
    h = std::stoul(text.substr(x + 1), &used);
    return used == text.size() - x - 1;
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spherical-video super-resolution: data preparation, training, evaluation, inference"};
  app.require_subcommand(1);

  // prepare
  auto* prepare = app.add_subcommand("prepare", "Build a dataset of GT/LR Y frames and a manifest");
  std::string source, out_dir, size = "256x128";
  bool synthetic = false;
  smfn::SampleDatasetOptions sample;
  prepare->add_option("--source", source, "Directory of PNG frame sequences (one sub-directory per clip)");
  prepare->add_flag("--synthetic", synthetic, "Render procedural ERP clips instead of reading --source");
  prepare->add_option("--clips", sample.clips, "Synthetic clip count")->capture_default_str();
  prepare->add_option("--frames", sample.frames, "Synthetic frames per clip")->capture_default_str();
  prepare->add_option("--size", size, "Synthetic GT extents WxH")->capture_default_str();
  prepare->add_option("--seed", sample.seed, "Synthetic scene seed")->capture_default_str();
  prepare->add_option("--test-clips", sample.test_clips, "Trailing clips tagged for evaluation")->capture_default_str();
  prepare->add_option("--out", out_dir, "Output dataset directory")->required();

  // train
  auto* train = app.add_subcommand("train", "Train from a flat key = value config");
  std::string config_path, data_dir, train_out;
  train->add_option("--config", config_path, "Config file (keys as written to config.txt)")->required();
  train->add_option("--data", data_dir, "Dataset directory")->required();
  train->add_option("--out", train_out, "Run directory")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "Full-frame metrics on the test clips");
  std::string checkpoint, report_path;
  smfn::EvalOptions eval_opt;
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--data", data_dir, "Dataset directory")->required();
  eval->add_option("--report", report_path, "JSON report path")->required();
  eval->add_option("--split", eval_opt.split, "Clip split to evaluate")->capture_default_str();
  eval->add_flag("--tiled", eval_opt.tiled, "Run the network on overlapping LR tiles");
  eval->add_option("--tile", eval_opt.tile, "Tile extent in LR pixels")->capture_default_str();
  eval->add_option("--overlap", eval_opt.overlap, "Tile overlap in LR pixels")->capture_default_str();

  // infer
  auto* infer = app.add_subcommand("infer", "Super-resolve a directory of LR frames");
  std::string clip_dir, infer_out;
  bool rgb = false;
  infer->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  infer->add_option("--clip", clip_dir, "Directory of LR PNG frames")->required();
  infer->add_option("--out", infer_out, "Output directory")->required();
  infer->add_flag("--rgb", rgb, "Also write colour frames with bicubic chroma");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*prepare) {
      if (synthetic == !source.empty()) throw smfn::ValidationError("pass exactly one of --source and --synthetic");
      smfn::ClipManifest m;
      if (synthetic) {
        if (!parse_size(size, sample.hr_width, sample.hr_height))
          throw smfn::ValidationError("--size must look like 256x128, got '" + size + "'");
        m = smfn::make_sample_dataset(out_dir, sample);
      } else {
        m = smfn::prepare_from_source(source, out_dir, sample.test_clips);
      }
      std::printf("wrote %zu clips to %s\n", m.clips.size(), out_dir.c_str());
    } else if (*train) {
      const smfn::TrainConfig cfg = smfn::TrainConfig::load(config_path);
      const smfn::Dataset data = smfn::Dataset::load(data_dir);
      try {
        const auto result = smfn::train(cfg, data, train_out);
        const auto& last = result.log.back();
        std::printf("trained %zu steps, final loss %.6g\n", result.log.size(), last.loss_total);
      } catch (const smfn::TrainingAborted& e) {
        std::fprintf(stderr, "training aborted at step %zu: %s\n", e.step(), e.what());
        return 2;
      }
    } else if (*eval) {
      const smfn::Checkpoint ckpt = smfn::load_checkpoint(checkpoint);
      const smfn::Dataset data = smfn::Dataset::load(data_dir);
      const smfn::EvalReport report = smfn::evaluate(ckpt.params, data, eval_opt);
      smfn::write_report(report, report_path);
      std::printf("%zu frames: WS-PSNR %.4f dB (bicubic %.4f), WS-SSIM %.4f (bicubic %.4f)\n", report.frame_count,
                  report.model_average.ws_psnr, report.bicubic_average.ws_psnr, report.model_average.ws_ssim,
                  report.bicubic_average.ws_ssim);
    } else if (*infer) {
      const smfn::Checkpoint ckpt = smfn::load_checkpoint(checkpoint);
      const std::size_t n = smfn::infer(ckpt.params, clip_dir, infer_out, rgb);
      std::printf("wrote %zu frames to %s\n", n, infer_out.c_str());
    }
  } catch (const smfn::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "aborted: %s\n", e.what());
    return 2;
  }
  return 0;
}
