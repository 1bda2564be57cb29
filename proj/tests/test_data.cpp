#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "smfn/data.hpp"

using namespace smfn;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("smfn_data_" + name);
  fs::remove_all(p);
  return p;
}

std::vector<char> slurp(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

}  // namespace

TEST(Colour, Bt601StudioSwing) {
  EXPECT_NEAR(rgb_to_luma(255, 255, 255), 235.0, 1e-9);
  EXPECT_NEAR(rgb_to_luma(0, 0, 0), 16.0, 1e-9);
  EXPECT_NEAR(rgb_to_luma(255, 0, 0), 16.0 + 65.481, 1e-9);
  Image8 img;
  img.width = 2;
  img.height = 1;
  img.channels = 3;
  img.pixels = {255, 255, 255, 0, 0, 255};
  const YCbCr ycc = rgb_to_ycbcr(img);
  EXPECT_NEAR(ycc.y(0, 0), 235.0, 1e-9);
  EXPECT_NEAR(ycc.cb(0, 0), 128.0, 1e-9);
  EXPECT_NEAR(ycc.cb(0, 1), 240.0, 1e-9);
}

TEST(Colour, RoundTripWithinOneLevel) {
  Image8 img;
  img.width = 16;
  img.height = 16;
  img.channels = 3;
  std::mt19937 rng(1);
  for (std::size_t i = 0; i < 16 * 16 * 3; ++i) img.pixels.push_back(static_cast<std::uint8_t>(rng() % 256));
  const Image8 back = ycbcr_to_rgb(rgb_to_ycbcr(img));
  for (std::size_t i = 0; i < img.pixels.size(); ++i) EXPECT_LE(std::abs(int(back.pixels[i]) - int(img.pixels[i])), 1);
}

TEST(Degrade, ExtentsAndQuantisation) {
  std::vector<Plane> src{oracle::random_plane(64, 128, 1), oracle::random_plane(64, 128, 2)};
  const auto d = degrade_clip(src);
  ASSERT_EQ(d.gt.size(), 2u);
  EXPECT_EQ(d.gt[0].rows(), 32);
  EXPECT_EQ(d.gt[0].cols(), 64);
  EXPECT_EQ(d.lr[0].rows(), 8);
  EXPECT_EQ(d.lr[0].cols(), 16);
  EXPECT_FALSE(d.crop.has_value());
  EXPECT_TRUE((d.gt[0] == quantize_8bit(d.gt[0])).all());
  EXPECT_TRUE((d.lr[1] == quantize_8bit(bicubic_resize(d.gt[1], 8, 16))).all());
}

TEST(Degrade, CentreCropsIndivisibleSources) {
  const auto crop = divisible_crop(100, 61, 8);
  EXPECT_EQ(crop, (CropWindow{2, 2, 96, 56}));
  const auto d = degrade_clip({oracle::random_plane(61, 100, 3)});
  ASSERT_TRUE(d.crop.has_value());
  EXPECT_EQ(*d.crop, crop);
  EXPECT_EQ(d.gt[0].cols(), 48);
  EXPECT_EQ(d.lr[0].rows(), 7);
  EXPECT_THROW(divisible_crop(7, 100, 8), ValidationError);
}

TEST(Manifest, RoundTripAndValidation) {
  const fs::path dir = scratch("manifest");
  fs::create_directories(dir);
  ClipManifest m;
  ClipEntry e;
  e.name = "a";
  e.split = "test";
  e.frame_count = 1;
  e.scale = 4;
  e.hr_width = 32;
  e.hr_height = 16;
  e.lr_width = 8;
  e.lr_height = 4;
  e.hr_frames = {"a/hr/frame_0000.png"};
  e.lr_frames = {"a/lr/frame_0000.png"};
  e.source_crop = CropWindow{1, 2, 64, 32};
  m.clips.push_back(e);
  write_manifest(m, (dir / "manifest.json").string());
  // Frame files are missing, so loading names the clip.
  try {
    load_manifest((dir / "manifest.json").string());
    FAIL() << "expected a validation error";
  } catch (const ValidationError& err) {
    EXPECT_NE(std::string(err.what()).find("'a'"), std::string::npos) << err.what();
  }
  fs::create_directories(dir / "a/hr");
  fs::create_directories(dir / "a/lr");
  write_png((dir / e.hr_frames[0]).string(), plane_to_gray(Plane::Zero(16, 32)));
  write_png((dir / e.lr_frames[0]).string(), plane_to_gray(Plane::Zero(4, 8)));
  EXPECT_EQ(load_manifest((dir / "manifest.json").string()), m);

  auto bad = m;
  bad.clips[0].hr_width = 33;
  EXPECT_THROW(validate_manifest(bad, ""), ValidationError);
  bad = m;
  bad.clips[0].split = "val";
  EXPECT_THROW(validate_manifest(bad, ""), ValidationError);
  bad = m;
  bad.clips[0].frame_count = 2;
  EXPECT_THROW(validate_manifest(bad, ""), ValidationError);
  bad = m;
  bad.format_version = 7;
  EXPECT_THROW(validate_manifest(bad, ""), ValidationError);
  std::ofstream(dir / "broken.json") << "{\"format_version\": 1}";
  EXPECT_THROW(load_manifest((dir / "broken.json").string()), ValidationError);
  fs::remove_all(dir);
}

TEST(TemporalWindow, EdgeReplication) {
  EXPECT_EQ(temporal_window(0, 1, 8), (std::vector<std::size_t>{0, 0, 1}));
  EXPECT_EQ(temporal_window(7, 1, 8), (std::vector<std::size_t>{6, 7, 7}));
  EXPECT_EQ(temporal_window(3, 2, 8), (std::vector<std::size_t>{1, 2, 3, 4, 5}));
  EXPECT_EQ(temporal_window(0, 2, 1), (std::vector<std::size_t>{0, 0, 0, 0, 0}));
}

class SampleData : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = new fs::path(scratch("sample"));
    SampleDatasetOptions opt;
    opt.clips = 2;
    opt.frames = 4;
    opt.hr_width = 128;
    opt.hr_height = 64;
    opt.seed = 5;
    opt.test_clips = 1;
    make_sample_dataset(root_->string(), opt);
  }
  static void TearDownTestSuite() {
    fs::remove_all(*root_);
    delete root_;
  }
  static fs::path* root_;
};
fs::path* SampleData::root_ = nullptr;

TEST_F(SampleData, LayoutAndManifest) {
  const Dataset d = Dataset::load(root_->string());
  ASSERT_EQ(d.manifest.clips.size(), 2u);
  const auto& c = d.manifest.clips[0];
  EXPECT_EQ(c.split, "train");
  EXPECT_EQ(d.manifest.clips[1].split, "test");
  EXPECT_EQ(c.hr_width, 128u);
  EXPECT_EQ(c.lr_height, 16u);
  EXPECT_EQ(d.hr[0].size(), 4u);
  EXPECT_TRUE(fs::exists(*root_ / "clip_000/hr_rgb/frame_0003.png"));
  EXPECT_TRUE(fs::exists(*root_ / "clip_001/lr/frame_0000.png"));
  EXPECT_EQ(d.clips_in_split("test"), (std::vector<std::size_t>{1}));
  for (const auto& frames : d.lr)
    for (const auto& f : frames) {
      EXPECT_GE(f.minCoeff(), 0.0);
      EXPECT_LE(f.maxCoeff(), 1.0);
    }
}

TEST_F(SampleData, GenerationIsDeterministic) {
  const fs::path other = scratch("sample_again");
  SampleDatasetOptions opt;
  opt.clips = 2;
  opt.frames = 4;
  opt.hr_width = 128;
  opt.hr_height = 64;
  opt.seed = 5;
  opt.test_clips = 1;
  make_sample_dataset(other.string(), opt);
  EXPECT_EQ(slurp(*root_ / "manifest.json"), slurp(other / "manifest.json"));
  EXPECT_EQ(slurp(*root_ / "clip_001/hr/frame_0002.png"), slurp(other / "clip_001/hr/frame_0002.png"));
  fs::remove_all(other);
  opt.hr_width = 100;
  EXPECT_THROW(make_sample_dataset(other.string(), opt), ValidationError);
}

TEST_F(SampleData, FramesMoveOverTime) {
  const Dataset d = Dataset::load(root_->string());
  EXPECT_GT((d.hr[0][0] - d.hr[0][1]).abs().maxCoeff(), 0.0);
}

TEST_F(SampleData, PatchExtraction) {
  const Dataset d = Dataset::load(root_->string());
  const auto s = extract_patch(d, 0, 0, 3, 2, 8, 8, 1);
  EXPECT_EQ(s.lr.shape(), (Shape{3, 1, 8, 8}));
  EXPECT_EQ(s.hr.shape(), (Shape{1, 1, 32, 32}));
  EXPECT_EQ(s.hr_row_origin, 8u);
  // Window at frame 0 replicates frame 0 for the previous neighbour.
  EXPECT_EQ(s.lr.at(0, 0, 1, 1), s.lr.at(1, 0, 1, 1));
  EXPECT_FLOAT_EQ(s.lr.at(2, 0, 0, 0), static_cast<float>(d.lr[0][1](2, 3)));
  EXPECT_FLOAT_EQ(s.hr.at(0, 0, 5, 7), static_cast<float>(d.hr[0][0](8 + 5, 12 + 7)));
  EXPECT_THROW(extract_patch(d, 0, 0, 10, 10, 8, 8, 1), ValidationError);
}

TEST_F(SampleData, AugmentationIsAnInvolution) {
  const Dataset d = Dataset::load(root_->string());
  const auto s = extract_patch(d, 0, 1, 2, 4, 8, 8, 1);
  for (Augmentation aug : {Augmentation{true, false}, Augmentation{false, true}, Augmentation{true, true}}) {
    auto t = s;
    apply_augmentation(t, aug);
    if (aug.rot180) {
      EXPECT_EQ(t.hr_row_origin, 64u - 16u - 32u);
    }
    // Row / column sources of output pixel (3, 0) under each transform.
    const std::size_t sy = aug.rot180 ? 28 : 3, sx = aug.rot180 == aug.hflip ? 0 : 31;
    EXPECT_EQ(t.hr.at(0, 0, 3, 0), s.hr.at(0, 0, sy, sx));
    apply_augmentation(t, aug);
    EXPECT_EQ(t.lr.storage(), s.lr.storage());
    EXPECT_EQ(t.hr.storage(), s.hr.storage());
    EXPECT_EQ(t.hr_row_origin, s.hr_row_origin);
  }
  auto r = s;
  apply_augmentation(r, {false, true});
  EXPECT_EQ(r.hr.at(0, 0, 0, 0), s.hr.at(0, 0, 31, 31));
  EXPECT_EQ(r.lr.at(1, 0, 2, 5), s.lr.at(1, 0, 5, 2));
}

TEST_F(SampleData, RowWeightsFollowTheAugmentedBand) {
  const Dataset d = Dataset::load(root_->string());
  auto s = extract_patch(d, 0, 0, 0, 1, 8, 8, 1);
  const auto frame = latitude_weights(64, 32);
  EXPECT_EQ(patch_row_weights(s, true), frame.rows(4, 32));
  EXPECT_EQ(patch_row_weights(s, false), latitude_weights(32, 32).w);
  EXPECT_EQ(patch_lr_row_weights(s, true), latitude_weights(16, 8).rows(1, 8));
  apply_augmentation(s, {false, true});
  EXPECT_EQ(patch_row_weights(s, true), frame.rows(28, 32));
}

TEST_F(SampleData, BatchSamplingIsSeeded) {
  const Dataset d = Dataset::load(root_->string());
  SamplerOptions opt;
  opt.batch_size = 4;
  opt.patch = 8;
  std::mt19937_64 a(3), b(3);
  const auto x = sample_patch_batch(d, opt, a), y = sample_patch_batch(d, opt, b);
  ASSERT_EQ(x.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(x[i].lr.storage(), y[i].lr.storage());
    EXPECT_EQ(x[i].clip, 0u);  // only clip 0 is tagged train
  }
  opt.patch = 17;
  EXPECT_THROW(sample_patch_batch(d, opt, a), ValidationError);
  opt.patch = 8;
  opt.split = "val";
  EXPECT_THROW(sample_patch_batch(d, opt, a), ValidationError);
}

TEST(PrepareFromSource, IngestsPngSequences) {
  const fs::path src = scratch("source"), out = scratch("source_out");
  fs::create_directories(src / "walk");
  for (int i = 0; i < 3; ++i) {
    Image8 img;
    img.width = 70;
    img.height = 35;
    img.channels = 3;
    for (std::size_t k = 0; k < 70 * 35 * 3; ++k) img.pixels.push_back(static_cast<std::uint8_t>((k * 7 + i) % 256));
    write_png((src / "walk" / ("f" + std::to_string(i) + ".png")).string(), img);
  }
  const auto m = prepare_from_source(src.string(), out.string(), 1);
  ASSERT_EQ(m.clips.size(), 1u);
  EXPECT_EQ(m.clips[0].name, "walk");
  EXPECT_EQ(m.clips[0].split, "test");
  EXPECT_EQ(m.clips[0].hr_width, 32u);
  EXPECT_EQ(m.clips[0].hr_height, 16u);
  ASSERT_TRUE(m.clips[0].source_crop.has_value());
  EXPECT_EQ(m.clips[0].source_crop->width, 64u);
  EXPECT_NO_THROW(Dataset::load(out.string()));
  EXPECT_THROW(prepare_from_source((src / "nothing").string(), out.string(), 0), ValidationError);
  fs::remove_all(src);
  fs::remove_all(out);
}
