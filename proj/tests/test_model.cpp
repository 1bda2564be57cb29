#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "model_gradcheck.hpp"
#include "oracles.hpp"
#include "smfn/model.hpp"

using namespace smfn;
namespace fs = std::filesystem;

namespace {

std::vector<Tensor<double>> lr_frames(const SmfnConfig& c, std::size_t h, std::size_t w, std::uint64_t seed) {
  std::vector<Tensor<double>> f;
  for (std::size_t i = 0; i < c.num_frames(); ++i) f.push_back(oracle::random_tensor<double>(Shape{1, 1, h, w}, seed + i, 0, 1));
  return f;
}

std::string temp_path(const std::string& name) { return (fs::temp_directory_path() / ("smfn_model_" + name)).string(); }

std::vector<char> slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

}  // namespace

TEST(Config, DefaultsAndValidation) {
  SmfnConfig c;
  EXPECT_EQ(c.scale, 4u);
  EXPECT_EQ(c.temporal_radius, 1u);
  EXPECT_EQ(c.channels, 64u);
  EXPECT_EQ(c.num_residual_blocks, 3u);
  EXPECT_EQ(c.num_rdb, 5u);
  EXPECT_EQ(c.rdb_growth, 32u);
  EXPECT_EQ(c.single_frame_depth, 32u);
  EXPECT_DOUBLE_EQ(c.lambda_dual, 0.1);
  EXPECT_NO_THROW(c.validate());
  for (auto mutate : std::vector<std::function<void(SmfnConfig&)>>{
           [](SmfnConfig& x) { x.scale = 3; }, [](SmfnConfig& x) { x.channels = 0; },
           [](SmfnConfig& x) { x.single_frame_depth = 2; }, [](SmfnConfig& x) { x.lambda_dual = -1; },
           [](SmfnConfig& x) { x.ca_reduction = 5; }, [](SmfnConfig& x) { x.num_rdb = 0; }}) {
    SmfnConfig bad;
    mutate(bad);
    EXPECT_THROW(bad.validate(), ValidationError);
  }
}

TEST(Config, EntriesRoundTrip) {
  SmfnConfig c = SmfnConfig::tiny();
  c.use_fusion = false;
  c.lambda_dual = 0.25;
  SmfnConfig d;
  for (const auto& [k, v] : c.entries()) EXPECT_TRUE(d.set(k, v)) << k;
  EXPECT_EQ(c, d);
  EXPECT_FALSE(d.set("no_such_key", "1"));
  EXPECT_THROW(d.set("channels", "eight"), ValidationError);
}

TEST(Params, InitIsDeterministicAndNamed) {
  const auto a = init_params<float>(SmfnConfig::tiny(), 5), b = init_params<float>(SmfnConfig::tiny(), 5);
  const auto c = init_params<float>(SmfnConfig::tiny(), 6);
  ASSERT_EQ(a.tensors.size(), b.tensors.size());
  bool differs = false;
  for (const auto& [name, t] : a.tensors) {
    EXPECT_EQ(t.storage(), b.tensors.at(name).storage()) << name;
    differs |= t.storage() != c.tensors.at(name).storage();
  }
  EXPECT_TRUE(differs);
  for (const char* n : {"single.conv0.weight", "extract.head.weight", "extract.rb2.conv2.bias", "align.offset0.weight",
                        "align.deform0.weight", "recon.temporal_fusion.weight", "recon.rdb0.transition.weight",
                        "attention.ca.squeeze.weight", "attention.sa.conv.weight", "recon.upscale.weight",
                        "recon.output.weight", "fusion.conv2.weight", "dual.conv1.weight"})
    EXPECT_TRUE(a.tensors.count(n)) << n;
  EXPECT_EQ(a.at("attention.sa.conv.weight").shape(), (Shape{1, 2, 7, 7}));
  EXPECT_EQ(a.at("align.offset0.weight").shape(), (Shape{18, 16, 3, 3}));
  EXPECT_EQ(a.at("recon.temporal_fusion.weight").shape(), (Shape{8, 24, 1, 1}));
  EXPECT_THROW(a.at("nope"), ValidationError);
}

TEST(Params, ModuleSwitchLeavesOtherLayersUnchanged) {
  SmfnConfig c = SmfnConfig::tiny();
  c.use_dual = false;
  const auto with = init_params<float>(SmfnConfig::tiny(), 3), without = init_params<float>(c, 3);
  for (const auto& [name, t] : without.tensors) EXPECT_EQ(t.storage(), with.tensors.at(name).storage()) << name;
}

TEST(Params, SingleFrameDepth) {
  SmfnConfig c = SmfnConfig::tiny();
  EXPECT_EQ(single_frame_conv_count(init_params<float>(c, 0)), 5u);
  c.single_frame_depth = 32;
  EXPECT_EQ(single_frame_conv_count(init_params<float>(c, 0)), 32u);
}

TEST(Params, AblationCountsDecrease) {
  const SmfnConfig full;
  const std::size_t total = param_count(init_params<float>(full, 0)).at("total");
  std::size_t single_drop = 0, largest_other = 0;
  for (const char* flag : {"use_attention", "use_alignment", "use_dual", "use_fusion", "use_single_frame"}) {
    SmfnConfig c = full;
    c.set(flag, "false");
    const std::size_t n = param_count(init_params<float>(c, 0)).at("total");
    EXPECT_LT(n, total) << flag;
    if (std::string(flag) == "use_single_frame") single_drop = total - n;
    else largest_other = std::max(largest_other, total - n);
  }
  EXPECT_GT(single_drop, largest_other);
}

TEST(Forward, ShapesAndOutputs) {
  SmfnConfig c = SmfnConfig::tiny();
  auto p = init_params<double>(c, 1);
  auto frames = lr_frames(c, 6, 8, 10);
  Tape<double> tape;
  SmfnGraph<double> g(tape, p);
  std::vector<Var<double>> vars;
  for (auto& f : frames) vars.push_back(tape.constant(f));
  auto out = g.forward(vars);
  EXPECT_EQ(out.sr.shape(), (Shape{1, 1, 24, 32}));
  EXPECT_EQ(out.single.shape(), (Shape{1, 1, 24, 32}));
  EXPECT_EQ(out.residual.shape(), (Shape{1, 1, 24, 32}));
  EXPECT_EQ(g.dual_forward(out.sr).shape(), (Shape{1, 1, 6, 8}));
  vars.pop_back();
  EXPECT_THROW(g.forward(vars), ValidationError);
}

TEST(Forward, FreshModelReproducesBilinearUpsampling) {
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    SmfnConfig c = SmfnConfig::tiny();
    auto p = init_params<double>(c, seed);
    zero_residual_outputs(p);
    auto frames = lr_frames(c, 5, 7, 100 * seed);
    Tape<double> tape;
    SmfnGraph<double> g(tape, p);
    std::vector<Var<double>> vars;
    for (auto& f : frames) vars.push_back(tape.constant(f));
    const auto out = g.forward(vars);
    const Plane want = oracle::bilinear_resize(tensor_plane(frames[1]), 20, 28);
    EXPECT_LE((tensor_plane(out.sr.value()) - want).abs().maxCoeff(), 1e-6);
  }
}

TEST(Forward, AblatedVariantsRun) {
  for (const char* flag : {"use_attention", "use_alignment", "use_dual", "use_fusion", "use_single_frame"}) {
    SmfnConfig c = SmfnConfig::tiny();
    c.set(flag, "false");
    auto p = init_params<double>(c, 2);
    auto frames = lr_frames(c, 4, 4, 3);
    Tape<double> tape;
    SmfnGraph<double> g(tape, p);
    std::vector<Var<double>> vars;
    for (auto& f : frames) vars.push_back(tape.constant(f));
    EXPECT_EQ(g.forward(vars).sr.shape(), (Shape{1, 1, 16, 16})) << flag;
  }
}

TEST(Forward, ScaleTwo) {
  SmfnConfig c = SmfnConfig::tiny();
  c.scale = 2;
  auto p = init_params<double>(c, 4);
  auto frames = lr_frames(c, 4, 6, 3);
  Tape<double> tape;
  SmfnGraph<double> g(tape, p);
  std::vector<Var<double>> vars;
  for (auto& f : frames) vars.push_back(tape.constant(f));
  auto sr = g.forward(vars).sr;
  EXPECT_EQ(sr.shape(), (Shape{1, 1, 8, 12}));
  EXPECT_EQ(g.dual_forward(sr).shape(), (Shape{1, 1, 4, 6}));
}

TEST(Forward, GradientCheckOnRandomisedTinyModel) {
  SmfnConfig c = SmfnConfig::tiny();
  c.num_residual_blocks = 1;
  EXPECT_LE(oracle::smooth_point_gradient_error(c, 4, 4, 9, 6).error, 1e-4);
  EXPECT_LE(oracle::smooth_point_gradient_error(SmfnConfig::tiny(), 4, 5, 20, 3).error, 1e-4);
}

TEST(Checkpoint, RoundTripIsExact) {
  SmfnConfig c = SmfnConfig::tiny();
  c.use_attention = false;
  const auto p = init_params<float>(c, 21);
  std::map<std::string, Tensor<float>> opt{{"adam/t", Tensor<float>::scalar(3.0f)}};
  const std::string a = temp_path("a.bin"), b = temp_path("b.bin");
  save_checkpoint(a, p, opt);
  const Checkpoint loaded = load_checkpoint(a);
  EXPECT_EQ(loaded.params.config, c);
  for (const auto& [name, t] : p.tensors) EXPECT_EQ(t.storage(), loaded.params.at(name).storage()) << name;
  EXPECT_EQ(loaded.optimizer.at("adam/t")[0], 3.0f);
  save_checkpoint(b, loaded.params, loaded.optimizer);
  EXPECT_EQ(slurp(a), slurp(b));
  fs::remove(a);
  fs::remove(b);
}

TEST(Checkpoint, RejectsCorruptFiles) {
  const auto p = init_params<float>(SmfnConfig::tiny(), 0);
  const std::string path = temp_path("c.bin");
  save_checkpoint(path, p);
  const auto bytes = slurp(path);
  auto write = [&](const std::vector<char>& data) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os.write(data.data(), static_cast<std::streamsize>(data.size()));
  };
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  write(bad_magic);
  EXPECT_THROW(load_checkpoint(path), ValidationError);
  auto bad_version = bytes;
  bad_version[4] = 9;
  write(bad_version);
  EXPECT_THROW(load_checkpoint(path), ValidationError);
  write(std::vector<char>(bytes.begin(), bytes.end() - 10));
  EXPECT_THROW(load_checkpoint(path), ValidationError);
  auto trailing = bytes;
  trailing.push_back(0);
  write(trailing);
  EXPECT_THROW(load_checkpoint(path), ValidationError);
  EXPECT_THROW(load_checkpoint(temp_path("missing.bin")), ValidationError);
  EXPECT_THROW(save_checkpoint(path, p, {{"momentum", Tensor<float>::scalar(1.0f)}}), ValidationError);
  fs::remove(path);
}
